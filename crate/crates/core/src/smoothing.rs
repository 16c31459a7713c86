//! Constructive C¹ approximation of Lipschitz functions on sampled
//! manifolds: chart cover, partition of unity, per-chart McShane
//! extensions, mollification at paper-rule scales, assembly, and a
//! per-sample audit of the two approximation bounds.
//!
//! Scale bookkeeping. The cover parameter r obeys (2r+r²)·Lip(f) + r ≤ λ
//! and r ≤ δ/2; chart radii sit strictly below r with certified (1+r)
//! distortion. Mollifier indices kᵢ obey
//!
//!   (1+r)·Lip(f;Bᵢ)·Cᵢ/kᵢ ≤ ε   and   Lip(ψᵢ)·(1+r)·Lip(f;Bᵢ)·Cᵢ/kᵢ ≤ r/mᵢ,
//!
//! which at these parameter scales forces kᵢ into the 10³–10⁶ range. A
//! dense chart grid at step 1/(4kᵢ) is then unrepresentable, so mollified
//! chart functions evaluate the discrete convolution lazily at the grid
//! nodes a query touches and interpolate bicubically between them — the
//! same discrete convolution, computed on demand.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifold::{bilipschitz_radius, make_chart, ChartData, ManifoldKind, ManifoldSpec};
use crate::metricgraph::{
    dijkstra_ball, mcshane_extend, McShaneExtension, PathScratch, SampledManifold, ScalarField,
};
use crate::minkowski::MinkowskiNorm;
use crate::{FinslerError, Result};

/// Per-sample cap on simultaneously active charts.
const OVERLAP_CAP: usize = 16;
/// Samples count as covered at this fraction of the chart radius, so every
/// sample keeps a strictly positive bump.
const COVER_MARGIN: f64 = 0.95;

/// The C^∞ bump b(t) = exp(1 − 1/(1−t²)) on |t| < 1, zero outside.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

// ---------------------------------------------------------------------------
// Cover
// ---------------------------------------------------------------------------

/// A finite chart cover of the sampled manifold with adjacency statistics.
#[derive(Debug, Clone)]
pub struct CoverData {
    pub charts: Vec<ChartData>,
    /// Samples inside each chart ball (chart-coordinate membership).
    pub chart_samples: Vec<Vec<u32>>,
    /// 𝒜ᵢ: charts sharing at least one sample with chart i (self included).
    pub adjacency: Vec<Vec<u32>>,
    pub n_i: Vec<u32>,
    pub m_i: Vec<u32>,
    /// Charts within interaction range of each chart (for bump sums).
    pub near: Vec<Vec<u32>>,
    /// Active charts per sample.
    pub active: Vec<Vec<u32>>,
    pub r: f64,
    pub lip_f: f64,
}

/// Pick r = min(δ/2, largest λ·2⁻ʲ with (2r+r²)·L + r ≤ λ).
pub fn admissible_r(lip: f64, delta: f64, lambda: f64) -> Result<f64> {
    if !lip.is_finite() {
        return Err(FinslerError::InvalidInput(
            "Lipschitz estimate is not finite".into(),
        ));
    }
    for j in 0..=48 {
        let r = lambda * 0.5_f64.powi(j);
        if (2.0 * r + r * r) * lip + r <= lambda {
            return Ok((delta / 2.0).min(r));
        }
    }
    Err(FinslerError::InvalidInput(format!(
        "admissibility (2r+r²)·{lip} + r ≤ {lambda} unsatisfiable on the lattice"
    )))
}

/// Build a greedy chart cover: centers are chosen among uncovered samples
/// in seeded order, chart radii come from the (1+r)-biLipschitz search and
/// stay strictly below r.
pub fn build_cover(
    g: &SampledManifold,
    f: &ScalarField,
    delta: f64,
    lambda: f64,
    seed: u64,
) -> Result<CoverData> {
    if delta <= 0.0 || lambda <= 0.0 {
        return Err(FinslerError::InvalidInput("δ and λ must be positive".into()));
    }
    let lip_f = crate::metricgraph::lip_global(f, g, None)?;
    let r = admissible_r(lip_f, delta, lambda)?;
    let spec = &g.spec;
    let n = g.len();

    // Homogeneous kinds share one radius search across centers.
    let homogeneous = !matches!(
        &spec.kind,
        ManifoldKind::FinslerPlane { .. }
            | ManifoldKind::FlatTorus2 {
                metric: crate::manifold::MetricField::Conformal { .. },
                ..
            }
    );
    let mut shared_radius: Option<f64> = None;
    let mut chart_radius_at = |center: &[f64], chart_seed: u64| -> Result<f64> {
        let searched = if homogeneous {
            match shared_radius {
                Some(rr) => rr,
                None => {
                    let (rr, _) = bilipschitz_radius(spec, center, r, 96, chart_seed)?;
                    shared_radius = Some(rr);
                    rr
                }
            }
        } else {
            bilipschitz_radius(spec, center, r, 48, chart_seed)?.0
        };
        Ok(searched.min(0.98 * r))
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut covered = vec![false; n];
    let mut charts: Vec<ChartData> = Vec::new();
    let mut chart_samples: Vec<Vec<u32>> = Vec::new();
    for &idx in &order {
        if covered[idx] {
            continue;
        }
        let center = g.points[idx].clone();
        let radius = chart_radius_at(&center, seed ^ charts.len() as u64)?;
        let chart = make_chart(spec, &center, radius, 1.0 + r);
        let mut members = Vec::new();
        for (j, p) in g.points.iter().enumerate() {
            if let Some(v) = chart.to_chart(spec, p) {
                let d = chart.chart_norm_value(&v);
                if d < radius {
                    members.push(j as u32);
                    if d <= COVER_MARGIN * radius {
                        covered[j] = true;
                    }
                }
            }
        }
        if !covered[idx] {
            return Err(FinslerError::Construction(format!(
                "chart at sample {idx} failed to cover its own center (radius {radius:.3e})"
            )));
        }
        charts.push(chart);
        chart_samples.push(members);
    }

    // active charts per sample, coverage audit, local-finiteness cap
    let mut active: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (ci, members) in chart_samples.iter().enumerate() {
        for &j in members {
            active[j as usize].push(ci as u32);
        }
    }
    for (j, act) in active.iter().enumerate() {
        if act.is_empty() {
            return Err(FinslerError::Construction(format!(
                "sample {j} is not covered by any chart"
            )));
        }
        if act.len() > OVERLAP_CAP {
            return Err(FinslerError::Construction(format!(
                "sample {j} lies in {} charts (cap {OVERLAP_CAP})",
                act.len()
            )));
        }
    }

    // 𝒜ᵢ from shared samples
    let nc = charts.len();
    let mut adj_flags: Vec<std::collections::HashSet<u32>> = vec![Default::default(); nc];
    for act in &active {
        for (a, &ca) in act.iter().enumerate() {
            adj_flags[ca as usize].insert(ca);
            for &cb in act.iter().skip(a + 1) {
                adj_flags[ca as usize].insert(cb);
                adj_flags[cb as usize].insert(ca);
            }
        }
    }
    let adjacency: Vec<Vec<u32>> = adj_flags
        .into_iter()
        .map(|s| {
            let mut v: Vec<u32> = s.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let n_i: Vec<u32> = adjacency.iter().map(|a| a.len() as u32).collect();
    let m_i: Vec<u32> = adjacency
        .iter()
        .map(|a| a.iter().map(|&j| n_i[j as usize]).max().unwrap_or(1))
        .collect();

    // interaction lists by center proximity (bump sums at off-sample points)
    let mut near: Vec<Vec<u32>> = vec![Vec::new(); nc];
    for i in 0..nc {
        for j in 0..nc {
            if i == j {
                near[i].push(j as u32);
                continue;
            }
            let d = spec.distance(&charts[i].center, &charts[j].center);
            if d <= 1.5 * (charts[i].radius + charts[j].radius) {
                near[i].push(j as u32);
            }
        }
    }

    Ok(CoverData {
        charts,
        chart_samples,
        adjacency,
        n_i,
        m_i,
        near,
        active,
        r,
        lip_f,
    })
}

// ---------------------------------------------------------------------------
// Partition of unity
// ---------------------------------------------------------------------------

/// Normalized bump weights with recorded Lipschitz estimates.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub lip: Vec<f64>,
}

/// Unnormalized bump of chart ci at manifold point x.
fn bump_at(cover: &CoverData, spec: &ManifoldSpec, ci: usize, x: &[f64]) -> f64 {
    let chart = &cover.charts[ci];
    match chart.to_chart(spec, x) {
        Some(v) => bump(chart.chart_norm_value(&v) / chart.radius),
        None => 0.0,
    }
}

/// Normalized ψ values of the charts in `candidates` at x. The weights sum
/// to one identically wherever the bump sum is positive.
pub fn psi_at(
    cover: &CoverData,
    spec: &ManifoldSpec,
    candidates: &[u32],
    x: &[f64],
) -> Vec<(u32, f64)> {
    let mut vals: Vec<(u32, f64)> = Vec::with_capacity(candidates.len());
    let mut total = 0.0;
    for &ci in candidates {
        let b = bump_at(cover, spec, ci as usize, x);
        if b > 0.0 {
            vals.push((ci, b));
            total += b;
        }
    }
    for (_, b) in vals.iter_mut() {
        *b /= total;
    }
    vals
}

fn psi_value(
    cover: &CoverData,
    spec: &ManifoldSpec,
    candidates: &[u32],
    ci: usize,
    x: &[f64],
) -> f64 {
    let mut total = 0.0;
    let mut own = 0.0;
    for &cj in candidates {
        let b = bump_at(cover, spec, cj as usize, x);
        total += b;
        if cj as usize == ci {
            own = b;
        }
    }
    if total > 0.0 {
        own / total
    } else {
        0.0
    }
}

/// Build the partition, audit Σψ = 1 at every sample, and record Lip(ψᵢ)
/// by sampled difference quotients (graph pairs plus chart-ring probes).
pub fn build_partition(cover: &CoverData, g: &SampledManifold) -> Result<PartitionOfUnity> {
    let spec = &g.spec;
    for (j, act) in cover.active.iter().enumerate() {
        let total: f64 = act
            .iter()
            .map(|&ci| bump_at(cover, spec, ci as usize, &g.points[j]))
            .sum();
        if total <= 0.0 {
            return Err(FinslerError::Construction(format!(
                "partition bump sum vanishes at sample {j} (coverage hole)"
            )));
        }
        let psis = psi_at(cover, spec, act, &g.points[j]);
        let s: f64 = psis.iter().map(|(_, p)| p).sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(FinslerError::Construction(format!(
                "partition does not sum to 1 at sample {j}: {s}"
            )));
        }
    }

    let nc = cover.charts.len();
    let mut lip = vec![0.0_f64; nc];
    let mut rng = ChaCha8Rng::seed_from_u64(0x951);
    for ci in 0..nc {
        let chart = &cover.charts[ci];
        let candidates = &cover.near[ci];
        let mut best = 0.0_f64;
        // graph-pair quotients among samples in the chart
        for &j in &cover.chart_samples[ci] {
            let x = &g.points[j as usize];
            let psi_x = psi_value(cover, spec, candidates, ci, x);
            for &(nb, len) in &g.neighbors[j as usize] {
                if len <= 0.0 {
                    continue;
                }
                let y = &g.points[nb as usize];
                let psi_y = psi_value(cover, spec, candidates, ci, y);
                best = best.max((psi_x - psi_y).abs() / len);
            }
        }
        // ring probes at the radii where normalized bumps move fastest
        for &t in &[0.35, 0.55, 0.72, 0.85, 0.93, 0.975] {
            for arm in 0..16 {
                let theta =
                    std::f64::consts::TAU * arm as f64 / 16.0 + rng.gen_range(0.0..0.3);
                let dir = [theta.cos(), theta.sin()];
                let rho = t * chart.radius;
                let v = [rho * dir[0], rho * dir[1]];
                let step = 0.02 * chart.radius;
                let v2 = [v[0] + step * dir[1], v[1] - step * dir[0]];
                let v3 = [v[0] + step * dir[0], v[1] + step * dir[1]];
                let p1 = chart.from_chart(spec, &v);
                for q in [chart.from_chart(spec, &v2), chart.from_chart(spec, &v3)] {
                    let a = psi_value(cover, spec, candidates, ci, &p1);
                    let b = psi_value(cover, spec, candidates, ci, &q);
                    let dist = spec.distance(&p1, &q).max(1e-300);
                    best = best.max((a - b).abs() / dist);
                }
            }
        }
        // headroom for quotients the probes did not visit
        lip[ci] = best * 1.25;
    }
    Ok(PartitionOfUnity { lip })
}

// ---------------------------------------------------------------------------
// Two-sided extension
// ---------------------------------------------------------------------------

/// L-Lipschitz extension used by the smoothing pipeline: the average of the
/// inf-convolution (min) and sup-convolution (max) extensions. Both sides
/// agree with the data and are L-Lipschitz, hence so is the average. The
/// one-sided min extension is a cone field whose differential has dual norm
/// exactly L almost everywhere, which buries the pointwise-differential
/// signal; the symmetrized interpolant tracks the data's own slopes.
#[derive(Debug, Clone)]
pub struct SymmetricExtension {
    pub samples: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub lip: f64,
    pub norm: MinkowskiNorm,
}

impl SymmetricExtension {
    pub fn from_mcshane(ext: McShaneExtension) -> Self {
        Self {
            samples: ext.samples,
            values: ext.values,
            lip: ext.lip,
            norm: ext.norm,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut diff = vec![0.0; v.len()];
        for (x, fx) in self.samples.iter().zip(&self.values) {
            for (d, (vi, xi)) in diff.iter_mut().zip(v.iter().zip(x)) {
                *d = vi - xi;
            }
            let reach = self.lip * self.norm.eval_unchecked(&diff);
            lo = lo.min(fx + reach);
            hi = hi.max(fx - reach);
        }
        0.5 * (lo + hi)
    }
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

/// Mollified chart function: lazy discrete convolution of a chart function
/// with the compactly supported exponential bump of radius 1/k,
/// bicubically interpolated between grid nodes.
pub struct MollifiedChartFn {
    source: Box<dyn Fn(&[f64]) -> f64>,
    pub k: u64,
    pub grid_step: f64,
    kernel: Vec<(i64, i64, f64)>,
    conv_cache: RefCell<HashMap<(i64, i64), f64>>,
    raw_cache: RefCell<HashMap<(i64, i64), f64>>,
}

impl MollifiedChartFn {
    fn raw_at(&self, ix: i64, iy: i64) -> f64 {
        if let Some(v) = self.raw_cache.borrow().get(&(ix, iy)) {
            return *v;
        }
        let v = (self.source)(&[ix as f64 * self.grid_step, iy as f64 * self.grid_step]);
        self.raw_cache.borrow_mut().insert((ix, iy), v);
        v
    }

    fn conv_at(&self, ix: i64, iy: i64) -> f64 {
        if let Some(v) = self.conv_cache.borrow().get(&(ix, iy)) {
            return *v;
        }
        let mut acc = 0.0;
        for &(dx, dy, w) in &self.kernel {
            acc += w * self.raw_at(ix + dx, iy + dy);
        }
        self.conv_cache.borrow_mut().insert((ix, iy), acc);
        acc
    }

    /// Evaluate the mollified function at chart coordinates v.
    pub fn eval(&self, v: &[f64]) -> f64 {
        let x = v[0] / self.grid_step;
        let y = v[1] / self.grid_step;
        let ix = x.floor() as i64;
        let iy = y.floor() as i64;
        let tx = x - ix as f64;
        let ty = y - iy as f64;
        let mut rows = [0.0; 4];
        for (ri, row) in rows.iter_mut().enumerate() {
            let gy = iy - 1 + ri as i64;
            let p0 = self.conv_at(ix - 1, gy);
            let p1 = self.conv_at(ix, gy);
            let p2 = self.conv_at(ix + 1, gy);
            let p3 = self.conv_at(ix + 2, gy);
            *row = cubic(p0, p1, p2, p3, tx);
        }
        cubic(rows[0], rows[1], rows[2], rows[3], ty)
    }
}

/// Catmull-Rom cubic through p0..p3 at parameter t ∈ [0,1) between p1, p2.
fn cubic(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = -0.5 * p0 + 0.5 * p2;
    ((a * t + b) * t + c) * t + p1
}

/// Mollify a McShane extension (2-dimensional charts).
pub fn mollify(ext: McShaneExtension, k: u64, grid_step: f64) -> Result<MollifiedChartFn> {
    if ext.norm.dim != 2 {
        return Err(FinslerError::InvalidInput(
            "mollification is implemented for 2-dimensional charts".into(),
        ));
    }
    mollify_fn(Box::new(move |v| ext.eval(v)), k, grid_step)
}

/// Discrete mollification of a chart function at kernel index k and grid
/// step ≤ 1/(4k): symmetric kernel, unit discrete mass, support in B_{1/k}.
pub fn mollify_fn(
    source: Box<dyn Fn(&[f64]) -> f64>,
    k: u64,
    grid_step: f64,
) -> Result<MollifiedChartFn> {
    if k == 0 {
        return Err(FinslerError::InvalidInput("k must be positive".into()));
    }
    if grid_step <= 0.0 || grid_step > 1.0 / (4.0 * k as f64) {
        return Err(FinslerError::InvalidInput(format!(
            "grid step {grid_step:.3e} too coarse for kernel radius 1/{k}"
        )));
    }
    let radius = 1.0 / k as f64;
    let m = (radius / grid_step).floor() as i64;
    let mut kernel = Vec::new();
    let mut total = 0.0;
    for dx in -m..=m {
        for dy in -m..=m {
            let z = ((dx * dx + dy * dy) as f64).sqrt() * grid_step;
            let w = bump(z / radius);
            if w > 0.0 {
                kernel.push((dx, dy, w));
                total += w;
            }
        }
    }
    for (_, _, w) in kernel.iter_mut() {
        *w /= total;
    }
    Ok(MollifiedChartFn {
        source,
        k,
        grid_step,
        kernel,
        conv_cache: RefCell::new(HashMap::new()),
        raw_cache: RefCell::new(HashMap::new()),
    })
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

enum ChartFn {
    /// Charts where f is constant: extension and mollification collapse to
    /// the constant exactly, so zero charts stay exactly zero.
    Constant(f64),
    Mollified {
        moll: MollifiedChartFn,
        ext: SymmetricExtension,
    },
}

/// Scale data of one chart in the smoothing plan.
#[derive(Debug, Clone, Serialize)]
pub struct ChartPlanEntry {
    pub lip_ball: f64,
    pub k: u64,
    pub grid_step: f64,
    pub lip_psi: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothParams {
    pub delta: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

/// The assembled approximation g = Σ ψᵢ·(gᵢ∘φᵢ) with its construction data.
pub struct SmoothedFunction {
    pub spec: ManifoldSpec,
    pub cover: CoverData,
    pub partition: PartitionOfUnity,
    chart_fns: Vec<ChartFn>,
    pub plan: Vec<ChartPlanEntry>,
    pub params: SmoothParams,
}

impl SmoothedFunction {
    /// Evaluate g at a manifold point, scanning charts near `hint_chart`.
    pub fn eval_with_hint(&self, x: &[f64], hint_chart: usize) -> f64 {
        let candidates = &self.cover.near[hint_chart];
        let psis = psi_at(&self.cover, &self.spec, candidates, x);
        if psis.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for (ci, psi) in psis {
            acc += psi * self.chart_value(ci as usize, x);
        }
        acc
    }

    fn chart_value(&self, ci: usize, x: &[f64]) -> f64 {
        match &self.chart_fns[ci] {
            ChartFn::Constant(c) => *c,
            ChartFn::Mollified { moll, .. } => {
                let v = self.cover.charts[ci]
                    .to_chart(&self.spec, x)
                    .expect("point escaped an active chart");
                moll.eval(&v)
            }
        }
    }

    /// g at sample i (uses the sample's own active charts).
    pub fn eval_at_sample(&self, g: &SampledManifold, i: usize) -> f64 {
        let hint = self.cover.active[i][0] as usize;
        self.eval_with_hint(&g.points[i], hint)
    }

    pub fn sample_values(&self, g: &SampledManifold) -> Vec<f64> {
        (0..g.len()).map(|i| self.eval_at_sample(g, i)).collect()
    }

    /// The chart's two-sided extension, when the chart is not constant.
    pub fn chart_extension(&self, ci: usize) -> Option<&SymmetricExtension> {
        match &self.chart_fns[ci] {
            ChartFn::Constant(_) => None,
            ChartFn::Mollified { ext, .. } => Some(ext),
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// lipₐ audit status of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Pass,
    Fail,
    /// The audit ball resolves fewer than two samples at graph resolution.
    Unresolved,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub index: usize,
    pub err_abs: f64,
    pub lipa_g: f64,
    pub lipf_ball: f64,
    pub bound_ok: AuditStatus,
    pub support_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingReport {
    pub params: SmoothParams,
    pub r: f64,
    pub lip_f: f64,
    pub chart_count: usize,
    pub audit_scale: f64,
    pub rows: Vec<ReportRow>,
    pub sup_bound_ok: bool,
    pub max_err_abs: f64,
    /// lipₐ passes over resolvable samples.
    pub lipa_pass_fraction: f64,
    pub support_all_ok: bool,
}

impl SmoothingReport {
    /// CSV with the fixed header and a parameter echo block.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# delta={:.17e} epsilon={:.17e} lambda={:.17e} r={:.17e} charts={} audit_scale={:.17e}\n",
            self.params.delta,
            self.params.epsilon,
            self.params.lambda,
            self.r,
            self.chart_count,
            self.audit_scale
        ));
        out.push_str("index,err_abs,lipa_g,lipf_ball,bound_ok,support_ok\n");
        for row in &self.rows {
            let bound = match row.bound_ok {
                AuditStatus::Pass => "true",
                AuditStatus::Fail => "false",
                AuditStatus::Unresolved => "unresolved",
            };
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{},{}\n",
                row.index, row.err_abs, row.lipa_g, row.lipf_ball, bound, row.support_ok
            ));
        }
        out
    }
}

pub struct SmoothedOutput {
    pub function: SmoothedFunction,
    pub g_field: ScalarField,
    pub report: SmoothingReport,
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Lip(f; Bᵢ) against chart-norm distances: dense directional probes when f
/// has a closed form, plus all chart-sample pairs. Chart-norm denominators
/// keep the McShane precondition valid once multiplied by (1+r).
fn ball_lipschitz(
    g: &SampledManifold,
    f: &ScalarField,
    chart: &ChartData,
    members: &[u32],
) -> f64 {
    let spec = &g.spec;
    let mut best = 0.0_f64;
    let coords: Vec<(Vec<f64>, f64)> = members
        .iter()
        .filter_map(|&j| {
            chart
                .to_chart(spec, &g.points[j as usize])
                .map(|v| (v, f.values[j as usize]))
        })
        .collect();
    for a in 0..coords.len() {
        for b in (a + 1)..coords.len() {
            let d: Vec<f64> = coords[a]
                .0
                .iter()
                .zip(&coords[b].0)
                .map(|(x, y)| x - y)
                .collect();
            let dist = chart.chart_norm_value(&d);
            if dist > 1e-14 {
                best = best.max((coords[a].1 - coords[b].1).abs() / dist);
            }
        }
    }
    if let Some(form) = &f.closed_form {
        let arms = 48;
        let radii = [0.35, 0.65, 0.95];
        let mut ring: Vec<(Vec<f64>, f64)> = Vec::with_capacity(arms * radii.len() + 1);
        ring.push((vec![0.0, 0.0], form.eval(spec, &chart.center)));
        for &t in &radii {
            for a in 0..arms {
                let th = std::f64::consts::TAU * a as f64 / arms as f64;
                let dir = [th.cos(), th.sin()];
                let nd = chart.chart_norm_value(&dir);
                let rho = t * chart.radius / nd;
                let v = vec![rho * dir[0], rho * dir[1]];
                let p = chart.from_chart(spec, &v);
                ring.push((v, form.eval(spec, &p)));
            }
        }
        for a in 0..ring.len() {
            for b in (a + 1)..ring.len() {
                let d: Vec<f64> = ring[a]
                    .0
                    .iter()
                    .zip(&ring[b].0)
                    .map(|(x, y)| x - y)
                    .collect();
                let dist = chart.chart_norm_value(&d);
                if dist > 1e-14 {
                    best = best.max((ring[a].1 - ring[b].1).abs() / dist);
                }
            }
        }
    }
    best
}

/// Run the full construction and audit both conclusions per sample.
pub fn smooth_approximate(
    g: &SampledManifold,
    f: &ScalarField,
    delta: f64,
    epsilon: f64,
    lambda: f64,
    seed: u64,
) -> Result<SmoothedOutput> {
    if delta <= 0.0 || epsilon <= 0.0 || lambda <= 0.0 {
        return Err(FinslerError::InvalidInput(
            "δ, ε, λ must all be positive".into(),
        ));
    }
    if f.values.len() != g.len() {
        return Err(FinslerError::DimensionMismatch {
            expected: g.len(),
            got: f.values.len(),
        });
    }
    let function = build_smoothed(g, f, delta, epsilon, lambda, seed)?;
    let (g_field, report) = audit(g, f, &function)?;
    Ok(SmoothedOutput {
        function,
        g_field,
        report,
    })
}

/// Construction only (no audit); used by the upper-gradient ladder.
pub fn build_smoothed(
    g: &SampledManifold,
    f: &ScalarField,
    delta: f64,
    epsilon: f64,
    lambda: f64,
    seed: u64,
) -> Result<SmoothedFunction> {
    if g.spec.intrinsic_dim() != 2 {
        return Err(FinslerError::InvalidInput(
            "smoothing assembly is implemented for 2-dimensional manifolds".into(),
        ));
    }
    let cover = build_cover(g, f, delta, lambda, seed)?;
    let partition = build_partition(&cover, g)?;
    let spec = &g.spec;
    let r = cover.r;

    let mut chart_fns = Vec::with_capacity(cover.charts.len());
    let mut plan = Vec::with_capacity(cover.charts.len());
    for (ci, chart) in cover.charts.iter().enumerate() {
        let members = &cover.chart_samples[ci];
        let lip_ball = ball_lipschitz(g, f, chart, members);
        if lip_ball <= 0.0 {
            let value = f.values[members[0] as usize];
            chart_fns.push(ChartFn::Constant(value));
            plan.push(ChartPlanEntry {
                lip_ball: 0.0,
                k: 1,
                grid_step: 0.25,
                lip_psi: partition.lip[ci],
            });
            continue;
        }
        let lip_ext = (1.0 + r) * lip_ball;
        let c_i = chart.equiv_constant;
        let m_i = cover.m_i[ci] as f64;
        let k_eps = (lip_ext * c_i / epsilon).ceil();
        let k_psi = (partition.lip[ci] * lip_ext * c_i * m_i / r).ceil();
        let k = k_eps.max(k_psi).max(1.0) as u64;
        let grid_step = 1.0 / (4.0 * k as f64);
        let data: Vec<(Vec<f64>, f64)> = members
            .iter()
            .filter_map(|&j| {
                chart
                    .to_chart(spec, &g.points[j as usize])
                    .map(|v| (v, f.values[j as usize]))
            })
            .collect();
        let ext = SymmetricExtension::from_mcshane(mcshane_extend(&data, lip_ext, &chart.chart_norm)?);
        let src = ext.clone();
        let moll = mollify_fn(Box::new(move |v| src.eval(v)), k, grid_step)?;
        chart_fns.push(ChartFn::Mollified { moll, ext });
        plan.push(ChartPlanEntry {
            lip_ball,
            k,
            grid_step,
            lip_psi: partition.lip[ci],
        });
    }

    Ok(SmoothedFunction {
        spec: spec.clone(),
        cover,
        partition,
        chart_fns,
        plan,
        params: SmoothParams {
            delta,
            epsilon,
            lambda,
        },
    })
}

fn audit(
    g: &SampledManifold,
    f: &ScalarField,
    smooth: &SmoothedFunction,
) -> Result<(ScalarField, SmoothingReport)> {
    let params = smooth.params;
    let values = smooth.sample_values(g);
    let g_field = ScalarField {
        values: values.clone(),
        closed_form: None,
    };

    // distance to spt(f) in one multi-source sweep
    let support: Vec<usize> = (0..g.len()).filter(|&i| f.values[i] != 0.0).collect();
    let dist_to_support: Vec<f64> = if support.is_empty() {
        vec![f64::INFINITY; g.len()]
    } else {
        multi_source_distances(g, &support)
    };

    let audit_scale = 4.0 * g.median_edge;
    let mut scratch = PathScratch::new(g.len());
    let lipa_all = lip_audit_all(g, &values, audit_scale, &mut scratch);
    let mut rows = Vec::with_capacity(g.len());
    let mut max_err = 0.0_f64;
    let mut sup_ok = true;
    let mut support_all_ok = true;
    let mut lipa_pass = 0usize;
    let mut lipa_resolved = 0usize;

    for i in 0..g.len() {
        let err_abs = (values[i] - f.values[i]).abs();
        max_err = max_err.max(err_abs);
        if err_abs > params.epsilon {
            sup_ok = false;
        }

        let support_ok = if dist_to_support[i] > params.delta {
            values[i] == 0.0
        } else {
            true
        };
        if !support_ok {
            support_all_ok = false;
        }

        let lipf_ball = ball_lip_reference(g, f, i, params.delta, &mut scratch);
        let (lipa_g, status) = match lipa_all[i] {
            Some(l) => {
                let ok = l <= lipf_ball + 1.1 * params.lambda;
                (
                    l,
                    if ok {
                        AuditStatus::Pass
                    } else {
                        AuditStatus::Fail
                    },
                )
            }
            None => (f64::NAN, AuditStatus::Unresolved),
        };
        match status {
            AuditStatus::Pass => {
                lipa_pass += 1;
                lipa_resolved += 1;
            }
            AuditStatus::Fail => lipa_resolved += 1,
            AuditStatus::Unresolved => {}
        }
        rows.push(ReportRow {
            index: i,
            err_abs,
            lipa_g,
            lipf_ball,
            bound_ok: status,
            support_ok,
        });
    }

    let report = SmoothingReport {
        params,
        r: smooth.cover.r,
        lip_f: smooth.cover.lip_f,
        chart_count: smooth.cover.charts.len(),
        audit_scale,
        rows,
        sup_bound_ok: sup_ok,
        max_err_abs: max_err,
        lipa_pass_fraction: if lipa_resolved == 0 {
            1.0
        } else {
            lipa_pass as f64 / lipa_resolved as f64
        },
        support_all_ok,
    };
    Ok((g_field, report))
}

/// lip_a_est at every sample in one sweep: one truncated Dijkstra (radius
/// 2·r) per source, shared across all the balls it appears in. Same value
/// as calling `lip_a_est` per sample, without the quadratic re-exploration.
fn lip_audit_all(
    g: &SampledManifold,
    values: &[f64],
    r: f64,
    scratch: &mut PathScratch,
) -> Vec<Option<f64>> {
    let n = g.len();
    let reach_limit = 2.0 * r + 1e-12;
    let mut reach: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut ball = dijkstra_ball(g, i, reach_limit, scratch);
        ball.sort_unstable_by_key(|(j, _)| *j);
        reach.push(ball);
    }
    let dist_between = |a: u32, b: u32| -> Option<f64> {
        let row = &reach[a as usize];
        row.binary_search_by_key(&b, |(j, _)| *j)
            .ok()
            .map(|pos| row[pos].1)
    };
    (0..n)
        .map(|x| {
            let ball: Vec<u32> = reach[x]
                .iter()
                .filter(|(_, d)| *d <= r)
                .map(|(j, _)| *j)
                .collect();
            if ball.len() < 2 {
                return None;
            }
            let mut best = 0.0_f64;
            for (ai, &a) in ball.iter().enumerate() {
                for &b in &ball[ai + 1..] {
                    if let Some(d) = dist_between(a, b) {
                        if d > 0.0 {
                            best =
                                best.max((values[a as usize] - values[b as usize]).abs() / d);
                        }
                    }
                }
            }
            Some(best)
        })
        .collect()
}

fn multi_source_distances(g: &SampledManifold, sources: &[usize]) -> Vec<f64> {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;
    struct Item(f64, u32);
    impl PartialEq for Item {
        fn eq(&self, other: &Self) -> bool {
            self.0 == other.0
        }
    }
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Item(0.0, s as u32));
    }
    while let Some(Item(d, node)) = heap.pop() {
        if d > dist[node as usize] {
            continue;
        }
        for &(j, len) in &g.neighbors[node as usize] {
            let nd = d + len;
            if nd < dist[j as usize] {
                dist[j as usize] = nd;
                heap.push(Item(nd, j));
            }
        }
    }
    dist
}

/// Reference Lip(f; B_δ(x)): the maximum of in-ball edge slopes and, when
/// f has a closed form, dense directional ball probes. The edge slopes
/// catch steep pairs that sit between probe rings (shallow overlaps of the
/// ball with the support of f).
fn ball_lip_reference(
    g: &SampledManifold,
    f: &ScalarField,
    i: usize,
    delta: f64,
    scratch: &mut PathScratch,
) -> f64 {
    let spec = &g.spec;
    let mut best = 0.0_f64;
    let ball = dijkstra_ball(g, i, delta, scratch);
    let in_ball: std::collections::HashSet<u32> = ball.iter().map(|(j, _)| *j).collect();
    for &(j, _) in &ball {
        for &(nb, len) in &g.neighbors[j as usize] {
            if len > 0.0 && in_ball.contains(&nb) {
                best = best.max((f.values[j as usize] - f.values[nb as usize]).abs() / len);
            }
        }
    }
    if let Some(form) = &f.closed_form {
        let chart = make_chart(spec, &g.points[i], delta, 1.0);
        let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
        let x0 = &g.points[i];
        pts.push((x0.clone(), form.eval(spec, x0)));
        let arms = 24;
        for &t in &[0.25, 0.45, 0.62, 0.78, 0.9, 0.975] {
            for a in 0..arms {
                let th = std::f64::consts::TAU * a as f64 / arms as f64;
                let v = [t * delta * th.cos(), t * delta * th.sin()];
                let p = chart.from_chart(spec, &v);
                if spec.distance(x0, &p) <= delta {
                    let val = form.eval(spec, &p);
                    pts.push((p, val));
                }
            }
        }
        for a in 0..pts.len() {
            for b in (a + 1)..pts.len() {
                let d = spec.distance(&pts[a].0, &pts[b].0);
                if d > 1e-12 {
                    best = best.max((pts[a].1 - pts[b].1).abs() / d);
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricgraph::{sample_manifold, ClosedForm, MeasureSpec};

    fn square_graph(n: usize, seed: u64) -> SampledManifold {
        let spec = ManifoldSpec::euclidean_unit_square(MinkowskiNorm::euclidean(2));
        sample_manifold(&spec, n, &MeasureSpec::Uniform, 12, seed).unwrap()
    }

    #[test]
    fn admissible_r_zero_lip_takes_lattice_max() {
        let r = admissible_r(0.0, 0.4, 0.2).unwrap();
        assert_eq!(r, 0.2); // min(δ/2, λ)
        let r = admissible_r(0.0, 0.1, 0.2).unwrap();
        assert_eq!(r, 0.05);
    }

    #[test]
    fn admissible_r_respects_inequality() {
        let lip = 1.0;
        let lambda = 0.1;
        let r = admissible_r(lip, 0.2, lambda).unwrap();
        assert!((2.0 * r + r * r) * lip + r <= lambda);
        assert!(r <= 0.1);
        // the next lattice value up must fail
        let r2 = 2.0 * r;
        assert!((2.0 * r2 + r2 * r2) * lip + r2 > lambda);
    }

    #[test]
    fn bump_endpoints() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.2), 0.0);
        assert!(bump(0.5) > 0.0 && bump(0.5) < 1.0);
    }

    #[test]
    fn zero_field_smooths_to_zero() {
        let g = square_graph(300, 5);
        let f = ScalarField::from_closed(&g, ClosedForm::Zero);
        let out = smooth_approximate(&g, &f, 0.4, 0.1, 0.2, 9).unwrap();
        assert!(out.g_field.values.iter().all(|v| *v == 0.0));
        assert!(out.report.sup_bound_ok);
        assert!(out.report.support_all_ok);
        assert!(out.report.lipa_pass_fraction == 1.0);
    }

    #[test]
    fn constant_field_reproduced_exactly() {
        let g = square_graph(250, 6);
        let f = ScalarField::from_closed(&g, ClosedForm::Constant(2.5));
        let out = smooth_approximate(&g, &f, 0.4, 0.05, 0.2, 9).unwrap();
        for v in &out.g_field.values {
            assert!((v - 2.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn single_chart_partition_is_one() {
        // constant field on a tiny domain: one chart covers everything
        let spec = ManifoldSpec::euclidean_box(
            MinkowskiNorm::euclidean(2),
            vec![[0.0, 0.05], [0.0, 0.05]],
        );
        let g = sample_manifold(&spec, 40, &MeasureSpec::Uniform, 6, 3).unwrap();
        let f = ScalarField::from_closed(&g, ClosedForm::Zero);
        let cover = build_cover(&g, &f, 1.0, 0.5, 2).unwrap();
        assert_eq!(cover.charts.len(), 1);
        build_partition(&cover, &g).unwrap();
        for i in 0..g.len() {
            let psis = psi_at(&cover, &g.spec, &cover.active[i], &g.points[i]);
            assert_eq!(psis.len(), 1);
            assert_eq!(psis[0].1, 1.0);
        }
    }

    #[test]
    fn duplicated_chart_splits_psi_evenly() {
        let spec = ManifoldSpec::euclidean_unit_square(MinkowskiNorm::euclidean(2));
        let g = sample_manifold(&spec, 50, &MeasureSpec::Uniform, 6, 3).unwrap();
        let chart = make_chart(&spec, &g.points[0], 2.0, 1.05);
        let members: Vec<u32> = (0..g.len() as u32).collect();
        let cover = CoverData {
            charts: vec![chart.clone(), chart],
            chart_samples: vec![members.clone(), members],
            adjacency: vec![vec![0, 1], vec![0, 1]],
            n_i: vec![2, 2],
            m_i: vec![2, 2],
            near: vec![vec![0, 1], vec![0, 1]],
            active: (0..g.len()).map(|_| vec![0, 1]).collect(),
            r: 0.1,
            lip_f: 0.0,
        };
        let psis = psi_at(&cover, &g.spec, &[0, 1], &g.points[0]);
        assert_eq!(psis.len(), 2);
        assert!((psis[0].1 - 0.5).abs() < 1e-15);
        assert!((psis[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_sums_to_one_at_samples() {
        let g = square_graph(400, 8);
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Cone {
                center: vec![0.0, 0.0],
                height: 1.0,
            },
        );
        let cover = build_cover(&g, &f, 0.2, 0.1, 4).unwrap();
        build_partition(&cover, &g).unwrap();
        for i in (0..g.len()).step_by(7) {
            let psis = psi_at(&cover, &g.spec, &cover.active[i], &g.points[i]);
            let s: f64 = psis.iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cover_statistics_satisfy_m_bound() {
        let g = square_graph(900, 8);
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Cone {
                center: vec![0.0, 0.0],
                height: 1.0,
            },
        );
        let cover = build_cover(&g, &f, 0.3, 0.15, 4).unwrap();
        // n_i <= m_j for every j in A_i, exhaustively
        for i in 0..cover.charts.len() {
            for &j in &cover.adjacency[i] {
                assert!(cover.n_i[i] <= cover.m_i[j as usize], "n_{i} > m_{j}");
            }
            assert!(cover.charts[i].radius < cover.r);
        }
    }

    #[test]
    fn mollify_constant_exact() {
        let norm = MinkowskiNorm::euclidean(2);
        let ext = mcshane_extend(&[(vec![0.0, 0.0], 3.0)], 0.0, &norm).unwrap();
        let m = mollify(ext, 10, 1.0 / 64.0).unwrap();
        for v in [[0.0, 0.0], [0.01, -0.02], [0.3, 0.2]] {
            assert!((m.eval(&v) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mollify_rejects_coarse_grid() {
        let norm = MinkowskiNorm::euclidean(2);
        let ext = mcshane_extend(&[(vec![0.0, 0.0], 0.0)], 1.0, &norm).unwrap();
        assert!(mollify(ext, 10, 0.1).is_err());
    }

    #[test]
    fn mollify_linear_reproduced() {
        // symmetric kernel kills odd moments; cubic interpolation is exact
        // on linear data
        let a = [0.7, -0.4];
        let m = mollify_fn(
            Box::new(move |v: &[f64]| a[0] * v[0] + a[1] * v[1]),
            8,
            1.0 / 40.0,
        )
        .unwrap();
        for p in [[0.05, 0.02], [-0.08, 0.06], [0.0, 0.0], [0.11, -0.13]] {
            let exact = a[0] * p[0] + a[1] * p[1];
            let got = m.eval(&p);
            assert!((got - exact).abs() < 1e-6, "at {p:?}: {got} vs {exact}");
        }
    }

    #[test]
    fn mollify_l1_cone_at_origin() {
        // smoothed |v|_1 at 0: positive kernel-weighted mean, below the
        // first-moment bound; checked against an independent direct sum.
        let norm = MinkowskiNorm::euclidean(2);
        let k = 10u64;
        let step = 1.0 / (4.0 * k as f64);
        let samples: Vec<(Vec<f64>, f64)> = (-24..=24)
            .flat_map(|i| {
                (-24..=24).map(move |j| {
                    let p = vec![i as f64 * 0.025, j as f64 * 0.025];
                    let v = p[0].abs() + p[1].abs();
                    (p, v)
                })
            })
            .collect();
        let ext = mcshane_extend(&samples, 2.0_f64.sqrt() * (1.0 + 1e-9), &norm).unwrap();
        let m = mollify(ext, k, step).unwrap();

        // independent oracle: direct discrete convolution at the origin
        let radius = 1.0 / k as f64;
        let mut acc = 0.0;
        let mut mass = 0.0;
        let mm = (radius / step).floor() as i64;
        for dx in -mm..=mm {
            for dy in -mm..=mm {
                let z = ((dx * dx + dy * dy) as f64).sqrt() * step;
                let w = bump(z / radius);
                if w > 0.0 {
                    let p = [dx as f64 * step, dy as f64 * step];
                    acc += w * (p[0].abs() + p[1].abs());
                    mass += w;
                }
            }
        }
        let oracle = acc / mass;
        let got = m.eval(&[0.0, 0.0]);
        assert!(got > 0.0);
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        // first-moment bound: mean of |v|_1 over the kernel <= sqrt(2)/k
        assert!(got <= 2.0_f64.sqrt() * radius);
    }

    #[test]
    fn plan_inequalities_hold() {
        let g = square_graph(700, 12);
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Cone {
                center: vec![0.2, 0.2],
                height: 1.0,
            },
        );
        let out = smooth_approximate(&g, &f, 0.3, 0.08, 0.15, 21).unwrap();
        let smooth = &out.function;
        let r = smooth.cover.r;
        for (ci, entry) in smooth.plan.iter().enumerate() {
            if entry.lip_ball == 0.0 {
                continue;
            }
            let lip_ext = (1.0 + r) * entry.lip_ball;
            let c = smooth.cover.charts[ci].equiv_constant;
            let m = smooth.cover.m_i[ci] as f64;
            assert!(lip_ext * c / entry.k as f64 <= smooth.params.epsilon * (1.0 + 1e-12));
            assert!(
                entry.lip_psi * lip_ext * c / entry.k as f64 <= r / m * (1.0 + 1e-12),
                "chart {ci}"
            );
            assert!(entry.grid_step <= 1.0 / (4.0 * entry.k as f64));
        }
    }

    #[test]
    fn per_chart_sup_contraction_and_nonexpansive() {
        let g = square_graph(500, 14);
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Cone {
                center: vec![0.3, 0.3],
                height: 1.0,
            },
        );
        let out = smooth_approximate(&g, &f, 0.3, 0.08, 0.15, 23).unwrap();
        let smooth = &out.function;
        let r = smooth.cover.r;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (ci, cf) in smooth.chart_fns.iter().enumerate() {
            let (moll, ext) = match cf {
                ChartFn::Mollified { moll, ext } => (moll, ext),
                ChartFn::Constant(_) => continue,
            };
            let entry = &smooth.plan[ci];
            let bound = (1.0 + r) * entry.lip_ball * smooth.cover.charts[ci].equiv_constant
                / entry.k as f64;
            let radius = smooth.cover.charts[ci].radius;
            for _ in 0..8 {
                let v = [
                    rng.gen_range(-0.5 * radius..0.5 * radius),
                    rng.gen_range(-0.5 * radius..0.5 * radius),
                ];
                let diff = (moll.eval(&v) - ext.eval(&v)).abs();
                assert!(
                    diff <= bound * (1.0 + 1e-9) + 1e-15,
                    "chart {ci}: {diff} > {bound}"
                );
                // nonexpansiveness on probe pairs
                let w = [v[0] + 0.1 * radius, v[1] - 0.07 * radius];
                let d: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
                let dist = smooth.cover.charts[ci].chart_norm_value(&d);
                let slope = (moll.eval(&v) - moll.eval(&w)).abs() / dist;
                assert!(
                    slope <= (1.0 + r) * entry.lip_ball * (1.0 + 1e-6) + 1e-12,
                    "chart {ci}: slope {slope}"
                );
            }
        }
    }

    #[test]
    fn single_active_chart_reproduces_chart_value() {
        let spec = ManifoldSpec::euclidean_box(
            MinkowskiNorm::euclidean(2),
            vec![[0.0, 0.05], [0.0, 0.05]],
        );
        let g = sample_manifold(&spec, 60, &MeasureSpec::Uniform, 6, 3).unwrap();
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Linear {
                coeffs: vec![0.5, -0.25],
            },
        );
        let out = smooth_approximate(&g, &f, 1.0, 0.5, 0.9, 2).unwrap();
        assert_eq!(out.function.cover.charts.len(), 1);
        for i in (0..g.len()).step_by(5) {
            let direct = out.function.chart_value(0, &g.points[i]);
            assert_eq!(out.g_field.values[i], direct);
        }
    }

    #[test]
    fn cone_fixture_end_to_end_bounds() {
        // n large enough that audit_scale + 2r stays below δ: the audit
        // ball must not out-reach the reference ball near the support edge.
        let g = square_graph(2500, 33);
        let f = ScalarField::from_closed(
            &g,
            ClosedForm::Cone {
                center: vec![0.0, 0.0],
                height: 1.0,
            },
        );
        let out = smooth_approximate(&g, &f, 0.2, 0.05, 0.1, 7).unwrap();
        assert!(out.report.audit_scale + 2.0 * out.report.r < 0.2);
        assert!(
            out.report.sup_bound_ok,
            "max err {} > eps",
            out.report.max_err_abs
        );
        assert!(out.report.support_all_ok);
        assert!(
            out.report.lipa_pass_fraction >= 0.99,
            "lipa pass {}",
            out.report.lipa_pass_fraction
        );
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let g = square_graph(100, 3);
        let f = ScalarField::from_closed(&g, ClosedForm::Zero);
        assert!(smooth_approximate(&g, &f, 0.2, 0.0, 0.1, 1).is_err());
        assert!(smooth_approximate(&g, &f, -0.2, 0.1, 0.1, 1).is_err());
        assert!(smooth_approximate(&g, &f, 0.2, 0.1, 0.0, 1).is_err());
    }
}
