//! Point-cloud surrogates of Finsler manifolds: weighted samples, k-nearest
//! neighbor graphs with Finsler edge lengths, shortest-path distances and
//! Lipschitz-constant estimators.
//!
//! The graph metric is a path metric, so the global Lipschitz constant of a
//! sample field equals the largest edge slope: any pair telescopes along its
//! shortest path, and the maximal edge is itself a pair. Ball-restricted
//! constants do not reduce this way and are computed pairwise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifold::{make_chart, ChartData, ManifoldKind, ManifoldSpec, Point};
use crate::minkowski::MinkowskiNorm;
use crate::{FinslerError, Result};

/// Non-negative weights over sample points (the discrete measure μ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedMeasure {
    pub weights: Vec<f64>,
    pub total_mass: f64,
}

impl WeightedMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(FinslerError::InvalidInput(
                "measure weights must be finite and non-negative".into(),
            ));
        }
        let total_mass: f64 = weights.iter().sum();
        if total_mass <= 0.0 {
            return Err(FinslerError::InvalidInput(
                "measure must have positive total mass".into(),
            ));
        }
        Ok(Self {
            weights,
            total_mass,
        })
    }
}

/// How to build the weighted measure during sampling.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Equal weights summing to one.
    Uniform,
    /// Density (1 + amplitude·s(x)) times the local area element,
    /// normalized to unit mass. s is a built-in smooth profile per kind.
    SmoothDensity { amplitude: f64 },
    /// Explicit atoms: the sample set is exactly these points.
    Atoms { atoms: Vec<(Vec<f64>, f64)> },
    /// Smooth density plus `atom_count` seeded atoms on sample points
    /// carrying `atom_mass_fraction` of the total mass.
    MixedAtoms {
        amplitude: f64,
        atom_count: usize,
        atom_mass_fraction: f64,
    },
}

fn density_profile(spec: &ManifoldSpec, amplitude: f64, x: &[f64]) -> f64 {
    let s = match &spec.kind {
        ManifoldKind::Sphere2 { radius } => x[2] / radius,
        ManifoldKind::FlatTorus2 { periods, .. } => {
            (std::f64::consts::TAU * x[0] / periods[0]).sin()
                * (std::f64::consts::TAU * x[1] / periods[1]).cos()
        }
        _ => (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).cos(),
    };
    (1.0 + amplitude * s).max(1e-9)
}

/// Analytic test functions evaluable at arbitrary manifold points.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    Zero,
    Constant(f64),
    /// ⟨coeffs, x⟩ in ambient coordinates.
    Linear { coeffs: Vec<f64> },
    /// max(0, height − |x − center|₂) in ambient coordinates.
    Cone { center: Vec<f64>, height: f64 },
    /// max(0, cap − d_M(x, center)).
    TruncatedDistance { center: Vec<f64>, cap: f64 },
    /// Ambient coordinate x_axis.
    Coordinate { axis: usize },
    /// (p/2π)·sin(2π·x_axis/p) on the torus with period p (Lip = 1).
    SineWave { axis: usize },
    /// |x|²/2 in ambient coordinates (gradient x).
    HalfSquareNorm,
    Combo { terms: Vec<(f64, ClosedForm)> },
}

impl ClosedForm {
    pub fn eval(&self, spec: &ManifoldSpec, x: &[f64]) -> f64 {
        match self {
            ClosedForm::Zero => 0.0,
            ClosedForm::Constant(c) => *c,
            ClosedForm::Linear { coeffs } => coeffs.iter().zip(x).map(|(a, b)| a * b).sum(),
            ClosedForm::Cone { center, height } => {
                let d: f64 = center
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| (xi - c) * (xi - c))
                    .sum::<f64>()
                    .sqrt();
                (height - d).max(0.0)
            }
            ClosedForm::TruncatedDistance { center, cap } => {
                (cap - spec.distance(center, x)).max(0.0)
            }
            ClosedForm::Coordinate { axis } => x[*axis],
            ClosedForm::SineWave { axis } => match &spec.kind {
                ManifoldKind::FlatTorus2 { periods, .. } => {
                    let p = periods[*axis];
                    p / std::f64::consts::TAU * (std::f64::consts::TAU * x[*axis] / p).sin()
                }
                _ => x[*axis].sin(),
            },
            ClosedForm::HalfSquareNorm => 0.5 * x.iter().map(|c| c * c).sum::<f64>(),
            ClosedForm::Combo { terms } => terms.iter().map(|(c, f)| c * f.eval(spec, x)).sum(),
        }
    }

    pub fn combo(terms: Vec<(f64, ClosedForm)>) -> Self {
        ClosedForm::Combo { terms }
    }
}

/// A scalar function known at the samples, optionally with its analytic form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub closed_form: Option<ClosedForm>,
}

impl ScalarField {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FinslerError::InvalidInput(
                "scalar field values must be finite".into(),
            ));
        }
        Ok(Self {
            values,
            closed_form: None,
        })
    }

    pub fn from_closed(graph: &SampledManifold, form: ClosedForm) -> Self {
        let values = graph
            .points
            .iter()
            .map(|p| form.eval(&graph.spec, p))
            .collect();
        Self {
            values,
            closed_form: Some(form),
        }
    }
}

/// A sampled manifold: points, k-NN adjacency with Finsler edge lengths,
/// and a weighted measure. Edge lengths are computed once per undirected
/// edge so symmetry is exact.
#[derive(Debug, Clone)]
pub struct SampledManifold {
    pub spec: ManifoldSpec,
    pub points: Vec<Point>,
    pub neighbors: Vec<Vec<(u32, f64)>>,
    pub measure: WeightedMeasure,
    pub median_edge: f64,
}

/// Serializable graph structure (points, undirected edges, weights).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub points: Vec<Vec<f64>>,
    pub edges: Vec<(u32, u32, f64)>,
    pub weights: Vec<f64>,
}

impl SampledManifold {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn edge_list(&self) -> Vec<(u32, u32, f64)> {
        let mut edges = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &(j, len) in nb {
                if (i as u32) < j {
                    edges.push((i as u32, j, len));
                }
            }
        }
        edges
    }

    /// Base-atlas chart at sample i, sized to hold all incident edges.
    pub fn point_chart(&self, i: usize) -> ChartData {
        let max_edge = self.neighbors[i]
            .iter()
            .map(|(_, l)| *l)
            .fold(0.0_f64, f64::max);
        let radius = (1.5 * max_edge).max(3.0 * self.median_edge);
        make_chart(&self.spec, &self.points[i], radius, 1.25)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            points: self.points.clone(),
            edges: self.edge_list(),
            weights: self.measure.weights.clone(),
        }
    }

    pub fn from_document(spec: ManifoldSpec, doc: &GraphDocument) -> Result<Self> {
        let n = doc.points.len();
        if doc.weights.len() != n {
            return Err(FinslerError::InvalidInput(format!(
                "weights ({}) do not match points ({n})",
                doc.weights.len()
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut lens = Vec::new();
        for &(a, b, len) in &doc.edges {
            if a as usize >= n || b as usize >= n {
                return Err(FinslerError::InvalidInput(format!(
                    "edge ({a},{b}) out of range"
                )));
            }
            neighbors[a as usize].push((b, len));
            neighbors[b as usize].push((a, len));
            lens.push(len);
        }
        lens.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median_edge = if lens.is_empty() {
            0.0
        } else {
            lens[lens.len() / 2]
        };
        let g = Self {
            spec,
            points: doc.points.clone(),
            neighbors,
            measure: WeightedMeasure::new(doc.weights.clone())?,
            median_edge,
        };
        check_connected(&g.neighbors)?;
        Ok(g)
    }
}

/// Sample a manifold into a weighted k-NN graph. Duplicate points are
/// merged with summed weights; a disconnected result is a construction
/// error suggesting a larger k.
pub fn sample_manifold(
    spec: &ManifoldSpec,
    n: usize,
    measure: &MeasureSpec,
    k: usize,
    seed: u64,
) -> Result<SampledManifold> {
    if n < 2 {
        return Err(FinslerError::InvalidInput("need at least 2 samples".into()));
    }
    if k < 1 {
        return Err(FinslerError::InvalidInput("k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (mut points, mut weights): (Vec<Point>, Vec<f64>) = match measure {
        MeasureSpec::Atoms { atoms } => {
            if atoms.len() != n {
                return Err(FinslerError::InvalidInput(format!(
                    "atom measure supplies {} points but n = {n}",
                    atoms.len()
                )));
            }
            (
                atoms.iter().map(|(p, _)| spec.wrap(p)).collect(),
                atoms.iter().map(|(_, m)| *m).collect(),
            )
        }
        _ => {
            let pts: Vec<Point> = (0..n).map(|_| spec.sample_point(&mut rng)).collect();
            let raw: Vec<f64> = match measure {
                MeasureSpec::Uniform => vec![1.0; n],
                MeasureSpec::SmoothDensity { amplitude }
                | MeasureSpec::MixedAtoms { amplitude, .. } => pts
                    .iter()
                    .map(|p| density_profile(spec, *amplitude, p) * spec.area_element(p))
                    .collect(),
                MeasureSpec::Atoms { .. } => unreachable!(),
            };
            let total: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            if let MeasureSpec::MixedAtoms {
                atom_count,
                atom_mass_fraction,
                ..
            } = measure
            {
                let frac = atom_mass_fraction.clamp(0.0, 1.0);
                for wi in w.iter_mut() {
                    *wi *= 1.0 - frac;
                }
                let count = (*atom_count).clamp(1, n);
                for _ in 0..count {
                    let idx = rng.gen_range(0..n);
                    w[idx] += frac / count as f64;
                }
            }
            (pts, w)
        }
    };

    merge_duplicates(&mut points, &mut weights);
    let n = points.len();
    if n < 2 {
        return Err(FinslerError::InvalidInput(
            "fewer than 2 distinct sample points".into(),
        ));
    }

    // k-NN by a coordinate proxy metric (chordal on the sphere, minimum
    // image on the torus), then Finsler lengths per undirected edge.
    let k_eff = k.min(n - 1);
    let mut neighbors: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut edge_set: Vec<(u32, u32)> = Vec::new();
    let mut dists: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if i != j {
                dists.push((proxy_distance(spec, &points[i], &points[j]), j as u32));
            }
        }
        dists.select_nth_unstable_by(k_eff - 1, |a, b| {
            a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal)
        });
        for &(_, j) in dists.iter().take(k_eff) {
            edge_set.push(((i as u32).min(j), (i as u32).max(j)));
        }
    }
    edge_set.sort_unstable();
    edge_set.dedup();

    let mut lens = Vec::with_capacity(edge_set.len());
    for &(a, b) in &edge_set {
        let len = spec.distance(&points[a as usize], &points[b as usize]);
        neighbors[a as usize].push((b, len));
        neighbors[b as usize].push((a, len));
        lens.push(len);
    }
    check_connected(&neighbors).map_err(|_| {
        FinslerError::Construction(format!(
            "sampled graph is disconnected at k = {k}; try a larger k"
        ))
    })?;

    lens.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median_edge = lens[lens.len() / 2];

    Ok(SampledManifold {
        spec: spec.clone(),
        points,
        neighbors,
        measure: WeightedMeasure::new(weights)?,
        median_edge,
    })
}

fn proxy_distance(spec: &ManifoldSpec, a: &[f64], b: &[f64]) -> f64 {
    match &spec.kind {
        ManifoldKind::FlatTorus2 { .. } => {
            let d = spec.displacement(a, b);
            d[0] * d[0] + d[1] * d[1]
        }
        _ => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

fn merge_duplicates(points: &mut Vec<Point>, weights: &mut Vec<f64>) {
    let mut kept: Vec<Point> = Vec::with_capacity(points.len());
    let mut kept_w: Vec<f64> = Vec::with_capacity(points.len());
    'outer: for (p, w) in points.iter().zip(weights.iter()) {
        for (q, qw) in kept.iter().zip(kept_w.iter_mut()) {
            if p == q {
                *qw += w;
                continue 'outer;
            }
        }
        kept.push(p.clone());
        kept_w.push(*w);
    }
    *points = kept;
    *weights = kept_w;
}

fn check_connected(neighbors: &[Vec<(u32, f64)>]) -> Result<()> {
    let n = neighbors.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &(j, _) in &neighbors[i] {
            if !seen[j as usize] {
                seen[j as usize] = true;
                count += 1;
                stack.push(j as usize);
            }
        }
    }
    if count != n {
        return Err(FinslerError::Construction(format!(
            "graph has {} unreachable vertices",
            n - count
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Shortest paths
// ---------------------------------------------------------------------------

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap by distance
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable scratch space for repeated Dijkstra runs.
pub struct PathScratch {
    dist: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl PathScratch {
    pub fn new(n: usize) -> Self {
        Self {
            dist: vec![f64::INFINITY; n],
            stamp: vec![0; n],
            epoch: 0,
        }
    }

    fn get(&self, i: usize) -> f64 {
        if self.stamp[i] == self.epoch {
            self.dist[i]
        } else {
            f64::INFINITY
        }
    }

    fn set(&mut self, i: usize, d: f64) {
        self.stamp[i] = self.epoch;
        self.dist[i] = d;
    }
}

/// Dijkstra from `src`, exploring nodes with distance ≤ `rmax` (INFINITY
/// for a full run). Returns (node, distance) pairs of the settled ball,
/// source included.
pub fn dijkstra_ball(
    g: &SampledManifold,
    src: usize,
    rmax: f64,
    scratch: &mut PathScratch,
) -> Vec<(u32, f64)> {
    scratch.epoch = scratch.epoch.wrapping_add(1);
    let mut heap = BinaryHeap::new();
    scratch.set(src, 0.0);
    heap.push(HeapItem {
        dist: 0.0,
        node: src as u32,
    });
    let mut settled: Vec<(u32, f64)> = Vec::new();
    while let Some(HeapItem { dist, node }) = heap.pop() {
        if dist > scratch.get(node as usize) {
            continue;
        }
        settled.push((node, dist));
        for &(j, len) in &g.neighbors[node as usize] {
            let nd = dist + len;
            if nd <= rmax && nd < scratch.get(j as usize) {
                scratch.set(j as usize, nd);
                heap.push(HeapItem { dist: nd, node: j });
            }
        }
    }
    settled
}

/// Multi-source shortest-path distances. Exact on the graph; unreachable
/// targets (impossible on connected graphs) report infinity.
pub fn graph_distance(
    g: &SampledManifold,
    sources: &[usize],
    targets: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let n = g.len();
    for &i in sources.iter().chain(targets) {
        if i >= n {
            return Err(FinslerError::InvalidInput(format!(
                "point index {i} out of range ({n} samples)"
            )));
        }
    }
    let mut scratch = PathScratch::new(n);
    let mut rows = Vec::with_capacity(sources.len());
    for &s in sources {
        let ball = dijkstra_ball(g, s, f64::INFINITY, &mut scratch);
        let mut dist = vec![f64::INFINITY; n];
        for (node, d) in ball {
            dist[node as usize] = d;
        }
        rows.push(targets.iter().map(|&t| dist[t]).collect());
    }
    Ok(rows)
}

/// CSV emission of a distance matrix with the fixed header `src,dst,distance`.
pub fn distance_matrix_csv(sources: &[usize], targets: &[usize], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("src,dst,distance\n");
    for (si, &s) in sources.iter().enumerate() {
        for (ti, &t) in targets.iter().enumerate() {
            out.push_str(&format!("{s},{t},{:.17e}\n", matrix[si][ti]));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Lipschitz estimators
// ---------------------------------------------------------------------------

/// Lip(f; E) over the graph metric. With `subset = None` the whole sample
/// set is used and the estimate is the exact maximal edge slope (path
/// metric). An explicit subset is evaluated pairwise with full-graph
/// distances.
pub fn lip_global(f: &ScalarField, g: &SampledManifold, subset: Option<&[usize]>) -> Result<f64> {
    if f.values.len() != g.len() {
        return Err(FinslerError::DimensionMismatch {
            expected: g.len(),
            got: f.values.len(),
        });
    }
    match subset {
        None => {
            let mut best = 0.0_f64;
            for (i, nb) in g.neighbors.iter().enumerate() {
                for &(j, len) in nb {
                    if (j as usize) > i && len > 0.0 {
                        let slope = (f.values[i] - f.values[j as usize]).abs() / len;
                        best = best.max(slope);
                    }
                }
            }
            Ok(best)
        }
        Some(indices) => {
            if indices.len() < 2 {
                return Err(FinslerError::InvalidInput(
                    "subset needs at least 2 points".into(),
                ));
            }
            let mut scratch = PathScratch::new(g.len());
            let in_subset: std::collections::HashSet<usize> = indices.iter().copied().collect();
            let mut best = 0.0_f64;
            for &a in indices {
                let ball = dijkstra_ball(g, a, f64::INFINITY, &mut scratch);
                for (node, d) in ball {
                    let b = node as usize;
                    if b != a && d > 0.0 && in_subset.contains(&b) {
                        best = best.max((f.values[a] - f.values[b]).abs() / d);
                    }
                }
            }
            Ok(best)
        }
    }
}

/// One-scale truncation of the asymptotic Lipschitz constant: Lip(f) over
/// the graph-metric ball B_r(x), all pairs.
pub fn lip_a_est(f: &ScalarField, g: &SampledManifold, x: usize, r: f64) -> Result<f64> {
    let mut scratch = PathScratch::new(g.len());
    lip_a_est_with(f, g, x, r, &mut scratch)
}

pub fn lip_a_est_with(
    f: &ScalarField,
    g: &SampledManifold,
    x: usize,
    r: f64,
    scratch: &mut PathScratch,
) -> Result<f64> {
    if x >= g.len() {
        return Err(FinslerError::InvalidInput(format!(
            "point index {x} out of range"
        )));
    }
    if r <= 0.0 {
        return Err(FinslerError::InvalidInput("radius must be positive".into()));
    }
    let ball = dijkstra_ball(g, x, r, scratch);
    if ball.len() < 2 {
        return Err(FinslerError::InvalidInput(format!(
            "ball of radius {r:.4e} at sample {x} contains fewer than 2 points"
        )));
    }
    let members: Vec<u32> = ball.iter().map(|(i, _)| *i).collect();
    let in_ball: std::collections::HashSet<u32> = members.iter().copied().collect();
    let mut best = 0.0_f64;
    for &a in &members {
        let reach = dijkstra_ball(g, a as usize, 2.0 * r + 1e-12, scratch);
        for (b, d) in reach {
            if b != a && d > 0.0 && in_ball.contains(&b) {
                best = best.max((f.values[a as usize] - f.values[b as usize]).abs() / d);
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// McShane extension
// ---------------------------------------------------------------------------

/// The inf-convolution extension v ↦ min_j (fⱼ + L·‖v − xⱼ‖). Agrees with
/// the data at sample points and is L-Lipschitz for the given norm.
#[derive(Debug, Clone)]
pub struct McShaneExtension {
    pub samples: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub lip: f64,
    pub norm: MinkowskiNorm,
}

impl McShaneExtension {
    pub fn eval(&self, v: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut diff = vec![0.0; v.len()];
        for (x, fx) in self.samples.iter().zip(&self.values) {
            for (d, (vi, xi)) in diff.iter_mut().zip(v.iter().zip(x)) {
                *d = vi - xi;
            }
            let cand = fx + self.lip * self.norm.eval_unchecked(&diff);
            if cand < best {
                best = cand;
            }
        }
        best
    }
}

/// Build the McShane extension after validating the L-Lipschitz
/// precondition on every sample pair (the offending pair is named).
pub fn mcshane_extend(
    values: &[(Vec<f64>, f64)],
    lip: f64,
    norm: &MinkowskiNorm,
) -> Result<McShaneExtension> {
    if values.is_empty() {
        return Err(FinslerError::InvalidInput(
            "extension needs at least one sample".into(),
        ));
    }
    if lip < 0.0 {
        return Err(FinslerError::InvalidInput(
            "Lipschitz constant must be non-negative".into(),
        ));
    }
    for (p, _) in values {
        if p.len() != norm.dim {
            return Err(FinslerError::DimensionMismatch {
                expected: norm.dim,
                got: p.len(),
            });
        }
    }
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let (xi, fi) = &values[i];
            let (xj, fj) = &values[j];
            let d: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
            let dist = norm.eval_unchecked(&d);
            let gap = (fi - fj).abs();
            if gap > lip * dist * (1.0 + 1e-12) + 1e-12 {
                return Err(FinslerError::Precondition(format!(
                    "values at samples {i} and {j} violate the {lip}-Lipschitz bound: \
                     |Δf| = {gap:.6e} > L·d = {:.6e}",
                    lip * dist
                )));
            }
        }
    }
    Ok(McShaneExtension {
        samples: values.iter().map(|(p, _)| p.clone()).collect(),
        values: values.iter().map(|(_, f)| *f).collect(),
        lip,
        norm: norm.clone(),
    })
}
