//! Built-in manifolds with Riemannian or Finsler structure: geodesic
//! integration, exponential maps, charts and the empirical biLipschitz
//! radius search.
//!
//! Points are coordinate vectors. The sphere is carried in embedded ℝ³
//! coordinates with tangent vectors in the ambient space; the torus lives
//! on its fundamental domain; the euclidean and finsler-plane kinds are
//! plain coordinate boxes. Sphere geodesics integrate the embedded ODE
//! ẍ = −(|ẋ|²/R²)x, which avoids the pole singularities of intrinsic
//! coordinates; the closed-form exponential stays available as an oracle
//! and for chart construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minkowski::MinkowskiNorm;
use crate::{FinslerError, Result};

pub type Point = Vec<f64>;

/// Riemannian metric field for the torus kind.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum MetricField {
    Identity,
    /// g(x) = c(x)²·I with c(x) = 1 + a·sin(2πx₁/p₁)·sin(2πx₂/p₂).
    Conformal { amplitude: f64 },
}

/// Position-dependent Minkowski norm field for the finsler-plane kind.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum NormField {
    Constant(MinkowskiNorm),
    /// quartic_blend(θ(x)) with θ(x) = base + amplitude·sin(x₁)cos(x₂),
    /// clamped to [0, 0.95].
    BlendWave { base: f64, amplitude: f64 },
}

impl NormField {
    pub fn at(&self, x: &[f64]) -> MinkowskiNorm {
        match self {
            NormField::Constant(n) => n.clone(),
            NormField::BlendWave { base, amplitude } => {
                let theta = (base + amplitude * x[0].sin() * x[1].cos()).clamp(0.0, 0.95);
                MinkowskiNorm::quartic_blend(2, theta)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean {
        dim: usize,
        norm: MinkowskiNorm,
        /// Sampling box, one [lo, hi] per coordinate.
        extent: Vec<[f64; 2]>,
    },
    Sphere2 {
        radius: f64,
    },
    FlatTorus2 {
        periods: [f64; 2],
        metric: MetricField,
    },
    FinslerPlane {
        field: NormField,
        extent: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
}

impl ManifoldSpec {
    pub fn euclidean_box(norm: MinkowskiNorm, extent: Vec<[f64; 2]>) -> Self {
        assert_eq!(norm.dim, extent.len());
        let dim = norm.dim;
        Self {
            kind: ManifoldKind::Euclidean { dim, norm, extent },
        }
    }

    pub fn euclidean_unit_square(norm: MinkowskiNorm) -> Self {
        Self::euclidean_box(norm, vec![[0.0, 1.0], [0.0, 1.0]])
    }

    pub fn sphere2(radius: f64) -> Self {
        Self {
            kind: ManifoldKind::Sphere2 { radius },
        }
    }

    pub fn flat_torus2(periods: [f64; 2], metric: MetricField) -> Self {
        Self {
            kind: ManifoldKind::FlatTorus2 { periods, metric },
        }
    }

    pub fn finsler_plane(field: NormField, extent: Vec<[f64; 2]>) -> Self {
        Self {
            kind: ManifoldKind::FinslerPlane { field, extent },
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Euclidean { dim, .. } => *dim,
            _ => 2,
        }
    }

    /// Dimension of coordinate vectors carrying points and velocities.
    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Sphere2 { .. } => 3,
            _ => self.intrinsic_dim(),
        }
    }

    /// Upper hint for chart-radius searches, below the injectivity scale.
    pub fn radius_hint(&self) -> f64 {
        match &self.kind {
            ManifoldKind::Euclidean { extent, .. } | ManifoldKind::FinslerPlane { extent, .. } => {
                extent
                    .iter()
                    .map(|[lo, hi]| (hi - lo) * (hi - lo))
                    .sum::<f64>()
                    .sqrt()
            }
            ManifoldKind::Sphere2 { radius } => 0.9 * std::f64::consts::PI * radius,
            ManifoldKind::FlatTorus2 { periods, .. } => 0.49 * periods[0].min(periods[1]),
        }
    }

    /// Fiber norm at x in ambient coordinates; integrand for curve lengths.
    pub fn fiber_norm(&self, x: &[f64]) -> MinkowskiNorm {
        match &self.kind {
            ManifoldKind::Euclidean { norm, .. } => norm.clone(),
            ManifoldKind::Sphere2 { .. } => MinkowskiNorm::euclidean(3),
            ManifoldKind::FlatTorus2 { .. } => {
                let c = self.conformal_factor(x);
                MinkowskiNorm::weighted_lp(2, 2.0, vec![c * c, c * c])
            }
            ManifoldKind::FinslerPlane { field, .. } => field.at(x),
        }
    }

    /// F(x, v) without allocating a norm object for the common kinds.
    pub fn fiber_norm_value(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::Euclidean { norm, .. } => norm.eval_unchecked(v),
            ManifoldKind::Sphere2 { .. } => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            ManifoldKind::FlatTorus2 { .. } => {
                self.conformal_factor(x) * v.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
            ManifoldKind::FinslerPlane { field, .. } => field.at(x).eval_unchecked(v),
        }
    }

    pub fn conformal_factor(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::FlatTorus2 {
                periods,
                metric: MetricField::Conformal { amplitude },
            } => {
                1.0 + amplitude
                    * (std::f64::consts::TAU * x[0] / periods[0]).sin()
                    * (std::f64::consts::TAU * x[1] / periods[1]).sin()
            }
            _ => 1.0,
        }
    }

    pub fn wrap(&self, x: &[f64]) -> Point {
        match &self.kind {
            ManifoldKind::FlatTorus2 { periods, .. } => {
                vec![x[0].rem_euclid(periods[0]), x[1].rem_euclid(periods[1])]
            }
            _ => x.to_vec(),
        }
    }

    /// Coordinate displacement b − a; minimum image on the torus.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match &self.kind {
            ManifoldKind::FlatTorus2 { periods, .. } => {
                let mut d = Vec::with_capacity(2);
                for i in 0..2 {
                    let mut di = (b[i] - a[i]).rem_euclid(periods[i]);
                    if di > periods[i] / 2.0 {
                        di -= periods[i];
                    }
                    d.push(di);
                }
                d
            }
            _ => a.iter().zip(b).map(|(ai, bi)| bi - ai).collect(),
        }
    }

    /// Manifold distance: exact where a closed form exists, otherwise the
    /// length of the coordinate segment under F (an upper estimate valid at
    /// chart scale).
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::Euclidean { norm, .. } => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                norm.eval_unchecked(&d)
            }
            ManifoldKind::Sphere2 { radius } => sphere_distance(*radius, a, b),
            ManifoldKind::FlatTorus2 { metric, .. } => {
                let d = self.displacement(a, b);
                match metric {
                    MetricField::Identity => (d[0] * d[0] + d[1] * d[1]).sqrt(),
                    MetricField::Conformal { .. } => self.segment_length(a, &d),
                }
            }
            ManifoldKind::FinslerPlane { .. } => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                self.segment_length(a, &d)
            }
        }
    }

    /// 8-point composite midpoint integration of F along t ↦ a + t·d.
    pub fn segment_length(&self, a: &[f64], d: &[f64]) -> f64 {
        let n = 8;
        let mut total = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let x: Vec<f64> = a.iter().zip(d).map(|(ai, di)| ai + t * di).collect();
            total += self.fiber_norm_value(&self.wrap(&x), d);
        }
        total / n as f64
    }

    /// Uniform-by-area sample (the conformal torus stays coordinate-uniform;
    /// its area element is absorbed into measure weights).
    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Point {
        match &self.kind {
            ManifoldKind::Euclidean { extent, .. } | ManifoldKind::FinslerPlane { extent, .. } => {
                extent
                    .iter()
                    .map(|[lo, hi]| rng.gen_range(*lo..*hi))
                    .collect()
            }
            ManifoldKind::Sphere2 { radius } => {
                let z = rng.gen_range(-1.0..1.0_f64);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - z * z).max(0.0).sqrt();
                vec![radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
            }
            ManifoldKind::FlatTorus2 { periods, .. } => vec![
                rng.gen_range(0.0..periods[0]),
                rng.gen_range(0.0..periods[1]),
            ],
        }
    }

    /// Area element at x relative to coordinate measure (for weights).
    pub fn area_element(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::FlatTorus2 { .. } => {
                let c = self.conformal_factor(x);
                c * c
            }
            _ => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Sphere closed forms (oracles and chart maps)
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Closed-form exponential on the sphere of radius R; v must be tangent at p.
pub fn sphere_exp(radius: f64, p: &[f64], v: &[f64]) -> Point {
    let speed = norm2(v);
    if speed < 1e-300 {
        return p.to_vec();
    }
    let theta = speed / radius;
    let (s, c) = theta.sin_cos();
    p.iter()
        .zip(v)
        .map(|(pi, vi)| c * pi + s * radius * vi / speed)
        .collect()
}

/// Closed-form logarithm on the sphere; undefined at the exact antipode.
pub fn sphere_log(radius: f64, p: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let c = (dot(p, q) / (radius * radius)).clamp(-1.0, 1.0);
    let theta = c.acos();
    if theta < 1e-14 {
        return Some(vec![0.0; 3]);
    }
    let w: Vec<f64> = q.iter().zip(p).map(|(qi, pi)| qi - c * pi).collect();
    let wn = norm2(&w);
    if wn < 1e-300 {
        return None; // antipode: direction undetermined
    }
    Some(w.iter().map(|wi| theta * radius * wi / wn).collect())
}

pub fn sphere_distance(radius: f64, p: &[f64], q: &[f64]) -> f64 {
    let c = (dot(p, q) / (radius * radius)).clamp(-1.0, 1.0);
    radius * c.acos()
}

// ---------------------------------------------------------------------------
// Geodesic integration
// ---------------------------------------------------------------------------

const BLOWUP_BOUND: f64 = 1e6;

/// Integrate the geodesic from (x, v) for time t with fixed-step RK4
/// (`steps` ≥ 16). Flat kinds return the exact straight line.
pub fn geodesic_shoot(
    spec: &ManifoldSpec,
    x: &[f64],
    v: &[f64],
    t: f64,
    steps: usize,
) -> Result<Point> {
    if steps < 16 {
        return Err(FinslerError::InvalidInput(format!(
            "integrator needs at least 16 steps, got {steps}"
        )));
    }
    let dim = spec.ambient_dim();
    if x.len() != dim || v.len() != dim {
        return Err(FinslerError::DimensionMismatch {
            expected: dim,
            got: if x.len() != dim { x.len() } else { v.len() },
        });
    }
    match &spec.kind {
        ManifoldKind::Euclidean { .. } => {
            Ok(x.iter().zip(v).map(|(xi, vi)| xi + t * vi).collect())
        }
        ManifoldKind::FlatTorus2 {
            metric: MetricField::Identity,
            ..
        } => {
            let raw: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + t * vi).collect();
            Ok(spec.wrap(&raw))
        }
        ManifoldKind::Sphere2 { radius } => {
            let r2 = radius * radius;
            let (end, _) = rk4(x, v, t, steps, |p, u| {
                let speed2: f64 = u.iter().map(|c| c * c).sum();
                p.iter().map(|pi| -speed2 / r2 * pi).collect()
            })?;
            Ok(end)
        }
        ManifoldKind::FlatTorus2 {
            metric: MetricField::Conformal { .. },
            ..
        } => {
            let (end, _) = rk4(x, v, t, steps, |p, u| conformal_accel(spec, p, u))?;
            Ok(spec.wrap(&end))
        }
        ManifoldKind::FinslerPlane { field, .. } => {
            let (end, _) = rk4(x, v, t, steps, |p, u| finsler_accel(field, p, u))?;
            Ok(end)
        }
    }
}

/// Exponential map: time-1 geodesic (64 integrator steps by default).
pub fn exp_map(spec: &ManifoldSpec, x: &[f64], v: &[f64]) -> Result<Point> {
    exp_map_steps(spec, x, v, 64)
}

pub fn exp_map_steps(spec: &ManifoldSpec, x: &[f64], v: &[f64], steps: usize) -> Result<Point> {
    geodesic_shoot(spec, x, v, 1.0, steps)
}

fn rk4<F: Fn(&[f64], &[f64]) -> Vec<f64>>(
    x0: &[f64],
    v0: &[f64],
    t: f64,
    steps: usize,
    accel: F,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = t / steps as f64;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + s * bi).collect()
    };
    for _ in 0..steps {
        let a1 = accel(&x, &v);
        let x2 = add(&x, &v, h / 2.0);
        let v2 = add(&v, &a1, h / 2.0);
        let a2 = accel(&x2, &v2);
        let x3 = add(&x, &v2, h / 2.0);
        let v3 = add(&v, &a2, h / 2.0);
        let a3 = accel(&x3, &v3);
        let x4 = add(&x, &v3, h);
        let v4 = add(&v, &a3, h);
        let a4 = accel(&x4, &v4);
        for i in 0..dim {
            x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        let mag: f64 =
            x.iter().map(|c| c * c).sum::<f64>() + v.iter().map(|c| c * c).sum::<f64>();
        if !mag.is_finite() || mag > BLOWUP_BOUND * BLOWUP_BOUND {
            return Err(FinslerError::Numeric("geodesic integration blew up".into()));
        }
    }
    Ok((x, v))
}

const FD_H: f64 = 1e-5;

/// Geodesic acceleration for g = c(x)²·I via finite-difference Christoffels:
/// ẍᵏ = −Γᵏᵢⱼ ẋⁱ ẋʲ with Γ built from ∂c.
fn conformal_accel(spec: &ManifoldSpec, x: &[f64], u: &[f64]) -> Vec<f64> {
    // Central differences of the metric entries g_ij = c²δ_ij.
    let c0 = spec.conformal_factor(x);
    let mut dc = [0.0; 2];
    for i in 0..2 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += FD_H;
        xm[i] -= FD_H;
        dc[i] = (spec.conformal_factor(&xp) - spec.conformal_factor(&xm)) / (2.0 * FD_H);
    }
    // For conformal metrics Γᵏᵢⱼ = (δᵏᵢ∂ⱼ + δᵏⱼ∂ᵢ − δᵢⱼ∂ᵏ)(ln c).
    let dl = [dc[0] / c0, dc[1] / c0];
    let mut acc = vec![0.0; 2];
    let speed2 = u[0] * u[0] + u[1] * u[1];
    for k in 0..2 {
        let mut gamma = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut g = 0.0;
                if k == i {
                    g += dl[j];
                }
                if k == j {
                    g += dl[i];
                }
                if i == j {
                    g -= dl[k];
                }
                gamma += g * u[i] * u[j];
            }
        }
        acc[k] = -gamma;
        let _ = speed2;
    }
    acc
}

/// Euler–Lagrange acceleration for L(x,v) = ½F²(x,v) with numeric
/// derivatives: v̇ = (∂²L/∂v²)⁻¹ (∂L/∂x − (∂²L/∂v∂x)·v).
fn finsler_accel(field: &NormField, x: &[f64], u: &[f64]) -> Vec<f64> {
    let lagr = |x: &[f64], v: &[f64]| {
        let f = field.at(x).eval_unchecked(v);
        0.5 * f * f
    };
    let h = FD_H * (1.0 + norm2(u));
    let mut grad_x = [0.0; 2];
    for i in 0..2 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        grad_x[i] = (lagr(&xp, u) - lagr(&xm, u)) / (2.0 * h);
    }
    // Velocity Hessian.
    let mut hess = [[0.0; 2]; 2];
    let l0 = lagr(x, u);
    for i in 0..2 {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[i] += h;
        um[i] -= h;
        hess[i][i] = (lagr(x, &up) - 2.0 * l0 + lagr(x, &um)) / (h * h);
    }
    {
        let mut upp = u.to_vec();
        let mut upm = u.to_vec();
        let mut ump = u.to_vec();
        let mut umm = u.to_vec();
        upp[0] += h;
        upp[1] += h;
        upm[0] += h;
        upm[1] -= h;
        ump[0] -= h;
        ump[1] += h;
        umm[0] -= h;
        umm[1] -= h;
        let cross =
            (lagr(x, &upp) - lagr(x, &upm) - lagr(x, &ump) + lagr(x, &umm)) / (4.0 * h * h);
        hess[0][1] = cross;
        hess[1][0] = cross;
    }
    // Mixed ∂²L/∂v∂x applied to u: d/dxj (∂L/∂vi) uj.
    let mut mixed = [0.0; 2];
    for i in 0..2 {
        let mut acc = 0.0;
        for j in 0..2 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let dv = |xx: &[f64]| {
                let mut up = u.to_vec();
                let mut um = u.to_vec();
                up[i] += h;
                um[i] -= h;
                (lagr(xx, &up) - lagr(xx, &um)) / (2.0 * h)
            };
            acc += (dv(&xp) - dv(&xm)) / (2.0 * h) * u[j];
        }
        mixed[i] = acc;
    }
    // 2x2 solve.
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    let rhs = [grad_x[0] - mixed[0], grad_x[1] - mixed[1]];
    if det.abs() < 1e-12 {
        return vec![0.0, 0.0];
    }
    vec![
        (hess[1][1] * rhs[0] - hess[0][1] * rhs[1]) / det,
        (-hess[1][0] * rhs[0] + hess[0][0] * rhs[1]) / det,
    ]
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

/// An exponential chart: center, certified radius, frame columns (ambient ×
/// intrinsic), the fiber norm at the center expressed in frame coordinates,
/// and the equivalence constant against the euclidean norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartData {
    pub center: Point,
    pub radius: f64,
    /// The (1+r) of the construction: certified chart distortion bound.
    pub bilip_constant: f64,
    pub chart_norm: MinkowskiNorm,
    /// Cᵢ with (1/Cᵢ)‖v‖ᵢ ≤ |v|₂ ≤ Cᵢ‖v‖ᵢ.
    pub equiv_constant: f64,
    /// Frame columns: chart coordinates → ambient tangent coordinates.
    pub frame: Vec<Vec<f64>>,
}

impl ChartData {
    /// Chart coordinates of x (inverse exponential through the frame).
    pub fn to_chart(&self, spec: &ManifoldSpec, x: &[f64]) -> Option<Vec<f64>> {
        match &spec.kind {
            ManifoldKind::Sphere2 { radius } => {
                let log = sphere_log(*radius, &self.center, x)?;
                Some(vec![dot(&log, &self.frame[0]), dot(&log, &self.frame[1])])
            }
            ManifoldKind::FlatTorus2 { .. } => {
                let d = spec.displacement(&self.center, x);
                let c = spec.conformal_factor(&self.center);
                Some(vec![c * d[0], c * d[1]])
            }
            _ => Some(spec.displacement(&self.center, x)),
        }
    }

    /// Manifold point of chart coordinates v.
    pub fn from_chart(&self, spec: &ManifoldSpec, v: &[f64]) -> Point {
        match &spec.kind {
            ManifoldKind::Sphere2 { radius } => {
                let amb: Vec<f64> = (0..3)
                    .map(|i| v[0] * self.frame[0][i] + v[1] * self.frame[1][i])
                    .collect();
                sphere_exp(*radius, &self.center, &amb)
            }
            ManifoldKind::FlatTorus2 { .. } => {
                let c = spec.conformal_factor(&self.center);
                spec.wrap(&[self.center[0] + v[0] / c, self.center[1] + v[1] / c])
            }
            _ => self.center.iter().zip(v).map(|(c, vi)| c + vi).collect(),
        }
    }

    pub fn chart_norm_value(&self, v: &[f64]) -> f64 {
        self.chart_norm.eval_unchecked(v)
    }

    /// Whether x lies in the chart ball (chart-coordinate membership).
    pub fn contains(&self, spec: &ManifoldSpec, x: &[f64]) -> bool {
        match self.to_chart(spec, x) {
            Some(v) => self.chart_norm_value(&v) < self.radius,
            None => false,
        }
    }
}

/// Fiber norm of T_x expressed in the chart's frame coordinates: exact for
/// translation-invariant and conformal kinds, the center norm (curvature-
/// order error) on the sphere.
pub fn chart_fiber_norm(spec: &ManifoldSpec, chart: &ChartData, x: &[f64]) -> MinkowskiNorm {
    match &spec.kind {
        ManifoldKind::Euclidean { norm, .. } => norm.clone(),
        ManifoldKind::Sphere2 { .. } => MinkowskiNorm::euclidean(2),
        ManifoldKind::FlatTorus2 { .. } => {
            let s = spec.conformal_factor(x) / spec.conformal_factor(&chart.center);
            MinkowskiNorm::weighted_lp(2, 2.0, vec![s * s, s * s])
        }
        ManifoldKind::FinslerPlane { field, .. } => field.at(x),
    }
}

/// Build the chart at `center` with the given radius and distortion tag.
/// The frame is orthonormal for the metric at the center on Riemannian
/// kinds and the coordinate frame on Finsler kinds.
pub fn make_chart(spec: &ManifoldSpec, center: &[f64], radius: f64, bilip: f64) -> ChartData {
    let (frame, chart_norm): (Vec<Vec<f64>>, MinkowskiNorm) = match &spec.kind {
        ManifoldKind::Euclidean { dim, norm, .. } => {
            let mut frame = Vec::new();
            for i in 0..*dim {
                let mut col = vec![0.0; *dim];
                col[i] = 1.0;
                frame.push(col);
            }
            (frame, norm.clone())
        }
        ManifoldKind::Sphere2 { .. } => {
            let p = center;
            let pn = norm2(p);
            let phat: Vec<f64> = p.iter().map(|c| c / pn).collect();
            // Axis least aligned with the center seeds the tangent frame.
            let k = (0..3)
                .min_by(|&a, &b| phat[a].abs().partial_cmp(&phat[b].abs()).unwrap())
                .unwrap();
            let mut e = vec![0.0; 3];
            e[k] = 1.0;
            let proj = dot(&e, &phat);
            let mut t1: Vec<f64> = e.iter().zip(&phat).map(|(ei, pi)| ei - proj * pi).collect();
            let t1n = norm2(&t1);
            for c in t1.iter_mut() {
                *c /= t1n;
            }
            let t2 = vec![
                phat[1] * t1[2] - phat[2] * t1[1],
                phat[2] * t1[0] - phat[0] * t1[2],
                phat[0] * t1[1] - phat[1] * t1[0],
            ];
            (vec![t1, t2], MinkowskiNorm::euclidean(2))
        }
        ManifoldKind::FlatTorus2 { .. } => {
            let c = spec.conformal_factor(center);
            (
                vec![vec![1.0 / c, 0.0], vec![0.0, 1.0 / c]],
                MinkowskiNorm::euclidean(2),
            )
        }
        ManifoldKind::FinslerPlane { field, .. } => (
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            field.at(center),
        ),
    };
    let equiv_constant = equivalence_constant(&chart_norm);
    ChartData {
        center: center.to_vec(),
        radius,
        bilip_constant: bilip,
        chart_norm,
        equiv_constant,
        frame,
    }
}

/// Cᵢ = max(sup ‖u‖ᵢ, sup 1/‖u‖ᵢ) over euclidean unit directions, inflated
/// slightly so the sampled two-sided bound holds out of sample.
fn equivalence_constant(norm: &MinkowskiNorm) -> f64 {
    let dim = norm.dim;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    if dim == 2 {
        let m = 2048;
        for i in 0..m {
            let th = std::f64::consts::TAU * i as f64 / m as f64;
            let v = [th.cos(), th.sin()];
            let f = norm.eval_unchecked(&v);
            lo = lo.min(f);
            hi = hi.max(f);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
        for i in 0..dim {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            let f = norm.eval_unchecked(&v);
            lo = lo.min(f);
            hi = hi.max(f);
        }
        for _ in 0..8192 {
            let v = crate::solve::random_unit(&mut rng, dim);
            let f = norm.eval_unchecked(&v);
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    (hi.max(1.0 / lo) * 1.001).max(1.0)
}

// ---------------------------------------------------------------------------
// Deng–Hou radius search
// ---------------------------------------------------------------------------

/// Search the largest lattice radius r = hint·2⁻ʲ (j = 0..20) whose chart is
/// (1+ε)-biLipschitz on `budget` sampled pairs. Returns (radius, measured
/// distortion). Deterministic in (spec, x, ε, budget, seed).
pub fn bilipschitz_radius(
    spec: &ManifoldSpec,
    x: &[f64],
    eps: f64,
    budget: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if eps <= 0.0 {
        return Err(FinslerError::InvalidInput("ε must be positive".into()));
    }
    let hint = spec.radius_hint();
    for j in 0..=20 {
        let r = hint * 0.5_f64.powi(j);
        // Per-candidate stream: identical pair sets across ε values.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (j as u64).wrapping_mul(0x9E37_79B9));
        if let Some(distortion) = measure_chart_distortion(spec, x, r, budget, &mut rng) {
            if distortion <= 1.0 + eps {
                return Ok((r, distortion));
            }
        }
    }
    Err(FinslerError::SearchFailure(format!(
        "no lattice radius down to {:.3e} achieved distortion 1+{eps}",
        hint * 0.5_f64.powi(20)
    )))
}

/// Max two-sided ratio between manifold distance and chart-norm displacement
/// over sampled pairs in the radius-r chart ball. None when the chart is
/// invalid at this radius (e.g. beyond the sphere log domain).
fn measure_chart_distortion(
    spec: &ManifoldSpec,
    x: &[f64],
    r: f64,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let chart = make_chart(spec, x, r, 1.0);
    let dim = spec.intrinsic_dim();
    let mut worst: f64 = 1.0;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < budget {
        attempts += 1;
        if attempts > budget * 50 {
            return None;
        }
        let u = sample_in_ball(&chart, dim, r, rng)?;
        let w = sample_in_ball(&chart, dim, r, rng)?;
        let dv: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
        let denom = chart.chart_norm_value(&dv);
        if denom < r * 1e-9 {
            continue;
        }
        let a = chart.from_chart(spec, &u);
        let b = chart.from_chart(spec, &w);
        let dm = spec.distance(&a, &b);
        if !dm.is_finite() {
            return None;
        }
        let ratio = dm / denom;
        if ratio <= 0.0 {
            return None;
        }
        worst = worst.max(ratio).max(1.0 / ratio);
        accepted += 1;
    }
    Some(worst)
}

fn sample_in_ball(
    chart: &ChartData,
    dim: usize,
    r: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    // Rejection from the bounding box of the chart-norm ball.
    let bound = r * chart.equiv_constant;
    for _ in 0..256 {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..bound)).collect();
        if chart.chart_norm_value(&v) < r {
            return Some(v);
        }
    }
    None
}

/// F(γ_t, γ̇_t) drift along an integrated geodesic, for conservation tests.
pub fn geodesic_speed_drift(
    spec: &ManifoldSpec,
    x: &[f64],
    v: &[f64],
    t: f64,
    steps: usize,
) -> Result<f64> {
    let f0 = spec.fiber_norm_value(x, v);
    if f0 <= 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0_f64;
    let checkpoints = 16;
    for i in 1..=checkpoints {
        let ti = t * i as f64 / checkpoints as f64;
        let si = ((steps as f64) * i as f64 / checkpoints as f64).ceil() as usize;
        let si = si.max(16);
        let (pos, vel) = shoot_with_velocity(spec, x, v, ti, si)?;
        let fi = spec.fiber_norm_value(&pos, &vel);
        worst = worst.max((fi - f0).abs() / f0);
    }
    Ok(worst)
}

fn shoot_with_velocity(
    spec: &ManifoldSpec,
    x: &[f64],
    v: &[f64],
    t: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match &spec.kind {
        ManifoldKind::Euclidean { .. } => Ok((
            x.iter().zip(v).map(|(xi, vi)| xi + t * vi).collect(),
            v.to_vec(),
        )),
        ManifoldKind::FlatTorus2 {
            metric: MetricField::Identity,
            ..
        } => {
            let raw: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + t * vi).collect();
            Ok((spec.wrap(&raw), v.to_vec()))
        }
        ManifoldKind::Sphere2 { radius } => {
            let r2 = radius * radius;
            rk4(x, v, t, steps, |p, u| {
                let speed2: f64 = u.iter().map(|c| c * c).sum();
                p.iter().map(|pi| -speed2 / r2 * pi).collect()
            })
        }
        ManifoldKind::FlatTorus2 { .. } => {
            let (p, u) = rk4(x, v, t, steps, |p, u| conformal_accel(spec, p, u))?;
            Ok((spec.wrap(&p), u))
        }
        ManifoldKind::FinslerPlane { field, .. } => {
            rk4(x, v, t, steps, |p, u| finsler_accel(field, p, u))
        }
    }
}
