//! Minkowski norms on finite-dimensional fibers: evaluation, axiom
//! validation, dual norms and parallelogram defects.
//!
//! A Minkowski norm is positively homogeneous, satisfies the triangle
//! inequality, vanishes only at the origin and has a positive-definite
//! Hessian of F² away from 0. Smoothness off the origin cannot be decided
//! from point evaluations, so validation checks a finite-difference proxy:
//! existence and positivity of the Richardson-extrapolated Hessian.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::solve;
use crate::{FinslerError, Result};

/// Norm family. `CustomTable` holds values of the norm on an angular grid
/// of the unit circle (dim 2 only) and extends 1-homogeneously with linear
/// interpolation in angle, so dual norms round-trip as first-class norms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum NormFamily {
    Euclidean,
    WeightedLp { p: f64, weights: Vec<f64> },
    QuarticBlend { theta: f64 },
    CustomTable { values: Vec<f64> },
}

/// A norm functional on one chart fiber.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MinkowskiNorm {
    pub dim: usize,
    pub family: NormFamily,
    pub reversible: bool,
}

impl MinkowskiNorm {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            dim,
            family: NormFamily::Euclidean,
            reversible: true,
        }
    }

    pub fn weighted_lp(dim: usize, p: f64, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), dim);
        Self {
            dim,
            family: NormFamily::WeightedLp { p, weights },
            reversible: true,
        }
    }

    pub fn lp(dim: usize, p: f64) -> Self {
        Self::weighted_lp(dim, p, vec![1.0; dim])
    }

    /// Blend of the Euclidean fourth power with the coordinate quartic:
    /// F(v) = ((1−θ)|v|₂⁴ + θ·Σvᵢ⁴)^(1/4). Strongly convex for θ ∈ [0,1).
    pub fn quartic_blend(dim: usize, theta: f64) -> Self {
        Self {
            dim,
            family: NormFamily::QuarticBlend { theta },
            reversible: true,
        }
    }

    pub fn custom_table(values: Vec<f64>, reversible: bool) -> Self {
        Self {
            dim: 2,
            family: NormFamily::CustomTable { values },
            reversible,
        }
    }

    /// Evaluate the norm without a dimension check (hot path).
    pub fn eval_unchecked(&self, v: &[f64]) -> f64 {
        match &self.family {
            NormFamily::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormFamily::WeightedLp { p, weights } => {
                if p.is_infinite() {
                    v.iter()
                        .zip(weights)
                        .map(|(x, w)| w * x.abs())
                        .fold(0.0, f64::max)
                } else if *p == 1.0 {
                    v.iter().zip(weights).map(|(x, w)| w * x.abs()).sum()
                } else {
                    v.iter()
                        .zip(weights)
                        .map(|(x, w)| w * x.abs().powf(*p))
                        .sum::<f64>()
                        .powf(1.0 / p)
                }
            }
            NormFamily::QuarticBlend { theta } => {
                let sq: f64 = v.iter().map(|x| x * x).sum();
                let quart: f64 = v.iter().map(|x| x.powi(4)).sum();
                ((1.0 - theta) * sq * sq + theta * quart).powf(0.25)
            }
            NormFamily::CustomTable { values } => {
                let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                let theta = v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU);
                let m = values.len();
                let t = theta / std::f64::consts::TAU * m as f64;
                let i = (t.floor() as usize) % m;
                let frac = t - t.floor();
                r * (values[i] * (1.0 - frac) + values[(i + 1) % m] * frac)
            }
        }
    }
}

/// Evaluate F(v). Exactly 0 at v = 0.
pub fn eval_norm(norm: &MinkowskiNorm, v: &[f64]) -> Result<f64> {
    if v.len() != norm.dim {
        return Err(FinslerError::DimensionMismatch {
            expected: norm.dim,
            got: v.len(),
        });
    }
    if v.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    Ok(norm.eval_unchecked(v))
}

/// Which norm axiom a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    PositiveDefiniteness,
    Triangle,
    Homogeneity,
    Reversibility,
    StrongConvexity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub sample: Vec<f64>,
    pub axiom: Axiom,
    pub residual: f64,
}

/// Result of sampling-based axiom validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub min_hessian_eigenvalue: f64,
    pub violations: Vec<AxiomViolation>,
    pub passed: bool,
}

/// Tolerances for [`validate_minkowski_with`]. The strong-convexity margin
/// is not quantified anywhere authoritative, so it stays caller-configurable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub homogeneity_rel_tol: f64,
    pub triangle_abs_tol: f64,
    pub positive_definite_tol: f64,
    pub strong_convexity_threshold: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            homogeneity_rel_tol: 1e-9,
            triangle_abs_tol: 1e-9,
            positive_definite_tol: 1e-12,
            strong_convexity_threshold: 1e-6,
        }
    }
}

/// Validate norm axioms on seeded random samples plus canonical probes
/// (axes and diagonals). Deterministic for identical (norm, count, seed).
pub fn validate_minkowski(norm: &MinkowskiNorm, sample_count: usize, seed: u64) -> ConvexityReport {
    validate_minkowski_with(norm, sample_count, seed, &ValidateConfig::default())
}

pub fn validate_minkowski_with(
    norm: &MinkowskiNorm,
    sample_count: usize,
    seed: u64,
    cfg: &ValidateConfig,
) -> ConvexityReport {
    assert!(sample_count >= 1);
    let dim = norm.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut min_eig = f64::INFINITY;

    if norm.eval_unchecked(&vec![0.0; dim]) != 0.0 {
        violations.push(AxiomViolation {
            sample: vec![0.0; dim],
            axiom: Axiom::PositiveDefiniteness,
            residual: norm.eval_unchecked(&vec![0.0; dim]),
        });
    }

    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(sample_count + 3 * dim);
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = sign;
            samples.push(v);
        }
    }
    samples.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    let mut alt = vec![0.0; dim];
    for (i, a) in alt.iter_mut().enumerate() {
        *a = if i % 2 == 0 { 1.0 } else { -1.0 } / (dim as f64).sqrt();
    }
    samples.push(alt);
    while samples.len() < sample_count + 2 * dim + 2 {
        let v = solve::random_unit(&mut rng, dim);
        let scale = rng.gen_range(0.1..3.0);
        samples.push(v.iter().map(|x| x * scale).collect());
    }

    for v in &samples {
        let fv = norm.eval_unchecked(v);
        let vmag = v.iter().map(|x| x * x).sum::<f64>().sqrt();

        if fv <= cfg.positive_definite_tol * vmag.max(1.0) {
            violations.push(AxiomViolation {
                sample: v.clone(),
                axiom: Axiom::PositiveDefiniteness,
                residual: fv,
            });
            // Hessian and homogeneity probes are meaningless at a
            // degenerate direction.
            continue;
        }

        let lambda = rng.gen_range(0.0..4.0);
        let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
        let hom_res = (norm.eval_unchecked(&scaled) - lambda * fv).abs();
        if hom_res > cfg.homogeneity_rel_tol * (lambda * fv).max(1.0) {
            violations.push(AxiomViolation {
                sample: v.clone(),
                axiom: Axiom::Homogeneity,
                residual: hom_res,
            });
        }

        let w = solve::random_unit(&mut rng, dim);
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let tri_res = norm.eval_unchecked(&sum) - fv - norm.eval_unchecked(&w);
        if tri_res > cfg.triangle_abs_tol {
            violations.push(AxiomViolation {
                sample: v.clone(),
                axiom: Axiom::Triangle,
                residual: tri_res,
            });
        }

        if norm.reversible {
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let rev_res = (norm.eval_unchecked(&neg) - fv).abs();
            if rev_res > cfg.homogeneity_rel_tol * fv.max(1.0) {
                violations.push(AxiomViolation {
                    sample: v.clone(),
                    axiom: Axiom::Reversibility,
                    residual: rev_res,
                });
            }
        }

        let eig = min_hessian_eig_f2(norm, v);
        if eig < min_eig {
            min_eig = eig;
        }
        if eig <= cfg.strong_convexity_threshold {
            violations.push(AxiomViolation {
                sample: v.clone(),
                axiom: Axiom::StrongConvexity,
                residual: eig,
            });
        }
    }

    let passed = violations.is_empty() && min_eig > 0.0;
    ConvexityReport {
        min_hessian_eigenvalue: min_eig,
        violations,
        passed,
    }
}

/// Smallest eigenvalue of the finite-difference Hessian of F² at v,
/// central differences at h and h/2 with Richardson extrapolation.
fn min_hessian_eig_f2(norm: &MinkowskiNorm, v: &[f64]) -> f64 {
    let vmag = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let h = 1e-4 * vmag.max(1.0);
    let coarse = hessian_f2(norm, v, h);
    let fine = hessian_f2(norm, v, h / 2.0);
    let dim = v.len();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = (4.0 * fine[(i, j)] - coarse[(i, j)]) / 3.0;
        }
    }
    let eig = m.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn hessian_f2(norm: &MinkowskiNorm, v: &[f64], h: f64) -> DMatrix<f64> {
    let dim = v.len();
    let f2 = |x: &[f64]| {
        let f = norm.eval_unchecked(x);
        f * f
    };
    let f0 = f2(v);
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let mut vp = v.to_vec();
        let mut vm = v.to_vec();
        vp[i] += h;
        vm[i] -= h;
        m[(i, i)] = (f2(&vp) - 2.0 * f0 + f2(&vm)) / (h * h);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut vpp = v.to_vec();
            let mut vpm = v.to_vec();
            let mut vmp = v.to_vec();
            let mut vmm = v.to_vec();
            vpp[i] += h;
            vpp[j] += h;
            vpm[i] += h;
            vpm[j] -= h;
            vmp[i] -= h;
            vmp[j] += h;
            vmm[i] -= h;
            vmm[j] -= h;
            let cross = (f2(&vpp) - f2(&vpm) - f2(&vmp) + f2(&vmm)) / (4.0 * h * h);
            m[(i, j)] = cross;
            m[(j, i)] = cross;
        }
    }
    m
}

/// Dual norm with its convergence certificate.
#[derive(Debug, Clone)]
pub struct DualResult {
    pub value: f64,
    /// Final pattern step: bound on how much refinement was still moving.
    pub residual: f64,
    /// Attaining vector on the unit F-sphere, so `value` is a certified
    /// lower bound of the supremum.
    pub maximizer: Vec<f64>,
}

/// F*(ω) = sup{⟨ω,v⟩ : F(v) ≤ 1}, by coarse unit-sphere sampling followed
/// by pattern ascent with projection back to the unit F-sphere.
pub fn dual_norm(norm: &MinkowskiNorm, omega: &[f64]) -> Result<f64> {
    dual_norm_detailed(norm, omega).map(|r| r.value)
}

pub fn dual_norm_detailed(norm: &MinkowskiNorm, omega: &[f64]) -> Result<DualResult> {
    if omega.len() != norm.dim {
        return Err(FinslerError::DimensionMismatch {
            expected: norm.dim,
            got: omega.len(),
        });
    }
    check_positive_definite_spot(norm)?;
    if omega.iter().all(|x| *x == 0.0) {
        return Ok(DualResult {
            value: 0.0,
            residual: 0.0,
            maximizer: vec![0.0; norm.dim],
        });
    }
    // Deterministic sampling: the op takes no seed, so a fixed stream is used.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let out = solve::sphere_maximize(
        norm.dim,
        |u| {
            let fu = norm.eval_unchecked(u);
            if fu <= 0.0 {
                return f64::NEG_INFINITY;
            }
            omega.iter().zip(u).map(|(o, x)| o * x).sum::<f64>() / fu
        },
        4096,
        8,
        1e-9,
        &mut rng,
    );
    if !(out.final_step < 1e-6) || !out.value.is_finite() {
        return Err(FinslerError::Numeric(format!(
            "dual-norm ascent did not converge: residual {} value {}",
            out.final_step, out.value
        )));
    }
    let fu = norm.eval_unchecked(&out.point);
    let maximizer: Vec<f64> = out.point.iter().map(|x| x / fu).collect();
    Ok(DualResult {
        value: out.value,
        residual: out.final_step,
        maximizer,
    })
}

fn check_positive_definite_spot(norm: &MinkowskiNorm) -> Result<()> {
    for i in 0..norm.dim {
        let mut v = vec![0.0; norm.dim];
        v[i] = 1.0;
        if norm.eval_unchecked(&v) <= 1e-12 {
            return Err(FinslerError::InvalidInput(format!(
                "norm is degenerate along axis {i}: F(e_{i}) = {}",
                norm.eval_unchecked(&v)
            )));
        }
        v[i] = -1.0;
        if norm.eval_unchecked(&v) <= 1e-12 {
            return Err(FinslerError::InvalidInput(format!(
                "norm is degenerate along axis -{i}"
            )));
        }
    }
    Ok(())
}

/// Closed-form dual where the family admits one. Keeps quotient solves exact
/// for the Euclidean and weighted-ℓp families; other families fall back to
/// the numeric ascent.
pub fn analytic_dual(norm: &MinkowskiNorm) -> Option<MinkowskiNorm> {
    match &norm.family {
        NormFamily::Euclidean => Some(MinkowskiNorm::euclidean(norm.dim)),
        NormFamily::WeightedLp { p, weights } => {
            let dual = if *p == 1.0 {
                MinkowskiNorm::weighted_lp(
                    norm.dim,
                    f64::INFINITY,
                    weights.iter().map(|w| 1.0 / w).collect(),
                )
            } else if p.is_infinite() {
                MinkowskiNorm::weighted_lp(norm.dim, 1.0, weights.iter().map(|w| 1.0 / w).collect())
            } else {
                let q = p / (p - 1.0);
                MinkowskiNorm::weighted_lp(
                    norm.dim,
                    q,
                    weights.iter().map(|w| w.powf(-q / p)).collect(),
                )
            };
            Some(dual)
        }
        _ => None,
    }
}

/// Realize the dual norm as a table-backed first-class norm (dim 2).
pub fn dual_as_table(norm: &MinkowskiNorm, resolution: usize) -> Result<MinkowskiNorm> {
    if norm.dim != 2 {
        return Err(FinslerError::InvalidInput(
            "table-backed dual norms support dim 2 only".into(),
        ));
    }
    let mut values = Vec::with_capacity(resolution);
    for i in 0..resolution {
        let theta = std::f64::consts::TAU * i as f64 / resolution as f64;
        let u = [theta.cos(), theta.sin()];
        values.push(dual_norm(norm, &u)?);
    }
    Ok(MinkowskiNorm::custom_table(values, norm.reversible))
}

/// F(v+w)² + F(v−w)² − 2F(v)² − 2F(w)². Vanishes identically iff the norm
/// comes from an inner product.
pub fn parallelogram_defect(norm: &MinkowskiNorm, v: &[f64], w: &[f64]) -> Result<f64> {
    if v.len() != norm.dim || w.len() != norm.dim {
        return Err(FinslerError::DimensionMismatch {
            expected: norm.dim,
            got: if v.len() != norm.dim { v.len() } else { w.len() },
        });
    }
    let sum: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
    let diff: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
    let fs = norm.eval_unchecked(&sum);
    let fd = norm.eval_unchecked(&diff);
    let fv = norm.eval_unchecked(v);
    let fw = norm.eval_unchecked(w);
    Ok(fs * fs + fd * fd - 2.0 * fv * fv - 2.0 * fw * fw)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force dual norm over many unit-sphere samples; independent of
    /// the ascent path used by `dual_norm`.
    fn brute_dual(norm: &MinkowskiNorm, omega: &[f64], samples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(424242);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..samples {
            let u = solve::random_unit(&mut rng, norm.dim);
            let fu = norm.eval_unchecked(&u);
            let val = omega.iter().zip(&u).map(|(o, x)| o * x).sum::<f64>() / fu;
            if val > best {
                best = val;
            }
        }
        best
    }

    #[test]
    fn eval_euclidean_pythagorean() {
        let n = MinkowskiNorm::euclidean(2);
        assert_eq!(eval_norm(&n, &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn eval_zero_is_exactly_zero() {
        for n in [
            MinkowskiNorm::euclidean(3),
            MinkowskiNorm::lp(2, 4.0),
            MinkowskiNorm::quartic_blend(2, 0.5),
        ] {
            let z = vec![0.0; n.dim];
            assert_eq!(eval_norm(&n, &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn eval_lp4_diagonal() {
        // (1^4 + 1^4)^(1/4) = 2^(1/4)
        let n = MinkowskiNorm::lp(2, 4.0);
        let got = eval_norm(&n, &[1.0, 1.0]).unwrap();
        assert!((got - 1.189_207_115_002_721).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn eval_dimension_mismatch() {
        let n = MinkowskiNorm::euclidean(2);
        assert!(matches!(
            eval_norm(&n, &[1.0, 2.0, 3.0]),
            Err(FinslerError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn validate_euclidean_passes_with_hessian_two() {
        let n = MinkowskiNorm::euclidean(2);
        let rep = validate_minkowski(&n, 1000, 42);
        assert!(rep.passed, "violations: {:?}", rep.violations);
        assert!(
            (rep.min_hessian_eigenvalue - 2.0).abs() < 1e-5,
            "min eig {}",
            rep.min_hessian_eigenvalue
        );
    }

    #[test]
    fn validate_quartic_blend_passes() {
        let n = MinkowskiNorm::quartic_blend(2, 0.5);
        let rep = validate_minkowski(&n, 1000, 42);
        assert!(rep.passed, "violations: {}", rep.violations.len());
        assert!(rep.min_hessian_eigenvalue > 0.5);
    }

    #[test]
    fn validate_degenerate_table_fails_positive_definiteness() {
        // |v1| as an angular table: vanishes at the (0, ±1) axis probes.
        let m = 64;
        let values: Vec<f64> = (0..m)
            .map(|i| (std::f64::consts::TAU * i as f64 / m as f64).cos().abs())
            .collect();
        let n = MinkowskiNorm::custom_table(values, true);
        let rep = validate_minkowski(&n, 200, 7);
        assert!(!rep.passed);
        assert!(rep
            .violations
            .iter()
            .any(|v| v.axiom == Axiom::PositiveDefiniteness
                && v.sample[0].abs() < 1e-12
                && v.sample[1].abs() == 1.0));
    }

    #[test]
    fn validate_l1_fails_strong_convexity() {
        let n = MinkowskiNorm::lp(2, 1.0);
        let rep = validate_minkowski(&n, 500, 11);
        assert!(!rep.passed);
        assert!(rep
            .violations
            .iter()
            .any(|v| v.axiom == Axiom::StrongConvexity));
        // Hessian of (|v1|+|v2|)^2 away from the axes is [[2,±2],[±2,2]]:
        // a zero eigenvalue up to finite-difference noise.
        assert!(rep.min_hessian_eigenvalue.abs() < 1e-5);
    }

    #[test]
    fn validate_is_deterministic() {
        let n = MinkowskiNorm::lp(3, 4.0);
        let a = validate_minkowski(&n, 300, 99);
        let b = validate_minkowski(&n, 300, 99);
        assert_eq!(a.min_hessian_eigenvalue, b.min_hessian_eigenvalue);
        assert_eq!(a.violations.len(), b.violations.len());
        assert_eq!(a.passed, b.passed);
    }

    #[test]
    fn dual_euclidean_self_dual() {
        let n = MinkowskiNorm::euclidean(2);
        let got = dual_norm(&n, &[3.0, 4.0]).unwrap();
        assert!((got - 5.0).abs() < 1e-8, "got {got}");
    }

    #[test]
    fn dual_l1_is_linf() {
        let n = MinkowskiNorm::lp(2, 1.0);
        let got = dual_norm(&n, &[2.0, -5.0]).unwrap();
        assert!((got - 5.0).abs() < 1e-8, "got {got}");
    }

    #[test]
    fn dual_lp4_matches_brute_force_and_analytic() {
        let n = MinkowskiNorm::lp(2, 4.0);
        let omega = [1.0, 1.0];
        let got = dual_norm(&n, &omega).unwrap();
        // analytic: ||omega||_{4/3} = 2^{3/4}
        let expect = 1.681_792_830_507_429;
        assert!((got - expect).abs() < 1e-8, "got {got}");
        let brute = brute_dual(&n, &omega, 1_000_000);
        assert!(brute <= got + 1e-9, "brute {brute} exceeded ascent {got}");
        assert!((brute - expect).abs() < 1e-3);
    }

    #[test]
    fn dual_zero_covector() {
        let n = MinkowskiNorm::lp(3, 4.0);
        assert_eq!(dual_norm(&n, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dual_norm_axioms_on_samples() {
        let n = MinkowskiNorm::quartic_blend(2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = solve::random_unit(&mut rng, 2);
            let b = solve::random_unit(&mut rng, 2);
            let da = dual_norm(&n, &a).unwrap();
            let db = dual_norm(&n, &b).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let dsum = dual_norm(&n, &sum).unwrap();
            assert!(dsum <= da + db + 1e-6);
            let lam = rng.gen_range(0.1..3.0);
            let scaled: Vec<f64> = a.iter().map(|x| x * lam).collect();
            let dscaled = dual_norm(&n, &scaled).unwrap();
            assert!((dscaled - lam * da).abs() < 1e-6 * (lam * da).max(1.0));
        }
    }

    #[test]
    fn biduality_roundtrip_dim2() {
        for n in [
            MinkowskiNorm::euclidean(2),
            MinkowskiNorm::lp(2, 4.0),
            MinkowskiNorm::weighted_lp(2, 2.0, vec![1.0, 2.5]),
        ] {
            let dual = dual_as_table(&n, 2048).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            for _ in 0..100 {
                let v = solve::random_unit(&mut rng, 2);
                let direct = n.eval_unchecked(&v);
                let bidual = dual_norm(&dual, &v).unwrap();
                assert!(
                    (direct - bidual).abs() < 1e-4 * direct.max(1.0),
                    "direct {direct} bidual {bidual}"
                );
            }
        }
    }

    #[test]
    fn analytic_dual_weighted() {
        let n = MinkowskiNorm::weighted_lp(2, 4.0, vec![2.0, 0.5]);
        let d = analytic_dual(&n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let omega = solve::random_unit(&mut rng, 2);
            let closed = eval_norm(&d, &omega).unwrap();
            let numeric = dual_norm(&n, &omega).unwrap();
            assert!(
                (closed - numeric).abs() < 1e-7 * closed.max(1.0),
                "closed {closed} numeric {numeric}"
            );
        }
    }

    #[test]
    fn parallelogram_euclidean_vanishes() {
        let n = MinkowskiNorm::euclidean(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = solve::random_unit(&mut rng, 3);
            let w = solve::random_unit(&mut rng, 3);
            let d = parallelogram_defect(&n, &v, &w).unwrap();
            assert!(d.abs() < 1e-12, "defect {d}");
        }
    }

    #[test]
    fn parallelogram_zero_w() {
        let n = MinkowskiNorm::lp(2, 4.0);
        let d = parallelogram_defect(&n, &[0.3, -0.7], &[0.0, 0.0]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn parallelogram_lp4_unit_axes() {
        // F(1,1)^2 + F(1,-1)^2 - 2 - 2 = 2*sqrt(2) - 4
        let n = MinkowskiNorm::lp(2, 4.0);
        let d = parallelogram_defect(&n, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - (2.0 * 2.0_f64.sqrt() - 4.0)).abs() < 1e-12, "{d}");
    }

    #[test]
    fn parallelogram_separates_families() {
        // Non-inner-product families must show a nonzero defect somewhere.
        for n in [
            MinkowskiNorm::lp(2, 1.0),
            MinkowskiNorm::lp(2, 4.0),
            MinkowskiNorm::quartic_blend(2, 0.5),
        ] {
            let d = parallelogram_defect(&n, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
            assert!(d.abs() > 1e-9, "family {:?} looked euclidean", n.family);
        }
        // theta = 0 blend collapses to the euclidean norm.
        let n0 = MinkowskiNorm::quartic_blend(2, 0.0);
        let d = parallelogram_defect(&n0, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn norm_spec_serialization_roundtrip() {
        let n = MinkowskiNorm::weighted_lp(3, 4.0, vec![1.0, 2.0, 0.5]);
        let text = serde_json::to_string(&n).unwrap();
        let back: MinkowskiNorm = serde_json::from_str(&text).unwrap();
        assert_eq!(n, back);
    }
}
