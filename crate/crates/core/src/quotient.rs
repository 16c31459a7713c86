//! Finite-dimensional fiber model of the quotient projection and its
//! adjoint isometric embedding: a normed space (V, F), a subspace K of its
//! dual, quotient norms with minimal lifts, and the inclusion K⊥ ↪ V whose
//! abstract and concrete norms coincide.
//!
//! Every class norm is computed twice, by two independent routes:
//!
//! - lower route: the quotient norm of ω + K equals the support value
//!   sup{⟨ω,v⟩ : v ∈ K⊥, F(v) ≤ 1}, a pattern ascent over the restricted
//!   norm's unit sphere (a certified lower bound);
//! - upper route: min over t of F*(ω + Σtᵢκᵢ), a pattern descent whose
//!   argmin is the minimal lift (any coset member's dual norm is an upper
//!   bound).
//!
//! The two meet by finite-dimensional strong duality; their residual is the
//! reported primal–dual gap and certifies both solves per instance.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minkowski::{analytic_dual, eval_norm, validate_minkowski, Axiom, MinkowskiNorm};
use crate::solve;
use crate::{FinslerError, Result};

/// Certification target for lift attainment and duality gaps.
const GAP_TOL: f64 = 1e-8;

/// A normed space with a dual subspace: the fiber model instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotientInstance {
    pub norm: MinkowskiNorm,
    /// Basis covectors of K ⊆ V* (may be empty for the trivial quotient).
    pub k_basis: Vec<Vec<f64>>,
}

impl QuotientInstance {
    pub fn new(norm: MinkowskiNorm, k_basis: Vec<Vec<f64>>) -> Result<Self> {
        let inst = Self { norm, k_basis };
        inst.validate()?;
        Ok(inst)
    }

    /// Norm axioms i–iii (positive definiteness, triangle, homogeneity)
    /// plus linear independence of the K basis. Strong convexity is not
    /// required: the ℓ¹ family is in scope for the quotient model and its
    /// nonsmoothness is exactly what the pattern solvers are for.
    pub fn validate(&self) -> Result<()> {
        let n = self.norm.dim;
        if self.k_basis.len() >= n + 1 {
            return Err(FinslerError::InvalidInput(format!(
                "K basis has {} covectors in dimension {n}",
                self.k_basis.len()
            )));
        }
        for kappa in &self.k_basis {
            if kappa.len() != n {
                return Err(FinslerError::DimensionMismatch {
                    expected: n,
                    got: kappa.len(),
                });
            }
        }
        if gram_schmidt(&self.k_basis, n).len() != self.k_basis.len() {
            return Err(FinslerError::InvalidInput(
                "K basis covectors are linearly dependent".into(),
            ));
        }
        let report = validate_minkowski(&self.norm, 64, 0x9a17);
        for v in &report.violations {
            if matches!(
                v.axiom,
                Axiom::PositiveDefiniteness | Axiom::Triangle | Axiom::Homogeneity
            ) {
                return Err(FinslerError::InvalidInput(format!(
                    "instance norm violates {:?} (residual {:.3e})",
                    v.axiom, v.residual
                )));
            }
        }
        Ok(())
    }

    /// Deterministic orthonormal basis of K⊥ ⊆ V (euclidean inner product).
    pub fn annihilator_basis(&self) -> Vec<Vec<f64>> {
        complement_basis(&self.k_basis, self.norm.dim)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt keeping only vectors with residual above 1e-10.
fn gram_schmidt(vectors: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let p = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= p * bi;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-10 {
            for wi in w.iter_mut() {
                *wi /= norm;
            }
            basis.push(w);
        }
    }
    let _ = dim;
    basis
}

/// Orthonormal basis of the orthogonal complement of span(vectors), built
/// deterministically from coordinate vectors.
fn complement_basis(vectors: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut basis = gram_schmidt(vectors, dim);
    let span = basis.len();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        for b in &basis {
            let p = dot(&e, b);
            for (ei, bi) in e.iter_mut().zip(b) {
                *ei -= p * bi;
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm > 1e-8 {
            for ei in e.iter_mut() {
                *ei /= norm;
            }
            basis.push(e);
        }
    }
    basis.split_off(span)
}

// ---------------------------------------------------------------------------
// Support values (dual-norm ascents with warm starts)
// ---------------------------------------------------------------------------

/// sup{⟨w, v⟩ : v ∈ span(basis), F(v) ≤ 1} — the dual norm of the
/// restricted norm. Exact for euclidean-type fibers (a quadratic solve)
/// and for ℓ¹ fibers (section extreme points have ≤ k+1 = n − q + 1
/// nonzero coordinates); pattern ascent otherwise. Returns the attained
/// value and its witness on the unit F-sphere, so the value is a certified
/// lower bound in every branch.
fn subspace_support(
    norm: &MinkowskiNorm,
    basis: &[Vec<f64>],
    omega: &[f64],
    seed: u64,
) -> (f64, Vec<f64>) {
    use crate::minkowski::NormFamily;
    let q = basis.len();
    let n = norm.dim;
    if q == 0 {
        return (0.0, vec![0.0; n]);
    }
    let c: Vec<f64> = basis.iter().map(|b| dot(omega, b)).collect();
    if c.iter().all(|x| *x == 0.0) {
        return (0.0, vec![0.0; n]);
    }
    let expand = |s: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (bi, si) in basis.iter().zip(s) {
            for (vj, bj) in v.iter_mut().zip(bi) {
                *vj += si * bj;
            }
        }
        v
    };
    let finish = |v: Vec<f64>| -> (f64, Vec<f64>) {
        let f = norm.eval_unchecked(&v);
        if f <= 0.0 {
            return (0.0, vec![0.0; n]);
        }
        let unit: Vec<f64> = v.iter().map(|x| x / f).collect();
        (dot(omega, &unit), unit)
    };

    match &norm.family {
        NormFamily::Euclidean => finish(expand(&c)),
        NormFamily::WeightedLp { p, weights } if *p == 2.0 => {
            // maximize cᵀs over sᵀ(BᵀWB)s ≤ 1: s* ∝ (BᵀWB)⁻¹c
            let bwb = nalgebra::DMatrix::<f64>::from_fn(q, q, |a, b| {
                (0..n).map(|i| basis[a][i] * weights[i] * basis[b][i]).sum()
            });
            let cv = nalgebra::DVector::<f64>::from_row_slice(&c);
            match bwb.lu().solve(&cv) {
                Some(s) => finish(expand(s.as_slice())),
                None => (0.0, vec![0.0; n]),
            }
        }
        NormFamily::WeightedLp { p, weights } if *p == 1.0 => {
            l1_section_support(n, q, basis, omega, weights)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = solve::sphere_maximize(
                q,
                |s| {
                    let v = expand(s);
                    let f = norm.eval_unchecked(&v);
                    if f <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    c.iter().zip(s).map(|(ci, si)| ci * si).sum::<f64>() / f
                },
                1024,
                6,
                1e-11,
                &mut rng,
            );
            finish(expand(&out.point))
        }
    }
}

/// Exact support value over a subspace section of the weighted ℓ¹ ball.
/// Section extreme points have at most codim+1 nonzero coordinates; every
/// signed support of that size yields a square system (budget plus the
/// annihilating constraints).
fn l1_section_support(
    n: usize,
    q: usize,
    basis: &[Vec<f64>],
    omega: &[f64],
    weights: &[f64],
) -> (f64, Vec<f64>) {
    let codim = n - q;
    // constraints: v orthogonal to the complement of span(basis)
    let constraints = complement_basis(basis, n);
    debug_assert_eq!(constraints.len(), codim);
    let m = (codim + 1).min(n);
    let idx: Vec<usize> = (0..n).collect();
    let mut best = 0.0_f64;
    let mut best_v = vec![0.0; n];
    for support in combinations(&idx, m) {
        for signs in 0..(1u32 << m) {
            // unknowns u_i >= 0 with v_i = sigma_i u_i / w_i on the support
            let mut mat = nalgebra::DMatrix::<f64>::zeros(m, m);
            let mut rhs = nalgebra::DVector::<f64>::zeros(m);
            for (col, &i) in support.iter().enumerate() {
                let sigma = if signs >> col & 1 == 0 { 1.0 } else { -1.0 };
                mat[(0, col)] = 1.0; // budget Σ u = 1
                for (row, cons) in constraints.iter().enumerate() {
                    mat[(row + 1, col)] = cons[i] * sigma / weights[i];
                }
            }
            rhs[0] = 1.0;
            let sol = match mat.lu().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            if sol.iter().any(|u| *u < -1e-12 || !u.is_finite()) {
                continue;
            }
            let mut v = vec![0.0; n];
            let mut value = 0.0;
            for (col, &i) in support.iter().enumerate() {
                let sigma = if signs >> col & 1 == 0 { 1.0 } else { -1.0 };
                let vi = sigma * sol[col].max(0.0) / weights[i];
                v[i] = vi;
                value += omega[i] * vi;
            }
            if value > best {
                best = value;
                best_v = v;
            }
        }
    }
    // renormalize the witness exactly onto the unit sphere
    let f: f64 = best_v
        .iter()
        .zip(weights)
        .map(|(vi, wi)| wi * vi.abs())
        .sum();
    if f > 0.0 {
        let unit: Vec<f64> = best_v.iter().map(|x| x / f).collect();
        let val = dot(omega, &unit);
        (val, unit)
    } else {
        (0.0, best_v)
    }
}

/// Stateful F* evaluator: analytic where available, warm-started pattern
/// ascent otherwise (strongly convex norms have a unique, continuously
/// varying maximizer, so the previous argmax is a valid warm start).
struct SupportEval {
    norm: MinkowskiNorm,
    dual: Option<MinkowskiNorm>,
    last: RefCell<Option<Vec<f64>>>,
}

impl SupportEval {
    fn new(norm: &MinkowskiNorm) -> Self {
        Self {
            norm: norm.clone(),
            dual: analytic_dual(norm),
            last: RefCell::new(None),
        }
    }

    fn eval(&self, omega: &[f64]) -> f64 {
        if let Some(dual) = &self.dual {
            return dual.eval_unchecked(omega);
        }
        let n = self.norm.dim;
        if omega.iter().all(|x| *x == 0.0) {
            return 0.0;
        }
        // After the first call only the previous argmax and the covector
        // direction seed the ascent: the maximizer of a strongly convex
        // norm's support problem moves continuously with ω.
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        let warmed = {
            let last = self.last.borrow();
            if let Some(last) = last.as_ref() {
                candidates.push(last.clone());
                true
            } else {
                false
            }
        };
        if !warmed {
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut e = vec![0.0; n];
                    e[i] = sign;
                    candidates.push(e);
                }
            }
        }
        let on = dot(omega, omega).sqrt();
        candidates.push(omega.iter().map(|x| x / on).collect());
        let mut best: Option<solve::SearchOutcome> = None;
        for cand in candidates {
            let mut h = |u: &[f64]| {
                let f = self.norm.eval_unchecked(u);
                if f <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                dot(omega, u) / f
            };
            let v0 = h(&cand);
            let out = solve::refine_on_sphere(&mut h, cand, v0, 1e-11);
            if best.as_ref().map_or(true, |b| out.value > b.value) {
                best = Some(out);
            }
        }
        let out = best.unwrap();
        *self.last.borrow_mut() = Some(out.point.clone());
        out.value
    }
}

/// Stateful support solver for a restricted norm F∘B: the quotient norm
/// evaluator used by the iota ascent, warm-started between calls.
struct RestrictedSupport<'a> {
    norm: &'a MinkowskiNorm,
    basis: &'a [Vec<f64>],
    last: RefCell<Option<Vec<f64>>>,
}

impl<'a> RestrictedSupport<'a> {
    fn new(norm: &'a MinkowskiNorm, basis: &'a [Vec<f64>]) -> Self {
        Self {
            norm,
            basis,
            last: RefCell::new(None),
        }
    }

    fn eval(&self, omega: &[f64]) -> f64 {
        let q = self.basis.len();
        if q == 0 {
            return 0.0;
        }
        // Exact branches stay exact.
        match &self.norm.family {
            crate::minkowski::NormFamily::Euclidean
            | crate::minkowski::NormFamily::WeightedLp { .. } => {
                return subspace_support(self.norm, self.basis, omega, 0xA11CE).0;
            }
            _ => {}
        }
        let c: Vec<f64> = self.basis.iter().map(|b| dot(omega, b)).collect();
        let cn = dot(&c, &c).sqrt();
        if cn == 0.0 {
            return 0.0;
        }
        let expand = |s: &[f64]| -> Vec<f64> {
            let n = self.norm.dim;
            let mut v = vec![0.0; n];
            for (bi, si) in self.basis.iter().zip(s) {
                for (vj, bj) in v.iter_mut().zip(bi) {
                    *vj += si * bj;
                }
            }
            v
        };
        let mut h = |s: &[f64]| {
            let v = expand(s);
            let f = self.norm.eval_unchecked(&v);
            if f <= 0.0 {
                return f64::NEG_INFINITY;
            }
            c.iter().zip(s).map(|(ci, si)| ci * si).sum::<f64>() / f
        };
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if let Some(last) = self.last.borrow().as_ref() {
            candidates.push(last.clone());
        }
        candidates.push(c.iter().map(|x| x / cn).collect());
        let mut best: Option<solve::SearchOutcome> = None;
        for cand in candidates {
            let v0 = h(&cand);
            let out = solve::refine_on_sphere(&mut h, cand, v0, 1e-10);
            if best.as_ref().map_or(true, |b| out.value > b.value) {
                best = Some(out);
            }
        }
        let out = best.unwrap();
        *self.last.borrow_mut() = Some(out.point.clone());
        out.value
    }
}

// ---------------------------------------------------------------------------
// The quotient operations
// ---------------------------------------------------------------------------

/// A coset ω + K with its quotient norm and minimal-lift witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotientElement {
    pub representative: Vec<f64>,
    pub class_norm: f64,
    /// Coset member attaining the class norm (within the gap tolerance).
    pub lift: Vec<f64>,
    /// Primal–dual residual |F*(lift) − class_norm|.
    pub gap: f64,
}

/// Project a covector onto the quotient V*/K: class norm by subspace
/// duality, minimal lift by pattern descent over K coefficients, the two
/// routes certified against each other.
pub fn project_p(inst: &QuotientInstance, omega: &[f64]) -> Result<QuotientElement> {
    let n = inst.norm.dim;
    if omega.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: omega.len(),
        });
    }
    let k = inst.k_basis.len();
    let ann = inst.annihilator_basis();
    let (class_norm, _witness) = subspace_support(&inst.norm, &ann, omega, 0xA11CE);

    if k == 0 {
        // trivial quotient: the representative is its own minimal lift
        let gap = {
            let eval = SupportEval::new(&inst.norm);
            (eval.eval(omega) - class_norm).abs()
        };
        if gap > GAP_TOL {
            return Err(FinslerError::Numeric(format!(
                "trivial-quotient dual routes disagree: gap {gap:.3e}"
            )));
        }
        return Ok(QuotientElement {
            representative: omega.to_vec(),
            class_norm,
            lift: omega.to_vec(),
            gap,
        });
    }

    let eval = SupportEval::new(&inst.norm);
    let shift = |t: &[f64]| -> Vec<f64> {
        let mut w = omega.to_vec();
        for (ta, kappa) in t.iter().zip(&inst.k_basis) {
            for (wi, ki) in w.iter_mut().zip(kappa) {
                *wi += ta * ki;
            }
        }
        w
    };
    let objective = |t: &[f64]| -> f64 { eval.eval(&shift(t)) };

    let scale = 1.0 + omega.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut starts = vec![vec![0.0; k]];
    // Exact candidates for the closed-form duals: least squares for the
    // euclidean family and tie-system enumeration for the piecewise-linear
    // ℓ∞/ℓ¹ duals, where a plain pattern descent can stall on a kink fan.
    starts.extend(exact_candidates(inst, omega));
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF ^ k as u64);
    for _ in 0..3 {
        starts.push((0..k).map(|_| rng.gen_range(-scale..scale)).collect());
    }
    let mut out = solve::pattern_minimize(k, objective, &starts, scale, 1e-12);
    let mut gap = out.value - class_norm;
    if gap.abs() > GAP_TOL {
        // escalate: more restarts at finer initial steps
        let mut starts2 = vec![out.point.clone()];
        for _ in 0..8 {
            starts2.push(
                (0..k)
                    .map(|_| rng.gen_range(-2.0 * scale..2.0 * scale))
                    .collect(),
            );
        }
        out = solve::pattern_minimize(k, objective, &starts2, 0.5 * scale, 1e-13);
        gap = out.value - class_norm;
    }
    if gap.abs() > GAP_TOL {
        return Err(FinslerError::Numeric(format!(
            "quotient solve did not certify: duality gap {gap:.3e} \
             (lower {class_norm:.12e}, upper {:.12e})",
            out.value
        )));
    }
    Ok(QuotientElement {
        representative: omega.to_vec(),
        class_norm,
        lift: shift(&out.point),
        gap: gap.abs(),
    })
}

/// Candidate minimizers of t ↦ F*(ω + Σtκ) with closed forms: the least-
/// squares solution for euclidean duals; tie systems (k+1 coordinates at
/// the weighted maximum) for ℓ∞ duals; zero systems (k coordinates
/// vanishing) for ℓ¹ duals.
fn exact_candidates(inst: &QuotientInstance, omega: &[f64]) -> Vec<Vec<f64>> {
    use crate::minkowski::NormFamily;
    let n = inst.norm.dim;
    let k = inst.k_basis.len();
    let a = nalgebra::DMatrix::<f64>::from_fn(n, k, |i, j| inst.k_basis[j][i]);
    let w = nalgebra::DVector::<f64>::from_row_slice(omega);

    // dual weights u_i such that F*(z) is the u-weighted ℓq norm
    let dual = analytic_dual(&inst.norm);
    let mut out = Vec::new();
    match dual.as_ref().map(|d| &d.family) {
        Some(NormFamily::Euclidean) => {
            let ata = a.transpose() * &a;
            let atw = a.transpose() * &w;
            if let Some(t) = ata.lu().solve(&(-&atw)) {
                out.push(t.as_slice().to_vec());
            }
        }
        Some(NormFamily::WeightedLp { p, weights }) if p.is_infinite() => {
            // minimize max_i u_i |(w + A t)_i|: the optimum ties m ≥ 1
            // branches at the max and pins k+1−m other coordinates at
            // their own kinks (zeros). Enumerate all mixed systems.
            let u = weights;
            let idx: Vec<usize> = (0..n).collect();
            for m_tie in 1..=(k + 1).min(n) {
                let m_zero = k + 1 - m_tie;
                for tie in combinations(&idx, m_tie) {
                    let rest: Vec<usize> =
                        idx.iter().copied().filter(|i| !tie.contains(i)).collect();
                    for zero in combinations(&rest, m_zero) {
                        for signs in 0..(1u32 << m_tie) {
                            let mut m = nalgebra::DMatrix::<f64>::zeros(k + 1, k + 1);
                            let mut rhs = nalgebra::DVector::<f64>::zeros(k + 1);
                            for (row, &i) in tie.iter().enumerate() {
                                let sigma = if signs >> row & 1 == 0 { 1.0 } else { -1.0 };
                                for col in 0..k {
                                    m[(row, col)] = sigma * u[i] * a[(i, col)];
                                }
                                m[(row, k)] = -1.0;
                                rhs[row] = -sigma * u[i] * w[i];
                            }
                            for (zrow, &i) in zero.iter().enumerate() {
                                let row = m_tie + zrow;
                                for col in 0..k {
                                    m[(row, col)] = a[(i, col)];
                                }
                                rhs[row] = -w[i];
                            }
                            if let Some(sol) = m.lu().solve(&rhs) {
                                if sol.iter().all(|x| x.is_finite()) {
                                    out.push(sol.as_slice()[..k].to_vec());
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(NormFamily::WeightedLp { p, .. }) if *p == 1.0 => {
            // minimize Σ u_i |(w + A t)_i|: zeros on k coordinates
            let idx: Vec<usize> = (0..n).collect();
            for combo in combinations(&idx, k) {
                let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
                let mut rhs = nalgebra::DVector::<f64>::zeros(k);
                for (row, &i) in combo.iter().enumerate() {
                    for col in 0..k {
                        m[(row, col)] = a[(i, col)];
                    }
                    rhs[row] = -w[i];
                }
                if let Some(sol) = m.lu().solve(&rhs) {
                    if sol.iter().all(|x| x.is_finite()) {
                        out.push(sol.as_slice().to_vec());
                    }
                }
            }
        }
        _ => {}
    }
    out
}

fn combinations(items: &[usize], choose: usize) -> Vec<Vec<usize>> {
    if choose == 0 {
        return vec![Vec::new()];
    }
    if items.len() < choose {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], choose - 1) {
            let mut c = vec![first];
            c.append(&mut rest);
            out.push(c);
        }
    }
    out
}

/// The minimal-norm coset representative computed by [`project_p`].
pub fn minimal_lift(inst: &QuotientInstance, class: &QuotientElement) -> Result<Vec<f64>> {
    if class.lift.len() != inst.norm.dim {
        return Err(FinslerError::DimensionMismatch {
            expected: inst.norm.dim,
            got: class.lift.len(),
        });
    }
    Ok(class.lift.clone())
}

/// Result of embedding an annihilator vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorResult {
    pub embedded: Vec<f64>,
    pub abstract_norm: f64,
    pub concrete_norm: f64,
}

/// Embed v ∈ K⊥ and compare its abstract norm
/// sup{⟨ω,v⟩ : class_norm(ω+K) ≤ 1} with the concrete norm F(v).
pub fn iota_embed(inst: &QuotientInstance, v: &[f64]) -> Result<VectorResult> {
    let n = inst.norm.dim;
    if v.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    for (a, kappa) in inst.k_basis.iter().enumerate() {
        let pair = dot(kappa, v);
        if pair.abs() > 1e-10 {
            return Err(FinslerError::Precondition(format!(
                "v is not in the annihilator of K: ⟨κ_{a}, v⟩ = {pair:.3e}"
            )));
        }
    }
    let concrete_norm = eval_norm(&inst.norm, v)?;
    if concrete_norm == 0.0 {
        return Ok(VectorResult {
            embedded: v.to_vec(),
            abstract_norm: 0.0,
            concrete_norm: 0.0,
        });
    }

    // Maximize ⟨ω,v⟩ / q(ω+K) over a complement of K in V*: the quotient
    // norm is invariant under K shifts, so directions are parametrized by
    // the orthogonal complement of span(K).
    let complement = complement_basis(&inst.k_basis, n);
    let q = complement.len();
    if q == 0 {
        return Ok(VectorResult {
            embedded: v.to_vec(),
            abstract_norm: 0.0,
            concrete_norm,
        });
    }
    let ann = inst.annihilator_basis();
    let expand = |s: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; n];
        for (bi, si) in complement.iter().zip(s) {
            for (wj, bj) in w.iter_mut().zip(bi) {
                *wj += si * bj;
            }
        }
        w
    };
    let pair_c: Vec<f64> = complement.iter().map(|b| dot(b, v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x107A);
    let inner = RestrictedSupport::new(&inst.norm, &ann);
    let mut objective = |s: &[f64]| {
        let omega = expand(s);
        let qn = inner.eval(&omega);
        if qn <= 0.0 {
            return f64::NEG_INFINITY;
        }
        pair_c.iter().zip(s).map(|(c, si)| c * si).sum::<f64>() / qn
    };
    let mut out = solve::sphere_maximize(q, &mut objective, 128, 3, 1e-10, &mut rng);
    // warm start at the support covector of F at v, the analytic optimum
    // direction, projected to the complement (catches kink stalls of the
    // generic ascent on polyhedral norms)
    if let Some(grad) = numeric_gradient(&inst.norm, v) {
        let mut s0: Vec<f64> = complement.iter().map(|b| dot(b, &grad)).collect();
        let norm_s = dot(&s0, &s0).sqrt();
        if norm_s > 1e-12 {
            for si in s0.iter_mut() {
                *si /= norm_s;
            }
            let v0 = objective(&s0);
            let refined =
                solve::refine_on_sphere_rand(&mut objective, s0, v0, 1e-10, Some(&mut rng));
            if refined.value > out.value {
                out = refined;
            }
        }
    }
    Ok(VectorResult {
        embedded: v.to_vec(),
        abstract_norm: out.value,
        concrete_norm,
    })
}

/// Central-difference gradient of F at v (a support covector of the unit
/// ball at v/F(v); exact a.e. for the polyhedral families too).
fn numeric_gradient(norm: &MinkowskiNorm, v: &[f64]) -> Option<Vec<f64>> {
    let n = norm.dim;
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let h = 1e-6 * scale;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let mut vp = v.to_vec();
        let mut vm = v.to_vec();
        vp[i] += h;
        vm[i] -= h;
        grad[i] = (norm.eval_unchecked(&vp) - norm.eval_unchecked(&vm)) / (2.0 * h);
    }
    if grad.iter().all(|x| x.is_finite()) {
        Some(grad)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// One row of a batch run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRow {
    pub id: usize,
    pub class_norm: f64,
    pub lift_norm: f64,
    pub abstract_norm: f64,
    pub concrete_norm: f64,
    /// Isometry gap |abstract − concrete|.
    pub gap: f64,
}

/// Seeded random instance: dimension ≤ 6, dim K ≤ 3, norm family cycling
/// through euclidean / ℓ¹ / quartic. Returns the instance, a covector to
/// project, and an annihilator vector to embed.
pub fn random_instance(seed: u64, idx: usize) -> (QuotientInstance, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64 * 0x9E37_79B9));
    let n = rng.gen_range(2..=6usize);
    let k = rng.gen_range(1..=3usize.min(n - 1));
    let norm = match idx % 3 {
        0 => MinkowskiNorm::euclidean(n),
        1 => MinkowskiNorm::lp(n, 1.0),
        _ => MinkowskiNorm::quartic_blend(n, 0.5),
    };
    let mut k_basis = Vec::new();
    while k_basis.len() < k {
        let cand: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut trial = k_basis.clone();
        trial.push(cand.clone());
        if gram_schmidt(&trial, n).len() == trial.len() {
            k_basis.push(cand);
        }
    }
    let inst = QuotientInstance { norm, k_basis };
    let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    // annihilator vector: project a random vector onto K⊥
    let ann = inst.annihilator_basis();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut v = vec![0.0; n];
    for b in &ann {
        let p = dot(&raw, b);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi += p * bi;
        }
    }
    (inst, omega, v)
}

/// Run the full pipeline on one instance.
pub fn run_instance(
    id: usize,
    inst: &QuotientInstance,
    omega: &[f64],
    v: &[f64],
) -> Result<BatchRow> {
    let class = project_p(inst, omega)?;
    let lift = minimal_lift(inst, &class)?;
    let lift_eval = SupportEval::new(&inst.norm);
    let lift_norm = lift_eval.eval(&lift);
    let emb = iota_embed(inst, v)?;
    Ok(BatchRow {
        id,
        class_norm: class.class_norm,
        lift_norm,
        abstract_norm: emb.abstract_norm,
        concrete_norm: emb.concrete_norm,
        gap: (emb.abstract_norm - emb.concrete_norm).abs(),
    })
}

/// CSV with the fixed header `id,class_norm,lift_norm,abstract_norm,concrete_norm,gap`.
pub fn batch_csv(rows: &[BatchRow]) -> String {
    let mut out = String::from("id,class_norm,lift_norm,abstract_norm,concrete_norm,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.id, r.class_norm, r.lift_norm, r.abstract_norm, r.concrete_norm, r.gap
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_quotient_is_dual_norm() {
        let inst = QuotientInstance::new(MinkowskiNorm::euclidean(2), vec![]).unwrap();
        let elem = project_p(&inst, &[3.0, 4.0]).unwrap();
        assert!((elem.class_norm - 5.0).abs() < 1e-8);
        assert_eq!(elem.lift, vec![3.0, 4.0]);
    }

    #[test]
    fn euclidean_quotient_by_axis() {
        // ℓ²/span{e₃}: class of (1,2,3) is sqrt(5) with lift (1,2,0)
        let inst = QuotientInstance::new(
            MinkowskiNorm::euclidean(3),
            vec![vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let elem = project_p(&inst, &[1.0, 2.0, 3.0]).unwrap();
        assert!(
            (elem.class_norm - 5.0_f64.sqrt()).abs() < 1e-9,
            "class {}",
            elem.class_norm
        );
        let lift = minimal_lift(&inst, &elem).unwrap();
        assert!((lift[0] - 1.0).abs() < 1e-6);
        assert!((lift[1] - 2.0).abs() < 1e-6);
        assert!(lift[2].abs() < 1e-6, "lift {lift:?}");
        assert!(elem.gap <= GAP_TOL);
    }

    #[test]
    fn linf_quotient_closed_form() {
        // V = ℝ² with ℓ¹, V* carries ℓ∞; K = span{(1,−1)}:
        // class norm of (a,b) is |a+b|/2
        let inst = QuotientInstance::new(
            MinkowskiNorm::lp(2, 1.0),
            vec![vec![1.0, -1.0]],
        )
        .unwrap();
        let elem = project_p(&inst, &[3.0, 1.0]).unwrap();
        assert!((elem.class_norm - 2.0).abs() < 1e-9, "class {}", elem.class_norm);
        // lift attains the class norm in the ℓ∞ dual
        let dual = analytic_dual(&inst.norm).unwrap();
        let attained = eval_norm(&dual, &elem.lift).unwrap();
        assert!((attained - 2.0).abs() < 1e-8, "attained {attained}");
        // second closed-form check
        let elem2 = project_p(&inst, &[1.0, -4.0]).unwrap();
        assert!((elem2.class_norm - 1.5).abs() < 1e-9);
    }

    #[test]
    fn reprojection_preserves_class_norm() {
        let inst = QuotientInstance::new(
            MinkowskiNorm::quartic_blend(3, 0.5),
            vec![vec![0.3, -0.5, 1.0]],
        )
        .unwrap();
        let elem = project_p(&inst, &[1.0, 0.5, -0.25]).unwrap();
        let lift = minimal_lift(&inst, &elem).unwrap();
        let again = project_p(&inst, &lift).unwrap();
        assert!(
            (again.class_norm - elem.class_norm).abs() < 1e-9,
            "{} vs {}",
            again.class_norm,
            elem.class_norm
        );
    }

    #[test]
    fn iota_trivial_quotient_euclidean() {
        let inst = QuotientInstance::new(MinkowskiNorm::euclidean(2), vec![]).unwrap();
        let res = iota_embed(&inst, &[3.0, 4.0]).unwrap();
        assert!((res.abstract_norm - 5.0).abs() < 1e-7);
        assert_eq!(res.concrete_norm, 5.0);
    }

    #[test]
    fn iota_euclidean_axis_quotient() {
        let inst = QuotientInstance::new(
            MinkowskiNorm::euclidean(3),
            vec![vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let res = iota_embed(&inst, &[1.0, 2.0, 0.0]).unwrap();
        let expect = 5.0_f64.sqrt();
        assert!((res.abstract_norm - expect).abs() < 1e-7, "{}", res.abstract_norm);
        assert!((res.concrete_norm - expect).abs() < 1e-12);
    }

    #[test]
    fn iota_l1_closed_form() {
        // K⊥ = span{(1,1)}: abstract sup{a+b : |a+b|/2 ≤ 1} = 2 = ‖(1,1)‖₁
        let inst = QuotientInstance::new(
            MinkowskiNorm::lp(2, 1.0),
            vec![vec![1.0, -1.0]],
        )
        .unwrap();
        let res = iota_embed(&inst, &[1.0, 1.0]).unwrap();
        assert!((res.concrete_norm - 2.0).abs() < 1e-12);
        assert!((res.abstract_norm - 2.0).abs() < 1e-7, "{}", res.abstract_norm);
    }

    #[test]
    fn iota_rejects_vectors_off_the_annihilator() {
        let inst = QuotientInstance::new(
            MinkowskiNorm::euclidean(2),
            vec![vec![1.0, -1.0]],
        )
        .unwrap();
        let err = iota_embed(&inst, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, FinslerError::Precondition(_)));
    }

    #[test]
    fn degenerate_full_dual_space_returns_zeros() {
        let inst = QuotientInstance::new(
            MinkowskiNorm::euclidean(2),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let elem = project_p(&inst, &[0.7, -0.3]).unwrap();
        assert_eq!(elem.class_norm, 0.0);
        let res = iota_embed(&inst, &[0.0, 0.0]).unwrap();
        assert_eq!(res.abstract_norm, 0.0);
        assert_eq!(res.concrete_norm, 0.0);
    }

    #[test]
    fn contraction_and_isometry_on_random_instances() {
        for idx in 0..36 {
            let (inst, omega, v) = random_instance(0xFEED, idx);
            let elem = project_p(&inst, &omega).unwrap();
            // contraction: class norm never exceeds the representative's
            // dual norm (the lift at t = 0)
            let eval = SupportEval::new(&inst.norm);
            let rep_norm = eval.eval(&omega);
            assert!(
                elem.class_norm <= rep_norm + 1e-9,
                "idx {idx}: class {} > rep {}",
                elem.class_norm,
                rep_norm
            );
            assert!(elem.gap <= GAP_TOL, "idx {idx}: gap {}", elem.gap);
            let emb = iota_embed(&inst, &v).unwrap();
            assert!(
                (emb.abstract_norm - emb.concrete_norm).abs() <= 1e-6,
                "idx {idx}: abstract {} vs concrete {}",
                emb.abstract_norm,
                emb.concrete_norm
            );
        }
    }

    #[test]
    fn iota_homogeneity() {
        let (inst, _, v) = random_instance(0xABCD, 2);
        let r1 = iota_embed(&inst, &v).unwrap();
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let r2 = iota_embed(&inst, &v2).unwrap();
        assert!(
            (r2.abstract_norm - 2.0 * r1.abstract_norm).abs() <= 1e-7 * r1.abstract_norm.max(1.0),
            "{} vs {}",
            r2.abstract_norm,
            2.0 * r1.abstract_norm
        );
    }

    #[test]
    fn dependent_basis_rejected() {
        let err = QuotientInstance::new(
            MinkowskiNorm::euclidean(3),
            vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, FinslerError::InvalidInput(_)));
    }

    #[test]
    fn batch_csv_header() {
        let rows = vec![BatchRow {
            id: 0,
            class_norm: 1.0,
            lift_norm: 1.0,
            abstract_norm: 1.0,
            concrete_norm: 1.0,
            gap: 0.0,
        }];
        let csv = batch_csv(&rows);
        assert!(csv.starts_with("id,class_norm,lift_norm,abstract_norm,concrete_norm,gap\n"));
    }
}
