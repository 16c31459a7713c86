//! Derivative-free local search used by the dual-norm and quotient solvers.
//!
//! Both routines are pattern searches with halving steps. They only need
//! function evaluations, which keeps them usable on nonsmooth objectives
//! (ℓ¹/ℓ∞ norms) where gradient ascent stalls on kinks. For a convex
//! objective every non-optimal point admits a descent direction, and a
//! halfspace in ℝᵏ always contains one of the ± coordinate directions, so
//! the stencil below cannot get stuck above the optimum at step sizes that
//! still resolve the kink fan.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a pattern search: the final iterate, its value, and the last
/// step size (the refinement residual certificate).
#[derive(Debug, Clone)]
pub(crate) struct SearchOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub final_step: f64,
}

fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = euclid_norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Random point on the Euclidean unit sphere.
pub(crate) fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = euclid_norm(&v);
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Maximize a 0-homogeneous function over the Euclidean unit sphere.
///
/// `warm_starts` directions are sampled first; the best `keep` of them are
/// refined by tangent-direction pattern ascent down to step `tol`.
pub(crate) fn sphere_maximize<F: FnMut(&[f64]) -> f64>(
    dim: usize,
    mut f: F,
    warm_starts: usize,
    keep: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> SearchOutcome {
    assert!(dim >= 1);
    if dim == 1 {
        let vp = f(&[1.0]);
        let vm = f(&[-1.0]);
        let (point, value) = if vp >= vm {
            (vec![1.0], vp)
        } else {
            (vec![-1.0], vm)
        };
        return SearchOutcome {
            point,
            value,
            final_step: 0.0,
        };
    }

    // Warm start: canonical axes plus random directions.
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut u = vec![0.0; dim];
            u[i] = sign;
            candidates.push((f(&u), u));
        }
    }
    for _ in 0..warm_starts {
        let u = random_unit(rng, dim);
        candidates.push((f(&u), u));
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    candidates.truncate(keep.max(1));

    let mut best: Option<SearchOutcome> = None;
    for (v0, u0) in candidates {
        let out = refine_on_sphere_rand(&mut f, u0, v0, tol, Some(rng));
        if best.as_ref().map_or(true, |b| out.value > b.value) {
            best = Some(out);
        }
    }
    best.unwrap()
}

pub(crate) fn refine_on_sphere<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    u: Vec<f64>,
    value: f64,
    tol: f64,
) -> SearchOutcome {
    refine_on_sphere_rand(f, u, value, tol, None)
}

/// Pattern ascent on the sphere. With an rng, each stalled level also
/// probes random tangent directions before halving: coordinate stencils
/// alone can miss the narrow ascent cones of piecewise-linear objectives.
pub(crate) fn refine_on_sphere_rand<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    mut u: Vec<f64>,
    mut value: f64,
    tol: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> SearchOutcome {
    let dim = u.len();
    let mut step = 0.25;
    while step > tol {
        let mut improved = false;
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut cand = u.clone();
                cand[i] += sign * step;
                normalize(&mut cand);
                let v = f(&cand);
                if v > value {
                    value = v;
                    u = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            if let Some(rng) = rng.as_deref_mut() {
                for _ in 0..8 {
                    let dir = random_unit(rng, dim);
                    let mut cand: Vec<f64> =
                        u.iter().zip(&dir).map(|(ui, di)| ui + step * di).collect();
                    normalize(&mut cand);
                    let v = f(&cand);
                    if v > value {
                        value = v;
                        u = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    SearchOutcome {
        point: u,
        value,
        final_step: step,
    }
}

/// Minimize a convex function over ℝᵏ by pattern descent with the full
/// ±{0,1}ᵏ stencil and halving steps, from several restarts.
pub(crate) fn pattern_minimize<F: FnMut(&[f64]) -> f64>(
    k: usize,
    mut f: F,
    starts: &[Vec<f64>],
    initial_step: f64,
    tol: f64,
) -> SearchOutcome {
    assert!(k >= 1);
    let dirs = stencil_directions(k);
    let mut best: Option<SearchOutcome> = None;
    for start in starts {
        let mut x = start.clone();
        let mut value = f(&x);
        let mut step = initial_step;
        while step > tol {
            let mut improved = false;
            for d in &dirs {
                let cand: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + di * step).collect();
                let v = f(&cand);
                if v < value {
                    value = v;
                    x = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let out = SearchOutcome {
            point: x,
            value,
            final_step: step,
        };
        if best.as_ref().map_or(true, |b| out.value < b.value) {
            best = Some(out);
        }
    }
    best.unwrap()
}

/// All nonzero sign patterns in {-1,0,1}ᵏ, normalized to unit length.
fn stencil_directions(k: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    let n = 3usize.pow(k as u32);
    for code in 1..n {
        let mut c = code;
        let mut d = Vec::with_capacity(k);
        for _ in 0..k {
            d.push(match c % 3 {
                0 => 0.0,
                1 => 1.0,
                _ => -1.0,
            });
            c /= 3;
        }
        if d.iter().any(|x| *x != 0.0) {
            normalize(&mut d);
            dirs.push(d);
        }
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sphere_maximize_linear_functional() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = [3.0, -4.0];
        let out = sphere_maximize(
            2,
            |u| a[0] * u[0] + a[1] * u[1],
            256,
            4,
            1e-10,
            &mut rng,
        );
        assert!((out.value - 5.0).abs() < 1e-9, "value {}", out.value);
    }

    #[test]
    fn pattern_minimize_quadratic() {
        let out = pattern_minimize(
            2,
            |t| (t[0] - 1.0).powi(2) + 3.0 * (t[1] + 2.0).powi(2),
            &[vec![0.0, 0.0]],
            1.0,
            1e-11,
        );
        assert!(out.value < 1e-18);
        assert!((out.point[0] - 1.0).abs() < 1e-8);
        assert!((out.point[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn pattern_minimize_piecewise_linear() {
        // min over t of max(|3+t|, |1-t|) = 2 at t = -1 (a kink minimum).
        let out = pattern_minimize(
            1,
            |t| (3.0 + t[0]).abs().max((1.0 - t[0]).abs()),
            &[vec![0.0], vec![5.0]],
            1.0,
            1e-12,
        );
        assert!((out.value - 2.0).abs() < 1e-10);
        assert!((out.point[0] + 1.0).abs() < 1e-9);
    }
}
