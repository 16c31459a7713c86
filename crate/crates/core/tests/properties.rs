//! Property-based invariants across the toolkit: extension Lipschitz
//! bounds, norm axioms of computed duals, graph-metric laws and quotient
//! homogeneity.

use proptest::prelude::*;

use finsler_core::manifold::ManifoldSpec;
use finsler_core::metricgraph::{
    graph_distance, lip_a_est, mcshane_extend, sample_manifold, ClosedForm, MeasureSpec,
    ScalarField,
};
use finsler_core::minkowski::{dual_norm, parallelogram_defect, MinkowskiNorm};
use finsler_core::quotient::{iota_embed, project_p, random_instance};

fn finite_vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The McShane extension is exactly L-Lipschitz w.r.t. its norm on any
    /// probe pair, and reproduces its data at sample points.
    #[test]
    fn prop_mcshane_is_l_lipschitz(
        raw in prop::collection::vec((finite_vec2(), -2.0..2.0f64), 2..8),
        probes in prop::collection::vec(finite_vec2(), 2..6),
        slack in 0.0..1.5f64,
    ) {
        let norm = MinkowskiNorm::lp(2, 4.0);
        // make the data admissible: L = max pair slope + slack
        let mut lip = 0.0f64;
        for i in 0..raw.len() {
            for j in (i + 1)..raw.len() {
                let d: Vec<f64> = raw[i].0.iter().zip(&raw[j].0).map(|(a, b)| a - b).collect();
                let dist = norm.eval_unchecked(&d);
                if dist > 1e-9 {
                    lip = lip.max((raw[i].1 - raw[j].1).abs() / dist);
                }
            }
        }
        let l = lip * (1.0 + 1e-9) + slack;
        let ext = mcshane_extend(&raw, l, &norm).unwrap();
        for (x, fx) in &raw {
            prop_assert!((ext.eval(x) - fx).abs() < 1e-12);
        }
        for a in &probes {
            for b in &probes {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                let dist = norm.eval_unchecked(&d);
                let gap = (ext.eval(a) - ext.eval(b)).abs();
                prop_assert!(
                    gap <= l * dist * (1.0 + 1e-9) + 1e-12,
                    "extension slope {} exceeds {}", gap / dist.max(1e-300), l
                );
            }
        }
    }

    /// Parallelogram defect vanishes identically exactly for the
    /// inner-product norm.
    #[test]
    fn prop_parallelogram_euclidean_zero(v in finite_vec2(), w in finite_vec2()) {
        let n = MinkowskiNorm::euclidean(2);
        let d = parallelogram_defect(&n, &v, &w).unwrap();
        prop_assert!(d.abs() < 1e-12, "defect {d}");
    }

    /// The computed dual norm obeys the norm axioms on sampled inputs.
    #[test]
    fn prop_dual_norm_axioms(a in finite_vec2(), b in finite_vec2(), lam in 0.01..4.0f64) {
        let n = MinkowskiNorm::quartic_blend(2, 0.5);
        let da = dual_norm(&n, &a).unwrap();
        let db = dual_norm(&n, &b).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let dsum = dual_norm(&n, &sum).unwrap();
        prop_assert!(dsum <= da + db + 1e-6);
        let scaled: Vec<f64> = a.iter().map(|x| x * lam).collect();
        let dscaled = dual_norm(&n, &scaled).unwrap();
        prop_assert!((dscaled - lam * da).abs() <= 1e-6 * (lam * da).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Graph distances form a metric: symmetry up to float association,
    /// exact triangle inequality, zero diagonal.
    #[test]
    fn prop_graph_metric_laws(n in 20usize..60, seed in 0u64..500) {
        let spec = ManifoldSpec::euclidean_unit_square(MinkowskiNorm::euclidean(2));
        let g = sample_manifold(&spec, n, &MeasureSpec::Uniform, 6, seed).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let d = graph_distance(&g, &all, &all).unwrap();
        for a in 0..g.len() {
            prop_assert_eq!(d[a][a], 0.0);
            for b in 0..g.len() {
                prop_assert!((d[a][b] - d[b][a]).abs() <= 1e-13 * d[a][b].max(1.0));
                for c in 0..g.len() {
                    prop_assert!(d[a][c] <= d[a][b] + d[b][c] + 1e-12);
                }
            }
        }
    }

    /// One-scale asymptotic Lipschitz estimates grow with the scale.
    #[test]
    fn prop_lipa_monotone_in_radius(seed in 0u64..200, x in 0usize..150) {
        let spec = ManifoldSpec::euclidean_unit_square(MinkowskiNorm::euclidean(2));
        let g = sample_manifold(&spec, 150, &MeasureSpec::Uniform, 8, seed).unwrap();
        let x = x % g.len();
        let f = ScalarField::from_closed(&g, ClosedForm::Cone {
            center: vec![0.2, 0.3],
            height: 1.0,
        });
        let r1 = 3.0 * g.median_edge;
        let r2 = 6.0 * g.median_edge;
        if let (Ok(l1), Ok(l2)) = (lip_a_est(&f, &g, x, r1), lip_a_est(&f, &g, x, r2)) {
            prop_assert!(l1 <= l2 + 1e-12, "{l1} > {l2}");
        }
    }

    /// Quotient solves: contraction against the representative and
    /// positive homogeneity of the embedding norms.
    #[test]
    fn prop_quotient_contraction_and_homogeneity(idx in 0usize..40, lam in 0.25..3.0f64) {
        let (inst, omega, v) = random_instance(0xCAFE, idx);
        let elem = project_p(&inst, &omega).unwrap();
        let rep = match finsler_core::minkowski::analytic_dual(&inst.norm) {
            Some(d) => d.eval_unchecked(&omega),
            None => dual_norm(&inst.norm, &omega).unwrap(),
        };
        prop_assert!(elem.class_norm <= rep + 1e-9);
        let r1 = iota_embed(&inst, &v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * lam).collect();
        let r2 = iota_embed(&inst, &scaled).unwrap();
        prop_assert!(
            (r2.abstract_norm - lam * r1.abstract_norm).abs()
                <= 1e-6 * (lam * r1.abstract_norm).max(1.0)
        );
    }
}
