use num_complex::Complex64;
use proptest::prelude::*;

use solenoid_core::bundles::{haar_family, shannon_family};
use solenoid_core::multiplicity::{induced_multiplicity, Mult, MultFn};
use solenoid_core::pathspace::{cylinder_mass, PathMeasure};
use solenoid_core::solenoid::{
    apply_pi, apply_u, compose_rhat, compose_rhat_inv, cond_expect, lift_to_martingale, omega_compat_residual,
    radon_nikodym_residual, tower_residual, OmegaFamily,
};
use solenoid_core::transfer::{
    strong_invariance_residual, strongly_invariant_measure, MeasureVector, StepFunction, TransferOp,
};
use solenoid_core::wavelet::{cascade_product, Filter, FilterCoeffs, FreqGrid};
use solenoid_core::System;

fn complex_values(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

fn step3(values: Vec<Complex64>) -> StepFunction {
    let sys = System::circle(2).unwrap();
    StepFunction::new(&sys, 3, values).unwrap()
}

fn families() -> Vec<OmegaFamily> {
    vec![haar_family(3).unwrap(), shannon_family().unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refine_then_coarsen_is_identity(values in complex_values(8), extra in 1u32..4) {
        let f = step3(values);
        let g = f.refine_to(3 + extra).unwrap().coarsen_to(3, 0.0).unwrap();
        prop_assert_eq!(g, f);
    }

    #[test]
    fn transfer_is_linear(a in complex_values(8), b in complex_values(8), c in -2.0f64..2.0) {
        let fam = haar_family(3).unwrap();
        let op = fam.op();
        let (fa, fb) = (step3(a), step3(b));
        let lhs = op.apply(&fa.scale(Complex64::new(c, 0.0)).add(&fb).unwrap()).unwrap();
        let rhs = op.apply(&fa).unwrap().scale(Complex64::new(c, 0.0)).add(&op.apply(&fb).unwrap()).unwrap();
        prop_assert!(lhs.sup_distance(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn pull_out_property(g in complex_values(8), f in complex_values(8)) {
        // R((g o r) f) = g R(f)
        let op = shannon_family().unwrap().op();
        let (g, f) = (step3(g), step3(f));
        let lhs = op.apply(&g.compose_r().unwrap().mul(&f).unwrap()).unwrap();
        let rhs = g.mul(&op.apply(&f).unwrap()).unwrap();
        prop_assert!(lhs.sup_distance(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn lebesgue_strongly_invariant_on_circles(n in 2u32..5, level in 1u32..5) {
        let sys = System::circle(n).unwrap();
        let mu = MeasureVector::uniform(&sys, level).unwrap();
        prop_assert!(strong_invariance_residual(&mu).unwrap() <= 1e-14);
    }

    #[test]
    fn omega_family_identities(values in complex_values(8), n in 0usize..6) {
        let f = step3(values);
        for fam in families() {
            prop_assert!(omega_compat_residual(&fam, &f, n).unwrap() <= 1e-12);
            prop_assert!(radon_nikodym_residual(&fam, &f, n).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn lifts_are_martingales(values in complex_values(8), n in 0usize..5, extra in 0usize..3) {
        let xi = step3(values);
        for fam in families() {
            let m = lift_to_martingale(&fam, &xi, n, n + extra).unwrap();
            prop_assert!(m.compatibility_residual().unwrap() <= 1e-12);
            for j in 0..=m.depth() {
                for k in 0..=(m.depth() - j) {
                    let e = cond_expect(&m, j, k).unwrap();
                    prop_assert!(e.sup_distance(&m.levels()[j]).unwrap() <= 1e-12);
                }
            }
            let norms = m.level_norms().unwrap();
            prop_assert!(norms.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn tower_property(values in complex_values(8), a in 0usize..4, b in 0usize..4) {
        let xi = step3(values);
        let fam = haar_family(3).unwrap();
        let m = lift_to_martingale(&fam, &xi, 4, 5).unwrap();
        prop_assert!(tower_residual(&m, a, b).unwrap() <= 1e-12);
    }

    #[test]
    fn pi_covariance_and_multiplicativity(
        g1 in complex_values(8), g2 in complex_values(8), x in complex_values(8), n in 0usize..4
    ) {
        let (g1, g2, xi) = (step3(g1), step3(g2), step3(x));
        for fam in families() {
            let m = lift_to_martingale(&fam, &xi, n, n + 2).unwrap();
            let lhs = apply_u(&apply_pi(&g1, &m).unwrap()).unwrap();
            let rhs = apply_pi(&g1.compose_r().unwrap(), &apply_u(&m).unwrap()).unwrap();
            prop_assert!(lhs.level_distance(&rhs).unwrap() <= 1e-12);
            let prod = apply_pi(&g1, &apply_pi(&g2, &m).unwrap()).unwrap();
            let joint = apply_pi(&g1.mul(&g2).unwrap(), &m).unwrap();
            prop_assert!(prod.level_distance(&joint).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn rhat_round_trip(values in complex_values(8), n in 0usize..4) {
        let xi = step3(values);
        for fam in families() {
            let m = lift_to_martingale(&fam, &xi, n, n + 2).unwrap();
            let there = compose_rhat(&compose_rhat_inv(&m).unwrap()).unwrap();
            prop_assert_eq!(there.levels(), m.levels());
            let back = compose_rhat_inv(&compose_rhat(&m).unwrap()).unwrap();
            prop_assert!(back.level_distance(&m).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn multiplicity_additive_monotone_conservative(
        a in prop::collection::vec(0u64..50, 8), b in prop::collection::vec(0u64..50, 8)
    ) {
        for sys in [System::circle(2).unwrap(), System::sft(vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]]).unwrap()] {
            let cells = sys.cells(2).unwrap();
            let take = |v: &[u64]| v.iter().cycle().take(cells.len()).map(|&x| Mult::Finite(x)).collect::<Vec<_>>();
            let ma = MultFn::new(&sys, 2, take(&a)).unwrap();
            let mb = MultFn::new(&sys, 2, take(&b)).unwrap();
            let sum = induced_multiplicity(&ma.add(&mb).unwrap()).unwrap();
            let parts = induced_multiplicity(&ma).unwrap().add(&induced_multiplicity(&mb).unwrap()).unwrap();
            prop_assert_eq!(&sum, &parts);
            let bigger = induced_multiplicity(&ma.add(&mb).unwrap()).unwrap();
            let ia = induced_multiplicity(&ma).unwrap();
            prop_assert!(ia.values().iter().zip(bigger.values()).all(|(x, y)| x <= y));

            // sum_x m^r(x) mu(x) / #r^-1(x) = sum_x m(x) mu(x), for m lifted from resolution 1
            let lifted = (0..cells.len())
                .map(|i| Mult::Finite(a[sys.parent_cell(2, i).unwrap() % a.len()]))
                .collect::<Vec<_>>();
            let m = MultFn::new(&sys, 2, lifted).unwrap();
            let im = induced_multiplicity(&m).unwrap();
            let mu = strongly_invariant_measure(&sys, 2).unwrap();
            let num = |v: Mult| match v { Mult::Finite(v) => v as f64, Mult::Infinite => f64::INFINITY };
            let lhs: f64 = (0..cells.len())
                .map(|x| num(im.values()[x]) * mu.masses()[x] / cells.branch_count(x) as f64)
                .sum();
            let rhs: f64 = (0..cells.len()).map(|x| num(m.values()[x]) * mu.masses()[x]).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn filter_is_periodic(x in -20.0f64..20.0) {
        let h = FilterCoeffs::haar();
        prop_assert!((h.eval(x + 1.0) - h.eval(x)).norm() <= 1e-13);
    }

    #[test]
    fn path_masses_sum_to_h(start in 0usize..8, n in 0usize..7) {
        let fam = haar_family(3).unwrap();
        let sys = fam.system().clone();
        let base = PathMeasure::from_family(&fam, &sys.point_from_letters(&[])).unwrap();
        let p = base.with_start(sys.representative_letters(3, start).unwrap()).unwrap();
        let total: f64 = p.words(n).iter().map(|w| cylinder_mass(&p, w).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn cascade_telescopes() {
    let f = Filter::haar();
    let grid = FreqGrid::new(8.0, 2048).unwrap();
    let k = cascade_product(&f, 12, grid).unwrap();
    for (i, x) in grid.points().enumerate() {
        let prev = solenoid_core::wavelet::cascade_at(&f, 11, x / 2.0);
        let expect = f.eval(x / 2.0) * std::f64::consts::FRAC_1_SQRT_2 * prev;
        assert!((k.values[i] - expect).norm() <= 1e-12);
    }
}

#[test]
fn shannon_parseval() {
    let s = shannon_family().unwrap();
    let f = Filter::Step { n: 2, m0: s.m0().clone() };
    let grid = FreqGrid::new(8.0, 2048).unwrap();
    let k = cascade_product(&f, 8, grid).unwrap();
    let energy: f64 = k.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.step();
    assert!((energy - 1.0).abs() <= 2.0 * grid.step());
}

#[test]
fn normalized_op_on_ifs_matches_bernoulli() {
    let sys = System::cantor();
    let op = TransferOp::Normalized;
    let one = StepFunction::ones(&sys, 4).unwrap();
    assert!(op.apply(&one).unwrap().sup_distance(&one).unwrap() == 0.0);
}
