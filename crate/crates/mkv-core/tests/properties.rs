use mkv_core::fokker_planck::{nfpe_step, Coefficients, FpeState};
use mkv_core::kato::{eta_beta, rho};
use mkv_core::measures::{phi_norm, rebin, tv_distance, wasserstein1};
use mkv_core::mkv::{MeasureModel, SliceCtx};
use mkv_core::num::spd_inverse_det;
use mkv_core::parametrix::{det_perturbation_check, frozen_gaussian, CoefficientField, FnModel, Regularity};
use mkv_core::particles::{interaction_eval, ks_statistic};
use mkv_core::scenarios::Example3;
use mkv_core::{Grid, Measure, WeightFunction};
use proptest::prelude::*;

fn gauss(g: &Grid, mean: f64, var: f64) -> Measure {
    Measure::gaussian_on_grid(g, &[mean], var)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn tv_is_a_metric_below_phi_norms(m1 in -2.0..2.0f64, m2 in -2.0..2.0f64, m3 in -2.0..2.0f64, v in 0.1..2.0f64) {
        let g = Grid::line(-8.0, 8.0, 160);
        let (a, b, c) = (gauss(&g, m1, v), gauss(&g, m2, v), gauss(&g, m3, 2.0 * v));
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert!((ab - tv_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
        let diff = a.difference(&b).unwrap();
        for w in [WeightFunction::one(), WeightFunction::poly(2.0)] {
            prop_assert!(ab <= phi_norm(&diff, &w).unwrap() + 1e-9);
        }
        prop_assert!(wasserstein1(&a, &b).unwrap() <= (m1 - m2).abs() + 0.2);
    }

    #[test]
    fn rebinning_atoms_keeps_mass(xs in proptest::collection::vec(-3.0..3.0f64, 1..40)) {
        let m = Measure::empirical(1, xs).unwrap();
        let r = rebin(&m, &Grid::line(-4.0, 4.0, 33), 1e-12).unwrap();
        prop_assert!((r.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(r.masses().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn rho_and_eta_shapes(t in 0.01..1.0f64, r in 0.0..3.0f64, lambda in 0.05..2.0f64, beta in 0.0..1.0f64) {
        let near = rho(lambda, 0.0, t, &[r]).unwrap();
        let far = rho(lambda, 0.0, t, &[r + 0.1]).unwrap();
        prop_assert!(near > 0.0 && far < near);
        let e = eta_beta(beta, t, &[r]).unwrap();
        prop_assert!(e > 0.0 && e <= eta_beta(beta, t, &[0.0]).unwrap());
    }

    #[test]
    fn spd_inverse_round_trip(l1 in 0.2..5.0f64, l2 in 0.2..5.0f64, th in 0.0..3.2f64) {
        let (c, s) = (th.cos(), th.sin());
        let a = [c * c * l1 + s * s * l2, c * s * (l1 - l2), c * s * (l1 - l2), s * s * l1 + c * c * l2];
        let (inv, det) = spd_inverse_det(&a, 2).unwrap();
        prop_assert!((det - l1 * l2).abs() < 1e-9 * (l1 * l2).max(1.0));
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| a[i * 2 + k] * inv[k * 2 + j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - id).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn determinant_lemma_has_no_violations(seed in any::<u64>(), lambda in 1.0..4.0f64, dim in 1usize..=2) {
        let r = det_perturbation_check(dim, lambda, 1.0, 200, seed).unwrap();
        prop_assert!(r.holds && r.fitted_c <= r.bound_c && r.fitted_c_sum <= r.bound_c_sum);
    }

    #[test]
    fn frozen_gaussian_is_symmetric_in_constant_fields(c in 0.3..2.0f64, x in -2.0..2.0f64, y in -2.0..2.0f64, t in 0.05..1.0f64) {
        let f = CoefficientField::constant(1, c);
        let p = frozen_gaussian(&f, 0.0, &[x], t, &[y]).unwrap();
        let q = frozen_gaussian(&f, 0.0, &[y], t, &[x]).unwrap();
        let exact = (-(x - y).powi(2) / (4.0 * c * t)).exp() / (4.0 * std::f64::consts::PI * c * t).sqrt();
        prop_assert!((p - q).abs() < 1e-14 && (p - exact).abs() < 1e-12 * exact.max(1.0));
    }

    #[test]
    fn example3_sigma_is_affine_on_mixtures(xs in proptest::collection::vec(-3.0..3.0f64, 1..10), ys in proptest::collection::vec(-3.0..3.0f64, 1..10), lam in 0.0..1.0f64, t in 0.01..1.0f64) {
        let e = Example3::new();
        let (m, m2) = (Measure::empirical(1, xs).unwrap(), Measure::empirical(1, ys).unwrap());
        let mix = m.combine(lam, &m2, 1.0 - lam).unwrap();
        let sig = |mm: &Measure| {
            let mut o = [0.0];
            e.slice(t, mm, &SliceCtx::default()).unwrap().sigma(&[0.0], &mut o);
            o[0]
        };
        prop_assert!((sig(&mix) - lam * sig(&m) - (1.0 - lam) * sig(&m2)).abs() < 1e-12);
        prop_assert!(sig(&m) >= e.lambda1 - 1e-12 && sig(&m) <= e.lambda2 + 1e-12);
    }

    #[test]
    fn interaction_is_linear_in_the_kernel(ps in proptest::collection::vec(-3.0..3.0f64, 1..30), x in -1.0..1.0f64, k in -2.0..2.0f64) {
        let (mut u, mut v) = ([0.0], [0.0]);
        interaction_eval(&|_, y, _, o: &mut [f64]| o[0] = y[0], &ps, 1, &[x], None, &mut u);
        interaction_eval(&move |_, y, _, o: &mut [f64]| o[0] = k * y[0] + 1.0, &ps, 1, &[x], None, &mut v);
        prop_assert!((v[0] - (k * u[0] + 1.0)).abs() < 1e-12);
        let ks = ks_statistic(&ps, |z| 0.5 * (1.0 + libm::erf(z / 2f64.sqrt())));
        prop_assert!((0.0..=1.0).contains(&ks));
    }

    #[test]
    fn fpe_steps_conserve_mass_and_sign(mean in -2.0..2.0f64, var in 0.05..1.0f64, a in 0.2..1.5f64, b in -2.0..2.0f64) {
        let g = Grid::line(-6.0, 6.0, 96);
        let f = CoefficientField::new(
            FnModel::new(1, move |_, _, o: &mut [f64]| o[0] = a, move |_, x: &[f64], o: &mut [f64]| o[0] = b - x[0]),
            Regularity { lambda: 5.0, ..Regularity::default() },
        );
        let mut st = FpeState::new(&gauss(&g, mean, var), 0.0).unwrap();
        let m0 = st.mass();
        for _ in 0..20 {
            st = nfpe_step(&st, Coefficients::Field(&f), 5e-3).unwrap();
        }
        prop_assert!((st.mass() - m0).abs() < 1e-10);
        prop_assert!(st.values.iter().all(|v| *v >= 0.0) && st.min_before_clip >= -1e-10);
    }
}
