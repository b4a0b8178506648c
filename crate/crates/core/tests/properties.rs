use nv_relaxo_core::ensemble::{default_tau_grid, synthesize_curve};
use nv_relaxo_core::fitters::{fit, weighted_rate_of};
use nv_relaxo_core::scene::{nv_signal, LabelPlane};
use nv_relaxo_core::spinphysics::{
    induced_rate, site_rate, solve_populations, AxisFrame, LabelSite, Populations, RateEquationParams,
};
use nv_relaxo_core::{
    DecayModel, Family, NvCenter, PhysicalConstants, RatePopulation, Region, Scene, SpinLabelSpec, T1Curve,
};
use proptest::prelude::*;

const NM: f64 = 1e-9;

fn position() -> impl Strategy<Value = [f64; 3]> {
    (-20.0..20.0f64, -20.0..20.0f64, 1.0..20.0f64).prop_map(|(x, y, z)| [x * NM, y * NM, z * NM])
}

fn biexp_curve(a_s: f64, t_s: f64, a_l: f64, t_l: f64, t_max: f64, scale: f64) -> T1Curve {
    let tau = default_tau_grid(t_max, 31).unwrap();
    let m = DecayModel::Biexp { a_short: a_s, t_short: t_s, a_long: a_l, t_long: t_l };
    let y = tau.iter().map(|&t| scale * m.eval(t)).collect();
    T1Curve::new(tau, y).unwrap()
}

proptest! {
    #[test]
    fn rates_add_over_sites(a in position(), b in position(), tilt in 0.0..1.5f64) {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(tilt);
        let spec = SpinLabelSpec::manganese();
        let sa = LabelSite::new(a, 2, spec);
        let sb = LabelSite::new(b, 3, spec);
        let total = induced_rate(&[sa, sb], &frame, &c).unwrap();
        let parts = site_rate(&sa, &frame, &c).unwrap() + site_rate(&sb, &frame, &c).unwrap();
        prop_assert!((total / parts - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_scales_as_inverse_sixth_power(p in position(), k in 0.2..5.0f64, tilt in 0.0..1.5f64) {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(tilt);
        let spec = SpinLabelSpec::manganese();
        let near = site_rate(&LabelSite::new(p, 1, spec), &frame, &c).unwrap();
        let far = site_rate(&LabelSite::new([p[0] * k, p[1] * k, p[2] * k], 1, spec), &frame, &c).unwrap();
        prop_assert!((near / far / k.powi(6) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perpendicular_to_parallel_ratio(r in 1.0..30.0f64) {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(0.0);
        let spec = SpinLabelSpec::manganese();
        let along = site_rate(&LabelSite::new([0.0, 0.0, r * NM], 1, spec), &frame, &c).unwrap();
        let across = site_rate(&LabelSite::new([r * NM, 0.0, 0.0], 1, spec), &frame, &c).unwrap();
        prop_assert!((across / along - 2.5).abs() < 1e-12);
    }

    #[test]
    fn populations_stay_on_simplex(
        k01 in 0.0..1e4f64, k11 in 0.0..1e4f64, a in 0.0..1.0f64, f in 0.0..1.0f64, t in 0.0..1.0f64,
    ) {
        let b = (1.0 - a) * f;
        let p = solve_populations(&RateEquationParams { k01, k11 }, &Populations::new(a, b, 1.0 - a - b), t).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.as_array().iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn difference_signal_ignores_double_quantum(k01 in 1.0..1e4f64, k11 in 0.0..1e5f64, x in 0.0..3.0f64) {
        let t = x / k01;
        let run = |k11: f64, init: Populations| solve_populations(&RateEquationParams { k01, k11 }, &init, t).unwrap();
        let s = |k11| run(k11, Populations::new(1.0, 0.0, 0.0)).n0 - run(k11, Populations::new(0.0, 1.0, 0.0)).n0;
        prop_assert!((s(k11) - s(0.0)).abs() < 1e-10);
    }

    #[test]
    fn ensemble_curves_are_completely_monotone(rates in prop::collection::vec(10.0..1e4f64, 1..40)) {
        let pop = RatePopulation::uniform(rates).unwrap();
        let tau: Vec<f64> = (0..60).map(|k| k as f64 * 2e-5).collect();
        let y = synthesize_curve(&pop, &tau).unwrap().intensity;
        for w in y.windows(3) {
            prop_assert!(w[1] <= w[0] + 1e-15);
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-14);
        }
    }

    #[test]
    fn ensemble_curve_dominates_mean_rate_exponential(rates in prop::collection::vec(10.0..1e4f64, 1..40), t_max in 1e-5..1e-2f64) {
        let pop = RatePopulation::uniform(rates).unwrap();
        let curve = synthesize_curve(&pop, &default_tau_grid(t_max, 16).unwrap()).unwrap();
        for (t, y) in curve.tau.iter().zip(&curve.intensity) {
            prop_assert!(*y >= (-pop.mean_rate() * t).exp() - 1e-14);
        }
    }

    #[test]
    fn curves_are_linear_in_weights(
        ra in prop::collection::vec(10.0..1e4f64, 1..10),
        rb in prop::collection::vec(10.0..1e4f64, 1..10),
        w in 0.05..0.95f64,
    ) {
        let tau = default_tau_grid(1e-3, 21).unwrap();
        let a = synthesize_curve(&RatePopulation::uniform(ra.clone()).unwrap(), &tau).unwrap();
        let b = synthesize_curve(&RatePopulation::uniform(rb.clone()).unwrap(), &tau).unwrap();
        let (na, nb) = (ra.len() as f64, rb.len() as f64);
        let mut rates = ra;
        rates.extend(&rb);
        let weights: Vec<f64> = (0..rates.len())
            .map(|i| if (i as f64) < na { w / na } else { (1.0 - w) / nb })
            .collect();
        let mix = synthesize_curve(&RatePopulation::weighted(rates, weights).unwrap(), &tau).unwrap();
        for i in 0..tau.len() {
            let expected = w * a.intensity[i] + (1.0 - w) * b.intensity[i];
            prop_assert!((mix.intensity[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_rate_is_symmetric(a in 0.01..1.0f64, ta in 1e-5..1e-2f64, b in 0.01..1.0f64, tb in 1e-5..1e-2f64) {
        let m = DecayModel::Biexp { a_short: a, t_short: ta, a_long: b, t_long: tb };
        let swapped = DecayModel::Biexp { a_short: b, t_short: tb, a_long: a, t_long: ta };
        let (x, y) = (weighted_rate_of(&m).unwrap(), weighted_rate_of(&swapped).unwrap());
        prop_assert!((x / y - 1.0).abs() < 1e-14);
    }

    #[test]
    fn signal_is_translation_invariant(
        pts in prop::collection::vec((-15.0..15.0f64, -15.0..15.0f64), 1..12),
        shift in (-50.0..50.0f64, -50.0..50.0f64),
        depth in 3.0..15.0f64,
    ) {
        let c = PhysicalConstants::default();
        let spec = SpinLabelSpec::manganese();
        let build = |dx: f64, dy: f64| {
            let mut s = Scene::empty(Region::centered([dx, dy], 200.0, 200.0), spec);
            s.planes.push(LabelPlane {
                density: 0.0,
                height: 2.0,
                labels_per_point: 4,
                points: pts.iter().map(|&(x, y)| [x + dx, y + dy]).collect(),
            });
            let nv = NvCenter { lateral_position: [dx, dy], depth, axis_tilt: 0.9553, gamma_bg: 100.0 };
            nv_signal(&nv, &s, &c).unwrap()
        };
        let (a, b) = (build(0.0, 0.0), build(shift.0, shift.1));
        prop_assert!((a.delta_gamma / b.delta_gamma - 1.0).abs() < 1e-9);
        let sum: f64 = b.per_source.iter().map(|(_, r)| r).sum();
        prop_assert!((sum - b.delta_gamma).abs() <= 1e-12 * b.delta_gamma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_is_equivariant_under_time_and_amplitude_scaling(
        frac in 0.2..0.8f64, t_s in 5e-5..2e-4f64, ratio in 5.0..20.0f64, k in 0.1..10.0f64, s in 0.1..10.0f64,
    ) {
        let t_l = t_s * ratio;
        let base = fit(&biexp_curve(frac, t_s, 1.0 - frac, t_l, 4.0 * t_l, 1.0), Family::Biexp).unwrap();
        let scaled = fit(&biexp_curve(frac, t_s * k, 1.0 - frac, t_l * k, 4.0 * t_l * k, s), Family::Biexp).unwrap();
        prop_assert!(base.converged && scaled.converged);
        match (base.model, scaled.model) {
            (
                DecayModel::Biexp { a_short: a1, t_short: s1, a_long: b1, t_long: l1 },
                DecayModel::Biexp { a_short: a2, t_short: s2, a_long: b2, t_long: l2 },
            ) => {
                prop_assert!((a2 / (s * a1) - 1.0).abs() < 1e-8);
                prop_assert!((b2 / (s * b1) - 1.0).abs() < 1e-8);
                prop_assert!((s2 / (k * s1) - 1.0).abs() < 1e-8);
                prop_assert!((l2 / (k * l1) - 1.0).abs() < 1e-8);
            }
            other => prop_assert!(false, "unexpected models {other:?}"),
        }
    }

    #[test]
    fn biexp_fit_never_worse_than_single(rates in prop::collection::vec(50.0..5e3f64, 2..30)) {
        let pop = RatePopulation::uniform(rates).unwrap();
        let tau = default_tau_grid(5.0 / pop.mean_rate(), 31).unwrap();
        let curve = synthesize_curve(&pop, &tau).unwrap();
        let single = fit(&curve, Family::SingleExp).unwrap();
        let bi = fit(&curve, Family::Biexp).unwrap();
        prop_assert!(bi.r_squared >= single.r_squared - 1e-9);
    }
}
