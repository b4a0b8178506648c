mod common;

use common::{geometric_breaks, integrate_panels, plane_integral, rk4};
use nv_relaxo_core::rng::stream;
use nv_relaxo_core::scene::{build_plane_scene, build_sa_scene, nv_signal, ComplexGeometry};
use nv_relaxo_core::spinphysics::{solve_populations, t1_signal, Populations, RateEquationParams};
use nv_relaxo_core::stats::{ks_distance, mean};
use nv_relaxo_core::surfacenoise::{
    background_rate, background_rate_cdf, background_rate_pdf, sample_depths, surface_coupling,
};
use nv_relaxo_core::{AxisTilt, DepthDistribution, NvCenter, PhysicalConstants, Region, SpinLabelSpec, SurfaceNoiseModel};
use rand::Rng;

#[test]
fn surface_coupling_matches_planar_quadrature() {
    let constants = PhysicalConstants::default();
    for tilt in [AxisTilt::Magic, AxisTilt::Normal] {
        let model = SurfaceNoiseModel::from_density(0.5, 0.28e-9, 100.0, tilt, &constants).unwrap();
        let spec = model.surface_spin();
        for d in [2.0, 5.0, 10.0, 20.0] {
            let closed = surface_coupling(&model, d, &spec, &constants).unwrap();
            let integral = plane_integral(d, tilt.radians(), 1e4 * d);
            let quad = spec.coupling_amplitude_sq(&constants) * 0.5 * integral * 1e54;
            let rel = (closed / quad - 1.0).abs();
            assert!(rel < 1e-6, "{tilt:?} d={d}: relative error {rel:e}");
        }
    }
}

#[test]
fn tilt_branches_differ_by_three_quarters() {
    let c = PhysicalConstants::default();
    let magic = SurfaceNoiseModel::from_density(0.4, 0.28e-9, 100.0, AxisTilt::Magic, &c).unwrap();
    let normal = SurfaceNoiseModel::from_density(0.4, 0.28e-9, 100.0, AxisTilt::Normal, &c).unwrap();
    let spec = magic.surface_spin();
    let r = surface_coupling(&normal, 4.0, &spec, &c).unwrap() / surface_coupling(&magic, 4.0, &spec, &c).unwrap();
    assert!((r - 0.75).abs() < 1e-15);
}

#[test]
fn populations_match_rk4() {
    let mut rng = stream(2024, "rk4-oracle", 0);
    for _ in 0..100 {
        let k01 = 10f64.powf(rng.random_range(0.0..4.0));
        let k11 = 10f64.powf(rng.random_range(0.0..4.0));
        let a: f64 = rng.random();
        let b: f64 = rng.random::<f64>() * (1.0 - a);
        let init = [a, b, 1.0 - a - b];
        let t = rng.random_range(0.0..5.0) / k01.max(k11);
        let reference = rk4(k01, k11, init, t, 4000);
        let p = solve_populations(
            &RateEquationParams { k01, k11 },
            &Populations::new(init[0], init[1], init[2]),
            t,
        )
        .unwrap();
        for (x, y) in p.as_array().iter().zip(&reference) {
            assert!((x - y).abs() < 1e-8, "k01={k01} k11={k11} t={t}: {x} vs {y}");
        }
    }
}

#[test]
fn difference_signal_is_independent_of_k11() {
    for k01 in [10.0, 300.0, 5e3] {
        for k11 in [0.0, 1.0, 1e3, 1e5] {
            let params = RateEquationParams { k01, k11 };
            for j in 0..=50 {
                let t = 5.0 / (3.0 * k01) * j as f64 / 50.0;
                let zero = solve_populations(&params, &Populations::new(1.0, 0.0, 0.0), t).unwrap();
                let minus = solve_populations(&params, &Populations::new(0.0, 1.0, 0.0), t).unwrap();
                let signal = zero.n0 - minus.n0;
                assert!((signal - t1_signal(k01, t).unwrap()).abs() < 1e-10);
            }
        }
    }
}

fn rate_pdf_breaks(dist: &DepthDistribution, c: f64, bulk: f64, panels: usize) -> Vec<f64> {
    let deep = dist.mu + 14.0 * dist.sigma;
    let lo = c / deep.powi(4);
    let hi = c / dist.d_min.powi(4);
    geometric_breaks(lo, hi, panels).into_iter().map(|x| bulk + x).collect()
}

#[test]
fn background_pdf_integrates_to_one() {
    for dist in [DepthDistribution::ensemble(), DepthDistribution::pillar(), DepthDistribution::pillar_narrow()] {
        let (c, bulk) = (2.7e6, 100.0);
        let breaks = rate_pdf_breaks(&dist, c, bulk, 400);
        let total = integrate_panels(|g| background_rate_pdf(g, &dist, c, bulk), &breaks, 20);
        assert!((total - 1.0).abs() < 1e-6, "{dist:?}: {total}");
    }
}

#[test]
fn background_pdf_matches_transformed_samples() {
    let dist = DepthDistribution::pillar();
    let (c, bulk) = (2.7e6, 100.0);
    let depths = sample_depths(&dist, 1_000_000, 77).unwrap();
    let rates: Vec<f64> = depths.iter().map(|&d| background_rate(c, bulk, d).unwrap()).collect();
    // cumulative integral of the density, interpolated linearly
    let breaks = rate_pdf_breaks(&dist, c, bulk, 4000);
    let mut cdf = vec![0.0];
    for w in breaks.windows(2) {
        let inc = integrate_panels(|g| background_rate_pdf(g, &dist, c, bulk), w, 10);
        cdf.push(cdf.last().unwrap() + inc);
    }
    let lookup = |g: f64| {
        if g <= breaks[0] {
            return 0.0;
        }
        let k = breaks.partition_point(|&b| b <= g).min(breaks.len() - 1);
        let (g0, g1) = (breaks[k - 1], breaks[k]);
        cdf[k - 1] + (cdf[k] - cdf[k - 1]) * (g - g0) / (g1 - g0)
    };
    let ks = ks_distance(&rates, lookup);
    assert!(ks < 0.01, "KS distance {ks}");
    let ks_closed = ks_distance(&rates, |g| background_rate_cdf(g, &dist, c, bulk));
    assert!(ks_closed < 0.01, "KS distance {ks_closed}");
}

#[test]
fn sampled_depth_mean_matches_truncated_moments() {
    let dist = DepthDistribution::ensemble();
    let d = sample_depths(&dist, 1_000_000, 5).unwrap();
    let se = (dist.variance() / d.len() as f64).sqrt();
    assert!((mean(&d) - dist.mean()).abs() < 3.0 * se);
    assert!(d.iter().all(|&x| x >= 2.0));
}

#[test]
fn scene_counts_have_poisson_means() {
    let region = Region::centered([0.0, 0.0], 40.0, 40.0);
    let g = ComplexGeometry::default();
    let n = 10_000;
    let sa: Vec<f64> = (0..n)
        .map(|s| build_sa_scene(0.007, region, &g, SpinLabelSpec::manganese(), s).unwrap().complexes.len() as f64)
        .collect();
    let m = mean(&sa);
    assert!((m - 11.2).abs() < 3.0 * (11.2 / n as f64).sqrt(), "mean complexes {m}");

    let sigma_ub = 1.0 / 81.0;
    let expected = sigma_ub * 1600.0;
    let ub: Vec<f64> = (0..n)
        .map(|s| {
            build_plane_scene(sigma_ub, 2.0, 4, region, SpinLabelSpec::manganese(), s)
                .unwrap()
                .source_count() as f64
        })
        .collect();
    let m = mean(&ub);
    assert!((m - expected).abs() < 3.0 * (expected / n as f64).sqrt(), "mean points {m}");
}

#[test]
fn forty_nanometre_region_captures_most_signal() {
    let constants = PhysicalConstants::default();
    let sigma_ub = 1.0 / 81.0;
    let nv = NvCenter {
        lateral_position: [0.0, 0.0],
        depth: 6.0,
        axis_tilt: AxisTilt::Magic.radians(),
        gamma_bg: 100.0,
    };
    let mean_signal = |size: f64| {
        let region = Region::centered([0.0, 0.0], size, size);
        let v: Vec<f64> = (0..2000)
            .map(|s| {
                let scene = build_plane_scene(sigma_ub, 2.0, 4, region, SpinLabelSpec::manganese(), s).unwrap();
                nv_signal(&nv, &scene, &constants).unwrap().delta_gamma
            })
            .collect();
        mean(&v)
    };
    let ratio = mean_signal(40.0) / mean_signal(200.0);
    assert!(ratio >= 0.95, "ratio {ratio}");
}
