//! Independent numerical references: Gauss–Legendre quadrature, a fixed-step
//! RK4 integrator for the three-level rate equation, and the planar dipolar
//! integral evaluated directly.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre over consecutive panels given by `breaks`.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let mut total = 0.0;
    for p in breaks.windows(2) {
        let (a, b) = (p[0], p[1]);
        let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(m + h * xi);
        }
        total += h * s;
    }
    total
}

/// `lo, lo·r, lo·r², …, hi` with `n` panels.
pub fn geometric_breaks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).powf(1.0 / n as f64);
    let mut b: Vec<f64> = (0..=n).map(|k| lo * r.powi(k as i32)).collect();
    b[n] = hi;
    b
}

/// `∫∫ (2 + 3 sin²θ′) / r′⁶ dx dy` over the plane a distance `d` above an NV
/// whose axis is tilted by `tilt` from the normal, out to radius `cutoff`.
/// Polar coordinates about the foot point; the azimuthal trapezoid rule is
/// exact here because the integrand is a quadratic trigonometric polynomial.
pub fn plane_integral(d: f64, tilt: f64, cutoff: f64) -> f64 {
    let (nx, nz) = (tilt.sin(), tilt.cos());
    let n_phi = 64;
    let radial = |rho: f64| {
        let r2 = rho * rho + d * d;
        let mut s = 0.0;
        for k in 0..n_phi {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            let x = rho * phi.cos();
            let c = (nx * x + nz * d) / r2.sqrt();
            s += 2.0 + 3.0 * (1.0 - c * c);
        }
        s * (2.0 * PI / n_phi as f64) / (r2 * r2 * r2) * rho
    };
    let mut breaks = vec![0.0];
    breaks.extend(geometric_breaks(1e-3 * d, cutoff, 80));
    integrate_panels(radial, &breaks, 24)
}

/// `dn/dt` for the populations `(n₀, n₋₁, n₊₁)`.
pub fn rate_rhs(k01: f64, k11: f64, n: [f64; 3]) -> [f64; 3] {
    [
        -2.0 * k01 * n[0] + k01 * (n[1] + n[2]),
        k01 * n[0] - (k01 + k11) * n[1] + k11 * n[2],
        k01 * n[0] - (k01 + k11) * n[2] + k11 * n[1],
    ]
}

pub fn rk4(k01: f64, k11: f64, init: [f64; 3], t: f64, steps: usize) -> [f64; 3] {
    let h = t / steps as f64;
    let mut n = init;
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    for _ in 0..steps {
        let k1 = rate_rhs(k01, k11, n);
        let k2 = rate_rhs(k01, k11, add(n, k1, 0.5 * h));
        let k3 = rate_rhs(k01, k11, add(n, k2, 0.5 * h));
        let k4 = rate_rhs(k01, k11, add(n, k3, h));
        for i in 0..3 {
            n[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    n
}
