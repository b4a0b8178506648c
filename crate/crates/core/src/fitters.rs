//! Least-squares fitting of T1 curves with single-exponential, biexponential
//! and stretched-exponential models.
//!
//! The optimizer is a Levenberg–Marquardt loop with analytic Jacobians in an
//! unconstrained parameterization: amplitudes and times are fitted as
//! logarithms, the stretch exponent through `β = 2·logistic(b)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::ensemble::T1Curve;
use crate::error::{domain, invalid, Error, Result};
use crate::stats::{compensated_sum, mean};

pub const MAX_ITERATIONS: usize = 500;
/// Relative step size below which the fit is considered converged.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Gradient ∞-norm tolerance, relative to `Σ y²`.
pub const GRADIENT_TOLERANCE: f64 = 1e-12;
/// `T_short / T_long` above which a biexponential fit is reported as collapsed.
pub const COLLAPSE_RATIO: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SingleExp,
    Biexp,
    Stretched,
}

impl Family {
    pub fn n_params(self) -> usize {
        match self {
            Family::SingleExp => 2,
            Family::Biexp => 4,
            Family::Stretched => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::SingleExp => "single_exp",
            Family::Biexp => "biexp",
            Family::Stretched => "stretched",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_exp" | "single" => Ok(Family::SingleExp),
            "biexp" => Ok(Family::Biexp),
            "stretched" => Ok(Family::Stretched),
            other => Err(invalid(format!(
                "unknown model family `{other}` (expected single_exp, biexp or stretched)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum DecayModel {
    /// `A·exp(−t/T)`
    SingleExp { amplitude: f64, time: f64 },
    /// `A_s·exp(−t/T_s) + A_l·exp(−t/T_l)` with `T_s ≤ T_l`.
    Biexp {
        a_short: f64,
        t_short: f64,
        a_long: f64,
        t_long: f64,
    },
    /// `A·exp(−(t/T)^β)`
    Stretched { amplitude: f64, time: f64, beta: f64 },
}

impl DecayModel {
    pub fn family(&self) -> Family {
        match self {
            DecayModel::SingleExp { .. } => Family::SingleExp,
            DecayModel::Biexp { .. } => Family::Biexp,
            DecayModel::Stretched { .. } => Family::Stretched,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DecayModel::SingleExp { amplitude, time } => amplitude * (-t / time).exp(),
            DecayModel::Biexp {
                a_short,
                t_short,
                a_long,
                t_long,
            } => a_short * (-t / t_short).exp() + a_long * (-t / t_long).exp(),
            DecayModel::Stretched {
                amplitude,
                time,
                beta,
            } => amplitude * (-(t / time).powf(beta)).exp(),
        }
    }

    /// Biexponential with components swapped so that `t_short ≤ t_long`.
    pub fn canonical(self) -> Self {
        match self {
            DecayModel::Biexp {
                a_short,
                t_short,
                a_long,
                t_long,
            } if t_short > t_long => DecayModel::Biexp {
                a_short: a_long,
                t_short: t_long,
                a_long: a_short,
                t_long: t_short,
            },
            m => m,
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            DecayModel::SingleExp { amplitude, time } => vec![("amplitude", amplitude), ("time", time)],
            DecayModel::Biexp {
                a_short,
                t_short,
                a_long,
                t_long,
            } => vec![
                ("a_short", a_short),
                ("t_short", t_short),
                ("a_long", a_long),
                ("t_long", t_long),
            ],
            DecayModel::Stretched {
                amplitude,
                time,
                beta,
            } => vec![("amplitude", amplitude), ("time", time), ("beta", beta)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn to_internal(self) -> Vec<f64> {
        match self {
            DecayModel::SingleExp { amplitude, time } => vec![amplitude.ln(), time.ln()],
            DecayModel::Biexp {
                a_short,
                t_short,
                a_long,
                t_long,
            } => vec![a_short.ln(), t_short.ln(), a_long.ln(), t_long.ln()],
            DecayModel::Stretched {
                amplitude,
                time,
                beta,
            } => {
                let q = beta / 2.0;
                vec![amplitude.ln(), time.ln(), (q / (1.0 - q)).ln()]
            }
        }
    }

    fn from_internal(family: Family, p: &[f64]) -> Self {
        match family {
            Family::SingleExp => DecayModel::SingleExp {
                amplitude: p[0].exp(),
                time: p[1].exp(),
            },
            Family::Biexp => DecayModel::Biexp {
                a_short: p[0].exp(),
                t_short: p[1].exp(),
                a_long: p[2].exp(),
                t_long: p[3].exp(),
            },
            Family::Stretched => DecayModel::Stretched {
                amplitude: p[0].exp(),
                time: p[1].exp(),
                beta: 2.0 / (1.0 + (-p[2]).exp()),
            },
        }
    }
}

/// `(A_s/T_s + A_l/T_l) / (A_s + A_l)`, the amplitude-weighted characteristic rate.
pub fn weighted_rate_of(model: &DecayModel) -> Result<f64> {
    match *model {
        DecayModel::Biexp {
            a_short,
            t_short,
            a_long,
            t_long,
        } => {
            let total = a_short + a_long;
            if !(total > 0.0) {
                return Err(domain("biexponential amplitudes sum to zero"));
            }
            Ok((a_short / t_short + a_long / t_long) / total)
        }
        _ => Err(domain("weighted rate requires a biexponential model")),
    }
}

/// Characteristic rates derived from a fitted model, s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerivedRates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_single: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_short: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_long: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_stre: Option<f64>,
}

impl DerivedRates {
    fn of(model: &DecayModel) -> Self {
        match *model {
            DecayModel::SingleExp { time, .. } => Self {
                gamma_single: Some(1.0 / time),
                ..Self::default()
            },
            DecayModel::Biexp { t_short, t_long, .. } => Self {
                gamma_w: weighted_rate_of(model).ok(),
                gamma_short: Some(1.0 / t_short),
                gamma_long: Some(1.0 / t_long),
                ..Self::default()
            },
            DecayModel::Stretched { time, .. } => Self {
                gamma_stre: Some(1.0 / time),
                ..Self::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DecayModel,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Biexponential fit that degenerated to one component; `model` then holds
    /// the equivalent single exponential in biexponential form (`a_short = 0`).
    pub collapsed: bool,
    pub derived_rates: DerivedRates,
}

/// JSON layout of a [`FitResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub derived_rates: DerivedRates,
    pub converged: bool,
    pub collapsed: bool,
    pub iterations: usize,
}

impl From<&FitResult> for FitReport {
    fn from(r: &FitResult) -> Self {
        Self {
            family: r.model.family(),
            params: r.model.params(),
            r_squared: r.r_squared,
            residual_norm: r.residual_norm,
            derived_rates: r.derived_rates,
            converged: r.converged,
            collapsed: r.collapsed,
            iterations: r.iterations,
        }
    }
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FitReport::from(self).serialize(s)
    }
}

impl FitResult {
    fn new(curve: &T1Curve, model: DecayModel, iterations: usize, converged: bool) -> Result<Self> {
        let predicted: Vec<f64> = curve.tau.iter().map(|&t| model.eval(t)).collect();
        let residual_norm = compensated_sum(
            curve
                .intensity
                .iter()
                .zip(&predicted)
                .map(|(y, p)| (y - p) * (y - p)),
        )
        .sqrt();
        Ok(Self {
            model,
            r_squared: crate::stats::r_squared(&curve.intensity, &predicted)?,
            residual_norm,
            iterations,
            converged,
            collapsed: false,
            derived_rates: DerivedRates::of(&model),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitReport::from(self))?)
    }
}

/// Weighted-rate estimate from a converged biexponential fit.
pub fn weighted_rate(fit: &FitResult) -> Result<f64> {
    if fit.model.family() != Family::Biexp {
        return Err(domain("weighted rate requires a biexponential fit"));
    }
    if !fit.converged {
        return Err(domain("weighted rate requires a converged fit"));
    }
    weighted_rate_of(&fit.model)
}

/// `1 − SS_res/SS_tot` of `model` on the curve grid.
pub fn r_squared(curve: &T1Curve, model: &DecayModel) -> Result<f64> {
    let predicted: Vec<f64> = curve.tau.iter().map(|&t| model.eval(t)).collect();
    crate::stats::r_squared(&curve.intensity, &predicted)
}

/// Fits `family` to `curve` from the documented initialization.
pub fn fit(curve: &T1Curve, family: Family) -> Result<FitResult> {
    curve.validate()?;
    let need = family.n_params() + 1;
    if curve.len() < need {
        return Err(invalid(format!(
            "{} fit needs at least {need} points, curve has {}",
            family.name(),
            curve.len()
        )));
    }
    let m = mean(&curve.intensity);
    if curve.intensity.iter().all(|&y| y == m) || curve.intensity.iter().all(|&y| y == curve.intensity[0]) {
        return Err(Error::Degenerate("constant intensity carries no decay information".into()));
    }

    let single_seed = log_linear_seed(curve);
    let single = run(curve, single_seed)?;
    match family {
        Family::SingleExp => Ok(single),
        Family::Stretched => {
            let DecayModel::SingleExp { amplitude, time } = single.model else {
                unreachable!()
            };
            run(
                curve,
                DecayModel::Stretched {
                    amplitude,
                    time,
                    beta: 0.8,
                },
            )
        }
        Family::Biexp => {
            let DecayModel::SingleExp { amplitude, time } = single.model else {
                unreachable!()
            };
            let mut bi = run(
                curve,
                DecayModel::Biexp {
                    a_short: 0.5 * amplitude,
                    t_short: 0.25 * time,
                    a_long: 0.5 * amplitude,
                    t_long: 4.0 * time,
                },
            )?;
            bi.model = bi.model.canonical();
            bi.derived_rates = DerivedRates::of(&bi.model);
            let DecayModel::Biexp { t_short, t_long, .. } = bi.model else {
                unreachable!()
            };
            if t_short / t_long > COLLAPSE_RATIO || bi.r_squared < single.r_squared {
                let model = DecayModel::Biexp {
                    a_short: 0.0,
                    t_short: time,
                    a_long: amplitude,
                    t_long: time,
                };
                let mut out = FitResult::new(curve, model, bi.iterations, single.converged)?;
                out.collapsed = true;
                return Ok(out);
            }
            Ok(bi)
        }
    }
}

/// `ln y = ln A − t/T`, least squares weighted by `y²`, on the positive points.
fn log_linear_seed(curve: &T1Curve) -> DecayModel {
    let pts: Vec<(f64, f64, f64)> = curve
        .tau
        .iter()
        .zip(&curve.intensity)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&t, &y)| (t, y.ln(), y * y))
        .collect();
    let t_span = curve.tau[curve.len() - 1].max(f64::MIN_POSITIVE);
    let fallback_amp = curve.intensity.iter().copied().fold(f64::MIN, f64::max).abs().max(1e-12);
    if pts.len() < 2 {
        return DecayModel::SingleExp {
            amplitude: fallback_amp,
            time: t_span,
        };
    }
    let sw = compensated_sum(pts.iter().map(|p| p.2));
    let mt = compensated_sum(pts.iter().map(|p| p.2 * p.0)) / sw;
    let my = compensated_sum(pts.iter().map(|p| p.2 * p.1)) / sw;
    let stt = compensated_sum(pts.iter().map(|p| p.2 * (p.0 - mt) * (p.0 - mt)));
    let sty = compensated_sum(pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - my)));
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    if !(slope < 0.0) {
        return DecayModel::SingleExp {
            amplitude: fallback_amp,
            time: 10.0 * t_span,
        };
    }
    DecayModel::SingleExp {
        amplitude: (my - slope * mt).exp(),
        time: -1.0 / slope,
    }
}

/// Model values and Jacobian with respect to the internal parameters.
fn evaluate(family: Family, p: &[f64], tau: &[f64], f: &mut DVector<f64>, jac: &mut DMatrix<f64>) {
    match family {
        Family::SingleExp => {
            let (a, inv_t) = (p[0].exp(), (-p[1]).exp());
            for (j, &t) in tau.iter().enumerate() {
                let x = t * inv_t;
                let v = a * (-x).exp();
                f[j] = v;
                jac[(j, 0)] = v;
                jac[(j, 1)] = v * x;
            }
        }
        Family::Biexp => {
            let (a1, inv1, a2, inv2) = (p[0].exp(), (-p[1]).exp(), p[2].exp(), (-p[3]).exp());
            for (j, &t) in tau.iter().enumerate() {
                let (x1, x2) = (t * inv1, t * inv2);
                let v1 = a1 * (-x1).exp();
                let v2 = a2 * (-x2).exp();
                f[j] = v1 + v2;
                jac[(j, 0)] = v1;
                jac[(j, 1)] = v1 * x1;
                jac[(j, 2)] = v2;
                jac[(j, 3)] = v2 * x2;
            }
        }
        Family::Stretched => {
            let a = p[0].exp();
            let inv_t = (-p[1]).exp();
            let q = 1.0 / (1.0 + (-p[2]).exp());
            let beta = 2.0 * q;
            let dbeta = 2.0 * q * (1.0 - q);
            for (j, &t) in tau.iter().enumerate() {
                if t == 0.0 {
                    f[j] = a;
                    jac[(j, 0)] = a;
                    jac[(j, 1)] = 0.0;
                    jac[(j, 2)] = 0.0;
                    continue;
                }
                let lx = (t * inv_t).ln();
                let u = (beta * lx).exp();
                let v = a * (-u).exp();
                f[j] = v;
                jac[(j, 0)] = v;
                jac[(j, 1)] = v * beta * u;
                jac[(j, 2)] = -v * u * lx * dbeta;
            }
        }
    }
}

fn half_cost(f: &DVector<f64>, y: &DVector<f64>) -> f64 {
    0.5 * compensated_sum(f.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)))
}

fn run(curve: &T1Curve, start: DecayModel) -> Result<FitResult> {
    let family = start.family();
    let (p, iterations, converged) = levenberg_marquardt(family, &curve.tau, &curve.intensity, start.to_internal());
    let model = DecayModel::from_internal(family, &p);
    FitResult::new(curve, model, iterations, converged)
}

fn levenberg_marquardt(family: Family, tau: &[f64], y: &[f64], p0: Vec<f64>) -> (Vec<f64>, usize, bool) {
    let n = tau.len();
    let k = family.n_params();
    let y = DVector::from_column_slice(y);
    let gtol = GRADIENT_TOLERANCE * y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut p = DVector::from_vec(p0);
    let mut f = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, k);
    evaluate(family, p.as_slice(), tau, &mut f, &mut jac);
    let mut cost = half_cost(&f, &y);
    let mut lambda = 0.0;

    let mut f_try = DVector::zeros(n);
    let mut jac_try = DMatrix::zeros(n, k);

    for iter in 1..=MAX_ITERATIONS {
        let r = &f - &y;
        let grad = jac.tr_mul(&r);
        if grad.amax() <= gtol {
            return (p.as_slice().to_vec(), iter - 1, true);
        }
        let jtj = jac.tr_mul(&jac);
        let dmax = jtj.diagonal().max();
        if lambda == 0.0 {
            lambda = 1e-3;
        }
        loop {
            let mut m = jtj.clone();
            for i in 0..k {
                m[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * dmax);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return (p.as_slice().to_vec(), iter, true);
                }
                continue;
            };
            let step = chol.solve(&(-&grad));
            let p_try = &p + &step;
            evaluate(family, p_try.as_slice(), tau, &mut f_try, &mut jac_try);
            let cost_try = half_cost(&f_try, &y);
            if cost_try.is_finite() && cost_try < cost {
                let small_step = step.norm() <= STEP_TOLERANCE * (p.norm() + STEP_TOLERANCE);
                p = p_try;
                std::mem::swap(&mut f, &mut f_try);
                std::mem::swap(&mut jac, &mut jac_try);
                cost = cost_try;
                lambda = (lambda / 3.0).max(1e-15);
                if small_step {
                    return (p.as_slice().to_vec(), iter, true);
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                // no descent direction left at working precision
                return (p.as_slice().to_vec(), iter, true);
            }
        }
    }
    (p.as_slice().to_vec(), MAX_ITERATIONS, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::default_tau_grid;
    use approx::assert_relative_eq;

    fn curve_of(model: DecayModel, grid: &[f64]) -> T1Curve {
        T1Curve::new(grid.to_vec(), grid.iter().map(|&t| model.eval(t)).collect()).unwrap()
    }

    #[test]
    fn recovers_exact_single_exponential() {
        let grid = default_tau_grid(4e-3, 31).unwrap();
        let truth = DecayModel::SingleExp { amplitude: 0.93, time: 6.1e-4 };
        let r = fit(&curve_of(truth, &grid), Family::SingleExp).unwrap();
        let DecayModel::SingleExp { amplitude, time } = r.model else { panic!() };
        assert_relative_eq!(amplitude, 0.93, max_relative = 1e-8);
        assert_relative_eq!(time, 6.1e-4, max_relative = 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn recovers_exact_biexponential() {
        let grid = default_tau_grid(4e-3, 31).unwrap();
        let truth = DecayModel::Biexp { a_short: 0.5, t_short: 50e-6, a_long: 0.5, t_long: 800e-6 };
        let r = fit(&curve_of(truth, &grid), Family::Biexp).unwrap();
        let DecayModel::Biexp { a_short, t_short, a_long, t_long } = r.model else { panic!() };
        assert_relative_eq!(a_short, 0.5, max_relative = 1e-6);
        assert_relative_eq!(t_short, 50e-6, max_relative = 1e-6);
        assert_relative_eq!(a_long, 0.5, max_relative = 1e-6);
        assert_relative_eq!(t_long, 800e-6, max_relative = 1e-6);
        assert!((r.r_squared - 1.0).abs() < 1e-10);
        assert!(r.converged && !r.collapsed);
    }

    #[test]
    fn stretched_on_exponential_data_gives_unit_beta() {
        let grid = default_tau_grid(5e-3, 31).unwrap();
        let truth = DecayModel::SingleExp { amplitude: 1.0, time: 1e-3 };
        let r = fit(&curve_of(truth, &grid), Family::Stretched).unwrap();
        let DecayModel::Stretched { beta, .. } = r.model else { panic!() };
        assert!((beta - 1.0).abs() < 0.02, "beta {beta}");
    }

    #[test]
    fn weighted_rate_cases() {
        let m = DecayModel::Biexp { a_short: 0.4, t_short: 100e-6, a_long: 0.6, t_long: 1e-3 };
        assert_relative_eq!(weighted_rate_of(&m).unwrap(), 4600.0, max_relative = 1e-12);
        let m = DecayModel::Biexp { a_short: 0.0, t_short: 3e-6, a_long: 0.6, t_long: 1e-3 };
        assert_relative_eq!(weighted_rate_of(&m).unwrap(), 1000.0, max_relative = 1e-14);
        let m = DecayModel::Biexp { a_short: 0.2, t_short: 2e-4, a_long: 0.9, t_long: 2e-4 };
        assert_relative_eq!(weighted_rate_of(&m).unwrap(), 5000.0, max_relative = 1e-14);
        let single = DecayModel::SingleExp { amplitude: 1.0, time: 1.0 };
        assert!(weighted_rate_of(&single).is_err());
    }

    #[test]
    fn weighted_rate_requires_biexp_fit() {
        let grid = default_tau_grid(4e-3, 31).unwrap();
        let c = curve_of(DecayModel::SingleExp { amplitude: 1.0, time: 1e-3 }, &grid);
        let r = fit(&c, Family::SingleExp).unwrap();
        assert!(matches!(weighted_rate(&r), Err(Error::Domain(_))));
    }

    #[test]
    fn r_squared_reference_models() {
        let grid = default_tau_grid(4e-3, 12).unwrap();
        let truth = DecayModel::SingleExp { amplitude: 1.0, time: 1e-3 };
        let c = curve_of(truth, &grid);
        assert_eq!(r_squared(&c, &truth).unwrap(), 1.0);
        let m = mean(&c.intensity);
        let flat = DecayModel::SingleExp { amplitude: m, time: f64::INFINITY };
        assert_relative_eq!(r_squared(&c, &flat).unwrap(), 0.0, epsilon = 1e-14);
        let bad = DecayModel::SingleExp { amplitude: 5.0, time: 1e-3 };
        assert!(r_squared(&c, &bad).unwrap() < 0.0);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let grid = default_tau_grid(4e-3, 8).unwrap();
        let flat = T1Curve::new(grid.clone(), vec![0.7; 8]).unwrap();
        assert!(matches!(fit(&flat, Family::SingleExp), Err(Error::Degenerate(_))));
        let four = T1Curve::new(vec![0.0, 1e-4, 2e-4, 3e-4], vec![1.0, 0.8, 0.7, 0.6]).unwrap();
        assert!(matches!(fit(&four, Family::Biexp), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn collapsed_biexp_reports_single_equivalent() {
        let grid = default_tau_grid(4e-3, 31).unwrap();
        let c = curve_of(DecayModel::SingleExp { amplitude: 1.0, time: 7e-4 }, &grid);
        let r = fit(&c, Family::Biexp).unwrap();
        let gw = weighted_rate_of(&r.model).unwrap();
        assert_relative_eq!(gw, 1.0 / 7e-4, max_relative = 1e-6);
        assert!(r.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn json_layout() {
        let grid = default_tau_grid(4e-3, 31).unwrap();
        let truth = DecayModel::Biexp { a_short: 0.3, t_short: 1e-4, a_long: 0.7, t_long: 1e-3 };
        let r = fit(&curve_of(truth, &grid), Family::Biexp).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["family"], "biexp");
        assert!(v["params"]["t_long"].is_number());
        assert!(v["derived_rates"]["gamma_w"].is_number());
        assert_eq!(v["converged"], true);
        assert!(v["iterations"].is_number());
    }
}
