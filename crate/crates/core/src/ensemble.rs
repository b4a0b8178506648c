//! Ensemble T1 curves as weighted averages of single-NV exponential decays.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::stats::CompensatedSum;

pub const MIN_CURVE_POINTS: usize = 4;

/// Normalized relaxation signal sampled on a dark-time grid (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Curve {
    pub tau: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Per-point Gaussian noise level, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<Vec<f64>>,
}

impl T1Curve {
    pub fn new(tau: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        let c = Self {
            tau,
            intensity,
            noise_sd: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.intensity.len() {
            return Err(invalid(format!(
                "grid has {} points but intensity has {}",
                self.tau.len(),
                self.intensity.len()
            )));
        }
        if self.tau.len() < MIN_CURVE_POINTS {
            return Err(invalid(format!(
                "a T1 curve needs at least {MIN_CURVE_POINTS} points, got {}",
                self.tau.len()
            )));
        }
        if self.tau.iter().chain(&self.intensity).any(|v| !v.is_finite()) {
            return Err(invalid("curve contains non-finite values"));
        }
        if self.tau[0] < 0.0 || self.tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("dark times must be non-negative and strictly increasing"));
        }
        if let Some(sd) = &self.noise_sd {
            if sd.len() != self.tau.len() || sd.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("noise_sd must have one non-negative value per point"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// CSV with header `tau_s,intensity[,sd]`, 17 significant digits, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.noise_sd {
            Some(sd) => {
                out.push_str("tau_s,intensity,sd\n");
                for ((t, y), s) in self.tau.iter().zip(&self.intensity).zip(sd) {
                    let _ = writeln!(out, "{},{},{}", fmt17(*t), fmt17(*y), fmt17(*s));
                }
            }
            None => {
                out.push_str("tau_s,intensity\n");
                for (t, y) in self.tau.iter().zip(&self.intensity) {
                    let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*y));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let (_, header) = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let header = header.trim_end_matches('\r');
        let with_sd = match header {
            "tau_s,intensity" => false,
            "tau_s,intensity,sd" => true,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `tau_s,intensity[,sd]`, found `{other}`"),
                })
            }
        };
        let ncols = if with_sd { 3 } else { 2 };
        let mut cols: [Vec<f64>; 3] = Default::default();
        for (idx, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncols {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {ncols} fields, found {}", fields.len()),
                });
            }
            for (k, f) in fields.iter().enumerate() {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("`{f}` is not a number"),
                })?;
                cols[k].push(v);
            }
        }
        let [tau, intensity, sd] = cols;
        let curve = Self {
            tau,
            intensity,
            noise_sd: with_sd.then_some(sd),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Shortest-roundtrip is not fixed-width; always emit 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Single-NV relaxation rates with optional weights (uniform when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePopulation {
    pub rates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl RatePopulation {
    pub fn uniform(rates: Vec<f64>) -> Result<Self> {
        let p = Self { rates, weights: None };
        p.validate()?;
        Ok(p)
    }

    pub fn weighted(rates: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let p = Self {
            rates,
            weights: Some(weights),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(invalid("rate population is empty"));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("all rates must be positive and finite"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.rates.len() {
                return Err(invalid("one weight per rate required"));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("weights must be non-negative"));
            }
            let total: f64 = w.iter().copied().collect::<CompensatedSum>().value();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("weights must sum to 1, got {total}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `Σ wᵢ Γᵢ`.
    pub fn mean_rate(&self) -> f64 {
        self.mean_of(|r| r)
    }

    fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        match &self.weights {
            None => {
                let s: CompensatedSum = self.rates.iter().map(|&r| f(r)).collect();
                s.value() / self.rates.len() as f64
            }
            Some(w) => self
                .rates
                .iter()
                .zip(w)
                .map(|(&r, &wi)| wi * f(r))
                .collect::<CompensatedSum>()
                .value(),
        }
    }
}

/// `I(τⱼ) = Σᵢ wᵢ exp(−Γᵢ τⱼ)`; each grid point is an independent compensated sum.
pub fn synthesize_curve(pop: &RatePopulation, tau_grid: &[f64]) -> Result<T1Curve> {
    pop.validate()?;
    let intensity: Vec<f64> = tau_grid
        .par_iter()
        .map(|&t| pop.mean_of(|r| (-r * t).exp()))
        .collect();
    T1Curve::new(tau_grid.to_vec(), intensity)
}

/// Adds i.i.d. `N(0, sd²)` to every intensity point.
pub fn add_measurement_noise(curve: &T1Curve, sd: f64, seed: u64) -> Result<T1Curve> {
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(invalid(format!("noise sd must be >= 0, got {sd}")));
    }
    if sd == 0.0 {
        return Ok(curve.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| invalid(e.to_string()))?;
    let mut rng = rng::stream(seed, "measurement-noise", 0);
    let intensity = curve
        .intensity
        .iter()
        .map(|y| y + normal.sample(&mut rng))
        .collect();
    Ok(T1Curve {
        tau: curve.tau.clone(),
        intensity,
        noise_sd: Some(vec![sd; curve.len()]),
    })
}

/// `{0}` followed by `n_points − 1` log-spaced times from `t_max/10³` to `t_max`.
pub fn default_tau_grid(t_max: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points < MIN_CURVE_POINTS {
        return Err(invalid(format!("grid needs at least {MIN_CURVE_POINTS} points")));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(invalid(format!("t_max must be positive, got {t_max}")));
    }
    let m = n_points - 1;
    let lo = (t_max / 1e3).ln();
    let step = 1e3f64.ln() / (m - 1) as f64;
    let mut grid = Vec::with_capacity(n_points);
    grid.push(0.0);
    grid.extend((0..m).map(|k| (lo + step * k as f64).exp()));
    grid[1] = t_max / 1e3;
    grid[m] = t_max;
    Ok(grid)
}
