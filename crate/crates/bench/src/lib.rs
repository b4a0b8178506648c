//! Fixtures shared by the benchmarks.

use nv_relaxo_core::ensemble::{default_tau_grid, synthesize_curve};
use nv_relaxo_core::inference::EnsembleModel;
use nv_relaxo_core::{RatePopulation, T1Curve};

/// Background rates of a default-sized ensemble at 0.4 nm⁻².
pub fn ensemble_population() -> RatePopulation {
    let rates = EnsembleModel::default().background_rates(0.40).expect("default model is valid");
    RatePopulation::uniform(rates).expect("rates are positive")
}

/// Noise-free 31-point curve from [`ensemble_population`].
pub fn ensemble_curve() -> T1Curve {
    let tau = default_tau_grid(1.8e-3, 31).expect("valid grid");
    synthesize_curve(&ensemble_population(), &tau).expect("valid population")
}
