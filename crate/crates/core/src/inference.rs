//! Inverse problems on top of the forward models: grid scans of densities and
//! coefficients, single-NV Monte Carlo, the dominance probability map and the
//! comparison of ensemble rate estimators.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::ensemble::{add_measurement_noise, default_tau_grid, synthesize_curve, RatePopulation, T1Curve};
use crate::error::{domain, invalid, Error, Result};
use crate::fitters::{fit, weighted_rate_of, DecayModel, Family, FitResult};
use crate::rng;
use crate::scene::{build_plane_scene, build_sa_scene, nv_signal, ComplexGeometry, NvCenter, Region};
use crate::spinphysics::{PhysicalConstants, SpinLabelSpec};
use crate::stats::{
    compensated_sum, freedman_diaconis_edges, histogram_counts, linear_fit, mean, r_squared, uniform_edges,
    LinearFit,
};
use crate::surfacenoise::{
    background_rate_cdf, background_rate_pdf, sample_depths, AxisTilt, DepthDistribution, SurfaceNoiseModel,
};

/// Smallest population used to synthesize a model ensemble curve.
pub const MIN_ENSEMBLE_NVS: usize = 40_000;
pub const MIN_HISTOGRAM_RATES: usize = 50;
pub const MIN_SA_OBSERVATIONS: usize = 30;
pub const DEFAULT_DOMINANCE: f64 = 0.7;
pub const DEFAULT_CONTOUR_LEVEL: f64 = 0.5;
pub const DEFAULT_SA_CUTOFF: f64 = 1e4;
pub const DEFAULT_GAMMA_BG_MAX: f64 = 2000.0;

/// Goodness-of-fit measure used by distribution-matching scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    /// R² between observed and model bin densities.
    #[default]
    RSquared,
    /// Log-likelihood of the observations under the model.
    LogLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityScanResult {
    pub scanned_values: Vec<f64>,
    pub scores: Vec<f64>,
    pub best: f64,
    pub best_score: f64,
    /// Smallest and largest scanned value scoring within `interval_fraction`
    /// of the best score.
    pub interval: [f64; 2],
    pub interval_fraction: f64,
}

impl DensityScanResult {
    pub fn from_scores(values: Vec<f64>, scores: Vec<f64>, interval_fraction: f64) -> Result<Self> {
        if values.is_empty() || values.len() != scores.len() {
            return Err(invalid("scan needs one score per value"));
        }
        if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Degenerate(format!("score at {} is not finite", values[k])));
        }
        let (ib, &best_score) = scores
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, s)| if *s > *acc.1 { (i, s) } else { acc });
        let tol = interval_fraction * best_score.abs();
        let inside: Vec<f64> = values
            .iter()
            .zip(&scores)
            .filter(|(_, &s)| s >= best_score - tol)
            .map(|(&v, _)| v)
            .collect();
        let lo = inside.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            best: values[ib],
            best_score,
            scanned_values: values,
            scores,
            interval: [lo, hi],
            interval_fraction,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two-column `value score` text for plotting.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# value score\n");
        for (v, s) in self.scanned_values.iter().zip(&self.scores) {
            let _ = writeln!(out, "{v:.16e} {s:.16e}");
        }
        out
    }
}

fn check_scan(scan: &[f64], allow_zero: bool) -> Result<()> {
    if scan.is_empty() {
        return Err(invalid("scan grid is empty"));
    }
    let ok = scan
        .iter()
        .all(|v| v.is_finite() && if allow_zero { *v >= 0.0 } else { *v > 0.0 });
    if !ok {
        return Err(invalid("scan values must be positive and finite"));
    }
    Ok(())
}

/// `n` values geometrically spaced over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(invalid("geometric grid needs 0 < lo < hi and n >= 2"));
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|k| lo * (r * k as f64).exp()).collect();
    g[n - 1] = hi;
    Ok(g)
}

/// Areal density with mean nearest-label spacing `spacing_nm` (`σ = s⁻²`).
pub fn density_for_spacing(spacing_nm: f64) -> f64 {
    if spacing_nm.is_infinite() {
        0.0
    } else {
        1.0 / (spacing_nm * spacing_nm)
    }
}

// ---------------------------------------------------------------------------
// surface density from an ensemble curve

/// Forward model of a bare-surface NV ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleModel {
    pub depth: DepthDistribution,
    pub tau_c_surf: f64,
    pub gamma_bulk: f64,
    pub axis_tilt: AxisTilt,
    pub n_nv: usize,
    pub seed: u64,
    pub constants: PhysicalConstants,
}

impl Default for EnsembleModel {
    fn default() -> Self {
        Self {
            depth: DepthDistribution::ensemble(),
            tau_c_surf: 0.28e-9,
            gamma_bulk: 100.0,
            axis_tilt: AxisTilt::Magic,
            n_nv: MIN_ENSEMBLE_NVS,
            seed: 0,
            constants: PhysicalConstants::default(),
        }
    }
}

impl EnsembleModel {
    pub fn surface_model(&self, sigma_surf: f64) -> Result<SurfaceNoiseModel> {
        SurfaceNoiseModel::from_density(
            sigma_surf,
            self.tau_c_surf,
            self.gamma_bulk,
            self.axis_tilt,
            &self.constants,
        )
    }

    pub fn depths(&self) -> Result<Vec<f64>> {
        sample_depths(&self.depth, self.n_nv, self.seed)
    }

    /// Per-NV background rates at surface density `sigma_surf`.
    pub fn background_rates(&self, sigma_surf: f64) -> Result<Vec<f64>> {
        let model = self.surface_model(sigma_surf)?;
        Ok(rates_from_depths(&self.depths()?, model.c_surf, model.gamma_bulk))
    }

    /// Noiseless ensemble curve at `sigma_surf` on `tau`.
    pub fn curve(&self, sigma_surf: f64, tau: &[f64]) -> Result<T1Curve> {
        synthesize_curve(&RatePopulation::uniform(self.background_rates(sigma_surf)?)?, tau)
    }
}

fn rates_from_depths(depths: &[f64], c_surf: f64, gamma_bulk: f64) -> Vec<f64> {
    depths
        .par_iter()
        .map(|&d| {
            let d2 = d * d;
            gamma_bulk + c_surf / (d2 * d2)
        })
        .collect()
}

/// Scans `sigma_surf` (nm⁻²) by R² between the model ensemble curve and `target`.
pub fn infer_surface_density_from_curve(
    target: &T1Curve,
    model: &EnsembleModel,
    scan: &[f64],
    interval_fraction: f64,
) -> Result<DensityScanResult> {
    target.validate()?;
    check_scan(scan, true)?;
    if model.n_nv < MIN_ENSEMBLE_NVS {
        return Err(invalid(format!(
            "model ensemble needs at least {MIN_ENSEMBLE_NVS} NVs, got {}",
            model.n_nv
        )));
    }
    let depths = model.depths()?;
    let per_density = model.surface_model(1.0)?.c_surf;
    let scores = scan
        .iter()
        .map(|&sigma| {
            let rates = rates_from_depths(&depths, per_density * sigma, model.gamma_bulk);
            let curve = synthesize_curve(&RatePopulation::uniform(rates)?, &target.tau)?;
            r_squared(&target.intensity, &curve.intensity)
        })
        .collect::<Result<Vec<f64>>>()?;
    DensityScanResult::from_scores(scan.to_vec(), scores, interval_fraction)
}

// ---------------------------------------------------------------------------
// c_surf from a background-rate histogram

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramFitConfig {
    pub depth: DepthDistribution,
    pub gamma_bulk: f64,
    /// Cap on the Freedman–Diaconis bin count.
    pub max_bins: usize,
    pub score: Score,
    pub interval_fraction: f64,
}

impl Default for HistogramFitConfig {
    fn default() -> Self {
        Self {
            depth: DepthDistribution::pillar(),
            gamma_bulk: 100.0,
            max_bins: 2048,
            score: Score::RSquared,
            interval_fraction: 0.01,
        }
    }
}

/// Scans `c_surf` (s⁻¹·nm⁴) by matching the background-rate density to the
/// histogram of measured rates.
pub fn infer_c_surf_from_histogram(
    rates: &[f64],
    config: &HistogramFitConfig,
    scan: &[f64],
) -> Result<DensityScanResult> {
    if rates.len() < MIN_HISTOGRAM_RATES {
        return Err(invalid(format!(
            "need at least {MIN_HISTOGRAM_RATES} rates, got {}",
            rates.len()
        )));
    }
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(invalid("rates must be finite"));
    }
    check_scan(scan, false)?;
    config.depth.validate()?;
    let edges = freedman_diaconis_edges(rates, config.max_bins)?;
    let counts = histogram_counts(&edges, rates);
    let n = rates.len() as f64;
    let observed: Vec<f64> = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
        .collect();
    let (dist, bulk) = (config.depth, config.gamma_bulk);
    let scores: Vec<f64> = scan
        .par_iter()
        .map(|&c| match config.score {
            Score::RSquared => {
                let predicted: Vec<f64> = edges
                    .windows(2)
                    .map(|w| {
                        let p = background_rate_cdf(w[1], &dist, c, bulk) - background_rate_cdf(w[0], &dist, c, bulk);
                        p / (w[1] - w[0])
                    })
                    .collect();
                r_squared(&observed, &predicted)
            }
            Score::LogLikelihood => Ok(compensated_sum(
                rates
                    .iter()
                    .map(|&g| background_rate_pdf(g, &dist, c, bulk).max(f64::MIN_POSITIVE).ln()),
            )),
        })
        .collect::<Result<Vec<f64>>>()?;
    DensityScanResult::from_scores(scan.to_vec(), scores, config.interval_fraction)
}

// ---------------------------------------------------------------------------
// label spacing from an ensemble rate change

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSpacingConfig {
    pub depth: DepthDistribution,
    /// Label plane height above the surface, nm.
    pub plane_height: f64,
    pub labels_per_point: u32,
    pub label_spec: SpinLabelSpec,
    pub axis_tilt: AxisTilt,
    /// Edge of the square region simulated around each NV, nm.
    pub region_size: f64,
    /// NVs averaged per simulated density.
    pub n_nv: usize,
    /// Densities (nm⁻²) at which the mean rate change is simulated.
    pub densities: Vec<f64>,
    pub seed: u64,
    pub constants: PhysicalConstants,
}

impl Default for LabelSpacingConfig {
    fn default() -> Self {
        Self {
            depth: DepthDistribution::ensemble(),
            plane_height: 2.0,
            labels_per_point: 4,
            label_spec: SpinLabelSpec::manganese(),
            axis_tilt: AxisTilt::Magic,
            region_size: 40.0,
            n_nv: 20_000,
            densities: [f64::INFINITY, 30.0, 20.0, 15.0, 12.0, 10.0, 9.0, 8.0, 7.0, 6.0]
                .iter()
                .map(|&s| density_for_spacing(s))
                .collect(),
            seed: 0,
            constants: PhysicalConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpacingResult {
    pub densities: Vec<f64>,
    pub mean_delta_gamma: Vec<f64>,
    pub fit: LinearFit,
    /// Density interval (nm⁻²) matching `delta_gamma ∓ sd`.
    pub density_interval: [f64; 2],
    pub density_estimate: f64,
    pub spacing_estimate: Option<f64>,
    pub spacing_min: f64,
    /// `None` when the lower edge of the rate band falls below the smallest
    /// simulated signal, so the spacing is not bounded above.
    pub spacing_max: Option<f64>,
    pub below_simulation_floor: bool,
}

/// Mean label-induced rate over an NV ensemble covered by a uniform label
/// plane of the given density.
pub fn mean_plane_signal(config: &LabelSpacingConfig, density: f64) -> Result<f64> {
    let depths = sample_depths(&config.depth, config.n_nv, config.seed)?;
    let region = Region::centered([0.0, 0.0], config.region_size, config.region_size);
    let tilt = config.axis_tilt.radians();
    let signals = depths
        .par_iter()
        .enumerate()
        .map(|(i, &depth)| {
            let scene = build_plane_scene(
                density,
                config.plane_height,
                config.labels_per_point,
                region,
                config.label_spec,
                rng::derive_seed(config.seed, "plane-nv", i as u64),
            )?;
            let nv = NvCenter {
                lateral_position: [0.0, 0.0],
                depth,
                axis_tilt: tilt,
                gamma_bg: 0.0,
            };
            Ok(nv_signal(&nv, &scene, &config.constants)?.delta_gamma)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&signals))
}

/// Inverts an ensemble rate change `delta_gamma ± sd` (s⁻¹) to a label density
/// and nearest-label spacing through a linear fit of the simulated response.
pub fn infer_label_spacing(delta_gamma: f64, sd: f64, config: &LabelSpacingConfig) -> Result<LabelSpacingResult> {
    if !(delta_gamma.is_finite() && delta_gamma > 0.0) {
        return Err(domain(format!("rate change must be positive, got {delta_gamma}")));
    }
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(domain(format!("sd must be >= 0, got {sd}")));
    }
    check_scan(&config.densities, true)?;
    if config.densities.iter().filter(|&&d| d > 0.0).count() < 2 {
        return Err(invalid("need at least two positive densities"));
    }
    let means = config
        .densities
        .iter()
        .map(|&s| mean_plane_signal(config, s))
        .collect::<Result<Vec<f64>>>()?;
    let lf = linear_fit(&config.densities, &means)?;
    if !(lf.slope > 0.0) {
        return Err(Error::Degenerate("simulated response does not increase with density".into()));
    }
    let invert = |g: f64| (g - lf.intercept) / lf.slope;
    let smallest = config
        .densities
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lo = invert(delta_gamma - sd);
    let hi = invert(delta_gamma + sd);
    let est = invert(delta_gamma);
    let below = lo < smallest;
    let spacing = |s: f64| if s > 0.0 { Some(s.powf(-0.5)) } else { None };
    Ok(LabelSpacingResult {
        densities: config.densities.clone(),
        mean_delta_gamma: means,
        fit: lf,
        density_interval: [lo.max(0.0), hi.max(0.0)],
        density_estimate: est,
        spacing_estimate: spacing(est),
        spacing_min: spacing(hi).unwrap_or(f64::INFINITY),
        spacing_max: if below { None } else { spacing(lo) },
        below_simulation_floor: below,
    })
}

// ---------------------------------------------------------------------------
// single-NV Monte Carlo

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleNvConfig {
    pub depth: DepthDistribution,
    pub c_surf: f64,
    pub gamma_bulk: f64,
    pub axis_tilt: AxisTilt,
    pub region_size: f64,
    /// NV lattice pitch, nm.
    pub lattice_spacing: f64,
    pub geometry: ComplexGeometry,
    pub label_spec: SpinLabelSpec,
    /// NVs with a larger background rate are discarded.
    pub gamma_bg_max: f64,
    /// Gaussian read-out noise added to every rate change, s⁻¹.
    pub delta_gamma_noise_sd: f64,
    pub constants: PhysicalConstants,
}

impl Default for SingleNvConfig {
    fn default() -> Self {
        Self {
            depth: DepthDistribution::pillar(),
            c_surf: 2.7e6,
            gamma_bulk: 100.0,
            axis_tilt: AxisTilt::Magic,
            region_size: 40.0,
            lattice_spacing: 100.0,
            geometry: ComplexGeometry::default(),
            label_spec: SpinLabelSpec::manganese(),
            gamma_bg_max: DEFAULT_GAMMA_BG_MAX,
            delta_gamma_noise_sd: 0.0,
            constants: PhysicalConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleNvEvent {
    pub index: usize,
    pub depth: f64,
    pub gamma_bg: f64,
    /// Observed rate change, including read-out noise.
    pub delta_gamma: f64,
    /// Noise-free rate change.
    pub delta_gamma_true: f64,
    /// Per-complex fractions of the noise-free rate change.
    pub shares: Vec<f64>,
}

impl SingleNvEvent {
    pub fn max_share(&self) -> f64 {
        self.shares.iter().copied().fold(0.0, f64::max)
    }
}

/// Simulates `n_nv` lattice NVs under streptavidin complexes at `sigma_sa`
/// (nm⁻²), each with its own scene, and keeps those passing the background filter.
pub fn simulate_single_nv_signals(
    config: &SingleNvConfig,
    sigma_sa: f64,
    n_nv: usize,
    seed: u64,
) -> Result<Vec<SingleNvEvent>> {
    if n_nv == 0 {
        return Err(invalid("need at least one NV"));
    }
    config.depth.validate()?;
    let noise = if config.delta_gamma_noise_sd > 0.0 {
        Some(Normal::new(0.0, config.delta_gamma_noise_sd).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let side = (n_nv as f64).sqrt().ceil() as usize;
    let tilt = config.axis_tilt.radians();
    let events = (0..n_nv)
        .into_par_iter()
        .map(|i| {
            let mut s = rng::stream(seed, "single-nv", i as u64);
            let depth = config.depth.sample(&mut s)?;
            let d2 = depth * depth;
            let gamma_bg = config.gamma_bulk + config.c_surf / (d2 * d2);
            if gamma_bg >= config.gamma_bg_max {
                return Ok(None);
            }
            let xy = [
                (i % side) as f64 * config.lattice_spacing,
                (i / side) as f64 * config.lattice_spacing,
            ];
            let region = Region::centered(xy, config.region_size, config.region_size);
            let scene = build_sa_scene(
                sigma_sa,
                region,
                &config.geometry,
                config.label_spec,
                rng::derive_seed(seed, "single-nv-scene", i as u64),
            )?;
            let nv = NvCenter {
                lateral_position: xy,
                depth,
                axis_tilt: tilt,
                gamma_bg,
            };
            let sig = nv_signal(&nv, &scene, &config.constants)?;
            let observed = match &noise {
                Some(n) => sig.delta_gamma + n.sample(&mut s),
                None => sig.delta_gamma,
            };
            Ok(Some(SingleNvEvent {
                index: i,
                depth,
                gamma_bg,
                delta_gamma: observed,
                delta_gamma_true: sig.delta_gamma,
                shares: sig.shares(),
            }))
        })
        .collect::<Result<Vec<Option<SingleNvEvent>>>>()?;
    Ok(events.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// streptavidin density from single-NV rate changes

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaDensityConfig {
    pub single: SingleNvConfig,
    /// Simulated NVs per scanned density (before the background filter).
    pub n_sim: usize,
    /// Only rate changes below this value enter the comparison, s⁻¹.
    pub cutoff: f64,
    pub max_bins: usize,
    pub score: Score,
    pub seed: u64,
    pub interval_fraction: f64,
}

impl Default for SaDensityConfig {
    fn default() -> Self {
        Self {
            single: SingleNvConfig::default(),
            n_sim: 10_000,
            cutoff: DEFAULT_SA_CUTOFF,
            max_bins: 64,
            score: Score::RSquared,
            seed: 0,
            interval_fraction: 0.05,
        }
    }
}

fn normalized_histogram(edges: &[f64], data: &[f64]) -> Vec<f64> {
    let counts = histogram_counts(edges, data);
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| if total == 0 { 0.0 } else { c as f64 / (total as f64 * (w[1] - w[0])) })
        .collect()
}

/// Scans `sigma_sa` (nm⁻²) by comparing simulated and observed histograms of
/// single-NV rate changes below the cutoff.
pub fn infer_sa_density(observed: &[f64], config: &SaDensityConfig, scan: &[f64]) -> Result<DensityScanResult> {
    if observed.len() < MIN_SA_OBSERVATIONS {
        return Err(invalid(format!(
            "need at least {MIN_SA_OBSERVATIONS} observations, got {}",
            observed.len()
        )));
    }
    check_scan(scan, true)?;
    let kept: Vec<f64> = observed
        .iter()
        .copied()
        .filter(|&g| g.is_finite() && g >= 0.0 && g < config.cutoff)
        .collect();
    if kept.len() < 2 {
        return Err(Error::Degenerate("fewer than two observations below the cutoff".into()));
    }
    let fd = freedman_diaconis_edges(&kept, config.max_bins)?;
    let width = fd[1] - fd[0];
    let bins = ((config.cutoff / width).ceil() as usize).clamp(1, config.max_bins);
    let edges = uniform_edges(0.0, config.cutoff, bins);
    let obs_density = normalized_histogram(&edges, &kept);
    let scores = scan
        .iter()
        .map(|&sigma| {
            let sim: Vec<f64> = simulate_single_nv_signals(&config.single, sigma, config.n_sim, config.seed)?
                .into_iter()
                .map(|e| e.delta_gamma)
                .filter(|&g| g >= 0.0 && g < config.cutoff)
                .collect();
            let sim_density = normalized_histogram(&edges, &sim);
            match config.score {
                Score::RSquared => r_squared(&obs_density, &sim_density),
                Score::LogLikelihood => {
                    // add-one smoothing keeps empty model bins finite
                    let counts = histogram_counts(&edges, &sim);
                    let total = counts.iter().sum::<u64>() as f64 + counts.len() as f64;
                    let obs_counts = histogram_counts(&edges, &kept);
                    Ok(compensated_sum(
                        obs_counts
                            .iter()
                            .zip(&counts)
                            .map(|(&o, &c)| o as f64 * ((c as f64 + 1.0) / total).ln()),
                    ))
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    DensityScanResult::from_scores(scan.to_vec(), scores, config.interval_fraction)
}

// ---------------------------------------------------------------------------
// probability map

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub single: SingleNvConfig,
    pub n_nv: usize,
    pub seed: u64,
    pub gamma_bg_bins: usize,
    pub delta_gamma_max: f64,
    pub delta_gamma_bins: usize,
    /// Share above which one complex is said to dominate the signal.
    pub dominance: f64,
    pub contour_level: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            single: SingleNvConfig::default(),
            n_nv: 10_000,
            seed: 0,
            gamma_bg_bins: 19,
            delta_gamma_max: DEFAULT_SA_CUTOFF,
            delta_gamma_bins: 50,
            dominance: DEFAULT_DOMINANCE,
            contour_level: DEFAULT_CONTOUR_LEVEL,
        }
    }
}

/// Conditional density of the rate change given the background rate, and the
/// single-complex dominance probability, on a regular grid.
///
/// Matrices are indexed `[delta_gamma bin][gamma_bg bin]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pub gamma_bg_edges: Vec<f64>,
    pub delta_gamma_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    /// Events per background column that fall inside the rate-change axis.
    pub column_events: Vec<u64>,
    pub density: Vec<Vec<f64>>,
    /// `None` for bins without any event with a non-zero signal.
    pub p_single: Vec<Vec<Option<f64>>>,
    /// `(gamma_bg, delta_gamma)` points where `p_single` crosses `contour_level`.
    pub contour: Vec<[f64; 2]>,
    pub dominance: f64,
    pub contour_level: f64,
    /// No simulated NV saw a non-zero signal.
    pub empty: bool,
    pub n_events: usize,
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn bin_of(lo: f64, width: f64, n: usize, x: f64) -> Option<usize> {
    if !(x >= lo) {
        return None;
    }
    let k = ((x - lo) / width) as usize;
    if k < n {
        Some(k)
    } else if x == lo + width * n as f64 {
        Some(n - 1)
    } else {
        None
    }
}

impl ProbabilityMap {
    pub fn from_events(events: &[SingleNvEvent], config: &MapConfig) -> Result<Self> {
        let (nx, ny) = (config.gamma_bg_bins, config.delta_gamma_bins);
        if nx == 0 || ny == 0 {
            return Err(invalid("map needs at least one bin per axis"));
        }
        let gb_lo = config.single.gamma_bulk;
        let gb_hi = config.single.gamma_bg_max;
        if !(gb_hi > gb_lo && config.delta_gamma_max > 0.0) {
            return Err(invalid("map axes must have positive extent"));
        }
        let gx = uniform_edges(gb_lo, gb_hi, nx);
        let gy = uniform_edges(0.0, config.delta_gamma_max, ny);
        let (wx, wy) = ((gb_hi - gb_lo) / nx as f64, config.delta_gamma_max / ny as f64);
        let mut counts = vec![vec![0u64; nx]; ny];
        let mut signal = vec![vec![0u64; nx]; ny];
        let mut dominant = vec![vec![0u64; nx]; ny];
        for e in events {
            let (Some(i), Some(j)) = (bin_of(gb_lo, wx, nx, e.gamma_bg), bin_of(0.0, wy, ny, e.delta_gamma)) else {
                continue;
            };
            counts[j][i] += 1;
            if e.delta_gamma_true > 0.0 {
                signal[j][i] += 1;
                if e.max_share() > config.dominance {
                    dominant[j][i] += 1;
                }
            }
        }
        let column_events: Vec<u64> = (0..nx).map(|i| (0..ny).map(|j| counts[j][i]).sum()).collect();
        let density = (0..ny)
            .map(|j| {
                (0..nx)
                    .map(|i| match column_events[i] {
                        0 => 0.0,
                        n => counts[j][i] as f64 / (n as f64 * wy),
                    })
                    .collect()
            })
            .collect();
        let p_single: Vec<Vec<Option<f64>>> = (0..ny)
            .map(|j| {
                (0..nx)
                    .map(|i| match signal[j][i] {
                        0 => None,
                        n => Some(dominant[j][i] as f64 / n as f64),
                    })
                    .collect()
            })
            .collect();
        let contour = extract_contour(&p_single, &centers(&gx), &centers(&gy), config.contour_level);
        let empty = !events.iter().any(|e| e.delta_gamma_true > 0.0);
        Ok(Self {
            gamma_bg_edges: gx,
            delta_gamma_edges: gy,
            counts,
            column_events,
            density,
            p_single,
            contour,
            dominance: config.dominance,
            contour_level: config.contour_level,
            empty,
            n_events: events.len(),
        })
    }

    /// `Σ density · Δ(ΔΓ)` for background column `i`.
    pub fn column_integral(&self, i: usize) -> f64 {
        let w = &self.delta_gamma_edges;
        compensated_sum(self.density.iter().enumerate().map(|(j, row)| row[i] * (w[j + 1] - w[j])))
    }

    /// Fraction of binned events lying in bins with `p_single < level`.
    pub fn mass_below(&self, level: f64) -> f64 {
        let mut below = 0u64;
        let mut total = 0u64;
        for (row_c, row_p) in self.counts.iter().zip(&self.p_single) {
            for (&c, p) in row_c.iter().zip(row_p) {
                total += c;
                if matches!(p, Some(v) if *v < level) {
                    below += c;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            below as f64 / total as f64
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// gnuplot `matrix nonuniform` block: first row `N x₁ … x_N`, then one row
    /// `y_j z_j1 … z_jN` per rate-change bin. Undefined values print as NaN.
    pub fn gnuplot_matrix(&self, values: &[Vec<Option<f64>>]) -> String {
        let xs = centers(&self.gamma_bg_edges);
        let ys = centers(&self.delta_gamma_edges);
        let mut out = String::new();
        let _ = write!(out, "{}", xs.len());
        for x in &xs {
            let _ = write!(out, " {x:.10e}");
        }
        out.push('\n');
        for (y, row) in ys.iter().zip(values) {
            let _ = write!(out, "{y:.10e}");
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, " {v:.10e}");
                    }
                    None => out.push_str(" NaN"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn density_matrix(&self) -> String {
        let wrapped: Vec<Vec<Option<f64>>> = self
            .density
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.column_events)
                    .map(|(&v, &n)| if n == 0 { None } else { Some(v) })
                    .collect()
            })
            .collect();
        self.gnuplot_matrix(&wrapped)
    }

    pub fn p_single_matrix(&self) -> String {
        self.gnuplot_matrix(&self.p_single)
    }

    pub fn contour_csv(&self) -> String {
        let mut out = String::from("gamma_bg,delta_gamma\n");
        for p in &self.contour {
            let _ = writeln!(out, "{:.16e},{:.16e}", p[0], p[1]);
        }
        out
    }
}

/// Column-wise level crossings of `p` (rows = y), linearly interpolated
/// between defined neighbouring bins; the first crossing per column is kept.
fn extract_contour(p: &[Vec<Option<f64>>], xs: &[f64], ys: &[f64], level: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let col: Vec<(f64, f64)> = ys
            .iter()
            .zip(p)
            .filter_map(|(&y, row)| row[i].map(|v| (y, v)))
            .collect();
        for w in col.windows(2) {
            let ((y0, v0), (y1, v1)) = (w[0], w[1]);
            if (v0 - level) * (v1 - level) <= 0.0 && v0 != v1 {
                out.push([x, y0 + (level - v0) / (v1 - v0) * (y1 - y0)]);
                break;
            }
        }
    }
    out
}

pub fn probability_map(sigma_sa: f64, config: &MapConfig) -> Result<ProbabilityMap> {
    let events = simulate_single_nv_signals(&config.single, sigma_sa, config.n_nv, config.seed)?;
    ProbabilityMap::from_events(&events, config)
}

// ---------------------------------------------------------------------------
// estimator sensitivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub ensemble: EnsembleModel,
    pub sigma_surf: f64,
    pub plane_height: f64,
    pub labels_per_point: u32,
    pub label_spec: SpinLabelSpec,
    pub region_size: f64,
    pub n_tau: usize,
    /// Measurement noise on both curves; 0 for noiseless synthesis.
    pub noise_sd: f64,
    /// Spacing range (nm) whose rows enter the slope fits.
    pub slope_spacing_range: [f64; 2],
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleModel::default(),
            sigma_surf: 0.40,
            plane_height: 2.0,
            labels_per_point: 4,
            label_spec: SpinLabelSpec::manganese(),
            region_size: 40.0,
            n_tau: 31,
            noise_sd: 0.0,
            slope_spacing_range: [7.0, 20.0],
        }
    }
}

/// Default density grid: no labels, then spacings 20 nm down to 7 nm.
pub fn default_sensitivity_grid() -> Vec<f64> {
    [f64::INFINITY, 20.0, 17.0, 14.0, 12.0, 10.0, 9.0, 8.0, 7.0]
        .iter()
        .map(|&s| density_for_spacing(s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub density: f64,
    pub spacing: f64,
    pub delta_gamma_w: f64,
    pub delta_gamma_long: f64,
    pub delta_gamma_stre: f64,
    pub delta_gamma_true: f64,
    /// All six fits converged; unconverged rows are left out of the slopes.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
    pub slope_w: f64,
    pub slope_long: f64,
    pub slope_stre: f64,
    pub slope_true: f64,
    pub ratio_w_long: f64,
    pub ratio_w_stre: f64,
    /// Rate grid end point used for every curve, s.
    pub t_max: f64,
}

impl SensitivityTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "density_nm2,spacing_nm,delta_gamma_w,delta_gamma_long,delta_gamma_stre,delta_gamma_true,converged\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.density,
                r.spacing,
                r.delta_gamma_w,
                r.delta_gamma_long,
                r.delta_gamma_stre,
                r.delta_gamma_true,
                r.converged
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Estimates {
    w: f64,
    long: f64,
    stre: f64,
    converged: bool,
}

fn estimates(curve: &T1Curve) -> Result<Estimates> {
    let bi: FitResult = fit(curve, Family::Biexp)?;
    let st = fit(curve, Family::Stretched)?;
    let DecayModel::Biexp { t_long, .. } = bi.model else {
        unreachable!()
    };
    let DecayModel::Stretched { time, .. } = st.model else {
        unreachable!()
    };
    Ok(Estimates {
        w: weighted_rate_of(&bi.model)?,
        long: 1.0 / t_long,
        stre: 1.0 / time,
        converged: bi.converged && st.converged,
    })
}

/// Per-NV label-induced rates for a plane of density `density` over the
/// ensemble depths.
fn plane_signals(config: &SensitivityConfig, depths: &[f64], density: f64) -> Result<Vec<f64>> {
    let region = Region::centered([0.0, 0.0], config.region_size, config.region_size);
    let tilt = config.ensemble.axis_tilt.radians();
    depths
        .par_iter()
        .enumerate()
        .map(|(i, &depth)| {
            let scene = build_plane_scene(
                density,
                config.plane_height,
                config.labels_per_point,
                region,
                config.label_spec,
                rng::derive_seed(config.ensemble.seed, "plane-nv", i as u64),
            )?;
            let nv = NvCenter {
                lateral_position: [0.0, 0.0],
                depth,
                axis_tilt: tilt,
                gamma_bg: 0.0,
            };
            Ok(nv_signal(&nv, &scene, &config.ensemble.constants)?.delta_gamma)
        })
        .collect()
}

/// Five weighted-rate times of the population: a provisional grid reaching
/// five median lifetimes is fitted with a biexponential, whose weighted rate
/// sets the final end point.
pub fn adaptive_t_max(pop: &RatePopulation, n_tau: usize) -> Result<f64> {
    pop.validate()?;
    let mut sorted = pop.rates.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let provisional = synthesize_curve(pop, &default_tau_grid(5.0 / median, n_tau)?)?;
    let bi = fit(&provisional, Family::Biexp)?;
    Ok(5.0 / weighted_rate_of(&bi.model)?)
}

/// Compares weighted-rate, long-component and stretched-exponential estimates
/// of the ensemble rate change against the true mean single-NV change.
pub fn sensitivity_compare(density_grid: &[f64], config: &SensitivityConfig) -> Result<SensitivityTable> {
    check_scan(density_grid, true)?;
    let model = &config.ensemble;
    let depths = model.depths()?;
    let c_surf = model.surface_model(config.sigma_surf)?.c_surf;
    let background = rates_from_depths(&depths, c_surf, model.gamma_bulk);
    let bg_pop = RatePopulation::uniform(background.clone())?;

    let t_max = adaptive_t_max(&bg_pop, config.n_tau)?;
    let tau = default_tau_grid(t_max, config.n_tau)?;

    let bg_curve = add_measurement_noise(
        &synthesize_curve(&bg_pop, &tau)?,
        config.noise_sd,
        rng::derive_seed(model.seed, "sensitivity-noise", u64::MAX),
    )?;
    let base = estimates(&bg_curve)?;

    let mut rows = Vec::with_capacity(density_grid.len());
    for (k, &density) in density_grid.iter().enumerate() {
        let signals = plane_signals(config, &depths, density)?;
        let with: Vec<f64> = background.iter().zip(&signals).map(|(b, s)| b + s).collect();
        let curve = add_measurement_noise(
            &synthesize_curve(&RatePopulation::uniform(with)?, &tau)?,
            config.noise_sd,
            rng::derive_seed(model.seed, "sensitivity-noise", k as u64),
        )?;
        let est = estimates(&curve)?;
        rows.push(SensitivityRow {
            density,
            spacing: if density > 0.0 { density.powf(-0.5) } else { f64::INFINITY },
            delta_gamma_w: est.w - base.w,
            delta_gamma_long: est.long - base.long,
            delta_gamma_stre: est.stre - base.stre,
            delta_gamma_true: mean(&signals),
            converged: est.converged && base.converged,
        });
    }

    let [s_lo, s_hi] = config.slope_spacing_range;
    let used: Vec<&SensitivityRow> = rows
        .iter()
        .filter(|r| r.converged && r.spacing >= s_lo - 1e-9 && r.spacing <= s_hi + 1e-9)
        .collect();
    if used.len() < 2 {
        return Err(Error::Degenerate("fewer than two converged rows in the slope range".into()));
    }
    let x: Vec<f64> = used.iter().map(|r| r.density).collect();
    let slope = |f: fn(&SensitivityRow) -> f64| -> Result<f64> {
        let y: Vec<f64> = used.iter().map(|r| f(r)).collect();
        Ok(linear_fit(&x, &y)?.slope)
    };
    let slope_w = slope(|r| r.delta_gamma_w)?;
    let slope_long = slope(|r| r.delta_gamma_long)?;
    let slope_stre = slope(|r| r.delta_gamma_stre)?;
    let slope_true = slope(|r| r.delta_gamma_true)?;
    Ok(SensitivityTable {
        rows,
        slope_w,
        slope_long,
        slope_stre,
        slope_true,
        ratio_w_long: slope_w / slope_long,
        ratio_w_stre: slope_w / slope_stre,
        t_max,
    })
}

/// Draws background rates from the depth law, for round-trip checks.
pub fn sample_background_rates(
    dist: &DepthDistribution,
    c_surf: f64,
    gamma_bulk: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(rates_from_depths(&sample_depths(dist, n, seed)?, c_surf, gamma_bulk))
}
