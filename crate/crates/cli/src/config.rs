//! Run configuration. One JSON document; every key optional, unknown keys
//! rejected. Command-line flags override file values, which override defaults.

use nv_relaxo_core::inference::{
    default_sensitivity_grid, geometric_grid, EnsembleModel, HistogramFitConfig,
    LabelSpacingConfig, MapConfig, SaDensityConfig, Score, SensitivityConfig, SingleNvConfig,
};
use nv_relaxo_core::rng::derive_seed;
use nv_relaxo_core::scene::ComplexGeometry;
use nv_relaxo_core::{AxisTilt, DepthDistribution, PhysicalConstants, SpinLabelSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    /// nm⁻²
    pub sigma_surf: f64,
    /// s
    pub tau_c_surf: f64,
    /// s⁻¹
    pub gamma_bulk: f64,
    pub axis_tilt: AxisTilt,
    /// Coefficient used for single-NV (nano-pillar) background rates, s⁻¹·nm⁴.
    pub c_surf: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            sigma_surf: 0.40,
            tau_c_surf: 0.28e-9,
            gamma_bulk: 100.0,
            axis_tilt: AxisTilt::Magic,
            c_surf: 2.7e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthConfig {
    /// Bulk ensemble sample.
    pub ensemble: DepthDistribution,
    /// Single NVs in nano-pillars.
    pub pillar: DepthDistribution,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            ensemble: DepthDistribution::ensemble(),
            pillar: DepthDistribution::pillar(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_nv: usize,
    pub n_tau: usize,
    /// Grid end point, s. Derived from the weighted rate when absent.
    pub t_max: Option<f64>,
    pub noise_sd: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_nv: 40_000,
            n_tau: 31,
            t_max: None,
            noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// nm
    pub region_size: f64,
    /// nm
    pub lattice_spacing: f64,
    pub complex: ComplexGeometry,
    /// Height of a uniform label plane, nm.
    pub plane_height: f64,
    pub labels_per_point: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            region_size: 40.0,
            lattice_spacing: 100.0,
            complex: ComplexGeometry::default(),
            plane_height: 2.0,
            labels_per_point: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleNvSection {
    /// nm⁻²
    pub sigma_sa: f64,
    pub n_nv: usize,
    pub gamma_bg_max: f64,
    pub delta_gamma_noise_sd: f64,
}

impl Default for SingleNvSection {
    fn default() -> Self {
        Self {
            sigma_sa: 0.007,
            n_nv: 10_000,
            gamma_bg_max: 2000.0,
            delta_gamma_noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub surface_density: Vec<f64>,
    pub c_surf: Vec<f64>,
    pub sa_density: Vec<f64>,
    /// Label densities simulated for the spacing inversion.
    pub label_density: Vec<f64>,
    pub sensitivity_density: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            surface_density: (1..=40).map(|k| 0.02 * k as f64).collect(),
            c_surf: geometric_grid(1e6, 7e6, 121).expect("static grid"),
            sa_density: geometric_grid(0.002, 0.025, 25).expect("static grid"),
            label_density: LabelSpacingConfig::default().densities,
            sensitivity_density: default_sensitivity_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub score: Score,
    pub c_surf_max_bins: usize,
    pub sa_max_bins: usize,
    /// s⁻¹
    pub sa_cutoff: f64,
    pub sa_n_sim: usize,
    pub label_n_nv: usize,
    pub interval_fraction: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            score: Score::RSquared,
            c_surf_max_bins: 2048,
            sa_max_bins: 64,
            sa_cutoff: 1e4,
            sa_n_sim: 10_000,
            label_n_nv: 20_000,
            interval_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub gamma_bg_bins: usize,
    pub delta_gamma_max: f64,
    pub delta_gamma_bins: usize,
    pub dominance: f64,
    pub contour_level: f64,
}

impl Default for MapSection {
    fn default() -> Self {
        let m = MapConfig::default();
        Self {
            gamma_bg_bins: m.gamma_bg_bins,
            delta_gamma_max: m.delta_gamma_max,
            delta_gamma_bins: m.delta_gamma_bins,
            dominance: m.dominance,
            contour_level: m.contour_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; not part of any output.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub constants: PhysicalConstants,
    pub label_spec: LabelSpecConfig,
    pub surface: SurfaceConfig,
    pub depth: DepthConfig,
    pub ensemble: EnsembleConfig,
    pub scene: SceneConfig,
    pub single_nv: SingleNvSection,
    pub scans: ScanConfig,
    pub inference: InferenceConfig,
    pub map: MapSection,
}

/// Spin label carried by the proteins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSpecConfig {
    /// Twice the spin quantum number.
    pub two_s: u8,
    pub gamma: f64,
    pub tau_c: f64,
}

impl Default for LabelSpecConfig {
    fn default() -> Self {
        let mn = SpinLabelSpec::manganese();
        Self {
            two_s: mn.two_s,
            gamma: mn.gamma,
            tau_c: mn.tau_c,
        }
    }
}

impl RunConfig {
    /// Reads a config file, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let value = match value.get("command").and(value.get("config")) {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn label(&self) -> Result<SpinLabelSpec, CliError> {
        let l = self.label_spec;
        SpinLabelSpec::new(l.two_s, l.gamma, l.tau_c).map_err(CliError::from)
    }

    /// Seed of a named task, derived from the master seed.
    pub fn task_seed(&self, task: &str) -> u64 {
        derive_seed(self.seed, task, 0)
    }

    pub fn ensemble_model(&self, task: &str) -> EnsembleModel {
        EnsembleModel {
            depth: self.depth.ensemble,
            tau_c_surf: self.surface.tau_c_surf,
            gamma_bulk: self.surface.gamma_bulk,
            axis_tilt: self.surface.axis_tilt,
            n_nv: self.ensemble.n_nv,
            seed: self.task_seed(task),
            constants: self.constants,
        }
    }

    pub fn single_nv(&self) -> Result<SingleNvConfig, CliError> {
        Ok(SingleNvConfig {
            depth: self.depth.pillar,
            c_surf: self.surface.c_surf,
            gamma_bulk: self.surface.gamma_bulk,
            axis_tilt: self.surface.axis_tilt,
            region_size: self.scene.region_size,
            lattice_spacing: self.scene.lattice_spacing,
            geometry: self.scene.complex,
            label_spec: self.label()?,
            gamma_bg_max: self.single_nv.gamma_bg_max,
            delta_gamma_noise_sd: self.single_nv.delta_gamma_noise_sd,
            constants: self.constants,
        })
    }

    pub fn histogram_fit(&self) -> HistogramFitConfig {
        HistogramFitConfig {
            depth: self.depth.pillar,
            gamma_bulk: self.surface.gamma_bulk,
            max_bins: self.inference.c_surf_max_bins,
            score: self.inference.score,
            interval_fraction: self.inference.interval_fraction,
        }
    }

    pub fn label_spacing(&self) -> Result<LabelSpacingConfig, CliError> {
        Ok(LabelSpacingConfig {
            depth: self.depth.ensemble,
            plane_height: self.scene.plane_height,
            labels_per_point: self.scene.labels_per_point,
            label_spec: self.label()?,
            axis_tilt: self.surface.axis_tilt,
            region_size: self.scene.region_size,
            n_nv: self.inference.label_n_nv,
            densities: self.scans.label_density.clone(),
            seed: self.task_seed("label-spacing"),
            constants: self.constants,
        })
    }

    pub fn sa_density(&self) -> Result<SaDensityConfig, CliError> {
        Ok(SaDensityConfig {
            single: self.single_nv()?,
            n_sim: self.inference.sa_n_sim,
            cutoff: self.inference.sa_cutoff,
            max_bins: self.inference.sa_max_bins,
            score: self.inference.score,
            seed: self.task_seed("sa-density"),
            interval_fraction: self.inference.interval_fraction,
        })
    }

    pub fn map(&self) -> Result<MapConfig, CliError> {
        Ok(MapConfig {
            single: self.single_nv()?,
            n_nv: self.single_nv.n_nv,
            seed: self.task_seed("probability-map"),
            gamma_bg_bins: self.map.gamma_bg_bins,
            delta_gamma_max: self.map.delta_gamma_max,
            delta_gamma_bins: self.map.delta_gamma_bins,
            dominance: self.map.dominance,
            contour_level: self.map.contour_level,
        })
    }

    pub fn sensitivity(&self) -> Result<SensitivityConfig, CliError> {
        Ok(SensitivityConfig {
            ensemble: self.ensemble_model("sensitivity"),
            sigma_surf: self.surface.sigma_surf,
            plane_height: self.scene.plane_height,
            labels_per_point: self.scene.labels_per_point,
            label_spec: self.label()?,
            region_size: self.scene.region_size,
            n_tau: self.ensemble.n_tau,
            noise_sd: self.ensemble.noise_sd,
            slope_spacing_range: [7.0, 20.0],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"surface": {"sigma": 3}}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"surface": {"sigma_surf": 0.3}}"#).unwrap();
        assert_eq!(partial.surface.sigma_surf, 0.3);
        assert_eq!(partial.surface.gamma_bulk, 100.0);
    }

    #[test]
    fn headline_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.depth.ensemble, DepthDistribution::new(6.5, 2.8, 2.0).unwrap());
        assert_eq!(c.single_nv.sigma_sa, 0.007);
        assert_eq!(c.ensemble.n_nv, 40_000);
        assert_eq!(c.label().unwrap(), SpinLabelSpec::manganese());
    }
}
