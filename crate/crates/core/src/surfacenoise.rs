//! Depth-dependent background relaxation from a sheet of surface spins.
//!
//! Lengths at this interface are nanometres; areal densities nm⁻²; the
//! composite coefficient `c_surf` is in s⁻¹·nm⁴ so that
//! `Γ_BG(d) = Γ_bulk + c_surf / d⁴` with `d` in nm.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, invalid, Error, Result};
use crate::rng;
use crate::spinphysics::{PhysicalConstants, SpinLabelSpec};

const NM: f64 = 1e-9;

/// Orientation of the NV axis relative to the surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisTilt {
    /// [100]-cut diamond: tilt `arccos(1/√3)` ≈ 54.7°.
    #[default]
    Magic,
    /// [111]-cut diamond: axis along the normal.
    Normal,
}

impl AxisTilt {
    pub fn radians(self) -> f64 {
        match self {
            AxisTilt::Magic => (1.0 / 3f64.sqrt()).acos(),
            AxisTilt::Normal => 0.0,
        }
    }

    /// `∫∫ (2 + 3 sin²θ′) d⁴ / r′⁶ dx′dy′` over the surface plane.
    pub fn plane_integral(self) -> f64 {
        match self {
            AxisTilt::Magic => 2.0 * PI,
            AxisTilt::Normal => 1.5 * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceNoiseModel {
    /// Areal density of surface spins, nm⁻².
    pub sigma_surf: f64,
    pub tau_c_surf: f64,
    pub gamma_bulk: f64,
    pub axis_tilt: AxisTilt,
    /// s⁻¹·nm⁴
    pub c_surf: f64,
}

impl SurfaceNoiseModel {
    /// Model with `c_surf` derived from the surface density, assuming S = 1/2
    /// free-electron surface spins.
    pub fn from_density(
        sigma_surf: f64,
        tau_c_surf: f64,
        gamma_bulk: f64,
        axis_tilt: AxisTilt,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let mut model = Self {
            sigma_surf,
            tau_c_surf,
            gamma_bulk,
            axis_tilt,
            c_surf: 0.0,
        };
        model.c_surf = model.c_surf_per_density(constants)? * sigma_surf;
        model.validate()?;
        Ok(model)
    }

    /// Model with `c_surf` given directly; `sigma_surf` is back-derived.
    pub fn from_coefficient(
        c_surf: f64,
        tau_c_surf: f64,
        gamma_bulk: f64,
        axis_tilt: AxisTilt,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let mut model = Self {
            sigma_surf: 0.0,
            tau_c_surf,
            gamma_bulk,
            axis_tilt,
            c_surf,
        };
        model.sigma_surf = c_surf / model.c_surf_per_density(constants)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_surf.is_finite() && self.sigma_surf >= 0.0) {
            return Err(domain(format!("sigma_surf must be >= 0, got {}", self.sigma_surf)));
        }
        if !(self.gamma_bulk.is_finite() && self.gamma_bulk >= 0.0) {
            return Err(domain(format!("gamma_bulk must be >= 0, got {}", self.gamma_bulk)));
        }
        if !(self.c_surf.is_finite() && self.c_surf >= 0.0) {
            return Err(domain(format!("c_surf must be >= 0, got {}", self.c_surf)));
        }
        if !(self.tau_c_surf.is_finite() && self.tau_c_surf > 0.0) {
            return Err(domain(format!("tau_c_surf must be > 0, got {}", self.tau_c_surf)));
        }
        Ok(())
    }

    pub fn surface_spin(&self) -> SpinLabelSpec {
        SpinLabelSpec {
            tau_c: self.tau_c_surf,
            ..SpinLabelSpec::surface_electron()
        }
    }

    /// `c_surf / sigma_surf`, s⁻¹·nm⁶.
    pub fn c_surf_per_density(&self, constants: &PhysicalConstants) -> Result<f64> {
        let spin = self.surface_spin();
        spin.validate()?;
        // rate at d = 1 nm for sigma = 1 nm⁻²
        let coupling = surface_coupling_unchecked(self.axis_tilt, 1.0, 1.0, &spin, constants);
        Ok(coupling * spin.rate_factor(constants))
    }

    pub fn background_rate(&self, depth_nm: f64) -> Result<f64> {
        background_rate(self.c_surf, self.gamma_bulk, depth_nm)
    }
}

fn surface_coupling_unchecked(
    tilt: AxisTilt,
    sigma_nm2: f64,
    depth_nm: f64,
    spec: &SpinLabelSpec,
    constants: &PhysicalConstants,
) -> f64 {
    let sigma = sigma_nm2 / (NM * NM);
    let d = depth_nm * NM;
    tilt.plane_integral() * spec.coupling_amplitude_sq(constants) * sigma / (d * d * d * d)
}

/// Total transverse coupling `b_surf,⊥²` (rad²/s²) of a uniform spin sheet at
/// distance `depth_nm` above the NV.
pub fn surface_coupling(
    model: &SurfaceNoiseModel,
    depth_nm: f64,
    spec: &SpinLabelSpec,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if !(depth_nm.is_finite() && depth_nm > 0.0) {
        return Err(domain(format!("depth must be positive, got {depth_nm} nm")));
    }
    Ok(surface_coupling_unchecked(
        model.axis_tilt,
        model.sigma_surf,
        depth_nm,
        spec,
        constants,
    ))
}

/// `Γ_BG = Γ_bulk + c_surf / d⁴`.
pub fn background_rate(c_surf: f64, gamma_bulk: f64, depth_nm: f64) -> Result<f64> {
    if !(depth_nm.is_finite() && depth_nm > 0.0) {
        return Err(domain(format!("depth must be positive, got {depth_nm} nm")));
    }
    let d2 = depth_nm * depth_nm;
    Ok(gamma_bulk + c_surf / (d2 * d2))
}

/// Inverse of [`background_rate`]: the depth (nm) that yields `gamma`.
pub fn depth_for_background_rate(c_surf: f64, gamma_bulk: f64, gamma: f64) -> Result<f64> {
    let excess = gamma - gamma_bulk;
    if !(excess > 0.0 && c_surf > 0.0) {
        return Err(domain(format!(
            "rate {gamma} is not above the bulk rate {gamma_bulk} (or c_surf <= 0)"
        )));
    }
    Ok((c_surf / excess).powf(0.25))
}

/// Gaussian depth law truncated below at `d_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub d_min: f64,
}

/// Rejection budget per sample.
pub const MAX_REJECTIONS: usize = 1_000_000;
const SAMPLE_CHUNK: usize = 4096;

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl DepthDistribution {
    pub fn new(mu: f64, sigma: f64, d_min: f64) -> Result<Self> {
        let d = Self { mu, sigma, d_min };
        d.validate()?;
        Ok(d)
    }

    /// Bulk ensemble diamond: μ = 6.5 nm, σ = 2.8 nm, d ≥ 2 nm.
    pub fn ensemble() -> Self {
        Self { mu: 6.5, sigma: 2.8, d_min: 2.0 }
    }

    /// Annealed nano-pillars: μ = 5.5 nm, σ = 2.8 nm.
    pub fn pillar() -> Self {
        Self { mu: 5.5, sigma: 2.8, d_min: 2.0 }
    }

    /// Nano-pillar variant with σ = 2.2 nm, as used for the bare-surface histogram fit.
    pub fn pillar_narrow() -> Self {
        Self { mu: 5.5, sigma: 2.2, d_min: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(domain(format!("depth sigma must be positive, got {}", self.sigma)));
        }
        if !(self.d_min.is_finite() && self.d_min > 0.0) {
            return Err(domain(format!("d_min must be positive, got {}", self.d_min)));
        }
        Ok(())
    }

    /// Untruncated probability mass above `d_min`.
    pub fn retained_mass(&self) -> f64 {
        std_normal_sf((self.d_min - self.mu) / self.sigma)
    }

    pub fn pdf(&self, d: f64) -> f64 {
        if d < self.d_min {
            return 0.0;
        }
        std_normal_pdf((d - self.mu) / self.sigma) / (self.sigma * self.retained_mass())
    }

    /// `P(depth ≥ d)`.
    pub fn survival(&self, d: f64) -> f64 {
        if d <= self.d_min {
            return 1.0;
        }
        std_normal_sf((d - self.mu) / self.sigma) / self.retained_mass()
    }

    pub fn mean(&self) -> f64 {
        let a = (self.d_min - self.mu) / self.sigma;
        self.mu + self.sigma * std_normal_pdf(a) / self.retained_mass()
    }

    pub fn variance(&self) -> f64 {
        let a = (self.d_min - self.mu) / self.sigma;
        let lam = std_normal_pdf(a) / self.retained_mass();
        self.sigma * self.sigma * (1.0 + a * lam - lam * lam)
    }

    /// One rejection-sampled depth.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = rng.sample(StandardNormal);
            let d = self.mu + self.sigma * z;
            if d >= self.d_min {
                return Ok(d);
            }
        }
        Err(Error::Sampling(format!(
            "no depth >= {} nm after {MAX_REJECTIONS} draws from N({}, {}²)",
            self.d_min, self.mu, self.sigma
        )))
    }
}

/// `n` truncated-Gaussian depths (nm), generated in fixed chunks with one
/// derived stream per chunk; identical for any worker count.
pub fn sample_depths(dist: &DepthDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let chunks: Vec<usize> = (0..n.div_ceil(SAMPLE_CHUNK)).collect();
    let parts: Result<Vec<Vec<f64>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut s = rng::stream(seed, "depth", c as u64);
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            (0..len).map(|_| dist.sample(&mut s)).collect()
        })
        .collect();
    Ok(parts?.concat())
}

/// Density of `Γ_BG = Γ_bulk + c_surf/d⁴` when `d` follows `dist`.
///
/// Zero outside `(Γ_bulk, Γ_bulk + c_surf/d_min⁴]`.
pub fn background_rate_pdf(
    gamma: f64,
    dist: &DepthDistribution,
    c_surf: f64,
    gamma_bulk: f64,
) -> f64 {
    let excess = gamma - gamma_bulk;
    if !(excess > 0.0 && c_surf > 0.0) {
        return 0.0;
    }
    let d = (c_surf / excess).powf(0.25);
    if d < dist.d_min {
        return 0.0;
    }
    let z = (d - dist.mu) / dist.sigma;
    // |dd/dΓ| = c^{1/4} x^{-5/4} / 4
    let jac = 0.25 * d / excess;
    (-0.5 * z * z).exp() / (dist.sigma * (2.0 * PI).sqrt() * dist.retained_mass()) * jac
}

/// `P(Γ_BG ≤ gamma)`.
pub fn background_rate_cdf(
    gamma: f64,
    dist: &DepthDistribution,
    c_surf: f64,
    gamma_bulk: f64,
) -> f64 {
    let excess = gamma - gamma_bulk;
    if !(excess > 0.0) {
        return 0.0;
    }
    if c_surf <= 0.0 {
        return 1.0;
    }
    let d = (c_surf / excess).powf(0.25);
    dist.survival(d)
}
