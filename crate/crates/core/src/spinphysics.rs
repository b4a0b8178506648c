//! Closed-form relaxation physics of an NV center coupled to fluctuating
//! paramagnetic spins.
//!
//! All quantities here are strict SI: positions in metres, times in seconds,
//! angular frequencies in rad/s. Conversions from nanometres happen at the
//! edges (`scene`, `surfacenoise`).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

/// CODATA-2018 vacuum permeability, T·m/A.
pub const MU0: f64 = 1.256_637_062_12e-6;
/// CODATA-2018 reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Free-electron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_ELECTRON: f64 = 1.760_859_63e11;
/// NV ground-state zero-field splitting, Hz.
pub const ZERO_FIELD_SPLITTING_HZ: f64 = 2.87e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub hbar: f64,
    pub gamma_nv: f64,
    /// Angular frequency sampled by the NV, rad/s.
    pub omega0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu0: MU0,
            hbar: HBAR,
            gamma_nv: GAMMA_ELECTRON,
            omega0: 2.0 * PI * ZERO_FIELD_SPLITTING_HZ,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu0", self.mu0),
            ("hbar", self.hbar),
            ("gamma_nv", self.gamma_nv),
            ("omega0", self.omega0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `(μ₀ γ_label γ_NV ħ / 4π)²` in m⁶·s⁻².
    pub fn dipolar_prefactor(&self, gamma_label: f64) -> f64 {
        let k = self.mu0 * gamma_label * self.gamma_nv * self.hbar / (4.0 * PI);
        k * k
    }
}

/// One paramagnetic species: spin, gyromagnetic ratio and noise correlation time.
///
/// The spin is stored as `2S` so half-integer values stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinLabelSpec {
    pub two_s: u8,
    pub gamma: f64,
    pub tau_c: f64,
}

impl SpinLabelSpec {
    pub fn new(two_s: u8, gamma: f64, tau_c: f64) -> Result<Self> {
        let spec = Self { two_s, gamma, tau_c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.two_s) {
            return Err(domain(format!(
                "spin quantum number must be in 1/2..=7/2, got 2S = {}",
                self.two_s
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(domain(format!("gyromagnetic ratio must be positive, got {}", self.gamma)));
        }
        if !(self.tau_c.is_finite() && self.tau_c > 0.0) {
            return Err(domain(format!("tau_c must be positive, got {}", self.tau_c)));
        }
        Ok(())
    }

    /// Mn(II) label: S = 5/2, g ≈ 2, τ_c from a 3 GHz linewidth (τ_c = 1/(2π·3 GHz)).
    pub fn manganese() -> Self {
        Self {
            two_s: 5,
            gamma: GAMMA_ELECTRON,
            tau_c: 1.0 / (2.0 * PI * 3.0e9),
        }
    }

    /// Surface dangling-bond electron: S = 1/2, τ_c = 0.28 ns.
    pub fn surface_electron() -> Self {
        Self {
            two_s: 1,
            gamma: GAMMA_ELECTRON,
            tau_c: 0.28e-9,
        }
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.two_s) / 2.0
    }

    /// `S(S+1)/3`, computed from the exact rational `2S(2S+2)/12`.
    pub fn spin_factor(&self) -> f64 {
        let t = u32::from(self.two_s);
        f64::from(t * (t + 2)) / 12.0
    }

    /// `A² = S(S+1)/3 · (μ₀ γ γ_NV ħ / 4π)²`, m⁶·s⁻².
    pub fn coupling_amplitude_sq(&self, constants: &PhysicalConstants) -> f64 {
        self.spin_factor() * constants.dipolar_prefactor(self.gamma)
    }

    /// Rate per unit coupling, `3τ_c / (1 + (ω₀τ_c)²)` in seconds.
    pub fn rate_factor(&self, constants: &PhysicalConstants) -> f64 {
        1.5 * lorentzian_unchecked(self.tau_c, constants.omega0)
    }
}

/// Orientation of the NV quantization axis in the lab frame (z = surface normal,
/// pointing out of the diamond).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFrame {
    axis: [f64; 3],
}

impl AxisFrame {
    pub fn new(axis: [f64; 3]) -> Result<Self> {
        let n = norm(axis);
        if !(n.is_finite() && n > 0.0) {
            return Err(domain("NV axis must be a non-zero vector"));
        }
        Ok(Self {
            axis: [axis[0] / n, axis[1] / n, axis[2] / n],
        })
    }

    /// Axis tilted from the surface normal by `tilt` radians, in the x–z plane.
    pub fn tilted(tilt: f64) -> Self {
        Self {
            axis: [tilt.sin(), 0.0, tilt.cos()],
        }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    /// `sin²θ` between the axis and `r`; `r` must be non-zero.
    fn sin_sq(&self, r: [f64; 3], r_norm: f64) -> f64 {
        let c = dot(self.axis, r) / r_norm;
        (1.0 - c * c).max(0.0)
    }
}

/// A point carrying `multiplicity` co-located, independently fluctuating spins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelSite {
    /// NV → label vector, metres.
    pub position: [f64; 3],
    pub multiplicity: u32,
    pub spec: SpinLabelSpec,
}

impl LabelSite {
    pub fn new(position: [f64; 3], multiplicity: u32, spec: SpinLabelSpec) -> Self {
        Self {
            position,
            multiplicity,
            spec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEquationParams {
    /// Single-quantum (0 ↔ ±1) transition rate, s⁻¹.
    pub k01: f64,
    /// Double-quantum (+1 ↔ −1) transition rate, s⁻¹.
    pub k11: f64,
}

/// Sublevel populations `(n₀, n₋₁, n₊₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub n0: f64,
    pub n_minus: f64,
    pub n_plus: f64,
}

impl Populations {
    pub fn new(n0: f64, n_minus: f64, n_plus: f64) -> Self {
        Self { n0, n_minus, n_plus }
    }

    pub fn sum(&self) -> f64 {
        self.n0 + self.n_minus + self.n_plus
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.n0, self.n_minus, self.n_plus]
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Transverse dipolar coupling `b⊥²` between the NV and one site, (rad/s)².
pub fn transverse_coupling(
    site: &LabelSite,
    frame: &AxisFrame,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if site.multiplicity == 0 {
        return Err(domain("label multiplicity must be at least 1"));
    }
    let r = norm(site.position);
    if !(r.is_finite() && r > 0.0) {
        return Err(domain(format!(
            "label at {:?} coincides with the NV (degenerate geometry)",
            site.position
        )));
    }
    let angular = 2.0 + 3.0 * frame.sin_sq(site.position, r);
    let r3 = r * r * r;
    Ok(f64::from(site.multiplicity) * site.spec.coupling_amplitude_sq(constants) * angular
        / (r3 * r3))
}

/// Lorentzian spectral weight `2τ_c / (1 + (ωτ_c)²)`, seconds.
pub fn lorentzian_weight(tau_c: f64, omega: f64) -> Result<f64> {
    if !(tau_c.is_finite() && tau_c > 0.0) {
        return Err(domain(format!("tau_c must be positive, got {tau_c}")));
    }
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(domain(format!("omega must be non-negative, got {omega}")));
    }
    Ok(lorentzian_unchecked(tau_c, omega))
}

fn lorentzian_unchecked(tau_c: f64, omega: f64) -> f64 {
    let x = omega * tau_c;
    2.0 * tau_c / (1.0 + x * x)
}

/// Label-induced relaxation rate `ΔΓ = Σᵢ 3 b⊥ᵢ² τ_c,ᵢ / (1 + (ω₀τ_c,ᵢ)²)`, s⁻¹.
pub fn induced_rate(
    sites: &[LabelSite],
    frame: &AxisFrame,
    constants: &PhysicalConstants,
) -> Result<f64> {
    sites.iter().try_fold(0.0, |acc, site| {
        Ok(acc + site_rate(site, frame, constants)?)
    })
}

/// Contribution of a single site to [`induced_rate`].
pub fn site_rate(site: &LabelSite, frame: &AxisFrame, constants: &PhysicalConstants) -> Result<f64> {
    Ok(transverse_coupling(site, frame, constants)? * site.spec.rate_factor(constants))
}

fn check_rates(params: &RateEquationParams) -> Result<()> {
    if !(params.k01.is_finite() && params.k01 >= 0.0 && params.k11.is_finite() && params.k11 >= 0.0)
    {
        return Err(domain(format!(
            "transition rates must be non-negative, got k01 = {}, k11 = {}",
            params.k01, params.k11
        )));
    }
    Ok(())
}

/// Closed-form solution of the three-level rate equation.
pub fn solve_populations(
    params: &RateEquationParams,
    init: &Populations,
    t: f64,
) -> Result<Populations> {
    check_rates(params)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(domain(format!("time must be non-negative, got {t}")));
    }
    let p = init.as_array();
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (init.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "initial populations {p:?} are not on the probability simplex"
        )));
    }
    if t == 0.0 {
        return Ok(*init);
    }
    let third = 1.0 / 3.0;
    let fast = (-3.0 * params.k01 * t).exp();
    let dq = (-(params.k01 + 2.0 * params.k11) * t).exp();
    let excess = init.n0 - third;
    let half_diff = 0.5 * (init.n_plus - init.n_minus);
    let n0 = third + excess * fast;
    let common = third - 0.5 * excess * fast;
    Ok(Populations {
        n0,
        n_plus: common + half_diff * dq,
        n_minus: common - half_diff * dq,
    })
}

/// Normalized difference signal `exp(−3 k01 t)`.
pub fn t1_signal(k01: f64, t: f64) -> Result<f64> {
    if !(k01.is_finite() && k01 >= 0.0) {
        return Err(domain(format!("k01 must be non-negative, got {k01}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(domain(format!("time must be non-negative, got {t}")));
    }
    Ok((-3.0 * k01 * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mn_at(position: [f64; 3], multiplicity: u32) -> LabelSite {
        LabelSite::new(position, multiplicity, SpinLabelSpec::manganese())
    }

    #[test]
    fn angular_ratio_is_five_halves() {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(0.0);
        let side = transverse_coupling(&mn_at([5e-9, 0.0, 0.0], 1), &frame, &c).unwrap();
        let along = transverse_coupling(&mn_at([0.0, 0.0, 5e-9], 1), &frame, &c).unwrap();
        assert_relative_eq!(side / along, 2.5, max_relative = 1e-15);
    }

    #[test]
    fn doubling_distance_scales_by_one_sixty_fourth() {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(0.3);
        let p = [1e-9, -2e-9, 4e-9];
        let near = transverse_coupling(&mn_at(p, 1), &frame, &c).unwrap();
        let far = transverse_coupling(&mn_at(p.map(|v| 2.0 * v), 1), &frame, &c).unwrap();
        assert_relative_eq!(far / near, 1.0 / 64.0, max_relative = 1e-14);
    }

    #[test]
    fn manganese_coupling_matches_high_precision_value() {
        // mpmath at 40 digits, S = 5/2, r = 10 nm, θ = π/2, CODATA-2018 constants.
        let expected = 1_559_222_423_901.073_3;
        let c = PhysicalConstants::default();
        let b2 = transverse_coupling(&mn_at([10e-9, 0.0, 0.0], 1), &AxisFrame::tilted(0.0), &c)
            .unwrap();
        assert_relative_eq!(b2, expected, max_relative = 1e-12);
    }

    #[test]
    fn coincident_label_is_rejected() {
        let c = PhysicalConstants::default();
        let err = transverse_coupling(&mn_at([0.0; 3], 1), &AxisFrame::tilted(0.0), &c);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn lorentzian_limits() {
        assert_eq!(lorentzian_weight(3e-10, 0.0).unwrap(), 6e-10);
        let w = 2.0 * PI * 2.87e9;
        assert_relative_eq!(lorentzian_weight(1.0 / w, w).unwrap(), 1.0 / w, max_relative = 1e-15);
        // Surface-noise correlation time 0.28 ns at the zero-field splitting.
        assert_relative_eq!(
            lorentzian_weight(0.28e-9, w).unwrap(),
            2.113_678_571_068_838e-11,
            max_relative = 1e-13
        );
        assert!(lorentzian_weight(0.0, w).is_err());
        assert!(lorentzian_weight(-1.0, w).is_err());
    }

    #[test]
    fn lorentzian_peaks_at_inverse_frequency() {
        let w = 2.0 * PI * 2.87e9;
        let grid: Vec<f64> = (0..4001).map(|k| 10f64.powf(-12.0 + 3.0 * k as f64 / 4000.0)).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| lorentzian_weight(t, w).unwrap()).collect();
        let (imax, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_relative_eq!(grid[imax], 1.0 / w, max_relative = 2e-3);
        // strictly rising then strictly falling
        assert!(vals[..imax].windows(2).all(|p| p[1] > p[0]));
        assert!(vals[imax..].windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn induced_rate_empty_and_duplicated() {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(54.7f64.to_radians());
        assert_eq!(induced_rate(&[], &frame, &c).unwrap(), 0.0);
        let sites = vec![mn_at([3e-9, 1e-9, 7e-9], 1), mn_at([-4e-9, 2e-9, 9e-9], 2)];
        let one = induced_rate(&sites, &frame, &c).unwrap();
        let doubled: Vec<_> = sites.iter().chain(sites.iter()).copied().collect();
        assert_relative_eq!(induced_rate(&doubled, &frame, &c).unwrap(), 2.0 * one, max_relative = 1e-15);
    }

    #[test]
    fn multiplicity_equals_repeated_sites() {
        let c = PhysicalConstants::default();
        let frame = AxisFrame::tilted(0.2);
        let p = [2e-9, 2e-9, 8e-9];
        let grouped = induced_rate(&[mn_at(p, 4)], &frame, &c).unwrap();
        let separate: f64 = (0..4)
            .map(|_| induced_rate(&[mn_at(p, 1)], &frame, &c).unwrap())
            .sum();
        assert_relative_eq!(grouped, separate, max_relative = 1e-15);
    }

    #[test]
    fn populations_start_and_equilibrium() {
        let params = RateEquationParams { k01: 300.0, k11: 50.0 };
        let init = Populations::new(0.7, 0.1, 0.2);
        assert_eq!(solve_populations(&params, &init, 0.0).unwrap(), init);
        let late = solve_populations(&params, &init, 100.0 / 300.0).unwrap();
        for v in late.as_array() {
            assert!((v - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn populations_reject_off_simplex() {
        let params = RateEquationParams { k01: 1.0, k11: 1.0 };
        assert!(solve_populations(&params, &Populations::new(0.5, 0.5, 0.5), 1.0).is_err());
        assert!(solve_populations(&params, &Populations::new(1.2, -0.2, 0.0), 1.0).is_err());
        let bad = RateEquationParams { k01: -1.0, k11: 0.0 };
        assert!(solve_populations(&bad, &Populations::new(1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn t1_signal_basics() {
        assert_eq!(t1_signal(123.0, 0.0).unwrap(), 1.0);
        assert_eq!(t1_signal(0.0, 5.0).unwrap(), 1.0);
        assert!(t1_signal(-1.0, 1.0).is_err());
    }

    #[test]
    fn spin_validation() {
        assert!(SpinLabelSpec::new(0, GAMMA_ELECTRON, 1e-10).is_err());
        assert!(SpinLabelSpec::new(8, GAMMA_ELECTRON, 1e-10).is_err());
        assert!(SpinLabelSpec::new(7, GAMMA_ELECTRON, 0.0).is_err());
        let s = SpinLabelSpec::new(5, GAMMA_ELECTRON, 1e-10).unwrap();
        assert_eq!(s.spin(), 2.5);
        assert_relative_eq!(s.spin_factor(), 2.5 * 3.5 / 3.0, max_relative = 1e-15);
    }
}
