//! Label-bearing protein configurations above the diamond surface.
//!
//! Coordinates are nanometres with the diamond surface at `z = 0` and the
//! outward normal along `+z`; an NV at depth `d` sits at `z = -d`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{domain, invalid, Error, Result};
use crate::rng;
use crate::spinphysics::{
    site_rate, AxisFrame, LabelSite, PhysicalConstants, SpinLabelSpec,
};

const NM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvCenter {
    pub lateral_position: [f64; 2],
    pub depth: f64,
    /// Tilt of the NV axis from the surface normal, rad.
    pub axis_tilt: f64,
    pub gamma_bg: f64,
}

impl NvCenter {
    pub fn position(&self) -> [f64; 3] {
        [self.lateral_position[0], self.lateral_position[1], -self.depth]
    }

    pub fn frame(&self) -> AxisFrame {
        AxisFrame::tilted(self.axis_tilt)
    }
}

/// Axis-aligned rectangle in the surface plane, nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn centered(center: [f64; 2], width: f64, height: f64) -> Self {
        Self {
            x_min: center[0] - 0.5 * width,
            x_max: center[0] + 0.5 * width,
            y_min: center[1] - 0.5 * height,
            y_max: center[1] + 0.5 * height,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !ok || !(self.area() > 0.0) || self.x_max <= self.x_min {
            return Err(domain(format!("region {self:?} must have positive area")));
        }
        Ok(())
    }

    fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [
            self.x_min + (self.x_max - self.x_min) * rng.random::<f64>(),
            self.y_min + (self.y_max - self.y_min) * rng.random::<f64>(),
        ]
    }
}

/// A streptavidin-like cube with up to four binding vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaComplex {
    pub center: [f64; 2],
    pub cube_edge: f64,
    /// Height of the cube base above the surface, nm.
    pub standoff: f64,
    /// In-plane rotation of the cube, rad.
    #[serde(default)]
    pub azimuth: f64,
    /// Indices into the four binding vertices (see [`SaComplex::binding_site`]).
    pub occupied_sites: Vec<u8>,
    /// Spin labels carried by each occupied binding site.
    pub labels_per_site: u32,
}

impl SaComplex {
    /// Binding vertex `k` in lab coordinates (nm). Sites 0 and 1 are opposite
    /// corners of the top face; sites 2 and 3 the other diagonal of the bottom face.
    pub fn binding_site(&self, k: u8) -> [f64; 3] {
        let h = 0.5 * self.cube_edge;
        let (lx, ly, z) = match k {
            0 => (-h, -h, self.standoff + self.cube_edge),
            1 => (h, h, self.standoff + self.cube_edge),
            2 => (h, -h, self.standoff),
            _ => (-h, h, self.standoff),
        };
        let (s, c) = self.azimuth.sin_cos();
        [
            self.center[0] + c * lx - s * ly,
            self.center[1] + s * lx + c * ly,
            z,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cube_edge.is_finite() && self.cube_edge > 0.0) {
            return Err(domain("cube_edge must be positive"));
        }
        if !(self.standoff.is_finite() && self.standoff >= 0.0) {
            return Err(domain("standoff must be non-negative"));
        }
        if self.occupied_sites.len() > 4 || self.occupied_sites.iter().any(|&k| k > 3) {
            return Err(domain("at most four binding sites, indexed 0..=3"));
        }
        let mut seen = [false; 4];
        for &k in &self.occupied_sites {
            if std::mem::replace(&mut seen[k as usize], true) {
                return Err(domain(format!("binding site {k} listed twice")));
            }
        }
        Ok(())
    }
}

/// Uniform sheet of label points at a fixed height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPlane {
    /// Point density, nm⁻².
    pub density: f64,
    pub height: f64,
    pub labels_per_point: u32,
    /// Lateral positions of the realized points, nm.
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub region: Region,
    pub complexes: Vec<SaComplex>,
    pub planes: Vec<LabelPlane>,
    pub label_spec: SpinLabelSpec,
}

impl Scene {
    pub fn empty(region: Region, label_spec: SpinLabelSpec) -> Self {
        Self {
            region,
            complexes: Vec::new(),
            planes: Vec::new(),
            label_spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.label_spec.validate()?;
        for c in &self.complexes {
            c.validate()?;
            if !self.region.contains(c.center) {
                return Err(domain(format!("complex center {:?} outside region", c.center)));
            }
        }
        for p in &self.planes {
            if !(p.density >= 0.0 && p.height >= 0.0) {
                return Err(domain("plane density and height must be non-negative"));
            }
        }
        Ok(())
    }

    /// Number of independently tracked signal sources.
    pub fn source_count(&self) -> usize {
        self.complexes.len() + self.planes.iter().map(|p| p.points.len()).sum::<usize>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Which binding vertices of each complex carry a labelled ligand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum OccupancyRule {
    /// All four sites occupied.
    #[default]
    Full,
    /// Each site occupied independently with probability `p`.
    Bernoulli { p: f64 },
    /// Exactly the first `n` sites occupied.
    Fixed { n: u8 },
}

/// Geometry of streptavidin-like complexes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexGeometry {
    pub cube_edge: f64,
    pub standoff: f64,
    pub labels_per_site: u32,
    pub occupancy: OccupancyRule,
    /// Reject placements whose cubes overlap an existing one.
    pub hard_core: bool,
    /// Draw a uniform in-plane rotation for every cube.
    pub random_azimuth: bool,
}

impl Default for ComplexGeometry {
    fn default() -> Self {
        Self {
            cube_edge: 5.8,
            standoff: 0.0,
            labels_per_site: 4,
            occupancy: OccupancyRule::Full,
            hard_core: false,
            random_azimuth: true,
        }
    }
}

const HARD_CORE_ATTEMPTS: usize = 1000;

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// Random streptavidin scene: Poisson(σ_SA·area) complexes, uniform centers.
pub fn build_sa_scene(
    sigma_sa: f64,
    region: Region,
    geometry: &ComplexGeometry,
    label_spec: SpinLabelSpec,
    seed: u64,
) -> Result<Scene> {
    if !(sigma_sa.is_finite() && sigma_sa >= 0.0) {
        return Err(domain(format!("sigma_sa must be >= 0, got {sigma_sa}")));
    }
    region.validate()?;
    let mut rng = rng::stream(seed, "sa-scene", 0);
    let count = poisson_count(sigma_sa * region.area(), &mut rng)?;
    let mut complexes: Vec<SaComplex> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut center = region.uniform_point(&mut rng);
        if geometry.hard_core {
            let mut attempts = 0;
            while overlaps(&complexes, center, geometry.cube_edge) {
                attempts += 1;
                if attempts >= HARD_CORE_ATTEMPTS {
                    return Err(Error::Sampling(format!(
                        "could not place complex without overlap after {HARD_CORE_ATTEMPTS} attempts"
                    )));
                }
                center = region.uniform_point(&mut rng);
            }
        }
        let azimuth = if geometry.random_azimuth {
            PI * rng.random::<f64>()
        } else {
            0.0
        };
        let occupied_sites = match geometry.occupancy {
            OccupancyRule::Full => vec![0, 1, 2, 3],
            OccupancyRule::Fixed { n } => (0..n.min(4)).collect(),
            OccupancyRule::Bernoulli { p } => (0..4).filter(|_| rng.random::<f64>() < p).collect(),
        };
        complexes.push(SaComplex {
            center,
            cube_edge: geometry.cube_edge,
            standoff: geometry.standoff,
            azimuth,
            occupied_sites,
            labels_per_site: geometry.labels_per_site,
        });
    }
    let scene = Scene {
        region,
        complexes,
        planes: Vec::new(),
        label_spec,
    };
    scene.validate()?;
    Ok(scene)
}

fn overlaps(existing: &[SaComplex], center: [f64; 2], edge: f64) -> bool {
    // footprints approximated by inscribed discs
    let min_sep = edge;
    existing.iter().any(|c| {
        let dx = c.center[0] - center[0];
        let dy = c.center[1] - center[1];
        dx * dx + dy * dy < min_sep * min_sep
    })
}

/// Scene with a single uniform label plane, Poisson(density·area) points.
pub fn build_plane_scene(
    density: f64,
    height: f64,
    labels_per_point: u32,
    region: Region,
    label_spec: SpinLabelSpec,
    seed: u64,
) -> Result<Scene> {
    if !(density.is_finite() && density >= 0.0 && height.is_finite() && height >= 0.0) {
        return Err(domain("plane density and height must be non-negative"));
    }
    region.validate()?;
    let mut rng = rng::stream(seed, "plane-scene", 0);
    let count = poisson_count(density * region.area(), &mut rng)?;
    let points = (0..count).map(|_| region.uniform_point(&mut rng)).collect();
    let scene = Scene {
        region,
        complexes: Vec::new(),
        planes: vec![LabelPlane {
            density,
            height,
            labels_per_point,
            points,
        }],
        label_spec,
    };
    scene.validate()?;
    Ok(scene)
}

/// Identifies which scene element produced a contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceId {
    Complex(usize),
    PlanePoint { plane: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvSignal {
    /// Total label-induced rate, s⁻¹.
    pub delta_gamma: f64,
    pub per_source: Vec<(SourceId, f64)>,
}

impl NvSignal {
    /// Largest single-source fraction of the total; 0 for an empty signal.
    pub fn max_share(&self) -> f64 {
        if self.delta_gamma <= 0.0 {
            return 0.0;
        }
        self.per_source
            .iter()
            .map(|(_, r)| r / self.delta_gamma)
            .fold(0.0, f64::max)
    }

    pub fn shares(&self) -> Vec<f64> {
        if self.delta_gamma <= 0.0 {
            return Vec::new();
        }
        self.per_source.iter().map(|(_, r)| r / self.delta_gamma).collect()
    }
}

fn point_rate(
    nv_pos: [f64; 3],
    label_pos: [f64; 3],
    multiplicity: u32,
    spec: SpinLabelSpec,
    frame: &AxisFrame,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let r = [
        (label_pos[0] - nv_pos[0]) * NM,
        (label_pos[1] - nv_pos[1]) * NM,
        (label_pos[2] - nv_pos[2]) * NM,
    ];
    site_rate(&LabelSite::new(r, multiplicity, spec), frame, constants)
}

/// Label-induced rate seen by `nv`, broken down by scene element.
pub fn nv_signal(nv: &NvCenter, scene: &Scene, constants: &PhysicalConstants) -> Result<NvSignal> {
    if !(nv.depth.is_finite() && nv.depth > 0.0) {
        return Err(domain(format!("NV depth must be positive, got {}", nv.depth)));
    }
    let frame = nv.frame();
    let pos = nv.position();
    let spec = scene.label_spec;
    let mut per_source = Vec::with_capacity(scene.source_count());
    for (i, c) in scene.complexes.iter().enumerate() {
        let mut rate = 0.0;
        for &k in &c.occupied_sites {
            rate += point_rate(pos, c.binding_site(k), c.labels_per_site, spec, &frame, constants)?;
        }
        per_source.push((SourceId::Complex(i), rate));
    }
    for (p, plane) in scene.planes.iter().enumerate() {
        for (index, xy) in plane.points.iter().enumerate() {
            let rate = point_rate(
                pos,
                [xy[0], xy[1], plane.height],
                plane.labels_per_point,
                spec,
                &frame,
                constants,
            )?;
            per_source.push((SourceId::PlanePoint { plane: p, index }, rate));
        }
    }
    let delta_gamma = per_source.iter().map(|(_, r)| r).sum();
    Ok(NvSignal {
        delta_gamma,
        per_source,
    })
}
