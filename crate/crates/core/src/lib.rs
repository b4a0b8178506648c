//! Relaxometry of shallow NV centers near spin-labelled proteins: closed-form
//! relaxation physics, surface-noise models, scene Monte Carlo, ensemble
//! T1 synthesis, curve fitting and density inference.

pub mod ensemble;
pub mod error;
pub mod fitters;
pub mod inference;
pub mod rng;
pub mod scene;
pub mod spinphysics;
pub mod stats;
pub mod surfacenoise;

pub use ensemble::{RatePopulation, T1Curve};
pub use error::{Error, Result};
pub use fitters::{DecayModel, Family, FitResult};
pub use scene::{NvCenter, Region, Scene};
pub use spinphysics::{PhysicalConstants, SpinLabelSpec};
pub use surfacenoise::{AxisTilt, DepthDistribution, SurfaceNoiseModel};
