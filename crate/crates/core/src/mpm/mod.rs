//! MLS-MPM solver over the six material classes.
//!
//! A substep scatters particle mass, momentum and stress to a background grid
//! with quadratic B-spline weights, updates grid velocities under body forces
//! and wall conditions, then gathers velocities and affine matrices back
//! (APIC) and advances deformation gradients and positions.
//!
//! Grid accumulation is a gather: particles are binned by their stencil base
//! cell and every node sums its contributors cell by cell in particle index
//! order. The same bits come out however the node loop is split across
//! threads.

mod constitutive;
mod simulate;
mod solver;
mod state;

pub use constitutive::{
    constitutive_stress, effective_lame, piola_stress, return_map, ConstitutiveParams,
    PlasticState, StressUpdate,
};
pub use simulate::{simulate, simulate_with, FrameSink, RunSummary};
pub use solver::step;
pub use state::{
    build_state, object_aggregates, stable_dt, EventFlags, GridSpec, ObjectAggregate,
    ObjectState, SceneObject, SimulationState, Transform,
};

use alloc::format;

use crate::material::PlasticityParams;
use crate::{Error, Result};

/// Cells kept free between particles and the grid edge.
pub const GRID_MARGIN: usize = 3;

/// Velocity condition applied at a wall or the ground.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Boundary {
    /// Zero velocity.
    Sticky,
    /// Zero normal velocity, free tangential motion.
    Slip,
    /// Normal velocity may only point away from the wall.
    #[default]
    Separate,
}

impl Boundary {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sticky" => Some(Boundary::Sticky),
            "slip" => Some(Boundary::Slip),
            "separate" => Some(Boundary::Separate),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Sticky => "sticky",
            Boundary::Slip => "slip",
            Boundary::Separate => "separate",
        }
    }

    /// Applies the condition for a wall with inward unit normal along `axis`
    /// with sign `inward`.
    pub(crate) fn apply(self, v: &mut [f64; 3], axis: usize, inward: f64) {
        match self {
            Boundary::Sticky => *v = [0.0; 3],
            Boundary::Slip => v[axis] = 0.0,
            Boundary::Separate => {
                if v[axis] * inward < 0.0 {
                    v[axis] = 0.0;
                }
            }
        }
    }
}

/// Conditions for the ground plane and the six domain walls.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Boundaries {
    pub ground: Boundary,
    /// Walls in the order x−, x+, y−, y+, z−, z+.
    pub walls: [Boundary; 6],
}

impl Default for Boundaries {
    fn default() -> Self {
        Self {
            ground: Boundary::Sticky,
            walls: [Boundary::Separate; 6],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    /// Grid spacing h (m).
    pub grid_spacing: f64,
    /// Lower corner of the grid (m).
    pub domain_min: [f64; 3],
    /// Upper corner of the grid (m).
    pub domain_max: [f64; 3],
    pub cfl: f64,
    /// Recorded frames, including the initial one.
    pub frames: usize,
    pub fps: f64,
    /// Upper bound on a substep, for scenes with very slow signals (s).
    pub max_dt: f64,
    pub boundaries: Boundaries,
    /// Height of the ground plane (m).
    pub ground_height: f64,
    /// Grid velocity damping rate (1/s).
    pub damping: f64,
    pub seed: u64,
    /// Initial gravity for every object (m/s²).
    pub gravity: [f64; 3],
    /// Initial wind acceleration for every object (m/s²).
    pub wind: [f64; 3],
    pub plasticity: PlasticityParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_spacing: 0.02,
            domain_min: [0.0; 3],
            domain_max: [1.0; 3],
            cfl: 0.3,
            frames: 24,
            fps: 24.0,
            max_dt: 1e-3,
            boundaries: Boundaries::default(),
            ground_height: 0.06,
            damping: 0.0,
            seed: 0,
            gravity: [0.0, -9.8, 0.0],
            wind: [0.0; 3],
            plasticity: PlasticityParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let h = self.grid_spacing;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid spacing must be positive, got {h}")));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "CFL number must lie in (0, 1), got {}",
                self.cfl
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {}", self.fps)));
        }
        if self.frames == 0 {
            return Err(Error::InvalidConfig("at least one frame is required".into()));
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::InvalidConfig("max_dt must be positive".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidConfig("damping must be non-negative".into()));
        }
        let min_extent = (2 * GRID_MARGIN + 2) as f64 * h;
        for a in 0..3 {
            let (lo, hi) = (self.domain_min[a], self.domain_max[a]);
            if !(lo.is_finite() && hi.is_finite() && hi - lo >= min_extent) {
                return Err(Error::InvalidConfig(format!(
                    "domain extent along axis {a} must be at least {min_extent} m"
                )));
            }
        }
        if self.gravity.iter().chain(&self.wind).any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig("gravity and wind must be finite".into()));
        }
        self.plasticity.validate()
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }
}
