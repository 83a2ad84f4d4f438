//! Recorded particle motion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::mpm::{EventFlags, SimulationState};
use crate::schedule::EditRecord;
use crate::{Error, Result};

/// Per-object summary of one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectFrame {
    pub id: u32,
    pub centroid: [f64; 3],
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
    pub max_speed: f64,
    pub ground_contact: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Frame {
    pub index: usize,
    pub time: f64,
    /// Positions rounded to `f32`, the precision of the exported frame files.
    pub positions: Vec<[f32; 3]>,
    pub objects: Vec<ObjectFrame>,
}

impl Frame {
    pub fn capture(index: usize, state: &SimulationState, events: &EventFlags) -> Self {
        let positions = state
            .position
            .iter()
            .map(|x| [x.x as f32, x.y as f32, x.z as f32])
            .collect();
        let objects = events
            .objects
            .iter()
            .map(|a| ObjectFrame {
                id: a.id,
                centroid: a.centroid,
                aabb_min: a.aabb_min,
                aabb_max: a.aabb_max,
                max_speed: a.max_speed,
                ground_contact: a.ground_contact,
            })
            .collect();
        Self {
            index,
            time: state.time,
            positions,
            objects,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A full simulated run: frames, the edit log and identifying hashes.
///
/// The hashes are hex digests filled in by whoever knows the producing
/// inputs; the simulator leaves them empty.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub fps: f64,
    pub frames: Vec<Frame>,
    /// Object id of every particle.
    pub particle_object: Vec<u32>,
    pub edit_log: Vec<EditRecord>,
    pub substeps: u64,
    pub scene_hash: String,
    pub config_hash: String,
}

impl Trajectory {
    pub fn particle_count(&self) -> usize {
        self.particle_object.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {}", self.fps)));
        }
        let n = self.particle_count();
        for (k, f) in self.frames.iter().enumerate() {
            if f.index != k {
                return Err(Error::Shape(format!("frame {k} carries index {}", f.index)));
            }
            if f.len() != n {
                return Err(Error::Shape(format!(
                    "frame {k} has {} particles, expected {n}",
                    f.len()
                )));
            }
        }
        Ok(())
    }
}
