//! Particle state, scene assembly and the adaptive timestep.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use super::constitutive::PlasticState;
use super::{Boundaries, SimConfig, GRID_MARGIN};
use crate::material::{wave_speeds, MaterialField, MaterialModel, PlasticityParams};
use crate::math::exp;
use crate::{Error, Result};

/// Placement of an object's field in the world: `x' = R (s x) + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Transform {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl Transform {
    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::default()
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let s = [p[0] * self.scale, p[1] * self.scale, p[2] * self.scale];
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * s[0] + r[i][1] * s[1] + r[i][2] * s[2];
        }
        out
    }
}

/// One object of a scene before it becomes particles.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneObject {
    pub id: u32,
    pub name: String,
    /// Filled field in object coordinates.
    pub field: MaterialField,
    /// Spacing the field was sampled at (m, before scaling).
    pub particle_spacing: f64,
    pub transform: Transform,
    pub velocity: [f64; 3],
    /// Immovable prop: imposes its velocity on the grid and ignores forces.
    pub kinematic: bool,
}

/// Per-object forces and bookkeeping.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectState {
    pub id: u32,
    pub name: String,
    /// First particle and one past the last.
    pub particles: (usize, usize),
    pub gravity: [f64; 3],
    pub wind: [f64; 3],
    pub kinematic: bool,
}

/// Background grid placement.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: f64,
    /// Node count per axis.
    pub dims: [usize; 3],
}

impl GridSpec {
    fn from_config(cfg: &SimConfig) -> Self {
        let h = cfg.grid_spacing;
        let mut dims = [0; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            *d = ((cfg.domain_max[a] - cfg.domain_min[a]) / h) as usize + 1;
        }
        Self {
            origin: cfg.domain_min,
            spacing: h,
            dims,
        }
    }

    /// Whether `x` keeps `margin` cells to every grid edge.
    pub fn contains(&self, x: &[f64; 3], margin: usize) -> bool {
        (0..3).all(|a| {
            let local = (x[a] - self.origin[a]) / self.spacing;
            local >= margin as f64 && local <= (self.dims[a] - 1 - margin) as f64
        })
    }
}

/// Particles, grid placement, per-object forces and the clock.
///
/// Per-particle data is stored column-wise; index `p` of every vector
/// describes particle `p`. Particles of one object are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState {
    pub position: Vec<Vector3<f64>>,
    pub velocity: Vec<Vector3<f64>>,
    pub mass: Vec<f64>,
    pub volume: Vec<f64>,
    /// Elastic deformation gradient.
    pub deformation: Vec<Matrix3<f64>>,
    pub affine: Vec<Matrix3<f64>>,
    pub plastic: Vec<PlasticState>,
    pub object: Vec<u32>,
    /// Index into `objects` for each particle.
    pub object_slot: Vec<usize>,
    pub part: Vec<Option<u32>>,
    pub interior: Vec<bool>,
    pub model: Vec<MaterialModel>,
    pub young: Vec<f64>,
    pub poisson: Vec<f64>,
    pub density: Vec<f64>,
    pub objects: Vec<ObjectState>,
    pub grid: GridSpec,
    pub boundaries: Boundaries,
    pub ground_height: f64,
    pub damping: f64,
    pub plasticity: PlasticityParams,
    pub time: f64,
    pub substeps: u64,
}

impl SimulationState {
    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vector3<f64> {
        let mut m = Vector3::zeros();
        for (mass, v) in self.mass.iter().zip(&self.velocity) {
            m += v * *mass;
        }
        m
    }

    pub fn center_of_mass(&self, slot: usize) -> Vector3<f64> {
        let (start, end) = self.objects[slot].particles;
        let mut acc = Vector3::zeros();
        let mut total = 0.0;
        for p in start..end {
            acc += self.position[p] * self.mass[p];
            total += self.mass[p];
        }
        acc / total
    }

    pub fn slot_of(&self, id: u32) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// Positions as plain arrays.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.position.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Live parameters and masses satisfy the field validity ranges.
    pub fn check_live_parameters(&self) -> Result<()> {
        for p in 0..self.len() {
            let ok = self.young[p] > 0.0
                && self.young[p].is_finite()
                && self.poisson[p] > -1.0
                && self.poisson[p] < 0.5
                && self.density[p] > 0.0
                && self.density[p].is_finite()
                && self.mass[p] > 0.0;
            if !ok {
                return Err(Error::Domain(format!(
                    "particle {p} has invalid live parameters (E={}, ν={}, ρ={}, m={})",
                    self.young[p], self.poisson[p], self.density[p], self.mass[p]
                )));
            }
        }
        Ok(())
    }
}

/// Turns placed, filled fields into particles.
///
/// Each particle gets volume `(scale · spacing)³`, mass `ρ · volume`, `F = I`,
/// zero affine matrix and its object's initial velocity.
pub fn build_state(objects: &[SceneObject], cfg: &SimConfig) -> Result<SimulationState> {
    cfg.validate()?;
    if objects.iter().all(|o| o.field.is_empty()) {
        return Err(Error::EmptyScene);
    }
    let grid = GridSpec::from_config(cfg);
    let total: usize = objects.iter().map(|o| o.field.len()).sum();
    let mut s = SimulationState {
        position: Vec::with_capacity(total),
        velocity: Vec::with_capacity(total),
        mass: Vec::with_capacity(total),
        volume: Vec::with_capacity(total),
        deformation: Vec::with_capacity(total),
        affine: Vec::with_capacity(total),
        plastic: Vec::with_capacity(total),
        object: Vec::with_capacity(total),
        object_slot: Vec::with_capacity(total),
        part: Vec::with_capacity(total),
        interior: Vec::with_capacity(total),
        model: Vec::with_capacity(total),
        young: Vec::with_capacity(total),
        poisson: Vec::with_capacity(total),
        density: Vec::with_capacity(total),
        objects: Vec::with_capacity(objects.len()),
        grid,
        boundaries: cfg.boundaries,
        ground_height: cfg.ground_height,
        damping: cfg.damping,
        plasticity: cfg.plasticity,
        time: 0.0,
        substeps: 0,
    };
    for (slot, obj) in objects.iter().enumerate() {
        if objects[..slot].iter().any(|o| o.id == obj.id) {
            return Err(Error::InvalidConfig(format!("duplicate object id {}", obj.id)));
        }
        obj.field
            .ensure_valid()
            .map_err(|e| e.context(format!("object {}", obj.id)))?;
        if !(obj.particle_spacing > 0.0 && obj.transform.scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "object {} needs positive particle spacing and scale",
                obj.id
            )));
        }
        let side = obj.particle_spacing * obj.transform.scale;
        let volume = side * side * side;
        let start = s.position.len();
        for i in 0..obj.field.len() {
            let x = obj.transform.apply(obj.field.positions[i]);
            if !grid.contains(&x, GRID_MARGIN) {
                return Err(Error::GridOverflow {
                    object: obj.id,
                    particle: i,
                });
            }
            let model = obj.field.model(i).ok_or_else(|| {
                Error::Domain(format!("unknown class id {}", obj.field.class_id[i]))
            })?;
            s.position.push(Vector3::from(x));
            s.velocity.push(Vector3::from(obj.velocity));
            s.volume.push(volume);
            s.mass.push(obj.field.density[i] * volume);
            s.deformation.push(Matrix3::identity());
            s.affine.push(Matrix3::zeros());
            s.plastic.push(PlasticState::default());
            s.object.push(obj.id);
            s.object_slot.push(slot);
            s.part.push(obj.field.part(i));
            s.interior.push(obj.field.interior[i]);
            s.model.push(model);
            s.young.push(obj.field.young_modulus[i]);
            s.poisson.push(obj.field.poisson_ratio[i]);
            s.density.push(obj.field.density[i]);
        }
        s.objects.push(ObjectState {
            id: obj.id,
            name: obj.name.clone(),
            particles: (start, s.position.len()),
            gravity: cfg.gravity,
            wind: cfg.wind,
            kinematic: obj.kinematic,
        });
    }
    Ok(s)
}

/// Longitudinal wave speed the timestep must resolve for particle `p`.
pub(crate) fn signal_speed(state: &SimulationState, p: usize) -> Result<f64> {
    let young = match state.model[p] {
        MaterialModel::Rigid => state.young[p].min(state.plasticity.rigid_max_modulus),
        MaterialModel::Snow => {
            state.young[p] * exp(state.plasticity.snow_hardening * (1.0 - state.plastic[p].jp))
        }
        _ => state.young[p],
    };
    Ok(wave_speeds(young, state.poisson[p], state.density[p])?.c_p)
}

/// `cfl · h / (max c_p + max |v|)` over all particles; infinite when nothing
/// moves and no signal propagates.
pub fn stable_dt(state: &SimulationState, cfg: &SimConfig) -> Result<f64> {
    let mut max_c: f64 = 0.0;
    let mut max_v: f64 = 0.0;
    for p in 0..state.len() {
        max_c = max_c.max(signal_speed(state, p)?);
        max_v = max_v.max(state.velocity[p].norm());
    }
    let speed = max_c + max_v;
    if speed == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(cfg.cfl * state.grid.spacing / speed)
}

/// Aggregates the event triggers look at.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectAggregate {
    pub id: u32,
    pub min_height: f64,
    pub max_speed: f64,
    /// Some particle's transfer stencil reaches a ground node, i.e. it sits
    /// less than 1.5 cells above the ground plane.
    pub ground_contact: bool,
    pub centroid: [f64; 3],
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
}

/// Per-object aggregates at the current state, in object order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventFlags {
    pub objects: Vec<ObjectAggregate>,
}

impl EventFlags {
    pub fn get(&self, id: u32) -> Option<&ObjectAggregate> {
        self.objects.iter().find(|o| o.id == id)
    }
}

pub fn object_aggregates(state: &SimulationState) -> EventFlags {
    // Quadratic B-splines touch nodes up to 1.5h away. A resting body
    // hovers about one cell above the sticky nodes, so a tighter threshold
    // would never fire.
    let contact = state.ground_height + 1.5 * state.grid.spacing;
    let objects = state
        .objects
        .iter()
        .map(|o| {
            let (start, end) = o.particles;
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            let mut sum = [0.0; 3];
            let mut max_speed: f64 = 0.0;
            for p in start..end {
                let x = state.position[p];
                for a in 0..3 {
                    lo[a] = lo[a].min(x[a]);
                    hi[a] = hi[a].max(x[a]);
                    sum[a] += x[a];
                }
                max_speed = max_speed.max(state.velocity[p].norm());
            }
            let n = (end - start).max(1) as f64;
            ObjectAggregate {
                id: o.id,
                min_height: lo[1],
                max_speed,
                ground_contact: lo[1] < contact,
                centroid: [sum[0] / n, sum[1] / n, sum[2] / n],
                aabb_min: lo,
                aabb_max: hi,
            }
        })
        .collect();
    EventFlags { objects }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;
    use alloc::vec;

    fn object(id: u32, pts: Vec<[f64; 3]>, young: f64, poisson: f64, density: f64) -> SceneObject {
        SceneObject {
            id,
            name: format!("obj{id}"),
            field: MaterialField::uniform(pts, MaterialModel::Elastic, young, poisson, density),
            particle_spacing: 0.1,
            transform: Transform::default(),
            velocity: [0.0; 3],
            kinematic: false,
        }
    }

    #[test]
    fn single_particle_mass() {
        let s = build_state(&[object(0, vec![[0.5; 3]], 1e5, 0.3, 1000.0)], &SimConfig::default())
            .unwrap();
        assert!((s.mass[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.deformation[0], Matrix3::identity());
    }

    #[test]
    fn object_partition() {
        let objs = [
            object(3, vec![[0.5; 3]; 4], 1e5, 0.3, 1000.0),
            object(7, vec![[0.4; 3]; 2], 1e5, 0.3, 1000.0),
        ];
        let s = build_state(&objs, &SimConfig::default()).unwrap();
        assert_eq!(s.object, vec![3, 3, 3, 3, 7, 7]);
        assert_eq!(s.objects[1].particles, (4, 6));
    }

    #[test]
    fn overflow_and_empty() {
        let cfg = SimConfig::default();
        assert!(matches!(
            build_state(&[object(2, vec![[0.5, 0.5, 2.0]], 1e5, 0.3, 1e3)], &cfg),
            Err(Error::GridOverflow { object: 2, particle: 0 })
        ));
        assert_eq!(build_state(&[], &cfg), Err(Error::EmptyScene));
    }

    #[test]
    fn stable_dt_formula() {
        let cfg = SimConfig {
            grid_spacing: 0.01,
            ..SimConfig::default()
        };
        let s = build_state(&[object(0, vec![[0.5; 3]], 2.0, 0.0, 1.0)], &cfg).unwrap();
        let dt = stable_dt(&s, &cfg).unwrap();
        assert!((dt - 0.003 / sqrt(2.0)).abs() < 1e-18);
    }

    #[test]
    fn rigid_speed_uses_clamped_modulus() {
        let cfg = SimConfig::default();
        let mut o = object(0, vec![[0.5; 3]], 1e13, 0.3, 1000.0);
        o.field.class_id[0] = MaterialModel::Rigid.index();
        let s = build_state(&[o], &cfg).unwrap();
        let c = wave_speeds(1e9, 0.3, 1000.0).unwrap().c_p;
        assert_eq!(stable_dt(&s, &cfg).unwrap(), cfg.cfl * cfg.grid_spacing / c);
    }
}
