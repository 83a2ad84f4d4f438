//! Temporal and event-triggered edits of a running simulation.
//!
//! An [`InstructionSchedule`] is an immutable, validated list of
//! [`Intervention`]s plus clamp limits and a cap on how fast log-scaled
//! properties may change. [`apply_interventions`] runs between substeps and
//! keeps per-intervention progress in an [`InterventionTracker`].
//!
//! Young's modulus and density ramp geometrically, Poisson's ratio and force
//! vectors linearly. Besides the ramp, every change of a log-scaled property
//! is limited to `max_log_rate` decades per second of elapsed simulation time
//! since the previous application.

mod grammar;

pub use grammar::{compile_schedule, parse_schedule, ParsedSchedule};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::material::{MaterialModel, ParameterBounds};
use crate::math::{abs, exp, exp10, ln, log10};
use crate::mpm::{EventFlags, PlasticState, SimulationState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Property {
    YoungModulus,
    PoissonRatio,
    Density,
    MaterialModel,
    VelocityImpulse,
    Gravity,
    Wind,
}

impl Property {
    pub const ALL: [Property; 7] = [
        Property::YoungModulus,
        Property::PoissonRatio,
        Property::Density,
        Property::MaterialModel,
        Property::VelocityImpulse,
        Property::Gravity,
        Property::Wind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::YoungModulus => "young_modulus",
            Property::PoissonRatio => "poisson_ratio",
            Property::Density => "density",
            Property::MaterialModel => "material_model",
            Property::VelocityImpulse => "velocity_impulse",
            Property::Gravity => "gravity",
            Property::Wind => "wind",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == s)
    }

    pub fn scale(self) -> RampScale {
        match self {
            Property::YoungModulus | Property::Density => RampScale::Log,
            _ => RampScale::Linear,
        }
    }

    fn is_scalar(self) -> bool {
        matches!(
            self,
            Property::YoungModulus | Property::PoissonRatio | Property::Density
        )
    }

    fn is_instant(self) -> bool {
        matches!(self, Property::MaterialModel | Property::VelocityImpulse)
    }
}

impl core::fmt::Display for Property {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Value {
    Scalar(f64),
    Vector([f64; 3]),
    Model(MaterialModel),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Trigger {
    AtTime(f64),
    OnGroundContact,
    OnHeightBelow(f64),
    OnSpeedAbove(f64),
}

impl Trigger {
    pub fn time(&self) -> Option<f64> {
        match self {
            Trigger::AtTime(t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectSelector {
    All,
    Id(u32),
}

/// Which particles an intervention touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selector {
    pub object: ObjectSelector,
    pub part: Option<u32>,
    pub interior_only: bool,
}

impl Selector {
    pub fn object(id: u32) -> Self {
        Self {
            object: ObjectSelector::Id(id),
            part: None,
            interior_only: false,
        }
    }

    fn matches_object(&self, id: u32) -> bool {
        match self.object {
            ObjectSelector::All => true,
            ObjectSelector::Id(o) => o == id,
        }
    }

    fn matches(&self, state: &SimulationState, p: usize) -> bool {
        self.matches_object(state.object[p])
            && self.part.is_none_or(|l| state.part[p] == Some(l))
            && (!self.interior_only || state.interior[p])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intervention {
    pub target: Selector,
    pub property: Property,
    pub value: Value,
    pub trigger: Trigger,
    /// Seconds; zero means instantaneous.
    pub ramp_duration: f64,
    /// Event triggers fire at most once when set; otherwise they re-arm
    /// whenever their condition turns false.
    pub one_shot: bool,
}

/// Inclusive bounds for one property.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Clamp {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClampTable {
    pub young_modulus: Clamp,
    pub poisson_ratio: Clamp,
    pub density: Clamp,
}

impl Default for ClampTable {
    fn default() -> Self {
        let b = ParameterBounds::DEFAULT;
        Self {
            young_modulus: Clamp {
                min: b.young_modulus.0,
                max: b.young_modulus.1,
            },
            poisson_ratio: Clamp {
                min: b.poisson_ratio.0,
                max: b.poisson_ratio.1,
            },
            density: Clamp {
                min: b.density.0,
                max: b.density.1,
            },
        }
    }
}

impl ClampTable {
    pub fn get(&self, property: Property) -> Option<Clamp> {
        match property {
            Property::YoungModulus => Some(self.young_modulus),
            Property::PoissonRatio => Some(self.poisson_ratio),
            Property::Density => Some(self.density),
            _ => None,
        }
    }

    pub fn set(&mut self, property: Property, clamp: Clamp) -> Result<()> {
        match property {
            Property::YoungModulus => self.young_modulus = clamp,
            Property::PoissonRatio => self.poisson_ratio = clamp,
            Property::Density => self.density = clamp,
            other => {
                return Err(Error::InvalidConfig(format!("{other} has no clamp")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (Property::YoungModulus, self.young_modulus, 0.0, f64::INFINITY),
            (Property::PoissonRatio, self.poisson_ratio, -1.0, 0.5),
            (Property::Density, self.density, 0.0, f64::INFINITY),
        ];
        for (property, c, lo, hi) in checks {
            if !(c.min < c.max && c.min > lo && c.max < hi) {
                return Err(Error::InvalidConfig(format!(
                    "clamp for {property} must satisfy {lo} < min < max < {hi}, got [{}, {}]",
                    c.min, c.max
                )));
            }
        }
        Ok(())
    }
}

/// Default cap on log-scaled property changes, in decades per second.
pub const DEFAULT_MAX_LOG_RATE: f64 = 2.0;

/// Objects and part labels a schedule may refer to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneInfo {
    pub objects: Vec<ObjectInfo>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectInfo {
    pub id: u32,
    pub parts: Vec<u32>,
}

impl SceneInfo {
    pub fn from_state(state: &SimulationState) -> Self {
        let objects = state
            .objects
            .iter()
            .map(|o| {
                let mut parts: Vec<u32> = state.part[o.particles.0..o.particles.1]
                    .iter()
                    .flatten()
                    .copied()
                    .collect();
                parts.sort_unstable();
                parts.dedup();
                ObjectInfo { id: o.id, parts }
            })
            .collect();
        Self { objects }
    }
}

/// A validated intervention program.
#[derive(Clone, Debug, PartialEq)]
pub struct InstructionSchedule {
    interventions: Vec<Intervention>,
    clamps: ClampTable,
    max_log_rate: f64,
}

impl Default for InstructionSchedule {
    fn default() -> Self {
        Self {
            interventions: Vec::new(),
            clamps: ClampTable::default(),
            max_log_rate: DEFAULT_MAX_LOG_RATE,
        }
    }
}

impl InstructionSchedule {
    /// Validates and orders the interventions.
    ///
    /// Time-triggered entries are sorted by trigger time (stable) and come
    /// first; event-triggered ones follow in their original order.
    pub fn new(
        interventions: Vec<Intervention>,
        clamps: ClampTable,
        max_log_rate: f64,
        scene: &SceneInfo,
    ) -> Result<Self> {
        clamps.validate()?;
        if !(max_log_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max_log_rate must be positive, got {max_log_rate}"
            )));
        }
        for iv in &interventions {
            validate_intervention(iv, &clamps, scene)?;
        }
        let (mut timed, events): (Vec<_>, Vec<_>) =
            interventions.into_iter().partition(|iv| iv.trigger.time().is_some());
        timed.sort_by(|a, b| {
            let (ta, tb) = (a.trigger.time().unwrap_or(0.0), b.trigger.time().unwrap_or(0.0));
            ta.total_cmp(&tb)
        });
        timed.extend(events);
        Ok(Self {
            interventions: timed,
            clamps,
            max_log_rate,
        })
    }

    pub fn interventions(&self) -> &[Intervention] {
        &self.interventions
    }

    pub fn clamps(&self) -> &ClampTable {
        &self.clamps
    }

    pub fn max_log_rate(&self) -> f64 {
        self.max_log_rate
    }

    pub fn is_empty(&self) -> bool {
        self.interventions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.interventions.len()
    }
}

fn validate_intervention(iv: &Intervention, clamps: &ClampTable, scene: &SceneInfo) -> Result<()> {
    if !(iv.ramp_duration >= 0.0 && iv.ramp_duration.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "ramp duration must be a non-negative number, got {}",
            iv.ramp_duration
        )));
    }
    if iv.property.is_instant() && iv.ramp_duration != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "{} is instantaneous and cannot ramp",
            iv.property
        )));
    }
    match (iv.property, iv.value) {
        (p, Value::Scalar(v)) if p.is_scalar() => {
            let c = clamps.get(p).unwrap_or(Clamp {
                min: f64::NEG_INFINITY,
                max: f64::INFINITY,
            });
            let elimination = p == Property::Density && iv.target.interior_only && v >= 0.0;
            if !v.is_finite() || v > c.max || (v < c.min && !elimination) {
                return Err(Error::ClampViolation {
                    property: p.name().to_string(),
                    value: v,
                    min: c.min,
                    max: c.max,
                });
            }
        }
        (Property::MaterialModel, Value::Model(_)) => {}
        (Property::VelocityImpulse | Property::Gravity | Property::Wind, Value::Vector(v)) => {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig(format!("{} must be finite", iv.property)));
            }
        }
        (p, v) => {
            return Err(Error::InvalidConfig(format!("{p} cannot take the value {v:?}")));
        }
    }
    match iv.trigger {
        Trigger::AtTime(t) if !(t >= 0.0 && t.is_finite()) => {
            return Err(Error::InvalidConfig(format!("trigger time must be non-negative, got {t}")));
        }
        Trigger::OnHeightBelow(y) if !y.is_finite() => {
            return Err(Error::InvalidConfig("trigger height must be finite".into()));
        }
        Trigger::OnSpeedAbove(s) if !(s >= 0.0 && s.is_finite()) => {
            return Err(Error::InvalidConfig("trigger speed must be non-negative".into()));
        }
        _ => {}
    }
    let objects: Vec<&ObjectInfo> = match iv.target.object {
        ObjectSelector::All => scene.objects.iter().collect(),
        ObjectSelector::Id(id) => {
            let o = scene
                .objects
                .iter()
                .find(|o| o.id == id)
                .ok_or_else(|| Error::UnknownTarget(format!("object {id}")))?;
            alloc::vec![o]
        }
    };
    if let Some(part) = iv.target.part {
        if !objects.iter().any(|o| o.parts.contains(&part)) {
            return Err(Error::UnknownTarget(format!("part {part} of {:?}", iv.target.object)));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RampScale {
    Linear,
    Log,
}

/// Interpolates from `from` to `to` over `duration` seconds.
///
/// `α = clamp(t / duration, 0, 1)`; the log scale interpolates the logarithms.
/// A zero duration jumps straight to `to`.
pub fn ramp_value(from: f64, to: f64, t_since: f64, duration: f64, scale: RampScale) -> Result<f64> {
    if !(duration >= 0.0) {
        return Err(Error::Domain(format!("ramp duration must be non-negative, got {duration}")));
    }
    if scale == RampScale::Log && !(from > 0.0 && to > 0.0) {
        return Err(Error::Domain(format!(
            "log ramp needs positive endpoints, got {from} and {to}"
        )));
    }
    if duration == 0.0 {
        return Ok(to);
    }
    let alpha = (t_since / duration).clamp(0.0, 1.0);
    if alpha == 0.0 {
        return Ok(from);
    }
    if alpha == 1.0 {
        return Ok(to);
    }
    Ok(match scale {
        RampScale::Linear => from + alpha * (to - from),
        RampScale::Log => exp((1.0 - alpha) * ln(from) + alpha * ln(to)),
    })
}

fn ramp_vector(from: [f64; 3], to: [f64; 3], t_since: f64, duration: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for a in 0..3 {
        // Linear ramps cannot fail.
        out[a] = ramp_value(from[a], to[a], t_since, duration, RampScale::Linear).unwrap_or(to[a]);
    }
    out
}

/// What happened in one edit-log entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EditKind {
    /// The trigger condition was met.
    Triggered,
    /// A scalar property moved along its ramp.
    Ramp,
    /// Gravity or wind changed.
    Force,
    Impulse,
    /// Class switch; plastic history was reset and F kept.
    ModelSwitch,
    /// The ramp reached its target.
    Completed,
}

/// One entry of the edit log.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EditRecord {
    pub time: f64,
    pub substep: u64,
    /// Position of the intervention in the compiled schedule.
    pub intervention: usize,
    pub property: Property,
    pub kind: EditKind,
    /// Particles (or objects, for forces) touched.
    pub count: usize,
    /// Smallest and largest value written, for scalar properties.
    pub value_range: Option<(f64, f64)>,
    /// Largest |Δ log10| applied to a particle in this entry.
    pub max_log_change: f64,
    /// Largest |Δ log10| the rate cap allowed in this entry.
    pub log_cap: f64,
    /// Particles whose ramp target was held back by the rate cap.
    pub rate_limited: usize,
    /// Particles whose requested value was clamped.
    pub clamped: usize,
    pub note: String,
}

impl EditRecord {
    fn new(time: f64, substep: u64, intervention: usize, property: Property, kind: EditKind) -> Self {
        Self {
            time,
            substep,
            intervention,
            property,
            kind,
            count: 0,
            value_range: None,
            max_log_change: 0.0,
            log_cap: 0.0,
            rate_limited: 0,
            clamped: 0,
            note: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Waiting,
    Active {
        since: f64,
        particles: Vec<usize>,
        from: Vec<f64>,
        objects: Vec<usize>,
        from_vec: Vec<[f64; 3]>,
    },
    Done,
}

#[derive(Clone, Debug, PartialEq)]
struct Progress {
    phase: Phase,
    fired: usize,
    /// Event triggers re-arm once their condition has been false.
    armed: bool,
}

/// Mutable progress of a schedule over one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct InterventionTracker {
    progress: Vec<Progress>,
    last_time: Option<f64>,
}

impl InterventionTracker {
    pub fn new(schedule: &InstructionSchedule) -> Self {
        Self {
            progress: schedule
                .interventions
                .iter()
                .map(|_| Progress {
                    phase: Phase::Waiting,
                    fired: 0,
                    armed: true,
                })
                .collect(),
            last_time: None,
        }
    }

    /// How many times intervention `i` has fired.
    pub fn fired(&self, i: usize) -> usize {
        self.progress[i].fired
    }

    pub fn is_active(&self, i: usize) -> bool {
        matches!(self.progress[i].phase, Phase::Active { .. })
    }
}

fn event_holds(iv: &Intervention, state: &SimulationState, events: &EventFlags) -> bool {
    events
        .objects
        .iter()
        .filter(|a| iv.target.matches_object(a.id))
        .any(|a| match iv.trigger {
            Trigger::AtTime(_) => false,
            Trigger::OnGroundContact => a.ground_contact,
            Trigger::OnHeightBelow(y) => a.min_height < y,
            Trigger::OnSpeedAbove(s) => a.max_speed > s,
        })
        && !state.is_empty()
}

fn scalar_of(state: &SimulationState, property: Property, p: usize) -> f64 {
    match property {
        Property::YoungModulus => state.young[p],
        Property::PoissonRatio => state.poisson[p],
        _ => state.density[p],
    }
}

fn set_scalar(state: &mut SimulationState, property: Property, p: usize, v: f64) {
    match property {
        Property::YoungModulus => state.young[p] = v,
        Property::PoissonRatio => state.poisson[p] = v,
        _ => {
            state.density[p] = v;
            state.mass[p] = v * state.volume[p];
        }
    }
}

/// Applies every intervention that is due at time `t`.
///
/// Call before each substep with the aggregates of the current state. The
/// returned records describe every change made; an empty list means the
/// state was not touched. Applying twice at the same `t` changes nothing the
/// second time.
pub fn apply_interventions(
    state: &mut SimulationState,
    schedule: &InstructionSchedule,
    tracker: &mut InterventionTracker,
    t: f64,
    events: &EventFlags,
) -> Result<Vec<EditRecord>> {
    if tracker.progress.len() != schedule.interventions.len() {
        return Err(Error::Shape("tracker does not belong to this schedule".into()));
    }
    let elapsed = tracker.last_time.map_or(0.0, |last| (t - last).max(0.0));
    let log_cap = if schedule.max_log_rate.is_infinite() {
        f64::INFINITY
    } else {
        schedule.max_log_rate * elapsed
    };
    let mut log = Vec::new();
    let substep = state.substeps;

    for (i, iv) in schedule.interventions.iter().enumerate() {
        let progress = &mut tracker.progress[i];
        if progress.phase == Phase::Waiting || (progress.phase == Phase::Done && !iv.one_shot) {
            let fire = match iv.trigger {
                Trigger::AtTime(t0) => progress.fired == 0 && t >= t0,
                _ => {
                    let holds = event_holds(iv, state, events);
                    if !holds && !iv.one_shot {
                        progress.armed = true;
                    }
                    holds && progress.armed && (progress.fired == 0 || !iv.one_shot)
                }
            };
            if !fire {
                continue;
            }
            progress.fired += 1;
            progress.armed = false;
            let since = iv.trigger.time().unwrap_or(t);
            let particles: Vec<usize> = (0..state.len()).filter(|&p| iv.target.matches(state, p)).collect();
            let objects: Vec<usize> = (0..state.objects.len())
                .filter(|&s| iv.target.matches_object(state.objects[s].id))
                .collect();
            let mut rec = EditRecord::new(t, substep, i, iv.property, EditKind::Triggered);
            rec.count = particles.len();
            log.push(rec);
            match (iv.property, iv.value) {
                (Property::VelocityImpulse, Value::Vector(dv)) => {
                    let dv = Vector3::from(dv);
                    let mut n = 0;
                    for &p in &particles {
                        if !state.objects[state.object_slot[p]].kinematic {
                            state.velocity[p] += dv;
                            n += 1;
                        }
                    }
                    let mut rec = EditRecord::new(t, substep, i, iv.property, EditKind::Impulse);
                    rec.count = n;
                    log.push(rec);
                    progress.phase = Phase::Done;
                }
                (Property::MaterialModel, Value::Model(m)) => {
                    for &p in &particles {
                        state.model[p] = m;
                        state.plastic[p] = PlasticState::default();
                    }
                    let mut rec = EditRecord::new(t, substep, i, iv.property, EditKind::ModelSwitch);
                    rec.count = particles.len();
                    rec.note = format!("switched to {m}; plastic state reset, deformation kept");
                    log.push(rec);
                    progress.phase = Phase::Done;
                }
                (Property::Gravity | Property::Wind, _) => {
                    let from_vec = objects
                        .iter()
                        .map(|&s| match iv.property {
                            Property::Gravity => state.objects[s].gravity,
                            _ => state.objects[s].wind,
                        })
                        .collect();
                    progress.phase = Phase::Active {
                        since,
                        particles: Vec::new(),
                        from: Vec::new(),
                        objects,
                        from_vec,
                    };
                }
                _ => {
                    let from = particles.iter().map(|&p| scalar_of(state, iv.property, p)).collect();
                    progress.phase = Phase::Active {
                        since,
                        particles,
                        from,
                        objects: Vec::new(),
                        from_vec: Vec::new(),
                    };
                }
            }
        }

        let Phase::Active {
            since,
            particles,
            from,
            objects,
            from_vec,
        } = &progress.phase
        else {
            continue;
        };
        let t_since = t - since;
        let finished_ramp = t_since >= iv.ramp_duration;
        let mut done = false;
        match (iv.property, iv.value) {
            (Property::Gravity | Property::Wind, Value::Vector(to)) => {
                let mut changed = 0;
                for (k, &s) in objects.iter().enumerate() {
                    let v = ramp_vector(from_vec[k], to, t_since, iv.ramp_duration);
                    let slot = &mut state.objects[s];
                    let field = match iv.property {
                        Property::Gravity => &mut slot.gravity,
                        _ => &mut slot.wind,
                    };
                    if *field != v {
                        *field = v;
                        changed += 1;
                    }
                }
                if changed > 0 {
                    let mut rec = EditRecord::new(t, substep, i, iv.property, EditKind::Force);
                    rec.count = changed;
                    log.push(rec);
                }
                if finished_ramp {
                    log.push(EditRecord::new(t, substep, i, iv.property, EditKind::Completed));
                    done = true;
                }
            }
            (property, Value::Scalar(requested)) => {
                let clamp = schedule.clamps.get(property).unwrap_or(Clamp {
                    min: f64::NEG_INFINITY,
                    max: f64::INFINITY,
                });
                let target = requested.clamp(clamp.min, clamp.max);
                let mut rec = EditRecord::new(t, substep, i, property, EditKind::Ramp);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut all_reached = true;
                let log_scale = property.scale() == RampScale::Log;
                if log_scale {
                    rec.log_cap = log_cap;
                }
                for (k, &p) in particles.iter().enumerate() {
                    let wanted =
                        ramp_value(from[k], target, t_since, iv.ramp_duration, property.scale())?
                            .clamp(clamp.min, clamp.max);
                    if wanted != requested && (requested < clamp.min || requested > clamp.max) {
                        rec.clamped += 1;
                    }
                    let current = scalar_of(state, property, p);
                    let mut next = wanted;
                    if log_scale {
                        let delta = log10(wanted) - log10(current);
                        if abs(delta) > log_cap {
                            next = current * exp10(log_cap.copysign(delta));
                            rec.rate_limited += 1;
                        }
                        rec.max_log_change = rec.max_log_change.max(abs(log10(next) - log10(current)));
                    }
                    if next != target {
                        all_reached = false;
                    }
                    if next != current {
                        set_scalar(state, property, p, next);
                        rec.count += 1;
                        lo = lo.min(next);
                        hi = hi.max(next);
                    }
                }
                if rec.count > 0 {
                    rec.value_range = Some((lo, hi));
                    if property == Property::Density && iv.target.interior_only && requested < clamp.min {
                        rec.note = format!("density elimination floored at {}", clamp.min);
                    }
                    log.push(rec);
                }
                if finished_ramp && all_reached {
                    log.push(EditRecord::new(t, substep, i, property, EditKind::Completed));
                    done = true;
                }
            }
            _ => done = true,
        }
        if done {
            progress.phase = Phase::Done;
        }
    }
    tracker.last_time = Some(t);
    Ok(log)
}

/// Checks that no ramp record changed a log-scaled property faster than its
/// cap allowed, returning the first offending record.
pub fn audit_rate_cap(log: &[EditRecord]) -> Option<&EditRecord> {
    log.iter().find(|r| {
        r.kind == EditKind::Ramp
            && r.property.scale() == RampScale::Log
            && r.max_log_change > r.log_cap + 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialField;
    use crate::mpm::{build_state, object_aggregates, SceneObject, SimConfig, Transform};

    fn state() -> SimulationState {
        let pts: Vec<[f64; 3]> = (0..8)
            .map(|i| [0.4 + 0.01 * (i % 2) as f64, 0.4 + 0.01 * ((i / 2) % 2) as f64, 0.4 + 0.01 * (i / 4) as f64])
            .collect();
        let mut field = MaterialField::uniform(pts, MaterialModel::Elastic, 1e5, 0.3, 1000.0);
        field.interior = (0..8).map(|i| i % 2 == 1).collect();
        field.part_label = Some(alloc::vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let obj = SceneObject {
            id: 0,
            name: "box".into(),
            field,
            particle_spacing: 0.01,
            transform: Transform::default(),
            velocity: [0.0; 3],
            kinematic: false,
        };
        build_state(&[obj], &SimConfig::default()).unwrap()
    }

    fn timed(property: Property, value: Value, t: f64, ramp: f64) -> Intervention {
        Intervention {
            target: Selector::object(0),
            property,
            value,
            trigger: Trigger::AtTime(t),
            ramp_duration: ramp,
            one_shot: true,
        }
    }

    #[test]
    fn ramp_endpoints_and_midpoints() {
        assert_eq!(ramp_value(2.0, 5.0, 0.0, 1.0, RampScale::Linear).unwrap(), 2.0);
        assert_eq!(ramp_value(2.0, 5.0, 3.0, 1.0, RampScale::Linear).unwrap(), 5.0);
        assert_eq!(ramp_value(2.0, 5.0, 0.0, 0.0, RampScale::Linear).unwrap(), 5.0);
        let mid = ramp_value(1e6, 1e2, 0.5, 1.0, RampScale::Log).unwrap();
        assert!((mid - 1e4).abs() <= 1e-9 * 1e4);
        let nu = ramp_value(0.3, 0.45, 1.0 / 3.0, 1.0, RampScale::Linear).unwrap();
        assert!((nu - 0.35).abs() < 1e-15);
        assert!(ramp_value(0.0, 1.0, 0.5, 1.0, RampScale::Log).is_err());
        assert!(ramp_value(1.0, 2.0, 0.5, -1.0, RampScale::Linear).is_err());
    }

    #[test]
    fn schedule_validation() {
        let s = state();
        let scene = SceneInfo::from_state(&s);
        let ok = InstructionSchedule::new(
            alloc::vec![timed(Property::YoungModulus, Value::Scalar(1e3), 1.0, 0.5)],
            ClampTable::default(),
            2.0,
            &scene,
        );
        assert!(ok.is_ok());
        let clamp = InstructionSchedule::new(
            alloc::vec![timed(Property::YoungModulus, Value::Scalar(1e15), 1.0, 0.0)],
            ClampTable::default(),
            2.0,
            &scene,
        );
        assert!(matches!(clamp, Err(Error::ClampViolation { max, .. }) if max == 1e12));
        let mut bad = timed(Property::Density, Value::Scalar(10.0), 0.0, 0.0);
        bad.target = Selector::object(9);
        assert!(matches!(
            InstructionSchedule::new(alloc::vec![bad], ClampTable::default(), 2.0, &scene),
            Err(Error::UnknownTarget(_))
        ));
        let ramped_impulse = timed(Property::VelocityImpulse, Value::Vector([0.0; 3]), 0.0, 0.2);
        assert!(InstructionSchedule::new(alloc::vec![ramped_impulse], ClampTable::default(), 2.0, &scene).is_err());
    }

    #[test]
    fn nothing_active_leaves_state_alone() {
        let mut s = state();
        let before = s.clone();
        let sched = InstructionSchedule::new(
            alloc::vec![timed(Property::Density, Value::Scalar(10.0), 5.0, 0.0)],
            ClampTable::default(),
            2.0,
            &SceneInfo::from_state(&s),
        )
        .unwrap();
        let mut tr = InterventionTracker::new(&sched);
        let ev = object_aggregates(&s);
        assert!(apply_interventions(&mut s, &sched, &mut tr, 1.0, &ev).unwrap().is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn impulse_is_applied_once() {
        let mut s = state();
        let sched = InstructionSchedule::new(
            alloc::vec![timed(Property::VelocityImpulse, Value::Vector([0.0, 2.0, 0.0]), 0.0, 0.0)],
            ClampTable::default(),
            2.0,
            &SceneInfo::from_state(&s),
        )
        .unwrap();
        let mut tr = InterventionTracker::new(&sched);
        let ev = object_aggregates(&s);
        apply_interventions(&mut s, &sched, &mut tr, 0.0, &ev).unwrap();
        let once = s.clone();
        apply_interventions(&mut s, &sched, &mut tr, 0.0, &ev).unwrap();
        assert_eq!(s, once);
        assert!(s.velocity.iter().all(|v| v.y == 2.0));
    }

    #[test]
    fn interior_density_elimination_floors() {
        let mut s = state();
        let mut iv = timed(Property::Density, Value::Scalar(0.0), 0.0, 0.0);
        iv.target.interior_only = true;
        let sched = InstructionSchedule::new(
            alloc::vec![iv],
            ClampTable::default(),
            f64::INFINITY,
            &SceneInfo::from_state(&s),
        )
        .unwrap();
        let mut tr = InterventionTracker::new(&sched);
        let surface_mass: Vec<f64> = (0..8).filter(|p| p % 2 == 0).map(|p| s.mass[p]).collect();
        let ev = object_aggregates(&s);
        apply_interventions(&mut s, &sched, &mut tr, 0.0, &ev).unwrap();
        apply_interventions(&mut s, &sched, &mut tr, 0.1, &ev).unwrap();
        for p in 0..8 {
            if p % 2 == 1 {
                assert_eq!(s.density[p], 1.0);
                assert_eq!(s.mass[p], s.volume[p]);
            } else {
                assert_eq!(s.mass[p], surface_mass[p / 2]);
            }
        }
    }

    #[test]
    fn log_rate_cap_limits_steps() {
        let mut s = state();
        let sched = InstructionSchedule::new(
            alloc::vec![timed(Property::YoungModulus, Value::Scalar(1e2), 0.0, 0.0)],
            ClampTable::default(),
            2.0,
            &SceneInfo::from_state(&s),
        )
        .unwrap();
        let mut tr = InterventionTracker::new(&sched);
        let mut log = Vec::new();
        let mut t = 0.0;
        for _ in 0..40 {
            let ev = object_aggregates(&s);
            log.extend(apply_interventions(&mut s, &sched, &mut tr, t, &ev).unwrap());
            t += 0.05;
        }
        assert!(audit_rate_cap(&log).is_none());
        // Three decades at two decades per second take 1.5 s.
        assert!((s.young[0] - 1e2).abs() < 1e-9);
        assert!(log.iter().any(|r| r.kind == EditKind::Completed));
        let first_ramp = log.iter().find(|r| r.kind == EditKind::Ramp).unwrap();
        assert!((first_ramp.max_log_change - 0.1).abs() < 1e-12);
    }

    #[test]
    fn event_trigger_fires_once() {
        let mut s = state();
        let iv = Intervention {
            target: Selector::object(0),
            property: Property::VelocityImpulse,
            value: Value::Vector([1.0, 0.0, 0.0]),
            trigger: Trigger::OnHeightBelow(1.0),
            ramp_duration: 0.0,
            one_shot: true,
        };
        let sched =
            InstructionSchedule::new(alloc::vec![iv], ClampTable::default(), 2.0, &SceneInfo::from_state(&s))
                .unwrap();
        let mut tr = InterventionTracker::new(&sched);
        for k in 0..5 {
            let ev = object_aggregates(&s);
            apply_interventions(&mut s, &sched, &mut tr, k as f64 * 0.01, &ev).unwrap();
        }
        assert_eq!(tr.fired(0), 1);
        assert_eq!(s.velocity[0].x, 1.0);
    }
}
