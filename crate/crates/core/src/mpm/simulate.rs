use alloc::format;
use alloc::vec::Vec;

use super::{object_aggregates, stable_dt, step, SimConfig, SimulationState};
use crate::schedule::{apply_interventions, EditRecord, InstructionSchedule, InterventionTracker};
use crate::trajectory::{Frame, Trajectory};
use crate::{Error, Result};

/// Receives frames as soon as they are recorded.
pub trait FrameSink {
    fn accept(&mut self, frame: Frame) -> Result<()>;
}

impl<F: FnMut(Frame) -> Result<()>> FrameSink for F {
    fn accept(&mut self, frame: Frame) -> Result<()> {
        self(frame)
    }
}

/// Everything a run produces apart from the frames themselves.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunSummary {
    pub edit_log: Vec<EditRecord>,
    pub substeps: u64,
    pub frames: usize,
}

/// Advances the state through `cfg.frames` frames, streaming each to `sink`.
///
/// Frame 0 is the state as given. Interventions are applied before every
/// substep, the substep length is `min(stable_dt, max_dt, time to next
/// frame)` and the clock lands exactly on each frame time.
pub fn simulate_with(
    state: &mut SimulationState,
    schedule: &InstructionSchedule,
    cfg: &SimConfig,
    sink: &mut dyn FrameSink,
) -> Result<RunSummary> {
    cfg.validate()?;
    let mut tracker = InterventionTracker::new(schedule);
    let mut summary = RunSummary::default();
    let start = state.time;
    sink.accept(Frame::capture(0, state, &object_aggregates(state)))?;
    summary.frames = 1;
    for k in 1..cfg.frames {
        let target = start + cfg.frame_time(k);
        let mut n = 0u64;
        while state.time < target {
            let at = |e: Error| e.context(format!("frame {k}, substep {n}"));
            let events = object_aggregates(state);
            let edits = apply_interventions(state, schedule, &mut tracker, state.time, &events).map_err(at)?;
            if !edits.is_empty() {
                state.check_live_parameters().map_err(at)?;
                summary.edit_log.extend(edits);
            }
            let remaining = target - state.time;
            let dt = stable_dt(state, cfg).map_err(at)?.min(cfg.max_dt);
            let last = dt >= remaining;
            step(state, if last { remaining } else { dt }).map_err(at)?;
            if last {
                state.time = target;
            }
            n += 1;
            summary.substeps += 1;
        }
        sink.accept(Frame::capture(k, state, &object_aggregates(state)))?;
        summary.frames += 1;
    }
    Ok(summary)
}

/// Runs a schedule and keeps every frame in memory.
pub fn simulate(
    state: &mut SimulationState,
    schedule: &InstructionSchedule,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let particle_object = state.object.clone();
    let mut frames = Vec::with_capacity(cfg.frames);
    let summary = simulate_with(state, schedule, cfg, &mut |f: Frame| {
        frames.push(f);
        Ok(())
    })?;
    Ok(Trajectory {
        fps: cfg.fps,
        frames,
        particle_object,
        edit_log: summary.edit_log,
        substeps: summary.substeps,
        ..Trajectory::default()
    })
}
