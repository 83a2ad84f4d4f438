//! Trajectory directories: binary frames, conditioning images, the edit log
//! and a manifest that hashes all of them.
//!
//! Layout:
//!
//! ```text
//! manifest.json
//! edit_log.jsonl
//! frames/frame_00000.bin
//! images/frame_00000.ppm   (when a camera is configured)
//! ```
//!
//! A frame file is a 32-byte little-endian header followed by `N × 3`
//! little-endian `f32` positions:
//!
//! | offset | type  | field                  |
//! |--------|-------|------------------------|
//! | 0      | [u8;4]| magic `ESFR`           |
//! | 4      | u32   | format version (1)     |
//! | 8      | u64   | particle count `N`     |
//! | 16     | u64   | frame index            |
//! | 24     | f64   | simulation time (s)    |

use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread::JoinHandle;

use editsim_core::mpm::{simulate_with, SimConfig, SimulationState};
use editsim_core::raster::{rasterize, CameraSpec, Image};
use editsim_core::schedule::{EditRecord, InstructionSchedule};
use editsim_core::trajectory::{Frame, ObjectFrame, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::field_io::{read_bytes, read_json, sha256_hex, to_json, write_bytes};

pub const FRAME_MAGIC: [u8; 4] = *b"ESFR";
pub const FRAME_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
pub const MANIFEST_FORMAT: &str = "editsim-trajectory";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EDIT_LOG_FILE: &str = "edit_log.jsonl";
/// Frames buffered between the simulator and the writer thread.
pub const DEFAULT_QUEUE: usize = 4;

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.len() * 12);
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.len() as u64).to_le_bytes());
    out.extend_from_slice(&(frame.index as u64).to_le_bytes());
    out.extend_from_slice(&frame.time.to_le_bytes());
    for p in &frame.positions {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFrame {
    pub index: u64,
    pub time: f64,
    pub positions: Vec<[f32; 3]>,
}

pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the frame header", bytes.len()));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FRAME_VERSION {
        return Err(format!("unsupported frame version {version}"));
    }
    let n = u64_at(8) as usize;
    let expected = n.checked_mul(12).and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(format!("header declares {n} particles but the file has {} bytes", bytes.len()));
    }
    let positions = bytes[HEADER_LEN..]
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|a| f32::from_le_bytes(c[4 * a..4 * a + 4].try_into().unwrap())))
        .collect();
    Ok(DecodedFrame {
        index: u64_at(16),
        time: f64::from_le_bytes(bytes[24..32].try_into().unwrap()),
        positions,
    })
}

/// Binary portable pixmap.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for px in &image.rgb {
        out.extend_from_slice(px);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub time: f64,
    pub file: String,
    pub sha256: String,
    #[serde(default)]
    pub image: Option<FileEntry>,
    /// The image had no point in view.
    #[serde(default)]
    pub image_empty: bool,
    pub objects: Vec<ObjectFrame>,
}

/// Contiguous particle range of one object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRange {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub frame_count: usize,
    pub fps: f64,
    pub particles: usize,
    pub substeps: u64,
    pub scene_hash: String,
    pub config_hash: String,
    pub objects: Vec<ObjectRange>,
    pub edit_log: FileEntry,
    pub edit_count: usize,
    pub frames: Vec<FrameEntry>,
}

impl Manifest {
    /// Digest of the manifest as written; equal digests mean identical runs.
    pub fn digest(&self) -> String {
        sha256_hex(&to_json(self))
    }
}

fn object_ranges(particle_object: &[u32]) -> Vec<ObjectRange> {
    let mut out: Vec<ObjectRange> = Vec::new();
    for (p, &id) in particle_object.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.id == id => r.end = p + 1,
            _ => out.push(ObjectRange { id, start: p, end: p + 1 }),
        }
    }
    out
}

fn frame_name(index: usize) -> String {
    format!("frames/frame_{index:05}.bin")
}

fn image_name(index: usize) -> String {
    format!("images/frame_{index:05}.ppm")
}

/// Writes one frame (and its image) and returns its manifest entry.
fn write_frame(dir: &Path, frame: &Frame, camera: Option<&CameraSpec>, ids: &[u32]) -> AppResult<FrameEntry> {
    let bytes = encode_frame(frame);
    let file = frame_name(frame.index);
    write_bytes(&dir.join(&file), &bytes)?;
    let (image, image_empty) = match camera {
        Some(cam) => {
            let img = rasterize(&frame.positions, Some(ids), cam)?;
            let ppm = encode_ppm(&img);
            let name = image_name(frame.index);
            write_bytes(&dir.join(&name), &ppm)?;
            (
                Some(FileEntry {
                    file: name,
                    sha256: sha256_hex(&ppm),
                }),
                img.empty,
            )
        }
        None => (None, false),
    };
    Ok(FrameEntry {
        index: frame.index,
        time: frame.time,
        file,
        sha256: sha256_hex(&bytes),
        image,
        image_empty,
        objects: frame.objects.clone(),
    })
}

fn edit_log_bytes(log: &[EditRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in log {
        out.extend(serde_json::to_vec(r).expect("edit records serialize"));
        out.push(b'\n');
    }
    out
}

/// Identifies the inputs a trajectory came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMeta {
    pub scene_hash: String,
    pub config_hash: String,
}

fn finish(
    dir: &Path,
    fps: f64,
    particle_object: &[u32],
    substeps: u64,
    log: &[EditRecord],
    frames: Vec<FrameEntry>,
    meta: &RunMeta,
) -> AppResult<Manifest> {
    let log_bytes = edit_log_bytes(log);
    write_bytes(&dir.join(EDIT_LOG_FILE), &log_bytes)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: FRAME_VERSION,
        frame_count: frames.len(),
        fps,
        particles: particle_object.len(),
        substeps,
        scene_hash: meta.scene_hash.clone(),
        config_hash: meta.config_hash.clone(),
        objects: object_ranges(particle_object),
        edit_log: FileEntry {
            file: EDIT_LOG_FILE.into(),
            sha256: sha256_hex(&log_bytes),
        },
        edit_count: log.len(),
        frames,
    };
    write_bytes(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(manifest)
}

/// Writes an in-memory trajectory.
pub fn export_trajectory(traj: &Trajectory, dir: &Path, camera: Option<&CameraSpec>) -> AppResult<Manifest> {
    traj.validate()?;
    let frames = traj
        .frames
        .iter()
        .map(|f| write_frame(dir, f, camera, &traj.particle_object))
        .collect::<AppResult<Vec<_>>>()?;
    let meta = RunMeta {
        scene_hash: traj.scene_hash.clone(),
        config_hash: traj.config_hash.clone(),
    };
    finish(dir, traj.fps, &traj.particle_object, traj.substeps, &traj.edit_log, frames, &meta)
}

fn writer(dir: PathBuf, camera: Option<CameraSpec>, ids: Vec<u32>, rx: Receiver<Frame>) -> AppResult<Vec<FrameEntry>> {
    let mut entries = Vec::new();
    for frame in rx {
        entries.push(write_frame(&dir, &frame, camera.as_ref(), &ids)?);
    }
    Ok(entries)
}

/// Simulates and writes frames as they are produced.
///
/// Frames pass through a bounded queue of `queue` entries to a writer thread;
/// when the writer falls behind the simulator blocks, so no frame is dropped.
pub fn export_run(
    dir: &Path,
    state: &mut SimulationState,
    schedule: &InstructionSchedule,
    cfg: &SimConfig,
    camera: Option<&CameraSpec>,
    meta: &RunMeta,
    queue: usize,
) -> AppResult<Manifest> {
    let ids = state.object.clone();
    let (tx, rx): (SyncSender<Frame>, Receiver<Frame>) = sync_channel(queue.max(1));
    let handle: JoinHandle<AppResult<Vec<FrameEntry>>> = {
        let (dir, camera, ids) = (dir.to_path_buf(), camera.copied(), ids.clone());
        std::thread::spawn(move || writer(dir, camera, ids, rx))
    };
    let run = simulate_with(state, schedule, cfg, &mut |f: Frame| {
        tx.send(f)
            .map_err(|_| editsim_core::Error::InvalidConfig("frame writer stopped".into()))
    });
    drop(tx);
    let written = handle
        .join()
        .map_err(|_| AppError::Integrity("frame writer panicked".into()))?;
    // A writer failure explains a failed send, so report it first.
    let frames = written?;
    let summary = run?;
    finish(dir, cfg.fps, &ids, summary.substeps, &summary.edit_log, frames, meta)
}

/// Reads a trajectory back, checking every frame header against the manifest.
pub fn read_trajectory(dir: &Path) -> AppResult<(Manifest, Vec<Vec<[f32; 3]>>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (k, entry) in manifest.frames.iter().enumerate() {
        let path = dir.join(&entry.file);
        let decoded = decode_frame(&read_bytes(&path)?).map_err(|m| AppError::format(&path, m))?;
        if decoded.index != k as u64 || decoded.positions.len() != manifest.particles {
            return Err(AppError::format(
                &path,
                format!(
                    "frame {} with {} particles, expected frame {k} with {}",
                    decoded.index,
                    decoded.positions.len(),
                    manifest.particles
                ),
            ));
        }
        frames.push(decoded.positions);
    }
    Ok((manifest, frames))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub files_checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-hashes every file the manifest lists.
pub fn verify(dir: &Path) -> AppResult<VerifyReport> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut report = VerifyReport::default();
    let mut check = |file: &str, sha: &str| {
        report.files_checked += 1;
        match std::fs::read(dir.join(file)) {
            Ok(bytes) if sha256_hex(&bytes) == sha => {}
            Ok(_) => report.mismatches.push(format!("{file}: hash mismatch")),
            Err(e) => report.mismatches.push(format!("{file}: {e}")),
        }
    };
    check(&manifest.edit_log.file, &manifest.edit_log.sha256);
    for f in &manifest.frames {
        check(&f.file, &f.sha256);
        if let Some(img) = &f.image {
            check(&img.file, &img.sha256);
        }
    }
    if manifest.frames.len() != manifest.frame_count {
        report
            .mismatches
            .push(format!("manifest lists {} frames but declares {}", manifest.frames.len(), manifest.frame_count));
    }
    Ok(report)
}
