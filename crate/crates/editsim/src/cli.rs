//! Command-line front end.
//!
//! Settings come from three layers, later ones winning: a TOML file named by
//! `--config`, `EDITSIM_*` environment variables, then flags. The resolved
//! [`RunConfig`] is what [`run`] executes, so tests can skip the parser.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use editsim_core::fill::{fill_interior, inherit_properties, FillConfig, InsideTest};
use editsim_core::mpm::SimConfig;
use editsim_core::supervision::LossWeights;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analyze::{analyze, Fixture, TripletSource, DEFAULT_STEP};
use crate::error::{AppError, AppResult};
use crate::export::{export_run, verify, RunMeta, DEFAULT_QUEUE};
use crate::field_io::{read_field, read_text, write_field, write_json};
use crate::scene::Scene;

#[derive(Debug, Parser)]
#[command(name = "editsim", version, about = "Fill, simulate, analyze and verify editable material-point scenes")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, env = "EDITSIM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EDITSIM_THREADS")]
    pub threads: Option<usize>,
    /// Run seed, recorded in the configuration hash.
    #[arg(long, global = true, env = "EDITSIM_SEED")]
    pub seed: Option<u64>,
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Fill a closed surface field with interior particles.
    Fill {
        /// Surface field (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Filled field (JSON).
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        fill: FillOverrides,
    },
    /// Run a scene and write a trajectory directory.
    Simulate {
        /// Scene file (TOML).
        #[arg(long)]
        scene: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        sim: SimOverrides,
        /// Skip conditioning images even if the scene has a camera.
        #[arg(long)]
        no_images: bool,
        /// Frames buffered between simulation and writer.
        #[arg(long, env = "EDITSIM_QUEUE")]
        queue: Option<usize>,
    },
    /// Report losses and gradient checks for a labeled fixture.
    Analyze {
        /// Labeled fixture (JSON).
        #[arg(long)]
        fixture: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        loss: LossOverrides,
        /// Central-difference step.
        #[arg(long, env = "EDITSIM_FD_STEP")]
        fd_step: Option<f64>,
    },
    /// Re-hash a trajectory directory against its manifest.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FillOverrides {
    /// Lattice spacing of interior particles (m).
    #[arg(long, env = "EDITSIM_SPACING")]
    pub spacing: Option<f64>,
    /// voxel_flood or winding_number.
    #[arg(long, env = "EDITSIM_INSIDE_TEST")]
    pub inside_test: Option<String>,
    /// Voxels per lattice spacing.
    #[arg(long, env = "EDITSIM_SUBDIVISION")]
    pub subdivision: Option<u32>,
    /// Minimum distance to the surface, as a fraction of the spacing.
    #[arg(long, env = "EDITSIM_CLEARANCE")]
    pub clearance: Option<f64>,
    /// Surface neighbours blended per interior point.
    #[arg(long, env = "EDITSIM_KNN_K")]
    pub knn_k: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    #[arg(long, env = "EDITSIM_FRAMES")]
    pub frames: Option<usize>,
    #[arg(long, env = "EDITSIM_FPS")]
    pub fps: Option<f64>,
    #[arg(long, env = "EDITSIM_GRID_SPACING")]
    pub grid_spacing: Option<f64>,
    #[arg(long, env = "EDITSIM_CFL")]
    pub cfl: Option<f64>,
    #[arg(long, env = "EDITSIM_MAX_DT")]
    pub max_dt: Option<f64>,
    #[arg(long, env = "EDITSIM_DAMPING")]
    pub damping: Option<f64>,
    #[arg(long, env = "EDITSIM_GROUND_HEIGHT")]
    pub ground_height: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LossOverrides {
    #[arg(long, env = "EDITSIM_LAMBDA_REG")]
    pub lambda_reg: Option<f64>,
    #[arg(long, env = "EDITSIM_LAMBDA_CLS")]
    pub lambda_cls: Option<f64>,
    #[arg(long, env = "EDITSIM_LAMBDA_SMOOTH")]
    pub lambda_smooth: Option<f64>,
    #[arg(long, env = "EDITSIM_LAMBDA_CON")]
    pub lambda_con: Option<f64>,
    #[arg(long, env = "EDITSIM_LAMBDA_ASSIGN")]
    pub lambda_assign: Option<f64>,
    #[arg(long, env = "EDITSIM_MARGIN")]
    pub margin: Option<f64>,
    #[arg(long, env = "EDITSIM_HUBER_DELTA")]
    pub huber_delta: Option<f64>,
    #[arg(long, env = "EDITSIM_SMOOTH_K")]
    pub smooth_k: Option<usize>,
}

/// Fills every unset field of `self` from `lower`.
trait Layer {
    fn over(self, lower: Self) -> Self;
}

macro_rules! layer {
    ($t:ty { $($f:ident),* }) => {
        impl Layer for $t {
            fn over(self, lower: Self) -> Self {
                Self { $($f: self.$f.or(lower.$f)),* }
            }
        }
    };
}

layer!(FillOverrides { spacing, inside_test, subdivision, clearance, knn_k });
layer!(SimOverrides { frames, fps, grid_spacing, cfl, max_dt, damping, ground_height });
layer!(LossOverrides { lambda_reg, lambda_cls, lambda_smooth, lambda_con, lambda_assign, margin, huber_delta, smooth_k });

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub fill: FillOverrides,
    #[serde(default)]
    pub sim: SimOverrides,
    #[serde(default)]
    pub loss: LossOverrides,
}

impl ConfigFile {
    pub fn load(path: &Path) -> AppResult<Self> {
        toml::from_str(&read_text(path)?).map_err(|e| AppError::format(path, e.message().trim()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Fill {
        input: PathBuf,
        output: PathBuf,
        fill: FillOverrides,
    },
    Simulate {
        scene: PathBuf,
        output: PathBuf,
        sim: SimOverrides,
        images: bool,
        queue: usize,
    },
    Analyze {
        fixture: PathBuf,
        output: Option<PathBuf>,
        loss: LossOverrides,
        fd_step: f64,
    },
    Verify {
        dir: PathBuf,
    },
}

/// Fully resolved invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub verbosity: u8,
}

impl RunConfig {
    /// Merges parsed flags (which already include the environment) over the
    /// config file they name.
    pub fn resolve(cli: Cli) -> AppResult<Self> {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let command = match cli.command {
            CliCommand::Fill { input, output, fill } => Command::Fill {
                input,
                output,
                fill: fill.over(file.fill),
            },
            CliCommand::Simulate {
                scene,
                output,
                sim,
                no_images,
                queue,
            } => Command::Simulate {
                scene,
                output,
                sim: sim.over(file.sim),
                images: !no_images,
                queue: queue.unwrap_or(DEFAULT_QUEUE),
            },
            CliCommand::Analyze {
                fixture,
                output,
                loss,
                fd_step,
            } => Command::Analyze {
                fixture,
                output,
                loss: loss.over(file.loss),
                fd_step: fd_step.unwrap_or(DEFAULT_STEP),
            },
            CliCommand::Verify { dir } => Command::Verify { dir },
        };
        let cfg = Self {
            command,
            seed: cli.seed.or(file.seed),
            threads: cli.threads.or(file.threads),
            verbosity: cli.verbose,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> AppResult<()> {
        let paths: Vec<&Path> = match &self.command {
            Command::Fill { input, output, .. } => vec![input, output],
            Command::Simulate { scene, output, .. } => vec![scene, output],
            Command::Analyze { fixture, output, .. } => {
                let mut v = vec![fixture.as_path()];
                v.extend(output.as_deref());
                v
            }
            Command::Verify { dir } => vec![dir],
        };
        if paths.iter().any(|p| p.as_os_str().is_empty()) {
            return Err(AppError::Usage("paths must not be empty".into()));
        }
        if self.threads == Some(0) {
            return Err(AppError::Usage("--threads must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn fill_config(o: &FillOverrides) -> AppResult<FillConfig> {
    let mut cfg = FillConfig::default();
    if let Some(s) = o.spacing {
        cfg = FillConfig::with_spacing(s);
    }
    if let Some(name) = &o.inside_test {
        cfg.inside_test = InsideTest::from_name(name)
            .ok_or_else(|| AppError::Usage(format!("unknown inside test `{name}`")))?;
    }
    if let Some(v) = o.subdivision {
        cfg.subdivision = v;
    }
    if let Some(v) = o.clearance {
        cfg.clearance = v;
    }
    if let Some(v) = o.knn_k {
        cfg.knn_k = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_sim(o: &SimOverrides, base: SimConfig) -> SimConfig {
    SimConfig {
        frames: o.frames.unwrap_or(base.frames),
        fps: o.fps.unwrap_or(base.fps),
        grid_spacing: o.grid_spacing.unwrap_or(base.grid_spacing),
        cfl: o.cfl.unwrap_or(base.cfl),
        max_dt: o.max_dt.unwrap_or(base.max_dt),
        damping: o.damping.unwrap_or(base.damping),
        ground_height: o.ground_height.unwrap_or(base.ground_height),
        ..base
    }
}

pub fn loss_weights(o: &LossOverrides) -> AppResult<LossWeights> {
    let d = LossWeights::STANDARD;
    let w = LossWeights {
        lambda_reg: o.lambda_reg.unwrap_or(d.lambda_reg),
        lambda_cls: o.lambda_cls.unwrap_or(d.lambda_cls),
        lambda_smooth: o.lambda_smooth.unwrap_or(d.lambda_smooth),
        lambda_con: o.lambda_con.unwrap_or(d.lambda_con),
        lambda_assign: o.lambda_assign.unwrap_or(d.lambda_assign),
        margin: o.margin.unwrap_or(d.margin),
        huber_delta: o.huber_delta.unwrap_or(d.huber_delta),
        smooth_k: o.smooth_k.unwrap_or(d.smooth_k),
        ..d
    };
    w.validate()?;
    Ok(w)
}

fn say(cfg: &RunConfig, msg: impl FnOnce() -> String) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg());
    }
}

/// Executes one subcommand and returns its summary record.
pub fn run(cfg: &RunConfig) -> AppResult<Value> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AppError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &RunConfig) -> AppResult<Value> {
    match &cfg.command {
        Command::Fill { input, output, fill } => {
            let fc = fill_config(fill)?;
            let surface = read_field(input)?;
            say(cfg, || format!("filling {} surface points at spacing {}", surface.len(), fc.spacing));
            let interior = fill_interior(&surface, &fc)?;
            let filled = inherit_properties(&interior, &surface, &fc)?;
            write_field(output, &filled)?;
            Ok(json!({
                "command": "fill",
                "surface_points": surface.len(),
                "interior_points": interior.len(),
                "output": output,
            }))
        }
        Command::Simulate {
            scene,
            output,
            sim,
            images,
            queue,
        } => {
            let mut sc = Scene::load(scene)?;
            sc.sim = apply_sim(sim, sc.sim);
            if let Some(seed) = cfg.seed {
                sc.sim.seed = seed;
            }
            if !images {
                sc.camera = None;
            }
            let (mut state, schedule) = sc.build()?;
            say(cfg, || {
                format!("simulating {} particles for {} frames", state.len(), sc.sim.frames)
            });
            let meta = RunMeta {
                scene_hash: sc.scene_hash(),
                config_hash: sc.config_hash(),
            };
            let m = export_run(output, &mut state, &schedule, &sc.sim, sc.camera.as_ref(), &meta, *queue)?;
            Ok(json!({
                "command": "simulate",
                "output": output,
                "frames": m.frame_count,
                "particles": m.particles,
                "substeps": m.substeps,
                "edits": m.edit_count,
                "manifest_sha256": m.digest(),
                "scene_hash": m.scene_hash,
                "config_hash": m.config_hash,
            }))
        }
        Command::Analyze {
            fixture,
            output,
            loss,
            fd_step,
        } => {
            let w = loss_weights(loss)?;
            let mut fx = Fixture::load(fixture)?;
            if let (Some(seed), TripletSource::Sampled { seed: s, .. }) = (cfg.seed, &mut fx.triplets) {
                *s = seed;
            }
            let report = analyze(&fx, &w, *fd_step)?;
            if let Some(path) = output {
                write_json(path, &report)?;
            }
            Ok(json!({ "command": "analyze", "report": report }))
        }
        Command::Verify { dir } => {
            let report = verify(dir)?;
            if !report.ok() {
                return Err(AppError::Integrity(report.mismatches.join("; ")));
            }
            Ok(json!({ "command": "verify", "files_checked": report.files_checked, "ok": true }))
        }
    }
}

/// Machine-readable error record written to stderr.
pub fn error_record(e: &AppError) -> Value {
    json!({ "error": { "code": e.code(), "message": e.to_string(), "exit_code": e.exit_code() } })
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let err = AppError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", error_record(&err));
            return err.exit_code();
        }
    };
    match RunConfig::resolve(cli).and_then(|cfg| run(&cfg)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("editsim").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "seed = 5\n[fill]\nspacing = 0.2\nknn_k = 3\n").unwrap();
        let cli = parse(&["--config", cfg_path.to_str().unwrap(), "fill", "--input", "a", "--output", "b", "--spacing", "0.1"]);
        let rc = RunConfig::resolve(cli).unwrap();
        assert_eq!(rc.seed, Some(5));
        let Command::Fill { fill, .. } = rc.command else { panic!() };
        assert_eq!(fill.spacing, Some(0.1));
        assert_eq!(fill.knn_k, Some(3));
    }

    #[test]
    fn unknown_config_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "[fill]\nspaceing = 0.2\n").unwrap();
        let cli = parse(&["--config", cfg_path.to_str().unwrap(), "verify", "--dir", "x"]);
        assert_eq!(RunConfig::resolve(cli).unwrap_err().code(), "E_FORMAT");
    }

    #[test]
    fn zero_spacing_is_a_config_error() {
        let err = fill_config(&FillOverrides {
            spacing: Some(0.0),
            ..FillOverrides::default()
        })
        .unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_flag_fails_fast() {
        assert!(Cli::try_parse_from(["editsim", "verify", "--dir", "x", "--bogus"]).is_err());
        assert_eq!(main_with_args(["editsim", "simulate", "--wat"]), 2);
    }

    #[test]
    fn standard_weights_by_default() {
        assert_eq!(loss_weights(&LossOverrides::default()).unwrap(), LossWeights::STANDARD);
    }
}
