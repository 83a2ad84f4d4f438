//! TOML scene files.
//!
//! A scene lists objects (a filled field file or a procedural solid), the
//! simulation settings, an optional camera and an optional schedule:
//!
//! ```toml
//! schedule = "on ground_contact set object 0 material_model liquid"
//!
//! [sim]
//! frames = 24
//! fps = 24.0
//!
//! [camera]
//! eye = [0.5, 0.4, -1.2]
//! target = [0.5, 0.2, 0.5]
//! focal = 120.0
//! width = 128
//! height = 96
//!
//! [[object]]
//! id = 0
//! translation = [0.5, 0.3, 0.5]
//! shape = { kind = "box", size = [0.08, 0.08, 0.08], spacing = 0.01 }
//! material = { model = "elastic", young_modulus = 1e5, poisson_ratio = 0.3, density = 1000.0 }
//! ```
//!
//! Relative paths resolve against the scene file's directory.

use std::path::{Path, PathBuf};

use editsim_core::material::{MaterialField, MaterialModel};
use editsim_core::mpm::{build_state, SceneObject, SimConfig, SimulationState, Transform};
use editsim_core::raster::{CameraSpec, ColorMode};
use editsim_core::schedule::{compile_schedule, InstructionSchedule, SceneInfo};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::field_io::{read_field, read_text, sha256_hex, to_json};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default)]
    sim: Option<SimConfig>,
    #[serde(default)]
    schedule: Option<String>,
    #[serde(default)]
    schedule_file: Option<PathBuf>,
    #[serde(default)]
    camera: Option<CameraFile>,
    #[serde(rename = "object", default)]
    objects: Vec<ObjectFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    id: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    field: Option<PathBuf>,
    /// Lattice spacing the field was filled at; required with `field`.
    #[serde(default)]
    particle_spacing: Option<f64>,
    #[serde(default)]
    shape: Option<Shape>,
    #[serde(default)]
    material: Option<MaterialSpec>,
    /// Part label given to every particle of a procedural solid.
    #[serde(default)]
    part: Option<u32>,
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default)]
    rotation: Option<[[f64; 3]; 3]>,
    #[serde(default = "one")]
    scale: f64,
    #[serde(default)]
    velocity: [f64; 3],
    #[serde(default)]
    kinematic: bool,
}

fn one() -> f64 {
    1.0
}

/// Procedural solids, centered on the origin before the transform.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box {
        size: [f64; 3],
        spacing: f64,
        /// Particles deeper than this are flagged interior; defaults to one
        /// spacing.
        #[serde(default)]
        shell: Option<f64>,
    },
    Sphere {
        radius: f64,
        spacing: f64,
        #[serde(default)]
        shell: Option<f64>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSpec {
    model: String,
    young_modulus: f64,
    poisson_ratio: f64,
    density: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    eye: [f64; 3],
    target: [f64; 3],
    #[serde(default = "up")]
    up: [f64; 3],
    focal: f64,
    width: usize,
    height: usize,
    #[serde(default)]
    splat_radius: Option<f64>,
    #[serde(default)]
    color: ColorMode,
    #[serde(default)]
    depth_range: Option<(f64, f64)>,
}

fn up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl Shape {
    fn spacing(&self) -> f64 {
        match *self {
            Shape::Box { spacing, .. } | Shape::Sphere { spacing, .. } => spacing,
        }
    }

    /// Cell-centered lattice points and their interior flags.
    pub fn sample(&self) -> AppResult<(Vec<[f64; 3]>, Vec<bool>)> {
        let h = self.spacing();
        if !(h > 0.0 && h.is_finite()) {
            return Err(AppError::Usage(format!("shape spacing must be positive, got {h}")));
        }
        let (half, shell) = match *self {
            Shape::Box { size, shell, .. } => (size.map(|s| s / 2.0), shell),
            Shape::Sphere { radius, shell, .. } => ([radius; 3], shell),
        };
        if half.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(AppError::Usage("shape extents must be positive".into()));
        }
        let shell = shell.unwrap_or(h);
        let counts = half.map(|s| ((2.0 * s / h).round() as usize).max(1));
        let mut points = Vec::new();
        let mut interior = Vec::new();
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    let idx = [i, j, k];
                    let p: [f64; 3] = std::array::from_fn(|a| (idx[a] as f64 + 0.5) * h - counts[a] as f64 * h / 2.0);
                    let depth = match *self {
                        Shape::Box { .. } => (0..3)
                            .map(|a| counts[a] as f64 * h / 2.0 - p[a].abs())
                            .fold(f64::INFINITY, f64::min),
                        Shape::Sphere { radius, .. } => radius - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt(),
                    };
                    if depth > 0.0 {
                        points.push(p);
                        interior.push(depth > shell);
                    }
                }
            }
        }
        Ok((points, interior))
    }
}

/// A loaded scene, ready to turn into a simulation state.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub sim: SimConfig,
    pub objects: Vec<SceneObject>,
    pub schedule_text: String,
    pub camera: Option<CameraSpec>,
}

impl Scene {
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    /// Parses scene text; `origin` only labels error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> AppResult<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| AppError::format(origin, e.message().trim()).with_span(text, e.span()))?;
        if file.objects.is_empty() {
            return Err(AppError::Core(editsim_core::Error::EmptyScene));
        }
        let objects = file
            .objects
            .iter()
            .map(|o| build_object(o, base, origin))
            .collect::<AppResult<Vec<_>>>()?;
        let schedule_text = match (&file.schedule, &file.schedule_file) {
            (Some(_), Some(_)) => {
                return Err(AppError::format(origin, "give either `schedule` or `schedule_file`, not both"));
            }
            (Some(s), None) => s.clone(),
            (None, Some(p)) => read_text(&base.join(p))?,
            (None, None) => String::new(),
        };
        let camera = file.camera.map(camera_spec).transpose()?;
        let sim = file.sim.unwrap_or_default();
        Ok(Self {
            sim,
            objects,
            schedule_text,
            camera,
        })
    }

    /// Particles and a compiled schedule.
    pub fn build(&self) -> AppResult<(SimulationState, InstructionSchedule)> {
        self.sim.validate()?;
        let state = build_state(&self.objects, &self.sim)?;
        let schedule = compile_schedule(&self.schedule_text, &SceneInfo::from_state(&state))?;
        Ok((state, schedule))
    }

    /// Digest of everything that defines the scene content.
    pub fn scene_hash(&self) -> String {
        sha256_hex(&to_json(&(&self.objects, &self.schedule_text)))
    }

    /// Digest of the simulation and camera settings.
    pub fn config_hash(&self) -> String {
        sha256_hex(&to_json(&(&self.sim, &self.camera)))
    }
}

trait WithSpan {
    fn with_span(self, text: &str, span: Option<std::ops::Range<usize>>) -> Self;
}

impl WithSpan for AppError {
    /// Prefixes a format error with the 1-based line and column of `span`.
    fn with_span(self, text: &str, span: Option<std::ops::Range<usize>>) -> Self {
        match (self, span) {
            (AppError::Format { path, message }, Some(span)) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                AppError::Format {
                    path,
                    message: format!("line {line}, column {column}: {message}"),
                }
            }
            (other, _) => other,
        }
    }
}

fn build_object(o: &ObjectFile, base: &Path, origin: &Path) -> AppResult<SceneObject> {
    let where_ = |m: String| AppError::format(origin, format!("object {}: {m}", o.id));
    let (field, spacing) = match (&o.field, &o.shape) {
        (Some(path), None) => {
            if o.material.is_some() || o.part.is_some() {
                return Err(where_("`material` and `part` only apply to procedural shapes".into()));
            }
            let spacing = o
                .particle_spacing
                .ok_or_else(|| where_("`particle_spacing` is required with `field`".into()))?;
            (read_field(&base.join(path))?, spacing)
        }
        (None, Some(shape)) => {
            let m = o
                .material
                .as_ref()
                .ok_or_else(|| where_("procedural shapes need a `material`".into()))?;
            let model = MaterialModel::from_name(&m.model)
                .ok_or_else(|| where_(format!("unknown material model `{}`", m.model)))?;
            let (points, interior) = shape.sample()?;
            let mut field = MaterialField::uniform(points, model, m.young_modulus, m.poisson_ratio, m.density);
            field.interior = interior;
            field.part_label = o.part.map(|p| vec![p; field.len()]);
            field.ensure_valid()?;
            (field, shape.spacing())
        }
        _ => return Err(where_("give exactly one of `field` and `shape`".into())),
    };
    let mut transform = Transform::translation(o.translation);
    transform.scale = o.scale;
    if let Some(r) = o.rotation {
        transform.rotation = r;
    }
    Ok(SceneObject {
        id: o.id,
        name: o.name.clone().unwrap_or_else(|| format!("object{}", o.id)),
        field,
        particle_spacing: spacing,
        transform,
        velocity: o.velocity,
        kinematic: o.kinematic,
    })
}

fn camera_spec(c: CameraFile) -> AppResult<CameraSpec> {
    let mut cam = CameraSpec::look_at(c.eye, c.target, c.up, c.focal, c.width, c.height)?;
    if let Some(r) = c.splat_radius {
        cam.splat_radius = r;
    }
    cam.color = c.color;
    cam.depth_range = c.depth_range;
    cam.validate()?;
    Ok(cam)
}

/// Directory of the scenes shipped with the crate.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes")
}

/// Names of the bundled scenes, each `<name>.toml` in [`bundled_dir`].
pub const BUNDLED: [&str; 4] = ["drop_cube", "liquefy_on_contact", "hollow_deflate", "zero_g_bounce"];

pub fn bundled(name: &str) -> AppResult<Scene> {
    Scene::load(&bundled_dir().join(format!("{name}.toml")))
}
