//! Point-splat rasterization of particle frames.
//!
//! Points are moved into the camera frame with `x_c = R (x − c)` where `R`
//! is the world-to-camera rotation and `c` the camera center, then projected
//! with a pinhole: `u = fx·x/z + cx`, `v = fy·y/z + cy`. Pixel `(i, j)` has its
//! center at integer coordinates and is covered by a point when
//! `(i − u)² + (j − v)² ≤ r²`. Each pixel keeps the covering point with the
//! smallest depth, ties going to the lower point index, so the result does not
//! depend on the order points are visited.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ceil, floor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ColorMode {
    /// Gray levels from near (255) to far (1); background stays 0.
    #[default]
    Depth,
    /// A fixed palette color per object id.
    ObjectId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world coordinates (m).
    pub center: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Splat radius in pixels.
    pub splat_radius: f64,
    pub color: ColorMode,
    /// Fixed depth range for flicker-free sequences; per-frame when absent.
    pub depth_range: Option<(f64, f64)>,
}

impl CameraSpec {
    pub const MIN_SIZE: usize = 16;

    /// A camera at `eye` looking at `target`, with image `y` pointing along
    /// `-up` so images come out upright.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], focal: f64, width: usize, height: usize) -> Result<Self> {
        let forward = normalize(sub(target, eye))?;
        let right = normalize(cross(forward, up))?;
        let down = cross(forward, right);
        Ok(Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            rotation: [right, down, forward],
            center: eye,
            width,
            height,
            splat_radius: 1.5,
            color: ColorMode::Depth,
            depth_range: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if self.width < Self::MIN_SIZE || self.height < Self::MIN_SIZE {
            return Err(Error::InvalidConfig(format!(
                "image must be at least {0}x{0}, got {1}x{2}",
                Self::MIN_SIZE,
                self.width,
                self.height
            )));
        }
        if !(self.splat_radius >= 0.0 && self.splat_radius.is_finite()) {
            return Err(Error::InvalidConfig("splat radius must be non-negative".into()));
        }
        let finite = [self.cx, self.cy]
            .iter()
            .chain(self.center.iter())
            .chain(self.rotation.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("camera pose must be finite".into()));
        }
        if let Some((lo, hi)) = self.depth_range {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!("depth range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Pixel coordinates and depth of a world point, `None` behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64, f64)> {
        let d = sub(p, self.center);
        let r = &self.rotation;
        let x = r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2];
        let y = r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2];
        let z = r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2];
        if !(z > 0.0) {
            return None;
        }
        Some((self.fx * x / z + self.cx, self.fy * y / z + self.cy, z))
    }

    fn covers(&self, i: usize, j: usize, u: f64, v: f64) -> bool {
        let (di, dj) = (i as f64 - u, j as f64 - v);
        di * di + dj * dj <= self.splat_radius * self.splat_radius
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> Result<[f64; 3]> {
    let n = crate::math::norm3(a);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidConfig("camera axes are degenerate".into()));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

/// A rasterized frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub rgb: Vec<[u8; 3]>,
    /// Index of the point that won each pixel.
    pub owner: Vec<Option<u32>>,
    /// No point landed in the viewport.
    pub empty: bool,
}

impl Image {
    pub fn occupied(&self) -> usize {
        self.owner.iter().filter(|o| o.is_some()).count()
    }
}

fn check_inputs(positions: &[[f32; 3]], object_ids: Option<&[u32]>, cam: &CameraSpec) -> Result<()> {
    cam.validate()?;
    if positions.len() > u32::MAX as usize {
        return Err(Error::Shape("too many points to rasterize".into()));
    }
    if let Some(ids) = object_ids {
        if ids.len() != positions.len() {
            return Err(Error::Shape(format!(
                "{} object ids for {} points",
                ids.len(),
                positions.len()
            )));
        }
    } else if cam.color == ColorMode::ObjectId {
        return Err(Error::InvalidConfig("object-id coloring needs object ids".into()));
    }
    Ok(())
}

fn widen(p: [f32; 3]) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Splats every point into a z-buffer.
pub fn rasterize(positions: &[[f32; 3]], object_ids: Option<&[u32]>, cam: &CameraSpec) -> Result<Image> {
    check_inputs(positions, object_ids, cam)?;
    let (w, h) = (cam.width, cam.height);
    let mut owner: Vec<Option<u32>> = vec![None; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let r = cam.splat_radius;
    for (k, &p) in positions.iter().enumerate() {
        let Some((u, v, z)) = cam.project(widen(p)) else {
            continue;
        };
        if !(u.is_finite() && v.is_finite()) {
            continue;
        }
        let i0 = ceil(u - r).max(0.0);
        let i1 = floor(u + r).min(w as f64 - 1.0);
        let j0 = ceil(v - r).max(0.0);
        let j1 = floor(v + r).min(h as f64 - 1.0);
        if i0 > i1 || j0 > j1 {
            continue;
        }
        for j in j0 as usize..=j1 as usize {
            for i in i0 as usize..=i1 as usize {
                if !cam.covers(i, j, u, v) {
                    continue;
                }
                let px = j * w + i;
                // Points arrive in index order, so a strict comparison keeps
                // the lower index on ties.
                if z < depth[px] {
                    depth[px] = z;
                    owner[px] = Some(k as u32);
                }
            }
        }
    }
    Ok(shade(owner, &depth, object_ids, cam))
}

/// Per-pixel search over all points. Slow; used to check [`rasterize`].
pub fn rasterize_brute_force(
    positions: &[[f32; 3]],
    object_ids: Option<&[u32]>,
    cam: &CameraSpec,
) -> Result<Image> {
    check_inputs(positions, object_ids, cam)?;
    let (w, h) = (cam.width, cam.height);
    let projected: Vec<Option<(f64, f64, f64)>> = positions.iter().map(|&p| cam.project(widen(p))).collect();
    let mut owner = vec![None; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut best: Option<(f64, usize)> = None;
            for (k, pr) in projected.iter().enumerate() {
                let Some((u, v, z)) = *pr else { continue };
                if !cam.covers(i, j, u, v) {
                    continue;
                }
                if best.is_none_or(|(bz, bk)| z < bz || (z == bz && k < bk)) {
                    best = Some((z, k));
                }
            }
            if let Some((z, k)) = best {
                depth[j * w + i] = z;
                owner[j * w + i] = Some(k as u32);
            }
        }
    }
    Ok(shade(owner, &depth, object_ids, cam))
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

fn shade(owner: Vec<Option<u32>>, depth: &[f64], object_ids: Option<&[u32]>, cam: &CameraSpec) -> Image {
    let (lo, hi) = cam.depth_range.unwrap_or_else(|| {
        depth
            .iter()
            .filter(|z| z.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)))
    });
    let rgb = owner
        .iter()
        .zip(depth)
        .map(|(o, &z)| match (o, cam.color, object_ids) {
            (None, _, _) => [0; 3],
            (Some(k), ColorMode::ObjectId, Some(ids)) => PALETTE[ids[*k as usize] as usize % PALETTE.len()],
            _ => {
                let t = if hi > lo { ((z - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                let g = (255.0 - 254.0 * t + 0.5) as u8;
                [g; 3]
            }
        })
        .collect();
    let empty = owner.iter().all(Option::is_none);
    Image {
        width: cam.width,
        height: cam.height,
        rgb,
        owner,
        empty,
    }
}
