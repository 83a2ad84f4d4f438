//! Solid particle sets from surface point clouds.
//!
//! [`fill_interior`] finds lattice points inside a closed surface sample and
//! [`inherit_properties`] copies material parameters from the nearest surface
//! points onto them.
//!
//! The default inside test voxelizes the surface at `spacing / subdivision`,
//! stamping a 3×3×3 block of voxels around every surface point so that small
//! gaps between samples close up. A 6-connected flood fill from the padded
//! bounding-box corner marks the exterior; what the flood cannot reach is
//! inside. Stamped voxels are split between the two sides by whichever set is
//! closer in city-block distance.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::material::{MaterialField, MaterialModel};
use crate::math::{abs, exp10, floor, log10, sqrt};
use crate::spatial::KdTree;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InsideTest {
    /// Voxelize, flood the exterior, keep what the flood missed.
    #[default]
    VoxelFlood,
    /// Generalized winding number of the oriented surface samples.
    WindingNumber,
}

impl InsideTest {
    pub fn name(self) -> &'static str {
        match self {
            InsideTest::VoxelFlood => "voxel_flood",
            InsideTest::WindingNumber => "winding_number",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "voxel_flood" | "voxel" | "flood" => Some(InsideTest::VoxelFlood),
            "winding_number" | "winding" => Some(InsideTest::WindingNumber),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FillConfig {
    /// Interior lattice spacing h (m).
    pub spacing: f64,
    pub inside_test: InsideTest,
    /// Voxels per lattice spacing along each axis.
    pub subdivision: u32,
    /// Minimum distance from an interior point to any surface point, as a
    /// fraction of `spacing`.
    pub clearance: f64,
    /// Surface neighbours consulted per interior point.
    pub knn_k: usize,
}

impl Default for FillConfig {
    fn default() -> Self {
        Self {
            spacing: 0.05,
            inside_test: InsideTest::VoxelFlood,
            subdivision: 2,
            clearance: 0.25,
            knn_k: 1,
        }
    }
}

/// Fraction of fillable voxels the exterior flood may reach before the
/// surface is declared open.
pub const LEAK_FRACTION: f64 = 0.95;

/// Minimum voxel count per axis of the working grid.
pub const MIN_RESOLUTION: usize = 8;

const PADDING: i64 = 3;

impl FillConfig {
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            spacing,
            ..Self::default()
        }
    }

    pub fn voxel_size(&self) -> f64 {
        self.spacing / self.subdivision as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fill spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.subdivision == 0 {
            return Err(Error::InvalidConfig("subdivision must be at least 1".into()));
        }
        if !(self.clearance >= 0.0 && self.clearance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clearance must lie in [0, 1), got {}",
                self.clearance
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::InvalidConfig("knn_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Interior lattice points as integer multiples of the spacing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub indices: Vec<[i64; 3]>,
}

impl Lattice {
    pub fn positions(&self, spacing: f64) -> Vec<[f64; 3]> {
        self.indices
            .iter()
            .map(|k| [k[0] as f64 * spacing, k[1] as f64 * spacing, k[2] as f64 * spacing])
            .collect()
    }
}

/// Rejects point sets that cannot bound a volume: fewer than four points or
/// all points on one plane.
fn check_volumetric(points: &[[f64; 3]]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::DegenerateGeometry(format!(
            "{} surface points cannot enclose a volume",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mut mean = Vector3::zeros();
    for p in points {
        mean += Vector3::from(*p);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    let mut extent: f64 = 0.0;
    for p in points {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
        extent = extent.max(d.norm());
    }
    let eig = SymmetricEigen::new(cov / n);
    let (axis, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let normal = eig.eigenvectors.column(axis).into_owned();
    let thickness = points
        .iter()
        .map(|p| abs((Vector3::from(*p) - mean).dot(&normal)))
        .fold(0.0, f64::max);
    if thickness <= 1e-9 * extent.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateGeometry(
            "surface points are coplanar and enclose no volume".into(),
        ));
    }
    Ok(())
}

const EMPTY: u8 = 0;
const SURFACE: u8 = 1;
const EXTERIOR: u8 = 2;
const INSIDE: u8 = 3;

struct VoxelGrid {
    origin: [i64; 3],
    dims: [usize; 3],
    cells: Vec<u8>,
}

impl VoxelGrid {
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    fn coords(&self, i: usize) -> [usize; 3] {
        let z = i % self.dims[2];
        let y = (i / self.dims[2]) % self.dims[1];
        let x = i / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(i);
        (0..6).filter_map(move |k| {
            let axis = k / 2;
            let mut n = c;
            if k % 2 == 0 {
                if n[axis] == 0 {
                    return None;
                }
                n[axis] -= 1;
            } else {
                if n[axis] + 1 >= self.dims[axis] {
                    return None;
                }
                n[axis] += 1;
            }
            Some(self.index(n[0], n[1], n[2]))
        })
    }

    /// City-block distance from every voxel to the nearest voxel in state `from`.
    fn distance_to(&self, from: u8) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.cells.len()];
        let mut queue = VecDeque::new();
        for (i, &c) in self.cells.iter().enumerate() {
            if c == from {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let d = dist[i] + 1;
            for j in self.neighbors(i) {
                if dist[j] == u32::MAX {
                    dist[j] = d;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

fn voxel_of(x: f64, voxel: f64) -> i64 {
    floor(x / voxel + 0.5) as i64
}

fn voxelize(points: &[[f64; 3]], voxel: f64) -> Result<VoxelGrid> {
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    let keys: Vec<[i64; 3]> = points
        .iter()
        .map(|p| [voxel_of(p[0], voxel), voxel_of(p[1], voxel), voxel_of(p[2], voxel)])
        .collect();
    for k in &keys {
        for a in 0..3 {
            lo[a] = lo[a].min(k[a]);
            hi[a] = hi[a].max(k[a]);
        }
    }
    let origin = [lo[0] - PADDING, lo[1] - PADDING, lo[2] - PADDING];
    let mut dims = [0usize; 3];
    let mut total: usize = 1;
    for a in 0..3 {
        dims[a] = ((hi[a] - lo[a]) + 2 * PADDING + 1) as usize;
        total = total.saturating_mul(dims[a]);
    }
    if total > 1 << 28 {
        return Err(Error::InvalidConfig(format!(
            "voxel grid of {}x{}x{} is too large; increase the spacing",
            dims[0], dims[1], dims[2]
        )));
    }
    let mut grid = VoxelGrid {
        origin,
        dims,
        cells: vec![EMPTY; total],
    };
    for k in &keys {
        let c = [
            (k[0] - origin[0]) as usize,
            (k[1] - origin[1]) as usize,
            (k[2] - origin[2]) as usize,
        ];
        for dx in 0..3 {
            for dy in 0..3 {
                for dz in 0..3 {
                    let i = grid.index(c[0] + dx - 1, c[1] + dy - 1, c[2] + dz - 1);
                    grid.cells[i] = SURFACE;
                }
            }
        }
    }
    Ok(grid)
}

/// Marks exterior and inside voxels; returns how many non-surface voxels the
/// exterior flood reached, and how many there are.
fn classify(grid: &mut VoxelGrid) -> (usize, usize) {
    let mut queue = VecDeque::new();
    grid.cells[0] = EXTERIOR;
    queue.push_back(0);
    let mut reached = 1usize;
    while let Some(i) = queue.pop_front() {
        let mut next = [0usize; 6];
        let mut count = 0;
        for j in grid.neighbors(i) {
            next[count] = j;
            count += 1;
        }
        for &j in &next[..count] {
            if grid.cells[j] == EMPTY {
                grid.cells[j] = EXTERIOR;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    let fillable = grid.cells.iter().filter(|&&c| c != SURFACE).count();
    for c in grid.cells.iter_mut() {
        if *c == EMPTY {
            *c = INSIDE;
        }
    }
    (reached, fillable)
}

fn voxel_flood(points: &[[f64; 3]], cfg: &FillConfig) -> Result<Vec<[i64; 3]>> {
    let voxel = cfg.voxel_size();
    let mut grid = voxelize(points, voxel)?;
    if grid.dims.iter().any(|&d| d < MIN_RESOLUTION) {
        return Err(Error::DegenerateGeometry(format!(
            "voxel grid {:?} is below {MIN_RESOLUTION} cells per axis",
            grid.dims
        )));
    }
    let (reached, fillable) = classify(&mut grid);
    if reached as f64 > LEAK_FRACTION * fillable as f64 {
        return Err(Error::LeakDetected {
            reached,
            total: fillable,
        });
    }
    if !grid.cells.contains(&INSIDE) {
        return Err(Error::DegenerateGeometry(
            "surface encloses no voxel at this spacing".into(),
        ));
    }
    let to_inside = grid.distance_to(INSIDE);
    let to_outside = grid.distance_to(EXTERIOR);
    let sub = cfg.subdivision as i64;
    let mut out = Vec::new();
    for (i, &c) in grid.cells.iter().enumerate() {
        let solid = c == INSIDE || (c == SURFACE && to_inside[i] < to_outside[i]);
        if !solid {
            continue;
        }
        let v = grid.coords(i);
        let key = [
            grid.origin[0] + v[0] as i64,
            grid.origin[1] + v[1] as i64,
            grid.origin[2] + v[2] as i64,
        ];
        if key.iter().all(|k| k.rem_euclid(sub) == 0) {
            out.push([key[0] / sub, key[1] / sub, key[2] / sub]);
        }
    }
    Ok(out)
}

/// Unit normals from the local covariance, oriented consistently by a
/// breadth-first walk over the kNN graph that starts at the outermost point.
fn oriented_normals(points: &[[f64; 3]], tree: &KdTree) -> Vec<Vector3<f64>> {
    const K: usize = 8;
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = crate::par::map_collect(n, |i| {
        tree.k_nearest(points[i], K + 1)
            .into_iter()
            .map(|h| h.index)
            .filter(|&j| j != i)
            .collect()
    });
    let mut normals: Vec<Vector3<f64>> = crate::par::map_collect(n, |i| {
        let mut mean = Vector3::from(points[i]);
        for &j in &neighbors[i] {
            mean += Vector3::from(points[j]);
        }
        mean /= (neighbors[i].len() + 1) as f64;
        let mut cov = Matrix3::zeros();
        for &j in core::iter::once(&i).chain(&neighbors[i]) {
            let d = Vector3::from(points[j]) - mean;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let axis = (0..3)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .unwrap_or(0);
        eig.eigenvectors.column(axis).into_owned()
    });

    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += Vector3::from(*p);
    }
    centroid /= n as f64;
    let mut visited = vec![false; n];
    // Each connected component starts from its point farthest from the centroid.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let da = (Vector3::from(points[a]) - centroid).norm_squared();
        let db = (Vector3::from(points[b]) - centroid).norm_squared();
        db.total_cmp(&da).then(a.cmp(&b))
    });
    for &seed in &order {
        if visited[seed] {
            continue;
        }
        if normals[seed].dot(&(Vector3::from(points[seed]) - centroid)) < 0.0 {
            normals[seed] = -normals[seed];
        }
        visited[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if !visited[j] {
                    if normals[j].dot(&normals[i]) < 0.0 {
                        normals[j] = -normals[j];
                    }
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    normals
}

fn winding(points: &[[f64; 3]], cfg: &FillConfig) -> Result<Vec<[i64; 3]>> {
    const K: usize = 8;
    let tree = KdTree::build(points);
    let normals = oriented_normals(points, &tree);
    let areas: Vec<f64> = crate::par::map_collect(points.len(), |i| {
        let hits = tree.k_nearest(points[i], K + 1);
        let r2 = hits.last().map_or(0.0, |h| h.dist2);
        core::f64::consts::PI * r2 / K as f64
    });
    let h = cfg.spacing;
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(floor(p[a] / h) as i64);
            hi[a] = hi[a].max(floor(p[a] / h) as i64 + 1);
        }
    }
    let dims = [
        (hi[0] - lo[0] + 1) as usize,
        (hi[1] - lo[1] + 1) as usize,
        (hi[2] - lo[2] + 1) as usize,
    ];
    let total = dims[0] * dims[1] * dims[2];
    let inside: Vec<bool> = crate::par::map_collect(total, |i| {
        let k = [
            lo[0] + (i / (dims[1] * dims[2])) as i64,
            lo[1] + ((i / dims[2]) % dims[1]) as i64,
            lo[2] + (i % dims[2]) as i64,
        ];
        let q = Vector3::new(k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h);
        let mut w = 0.0;
        for (j, p) in points.iter().enumerate() {
            let d = Vector3::from(*p) - q;
            let r = d.norm();
            if r > 0.0 {
                w += areas[j] * d.dot(&normals[j]) / (r * r * r);
            }
        }
        w / (4.0 * core::f64::consts::PI) > 0.5
    });
    let out: Vec<[i64; 3]> = inside
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| {
            [
                lo[0] + (i / (dims[1] * dims[2])) as i64,
                lo[1] + ((i / dims[2]) % dims[1]) as i64,
                lo[2] + (i % dims[2]) as i64,
            ]
        })
        .collect();
    if out.is_empty() {
        return Err(Error::DegenerateGeometry(
            "no lattice point has winding number above one half".into(),
        ));
    }
    Ok(out)
}

/// Interior lattice indices (multiples of `cfg.spacing`) for a closed surface.
///
/// Points closer than `cfg.clearance · cfg.spacing` to a surface sample are
/// dropped. Results are sorted lexicographically.
pub fn fill_lattice(surface: &[[f64; 3]], cfg: &FillConfig) -> Result<Lattice> {
    cfg.validate()?;
    if surface.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::Domain("surface positions must be finite".into()));
    }
    check_volumetric(surface)?;
    let mut indices = match cfg.inside_test {
        InsideTest::VoxelFlood => voxel_flood(surface, cfg)?,
        InsideTest::WindingNumber => winding(surface, cfg)?,
    };
    let tree = KdTree::build(surface);
    let h = cfg.spacing;
    let min_d2 = (cfg.clearance * h) * (cfg.clearance * h);
    let keep: Vec<bool> = crate::par::map_collect(indices.len(), |i| {
        let k = indices[i];
        let q = [k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h];
        tree.nearest(q).is_some_and(|n| n.dist2 >= min_d2)
    });
    let mut it = keep.iter();
    indices.retain(|_| *it.next().unwrap_or(&false));
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(Error::DegenerateGeometry(
            "every candidate interior point lies within the surface clearance".into(),
        ));
    }
    Ok(Lattice { indices })
}

/// Interior positions for a closed surface field. See [`fill_lattice`].
pub fn fill_interior(surface: &MaterialField, cfg: &FillConfig) -> Result<Vec<[f64; 3]>> {
    Ok(fill_lattice(&surface.positions, cfg)?.positions(cfg.spacing))
}

/// Surface points followed by `interior`, the latter taking properties from
/// their nearest surface points.
///
/// With `knn_k = 1` every interior point copies class, E, ν, ρ and part label
/// from its nearest surface point (ties to the lowest index). With larger
/// `knn_k` the continuous parameters are inverse-distance averaged in
/// (log10 E, ν, log10 ρ) and class and part label go to the weighted vote
/// winner, ties to the lowest value. An interior point that coincides with a
/// surface point copies that point.
pub fn inherit_properties(
    interior: &[[f64; 3]],
    surface: &MaterialField,
    cfg: &FillConfig,
) -> Result<MaterialField> {
    cfg.validate()?;
    surface.ensure_valid()?;
    if interior.is_empty() {
        return Err(Error::Shape("no interior points to inherit onto".into()));
    }
    let tree = KdTree::build(&surface.positions);
    let k = cfg.knn_k.min(surface.len());
    let picks: Vec<Inherited> = crate::par::map_collect(interior.len(), |i| {
        let hits = tree.k_nearest(interior[i], k);
        if k == 1 || hits[0].dist2 == 0.0 {
            let j = hits[0].index;
            return Inherited {
                class_id: surface.class_id[j],
                young: surface.young_modulus[j],
                poisson: surface.poisson_ratio[j],
                density: surface.density[j],
                part: surface.part(j),
            };
        }
        blend(surface, &hits)
    });

    let mut out = surface.clone();
    for (p, pick) in interior.iter().zip(&picks) {
        out.positions.push(*p);
        out.class_id.push(pick.class_id);
        out.young_modulus.push(pick.young);
        out.poisson_ratio.push(pick.poisson);
        out.density.push(pick.density);
        out.interior.push(true);
        if let (Some(labels), Some(l)) = (out.part_label.as_mut(), pick.part) {
            labels.push(l);
        }
    }
    Ok(out)
}

struct Inherited {
    class_id: u32,
    young: f64,
    poisson: f64,
    density: f64,
    part: Option<u32>,
}

fn vote(weights: impl Iterator<Item = (u32, f64)>) -> u32 {
    let mut tally: Vec<(u32, f64)> = Vec::new();
    for (label, w) in weights {
        match tally.iter_mut().find(|(l, _)| *l == label) {
            Some(t) => t.1 += w,
            None => tally.push((label, w)),
        }
    }
    tally.sort_by_key(|t| t.0);
    let mut best = tally[0];
    for &t in &tally[1..] {
        if t.1 > best.1 {
            best = t;
        }
    }
    best.0
}

fn blend(surface: &MaterialField, hits: &[crate::spatial::Neighbor]) -> Inherited {
    let weights: Vec<f64> = hits.iter().map(|h| 1.0 / sqrt(h.dist2)).collect();
    let total: f64 = weights.iter().sum();
    let mut log_e = 0.0;
    let mut nu = 0.0;
    let mut log_rho = 0.0;
    for (h, w) in hits.iter().zip(&weights) {
        let j = h.index;
        log_e += w * log10(surface.young_modulus[j]);
        nu += w * surface.poisson_ratio[j];
        log_rho += w * log10(surface.density[j]);
    }
    let class_id = vote(hits.iter().zip(&weights).map(|(h, w)| (surface.class_id[h.index], *w)));
    debug_assert!(MaterialModel::from_index(class_id).is_some());
    Inherited {
        class_id,
        young: exp10(log_e / total),
        poisson: nu / total,
        density: exp10(log_rho / total),
        part: surface
            .part_label
            .as_ref()
            .map(|p| vote(hits.iter().zip(&weights).map(|(h, w)| (p[h.index], *w)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cube_shell(m: usize) -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        let g = |i: usize| i as f64 / (m - 1) as f64;
        for a in 0..m {
            for b in 0..m {
                for f in [0.0, 1.0] {
                    pts.push([f, g(a), g(b)]);
                    pts.push([g(a), f, g(b)]);
                    pts.push([g(a), g(b), f]);
                }
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    #[test]
    fn unit_cube_interior() {
        let lat = fill_lattice(&cube_shell(41), &FillConfig::with_spacing(0.1)).unwrap();
        assert_eq!(lat.indices.len(), 729);
        assert!(lat
            .indices
            .iter()
            .all(|k| k.iter().all(|&c| (1..=9).contains(&c))));
    }

    #[test]
    fn flat_sheet_is_degenerate() {
        let pts: Vec<[f64; 3]> = (0..400)
            .map(|i| [(i % 20) as f64 * 0.05, (i / 20) as f64 * 0.05, 0.0])
            .collect();
        assert!(matches!(
            fill_lattice(&pts, &FillConfig::with_spacing(0.1)),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn open_box_leaks() {
        let pts: Vec<[f64; 3]> = cube_shell(41).into_iter().filter(|p| p[2] < 1.0).collect();
        assert!(matches!(
            fill_lattice(&pts, &FillConfig::with_spacing(0.1)),
            Err(Error::LeakDetected { .. })
        ));
    }

    #[test]
    fn zero_spacing_rejected() {
        assert!(matches!(
            fill_lattice(&cube_shell(5), &FillConfig::with_spacing(0.0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn single_surface_point_is_copied() {
        let mut s = MaterialField::uniform(vec![[0.0; 3]], MaterialModel::Sand, 3e5, 0.25, 1500.0);
        s.part_label = Some(vec![4]);
        let interior = vec![[0.1, 0.0, 0.0], [0.0, 0.3, 0.2]];
        let f = inherit_properties(&interior, &s, &FillConfig::default()).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.interior, vec![false, true, true]);
        assert_eq!(f.class_id, vec![2; 3]);
        assert_eq!(f.part_label, Some(vec![4; 3]));
        assert_eq!(f.density, vec![1500.0; 3]);
    }

    #[test]
    fn weighted_blend_stays_in_range() {
        let mut s = MaterialField::uniform(
            vec![[0.0; 3], [1.0, 0.0, 0.0]],
            MaterialModel::Elastic,
            1e4,
            0.2,
            1000.0,
        );
        s.young_modulus[1] = 1e6;
        s.class_id[1] = MaterialModel::Rigid.index();
        let cfg = FillConfig {
            knn_k: 2,
            ..FillConfig::default()
        };
        let f = inherit_properties(&[[0.5, 0.0, 0.0], [0.25, 0.0, 0.0]], &s, &cfg).unwrap();
        assert!((f.young_modulus[2] - 1e5).abs() < 1e-6);
        // Equal weights tie the vote; the lower class wins.
        assert_eq!(f.class_id[2], 0);
        assert_eq!(f.class_id[3], 0);
        assert!(f.young_modulus[3] > 1e4 && f.young_modulus[3] < 1e5);
    }
}
