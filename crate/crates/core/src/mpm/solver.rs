//! One MLS-MPM substep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use super::constitutive::{piola_stress, return_map, ConstitutiveParams, PlasticState};
use super::state::SimulationState;
use crate::math::{exp, floor};
use crate::par;
use crate::{Error, Result};

/// Quadratic B-spline stencil of one particle.
#[derive(Clone, Copy)]
struct Stencil {
    base: [i64; 3],
    /// Position relative to `base`, in cells.
    frac: [f64; 3],
    w: [[f64; 3]; 3],
}

impl Stencil {
    fn new(x: &Vector3<f64>, origin: &[f64; 3], inv_h: f64) -> Self {
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        let mut w = [[0.0; 3]; 3];
        for a in 0..3 {
            let local = (x[a] - origin[a]) * inv_h;
            let b = floor(local - 0.5);
            let fx = local - b;
            base[a] = b as i64;
            frac[a] = fx;
            w[a] = [
                0.5 * (1.5 - fx) * (1.5 - fx),
                0.75 - (fx - 1.0) * (fx - 1.0),
                0.5 * (fx - 0.5) * (fx - 0.5),
            ];
        }
        Self { base, frac, w }
    }

    fn fits(&self, dims: &[usize; 3]) -> bool {
        (0..3).all(|a| self.base[a] >= 0 && self.base[a] + 2 < dims[a] as i64)
    }

    fn weight(&self, o: [usize; 3]) -> f64 {
        self.w[0][o[0]] * self.w[1][o[1]] * self.w[2][o[2]]
    }

    /// Node position minus particle position for stencil offset `o`.
    fn offset(&self, o: [usize; 3], h: f64) -> Vector3<f64> {
        Vector3::new(
            (o[0] as f64 - self.frac[0]) * h,
            (o[1] as f64 - self.frac[1]) * h,
            (o[2] as f64 - self.frac[2]) * h,
        )
    }
}

/// What one particle scatters to each node of its stencil.
struct Scatter {
    stencil: Stencil,
    mass: f64,
    momentum: Vector3<f64>,
    affine: Matrix3<f64>,
    kinematic: bool,
}

#[derive(Clone, Copy, Default)]
struct Node {
    mass: f64,
    momentum: Vector3<f64>,
    kinematic_mass: f64,
    kinematic_momentum: Vector3<f64>,
}

/// Particles bucketed by stencil base cell inside the active window.
struct Bins {
    lo: [i64; 3],
    cell_dims: [usize; 3],
    start: Vec<usize>,
    order: Vec<usize>,
}

impl Bins {
    fn build(stencils: &[Stencil]) -> Self {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for s in stencils {
            for a in 0..3 {
                lo[a] = lo[a].min(s.base[a]);
                hi[a] = hi[a].max(s.base[a]);
            }
        }
        let cell_dims = [
            (hi[0] - lo[0] + 1) as usize,
            (hi[1] - lo[1] + 1) as usize,
            (hi[2] - lo[2] + 1) as usize,
        ];
        let cells = cell_dims[0] * cell_dims[1] * cell_dims[2];
        let key = |s: &Stencil| {
            let c = [
                (s.base[0] - lo[0]) as usize,
                (s.base[1] - lo[1]) as usize,
                (s.base[2] - lo[2]) as usize,
            ];
            (c[0] * cell_dims[1] + c[1]) * cell_dims[2] + c[2]
        };
        // Stable counting sort keeps particle index order within a cell.
        let mut start = vec![0usize; cells + 1];
        for s in stencils {
            start[key(s) + 1] += 1;
        }
        for c in 0..cells {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; stencils.len()];
        for (p, s) in stencils.iter().enumerate() {
            let k = key(s);
            order[fill[k]] = p;
            fill[k] += 1;
        }
        Self {
            lo,
            cell_dims,
            start,
            order,
        }
    }

    fn cell(&self, c: [i64; 3]) -> Option<&[usize]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = c[a] - self.lo[a];
            if r < 0 || r >= self.cell_dims[a] as i64 {
                return None;
            }
            idx[a] = r as usize;
        }
        let k = (idx[0] * self.cell_dims[1] + idx[1]) * self.cell_dims[2] + idx[2];
        Some(&self.order[self.start[k]..self.start[k + 1]])
    }

    /// Node window covering every stencil: base cells plus two.
    fn node_dims(&self) -> [usize; 3] {
        [self.cell_dims[0] + 2, self.cell_dims[1] + 2, self.cell_dims[2] + 2]
    }
}

fn escape(state: &SimulationState, p: usize) -> Error {
    Error::ParticleEscape {
        particle: p,
        time: state.time,
    }
}

/// Advances the state by one substep of length `dt`.
///
/// Particle-to-grid transfer, grid velocity update with per-object body
/// forces, damping and boundary conditions, then grid-to-particle transfer
/// with the deformation update and plastic projection. Fails with
/// [`Error::ParticleEscape`] when a particle's stencil leaves the grid.
pub fn step(state: &mut SimulationState, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("substep must be positive, got {dt}")));
    }
    let n = state.len();
    if n == 0 {
        return Err(Error::EmptyScene);
    }
    let grid = state.grid;
    let h = grid.spacing;
    let inv_h = 1.0 / h;
    let stress_scale = -dt * 4.0 * inv_h * inv_h;

    let stencils: Vec<Stencil> =
        par::map_collect(n, |p| Stencil::new(&state.position[p], &grid.origin, inv_h));
    if let Some(p) = stencils.iter().position(|s| !s.fits(&grid.dims)) {
        return Err(escape(state, p));
    }

    let scatter: Vec<Result<Scatter>> = {
        let s = &*state;
        par::map_collect(n, |p| {
            let slot = s.object_slot[p];
            let obj = &s.objects[slot];
            let m = s.mass[p];
            if obj.kinematic {
                return Ok(Scatter {
                    stencil: stencils[p],
                    mass: m,
                    momentum: s.velocity[p] * m,
                    affine: Matrix3::zeros(),
                    kinematic: true,
                });
            }
            let params = ConstitutiveParams {
                model: s.model[p],
                young: s.young[p],
                poisson: s.poisson[p],
                plasticity: s.plasticity,
            };
            let f = &s.deformation[p];
            let piola = piola_stress(f, &s.plastic[p], &params)?;
            let kirchhoff = piola * f.transpose();
            let accel = Vector3::from(obj.gravity) + Vector3::from(obj.wind);
            Ok(Scatter {
                stencil: stencils[p],
                mass: m,
                momentum: s.velocity[p] * m + accel * (m * dt),
                affine: kirchhoff * (stress_scale * s.volume[p]) + s.affine[p] * m,
                kinematic: false,
            })
        })
    };
    let mut parts = Vec::with_capacity(n);
    for (p, r) in scatter.into_iter().enumerate() {
        parts.push(r.map_err(|e| e.context(format!("particle {p} at t={}", state.time)))?);
    }

    let bins = Bins::build(&stencils);
    let nd = bins.node_dims();
    let node_count = nd[0] * nd[1] * nd[2];
    let lo = bins.lo;

    let nodes: Vec<Node> = par::map_collect(node_count, |i| {
        let k = [i / (nd[1] * nd[2]), (i / nd[2]) % nd[1], i % nd[2]];
        let node = [lo[0] + k[0] as i64, lo[1] + k[1] as i64, lo[2] + k[2] as i64];
        let mut acc = Node::default();
        for ox in 0..3 {
            for oy in 0..3 {
                for oz in 0..3 {
                    let cell = [node[0] - ox as i64, node[1] - oy as i64, node[2] - oz as i64];
                    let Some(members) = bins.cell(cell) else {
                        continue;
                    };
                    let o = [ox, oy, oz];
                    for &p in members {
                        let s = &parts[p];
                        let w = s.stencil.weight(o);
                        if s.kinematic {
                            acc.kinematic_mass += w * s.mass;
                            acc.kinematic_momentum += s.momentum * w;
                        } else {
                            let dpos = s.stencil.offset(o, h);
                            acc.mass += w * s.mass;
                            acc.momentum += (s.momentum + s.affine * dpos) * w;
                        }
                    }
                }
            }
        }
        acc
    });

    let ground = state.ground_height;
    let boundaries = state.boundaries;
    let damping = if state.damping > 0.0 {
        exp(-state.damping * dt)
    } else {
        1.0
    };
    let velocities: Vec<Vector3<f64>> = par::map_collect(node_count, |i| {
        let nd_ = &nodes[i];
        if nd_.kinematic_mass > 0.0 {
            return nd_.kinematic_momentum / nd_.kinematic_mass;
        }
        if nd_.mass <= 0.0 {
            return Vector3::zeros();
        }
        let mut v = nd_.momentum / nd_.mass;
        if damping != 1.0 {
            v *= damping;
        }
        let k = [i / (nd[1] * nd[2]), (i / nd[2]) % nd[1], i % nd[2]];
        let idx = [lo[0] + k[0] as i64, lo[1] + k[1] as i64, lo[2] + k[2] as i64];
        let mut vv = [v.x, v.y, v.z];
        for (a, &ix) in idx.iter().enumerate() {
            if ix < super::GRID_MARGIN as i64 {
                boundaries.walls[2 * a].apply(&mut vv, a, 1.0);
            }
            if ix > (grid.dims[a] - 1 - super::GRID_MARGIN) as i64 {
                boundaries.walls[2 * a + 1].apply(&mut vv, a, -1.0);
            }
        }
        let y = grid.origin[1] + idx[1] as f64 * h;
        if y <= ground {
            boundaries.ground.apply(&mut vv, 1, 1.0);
        }
        Vector3::new(vv[0], vv[1], vv[2])
    });

    let node_at = |s: &Stencil, o: [usize; 3]| {
        let k = [
            (s.base[0] + o[0] as i64 - lo[0]) as usize,
            (s.base[1] + o[1] as i64 - lo[1]) as usize,
            (s.base[2] + o[2] as i64 - lo[2]) as usize,
        ];
        (k[0] * nd[1] + k[1]) * nd[2] + k[2]
    };

    type Gathered = (Vector3<f64>, Vector3<f64>, Matrix3<f64>, Matrix3<f64>, PlasticState);
    let gathered: Vec<Result<Gathered>> = {
        let s = &*state;
        par::map_collect(n, |p| {
            let st = &parts[p].stencil;
            let x = s.position[p];
            if parts[p].kinematic {
                let v = s.velocity[p];
                return Ok((x + v * dt, v, Matrix3::zeros(), s.deformation[p], s.plastic[p]));
            }
            let mut v = Vector3::zeros();
            let mut b = Matrix3::zeros();
            for ox in 0..3 {
                for oy in 0..3 {
                    for oz in 0..3 {
                        let o = [ox, oy, oz];
                        let w = st.weight(o);
                        let vi = velocities[node_at(st, o)];
                        v += vi * w;
                        b += vi * st.offset(o, h).transpose() * w;
                    }
                }
            }
            let c = b * (4.0 * inv_h * inv_h);
            let trial = (Matrix3::identity() + c * dt) * s.deformation[p];
            let params = ConstitutiveParams {
                model: s.model[p],
                young: s.young[p],
                poisson: s.poisson[p],
                plasticity: s.plasticity,
            };
            let (fe, plastic) = return_map(&trial, s.plastic[p], &params)?;
            Ok((x + v * dt, v, c, fe, plastic))
        })
    };

    for (p, g) in gathered.into_iter().enumerate() {
        let (x, v, c, f, plastic) =
            g.map_err(|e| e.context(format!("particle {p} at t={}", state.time)))?;
        if !(x.iter().all(|c| c.is_finite()) && v.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical(format!(
                "particle {p} reached a non-finite state at t={}",
                state.time
            )));
        }
        state.position[p] = x;
        state.velocity[p] = v;
        state.affine[p] = c;
        state.deformation[p] = f;
        state.plastic[p] = plastic;
    }
    state.time += dt;
    state.substeps += 1;

    for p in 0..n {
        if !Stencil::new(&state.position[p], &grid.origin, inv_h).fits(&grid.dims) {
            return Err(escape(state, p));
        }
    }
    Ok(())
}
