//! Stress laws and plastic return mappings.
//!
//! The deformation gradient stored on a particle is always the elastic part;
//! [`return_map`] projects a trial gradient back onto the admissible set and
//! [`piola_stress`] evaluates the first Piola-Kirchhoff stress on it.

use alloc::format;

use nalgebra::{Matrix3, Vector3, SVD};

use crate::material::{derive_moduli, MaterialModel, PlasticityParams};
use crate::math::{cbrt, exp, ln, sin, sqrt};
use crate::{Error, Result};

/// History carried between substeps.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlasticState {
    /// Plastic volume ratio (snow hardening).
    pub jp: f64,
    /// Accumulated plastic strain magnitude.
    pub plastic_strain: f64,
}

impl Default for PlasticState {
    fn default() -> Self {
        Self {
            jp: 1.0,
            plastic_strain: 0.0,
        }
    }
}

/// Live parameters of one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstitutiveParams {
    pub model: MaterialModel,
    pub young: f64,
    pub poisson: f64,
    pub plasticity: PlasticityParams,
}

/// Elastic gradient, plastic history and stress after one constitutive update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressUpdate {
    /// First Piola-Kirchhoff stress at `elastic_f`.
    pub piola: Matrix3<f64>,
    pub elastic_f: Matrix3<f64>,
    pub plastic: PlasticState,
}

/// (μ, λ, K) actually used by the stress law, after the rigid modulus clamp,
/// snow hardening and the zero shear modulus of liquids.
pub fn effective_lame(p: &ConstitutiveParams, plastic: &PlasticState) -> Result<(f64, f64, f64)> {
    let young = match p.model {
        MaterialModel::Rigid => p.young.min(p.plasticity.rigid_max_modulus),
        _ => p.young,
    };
    let m = derive_moduli(young, p.poisson)?;
    Ok(match p.model {
        MaterialModel::Snow => {
            let h = exp(p.plasticity.snow_hardening * (1.0 - plastic.jp));
            (m.mu * h, m.lame_lambda * h, m.kappa * h)
        }
        MaterialModel::Liquid => (0.0, m.lame_lambda, m.kappa),
        _ => (m.mu, m.lame_lambda, m.kappa),
    })
}

/// SVD with proper rotations on both sides; the sign of a reflection ends up
/// on the last singular value.
struct Svd3 {
    u: Matrix3<f64>,
    sigma: Vector3<f64>,
    v_t: Matrix3<f64>,
}

fn svd3(f: &Matrix3<f64>) -> Result<Svd3> {
    let svd = SVD::try_new(*f, true, true, f64::EPSILON, 1000)
        .ok_or_else(|| Error::Numerical("SVD of the deformation gradient did not converge".into()))?;
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD returned no singular vectors".into())),
    };
    let mut sigma = svd.singular_values;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        sigma[2] = -sigma[2];
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
        sigma[2] = -sigma[2];
    }
    Ok(Svd3 { u, sigma, v_t })
}

fn positive_sigma(s: &Svd3) -> Result<()> {
    if s.sigma.iter().all(|&x| x > 0.0) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "deformation gradient is inverted (singular values {:?})",
            s.sigma.as_slice()
        )))
    }
}

fn compose(s: &Svd3, sigma: &Vector3<f64>) -> Matrix3<f64> {
    s.u * Matrix3::from_diagonal(sigma) * s.v_t
}

fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    // J F⁻ᵀ without an inverse.
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| f[(r0, c0)] * f[(r1, c1)] - f[(r0, c1)] * f[(r1, c0)];
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(1, 2, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 1, 2),
        c(0, 2, 0, 2),
        -c(0, 2, 0, 1),
        c(0, 1, 1, 2),
        -c(0, 1, 0, 2),
        c(0, 1, 0, 1),
    )
}

fn check_det(f: &Matrix3<f64>) -> Result<f64> {
    let j = f.determinant();
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::Numerical(format!(
            "deformation gradient has non-positive determinant {j}"
        )));
    }
    Ok(j)
}

/// Projects a trial deformation gradient onto the admissible set of the law.
pub fn return_map(
    f: &Matrix3<f64>,
    plastic: PlasticState,
    p: &ConstitutiveParams,
) -> Result<(Matrix3<f64>, PlasticState)> {
    let j = check_det(f)?;
    let mut state = plastic;
    match p.model {
        MaterialModel::Elastic | MaterialModel::Rigid => Ok((*f, state)),
        MaterialModel::Liquid => Ok((Matrix3::identity() * cbrt(j), state)),
        MaterialModel::Plasticine => {
            let s = svd3(f)?;
            positive_sigma(&s)?;
            let (mu, _, _) = effective_lame(p, &plastic)?;
            let eps = s.sigma.map(ln);
            let mean = eps.sum() / 3.0;
            let dev = eps.add_scalar(-mean);
            let norm = dev.norm();
            let limit = sqrt(2.0 / 3.0) * p.plasticity.yield_stress;
            if 2.0 * mu * norm <= limit {
                return Ok((*f, state));
            }
            let scaled = dev * (limit / (2.0 * mu * norm));
            state.plastic_strain += norm - scaled.norm();
            let sigma = scaled.add_scalar(mean).map(exp);
            Ok((compose(&s, &sigma), state))
        }
        MaterialModel::Sand => {
            let s = svd3(f)?;
            positive_sigma(&s)?;
            let (mu, lambda, _) = effective_lame(p, &plastic)?;
            let eps = s.sigma.map(ln);
            let tr = eps.sum();
            if tr >= 0.0 {
                // Expansion: cohesionless grains separate, stress vanishes.
                state.plastic_strain += eps.norm();
                return Ok((s.u * s.v_t, state));
            }
            let dev = eps.add_scalar(-tr / 3.0);
            let dev_norm = dev.norm();
            let phi = p.plasticity.friction_angle_deg.to_radians();
            let sp = sin(phi);
            let alpha = sqrt(2.0 / 3.0) * 2.0 * sp / (3.0 - sp);
            let dgamma = dev_norm + (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * tr * alpha;
            if dgamma <= 0.0 || dev_norm == 0.0 {
                return Ok((*f, state));
            }
            let h = eps - dev * (dgamma / dev_norm);
            state.plastic_strain += dgamma;
            Ok((compose(&s, &h.map(exp)), state))
        }
        MaterialModel::Snow => {
            let s = svd3(f)?;
            positive_sigma(&s)?;
            let lo = 1.0 - p.plasticity.snow_compression;
            let hi = 1.0 + p.plasticity.snow_stretch;
            let clamped = s.sigma.map(|x| x.clamp(lo, hi));
            if clamped == s.sigma {
                return Ok((*f, state));
            }
            let before = s.sigma.product();
            let after = clamped.product();
            state.jp *= before / after;
            state.plastic_strain += (s.sigma - clamped).norm();
            Ok((compose(&s, &clamped), state))
        }
    }
}

/// First Piola-Kirchhoff stress of an (already projected) elastic gradient.
///
/// Elastic, plasticine, snow and rigid use fixed corotated elasticity
/// P = 2μ(F − R) + λ(J − 1)J F⁻ᵀ; liquid keeps only the pressure term with the
/// bulk modulus; sand uses the Hencky law on the singular values.
pub fn piola_stress(
    f: &Matrix3<f64>,
    plastic: &PlasticState,
    p: &ConstitutiveParams,
) -> Result<Matrix3<f64>> {
    let j = check_det(f)?;
    if *f == Matrix3::identity() {
        return Ok(Matrix3::zeros());
    }
    let (mu, lambda, kappa) = effective_lame(p, plastic)?;
    match p.model {
        MaterialModel::Liquid => Ok(cofactor(f) * (kappa * (j - 1.0))),
        MaterialModel::Sand => {
            let s = svd3(f)?;
            positive_sigma(&s)?;
            let eps = s.sigma.map(ln);
            let tr = eps.sum();
            let d = Vector3::from_fn(|i, _| (2.0 * mu * eps[i] + lambda * tr) / s.sigma[i]);
            Ok(compose(&s, &d))
        }
        _ => {
            let s = svd3(f)?;
            let r = s.u * s.v_t;
            Ok((f - r) * (2.0 * mu) + cofactor(f) * (lambda * (j - 1.0)))
        }
    }
}

/// Return mapping followed by the stress at the projected gradient.
pub fn constitutive_stress(
    f: &Matrix3<f64>,
    plastic: PlasticState,
    p: &ConstitutiveParams,
) -> Result<StressUpdate> {
    let (elastic_f, plastic) = return_map(f, plastic, p)?;
    let piola = piola_stress(&elastic_f, &plastic, p)?;
    Ok(StressUpdate {
        piola,
        elastic_f,
        plastic,
    })
}
