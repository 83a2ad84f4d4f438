//! Per-point material fields and the closed-form elastic quantities derived
//! from Young's modulus, Poisson's ratio and density.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dense::Matrix;
use crate::math::{exp10, log10, sqrt};
use crate::{Error, Result};

/// The six constitutive classes a material field can assign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MaterialModel {
    Elastic = 0,
    Plasticine = 1,
    Sand = 2,
    Snow = 3,
    Liquid = 4,
    Rigid = 5,
}

impl MaterialModel {
    pub const COUNT: usize = 6;
    pub const ALL: [MaterialModel; 6] = [
        MaterialModel::Elastic,
        MaterialModel::Plasticine,
        MaterialModel::Sand,
        MaterialModel::Snow,
        MaterialModel::Liquid,
        MaterialModel::Rigid,
    ];

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialModel::Elastic => "elastic",
            MaterialModel::Plasticine => "plasticine",
            MaterialModel::Sand => "sand",
            MaterialModel::Snow => "snow",
            MaterialModel::Liquid => "liquid",
            MaterialModel::Rigid => "rigid",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.name() == name)
    }
}

impl core::fmt::Display for MaterialModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Extra constants for the plastic and stiff classes.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlasticityParams {
    /// von Mises yield stress for plasticine (Pa).
    pub yield_stress: f64,
    /// Drucker-Prager friction angle for sand (degrees).
    pub friction_angle_deg: f64,
    /// Snow critical compression θ_c.
    pub snow_compression: f64,
    /// Snow critical stretch θ_s.
    pub snow_stretch: f64,
    /// Snow hardening coefficient ξ in exp(ξ(1 − J_p)).
    pub snow_hardening: f64,
    /// Upper bound on the Young's modulus used for rigid particles (Pa).
    pub rigid_max_modulus: f64,
}

impl Default for PlasticityParams {
    fn default() -> Self {
        Self {
            yield_stress: 1e4,
            friction_angle_deg: 30.0,
            snow_compression: 2.5e-2,
            snow_stretch: 7.5e-3,
            snow_hardening: 10.0,
            rigid_max_modulus: 1e9,
        }
    }
}

impl PlasticityParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("yield_stress", self.yield_stress),
            ("friction_angle_deg", self.friction_angle_deg),
            ("snow_compression", self.snow_compression),
            ("snow_stretch", self.snow_stretch),
            ("rigid_max_modulus", self.rigid_max_modulus),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.friction_angle_deg >= 90.0 || self.snow_compression >= 1.0 {
            return Err(Error::InvalidConfig(String::from(
                "friction angle must be below 90 degrees and snow compression below 1",
            )));
        }
        if !(self.snow_hardening >= 0.0) {
            return Err(Error::InvalidConfig(String::from(
                "snow hardening must be non-negative",
            )));
        }
        Ok(())
    }
}

/// Shear, bulk and first Lamé moduli (Pa).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moduli {
    pub mu: f64,
    pub kappa: f64,
    pub lame_lambda: f64,
}

/// Longitudinal and shear wave speeds (m/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveSpeeds {
    pub c_p: f64,
    pub c_s: f64,
}

/// Moduli and wave speeds for one (E, ν, ρ) triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticDerived {
    pub mu: f64,
    pub kappa: f64,
    pub lame_lambda: f64,
    pub c_p: f64,
    pub c_s: f64,
}

impl ElasticDerived {
    pub fn compute(young: f64, poisson: f64, density: f64) -> Result<Self> {
        let m = derive_moduli(young, poisson)?;
        let w = wave_speeds(young, poisson, density)?;
        Ok(Self {
            mu: m.mu,
            kappa: m.kappa,
            lame_lambda: m.lame_lambda,
            c_p: w.c_p,
            c_s: w.c_s,
        })
    }
}

fn check_elastic(young: f64, poisson: f64) -> Result<()> {
    if !(young > 0.0 && young.is_finite()) {
        return Err(Error::Domain(format!("Young's modulus must be positive, got {young}")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Domain(format!(
            "Poisson's ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    Ok(())
}

/// μ = E/(2(1+ν)), K = E/(3(1−2ν)), λ = Eν/((1+ν)(1−2ν)).
pub fn derive_moduli(young: f64, poisson: f64) -> Result<Moduli> {
    check_elastic(young, poisson)?;
    Ok(Moduli {
        mu: young / (2.0 * (1.0 + poisson)),
        kappa: young / (3.0 * (1.0 - 2.0 * poisson)),
        lame_lambda: young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)),
    })
}

/// Longitudinal and shear wave speeds of an isotropic elastic solid.
pub fn wave_speeds(young: f64, poisson: f64, density: f64) -> Result<WaveSpeeds> {
    check_elastic(young, poisson)?;
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::Domain(format!("density must be positive, got {density}")));
    }
    let c_p = sqrt(
        young * (1.0 - poisson) / (density * (1.0 + poisson) * (1.0 - 2.0 * poisson)),
    );
    let c_s = sqrt(young / (2.0 * density * (1.0 + poisson)));
    Ok(WaveSpeeds { c_p, c_s })
}

/// Validity ranges applied when decoding predicted parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterBounds {
    pub young_modulus: (f64, f64),
    pub poisson_ratio: (f64, f64),
    pub density: (f64, f64),
}

impl ParameterBounds {
    pub const DEFAULT: ParameterBounds = ParameterBounds {
        young_modulus: (1e2, 1e12),
        poisson_ratio: (-0.45, 0.499),
        density: (1.0, 2e4),
    };
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// z-score constants for (log10 E, ν, log10 ρ).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [6.0, 0.3, 3.0],
            std: [2.0, 0.1, 0.5],
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Domain(String::from(
                "normalization needs finite means and positive standard deviations",
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, young: f64, poisson: f64, density: f64) -> [f64; 3] {
        [
            (log10(young) - self.mean[0]) / self.std[0],
            (poisson - self.mean[1]) / self.std[1],
            (log10(density) - self.mean[2]) / self.std[2],
        ]
    }

    /// Inverse of [`Normalization::normalize`], without clamping.
    pub fn denormalize(&self, z: [f64; 3]) -> (f64, f64, f64) {
        (
            exp10(z[0] * self.std[0] + self.mean[0]),
            z[1] * self.std[1] + self.mean[1],
            exp10(z[2] * self.std[2] + self.mean[2]),
        )
    }
}

/// Constitutive class and continuous parameters over a point set.
///
/// Arrays are parallel: entry `i` of every vector describes point `i`. The
/// struct is plain data; [`validate_field`] reports any broken invariant.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaterialField {
    pub positions: Vec<[f64; 3]>,
    pub class_id: Vec<u32>,
    pub young_modulus: Vec<f64>,
    pub poisson_ratio: Vec<f64>,
    pub density: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub part_label: Option<Vec<u32>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub interior: Vec<bool>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub normalization: Normalization,
}

impl MaterialField {
    /// A field where every point shares one class and parameter set.
    pub fn uniform(
        positions: Vec<[f64; 3]>,
        model: MaterialModel,
        young: f64,
        poisson: f64,
        density: f64,
    ) -> Self {
        let n = positions.len();
        Self {
            positions,
            class_id: alloc::vec![model.index(); n],
            young_modulus: alloc::vec![young; n],
            poisson_ratio: alloc::vec![poisson; n],
            density: alloc::vec![density; n],
            part_label: None,
            interior: alloc::vec![false; n],
            normalization: Normalization::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn model(&self, i: usize) -> Option<MaterialModel> {
        MaterialModel::from_index(self.class_id[i])
    }

    pub fn part(&self, i: usize) -> Option<u32> {
        self.part_label.as_ref().map(|p| p[i])
    }

    pub fn derived(&self, i: usize) -> Result<ElasticDerived> {
        ElasticDerived::compute(self.young_modulus[i], self.poisson_ratio[i], self.density[i])
    }

    /// Reorders every per-point array so that point `perm[i]` becomes point `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            positions: perm.iter().map(|&p| self.positions[p]).collect(),
            class_id: perm.iter().map(|&p| self.class_id[p]).collect(),
            young_modulus: perm.iter().map(|&p| self.young_modulus[p]).collect(),
            poisson_ratio: perm.iter().map(|&p| self.poisson_ratio[p]).collect(),
            density: perm.iter().map(|&p| self.density[p]).collect(),
            part_label: self
                .part_label
                .as_ref()
                .map(|l| perm.iter().map(|&p| l[p]).collect()),
            interior: perm.iter().map(|&p| self.interior[p]).collect(),
            normalization: self.normalization,
        }
    }

    /// Fails with [`Error::Domain`] describing the first violation, if any.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_field(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Domain(format!(
                "{} violation(s) in material field, first: {v:?}",
                report.violations.len()
            ))),
        }
    }
}

/// One broken invariant of a [`MaterialField`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch {
        array: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinitePosition { index: usize },
    UnknownClass { index: usize, class_id: u32 },
    NonPositiveModulus { index: usize, value: f64 },
    PoissonOutOfRange { index: usize, value: f64 },
    NonPositiveDensity { index: usize, value: f64 },
    InvalidNormalization,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant violation in `field`. Never fails.
pub fn validate_field(field: &MaterialField) -> ValidationReport {
    let mut violations = Vec::new();
    let n = field.positions.len();
    if n == 0 {
        violations.push(Violation::Empty);
    }
    let mut lengths: Vec<(&'static str, usize)> = alloc::vec![
        ("class_id", field.class_id.len()),
        ("young_modulus", field.young_modulus.len()),
        ("poisson_ratio", field.poisson_ratio.len()),
        ("density", field.density.len()),
        ("interior", field.interior.len()),
    ];
    if let Some(p) = &field.part_label {
        lengths.push(("part_label", p.len()));
    }
    for (array, found) in lengths {
        if found != n {
            violations.push(Violation::LengthMismatch {
                array,
                expected: n,
                found,
            });
        }
    }
    for (index, p) in field.positions.iter().enumerate() {
        if p.iter().any(|c| !c.is_finite()) {
            violations.push(Violation::NonFinitePosition { index });
        }
    }
    for (index, &class_id) in field.class_id.iter().enumerate() {
        if class_id as usize >= MaterialModel::COUNT {
            violations.push(Violation::UnknownClass { index, class_id });
        }
    }
    for (index, &value) in field.young_modulus.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            violations.push(Violation::NonPositiveModulus { index, value });
        }
    }
    for (index, &value) in field.poisson_ratio.iter().enumerate() {
        if !(value > -1.0 && value < 0.5) {
            violations.push(Violation::PoissonOutOfRange { index, value });
        }
    }
    for (index, &value) in field.density.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            violations.push(Violation::NonPositiveDensity { index, value });
        }
    }
    if field.normalization.validate().is_err() {
        violations.push(Violation::InvalidNormalization);
    }
    ValidationReport { violations }
}

/// Tolerance on the row sums of class-probability matrices.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

pub(crate) fn check_simplex(probs: &Matrix) -> Result<()> {
    for (i, row) in probs.iter_rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || crate::math::abs(sum - 1.0) > SIMPLEX_TOLERANCE {
            return Err(Error::Domain(format!(
                "probability row {i} is not on the simplex (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

/// Turns per-point class probabilities and normalized parameters into a field.
///
/// `params` columns are z-scored (log10 E, ν, log10 ρ). Decoded values are
/// clamped into [`ParameterBounds::DEFAULT`].
pub fn decode_material_field(
    positions: Vec<[f64; 3]>,
    class_probs: &Matrix,
    params: &Matrix,
    normalization: Normalization,
) -> Result<MaterialField> {
    let n = positions.len();
    if class_probs.rows() != n || params.rows() != n {
        return Err(Error::Shape(format!(
            "{n} positions but {} probability rows and {} parameter rows",
            class_probs.rows(),
            params.rows()
        )));
    }
    if class_probs.cols() != MaterialModel::COUNT {
        return Err(Error::Shape(format!(
            "expected {} class columns, got {}",
            MaterialModel::COUNT,
            class_probs.cols()
        )));
    }
    if params.cols() != 3 {
        return Err(Error::Shape(format!(
            "expected 3 parameter columns, got {}",
            params.cols()
        )));
    }
    normalization.validate()?;
    check_simplex(class_probs)?;

    let bounds = ParameterBounds::DEFAULT;
    let mut field = MaterialField {
        positions,
        class_id: Vec::with_capacity(n),
        young_modulus: Vec::with_capacity(n),
        poisson_ratio: Vec::with_capacity(n),
        density: Vec::with_capacity(n),
        part_label: None,
        interior: alloc::vec![false; n],
        normalization,
    };
    for i in 0..n {
        field.class_id.push(argmax(class_probs.row(i)) as u32);
        let z = params.row(i);
        let (e, nu, rho) = normalization.denormalize([z[0], z[1], z[2]]);
        field
            .young_modulus
            .push(e.clamp(bounds.young_modulus.0, bounds.young_modulus.1));
        field
            .poisson_ratio
            .push(nu.clamp(bounds.poisson_ratio.0, bounds.poisson_ratio.1));
        field.density.push(rho.clamp(bounds.density.0, bounds.density.1));
    }
    Ok(field)
}
