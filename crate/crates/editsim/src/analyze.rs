//! Loss breakdown and gradient-check report for a labeled fixture.

use std::collections::BTreeMap;
use std::path::Path;

use editsim_core::dense::Matrix;
use editsim_core::material::{MaterialField, MaterialModel};
use editsim_core::supervision::{
    finite_diff_check, sample_triplets, total_loss, LossBreakdown, LossInputs, LossKind, LossWeights,
    SupervisionTargets, Triplet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::field_io::read_json;

/// How the contrastive triplets are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    Sampled { count: usize, seed: u64 },
    Explicit(Vec<[usize; 3]>),
}

/// Predictions and ground truth for one labeled point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    /// Predicted field; positions drive the smoothness graph.
    pub field: MaterialField,
    /// Predicted class probabilities, one row per point.
    pub class_probs: Vec<Vec<f64>>,
    /// Predicted normalized (log10 E, ν, log10 ρ).
    pub params: Vec<[f64; 3]>,
    pub class_labels: Vec<u32>,
    pub target_params: Vec<[f64; 3]>,
    pub part_labels: Vec<u32>,
    pub prompt_map: BTreeMap<u32, usize>,
    /// Unscaled point-to-prompt similarities.
    pub similarity: Vec<Vec<f64>>,
    pub temperature: f64,
    pub triplets: TripletSource,
}

/// The fixture as the loss functions take it.
pub struct Prepared {
    pub field: MaterialField,
    pub class_probs: Matrix,
    pub params: Matrix,
    pub targets: SupervisionTargets,
    pub similarity: Matrix,
    pub temperature: f64,
    pub triplets: Vec<Triplet>,
}

impl Prepared {
    pub fn inputs(&self) -> LossInputs<'_> {
        LossInputs {
            field: &self.field,
            class_probs: &self.class_probs,
            params: &self.params,
            targets: &self.targets,
            triplets: &self.triplets,
            similarity: &self.similarity,
            temperature: self.temperature,
        }
    }
}

fn rows_matrix(rows: &[Vec<f64>]) -> editsim_core::Result<Matrix> {
    Matrix::from_rows(rows)
}

fn triple_matrix(rows: &[[f64; 3]]) -> editsim_core::Result<Matrix> {
    Matrix::from_rows(rows)
}

impl Fixture {
    pub fn load(path: &Path) -> AppResult<Self> {
        read_json(path)
    }

    pub fn prepare(&self) -> AppResult<Prepared> {
        self.field.ensure_valid()?;
        let triplets = match &self.triplets {
            TripletSource::Sampled { count, seed } => sample_triplets(&self.field, *count, *seed)?,
            TripletSource::Explicit(list) => list
                .iter()
                .map(|&[anchor, positive, negative]| Triplet {
                    anchor,
                    positive,
                    negative,
                })
                .collect(),
        };
        Ok(Prepared {
            field: self.field.clone(),
            class_probs: rows_matrix(&self.class_probs)?,
            params: triple_matrix(&self.params)?,
            targets: SupervisionTargets {
                class_labels: self.class_labels.clone(),
                params: triple_matrix(&self.target_params)?,
                part_labels: self.part_labels.clone(),
                prompt_map: self.prompt_map.clone(),
            },
            similarity: rows_matrix(&self.similarity)?,
            temperature: self.temperature,
            triplets,
        })
    }
}

/// Deterministic random fixture: two parts of `n / 2` points each, with
/// part-specific materials and `k` prompts.
pub fn synthetic_fixture(n: usize, k: usize, seed: u64) -> AppResult<Fixture> {
    if n < 4 || k < 2 {
        return Err(AppError::Usage("synthetic fixtures need n >= 4 points and k >= 2 prompts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    let mut part_labels = Vec::with_capacity(n);
    for i in 0..n {
        let part = (2 * i / n) as u32;
        let offset = part as f64 * 0.5;
        positions.push([
            offset + rng.random_range(0.0..0.3),
            rng.random_range(0.0..0.3),
            rng.random_range(0.0..0.3),
        ]);
        part_labels.push(part);
    }
    let mut field = MaterialField::uniform(positions, MaterialModel::Elastic, 1e5, 0.3, 1000.0);
    let norm = field.normalization;
    let mut params = Vec::with_capacity(n);
    let mut target_params = Vec::with_capacity(n);
    let mut class_probs = Vec::with_capacity(n);
    let mut class_labels = Vec::with_capacity(n);
    let mut similarity = Vec::with_capacity(n);
    for (i, &label) in part_labels.iter().enumerate() {
        let part = label as f64;
        let z = [
            -0.5 + part + rng.random_range(-0.3..0.3),
            rng.random_range(-0.8..0.8),
            -0.4 + 0.8 * part + rng.random_range(-0.3..0.3),
        ];
        let (e, nu, rho) = norm.denormalize(z);
        field.young_modulus[i] = e;
        field.poisson_ratio[i] = nu;
        field.density[i] = rho;
        let cls = (label * 2 + rng.random_range(0..2)) % MaterialModel::COUNT as u32;
        field.class_id[i] = cls;
        params.push(z);
        target_params.push([z[0] + rng.random_range(-1.6..1.6), z[1] + rng.random_range(-0.4..0.4), z[2] + rng.random_range(-1.6..1.6)]);
        let logits: Vec<f64> = (0..MaterialModel::COUNT).map(|_| rng.random_range(-2.0..2.0)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        class_probs.push(exps.iter().map(|e| e / sum).collect());
        class_labels.push(rng.random_range(0..MaterialModel::COUNT as u32));
        similarity.push((0..k).map(|_| rng.random_range(-0.3..0.3)).collect());
    }
    field.part_label = Some(part_labels.clone());
    let prompt_map = [(0, 0), (1, k - 1)].into_iter().collect();
    Ok(Fixture {
        field,
        class_probs,
        params,
        class_labels,
        target_params,
        part_labels,
        prompt_map,
        similarity,
        temperature: 0.07,
        triplets: TripletSource::Sampled {
            count: n / 2,
            seed: seed ^ 0x9e37_79b9,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedTerms {
    pub task: f64,
    pub smoothness: f64,
    pub contrastive: f64,
    pub assignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CheckOutcome {
    Checked {
        max_rel_error: f64,
        worst_component: usize,
        components: usize,
        passed: bool,
    },
    /// The probe sits on a kink of the loss; no comparison was made.
    NonSmooth { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientEntry {
    pub loss: LossKind,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub weights: LossWeights,
    pub points: usize,
    pub triplets: usize,
    pub breakdown: LossBreakdown,
    pub weighted: WeightedTerms,
    pub total: f64,
    pub finite_difference_step: f64,
    pub tolerance: f64,
    pub gradient_checks: Vec<GradientEntry>,
}

impl AnalyzeReport {
    pub fn gradients_pass(&self) -> bool {
        self.gradient_checks
            .iter()
            .all(|g| matches!(g.outcome, CheckOutcome::Checked { passed: true, .. }))
    }
}

/// Largest relative gradient error accepted.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_STEP: f64 = 1e-6;

pub fn analyze(fixture: &Fixture, w: &LossWeights, eps: f64) -> AppResult<AnalyzeReport> {
    let prepared = fixture.prepare()?;
    let inputs = prepared.inputs();
    let (total, b) = total_loss(&inputs, w)?;
    let mut gradient_checks = Vec::new();
    for kind in LossKind::ALL {
        let outcome = match finite_diff_check(kind, &inputs, w, eps) {
            Ok(c) => CheckOutcome::Checked {
                max_rel_error: c.max_rel_error,
                worst_component: c.worst_component,
                components: c.components,
                passed: c.max_rel_error < GRADIENT_TOLERANCE,
            },
            Err(e) if e.code() == "E_NON_SMOOTH" => CheckOutcome::NonSmooth { reason: e.to_string() },
            Err(e) => return Err(e.into()),
        };
        gradient_checks.push(GradientEntry { loss: kind, outcome });
    }
    Ok(AnalyzeReport {
        weights: *w,
        points: prepared.field.len(),
        triplets: prepared.triplets.len(),
        breakdown: b,
        weighted: WeightedTerms {
            task: b.task,
            smoothness: w.lambda_smooth * b.smoothness,
            contrastive: w.lambda_con * b.contrastive,
            assignment: w.lambda_assign * b.assignment,
        },
        total,
        finite_difference_step: eps,
        tolerance: GRADIENT_TOLERANCE,
        gradient_checks,
    })
}

/// Path of the labeled fixture shipped with the crate.
pub fn bundled_fixture_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/labeled.json")
}
