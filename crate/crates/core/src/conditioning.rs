//! Part-aware conditioning of point features.
//!
//! [`soft_assign`] aligns point features with part-prompt embeddings and mixes
//! prompt values back into the point stream through a residual update.
//! [`hierarchical_condition`] then runs two residual cross-attention stages:
//! first against the single global text token, then against the part tokens.
//! Queries always come from the point stream.

use alloc::format;
use alloc::vec::Vec;

use crate::dense::{row_softmax, softmax_in_place, Matrix};
use crate::math::sqrt;
use crate::{Error, Result};

/// Inputs of the soft assignment.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureBundle {
    /// Point features, N×d (segmentation prior columns then positional ones).
    pub point_features: Matrix,
    /// Global text token, 1×d_t.
    pub global_token: Matrix,
    /// Part prompt tokens, K×d_t.
    pub part_tokens: Matrix,
    /// Point projection Φ, d×d_a.
    pub point_projection: Matrix,
    /// Prompt projection Ψ, d_t×d_a.
    pub prompt_projection: Matrix,
    /// Prompt value map, d_t×d.
    pub value_projection: Matrix,
    /// Softmax temperature τ.
    pub temperature: f64,
}

impl FeatureBundle {
    /// Temperature used for the soft assignment by default.
    pub const DEFAULT_TEMPERATURE: f64 = 0.07;

    /// Concatenates segmentation-prior and positional features column-wise.
    pub fn concat_features(segmentation: &Matrix, positional: &Matrix) -> Result<Matrix> {
        if segmentation.rows() != positional.rows() {
            return Err(Error::Shape(format!(
                "{} segmentation rows vs {} positional rows",
                segmentation.rows(),
                positional.rows()
            )));
        }
        let mut out = Matrix::zeros(segmentation.rows(), segmentation.cols() + positional.cols());
        out.set_columns(0, segmentation);
        out.set_columns(segmentation.cols(), positional);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.point_features.shape();
        let (k, dt) = self.part_tokens.shape();
        let da = self.point_projection.cols();
        if n == 0 {
            return Err(Error::Shape("bundle has no points".into()));
        }
        if k == 0 {
            return Err(Error::Shape("bundle needs at least one part token".into()));
        }
        let expect = [
            ("global_token", self.global_token.shape(), (1, dt)),
            ("point_projection", self.point_projection.shape(), (d, da)),
            ("prompt_projection", self.prompt_projection.shape(), (dt, da)),
            ("value_projection", self.value_projection.shape(), (dt, d)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Output of [`soft_assign`].
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentResult {
    /// Unscaled similarities (HΦ)(TΨ)ᵀ, N×K.
    pub similarity: Matrix,
    /// Similarities divided by τ, N×K.
    pub logits: Matrix,
    /// Row-softmax of `logits`, N×K.
    pub weights: Matrix,
    /// H + A(TW), N×d.
    pub refined: Matrix,
}

/// Soft assignment of points to part prompts with a residual value update.
pub fn soft_assign(bundle: &FeatureBundle) -> Result<AssignmentResult> {
    bundle.validate()?;
    let points = bundle.point_features.matmul(&bundle.point_projection)?;
    let prompts = bundle.part_tokens.matmul(&bundle.prompt_projection)?;
    let similarity = points.matmul_transposed(&prompts)?;
    let logits = similarity.scale(1.0 / bundle.temperature);
    let weights = row_softmax(&logits);
    let values = bundle.part_tokens.matmul(&bundle.value_projection)?;
    let refined = bundle.point_features.add(&weights.matmul(&values)?)?;
    Ok(AssignmentResult {
        similarity,
        logits,
        weights,
        refined,
    })
}

/// Projections of one multi-head attention layer.
///
/// Head `h` uses columns `h*head_dim..(h+1)*head_dim` of the query, key and
/// value projections and the matching rows of the output projection.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttentionWeights {
    pub heads: usize,
    /// d_q × width.
    pub query: Matrix,
    /// d_ctx × width.
    pub key: Matrix,
    /// d_ctx × width.
    pub value: Matrix,
    /// width × d_q.
    pub output: Matrix,
}

impl AttentionWeights {
    /// Heads used by default, matching an 8-head layer over 512-wide features.
    pub const DEFAULT_HEADS: usize = 8;

    pub fn width(&self) -> usize {
        self.query.cols()
    }

    pub fn head_dim(&self) -> usize {
        self.width() / self.heads
    }

    /// Checks internal consistency and compatibility with the given inputs.
    pub fn validate(&self, query_dim: usize, context_dim: usize) -> Result<()> {
        let width = self.width();
        if self.heads == 0 || width == 0 || !width.is_multiple_of(self.heads) {
            return Err(Error::Shape(format!(
                "width {width} is not divisible by {} heads",
                self.heads
            )));
        }
        let expect = [
            ("query", self.query.shape(), (query_dim, width)),
            ("key", self.key.shape(), (context_dim, width)),
            ("value", self.value.shape(), (context_dim, width)),
            ("output", self.output.shape(), (width, query_dim)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!(
                    "{name} projection is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }
}

/// Multi-head scaled-dot-product attention from `queries` to `context`, plus
/// the residual: `MHA(queries, context) + queries`.
pub fn cross_attention(
    queries: &Matrix,
    context: &Matrix,
    weights: &AttentionWeights,
) -> Result<Matrix> {
    weights.validate(queries.cols(), context.cols())?;
    if context.rows() == 0 {
        return Err(Error::Shape("attention context is empty".into()));
    }
    let q = queries.matmul(&weights.query)?;
    let k = context.matmul(&weights.key)?;
    let v = context.matmul(&weights.value)?;
    let head_dim = weights.head_dim();
    let scale = 1.0 / sqrt(head_dim as f64);
    let m = context.rows();

    let mut concat = Matrix::zeros(queries.rows(), weights.width());
    let mut scores: Vec<f64> = alloc::vec![0.0; m];
    for h in 0..weights.heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        for i in 0..queries.rows() {
            let qi = &q.row(i)[cols.clone()];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k.row(j)[cols.clone()];
                let mut dot = 0.0;
                for (a, b) in qi.iter().zip(kj) {
                    dot += a * b;
                }
                *s = dot * scale;
            }
            softmax_in_place(&mut scores);
            let out = &mut concat.row_mut(i)[cols.clone()];
            for (j, &a) in scores.iter().enumerate() {
                let vj = &v.row(j)[cols.clone()];
                for (o, &x) in out.iter_mut().zip(vj) {
                    *o += a * x;
                }
            }
        }
    }
    concat.matmul(&weights.output)?.add(queries)
}

/// Global stage then part stage, both residual.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalOutput {
    pub global: Matrix,
    pub part: Matrix,
}

/// Conditions refined point features on the global token, then the part tokens.
pub fn hierarchical_condition(
    result: &AssignmentResult,
    global_token: &Matrix,
    part_tokens: &Matrix,
    global_stage: &AttentionWeights,
    part_stage: &AttentionWeights,
) -> Result<HierarchicalOutput> {
    if global_token.rows() != 1 {
        return Err(Error::Shape(format!(
            "global token must be a single row, got {}",
            global_token.rows()
        )));
    }
    let global = cross_attention(&result.refined, global_token, global_stage)?;
    let part = cross_attention(&global, part_tokens, part_stage)?;
    Ok(HierarchicalOutput { global, part })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize, seed: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| {
            crate::math::sin(seed + 0.37 * i as f64 + 1.13 * j as f64)
        })
    }

    fn bundle(n: usize, d: usize, k: usize, dt: usize, da: usize) -> FeatureBundle {
        FeatureBundle {
            point_features: ramp(n, d, 0.1),
            global_token: ramp(1, dt, 0.2),
            part_tokens: ramp(k, dt, 0.3),
            point_projection: ramp(d, da, 0.4),
            prompt_projection: ramp(dt, da, 0.5),
            value_projection: ramp(dt, d, 0.6),
            temperature: 0.07,
        }
    }

    #[test]
    fn single_prompt_gives_unit_weights() {
        let b = bundle(5, 4, 1, 3, 2);
        let r = soft_assign(&b).unwrap();
        assert!(r.weights.as_slice().iter().all(|&w| w == 1.0));
        let v = b.part_tokens.matmul(&b.value_projection).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(r.refined.get(i, j), b.point_features.get(i, j) + v.get(0, j));
            }
        }
    }

    #[test]
    fn zero_value_projection_is_identity() {
        let mut b = bundle(6, 4, 3, 3, 2);
        b.value_projection = Matrix::zeros(3, 4);
        let r = soft_assign(&b).unwrap();
        assert_eq!(r.refined, b.point_features);
    }

    #[test]
    fn shape_and_temperature_errors() {
        let mut b = bundle(3, 4, 2, 3, 2);
        b.prompt_projection = Matrix::zeros(2, 2);
        assert!(matches!(soft_assign(&b), Err(Error::Shape(_))));
        let mut b = bundle(3, 4, 2, 3, 2);
        b.temperature = 0.0;
        assert!(matches!(soft_assign(&b), Err(Error::Domain(_))));
    }

    #[test]
    fn attention_rejects_indivisible_width() {
        let w = AttentionWeights {
            heads: 3,
            query: Matrix::zeros(4, 4),
            key: Matrix::zeros(2, 4),
            value: Matrix::zeros(2, 4),
            output: Matrix::zeros(4, 4),
        };
        assert!(matches!(
            cross_attention(&Matrix::zeros(1, 4), &Matrix::zeros(1, 2), &w),
            Err(Error::Shape(_))
        ));
    }
}
