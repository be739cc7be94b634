//! Differentiable objective components with analytic gradients.
//!
//! Every loss returns `(value, gradient)` so the gradients can be checked
//! against central finite differences (see [`crate::gradcheck`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::spans::TagSequence;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no spans to penalize")]
    EmptySpans,
    #[error("prediction has {actual} values but the mask has {expected} pixels")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("pixel {index} has probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
}

/// Clamping epsilon for binary cross-entropy probabilities.
pub const BCE_EPSILON: f64 = 1e-7;

/// Default smoothing constant for the Tversky-family losses.
pub const DEFAULT_SMOOTH: f64 = 1.0;

/// Output multiplier applied on the Dice fallback path.
pub const DICE_SCALE: f64 = 1e3;

/// Weights and shape parameters of the combined objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_span: f64,
    pub lambda_kl: f64,
    pub lambda_seg: f64,
    pub lambda_bce: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_span: 2.0,
            lambda_kl: 0.1,
            lambda_seg: 8.0,
            lambda_bce: 2.0,
            alpha: 0.7,
            beta: 0.3,
            gamma: 4.0 / 3.0,
            sigma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let lambdas = [
            ("lambda_span", self.lambda_span),
            ("lambda_kl", self.lambda_kl),
            ("lambda_seg", self.lambda_seg),
            ("lambda_bce", self.lambda_bce),
        ];
        for (name, v) in lambdas {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::InvalidParameter(format!(
                    "{name} must be a non-negative finite number, got {v}"
                )));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(LossError::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(self.gamma >= 1.0) {
            return Err(LossError::InvalidParameter(format!(
                "gamma must be >= 1, got {}",
                self.gamma
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(LossError::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Mean token-level softmax cross-entropy over B/I/O logits.
///
/// Returns the loss and its gradient w.r.t. the logits,
/// `(softmax - onehot) / N` per token.
pub fn span_ce_loss(
    logits: &[[f64; 3]],
    gold: &TagSequence,
) -> Result<(f64, Vec<[f64; 3]>), LossError> {
    if logits.len() != gold.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} logit rows vs {} gold tags",
            logits.len(),
            gold.len()
        )));
    }
    if logits.is_empty() {
        return Err(LossError::ShapeMismatch("empty sequence".to_string()));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![[0.0; 3]; logits.len()];
    for (t, (row, &tag)) in logits.iter().zip(gold.tags()).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = [
            (row[0] - max).exp(),
            (row[1] - max).exp(),
            (row[2] - max).exp(),
        ];
        let z: f64 = exps.iter().sum();
        let gold_idx = tag.class_index();
        loss += -(exps[gold_idx] / z).ln();
        for k in 0..3 {
            let softmax = exps[k] / z;
            grad[t][k] = (softmax - if k == gold_idx { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Gaussian penalty between pooled span embeddings and their frozen
/// teacher embeddings: `(1/N) Σ ‖h − t‖² / (2σ²)`.
///
/// Returns the loss and its gradient w.r.t. each `h`, `(h − t) / (N σ²)`.
pub fn gaussian_kl_penalty(
    span_embs: &[Vec<f64>],
    teacher_embs: &[Vec<f64>],
    sigma: f64,
) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    if span_embs.is_empty() {
        return Err(LossError::EmptySpans);
    }
    if span_embs.len() != teacher_embs.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} spans vs {} teachers",
            span_embs.len(),
            teacher_embs.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(LossError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = span_embs.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(span_embs.len());
    for (h, t) in span_embs.iter().zip(teacher_embs) {
        if h.len() != t.len() {
            return Err(LossError::ShapeMismatch(format!(
                "span dim {} vs teacher dim {}",
                h.len(),
                t.len()
            )));
        }
        let mut sq = 0.0;
        let mut g = Vec::with_capacity(h.len());
        for (&hi, &ti) in h.iter().zip(t) {
            let d = hi - ti;
            sq += d * d;
            g.push(d / (n * sigma * sigma));
        }
        loss += sq / (2.0 * sigma * sigma);
        grads.push(g);
    }
    Ok((loss / n, grads))
}

fn check_probs(pred: &[f64], gt: &BinaryMask) -> Result<(), LossError> {
    let expected = (gt.height() * gt.width()) as usize;
    if pred.len() != expected {
        return Err(LossError::DimensionMismatch {
            expected,
            actual: pred.len(),
        });
    }
    for (index, &value) in pred.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(LossError::ProbabilityOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Focal-Tversky loss over per-pixel probabilities (row-major, matching
/// the mask layout).
///
/// Soft counts `TP = Σ p·g`, `FN = Σ (1−p)·g`, `FP = Σ p·(1−g)` give the
/// Tversky index `TI = (TP + s) / (TP + α·FN + β·FP + s)`; the loss is
/// `(1 − TI)^γ`. `α` weights false negatives (recall) and `β` false
/// positives (precision).
pub fn focal_tversky_loss(
    pred: &[f64],
    gt: &BinaryMask,
    alpha: f64,
    beta: f64,
    gamma: f64,
    smooth: f64,
) -> Result<(f64, Vec<f64>), LossError> {
    check_probs(pred, gt)?;
    for (name, v, lo) in [("alpha", alpha, 0.0), ("beta", beta, 0.0)] {
        if !(v > lo && v < 1.0) {
            return Err(LossError::InvalidParameter(format!(
                "{name} must lie in (0, 1), got {v}"
            )));
        }
    }
    if !(gamma >= 1.0) {
        return Err(LossError::InvalidParameter(format!(
            "gamma must be >= 1, got {gamma}"
        )));
    }
    if !(smooth >= 0.0) {
        return Err(LossError::InvalidParameter(format!(
            "smooth must be non-negative, got {smooth}"
        )));
    }

    let mut tp = 0.0;
    let mut fn_ = 0.0;
    let mut fp = 0.0;
    for (&p, &g) in pred.iter().zip(gt.pixels()) {
        let g = g as u8 as f64;
        tp += p * g;
        fn_ += (1.0 - p) * g;
        fp += p * (1.0 - g);
    }
    let num = tp + smooth;
    let den = tp + alpha * fn_ + beta * fp + smooth;
    if den == 0.0 {
        return Err(LossError::InvalidParameter(
            "degenerate Tversky denominator; use a positive smooth term".to_string(),
        ));
    }
    let ti = num / den;
    let loss = (1.0 - ti).powf(gamma);

    // d(loss)/dp = -γ (1-TI)^(γ-1) · dTI/dp, with
    // dTI/dp = (g·den - num·(g(1-α) + β(1-g))) / den².
    let outer = -gamma * (1.0 - ti).powf(gamma - 1.0);
    let grad = pred
        .iter()
        .zip(gt.pixels())
        .map(|(_, &g)| {
            let g = g as u8 as f64;
            let dden = g * (1.0 - alpha) + beta * (1.0 - g);
            let dti = (g * den - num * dden) / (den * den);
            outer * dti
        })
        .collect();
    Ok((loss, grad))
}

/// Soft Dice loss `scale · (1 − (2·TP + s)/(ΣP + ΣG + s))`, the fallback
/// path when the Focal-Tversky loss is disabled.
pub fn dice_loss(
    pred: &[f64],
    gt: &BinaryMask,
    smooth: f64,
    scale: f64,
) -> Result<(f64, Vec<f64>), LossError> {
    check_probs(pred, gt)?;
    if !(smooth >= 0.0) || !scale.is_finite() {
        return Err(LossError::InvalidParameter(
            "smooth must be non-negative and scale finite".to_string(),
        ));
    }
    let mut tp = 0.0;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for (&p, &g) in pred.iter().zip(gt.pixels()) {
        let g = g as u8 as f64;
        tp += p * g;
        sum_p += p;
        sum_g += g;
    }
    let num = 2.0 * tp + smooth;
    let den = sum_p + sum_g + smooth;
    if den == 0.0 {
        return Err(LossError::InvalidParameter(
            "degenerate Dice denominator; use a positive smooth term".to_string(),
        ));
    }
    let dice = num / den;
    let loss = scale * (1.0 - dice);
    let grad = pred
        .iter()
        .zip(gt.pixels())
        .map(|(_, &g)| {
            let g = g as u8 as f64;
            let ddice = (2.0 * g * den - num) / (den * den);
            -scale * ddice
        })
        .collect();
    Ok((loss, grad))
}

/// Mean per-pixel binary cross-entropy; probabilities are clamped to
/// `[BCE_EPSILON, 1 - BCE_EPSILON]` before the logs.
pub fn bce_loss(pred: &[f64], gt: &BinaryMask) -> Result<(f64, Vec<f64>), LossError> {
    check_probs(pred, gt)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &g) in pred.iter().zip(gt.pixels()) {
        let g = g as u8 as f64;
        let pc = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        loss += -(g * pc.ln() + (1.0 - g) * (1.0 - pc).ln());
        // Zero gradient on the clamp plateau, matching the clamped loss.
        let gi = if p > BCE_EPSILON && p < 1.0 - BCE_EPSILON {
            (pc - g) / (pc * (1.0 - pc)) / n
        } else {
            0.0
        };
        grad.push(gi);
    }
    Ok((loss / n, grad))
}

/// Weighted sum of the objective components:
/// `L = L_lm + λ_span·L_span + λ_kl·L_kl + λ_seg·L_seg + λ_bce·L_bce`.
pub fn combined_objective(
    l_lm: f64,
    l_span: f64,
    l_kl: f64,
    l_seg: f64,
    l_bce: f64,
    weights: &LossWeights,
) -> Result<f64, LossError> {
    weights.validate().map_err(|e| match e {
        LossError::InvalidParameter(m) => LossError::InvalidParameter(m),
        other => other,
    })?;
    for (name, v) in [
        ("l_lm", l_lm),
        ("l_span", l_span),
        ("l_kl", l_kl),
        ("l_seg", l_seg),
        ("l_bce", l_bce),
    ] {
        if !v.is_finite() {
            return Err(LossError::NonFiniteInput(format!("{name} = {v}")));
        }
    }
    Ok(l_lm
        + weights.lambda_span * l_span
        + weights.lambda_kl * l_kl
        + weights.lambda_seg * l_seg
        + weights.lambda_bce * l_bce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_grad_check;
    use crate::mask::BinaryMask;
    use crate::spans::TagSequence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn span_ce_saturated_correct_is_near_zero() {
        let gold = TagSequence::parse("BIO").unwrap();
        let logits = vec![[50.0, 0.0, 0.0], [0.0, 50.0, 0.0], [0.0, 0.0, 50.0]];
        let (loss, _) = span_ce_loss(&logits, &gold).unwrap();
        assert!(loss < 1e-12, "loss = {loss}");
    }

    #[test]
    fn span_ce_uniform_logits_is_ln3() {
        let gold = TagSequence::parse("BIOB").unwrap();
        let logits = vec![[0.0; 3]; 4];
        let (loss, _) = span_ce_loss(&logits, &gold).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn span_ce_shape_mismatch() {
        let gold = TagSequence::parse("BI").unwrap();
        assert!(matches!(
            span_ce_loss(&[[0.0; 3]], &gold),
            Err(LossError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn span_ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gold = TagSequence::parse("BIOIBO").unwrap();
        let flat: Vec<f64> = (0..18).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let pack = |x: &[f64]| -> Vec<[f64; 3]> {
            x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
        };
        let (_, grad) = span_ce_loss(&pack(&flat), &gold).unwrap();
        let grad_flat: Vec<f64> = grad.iter().flatten().cloned().collect();
        let err = finite_diff_grad_check(
            |x| span_ce_loss(&pack(x), &gold).unwrap().0,
            &grad_flat,
            &flat,
            1e-4,
        );
        assert!(err < 1e-5, "rel err = {err}");
    }

    #[test]
    fn kl_penalty_zero_when_equal() {
        let h = vec![vec![0.5, -1.0, 2.0]];
        let (loss, grads) = gaussian_kl_penalty(&h, &h, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn kl_penalty_plug_in_value() {
        // Single span, squared distance 2, sigma 1 -> loss 1.0.
        let h = vec![vec![1.0, 1.0]];
        let t = vec![vec![0.0, 0.0]];
        let (loss, _) = gaussian_kl_penalty(&h, &t, 1.0).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_penalty_errors() {
        assert!(matches!(
            gaussian_kl_penalty(&[], &[], 1.0),
            Err(LossError::EmptySpans)
        ));
        assert!(matches!(
            gaussian_kl_penalty(&[vec![1.0]], &[vec![1.0, 2.0]], 1.0),
            Err(LossError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = 4usize;
        let spans = 3usize;
        let flat: Vec<f64> = (0..spans * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let teachers: Vec<Vec<f64>> = (0..spans)
            .map(|_| (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let unpack = |x: &[f64]| -> Vec<Vec<f64>> {
            x.chunks(dims).map(|c| c.to_vec()).collect()
        };
        let (_, grads) = gaussian_kl_penalty(&unpack(&flat), &teachers, 0.7).unwrap();
        let grad_flat: Vec<f64> = grads.iter().flatten().cloned().collect();
        let err = finite_diff_grad_check(
            |x| gaussian_kl_penalty(&unpack(x), &teachers, 0.7).unwrap().0,
            &grad_flat,
            &flat,
            1e-5,
        );
        assert!(err < 1e-6, "rel err = {err}");
    }

    #[test]
    fn focal_tversky_perfect_prediction_is_zero() {
        let gt = BinaryMask::from_fn(3, 3, |r, c| (r + c) % 2 == 0).unwrap();
        let pred: Vec<f64> = gt.pixels().iter().map(|&g| g as u8 as f64).collect();
        let (loss, _) = focal_tversky_loss(&pred, &gt, 0.7, 0.3, 4.0 / 3.0, 1.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn focal_tversky_hand_case() {
        // 2x2: pred = [1,0;0,0], gt = [1,1;0,0], smooth 0.
        // TP = 1, FN = 1, FP = 0 -> TI = 1 / (1 + 0.7) = 1/1.7.
        let gt = BinaryMask::new(2, 2, vec![true, true, false, false]).unwrap();
        let pred = vec![1.0, 0.0, 0.0, 0.0];
        let (plain, _) = focal_tversky_loss(&pred, &gt, 0.7, 0.3, 1.0, 0.0).unwrap();
        let ti = 1.0 - plain;
        assert!((ti - 1.0 / 1.7).abs() < 1e-15);
        let gamma = 4.0 / 3.0;
        let (focal, _) = focal_tversky_loss(&pred, &gt, 0.7, 0.3, gamma, 0.0).unwrap();
        assert!((focal - (1.0f64 - 1.0 / 1.7).powf(gamma)).abs() < 1e-15);
    }

    #[test]
    fn focal_tversky_rejects_bad_probabilities() {
        let gt = BinaryMask::zeros(2, 2).unwrap();
        let err = focal_tversky_loss(&[0.5, 1.5, 0.0, 0.0], &gt, 0.7, 0.3, 1.0, 1.0);
        assert!(matches!(
            err,
            Err(LossError::ProbabilityOutOfRange { index: 1, .. })
        ));
        let err = focal_tversky_loss(&[0.5; 3], &gt, 0.7, 0.3, 1.0, 1.0);
        assert!(matches!(err, Err(LossError::DimensionMismatch { .. })));
    }

    #[test]
    fn focal_tversky_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = BinaryMask::from_fn(4, 4, |_, _| rng.gen_bool(0.4)).unwrap();
        let pred: Vec<f64> = (0..16).map(|_| rng.gen_range(0.05..0.95)).collect();
        let (_, grad) = focal_tversky_loss(&pred, &gt, 0.7, 0.3, 4.0 / 3.0, 1.0).unwrap();
        let err = finite_diff_grad_check(
            |x| focal_tversky_loss(x, &gt, 0.7, 0.3, 4.0 / 3.0, 1.0).unwrap().0,
            &grad,
            &pred,
            1e-5,
        );
        assert!(err < 1e-5, "rel err = {err}");
    }

    #[test]
    fn loss_increases_as_alpha_grows_with_false_negatives() {
        // FN > 0, so weighting recall harder can only hurt the index.
        let gt = BinaryMask::new(2, 2, vec![true, true, false, false]).unwrap();
        let pred = vec![0.9, 0.2, 0.1, 0.1];
        let mut last = -1.0;
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (loss, _) = focal_tversky_loss(&pred, &gt, alpha, 0.3, 1.0, 0.0).unwrap();
            assert!(loss >= last, "alpha {alpha}: {loss} < {last}");
            last = loss;
        }
    }

    #[test]
    fn dice_scale_multiplies_output() {
        let gt = BinaryMask::new(2, 2, vec![true, false, false, false]).unwrap();
        let pred = vec![0.5, 0.5, 0.0, 0.0];
        let (unit, _) = dice_loss(&pred, &gt, 1.0, 1.0).unwrap();
        let (scaled, _) = dice_loss(&pred, &gt, 1.0, DICE_SCALE).unwrap();
        assert!((scaled - unit * DICE_SCALE).abs() < 1e-9);
    }

    #[test]
    fn dice_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = BinaryMask::from_fn(4, 4, |_, _| rng.gen_bool(0.5)).unwrap();
        let pred: Vec<f64> = (0..16).map(|_| rng.gen_range(0.05..0.95)).collect();
        let (_, grad) = dice_loss(&pred, &gt, 1.0, DICE_SCALE).unwrap();
        let err = finite_diff_grad_check(
            |x| dice_loss(x, &gt, 1.0, DICE_SCALE).unwrap().0,
            &grad,
            &pred,
            1e-5,
        );
        assert!(err < 1e-5, "rel err = {err}");
    }

    #[test]
    fn bce_uniform_half_is_ln2() {
        let gt = BinaryMask::from_fn(2, 2, |r, _| r == 0).unwrap();
        let (loss, _) = bce_loss(&[0.5; 4], &gt).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_bounded_by_clamp() {
        let gt = BinaryMask::from_fn(2, 2, |r, _| r == 0).unwrap();
        let pred: Vec<f64> = gt.pixels().iter().map(|&g| g as u8 as f64).collect();
        let (loss, _) = bce_loss(&pred, &gt).unwrap();
        assert!(loss <= -(1.0 - BCE_EPSILON).ln() + 1e-15);
        assert!(loss > 0.0);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gt = BinaryMask::from_fn(4, 4, |_, _| rng.gen_bool(0.5)).unwrap();
        let pred: Vec<f64> = (0..16).map(|_| rng.gen_range(0.05..0.95)).collect();
        let (_, grad) = bce_loss(&pred, &gt).unwrap();
        let err = finite_diff_grad_check(|x| bce_loss(x, &gt).unwrap().0, &grad, &pred, 1e-6);
        assert!(err < 1e-6, "rel err = {err}");
    }

    #[test]
    fn combined_objective_default_weights() {
        let w = LossWeights::default();
        let total = combined_objective(1.0, 1.0, 1.0, 1.0, 1.0, &w).unwrap();
        assert!((total - 13.1).abs() < 1e-12);
    }

    #[test]
    fn combined_objective_zero_weights_passes_lm_through() {
        let w = LossWeights {
            lambda_span: 0.0,
            lambda_kl: 0.0,
            lambda_seg: 0.0,
            lambda_bce: 0.0,
            ..LossWeights::default()
        };
        let total = combined_objective(0.37, 5.0, 5.0, 5.0, 5.0, &w).unwrap();
        assert_eq!(total, 0.37);
    }

    #[test]
    fn combined_objective_rejects_non_finite() {
        let w = LossWeights::default();
        assert!(matches!(
            combined_objective(f64::NAN, 0.0, 0.0, 0.0, 0.0, &w),
            Err(LossError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn weights_validation() {
        let mut w = LossWeights::default();
        assert!(w.validate().is_ok());
        w.alpha = 1.5;
        assert!(w.validate().is_err());
        w.alpha = 0.7;
        w.gamma = 0.5;
        assert!(w.validate().is_err());
    }
}
