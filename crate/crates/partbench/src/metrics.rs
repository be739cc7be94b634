//! Scoring of model responses: answer-choice selection from token
//! log-probabilities, part precision/recall, and micro/macro gIoU.
//!
//! micro-gIoU is the flat mean IoU over every (predicted, ground-truth)
//! mask pair; macro-gIoU first averages the pairs of each image, then
//! averages those per-image means. Missing predicted masks score 0.
//! All means use compensated (Kahan) summation in a fixed order, so
//! reports are bit-stable however the per-question work is scheduled.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gen::{QuestionRecord, QuestionType};
use crate::mask::{iou, rle_decode, MaskError, MaskRle};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("a choice has an empty log-probability sequence")]
    EmptySequence,
    #[error("ground-truth part set is empty")]
    EmptyGroundTruth,
    #[error("no input pairs to average")]
    EmptyInput,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// A model's answer to one question.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResponseRecord {
    pub qid: String,
    /// Per-choice token log-probabilities for the five part choices.
    pub part_logprobs: Vec<Vec<f64>>,
    /// Present for part-whole questions: the five object choices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_logprobs: Option<Vec<Vec<f64>>>,
    /// Predicted mask per ground-truth part name.
    #[serde(default)]
    pub masks: BTreeMap<String, MaskRle>,
}

/// How a choice's token log-probabilities collapse to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChoiceScoring {
    /// Mean negative log-probability per token (length-normalized).
    #[default]
    MeanNll,
    /// Summed negative log-probability (raw sequence likelihood).
    SumNll,
}

/// Picks the choice with the lowest negative log-likelihood score;
/// ties resolve to the lowest index.
pub fn select_choice(
    sequences: &[Vec<f64>],
    scoring: ChoiceScoring,
) -> Result<usize, MetricsError> {
    if sequences.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let mut best = 0usize;
    let mut best_score = f64::INFINITY;
    for (i, seq) in sequences.iter().enumerate() {
        if seq.is_empty() {
            return Err(MetricsError::EmptySequence);
        }
        let nll: f64 = seq.iter().map(|lp| -lp).sum();
        let score = match scoring {
            ChoiceScoring::MeanNll => nll / seq.len() as f64,
            ChoiceScoring::SumNll => nll,
        };
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

/// Precision and recall of a predicted part set against the ground truth.
/// An empty prediction has precision 0 by convention.
pub fn part_precision_recall(
    pred: &std::collections::BTreeSet<String>,
    gt: &std::collections::BTreeSet<String>,
) -> Result<(f64, f64), MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let inter = pred.intersection(gt).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        inter / pred.len() as f64
    };
    let recall = inter / gt.len() as f64;
    Ok((precision, recall))
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

fn kahan_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut acc = KahanSum::default();
    for &v in values {
        acc.add(v);
    }
    Some(acc.value() / values.len() as f64)
}

/// One (predicted, ground-truth) mask pair; a `None` prediction means the
/// model produced no mask for a required part and scores 0.
#[derive(Debug, Clone, Copy)]
pub struct MaskPair<'a> {
    pub pred: Option<&'a MaskRle>,
    pub gt: &'a MaskRle,
}

/// IoU of one pair, with the missing-prediction convention.
pub fn pair_iou(pair: MaskPair<'_>) -> Result<f64, MaskError> {
    match pair.pred {
        None => Ok(0.0),
        Some(pred) => iou(&rle_decode(pred), &rle_decode(pair.gt)),
    }
}

/// Flat mean IoU over all pairs.
pub fn micro_giou(pairs: &[MaskPair<'_>]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut acc = KahanSum::default();
    for &pair in pairs {
        acc.add(pair_iou(pair)?);
    }
    Ok(acc.value() / pairs.len() as f64)
}

/// Mean over images of that image's mean pair IoU.
pub fn macro_giou(
    groups: &BTreeMap<String, Vec<MaskPair<'_>>>,
) -> Result<f64, MetricsError> {
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut outer = KahanSum::default();
    for pairs in groups.values() {
        if pairs.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mut inner = KahanSum::default();
        for &pair in pairs {
            inner.add(pair_iou(pair)?);
        }
        outer.add(inner.value() / pairs.len() as f64);
    }
    Ok(outer.value() / groups.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    UnknownQuestionId,
    DuplicateQuestion,
    DuplicateResponse,
    MalformedResponse,
    MaskDimensionMismatch,
}

/// A per-record problem found while evaluating; never fatal.
#[derive(Debug, Clone, Serialize)]
pub struct EvalIssue {
    pub qid: String,
    pub kind: IssueKind,
    pub message: String,
}

/// Aggregates for one question type.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TypeMetrics {
    pub questions: usize,
    pub skipped: usize,
    pub part_correct: usize,
    pub part_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object_correct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object_accuracy: Option<f64>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_giou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_giou: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<QuestionType, TypeMetrics>,
    pub issues: Vec<EvalIssue>,
}

impl EvalReport {
    /// Fixed-width table, one row per question type.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>6} {:>5} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9}\n",
            "type", "n", "skip", "acc", "objacc", "P", "R", "microIoU", "macroIoU"
        ));
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "-".to_string(),
        };
        for (qtype, m) in &self.per_type {
            out.push_str(&format!(
                "{:<6} {:>6} {:>5} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9}\n",
                qtype.code(),
                m.questions,
                m.skipped,
                format!("{:.4}", m.part_accuracy),
                fmt(m.object_accuracy),
                format!("{:.4}", m.mean_precision),
                format!("{:.4}", m.mean_recall),
                fmt(m.micro_giou),
                fmt(m.macro_giou),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub scoring: ChoiceScoring,
}

struct QuestionOutcome {
    image_id: String,
    qtype: QuestionType,
    answered: bool,
    part_correct: bool,
    object_correct: Option<bool>,
    precision: f64,
    recall: f64,
    ious: Vec<f64>,
    issues: Vec<EvalIssue>,
}

fn skip_outcome(question: &QuestionRecord, issues: Vec<EvalIssue>) -> QuestionOutcome {
    QuestionOutcome {
        image_id: question.image_id.clone(),
        qtype: question.question_type,
        answered: false,
        part_correct: false,
        object_correct: question.question_type.has_object_half().then_some(false),
        precision: 0.0,
        recall: 0.0,
        ious: vec![0.0; question.gt_parts.len()],
        issues,
    }
}

fn validate_block(sequences: &[Vec<f64>], name: &str) -> Result<(), String> {
    if sequences.len() != 5 {
        return Err(format!("{name} has {} sequences, expected 5", sequences.len()));
    }
    for (i, seq) in sequences.iter().enumerate() {
        if seq.is_empty() {
            return Err(format!("{name}[{i}] is empty"));
        }
        if let Some(bad) = seq.iter().find(|lp| **lp > 0.0 || !lp.is_finite()) {
            return Err(format!("{name}[{i}] contains invalid log-probability {bad}"));
        }
    }
    Ok(())
}

fn score_question(
    question: &QuestionRecord,
    response: Option<&ResponseRecord>,
    options: EvalOptions,
) -> QuestionOutcome {
    let Some(response) = response else {
        return skip_outcome(question, Vec::new());
    };
    let malformed = |message: String| {
        skip_outcome(
            question,
            vec![EvalIssue {
                qid: question.id.clone(),
                kind: IssueKind::MalformedResponse,
                message,
            }],
        )
    };

    if let Err(m) = validate_block(&response.part_logprobs, "part_logprobs") {
        return malformed(m);
    }
    let object_selected = if question.question_type.has_object_half() {
        match &response.object_logprobs {
            None => return malformed("object_logprobs missing for a part-whole question".into()),
            Some(block) => {
                if let Err(m) = validate_block(block, "object_logprobs") {
                    return malformed(m);
                }
                Some(select_choice(block, options.scoring).expect("validated non-empty"))
            }
        }
    } else {
        None
    };

    let selected =
        select_choice(&response.part_logprobs, options.scoring).expect("validated non-empty");
    let part_correct = selected == question.correct_part_index;
    let gt_set = question.gt_part_set();
    let pred_set: std::collections::BTreeSet<String> = question
        .part_choice_sets
        .get(selected)
        .map(|s| s.iter().cloned().collect())
        .unwrap_or_default();
    let (precision, recall) =
        part_precision_recall(&pred_set, &gt_set).expect("generated gt is non-empty");

    let mut issues = Vec::new();
    let mut ious = Vec::with_capacity(question.gt_parts.len());
    for part in &question.gt_parts {
        let gt_mask = &question.gt_masks[part];
        match response.masks.get(part) {
            None => ious.push(0.0),
            Some(pred) if pred.dims() != gt_mask.dims() => {
                issues.push(EvalIssue {
                    qid: question.id.clone(),
                    kind: IssueKind::MaskDimensionMismatch,
                    message: format!(
                        "mask for {part:?} is {}x{}, expected {}x{}",
                        pred.height(),
                        pred.width(),
                        gt_mask.height(),
                        gt_mask.width()
                    ),
                });
                ious.push(0.0);
            }
            Some(pred) => {
                let value = pair_iou(MaskPair {
                    pred: Some(pred),
                    gt: gt_mask,
                })
                .expect("dims checked");
                ious.push(value);
            }
        }
    }

    QuestionOutcome {
        image_id: question.image_id.clone(),
        qtype: question.question_type,
        answered: true,
        part_correct,
        object_correct: object_selected.map(|s| Some(s) == question.correct_object_index),
        precision,
        recall,
        ious,
        issues,
    }
}

/// Scores all responses against their questions and aggregates per
/// question type. Unmatched or malformed responses are reported as issues;
/// unanswered questions count as skips and score zero.
pub fn evaluate(
    questions: &[QuestionRecord],
    responses: &[ResponseRecord],
    options: EvalOptions,
) -> EvalReport {
    let mut issues = Vec::new();

    let mut question_map: BTreeMap<&str, &QuestionRecord> = BTreeMap::new();
    for q in questions {
        if question_map.insert(q.id.as_str(), q).is_some() {
            issues.push(EvalIssue {
                qid: q.id.clone(),
                kind: IssueKind::DuplicateQuestion,
                message: "duplicate question id; the last occurrence wins".to_string(),
            });
        }
    }
    let mut response_map: BTreeMap<&str, &ResponseRecord> = BTreeMap::new();
    for r in responses {
        if !question_map.contains_key(r.qid.as_str()) {
            issues.push(EvalIssue {
                qid: r.qid.clone(),
                kind: IssueKind::UnknownQuestionId,
                message: "response does not match any question".to_string(),
            });
            continue;
        }
        if response_map.insert(r.qid.as_str(), r).is_some() {
            issues.push(EvalIssue {
                qid: r.qid.clone(),
                kind: IssueKind::DuplicateResponse,
                message: "duplicate response; the last occurrence wins".to_string(),
            });
        }
    }

    // Score in parallel, then aggregate in the map's fixed order.
    let outcomes: Vec<QuestionOutcome> = question_map
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| score_question(q, response_map.get(q.id.as_str()).copied(), options))
        .collect();

    let mut report = EvalReport::default();
    report.issues = issues;
    for outcome in &outcomes {
        report.issues.extend(outcome.issues.iter().cloned());
    }

    for qtype in QuestionType::ALL {
        let of_type: Vec<&QuestionOutcome> =
            outcomes.iter().filter(|o| o.qtype == qtype).collect();
        if of_type.is_empty() {
            continue;
        }
        let questions_n = of_type.len();
        let skipped = of_type.iter().filter(|o| !o.answered).count();
        let part_correct = of_type.iter().filter(|o| o.part_correct).count();
        let mut precision = KahanSum::default();
        let mut recall = KahanSum::default();
        for o in &of_type {
            precision.add(o.precision);
            recall.add(o.recall);
        }

        let flat: Vec<f64> = of_type.iter().flat_map(|o| o.ious.iter().copied()).collect();
        let micro = kahan_mean(&flat);
        let mut by_image: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for o in &of_type {
            if !o.ious.is_empty() {
                by_image
                    .entry(o.image_id.as_str())
                    .or_default()
                    .extend(o.ious.iter().copied());
            }
        }
        let macro_ = if by_image.is_empty() {
            None
        } else {
            let mut outer = KahanSum::default();
            for ious in by_image.values() {
                outer.add(kahan_mean(ious).expect("non-empty group"));
            }
            Some(outer.value() / by_image.len() as f64)
        };

        let has_object = qtype.has_object_half();
        let object_correct = has_object
            .then(|| of_type.iter().filter(|o| o.object_correct == Some(true)).count());

        report.per_type.insert(
            qtype,
            TypeMetrics {
                questions: questions_n,
                skipped,
                part_correct,
                part_accuracy: part_correct as f64 / questions_n as f64,
                object_correct,
                object_accuracy: object_correct.map(|c| c as f64 / questions_n as f64),
                mean_precision: precision.value() / questions_n as f64,
                mean_recall: recall.value() / questions_n as f64,
                micro_giou: micro,
                macro_giou: macro_,
            },
        );
    }
    report
}
