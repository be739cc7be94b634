//! Per-part logistic regressors over part co-occurrence.
//!
//! One regressor per target part predicts how likely that part is given an
//! observed part set. Supervision is leave-one-out: every observed set `S`
//! containing the target `p` yields a positive with features
//! `indicator(S \ {p})`, and for each positive one negative is drawn
//! uniformly from the sets that do not contain `p`. Fitting is full-batch
//! gradient descent on the mean log-loss with an L2 penalty on the
//! non-bias weights, stopped when the gradient infinity-norm falls below
//! the tolerance.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::derive_seed;

#[derive(Debug, Error)]
pub enum CoocError {
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CoocConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Keep the per-step log-loss curve in the training report.
    pub record_loss: bool,
}

impl Default for CoocConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.1,
            tolerance: 1e-6,
            max_iters: 5000,
            seed: 42,
            record_loss: false,
        }
    }
}

/// Vocabulary plus one weight row per target part.
///
/// Row `j` holds the coefficients of part `vocabulary[j]`'s regressor over
/// indicator features in vocabulary order, with the bias last. Parts whose
/// supervision was degenerate (present in every set or in none) keep their
/// zero prior and are listed in `degenerate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct CooccurrenceModel {
    vocabulary: Vec<String>,
    weights: Vec<Vec<f64>>,
    degenerate: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    vocabulary: Vec<String>,
    weights: Vec<Vec<f64>>,
    #[serde(default)]
    degenerate: BTreeSet<String>,
}

impl TryFrom<ModelRepr> for CooccurrenceModel {
    type Error = CoocError;

    fn try_from(repr: ModelRepr) -> Result<Self, CoocError> {
        let v = repr.vocabulary.len();
        if repr.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoocError::MalformedModel(
                "vocabulary must be sorted and free of duplicates".to_string(),
            ));
        }
        if repr.weights.len() != v {
            return Err(CoocError::MalformedModel(format!(
                "{} weight rows for {v} vocabulary entries",
                repr.weights.len()
            )));
        }
        for (j, row) in repr.weights.iter().enumerate() {
            if row.len() != v + 1 {
                return Err(CoocError::MalformedModel(format!(
                    "row {j} has {} coefficients, expected {}",
                    row.len(),
                    v + 1
                )));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(CoocError::MalformedModel(format!(
                    "row {j} contains a non-finite weight"
                )));
            }
        }
        Ok(Self {
            vocabulary: repr.vocabulary,
            weights: repr.weights,
            degenerate: repr.degenerate,
        })
    }
}

impl From<CooccurrenceModel> for ModelRepr {
    fn from(m: CooccurrenceModel) -> Self {
        Self {
            vocabulary: m.vocabulary,
            weights: m.weights,
            degenerate: m.degenerate,
        }
    }
}

impl CooccurrenceModel {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn degenerate_parts(&self) -> &BTreeSet<String> {
        &self.degenerate
    }

    fn index_of(&self, part: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|v| v.as_str().cmp(part)).ok()
    }

    /// Probability that `target` belongs with the given active part indices.
    fn score(&self, target_idx: usize, active: &[usize]) -> f64 {
        let row = &self.weights[target_idx];
        let bias = row[self.vocabulary.len()];
        let z = active.iter().map(|&i| row[i]).sum::<f64>() + bias;
        sigmoid(z)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable mean log-loss of a linear model over sparse examples.
fn mean_log_loss(weights: &[f64], bias_idx: usize, examples: &[(Vec<usize>, f64)]) -> f64 {
    let mut total = 0.0;
    for (active, y) in examples {
        let z = active.iter().map(|&i| weights[i]).sum::<f64>() + weights[bias_idx];
        // ln(1 + e^z) - y z, computed without overflow.
        total += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
    }
    total / examples.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct PartTrainStats {
    pub label: String,
    pub iterations: usize,
    pub degenerate: bool,
    pub final_log_loss: Option<f64>,
    /// Log-loss before each step plus the final value; present when
    /// `record_loss` is set.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub log_loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub per_part: Vec<PartTrainStats>,
}

/// Fits one logistic regressor per part over the observed part sets.
pub fn train_cooccurrence(
    part_sets: &[BTreeSet<String>],
    config: &CoocConfig,
) -> Result<(CooccurrenceModel, TrainReport), CoocError> {
    let mut vocab_set = BTreeSet::new();
    for set in part_sets {
        vocab_set.extend(set.iter().cloned());
    }
    let vocabulary: Vec<String> = vocab_set.into_iter().collect();
    if vocabulary.len() < 2 {
        return Err(CoocError::DegenerateData(format!(
            "need at least 2 distinct parts, got {}",
            vocabulary.len()
        )));
    }
    let index: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let indexed_sets: Vec<Vec<usize>> = part_sets
        .iter()
        .map(|set| set.iter().map(|p| index[p.as_str()]).collect())
        .collect();

    let v = vocabulary.len();
    let mut weights = vec![vec![0.0; v + 1]; v];
    let mut degenerate = BTreeSet::new();
    let mut report = Vec::with_capacity(v);

    for (j, part) in vocabulary.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[b"cooc-negatives", part.as_bytes()],
        ));

        let positives: Vec<Vec<usize>> = indexed_sets
            .iter()
            .filter(|s| s.contains(&j))
            .map(|s| s.iter().copied().filter(|&i| i != j).collect())
            .collect();
        let negative_pool: Vec<&Vec<usize>> =
            indexed_sets.iter().filter(|s| !s.contains(&j)).collect();

        if positives.is_empty() || negative_pool.is_empty() {
            degenerate.insert(part.clone());
            report.push(PartTrainStats {
                label: part.clone(),
                iterations: 0,
                degenerate: true,
                final_log_loss: None,
                log_loss_curve: Vec::new(),
            });
            continue;
        }

        let mut examples: Vec<(Vec<usize>, f64)> = Vec::with_capacity(2 * positives.len());
        for pos in &positives {
            examples.push((pos.clone(), 1.0));
            let pick = rng.gen_range(0..negative_pool.len());
            examples.push((negative_pool[pick].clone(), 0.0));
        }

        let w = &mut weights[j];
        let n = examples.len() as f64;
        let mut curve = Vec::new();
        if config.record_loss {
            curve.push(mean_log_loss(w, v, &examples));
        }
        let mut iterations = 0;
        for _ in 0..config.max_iters {
            let mut grad = vec![0.0; v + 1];
            for (active, y) in &examples {
                let z = active.iter().map(|&i| w[i]).sum::<f64>() + w[v];
                let coeff = (sigmoid(z) - y) / n;
                for &i in active {
                    grad[i] += coeff;
                }
                grad[v] += coeff;
            }
            for i in 0..v {
                grad[i] += config.l2 * w[i];
            }
            let inf_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if inf_norm < config.tolerance {
                break;
            }
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= config.learning_rate * gi;
            }
            iterations += 1;
            if config.record_loss {
                curve.push(mean_log_loss(w, v, &examples));
            }
        }
        report.push(PartTrainStats {
            label: part.clone(),
            iterations,
            degenerate: false,
            final_log_loss: Some(mean_log_loss(w, v, &examples)),
            log_loss_curve: curve,
        });
    }

    Ok((
        CooccurrenceModel {
            vocabulary,
            weights,
            degenerate,
        },
        TrainReport { per_part: report },
    ))
}

/// Ranks parts outside `current ∪ exclude` by predicted co-occurrence
/// probability, descending, ties broken lexicographically. Parts of
/// `current` that are outside the vocabulary are ignored with a warning.
pub fn predict_likely_parts(
    model: &CooccurrenceModel,
    current: &BTreeSet<String>,
    k: usize,
    exclude: &BTreeSet<String>,
) -> Vec<(String, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut active = Vec::new();
    for part in current {
        match model.index_of(part) {
            Some(i) => active.push(i),
            None => log::warn!(
                target: "cooc",
                "part {part:?} is outside the model vocabulary; ignored"
            ),
        }
    }
    let mut scored: Vec<(String, f64)> = model
        .vocabulary
        .iter()
        .enumerate()
        .filter(|(_, p)| !current.contains(*p) && !exclude.contains(*p))
        .map(|(i, p)| (p.clone(), model.score(i, &active)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    /// Synthetic sets over a small vocabulary where "wing" always implies
    /// "propeller".
    fn planted_sets(n: usize, seed: u64) -> Vec<BTreeSet<String>> {
        let vocab = ["cockpit", "propeller", "tail", "wheel", "wing"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut s: BTreeSet<String> = vocab
                    .iter()
                    .filter(|_| rng.gen_bool(0.4))
                    .map(|p| p.to_string())
                    .collect();
                if s.contains("wing") {
                    s.insert("propeller".to_string());
                }
                if s.is_empty() {
                    s.insert("wheel".to_string());
                }
                s
            })
            .collect()
    }

    #[test]
    fn single_part_vocabulary_is_degenerate() {
        let sets = vec![set(&["wing"]), set(&["wing"])];
        assert!(matches!(
            train_cooccurrence(&sets, &CoocConfig::default()),
            Err(CoocError::DegenerateData(_))
        ));
    }

    #[test]
    fn zero_iterations_leave_weights_at_zero() {
        let sets = planted_sets(50, 1);
        let config = CoocConfig {
            max_iters: 0,
            ..CoocConfig::default()
        };
        let (model, _) = train_cooccurrence(&sets, &config).unwrap();
        for row in model.weights() {
            assert!(row.iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn all_zero_weights_rank_lexicographically() {
        let sets = planted_sets(50, 2);
        let config = CoocConfig {
            max_iters: 0,
            ..CoocConfig::default()
        };
        let (model, _) = train_cooccurrence(&sets, &config).unwrap();
        let ranked = predict_likely_parts(&model, &set(&["wing"]), 10, &BTreeSet::new());
        let labels: Vec<&str> = ranked.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(labels, ["cockpit", "propeller", "tail", "wheel"]);
        assert!(ranked.iter().all(|&(_, s)| s == 0.5));
    }

    #[test]
    fn planted_correlate_is_recovered_top_one() {
        let sets = planted_sets(500, 3);
        let (model, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        let ranked = predict_likely_parts(&model, &set(&["wing"]), 1, &BTreeSet::new());
        assert_eq!(ranked[0].0, "propeller");
    }

    #[test]
    fn prediction_never_returns_current_or_excluded() {
        let sets = planted_sets(100, 4);
        let (model, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        let current = set(&["wing", "tail"]);
        let exclude = set(&["wheel"]);
        let ranked = predict_likely_parts(&model, &current, 10, &exclude);
        for (p, _) in &ranked {
            assert!(!current.contains(p) && !exclude.contains(p));
        }
    }

    #[test]
    fn k_zero_returns_nothing() {
        let sets = planted_sets(50, 5);
        let (model, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        assert!(predict_likely_parts(&model, &set(&["wing"]), 0, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn part_in_every_set_is_flagged_not_fatal() {
        let sets = vec![
            set(&["hull", "oar"]),
            set(&["hull", "seat"]),
            set(&["hull", "oar", "seat"]),
        ];
        let (model, report) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        assert!(model.degenerate_parts().contains("hull"));
        let hull_idx = model.vocabulary().iter().position(|p| p == "hull").unwrap();
        assert!(model.weights()[hull_idx].iter().all(|&w| w == 0.0));
        let stats = report.per_part.iter().find(|s| s.label == "hull").unwrap();
        assert!(stats.degenerate);
    }

    #[test]
    fn log_loss_is_non_increasing_with_safe_step() {
        let sets = planted_sets(200, 6);
        // Step below 1 / L with L = max ||x||^2 / 4 for plain log-loss.
        let max_active = sets.iter().map(|s| s.len()).max().unwrap() as f64;
        let config = CoocConfig {
            l2: 0.0,
            learning_rate: 1.0 / ((max_active + 1.0) / 4.0),
            max_iters: 300,
            record_loss: true,
            ..CoocConfig::default()
        };
        let (_, report) = train_cooccurrence(&sets, &config).unwrap();
        for stats in &report.per_part {
            for pair in stats.log_loss_curve.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "{}: {} -> {}",
                    stats.label,
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let sets = planted_sets(100, 7);
        let (m1, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        let (m2, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn model_json_roundtrip_and_validation() {
        let sets = planted_sets(50, 8);
        let (model, _) = train_cooccurrence(&sets, &CoocConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: CooccurrenceModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);

        let bad = r#"{"vocabulary":["a","b"],"weights":[[0.0,0.0,0.0]]}"#;
        assert!(serde_json::from_str::<CooccurrenceModel>(bad).is_err());
    }
}
