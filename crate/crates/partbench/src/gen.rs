//! Five-way multiple-choice question generation with mutated hard-negative
//! answer choices.
//!
//! For every image the primary instance is selected and at most one
//! question per enabled type is emitted. Wrong part answers are produced
//! by mutating the ground-truth set (add / remove / replace) with mutation
//! sources ranked by the co-occurrence model and restricted to the
//! instance's category part pool when that pool is non-empty. Wrong object
//! answers are the embedding table's nearest labels.
//!
//! Prompt templates, by question type:
//!
//! - identification: `What visible parts does the <object> in the image have?`
//! - intersection: `Which visible parts does the <object> in the image have in common with a <comparator>?`
//! - difference: `Which visible parts does the <object> in the image have that a <comparator> does not have?`
//! - part_to_whole: `Select the visible parts of the object in the image, then select the object based on those parts.`
//! - whole_to_part: `Select the object in the image, then select its visible parts.`
//!
//! Part choices for the two part-whole types render the object as the
//! word "object" so the choice text does not leak the object answer.
//!
//! Every question derives its own RNG stream from
//! `hash(seed, image id, question type)`, so output is independent of
//! image order and parallel scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooc::{predict_likely_parts, CooccurrenceModel};
use crate::dataset::{select_primary_instance, Instance, PartDataset};
use crate::embed::{EmbedError, EmbeddingTable};
use crate::hashing::derive_seed;
use crate::mask::MaskRle;
use crate::ontology::Ontology;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("ground-truth part set is empty")]
    EmptyGroundTruth,
    #[error("no other object shares a part with this instance")]
    NoComparator,
    #[error("comparator label required for intersection/difference questions")]
    MissingComparator,
    #[error("no legal mutation found within {attempts} attempts")]
    MutationExhausted { attempts: usize },
    #[error("question types {0:?} need an embedding table")]
    MissingEmbeddings(Vec<QuestionType>),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Identification,
    Intersection,
    Difference,
    PartToWhole,
    WholeToPart,
}

impl QuestionType {
    pub const ALL: [QuestionType; 5] = [
        QuestionType::Identification,
        QuestionType::Intersection,
        QuestionType::Difference,
        QuestionType::PartToWhole,
        QuestionType::WholeToPart,
    ];

    pub fn code(self) -> &'static str {
        match self {
            QuestionType::Identification => "id",
            QuestionType::Intersection => "int",
            QuestionType::Difference => "diff",
            QuestionType::PartToWhole => "p2w",
            QuestionType::WholeToPart => "w2p",
        }
    }

    pub fn parse_code(s: &str) -> Option<Self> {
        match s.trim() {
            "id" | "identification" => Some(QuestionType::Identification),
            "int" | "intersection" => Some(QuestionType::Intersection),
            "diff" | "difference" => Some(QuestionType::Difference),
            "p2w" | "part_to_whole" => Some(QuestionType::PartToWhole),
            "w2p" | "whole_to_part" => Some(QuestionType::WholeToPart),
            _ => None,
        }
    }

    /// Does this type also ask for the object label?
    pub fn has_object_half(self) -> bool {
        matches!(self, QuestionType::PartToWhole | QuestionType::WholeToPart)
    }

    pub fn needs_comparator(self) -> bool {
        matches!(self, QuestionType::Intersection | QuestionType::Difference)
    }
}

/// One generated question.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub image_id: String,
    pub question_type: QuestionType,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator_label: Option<String>,
    /// The five rendered part answer choices.
    pub part_choices: Vec<String>,
    /// The part set behind each rendered choice, in choice order.
    pub part_choice_sets: Vec<Vec<String>>,
    pub correct_part_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_object_index: Option<usize>,
    pub gt_parts: Vec<String>,
    pub gt_masks: BTreeMap<String, MaskRle>,
}

impl QuestionRecord {
    pub fn gt_part_set(&self) -> BTreeSet<String> {
        self.gt_parts.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub types: Vec<QuestionType>,
    /// How many ranked candidate parts mutation operations draw from.
    pub top_k: usize,
    /// Attempt budget for finding a legal mutation or a distinct distractor.
    pub retry_budget: usize,
    /// Mutations per distractor are drawn uniformly from 1..=max_mutations.
    pub max_mutations: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            types: QuestionType::ALL.to_vec(),
            top_k: 10,
            retry_budget: 32,
            max_mutations: 3,
        }
    }
}

/// A question that was skipped, with the reason; `question_type` is `None`
/// when the whole image was skipped.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedQuestion {
    pub image_id: String,
    pub question_type: Option<QuestionType>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GenOutput {
    pub questions: Vec<QuestionRecord>,
    pub skips: Vec<SkippedQuestion>,
}

/// Ground truth for one (instance, question type) pair: the part set and,
/// for part-whole types, the object label.
pub fn build_ground_truth(
    instance: &Instance,
    qtype: QuestionType,
    comparator: Option<&str>,
    ontology: &Ontology,
) -> Result<(BTreeSet<String>, Option<String>), GenError> {
    let annotated: BTreeSet<String> = instance.parts.keys().cloned().collect();
    if annotated.is_empty() {
        return Err(GenError::EmptyGroundTruth);
    }
    let parts = match qtype {
        QuestionType::Identification | QuestionType::PartToWhole | QuestionType::WholeToPart => {
            annotated
        }
        QuestionType::Intersection | QuestionType::Difference => {
            let comparator = comparator.ok_or(GenError::MissingComparator)?;
            let other = ontology
                .parts_of(comparator)
                .cloned()
                .unwrap_or_default();
            if qtype == QuestionType::Intersection {
                crate::ontology::shared_parts(&annotated, &other)
            } else {
                crate::ontology::part_difference(&annotated, &other)
            }
        }
    };
    if parts.is_empty() {
        return Err(GenError::EmptyGroundTruth);
    }
    let gt_object = qtype.has_object_half().then(|| instance.label.clone());
    Ok((parts, gt_object))
}

/// Uniformly samples a comparator object that shares at least one part
/// with the instance's annotated parts. Objects from the instance's own
/// category are preferred when any qualify.
pub fn sample_comparator(
    instance: &Instance,
    ontology: &Ontology,
    rng: &mut ChaCha8Rng,
) -> Result<String, GenError> {
    let annotated: BTreeSet<String> = instance.parts.keys().cloned().collect();
    let category = ontology.category_of(&instance.label);
    let mut candidates = Vec::new();
    let mut same_category = Vec::new();
    for object in ontology.objects() {
        if object == instance.label {
            continue;
        }
        let overlaps = ontology
            .parts_of(object)
            .is_some_and(|parts| parts.iter().any(|p| annotated.contains(p)));
        if overlaps {
            candidates.push(object);
            if category.is_some() && ontology.category_of(object) == category {
                same_category.push(object);
            }
        }
    }
    let pool = if same_category.is_empty() {
        &candidates
    } else {
        &same_category
    };
    if pool.is_empty() {
        return Err(GenError::NoComparator);
    }
    Ok(pool[rng.gen_range(0..pool.len())].to_string())
}

/// Ranked mutation sources for the current working set: likely parts under
/// the model, restricted to the category pool when it is non-empty.
fn mutation_candidates(
    model: &CooccurrenceModel,
    working: &BTreeSet<String>,
    category_pool: &BTreeSet<String>,
    top_k: usize,
) -> Vec<String> {
    let exclude: BTreeSet<String> = if category_pool.is_empty() {
        BTreeSet::new()
    } else {
        model
            .vocabulary()
            .iter()
            .filter(|p| !category_pool.contains(*p))
            .cloned()
            .collect()
    };
    predict_likely_parts(model, working, top_k, &exclude)
        .into_iter()
        .map(|(p, _)| p)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MutationOp {
    Add,
    Remove,
    Replace,
}

/// Applies `n_mut` mutation operations to the ground-truth set. The result
/// is never empty and never set-equal to the ground truth; if no legal
/// outcome is found within the retry budget, `MutationExhausted` is
/// returned.
pub fn mutate_answer(
    gt: &BTreeSet<String>,
    model: &CooccurrenceModel,
    category_pool: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
    n_mut: usize,
    config: &GenConfig,
) -> Result<BTreeSet<String>, GenError> {
    assert!(n_mut >= 1, "n_mut must be at least 1");
    assert!(!gt.is_empty(), "ground truth must be non-empty");

    for _ in 0..config.retry_budget {
        let mut working = gt.clone();
        let mut applied = 0;
        for _ in 0..n_mut {
            let mut ops = [MutationOp::Add, MutationOp::Remove, MutationOp::Replace];
            ops.shuffle(rng);
            let mut done = false;
            for op in ops {
                if apply_mutation(op, &mut working, model, category_pool, rng, config) {
                    done = true;
                    break;
                }
            }
            if !done {
                break;
            }
            applied += 1;
        }
        if applied == n_mut && !working.is_empty() && working != *gt {
            return Ok(working);
        }
    }
    Err(GenError::MutationExhausted {
        attempts: config.retry_budget,
    })
}

fn apply_mutation(
    op: MutationOp,
    working: &mut BTreeSet<String>,
    model: &CooccurrenceModel,
    category_pool: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
    config: &GenConfig,
) -> bool {
    match op {
        MutationOp::Add => {
            let candidates = mutation_candidates(model, working, category_pool, config.top_k);
            if candidates.is_empty() {
                return false;
            }
            let pick = candidates[rng.gen_range(0..candidates.len())].clone();
            working.insert(pick)
        }
        MutationOp::Remove => {
            if working.len() < 2 {
                return false;
            }
            let members: Vec<&String> = working.iter().collect();
            let victim = members[rng.gen_range(0..members.len())].clone();
            working.remove(&victim)
        }
        MutationOp::Replace => {
            if working.is_empty() {
                return false;
            }
            let members: Vec<&String> = working.iter().collect();
            let victim = members[rng.gen_range(0..members.len())].clone();
            let mut reduced = working.clone();
            reduced.remove(&victim);
            let candidates: Vec<String> =
                mutation_candidates(model, &reduced, category_pool, config.top_k)
                    .into_iter()
                    .filter(|p| p != &victim)
                    .collect();
            if candidates.is_empty() {
                return false;
            }
            let pick = candidates[rng.gen_range(0..candidates.len())].clone();
            working.remove(&victim);
            working.insert(pick);
            true
        }
    }
}

/// Produces four pairwise-distinct distractor part sets, each differing
/// from the ground truth, with 1..=max_mutations mutations apiece.
pub fn generate_distractors(
    gt: &BTreeSet<String>,
    model: &CooccurrenceModel,
    category_pool: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
    config: &GenConfig,
) -> Result<Vec<BTreeSet<String>>, GenError> {
    let mut out: Vec<BTreeSet<String>> = Vec::with_capacity(4);
    for _ in 0..4 {
        let mut found = false;
        for _ in 0..config.retry_budget {
            let n_mut = rng.gen_range(1..=config.max_mutations);
            let Ok(candidate) = mutate_answer(gt, model, category_pool, rng, n_mut, config)
            else {
                continue;
            };
            if out.iter().all(|d| d != &candidate) {
                out.push(candidate);
                found = true;
                break;
            }
        }
        if !found {
            return Err(GenError::MutationExhausted {
                attempts: config.retry_budget,
            });
        }
    }
    Ok(out)
}

fn join_oxford(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => (*one).to_string(),
        [a, b] => format!("{a} and {b}"),
        many => {
            let (last, rest) = many.split_last().expect("len >= 3");
            format!("{}, and {last}", rest.join(", "))
        }
    }
}

/// Renders a part set as an answer-choice sentence, parts in lexicographic
/// order.
pub fn render_parts_choice(parts: &BTreeSet<String>, object_display: &str) -> String {
    let items: Vec<&str> = parts.iter().map(String::as_str).collect();
    format!(
        "The {object_display} in the image has {}.",
        join_oxford(&items)
    )
}

/// The prompt shown for a question of the given type.
pub fn prompt_for(qtype: QuestionType, object_label: &str, comparator: Option<&str>) -> String {
    match qtype {
        QuestionType::Identification => {
            format!("What visible parts does the {object_label} in the image have?")
        }
        QuestionType::Intersection => format!(
            "Which visible parts does the {object_label} in the image have in common with a {}?",
            comparator.unwrap_or("?")
        ),
        QuestionType::Difference => format!(
            "Which visible parts does the {object_label} in the image have that a {} does not have?",
            comparator.unwrap_or("?")
        ),
        QuestionType::PartToWhole => "Select the visible parts of the object in the image, \
             then select the object based on those parts."
            .to_string(),
        QuestionType::WholeToPart => {
            "Select the object in the image, then select its visible parts.".to_string()
        }
    }
}

fn build_question(
    image_id: &str,
    instance: &Instance,
    qtype: QuestionType,
    ontology: &Ontology,
    model: &CooccurrenceModel,
    table: Option<&EmbeddingTable>,
    config: &GenConfig,
) -> Result<QuestionRecord, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        &[b"question", image_id.as_bytes(), qtype.code().as_bytes()],
    ));

    let comparator = if qtype.needs_comparator() {
        Some(sample_comparator(instance, ontology, &mut rng)?)
    } else {
        None
    };
    let (gt_parts, gt_object) =
        build_ground_truth(instance, qtype, comparator.as_deref(), ontology)?;

    let category_pool = ontology.category_part_pool(&instance.label);
    let distractors = generate_distractors(&gt_parts, model, &category_pool, &mut rng, config)?;

    let correct_part_index = rng.gen_range(0..5);
    let mut part_sets: Vec<BTreeSet<String>> = Vec::with_capacity(5);
    let mut rest = distractors.into_iter();
    for slot in 0..5 {
        if slot == correct_part_index {
            part_sets.push(gt_parts.clone());
        } else {
            part_sets.push(rest.next().expect("exactly four distractors"));
        }
    }

    let display_object = if qtype.has_object_half() {
        "object"
    } else {
        instance.label.as_str()
    };
    let part_choices: Vec<String> = part_sets
        .iter()
        .map(|set| render_parts_choice(set, display_object))
        .collect();
    let distinct: BTreeSet<&str> = part_choices.iter().map(String::as_str).collect();
    if distinct.len() != 5 {
        // Distinct sets should render distinctly; a collision means the
        // labels themselves embed the list separators.
        return Err(GenError::MutationExhausted {
            attempts: config.retry_budget,
        });
    }

    let (object_choices, correct_object_index) = match &gt_object {
        None => (None, None),
        Some(gt_label) => {
            let table = table.ok_or_else(|| GenError::MissingEmbeddings(vec![qtype]))?;
            let wrong = table.object_distractors(gt_label, 4)?;
            let correct = rng.gen_range(0..5);
            let mut choices = Vec::with_capacity(5);
            let mut rest = wrong.into_iter();
            for slot in 0..5 {
                if slot == correct {
                    choices.push(gt_label.clone());
                } else {
                    choices.push(rest.next().expect("exactly four object distractors"));
                }
            }
            (Some(choices), Some(correct))
        }
    };

    let gt_masks: BTreeMap<String, MaskRle> = instance
        .parts
        .iter()
        .filter(|(part, _)| gt_parts.contains(*part))
        .map(|(part, rle)| (part.clone(), rle.clone()))
        .collect();

    Ok(QuestionRecord {
        id: format!("{image_id}:{}", qtype.code()),
        image_id: image_id.to_string(),
        question_type: qtype,
        prompt: prompt_for(qtype, &instance.label, comparator.as_deref()),
        comparator_label: comparator,
        part_choices,
        part_choice_sets: part_sets
            .iter()
            .map(|s| s.iter().cloned().collect())
            .collect(),
        correct_part_index,
        object_choices,
        correct_object_index,
        gt_parts: gt_parts.into_iter().collect(),
        gt_masks,
    })
}

/// Generates at most one question per enabled type for every image.
///
/// Questions that cannot be built (empty ground truth, no comparator,
/// exhausted mutations, missing embedding) are skipped and reported, not
/// fatal. Output is sorted by (image id, question type) and is a pure
/// function of the inputs.
pub fn generate_questions(
    ds: &PartDataset,
    ontology: &Ontology,
    model: &CooccurrenceModel,
    table: Option<&EmbeddingTable>,
    config: &GenConfig,
) -> Result<GenOutput, GenError> {
    let mut types: Vec<QuestionType> = QuestionType::ALL
        .into_iter()
        .filter(|t| config.types.contains(t))
        .collect();
    types.dedup();
    let object_types: Vec<QuestionType> = types
        .iter()
        .copied()
        .filter(|t| t.has_object_half())
        .collect();
    if table.is_none() && !object_types.is_empty() {
        return Err(GenError::MissingEmbeddings(object_types));
    }

    let per_image: Vec<(Vec<QuestionRecord>, Vec<SkippedQuestion>)> = ds
        .images
        .par_iter()
        .map(|image| {
            let mut questions = Vec::new();
            let mut skips = Vec::new();
            let instance = match select_primary_instance(image) {
                Ok(i) => i,
                Err(_) => {
                    skips.push(SkippedQuestion {
                        image_id: image.id.clone(),
                        question_type: None,
                        reason: "image has no instances".to_string(),
                    });
                    return (questions, skips);
                }
            };
            if instance.parts.is_empty() {
                skips.push(SkippedQuestion {
                    image_id: image.id.clone(),
                    question_type: None,
                    reason: "primary instance has no annotated parts".to_string(),
                });
                return (questions, skips);
            }
            if !ontology.contains_object(&instance.label) {
                skips.push(SkippedQuestion {
                    image_id: image.id.clone(),
                    question_type: None,
                    reason: format!("object {:?} is not in the ontology", instance.label),
                });
                return (questions, skips);
            }
            for &qtype in &types {
                match build_question(&image.id, instance, qtype, ontology, model, table, config) {
                    Ok(q) => questions.push(q),
                    Err(e) => skips.push(SkippedQuestion {
                        image_id: image.id.clone(),
                        question_type: Some(qtype),
                        reason: e.to_string(),
                    }),
                }
            }
            (questions, skips)
        })
        .collect();

    let mut out = GenOutput::default();
    for (questions, skips) in per_image {
        out.questions.extend(questions);
        out.skips.extend(skips);
    }
    out.questions
        .sort_by(|a, b| (&a.image_id, a.question_type).cmp(&(&b.image_id, b.question_type)));
    out.skips.sort_by(|a, b| {
        (&a.image_id, a.question_type).cmp(&(&b.image_id, b.question_type))
    });
    for skip in &out.skips {
        log::info!(
            target: "generate",
            "skipped {}{}: {}",
            skip.image_id,
            skip.question_type.map(|t| format!(":{}", t.code())).unwrap_or_default(),
            skip.reason
        );
    }
    Ok(out)
}
