//! Tools for building and scoring explanatory part-segmentation benchmarks.
//!
//! The crate covers the full desk-side pipeline:
//!
//! - [`ontology`] / [`dataset`]: object-part ontologies, annotation ingestion
//!   (native JSON and COCO-parts), label normalization, rare-part pruning,
//!   instance disambiguation, and deterministic train/eval splits.
//! - [`mask`]: dense binary masks, the column-major run-length codec, and
//!   IoU / area / bbox primitives.
//! - [`cooc`]: per-part logistic regressors over part co-occurrence, used to
//!   source plausible distractor parts.
//! - [`embed`]: label embedding tables and similarity-ranked object
//!   distractors.
//! - [`gen`]: five-way multiple-choice question generation with mutated
//!   hard-negative answer choices.
//! - [`metrics`]: response scoring — choice selection from token
//!   log-probabilities, part precision/recall, and micro/macro gIoU.
//! - [`spans`], [`losses`], [`feedback`], [`gradcheck`]: reference numerics
//!   for BIO span merging, the segmentation loss stack, feature-map
//!   modulation and pooling, with finite-difference gradient verification.
//!
//! Start with the runnable programs under `examples/` — each demonstrates
//! one capability end to end.

pub mod cooc;
pub mod dataset;
pub mod embed;
pub mod feedback;
pub mod gen;
pub mod gradcheck;
pub mod hashing;
pub mod jsonl;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod ontology;
pub mod spans;

pub use dataset::{
    load_part_dataset, prune_rare_parts, select_primary_instance, split_dataset, write_native,
    DataError, DatasetFormat, DatasetStats, ImageEntry, Instance, PartDataset, SplitSpec,
};
pub use mask::{iou, rle_decode, rle_encode, BinaryMask, MaskError, MaskRle};
pub use ontology::{
    normalize_part_label, part_difference, shared_parts, Ontology, OntologyError, SynonymTable,
};
