//! Part-annotation datasets: ingestion, validation, pruning, instance
//! disambiguation, and deterministic train/eval splitting.
//!
//! Two input formats are supported. The native schema is
//! `{"images":[{"id","height","width","instances":[{"label","bbox"?,"parts":{part:RLE}}]}]}`.
//! The COCO-parts reader accepts standard COCO JSON where each annotation
//! carries an RLE segmentation and its category resolves to an
//! (object, part) pair: either `name = "object:part"`, or `name` is the
//! part with `supercategory` as the object. Annotations are grouped into
//! one instance per object label per image.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fnv1a64;
use crate::mask::MaskRle;
use crate::ontology::{normalize_object_label, normalize_part_label, Ontology, OntologyError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed {format} file {path}: {message}")]
    MalformedFile {
        format: &'static str,
        path: String,
        message: String,
    },
    #[error("schema violation at {record}: {message}")]
    SchemaViolation { record: String, message: String },
    #[error("image entry has no instances")]
    NoInstances,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error(transparent)]
    Label(#[from] OntologyError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Input format accepted by [`load_part_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    CocoParts,
    Native,
}

impl DatasetFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coco_parts" | "coco-parts" | "coco" => Some(Self::CocoParts),
            "native" | "partonomy_native" => Some(Self::Native),
            _ => None,
        }
    }
}

/// One annotated object instance within an image.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Instance {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    pub parts: BTreeMap<String, MaskRle>,
}

impl Instance {
    /// Total foreground pixels across this instance's part masks.
    pub fn mask_area(&self) -> u64 {
        self.parts.values().map(MaskRle::area).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImageEntry {
    pub id: String,
    pub height: u32,
    pub width: u32,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct PartDataset {
    pub images: Vec<ImageEntry>,
}

/// Deterministic split parameters. The ratio is the train fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self, DataError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(DataError::InvalidRatio(ratio));
        }
        Ok(Self { ratio, seed })
    }
}

/// Loads a dataset file, checking that every mask matches its image
/// dimensions. Labels are basic-normalized but not synonym-mapped; run
/// [`PartDataset::canonicalize`] against an ontology for that.
pub fn load_part_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<PartDataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        DatasetFormat::Native => parse_native(&text, &path.display().to_string()),
        DatasetFormat::CocoParts => parse_coco_parts(&text, &path.display().to_string()),
    }
}

#[derive(Serialize, Deserialize)]
struct NativeFile {
    images: Vec<ImageEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Writes a dataset in the native schema, optionally embedding a
/// provenance object alongside the images.
pub fn write_native(
    path: impl AsRef<Path>,
    ds: &PartDataset,
    provenance: Option<serde_json::Value>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = NativeFile {
        images: ds.images.clone(),
        provenance,
    };
    let text = serde_json::to_string_pretty(&file).expect("dataset serializes");
    std::fs::write(path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_native(text: &str, path: &str) -> Result<PartDataset, DataError> {
    let file: NativeFile = serde_json::from_str(text).map_err(|e| DataError::MalformedFile {
        format: "native",
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let mut ds = PartDataset {
        images: file.images,
    };
    for image in &mut ds.images {
        image.id = image.id.trim().to_string();
        for instance in &mut image.instances {
            instance.label = normalize_object_label(&instance.label)?;
            let mut parts = BTreeMap::new();
            for (raw, rle) in std::mem::take(&mut instance.parts) {
                let base = raw.trim().to_lowercase();
                let base = base.split_whitespace().collect::<Vec<_>>().join(" ");
                if base.is_empty() {
                    return Err(DataError::SchemaViolation {
                        record: format!("image {}", image.id),
                        message: "empty part label".to_string(),
                    });
                }
                parts.insert(base, rle);
            }
            instance.parts = parts;
        }
    }
    check_mask_dims(&ds)?;
    Ok(ds)
}

fn check_mask_dims(ds: &PartDataset) -> Result<(), DataError> {
    for image in &ds.images {
        for instance in &image.instances {
            for (part, rle) in &instance.parts {
                if rle.dims() != (image.height, image.width) {
                    return Err(DataError::SchemaViolation {
                        record: format!("image {} / {} / {}", image.id, instance.label, part),
                        message: format!(
                            "mask is {}x{} but image is {}x{}",
                            rle.height(),
                            rle.width(),
                            image.height,
                            image.width
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

// Minimal COCO views; unknown keys are ignored.
#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: serde_json::Value,
    height: u32,
    width: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: Option<serde_json::Value>,
    image_id: serde_json::Value,
    category_id: i64,
    segmentation: serde_json::Value,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
    #[serde(default)]
    supercategory: Option<String>,
}

fn id_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_coco_parts(text: &str, path: &str) -> Result<PartDataset, DataError> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| DataError::MalformedFile {
        format: "coco_parts",
        path: path.to_string(),
        message: e.to_string(),
    })?;

    // category id -> (object label, part label)
    let mut labels: BTreeMap<i64, (String, String)> = BTreeMap::new();
    for cat in &file.categories {
        let record = format!("category {}", cat.id);
        let (object, part) = if let Some((obj, part)) = cat.name.split_once(':') {
            (obj.to_string(), part.to_string())
        } else if let Some(sup) = cat.supercategory.as_deref().filter(|s| !s.trim().is_empty()) {
            (sup.to_string(), cat.name.clone())
        } else {
            return Err(DataError::SchemaViolation {
                record,
                message: "category has neither an object:part name nor a supercategory"
                    .to_string(),
            });
        };
        let object = normalize_object_label(&object).map_err(|_| DataError::SchemaViolation {
            record: format!("category {}", cat.id),
            message: "empty object label".to_string(),
        })?;
        let part = normalize_object_label(&part).map_err(|_| DataError::SchemaViolation {
            record: format!("category {}", cat.id),
            message: "empty part label".to_string(),
        })?;
        labels.insert(cat.id, (object, part));
    }

    let mut images: BTreeMap<String, ImageEntry> = BTreeMap::new();
    let mut order = Vec::new();
    for img in &file.images {
        let id = id_string(&img.id);
        if !images.contains_key(&id) {
            order.push(id.clone());
        }
        images.insert(
            id.clone(),
            ImageEntry {
                id,
                height: img.height,
                width: img.width,
                instances: Vec::new(),
            },
        );
    }

    for ann in &file.annotations {
        let record = match &ann.id {
            Some(id) => format!("annotation {}", id_string(id)),
            None => "annotation".to_string(),
        };
        let image_id = id_string(&ann.image_id);
        let image = images
            .get_mut(&image_id)
            .ok_or_else(|| DataError::SchemaViolation {
                record: record.clone(),
                message: format!("references unknown image {image_id}"),
            })?;
        let (object, part) =
            labels
                .get(&ann.category_id)
                .cloned()
                .ok_or_else(|| DataError::SchemaViolation {
                    record: record.clone(),
                    message: format!("references unknown category {}", ann.category_id),
                })?;
        let rle: MaskRle = serde_json::from_value(ann.segmentation.clone()).map_err(|e| {
            DataError::SchemaViolation {
                record: record.clone(),
                message: format!("segmentation is not an RLE mask: {e}"),
            }
        })?;

        let instance = match image.instances.iter_mut().find(|i| i.label == object) {
            Some(existing) => existing,
            None => {
                image.instances.push(Instance {
                    label: object.clone(),
                    bbox: None,
                    parts: BTreeMap::new(),
                });
                image.instances.last_mut().unwrap()
            }
        };
        // Repeated (object, part) annotations in one image merge by union.
        match instance.parts.remove(&part) {
            None => {
                instance.parts.insert(part, rle);
            }
            Some(existing) => {
                if existing.dims() != rle.dims() {
                    return Err(DataError::SchemaViolation {
                        record,
                        message: "conflicting mask dimensions for repeated part".to_string(),
                    });
                }
                let merged = crate::mask::rle_decode(&existing)
                    .union(&crate::mask::rle_decode(&rle))
                    .expect("dims checked");
                instance.parts.insert(part, crate::mask::rle_encode(&merged));
            }
        }
    }

    let ds = PartDataset {
        images: order.into_iter().map(|id| images.remove(&id).unwrap()).collect(),
    };
    check_mask_dims(&ds)?;
    Ok(ds)
}

impl PartDataset {
    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn mask_count(&self) -> usize {
        self.images
            .iter()
            .flat_map(|i| &i.instances)
            .map(|inst| inst.parts.len())
            .sum()
    }

    /// Maps every part label through the ontology's synonym table and
    /// checks that each (object, part) binding exists in the ontology.
    pub fn canonicalize(&self, ontology: &Ontology) -> Result<PartDataset, DataError> {
        let mut out = self.clone();
        for image in &mut out.images {
            for instance in &mut image.instances {
                if !ontology.contains_object(&instance.label) {
                    return Err(DataError::SchemaViolation {
                        record: format!("image {}", image.id),
                        message: format!("object {:?} is not in the ontology", instance.label),
                    });
                }
                let mut parts = BTreeMap::new();
                for (raw, rle) in std::mem::take(&mut instance.parts) {
                    let canonical = normalize_part_label(&raw, ontology.synonyms())?;
                    if !ontology.contains_binding(&instance.label, &canonical) {
                        return Err(DataError::SchemaViolation {
                            record: format!("image {} / {}", image.id, instance.label),
                            message: format!(
                                "part {canonical:?} is not bound to {:?} in the ontology",
                                instance.label
                            ),
                        });
                    }
                    match parts.remove(&canonical) {
                        None => {
                            parts.insert(canonical, rle);
                        }
                        Some(existing) => {
                            // Synonyms can collapse two raw labels onto one part.
                            let merged = crate::mask::rle_decode(&existing)
                                .union(&crate::mask::rle_decode(&rle))
                                .expect("dims checked at load");
                            parts.insert(canonical, crate::mask::rle_encode(&merged));
                        }
                    }
                }
                instance.parts = parts;
            }
        }
        Ok(out)
    }
}

/// Drops every (object, part) binding annotated fewer than `min_count`
/// times across the whole dataset.
pub fn prune_rare_parts(ds: &PartDataset, min_count: usize) -> PartDataset {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for image in &ds.images {
        for instance in &image.instances {
            for part in instance.parts.keys() {
                *counts
                    .entry((instance.label.clone(), part.clone()))
                    .or_default() += 1;
            }
        }
    }
    let mut out = ds.clone();
    for image in &mut out.images {
        for instance in &mut image.instances {
            let label = instance.label.clone();
            instance
                .parts
                .retain(|part, _| counts[&(label.clone(), part.clone())] >= min_count);
        }
    }
    out
}

/// Picks the instance to ask questions about: most annotated parts first,
/// largest total mask area as tiebreak, lowest index as final tiebreak.
pub fn select_primary_instance(entry: &ImageEntry) -> Result<&Instance, DataError> {
    let mut best: Option<(&Instance, usize, u64)> = None;
    for instance in &entry.instances {
        let key = (instance.parts.len(), instance.mask_area());
        let better = match &best {
            None => true,
            Some((_, parts, area)) => key > (*parts, *area),
        };
        if better {
            best = Some((instance, key.0, key.1));
        }
    }
    best.map(|(i, _, _)| i).ok_or(DataError::NoInstances)
}

/// Partitions the dataset by image id into train/eval shares.
///
/// Each image is keyed by `fnv1a64(id) ^ seed`; images are ranked by that
/// key and the first `round(ratio * n)` go to train. Deterministic in the
/// seed and independent of input order.
pub fn split_dataset(ds: &PartDataset, spec: SplitSpec) -> (PartDataset, PartDataset) {
    let n = ds.images.len();
    let train_target = ((spec.ratio * n as f64) + 0.5).floor() as usize;
    let train_target = train_target.min(n);

    let mut ranked: Vec<(u64, &str)> = ds
        .images
        .iter()
        .map(|img| (fnv1a64(img.id.as_bytes()) ^ spec.seed, img.id.as_str()))
        .collect();
    ranked.sort_unstable();
    let train_ids: std::collections::BTreeSet<&str> = ranked
        .iter()
        .take(train_target)
        .map(|(_, id)| *id)
        .collect();

    let mut train = PartDataset::default();
    let mut eval = PartDataset::default();
    for image in &ds.images {
        if train_ids.contains(image.id.as_str()) {
            train.images.push(image.clone());
        } else {
            eval.images.push(image.clone());
        }
    }
    (train, eval)
}

/// The five headline dataset counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub object_labels: usize,
    pub part_labels: usize,
    pub object_part_bindings: usize,
    pub images: usize,
    pub masks: usize,
}

impl DatasetStats {
    pub fn compute(ds: &PartDataset) -> Self {
        let mut objects = std::collections::BTreeSet::new();
        let mut parts = std::collections::BTreeSet::new();
        let mut bindings = std::collections::BTreeSet::new();
        let mut masks = 0usize;
        for image in &ds.images {
            for instance in &image.instances {
                objects.insert(instance.label.as_str());
                for part in instance.parts.keys() {
                    parts.insert(part.as_str());
                    bindings.insert((instance.label.as_str(), part.as_str()));
                    masks += 1;
                }
            }
        }
        Self {
            object_labels: objects.len(),
            part_labels: parts.len(),
            object_part_bindings: bindings.len(),
            images: ds.images.len(),
            masks,
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "object labels        {:>8}", self.object_labels)?;
        writeln!(f, "part labels          {:>8}", self.part_labels)?;
        writeln!(f, "object-part bindings {:>8}", self.object_part_bindings)?;
        writeln!(f, "images               {:>8}", self.images)?;
        write!(f, "masks                {:>8}", self.masks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_decode, rle_encode, BinaryMask};
    use crate::ontology::SynonymTable;

    fn rect_mask(h: u32, w: u32, r0: u32, c0: u32, rh: u32, cw: u32) -> MaskRle {
        let mask =
            BinaryMask::from_fn(h, w, |r, c| r >= r0 && r < r0 + rh && c >= c0 && c < c0 + cw)
                .unwrap();
        rle_encode(&mask)
    }

    fn instance(label: &str, parts: &[(&str, MaskRle)]) -> Instance {
        Instance {
            label: label.to_string(),
            bbox: None,
            parts: parts
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    fn two_image_dataset() -> PartDataset {
        PartDataset {
            images: vec![
                ImageEntry {
                    id: "img001".into(),
                    height: 8,
                    width: 8,
                    instances: vec![instance(
                        "biplane",
                        &[
                            ("wing", rect_mask(8, 8, 0, 0, 2, 4)),
                            ("wheel", rect_mask(8, 8, 6, 0, 2, 2)),
                        ],
                    )],
                },
                ImageEntry {
                    id: "img002".into(),
                    height: 8,
                    width: 8,
                    instances: vec![instance("seaplane", &[("wing", rect_mask(8, 8, 0, 0, 3, 3))])],
                },
            ],
        }
    }

    #[test]
    fn native_roundtrip_loads_two_images() {
        let ds = two_image_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let file = NativeFile {
            images: ds.images.clone(),
            provenance: None,
        };
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        let loaded = load_part_dataset(&path, DatasetFormat::Native).unwrap();
        assert_eq!(loaded.image_count(), 2);
        assert_eq!(loaded, ds);
    }

    #[test]
    fn mask_dimension_mismatch_is_schema_violation() {
        let mut ds = two_image_dataset();
        // 9-row mask inside an 8-row image.
        ds.images[0]
            .instances[0]
            .parts
            .insert("tail".into(), rect_mask(9, 8, 0, 0, 1, 1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let file = NativeFile {
            images: ds.images,
            provenance: None,
        };
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        let err = load_part_dataset(&path, DatasetFormat::Native).unwrap_err();
        assert!(matches!(err, DataError::SchemaViolation { .. }));
    }

    #[test]
    fn malformed_json_reports_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{ not json").unwrap();
        let err = load_part_dataset(&path, DatasetFormat::Native).unwrap_err();
        assert!(matches!(err, DataError::MalformedFile { .. }));
    }

    #[test]
    fn coco_reader_groups_by_object_label() {
        let coco = serde_json::json!({
            "images": [{"id": 1, "height": 8, "width": 8, "file_name": "a.jpg"}],
            "annotations": [
                {"id": 10, "image_id": 1, "category_id": 1,
                 "segmentation": {"size": [8, 8], "counts": [0, 4, 60]}},
                {"id": 11, "image_id": 1, "category_id": 2,
                 "segmentation": {"size": [8, 8], "counts": [8, 4, 52]}},
                {"id": 12, "image_id": 1, "category_id": 3,
                 "segmentation": {"size": [8, 8], "counts": [16, 2, 46]}}
            ],
            "categories": [
                {"id": 1, "name": "Biplane:Wing", "supercategory": "aircraft"},
                {"id": 2, "name": "wheel", "supercategory": "Biplane"},
                {"id": 3, "name": "hull", "supercategory": "rowboat"}
            ]
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coco.json");
        std::fs::write(&path, coco.to_string()).unwrap();
        let ds = load_part_dataset(&path, DatasetFormat::CocoParts).unwrap();
        assert_eq!(ds.image_count(), 1);
        let image = &ds.images[0];
        assert_eq!(image.id, "1");
        assert_eq!(image.instances.len(), 2);
        let biplane = image.instances.iter().find(|i| i.label == "biplane").unwrap();
        assert!(biplane.parts.contains_key("wing"));
        assert!(biplane.parts.contains_key("wheel"));
        let rowboat = image.instances.iter().find(|i| i.label == "rowboat").unwrap();
        assert!(rowboat.parts.contains_key("hull"));
    }

    #[test]
    fn coco_reader_rejects_polygons() {
        let coco = serde_json::json!({
            "images": [{"id": 1, "height": 8, "width": 8}],
            "annotations": [
                {"id": 10, "image_id": 1, "category_id": 1,
                 "segmentation": [[0.0, 0.0, 4.0, 0.0, 4.0, 4.0]]}
            ],
            "categories": [{"id": 1, "name": "biplane:wing"}]
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poly.json");
        std::fs::write(&path, coco.to_string()).unwrap();
        let err = load_part_dataset(&path, DatasetFormat::CocoParts).unwrap_err();
        assert!(matches!(err, DataError::SchemaViolation { .. }));
    }

    #[test]
    fn prune_drops_bindings_below_threshold() {
        // "wing" appears in both images (count 2 as (biplane,wing)=1 +
        // (seaplane,wing)=1 -> each binding has count 1).
        let ds = two_image_dataset();
        let pruned = prune_rare_parts(&ds, 2);
        assert_eq!(pruned.mask_count(), 0);
        let kept = prune_rare_parts(&ds, 1);
        assert_eq!(kept, ds);
    }

    #[test]
    fn prune_boundary_keeps_exact_count() {
        let mut ds = two_image_dataset();
        // Give (biplane, wing) five occurrences over five images.
        for i in 0..3 {
            ds.images.push(ImageEntry {
                id: format!("extra{i}"),
                height: 8,
                width: 8,
                instances: vec![instance("biplane", &[("wing", rect_mask(8, 8, 0, 0, 1, 1))])],
            });
        }
        ds.images.push(ImageEntry {
            id: "extra3".into(),
            height: 8,
            width: 8,
            instances: vec![instance("biplane", &[("wing", rect_mask(8, 8, 0, 0, 1, 1))])],
        });
        // (biplane, wing) now has count 5; (biplane, wheel) has 1.
        let pruned = prune_rare_parts(&ds, 5);
        let biplane_parts: Vec<_> = pruned
            .images
            .iter()
            .flat_map(|i| &i.instances)
            .filter(|i| i.label == "biplane")
            .flat_map(|i| i.parts.keys().cloned())
            .collect();
        assert!(biplane_parts.iter().all(|p| p == "wing"));
        assert_eq!(biplane_parts.len(), 5);

        // A binding with four occurrences is removed at m = 5.
        let four = prune_rare_parts(
            &PartDataset {
                images: ds.images[..4].to_vec(),
            },
            5,
        );
        assert!(four
            .images
            .iter()
            .flat_map(|i| &i.instances)
            .all(|i| i.parts.is_empty()));
    }

    #[test]
    fn prune_is_monotone_in_threshold() {
        let ds = two_image_dataset();
        for m1 in 1..4 {
            for m2 in m1..5 {
                let a = prune_rare_parts(&ds, m1);
                let b = prune_rare_parts(&ds, m2);
                // Every retained mask at m2 is retained at m1.
                for (img_a, img_b) in a.images.iter().zip(&b.images) {
                    for (ia, ib) in img_a.instances.iter().zip(&img_b.instances) {
                        for part in ib.parts.keys() {
                            assert!(ia.parts.contains_key(part));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn primary_instance_prefers_part_count() {
        let entry = ImageEntry {
            id: "x".into(),
            height: 8,
            width: 8,
            instances: vec![
                instance(
                    "a",
                    &[
                        ("p1", rect_mask(8, 8, 0, 0, 4, 4)),
                        ("p2", rect_mask(8, 8, 4, 4, 4, 4)),
                        ("p3", rect_mask(8, 8, 0, 4, 2, 2)),
                    ],
                ),
                instance(
                    "b",
                    &[
                        ("p1", rect_mask(8, 8, 0, 0, 1, 1)),
                        ("p2", rect_mask(8, 8, 1, 1, 1, 1)),
                        ("p3", rect_mask(8, 8, 2, 2, 1, 1)),
                        ("p4", rect_mask(8, 8, 3, 3, 1, 1)),
                        ("p5", rect_mask(8, 8, 4, 4, 1, 1)),
                    ],
                ),
            ],
        };
        assert_eq!(select_primary_instance(&entry).unwrap().label, "b");
    }

    #[test]
    fn primary_instance_breaks_ties_by_area() {
        // Equal part counts; areas 100 px (10x10) vs 900 px (30x30),
        // verified through the decode oracle.
        let small = rect_mask(32, 32, 0, 0, 10, 10);
        let large = rect_mask(32, 32, 0, 0, 30, 30);
        assert_eq!(rle_decode(&small).area(), 100);
        assert_eq!(rle_decode(&large).area(), 900);
        let entry = ImageEntry {
            id: "x".into(),
            height: 32,
            width: 32,
            instances: vec![instance("small", &[("p", small)]), instance("large", &[("p", large)])],
        };
        assert_eq!(select_primary_instance(&entry).unwrap().label, "large");
    }

    #[test]
    fn primary_instance_single_and_empty() {
        let entry = ImageEntry {
            id: "x".into(),
            height: 8,
            width: 8,
            instances: vec![instance("only", &[("p", rect_mask(8, 8, 0, 0, 1, 1))])],
        };
        assert_eq!(select_primary_instance(&entry).unwrap().label, "only");
        let empty = ImageEntry {
            id: "y".into(),
            height: 8,
            width: 8,
            instances: vec![],
        };
        assert!(matches!(
            select_primary_instance(&empty),
            Err(DataError::NoInstances)
        ));
    }

    #[test]
    fn primary_instance_final_tiebreak_is_lowest_index() {
        let m = rect_mask(8, 8, 0, 0, 2, 2);
        let entry = ImageEntry {
            id: "x".into(),
            height: 8,
            width: 8,
            instances: vec![instance("first", &[("p", m.clone())]), instance("second", &[("p", m)])],
        };
        assert_eq!(select_primary_instance(&entry).unwrap().label, "first");
    }

    fn synthetic_images(n: usize) -> PartDataset {
        PartDataset {
            images: (0..n)
                .map(|i| ImageEntry {
                    id: format!("img{i:05}"),
                    height: 4,
                    width: 4,
                    instances: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn split_is_exact_for_ten_images() {
        let ds = synthetic_images(10);
        let (train, eval) = split_dataset(&ds, SplitSpec::new(0.8, 42).unwrap());
        assert_eq!(train.image_count(), 8);
        assert_eq!(eval.image_count(), 2);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = synthetic_images(37);
        let spec = SplitSpec::new(0.8, 7).unwrap();
        let (t1, e1) = split_dataset(&ds, spec);
        let (t2, e2) = split_dataset(&ds, spec);
        assert_eq!(t1, t2);
        assert_eq!(e1, e2);
        let mut ids: Vec<_> = t1.images.iter().chain(&e1.images).map(|i| &i.id).collect();
        ids.sort();
        let mut all: Vec<_> = ds.images.iter().map(|i| &i.id).collect();
        all.sort();
        assert_eq!(ids, all);
    }

    #[test]
    fn split_matches_rounded_ratio_on_large_input() {
        let ds = synthetic_images(1068);
        let (train, _) = split_dataset(&ds, SplitSpec::new(0.8, 42).unwrap());
        // round(1068 * 0.8) = 854
        assert_eq!(train.image_count(), 854);
    }

    #[test]
    fn split_rejects_degenerate_ratio() {
        assert!(SplitSpec::new(0.0, 1).is_err());
        assert!(SplitSpec::new(1.0, 1).is_err());
        assert!(SplitSpec::new(0.5, 1).is_ok());
    }

    #[test]
    fn stats_match_hand_tally() {
        let ds = two_image_dataset();
        let stats = DatasetStats::compute(&ds);
        assert_eq!(
            stats,
            DatasetStats {
                object_labels: 2,
                part_labels: 2,
                object_part_bindings: 3,
                images: 2,
                masks: 3,
            }
        );
    }

    #[test]
    fn stats_of_empty_dataset_are_zero() {
        let stats = DatasetStats::compute(&PartDataset::default());
        assert_eq!(stats.images, 0);
        assert_eq!(stats.masks, 0);
        assert_eq!(stats.object_labels, 0);
    }

    #[test]
    fn canonicalize_maps_synonyms_and_validates() {
        let mut categories = BTreeMap::new();
        categories.insert(
            "aircraft".to_string(),
            vec!["biplane".to_string(), "seaplane".to_string()],
        );
        let mut parts = BTreeMap::new();
        parts.insert("biplane".to_string(), vec!["wing".into(), "wheel".into()]);
        parts.insert("seaplane".to_string(), vec!["wing".into()]);
        let synonyms = SynonymTable::new([("aerofoil".into(), "wing".into())]).unwrap();
        let onto = Ontology::new(categories, parts, synonyms).unwrap();

        let mut ds = two_image_dataset();
        let wing = ds.images[0].instances[0].parts.remove("wing").unwrap();
        ds.images[0].instances[0].parts.insert("aerofoil".into(), wing);
        let canon = ds.canonicalize(&onto).unwrap();
        assert!(canon.images[0].instances[0].parts.contains_key("wing"));

        // Unknown binding is rejected.
        let mut bad = two_image_dataset();
        bad.images[1].instances[0]
            .parts
            .insert("anchor".into(), rect_mask(8, 8, 0, 0, 1, 1));
        assert!(bad.canonicalize(&onto).is_err());
    }
}
