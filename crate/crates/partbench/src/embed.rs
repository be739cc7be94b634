//! Label embedding tables and cosine-similarity distractor ranking.
//!
//! Vectors are computed elsewhere and consumed here as a JSONL file with
//! one `{"label": ..., "vector": [...]}` object per line.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no embedding for label {0:?}")]
    MissingEmbedding(String),
    #[error("need {needed} other labels, table only has {available}")]
    NotEnoughLabels { needed: usize, available: usize },
    #[error("label {label:?} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        label: String,
        expected: usize,
        actual: usize,
    },
    #[error("label {0:?} has a zero or non-finite vector")]
    BadVector(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("failed to read embeddings: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    label: String,
    vector: Vec<f64>,
}

/// Fixed-dimension embedding vectors keyed by label.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, EmbedError> {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (label, vector) in entries {
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    label,
                    expected,
                    actual: vector.len(),
                });
            }
            let norm_sq: f64 = vector.iter().map(|v| v * v).sum();
            if norm_sq == 0.0 || !norm_sq.is_finite() {
                return Err(EmbedError::BadVector(label));
            }
            vectors.insert(label, vector);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: EmbeddingRow =
                serde_json::from_str(&line).map_err(|e| EmbedError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.push((row.label, row.vector));
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, label: &str) -> bool {
        self.vectors.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn cosine(&self, a: &str, b: &str) -> Result<f64, EmbedError> {
        let va = self
            .vectors
            .get(a)
            .ok_or_else(|| EmbedError::MissingEmbedding(a.to_string()))?;
        let vb = self
            .vectors
            .get(b)
            .ok_or_else(|| EmbedError::MissingEmbedding(b.to_string()))?;
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(dot / (na * nb))
    }

    /// The `count` labels most similar to `gt_label` (excluding it), by
    /// cosine similarity; ties break lexicographically.
    pub fn object_distractors(
        &self,
        gt_label: &str,
        count: usize,
    ) -> Result<Vec<String>, EmbedError> {
        if !self.contains(gt_label) {
            return Err(EmbedError::MissingEmbedding(gt_label.to_string()));
        }
        let available = self.vectors.len() - 1;
        if available < count {
            return Err(EmbedError::NotEnoughLabels {
                needed: count,
                available,
            });
        }
        let mut scored: Vec<(String, f64)> = self
            .vectors
            .keys()
            .filter(|l| l.as_str() != gt_label)
            .map(|l| {
                let sim = self.cosine(gt_label, l).expect("both labels present");
                (l.clone(), sim)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(count);
        Ok(scored.into_iter().map(|(l, _)| l).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::new(
            entries
                .iter()
                .map(|(l, v)| (l.to_string(), v.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn identical_vector_ranks_first() {
        let t = table(&[
            ("biplane", &[1.0, 0.0]),
            ("seaplane", &[1.0, 0.0]),
            ("rowboat", &[0.0, 1.0]),
        ]);
        let top = t.object_distractors("biplane", 2).unwrap();
        assert_eq!(top, ["seaplane", "rowboat"]);
    }

    #[test]
    fn orthogonal_vectors_rank_lexicographically() {
        let t = table(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("c", &[0.0, 1.0, 0.0]),
            ("b", &[0.0, 0.0, 1.0]),
        ]);
        let top = t.object_distractors("a", 2).unwrap();
        assert_eq!(top, ["b", "c"]);
    }

    #[test]
    fn hand_computed_cosines_give_ordering() {
        // Against gt = (1, 0): cos(x) = x[0] / |x|. Vectors are scaled so
        // the cosines are exactly 0.9, 0.5, and 0.1.
        fn with_cosine(c: f64) -> [f64; 2] {
            [c, (1.0 - c * c).sqrt()]
        }
        let t = table(&[
            ("gt", &[1.0, 0.0]),
            ("far", &with_cosine(0.1)),
            ("mid", &with_cosine(0.5)),
            ("near", &with_cosine(0.9)),
        ]);
        assert!((t.cosine("gt", "near").unwrap() - 0.9).abs() < 1e-12);
        assert!((t.cosine("gt", "mid").unwrap() - 0.5).abs() < 1e-12);
        assert!((t.cosine("gt", "far").unwrap() - 0.1).abs() < 1e-12);
        let top = t.object_distractors("gt", 3).unwrap();
        assert_eq!(top, ["near", "mid", "far"]);
    }

    #[test]
    fn missing_label_and_small_table_error() {
        let t = table(&[("a", &[1.0]), ("b", &[2.0])]);
        assert!(matches!(
            t.object_distractors("zzz", 1),
            Err(EmbedError::MissingEmbedding(_))
        ));
        assert!(matches!(
            t.object_distractors("a", 4),
            Err(EmbedError::NotEnoughLabels { .. })
        ));
    }

    #[test]
    fn dimension_and_zero_vector_validation() {
        let err = EmbeddingTable::new([
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![1.0]),
        ]);
        assert!(matches!(err, Err(EmbedError::DimensionMismatch { .. })));
        let err = EmbeddingTable::new([("a".to_string(), vec![0.0, 0.0])]);
        assert!(matches!(err, Err(EmbedError::BadVector(_))));
    }

    #[test]
    fn jsonl_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        std::fs::write(
            &path,
            "{\"label\":\"a\",\"vector\":[1.0,0.0]}\n\n{\"label\":\"b\",\"vector\":[0.0,1.0]}\n",
        )
        .unwrap();
        let t = EmbeddingTable::from_jsonl_path(&path).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 2);
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            EmbeddingTable::from_jsonl_path(&path),
            Err(EmbedError::Malformed { line: 1, .. })
        ));
    }
}
