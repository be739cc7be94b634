//! Object-part ontology: categories, object labels, canonical part sets,
//! and the synonym table used to normalize raw part strings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("part label is empty after trimming")]
    EmptyLabel,
    #[error("object {label:?} appears in more than one category")]
    DuplicateObject { label: String },
    #[error("synonym table contains a cycle through {label:?}")]
    SynonymCycle { label: String },
    #[error("parts listed for {label:?}, which is not declared in any category")]
    UndeclaredObject { label: String },
    #[error("failed to read ontology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ontology file: {0}")]
    MalformedFile(#[from] serde_json::Error),
}

/// Maps raw part strings to their canonical label.
///
/// Keys and values are basic-normalized at construction and chains
/// (a -> b, b -> c) are resolved so a single lookup suffices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    map: BTreeMap<String, String>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(
        entries: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, OntologyError> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in entries {
            raw.insert(basic_normalize(&k)?, basic_normalize(&v)?);
        }
        // Resolve chains; a walk longer than the table means a cycle.
        let mut map = BTreeMap::new();
        for key in raw.keys() {
            let mut target = &raw[key];
            let mut steps = 0usize;
            while let Some(next) = raw.get(target) {
                if next == target {
                    break;
                }
                target = next;
                steps += 1;
                if steps > raw.len() {
                    return Err(OntologyError::SynonymCycle { label: key.clone() });
                }
            }
            if target != key {
                map.insert(key.clone(), target.clone());
            }
        }
        Ok(Self { map })
    }

    pub fn lookup(&self, normalized: &str) -> Option<&str> {
        self.map.get(normalized).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn basic_normalize(raw: &str) -> Result<String, OntologyError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(OntologyError::EmptyLabel);
    }
    let lowered = trimmed.to_lowercase();
    Ok(lowered.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Canonicalizes a raw part label: trim, lowercase, collapse whitespace,
/// then map through the synonym table. Idempotent.
pub fn normalize_part_label(raw: &str, table: &SynonymTable) -> Result<String, OntologyError> {
    let base = basic_normalize(raw)?;
    Ok(match table.lookup(&base) {
        Some(canonical) => canonical.to_string(),
        None => base,
    })
}

/// Normalizes an object or category label (no synonym mapping).
pub fn normalize_object_label(raw: &str) -> Result<String, OntologyError> {
    basic_normalize(raw)
}

/// Categories, object labels, and each object's canonical part set.
#[derive(Debug, Clone)]
pub struct Ontology {
    categories: Vec<String>,
    objects: BTreeMap<String, String>,
    parts: BTreeMap<String, BTreeSet<String>>,
    synonyms: SynonymTable,
}

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    categories: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    parts: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
}

impl Ontology {
    /// Builds a normalized ontology.
    ///
    /// Every object must belong to exactly one category, and objects named
    /// in `parts` must be declared under some category. All labels are
    /// normalized; part labels additionally pass through the synonym table.
    pub fn new(
        categories: BTreeMap<String, Vec<String>>,
        parts: BTreeMap<String, Vec<String>>,
        synonyms: SynonymTable,
    ) -> Result<Self, OntologyError> {
        let mut objects = BTreeMap::new();
        let mut category_names = BTreeSet::new();
        for (category, members) in &categories {
            let category = normalize_object_label(category)?;
            category_names.insert(category.clone());
            for member in members {
                let label = normalize_object_label(member)?;
                if objects.insert(label.clone(), category.clone()).is_some() {
                    return Err(OntologyError::DuplicateObject { label });
                }
            }
        }
        let mut part_sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (object, raw_parts) in &parts {
            let object = normalize_object_label(object)?;
            if !objects.contains_key(&object) {
                return Err(OntologyError::UndeclaredObject { label: object });
            }
            let set = part_sets.entry(object).or_default();
            for raw in raw_parts {
                set.insert(normalize_part_label(raw, &synonyms)?);
            }
        }
        Ok(Self {
            categories: category_names.into_iter().collect(),
            objects,
            parts: part_sets,
            synonyms,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)?;
        let file: OntologyFile = serde_json::from_str(&text)?;
        let synonyms = SynonymTable::new(file.synonyms)?;
        Self::new(file.categories, file.parts, synonyms)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn objects(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn contains_object(&self, object: &str) -> bool {
        self.objects.contains_key(object)
    }

    pub fn category_of(&self, object: &str) -> Option<&str> {
        self.objects.get(object).map(String::as_str)
    }

    /// Canonical part set of an object; empty for objects with no parts.
    pub fn parts_of(&self, object: &str) -> Option<&BTreeSet<String>> {
        if !self.objects.contains_key(object) {
            return None;
        }
        Some(self.parts.get(object).unwrap_or(empty_set()))
    }

    pub fn contains_binding(&self, object: &str, part: &str) -> bool {
        self.parts_of(object).is_some_and(|set| set.contains(part))
    }

    pub fn synonyms(&self) -> &SynonymTable {
        &self.synonyms
    }

    /// Every canonical part label, sorted.
    pub fn part_vocabulary(&self) -> Vec<String> {
        let mut vocab = BTreeSet::new();
        for set in self.parts.values() {
            vocab.extend(set.iter().cloned());
        }
        vocab.into_iter().collect()
    }

    /// Union of part sets over all objects sharing `object`'s category.
    pub fn category_part_pool(&self, object: &str) -> BTreeSet<String> {
        let Some(category) = self.category_of(object) else {
            return BTreeSet::new();
        };
        let mut pool = BTreeSet::new();
        for (other, cat) in &self.objects {
            if cat == category {
                if let Some(set) = self.parts.get(other) {
                    pool.extend(set.iter().cloned());
                }
            }
        }
        pool
    }
}

fn empty_set() -> &'static BTreeSet<String> {
    use std::sync::OnceLock;
    static EMPTY: OnceLock<BTreeSet<String>> = OnceLock::new();
    EMPTY.get_or_init(BTreeSet::new)
}

/// Exact set intersection, lexicographically ordered.
pub fn shared_parts(a: &BTreeSet<String>, b: &BTreeSet<String>) -> BTreeSet<String> {
    a.intersection(b).cloned().collect()
}

/// Exact set difference `a \ b`, lexicographically ordered.
pub fn part_difference(a: &BTreeSet<String>, b: &BTreeSet<String>) -> BTreeSet<String> {
    a.difference(b).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_trims_and_lowercases() {
        let table = SynonymTable::empty();
        assert_eq!(normalize_part_label("  Wing ", &table).unwrap(), "wing");
        assert_eq!(normalize_part_label("wing", &table).unwrap(), "wing");
        assert_eq!(
            normalize_part_label("Row  Of\tWindows", &table).unwrap(),
            "row of windows"
        );
    }

    #[test]
    fn normalize_applies_synonyms() {
        let table = SynonymTable::new([("clamp".into(), "clip".into())]).unwrap();
        assert_eq!(normalize_part_label("clamp", &table).unwrap(), "clip");
        assert_eq!(normalize_part_label("clip", &table).unwrap(), "clip");
    }

    #[test]
    fn normalize_rejects_empty() {
        assert!(matches!(
            normalize_part_label("   ", &SynonymTable::empty()),
            Err(OntologyError::EmptyLabel)
        ));
    }

    #[test]
    fn synonym_chains_resolve_keeping_idempotence() {
        let table =
            SynonymTable::new([("a".into(), "b".into()), ("b".into(), "c".into())]).unwrap();
        assert_eq!(normalize_part_label("a", &table).unwrap(), "c");
        assert_eq!(normalize_part_label("b", &table).unwrap(), "c");
        assert_eq!(normalize_part_label("c", &table).unwrap(), "c");
    }

    #[test]
    fn synonym_cycle_rejected() {
        let err = SynonymTable::new([("a".into(), "b".into()), ("b".into(), "a".into())]);
        assert!(matches!(err, Err(OntologyError::SynonymCycle { .. })));
    }

    #[test]
    fn duplicate_object_rejected() {
        let mut categories = BTreeMap::new();
        categories.insert("aircraft".to_string(), vec!["biplane".to_string()]);
        categories.insert("toys".to_string(), vec!["Biplane".to_string()]);
        let err = Ontology::new(categories, BTreeMap::new(), SynonymTable::empty());
        assert!(matches!(err, Err(OntologyError::DuplicateObject { .. })));
    }

    #[test]
    fn parts_for_undeclared_object_rejected() {
        let mut categories = BTreeMap::new();
        categories.insert("aircraft".to_string(), vec!["biplane".to_string()]);
        let mut parts = BTreeMap::new();
        parts.insert("submarine".to_string(), vec!["hull".to_string()]);
        let err = Ontology::new(categories, parts, SynonymTable::empty());
        assert!(matches!(err, Err(OntologyError::UndeclaredObject { .. })));
    }

    #[test]
    fn ontology_normalizes_part_sets() {
        let mut categories = BTreeMap::new();
        categories.insert("aircraft".to_string(), vec!["biplane".to_string()]);
        let mut parts = BTreeMap::new();
        parts.insert(
            "biplane".to_string(),
            vec!["Wing".to_string(), " wing".to_string(), "Prop".to_string()],
        );
        let synonyms = SynonymTable::new([("prop".into(), "propeller".into())]).unwrap();
        let onto = Ontology::new(categories, parts, synonyms).unwrap();
        assert_eq!(
            onto.parts_of("biplane").unwrap(),
            &set(&["propeller", "wing"])
        );
    }

    #[test]
    fn category_pool_unions_same_category() {
        let mut categories = BTreeMap::new();
        categories.insert(
            "aircraft".to_string(),
            vec!["biplane".to_string(), "seaplane".to_string()],
        );
        categories.insert("boats".to_string(), vec!["rowboat".to_string()]);
        let mut parts = BTreeMap::new();
        parts.insert("biplane".to_string(), vec!["wing".into(), "wheel".into()]);
        parts.insert("seaplane".to_string(), vec!["wing".into(), "float".into()]);
        parts.insert("rowboat".to_string(), vec!["oar".into()]);
        let onto = Ontology::new(categories, parts, SynonymTable::empty()).unwrap();
        assert_eq!(
            onto.category_part_pool("biplane"),
            set(&["float", "wheel", "wing"])
        );
        assert_eq!(onto.category_part_pool("rowboat"), set(&["oar"]));
    }

    #[test]
    fn set_ops_match_definitions() {
        let a = set(&["wing", "wheel"]);
        let b = set(&["wing", "rotor"]);
        assert_eq!(shared_parts(&a, &b), set(&["wing"]));
        assert_eq!(part_difference(&a, &b), set(&["wheel"]));
        assert_eq!(shared_parts(&a, &a), a);
        assert!(part_difference(&a, &a).is_empty());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[ A-Za-z0-9]{1,20}") {
            let table = SynonymTable::new([
                ("clamp".into(), "clip".into()),
                ("prop".into(), "propeller".into()),
            ]).unwrap();
            prop_assume!(!raw.trim().is_empty());
            let once = normalize_part_label(&raw, &table).unwrap();
            let twice = normalize_part_label(&once, &table).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn set_ops_match_membership_oracle(
            xs in proptest::collection::btree_set("[a-e][a-z]{0,2}", 0..50),
            ys in proptest::collection::btree_set("[a-e][a-z]{0,2}", 0..50),
        ) {
            let a: BTreeSet<String> = xs;
            let b: BTreeSet<String> = ys;
            let inter = shared_parts(&a, &b);
            let diff = part_difference(&a, &b);
            // Brute-force membership oracle over the union of both sets.
            for item in a.iter().chain(b.iter()) {
                prop_assert_eq!(inter.contains(item), a.contains(item) && b.contains(item));
                prop_assert_eq!(diff.contains(item), a.contains(item) && !b.contains(item));
            }
            prop_assert!(inter.iter().all(|i| a.contains(i) && b.contains(i)));
            prop_assert!(diff.iter().all(|i| a.contains(i)));
        }
    }
}
