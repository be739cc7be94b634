//! Dataset ingestion and ontology plumbing: load the bundled fixtures,
//! canonicalize labels through the synonym table, prune rare bindings,
//! and pick the primary instance of each image.
//!
//! ```bash
//! cargo run -p partbench --example dataset_tools
//! ```

use partbench::dataset::{
    load_part_dataset, prune_rare_parts, select_primary_instance, DatasetFormat, DatasetStats,
};
use partbench::ontology::{normalize_part_label, Ontology};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn main() {
    let ontology = Ontology::from_path(fixture("ontology.json")).unwrap();
    println!("categories: {:?}", ontology.categories());
    println!(
        "part vocabulary ({} parts): {:?}",
        ontology.part_vocabulary().len(),
        ontology.part_vocabulary()
    );

    // The synonym table maps raw annotation strings onto canonical labels.
    for raw in ["  Prop ", "AEROFOIL", "wing"] {
        println!(
            "normalize {raw:?} -> {:?}",
            normalize_part_label(raw, ontology.synonyms()).unwrap()
        );
    }

    let ds = load_part_dataset(fixture("dataset.json"), DatasetFormat::Native).unwrap();
    let ds = ds.canonicalize(&ontology).unwrap();
    println!("\nfixture dataset:\n{}", DatasetStats::compute(&ds));

    // COCO-style part annotations load through the same interface.
    let coco = load_part_dataset(fixture("coco_parts.json"), DatasetFormat::CocoParts).unwrap();
    println!("\ncoco fixture:\n{}", DatasetStats::compute(&coco));

    // Bindings annotated fewer than twice disappear at min_count = 2.
    let pruned = prune_rare_parts(&ds, 2);
    println!("\nafter prune_rare_parts(min_count = 2):");
    println!("{}", DatasetStats::compute(&pruned));

    println!("\nprimary instance per image (most parts, then largest):");
    for image in &ds.images {
        let primary = select_primary_instance(image).unwrap();
        println!(
            "  {}: {} with {} parts",
            image.id,
            primary.label,
            primary.parts.len()
        );
    }
}
