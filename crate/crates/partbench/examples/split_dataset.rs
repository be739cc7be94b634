//! Deterministic train/eval splitting keyed on hashed image ids.
//!
//! ```bash
//! cargo run -p partbench --example split_dataset
//! ```

use partbench::dataset::{load_part_dataset, split_dataset, DatasetFormat, SplitSpec};

fn main() {
    let path = format!("{}/fixtures/dataset.json", env!("CARGO_MANIFEST_DIR"));
    let ds = load_part_dataset(path, DatasetFormat::Native).unwrap();

    for seed in [42, 7] {
        let spec = SplitSpec::new(0.8, seed).unwrap();
        let (train, eval) = split_dataset(&ds, spec);
        let train_ids: Vec<&str> = train.images.iter().map(|i| i.id.as_str()).collect();
        let eval_ids: Vec<&str> = eval.images.iter().map(|i| i.id.as_str()).collect();
        println!("seed {seed}: train {train_ids:?} | eval {eval_ids:?}");

        // Same seed, same partition.
        let (again, _) = split_dataset(&ds, spec);
        assert_eq!(train, again);
    }
}
