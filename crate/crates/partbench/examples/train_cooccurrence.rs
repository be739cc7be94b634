//! Fit part co-occurrence regressors on synthetic part sets with a
//! planted rule, then query them for likely parts.
//!
//! ```bash
//! cargo run -p partbench --example train_cooccurrence
//! ```

use std::collections::BTreeSet;

use partbench::cooc::{predict_likely_parts, train_cooccurrence, CoocConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // Synthetic observations over a small vocabulary. The planted rule:
    // every set containing "wing" also contains "propeller".
    let vocab = ["cockpit", "propeller", "rotor", "tail", "wheel", "wing"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sets: Vec<BTreeSet<String>> = (0..400)
        .map(|_| {
            let mut s: BTreeSet<String> = vocab
                .iter()
                .filter(|_| rng.gen_bool(0.35))
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
        .collect();

    let config = CoocConfig::default();
    let (model, report) = train_cooccurrence(&sets, &config).unwrap();
    println!("vocabulary: {:?}", model.vocabulary());
    for stats in &report.per_part {
        println!(
            "  {:<10} {:>4} iterations, final log-loss {:.4}",
            stats.label,
            stats.iterations,
            stats.final_log_loss.unwrap_or(f64::NAN)
        );
    }

    let current: BTreeSet<String> = ["wing".to_string()].into();
    let ranked = predict_likely_parts(&model, &current, 3, &BTreeSet::new());
    println!("\ngiven {{wing}}, most likely additional parts:");
    for (part, score) in &ranked {
        println!("  {part:<10} p = {score:.3}");
    }
    assert_eq!(ranked[0].0, "propeller", "planted correlate comes first");
}
