//! 10-fold cross-validation of clone-based vulnerability detection on a
//! synthetic labeled corpus, printing the per-tag metrics table and CSV.
//!
//! ```bash
//! cargo run --example cross_validate
//! ```

use evm2vec::synth::labeled_template_corpus;
use evm2vec::{evaluate, EvalConfig, Hyperparams};

fn main() {
    let (corpus, labels) = labeled_template_corpus(20, 3, 55);
    println!(
        "corpus: {} contracts ({} labeled), 10 folds, threshold 0.8",
        corpus.len(),
        labels.len()
    );

    let cfg = EvalConfig {
        folds: 10,
        seed: 99,
        hyper: Hyperparams {
            dim: 16,
            negatives: 6,
            alpha: 0.1,
            epochs: 25,
            infer_epochs: 25,
            min_count: 1,
            seed: 7,
        },
        threshold: 0.8,
        top_k: 5,
    };

    let metrics = evaluate(&corpus, &labels, &cfg).expect("evaluation runs");
    print!("{}", metrics.to_table());
    println!(
        "mean inference time {:.1} ms per contract\n",
        metrics.mean_infer_ms
    );
    print!("{}", metrics.to_csv());
}
