//! Propagate vulnerability labels to an unseen rewrite through clone
//! retrieval: ε per tag is the best similarity among matches carrying it.
//!
//! ```bash
//! cargo run --example detect_vulnerabilities
//! ```

use evm2vec::detect::propagate_labels;
use evm2vec::synth::labeled_template_corpus;
use evm2vec::token::OperandPolicy;
use evm2vec::{build_unit, infer, train, Hyperparams, ThreadMode, VectorIndex};

fn main() {
    let (corpus, labels) = labeled_template_corpus(10, 3, 5);
    let hyper = Hyperparams {
        dim: 32,
        negatives: 8,
        alpha: 0.1,
        epochs: 30,
        infer_epochs: 30,
        min_count: 1,
        seed: 2,
    };

    // hold the last contract out as the "unseen" query
    let query_file = corpus.last().unwrap().clone();
    let training: Vec<_> = corpus[..corpus.len() - 1].to_vec();
    let truth = labels.tags(&query_file.name, &query_file.contracts[0].name);

    let model = train(&training, &hyper, ThreadMode::Deterministic)
        .expect("training succeeds")
        .params;
    let index = VectorIndex::build(&model, &labels);

    let threshold = 0.8;
    let mut matches_per_function = Vec::new();
    for function in &query_file.contracts[0].functions {
        let unit = build_unit(
            &query_file.name,
            &query_file.contracts[0].name,
            function,
            &model.vocab,
            OperandPolicy::V1,
        );
        let theta = infer(&unit, &model, &hyper).expect("inference succeeds");
        matches_per_function.push(index.find_clones(&theta, threshold, 5, None).expect("query"));
    }

    let report = propagate_labels(&matches_per_function);
    println!("query {} (true tags: {truth:?})", query_file.name);
    for (tag, eps) in &report.epsilon {
        if *eps > 0.0 {
            let mark = if *eps >= threshold { "  <- predicted" } else { "" };
            println!("  epsilon {tag:<20} {eps:.4}{mark}");
        }
    }
    let predicted = report.predictions(threshold);
    println!("predicted: {predicted:?}");
    assert!(
        predicted.iter().any(|t| truth.contains(t)),
        "the true tag should propagate from the sibling variants"
    );
}
