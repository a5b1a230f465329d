//! Retrieve code clones of a rewritten function: train on originals and
//! variants, query with a fresh statement-deleted rewrite, and rank matches.
//!
//! ```bash
//! cargo run --example find_clones
//! ```

use evm2vec::synth::BodyTemplate;
use evm2vec::token::OperandPolicy;
use evm2vec::{
    build_contract_file, build_unit, infer, train, Hyperparams, LabelStore, ThreadMode,
    VectorIndex,
};

fn main() {
    // ten families; for each, the original and one rewrite variant
    let mut corpus = Vec::new();
    for family in 0..10u64 {
        let template = BodyTemplate::generate(family, 3, 9);
        corpus.push(build_contract_file(&format!("orig_{family}"), &template.bytes()));
        corpus.push(build_contract_file(
            &format!("variant_{family}"),
            &template.delete_statement(2).bytes(),
        ));
    }

    let hyper = Hyperparams {
        dim: 32,
        negatives: 8,
        alpha: 0.1,
        epochs: 30,
        infer_epochs: 30,
        min_count: 1,
        seed: 1,
    };
    let model = train(&corpus, &hyper, ThreadMode::Deterministic)
        .expect("training succeeds")
        .params;
    let index = VectorIndex::build(&model, &LabelStore::new());

    // a second, unseen rewrite of family 4
    let query_body = BodyTemplate::generate(4, 3, 9).delete_statement(6).bytes();
    let query_file = build_contract_file("query", &query_body);
    let unit = build_unit(
        &query_file.name,
        &query_file.contracts[0].name,
        &query_file.contracts[0].functions[0],
        &model.vocab,
        OperandPolicy::V1,
    );
    let theta = infer(&unit, &model, &hyper).expect("inference succeeds");

    println!("clones of the unseen rewrite (threshold 0.8, top 5):");
    let matches = index.find_clones(&theta, 0.8, 5, None).expect("query runs");
    for (rank, m) in matches.iter().enumerate() {
        println!("  {}. {}  similarity {:.4}", rank + 1, m.key, m.similarity);
    }
    assert!(
        matches.first().is_some_and(|m| m.key.file.ends_with("_4")),
        "the family-4 functions should rank first"
    );
}
