//! Train function vectors over a synthetic corpus, persist the model, and
//! reload it bit-exactly.
//!
//! ```bash
//! cargo run --example train_model
//! ```

use evm2vec::synth::straightline_contracts;
use evm2vec::{build_contract_file, load_model, save_model, train, Hyperparams, ThreadMode};

fn main() {
    let corpus: Vec<_> = straightline_contracts(20, 7)
        .iter()
        .map(|(name, code)| build_contract_file(name, code))
        .collect();

    let hyper = Hyperparams {
        dim: 32,
        negatives: 8,
        alpha: 0.1,
        epochs: 15,
        infer_epochs: 15,
        min_count: 1,
        seed: 42,
    };

    let outcome = train(&corpus, &hyper, ThreadMode::Deterministic).expect("training succeeds");
    for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
        println!("epoch {:>2}: mean loss {loss:.4}", epoch + 1);
    }
    println!(
        "vocabulary {} tokens, {} function vectors of dimension {}",
        outcome.params.vocab.len(),
        outcome.params.functions.len(),
        outcome.params.context_dim()
    );

    let path = std::env::temp_dir().join("evm2vec_example_model.ev2v");
    save_model(&outcome.params, &path).expect("model saves");
    let reloaded = load_model(&path).expect("model loads");
    assert_eq!(outcome.params, reloaded);
    println!("model round-tripped bit-exactly through {}", path.display());
}
