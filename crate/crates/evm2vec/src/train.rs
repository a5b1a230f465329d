//! One-epoch-at-a-time training over the corpus hierarchy, and frozen-table
//! inference for queries.
//!
//! Iteration order is contract file → contract → function → position →
//! target token (operation first, then operands). Gradients for one position
//! are computed against a δ snapshot and applied after its token loop. The
//! learning rate decays linearly from α to α/100 over the total step count.
//!
//! Two execution modes: a deterministic single-threaded mode (fixed seed ⇒
//! bit-identical parameters) and an asynchronous parallel mode where workers
//! own disjoint function partitions but race on the shared token tables, so
//! results are nondeterministic by contract.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    neg_sample_step, Embedding, FunctionKey, Hyperparams, ModelParams, TokInstr, TrainingUnit,
};
use crate::opcode;
use crate::schema::ContractFile;
use crate::token::{tokenize, OperandPolicy};
use crate::vocab::Vocabulary;

/// Execution mode for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadMode {
    /// Single thread, bit-reproducible under a fixed seed.
    Deterministic,
    /// N workers with unsynchronized updates to the token tables.
    Parallel(usize),
}

/// Trained parameters plus the mean loss per epoch.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub epoch_loss: Vec<f64>,
}

/// Flattens one function into a training unit under the given vocabulary.
pub fn build_unit(
    file: &str,
    contract: &str,
    function: &crate::disasm::FunctionUnit,
    vocab: &Vocabulary,
    policy: OperandPolicy,
) -> TrainingUnit {
    let mut sequence = Vec::new();
    for block in &function.blocks {
        for ins in &block.instructions {
            let t = tokenize(ins, policy);
            sequence.push(TokInstr {
                op: vocab.id(&t.operation),
                operands: t.operands.iter().map(|o| vocab.id(o)).collect(),
            });
        }
    }
    TrainingUnit {
        key: FunctionKey::new(file, contract, &function.name),
        sequence,
    }
}

/// All training units of a corpus, in corpus order.
pub fn build_units(
    corpus: &[ContractFile],
    vocab: &Vocabulary,
    policy: OperandPolicy,
) -> Vec<TrainingUnit> {
    let mut units = Vec::new();
    for file in corpus {
        for contract in &file.contracts {
            for function in &contract.functions {
                let unit = build_unit(&file.name, &contract.name, function, vocab, policy);
                if !unit.sequence.is_empty() {
                    units.push(unit);
                }
            }
        }
    }
    units
}

struct PassContext<'a> {
    input: &'a Embedding,
    output: &'a Embedding,
    thetas: &'a Embedding,
    vocab: &'a Vocabulary,
    negatives: usize,
    alpha: f64,
    step: &'a AtomicU64,
    total_steps: u64,
    update_tokens: bool,
}

/// Runs one pass over a unit, returning its summed loss.
fn unit_pass(unit: &TrainingUnit, theta_row: usize, ctx: &PassContext, rng: &mut ChaCha8Rng) -> Result<f64> {
    let width = ctx.thetas.dim();
    let mut theta = vec![0.0; width];
    let mut loss_sum = 0.0;

    for j in 0..unit.sequence.len() {
        ctx.thetas.read_row(theta_row, &mut theta);

        let mut theta_update = vec![0.0; width];
        let mut input_updates: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut output_updates: BTreeMap<usize, Vec<f64>> = BTreeMap::new();

        let ins = &unit.sequence[j];
        let targets = std::iter::once(ins.op).chain(ins.operands.iter().copied());
        for t_c in targets {
            let t = ctx.step.fetch_add(1, Ordering::Relaxed);
            let progress = if ctx.total_steps == 0 {
                0.0
            } else {
                t as f64 / ctx.total_steps as f64
            };
            let alpha_t = ctx.alpha * (1.0 - 0.99 * progress).max(0.01);

            let grads = neg_sample_step(
                &unit.sequence,
                j,
                t_c,
                &theta,
                ctx.input,
                ctx.output,
                ctx.vocab,
                ctx.negatives,
                rng,
            );
            if !grads.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: t,
                    function: unit.key.to_string(),
                });
            }
            loss_sum += grads.loss;

            for (slot, g) in theta_update.iter_mut().zip(&grads.theta) {
                *slot -= alpha_t * g;
            }
            if ctx.update_tokens {
                for (tok, grad) in grads.input {
                    let acc = input_updates
                        .entry(tok)
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    for (slot, g) in acc.iter_mut().zip(&grad) {
                        *slot -= alpha_t * g;
                    }
                }
                for (tok, grad) in grads.output {
                    let acc = output_updates
                        .entry(tok)
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    for (slot, g) in acc.iter_mut().zip(&grad) {
                        *slot -= alpha_t * g;
                    }
                }
            }
        }

        ctx.thetas.add_scaled(theta_row, &theta_update, 1.0);
        for (tok, upd) in input_updates {
            ctx.input.add_scaled(tok, &upd, 1.0);
        }
        for (tok, upd) in output_updates {
            ctx.output.add_scaled(tok, &upd, 1.0);
        }
    }
    Ok(loss_sum)
}

/// Trains a model over the corpus.
pub fn train(corpus: &[ContractFile], hyper: &Hyperparams, mode: ThreadMode) -> Result<TrainOutcome> {
    let policy = OperandPolicy::V1;
    let vocab = Vocabulary::build(corpus, policy, hyper.min_count)?;
    let units = build_units(corpus, &vocab, policy);
    if units.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let input = Embedding::uniform(vocab.len(), hyper.dim, 0.5 / hyper.dim as f64, &mut rng);
    let output = Embedding::zeros(vocab.len(), 2 * hyper.dim);
    let thetas = Embedding::zeros(units.len(), 2 * hyper.dim);

    let steps_per_epoch: u64 = units.iter().map(TrainingUnit::token_targets).sum();
    let total_steps = hyper.epochs as u64 * steps_per_epoch;
    let step = AtomicU64::new(0);

    let mut epoch_loss = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let ctx = PassContext {
            input: &input,
            output: &output,
            thetas: &thetas,
            vocab: &vocab,
            negatives: hyper.negatives,
            alpha: hyper.alpha,
            step: &step,
            total_steps,
            update_tokens: true,
        };
        let sum = match mode {
            ThreadMode::Deterministic => {
                let mut sum = 0.0;
                for (row, unit) in units.iter().enumerate() {
                    sum += unit_pass(unit, row, &ctx, &mut rng)?;
                }
                sum
            }
            ThreadMode::Parallel(workers) => {
                let workers = workers.max(1);
                let ctx = &ctx;
                let units = &units;
                std::thread::scope(|scope| -> Result<f64> {
                    let handles: Vec<_> = (0..workers)
                        .map(|w| {
                            scope.spawn(move || -> Result<f64> {
                                let worker_seed = hyper
                                    .seed
                                    .wrapping_add((w as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
                                    .wrapping_add(epoch as u64);
                                let mut rng = ChaCha8Rng::seed_from_u64(worker_seed);
                                let mut sum = 0.0;
                                for row in (w..units.len()).step_by(workers) {
                                    sum += unit_pass(&units[row], row, ctx, &mut rng)?;
                                }
                                Ok(sum)
                            })
                        })
                        .collect();
                    let mut sum = 0.0;
                    for handle in handles {
                        sum += handle.join().expect("training worker panicked")?;
                    }
                    Ok(sum)
                })?
            }
        };
        epoch_loss.push(if steps_per_epoch == 0 {
            0.0
        } else {
            sum / steps_per_epoch as f64
        });
    }

    let functions = units
        .iter()
        .enumerate()
        .map(|(row, unit)| (unit.key.clone(), thetas.row_f32(row)))
        .collect();

    Ok(TrainOutcome {
        params: ModelParams {
            hyper: hyper.clone(),
            policy,
            revision: opcode::REVISION.to_string(),
            vocab,
            input,
            output,
            functions,
        },
        epoch_loss,
    })
}

/// Learns a vector for one query function against a trained model. Token
/// tables are read-only here; only the fresh θ is updated.
pub fn infer(unit: &TrainingUnit, model: &ModelParams, hyper: &Hyperparams) -> Result<Vec<f32>> {
    if unit.sequence.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let theta = Embedding::zeros(1, model.context_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let step = AtomicU64::new(0);
    let total_steps = hyper.infer_epochs as u64 * unit.token_targets();
    let ctx = PassContext {
        input: &model.input,
        output: &model.output,
        thetas: &theta,
        vocab: &model.vocab,
        negatives: hyper.negatives,
        alpha: hyper.alpha,
        step: &step,
        total_steps,
        update_tokens: false,
    };
    for _ in 0..hyper.infer_epochs {
        unit_pass(unit, 0, &ctx, &mut rng)?;
    }
    Ok(theta.row_f32(0))
}
