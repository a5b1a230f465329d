//! Model parameters and the negative-sampling objective.
//!
//! Tokens carry two vector tables: an input table `v` of dimension `d` that
//! feeds the context, and an output (prediction-side) table `v'` of dimension
//! `2d` that is scored against the context. Each function carries a vector
//! `θ` of dimension `2d`. The context of position `j` is
//!
//! ```text
//! CT(in)   = v[op] ‖ mean(v[operand])          (zero second half when no operands)
//! δ(j, f)  = (θ + CT(in[j-1]) + CT(in[j+1])) / 3
//! ```
//!
//! with missing neighbors contributing the zero vector while the divisor
//! stays 3. A target token t_c and k noise tokens t_d drawn from P_n score
//! `X(t) = v'[t]·δ`, giving the loss
//!
//! ```text
//! L = −log σ(X(t_c)) − Σ_d log σ(−X(t_d))
//! ```
//!
//! Storage is f32 (shared across threads through relaxed atomics, so the
//! asynchronous parallel mode can race by contract), while every dot product
//! and gradient is computed in f64.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::token::OperandPolicy;
use crate::vocab::{TokenId, Vocabulary};

/// Training hyperparameters; the defaults are conventional word-embedding
/// settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Token-vector dimension d; function vectors have dimension 2d.
    pub dim: usize,
    /// Negative samples per target token (k).
    pub negatives: usize,
    /// Initial learning rate, decayed linearly to 1% over all steps.
    pub alpha: f64,
    pub epochs: usize,
    pub infer_epochs: usize,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 100,
            negatives: 25,
            alpha: 0.025,
            epochs: 10,
            infer_epochs: 10,
            min_count: 1,
            seed: 42,
        }
    }
}

/// Identity of a function unit inside a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionKey {
    pub file: String,
    pub contract: String,
    pub function: String,
}

impl FunctionKey {
    pub fn new(file: &str, contract: &str, function: &str) -> Self {
        FunctionKey {
            file: file.to_string(),
            contract: contract.to_string(),
            function: function.to_string(),
        }
    }

    pub fn contract_key(&self) -> (String, String) {
        (self.file.clone(), self.contract.clone())
    }
}

impl std::fmt::Display for FunctionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.contract, self.function)
    }
}

/// A tokenized instruction resolved to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokInstr {
    pub op: TokenId,
    pub operands: Vec<TokenId>,
}

/// One function as the trainer sees it: its identity and the flat instruction
/// sequence (blocks concatenated in schema order, so neighbor context crosses
/// block boundaries but never function boundaries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingUnit {
    pub key: FunctionKey,
    pub sequence: Vec<TokInstr>,
}

impl TrainingUnit {
    /// Number of (position, target-token) training steps one pass makes.
    pub fn token_targets(&self) -> u64 {
        self.sequence
            .iter()
            .map(|i| 1 + i.operands.len() as u64)
            .sum()
    }
}

/// Dense f32 matrix shared across threads. All reads and writes go through
/// relaxed atomics: the deterministic single-threaded mode sees ordinary
/// program order, and the parallel mode gets the documented asynchronous-SGD
/// behavior where concurrent updates may be lost but never tear.
#[derive(Debug)]
pub struct Embedding {
    rows: usize,
    dim: usize,
    data: Vec<AtomicU32>,
}

impl Embedding {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        let data = (0..rows * dim)
            .map(|_| AtomicU32::new(0f32.to_bits()))
            .collect();
        Embedding { rows, dim, data }
    }

    /// Entries drawn uniformly from [−scale, scale).
    pub fn uniform<R: Rng>(rows: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * dim)
            .map(|_| {
                let r: f64 = rng.random();
                let v = ((r - 0.5) * 2.0 * scale) as f32;
                AtomicU32::new(v.to_bits())
            })
            .collect();
        Embedding { rows, dim, data }
    }

    pub fn from_f32(rows: usize, dim: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), rows * dim);
        let data = values.into_iter().map(|v| AtomicU32::new(v.to_bits())).collect();
        Embedding { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        f32::from_bits(self.data[row * self.dim + col].load(Ordering::Relaxed))
    }

    pub fn set(&self, row: usize, col: usize, value: f32) {
        self.data[row * self.dim + col].store(value.to_bits(), Ordering::Relaxed);
    }

    /// Copies one row into an f64 buffer.
    pub fn read_row(&self, row: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let base = row * self.dim;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f32::from_bits(self.data[base + i].load(Ordering::Relaxed)) as f64;
        }
    }

    pub fn row_f32(&self, row: usize) -> Vec<f32> {
        let base = row * self.dim;
        (0..self.dim)
            .map(|i| f32::from_bits(self.data[base + i].load(Ordering::Relaxed)))
            .collect()
    }

    /// `row[i] += scale * delta[i]`, rounded to f32 per element.
    pub fn add_scaled(&self, row: usize, delta: &[f64], scale: f64) {
        debug_assert_eq!(delta.len(), self.dim);
        let base = row * self.dim;
        for (i, d) in delta.iter().enumerate() {
            let slot = &self.data[base + i];
            let cur = f32::from_bits(slot.load(Ordering::Relaxed)) as f64;
            slot.store(((cur + scale * d) as f32).to_bits(), Ordering::Relaxed);
        }
    }

    /// Row-major snapshot of the whole table.
    pub fn snapshot(&self) -> Vec<f32> {
        self.data
            .iter()
            .map(|b| f32::from_bits(b.load(Ordering::Relaxed)))
            .collect()
    }
}

impl Clone for Embedding {
    fn clone(&self) -> Self {
        Embedding::from_f32(self.rows, self.dim, self.snapshot())
    }
}

impl PartialEq for Embedding {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.dim == other.dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.load(Ordering::Relaxed) == b.load(Ordering::Relaxed))
    }
}

/// The trained model: vocabulary, both token tables, and one θ per training
/// function.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: Hyperparams,
    pub policy: OperandPolicy,
    /// Opcode-table revision the extractor ran with.
    pub revision: String,
    pub vocab: Vocabulary,
    /// Input token vectors v, |V| × d.
    pub input: Embedding,
    /// Output token vectors v', |V| × 2d.
    pub output: Embedding,
    /// Function vectors θ, each of dimension 2d, in training order.
    pub functions: Vec<(FunctionKey, Vec<f32>)>,
}

impl ModelParams {
    pub fn context_dim(&self) -> usize {
        2 * self.hyper.dim
    }
}

/// Writes CT(in) into `out` (length 2d): the operation vector followed by the
/// mean of the operand vectors, or zeros when the instruction has none.
pub fn ct(ins: &TokInstr, input: &Embedding, out: &mut [f64]) {
    let d = input.dim();
    debug_assert_eq!(out.len(), 2 * d);
    input.read_row(ins.op, &mut out[..d]);
    out[d..].fill(0.0);
    if ins.operands.is_empty() {
        return;
    }
    let inv = 1.0 / ins.operands.len() as f64;
    for &a in &ins.operands {
        let base = &mut out[d..];
        for (i, slot) in base.iter_mut().enumerate() {
            *slot += input.get(a, i) as f64 * inv;
        }
    }
}

/// Joint context δ(j, f) = (θ + CT(in[j-1]) + CT(in[j+1])) / 3. A missing
/// neighbor at either end contributes zero; the divisor stays 3.
pub fn delta(sequence: &[TokInstr], j: usize, theta: &[f64], input: &Embedding) -> Vec<f64> {
    let width = theta.len();
    let mut acc = theta.to_vec();
    let mut buf = vec![0.0; width];
    if j > 0 {
        ct(&sequence[j - 1], input, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    if j + 1 < sequence.len() {
        ct(&sequence[j + 1], input, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    for a in acc.iter_mut() {
        *a /= 3.0;
    }
    acc
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log σ(x), computed without overflow on either tail.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loss and the gradients of one negative-sampling step, as maps from the
/// touched parameters to ∂L/∂param. Applying `param -= α · grad` performs the
/// SGD update.
#[derive(Debug, Clone, Default)]
pub struct StepGradients {
    pub loss: f64,
    /// ∂L/∂θ, length 2d.
    pub theta: Vec<f64>,
    /// ∂L/∂v[t] for the neighbor operation and operand tokens, length d each.
    pub input: BTreeMap<TokenId, Vec<f64>>,
    /// ∂L/∂v'[t] for the target and each drawn negative, length 2d each.
    pub output: BTreeMap<TokenId, Vec<f64>>,
}

/// Evaluates the loss and all gradients for target `t_c` at position `j`
/// against a fixed list of negative draws.
///
/// The per-sample coefficient is g_t = ⟦t = t_c⟧ − σ(X(t)). Each parameter's
/// gradient is scaled by its share of δ: the θ and neighbor-operation shares
/// are 1/3, operand shares 1/(3·|A|).
pub fn step_gradients(
    sequence: &[TokInstr],
    j: usize,
    delta_vec: &[f64],
    t_c: TokenId,
    negatives: &[TokenId],
    output: &Embedding,
) -> StepGradients {
    let width = delta_vec.len();
    let d = width / 2;
    let mut grads = StepGradients {
        loss: 0.0,
        theta: vec![0.0; width],
        input: BTreeMap::new(),
        output: BTreeMap::new(),
    };

    // H = Σ_t g_t · v'[t]; every other gradient is a scaled slice of it.
    let mut h = vec![0.0; width];
    let mut row = vec![0.0; width];
    let samples = std::iter::once((t_c, true)).chain(negatives.iter().map(|&t| (t, false)));
    for (t, positive) in samples {
        output.read_row(t, &mut row);
        let x: f64 = row.iter().zip(delta_vec).map(|(a, b)| a * b).sum();
        let g = if positive {
            grads.loss -= log_sigmoid(x);
            1.0 - sigmoid(x)
        } else {
            grads.loss -= log_sigmoid(-x);
            -sigmoid(x)
        };
        let out_grad = grads
            .output
            .entry(t)
            .or_insert_with(|| vec![0.0; width]);
        for ((og, hv), (&r, &dv)) in out_grad.iter_mut().zip(h.iter_mut()).zip(row.iter().zip(delta_vec)) {
            *og -= g * dv;
            *hv += g * r;
        }
    }

    for (slot, hv) in grads.theta.iter_mut().zip(&h) {
        *slot = -hv / 3.0;
    }

    let mut neighbor = |ins: &TokInstr| {
        let op_grad = grads
            .input
            .entry(ins.op)
            .or_insert_with(|| vec![0.0; d]);
        for (slot, hv) in op_grad.iter_mut().zip(&h[..d]) {
            *slot -= hv / 3.0;
        }
        if ins.operands.is_empty() {
            return;
        }
        let share = 1.0 / (3.0 * ins.operands.len() as f64);
        for &a in &ins.operands {
            let a_grad = grads
                .input
                .entry(a)
                .or_insert_with(|| vec![0.0; d]);
            for (slot, hv) in a_grad.iter_mut().zip(&h[d..]) {
                *slot -= hv * share;
            }
        }
    };
    if j > 0 {
        neighbor(&sequence[j - 1]);
    }
    if j + 1 < sequence.len() {
        neighbor(&sequence[j + 1]);
    }

    grads
}

/// Draws `k` negatives from the vocabulary noise distribution (redrawing any
/// collision with `t_c`) and evaluates the step.
#[allow(clippy::too_many_arguments)]
pub fn neg_sample_step<R: Rng>(
    sequence: &[TokInstr],
    j: usize,
    t_c: TokenId,
    theta: &[f64],
    input: &Embedding,
    output: &Embedding,
    vocab: &Vocabulary,
    k: usize,
    rng: &mut R,
) -> StepGradients {
    let delta_vec = delta(sequence, j, theta, input);
    let negatives: Vec<TokenId> = (0..k)
        .filter_map(|_| vocab.sample_negative(t_c, rng))
        .collect();
    step_gradients(sequence, j, &delta_vec, t_c, &negatives, output)
}
