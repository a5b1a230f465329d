//! Token vocabulary with the noise distribution used for negative sampling.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::schema::ContractFile;
use crate::token::{tokenize, OperandPolicy};

/// Sentinel token that absorbs rare and unseen tokens.
pub const UNK: &str = "UNK";

pub type TokenId = usize;

/// Token ↔ id map with frequencies and the sampling distribution
/// P_n(t) ∝ freq(t)^(3/4).
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, TokenId>,
    noise: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Vocabulary {
    /// Builds the vocabulary over a corpus. Tokens seen fewer than `min_count`
    /// times fold into `UNK`, which is always present (possibly at frequency
    /// zero) so unseen query tokens have somewhere to land.
    pub fn build(corpus: &[ContractFile], policy: OperandPolicy, min_count: u64) -> Result<Self> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for file in corpus {
            for contract in &file.contracts {
                for function in &contract.functions {
                    for block in &function.blocks {
                        for ins in &block.instructions {
                            let t = tokenize(ins, policy);
                            *counts.entry(t.operation).or_insert(0) += 1;
                            for operand in t.operands {
                                *counts.entry(operand).or_insert(0) += 1;
                            }
                        }
                    }
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let mut unk_freq = 0u64;
        let mut kept: Vec<(String, u64)> = Vec::new();
        for (token, freq) in counts {
            if freq < min_count || token == UNK {
                unk_freq += freq;
            } else {
                kept.push((token, freq));
            }
        }

        let mut tokens = Vec::with_capacity(kept.len() + 1);
        let mut freqs = Vec::with_capacity(kept.len() + 1);
        tokens.push(UNK.to_string());
        freqs.push(unk_freq);
        for (token, freq) in kept {
            tokens.push(token);
            freqs.push(freq);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    /// Reassembles a vocabulary from its stored parts, recomputing the noise
    /// distribution. `tokens[0]` must be `UNK`.
    pub fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        assert_eq!(tokens.len(), freqs.len());
        assert_eq!(tokens.first().map(String::as_str), Some(UNK));
        let index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();

        let weights: Vec<f64> = freqs.iter().map(|&f| (f as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let noise: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(noise.len());
        let mut acc = 0.0;
        for p in &noise {
            acc += p;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }

        Vocabulary {
            tokens,
            freqs,
            index,
            noise,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token, folding unknown tokens into `UNK`.
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn noise_prob(&self, id: TokenId) -> f64 {
        self.noise[id]
    }

    /// Draws one token from P_n.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> TokenId {
        let x: f64 = rng.random();
        self.cumulative.partition_point(|&c| c < x)
    }

    /// Draws a negative sample distinct from `exclude`, redrawing on
    /// collision. Returns `None` when no other token has sampling mass.
    pub fn sample_negative<R: Rng>(&self, exclude: TokenId, rng: &mut R) -> Option<TokenId> {
        if 1.0 - self.noise[exclude] < 1e-12 {
            return None;
        }
        loop {
            let id = self.sample(rng);
            if id != exclude {
                return Some(id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::build_contract_file;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab_from(tokens: &[(&str, u64)]) -> Vocabulary {
        let mut t = vec![UNK.to_string()];
        let mut f = vec![0u64];
        for (tok, freq) in tokens {
            t.push(tok.to_string());
            f.push(*freq);
        }
        Vocabulary::from_parts(t, f)
    }

    #[test]
    fn noise_distribution_uses_three_quarter_power() {
        // P_n(ADD) = 3^0.75 / (3^0.75 + 1) ≈ 0.695, P_n(MUL) ≈ 0.305
        let v = vocab_from(&[("ADD", 3), ("MUL", 1)]);
        let expected = 3f64.powf(0.75) / (3f64.powf(0.75) + 1.0);
        assert!((v.noise_prob(v.id("ADD")) - expected).abs() < 1e-9);
        assert!((v.noise_prob(v.id("MUL")) - (1.0 - expected)).abs() < 1e-9);
    }

    #[test]
    fn single_token_normalizes_to_one() {
        let v = vocab_from(&[("ADD", 5)]);
        assert!((v.noise_prob(v.id("ADD")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_probabilities_sum_to_one() {
        let v = vocab_from(&[("ADD", 3), ("MUL", 1), ("PUSH1", 10), ("0x01", 7)]);
        let sum: f64 = (0..v.len()).map(|i| v.noise_prob(i)).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn min_count_folds_into_unk() {
        // PUSH1 0x01, PUSH1 0x01, PUSH1 0x02, ADD: with min_count 2 the
        // singleton tokens 0x02 and ADD fold into UNK
        let cf = build_contract_file("t", &[0x60, 0x01, 0x60, 0x01, 0x60, 0x02, 0x01]);
        let v = Vocabulary::build(std::slice::from_ref(&cf), OperandPolicy::V1, 2).unwrap();
        assert!(v.contains("PUSH1"));
        assert!(v.contains("0x01"));
        assert!(!v.contains("0x02"));
        assert!(!v.contains("ADD"));
        assert_eq!(v.id("0x02"), 0);
        assert_eq!(v.freqs()[0], 2);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = Vocabulary::build(&[], OperandPolicy::V1, 1).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn build_is_deterministic() {
        let cf = build_contract_file("t", &[0x60, 0x01, 0x60, 0x02, 0x01, 0x00, 0x33, 0x42]);
        let a = Vocabulary::build(std::slice::from_ref(&cf), OperandPolicy::V1, 1).unwrap();
        let b = Vocabulary::build(std::slice::from_ref(&cf), OperandPolicy::V1, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_respects_exclusion() {
        let v = vocab_from(&[("ADD", 3), ("MUL", 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let add = v.id("ADD");
        for _ in 0..200 {
            let drawn = v.sample_negative(add, &mut rng).unwrap();
            assert_ne!(drawn, add);
        }
        // single token with all the mass: no negative exists
        let lone = vocab_from(&[("ADD", 5)]);
        assert_eq!(lone.sample_negative(lone.id("ADD"), &mut rng), None);
    }
}
