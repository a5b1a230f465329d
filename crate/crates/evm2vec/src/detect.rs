//! Clone retrieval over function vectors and vulnerability-label propagation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::labels::{LabelStore, VulnTag};
use crate::model::{FunctionKey, ModelParams};

/// Cosine similarity, clamped to [−1, 1]. Either vector having zero norm
/// compares as 0: a degenerate function should match nothing.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += a as f64 * a as f64;
        nv += b as f64 * b as f64;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// One indexed training function with its owning contract's tags.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub key: FunctionKey,
    pub vector: Vec<f32>,
    pub tags: BTreeSet<VulnTag>,
}

/// A retrieval hit at or above the similarity threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneMatch {
    pub key: FunctionKey,
    pub similarity: f64,
    /// Vulnerability tags of the matched contract.
    pub tags: BTreeSet<VulnTag>,
}

/// Immutable linear-scan index over function vectors. Desk-scale corpora
/// do not need approximate search.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
    dim: usize,
}

impl VectorIndex {
    /// Indexes every function vector of a trained model, attaching each
    /// owning contract's tags from the label store.
    pub fn build(model: &ModelParams, labels: &LabelStore) -> Self {
        let entries = model
            .functions
            .iter()
            .map(|(key, vector)| IndexEntry {
                key: key.clone(),
                vector: vector.clone(),
                tags: labels.tags(&key.file, &key.contract),
            })
            .collect();
        VectorIndex {
            entries,
            dim: model.context_dim(),
        }
    }

    pub fn from_entries(entries: Vec<IndexEntry>, dim: usize) -> Self {
        VectorIndex { entries, dim }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// All entries with similarity ≥ threshold, sorted by similarity
    /// descending with ties broken by function key ascending, truncated to
    /// `top_k`. `exclude` suppresses the query's own identity when evaluating
    /// on the training set.
    pub fn find_clones(
        &self,
        query: &[f32],
        threshold: f64,
        top_k: usize,
        exclude: Option<&FunctionKey>,
    ) -> Result<Vec<CloneMatch>> {
        let mut matches = Vec::new();
        for entry in &self.entries {
            if exclude == Some(&entry.key) {
                continue;
            }
            let similarity = cosine(query, &entry.vector)?;
            if similarity >= threshold {
                matches.push(CloneMatch {
                    key: entry.key.clone(),
                    similarity,
                    tags: entry.tags.clone(),
                });
            }
        }
        matches.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .expect("similarities are finite")
                .then_with(|| a.key.cmp(&b.key))
        });
        matches.truncate(top_k);
        Ok(matches)
    }

    /// Contract-level aggregate vectors: the mean of each contract's function
    /// vectors. Used for reporting only; detection runs at function level.
    pub fn contract_vectors(&self) -> BTreeMap<(String, String), Vec<f32>> {
        let mut sums: BTreeMap<(String, String), (Vec<f64>, usize)> = BTreeMap::new();
        for entry in &self.entries {
            let slot = sums
                .entry(entry.key.contract_key())
                .or_insert_with(|| (vec![0.0; self.dim], 0));
            for (s, &v) in slot.0.iter_mut().zip(&entry.vector) {
                *s += v as f64;
            }
            slot.1 += 1;
        }
        sums.into_iter()
            .map(|(k, (sum, n))| {
                let mean = sum.iter().map(|s| (s / n as f64) as f32).collect();
                (k, mean)
            })
            .collect()
    }
}

/// Per-tag ε scores for one test contract with the supporting evidence.
#[derive(Debug, Clone, Default)]
pub struct VulnerabilityReport {
    /// ε per taxonomy tag: the maximum similarity over evidence matches
    /// carrying that tag, or 0 with no evidence.
    pub epsilon: BTreeMap<VulnTag, f64>,
    /// Matches that carried each tag, strongest first.
    pub evidence: BTreeMap<VulnTag, Vec<CloneMatch>>,
}

impl VulnerabilityReport {
    /// Tags whose ε reaches the prediction threshold.
    pub fn predictions(&self, threshold: f64) -> BTreeSet<VulnTag> {
        self.epsilon
            .iter()
            .filter(|(_, &e)| e >= threshold)
            .map(|(&t, _)| t)
            .collect()
    }

    pub fn epsilon_of(&self, tag: VulnTag) -> f64 {
        self.epsilon.get(&tag).copied().unwrap_or(0.0)
    }
}

/// Folds the clone matches of a test contract's functions into per-tag ε
/// scores: ε_i is the maximum similarity over all matches whose contract
/// carries tag i.
pub fn propagate_labels(matches_per_function: &[Vec<CloneMatch>]) -> VulnerabilityReport {
    let mut report = VulnerabilityReport::default();
    for tag in VulnTag::ALL {
        report.epsilon.insert(tag, 0.0);
    }
    for matches in matches_per_function {
        for m in matches {
            for &tag in &m.tags {
                let e = report.epsilon.entry(tag).or_insert(0.0);
                if m.similarity > *e {
                    *e = m.similarity;
                }
                report.evidence.entry(tag).or_default().push(m.clone());
            }
        }
    }
    for evidence in report.evidence.values_mut() {
        evidence.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .expect("similarities are finite")
                .then_with(|| a.key.cmp(&b.key))
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: &str) -> FunctionKey {
        FunctionKey::new(n, n, "main")
    }

    fn entry(n: &str, v: &[f32], tags: &[VulnTag]) -> IndexEntry {
        IndexEntry {
            key: key(n),
            vector: v.to_vec(),
            tags: tags.iter().copied().collect(),
        }
    }

    #[test]
    fn cosine_identity_orthogonal_zero() {
        let x = [0.3f32, -1.2, 4.5];
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_match_ranks_first() {
        let index = VectorIndex::from_entries(
            vec![
                entry("a", &[1.0, 0.0], &[]),
                entry("b", &[0.9, 0.1], &[]),
                entry("c", &[0.0, 1.0], &[]),
            ],
            2,
        );
        let hits = index.find_clones(&[1.0, 0.0], 0.8, 5, None).unwrap();
        assert_eq!(hits[0].key, key("a"));
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unattainable_threshold_yields_empty() {
        let index = VectorIndex::from_entries(vec![entry("a", &[1.0, 0.0], &[])], 2);
        let hits = index.find_clones(&[1.0, 0.0], 1.01, 5, None).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn threshold_filters_and_orders() {
        // three entries at similarities ~{0.95, 0.85, 0.5}
        let q = [1.0f32, 0.0];
        let at = |sim: f64| {
            let angle = sim.acos();
            [angle.cos() as f32, angle.sin() as f32]
        };
        let index = VectorIndex::from_entries(
            vec![
                entry("mid", &at(0.85), &[]),
                entry("low", &at(0.5), &[]),
                entry("high", &at(0.95), &[]),
            ],
            2,
        );
        let hits = index.find_clones(&q, 0.8, 5, None).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].key, key("high"));
        assert_eq!(hits[1].key, key("mid"));
    }

    #[test]
    fn exclusion_suppresses_own_identity() {
        let index = VectorIndex::from_entries(
            vec![entry("a", &[1.0, 0.0], &[]), entry("b", &[1.0, 0.0], &[])],
            2,
        );
        let hits = index.find_clones(&[1.0, 0.0], 0.8, 5, Some(&key("a"))).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].key, key("b"));
    }

    #[test]
    fn scale_invariance_of_match_set() {
        let index = VectorIndex::from_entries(
            vec![
                entry("a", &[0.6, 0.8], &[]),
                entry("b", &[1.0, 0.0], &[]),
                entry("c", &[-0.6, 0.8], &[]),
            ],
            2,
        );
        let base = index.find_clones(&[0.5, 0.5], 0.3, 5, None).unwrap();
        for scale in [0.001f32, 7.0, 1e6] {
            let scaled = index
                .find_clones(&[0.5 * scale, 0.5 * scale], 0.3, 5, None)
                .unwrap();
            let keys: Vec<_> = scaled.iter().map(|m| m.key.clone()).collect();
            let expect: Vec<_> = base.iter().map(|m| m.key.clone()).collect();
            assert_eq!(keys, expect);
        }
    }

    #[test]
    fn raising_threshold_never_adds_matches() {
        let index = VectorIndex::from_entries(
            vec![
                entry("a", &[0.6, 0.8], &[]),
                entry("b", &[1.0, 0.0], &[]),
                entry("c", &[0.0, 1.0], &[]),
            ],
            2,
        );
        let q = [0.7f32, 0.7];
        let mut prev = index.find_clones(&q, -1.0, 10, None).unwrap();
        for t in [0.0, 0.5, 0.8, 0.95, 1.0] {
            let cur = index.find_clones(&q, t, 10, None).unwrap();
            assert!(cur.len() <= prev.len());
            for m in &cur {
                assert!(prev.iter().any(|p| p.key == m.key));
            }
            prev = cur;
        }
    }

    #[test]
    fn lowering_top_k_keeps_the_prefix() {
        let index = VectorIndex::from_entries(
            vec![
                entry("a", &[0.6, 0.8], &[]),
                entry("b", &[1.0, 0.0], &[]),
                entry("c", &[0.8, 0.6], &[]),
                entry("d", &[0.0, 1.0], &[]),
            ],
            2,
        );
        let q = [0.7f32, 0.7];
        let full = index.find_clones(&q, -1.0, 4, None).unwrap();
        for k in 0..4 {
            let cut = index.find_clones(&q, -1.0, k, None).unwrap();
            assert_eq!(cut.as_slice(), &full[..k]);
        }
    }

    #[test]
    fn single_evidence_sets_one_epsilon() {
        let m = CloneMatch {
            key: key("t"),
            similarity: 0.9,
            tags: BTreeSet::from([VulnTag::Reentrancy]),
        };
        let report = propagate_labels(&[vec![m]]);
        assert_eq!(report.epsilon_of(VulnTag::Reentrancy), 0.9);
        for tag in VulnTag::ALL {
            if tag != VulnTag::Reentrancy {
                assert_eq!(report.epsilon_of(tag), 0.0);
            }
        }
        assert_eq!(
            report.predictions(0.8),
            BTreeSet::from([VulnTag::Reentrancy])
        );
    }

    #[test]
    fn no_matches_means_all_zero() {
        let report = propagate_labels(&[vec![], vec![]]);
        for tag in VulnTag::ALL {
            assert_eq!(report.epsilon_of(tag), 0.0);
        }
        assert!(report.predictions(0.8).is_empty());
    }

    #[test]
    fn epsilon_takes_the_maximum() {
        let m1 = CloneMatch {
            key: key("x"),
            similarity: 0.85,
            tags: BTreeSet::from([VulnTag::IntegerOverflow]),
        };
        let m2 = CloneMatch {
            key: key("y"),
            similarity: 0.92,
            tags: BTreeSet::from([VulnTag::IntegerOverflow]),
        };
        let report = propagate_labels(&[vec![m1], vec![m2]]);
        assert_eq!(report.epsilon_of(VulnTag::IntegerOverflow), 0.92);
        let ev = &report.evidence[&VulnTag::IntegerOverflow];
        assert_eq!(ev.len(), 2);
        assert!(ev[0].similarity >= ev[1].similarity);
    }

    #[test]
    fn epsilon_bounds_and_evidence_invariant() {
        let m = CloneMatch {
            key: key("z"),
            similarity: 1.0,
            tags: BTreeSet::from([VulnTag::GasConsumption]),
        };
        let report = propagate_labels(&[vec![m]]);
        for (&tag, &e) in &report.epsilon {
            assert!((0.0..=1.0).contains(&e));
            if e > 0.0 {
                assert!(!report.evidence[&tag].is_empty());
            }
        }
    }

    #[test]
    fn contract_vectors_average_functions() {
        let mut e1 = entry("a", &[1.0, 0.0], &[]);
        let mut e2 = entry("a", &[0.0, 1.0], &[]);
        e1.key = FunctionKey::new("a", "a", "f1");
        e2.key = FunctionKey::new("a", "a", "f2");
        let index = VectorIndex::from_entries(vec![e1, e2], 2);
        let aggregates = index.contract_vectors();
        let v = &aggregates[&("a".to_string(), "a".to_string())];
        assert_eq!(v, &vec![0.5, 0.5]);
    }
}
