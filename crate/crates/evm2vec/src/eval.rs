//! K-fold cross-validation of the clone-based vulnerability detector.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect::{propagate_labels, VectorIndex};
use crate::error::{Error, Result};
use crate::labels::{LabelStore, VulnTag};
use crate::model::Hyperparams;
use crate::schema::ContractFile;
use crate::token::OperandPolicy;
use crate::train::{build_unit, infer, train, ThreadMode};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub folds: usize,
    /// Seed for the contract shuffle; model training uses `hyper.seed`.
    pub seed: u64,
    pub hyper: Hyperparams,
    /// Clone threshold, reused as the prediction threshold on ε.
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            seed: 42,
            hyper: Hyperparams::default(),
            threshold: 0.8,
            top_k: 5,
        }
    }
}

/// Confusion counts and derived ratios for one tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagMetrics {
    pub tag: VulnTag,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Full cross-validation result (Table-style: one row per tag plus macro
/// aggregates and their spread).
#[derive(Debug, Clone)]
pub struct Metrics {
    pub per_tag: Vec<TagMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_accuracy: f64,
    pub std_precision: f64,
    pub std_recall: f64,
    pub std_f1: f64,
    /// 0/0 ratios reported as 0 — typically folds whose test split carried
    /// few or no clones of a tag.
    pub undefined_ratios: usize,
    pub contracts: usize,
    /// Mean wall-clock milliseconds to infer and match one test contract.
    pub mean_infer_ms: f64,
}

/// A ratio with the 0/0 → 0 convention; bumps the undefined counter.
fn ratio(num: usize, den: usize, undefined: &mut usize) -> f64 {
    if den == 0 {
        *undefined += 1;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let m = mean(values.clone());
    (values.map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt()
}

/// One (file, contract) pair in the corpus.
type ContractRef = (usize, usize);

fn contract_refs(corpus: &[ContractFile]) -> Vec<ContractRef> {
    let mut refs = Vec::new();
    for (fi, file) in corpus.iter().enumerate() {
        for (ci, _) in file.contracts.iter().enumerate() {
            refs.push((fi, ci));
        }
    }
    refs
}

/// Near-equal split of the shuffled refs into `folds` parts: every contract
/// lands in exactly one test fold.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    (0..folds)
        .map(|f| indices[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

struct FoldOutcome {
    // per tag: tp, fp, fn, tn
    confusion: Vec<[usize; 4]>,
    infer_ms_total: f64,
    inferred: usize,
}

fn run_fold(
    corpus: &[ContractFile],
    labels: &LabelStore,
    refs: &[ContractRef],
    test_set: &BTreeSet<usize>,
    cfg: &EvalConfig,
) -> Result<FoldOutcome> {
    // carve out the training corpus, dropping files emptied by the split
    let test_refs: BTreeSet<ContractRef> = test_set.iter().map(|&i| refs[i]).collect();
    let mut train_corpus: Vec<ContractFile> = Vec::new();
    for (fi, file) in corpus.iter().enumerate() {
        let kept: Vec<_> = file
            .contracts
            .iter()
            .enumerate()
            .filter(|(ci, _)| !test_refs.contains(&(fi, *ci)))
            .map(|(_, c)| c.clone())
            .collect();
        if !kept.is_empty() {
            train_corpus.push(ContractFile {
                name: file.name.clone(),
                md5: file.md5.clone(),
                contracts: kept,
            });
        }
    }
    if train_corpus.is_empty() {
        return Err(Error::Eval("a fold left the training set empty".to_string()));
    }

    let outcome = train(&train_corpus, &cfg.hyper, ThreadMode::Deterministic)?;
    let model = outcome.params;
    let index = VectorIndex::build(&model, labels);

    let mut confusion = vec![[0usize; 4]; VulnTag::ALL.len()];
    let mut infer_ms_total = 0.0;
    let mut inferred = 0usize;

    for &(fi, ci) in &test_refs {
        let file = &corpus[fi];
        let contract = &file.contracts[ci];
        let started = Instant::now();
        let mut matches_per_function = Vec::new();
        for function in &contract.functions {
            let unit = build_unit(
                &file.name,
                &contract.name,
                function,
                &model.vocab,
                OperandPolicy::V1,
            );
            if unit.sequence.is_empty() {
                continue;
            }
            let theta = infer(&unit, &model, &cfg.hyper)?;
            matches_per_function.push(index.find_clones(
                &theta,
                cfg.threshold,
                cfg.top_k,
                None,
            )?);
        }
        infer_ms_total += started.elapsed().as_secs_f64() * 1e3;
        inferred += 1;

        let report = propagate_labels(&matches_per_function);
        let predicted = report.predictions(cfg.threshold);
        let truth = labels.tags(&file.name, &contract.name);
        for (ti, tag) in VulnTag::ALL.iter().enumerate() {
            match (predicted.contains(tag), truth.contains(tag)) {
                (true, true) => confusion[ti][0] += 1,
                (true, false) => confusion[ti][1] += 1,
                (false, true) => confusion[ti][2] += 1,
                (false, false) => confusion[ti][3] += 1,
            }
        }
    }

    Ok(FoldOutcome {
        confusion,
        infer_ms_total,
        inferred,
    })
}

/// Shuffles contracts into `folds` near-equal parts, trains on each
/// complement, infers and label-propagates the fold members, and accumulates
/// per-tag confusion counts. Folds run on separate threads with independent
/// models; the result is deterministic for a fixed seed.
pub fn evaluate(corpus: &[ContractFile], labels: &LabelStore, cfg: &EvalConfig) -> Result<Metrics> {
    let refs = contract_refs(corpus);
    if cfg.folds < 2 {
        return Err(Error::Eval(format!(
            "{} folds would leave the training set empty",
            cfg.folds
        )));
    }
    if refs.len() < cfg.folds {
        return Err(Error::Eval(format!(
            "{} contracts cannot fill {} folds",
            refs.len(),
            cfg.folds
        )));
    }

    let partition = fold_partition(refs.len(), cfg.folds, cfg.seed);

    let outcomes: Vec<Result<FoldOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = partition
            .iter()
            .map(|test| {
                let test_set: BTreeSet<usize> = test.iter().copied().collect();
                let refs = &refs;
                scope.spawn(move || run_fold(corpus, labels, refs, &test_set, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold worker panicked"))
            .collect()
    });

    let mut confusion = vec![[0usize; 4]; VulnTag::ALL.len()];
    let mut infer_ms_total = 0.0;
    let mut inferred = 0usize;
    for outcome in outcomes {
        let outcome = outcome?;
        for (acc, fold) in confusion.iter_mut().zip(&outcome.confusion) {
            for (a, f) in acc.iter_mut().zip(fold) {
                *a += f;
            }
        }
        infer_ms_total += outcome.infer_ms_total;
        inferred += outcome.inferred;
    }

    let mut undefined = 0usize;
    let per_tag: Vec<TagMetrics> = VulnTag::ALL
        .iter()
        .zip(&confusion)
        .map(|(&tag, &[tp, fp, fn_, tn])| {
            let precision = ratio(tp, tp + fp, &mut undefined);
            let recall = ratio(tp, tp + fn_, &mut undefined);
            let f1 = if precision + recall == 0.0 {
                undefined += 1;
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, &mut undefined);
            TagMetrics {
                tag,
                tp,
                fp,
                fn_,
                tn,
                precision,
                recall,
                f1,
                accuracy,
            }
        })
        .collect();

    Ok(Metrics {
        macro_precision: mean(per_tag.iter().map(|t| t.precision)),
        macro_recall: mean(per_tag.iter().map(|t| t.recall)),
        macro_f1: mean(per_tag.iter().map(|t| t.f1)),
        macro_accuracy: mean(per_tag.iter().map(|t| t.accuracy)),
        std_precision: std_dev(per_tag.iter().map(|t| t.precision)),
        std_recall: std_dev(per_tag.iter().map(|t| t.recall)),
        std_f1: std_dev(per_tag.iter().map(|t| t.f1)),
        per_tag,
        undefined_ratios: undefined,
        contracts: refs.len(),
        mean_infer_ms: if inferred == 0 {
            0.0
        } else {
            infer_ms_total / inferred as f64
        },
    })
}

impl Metrics {
    /// Plain-text table, one row per tag plus the macro aggregates.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>8} {:>10} {:>8} {:>8} {:>9}\n",
            "vulnerability", "severity", "precision", "recall", "f1", "accuracy"
        ));
        for row in &self.per_tag {
            out.push_str(&format!(
                "{:<20} {:>8} {:>9.1}% {:>7.1}% {:>7.1}% {:>8.1}%\n",
                row.tag.as_str(),
                row.tag.severity(),
                row.precision * 100.0,
                row.recall * 100.0,
                row.f1 * 100.0,
                row.accuracy * 100.0
            ));
        }
        out.push_str(&format!(
            "{:<20} {:>8} {:>9.1}% {:>7.1}% {:>7.1}% {:>8.1}%\n",
            "average",
            "",
            self.macro_precision * 100.0,
            self.macro_recall * 100.0,
            self.macro_f1 * 100.0,
            self.macro_accuracy * 100.0
        ));
        out.push_str(&format!(
            "{:<20} {:>8} {:>10.1} {:>8.1} {:>8.1}\n",
            "std deviation",
            "",
            self.std_precision * 100.0,
            self.std_recall * 100.0,
            self.std_f1 * 100.0
        ));
        if self.undefined_ratios > 0 {
            out.push_str(&format!(
                "note: {} undefined (0/0) ratios reported as 0 — few clones in those splits\n",
                self.undefined_ratios
            ));
        }
        out
    }

    /// Machine-readable CSV: one row per tag and a trailing macro row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,precision,recall,f1,accuracy,tp,fp,fn,tn\n");
        for row in &self.per_tag {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{},{},{},{}\n",
                row.tag.as_str(),
                row.precision,
                row.recall,
                row.f1,
                row.accuracy,
                row.tp,
                row.fp,
                row.fn_,
                row.tn
            ));
        }
        let (tp, fp, fn_, tn) = self.per_tag.iter().fold((0, 0, 0, 0), |acc, r| {
            (acc.0 + r.tp, acc.1 + r.fp, acc.2 + r.fn_, acc.3 + r.tn)
        });
        out.push_str(&format!(
            "macro,{:.4},{:.4},{:.4},{:.4},{},{},{},{}\n",
            self.macro_precision, self.macro_recall, self.macro_f1, self.macro_accuracy,
            tp, fp, fn_, tn
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::build_contract_file;
    use crate::synth::BodyTemplate;

    fn duplicated_corpus(copies: usize) -> (Vec<ContractFile>, LabelStore) {
        let mut corpus = Vec::new();
        let mut labels = LabelStore::new();
        for template in 0..8u64 {
            let body = BodyTemplate::generate(template, 11, 9).bytes();
            for copy in 0..copies {
                let name = format!("t{template}_c{copy}");
                corpus.push(build_contract_file(&name, &body));
                labels.insert(
                    &name,
                    &name,
                    VulnTag::ALL[template as usize % VulnTag::ALL.len()],
                );
            }
        }
        (corpus, labels)
    }

    fn tiny_hyper() -> Hyperparams {
        Hyperparams {
            dim: 16,
            negatives: 6,
            alpha: 0.1,
            epochs: 25,
            infer_epochs: 25,
            min_count: 1,
            seed: 5,
        }
    }

    #[test]
    fn fold_partition_covers_each_contract_once() {
        let parts = fold_partition(23, 10, 99);
        assert_eq!(parts.len(), 10);
        let mut seen = BTreeSet::new();
        for part in &parts {
            for &i in part {
                assert!(seen.insert(i), "contract {i} in two folds");
            }
        }
        assert_eq!(seen.len(), 23);
        for part in &parts {
            assert!(part.len() == 2 || part.len() == 3);
        }
    }

    #[test]
    fn too_few_contracts_errors() {
        let (corpus, labels) = duplicated_corpus(1);
        let cfg = EvalConfig {
            folds: 100,
            hyper: tiny_hyper(),
            ..EvalConfig::default()
        };
        assert!(matches!(evaluate(&corpus, &labels, &cfg), Err(Error::Eval(_))));
    }

    #[test]
    fn one_fold_errors() {
        let (corpus, labels) = duplicated_corpus(1);
        let cfg = EvalConfig {
            folds: 1,
            hyper: tiny_hyper(),
            ..EvalConfig::default()
        };
        assert!(matches!(evaluate(&corpus, &labels, &cfg), Err(Error::Eval(_))));
    }

    #[test]
    fn duplicates_in_training_give_full_recall() {
        // every contract has two byte-identical copies, so with 4 folds each
        // test contract keeps at least one duplicate in the training set
        let (corpus, labels) = duplicated_corpus(3);
        let cfg = EvalConfig {
            folds: 4,
            seed: 3,
            hyper: tiny_hyper(),
            threshold: 0.8,
            top_k: 5,
        };
        // the premise must hold under this shuffle seed
        let refs = contract_refs(&corpus);
        for part in fold_partition(refs.len(), cfg.folds, cfg.seed) {
            let test: BTreeSet<usize> = part.iter().copied().collect();
            for &i in &test {
                let (fi, _) = refs[i];
                let base = corpus[fi].name.split("_c").next().unwrap().to_string();
                let has_train_dup = refs.iter().enumerate().any(|(other, &(ofi, _))| {
                    !test.contains(&other) && corpus[ofi].name.starts_with(&base)
                });
                assert!(has_train_dup, "seed leaves {base} without a training duplicate");
            }
        }

        let metrics = evaluate(&corpus, &labels, &cfg).unwrap();
        for row in &metrics.per_tag {
            if row.tp + row.fn_ > 0 {
                assert_eq!(row.recall, 1.0, "tag {} recall {}", row.tag, row.recall);
            }
        }
    }

    #[test]
    fn unlabeled_corpus_reports_zero_with_footnote() {
        let (corpus, _) = duplicated_corpus(2);
        let labels = LabelStore::new();
        let cfg = EvalConfig {
            folds: 4,
            seed: 1,
            hyper: tiny_hyper(),
            threshold: 0.8,
            top_k: 5,
        };
        let metrics = evaluate(&corpus, &labels, &cfg).unwrap();
        for row in &metrics.per_tag {
            assert_eq!(row.precision, 0.0);
            assert_eq!(row.recall, 0.0);
        }
        assert!(metrics.undefined_ratios > 0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (corpus, labels) = duplicated_corpus(2);
        let cfg = EvalConfig {
            folds: 4,
            seed: 17,
            hyper: tiny_hyper(),
            threshold: 0.8,
            top_k: 5,
        };
        let a = evaluate(&corpus, &labels, &cfg).unwrap();
        let b = evaluate(&corpus, &labels, &cfg).unwrap();
        assert_eq!(a.per_tag, b.per_tag);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_has_seven_tag_rows_plus_macro() {
        let (corpus, labels) = duplicated_corpus(2);
        let cfg = EvalConfig {
            folds: 4,
            seed: 1,
            hyper: tiny_hyper(),
            threshold: 0.8,
            top_k: 5,
        };
        let metrics = evaluate(&corpus, &labels, &cfg).unwrap();
        let csv = metrics.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + 7 + 1);
        assert!(lines[0].starts_with("tag,precision"));
        assert!(lines[8].starts_with("macro,"));
    }
}
