//! Batch command implementations behind the `evm2vec` binary.
//!
//! Exit-code contract, stable for scripting: 0 success, 2 input validation,
//! 3 empty analysis, 1 internal error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detect::{propagate_labels, VectorIndex};
use crate::error::Error;
use crate::labels::{LabelStore, VulnTag};
use crate::model::{Hyperparams, ModelParams};
use crate::schema::{build_contract_file, serialize, ContractFile};
use crate::store::{load_model, save_model};
use crate::token::OperandPolicy;
use crate::train::{build_unit, infer, train, ThreadMode};
use crate::{disasm, eval};

#[derive(Debug)]
pub enum CliError {
    /// Unusable input: exit 2.
    Validation(String),
    /// Nothing to analyze: exit 3.
    EmptyAnalysis(String),
    /// Unexpected failure: exit 1.
    Internal(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::EmptyAnalysis(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "invalid input: {msg}"),
            CliError::EmptyAnalysis(msg) => write!(f, "nothing to analyze: {msg}"),
            CliError::Internal(err) => write!(f, "{err}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Internal(err)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Keys accepted in a `key=value` config file; flags override file values.
const CONFIG_KEYS: [&str; 16] = [
    "corpus",
    "labels",
    "model",
    "model-out",
    "out",
    "d",
    "k",
    "alpha",
    "epochs",
    "infer-epochs",
    "min-count",
    "seed",
    "threshold",
    "top-k",
    "folds",
    "threads",
];

pub fn load_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            validation(format!(
                "config line {} is not key=value: {raw:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(validation(format!(
                "unknown config key {key:?} on line {}",
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Hyperparameter and run settings as they arrive from flags, before the
/// config file and defaults fill the gaps.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub dim: Option<usize>,
    pub negatives: Option<usize>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub infer_epochs: Option<usize>,
    pub min_count: Option<u64>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub folds: Option<usize>,
    pub threads: Option<usize>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub threshold: f64,
    pub top_k: usize,
    pub folds: usize,
    pub threads: usize,
}

fn parse_from<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| validation(format!("config value {key}={raw:?} does not parse"))),
    }
}

impl RunConfig {
    /// defaults ← config file ← flags.
    pub fn resolve(config: &BTreeMap<String, String>, flags: &RunOverrides) -> CliResult<Self> {
        let mut hyper = Hyperparams::default();
        hyper.dim = flags.dim.or(parse_from(config, "d")?).unwrap_or(hyper.dim);
        hyper.negatives = flags
            .negatives
            .or(parse_from(config, "k")?)
            .unwrap_or(hyper.negatives);
        hyper.alpha = flags
            .alpha
            .or(parse_from(config, "alpha")?)
            .unwrap_or(hyper.alpha);
        hyper.epochs = flags
            .epochs
            .or(parse_from(config, "epochs")?)
            .unwrap_or(hyper.epochs);
        hyper.infer_epochs = flags
            .infer_epochs
            .or(parse_from(config, "infer-epochs")?)
            .unwrap_or(hyper.epochs);
        hyper.min_count = flags
            .min_count
            .or(parse_from(config, "min-count")?)
            .unwrap_or(hyper.min_count);
        hyper.seed = flags.seed.or(parse_from(config, "seed")?).unwrap_or(hyper.seed);

        let config = RunConfig {
            hyper,
            threshold: flags
                .threshold
                .or(parse_from(config, "threshold")?)
                .unwrap_or(0.8),
            top_k: flags.top_k.or(parse_from(config, "top-k")?).unwrap_or(5),
            folds: flags.folds.or(parse_from(config, "folds")?).unwrap_or(10),
            threads: flags.threads.or(parse_from(config, "threads")?).unwrap_or(1),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        if self.hyper.dim == 0 {
            return Err(validation("d must be at least 1"));
        }
        if self.hyper.negatives == 0 {
            return Err(validation("k must be at least 1"));
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return Err(validation("threshold must be positive"));
        }
        if self.hyper.epochs == 0 {
            eprintln!("warning: --epochs 0 trains nothing; function vectors stay zero");
        }
        Ok(())
    }

    pub fn thread_mode(&self) -> ThreadMode {
        if self.threads <= 1 {
            ThreadMode::Deterministic
        } else {
            ThreadMode::Parallel(self.threads)
        }
    }
}

/// Recursively collects `.hex` files under a path (or the path itself when it
/// is a file), sorted for determinism.
fn collect_hex_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(validation(format!("{} is not a file or directory", path.display())));
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(path)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "hex"))
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_bytecode(path: &Path) -> Result<Vec<u8>, Error> {
    let text = fs::read_to_string(path)?;
    disasm::parse_hex(&text)
}

/// Loads a corpus directory, skipping unparseable files with a warning.
pub fn load_corpus(dir: &Path) -> CliResult<Vec<ContractFile>> {
    let mut corpus = Vec::new();
    for path in collect_hex_files(dir)? {
        match read_bytecode(&path) {
            Ok(code) => corpus.push(build_contract_file(&file_stem(&path), &code)),
            Err(err) => eprintln!("warning: skipping {}: {err}", path.display()),
        }
    }
    Ok(corpus)
}

/// `extract`: schema JSON per input contract file. Malformed inputs are
/// skipped and reported; any skip turns the exit code to 2.
pub fn cmd_extract(inputs: &[PathBuf], out_dir: &Path) -> CliResult<i32> {
    let mut files = Vec::new();
    for input in inputs {
        files.extend(collect_hex_files(input)?);
    }
    fs::create_dir_all(out_dir).map_err(Error::from)?;

    if files.is_empty() {
        eprintln!("warning: no .hex inputs found; nothing extracted");
        return Ok(0);
    }

    let mut written = 0usize;
    let mut skipped = 0usize;
    for path in &files {
        match read_bytecode(path) {
            Ok(code) => {
                let name = file_stem(path);
                let cf = build_contract_file(&name, &code);
                let out_path = out_dir.join(format!("{name}.json"));
                fs::write(&out_path, serialize(&cf)).map_err(Error::from)?;
                written += 1;
            }
            Err(err) => {
                eprintln!("skipping {}: {err}", path.display());
                skipped += 1;
            }
        }
    }
    println!("extracted {written} file(s) to {}", out_dir.display());
    Ok(if skipped > 0 { 2 } else { 0 })
}

/// `train`: corpus → vocabulary → model file, printing per-epoch mean loss.
pub fn cmd_train(
    corpus_dir: &Path,
    labels_path: Option<&Path>,
    model_out: &Path,
    config: &RunConfig,
) -> CliResult<i32> {
    let corpus = load_corpus(corpus_dir)?;
    if corpus.iter().all(|cf| cf.contracts.is_empty()) {
        return Err(validation(format!(
            "corpus {} holds no decodable contracts",
            corpus_dir.display()
        )));
    }

    if let Some(path) = labels_path {
        let labels = LabelStore::load(path)?;
        for ((file, contract), _) in labels.entries() {
            let known = corpus
                .iter()
                .any(|cf| cf.name == *file && cf.contracts.iter().any(|c| c.name == *contract));
            if !known {
                eprintln!("warning: label row {file},{contract} matches no corpus contract");
            }
        }
    }

    let outcome = train(&corpus, &config.hyper, config.thread_mode())?;
    for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
        println!(
            "epoch {}/{}: mean loss {loss:.6}",
            epoch + 1,
            outcome.epoch_loss.len()
        );
    }
    save_model(&outcome.params, model_out)?;
    println!(
        "trained {} function vectors over {} tokens; model written to {}",
        outcome.params.functions.len(),
        outcome.params.vocab.len(),
        model_out.display()
    );
    Ok(0)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportClone {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportFunction {
    pub name: String,
    pub clones: Vec<ReportClone>,
    pub epsilon: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Timing {
    pub extract: f64,
    pub detect: f64,
    pub summarize: f64,
}

/// The machine-readable detection report for one query.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub query: String,
    pub functions: Vec<ReportFunction>,
    pub timing_ms: Timing,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Nearest training contract by aggregate (mean-of-functions) vector;
/// reporting only, detection itself runs at function level.
struct ContractSummary {
    contract: String,
    similarity: f64,
}

fn detect_one(
    path: &Path,
    model: &ModelParams,
    index: &VectorIndex,
    infer_hyper: &Hyperparams,
    config: &RunConfig,
    exclude_self: bool,
) -> CliResult<Option<(Report, Option<ContractSummary>)>> {
    let extract_started = Instant::now();
    let code = read_bytecode(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let name = file_stem(path);
    let cf = build_contract_file(&name, &code);
    let extract_ms = ms_since(extract_started);

    let functions: Vec<_> = cf
        .contracts
        .iter()
        .flat_map(|c| c.functions.iter().map(move |f| (c.name.clone(), f)))
        .collect();
    if functions.is_empty() {
        return Ok(None);
    }

    let detect_started = Instant::now();
    let mut per_function = Vec::new();
    let mut theta_sum = vec![0.0f64; model.context_dim()];
    for (contract_name, function) in &functions {
        let unit = build_unit(&cf.name, contract_name, function, &model.vocab, OperandPolicy::V1);
        if unit.sequence.is_empty() {
            continue;
        }
        let theta = infer(&unit, model, infer_hyper)?;
        for (s, &v) in theta_sum.iter_mut().zip(&theta) {
            *s += v as f64;
        }
        let exclude = exclude_self.then(|| unit.key.clone());
        let matches = index.find_clones(&theta, config.threshold, config.top_k, exclude.as_ref())?;
        per_function.push((function.name.clone(), matches));
    }
    let detect_ms = ms_since(detect_started);

    let summary = if per_function.is_empty() {
        None
    } else {
        let mean: Vec<f32> = theta_sum
            .iter()
            .map(|s| (s / per_function.len() as f64) as f32)
            .collect();
        index
            .contract_vectors()
            .into_iter()
            .filter_map(|((_, contract), vector)| {
                crate::detect::cosine(&mean, &vector)
                    .ok()
                    .map(|similarity| ContractSummary {
                        contract,
                        similarity,
                    })
            })
            .max_by(|a, b| a.similarity.total_cmp(&b.similarity))
    };

    let summarize_started = Instant::now();
    let report_functions = per_function
        .iter()
        .map(|(fname, matches)| {
            let report = propagate_labels(std::slice::from_ref(matches));
            let epsilon = VulnTag::ALL
                .iter()
                .map(|&t| (t.as_str().to_string(), report.epsilon_of(t)))
                .collect();
            ReportFunction {
                name: fname.clone(),
                clones: matches
                    .iter()
                    .map(|m| ReportClone {
                        id: m.key.to_string(),
                        similarity: m.similarity,
                    })
                    .collect(),
                epsilon,
            }
        })
        .collect();
    let summarize_ms = ms_since(summarize_started);

    Ok(Some((
        Report {
            query: name,
            functions: report_functions,
            timing_ms: Timing {
                extract: extract_ms,
                detect: detect_ms,
                summarize: summarize_ms,
            },
        },
        summary,
    )))
}

fn print_text_report(report: &Report, config: &RunConfig) {
    println!("query {}: {} function(s)", report.query, report.functions.len());
    for function in &report.functions {
        println!("  function {}", function.name);
        if function.clones.is_empty() {
            println!("    clones: none at threshold {:.2}", config.threshold);
        } else {
            println!("    clones:");
            for (rank, clone) in function.clones.iter().enumerate() {
                println!(
                    "      {}. {}  similarity {:.4}",
                    rank + 1,
                    clone.id,
                    clone.similarity
                );
            }
        }
        let predicted: Vec<&str> = function
            .epsilon
            .iter()
            .filter(|(_, &e)| e >= config.threshold)
            .map(|(t, _)| t.as_str())
            .collect();
        for (tag, eps) in &function.epsilon {
            if *eps > 0.0 {
                let mark = if *eps >= config.threshold { " *" } else { "" };
                println!("    epsilon {tag} {eps:.4}{mark}");
            }
        }
        if predicted.is_empty() {
            println!("    predicted: none");
        } else {
            println!("    predicted: {}", predicted.join(", "));
        }
    }
    println!(
        "  timing: extract {:.1} ms, detect {:.1} ms, summarize {:.1} ms",
        report.timing_ms.extract, report.timing_ms.detect, report.timing_ms.summarize
    );
}

/// `detect`: clone retrieval and ε table for each query contract. Inference
/// reuses the trained model's hyperparameters unless flags override them.
pub fn cmd_detect(
    model_path: &Path,
    labels_path: &Path,
    queries: &[PathBuf],
    config: &RunConfig,
    overrides: &RunOverrides,
    json: bool,
    exclude_self: bool,
) -> CliResult<i32> {
    let model = load_model(model_path).map_err(|e| validation(e.to_string()))?;
    let labels = LabelStore::load(labels_path).map_err(|e| validation(e.to_string()))?;
    let index = VectorIndex::build(&model, &labels);
    if index.is_empty() {
        return Err(validation("model contains no function vectors"));
    }

    let mut infer_hyper = model.hyper.clone();
    if let Some(v) = overrides.infer_epochs {
        infer_hyper.infer_epochs = v;
    }
    if let Some(v) = overrides.seed {
        infer_hyper.seed = v;
    }
    if let Some(v) = overrides.negatives {
        infer_hyper.negatives = v;
    }
    if let Some(v) = overrides.alpha {
        infer_hyper.alpha = v;
    }

    let mut paths = Vec::new();
    for query in queries {
        paths.extend(collect_hex_files(query)?);
    }
    if paths.is_empty() {
        return Err(validation("no query inputs found"));
    }

    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    let mut empty = Vec::new();
    for path in &paths {
        match detect_one(path, &model, &index, &infer_hyper, config, exclude_self)? {
            Some((report, summary)) => {
                reports.push(report);
                summaries.push(summary);
            }
            None => empty.push(path.clone()),
        }
    }
    for path in &empty {
        eprintln!("{}: query extraction yielded zero functions", path.display());
    }
    if reports.is_empty() {
        return Err(CliError::EmptyAnalysis(
            "no query produced any function".to_string(),
        ));
    }

    if json {
        let rendered = if reports.len() == 1 {
            serde_json::to_string_pretty(&reports[0])
        } else {
            serde_json::to_string_pretty(&reports)
        }
        .expect("report serializes");
        println!("{rendered}");
    } else {
        for (report, summary) in reports.iter().zip(&summaries) {
            print_text_report(report, config);
            if let Some(summary) = summary {
                println!(
                    "  contract-level: nearest contract {} (similarity {:.4})",
                    summary.contract, summary.similarity
                );
            }
        }
        let total_ms: f64 = reports
            .iter()
            .map(|r| r.timing_ms.extract + r.timing_ms.detect + r.timing_ms.summarize)
            .sum();
        println!(
            "processed {} quer{} in {:.1} ms total ({:.1} ms per contract)",
            reports.len(),
            if reports.len() == 1 { "y" } else { "ies" },
            total_ms,
            total_ms / reports.len() as f64
        );
    }
    Ok(if empty.is_empty() { 0 } else { 3 })
}

/// `eval`: k-fold cross-validation over a labeled corpus.
pub fn cmd_eval(
    corpus_dir: &Path,
    labels_path: &Path,
    csv_out: Option<&Path>,
    config: &RunConfig,
) -> CliResult<i32> {
    let corpus = load_corpus(corpus_dir)?;
    let labels = LabelStore::load(labels_path).map_err(|e| validation(e.to_string()))?;
    let cfg = eval::EvalConfig {
        folds: config.folds,
        seed: config.hyper.seed,
        hyper: config.hyper.clone(),
        threshold: config.threshold,
        top_k: config.top_k,
    };
    let metrics = eval::evaluate(&corpus, &labels, &cfg).map_err(|e| match e {
        Error::Eval(msg) => validation(msg),
        Error::EmptyCorpus => validation("corpus holds no decodable contracts"),
        other => CliError::Internal(other),
    })?;

    print!("{}", metrics.to_table());
    println!(
        "contracts: {}; mean inference time {:.1} ms per contract",
        metrics.contracts, metrics.mean_infer_ms
    );
    let csv = metrics.to_csv();
    match csv_out {
        Some(path) => {
            fs::write(path, &csv).map_err(Error::from)?;
            println!("metrics CSV written to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn config_file_parses_and_rejects_unknown_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nthreshold = 0.9\nd=16\n").unwrap();
        let map = load_config_file(f.path()).unwrap();
        assert_eq!(map["threshold"], "0.9");
        assert_eq!(map["d"], "16");

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "threshhold = 0.9").unwrap();
        assert!(load_config_file(bad.path()).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let mut config = BTreeMap::new();
        config.insert("d".to_string(), "16".to_string());
        config.insert("threshold".to_string(), "0.5".to_string());
        let flags = RunOverrides {
            dim: Some(32),
            ..RunOverrides::default()
        };
        let resolved = RunConfig::resolve(&config, &flags).unwrap();
        assert_eq!(resolved.hyper.dim, 32);
        assert_eq!(resolved.threshold, 0.5);
        assert_eq!(resolved.top_k, 5);
    }

    #[test]
    fn validation_rejects_degenerate_settings() {
        let flags = RunOverrides {
            dim: Some(0),
            ..RunOverrides::default()
        };
        assert!(RunConfig::resolve(&BTreeMap::new(), &flags).is_err());

        let flags = RunOverrides {
            threshold: Some(0.0),
            ..RunOverrides::default()
        };
        assert!(RunConfig::resolve(&BTreeMap::new(), &flags).is_err());

        // above 1 is allowed: an unattainable threshold just matches nothing
        let flags = RunOverrides {
            threshold: Some(1.01),
            ..RunOverrides::default()
        };
        assert!(RunConfig::resolve(&BTreeMap::new(), &flags).is_ok());
    }

    #[test]
    fn infer_epochs_defaults_to_epochs() {
        let flags = RunOverrides {
            epochs: Some(7),
            ..RunOverrides::default()
        };
        let resolved = RunConfig::resolve(&BTreeMap::new(), &flags).unwrap();
        assert_eq!(resolved.hyper.infer_epochs, 7);
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = Report {
            query: "q".to_string(),
            functions: vec![ReportFunction {
                name: "main".to_string(),
                clones: vec![ReportClone {
                    id: "a:a:main".to_string(),
                    similarity: 0.93,
                }],
                epsilon: BTreeMap::from([("Reentrancy".to_string(), 0.93)]),
            }],
            timing_ms: Timing {
                extract: 1.0,
                detect: 2.0,
                summarize: 0.5,
            },
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }
}
