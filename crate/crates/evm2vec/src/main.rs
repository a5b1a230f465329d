use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evm2vec::cli::{
    cmd_detect, cmd_eval, cmd_extract, cmd_train, load_config_file, CliError, RunConfig,
    RunOverrides,
};

#[derive(Parser)]
#[command(
    name = "evm2vec",
    about = "EVM bytecode embeddings for code-clone retrieval and vulnerability triage",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonFlags {
    /// key=value config file; flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Token-vector dimension d
    #[arg(long = "d")]
    dim: Option<usize>,

    /// Negative samples k per target token
    #[arg(long = "k")]
    negatives: Option<usize>,

    /// Initial learning rate
    #[arg(long)]
    alpha: Option<f64>,

    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,

    /// Inference epochs (defaults to --epochs)
    #[arg(long = "infer-epochs")]
    infer_epochs: Option<usize>,

    /// Minimum token frequency kept out of UNK
    #[arg(long = "min-count")]
    min_count: Option<u64>,

    /// RNG seed (deterministic mode reproduces bit-identical outputs)
    #[arg(long)]
    seed: Option<u64>,

    /// Clone similarity threshold, also the ε prediction threshold
    #[arg(long)]
    threshold: Option<f64>,

    /// Maximum clones reported per function
    #[arg(long = "top-k")]
    top_k: Option<usize>,

    /// Worker threads: 1 = deterministic, N>1 = asynchronous parallel SGD
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonFlags {
    fn overrides(&self, folds: Option<usize>) -> RunOverrides {
        RunOverrides {
            dim: self.dim,
            negatives: self.negatives,
            alpha: self.alpha,
            epochs: self.epochs,
            infer_epochs: self.infer_epochs,
            min_count: self.min_count,
            seed: self.seed,
            threshold: self.threshold,
            top_k: self.top_k,
            folds,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decode .hex contract files into extraction-schema JSON
    Extract {
        /// Input .hex files or directories scanned recursively
        inputs: Vec<PathBuf>,
        /// Output directory for the .json files
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Train a model over a corpus directory of .hex files
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Optional labels CSV, validated against the corpus
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long = "model-out")]
        model_out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Find clones of a query contract and propagate vulnerability labels
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Query .hex files or directories
        #[arg(long, required = true, num_args = 1..)]
        query: Vec<PathBuf>,
        /// Emit the machine-readable JSON report
        #[arg(long)]
        json: bool,
        /// Suppress matches with the query's own identity
        #[arg(long = "exclude-self")]
        exclude_self: bool,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// K-fold cross-validation over a labeled corpus
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Number of folds
        #[arg(long)]
        folds: Option<usize>,
        /// Write the metrics CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
}

fn run() -> Result<i32, CliError> {
    let cli = Cli::parse();

    let config_map = |common: &CommonFlags| -> Result<BTreeMap<String, String>, CliError> {
        match &common.config {
            Some(path) => load_config_file(path),
            None => Ok(BTreeMap::new()),
        }
    };

    match cli.command {
        Command::Extract { inputs, out, common } => {
            let _ = config_map(&common)?; // extract takes no tunables, but accept --config
            cmd_extract(&inputs, &out)
        }
        Command::Train {
            corpus,
            labels,
            model_out,
            common,
        } => {
            let overrides = common.overrides(None);
            let config = RunConfig::resolve(&config_map(&common)?, &overrides)?;
            cmd_train(&corpus, labels.as_deref(), &model_out, &config)
        }
        Command::Detect {
            model,
            labels,
            query,
            json,
            exclude_self,
            common,
        } => {
            let overrides = common.overrides(None);
            let config = RunConfig::resolve(&config_map(&common)?, &overrides)?;
            cmd_detect(&model, &labels, &query, &config, &overrides, json, exclude_self)
        }
        Command::Eval {
            corpus,
            labels,
            folds,
            csv,
            common,
        } => {
            let overrides = common.overrides(folds);
            let config = RunConfig::resolve(&config_map(&common)?, &overrides)?;
            cmd_eval(&corpus, &labels, csv.as_deref(), &config)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
