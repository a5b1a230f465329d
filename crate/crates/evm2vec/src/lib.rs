//! Contract-wide vector representations of EVM bytecode.
//!
//! The pipeline: raw runtime bytecode is disassembled and partitioned into
//! basic blocks and function units ([`disasm`]), assembled into the
//! contract-file hierarchy with a JSON extraction schema ([`schema`]),
//! tokenized ([`token`]) and embedded by a hierarchical PV-DM-style model
//! trained with negative sampling ([`model`], [`train`]). Function vectors
//! feed cosine-similarity clone retrieval and vulnerability-label
//! propagation ([`detect`]), evaluated by k-fold cross-validation ([`eval`]).
//!
//! See the crate examples for one runnable program per capability, and the
//! `evm2vec` binary for the batch command-line surface.

pub mod cli;
pub mod detect;
pub mod disasm;
pub mod error;
pub mod eval;
pub mod labels;
pub mod model;
pub mod opcode;
pub mod schema;
pub mod store;
pub mod synth;
pub mod token;
pub mod train;
pub mod vocab;

pub use detect::{cosine, CloneMatch, VectorIndex, VulnerabilityReport};
pub use disasm::{disassemble, identify_functions, parse_hex, split_blocks};
pub use disasm::{BasicBlock, FunctionUnit, Instruction};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalConfig, Metrics};
pub use labels::{LabelStore, VulnTag};
pub use model::{FunctionKey, Hyperparams, ModelParams, TrainingUnit};
pub use schema::{build_contract_file, deserialize, serialize, Contract, ContractFile};
pub use store::{load_model, save_model};
pub use token::{tokenize, OperandPolicy, TokenizedInstruction};
pub use train::{build_unit, build_units, infer, train, ThreadMode, TrainOutcome};
pub use vocab::Vocabulary;
