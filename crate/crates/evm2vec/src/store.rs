//! Versioned binary model container.
//!
//! Layout, all little-endian, dense vectors as 32-bit floats:
//!
//! ```text
//! "EV2V" | u32 version | u32 policy id | str revision
//! u32 d | u32 k | f64 alpha | u32 epochs | u32 infer_epochs | u64 min_count | u64 seed
//! u32 |V| | per token: str + u64 freq
//! |V|·d input floats | |V|·2d output floats
//! u32 #functions | per function: str file, contract, function + 2d floats
//! ```
//!
//! Strings are u32 length + UTF-8 bytes. Loading verifies magic and version
//! up front and refuses truncated or oversized input outright — no partial
//! model is ever returned.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{Embedding, FunctionKey, Hyperparams, ModelParams};
use crate::token::OperandPolicy;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 4] = b"EV2V";
const VERSION: u32 = 1;

/// Upper bound on any single length field; corrupt files fail fast instead of
/// allocating wildly.
const MAX_LEN: u32 = 64 * 1024 * 1024;

fn fmt_err(context: &str) -> Error {
    Error::ModelFormat(context.to_string())
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r, "string length")?;
    if len > MAX_LEN {
        return Err(fmt_err("string length out of range"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)
        .map_err(|_| fmt_err("truncated file while reading a string"))?;
    String::from_utf8(buf).map_err(|_| fmt_err("string is not valid UTF-8"))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| fmt_err(&format!("truncated file while reading {what}")))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    r.read_u64::<LittleEndian>()
        .map_err(|_| fmt_err(&format!("truncated file while reading {what}")))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    r.read_f64::<LittleEndian>()
        .map_err(|_| fmt_err(&format!("truncated file while reading {what}")))
}

fn write_floats<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_floats<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| fmt_err(&format!("truncated file while reading {what}")))?,
        );
    }
    Ok(out)
}

pub fn write_model<W: Write>(w: &mut W, model: &ModelParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(model.policy.id())?;
    write_string(w, &model.revision)?;

    w.write_u32::<LittleEndian>(model.hyper.dim as u32)?;
    w.write_u32::<LittleEndian>(model.hyper.negatives as u32)?;
    w.write_f64::<LittleEndian>(model.hyper.alpha)?;
    w.write_u32::<LittleEndian>(model.hyper.epochs as u32)?;
    w.write_u32::<LittleEndian>(model.hyper.infer_epochs as u32)?;
    w.write_u64::<LittleEndian>(model.hyper.min_count)?;
    w.write_u64::<LittleEndian>(model.hyper.seed)?;

    let vocab_len = model.vocab.len();
    w.write_u32::<LittleEndian>(vocab_len as u32)?;
    for (token, &freq) in model.vocab.tokens().iter().zip(model.vocab.freqs()) {
        write_string(w, token)?;
        w.write_u64::<LittleEndian>(freq)?;
    }

    write_floats(w, &model.input.snapshot())?;
    write_floats(w, &model.output.snapshot())?;

    w.write_u32::<LittleEndian>(model.functions.len() as u32)?;
    for (key, theta) in &model.functions {
        write_string(w, &key.file)?;
        write_string(w, &key.contract)?;
        write_string(w, &key.function)?;
        write_floats(w, theta)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err("file too short for the magic header"))?;
    if &magic != MAGIC {
        return Err(fmt_err("not an EV2V model file (magic mismatch)"));
    }
    let version = read_u32(r, "format version")?;
    if version != VERSION {
        return Err(fmt_err(&format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let policy_id = read_u32(r, "normalization policy")?;
    let policy = OperandPolicy::from_id(policy_id)
        .ok_or_else(|| fmt_err(&format!("unknown normalization policy {policy_id}")))?;
    let revision = read_string(r)?;

    let dim = read_u32(r, "dimension")? as usize;
    if dim == 0 || dim > 1 << 20 {
        return Err(fmt_err("dimension out of range"));
    }
    let negatives = read_u32(r, "negative count")? as usize;
    let alpha = read_f64(r, "learning rate")?;
    let epochs = read_u32(r, "epochs")? as usize;
    let infer_epochs = read_u32(r, "inference epochs")? as usize;
    let min_count = read_u64(r, "min count")?;
    let seed = read_u64(r, "seed")?;
    let hyper = Hyperparams {
        dim,
        negatives,
        alpha,
        epochs,
        infer_epochs,
        min_count,
        seed,
    };

    let vocab_len = read_u32(r, "vocabulary size")?;
    if vocab_len == 0 || vocab_len > MAX_LEN {
        return Err(fmt_err("vocabulary size out of range"));
    }
    let mut tokens = Vec::with_capacity(vocab_len as usize);
    let mut freqs = Vec::with_capacity(vocab_len as usize);
    for _ in 0..vocab_len {
        tokens.push(read_string(r)?);
        freqs.push(read_u64(r, "token frequency")?);
    }
    if tokens.first().map(String::as_str) != Some(crate::vocab::UNK) {
        return Err(fmt_err("vocabulary does not start with UNK"));
    }
    let vocab = Vocabulary::from_parts(tokens, freqs);

    let input = Embedding::from_f32(
        vocab_len as usize,
        dim,
        read_floats(r, vocab_len as usize * dim, "input vectors")?,
    );
    let output = Embedding::from_f32(
        vocab_len as usize,
        2 * dim,
        read_floats(r, vocab_len as usize * 2 * dim, "output vectors")?,
    );

    let fn_count = read_u32(r, "function count")?;
    if fn_count > MAX_LEN {
        return Err(fmt_err("function count out of range"));
    }
    let mut functions = Vec::with_capacity(fn_count as usize);
    for _ in 0..fn_count {
        let file = read_string(r)?;
        let contract = read_string(r)?;
        let function = read_string(r)?;
        let theta = read_floats(r, 2 * dim, "function vector")?;
        functions.push((FunctionKey::new(&file, &contract, &function), theta));
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(fmt_err("trailing bytes after the model payload"));
    }

    Ok(ModelParams {
        hyper,
        policy,
        revision,
        vocab,
        input,
        output,
        functions,
    })
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    read_model(&mut r)
}
