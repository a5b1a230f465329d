//! The contract-file hierarchy and its JSON extraction schema.
//!
//! The serialized tree is fixed:
//!
//! ```text
//! data            (one document per contract)
//!   name          file name, or "file:contract" when they differ
//!   md5           md5 hex digest of the input bytes
//!   functions     list
//!     name / sea / see / id / call
//!     blocks      list
//!       name / bytes / sea / eea / id / call / src
//! ```
//!
//! `sea` is the start offset, `see`/`eea` the start of the next unit, `call`
//! the callee id lists, `src` the decoded instructions as
//! `"offset: MNEMONIC operand-hex"` strings and `bytes` the block bytes in
//! hex. A file holding several contracts serializes as a JSON array of such
//! documents; the common single-contract case stays a plain object.

use md5::{Digest, Md5};
use serde_json::{json, Map, Value};

use crate::disasm::{self, BasicBlock, FunctionUnit, Instruction};
use crate::error::{Error, Result};
use crate::opcode;

/// One bytecode blob: a contract with its identified function units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    pub name: String,
    pub functions: Vec<FunctionUnit>,
}

/// A named input file with its md5 digest and the contracts built from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractFile {
    pub name: String,
    /// 32 lowercase hex chars over the input bytes.
    pub md5: String,
    pub contracts: Vec<Contract>,
}

pub fn md5_hex(bytes: &[u8]) -> String {
    let mut hasher = Md5::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Runs the full extraction pipeline over one bytecode blob. Empty code
/// produces a file with zero contracts: nothing to learn.
pub fn build_contract_file(name: &str, code: &[u8]) -> ContractFile {
    let md5 = md5_hex(code);
    let contracts = if code.is_empty() {
        Vec::new()
    } else {
        vec![Contract {
            name: name.to_string(),
            functions: disasm::identify_functions(disasm::split_blocks(disasm::disassemble(
                code,
            ))),
        }]
    };
    ContractFile {
        name: name.to_string(),
        md5,
        contracts,
    }
}

impl ContractFile {
    /// Builds a file from several blobs, one contract per blob; the md5 covers
    /// the blobs' concatenation. Empty blobs are skipped.
    pub fn from_blobs(name: &str, blobs: &[(String, Vec<u8>)]) -> ContractFile {
        let mut all: Vec<u8> = Vec::new();
        for (_, code) in blobs {
            all.extend_from_slice(code);
        }
        let contracts = blobs
            .iter()
            .filter(|(_, code)| !code.is_empty())
            .map(|(cname, code)| Contract {
                name: cname.clone(),
                functions: disasm::identify_functions(disasm::split_blocks(
                    disasm::disassemble(code),
                )),
            })
            .collect();
        ContractFile {
            name: name.to_string(),
            md5: md5_hex(&all),
            contracts,
        }
    }

    pub fn function_count(&self) -> usize {
        self.contracts.iter().map(|c| c.functions.len()).sum()
    }
}

fn src_line(ins: &Instruction) -> String {
    if ins.operand.is_empty() {
        format!("{}: {}", ins.offset, ins.mnemonic())
    } else {
        format!("{}: {} {}", ins.offset, ins.mnemonic(), hex::encode(&ins.operand))
    }
}

fn block_value(block: &BasicBlock) -> Value {
    json!({
        "name": block.name,
        "bytes": hex::encode(&block.bytes),
        "sea": block.start_offset,
        "eea": block.end_offset,
        "id": block.id,
        "call": block.callees,
        "src": block.instructions.iter().map(src_line).collect::<Vec<_>>(),
    })
}

fn function_value(func: &FunctionUnit) -> Value {
    json!({
        "name": func.name,
        "sea": func.start_offset,
        "see": func.end_offset,
        "id": func.id,
        "call": func.callees,
        "blocks": func.blocks.iter().map(block_value).collect::<Vec<_>>(),
    })
}

fn document_value(file: &ContractFile, contract: Option<&Contract>) -> Value {
    let (name, functions) = match contract {
        Some(c) if c.name == file.name => (c.name.clone(), c.functions.as_slice()),
        Some(c) => (format!("{}:{}", file.name, c.name), c.functions.as_slice()),
        None => (file.name.clone(), &[][..]),
    };
    json!({
        "data": {
            "name": name,
            "md5": file.md5,
            "functions": functions.iter().map(function_value).collect::<Vec<_>>(),
        }
    })
}

/// Serializes a contract file to schema JSON bytes. Deterministic: the same
/// value always yields the same bytes.
pub fn serialize(file: &ContractFile) -> Vec<u8> {
    let value = match file.contracts.len() {
        0 => document_value(file, None),
        1 => document_value(file, Some(&file.contracts[0])),
        _ => Value::Array(
            file.contracts
                .iter()
                .map(|c| document_value(file, Some(c)))
                .collect(),
        ),
    };
    let mut bytes = serde_json::to_vec_pretty(&value).expect("schema value serializes");
    bytes.push(b'\n');
    bytes
}

fn schema_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| schema_err(path, "expected an object"))
}

fn field<'a>(obj: &'a Map<String, Value>, parent: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| schema_err(&format!("{parent}.{key}"), "missing required field"))
}

fn string_field(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<String> {
    let path = format!("{parent}.{key}");
    field(obj, parent, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema_err(&path, "expected a string"))
}

fn usize_field(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<usize> {
    let path = format!("{parent}.{key}");
    field(obj, parent, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| schema_err(&path, "expected a non-negative integer"))
}

fn array_field<'a>(obj: &'a Map<String, Value>, parent: &str, key: &str) -> Result<&'a Vec<Value>> {
    let path = format!("{parent}.{key}");
    field(obj, parent, key)?
        .as_array()
        .ok_or_else(|| schema_err(&path, "expected a list"))
}

fn id_list(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<Vec<usize>> {
    let path = format!("{parent}.{key}");
    array_field(obj, parent, key)?
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| schema_err(&path, "expected integer ids"))
        })
        .collect()
}

fn parse_src_line(line: &str, path: &str) -> Result<Instruction> {
    let (offset, rest) = line
        .split_once(": ")
        .ok_or_else(|| schema_err(path, format!("malformed src entry {line:?}")))?;
    let offset: usize = offset
        .parse()
        .map_err(|_| schema_err(path, format!("bad offset in src entry {line:?}")))?;
    let (mnemonic, operand_hex) = match rest.split_once(' ') {
        Some((m, o)) => (m, Some(o)),
        None => (rest, None),
    };
    let op = opcode::opcode_from_mnemonic(mnemonic)
        .ok_or_else(|| schema_err(path, format!("unknown mnemonic {mnemonic:?}")))?;
    let operand = match operand_hex {
        Some(o) => {
            hex::decode(o).map_err(|_| schema_err(path, format!("bad operand hex {o:?}")))?
        }
        None => Vec::new(),
    };
    let expected = opcode::push_width(op).unwrap_or(0);
    if operand.len() != expected {
        return Err(schema_err(
            path,
            format!(
                "operand length {} does not match {} (expects {expected})",
                operand.len(),
                mnemonic
            ),
        ));
    }
    Ok(Instruction {
        offset,
        opcode: op,
        operand,
    })
}

fn parse_block(value: &Value, path: &str) -> Result<BasicBlock> {
    let obj = as_object(value, path)?;
    let src_path = format!("{path}.src");
    let instructions = array_field(obj, path, "src")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let entry_path = format!("{src_path}[{i}]");
            let line = v
                .as_str()
                .ok_or_else(|| schema_err(&entry_path, "expected a string"))?;
            parse_src_line(line, &entry_path)
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes_hex = string_field(obj, path, "bytes")?;
    let bytes = hex::decode(&bytes_hex)
        .map_err(|_| schema_err(&format!("{path}.bytes"), "bad block hex"))?;
    Ok(BasicBlock {
        id: usize_field(obj, path, "id")?,
        name: string_field(obj, path, "name")?,
        start_offset: usize_field(obj, path, "sea")?,
        end_offset: usize_field(obj, path, "eea")?,
        instructions,
        bytes,
        callees: id_list(obj, path, "call")?,
    })
}

fn parse_function(value: &Value, path: &str) -> Result<FunctionUnit> {
    let obj = as_object(value, path)?;
    let blocks = array_field(obj, path, "blocks")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_block(v, &format!("{path}.blocks[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionUnit {
        id: usize_field(obj, path, "id")?,
        name: string_field(obj, path, "name")?,
        start_offset: usize_field(obj, path, "sea")?,
        end_offset: usize_field(obj, path, "see")?,
        blocks,
        callees: id_list(obj, path, "call")?,
    })
}

/// One parsed `data` document: qualified name plus functions.
struct ParsedDoc {
    file_name: String,
    contract_name: String,
    md5: String,
    functions: Vec<FunctionUnit>,
}

fn parse_document(value: &Value, root: &str) -> Result<ParsedDoc> {
    let outer = as_object(value, root)?;
    let data_path = if root.is_empty() {
        "data".to_string()
    } else {
        format!("{root}.data")
    };
    let data = outer
        .get("data")
        .ok_or_else(|| schema_err(&data_path, "missing required field"))?;
    let data = as_object(data, &data_path)?;
    let name = string_field(data, &data_path, "name")?;
    let md5 = string_field(data, &data_path, "md5")?;
    let functions = array_field(data, &data_path, "functions")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_function(v, &format!("{data_path}.functions[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let (file_name, contract_name) = match name.split_once(':') {
        Some((file, contract)) => (file.to_string(), contract.to_string()),
        None => (name.clone(), name),
    };
    Ok(ParsedDoc {
        file_name,
        contract_name,
        md5,
        functions,
    })
}

/// Parses schema JSON produced by [`serialize`] or conforming to the tree.
/// Missing or mistyped fields yield a schema error naming the path.
pub fn deserialize(bytes: &[u8]) -> Result<ContractFile> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| schema_err("", format!("not valid JSON: {e}")))?;
    let docs: Vec<ParsedDoc> = match &value {
        Value::Array(items) => {
            if items.is_empty() {
                return Err(schema_err("", "empty document list"));
            }
            items
                .iter()
                .enumerate()
                .map(|(i, v)| parse_document(v, &format!("[{i}]")))
                .collect::<Result<Vec<_>>>()?
        }
        _ => vec![parse_document(&value, "")?],
    };

    let file_name = docs[0].file_name.clone();
    let md5 = docs[0].md5.clone();
    let contracts = docs
        .into_iter()
        .filter(|d| !d.functions.is_empty())
        .map(|d| Contract {
            name: d.contract_name,
            functions: d.functions,
        })
        .collect();
    Ok(ContractFile {
        name: file_name,
        md5,
        contracts,
    })
}
