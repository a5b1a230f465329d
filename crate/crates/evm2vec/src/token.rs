//! Instruction tokenization with operand normalization.
//!
//! Raw 20/32-byte immediates would explode the vocabulary into singleton
//! tokens and ruin the negative-sampling statistics, so wide operands collapse
//! to a handful of class tokens while small constants keep their value. The
//! policy is versioned and stored in model files so training and inference
//! always agree.

use crate::disasm::Instruction;
use crate::opcode;

/// Operand normalization policy identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandPolicy {
    /// Values ≤ 255 keep their hex literal; PUSH20 becomes `ADDR`, PUSH32
    /// becomes `HASH32`, anything else becomes `CONST<N>`.
    V1,
}

impl OperandPolicy {
    pub fn id(self) -> u32 {
        match self {
            OperandPolicy::V1 => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(OperandPolicy::V1),
            _ => None,
        }
    }
}

/// An instruction reduced to its operation token and operand tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedInstruction {
    pub operation: String,
    pub operands: Vec<String>,
}

fn small_value(operand: &[u8]) -> Option<u8> {
    let (last, rest) = operand.split_last()?;
    rest.iter().all(|&b| b == 0).then_some(*last)
}

pub fn tokenize(ins: &Instruction, policy: OperandPolicy) -> TokenizedInstruction {
    let OperandPolicy::V1 = policy;
    let operation = ins.mnemonic().into_owned();
    let operands = match opcode::push_width(ins.opcode) {
        None | Some(0) => Vec::new(),
        Some(width) => {
            let token = if let Some(v) = small_value(&ins.operand) {
                format!("0x{v:02x}")
            } else if width == 20 {
                "ADDR".to_string()
            } else if width == 32 {
                "HASH32".to_string()
            } else {
                format!("CONST{width}")
            };
            vec![token]
        }
    };
    TokenizedInstruction {
        operation,
        operands,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ins(opcode: u8, operand: &[u8]) -> Instruction {
        Instruction {
            offset: 0,
            opcode,
            operand: operand.to_vec(),
        }
    }

    #[test]
    fn push1_keeps_hex_literal() {
        let t = tokenize(&ins(0x60, &[0x01]), OperandPolicy::V1);
        assert_eq!(t.operation, "PUSH1");
        assert_eq!(t.operands, vec!["0x01"]);
    }

    #[test]
    fn add_has_no_operands() {
        let t = tokenize(&ins(0x01, &[]), OperandPolicy::V1);
        assert_eq!(t.operation, "ADD");
        assert!(t.operands.is_empty());
    }

    #[test]
    fn push20_large_value_is_addr() {
        let mut addr = vec![0xde, 0xad];
        addr.extend_from_slice(&[0u8; 16]);
        addr.extend_from_slice(&[0xbe, 0xef]);
        let t = tokenize(&ins(0x73, &addr), OperandPolicy::V1);
        assert_eq!(t.operands, vec!["ADDR"]);
    }

    #[test]
    fn wide_small_values_stay_hex() {
        // PUSH32 of 0x…0001 still carries the value
        let mut v = vec![0u8; 31];
        v.push(0x01);
        let t = tokenize(&ins(0x7f, &v), OperandPolicy::V1);
        assert_eq!(t.operands, vec!["0x01"]);
    }

    #[test]
    fn other_widths_become_const_tokens() {
        let t = tokenize(&ins(0x63, &[0xaa, 0xbb, 0xcc, 0xdd]), OperandPolicy::V1);
        assert_eq!(t.operands, vec!["CONST4"]);
        let t = tokenize(&ins(0x7f, &[0xffu8; 32]), OperandPolicy::V1);
        assert_eq!(t.operands, vec!["HASH32"]);
        let t = tokenize(&ins(0x5f, &[]), OperandPolicy::V1);
        assert_eq!(t.operation, "PUSH0");
        assert!(t.operands.is_empty());
    }
}
