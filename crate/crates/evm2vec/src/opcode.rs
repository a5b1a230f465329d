//! Canonical EVM opcode table, frozen at the Shanghai revision (PUSH0 included).

/// Hard-fork revision the table below is frozen to. Recorded in model files so
/// that artifacts produced with a different table are rejected on load.
pub const REVISION: &str = "shanghai";

pub const STOP: u8 = 0x00;
pub const EQ: u8 = 0x14;
pub const POP: u8 = 0x50;
pub const JUMP: u8 = 0x56;
pub const JUMPI: u8 = 0x57;
pub const JUMPDEST: u8 = 0x5b;
pub const PUSH0: u8 = 0x5f;
pub const PUSH1: u8 = 0x60;
pub const PUSH2: u8 = 0x61;
pub const PUSH4: u8 = 0x63;
pub const PUSH32: u8 = 0x7f;
pub const DUP1: u8 = 0x80;
pub const RETURN: u8 = 0xf3;
pub const REVERT: u8 = 0xfd;
pub const INVALID: u8 = 0xfe;
pub const SELFDESTRUCT: u8 = 0xff;

#[rustfmt::skip]
const TABLE: [Option<&str>; 256] = {
    let mut t: [Option<&str>; 256] = [None; 256];
    t[0x00] = Some("STOP");
    t[0x01] = Some("ADD");
    t[0x02] = Some("MUL");
    t[0x03] = Some("SUB");
    t[0x04] = Some("DIV");
    t[0x05] = Some("SDIV");
    t[0x06] = Some("MOD");
    t[0x07] = Some("SMOD");
    t[0x08] = Some("ADDMOD");
    t[0x09] = Some("MULMOD");
    t[0x0a] = Some("EXP");
    t[0x0b] = Some("SIGNEXTEND");
    t[0x10] = Some("LT");
    t[0x11] = Some("GT");
    t[0x12] = Some("SLT");
    t[0x13] = Some("SGT");
    t[0x14] = Some("EQ");
    t[0x15] = Some("ISZERO");
    t[0x16] = Some("AND");
    t[0x17] = Some("OR");
    t[0x18] = Some("XOR");
    t[0x19] = Some("NOT");
    t[0x1a] = Some("BYTE");
    t[0x1b] = Some("SHL");
    t[0x1c] = Some("SHR");
    t[0x1d] = Some("SAR");
    t[0x20] = Some("KECCAK256");
    t[0x30] = Some("ADDRESS");
    t[0x31] = Some("BALANCE");
    t[0x32] = Some("ORIGIN");
    t[0x33] = Some("CALLER");
    t[0x34] = Some("CALLVALUE");
    t[0x35] = Some("CALLDATALOAD");
    t[0x36] = Some("CALLDATASIZE");
    t[0x37] = Some("CALLDATACOPY");
    t[0x38] = Some("CODESIZE");
    t[0x39] = Some("CODECOPY");
    t[0x3a] = Some("GASPRICE");
    t[0x3b] = Some("EXTCODESIZE");
    t[0x3c] = Some("EXTCODECOPY");
    t[0x3d] = Some("RETURNDATASIZE");
    t[0x3e] = Some("RETURNDATACOPY");
    t[0x3f] = Some("EXTCODEHASH");
    t[0x40] = Some("BLOCKHASH");
    t[0x41] = Some("COINBASE");
    t[0x42] = Some("TIMESTAMP");
    t[0x43] = Some("NUMBER");
    t[0x44] = Some("PREVRANDAO");
    t[0x45] = Some("GASLIMIT");
    t[0x46] = Some("CHAINID");
    t[0x47] = Some("SELFBALANCE");
    t[0x48] = Some("BASEFEE");
    t[0x50] = Some("POP");
    t[0x51] = Some("MLOAD");
    t[0x52] = Some("MSTORE");
    t[0x53] = Some("MSTORE8");
    t[0x54] = Some("SLOAD");
    t[0x55] = Some("SSTORE");
    t[0x56] = Some("JUMP");
    t[0x57] = Some("JUMPI");
    t[0x58] = Some("PC");
    t[0x59] = Some("MSIZE");
    t[0x5a] = Some("GAS");
    t[0x5b] = Some("JUMPDEST");
    t[0x5f] = Some("PUSH0");
    t[0x60] = Some("PUSH1");
    t[0x61] = Some("PUSH2");
    t[0x62] = Some("PUSH3");
    t[0x63] = Some("PUSH4");
    t[0x64] = Some("PUSH5");
    t[0x65] = Some("PUSH6");
    t[0x66] = Some("PUSH7");
    t[0x67] = Some("PUSH8");
    t[0x68] = Some("PUSH9");
    t[0x69] = Some("PUSH10");
    t[0x6a] = Some("PUSH11");
    t[0x6b] = Some("PUSH12");
    t[0x6c] = Some("PUSH13");
    t[0x6d] = Some("PUSH14");
    t[0x6e] = Some("PUSH15");
    t[0x6f] = Some("PUSH16");
    t[0x70] = Some("PUSH17");
    t[0x71] = Some("PUSH18");
    t[0x72] = Some("PUSH19");
    t[0x73] = Some("PUSH20");
    t[0x74] = Some("PUSH21");
    t[0x75] = Some("PUSH22");
    t[0x76] = Some("PUSH23");
    t[0x77] = Some("PUSH24");
    t[0x78] = Some("PUSH25");
    t[0x79] = Some("PUSH26");
    t[0x7a] = Some("PUSH27");
    t[0x7b] = Some("PUSH28");
    t[0x7c] = Some("PUSH29");
    t[0x7d] = Some("PUSH30");
    t[0x7e] = Some("PUSH31");
    t[0x7f] = Some("PUSH32");
    t[0x80] = Some("DUP1");
    t[0x81] = Some("DUP2");
    t[0x82] = Some("DUP3");
    t[0x83] = Some("DUP4");
    t[0x84] = Some("DUP5");
    t[0x85] = Some("DUP6");
    t[0x86] = Some("DUP7");
    t[0x87] = Some("DUP8");
    t[0x88] = Some("DUP9");
    t[0x89] = Some("DUP10");
    t[0x8a] = Some("DUP11");
    t[0x8b] = Some("DUP12");
    t[0x8c] = Some("DUP13");
    t[0x8d] = Some("DUP14");
    t[0x8e] = Some("DUP15");
    t[0x8f] = Some("DUP16");
    t[0x90] = Some("SWAP1");
    t[0x91] = Some("SWAP2");
    t[0x92] = Some("SWAP3");
    t[0x93] = Some("SWAP4");
    t[0x94] = Some("SWAP5");
    t[0x95] = Some("SWAP6");
    t[0x96] = Some("SWAP7");
    t[0x97] = Some("SWAP8");
    t[0x98] = Some("SWAP9");
    t[0x99] = Some("SWAP10");
    t[0x9a] = Some("SWAP11");
    t[0x9b] = Some("SWAP12");
    t[0x9c] = Some("SWAP13");
    t[0x9d] = Some("SWAP14");
    t[0x9e] = Some("SWAP15");
    t[0x9f] = Some("SWAP16");
    t[0xa0] = Some("LOG0");
    t[0xa1] = Some("LOG1");
    t[0xa2] = Some("LOG2");
    t[0xa3] = Some("LOG3");
    t[0xa4] = Some("LOG4");
    t[0xf0] = Some("CREATE");
    t[0xf1] = Some("CALL");
    t[0xf2] = Some("CALLCODE");
    t[0xf3] = Some("RETURN");
    t[0xf4] = Some("DELEGATECALL");
    t[0xf5] = Some("CREATE2");
    t[0xfa] = Some("STATICCALL");
    t[0xfd] = Some("REVERT");
    t[0xfe] = Some("INVALID");
    t[0xff] = Some("SELFDESTRUCT");
    t
};

/// Mnemonic for an assigned opcode, `None` for bytes unassigned at Shanghai.
pub fn mnemonic(op: u8) -> Option<&'static str> {
    TABLE[op as usize]
}

/// Rendered mnemonic; unassigned bytes decode as `INVALID(0xXX)`.
pub fn mnemonic_string(op: u8) -> String {
    match TABLE[op as usize] {
        Some(m) => m.to_string(),
        None => format!("INVALID(0x{op:02x})"),
    }
}

/// Operand width in bytes: `Some(0)` for PUSH0 through `Some(32)` for PUSH32,
/// `None` for everything that takes no immediate.
pub fn push_width(op: u8) -> Option<usize> {
    if (PUSH0..=PUSH32).contains(&op) {
        Some((op - PUSH0) as usize)
    } else {
        None
    }
}

pub fn is_push(op: u8) -> bool {
    push_width(op).is_some()
}

/// Instructions after which a basic block always ends. Unassigned bytes halt
/// execution like INVALID and terminate as well.
pub fn is_block_terminator(op: u8) -> bool {
    matches!(
        op,
        STOP | JUMP | JUMPI | RETURN | REVERT | SELFDESTRUCT | INVALID
    ) || TABLE[op as usize].is_none()
}

/// Reverse lookup used when parsing schema `src` strings back to opcodes.
pub fn opcode_from_mnemonic(name: &str) -> Option<u8> {
    if let Some(hex) = name
        .strip_prefix("INVALID(0x")
        .and_then(|rest| rest.strip_suffix(')'))
    {
        return u8::from_str_radix(hex, 16).ok();
    }
    (0u8..=255).find(|&op| TABLE[op as usize] == Some(name))
}
