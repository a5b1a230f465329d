//! EVM runtime-bytecode disassembly: linear decoding, basic-block recovery and
//! selector-dispatcher function identification.
//!
//! Every byte string decodes — on-chain blobs contain arbitrary bytes, so the
//! decoder never fails. PUSH operands running past end-of-code are zero-padded
//! (out-of-bounds code reads as zero in the EVM) and unassigned opcodes decode
//! as `INVALID(0xXX)`.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::opcode;

/// One decoded EVM operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Byte index into the code.
    pub offset: usize,
    pub opcode: u8,
    /// Immediate bytes: length N for PUSHN, empty otherwise.
    pub operand: Vec<u8>,
}

impl Instruction {
    pub fn mnemonic(&self) -> Cow<'static, str> {
        match opcode::mnemonic(self.opcode) {
            Some(m) => Cow::Borrowed(m),
            None => Cow::Owned(format!("INVALID(0x{:02x})", self.opcode)),
        }
    }

    /// Encoded size, opcode byte plus operand bytes.
    pub fn encoded_len(&self) -> usize {
        1 + self.operand.len()
    }

    /// Operand interpreted as a big-endian integer, when it fits a `usize`.
    pub fn operand_value(&self) -> Option<usize> {
        let mut v: usize = 0;
        for &b in &self.operand {
            v = v.checked_mul(256)?.checked_add(b as usize)?;
        }
        Some(v)
    }
}

/// Maximal straight-line run of instructions with a single entry and exit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: usize,
    pub name: String,
    /// Byte offset of the first instruction.
    pub start_offset: usize,
    /// Byte offset just past the last instruction (start of the next block).
    pub end_offset: usize,
    pub instructions: Vec<Instruction>,
    /// Re-encoded bytes of the block (truncated trailing PUSH zero-padded).
    pub bytes: Vec<u8>,
    /// Block ids of static successors: resolved jump target first, then the
    /// fall-through successor where one exists.
    pub callees: Vec<usize>,
}

impl BasicBlock {
    fn last_opcode(&self) -> u8 {
        self.instructions.last().map(|i| i.opcode).unwrap_or(0)
    }

    fn starts_with_jumpdest(&self) -> bool {
        self.instructions
            .first()
            .map(|i| i.opcode == opcode::JUMPDEST)
            .unwrap_or(false)
    }
}

/// A function unit: the blocks claimed by one dispatcher selector, or one of
/// the synthetic groupings (`dispatch`, `orphan`, `main`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionUnit {
    pub id: usize,
    /// Selector hex (`0xaabbccdd`) or a synthetic name.
    pub name: String,
    pub start_offset: usize,
    pub end_offset: usize,
    pub blocks: Vec<BasicBlock>,
    /// Ids of other functions this one's blocks jump into.
    pub callees: Vec<usize>,
}

/// Parses bytecode given as a hex string: optional `0x` prefix, whitespace
/// ignored. An odd digit count or a non-hex character is an error.
pub fn parse_hex(input: &str) -> Result<Vec<u8>> {
    let cleaned: String = input.split_whitespace().collect();
    let cleaned = cleaned.strip_prefix("0x").unwrap_or(&cleaned);
    if !cleaned.len().is_multiple_of(2) {
        return Err(Error::InvalidHex(format!(
            "odd number of hex digits ({})",
            cleaned.len()
        )));
    }
    hex::decode(cleaned).map_err(|e| Error::InvalidHex(e.to_string()))
}

/// Decodes the full byte string into a linear instruction stream. Total: any
/// input decodes, including empty code.
pub fn disassemble(code: &[u8]) -> Vec<Instruction> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    while offset < code.len() {
        let op = code[offset];
        let width = opcode::push_width(op).unwrap_or(0);
        let mut operand = vec![0u8; width];
        for (i, slot) in operand.iter_mut().enumerate() {
            if let Some(&b) = code.get(offset + 1 + i) {
                *slot = b;
            }
        }
        out.push(Instruction {
            offset,
            opcode: op,
            operand,
        });
        offset += 1 + width;
    }
    out
}

/// Partitions an instruction stream into basic blocks.
///
/// A new block starts at offset 0, at every JUMPDEST, and after every
/// terminator (JUMP, JUMPI, STOP, RETURN, REVERT, SELFDESTRUCT, INVALID and
/// unassigned opcodes). Callees hold the static jump target when the
/// instruction before a JUMP/JUMPI is a PUSH of a constant landing on a
/// JUMPDEST, plus the fall-through successor for JUMPI and for blocks whose
/// last instruction does not terminate.
pub fn split_blocks(instructions: Vec<Instruction>) -> Vec<BasicBlock> {
    let mut blocks: Vec<BasicBlock> = Vec::new();
    let mut current: Vec<Instruction> = Vec::new();

    let flush = |current: &mut Vec<Instruction>, blocks: &mut Vec<BasicBlock>| {
        if current.is_empty() {
            return;
        }
        let instructions = std::mem::take(current);
        let start = instructions[0].offset;
        let last = instructions.last().unwrap();
        let end = last.offset + last.encoded_len();
        let mut bytes = Vec::with_capacity(end - start);
        for ins in &instructions {
            bytes.push(ins.opcode);
            bytes.extend_from_slice(&ins.operand);
        }
        blocks.push(BasicBlock {
            id: blocks.len(),
            name: format!("block_0x{start:x}"),
            start_offset: start,
            end_offset: end,
            instructions,
            bytes,
            callees: Vec::new(),
        });
    };

    for ins in instructions {
        if ins.opcode == opcode::JUMPDEST {
            flush(&mut current, &mut blocks);
        }
        let terminates = opcode::is_block_terminator(ins.opcode);
        current.push(ins);
        if terminates {
            flush(&mut current, &mut blocks);
        }
    }
    flush(&mut current, &mut blocks);

    resolve_callees(&mut blocks);
    blocks
}

fn resolve_callees(blocks: &mut [BasicBlock]) {
    let by_start: BTreeMap<usize, usize> = blocks
        .iter()
        .map(|b| (b.start_offset, b.id))
        .collect();
    let jumpdest_starts: BTreeSet<usize> = blocks
        .iter()
        .filter(|b| b.starts_with_jumpdest())
        .map(|b| b.start_offset)
        .collect();

    let callee_lists: Vec<Vec<usize>> = blocks
        .iter()
        .map(|block| {
            let last = block.last_opcode();
            let mut callees = Vec::new();
            if matches!(last, opcode::JUMP | opcode::JUMPI) {
                if let Some(target) = static_jump_target(&block.instructions) {
                    if jumpdest_starts.contains(&target) {
                        callees.push(by_start[&target]);
                    }
                }
            }
            let falls_through = last == opcode::JUMPI || !opcode::is_block_terminator(last);
            if falls_through {
                if let Some(&next) = by_start.get(&block.end_offset) {
                    callees.push(next);
                }
            }
            callees
        })
        .collect();
    for (block, callees) in blocks.iter_mut().zip(callee_lists) {
        block.callees = callees;
    }
}

/// Constant jump target from the one-PUSH-before-JUMP pattern; dynamic jumps
/// yield `None`.
fn static_jump_target(instructions: &[Instruction]) -> Option<usize> {
    let n = instructions.len();
    if n < 2 {
        return None;
    }
    let prev = &instructions[n - 2];
    if opcode::is_push(prev.opcode) {
        prev.operand_value()
    } else {
        None
    }
}

/// Groups blocks into function units via the entry dispatcher idiom
/// `(DUP1|nothing) PUSH4 sel EQ PUSH* target JUMPI`.
///
/// Each selector claims the blocks reachable from its dispatch target that no
/// earlier selector claimed (first-claim wins in selector order). Blocks
/// reachable from offset 0 but from no selector form `dispatch`; the rest form
/// `orphan`. Without a dispatcher the whole block list is one `main` function.
pub fn identify_functions(blocks: Vec<BasicBlock>) -> Vec<FunctionUnit> {
    if blocks.is_empty() {
        return Vec::new();
    }

    let selectors = scan_dispatcher(&blocks);
    if selectors.is_empty() {
        return vec![make_function(0, "main".to_string(), blocks)];
    }

    let by_start: BTreeMap<usize, usize> = blocks
        .iter()
        .map(|b| (b.start_offset, b.id))
        .collect();

    let mut claimed: BTreeSet<usize> = BTreeSet::new();
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();

    for (selector, target) in selectors {
        let Some(&target_block) = by_start.get(&target) else {
            continue;
        };
        if !blocks[target_block].starts_with_jumpdest() {
            continue;
        }
        let reach = reachable_from(&blocks, target_block);
        let own: Vec<usize> = reach.into_iter().filter(|b| !claimed.contains(b)).collect();
        if own.is_empty() {
            // A later selector jumping to an already-claimed target would own
            // nothing; a function must hold at least one block, so drop it.
            continue;
        }
        claimed.extend(own.iter().copied());
        groups.push((format!("0x{selector}"), own));
    }

    let entry_reach = reachable_from(&blocks, 0);
    let dispatch: Vec<usize> = entry_reach
        .into_iter()
        .filter(|b| !claimed.contains(b))
        .collect();
    if !dispatch.is_empty() {
        claimed.extend(dispatch.iter().copied());
        groups.push(("dispatch".to_string(), dispatch));
    }

    let orphan: Vec<usize> = blocks
        .iter()
        .map(|b| b.id)
        .filter(|b| !claimed.contains(b))
        .collect();
    if !orphan.is_empty() {
        groups.push(("orphan".to_string(), orphan));
    }

    build_functions(blocks, groups)
}

/// Walks the entry region — block 0 followed through fall-through successors
/// while blocks keep falling through — and collects `(selector, target)` pairs
/// from blocks ending in the dispatch compare pattern.
fn scan_dispatcher(blocks: &[BasicBlock]) -> Vec<(String, usize)> {
    let by_start: BTreeMap<usize, usize> = blocks
        .iter()
        .map(|b| (b.start_offset, b.id))
        .collect();
    let mut selectors = Vec::new();
    let mut cursor = Some(0usize);
    while let Some(id) = cursor {
        let block = &blocks[id];
        if let Some(pair) = match_dispatch_tail(&block.instructions) {
            selectors.push(pair);
        }
        let last = block.last_opcode();
        let falls_through = last == opcode::JUMPI || !opcode::is_block_terminator(last);
        cursor = if falls_through {
            by_start.get(&block.end_offset).copied()
        } else {
            None
        };
    }
    selectors
}

/// Matches `PUSH4 sel EQ PUSH* target JUMPI` at the end of a block (an
/// optional DUP1 before the PUSH4 does not affect extraction).
fn match_dispatch_tail(instructions: &[Instruction]) -> Option<(String, usize)> {
    let n = instructions.len();
    if n < 4 {
        return None;
    }
    let [sel, eq, push, jumpi] = &instructions[n - 4..] else {
        return None;
    };
    if jumpi.opcode != opcode::JUMPI
        || !opcode::is_push(push.opcode)
        || eq.opcode != opcode::EQ
        || sel.opcode != opcode::PUSH4
    {
        return None;
    }
    let target = push.operand_value()?;
    Some((hex::encode(&sel.operand), target))
}

fn reachable_from(blocks: &[BasicBlock], start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) {
            continue;
        }
        for &next in &blocks[id].callees {
            if !seen.contains(&next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

fn make_function(id: usize, name: String, blocks: Vec<BasicBlock>) -> FunctionUnit {
    let start = blocks.iter().map(|b| b.start_offset).min().unwrap_or(0);
    let end = blocks.iter().map(|b| b.end_offset).max().unwrap_or(0);
    FunctionUnit {
        id,
        name,
        start_offset: start,
        end_offset: end,
        blocks,
        callees: Vec::new(),
    }
}

fn build_functions(blocks: Vec<BasicBlock>, groups: Vec<(String, Vec<usize>)>) -> Vec<FunctionUnit> {
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (fn_id, (_, members)) in groups.iter().enumerate() {
        for &b in members {
            owner.insert(b, fn_id);
        }
    }

    let mut callee_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); groups.len()];
    for block in &blocks {
        let from = owner[&block.id];
        for target in &block.callees {
            let to = owner[target];
            if to != from {
                callee_sets[from].insert(to);
            }
        }
    }

    let mut slots: BTreeMap<usize, BasicBlock> =
        blocks.into_iter().map(|b| (b.id, b)).collect();
    groups
        .into_iter()
        .enumerate()
        .map(|(fn_id, (name, mut members))| {
            members.sort_unstable();
            let owned: Vec<BasicBlock> = members
                .into_iter()
                .map(|b| slots.remove(&b).expect("block claimed twice"))
                .collect();
            let mut unit = make_function(fn_id, name, owned);
            unit.callees = callee_sets[fn_id].iter().copied().collect();
            unit
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(code: &[u8]) -> Vec<Instruction> {
        disassemble(code)
    }

    #[test]
    fn decodes_push_add() {
        // 0x6001600201 → PUSH1 0x01 @0, PUSH1 0x02 @2, ADD @4
        let ins = ops(&[0x60, 0x01, 0x60, 0x02, 0x01]);
        assert_eq!(ins.len(), 3);
        assert_eq!(ins[0].mnemonic(), "PUSH1");
        assert_eq!(ins[0].operand, vec![0x01]);
        assert_eq!(ins[0].offset, 0);
        assert_eq!(ins[1].offset, 2);
        assert_eq!(ins[2].mnemonic(), "ADD");
        assert_eq!(ins[2].offset, 4);
    }

    #[test]
    fn decodes_stop() {
        let ins = ops(&[0x00]);
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].mnemonic(), "STOP");
    }

    #[test]
    fn truncated_push_zero_pads() {
        // 0x60 → PUSH1 0x00 @0
        let ins = ops(&[0x60]);
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].operand, vec![0x00]);

        let ins = ops(&[0x7f, 0xaa]);
        assert_eq!(ins[0].operand.len(), 32);
        assert_eq!(ins[0].operand[0], 0xaa);
        assert!(ins[0].operand[1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn unknown_opcode_decodes_as_invalid() {
        let ins = ops(&[0x0c, 0x01, 0x01]);
        assert_eq!(ins[0].mnemonic(), "INVALID(0x0c)");
        assert_eq!(ins.len(), 3);
    }

    #[test]
    fn offsets_reconstruct_input() {
        for code in [
            vec![0x60, 0x01, 0x60, 0x02, 0x01],
            vec![0x00, 0x5b, 0x56],
            vec![0x7f, 0x01],
        ] {
            let ins = ops(&code);
            for w in ins.windows(2) {
                assert_eq!(w[1].offset, w[0].offset + w[0].encoded_len());
            }
            let mut rebuilt: Vec<u8> = Vec::new();
            for i in &ins {
                rebuilt.push(i.opcode);
                rebuilt.extend_from_slice(&i.operand);
            }
            rebuilt.truncate(code.len());
            assert_eq!(rebuilt, code);
        }
    }

    #[test]
    fn straight_line_code_is_one_block() {
        let blocks = split_blocks(ops(&[0x60, 0x01, 0x60, 0x02, 0x01]));
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].callees.is_empty());
        assert_eq!(blocks[0].start_offset, 0);
        assert_eq!(blocks[0].end_offset, 5);
    }

    #[test]
    fn jump_to_jumpdest_links_blocks() {
        // PUSH1 0x03, JUMP, JUMPDEST@3, STOP
        let blocks = split_blocks(ops(&[0x60, 0x03, 0x56, 0x5b, 0x00]));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].callees, vec![1]);
        assert!(blocks[1].callees.is_empty());
    }

    #[test]
    fn jumpi_has_target_and_fall_through() {
        // Hand-trace: PUSH1 0x00 @0, PUSH1 0x06 @2, JUMPI @4, STOP @5,
        // JUMPDEST @6, STOP @7 → blocks [0..5), [5..6), [6..8).
        let code = [0x60, 0x00, 0x60, 0x06, 0x57, 0x00, 0x5b, 0x00];
        let blocks = split_blocks(ops(&code));
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].callees, vec![2, 1]); // target first, then fall-through
        assert_eq!(blocks[1].start_offset, 5);
        assert_eq!(blocks[2].start_offset, 6);
    }

    #[test]
    fn jumpdest_starts_new_block() {
        // PUSH1 1, JUMPDEST, STOP → two blocks split at the JUMPDEST
        let blocks = split_blocks(ops(&[0x60, 0x01, 0x5b, 0x00]));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].callees, vec![1]); // fall-through only
    }

    #[test]
    fn dynamic_jump_gets_no_edge() {
        // CALLDATALOAD, JUMP: target unknown
        let blocks = split_blocks(ops(&[0x35, 0x56, 0x5b, 0x00]));
        assert_eq!(blocks.len(), 2);
        assert!(blocks[0].callees.is_empty());
    }

    #[test]
    fn blocks_partition_instructions() {
        let code: Vec<u8> = vec![
            0x60, 0x01, 0x57, 0x5b, 0x60, 0x02, 0x00, 0x0c, 0x5b, 0xfd,
        ];
        let ins = ops(&code);
        let total: usize = ins.len();
        let blocks = split_blocks(ins);
        let in_blocks: usize = blocks.iter().map(|b| b.instructions.len()).sum();
        assert_eq!(total, in_blocks);
        for w in blocks.windows(2) {
            assert_eq!(w[0].end_offset, w[1].start_offset);
            assert!(w[0].start_offset < w[1].start_offset);
        }
        for b in &blocks {
            // at most one terminator, and only in last position
            for ins in &b.instructions[..b.instructions.len() - 1] {
                assert!(!opcode::is_block_terminator(ins.opcode));
            }
        }
    }

    /// Assembles a two-selector dispatcher by hand:
    ///   entry: PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
    ///   DUP1 PUSH4 aaaaaaaa EQ PUSH1 t1 JUMPI
    ///   DUP1 PUSH4 bbbbbbbb EQ PUSH1 t2 JUMPI
    ///   STOP
    ///   t1: JUMPDEST PUSH1 1 POP STOP
    ///   t2: JUMPDEST PUSH1 2 POP STOP
    fn two_selector_dispatcher(second_target_same: bool) -> Vec<u8> {
        let mut code = vec![0x60, 0x00, 0x35, 0x60, 0xe0, 0x1c];
        // entry is 6 bytes; each compare sequence is 10 bytes
        // (DUP1=1, PUSH4=5, EQ=1, PUSH1=2, JUMPI=1), then the fallback STOP
        let t1 = 6 + 10 + 10 + 1;
        let t2 = if second_target_same { t1 } else { t1 + 5 };
        code.extend_from_slice(&[0x80, 0x63, 0xaa, 0xaa, 0xaa, 0xaa, 0x14, 0x60, t1 as u8, 0x57]);
        code.extend_from_slice(&[0x80, 0x63, 0xbb, 0xbb, 0xbb, 0xbb, 0x14, 0x60, t2 as u8, 0x57]);
        code.push(0x00); // fallback STOP
        code.extend_from_slice(&[0x5b, 0x60, 0x01, 0x50, 0x00]); // t1 body
        code.extend_from_slice(&[0x5b, 0x60, 0x02, 0x50, 0x00]); // t2 body
        code
    }

    #[test]
    fn no_dispatcher_yields_main() {
        let funcs = identify_functions(split_blocks(ops(&[0x60, 0x01, 0x60, 0x02, 0x01])));
        assert_eq!(funcs.len(), 1);
        assert_eq!(funcs[0].name, "main");
        assert_eq!(funcs[0].blocks.len(), 1);
    }

    #[test]
    fn two_selector_dispatcher_identified() {
        let code = two_selector_dispatcher(false);
        let funcs = identify_functions(split_blocks(ops(&code)));
        let names: Vec<&str> = funcs.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["0xaaaaaaaa", "0xbbbbbbbb", "dispatch"]);
        assert_eq!(funcs[0].blocks.len(), 1);
        assert_eq!(funcs[1].blocks.len(), 1);
        // dispatcher chain: entry+compare blocks and the fallback STOP
        assert_eq!(funcs[2].blocks.len(), 3);
        // dispatch calls into both selector functions
        assert_eq!(funcs[2].callees, vec![0, 1]);
    }

    #[test]
    fn same_target_selectors_first_claim_wins() {
        let code = two_selector_dispatcher(true);
        let funcs = identify_functions(split_blocks(ops(&code)));
        let names: Vec<&str> = funcs.iter().map(|f| f.name.as_str()).collect();
        // second selector's reachable set is fully claimed; it owns no blocks
        assert!(names.contains(&"0xaaaaaaaa"));
        assert!(!names.contains(&"0xbbbbbbbb"));
        assert!(names.contains(&"orphan")); // unreferenced t2 body region
    }

    #[test]
    fn every_block_in_exactly_one_function() {
        let code = two_selector_dispatcher(false);
        let blocks = split_blocks(ops(&code));
        let total = blocks.len();
        let funcs = identify_functions(blocks);
        let mut seen = BTreeSet::new();
        for f in &funcs {
            for b in &f.blocks {
                assert!(seen.insert(b.id), "block {} claimed twice", b.id);
            }
        }
        assert_eq!(seen.len(), total);
    }

    #[test]
    fn parse_hex_accepts_prefix_and_whitespace() {
        assert_eq!(parse_hex("0x6001").unwrap(), vec![0x60, 0x01]);
        assert_eq!(parse_hex("60 01\n02").unwrap(), vec![0x60, 0x01, 0x02]);
        assert!(matches!(parse_hex("0x600"), Err(Error::InvalidHex(_))));
        assert!(matches!(parse_hex("zz"), Err(Error::InvalidHex(_))));
    }

    proptest::proptest! {
        /// Re-encoding the decoded stream reproduces the input for any bytes.
        #[test]
        fn decode_round_trips(code in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..300)) {
            let ins = disassemble(&code);
            let mut rebuilt: Vec<u8> = Vec::with_capacity(code.len());
            for i in &ins {
                rebuilt.push(i.opcode);
                rebuilt.extend_from_slice(&i.operand);
            }
            rebuilt.truncate(code.len());
            proptest::prop_assert_eq!(rebuilt, code);
        }

        /// Blocks partition the stream; every block lands in one function.
        #[test]
        fn blocks_and_functions_partition(code in proptest::collection::vec(proptest::prelude::any::<u8>(), 1..300)) {
            let ins = disassemble(&code);
            let n = ins.len();
            let blocks = split_blocks(ins);
            proptest::prop_assert_eq!(n, blocks.iter().map(|b| b.instructions.len()).sum::<usize>());
            for w in blocks.windows(2) {
                proptest::prop_assert!(w[0].start_offset < w[1].start_offset);
            }
            let total = blocks.len();
            let funcs = identify_functions(blocks);
            let mut seen = BTreeSet::new();
            for f in &funcs {
                for b in &f.blocks {
                    proptest::prop_assert!(seen.insert(b.id));
                }
            }
            proptest::prop_assert_eq!(seen.len(), total);
        }
    }
}
