//! Deterministic synthetic bytecode corpora for tests, examples and
//! benchmarks.
//!
//! Each template family draws its opcodes and constants from its own slice of
//! the instruction space, so different families stay lexically far apart
//! while rewrite variants of one template stay close. Bodies are straight
//! line code (no dispatcher), which keeps every generated function distinct;
//! [`dispatcher_contract`] assembles realistic selector-dispatched contracts
//! where those are wanted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::labels::{LabelStore, VulnTag};
use crate::schema::{build_contract_file, ContractFile};

/// Opcodes safe inside a straight-line body: no terminators, jumps,
/// JUMPDESTs or pushes.
const BODY_OPS: [u8; 28] = [
    0x01, // ADD
    0x02, // MUL
    0x03, // SUB
    0x04, // DIV
    0x06, // MOD
    0x0a, // EXP
    0x10, // LT
    0x11, // GT
    0x16, // AND
    0x17, // OR
    0x18, // XOR
    0x19, // NOT
    0x15, // ISZERO
    0x1b, // SHL
    0x1c, // SHR
    0x30, // ADDRESS
    0x31, // BALANCE
    0x32, // ORIGIN
    0x33, // CALLER
    0x34, // CALLVALUE
    0x36, // CALLDATASIZE
    0x3a, // GASPRICE
    0x42, // TIMESTAMP
    0x43, // NUMBER
    0x51, // MLOAD
    0x54, // SLOAD
    0x59, // MSIZE
    0x5a, // GAS
];

/// A template body as a list of statements, each a short byte sequence.
#[derive(Debug, Clone)]
pub struct BodyTemplate {
    statements: Vec<Vec<u8>>,
}

impl BodyTemplate {
    /// Generates the template for one family. Families take one of seven
    /// disjoint four-operator windows plus a constant range of their own
    /// (ranges of same-window families stay disjoint for corpora of up to
    /// ~60 families), so unrelated families share little vocabulary beyond
    /// the push/store scaffolding.
    pub fn generate(family: u64, seed: u64, statements: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ family.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let base = (family as usize % 7) * 4;
        let ops: Vec<u8> = BODY_OPS[base..base + 4].to_vec();
        let const_base = ((family * 37) % 233) as u8;

        let konst =
            |rng: &mut ChaCha8Rng| const_base.wrapping_add(rng.random_range(0..24u8));
        // families also favor two of the four statement shapes, so even the
        // scaffolding distribution differs between unrelated families
        let favored = [family % 4, (family / 4 + 1) % 4];
        let gen = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let op = ops[rng.random_range(0..ops.len())];
            let op2 = ops[rng.random_range(0..ops.len())];
            let shape = if rng.random_range(0..10u32) < 7 {
                favored[rng.random_range(0..2usize)] as u32
            } else {
                rng.random_range(0..4u32)
            };
            match shape {
                // PUSH1 c PUSH1 c' op op'
                0 => vec![0x60, konst(rng), 0x60, konst(rng), op, op2],
                // PUSH1 c op PUSH1 slot SSTORE
                1 => vec![0x60, konst(rng), op, 0x60, konst(rng), 0x55],
                // op' PUSH1 c op POP
                2 => vec![op2, 0x60, konst(rng), op, 0x50],
                // PUSH2 c c' op op'
                _ => vec![0x61, konst(rng), konst(rng), op, op2],
            }
        };

        let statements = (0..statements).map(|_| gen(&mut rng)).collect();
        BodyTemplate { statements }
    }

    pub fn statement_count(&self) -> usize {
        self.statements.len()
    }

    /// The body bytes: statements back to back, closed with STOP.
    pub fn bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.statements.iter().flatten().copied().collect();
        out.push(0x00);
        out
    }

    /// Type-III rewrite: the same body with one statement removed.
    pub fn delete_statement(&self, which: usize) -> Self {
        let mut statements = self.statements.clone();
        statements.remove(which % statements.len());
        BodyTemplate { statements }
    }
}

/// `n` distinct straight-line contracts, one `main` function each.
pub fn straightline_contracts(n: usize, seed: u64) -> Vec<(String, Vec<u8>)> {
    (0..n)
        .map(|i| {
            let template = BodyTemplate::generate(i as u64, seed, 8 + (i % 4));
            (format!("contract_{i:03}"), template.bytes())
        })
        .collect()
}

/// (original, statement-deleted variant, unrelated distractor) triples.
pub fn rewrite_triples(n: usize, seed: u64) -> Vec<[(String, Vec<u8>); 3]> {
    (0..n)
        .map(|i| {
            let family = i as u64;
            let original = BodyTemplate::generate(family, seed, 9);
            let variant = original.delete_statement(i);
            let distractor = BodyTemplate::generate(family + n as u64, seed, 9);
            [
                (format!("orig_{i:02}"), original.bytes()),
                (format!("variant_{i:02}"), variant.bytes()),
                (format!("distractor_{i:02}"), distractor.bytes()),
            ]
        })
        .collect()
}

/// A labeled corpus of `templates` families × `variants` rewrite variants.
/// Variant 0 is the template itself; later variants delete one statement
/// each. Every variant of family `i` carries tag `ALL[i mod 7]`.
pub fn labeled_template_corpus(
    templates: usize,
    variants: usize,
    seed: u64,
) -> (Vec<ContractFile>, LabelStore) {
    let mut files = Vec::new();
    let mut labels = LabelStore::new();
    for t in 0..templates {
        let template = BodyTemplate::generate(t as u64, seed, 9);
        let tag = VulnTag::ALL[t % VulnTag::ALL.len()];
        for v in 0..variants {
            let body = if v == 0 {
                template.clone()
            } else {
                template.delete_statement(t + v)
            };
            let name = format!("tmpl{t:02}_v{v}");
            files.push(build_contract_file(&name, &body.bytes()));
            labels.insert(&name, &name, tag);
        }
    }
    (files, labels)
}

/// Assembles a selector-dispatched contract:
///
/// ```text
/// PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
/// { DUP1 PUSH4 sel EQ PUSH2 target JUMPI }  per function
/// STOP
/// { JUMPDEST body STOP }                    per function
/// ```
pub fn dispatcher_contract(functions: &[([u8; 4], Vec<u8>)]) -> Vec<u8> {
    let entry_len = 6;
    let compare_len = 11;
    let fallback = 1;
    let mut target = entry_len + functions.len() * compare_len + fallback;
    let mut targets = Vec::with_capacity(functions.len());
    for (_, body) in functions {
        targets.push(target);
        target += 1 + body.len() + 1; // JUMPDEST + body + STOP
    }

    let mut code = vec![0x60, 0x00, 0x35, 0x60, 0xe0, 0x1c];
    for ((selector, _), &target) in functions.iter().zip(&targets) {
        code.push(0x80); // DUP1
        code.push(0x63); // PUSH4
        code.extend_from_slice(selector);
        code.push(0x14); // EQ
        code.push(0x61); // PUSH2
        code.extend_from_slice(&(target as u16).to_be_bytes());
        code.push(0x57); // JUMPI
    }
    code.push(0x00); // fallback STOP
    for (_, body) in functions {
        code.push(0x5b); // JUMPDEST
        code.extend_from_slice(body);
        code.push(0x00); // STOP
    }
    code
}
