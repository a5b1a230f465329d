//! Disassemble EVM runtime bytecode into instructions, basic blocks and
//! function units.
//!
//! ```bash
//! cargo run --example disassemble -- 0x6001600201
//! cargo run --example disassemble            # built-in dispatcher sample
//! ```

use evm2vec::synth::{dispatcher_contract, BodyTemplate};
use evm2vec::{disassemble, identify_functions, parse_hex, split_blocks};

fn main() {
    let code = match std::env::args().nth(1) {
        Some(hex_arg) => parse_hex(&hex_arg).expect("argument must be hex bytecode"),
        None => {
            let body_a = BodyTemplate::generate(0, 1, 4).bytes();
            let body_b = BodyTemplate::generate(1, 1, 4).bytes();
            dispatcher_contract(&[
                ([0xaa, 0xbb, 0xcc, 0xdd], body_a[..body_a.len() - 1].to_vec()),
                ([0x11, 0x22, 0x33, 0x44], body_b[..body_b.len() - 1].to_vec()),
            ])
        }
    };

    let instructions = disassemble(&code);
    println!("{} bytes, {} instructions", code.len(), instructions.len());
    for ins in &instructions {
        if ins.operand.is_empty() {
            println!("  {:>5}: {}", ins.offset, ins.mnemonic());
        } else {
            println!("  {:>5}: {} 0x{}", ins.offset, ins.mnemonic(), hex::encode(&ins.operand));
        }
    }

    let blocks = split_blocks(instructions);
    println!("\n{} basic blocks", blocks.len());
    for block in &blocks {
        println!(
            "  {} [{}, {}) {} instruction(s), callees {:?}",
            block.name,
            block.start_offset,
            block.end_offset,
            block.instructions.len(),
            block.callees
        );
    }

    let functions = identify_functions(blocks);
    println!("\n{} function unit(s)", functions.len());
    for function in &functions {
        println!(
            "  {} [{}, {}) {} block(s), callees {:?}",
            function.name,
            function.start_offset,
            function.end_offset,
            function.blocks.len(),
            function.callees
        );
    }
}
