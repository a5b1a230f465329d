//! Build the contract-file hierarchy for a bytecode blob and print its
//! extraction-schema JSON.
//!
//! ```bash
//! cargo run --example extract_schema -- 0x6001600201
//! ```

use evm2vec::{build_contract_file, deserialize, parse_hex, serialize};

fn main() {
    let hex_arg = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "0x6001600201".to_string());
    let code = parse_hex(&hex_arg).expect("argument must be hex bytecode");

    let file = build_contract_file("example", &code);
    println!(
        "md5 {} — {} contract(s), {} function(s)",
        file.md5,
        file.contracts.len(),
        file.function_count()
    );

    let json = serialize(&file);
    print!("{}", String::from_utf8_lossy(&json));

    // the schema round-trips losslessly
    let back = deserialize(&json).expect("own output parses");
    assert_eq!(file, back);
}
