//! Lower bounds λ for the Swift-Hohenberg problem over mesh sizes and
//! relaxation orders, with β = 2/h and element cliques.
//!
//! cargo run --release --example lambda_sweep

use varimin::config::parse_spec;
use varimin::pipeline::sweep;

fn main() -> varimin::Result<()> {
    let spec = parse_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/swift_hohenberg.toml"))?;
    let table = sweep(&spec, &[2, 3], &[16, 32, 64], 1)?;
    print!("{}", table.to_csv());
    Ok(())
}
