//! Swift-Hohenberg energy on [-32, 32] with Hermite cubics: lower bound,
//! extracted minimizer and an SVG of u.
//!
//! cargo run --release --example swift_hohenberg [-- n omega]

use varimin::config::parse_spec;
use varimin::gradflow::count_peaks;
use varimin::pipeline::{run, write_artifacts};

fn main() -> varimin::Result<()> {
    let mut spec = parse_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/swift_hohenberg.toml"))?;
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    spec.discretization.n = args.first().copied().unwrap_or(64);
    spec.relaxation.omega = args.get(1).copied().unwrap_or(3);
    let o = run(&spec)?;
    println!(
        "h = {}  omega = {}  moments = {}  blocks = {}",
        o.space.mesh.h,
        spec.relaxation.omega,
        o.sdp.n_moments,
        o.sdp.blocks.len()
    );
    println!("lambda = {:.5}  energy = {:.5}  gap = {:.2e}", o.solution.lambda, o.minimizer.energy, o.minimizer.gap);
    println!("peaks in the extracted minimizer: {}", count_peaks(&o.space, &o.minimizer.dofs, 16));
    let t = o.report.timings;
    println!(
        "times: discretize {:.2}s sparsity {:.2}s relax {:.2}s solve {:.2}s extract {:.2}s",
        t.discretize, t.sparsity, t.relax, t.solve, t.extract
    );
    for p in write_artifacts(&o, &spec.outputs.dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
