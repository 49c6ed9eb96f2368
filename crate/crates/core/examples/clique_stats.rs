//! Clique families for the two-well discretization: element cliques versus
//! maximal cliques of a chordal extension, and whether each satisfies the
//! running intersection property.
//!
//! cargo run --release --example clique_stats

use varimin::config::parse_spec;
use varimin::pipeline::{clique_reports, discretize};
use varimin::sparsity::{check_rip, chordal_extend, csp_graph};

fn main() -> varimin::Result<()> {
    let mut spec = parse_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/two_well.toml"))?;
    for k in [5, 10, 20] {
        spec.discretization.n = k;
        println!("k = {k}");
        for r in clique_reports(&spec)? {
            println!("  {r}");
        }
        let (_, pop) = discretize(&spec)?;
        let g = csp_graph(&pop);
        let (chordal, _) = chordal_extend(&g);
        println!("  sparsity graph: {} edges, chordal fill {}", g.n_edges(), chordal.n_edges() - g.n_edges());
    }

    // a chain of overlapping cliques has RIP; closing it into a cycle breaks it
    let chain: Vec<Vec<usize>> = (0..6).map(|i| vec![i, i + 1]).collect();
    let mut cycle = chain.clone();
    cycle.push(vec![6, 0]);
    println!("chain RIP order: {:?}", check_rip(&chain));
    println!("cycle RIP order: {:?}", check_rip(&cycle));
    Ok(())
}
