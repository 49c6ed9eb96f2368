//! Two-well energy ε²|∇u|² + (u+1)²(u−2)² on the unit square, P1 triangles,
//! k = 10, ω = 2, β = √2/h. The relaxation finds the u ≈ −1 well away from
//! the boundary layers.
//!
//! cargo run --release --example two_well

use varimin::config::parse_spec;
use varimin::pipeline::run;

fn main() -> varimin::Result<()> {
    let spec = parse_spec(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/two_well.toml"))?;
    let o = run(&spec)?;
    println!("status {:?} after {} iterations", o.solution.status, o.solution.iterations);
    println!("lambda {:.6}  energy {:.6}  gap {:.2e}", o.solution.lambda, o.minimizer.energy, o.minimizer.gap);
    let s = o.cliques.stats();
    println!("{} cliques, max size {}, avg {:.2}", s.count, s.max_size, s.avg_size);

    // nodal values on the mesh rows, boundary included
    let k = spec.discretization.n;
    let mut grid = vec![vec![0.0; k + 1]; k + 1];
    for (m, v) in o.space.dofmap.dof_meta.iter().zip(&o.minimizer.dofs) {
        grid[m.vertex / (k + 1)][m.vertex % (k + 1)] = *v;
    }
    for row in grid.iter().rev() {
        println!("{}", row.iter().map(|v| format!("{v:6.2}")).collect::<Vec<_>>().join(""));
    }
    Ok(())
}
