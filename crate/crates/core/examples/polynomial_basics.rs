//! Parsing, arithmetic and evaluation of sparse polynomials, and how an
//! integrand becomes per-element polynomials in the DOFs.
//!
//! cargo run --example polynomial_basics

use varimin::discretize::{assemble_element_objectives, FeSpace, Integrand};
use varimin::mesh::{build_interval_mesh, ElementKind};
use varimin::poly::{parse_polynomial, VarRegistry};

fn main() -> varimin::Result<()> {
    let reg = VarRegistry::with_names(&["a", "b"]);
    let p = parse_polynomial("(a - 2*b)^2 + 3*a*b^3", &reg)?;
    let q = parse_polynomial("a + 1", &reg)?;
    println!("p        = {p}");
    println!("deg p    = {}", p.degree());
    println!("p * q    = {}", &p * &q);
    println!("dp/db    = {}", p.derivative(reg.get("b").unwrap()));
    println!("p(1, -1) = {}", p.evaluate_dense(&[1.0, -1.0])?);

    // Two Hermite elements on [-1, 1]: one interior vertex, so two DOFs
    // (value and slope) survive the boundary conditions.
    let mesh = build_interval_mesh(1.0, 2)?;
    let space = FeSpace::new(mesh.clone(), ElementKind::HermiteCubicInterval)?;
    let integrand = Integrand::parse("uxx^2 + u^4")?;
    for (e, obj) in assemble_element_objectives(&integrand, &mesh, &space.dofmap)?.iter().enumerate() {
        println!("element {e}: DOFs {:?}, f_e = {}", obj.dofs, obj.poly);
    }
    Ok(())
}
