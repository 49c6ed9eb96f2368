//! Seeds the L² gradient flow with relaxation minimizers on several meshes,
//! prolongated to a fine mesh, and compares peak counts and energies with
//! random-start flows.
//!
//! cargo run --release --example gradient_flow [-- c omega]
//! (c: constant bound β, default 4; omega default 3)

use varimin::config::ProblemSpec;
use varimin::discretize::{BoundRule, Integrand};
use varimin::gradflow::{count_peaks, prolongate, random_sweep, run_to_steady, FlowProblem, FlowSettings};
use varimin::pipeline::run;

const SPEC: &str = r#"
[problem]
dim = 1
half_length = 32.0
integrand = "(uxx+u)^2 - 0.3*u^2 - 1.2*u^3 + 0.5*u^4"

[discretization]
element = "hermite-cubic-interval"
n = 16
bound = { rule = "constant", c = 4.0 }
"#;

fn main() -> varimin::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let c: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let omega: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut spec = ProblemSpec::from_toml(SPEC)?;
    spec.discretization.bound = BoundRule::Constant(c);
    spec.relaxation.omega = omega;

    let mut fine_spec = spec.clone();
    fine_spec.discretization.n = 128;
    let fine = fine_spec.space()?;
    let integrand = Integrand::parse(&spec.problem.integrand)?;
    let flow = FlowProblem::new(&fine, &integrand)?;
    let settings = FlowSettings::default();

    let random = random_sweep(&flow, &fine, 10, 1, &settings)?;
    let best = random.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    println!("best of 10 random flows on h = 1/2: {best:.5}");

    println!("{:>6} {:>11} {:>11} {:>6} {:>11} {:>6}", "h", "lambda", "extracted", "peaks", "flowed", "peaks");
    for n in [16, 32, 64] {
        spec.discretization.n = n;
        let o = run(&spec)?;
        let seed = prolongate(&o.space, &o.minimizer.dofs, &fine)?;
        let r = run_to_steady(&flow, seed, &settings)?;
        println!(
            "{:>6} {:>11.5} {:>11.5} {:>6} {:>11.5} {:>6}{}",
            o.space.mesh.h,
            o.solution.lambda,
            o.minimizer.energy,
            count_peaks(&o.space, &o.minimizer.dofs, 16),
            r.energy,
            count_peaks(&fine, &r.dofs, 16),
            if o.minimizer.gap_flag { "  gap flagged" } else { "" }
        );
    }
    Ok(())
}
