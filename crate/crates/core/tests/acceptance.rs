//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any failed. Runs share a cache so each relaxation is solved once.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use varimin::config::ProblemSpec;
use varimin::discretize::{assemble_element_objectives, build_pop, BoundRule, ConstraintKind, ElementObjective, FeSpace, Integrand, Pop};
use varimin::gradflow::{count_peaks, is_monotone, prolongate, random_sweep, run_to_steady, FlowProblem, FlowResult, FlowSettings};
use varimin::mesh::{build_rect_mesh, ElementKind};
use varimin::pipeline::{run, RunOutcome};
use varimin::poly::{Polynomial, VarId};
use varimin::relax::assemble_sdp;
use varimin::sdpsolve::{solve, SolverSettings};
use varimin::sparsity::{check_rip, chordal_extend, rip_holds, CliqueSet, CliqueStrategy, Graph};

const SH_SPEC: &str = r#"
[problem]
dim = 1
half_length = 32.0
integrand = "(uxx+u)^2 - 0.3*u^2 - 1.2*u^3 + 0.5*u^4"

[discretization]
element = "hermite-cubic-interval"
n = 16
bound = { rule = "inverse-h", c = 2.0 }
"#;

const TWO_WELL_SPEC: &str = r#"
[problem]
dim = 2
lx = 0.5
ly = 0.5
integrand = "0.01*(ux^2+uy^2) + (u+1)^2*(u-2)^2"

[discretization]
element = "lagrange-p1-triangle"
n = 10
bound = { rule = "inverse-h", c = 1.4142135623730951 }
"#;

const SH: &str = "(uxx+u)^2 - 0.3*u^2 - 1.2*u^3 + 0.5*u^4";

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Problem {
    /// Swift-Hohenberg with β = 2/h
    ShInverse,
    /// Swift-Hohenberg with β = 4
    ShConst,
    TwoWell,
}

#[derive(Default)]
struct Cache {
    runs: BTreeMap<(Problem, usize, usize), Arc<RunOutcome>>,
}

impl Cache {
    fn get(&mut self, p: Problem, n: usize, omega: usize) -> Arc<RunOutcome> {
        self.runs
            .entry((p, n, omega))
            .or_insert_with(|| {
                let mut spec = ProblemSpec::from_toml(if p == Problem::TwoWell { TWO_WELL_SPEC } else { SH_SPEC }).unwrap();
                if p == Problem::ShConst {
                    spec.discretization.bound = BoundRule::Constant(4.0);
                }
                spec.discretization.n = n;
                spec.relaxation.omega = omega;
                // absolute accuracy eps_abs at |λ| ≈ 35 needs a relative tolerance below eps_abs / 35
                spec.solver.eps_rel = 1e-8;
                let t = Instant::now();
                let o = run(&spec).unwrap_or_else(|e| panic!("{p:?} n={n} omega={omega}: {e}"));
                println!(
                    "    [run] {p:?} h={} omega={omega}: lambda={:.6} energy={:.6} status={:?} ({:.1}s)",
                    o.space.mesh.h,
                    o.solution.lambda,
                    o.minimizer.energy,
                    o.solution.status,
                    t.elapsed().as_secs_f64()
                );
                Arc::new(o)
            })
            .clone()
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Published lower bounds for the Swift-Hohenberg chain, within 1%.
fn reference_bounds(c: &mut Cache) -> Outcome {
    let cells = [(16, 2, -4.9227), (16, 3, -4.9049), (32, 2, -25.1396), (64, 2, -35.2759), (64, 3, -35.2360)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, w, target) in cells {
        let o = c.get(Problem::ShInverse, n, w);
        let e = rel(o.solution.lambda, target);
        pass &= e <= 0.01;
        parts.push(format!("h={} w={w}: {:.4} vs {target} ({:.3}%)", 64.0 / n as f64, o.solution.lambda, 100.0 * e));
    }
    verdict(pass, parts.join("; "))
}

/// λ non-decreasing in ω up to twice the solver tolerance.
fn monotone(c: &mut Cache) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let groups: [(Problem, usize, &[usize]); 5] = [
        (Problem::ShInverse, 16, &[2, 3]),
        (Problem::ShInverse, 32, &[2, 3]),
        (Problem::ShInverse, 64, &[2, 3]),
        (Problem::ShConst, 64, &[2, 3]),
        (Problem::TwoWell, 10, &[2, 3]),
    ];
    for (p, n, omegas) in groups {
        let l: Vec<f64> = omegas.iter().map(|&w| c.get(p, n, w).solution.lambda).collect();
        for w in l.windows(2) {
            let s = SolverSettings::default();
            let tol = 2.0 * (s.eps_abs + s.eps_rel * w[0].abs());
            pass &= w[0] <= w[1] + tol;
        }
        parts.push(format!("{p:?} n={n}: {:?}", l.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>()));
    }
    verdict(pass, parts.join("; "))
}

/// λ ≤ Φ(extracted) + 10·eps_abs on every cached run.
fn sandwich(c: &mut Cache) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for o in c.runs.values() {
        let excess = o.solution.lambda - o.minimizer.energy;
        worst = worst.max(excess);
        println!(
            "    [sandwich] h={} w={}: lambda={:.8} lower={:.8} energy={:.8} excess={excess:.2e}",
            o.space.mesh.h, o.spec.relaxation.omega, o.solution.lambda, o.solution.lower_bound, o.minimizer.energy
        );
        pass &= excess <= 10.0 * o.spec.solver.eps_abs;
    }
    verdict(pass, format!("{} runs, max(lambda - energy) = {worst:.2e}", c.runs.len()))
}

/// |u + 1| ≤ 0.15 at nodes farther than 0.3 from the boundary.
fn two_well(c: &mut Cache) -> Outcome {
    let t = Instant::now();
    let o = c.get(Problem::TwoWell, 10, 2);
    let secs = t.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (m, v) in o.space.dofmap.dof_meta.iter().zip(&o.minimizer.dofs) {
        let p = o.space.mesh.vertices[m.vertex];
        let dist = (0.5 - p[0].abs()).min(0.5 - p[1].abs());
        if dist > 0.3 + 1e-12 {
            worst = worst.max((v + 1.0).abs());
            count += 1;
        }
    }
    verdict(
        worst <= 0.15 && count > 0 && secs <= 300.0,
        format!("{count} interior nodes, max |u+1| = {worst:.4}, {secs:.1}s"),
    )
}

/// Grid search with `per_axis` points per axis then Newton polish on the box.
fn grid_minimum(f: &Polynomial, n: usize, bound: f64, per_axis: usize) -> f64 {
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    loop {
        for k in 0..n {
            x[k] = -bound + 2.0 * bound * idx[k] as f64 / (per_axis - 1) as f64;
        }
        let v = f.evaluate_dense(&x).unwrap();
        if v < best.0 {
            best = (v, x.clone());
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    let grad: Vec<Polynomial> = (0..n).map(|i| f.derivative(VarId(i as u32))).collect();
    let hess: Vec<Vec<Polynomial>> = grad.iter().map(|g| (0..n).map(|j| g.derivative(VarId(j as u32))).collect()).collect();
    let mut x = best.1;
    for _ in 0..50 {
        let g = nalgebra::DVector::from_iterator(n, grad.iter().map(|p| p.evaluate_dense(&x).unwrap()));
        let h = nalgebra::DMatrix::from_fn(n, n, |i, j| hess[i][j].evaluate_dense(&x).unwrap());
        let Some(d) = h.lu().solve(&g) else { break };
        let cand: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| (a - b).clamp(-bound, bound)).collect();
        if f.evaluate_dense(&cand).unwrap() > f.evaluate_dense(&x).unwrap() {
            break;
        }
        x = cand;
    }
    f.evaluate_dense(&x).unwrap().min(best.0)
}

fn dense_pop(f: Polynomial, n: usize) -> Pop {
    Pop {
        n_vars: n,
        objectives: vec![ElementObjective {
            dofs: (0..n).collect(),
            poly: f,
        }],
        constraint_kind: ConstraintKind::Box,
        bound: 1.0,
        scale: 1.0,
    }
}

/// Dense ω = 2 relaxations match brute force; sparse ≤ dense.
fn brute_force() -> Outcome {
    let x = |j: u32| Polynomial::var(VarId(j));
    let k = |v: f64| Polynomial::constant(v);
    // one interior triangle of the two-well discretization, in scaled variables
    let mesh = build_rect_mesh(0.5, 0.5, 4).unwrap();
    let space = FeSpace::new(mesh.clone(), ElementKind::LagrangeP1Triangle).unwrap();
    let objs = assemble_element_objectives(&Integrand::parse("0.01*(ux^2+uy^2) + (u+1)^2*(u-2)^2").unwrap(), &mesh, &space.dofmap).unwrap();
    let tw = build_pop(objs, &space.dofmap, ConstraintKind::Box, BoundRule::Constant(3.0), &mesh).unwrap();
    let tri = tw.objectives.iter().find(|o| o.dofs.len() == 3).unwrap();
    let remap: HashMap<VarId, VarId> = tri.dofs.iter().enumerate().map(|(i, &d)| (VarId(d as u32), VarId(i as u32))).collect();
    let tri_poly = tri.poly.map_vars(|v| remap[&v]);

    let quartic = |a: &Polynomial| a.pow(4);
    let cases: Vec<(&str, Polynomial, usize)> = vec![
        ("two-well triangle", tri_poly, 3),
        ("tilted double well", &(&quartic(&x(0)) - &x(0).pow(2).scale(1.5)) + &x(0).scale(0.3), 1),
        ("coupled wells", &(&(&quartic(&x(0)) + &quartic(&x(1))) - &(&x(0).pow(2) + &x(1).pow(2).scale(0.8))) + &(&x(0) * &x(1)).scale(0.4), 2),
        ("rosenbrock-like", &(&(&x(0).pow(2) + &x(1)) - &k(0.6)).pow(2) + &(&(&x(0) - &x(1)).pow(2).scale(0.5) + &x(0).scale(0.2)), 2),
        ("three-variable chain", &(&(&(&quartic(&x(0)) + &quartic(&x(1))) + &quartic(&x(2))) - &(&x(0).pow(2) + &x(1).pow(2).scale(1.5))) + &(&(&(&x(0) * &x(1)) + &(&x(1) * &x(2)).scale(0.7)) - &x(2).scale(0.5)), 3),
        ("cubic coupling", &(&(&x(0).pow(2) * &x(1)).scale(1.2) + &quartic(&x(1))) + &(&x(0).pow(2).scale(0.1) - &(&x(0) * &x(1)).scale(0.3)), 2),
    ];
    let s = SolverSettings::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f, n) in &cases {
        let pop = dense_pop(f.clone(), *n);
        let cs = CliqueSet {
            cliques: vec![(0..*n).collect()],
            element_assignment: vec![Some(0)],
            rip_ordering: Some(vec![0]),
        };
        let dense = solve(&assemble_sdp(&pop, &cs, 2).unwrap().0, &s).unwrap().lambda;
        let grid = grid_minimum(f, *n, 1.0, if *n == 3 { 201 } else { 401 });
        let ok = (dense - grid).abs() <= 1e-3;
        pass &= ok;
        parts.push(format!("{name}: {dense:.5}/{grid:.5}{}", if ok { "" } else { " MISMATCH" }));
    }
    // sparse relaxation of the chain with cliques {0,1}, {1,2}
    let (_, chain, _) = &cases[4];
    let pop = Pop {
        n_vars: 3,
        objectives: vec![
            ElementObjective {
                dofs: vec![0, 1],
                poly: Polynomial::from_terms(chain.terms().filter(|(m, _)| m.exponent_of(VarId(2)) == 0).map(|(m, c)| (m.clone(), c))),
            },
            ElementObjective {
                dofs: vec![1, 2],
                poly: Polynomial::from_terms(chain.terms().filter(|(m, _)| m.exponent_of(VarId(2)) > 0).map(|(m, c)| (m.clone(), c))),
            },
        ],
        ..dense_pop(Polynomial::zero(), 3)
    };
    let cs = CliqueSet {
        cliques: vec![vec![0, 1], vec![1, 2]],
        element_assignment: vec![Some(0), Some(1)],
        rip_ordering: Some(vec![0, 1]),
    };
    let sparse = solve(&assemble_sdp(&pop, &cs, 2).unwrap().0, &s).unwrap().lambda;
    let dense_cs = CliqueSet {
        cliques: vec![vec![0, 1, 2]],
        element_assignment: vec![Some(0), Some(0)],
        rip_ordering: Some(vec![0]),
    };
    let dense = solve(&assemble_sdp(&pop, &dense_cs, 2).unwrap().0, &s).unwrap().lambda;
    pass &= sparse <= dense + 1e-5;
    parts.push(format!("chain sparse {sparse:.5} <= dense {dense:.5}"));
    verdict(pass, parts.join("; "))
}

/// Maximum cardinality search chordality test, independent of the library.
fn mcs_chordal(g: &Graph) -> bool {
    let n = g.n_vertices();
    let mut w = vec![0usize; n];
    let mut done = vec![false; n];
    let mut order = Vec::new();
    for _ in 0..n {
        let v = (0..n).filter(|&v| !done[v]).max_by_key(|&v| (w[v], usize::MAX - v)).unwrap();
        done[v] = true;
        order.push(v);
        for &u in g.neighbors(v) {
            if !done[u] {
                w[u] += 1;
            }
        }
    }
    order.reverse();
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    order.iter().all(|&v| {
        let later: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| pos[u] > pos[v]).collect();
        later.iter().all(|&a| later.iter().all(|&b| a == b || g.has_edge(a, b)))
    })
}

fn rip_machinery() -> Outcome {
    let chain: Vec<Vec<usize>> = (0..8).map(|e| (2 * e..2 * e + 4).collect()).collect();
    let mut periodic = chain.clone();
    periodic.push(vec![16, 17, 0, 1]);
    let chain_ok = check_rip(&chain).is_some_and(|o| rip_holds(&chain, &o));
    let periodic_none = check_rip(&periodic).is_none();
    let e = [(1, 2), (2, 6), (6, 9), (9, 8), (8, 4), (4, 1), (2, 3), (3, 6), (4, 7), (7, 8), (5, 1), (5, 2), (5, 4)];
    let g = Graph::from_edges(9, &e.map(|(a, b): (usize, usize)| (a - 1, b - 1)));
    let (ext, _) = chordal_extend(&g);
    let hex_ok = !mcs_chordal(&g) && mcs_chordal(&ext) && g.edges().iter().all(|&(a, b)| ext.has_edge(a, b));
    verdict(
        chain_ok && periodic_none && hex_ok,
        format!(
            "chain ordering: {chain_ok}; periodic rejected: {periodic_none}; hexagon graph extended with {} fill edges, chordal: {hex_ok}",
            ext.n_edges() - g.n_edges()
        ),
    )
}

fn clique_stats(c: &mut Cache) -> Outcome {
    let o = c.get(Problem::TwoWell, 10, 2);
    let s = o.cliques.stats();
    let pop = &o.pop;
    let chordal = varimin::sparsity::build_cliques(pop, CliqueStrategy::ChordalRip).unwrap().stats();
    verdict(
        s.count == 128 && s.max_size == 3 && s.avg_size == 3.0,
        format!(
            "element cliques {} (max {}, avg {:.1}); chordal-rip {} (max {}, avg {:.1}) vs reference (72, 10, 7.7), not asserted",
            s.count, s.max_size, s.avg_size, chordal.count, chordal.max_size, chordal.avg_size
        ),
    )
}

fn sh_flow(n: usize) -> (FeSpace, FlowProblem) {
    let mut spec = ProblemSpec::from_toml(SH_SPEC).unwrap();
    spec.discretization.n = n;
    let space = spec.space().unwrap();
    let p = FlowProblem::new(&space, &Integrand::parse(SH).unwrap()).unwrap();
    (space, p)
}

struct FlowCache {
    random: HashMap<usize, Vec<FlowResult>>,
}

impl FlowCache {
    fn random(&mut self, n: usize, runs: usize) -> &Vec<FlowResult> {
        self.random.entry(n).or_insert_with(|| {
            let (space, p) = sh_flow(n);
            random_sweep(&p, &space, runs, 2024, &FlowSettings::default()).unwrap()
        })
    }
}

fn gradient_flow(c: &mut Cache, fc: &mut FlowCache) -> Outcome {
    let (space, p) = sh_flow(64);
    let s = FlowSettings::default();
    let seeded = c.get(Problem::ShInverse, 64, 3);
    let seed_peaks = count_peaks(&seeded.space, &seeded.minimizer.dofs, 16);
    let r = run_to_steady(&p, seeded.minimizer.dofs.clone(), &s).unwrap();
    let flow_peaks = count_peaks(&space, &r.dofs, 16);
    let e0 = p.energy(&seeded.minimizer.dofs);
    let seeded_ok = r.converged && is_monotone(&r.energy_history, 1e-10) && seed_peaks == 10 && flow_peaks == 10 && r.energy <= e0;

    // coarsest mesh, β = 4: seed carries 9 peaks
    let coarse = c.get(Problem::ShConst, 16, 3);
    let coarse_peaks = count_peaks(&coarse.space, &coarse.minimizer.dofs, 16);
    let rc = run_to_steady(&p, prolongate(&coarse.space, &coarse.minimizer.dofs, &space).unwrap(), &s).unwrap();
    let rc_peaks = count_peaks(&space, &rc.dofs, 16);
    let coarse_flagged = coarse_peaks == 9;

    let random = fc.random(64, 20);
    let monotone_all = random.iter().all(|r| is_monotone(&r.energy_history, 1e-10)) && is_monotone(&rc.energy_history, 1e-10);
    let distinct = varimin::gradflow::distinct_energies(&random.iter().map(|r| r.energy).collect::<Vec<_>>(), 1e-4);
    verdict(
        seeded_ok && coarse_flagged && monotone_all && distinct.len() >= 2,
        format!(
            "h=1 seed: {seed_peaks} peaks, {e0:.5} -> {:.5}, {flow_peaks} peaks; h=4 seed: {coarse_peaks} peaks (flagged), flows to {:.5} with {rc_peaks}; \
             20 random runs monotone: {monotone_all}, distinct energies {:?}",
            r.energy,
            rc.energy,
            distinct.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn bound_choice(c: &mut Cache, fc: &mut FlowCache) -> Outcome {
    let s = FlowSettings::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [64, 128] {
        let o = c.get(Problem::ShConst, n, 3);
        let (_, p) = sh_flow(n);
        let seeded = run_to_steady(&p, o.minimizer.dofs.clone(), &s).unwrap();
        let runs = if n == 64 { 20 } else { 8 };
        let best = fc
            .random(n, runs)
            .iter()
            .map(|r| r.energy)
            .chain(std::iter::once(seeded.energy))
            .fold(f64::INFINITY, f64::min);
        let e = rel(o.minimizer.energy, best);
        pass &= e <= 0.05;
        parts.push(format!("h={}: extracted {:.5} vs flow best {best:.5} ({:.2}%)", 64.0 / n as f64, o.minimizer.energy, 100.0 * e));
    }
    let coarse = c.get(Problem::ShInverse, 16, 2);
    pass &= coarse.minimizer.gap_flag;
    parts.push(format!(
        "beta=2/h at h=4: lambda {:.4}, energy {:.4}, gap flag {}",
        coarse.solution.lambda, coarse.minimizer.energy, coarse.minimizer.gap_flag
    ));
    verdict(pass, parts.join("; "))
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes us skips the suite
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut cache = Cache::default();
    let mut flows = FlowCache { random: HashMap::new() };
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    let t = Instant::now();
    report(1, "reference lower bounds", reference_bounds(&mut cache));
    report(5, "brute-force oracle", brute_force());
    report(6, "RIP machinery", rip_machinery());
    report(4, "two-well minimizer", two_well(&mut cache));
    report(7, "clique statistics", clique_stats(&mut cache));
    report(8, "gradient-flow baseline", gradient_flow(&mut cache, &mut flows));
    report(9, "bound choice", bound_choice(&mut cache, &mut flows));
    report(2, "monotone hierarchy", monotone(&mut cache));
    report(3, "sandwich", sandwich(&mut cache));
    println!("acceptance: {} failed, {:.0}s", failed, t.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
