//! discretize → sparsify → relax → solve → extract, plus the artifacts the
//! command line tool writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ProblemSpec;
use crate::discretize::{assemble_element_objectives, build_pop, evaluate_energy, FeSpace, Pop};
use crate::error::{Error, Result};
use crate::extract::{extract_minimizer, optimality_report, ApproxMinimizer, Report, Timings};
use crate::gradflow::{count_peaks, distinct_energies, random_sweep, FlowProblem, FlowResult};
use crate::relax::{assemble_sdp, MomentBasis, SdpProblem};
use crate::sdpsolve::{solve, SdpSolution, SolveStatus};
use crate::sparsity::{build_cliques, CliqueSet, CliqueStats, CliqueStrategy};

/// Everything produced by one run, kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: ProblemSpec,
    pub space: FeSpace,
    pub pop: Pop,
    pub cliques: CliqueSet,
    pub sdp: SdpProblem,
    pub basis: MomentBasis,
    pub solution: SdpSolution,
    pub minimizer: ApproxMinimizer,
    pub report: Report,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.solution.status)
    }
}

/// 0 optimal, 2 iteration limit, 1 anything else.
pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::MaxIter => 2,
        SolveStatus::Infeasible => 1,
    }
}

fn timed<T>(acc: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let r = f();
    *acc = t.elapsed().as_secs_f64();
    r
}

/// Builds the discrete POP for a spec.
pub fn discretize(spec: &ProblemSpec) -> Result<(FeSpace, Pop)> {
    let integrand = spec.integrand()?;
    let space = spec.space()?;
    let objs = assemble_element_objectives(&integrand, &space.mesh, &space.dofmap)?;
    let pop = build_pop(
        objs,
        &space.dofmap,
        spec.discretization.constraint,
        spec.discretization.bound,
        &space.mesh,
    )?;
    Ok((space, pop))
}

/// Runs the whole pipeline without touching the filesystem.
pub fn run(spec: &ProblemSpec) -> Result<RunOutcome> {
    let mut t = Timings::default();
    let (space, pop) = timed(&mut t.discretize, || discretize(spec)).map_err(|e| e.at("discretize"))?;
    let cliques =
        timed(&mut t.sparsity, || build_cliques(&pop, spec.relaxation.cliques)).map_err(|e| e.at("sparsity"))?;
    let (sdp, basis) = timed(&mut t.relax, || assemble_sdp(&pop, &cliques, spec.relaxation.omega as u32))
        .map_err(|e| e.at("relax"))?;
    let solution = timed(&mut t.solve, || solve(&sdp, &spec.solver)).map_err(|e| e.at("solve"))?;
    let minimizer = timed(&mut t.extract, || {
        extract_minimizer(&solution, &basis, &pop, spec.relaxation.gap_threshold)
    })
    .map_err(|e| e.at("extract"))?;
    let report = optimality_report(
        &minimizer,
        spec.integrand()?.is_separable_convex(),
        cliques.stats(),
        t,
        &sdp,
        &solution,
    );
    Ok(RunOutcome {
        spec: spec.clone(),
        space,
        pop,
        cliques,
        sdp,
        basis,
        solution,
        minimizer,
        report,
    })
}

/// Fixed key set of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: SolveStatus,
    pub message: String,
    pub lambda: f64,
    pub lower_bound: f64,
    pub energy: f64,
    pub gap: f64,
    pub gap_flag: bool,
    pub separable_convex: bool,
    pub omega: usize,
    pub h: f64,
    pub beta: f64,
    pub n_dofs: usize,
    pub n_moments: usize,
    pub n_blocks: usize,
    pub clique_strategy: CliqueStrategy,
    pub cliques: CliqueStats,
    pub iterations: usize,
    pub timings: Timings,
    pub saturation_displacement: f64,
    pub moment_ranks: Vec<(usize, usize)>,
    /// Effective configuration as a spec file.
    pub spec: String,
}

impl Summary {
    pub fn of(o: &RunOutcome) -> Self {
        Summary {
            status: o.solution.status,
            message: o.solution.message.clone(),
            lambda: o.report.lambda,
            lower_bound: o.solution.lower_bound,
            energy: o.report.energy,
            gap: o.report.gap,
            gap_flag: o.report.gap_flag,
            separable_convex: o.report.separable_convex,
            omega: o.spec.relaxation.omega,
            h: o.space.mesh.h,
            beta: o.pop.bound,
            n_dofs: o.pop.n_vars,
            n_moments: o.sdp.n_moments,
            n_blocks: o.sdp.blocks.len(),
            clique_strategy: o.spec.relaxation.cliques,
            cliques: o.report.cliques,
            iterations: o.solution.iterations,
            timings: o.report.timings,
            saturation_displacement: o.minimizer.saturation_displacement,
            moment_ranks: o.report.moment_ranks.clone(),
            spec: o.spec.to_toml(),
        }
    }
}

/// `dof_index,x[,y],deriv_tag,value`
pub fn dofs_csv(space: &FeSpace, dofs: &[f64]) -> String {
    let two_d = space.mesh.dim == 2;
    let mut s = String::from(if two_d { "dof_index,x,y,deriv_tag,value\n" } else { "dof_index,x,deriv_tag,value\n" });
    for (i, (m, v)) in space.dofmap.dof_meta.iter().zip(dofs).enumerate() {
        let p = space.mesh.vertices[m.vertex];
        if two_d {
            let _ = writeln!(s, "{i},{},{},{},{v:e}", p[0], p[1], m.deriv.label());
        } else {
            let _ = writeln!(s, "{i},{},{},{v:e}", p[0], m.deriv.label());
        }
    }
    s
}

/// Reads the values column back from [`dofs_csv`] output.
pub fn read_dofs_csv(src: &str) -> Result<Vec<f64>> {
    src.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Spec {
                    line: i + 2,
                    message: format!("bad dofs row `{l}`"),
                })
        })
        .collect()
}

/// Line plot of u over a 1D mesh.
pub fn plot_svg(space: &FeSpace, dofs: &[f64]) -> Option<String> {
    if space.mesh.dim != 1 {
        return None;
    }
    let per = 16;
    let ne = space.mesh.n_elements();
    let mut pts = Vec::with_capacity(ne * per + 1);
    for e in 0..ne {
        for k in 0..per {
            let r = k as f64 / per as f64;
            let x = space.mesh.affine_map(e).apply([r, 0.0])[0];
            pts.push((x, space.eval_in_element(dofs, e, [r, 0.0]).u));
        }
    }
    let xe = space.mesh.vertices[ne][0];
    pts.push((xe, space.eval_in_element(dofs, ne - 1, [1.0, 0.0]).u));
    let (x0, x1) = (pts[0].0, xe);
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h, m) = (800.0, 300.0, 40.0);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - lo) / span * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-width="1"/>"#,
        sx(x0),
        sy(0.0),
        sx(x1),
        sy(0.0)
    );
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="navy" stroke-width="1.5" points="{}"/>"#, path.join(" "));
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, t: String| {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{t}</text>"#);
    };
    label(&mut s, sx(x0), h - 10.0, "start", format!("{x0}"));
    label(&mut s, sx(x1), h - 10.0, "end", format!("{x1}"));
    label(&mut s, 4.0, sy(hi) + 4.0, "start", format!("{hi:.3}"));
    label(&mut s, 4.0, sy(lo) + 4.0, "start", format!("{lo:.3}"));
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes `summary.json`, `dofs.csv` and, in 1D with plotting enabled,
/// `plot.svg` into `dir`.
pub fn write_artifacts(o: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.json");
    fs::write(&summary, serde_json::to_string_pretty(&Summary::of(o)).expect("summary serializes"))?;
    written.push(summary);
    let dofs = dir.join("dofs.csv");
    fs::write(&dofs, dofs_csv(&o.space, &o.minimizer.dofs))?;
    written.push(dofs);
    if o.spec.outputs.plot {
        if let Some(svg) = plot_svg(&o.space, &o.minimizer.dofs) {
            let p = dir.join("plot.svg");
            fs::write(&p, svg)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Runs and writes artifacts to the spec's output directory.
pub fn run_pipeline(spec: &ProblemSpec) -> Result<RunOutcome> {
    let o = run(spec)?;
    write_artifacts(&o, &spec.outputs.dir).map_err(|e| e.at("output"))?;
    Ok(o)
}

/// Re-checks gap and sandwich from `summary.json` and `dofs.csv` alone:
/// the energy is recomputed from the echoed spec and the DOF values.
pub fn verify_artifacts(dir: &Path) -> Result<Summary> {
    let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)
        .map_err(|e| Error::InvalidArgument(format!("summary.json: {e}")))?;
    let spec = ProblemSpec::from_toml(&summary.spec)?;
    let dofs = read_dofs_csv(&fs::read_to_string(dir.join("dofs.csv"))?)?;
    let (_, pop) = discretize(&spec)?;
    if dofs.len() != pop.n_vars {
        return Err(Error::InvalidArgument(format!("dofs.csv has {} rows, expected {}", dofs.len(), pop.n_vars)));
    }
    let energy = evaluate_energy(&dofs, &pop);
    let tol = 1e-9 * energy.abs().max(1.0);
    if (energy - summary.energy).abs() > tol {
        return Err(Error::InvalidArgument(format!("energy {} does not match dofs ({energy})", summary.energy)));
    }
    if (summary.gap - (summary.energy - summary.lambda)).abs() > tol {
        return Err(Error::InvalidArgument("gap is not energy - lambda".into()));
    }
    if summary.lambda > energy + 10.0 * spec.solver.eps_abs * energy.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("lower bound {} exceeds energy {energy}", summary.lambda)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub h: f64,
    pub omega: usize,
    pub lambda: Option<f64>,
    pub energy: Option<f64>,
    pub time: Option<f64>,
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub omegas: Vec<usize>,
    pub mesh_ns: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, n: usize, omega: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.omega == omega)
    }

    /// Rows h, one λ and one time column per ω; failed cells read `NA`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,n");
        for w in &self.omegas {
            let _ = write!(s, ",lambda_w{w},time_w{w}");
        }
        s.push('\n');
        for &n in &self.mesh_ns {
            match self.cells.iter().find(|c| c.n == n && c.h.is_finite()) {
                Some(c) => {
                    let _ = write!(s, "{},{n}", c.h);
                }
                None => {
                    let _ = write!(s, "NA,{n}");
                }
            }
            for &w in &self.omegas {
                match self.cell(n, w) {
                    Some(SweepCell {
                        lambda: Some(l),
                        time: Some(t),
                        ..
                    }) => {
                        let _ = write!(s, ",{l:.6},{t:.3}");
                    }
                    _ => s.push_str(",NA,NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

fn sweep_cell(spec: &ProblemSpec, n: usize, omega: usize) -> SweepCell {
    let mut s = spec.clone();
    s.discretization.n = n;
    s.relaxation.omega = omega;
    let h = s.mesh().map_or(f64::NAN, |m| m.h);
    let t = Instant::now();
    match run(&s) {
        Ok(o) => SweepCell {
            n,
            h,
            omega,
            lambda: Some(o.solution.lambda),
            energy: Some(o.minimizer.energy),
            time: Some(t.elapsed().as_secs_f64()),
            status: Some(o.solution.status),
            error: None,
        },
        Err(e) => SweepCell {
            n,
            h,
            omega,
            lambda: None,
            energy: None,
            time: None,
            status: None,
            error: Some(e.to_string()),
        },
    }
}

/// Solves every (n, ω) cell; failures become `NA` cells. With
/// `parallel > 1` cells run concurrently on that many threads.
pub fn sweep(spec: &ProblemSpec, omegas: &[usize], mesh_ns: &[usize], parallel: usize) -> Result<SweepTable> {
    if omegas.is_empty() || mesh_ns.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one omega and one mesh size".into()));
    }
    let jobs: Vec<(usize, usize)> = mesh_ns.iter().flat_map(|&n| omegas.iter().map(move |&w| (n, w))).collect();
    let cells = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|&(n, w)| sweep_cell(spec, n, w)).collect())
    } else {
        jobs.iter().map(|&(n, w)| sweep_cell(spec, n, w)).collect()
    };
    Ok(SweepTable {
        omegas: omegas.to_vec(),
        mesh_ns: mesh_ns.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueReport {
    pub strategy: CliqueStrategy,
    pub stats: CliqueStats,
    pub rip: bool,
}

impl std::fmt::Display for CliqueReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.strategy {
            CliqueStrategy::Element => "element",
            CliqueStrategy::ChordalRip => "chordal-rip",
        };
        write!(
            f,
            "{name}: count={} max={} avg={:.2} rip={}",
            self.stats.count,
            self.stats.max_size,
            self.stats.avg_size,
            if self.rip { "yes" } else { "no" }
        )
    }
}

/// Clique statistics under both strategies, configured strategy first.
pub fn clique_reports(spec: &ProblemSpec) -> Result<Vec<CliqueReport>> {
    let (_, pop) = discretize(spec).map_err(|e| e.at("discretize"))?;
    let mut strategies = vec![spec.relaxation.cliques];
    strategies.extend([CliqueStrategy::Element, CliqueStrategy::ChordalRip].into_iter().filter(|s| *s != spec.relaxation.cliques));
    strategies
        .into_iter()
        .map(|strategy| {
            let cs = build_cliques(&pop, strategy).map_err(|e| e.at("sparsity"))?;
            Ok(CliqueReport {
                strategy,
                stats: cs.stats(),
                rip: cs.rip_ordering.is_some(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradflowRun {
    pub run: usize,
    pub seed: u64,
    pub energy: f64,
    pub converged: bool,
    pub steps: usize,
    pub residual: f64,
    /// Only meaningful in 1D.
    pub peaks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradflowSummary {
    pub seed: u64,
    pub runs: Vec<GradflowRun>,
    /// Sorted, merged at 1e-4 relative.
    pub distinct_energies: Vec<f64>,
    pub best_energy: f64,
}

/// Random-start gradient flow sweep on the spec's FE space.
pub fn gradflow(spec: &ProblemSpec, runs: usize, seed: u64) -> Result<(GradflowSummary, FeSpace, Vec<FlowResult>)> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be positive".into()));
    }
    let space = spec.space()?;
    let problem = FlowProblem::new(&space, &spec.integrand()?).map_err(|e| e.at("discretize"))?;
    let results = random_sweep(&problem, &space, runs, seed, &spec.flow).map_err(|e| e.at("gradflow"))?;
    let runs: Vec<GradflowRun> = results
        .iter()
        .enumerate()
        .map(|(i, r)| GradflowRun {
            run: i,
            seed: seed.wrapping_add(i as u64),
            energy: r.energy,
            converged: r.converged,
            steps: r.steps,
            residual: r.residual,
            peaks: if space.mesh.dim == 1 { count_peaks(&space, &r.dofs, 16) } else { 0 },
        })
        .collect();
    let energies: Vec<f64> = runs.iter().map(|r| r.energy).collect();
    let distinct = distinct_energies(&energies, 1e-4);
    let summary = GradflowSummary {
        seed,
        best_energy: distinct.first().copied().unwrap_or(f64::NAN),
        distinct_energies: distinct,
        runs,
    };
    Ok((summary, space, results))
}

/// `gradflow_summary.json`, `runs.csv` and one DOF file per run under `flow/`.
pub fn write_gradflow(dir: &Path, summary: &GradflowSummary, space: &FeSpace, results: &[FlowResult]) -> Result<()> {
    let flow_dir = dir.join("flow");
    fs::create_dir_all(&flow_dir)?;
    fs::write(
        dir.join("gradflow_summary.json"),
        serde_json::to_string_pretty(summary).expect("summary serializes"),
    )?;
    let mut csv = String::from("run,seed,energy,converged,steps,residual,peaks\n");
    for r in &summary.runs {
        let _ = writeln!(csv, "{},{},{:e},{},{},{:e},{}", r.run, r.seed, r.energy, r.converged, r.steps, r.residual, r.peaks);
    }
    fs::write(dir.join("runs.csv"), csv)?;
    for (i, r) in results.iter().enumerate() {
        fs::write(flow_dir.join(format!("run_{i:03}.csv")), dofs_csv(space, &r.dofs))?;
    }
    Ok(())
}
