use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varimin::config::{parse_spec, ProblemSpec};
use varimin::pipeline::{clique_reports, gradflow, run_pipeline, sweep, write_gradflow};

#[derive(Parser)]
#[command(name = "varimin", version, about = "Global minimization of polynomial integral functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one relaxation and write summary.json, dofs.csv and plot.svg.
    Solve {
        spec: PathBuf,
        #[arg(long)]
        omega: Option<usize>,
        #[arg(long)]
        mesh_n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print solver iterations.
        #[arg(long)]
        verbose: bool,
    },
    /// Tabulate λ over relaxation orders and mesh sizes into sweep.csv.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        omegas: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        mesh_ns: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cells solved concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Gradient flows from random initial data.
    Gradflow {
        spec: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clique statistics and running intersection check.
    CheckRip { spec: PathBuf },
}

fn load(path: &PathBuf) -> Result<ProblemSpec, String> {
    parse_spec(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn real_main(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Solve {
            spec,
            omega,
            mesh_n,
            out,
            verbose,
        } => {
            let mut s = load(&spec)?;
            if let Some(w) = omega {
                s.relaxation.omega = w;
            }
            if let Some(n) = mesh_n {
                s.discretization.n = n;
            }
            if let Some(d) = out {
                s.outputs.dir = d;
            }
            s.solver.verbose |= verbose;
            // overrides must still form a valid spec
            let s = ProblemSpec::from_toml(&s.to_toml()).map_err(|e| e.to_string())?;
            let o = run_pipeline(&s).map_err(|e| e.to_string())?;
            let r = &o.report;
            println!("status      {:?}", o.solution.status);
            println!("lambda      {:.8}", r.lambda);
            println!("energy      {:.8}", r.energy);
            println!("gap         {:.3e}{}", r.gap, if r.gap_flag { "  (flagged)" } else { "" });
            println!(
                "cliques     count={} max={} avg={:.2}",
                r.cliques.count, r.cliques.max_size, r.cliques.avg_size
            );
            println!("iterations  {}", o.solution.iterations);
            println!("output      {}", s.outputs.dir.display());
            if o.exit_code() == 2 {
                eprintln!("warning: solver hit the iteration limit; {}", o.solution.message);
            }
            Ok(o.exit_code() as u8)
        }
        Command::Sweep {
            spec,
            omegas,
            mesh_ns,
            out,
            parallel,
        } => {
            let s = load(&spec)?;
            let table = sweep(&s, &omegas, &mesh_ns, parallel).map_err(|e| e.to_string())?;
            let dir = out.unwrap_or_else(|| s.outputs.dir.clone());
            fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let csv = table.to_csv();
            fs::write(dir.join("sweep.csv"), &csv).map_err(|e| e.to_string())?;
            print!("{csv}");
            for c in table.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("cell n={} omega={}: {}", c.n, c.omega, c.error.as_deref().unwrap_or(""));
            }
            Ok(0)
        }
        Command::Gradflow { spec, runs, seed, out } => {
            let s = load(&spec)?;
            let (summary, space, results) = gradflow(&s, runs, seed).map_err(|e| e.to_string())?;
            let dir = out.unwrap_or_else(|| s.outputs.dir.clone());
            write_gradflow(&dir, &summary, &space, &results).map_err(|e| e.to_string())?;
            println!("seed {seed}, {runs} runs, {} converged", summary.runs.iter().filter(|r| r.converged).count());
            println!("distinct steady energies:");
            for e in &summary.distinct_energies {
                let hits = summary.runs.iter().filter(|r| (r.energy - e).abs() <= 1e-4 * e.abs().max(1e-12)).count();
                println!("  {e:.6}  ({hits} runs)");
            }
            Ok(0)
        }
        Command::CheckRip { spec } => {
            let s = load(&spec)?;
            for r in clique_reports(&s).map_err(|e| e.to_string())? {
                println!("{r}");
            }
            Ok(0)
        }
    }
}
