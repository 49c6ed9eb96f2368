//! Approximate minimizers from first moments, and the bound/gap report.

use serde::{Deserialize, Serialize};

use crate::discretize::{evaluate_energy, saturated_interpolate, FeSpace, PointValue, Pop};
use crate::error::{Error, Result};
use crate::relax::{moment_ranks, MomentBasis, SdpProblem};
use crate::sdpsolve::{SdpSolution, SolveStatus};
use crate::sparsity::CliqueStats;

/// Default under-convergence threshold: gap > 5% of max(1, |λ|).
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxMinimizer {
    /// Saturated DOFs in original units.
    pub dofs: Vec<f64>,
    /// First moments times the variable scale, before saturation.
    pub raw_dofs: Vec<f64>,
    /// Φ at `dofs`.
    pub energy: f64,
    pub lambda: f64,
    pub gap: f64,
    /// Set when the gap exceeds the threshold.
    pub gap_flag: bool,
    /// Largest change made by saturation.
    pub saturation_displacement: f64,
}

/// Reads ξⱼ = scale · y[eⱼ], saturates into the feasible set and evaluates Φ.
pub fn extract_minimizer(
    sol: &SdpSolution,
    basis: &MomentBasis,
    pop: &Pop,
    gap_threshold: f64,
) -> Result<ApproxMinimizer> {
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible);
    }
    let raw_dofs: Vec<f64> = basis
        .first_moment_index
        .iter()
        .map(|i| i.map_or(0.0, |i| sol.y[i] * pop.scale))
        .collect();
    let dofs = saturated_interpolate(&raw_dofs, pop);
    let saturation_displacement = raw_dofs
        .iter()
        .zip(&dofs)
        .fold(0.0f64, |a, (r, d)| a.max((r - d).abs()));
    let energy = evaluate_energy(&dofs, pop);
    let gap = energy - sol.lambda;
    Ok(ApproxMinimizer {
        gap_flag: gap > gap_threshold * sol.lambda.abs().max(1.0),
        dofs,
        raw_dofs,
        energy,
        lambda: sol.lambda,
        gap,
        saturation_displacement,
    })
}

/// Evaluates the reconstructed function (and derivatives) at `points`.
pub fn sample_function(space: &FeSpace, m: &ApproxMinimizer, points: &[Vec<f64>]) -> Result<Vec<PointValue>> {
    if m.dofs.len() != space.dofmap.n_dofs {
        return Err(Error::InvalidArgument("DOF vector does not match the FE space".into()));
    }
    points.iter().map(|p| space.eval(&m.dofs, p)).collect()
}

/// Wall time of each pipeline stage in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub discretize: f64,
    pub sparsity: f64,
    pub relax: f64,
    pub solve: f64,
    pub extract: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Lower bound on the discrete minimum.
    pub lambda: f64,
    /// Φ at the extracted point: an upper bound on the discrete minimum.
    pub energy: f64,
    pub gap: f64,
    pub gap_flag: bool,
    pub separable_convex: bool,
    pub cliques: CliqueStats,
    pub timings: Timings,
    /// Numerical rank and size of each moment matrix.
    pub moment_ranks: Vec<(usize, usize)>,
}

pub fn optimality_report(
    m: &ApproxMinimizer,
    separable_convex: bool,
    cliques: CliqueStats,
    timings: Timings,
    problem: &SdpProblem,
    sol: &SdpSolution,
) -> Report {
    Report {
        lambda: m.lambda,
        energy: m.energy,
        gap: m.gap,
        gap_flag: m.gap_flag,
        separable_convex,
        cliques,
        timings,
        moment_ranks: moment_ranks(problem, &sol.y, 1e-6),
    }
}
