//! Solver for the block-diagonal SDPs produced by [`crate::relax`].

mod ipm;
pub mod linalg;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::SdpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Multiple of the identity used as starting point for both sides.
    pub ipm_initial: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 200,
            step_fraction: 0.95,
            ipm_initial: 1.0,
            verbose: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_abs > 0.0
            && self.eps_rel > 0.0
            && self.max_iter > 0
            && self.step_fraction > 0.0
            && self.step_fraction < 1.0
            && self.ipm_initial > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad solver settings {self:?}")))
        }
    }
}

/// Solver-independent feasibility and objective measures of a moment vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// |y[unit] − 1|.
    pub affine_violation: f64,
    /// Smallest eigenvalue over all blocks.
    pub min_block_eig: f64,
    /// Smallest of λ_min(B) / (1 + ‖B‖_F) over all blocks.
    pub min_block_eig_rel: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Objective ℓ_y(Φ) at the returned moments.
    pub lambda: f64,
    /// Objective certified by the multiplier side.
    pub lower_bound: f64,
    pub y: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub wall_time: f64,
    pub message: String,
}

pub fn solve(p: &SdpProblem, s: &SolverSettings) -> Result<SdpSolution> {
    p.validate()?;
    s.validate()?;
    if p.n_moments == 1 {
        // only the unit moment: nothing to optimize
        let y = vec![1.0];
        return Ok(SdpSolution {
            status: SolveStatus::Optimal,
            lambda: p.objective_value(&y),
            lower_bound: p.objective_value(&y),
            residuals: residuals(p, &y),
            y,
            iterations: 0,
            wall_time: 0.0,
            message: String::new(),
        });
    }
    let sol = ipm::solve(p, s);
    if !sol.lambda.is_finite() {
        return Err(Error::NonFinite("SDP objective".into()));
    }
    Ok(sol)
}

/// Recomputes feasibility and objective of `y` from the problem data alone.
pub fn residuals(p: &SdpProblem, y: &[f64]) -> Residuals {
    assert_eq!(y.len(), p.n_moments, "moment vector length");
    let mut min_eig = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    for b in &p.blocks {
        let m = b.evaluate(y);
        let norm = m.norm();
        let l = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        min_eig = min_eig.min(l);
        min_rel = min_rel.min(l / (1.0 + norm));
    }
    Residuals {
        affine_violation: (y[p.unit_index] - 1.0).abs(),
        min_block_eig: min_eig,
        min_block_eig_rel: min_rel,
        objective: p.objective_value(y),
    }
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to project".into()));
    }
    if !m.is_square() {
        return Err(Error::InvalidArgument("matrix not square".into()));
    }
    let s = (m + m.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())
}
