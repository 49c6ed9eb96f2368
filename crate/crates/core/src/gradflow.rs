//! L² gradient flow `M ξ' = −∇Φ(ξ)` on the same finite element space as the
//! relaxation, stepped semi-implicitly: the quadratic part of Φ is implicit,
//! higher-degree terms explicit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_element_objectives, DerivTag, ElementObjective, FeSpace, Integrand, PointValue};
use crate::error::{Error, Result};
use crate::poly::{Polynomial, VarId};

/// Φ split as ½ξᵀAξ + bᵀξ + c + Φ_hi(ξ), together with the mass matrix.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub n: usize,
    pub mass: DMatrix<f64>,
    /// Hessian of the quadratic part.
    pub quad: DMatrix<f64>,
    /// Gradient of the linear part.
    pub lin: DVector<f64>,
    /// ∂Φ_hi/∂ξⱼ for every DOF.
    hi_grad: Vec<Polynomial>,
    /// ∂²Φ_hi/∂ξᵢ∂ξⱼ for i ≤ j sharing an element.
    hi_hess: Vec<(usize, usize, Polynomial)>,
    objectives: Vec<ElementObjective>,
}

fn quadratic_form(objs: &[ElementObjective], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for o in objs {
        for (m, c) in o.poly.terms() {
            match m.pairs() {
                [(v, 1)] if m.degree() == 1 => b[v.index()] += c,
                [(v, 2)] => a[(v.index(), v.index())] += 2.0 * c,
                [(v, 1), (w, 1)] => {
                    a[(v.index(), w.index())] += c;
                    a[(w.index(), v.index())] += c;
                }
                _ => {}
            }
        }
    }
    (a, b)
}

impl FlowProblem {
    pub fn new(space: &FeSpace, integrand: &Integrand) -> Result<Self> {
        let n = space.dofmap.n_dofs;
        let objectives = assemble_element_objectives(integrand, &space.mesh, &space.dofmap)?;
        let mass_objs = assemble_element_objectives(&Integrand::parse("u^2")?, &space.mesh, &space.dofmap)?;
        let (mass, _) = quadratic_form(&mass_objs, n);
        // ∫u² = ξᵀMξ, so its Hessian is 2M
        let mass = mass * 0.5;
        let (quad, lin) = quadratic_form(&objectives, n);
        let mut hi_grad = vec![Polynomial::zero(); n];
        let mut hess: std::collections::BTreeMap<(usize, usize), Polynomial> = Default::default();
        for o in &objectives {
            let hi = Polynomial::from_terms(o.poly.terms().filter(|(m, _)| m.degree() >= 3).map(|(m, c)| (m.clone(), c)));
            if hi.is_zero() {
                continue;
            }
            for &j in &o.dofs {
                let gj = hi.derivative(VarId(j as u32));
                for &i in o.dofs.iter().filter(|&&i| i <= j) {
                    *hess.entry((i, j)).or_default() += &gj.derivative(VarId(i as u32));
                }
                hi_grad[j] += &gj;
            }
        }
        let hi_hess = hess.into_iter().filter(|(_, p)| !p.is_zero()).map(|((i, j), p)| (i, j, p)).collect();
        Ok(FlowProblem {
            n,
            mass,
            quad,
            lin,
            hi_grad,
            hi_hess,
            objectives,
        })
    }

    pub fn energy(&self, xi: &[f64]) -> f64 {
        self.objectives
            .iter()
            .map(|o| o.poly.evaluate_dense(xi).expect("dense DOF vector"))
            .sum()
    }

    fn hi_gradient(&self, xi: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n, self.hi_grad.iter().map(|g| g.evaluate_dense(xi).expect("dense DOF vector")))
    }

    /// ∇Φ(ξ).
    pub fn gradient(&self, xi: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(xi);
        &self.quad * &x + &self.lin + self.hi_gradient(xi)
    }

    /// ∇²Φ(ξ).
    pub fn hessian(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut h = self.quad.clone();
        for (i, j, p) in &self.hi_hess {
            let v = p.evaluate_dense(xi).expect("dense DOF vector");
            h[(*i, *j)] += v;
            if i != j {
                h[(*j, *i)] += v;
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSettings {
    pub dt: f64,
    pub dt_max: f64,
    pub max_steps: usize,
    /// Stop when ‖∇Φ‖∞ falls below this.
    pub tol: f64,
    /// Below this residual, Newton steps on ∇Φ = 0 are tried and kept only
    /// when they lower both the energy and the residual. 0 disables them.
    pub newton_below: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            dt: 1e-2,
            dt_max: 10.0,
            max_steps: 20_000,
            tol: 1e-8,
            newton_below: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub dofs: Vec<f64>,
    pub time: f64,
    pub dt: f64,
    pub energy_history: Vec<f64>,
}

impl FlowState {
    pub fn new(problem: &FlowProblem, dofs: Vec<f64>, dt: f64) -> Self {
        let e = problem.energy(&dofs);
        FlowState {
            dofs,
            time: 0.0,
            dt,
            energy_history: vec![e],
        }
    }
}

/// LU factors of `M + dt·A` for the current step size.
struct Stepper {
    dt: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Stepper {
    fn new(p: &FlowProblem, dt: f64) -> Self {
        Stepper {
            dt,
            lu: (&p.mass + &p.quad * dt).lu(),
        }
    }

    fn step(&self, p: &FlowProblem, xi: &[f64]) -> Result<Vec<f64>> {
        let x = DVector::from_column_slice(xi);
        let rhs = &p.mass * &x - (&p.lin + p.hi_gradient(xi)) * self.dt;
        let next = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::NonFinite("singular implicit operator".into()))?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient flow state".into()));
        }
        Ok(next.as_slice().to_vec())
    }
}

/// One semi-implicit step `(M + dt A) ξ⁺ = M ξ − dt (b + ∇Φ_hi(ξ))`.
pub fn flow_step(problem: &FlowProblem, state: &FlowState) -> Result<FlowState> {
    if !(state.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let next = Stepper::new(problem, state.dt).step(problem, &state.dofs)?;
    let mut hist = state.energy_history.clone();
    hist.push(problem.energy(&next));
    Ok(FlowState {
        dofs: next,
        time: state.time + state.dt,
        dt: state.dt,
        energy_history: hist,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub dofs: Vec<f64>,
    pub energy: f64,
    pub converged: bool,
    pub steps: usize,
    pub time: f64,
    /// Step size at the end of the run.
    pub dt: f64,
    /// ‖∇Φ‖∞ at the final state.
    pub residual: f64,
    pub energy_history: Vec<f64>,
}

/// Integrates until ‖∇Φ‖∞ ≤ tol. Steps that would raise the energy are
/// rejected and retried with half the step; after a run of accepted steps
/// the step doubles, up to `dt_max`. Close to a steady state, guarded
/// Newton steps finish slow tails along nearly flat directions.
pub fn run_to_steady(problem: &FlowProblem, u0: Vec<f64>, s: &FlowSettings) -> Result<FlowResult> {
    if !(s.tol > 0.0 && s.dt > 0.0) {
        return Err(Error::InvalidArgument("tol and dt must be positive".into()));
    }
    let mut state = FlowState::new(problem, u0, s.dt);
    let mut stepper = Stepper::new(problem, s.dt);
    let mut accepted_run = 0;
    let mut steps = 0;
    let mut residual = problem.gradient(&state.dofs).amax();
    let mut newton_pause = 0usize;
    while residual > s.tol && steps < s.max_steps {
        steps += 1;
        if residual < s.newton_below && newton_pause == 0 {
            match newton_step(problem, &state.dofs, residual) {
                Some((x, e, r)) => {
                    state.dofs = x;
                    state.energy_history.push(e);
                    residual = r;
                    continue;
                }
                None => newton_pause = 50,
            }
        }
        newton_pause = newton_pause.saturating_sub(1);
        let next = stepper.step(problem, &state.dofs)?;
        let e_next = problem.energy(&next);
        let e_cur = *state.energy_history.last().expect("history");
        if e_next > e_cur + 1e-12 * e_cur.abs().max(1e-300) {
            if stepper.dt < 1e-14 {
                break;
            }
            stepper = Stepper::new(problem, stepper.dt * 0.5);
            accepted_run = 0;
            continue;
        }
        state.time += stepper.dt;
        state.dofs = next;
        state.energy_history.push(e_next);
        residual = problem.gradient(&state.dofs).amax();
        accepted_run += 1;
        if accepted_run >= 10 && stepper.dt < s.dt_max {
            stepper = Stepper::new(problem, (stepper.dt * 2.0).min(s.dt_max));
            accepted_run = 0;
        }
    }
    Ok(FlowResult {
        dt: stepper.dt,
        energy: *state.energy_history.last().expect("history"),
        converged: residual <= s.tol,
        steps,
        time: state.time,
        residual,
        dofs: state.dofs,
        energy_history: state.energy_history,
    })
}

fn newton_step(p: &FlowProblem, xi: &[f64], residual: f64) -> Option<(Vec<f64>, f64, f64)> {
    let g = p.gradient(xi);
    let delta = p.hessian(xi).lu().solve(&(-g))?;
    let x: Vec<f64> = xi.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
    let e0 = p.energy(xi);
    let e = p.energy(&x);
    let r = p.gradient(&x).amax();
    (e.is_finite() && e <= e0 + 1e-12 * e0.abs() && r < residual).then_some((x, e, r))
}

/// Random nodal values uniform in [−2, 3]; Hermite slopes are central
/// differences of the neighbouring values.
pub fn random_initial(space: &FeSpace, rng: &mut impl Rng) -> Vec<f64> {
    let nv = space.mesh.vertices.len();
    let values: Vec<f64> = (0..nv)
        .map(|v| if space.mesh.is_boundary(v) { 0.0 } else { rng.gen_range(-2.0..3.0) })
        .collect();
    space
        .dofmap
        .dof_meta
        .iter()
        .map(|m| match m.deriv {
            DerivTag::Value => values[m.vertex],
            DerivTag::Slope => {
                let (l, r) = (m.vertex - 1, m.vertex + 1);
                (values[r] - values[l]) / (space.mesh.vertices[r][0] - space.mesh.vertices[l][0])
            }
        })
        .collect()
}

/// Flows from `runs` seeded random initial conditions, in parallel; run `i`
/// uses seed `seed + i`.
pub fn random_sweep(
    problem: &FlowProblem,
    space: &FeSpace,
    runs: usize,
    seed: u64,
    s: &FlowSettings,
) -> Result<Vec<FlowResult>> {
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            run_to_steady(problem, random_initial(space, &mut rng), s)
        })
        .collect()
}

/// Sorted energies, merging values within `rel_tol` relative distance.
pub fn distinct_energies(energies: &[f64], rel_tol: f64) -> Vec<f64> {
    let mut e: Vec<f64> = energies.iter().copied().filter(|v| v.is_finite()).collect();
    e.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in e {
        match out.last() {
            Some(&l) if (v - l).abs() <= rel_tol * l.abs().max(v.abs()).max(1e-12) => {}
            _ => out.push(v),
        }
    }
    out
}

/// True when the history never rises by more than `slack · |E|`.
pub fn is_monotone(history: &[f64], slack: f64) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs().max(1.0))
}

/// Local maxima of u in 1D above half the global maximum, sampled at
/// `per_element` points per element.
pub fn count_peaks(space: &FeSpace, dofs: &[f64], per_element: usize) -> usize {
    let ne = space.mesh.n_elements();
    let u: Vec<f64> = (0..ne)
        .flat_map(|e| (0..per_element).map(move |k| (e, k as f64 / per_element as f64)))
        .map(|(e, r)| space.eval_in_element(dofs, e, [r, 0.0]).u)
        .chain(std::iter::once(0.0))
        .collect();
    let top = u.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    (1..u.len() - 1)
        .filter(|&i| u[i] > u[i - 1] && u[i] >= u[i + 1] && u[i] > 0.5 * top)
        .count()
}

/// Interpolates an FE function onto another space; exact when the target
/// mesh refines the source mesh.
pub fn prolongate(from: &FeSpace, dofs: &[f64], to: &FeSpace) -> Result<Vec<f64>> {
    let vals: Vec<PointValue> = to
        .mesh
        .vertices
        .iter()
        .map(|p| from.eval(dofs, &p[..from.mesh.dim]))
        .collect::<Result<_>>()?;
    Ok(to
        .dofmap
        .dof_meta
        .iter()
        .map(|m| match m.deriv {
            DerivTag::Value => vals[m.vertex].u,
            DerivTag::Slope => vals[m.vertex].ux,
        })
        .collect())
}
