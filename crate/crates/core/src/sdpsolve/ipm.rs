//! Primal–dual interior-point method for
//!
//! ```text
//! min cᵀz  s.t.  S = F₀ + Σ zᵢ Fᵢ ⪰ 0          (moment side)
//! max −⟨F₀, X⟩  s.t.  ⟨Fᵢ, X⟩ = cᵢ, X ⪰ 0     (multiplier side)
//! ```
//!
//! with infeasible start, the HKM direction and Mehrotra predictor–corrector.
//! `z` are the moments other than the unit moment, whose coefficients form F₀.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::linalg::{envelope_first, profile_size, rcm_ordering, Envelope};
use super::{SdpSolution, SolveStatus, SolverSettings};
use crate::relax::SdpProblem;

struct BlockData {
    n: usize,
    f0: DMatrix<f64>,
    /// Schur index of each local variable.
    vars: Vec<usize>,
    /// Full (both triangles) entries `(row, col, coef)` of each local variable.
    ent: Vec<Vec<(u32, u32, f64)>>,
}

struct Prepared {
    blocks: Vec<BlockData>,
    c: Vec<f64>,
    c_scale: f64,
    c_const: f64,
    /// Schur index of each moment (`None` for the unit moment).
    schur_of: Vec<Option<usize>>,
    first: Vec<usize>,
    ntot: usize,
}

fn prepare(p: &SdpProblem) -> Prepared {
    let m = p.n_moments - 1;
    let natural = |i: usize| if i < p.unit_index { i } else { i - 1 };
    let groups: Vec<Vec<usize>> = p
        .blocks
        .iter()
        .map(|b| {
            let mut g: Vec<usize> = b
                .entries
                .iter()
                .filter(|e| e.moment as usize != p.unit_index)
                .map(|e| natural(e.moment as usize))
                .collect();
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect();
    let identity: Vec<usize> = (0..m).collect();
    let rcm = rcm_ordering(&groups, m);
    let first_nat = envelope_first(&groups, m, &identity);
    let first_rcm = envelope_first(&groups, m, &rcm);
    let (perm, first) = if profile_size(&first_rcm) < profile_size(&first_nat) {
        (rcm, first_rcm)
    } else {
        (identity, first_nat)
    };
    let schur_of: Vec<Option<usize>> = (0..p.n_moments)
        .map(|i| (i != p.unit_index).then(|| perm[natural(i)]))
        .collect();

    let blocks = p
        .blocks
        .iter()
        .map(|b| {
            let mut f0 = DMatrix::zeros(b.size, b.size);
            let mut local: HashMap<usize, usize> = HashMap::new();
            let mut vars = Vec::new();
            let mut ent: Vec<Vec<(u32, u32, f64)>> = Vec::new();
            for e in &b.entries {
                let (r, c) = (e.row as usize, e.col as usize);
                match schur_of[e.moment as usize] {
                    None => {
                        f0[(r, c)] += e.coef;
                        if r != c {
                            f0[(c, r)] += e.coef;
                        }
                    }
                    Some(s) => {
                        let k = *local.entry(s).or_insert_with(|| {
                            vars.push(s);
                            ent.push(Vec::new());
                            vars.len() - 1
                        });
                        ent[k].push((e.row, e.col, e.coef));
                        if r != c {
                            ent[k].push((e.col, e.row, e.coef));
                        }
                    }
                }
            }
            BlockData { n: b.size, f0, vars, ent }
        })
        .collect();

    let mut c = vec![0.0; m];
    let mut c_const = 0.0;
    for &(i, v) in &p.objective {
        match schur_of[i] {
            None => c_const += v,
            Some(s) => c[s] += v,
        }
    }
    let c_scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    c.iter_mut().for_each(|v| *v /= c_scale);
    Prepared {
        blocks,
        c,
        c_scale,
        c_const,
        schur_of,
        first,
        ntot: p.blocks.iter().map(|b| b.size).sum(),
    }
}

type Mats = Vec<DMatrix<f64>>;

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl Prepared {
    /// Σ zᵢ Fᵢ (+ F₀ when `with_f0`).
    fn op(&self, z: &[f64], with_f0: bool) -> Mats {
        self.blocks
            .par_iter()
            .map(|b| {
                let mut m = if with_f0 { b.f0.clone() } else { DMatrix::zeros(b.n, b.n) };
                for (k, &v) in b.vars.iter().enumerate() {
                    let zv = z[v];
                    if zv != 0.0 {
                        for &(r, c, f) in &b.ent[k] {
                            m[(r as usize, c as usize)] += f * zv;
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// (⟨Fᵢ, M⟩)ᵢ
    fn adjoint(&self, mats: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.c.len()];
        for (b, m) in self.blocks.iter().zip(mats) {
            for (k, &v) in b.vars.iter().enumerate() {
                out[v] += b.ent[k].iter().map(|&(r, c, f)| f * m[(r as usize, c as usize)]).sum::<f64>();
            }
        }
        out
    }

    /// Schur matrix Bᵢⱼ = Σ_blocks tr(Fᵢ X Fⱼ Z).
    fn schur(&self, x: &[DMatrix<f64>], z: &[DMatrix<f64>], env: &mut Envelope) {
        env.clear();
        for ((b, xb), zb) in self.blocks.iter().zip(x).zip(z) {
            let n = b.n;
            let xs = xb.as_slice();
            let zs = zb.as_slice();
            for a in 0..b.vars.len() {
                let ea = &b.ent[a];
                for c in a..b.vars.len() {
                    let ec = &b.ent[c];
                    let mut s = 0.0;
                    for &(p, q, f) in ea {
                        let (p, q) = (p as usize, q as usize);
                        let mut inner = 0.0;
                        for &(r, t, g) in ec {
                            // X[q, r] · Z[t, p], column-major
                            inner += g * xs[q + r as usize * n] * zs[t as usize + p * n];
                        }
                        s += f * inner;
                    }
                    env.add(b.vars[a], b.vars[c], s);
                }
            }
        }
    }
}

/// Largest α with `M + α D ⪰ 0` (∞ when D ⪰ 0), for `M ≻ 0`.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let a = l.solve_lower_triangular(d)?;
    let t = l.solve_lower_triangular(&a.transpose())?;
    let lmin = sym(t).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn step_length(ms: &[DMatrix<f64>], ds: &[DMatrix<f64>]) -> Option<f64> {
    let steps: Vec<Option<f64>> = ms.par_iter().zip(ds).map(|(m, d)| max_step(m, d)).collect();
    steps.into_iter().try_fold(f64::INFINITY, |acc, s| s.map(|s| acc.min(s)))
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    /// Gap in original objective units.
    gap_abs: f64,
    pinf: f64,
    dinf: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        self.gap.min(self.gap_abs).max(self.pinf).max(self.dinf)
    }
}

pub(super) fn solve(p: &SdpProblem, s: &SolverSettings) -> SdpSolution {
    let t0 = Instant::now();
    let pr = prepare(p);
    let m = pr.c.len();
    let mut env = Envelope::new(pr.first.clone());
    let init = s.ipm_initial;
    let mut x: Mats = pr.blocks.iter().map(|b| DMatrix::identity(b.n, b.n) * init).collect();
    let mut sm: Mats = x.clone();
    let mut z = vec![0.0; m];
    let c_norm = pr.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let f0_norm = pr.blocks.iter().fold(0.0f64, |a, b| a.max(b.f0.amax()));

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut message = String::new();
    let mut iterations = 0;

    let finish = |z: &[f64], lower: f64, status: SolveStatus, message: String, iterations: usize| {
        let mut y = vec![0.0; p.n_moments];
        for (i, s) in pr.schur_of.iter().enumerate() {
            y[i] = match s {
                None => 1.0,
                Some(k) => z[*k],
            };
        }
        let lambda = p.objective_value(&y);
        SdpSolution {
            status,
            lambda,
            lower_bound: lower * pr.c_scale + pr.c_const,
            residuals: super::residuals(p, &y),
            y,
            iterations,
            wall_time: t0.elapsed().as_secs_f64(),
            message,
        }
    };

    for it in 0..s.max_iter {
        iterations = it;
        let fz = pr.op(&z, true);
        let rd: Mats = fz.iter().zip(&sm).map(|(f, s)| f - s).collect();
        let ax = pr.adjoint(&x);
        let rp: Vec<f64> = pr.c.iter().zip(&ax).map(|(c, a)| c - a).collect();
        let pobj: f64 = pr.c.iter().zip(&z).map(|(c, v)| c * v).sum();
        let dobj: f64 = -pr.blocks.iter().zip(&x).map(|(b, xb)| dot(&b.f0, xb)).sum::<f64>();
        let metrics = Metrics {
            pobj,
            dobj,
            gap: (pobj - dobj).abs() / (0.5 * (pobj.abs() + dobj.abs())).max(f64::MIN_POSITIVE),
            gap_abs: (pobj - dobj).abs() * pr.c_scale,
            pinf: rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + c_norm),
            dinf: rd.iter().fold(0.0f64, |a, r| a.max(r.amax())) / (1.0 + f0_norm),
        };
        if s.verbose {
            eprintln!(
                "ipm {it:4} p {:+.8e} d {:+.8e} gap {:.2e} pinf {:.2e} dinf {:.2e} t {:.1}s",
                metrics.pobj,
                metrics.dobj,
                metrics.gap,
                metrics.pinf,
                metrics.dinf,
                t0.elapsed().as_secs_f64()
            );
        }
        if best.as_ref().is_none_or(|b| metrics.merit() <= b.0) {
            best = Some((metrics.merit(), z.clone(), metrics.dobj));
        }
        if (metrics.gap <= s.eps_rel || metrics.gap_abs <= s.eps_abs) && metrics.pinf <= s.eps_abs && metrics.dinf <= s.eps_abs {
            status = SolveStatus::Optimal;
            break;
        }
        let zabs = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let xabs = x.iter().fold(0.0f64, |a, b| a.max(b.amax()));
        if zabs > 1e10 || xabs > 1e10 || !pobj.is_finite() || !dobj.is_finite() {
            status = SolveStatus::Infeasible;
            message = "iterates diverged".into();
            break;
        }

        let zinv: Option<Mats> = sm.par_iter().map(|s| s.clone().cholesky().map(|c| c.inverse())).collect();
        let Some(zinv) = zinv else {
            message = "lost positive definiteness".into();
            break;
        };
        let mu: f64 = x.iter().zip(&sm).map(|(a, b)| dot(a, b)).sum::<f64>() / pr.ntot as f64;
        pr.schur(&x, &zinv, &mut env);
        env.factor(1e-14);

        // X·Rd·Z is shared by predictor and corrector.
        let xrdz: Mats = x.iter().zip(&rd).zip(&zinv).map(|((a, r), zi)| a * r * zi).collect();
        let direction = |k: &Mats| {
            let lhs: Mats = k.iter().zip(&xrdz).map(|(k, w)| k - w).collect();
            let rhs: Vec<f64> = pr.adjoint(&lhs).iter().zip(&rp).map(|(a, r)| a - r).collect();
            let mut dz = env.solve(&rhs);
            // iterative refinement: the factored Schur matrix loses accuracy near the optimum
            for _ in 0..2 {
                let prod: Mats = pr.op(&dz, false).iter().zip(&x).zip(&zinv).map(|((f, xb), zi)| xb * f * zi).collect();
                let res: Vec<f64> = rhs.iter().zip(pr.adjoint(&prod)).map(|(r, b)| r - b).collect();
                for (d, c) in dz.iter_mut().zip(env.solve(&res)) {
                    *d += c;
                }
            }
            let ds: Mats = pr.op(&dz, false).into_iter().zip(&rd).map(|(a, r)| a + r).collect();
            let dx: Mats = k
                .iter()
                .zip(&x)
                .zip(&ds)
                .zip(&zinv)
                .map(|(((k, xb), d), zi)| sym(k - xb * d * zi))
                .collect();
            (dz, ds, dx)
        };

        // predictor
        let k_aff: Mats = x.iter().map(|a| -a).collect();
        let (dz_a, ds_a, dx_a) = direction(&k_aff);
        if dz_a.iter().any(|v| !v.is_finite()) {
            message = "numerical breakdown in the Newton system".into();
            break;
        }
        let (Some(ap), Some(ad)) = (step_length(&x, &dx_a), step_length(&sm, &ds_a)) else {
            message = "step length failure".into();
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff: f64 = x
            .iter()
            .zip(&dx_a)
            .zip(sm.iter().zip(&ds_a))
            .map(|((xb, dxb), (sb, dsb))| dot(&(xb + dxb * ap), &(sb + dsb * ad)))
            .sum::<f64>()
            / pr.ntot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let k: Mats = zinv
            .iter()
            .zip(&x)
            .zip(dx_a.iter().zip(&ds_a))
            .map(|((zi, xb), (dxb, dsb))| zi * (sigma * mu) - xb - dxb * dsb * zi)
            .collect();
        let (dz, ds, dx) = direction(&k);
        if dz.iter().any(|v| !v.is_finite()) {
            message = "numerical breakdown in the Newton system".into();
            break;
        }
        let (Some(ap), Some(ad)) = (step_length(&x, &dx), step_length(&sm, &ds)) else {
            message = "step length failure".into();
            break;
        };
        let ap = (s.step_fraction * ap).min(1.0);
        let ad = (s.step_fraction * ad).min(1.0);
        for (xb, d) in x.iter_mut().zip(&dx) {
            *xb += d * ap;
        }
        for (sb, d) in sm.iter_mut().zip(&ds) {
            *sb += d * ad;
        }
        for (zv, d) in z.iter_mut().zip(&dz) {
            *zv += ad * d;
        }
        if ap.max(ad) < 1e-10 {
            message = "stalled".into();
            break;
        }
        iterations = it + 1;
    }
    if status == SolveStatus::Optimal {
        let lower = -pr.blocks.iter().zip(&x).map(|(b, xb)| dot(&b.f0, xb)).sum::<f64>();
        return finish(&z, lower, status, message, iterations);
    }
    if message.is_empty() && status == SolveStatus::MaxIter {
        message = "iteration limit reached".into();
    }
    let (_, zb, lower) = best.expect("at least one iteration");
    finish(&zb, lower, status, message, iterations)
}
