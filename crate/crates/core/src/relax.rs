//! Sparse moment relaxation: moment indexing shared across cliques, moment
//! and localizing matrices, and assembly into a block-diagonal SDP over the
//! moment vector `y`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::discretize::{ConstraintKind, Pop};
use crate::error::{Error, Result};
use crate::poly::{Monomial, Polynomial, VarId};
use crate::sparsity::CliqueSet;

/// All monomials in `vars` of degree `≤ max_degree`, graded, and within a
/// degree in descending lexicographic order of exponents.
pub fn monomials_up_to(vars: &[usize], max_degree: u32) -> Vec<Monomial> {
    fn rec(vars: &[usize], deg: u32, prefix: &mut Vec<(VarId, u32)>, out: &mut Vec<Monomial>) {
        match vars.split_first() {
            None => {
                if deg == 0 {
                    out.push(Monomial::from_pairs(prefix.iter().copied()));
                }
            }
            Some((&v, rest)) => {
                for e in (0..=deg).rev() {
                    if e > 0 {
                        prefix.push((VarId(v as u32), e));
                    }
                    rec(rest, deg - e, prefix, out);
                    if e > 0 {
                        prefix.pop();
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for d in 0..=max_degree {
        rec(vars, d, &mut Vec::new(), &mut out);
    }
    out
}

/// C(n, k) as `usize`.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Bijection between clique-supported monomials of degree ≤ 2ω and dense
/// moment indices, assigned by first occurrence over the cliques in order.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    pub omega: u32,
    pub monomials: Vec<Monomial>,
    pub index: HashMap<Monomial, usize>,
    pub unit_index: usize,
    /// Index of the moment of ξⱼ for every POP variable (`None` if uncovered).
    pub first_moment_index: Vec<Option<usize>>,
}

impl MomentBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Moments of the Dirac measure at scaled point `t`.
    pub fn dirac(&self, t: &[f64]) -> Vec<f64> {
        self.monomials
            .iter()
            .map(|m| m.pairs().iter().map(|&(v, e)| t[v.index()].powi(e as i32)).product())
            .collect()
    }

    /// Riesz functional ℓ_y applied to `p`.
    pub fn riesz(&self, p: &Polynomial, y: &[f64]) -> Result<f64> {
        p.terms()
            .map(|(m, c)| {
                self.get(m)
                    .map(|i| c * y[i])
                    .ok_or_else(|| Error::Malformed(format!("monomial {m} has no moment")))
            })
            .sum()
    }
}

pub fn build_moment_basis(cs: &CliqueSet, omega: u32, n_vars: usize) -> MomentBasis {
    let mut monomials = Vec::new();
    let mut index = HashMap::new();
    index.insert(Monomial::one(), 0);
    monomials.push(Monomial::one());
    for c in &cs.cliques {
        for m in monomials_up_to(c, 2 * omega) {
            if !index.contains_key(&m) {
                index.insert(m.clone(), monomials.len());
                monomials.push(m);
            }
        }
    }
    let first_moment_index = (0..n_vars)
        .map(|j| index.get(&Monomial::var(VarId(j as u32))).copied())
        .collect();
    MomentBasis {
        omega,
        monomials,
        index,
        unit_index: 0,
        first_moment_index,
    }
}

/// One coefficient of a block: `coef · y[moment]` at `(row, col)`, `row ≤ col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub row: u32,
    pub col: u32,
    pub moment: u32,
    pub coef: f64,
}

/// Where a block comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOrigin {
    Moment { clique: usize },
    Localizing { clique: usize, constraint: String },
}

/// A symmetric matrix affine in `y`: Σ entries, implicitly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    pub size: usize,
    pub entries: Vec<BlockEntry>,
    pub origin: BlockOrigin,
}

impl SdpBlock {
    /// Dense value at `y`.
    pub fn evaluate(&self, y: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            let v = e.coef * y[e.moment as usize];
            m[(e.row as usize, e.col as usize)] += v;
            if e.row != e.col {
                m[(e.col as usize, e.row as usize)] += v;
            }
        }
        m
    }
}

/// Moment matrix of a clique: entry (a, b) is the index of mₐ·m_b.
pub fn moment_matrix_structure(clique: &[usize], basis: &MomentBasis) -> Result<Vec<Vec<usize>>> {
    let mons = monomials_up_to(clique, basis.omega);
    mons.iter()
        .map(|a| {
            mons.iter()
                .map(|b| {
                    let p = a.mul(b);
                    basis
                        .get(&p)
                        .ok_or_else(|| Error::Malformed(format!("monomial {p} outside basis")))
                })
                .collect()
        })
        .collect()
}

/// Localizing matrix of `g` (degree `2d`) on a clique: entry (a, b) is the
/// sparse linear form Σ_γ g_γ y[γ + αₐ + α_b].
pub fn localizing_matrix_structure(
    clique: &[usize],
    g: &Polynomial,
    basis: &MomentBasis,
) -> Result<Vec<Vec<Vec<(usize, f64)>>>> {
    let d = g.degree().div_ceil(2);
    if basis.omega < d {
        return Err(Error::OrderTooSmall {
            omega: basis.omega as usize,
            required: 2 * d as usize,
        });
    }
    let mons = monomials_up_to(clique, basis.omega - d);
    mons.iter()
        .map(|a| {
            mons.iter()
                .map(|b| {
                    let ab = a.mul(b);
                    g.terms()
                        .map(|(m, c)| {
                            let p = ab.mul(m);
                            basis
                                .get(&p)
                                .map(|i| (i, c))
                                .ok_or_else(|| Error::Malformed(format!("monomial {p} outside basis")))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `min ℓ_y(Φ)` subject to PSD blocks, with `y[unit_index] = 1`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub n_moments: usize,
    /// Sparse objective `Σ c_i y_i`.
    pub objective: Vec<(usize, f64)>,
    pub blocks: Vec<SdpBlock>,
    pub unit_index: usize,
}

impl SdpProblem {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * y[i]).sum()
    }

    /// Checks all indices are in range.
    pub fn validate(&self) -> Result<()> {
        let m = self.n_moments as u32;
        if self.unit_index >= self.n_moments {
            return Err(Error::Malformed("normalization index out of range".into()));
        }
        if self.objective.iter().any(|&(i, c)| i >= self.n_moments || !c.is_finite()) {
            return Err(Error::Malformed("objective index out of range".into()));
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            for e in &blk.entries {
                if e.moment >= m || e.row > e.col || e.col as usize >= blk.size || !e.coef.is_finite() {
                    return Err(Error::Malformed(format!("block {b}: bad entry {e:?}")));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump: header, objective triplets, then per block its
    /// size and `row col moment coef` lines (0-based).
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "moments {}", self.n_moments);
        let _ = writeln!(s, "normalization {}", self.unit_index);
        let _ = writeln!(s, "objective {}", self.objective.len());
        for &(i, c) in &self.objective {
            let _ = writeln!(s, "{i} {c:e}");
        }
        let _ = writeln!(s, "blocks {}", self.blocks.len());
        for b in &self.blocks {
            let _ = writeln!(s, "block {} {}", b.size, b.entries.len());
            for e in &b.entries {
                let _ = writeln!(s, "{} {} {} {:e}", e.row, e.col, e.moment, e.coef);
            }
        }
        s
    }
}

/// Unit-ball constraint polynomial `1 − Σ_{j∈set} tⱼ²` in scaled variables.
fn ball(set: &[usize]) -> Polynomial {
    let mut g = Polynomial::constant(1.0);
    for &j in set {
        g.add_term(Monomial::from_pairs([(VarId(j as u32), 2)]), -1.0);
    }
    g
}

fn constraint_name(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(|j| format!("t{j}")).collect();
    format!("1-|({})|^2", items.join(","))
}

fn to_block(matrix: Vec<Vec<Vec<(usize, f64)>>>, origin: BlockOrigin) -> SdpBlock {
    let size = matrix.len();
    let mut entries = Vec::new();
    for (a, row) in matrix.iter().enumerate() {
        for (b, form) in row.iter().enumerate().skip(a) {
            for &(i, c) in form {
                entries.push(BlockEntry {
                    row: a as u32,
                    col: b as u32,
                    moment: i as u32,
                    coef: c,
                });
            }
        }
    }
    SdpBlock { size, entries, origin }
}

/// Builds the order-ω relaxation of `pop` on the cliques `cs`.
pub fn assemble_sdp(pop: &Pop, cs: &CliqueSet, omega: u32) -> Result<(SdpProblem, MomentBasis)> {
    let required = pop.degree().max(2);
    if 2 * omega < required {
        return Err(Error::OrderTooSmall {
            omega: omega as usize,
            required: required as usize,
        });
    }
    let basis = build_moment_basis(cs, omega, pop.n_vars);

    let mut objective: HashMap<usize, f64> = HashMap::new();
    for o in &pop.objectives {
        for (m, c) in o.poly.terms() {
            let i = basis
                .get(m)
                .ok_or_else(|| Error::Malformed(format!("objective monomial {m} not supported on a clique")))?;
            *objective.entry(i).or_insert(0.0) += c;
        }
    }
    let mut objective: Vec<(usize, f64)> = objective.into_iter().filter(|&(_, c)| c != 0.0).collect();
    objective.sort_unstable_by_key(|&(i, _)| i);

    // Ball constraints: every distinct element DOF set inside the clique.
    let membership = cs.membership(pop.n_vars);
    let mut per_clique: Vec<Vec<Vec<usize>>> = vec![Vec::new(); cs.cliques.len()];
    if pop.constraint_kind == ConstraintKind::Ball {
        let mut seen = std::collections::BTreeSet::new();
        for o in &pop.objectives {
            let mut set = o.dofs.clone();
            set.sort_unstable();
            if set.is_empty() || !seen.insert(set.clone()) {
                continue;
            }
            for k in cs.containing(&membership, &set) {
                per_clique[k].push(set.clone());
            }
        }
    }

    let blocks_per_clique: Vec<Vec<SdpBlock>> = cs
        .cliques
        .par_iter()
        .enumerate()
        .map(|(k, clique)| -> Result<Vec<SdpBlock>> {
            let mm = moment_matrix_structure(clique, &basis)?;
            let mm = mm
                .into_iter()
                .map(|row| row.into_iter().map(|i| vec![(i, 1.0)]).collect())
                .collect();
            let mut blocks = vec![to_block(mm, BlockOrigin::Moment { clique: k })];
            let constraints: Vec<Vec<usize>> = match pop.constraint_kind {
                ConstraintKind::Box => clique.iter().map(|&j| vec![j]).collect(),
                ConstraintKind::Ball => per_clique[k].clone(),
            };
            for set in constraints {
                let g = ball(&set);
                let lm = localizing_matrix_structure(clique, &g, &basis)?;
                blocks.push(to_block(
                    lm,
                    BlockOrigin::Localizing {
                        clique: k,
                        constraint: constraint_name(&set),
                    },
                ));
            }
            Ok(blocks)
        })
        .collect::<Result<_>>()?;

    let problem = SdpProblem {
        n_moments: basis.len(),
        objective,
        blocks: blocks_per_clique.into_iter().flatten().collect(),
        unit_index: basis.unit_index,
    };
    problem.validate()?;
    Ok((problem, basis))
}

/// Numerical rank of each moment-matrix block at `y`: eigenvalues above
/// `rel_tol` times the largest.
pub fn moment_ranks(p: &SdpProblem, y: &[f64], rel_tol: f64) -> Vec<(usize, usize)> {
    p.blocks
        .iter()
        .filter(|b| matches!(b.origin, BlockOrigin::Moment { .. }))
        .map(|b| {
            let ev = b.evaluate(y).symmetric_eigenvalues();
            let top = ev.iter().cloned().fold(0.0f64, f64::max);
            (ev.iter().filter(|&&l| l > rel_tol * top).count(), b.size)
        })
        .collect()
}
