//! Finite element discretization: global DOF numbering with Dirichlet
//! elimination, element objectives by exact quadrature, and the bounded
//! polynomial optimization problem built from them.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ElementKind, FieldSymbol, Mesh, ReferenceElement};
use crate::poly::{parse_polynomial, Polynomial, VarId, VarRegistry};
use crate::quadrature::{interval_rule, triangle_rule, Rule};

/// Which nodal functional a DOF represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DerivTag {
    /// Point value `u(x)`.
    Value,
    /// Point derivative `∂ₓu(x)` (Hermite only).
    Slope,
}

impl DerivTag {
    pub fn label(self) -> &'static str {
        match self {
            DerivTag::Value => "u",
            DerivTag::Slope => "ux",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofMeta {
    pub vertex: usize,
    pub deriv: DerivTag,
}

/// Global DOF numbering. `element_dofs[e][i]` is the global index of local
/// DOF `i` of element `e`, or `None` when it is pinned to zero by the
/// boundary condition.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub kind: ElementKind,
    pub n_dofs: usize,
    pub element_dofs: Vec<Vec<Option<usize>>>,
    pub dof_meta: Vec<DofMeta>,
    pub node_coords: Vec<[f64; 2]>,
}

impl DofMap {
    /// Free DOFs of element `e` in local order.
    pub fn free_dofs(&self, e: usize) -> Vec<usize> {
        self.element_dofs[e].iter().flatten().copied().collect()
    }
}

fn local_tags(kind: ElementKind) -> &'static [DerivTag] {
    match kind {
        ElementKind::HermiteCubicInterval => &[DerivTag::Value, DerivTag::Slope],
        _ => &[DerivTag::Value],
    }
}

/// Numbers free DOFs lexicographically by (vertex, derivative tag); every DOF
/// at a boundary vertex is eliminated.
pub fn build_dof_map(mesh: &Mesh, kind: ElementKind) -> Result<DofMap> {
    if kind.dim() != mesh.dim {
        return Err(Error::IncompatibleKind {
            kind: kind.name().into(),
            dim: mesh.dim,
        });
    }
    let tags = local_tags(kind);
    let mut global: HashMap<(usize, DerivTag), usize> = HashMap::new();
    let mut dof_meta = Vec::new();
    let mut node_coords = Vec::new();
    for v in 0..mesh.vertices.len() {
        if mesh.is_boundary(v) {
            continue;
        }
        for &tag in tags {
            global.insert((v, tag), dof_meta.len());
            dof_meta.push(DofMeta { vertex: v, deriv: tag });
            node_coords.push(mesh.vertices[v]);
        }
    }
    let element_dofs = mesh
        .elements
        .iter()
        .map(|el| {
            el.iter()
                .flat_map(|&v| tags.iter().map(move |&t| (v, t)))
                .map(|key| global.get(&key).copied())
                .collect()
        })
        .collect();
    Ok(DofMap {
        kind,
        n_dofs: dof_meta.len(),
        element_dofs,
        dof_meta,
        node_coords,
    })
}

/// Integrand `f(x, u, derivatives)` over the fixed symbol set
/// `x, y, u, ux, uy, uxx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    pub poly: Polynomial,
}

impl Integrand {
    pub const X: VarId = VarId(0);
    pub const Y: VarId = VarId(1);
    pub const U: VarId = VarId(2);
    pub const UX: VarId = VarId(3);
    pub const UY: VarId = VarId(4);
    pub const UXX: VarId = VarId(5);
    pub const NAMES: [&'static str; 6] = ["x", "y", "u", "ux", "uy", "uxx"];

    pub fn registry() -> VarRegistry {
        VarRegistry::with_names(&Self::NAMES)
    }

    pub fn parse(src: &str) -> Result<Integrand> {
        Ok(Integrand {
            poly: parse_polynomial(src, &Self::registry())?,
        })
    }

    pub fn symbol_var(s: FieldSymbol) -> VarId {
        match s {
            FieldSymbol::U => Self::U,
            FieldSymbol::Ux => Self::UX,
            FieldSymbol::Uy => Self::UY,
            FieldSymbol::Uxx => Self::UXX,
        }
    }

    pub fn field_symbols_used(&self) -> Vec<FieldSymbol> {
        let vars = self.poly.variables();
        [FieldSymbol::U, FieldSymbol::Ux, FieldSymbol::Uy, FieldSymbol::Uxx]
            .into_iter()
            .filter(|&s| vars.contains(&Self::symbol_var(s)))
            .collect()
    }

    /// Checks every symbol is representable by `kind`.
    pub fn validate(&self, kind: ElementKind) -> Result<()> {
        for s in self.field_symbols_used() {
            if !kind.supports(s) {
                return Err(Error::UnsupportedSymbol {
                    kind: kind.name().into(),
                    symbol: s.name().into(),
                });
            }
        }
        if kind.dim() == 1 && self.poly.variables().contains(&Self::Y) {
            return Err(Error::UnsupportedSymbol {
                kind: kind.name().into(),
                symbol: "y".into(),
            });
        }
        Ok(())
    }

    /// Degree in the field symbols (the degree of every element objective).
    pub fn field_degree(&self) -> u32 {
        self.poly
            .degree_in(&[Self::U, Self::UX, Self::UY, Self::UXX])
    }

    /// Polynomial degree in x of the integrand after substituting an FE
    /// function of `kind` on an affine element.
    pub fn quadrature_degree(&self, kind: ElementKind) -> usize {
        let p = kind.poly_degree() as i64;
        self.poly
            .terms()
            .map(|(m, _)| {
                m.pairs()
                    .iter()
                    .map(|&(v, e)| {
                        let per = match v {
                            Self::X | Self::Y => 1,
                            Self::U => p,
                            Self::UX | Self::UY => (p - 1).max(0),
                            Self::UXX => (p - 2).max(0),
                            _ => 0,
                        };
                        per * e as i64
                    })
                    .sum::<i64>()
            })
            .max()
            .unwrap_or(0) as usize
    }

    /// True when the integrand splits as f₀(x, u) + f₁(x, ∇u) with f₁ a
    /// convex quadratic in the derivative symbols. Only quadratic derivative
    /// dependence is recognised.
    pub fn is_separable_convex(&self) -> bool {
        let derivs = [Self::UX, Self::UY, Self::UXX];
        let mut hessian = [[0.0f64; 3]; 3];
        for (m, c) in self.poly.terms() {
            let has_u = m.exponent_of(Self::U) > 0;
            let dd: u32 = derivs.iter().map(|&d| m.exponent_of(d)).sum();
            if dd == 0 {
                continue;
            }
            if has_u || dd != 2 {
                return false;
            }
            // x-dependence of the quadratic form is not checked pointwise
            if m.exponent_of(Self::X) > 0 || m.exponent_of(Self::Y) > 0 {
                return false;
            }
            let idx: Vec<usize> = derivs
                .iter()
                .enumerate()
                .flat_map(|(i, &d)| std::iter::repeat_n(i, m.exponent_of(d) as usize))
                .collect();
            if idx[0] == idx[1] {
                hessian[idx[0]][idx[0]] += 2.0 * c;
            } else {
                hessian[idx[0]][idx[1]] += c;
                hessian[idx[1]][idx[0]] += c;
            }
        }
        let h = nalgebra::Matrix3::from_fn(|i, j| hessian[i][j]);
        h.symmetric_eigenvalues().iter().all(|&l| l >= -1e-12)
    }
}

/// One term of Φ: a polynomial over global DOF variables (`VarId(j)` is ξⱼ)
/// together with the ordered DOFs 𝔽ₑξ it depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementObjective {
    pub dofs: Vec<usize>,
    pub poly: Polynomial,
}

fn element_rule(kind: ElementKind, degree: usize) -> Rule {
    if kind.dim() == 1 {
        interval_rule(degree)
    } else {
        triangle_rule(degree)
    }
}

/// Integrates `integrand` over element `e` with a rule exact to `degree`.
fn integrate_element(
    integrand: &Integrand,
    mesh: &Mesh,
    dofmap: &DofMap,
    reference: &ReferenceElement,
    rule: &Rule,
    e: usize,
) -> Result<ElementObjective> {
    let local = &dofmap.element_dofs[e];
    let det = mesh.affine_map(e).det(mesh.dim).abs();
    let mut acc = Polynomial::zero();
    for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
        let sv = reference.shape(mesh, e, *node);
        let field = |vals: &[f64]| {
            Polynomial::affine(
                0.0,
                local
                    .iter()
                    .zip(vals)
                    .filter_map(|(d, &c)| d.map(|j| (VarId(j as u32), c))),
            )
        };
        let map = HashMap::from([
            (Integrand::X, Polynomial::constant(sv.x[0])),
            (Integrand::Y, Polynomial::constant(sv.x[1])),
            (Integrand::U, field(&sv.value)),
            (Integrand::UX, field(&sv.dx)),
            (Integrand::UY, field(&sv.dy)),
            (Integrand::UXX, field(&sv.dxx)),
        ]);
        let at_node = integrand.poly.substitute_linear(&map)?;
        acc += &at_node.scale(w * det);
    }
    Ok(ElementObjective {
        dofs: dofmap.free_dofs(e),
        poly: acc,
    })
}

/// Builds f_e for every element, ordered by element index.
pub fn assemble_element_objectives(
    integrand: &Integrand,
    mesh: &Mesh,
    dofmap: &DofMap,
) -> Result<Vec<ElementObjective>> {
    integrand.validate(dofmap.kind)?;
    let reference = ReferenceElement::new(dofmap.kind);
    let rule = element_rule(dofmap.kind, integrand.quadrature_degree(dofmap.kind));
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| integrate_element(integrand, mesh, dofmap, &reference, &rule, e))
        .collect()
}

/// Feasible set of the discrete problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// |ξⱼ| ≤ β for every DOF.
    Box,
    /// |𝔽ₑξ|₂ ≤ β for every element.
    Ball,
}

/// How the DOF bound β depends on the mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "c", rename_all = "kebab-case")]
pub enum BoundRule {
    /// β = c / h
    InverseH(f64),
    /// β = c
    Constant(f64),
}

impl BoundRule {
    pub fn bound(self, h: f64) -> f64 {
        match self {
            BoundRule::InverseH(c) => c / h,
            BoundRule::Constant(c) => c,
        }
    }

    fn constant(self) -> f64 {
        match self {
            BoundRule::InverseH(c) | BoundRule::Constant(c) => c,
        }
    }
}

/// Bounded polynomial optimization problem in rescaled variables t = ξ / β,
/// so the feasible set is `[-1, 1]^N` (box) or a product of unit balls.
#[derive(Debug, Clone)]
pub struct Pop {
    pub n_vars: usize,
    /// Element objectives expressed in the scaled variables.
    pub objectives: Vec<ElementObjective>,
    pub constraint_kind: ConstraintKind,
    /// β_h in original units.
    pub bound: f64,
    /// ξ = scale · t.
    pub scale: f64,
}

pub fn build_pop(
    objectives: Vec<ElementObjective>,
    dofmap: &DofMap,
    constraint_kind: ConstraintKind,
    rule: BoundRule,
    mesh: &Mesh,
) -> Result<Pop> {
    if !(rule.constant() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bound constant must be positive, got {}",
            rule.constant()
        )));
    }
    let beta = rule.bound(mesh.h);
    let scaled = objectives
        .into_iter()
        .map(|o| ElementObjective {
            poly: Polynomial::from_terms(
                o.poly
                    .terms()
                    .map(|(m, c)| (m.clone(), c * beta.powi(m.degree() as i32))),
            ),
            dofs: o.dofs,
        })
        .collect();
    Ok(Pop {
        n_vars: dofmap.n_dofs,
        objectives: scaled,
        constraint_kind,
        bound: beta,
        scale: beta,
    })
}

impl Pop {
    /// Degree of Φ.
    pub fn degree(&self) -> u32 {
        self.objectives.iter().map(|o| o.poly.degree()).max().unwrap_or(0)
    }

    /// Φ in scaled variables.
    pub fn evaluate_scaled(&self, t: &[f64]) -> f64 {
        self.objectives
            .iter()
            .map(|o| o.poly.evaluate_dense(t).expect("dense point covers all DOFs"))
            .sum()
    }

    /// Σ of all f_e as one polynomial in scaled variables.
    pub fn objective_polynomial(&self) -> Polynomial {
        let mut p = Polynomial::zero();
        for o in &self.objectives {
            p += &o.poly;
        }
        p
    }

    pub fn to_scaled(&self, dofs: &[f64]) -> Vec<f64> {
        dofs.iter().map(|v| v / self.scale).collect()
    }

    pub fn is_feasible(&self, dofs: &[f64], tol: f64) -> bool {
        match self.constraint_kind {
            ConstraintKind::Box => dofs.iter().all(|v| v.abs() <= self.bound * (1.0 + tol)),
            ConstraintKind::Ball => self.objectives.iter().all(|o| {
                o.dofs.iter().map(|&j| dofs[j] * dofs[j]).sum::<f64>().sqrt()
                    <= self.bound * (1.0 + tol)
            }),
        }
    }
}

/// Φ(ξ) for DOFs in original units.
pub fn evaluate_energy(dofs: &[f64], pop: &Pop) -> f64 {
    assert_eq!(dofs.len(), pop.n_vars, "DOF vector length");
    pop.evaluate_scaled(&pop.to_scaled(dofs))
}

/// Projects DOF values into the bounded set: per-DOF clamp for boxes; for
/// balls every DOF is shrunk by the smallest radial factor among the
/// elements containing it, which keeps every element inside its ball.
pub fn saturated_interpolate(values: &[f64], pop: &Pop) -> Vec<f64> {
    let beta = pop.bound;
    match pop.constraint_kind {
        ConstraintKind::Box => values.iter().map(|v| v.clamp(-beta, beta)).collect(),
        ConstraintKind::Ball => {
            let mut factor = vec![1.0f64; values.len()];
            for o in &pop.objectives {
                let norm = o.dofs.iter().map(|&j| values[j] * values[j]).sum::<f64>().sqrt();
                // tolerance keeps the projection idempotent under rounding
                if norm > beta * (1.0 + 1e-12) {
                    let s = beta / norm;
                    for &j in &o.dofs {
                        factor[j] = factor[j].min(s);
                    }
                }
            }
            values.iter().zip(&factor).map(|(v, s)| v * s).collect()
        }
    }
}

/// Pointwise values of an FE function and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointValue {
    pub u: f64,
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
}

/// Mesh + DOF map + reference element: everything needed to evaluate FE functions.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub reference: ReferenceElement,
}

impl FeSpace {
    pub fn new(mesh: Mesh, kind: ElementKind) -> Result<Self> {
        let dofmap = build_dof_map(&mesh, kind)?;
        Ok(FeSpace {
            mesh,
            dofmap,
            reference: ReferenceElement::new(kind),
        })
    }

    pub fn kind(&self) -> ElementKind {
        self.dofmap.kind
    }

    /// Evaluates Σ ξⱼ φⱼ inside element `e` at reference point `r`.
    pub fn eval_in_element(&self, dofs: &[f64], e: usize, r: [f64; 2]) -> PointValue {
        let sv = self.reference.shape(&self.mesh, e, r);
        let mut out = PointValue::default();
        for (i, d) in self.dofmap.element_dofs[e].iter().enumerate() {
            if let Some(j) = *d {
                out.u += dofs[j] * sv.value[i];
                out.ux += dofs[j] * sv.dx[i];
                out.uy += dofs[j] * sv.dy[i];
                out.uxx += dofs[j] * sv.dxx[i];
            }
        }
        out
    }

    pub fn eval(&self, dofs: &[f64], point: &[f64]) -> Result<PointValue> {
        let (e, r) = self.mesh.locate(point)?;
        Ok(self.eval_in_element(dofs, e, r))
    }

    /// Classical interpolant from point values (and slopes for Hermite).
    pub fn interpolate<F: Fn(&[f64; 2]) -> (f64, f64)>(&self, f: F) -> Vec<f64> {
        self.dofmap
            .dof_meta
            .iter()
            .map(|m| {
                let (u, ux) = f(&self.mesh.vertices[m.vertex]);
                match m.deriv {
                    DerivTag::Value => u,
                    DerivTag::Slope => ux,
                }
            })
            .collect()
    }

    /// Evaluates ∫ integrand along the FE function with a rule of the given
    /// degree, independently of the assembled element objectives.
    pub fn integrate_numeric(&self, integrand: &Integrand, dofs: &[f64], degree: usize) -> f64 {
        let rule = element_rule(self.kind(), degree);
        let mut total = 0.0;
        for e in 0..self.mesh.n_elements() {
            let det = self.mesh.affine_map(e).det(self.mesh.dim).abs();
            for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
                let pv = self.eval_in_element(dofs, e, *node);
                let x = self.mesh.affine_map(e).apply(*node);
                let vals = [x[0], x[1], pv.u, pv.ux, pv.uy, pv.uxx];
                total += w * det * integrand.poly.evaluate_dense(&vals).expect("six symbols");
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};
    use crate::poly::Monomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SH: &str = "(uxx+u)^2 - 0.3*u^2 - 1.2*u^3 + 0.5*u^4";
    const TWO_WELL: &str = "0.01*(ux^2+uy^2) + (u+1)^2*(u-2)^2";

    #[test]
    fn hermite_dof_counts() {
        let mesh = build_interval_mesh(32.0, 16).unwrap();
        let dm = build_dof_map(&mesh, ElementKind::HermiteCubicInterval).unwrap();
        assert_eq!(dm.n_dofs, 2 * 15);
        for e in 1..15 {
            assert_eq!(dm.free_dofs(e).len(), 4);
        }
        assert_eq!(dm.free_dofs(0).len(), 2);
        assert_eq!(dm.free_dofs(15).len(), 2);
        assert_eq!(dm.dof_meta[0], DofMeta { vertex: 1, deriv: DerivTag::Value });
        assert_eq!(dm.dof_meta[1], DofMeta { vertex: 1, deriv: DerivTag::Slope });
    }

    #[test]
    fn single_p1_interval_has_no_free_dofs() {
        let mesh = build_interval_mesh(1.0, 1).unwrap();
        let dm = build_dof_map(&mesh, ElementKind::LagrangeP1Interval).unwrap();
        assert_eq!(dm.n_dofs, 0);
    }

    #[test]
    fn p1_square_k10_dofs() {
        let mesh = build_rect_mesh(0.5, 0.5, 10).unwrap();
        let dm = build_dof_map(&mesh, ElementKind::LagrangeP1Triangle).unwrap();
        assert_eq!(dm.n_dofs, 81);
    }

    #[test]
    fn incompatible_kind() {
        let mesh = build_rect_mesh(0.5, 0.5, 2).unwrap();
        assert!(matches!(
            build_dof_map(&mesh, ElementKind::HermiteCubicInterval),
            Err(Error::IncompatibleKind { .. })
        ));
    }

    #[test]
    fn u_squared_on_linear_element() {
        // ∫₀ʰ (x/h)² dx = h/3 with the right node free
        let mesh = build_interval_mesh(1.0, 2).unwrap(); // h = 1, free node at x = 0
        let dm = build_dof_map(&mesh, ElementKind::LagrangeP1Interval).unwrap();
        let f = assemble_element_objectives(&Integrand::parse("u^2").unwrap(), &mesh, &dm).unwrap();
        let sq = Monomial::from_pairs([(VarId(0), 2)]);
        assert!((f[0].poly.coefficient(&sq) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f[0].poly.n_terms(), 1);
    }

    #[test]
    fn two_well_on_triangle() {
        let mesh = build_rect_mesh(0.5, 0.5, 4).unwrap();
        let dm = build_dof_map(&mesh, ElementKind::LagrangeP1Triangle).unwrap();
        let f = assemble_element_objectives(&Integrand::parse(TWO_WELL).unwrap(), &mesh, &dm)
            .unwrap();
        let area = 0.5 * (0.25f64 * 0.25);
        for o in &f {
            assert!((o.poly.constant_term() - 4.0 * area).abs() < 1e-14);
            if !o.dofs.is_empty() {
                assert_eq!(o.poly.degree(), 4);
            }
        }
    }

    #[test]
    fn unsupported_symbol_named() {
        let mesh = build_interval_mesh(1.0, 4).unwrap();
        let dm = build_dof_map(&mesh, ElementKind::LagrangeP1Interval).unwrap();
        let err = assemble_element_objectives(&Integrand::parse("uxx^2").unwrap(), &mesh, &dm)
            .unwrap_err();
        assert!(err.to_string().contains("uxx"));
    }

    #[test]
    fn sh_coefficients_match_oversampled_quadrature() {
        // Assemble with the exact-degree rule and with a rule of twice the degree.
        let integrand = Integrand::parse(SH).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let l = rng.gen_range(2.0..20.0);
            let n = rng.gen_range(3..9);
            let mesh = build_interval_mesh(l, n).unwrap();
            let dm = build_dof_map(&mesh, ElementKind::HermiteCubicInterval).unwrap();
            let re = ReferenceElement::new(dm.kind);
            let deg = integrand.quadrature_degree(dm.kind);
            assert_eq!(deg, 12);
            let fine = interval_rule(2 * deg);
            for e in 0..n {
                let exact = assemble_element_objectives(&integrand, &mesh, &dm).unwrap()[e].clone();
                let over = integrate_element(&integrand, &mesh, &dm, &re, &fine, e).unwrap();
                for (m, c) in over.poly.terms() {
                    let a = exact.poly.coefficient(m);
                    assert!((a - c).abs() <= 1e-10 * c.abs().max(1e-8), "{m}: {a} vs {c}");
                }
                assert_eq!(exact.poly.n_terms(), over.poly.n_terms());
            }
        }
    }

    fn pop_for(src: &str, mesh: &Mesh, kind: ElementKind, ck: ConstraintKind, rule: BoundRule) -> (Pop, FeSpace) {
        let space = FeSpace::new(mesh.clone(), kind).unwrap();
        let objs = assemble_element_objectives(&Integrand::parse(src).unwrap(), mesh, &space.dofmap).unwrap();
        (build_pop(objs, &space.dofmap, ck, rule, mesh).unwrap(), space)
    }

    #[test]
    fn bound_rules() {
        assert_eq!(BoundRule::InverseH(2.0).bound(4.0), 0.5);
        assert_eq!(BoundRule::Constant(4.0).bound(0.125), 4.0);
        let mesh = build_interval_mesh(32.0, 16).unwrap();
        let (pop, _) = pop_for(SH, &mesh, ElementKind::HermiteCubicInterval, ConstraintKind::Box, BoundRule::InverseH(2.0));
        assert_eq!(pop.bound, 0.5);
        let space = FeSpace::new(mesh.clone(), ElementKind::HermiteCubicInterval).unwrap();
        assert!(build_pop(vec![], &space.dofmap, ConstraintKind::Box, BoundRule::Constant(0.0), &mesh).is_err());
    }

    #[test]
    fn energy_at_zero() {
        let sq = build_rect_mesh(0.5, 0.5, 10).unwrap();
        let (pop, _) = pop_for(TWO_WELL, &sq, ElementKind::LagrangeP1Triangle, ConstraintKind::Box, BoundRule::InverseH(2f64.sqrt()));
        assert!((evaluate_energy(&vec![0.0; pop.n_vars], &pop) - 4.0).abs() < 1e-12);
        let line = build_interval_mesh(32.0, 16).unwrap();
        let (pop, _) = pop_for(SH, &line, ElementKind::HermiteCubicInterval, ConstraintKind::Box, BoundRule::InverseH(2.0));
        assert_eq!(evaluate_energy(&vec![0.0; pop.n_vars], &pop), 0.0);
    }

    #[test]
    fn energy_matches_independent_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cases: Vec<(&str, Mesh, ElementKind)> = vec![
            (SH, build_interval_mesh(8.0, 8).unwrap(), ElementKind::HermiteCubicInterval),
            (TWO_WELL, build_rect_mesh(0.5, 0.5, 5).unwrap(), ElementKind::LagrangeP1Triangle),
            ("x*u^3 + ux^2 - u", build_interval_mesh(2.0, 6).unwrap(), ElementKind::LagrangeP1Interval),
        ];
        for (src, mesh, kind) in cases {
            let (pop, space) = pop_for(src, &mesh, kind, ConstraintKind::Box, BoundRule::Constant(3.0));
            let integrand = Integrand::parse(src).unwrap();
            for _ in 0..50 {
                let dofs: Vec<f64> = (0..pop.n_vars).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let a = evaluate_energy(&dofs, &pop);
                let b = space.integrate_numeric(&integrand, &dofs, 30);
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{src}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn boundary_values_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let line = FeSpace::new(build_interval_mesh(5.0, 7).unwrap(), ElementKind::HermiteCubicInterval).unwrap();
        let dofs: Vec<f64> = (0..line.dofmap.n_dofs).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for x in [-5.0, 5.0] {
            let v = line.eval(&dofs, &[x]).unwrap();
            assert_eq!(v.u, 0.0);
            assert_eq!(v.ux, 0.0);
        }
        let sq = FeSpace::new(build_rect_mesh(0.5, 0.5, 6).unwrap(), ElementKind::LagrangeP1Triangle).unwrap();
        let dofs: Vec<f64> = (0..sq.dofmap.n_dofs).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for _ in 0..20 {
            let s = rng.gen_range(-0.5..0.5);
            for p in [[s, -0.5], [s, 0.5], [-0.5, s], [0.5, s]] {
                assert!(sq.eval(&dofs, &p).unwrap().u.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn saturation_box() {
        let mesh = build_interval_mesh(1.0, 2).unwrap();
        let (pop, _) = pop_for("u^2", &mesh, ElementKind::LagrangeP1Interval, ConstraintKind::Box, BoundRule::Constant(4.0));
        assert_eq!(saturated_interpolate(&[5.0], &pop), vec![4.0]);
        assert_eq!(saturated_interpolate(&[-3.0], &pop), vec![-3.0]);
    }

    #[test]
    fn saturation_idempotent_ball() {
        let mesh = build_rect_mesh(0.5, 0.5, 5).unwrap();
        let (pop, _) = pop_for(TWO_WELL, &mesh, ElementKind::LagrangeP1Triangle, ConstraintKind::Ball, BoundRule::Constant(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..pop.n_vars).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let once = saturated_interpolate(&v, &pop);
        assert!(pop.is_feasible(&once, 1e-12));
        assert_eq!(saturated_interpolate(&once, &pop), once);
    }

    #[test]
    fn smooth_interpolant_unclamped_and_converging() {
        // u = sin(πx/ℓ)(ℓ² − x²)/ℓ², interpolated with Hermite elements, β = 2/h
        let l = 4.0f64;
        let u = |x: f64| (std::f64::consts::PI * x / l).sin() * (l * l - x * x) / (l * l);
        let du = |x: f64| {
            let a = std::f64::consts::PI / l;
            a * (a * x).cos() * (l * l - x * x) / (l * l) - (a * x).sin() * 2.0 * x / (l * l)
        };
        let mut errors = Vec::new();
        for n in [8usize, 16, 32] {
            let mesh = build_interval_mesh(l, n).unwrap();
            let (pop, space) = pop_for("u^2", &mesh, ElementKind::HermiteCubicInterval, ConstraintKind::Box, BoundRule::InverseH(2.0));
            assert!(mesh.h <= 1.0);
            let xi = space.interpolate(|p| (u(p[0]), du(p[0])));
            assert_eq!(saturated_interpolate(&xi, &pop), xi);
            let err = (0..=400)
                .map(|k| -l + 2.0 * l * k as f64 / 400.0)
                .map(|x| (space.eval(&xi, &[x]).unwrap().u - u(x)).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        assert!(errors[1] < errors[0] / 8.0 && errors[2] < errors[1] / 8.0, "{errors:?}");
    }

    #[test]
    fn rescaled_grid_minimum_matches_original() {
        // two free DOFs: P1 on three intervals
        let mesh = build_interval_mesh(1.5, 3).unwrap();
        let src = "ux^2 + (u^2-1)^2 - 0.5*u";
        let (pop, space) = pop_for(src, &mesh, ElementKind::LagrangeP1Interval, ConstraintKind::Box, BoundRule::Constant(1.5));
        let objs = assemble_element_objectives(&Integrand::parse(src).unwrap(), &mesh, &space.dofmap).unwrap();
        let n = 301;
        let grid = |f: &dyn Fn(f64, f64) -> f64, r: f64| {
            let mut best = f64::INFINITY;
            for i in 0..n {
                for j in 0..n {
                    let a = -r + 2.0 * r * i as f64 / (n - 1) as f64;
                    let b = -r + 2.0 * r * j as f64 / (n - 1) as f64;
                    best = best.min(f(a, b));
                }
            }
            best
        };
        let original = grid(
            &|a, b| objs.iter().map(|o| o.poly.evaluate_dense(&[a, b]).unwrap()).sum(),
            1.5,
        );
        let scaled = grid(&|a, b| pop.evaluate_scaled(&[a, b]), 1.0);
        assert!((original - scaled).abs() < 1e-6, "{original} vs {scaled}");
    }

    #[test]
    fn separability_detection() {
        assert!(Integrand::parse(TWO_WELL).unwrap().is_separable_convex());
        assert!(!Integrand::parse(SH).unwrap().is_separable_convex());
        assert!(!Integrand::parse("-ux^2 + u^2").unwrap().is_separable_convex());
        assert!(!Integrand::parse("u*ux^2").unwrap().is_separable_convex());
    }
}
