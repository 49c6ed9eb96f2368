//! Structured meshes (uniform intervals, criss-pattern triangulations of
//! rectangles) and reference-element bases.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, VarId};

/// Finite element families supported by the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    /// Continuous piecewise-linear on intervals.
    LagrangeP1Interval,
    /// C¹ cubic Hermite on intervals; DOFs are nodal values and slopes.
    HermiteCubicInterval,
    /// Continuous piecewise-linear on triangles.
    LagrangeP1Triangle,
}

/// Field symbols an integrand may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldSymbol {
    U,
    Ux,
    Uy,
    Uxx,
}

impl FieldSymbol {
    pub fn name(self) -> &'static str {
        match self {
            FieldSymbol::U => "u",
            FieldSymbol::Ux => "ux",
            FieldSymbol::Uy => "uy",
            FieldSymbol::Uxx => "uxx",
        }
    }

    /// Number of derivatives the symbol takes.
    pub fn order(self) -> u32 {
        match self {
            FieldSymbol::U => 0,
            FieldSymbol::Ux | FieldSymbol::Uy => 1,
            FieldSymbol::Uxx => 2,
        }
    }
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            ElementKind::LagrangeP1Interval => "lagrange-p1-interval",
            ElementKind::HermiteCubicInterval => "hermite-cubic-interval",
            ElementKind::LagrangeP1Triangle => "lagrange-p1-triangle",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ElementKind::LagrangeP1Interval | ElementKind::HermiteCubicInterval => 1,
            ElementKind::LagrangeP1Triangle => 2,
        }
    }

    /// Number of local DOFs `s`.
    pub fn dofs_per_element(self) -> usize {
        match self {
            ElementKind::LagrangeP1Interval => 2,
            ElementKind::HermiteCubicInterval => 4,
            ElementKind::LagrangeP1Triangle => 3,
        }
    }

    /// DOFs attached to each vertex.
    pub fn dofs_per_vertex(self) -> usize {
        match self {
            ElementKind::HermiteCubicInterval => 2,
            _ => 1,
        }
    }

    /// Highest derivative order carried by the DOFs.
    pub fn derivative_order(self) -> u32 {
        match self {
            ElementKind::HermiteCubicInterval => 1,
            _ => 0,
        }
    }

    /// Conformity order k (the space sits in W^{k,p}).
    pub fn conformity_order(self) -> u32 {
        match self {
            ElementKind::HermiteCubicInterval => 2,
            _ => 1,
        }
    }

    /// Polynomial degree of the local shape functions.
    pub fn poly_degree(self) -> u32 {
        match self {
            ElementKind::HermiteCubicInterval => 3,
            _ => 1,
        }
    }

    pub fn supports(self, symbol: FieldSymbol) -> bool {
        match symbol {
            FieldSymbol::U | FieldSymbol::Ux => true,
            FieldSymbol::Uy => self.dim() == 2,
            FieldSymbol::Uxx => self == ElementKind::HermiteCubicInterval,
        }
    }
}

/// Geometric domain of a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { half_length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

/// Affine map from reference coordinates: `x = offset + jac · x̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub offset: [f64; 2],
    pub jac: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn apply(&self, r: [f64; 2]) -> [f64; 2] {
        [
            self.offset[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.offset[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    pub fn det(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.jac[0][0]
        } else {
            self.jac[0][0] * self.jac[1][1] - self.jac[0][1] * self.jac[1][0]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub boundary_vertices: BTreeSet<usize>,
    pub h: f64,
    pub domain: Domain,
    /// Elements per side (1D: number of intervals; 2D: k).
    pub divisions: usize,
}

/// Uniform mesh of `[-half_length, half_length]` with `n_elements` intervals.
pub fn build_interval_mesh(half_length: f64, n_elements: usize) -> Result<Mesh> {
    if n_elements == 0 {
        return Err(Error::Mesh("interval mesh needs at least one element".into()));
    }
    if !(half_length > 0.0) {
        return Err(Error::Mesh(format!("half length must be positive, got {half_length}")));
    }
    let h = 2.0 * half_length / n_elements as f64;
    let vertices = (0..=n_elements)
        .map(|i| [i as f64 * h - half_length, 0.0])
        .collect();
    let elements = (0..n_elements).map(|e| vec![e, e + 1]).collect();
    Ok(Mesh {
        dim: 1,
        vertices,
        elements,
        boundary_vertices: BTreeSet::from([0, n_elements]),
        h,
        domain: Domain::Interval { half_length },
        divisions: n_elements,
    })
}

/// `k × k` grid on `[-lx, lx] × [-ly, ly]`, each cell split along its
/// lower-left → upper-right diagonal.
pub fn build_rect_mesh(lx: f64, ly: f64, k: usize) -> Result<Mesh> {
    if k == 0 {
        return Err(Error::Mesh("rectangle mesh needs k >= 1".into()));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::Mesh(format!("half sides must be positive, got {lx} x {ly}")));
    }
    let vid = |i: usize, j: usize| j * (k + 1) + i;
    let mut vertices = Vec::with_capacity((k + 1) * (k + 1));
    let mut boundary = BTreeSet::new();
    for j in 0..=k {
        for i in 0..=k {
            vertices.push([
                -lx + 2.0 * lx * i as f64 / k as f64,
                -ly + 2.0 * ly * j as f64 / k as f64,
            ]);
            if i == 0 || j == 0 || i == k || j == k {
                boundary.insert(vid(i, j));
            }
        }
    }
    let mut elements = Vec::with_capacity(2 * k * k);
    for j in 0..k {
        for i in 0..k {
            elements.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            elements.push(vec![vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let mut mesh = Mesh {
        dim: 2,
        vertices,
        elements,
        boundary_vertices: boundary,
        h: 0.0,
        domain: Domain::Rectangle { lx, ly },
        divisions: k,
    };
    mesh.h = mesh.max_diameter();
    Ok(mesh)
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_vertices.contains(&v)
    }

    /// Maximum over elements of the largest pairwise vertex distance.
    pub fn max_diameter(&self) -> f64 {
        self.elements
            .iter()
            .map(|el| {
                let mut d: f64 = 0.0;
                for a in 0..el.len() {
                    for b in a + 1..el.len() {
                        let (p, q) = (self.vertices[el[a]], self.vertices[el[b]]);
                        d = d.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    /// Measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        match self.domain {
            Domain::Interval { half_length } => 2.0 * half_length,
            Domain::Rectangle { lx, ly } => 4.0 * lx * ly,
        }
    }

    pub fn affine_map(&self, e: usize) -> AffineMap {
        let el = &self.elements[e];
        let p0 = self.vertices[el[0]];
        if self.dim == 1 {
            let p1 = self.vertices[el[1]];
            AffineMap {
                offset: [p0[0], 0.0],
                jac: [[p1[0] - p0[0], 0.0], [0.0, 1.0]],
            }
        } else {
            let (p1, p2) = (self.vertices[el[1]], self.vertices[el[2]]);
            AffineMap {
                offset: p0,
                jac: [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]],
            }
        }
    }

    /// Locates the element containing `p` and its reference coordinates.
    pub fn locate(&self, p: &[f64]) -> Result<(usize, [f64; 2])> {
        const TOL: f64 = 1e-12;
        match self.domain {
            Domain::Interval { half_length } => {
                let x = p[0];
                if p.len() != 1 || x < -half_length - TOL || x > half_length + TOL {
                    return Err(Error::OutsideDomain(p.to_vec()));
                }
                let n = self.divisions;
                let h = 2.0 * half_length / n as f64;
                let e = (((x + half_length) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
                let t = (x - self.vertices[e][0]) / h;
                Ok((e, [t.clamp(0.0, 1.0), 0.0]))
            }
            Domain::Rectangle { lx, ly } => {
                if p.len() != 2
                    || p[0].abs() > lx + TOL
                    || p[1].abs() > ly + TOL
                {
                    return Err(Error::OutsideDomain(p.to_vec()));
                }
                let k = self.divisions;
                let hx = 2.0 * lx / k as f64;
                let hy = 2.0 * ly / k as f64;
                let i = (((p[0] + lx) / hx).floor() as isize).clamp(0, k as isize - 1) as usize;
                let j = (((p[1] + ly) / hy).floor() as isize).clamp(0, k as isize - 1) as usize;
                let a = ((p[0] + lx) / hx - i as f64).clamp(0.0, 1.0);
                let b = ((p[1] + ly) / hy - j as f64).clamp(0.0, 1.0);
                let cell = j * k + i;
                // lower triangle (a >= b): v00, v10, v11; upper: v00, v11, v01
                if a >= b {
                    Ok((2 * cell, [a - b, b]))
                } else {
                    Ok((2 * cell + 1, [a, b - a]))
                }
            }
        }
    }
}

/// Reference basis functions in reference coordinates `VarId(0)` (and `VarId(1)`).
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub kind: ElementKind,
    pub functions: Vec<Polynomial>,
    /// `true` for slope functions, which are multiplied by the element length
    /// under push-forward so the DOF is the physical derivative.
    pub slope_scaled: Vec<bool>,
}

pub fn reference_basis(kind: ElementKind) -> ReferenceBasis {
    let t = Polynomial::var(VarId(0));
    let one = Polynomial::constant(1.0);
    match kind {
        ElementKind::LagrangeP1Interval => ReferenceBasis {
            kind,
            functions: vec![&one - &t, t],
            slope_scaled: vec![false, false],
        },
        ElementKind::HermiteCubicInterval => {
            let t2 = t.pow(2);
            let t3 = t.pow(3);
            let h00 = &(&t3.scale(2.0) - &t2.scale(3.0)) + &one;
            let h10 = &(&t3 - &t2.scale(2.0)) + &t;
            let h01 = &t2.scale(3.0) - &t3.scale(2.0);
            let h11 = &t3 - &t2;
            ReferenceBasis {
                kind,
                functions: vec![h00, h10, h01, h11],
                slope_scaled: vec![false, true, false, true],
            }
        }
        ElementKind::LagrangeP1Triangle => {
            let s = Polynomial::var(VarId(0));
            let t = Polynomial::var(VarId(1));
            ReferenceBasis {
                kind,
                functions: vec![&(&one - &s) - &t, s, t],
                slope_scaled: vec![false, false, false],
            }
        }
    }
}

/// Physical values of the local shape functions (and derivatives) at one
/// reference point of one element.
#[derive(Debug, Clone)]
pub struct ShapeValues {
    pub x: [f64; 2],
    pub value: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dxx: Vec<f64>,
}

impl ShapeValues {
    pub fn of(&self, symbol: FieldSymbol) -> &[f64] {
        match symbol {
            FieldSymbol::U => &self.value,
            FieldSymbol::Ux => &self.dx,
            FieldSymbol::Uy => &self.dy,
            FieldSymbol::Uxx => &self.dxx,
        }
    }
}

/// Reference basis with cached reference derivatives.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub basis: ReferenceBasis,
    d0: Vec<Polynomial>,
    d1: Vec<Polynomial>,
    d00: Vec<Polynomial>,
}

impl ReferenceElement {
    pub fn new(kind: ElementKind) -> Self {
        let basis = reference_basis(kind);
        let d0: Vec<_> = basis.functions.iter().map(|f| f.derivative(VarId(0))).collect();
        let d1 = basis.functions.iter().map(|f| f.derivative(VarId(1))).collect();
        let d00 = d0.iter().map(|f| f.derivative(VarId(0))).collect();
        ReferenceElement { basis, d0, d1, d00 }
    }

    pub fn kind(&self) -> ElementKind {
        self.basis.kind
    }

    /// Pushes the reference basis forward to element `e` at reference point `r`.
    pub fn shape(&self, mesh: &Mesh, e: usize, r: [f64; 2]) -> ShapeValues {
        let map = mesh.affine_map(e);
        let ev = |p: &Polynomial| p.evaluate_dense(&r).expect("reference polynomial in two coordinates");
        let n = self.basis.functions.len();
        let mut out = ShapeValues {
            x: map.apply(r),
            value: vec![0.0; n],
            dx: vec![0.0; n],
            dy: vec![0.0; n],
            dxx: vec![0.0; n],
        };
        if mesh.dim == 1 {
            let h = map.jac[0][0];
            for i in 0..n {
                let scale = if self.basis.slope_scaled[i] { h } else { 1.0 };
                out.value[i] = scale * ev(&self.basis.functions[i]);
                out.dx[i] = scale * ev(&self.d0[i]) / h;
                out.dxx[i] = scale * ev(&self.d00[i]) / (h * h);
            }
        } else {
            let j = map.jac;
            let det = map.det(2);
            // inverse-transpose of the Jacobian
            let it = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
            for i in 0..n {
                let (gs, gt) = (ev(&self.d0[i]), ev(&self.d1[i]));
                out.value[i] = ev(&self.basis.functions[i]);
                out.dx[i] = it[0][0] * gs + it[0][1] * gt;
                out.dy[i] = it[1][0] * gs + it[1][1] * gt;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn interval_mesh_sizes() {
        let m = build_interval_mesh(32.0, 16).unwrap();
        assert_eq!(m.h, 4.0);
        assert_eq!(m.vertices.len(), 17);
        assert_eq!(m.boundary_vertices, BTreeSet::from([0, 16]));
        let m = build_interval_mesh(32.0, 64).unwrap();
        assert_eq!(m.h, 1.0);
        assert!((m.max_diameter() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_interval() {
        let m = build_interval_mesh(1.0, 1).unwrap();
        assert_eq!(m.elements, vec![vec![0, 1]]);
        assert_eq!(m.vertices[0][0], -1.0);
        assert_eq!(m.vertices[1][0], 1.0);
        assert_eq!(m.boundary_vertices.len(), 2);
    }

    #[test]
    fn zero_divisions_rejected() {
        assert!(build_interval_mesh(1.0, 0).is_err());
        assert!(build_rect_mesh(0.5, 0.5, 0).is_err());
    }

    #[test]
    fn unit_square_k10() {
        let m = build_rect_mesh(0.5, 0.5, 10).unwrap();
        assert_eq!(m.n_elements(), 200);
        assert!((m.h - 2f64.sqrt() / 10.0).abs() < 1e-12);
        let interior = (0..m.vertices.len()).filter(|&v| !m.is_boundary(v)).count();
        assert_eq!(interior, 81);
        for v in &m.boundary_vertices {
            let p = m.vertices[*v];
            assert!((p[0].abs() - 0.5).abs() < 1e-12 || (p[1].abs() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_k1() {
        let m = build_rect_mesh(0.5, 0.5, 1).unwrap();
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.boundary_vertices.len(), 4);
    }

    #[test]
    fn interior_edges_shared_twice() {
        let m = build_rect_mesh(0.5, 0.5, 6).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for el in &m.elements {
            for a in 0..3 {
                let (p, q) = (el[a], el[(a + 1) % 3]);
                *count.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        for (&(p, q), &c) in &count {
            let on_boundary = m.is_boundary(p) && m.is_boundary(q) && {
                let (a, b) = (m.vertices[p], m.vertices[q]);
                (a[0] == b[0] && a[0].abs() == 0.5) || (a[1] == b[1] && a[1].abs() == 0.5)
            };
            assert_eq!(c, if on_boundary { 1 } else { 2 }, "edge {p}-{q}");
        }
        // positive orientation and total area
        let area: f64 = (0..m.n_elements()).map(|e| 0.5 * m.affine_map(e).det(2)).sum();
        assert!((0..m.n_elements()).all(|e| m.affine_map(e).det(2) > 0.0));
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interior_vertices_shared_by_two_intervals() {
        let m = build_interval_mesh(2.0, 5).unwrap();
        for v in 1..5 {
            assert_eq!(m.elements.iter().filter(|el| el.contains(&v)).count(), 2);
        }
    }

    #[test]
    fn h_matches_formula_rectangle() {
        let m = build_rect_mesh(1.0, 1.0, 7).unwrap();
        assert!((m.h - 2f64.sqrt() * 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_kronecker() {
        let b = reference_basis(ElementKind::HermiteCubicInterval);
        let t = VarId(0);
        for (i, f) in b.functions.iter().enumerate() {
            let df = f.derivative(t);
            let at = |p: &Polynomial, x: f64| p.evaluate(&HashMap::from([(t, x)])).unwrap();
            let expect = |k: usize| if i == k { 1.0 } else { 0.0 };
            assert_eq!(at(f, 0.0), expect(0));
            assert_eq!(at(&df, 0.0), expect(1));
            assert_eq!(at(f, 1.0), expect(2));
            assert_eq!(at(&df, 1.0), expect(3));
        }
    }

    #[test]
    fn lagrange_partition_of_unity() {
        for kind in [ElementKind::LagrangeP1Interval, ElementKind::LagrangeP1Triangle] {
            let b = reference_basis(kind);
            let sum = b
                .functions
                .iter()
                .fold(Polynomial::zero(), |acc, f| &acc + f);
            assert_eq!(sum, Polynomial::constant(1.0));
        }
    }

    #[test]
    fn pushed_forward_slope_function() {
        let m = build_interval_mesh(3.0, 2).unwrap(); // h = 3
        let re = ReferenceElement::new(ElementKind::HermiteCubicInterval);
        let left = re.shape(&m, 1, [0.0, 0.0]);
        assert_eq!(left.dx[1], 1.0);
        assert_eq!(left.value[1], 0.0);
        let right = re.shape(&m, 1, [1.0, 0.0]);
        assert_eq!(right.dx[3], 1.0);
        assert_eq!(right.dx[1], 0.0);
    }

    #[test]
    fn triangle_gradients_constant_and_consistent() {
        let m = build_rect_mesh(0.5, 0.5, 3).unwrap();
        let re = ReferenceElement::new(ElementKind::LagrangeP1Triangle);
        for e in 0..m.n_elements() {
            let s = re.shape(&m, e, [0.2, 0.3]);
            // gradients of a partition of unity sum to zero
            assert!(s.dx.iter().sum::<f64>().abs() < 1e-12);
            assert!(s.dy.iter().sum::<f64>().abs() < 1e-12);
            // interpolating x reproduces the x coordinate's gradient
            let el = &m.elements[e];
            let gx: f64 = (0..3).map(|i| m.vertices[el[i]][0] * s.dx[i]).sum();
            let gy: f64 = (0..3).map(|i| m.vertices[el[i]][0] * s.dy[i]).sum();
            assert!((gx - 1.0).abs() < 1e-12 && gy.abs() < 1e-12);
        }
    }

    #[test]
    fn locate_points() {
        let m = build_rect_mesh(0.5, 0.5, 4).unwrap();
        let re = ReferenceElement::new(ElementKind::LagrangeP1Triangle);
        for p in [[0.1, -0.2], [-0.5, 0.5], [0.37, 0.11], [0.0, 0.0]] {
            let (e, r) = m.locate(&p).unwrap();
            let x = re.shape(&m, e, r).x;
            assert!((x[0] - p[0]).abs() < 1e-12 && (x[1] - p[1]).abs() < 1e-12);
        }
        assert!(m.locate(&[0.6, 0.0]).is_err());
        let m1 = build_interval_mesh(2.0, 4).unwrap();
        assert_eq!(m1.locate(&[2.0]).unwrap().0, 3);
        assert!(m1.locate(&[-2.5]).is_err());
    }
}
