//! Problem specification files: bracketed sections with `key = value`
//! lines (TOML). Unknown keys are rejected; omitted keys take defaults and
//! [`ProblemSpec::to_toml`] echoes the effective configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretize::{BoundRule, ConstraintKind, FeSpace, Integrand};
use crate::error::{Error, Result};
use crate::gradflow::FlowSettings;
use crate::mesh::{build_interval_mesh, build_rect_mesh, ElementKind, Mesh};
use crate::sdpsolve::SolverSettings;
use crate::sparsity::CliqueStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dim: usize,
    /// 1D domain `[-half_length, half_length]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_length: Option<f64>,
    /// 2D domain `[-lx, lx] × [-ly, ly]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<f64>,
    pub integrand: String,
    /// Field symbols the integrand is allowed to use; inferred when omitted.
    #[serde(default)]
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub element: ElementKind,
    /// Intervals (1D) or divisions per side (2D).
    pub n: usize,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintKind,
    pub bound: BoundRule,
}

fn default_constraint() -> ConstraintKind {
    ConstraintKind::Box
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationSection {
    #[serde(default = "default_omega")]
    pub omega: usize,
    #[serde(default = "default_cliques")]
    pub cliques: CliqueStrategy,
    /// Relative gap above which the extraction is flagged.
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
}

fn default_omega() -> usize {
    2
}

fn default_cliques() -> CliqueStrategy {
    CliqueStrategy::Element
}

fn default_gap_threshold() -> f64 {
    crate::extract::DEFAULT_GAP_THRESHOLD
}

impl Default for RelaxationSection {
    fn default() -> Self {
        RelaxationSection {
            omega: default_omega(),
            cliques: default_cliques(),
            gap_threshold: default_gap_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub relaxation: RelaxationSection,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub outputs: OutputSection,
}

fn line_of(src: &str, byte: usize) -> usize {
    src[..byte.min(src.len())].matches('\n').count() + 1
}

impl ProblemSpec {
    /// Parses and validates; errors carry the 1-based line number (0 when
    /// the problem is not tied to a line).
    pub fn from_toml(src: &str) -> Result<Self> {
        let mut spec: ProblemSpec = toml::from_str(src).map_err(|e| Error::Spec {
            line: e.span().map_or(0, |s| line_of(src, s.start)),
            message: e.message().trim().to_string(),
        })?;
        spec.finish().map_err(|e| match e {
            Error::Spec { .. } => e,
            other => Error::Spec {
                line: src
                    .lines()
                    .position(|l| l.trim_start().starts_with("integrand"))
                    .map_or(0, |i| i + 1),
                message: other.to_string(),
            },
        })?;
        Ok(spec)
    }

    /// Validates and fills inferred fields.
    fn finish(&mut self) -> Result<()> {
        let p = &self.problem;
        let d = &self.discretization;
        let err = |m: String| Error::Spec { line: 0, message: m };
        if p.dim != d.element.dim() {
            return Err(err(format!("element {} is {}D but dim = {}", d.element.name(), d.element.dim(), p.dim)));
        }
        match p.dim {
            1 if p.half_length.is_none() => return Err(err("1D problems need half_length".into())),
            1 if p.lx.is_some() || p.ly.is_some() => return Err(err("lx/ly are only valid when dim = 2".into())),
            2 if p.lx.is_none() || p.ly.is_none() => return Err(err("2D problems need lx and ly".into())),
            2 if p.half_length.is_some() => return Err(err("half_length is only valid when dim = 1".into())),
            1 | 2 => {}
            n => return Err(err(format!("dim must be 1 or 2, got {n}"))),
        }
        if d.n == 0 {
            return Err(err("n must be positive".into()));
        }
        let c = match d.bound {
            BoundRule::InverseH(c) | BoundRule::Constant(c) => c,
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(err(format!("bound constant must be positive, got {c}")));
        }
        if self.relaxation.omega == 0 {
            return Err(err("omega must be at least 1".into()));
        }
        self.solver.validate().map_err(|e| err(e.to_string()))?;
        let integrand = Integrand::parse(&p.integrand)?;
        integrand.validate(d.element)?;
        let used: Vec<String> = integrand.field_symbols_used().iter().map(|s| s.name().to_string()).collect();
        if self.problem.symbols.is_empty() {
            self.problem.symbols = used;
        } else if let Some(s) = used.iter().find(|s| !self.problem.symbols.contains(s)) {
            return Err(err(format!("integrand uses `{s}`, which is not among the declared symbols")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn integrand(&self) -> Result<Integrand> {
        Integrand::parse(&self.problem.integrand)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let n = self.discretization.n;
        match self.problem.dim {
            1 => build_interval_mesh(self.problem.half_length.unwrap_or(1.0), n),
            _ => build_rect_mesh(self.problem.lx.unwrap_or(1.0), self.problem.ly.unwrap_or(1.0), n),
        }
    }

    pub fn space(&self) -> Result<FeSpace> {
        FeSpace::new(self.mesh()?, self.discretization.element)
    }
}

/// Reads and validates a spec file.
pub fn parse_spec(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let src = std::fs::read_to_string(path.as_ref())?;
    ProblemSpec::from_toml(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_WELL: &str = r#"
[problem]
dim = 2
lx = 0.5
ly = 0.5
integrand = "0.01*(ux^2+uy^2) + (u+1)^2*(u-2)^2"

[discretization]
element = "lagrange-p1-triangle"
n = 10
bound = { rule = "inverse-h", c = 1.4142135623730951 }

[relaxation]
omega = 2
"#;

    const SH: &str = r#"
[problem]
dim = 1
half_length = 32.0
integrand = "(uxx+u)^2 - 0.3*u^2 - 1.2*u^3 + 0.5*u^4"

[discretization]
element = "hermite-cubic-interval"
n = 16
bound = { rule = "inverse-h", c = 2.0 }
"#;

    #[test]
    fn two_well_spec() {
        let s = ProblemSpec::from_toml(TWO_WELL).unwrap();
        assert_eq!(s.problem.symbols, vec!["u", "ux", "uy"]);
        assert_eq!(s.discretization.constraint, ConstraintKind::Box);
        assert_eq!(s.relaxation.cliques, CliqueStrategy::Element);
        assert_eq!(s.solver, SolverSettings::default());
        let mesh = s.mesh().unwrap();
        assert_eq!(mesh.n_elements(), 200);
        assert!((s.discretization.bound.bound(mesh.h) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sh_spec() {
        let s = ProblemSpec::from_toml(SH).unwrap();
        assert_eq!(s.problem.symbols, vec!["u", "uxx"]);
        assert_eq!(s.mesh().unwrap().h, 4.0);
        assert_eq!(s.outputs.dir, PathBuf::from("out"));
    }

    #[test]
    fn round_trip() {
        for src in [TWO_WELL, SH] {
            let s = ProblemSpec::from_toml(src).unwrap();
            let echoed = s.to_toml();
            assert_eq!(ProblemSpec::from_toml(&echoed).unwrap(), s, "{echoed}");
        }
    }

    #[test]
    fn uxx_with_p1_names_symbol() {
        let src = SH.replace("hermite-cubic-interval", "lagrange-p1-interval");
        let e = ProblemSpec::from_toml(&src).unwrap_err().to_string();
        assert!(e.contains("uxx"), "{e}");
        assert!(e.contains("line 5"), "{e}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let src = SH.replace("n = 16", "n = 16\nmesh_size = 3");
        match ProblemSpec::from_toml(&src) {
            Err(Error::Spec { line, message }) => {
                assert_eq!(line, 10, "{message}");
                assert!(message.contains("mesh_size"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let src = SH.replace("n = 16", "n = = 16");
        assert!(matches!(ProblemSpec::from_toml(&src), Err(Error::Spec { line: 9, .. })));
    }

    #[test]
    fn undeclared_symbol() {
        let src = SH.replace("integrand =", "symbols = [\"u\"]\nintegrand =");
        let e = ProblemSpec::from_toml(&src).unwrap_err().to_string();
        assert!(e.contains("uxx"), "{e}");
    }

    #[test]
    fn dimension_mismatch() {
        let src = SH.replace("dim = 1", "dim = 2");
        assert!(ProblemSpec::from_toml(&src).is_err());
    }
}
