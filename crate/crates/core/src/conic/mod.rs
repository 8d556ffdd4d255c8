//! Solver-agnostic conic programs: affine expressions over scalar variables,
//! cone constraints, a native interior-point backend and a feasibility check.

mod backend;
mod hermitian;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::solve;
pub use hermitian::{embed_hermitian, HermitianVar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Var(pub usize);

impl Var {
    pub fn aff(self) -> Affine {
        Affine::from(self)
    }
}

/// `Σ coeff·x[index] + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(v: Var, coeff: f64) -> Self {
        Self {
            terms: vec![(v.0, coeff)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    /// Merge repeated variables and drop zero coefficients.
    pub fn compressed(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self {
            terms: out,
            constant: self.constant,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

impl From<Var> for Affine {
    fn from(v: Var) -> Self {
        Affine::term(v, 1.0)
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

impl<T: Into<Affine>> Add<T> for Affine {
    type Output = Affine;
    fn add(mut self, rhs: T) -> Affine {
        self += rhs;
        self
    }
}

impl<T: Into<Affine>> AddAssign<T> for Affine {
    fn add_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl<T: Into<Affine>> Sub<T> for Affine {
    type Output = Affine;
    fn sub(self, rhs: T) -> Affine {
        self + rhs.into().scale(-1.0)
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(self, s: f64) -> Affine {
        self.scale(s)
    }
}

impl Mul<f64> for Var {
    type Output = Affine;
    fn mul(self, s: f64) -> Affine {
        Affine::term(self, s)
    }
}

impl<T: Into<Affine>> Add<T> for Var {
    type Output = Affine;
    fn add(self, rhs: T) -> Affine {
        Affine::from(self) + rhs
    }
}

impl<T: Into<Affine>> Sub<T> for Var {
    type Output = Affine;
    fn sub(self, rhs: T) -> Affine {
        Affine::from(self) - rhs
    }
}

impl std::iter::Sum for Affine {
    fn sum<I: Iterator<Item = Affine>>(iter: I) -> Affine {
        iter.fold(Affine::default(), |acc, a| acc + a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cone", rename_all = "snake_case")]
pub enum Constraint {
    /// `e = 0`
    Zero(Affine),
    /// `e ≥ 0`
    NonNeg(Affine),
    /// `t ≥ ||x||`
    Soc { t: Affine, x: Vec<Affine> },
    /// `u·v ≥ ||x||²`, `u, v ≥ 0`
    RotatedSoc { u: Affine, v: Affine, x: Vec<Affine> },
    /// `y·exp(x/y) ≤ z`, `y > 0`
    Exp { x: Affine, y: Affine, z: Affine },
    /// `x^alpha · y^(1-alpha) ≥ |z|`, `x, y ≥ 0`
    Pow {
        x: Affine,
        y: Affine,
        z: Affine,
        alpha: f64,
    },
    /// Symmetric matrix given by its upper triangle, column by column, is PSD.
    Psd { dim: usize, upper: Vec<Affine> },
}

impl Constraint {
    pub fn exprs(&self) -> Vec<&Affine> {
        match self {
            Constraint::Zero(e) | Constraint::NonNeg(e) => vec![e],
            Constraint::Soc { t, x } => std::iter::once(t).chain(x).collect(),
            Constraint::RotatedSoc { u, v, x } => [u, v].into_iter().chain(x).collect(),
            Constraint::Exp { x, y, z } | Constraint::Pow { x, y, z, .. } => vec![x, y, z],
            Constraint::Psd { upper, .. } => upper.iter().collect(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Constraint::Zero(_) => "zero",
            Constraint::NonNeg(_) => "nonneg",
            Constraint::Soc { .. } => "soc",
            Constraint::RotatedSoc { .. } => "rsoc",
            Constraint::Exp { .. } => "exp",
            Constraint::Pow { .. } => "pow",
            Constraint::Psd { .. } => "psd",
        }
    }

    /// Distance-like measure of how far `x` is from satisfying the constraint.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = |v: &[Affine]| v.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        match self {
            Constraint::Zero(e) => e.eval(x).abs(),
            Constraint::NonNeg(e) => (-e.eval(x)).max(0.0),
            Constraint::Soc { t, x: v } => (norm(v) - t.eval(x)).max(0.0),
            Constraint::RotatedSoc { u, v, x: w } => {
                let (a, b) = (u.eval(x), v.eval(x));
                let lhs = ((a - b).powi(2) + 4.0 * norm(w).powi(2)).sqrt();
                ((lhs - a - b) / 2.0).max(-a).max(-b).max(0.0)
            }
            Constraint::Exp { x: ex, y, z } => {
                let (a, b, c) = (ex.eval(x), y.eval(x), z.eval(x));
                if b > 0.0 {
                    // clamp the exponent so huge ratios do not overflow
                    let lhs = b * (a / b).min(700.0).exp();
                    (lhs - c).max(0.0)
                } else {
                    a.max(0.0).max(-c).max(-b)
                }
            }
            Constraint::Pow { x: ex, y, z, alpha } => {
                let (a, b, c) = (ex.eval(x), y.eval(x), z.eval(x));
                if a < 0.0 || b < 0.0 {
                    return (-a).max(-b).max(0.0);
                }
                (c.abs() - a.powf(*alpha) * b.powf(1.0 - alpha)).max(0.0)
            }
            Constraint::Psd { dim, upper } => {
                let m = triangle_to_matrix(*dim, &upper.iter().map(|e| e.eval(x)).collect::<Vec<_>>());
                (-m.symmetric_eigenvalues().min()).max(0.0)
            }
        }
    }
}

/// Position of `(i, j)`, `i ≤ j`, in a column-wise upper triangle.
pub fn triangle_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

pub fn triangle_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

pub fn triangle_to_matrix(dim: usize, upper: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        upper[triangle_index(a, b)]
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledConstraint {
    pub label: String,
    pub constraint: Constraint,
}

/// Minimize a linear objective over a product of cones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub variables: Vec<String>,
    pub objective: Affine,
    pub constraints: Vec<LabeledConstraint>,
}

impl Default for Constraint {
    fn default() -> Self {
        Constraint::NonNeg(Affine::default())
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: impl Into<String>) -> Var {
        self.variables.push(name.into());
        Var(self.variables.len() - 1)
    }

    pub fn vars(&mut self, name: &str, count: usize) -> Vec<Var> {
        (0..count).map(|i| self.var(format!("{name}[{i}]"))).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn minimize(&mut self, objective: impl Into<Affine>) {
        self.objective = objective.into();
    }

    pub fn add(&mut self, label: impl Into<String>, constraint: Constraint) {
        self.constraints.push(LabeledConstraint {
            label: label.into(),
            constraint,
        });
    }

    /// `lhs ≥ rhs`
    pub fn ge(&mut self, label: impl Into<String>, lhs: impl Into<Affine>, rhs: impl Into<Affine>) {
        self.add(label, Constraint::NonNeg(lhs.into() - rhs.into()));
    }

    /// `lhs ≤ rhs`
    pub fn le(&mut self, label: impl Into<String>, lhs: impl Into<Affine>, rhs: impl Into<Affine>) {
        self.add(label, Constraint::NonNeg(rhs.into() - lhs.into()));
    }

    pub fn equal(&mut self, label: impl Into<String>, lhs: impl Into<Affine>, rhs: impl Into<Affine>) {
        self.add(label, Constraint::Zero(lhs.into() - rhs.into()));
    }

    pub fn soc(&mut self, label: impl Into<String>, t: impl Into<Affine>, x: Vec<Affine>) {
        self.add(label, Constraint::Soc { t: t.into(), x });
    }

    pub fn rsoc(
        &mut self,
        label: impl Into<String>,
        u: impl Into<Affine>,
        v: impl Into<Affine>,
        x: Vec<Affine>,
    ) {
        self.add(
            label,
            Constraint::RotatedSoc {
                u: u.into(),
                v: v.into(),
                x,
            },
        );
    }

    pub fn exp_cone(
        &mut self,
        label: impl Into<String>,
        x: impl Into<Affine>,
        y: impl Into<Affine>,
        z: impl Into<Affine>,
    ) {
        self.add(
            label,
            Constraint::Exp {
                x: x.into(),
                y: y.into(),
                z: z.into(),
            },
        );
    }

    pub fn pow_cone(
        &mut self,
        label: impl Into<String>,
        x: impl Into<Affine>,
        y: impl Into<Affine>,
        z: impl Into<Affine>,
        alpha: f64,
    ) {
        self.add(
            label,
            Constraint::Pow {
                x: x.into(),
                y: y.into(),
                z: z.into(),
                alpha,
            },
        );
    }

    /// Symmetric `dim × dim` matrix with entries `entry(i, j)`, `i ≤ j`, is PSD.
    pub fn psd(&mut self, label: impl Into<String>, dim: usize, mut entry: impl FnMut(usize, usize) -> Affine) {
        let mut upper = Vec::with_capacity(triangle_len(dim));
        for j in 0..dim {
            for i in 0..=j {
                upper.push(entry(i, j));
            }
        }
        self.add(label, Constraint::Psd { dim, upper });
    }

    /// Copy another program's variables and constraints into this one and add
    /// its objective; returns the index offset of its variables.
    pub fn append(&mut self, other: &ConicProgram) -> usize {
        let offset = self.num_vars();
        let shift = |e: &Affine| Affine {
            terms: e.terms.iter().map(|&(i, c)| (i + offset, c)).collect(),
            constant: e.constant,
        };
        self.variables.extend(other.variables.iter().cloned());
        self.objective += shift(&other.objective);
        for c in &other.constraints {
            let constraint = match &c.constraint {
                Constraint::Zero(e) => Constraint::Zero(shift(e)),
                Constraint::NonNeg(e) => Constraint::NonNeg(shift(e)),
                Constraint::Soc { t, x } => Constraint::Soc {
                    t: shift(t),
                    x: x.iter().map(shift).collect(),
                },
                Constraint::RotatedSoc { u, v, x } => Constraint::RotatedSoc {
                    u: shift(u),
                    v: shift(v),
                    x: x.iter().map(shift).collect(),
                },
                Constraint::Exp { x, y, z } => Constraint::Exp {
                    x: shift(x),
                    y: shift(y),
                    z: shift(z),
                },
                Constraint::Pow { x, y, z, alpha } => Constraint::Pow {
                    x: shift(x),
                    y: shift(y),
                    z: shift(z),
                    alpha: *alpha,
                },
                Constraint::Psd { dim, upper } => Constraint::Psd {
                    dim: *dim,
                    upper: upper.iter().map(shift).collect(),
                },
            };
            self.constraints.push(LabeledConstraint {
                label: c.label.clone(),
                constraint,
            });
        }
        offset
    }

    /// Every referenced variable is declared and cone shapes are consistent.
    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let bad_index = |e: &Affine| e.max_index().is_some_and(|i| i >= n);
        if bad_index(&self.objective) {
            return Err(Error::InvalidArgument("objective references undeclared variable".into()));
        }
        for c in &self.constraints {
            if c.constraint.exprs().into_iter().any(bad_index) {
                return Err(Error::InvalidArgument(format!(
                    "constraint '{}' references undeclared variable",
                    c.label
                )));
            }
            match &c.constraint {
                Constraint::Psd { dim, upper } if upper.len() != triangle_len(*dim) => {
                    return Err(Error::Dimension(format!(
                        "psd constraint '{}' has {} entries for dim {}",
                        c.label,
                        upper.len(),
                        dim
                    )));
                }
                Constraint::Pow { alpha, .. } if !(*alpha > 0.0 && *alpha < 1.0) => {
                    return Err(Error::InvalidArgument(format!(
                        "power cone '{}' exponent {alpha} outside (0,1)",
                        c.label
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Largest constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.constraint.violation(x))
            .fold(0.0, f64::max)
    }

    /// Label and violation of the worst constraint at `x`.
    pub fn worst_constraint(&self, x: &[f64]) -> Option<(&str, f64)> {
        self.constraints
            .iter()
            .map(|c| (c.label.as_str(), c.constraint.violation(x)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let prog: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        prog.check()?;
        Ok(prog)
    }

    fn fmt_affine(&self, e: &Affine, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(i, c) in &e.compressed().terms {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            write!(f, "{}{}{} {}", if first { "" } else { " " }, sign, fmt_coeff(c.abs()), self.variables[i])?;
            first = false;
        }
        if e.constant != 0.0 || first {
            let sign = if e.constant < 0.0 { "-" } else if first { "" } else { "+" };
            write!(f, "{}{}{}", if first { "" } else { " " }, sign, e.constant.abs())?;
        }
        Ok(())
    }
}

fn fmt_coeff(c: f64) -> String {
    if c == 1.0 {
        String::new()
    } else {
        format!("{c}")
    }
}

impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variables: {}", self.variables.len())?;
        write!(f, "minimize ")?;
        self.fmt_affine(&self.objective, f)?;
        writeln!(f)?;
        for c in &self.constraints {
            write!(f, "  [{}] {} (", c.label, c.constraint.kind())?;
            for (i, e) in c.constraint.exprs().into_iter().enumerate() {
                if i > 0 {
                    write!(f, "; ")?;
                }
                self.fmt_affine(e, f)?;
            }
            match &c.constraint {
                Constraint::Pow { alpha, .. } => writeln!(f, ") alpha={alpha}")?,
                Constraint::Psd { dim, .. } => writeln!(f, ") dim={dim}")?,
                _ => writeln!(f, ")")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Inaccurate,
    Infeasible,
    Unbounded,
    Failed,
}

impl Status {
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::Inaccurate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub time_limit: f64,
    pub verbose: bool,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            time_limit: f64::INFINITY,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConicSolution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
    pub solve_time: f64,
    pub iterations: u32,
    pub message: Option<String>,
}

impl ConicSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn eval(&self, e: &Affine) -> f64 {
        e.eval(&self.values)
    }

    /// The solution when one is available, otherwise an error naming the program.
    pub fn require(self, what: &str) -> Result<Self> {
        match self.status {
            Status::Optimal | Status::Inaccurate => Ok(self),
            Status::Infeasible => Err(Error::Infeasible(format!("{what}: program infeasible"))),
            Status::Unbounded => Err(Error::Solver(format!("{what}: program unbounded"))),
            Status::Failed => Err(Error::Solver(format!(
                "{what}: {}",
                self.message.as_deref().unwrap_or("backend failure")
            ))),
        }
    }
}
