//! User-facing problem description.
//!
//! A [`ConicProblem`] has Hermitian PSD matrix variables, free real scalar
//! variables, a real-linear objective, real-linear constraints and linear
//! matrix inequalities (LMIs) whose entries are affine in the variables.
//! The value of a Hermitian coefficient `A` against a matrix variable `X` is
//! `Re tr(Aᴴ X)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::ConicError;

/// Handle to a Hermitian PSD matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixVarId(pub usize);

/// Handle to a free real scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalarVarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub dim: usize,
}

/// Affine real functional of the problem variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub matrix_terms: Vec<(MatrixVarId, DMatrix<Complex64>)>,
    pub scalar_terms: Vec<(ScalarVarId, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            ..Self::default()
        }
    }

    pub fn matrix(mut self, var: MatrixVarId, coef: DMatrix<Complex64>) -> Self {
        self.matrix_terms.push((var, coef));
        self
    }

    pub fn scalar(mut self, var: ScalarVarId, coef: f64) -> Self {
        self.scalar_terms.push((var, coef));
        self
    }

    pub fn plus_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    /// Evaluates the functional at the given assignment.
    pub fn eval(&self, matrices: &[DMatrix<Complex64>], scalars: &[f64]) -> f64 {
        let mut acc = self.constant;
        for (id, coef) in &self.matrix_terms {
            acc += herm_inner(coef, &matrices[id.0]);
        }
        for (id, c) in &self.scalar_terms {
            acc += c * scalars[id.0];
        }
        acc
    }

    /// Sum of absolute values of the individual term contributions.
    pub fn magnitude(&self, matrices: &[DMatrix<Complex64>], scalars: &[f64]) -> f64 {
        let mut acc = self.constant.abs();
        for (id, coef) in &self.matrix_terms {
            acc += herm_inner(coef, &matrices[id.0]).abs();
        }
        for (id, c) in &self.scalar_terms {
            acc += (c * scalars[id.0]).abs();
        }
        acc
    }

    fn validate(&self, problem: &ConicProblem, ctx: &str) -> Result<(), ConicError> {
        if !self.constant.is_finite() {
            return Err(ConicError::NonFinite(ctx.to_string()));
        }
        for (id, coef) in &self.matrix_terms {
            let var = problem
                .matrix_vars
                .get(id.0)
                .ok_or_else(|| ConicError::UnknownVariable(format!("{ctx}: matrix #{}", id.0)))?;
            if coef.nrows() != var.dim || coef.ncols() != var.dim {
                return Err(ConicError::DimensionMismatch(format!(
                    "{ctx}: coefficient {}x{} against variable `{}` of dimension {}",
                    coef.nrows(),
                    coef.ncols(),
                    var.name,
                    var.dim
                )));
            }
            if coef.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(ConicError::NonFinite(ctx.to_string()));
            }
            if !is_hermitian(coef, 1e-10) {
                return Err(ConicError::NonHermitian(format!("{ctx}: variable `{}`", var.name)));
            }
        }
        for (id, c) in &self.scalar_terms {
            if id.0 >= problem.scalar_vars.len() {
                return Err(ConicError::UnknownVariable(format!("{ctx}: scalar #{}", id.0)));
            }
            if !c.is_finite() {
                return Err(ConicError::NonFinite(ctx.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "eq",
            Relation::Le => "le",
            Relation::Ge => "ge",
        }
    }
}

/// `expr (relation) rhs`. The constant of `expr` is moved to the right-hand
/// side when the problem is solved.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub expr: LinearExpr,
    pub relation: Relation,
    pub rhs: f64,
}

/// `F(v) ⪰ 0` for a real symmetric `dim × dim` matrix with affine entries.
/// `entries` holds the upper triangle row by row: `(0,0), (0,1), …, (1,1), …`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub name: String,
    pub dim: usize,
    pub entries: Vec<LinearExpr>,
}

impl LmiConstraint {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            entries: vec![LinearExpr::new(); dim * (dim + 1) / 2],
        }
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        r * self.dim - r * (r + 1) / 2 + c
    }

    pub fn set(&mut self, row: usize, col: usize, expr: LinearExpr) {
        let i = self.index(row, col);
        self.entries[i] = expr;
    }

    pub fn entry(&self, row: usize, col: usize) -> &LinearExpr {
        &self.entries[self.index(row, col)]
    }

    /// Evaluates `F(v)` as a dense symmetric matrix.
    pub fn eval(&self, matrices: &[DMatrix<Complex64>], scalars: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.entry(r, c).eval(matrices, scalars))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub matrix_vars: Vec<MatrixVar>,
    pub scalar_vars: Vec<String>,
    pub objective: LinearExpr,
    pub constraints: Vec<LinearConstraint>,
    pub lmis: Vec<LmiConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_matrix_var(&mut self, name: impl Into<String>, dim: usize) -> MatrixVarId {
        self.matrix_vars.push(MatrixVar {
            name: name.into(),
            dim,
        });
        MatrixVarId(self.matrix_vars.len() - 1)
    }

    pub fn add_scalar_var(&mut self, name: impl Into<String>) -> ScalarVarId {
        self.scalar_vars.push(name.into());
        ScalarVarId(self.scalar_vars.len() - 1)
    }

    pub fn minimize(&mut self, objective: LinearExpr) {
        self.objective = objective;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinearExpr,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(LinearConstraint {
            name: name.into(),
            expr,
            relation,
            rhs,
        });
    }

    pub fn add_lmi(&mut self, lmi: LmiConstraint) {
        self.lmis.push(lmi);
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        for v in &self.matrix_vars {
            if v.dim == 0 {
                return Err(ConicError::DimensionMismatch(format!(
                    "matrix variable `{}` has dimension 0",
                    v.name
                )));
            }
        }
        self.objective.validate(self, "objective")?;
        for c in &self.constraints {
            c.expr.validate(self, &c.name)?;
            if !c.rhs.is_finite() {
                return Err(ConicError::NonFinite(c.name.clone()));
            }
        }
        for l in &self.lmis {
            if l.dim == 0 || l.entries.len() != l.dim * (l.dim + 1) / 2 {
                return Err(ConicError::DimensionMismatch(format!(
                    "lmi `{}` has {} entries for dimension {}",
                    l.name,
                    l.entries.len(),
                    l.dim
                )));
            }
            for e in &l.entries {
                e.validate(self, &l.name)?;
            }
        }
        Ok(())
    }

    /// Re-evaluates every constraint at the given point. Returns the worst
    /// scaled violation over linear constraints, LMIs and the PSD
    /// requirement on the matrix variables.
    pub fn audit(&self, matrices: &[DMatrix<Complex64>], scalars: &[f64]) -> FeasibilityAudit {
        let mut audit = FeasibilityAudit::default();
        for c in &self.constraints {
            let lhs = c.expr.eval(matrices, scalars);
            let scale = 1.0 + c.expr.magnitude(matrices, scalars).max(c.rhs.abs());
            let viol = match c.relation {
                Relation::Eq => (lhs - c.rhs).abs(),
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
            };
            audit.linear = audit.linear.max(viol / scale);
        }
        for l in &self.lmis {
            let f = l.eval(matrices, scalars);
            let min = nalgebra::SymmetricEigen::new(f.clone())
                .eigenvalues
                .min();
            let scale = 1.0 + f.norm();
            audit.lmi = audit.lmi.max((-min).max(0.0) / scale);
        }
        for x in matrices {
            let min = hermitian_eigenvalues(x).iter().cloned().fold(f64::INFINITY, f64::min);
            let scale = 1.0 + x.norm();
            audit.psd = audit.psd.max((-min).max(0.0) / scale);
        }
        audit
    }
}

/// Worst scaled violations found by [`ConicProblem::audit`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub linear: f64,
    pub lmi: f64,
    pub psd: f64,
}

impl FeasibilityAudit {
    pub fn worst(&self) -> f64 {
        self.linear.max(self.lmi).max(self.psd)
    }
}

/// `Re tr(Aᴴ X)`.
pub fn herm_inner(a: &DMatrix<Complex64>, x: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(x.iter()).map(|(a, x)| a.re * x.re + a.im * x.im).sum()
}

pub fn is_hermitian(a: &DMatrix<Complex64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = 1.0 + a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(x: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(x.clone())
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}
