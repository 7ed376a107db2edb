use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::problem::{hermitian_eigenvalues, ConicProblem, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Primal infeasible; a certificate is attached.
    Infeasible,
    /// Dual infeasible: the objective is unbounded below along a recession ray.
    Unbounded,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: Status,
    pub matrices: Vec<DMatrix<Complex64>>,
    pub scalars: Vec<f64>,
    /// Multipliers of the linear constraints, in user scaling. Nonnegative
    /// for `≥`, nonpositive for `≤`.
    pub constraint_duals: Vec<f64>,
    /// PSD multiplier of every LMI.
    pub lmi_duals: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Complementarity divided by `1 + |objective|`.
    pub duality_gap: f64,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl ConicSolution {
    pub fn matrix(&self, id: crate::MatrixVarId) -> &DMatrix<Complex64> {
        &self.matrices[id.0]
    }

    pub fn scalar(&self, id: crate::ScalarVarId) -> f64 {
        self.scalars[id.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Farkas certificate of primal infeasibility: multipliers such that the
/// combined functional is nonpositive on the cone while its right-hand side
/// is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub constraint_multipliers: Vec<f64>,
    pub lmi_multipliers: Vec<DMatrix<f64>>,
}

/// Outcome of re-checking a certificate against the user problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    /// `Σ yᵢ(rhsᵢ - constᵢ) - Σ ⟨Yⱼ, Fⱼ(0)⟩`; positive for a valid certificate.
    pub margin: f64,
    /// Worst sign, PSD or stationarity violation divided by `margin`.
    pub violation: f64,
}

impl CertificateCheck {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.margin > 0.0 && self.violation <= tol
    }
}

impl InfeasibilityCertificate {
    /// Verifies the certificate from scratch against `problem`.
    pub fn check(&self, problem: &ConicProblem) -> CertificateCheck {
        let mut worst: f64 = 0.0;
        let mut margin = 0.0;
        let mut mat_coef: Vec<DMatrix<Complex64>> = problem
            .matrix_vars
            .iter()
            .map(|v| DMatrix::zeros(v.dim, v.dim))
            .collect();
        let mut scal_coef = vec![0.0; problem.scalar_vars.len()];

        let accumulate = |y: f64,
                              expr: &crate::LinearExpr,
                              mat_coef: &mut Vec<DMatrix<Complex64>>,
                              scal_coef: &mut Vec<f64>| {
            for (id, a) in &expr.matrix_terms {
                mat_coef[id.0] += a * Complex64::new(y, 0.0);
            }
            for (id, c) in &expr.scalar_terms {
                scal_coef[id.0] += y * c;
            }
        };

        for (c, &y) in problem.constraints.iter().zip(&self.constraint_multipliers) {
            let sign_viol = match c.relation {
                Relation::Eq => 0.0,
                Relation::Ge => (-y).max(0.0),
                Relation::Le => y.max(0.0),
            };
            worst = worst.max(sign_viol);
            margin += y * (c.rhs - c.expr.constant);
            accumulate(y, &c.expr, &mut mat_coef, &mut scal_coef);
        }
        for (l, yl) in problem.lmis.iter().zip(&self.lmi_multipliers) {
            let min = yl.clone().symmetric_eigenvalues().min();
            worst = worst.max((-min).max(0.0));
            for r in 0..l.dim {
                for c in r..l.dim {
                    let w = if r == c { yl[(r, c)] } else { 2.0 * yl[(r, c)] };
                    let e = l.entry(r, c);
                    margin -= w * e.constant;
                    accumulate(w, e, &mut mat_coef, &mut scal_coef);
                }
            }
        }
        for g in &mat_coef {
            let g = (g + g.adjoint()) * Complex64::new(0.5, 0.0);
            let max = hermitian_eigenvalues(&g).last().copied().unwrap_or(0.0);
            worst = worst.max(max.max(0.0));
        }
        for g in &scal_coef {
            worst = worst.max(g.abs());
        }
        CertificateCheck {
            margin,
            violation: if margin > 0.0 { worst / margin } else { f64::INFINITY },
        }
    }
}
