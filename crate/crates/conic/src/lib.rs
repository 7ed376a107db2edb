//! Dense interior-point solver for small semidefinite programs over
//! Hermitian matrix variables.
//!
//! ```
//! use isac_conic::{solve, ConicProblem, LinearExpr, Relation, SolverSettings};
//! use nalgebra::DMatrix;
//! use num_complex::Complex64;
//!
//! let mut p = ConicProblem::new();
//! let x = p.add_matrix_var("X", 1);
//! let one = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
//! p.minimize(LinearExpr::new().matrix(x, one.clone()));
//! p.add_constraint("lower", LinearExpr::new().matrix(x, one), Relation::Ge, 1.0);
//! let sol = solve(&p, &SolverSettings::default()).unwrap();
//! assert!((sol.matrix(x)[(0, 0)].re - 1.0).abs() < 1e-7);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod dump;
mod embed;
mod error;
mod ipm;
mod problem;
mod rank;
mod solution;

pub use dump::{parse_problem, write_problem};
pub use error::ConicError;
pub use ipm::SolverSettings;
pub use problem::{
    herm_inner, hermitian_eigenvalues, is_hermitian, ConicProblem, FeasibilityAudit, LinearConstraint,
    LinearExpr, LmiConstraint, MatrixVar, MatrixVarId, Relation, ScalarVarId,
};
pub use rank::extract_rank_profile;
pub use solution::{CertificateCheck, ConicSolution, InfeasibilityCertificate, Status};

use embed::{recover_hermitian, RowOrigin, StandardForm};
use ipm::IpmStatus;
use nalgebra::DMatrix;

/// Solves `problem`. Input errors are reported as `Err`; solver outcomes
/// (including infeasibility and numerical failure) are reported through
/// [`ConicSolution::status`].
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution, ConicError> {
    problem.validate()?;
    if !(settings.tolerance > 0.0 && settings.tolerance <= 1e-2) {
        return Err(ConicError::NonFinite(format!(
            "tolerance {} outside (0, 1e-2]",
            settings.tolerance
        )));
    }
    if problem.matrix_vars.is_empty() && problem.scalar_vars.is_empty() {
        return Err(ConicError::Empty);
    }
    let sf = StandardForm::build(problem);
    let res = ipm::run(&sf, settings);

    let matrices: Vec<_> = (0..sf.n_user_matrices)
        .map(|j| recover_hermitian(&res.x.b[j]))
        .collect();
    let scalars: Vec<f64> = res.xf.iter().copied().collect();

    let mut constraint_duals = vec![0.0; problem.constraints.len()];
    for (row, origin) in sf.row_origin.iter().enumerate() {
        if let RowOrigin::Constraint(ci) = origin {
            constraint_duals[*ci] = res.y[row] * sf.row_scale[row];
        }
    }
    let lmi_duals: Vec<DMatrix<f64>> = (0..problem.lmis.len())
        .map(|li| res.z.b[sf.n_user_matrices + li].clone())
        .collect();

    let status = match res.status {
        IpmStatus::Optimal => Status::Optimal,
        IpmStatus::PrimalInfeasible => Status::Infeasible,
        IpmStatus::DualInfeasible => Status::Unbounded,
        IpmStatus::Failed => Status::NumericalFailure,
    };
    let certificate = (status == Status::Infeasible).then(|| InfeasibilityCertificate {
        constraint_multipliers: constraint_duals.clone(),
        lmi_multipliers: lmi_duals.clone(),
    });
    let objective = if status == Status::Unbounded {
        f64::NEG_INFINITY
    } else {
        problem.objective.eval(&matrices, &scalars)
    };
    Ok(ConicSolution {
        status,
        matrices,
        scalars,
        constraint_duals,
        lmi_duals,
        objective,
        dual_objective: res.dobj + sf.c_const,
        primal_residual: res.pres,
        dual_residual: res.dres,
        duality_gap: res.gap,
        iterations: res.iterations,
        certificate,
    })
}
