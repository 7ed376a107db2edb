//! Translation of a [`ConicProblem`] into the real standard form
//! `min c'x  s.t.  A x = b,  x = (x_psd, x_nonneg, x_free)`.
//!
//! A Hermitian `n × n` variable `X` is represented by a real symmetric
//! `2n × 2n` block `S`. The coefficient of a Hermitian `A` is `emb(A)/2` with
//! `emb(A) = [[Re A, -Im A], [Im A, Re A]]`, and `X` is recovered as
//! `(S11 + S22)/2 + i (S21 - S12)/2`, which is PSD whenever `S` is.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::problem::{ConicProblem, Relation};

/// Symmetric coefficient of one row against one PSD block.
#[derive(Debug, Clone)]
pub(crate) enum SymCoef {
    /// Entries `(r, c, v)`; both triangles are stored.
    Sparse(Vec<(usize, usize, f64)>),
    /// `Σ s_k u_k u_kᵀ`.
    LowRank(Vec<(f64, DVector<f64>)>),
    Dense(DMatrix<f64>),
}

impl SymCoef {
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SymCoef::Sparse(e) => e.iter().map(|&(r, c, v)| v * x[(r, c)]).sum(),
            SymCoef::LowRank(terms) => terms.iter().map(|(s, u)| s * quad(x, u)).sum(),
            SymCoef::Dense(a) => a.dot(x),
        }
    }

    pub fn add_scaled_to(&self, alpha: f64, out: &mut DMatrix<f64>) {
        match self {
            SymCoef::Sparse(e) => {
                for &(r, c, v) in e {
                    out[(r, c)] += alpha * v;
                }
            }
            SymCoef::LowRank(terms) => {
                for (s, u) in terms {
                    out.ger(alpha * s, u, u, 1.0);
                }
            }
            SymCoef::Dense(a) => *out += a * alpha,
        }
    }

    /// `Q A Q` for symmetric `Q`.
    pub fn congruence(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = q.nrows();
        match self {
            SymCoef::Sparse(e) => {
                let mut out = DMatrix::zeros(n, n);
                for &(r, c, v) in e {
                    out.ger(v, &q.column(r), &q.column(c), 1.0);
                }
                out
            }
            SymCoef::LowRank(terms) => {
                let mut out = DMatrix::zeros(n, n);
                for (s, u) in terms {
                    let qu = q * u;
                    out.ger(*s, &qu, &qu, 1.0);
                }
                out
            }
            SymCoef::Dense(a) => q * a * q,
        }
    }

    pub fn norm_sq(&self, n: usize) -> f64 {
        let mut d = DMatrix::zeros(n, n);
        self.add_scaled_to(1.0, &mut d);
        d.norm_squared()
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            SymCoef::Sparse(e) => e.iter_mut().for_each(|t| t.2 *= s),
            SymCoef::LowRank(terms) => terms.iter_mut().for_each(|t| t.0 *= s),
            SymCoef::Dense(a) => *a *= s,
        }
    }
}

fn quad(x: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(x * u))
}

/// Which user object a standard-form row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowOrigin {
    Constraint(usize),
    LmiEntry { lmi: usize, row: usize, col: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub block_dims: Vec<usize>,
    pub n_lin: usize,
    pub n_free: usize,
    pub m: usize,
    /// For each PSD block the rows touching it.
    pub block_rows: Vec<Vec<(usize, SymCoef)>>,
    pub lin_cols: Vec<Vec<(usize, f64)>>,
    pub free_cols: Vec<Vec<(usize, f64)>>,
    pub b: DVector<f64>,
    pub c_blocks: Vec<DMatrix<f64>>,
    pub c_lin: DVector<f64>,
    pub c_free: DVector<f64>,
    pub c_const: f64,
    pub row_scale: Vec<f64>,
    pub row_origin: Vec<RowOrigin>,
    pub n_user_matrices: usize,
}

/// `emb(A)/2` as a dense real matrix.
fn embed_half(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = a[(r % n, c % n)];
        let v = match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        };
        0.5 * v
    })
}

/// Picks a storage form for the embedded coefficient of a Hermitian `a`.
fn classify(a: &DMatrix<Complex64>) -> SymCoef {
    let n = a.nrows();
    let amax = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if amax == 0.0 {
        return SymCoef::Sparse(Vec::new());
    }
    let nnz = a.iter().filter(|z| z.norm() > 0.0).count();
    if nnz <= n {
        let dense = embed_half(a);
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i % (2 * n), i / (2 * n), *v))
            .collect();
        return SymCoef::Sparse(entries);
    }
    if n >= 4 {
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        let lmax = eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
        let keep: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i].abs() > 1e-13 * lmax)
            .collect();
        if keep.len() <= n / 4 {
            let mut terms = Vec::with_capacity(2 * keep.len());
            for &i in &keep {
                let v = eig.eigenvectors.column(i);
                let lam = eig.eigenvalues[i];
                let u1 = DVector::from_fn(2 * n, |r, _| if r < n { v[r].re } else { v[r - n].im });
                let u2 = DVector::from_fn(2 * n, |r, _| if r < n { -v[r].im } else { v[r - n].re });
                terms.push((0.5 * lam, u1));
                terms.push((0.5 * lam, u2));
            }
            let lr = SymCoef::LowRank(terms);
            let mut rebuilt = DMatrix::zeros(2 * n, 2 * n);
            lr.add_scaled_to(1.0, &mut rebuilt);
            let exact = embed_half(a);
            if (&rebuilt - &exact).norm() <= 1e-12 * (1.0 + exact.norm()) {
                return lr;
            }
            return SymCoef::Dense(exact);
        }
    }
    SymCoef::Dense(embed_half(a))
}

impl StandardForm {
    pub fn build(p: &ConicProblem) -> Self {
        let n_user = p.matrix_vars.len();
        let mut block_dims: Vec<usize> = p.matrix_vars.iter().map(|v| 2 * v.dim).collect();
        for l in &p.lmis {
            block_dims.push(l.dim);
        }
        let n_blocks = block_dims.len();
        let n_free = p.scalar_vars.len();

        let mut block_rows: Vec<Vec<(usize, SymCoef)>> = vec![Vec::new(); n_blocks];
        let mut lin_cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut free_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_free];
        let mut b = Vec::new();
        let mut row_origin = Vec::new();

        let push_expr = |row: usize,
                             expr: &crate::problem::LinearExpr,
                             block_rows: &mut Vec<Vec<(usize, SymCoef)>>,
                             free_cols: &mut Vec<Vec<(usize, f64)>>| {
            let mut per_var: Vec<Option<DMatrix<Complex64>>> = vec![None; n_user];
            for (id, coef) in &expr.matrix_terms {
                match &mut per_var[id.0] {
                    Some(acc) => *acc += coef,
                    slot => *slot = Some(coef.clone()),
                }
            }
            for (j, acc) in per_var.into_iter().enumerate() {
                if let Some(mut a) = acc {
                    a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
                    let coef = classify(&a);
                    if !matches!(&coef, SymCoef::Sparse(e) if e.is_empty()) {
                        block_rows[j].push((row, coef));
                    }
                }
            }
            let mut scal = vec![0.0; n_free];
            for (id, c) in &expr.scalar_terms {
                scal[id.0] += c;
            }
            for (j, c) in scal.into_iter().enumerate() {
                if c != 0.0 {
                    free_cols[j].push((row, c));
                }
            }
        };

        for (ci, c) in p.constraints.iter().enumerate() {
            let row = b.len();
            push_expr(row, &c.expr, &mut block_rows, &mut free_cols);
            let sign = match c.relation {
                Relation::Eq => 0.0,
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
            };
            if sign != 0.0 {
                lin_cols.push(vec![(row, sign)]);
            }
            b.push(c.rhs - c.expr.constant);
            row_origin.push(RowOrigin::Constraint(ci));
        }
        for (li, l) in p.lmis.iter().enumerate() {
            let blk = n_user + li;
            for r in 0..l.dim {
                for c in r..l.dim {
                    let row = b.len();
                    let e = l.entry(r, c);
                    push_expr(row, e, &mut block_rows, &mut free_cols);
                    let slack = if r == c {
                        vec![(r, r, -1.0)]
                    } else {
                        vec![(r, c, -0.5), (c, r, -0.5)]
                    };
                    block_rows[blk].push((row, SymCoef::Sparse(slack)));
                    b.push(-e.constant);
                    row_origin.push(RowOrigin::LmiEntry { lmi: li, row: r, col: c });
                }
            }
        }
        let m = b.len();

        // Unit-norm rows.
        let mut norm_sq = vec![0.0; m];
        for (bi, rows) in block_rows.iter().enumerate() {
            for (r, coef) in rows {
                norm_sq[*r] += coef.norm_sq(block_dims[bi]);
            }
        }
        for col in lin_cols.iter().chain(free_cols.iter()) {
            for (r, v) in col {
                norm_sq[*r] += v * v;
            }
        }
        let row_scale: Vec<f64> = norm_sq
            .iter()
            .map(|s| if *s > 0.0 { 1.0 / s.sqrt() } else { 1.0 })
            .collect();
        for rows in block_rows.iter_mut() {
            for (r, coef) in rows.iter_mut() {
                coef.scale(row_scale[*r]);
            }
        }
        for col in lin_cols.iter_mut().chain(free_cols.iter_mut()) {
            for (r, v) in col.iter_mut() {
                *v *= row_scale[*r];
            }
        }
        let b = DVector::from_fn(m, |i, _| b[i] * row_scale[i]);

        let mut c_blocks: Vec<DMatrix<f64>> =
            block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (id, coef) in &p.objective.matrix_terms {
            let a = (coef + coef.adjoint()) * Complex64::new(0.5, 0.0);
            c_blocks[id.0] += embed_half(&a);
        }
        let mut c_free = DVector::zeros(n_free);
        for (id, c) in &p.objective.scalar_terms {
            c_free[id.0] += c;
        }
        let n_lin = lin_cols.len();

        StandardForm {
            block_dims,
            n_lin,
            n_free,
            m,
            block_rows,
            lin_cols,
            free_cols,
            b,
            c_blocks,
            c_lin: DVector::zeros(n_lin),
            c_free,
            c_const: p.objective.constant,
            row_scale,
            row_origin,
            n_user_matrices: n_user,
        }
    }

    /// Barrier degree of the cone.
    pub fn degree(&self) -> usize {
        self.block_dims.iter().sum::<usize>() + self.n_lin
    }
}

/// Hermitian matrix represented by a real symmetric embedding block.
pub(crate) fn recover_hermitian(s: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = s.nrows() / 2;
    let x = DMatrix::from_fn(n, n, |r, c| {
        Complex64::new(
            0.5 * (s[(r, c)] + s[(r + n, c + n)]),
            0.5 * (s[(r + n, c)] - s[(r, c + n)]),
        )
    });
    (&x + x.adjoint()) * Complex64::new(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_herm(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn embedding_preserves_inner_product() {
        let a = rand_herm(5, 1);
        let x = rand_herm(5, 2);
        let s = embed_half(&x) * 2.0;
        let lhs = crate::problem::herm_inner(&a, &x);
        let rhs = embed_half(&a).dot(&s);
        assert!((lhs - rhs).abs() < 1e-12);
        let back = recover_hermitian(&s);
        assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn rank_one_coefficient_is_low_rank() {
        let v = DMatrix::from_fn(8, 1, |r, _| Complex64::new(r as f64, 1.0 - r as f64));
        let a = &v * v.adjoint();
        let coef = classify(&a);
        assert!(matches!(coef, SymCoef::LowRank(ref t) if t.len() == 2));
        let x = embed_half(&rand_herm(8, 3)) * 2.0;
        assert!((coef.inner(&x) - embed_half(&a).dot(&x)).abs() < 1e-9);
    }

    #[test]
    fn congruence_forms_agree() {
        let q = {
            let h = embed_half(&rand_herm(4, 7));
            &h * &h + DMatrix::identity(8, 8)
        };
        let a = rand_herm(4, 9);
        let dense = SymCoef::Dense(embed_half(&a));
        let mut ident = DMatrix::<Complex64>::identity(4, 4);
        ident[(0, 0)] = Complex64::new(2.0, 0.0);
        let sparse = classify(&ident);
        assert!(matches!(sparse, SymCoef::Sparse(_)));
        let expect_dense = &q * embed_half(&a) * &q;
        let expect_sparse = &q * embed_half(&ident) * &q;
        assert!((dense.congruence(&q) - expect_dense).norm() < 1e-12);
        assert!((sparse.congruence(&q) - expect_sparse).norm() < 1e-12);
    }
}
