//! Independent reference for random Hermitian SDPs: a dual alternating
//! direction augmented Lagrangian method working directly on complex
//! block-diagonal matrices. Shares no code with the interior-point solver.

#![allow(dead_code)]

use isac_conic::{ConicProblem, LinearExpr, MatrixVarId, Relation};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type CMat = DMatrix<Complex64>;

/// `min Σ ⟨C_j, X_j⟩  s.t.  Σ ⟨A_ij, X_j⟩ (=|≤) b_i,  X_j ⪰ 0`.
#[derive(Debug, Clone)]
pub struct RandomSdp {
    pub dims: Vec<usize>,
    pub c: Vec<CMat>,
    /// `a[i][j]` is the coefficient of row `i` on block `j`.
    pub a: Vec<Vec<CMat>>,
    pub b: Vec<f64>,
    pub is_ineq: Vec<bool>,
}

fn rand_herm(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

fn rand_pd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    &g * g.adjoint() / Complex64::new(n as f64, 0.0) + CMat::identity(n, n) * Complex64::new(0.1, 0.0)
}

fn inner(a: &CMat, x: &CMat) -> f64 {
    a.iter().zip(x.iter()).map(|(a, x)| a.re * x.re + a.im * x.im).sum()
}

/// A strictly primal and dual feasible instance with `n ≤ 6`.
pub fn random_sdp(rng: &mut ChaCha8Rng) -> RandomSdp {
    let nblocks = rng.random_range(1..=2);
    let dims: Vec<usize> = (0..nblocks).map(|_| rng.random_range(1..=6)).collect();
    let total: usize = dims.iter().map(|n| n * n).sum();
    let m = rng.random_range(1..=total.min(8));
    let x0: Vec<CMat> = dims.iter().map(|&n| rand_pd(rng, n)).collect();
    let z0: Vec<CMat> = dims.iter().map(|&n| rand_pd(rng, n)).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut is_ineq = Vec::new();
    let mut y0 = Vec::new();
    for _ in 0..m {
        let row: Vec<CMat> = dims.iter().map(|&n| rand_herm(rng, n)).collect();
        let ineq = rng.random_bool(0.4);
        let mut val: f64 = row.iter().zip(&x0).map(|(a, x)| inner(a, x)).sum();
        let y: f64 = rng.sample(StandardNormal);
        if ineq {
            val += rng.random_range(0.1..1.0);
            y0.push(-y.abs() - 0.1);
        } else {
            y0.push(y);
        }
        a.push(row);
        b.push(val);
        is_ineq.push(ineq);
    }
    let c: Vec<CMat> = (0..nblocks)
        .map(|j| {
            let mut cj = z0[j].clone();
            for i in 0..m {
                cj += &a[i][j] * Complex64::new(y0[i], 0.0);
            }
            cj
        })
        .collect();
    RandomSdp { dims, c, a, b, is_ineq }
}

impl RandomSdp {
    pub fn to_problem(&self) -> (ConicProblem, Vec<MatrixVarId>) {
        let mut p = ConicProblem::new();
        let ids: Vec<MatrixVarId> = self
            .dims
            .iter()
            .enumerate()
            .map(|(j, &n)| p.add_matrix_var(format!("X{j}"), n))
            .collect();
        let mut obj = LinearExpr::new();
        for (j, c) in self.c.iter().enumerate() {
            obj = obj.matrix(ids[j], c.clone());
        }
        p.minimize(obj);
        for (i, row) in self.a.iter().enumerate() {
            let mut e = LinearExpr::new();
            for (j, a) in row.iter().enumerate() {
                e = e.matrix(ids[j], a.clone());
            }
            let rel = if self.is_ineq[i] { Relation::Le } else { Relation::Eq };
            p.add_constraint(format!("c{i}"), e, rel, self.b[i]);
        }
        (p, ids)
    }

    /// Objective value found by the reference method.
    pub fn reference_objective(&self) -> f64 {
        admm(self)
    }
}

fn psd_split(v: &CMat) -> (CMat, CMat) {
    let eig = nalgebra::SymmetricEigen::new(v.clone());
    let n = v.nrows();
    let mut pos = CMat::zeros(n, n);
    let mut neg = CMat::zeros(n, n);
    for i in 0..n {
        let u = eig.eigenvectors.column(i);
        let l = eig.eigenvalues[i];
        let outer = u * u.adjoint();
        if l > 0.0 {
            pos += outer * Complex64::new(l, 0.0);
        } else {
            neg += outer * Complex64::new(-l, 0.0);
        }
    }
    (pos, neg)
}

/// Slack variables for inequalities are appended as 1×1 blocks.
fn admm(p: &RandomSdp) -> f64 {
    let m = p.b.len();
    let mut dims = p.dims.clone();
    let mut c = p.c.clone();
    let mut a = p.a.clone();
    for i in 0..m {
        if p.is_ineq[i] {
            dims.push(1);
            c.push(CMat::zeros(1, 1));
            for (r, row) in a.iter_mut().enumerate() {
                let v = if r == i { 1.0 } else { 0.0 };
                row.push(CMat::from_element(1, 1, Complex64::new(v, 0.0)));
            }
        }
    }
    let nb = dims.len();
    let gram = DMatrix::from_fn(m, m, |i, k| (0..nb).map(|j| inner(&a[i][j], &a[k][j])).sum::<f64>());
    let gram_inv = gram.clone().try_inverse().expect("independent rows");
    let op = |x: &[CMat]| nalgebra::DVector::from_fn(m, |i, _| (0..nb).map(|j| inner(&a[i][j], &x[j])).sum::<f64>());
    let adj = |y: &nalgebra::DVector<f64>| -> Vec<CMat> {
        (0..nb)
            .map(|j| {
                let mut s = CMat::zeros(dims[j], dims[j]);
                for i in 0..m {
                    s += &a[i][j] * Complex64::new(y[i], 0.0);
                }
                s
            })
            .collect()
    };
    let b = nalgebra::DVector::from_column_slice(&p.b);
    let mut x: Vec<CMat> = dims.iter().map(|&n| CMat::zeros(n, n)).collect();
    let mut s: Vec<CMat> = dims.iter().map(|&n| CMat::zeros(n, n)).collect();
    let mut mu = 1.0;
    let cnorm: f64 = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let bnorm = b.norm();
    for it in 0..200_000 {
        let sc: Vec<CMat> = s.iter().zip(&c).map(|(s, c)| s - c).collect();
        let y = &gram_inv * ((&b - op(&x)) * mu - op(&sc));
        let aty = adj(&y);
        let mut xn = Vec::with_capacity(nb);
        let mut sn = Vec::with_capacity(nb);
        for j in 0..nb {
            let v = &c[j] - &aty[j] - &x[j] * Complex64::new(mu, 0.0);
            let (pos, neg) = psd_split(&v);
            sn.push(pos);
            xn.push(neg / Complex64::new(mu, 0.0));
        }
        x = xn;
        s = sn;
        if it % 50 == 0 {
            let pres = (op(&x) - &b).norm() / (1.0 + bnorm);
            let dres: f64 = (0..nb)
                .map(|j| (&aty[j] + &s[j] - &c[j]).norm_squared())
                .sum::<f64>()
                .sqrt()
                / (1.0 + cnorm);
            let pobj: f64 = (0..nb).map(|j| inner(&c[j], &x[j])).sum();
            let dobj = b.dot(&y);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if pres < 1e-10 && dres < 1e-10 && gap < 1e-10 {
                return pobj;
            }
            if it % 500 == 0 && pres > 10.0 * dres {
                mu = (mu / 2.0).max(1e-4);
            } else if it % 500 == 0 && dres > 10.0 * pres {
                mu = (mu * 2.0).min(1e4);
            }
        }
    }
    (0..nb).map(|j| inner(&c[j], &x[j])).sum()
}
