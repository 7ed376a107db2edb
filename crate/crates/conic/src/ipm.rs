//! Homogeneous self-dual primal-dual interior-point method with
//! Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//!
//! Works on the real standard form of [`crate::embed::StandardForm`]:
//! cone variables (PSD blocks and nonnegative scalars) plus free variables.

use nalgebra::{DMatrix, DVector};

use crate::embed::StandardForm;

const STEP: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

/// Element of the cone space: PSD blocks followed by nonnegative scalars.
#[derive(Debug, Clone)]
pub(crate) struct ConeVec {
    pub b: Vec<DMatrix<f64>>,
    pub l: DVector<f64>,
}

impl ConeVec {
    fn zeros(sf: &StandardForm) -> Self {
        Self {
            b: sf.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            l: DVector::zeros(sf.n_lin),
        }
    }

    fn identity(sf: &StandardForm) -> Self {
        Self {
            b: sf.block_dims.iter().map(|&n| DMatrix::identity(n, n)).collect(),
            l: DVector::from_element(sf.n_lin, 1.0),
        }
    }

    fn dot(&self, o: &ConeVec) -> f64 {
        self.b.iter().zip(&o.b).map(|(a, b)| a.dot(b)).sum::<f64>() + self.l.dot(&o.l)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, o: &ConeVec) {
        for (x, y) in self.b.iter_mut().zip(&o.b) {
            *x += y * a;
        }
        self.l.axpy(a, &o.l, 1.0);
    }

    fn scaled(&self, a: f64) -> ConeVec {
        ConeVec {
            b: self.b.iter().map(|x| x * a).collect(),
            l: &self.l * a,
        }
    }

    /// Smallest eigenvalue over all blocks and entries.
    fn min_eig(&self) -> f64 {
        let mut m = f64::INFINITY;
        for x in &self.b {
            m = m.min(x.clone().symmetric_eigenvalues().min());
        }
        for v in self.l.iter() {
            m = m.min(*v);
        }
        m
    }
}

/// NT scaling point: `x = R Λ Rᵀ`, `z = R⁻ᵀ Λ R⁻¹` per block and
/// `x = w λ`, `z = λ / w` per nonnegative scalar.
#[derive(Debug, Clone)]
struct Scaling {
    r: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    lam: Vec<DVector<f64>>,
    w: DVector<f64>,
    lam_l: DVector<f64>,
}

fn nt_block(
    s: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let l1 = s.clone().cholesky()?.l();
    let l2 = z.clone().cholesky()?.l();
    let svd = (l2.transpose() * &l1).svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let sig = svd.singular_values;
    if sig.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let mut r = l1 * vt.transpose();
    let mut rinv = u.transpose() * l2.transpose();
    for j in 0..sig.len() {
        let isq = 1.0 / sig[j].sqrt();
        r.column_mut(j).scale_mut(isq);
        rinv.row_mut(j).scale_mut(isq);
    }
    Some((r, rinv, sig))
}

impl Scaling {
    fn new(x: &ConeVec, z: &ConeVec) -> Option<Self> {
        let mut r = Vec::new();
        let mut rinv = Vec::new();
        let mut lam = Vec::new();
        for (xb, zb) in x.b.iter().zip(&z.b) {
            let (a, b, c) = nt_block(xb, zb)?;
            r.push(a);
            rinv.push(b);
            lam.push(c);
        }
        if x.l.iter().chain(z.l.iter()).any(|v| !(*v > 0.0)) {
            return None;
        }
        let w = x.l.zip_map(&z.l, |a, b| (a / b).sqrt());
        let lam_l = x.l.zip_map(&z.l, |a, b| (a * b).sqrt());
        Some(Self { r, rinv, lam, w, lam_l })
    }

    fn q(&self) -> Vec<DMatrix<f64>> {
        self.r.iter().map(|r| r * r.transpose()).collect()
    }

    fn lambda(&self) -> ConeVec {
        ConeVec {
            b: self.lam.iter().map(DMatrix::from_diagonal).collect(),
            l: self.lam_l.clone(),
        }
    }

    /// `R v Rᵀ`: scaled primal to unscaled.
    fn unscale_x(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            b: self.r.iter().zip(&v.b).map(|(r, v)| r * v * r.transpose()).collect(),
            l: self.w.component_mul(&v.l),
        }
    }

    /// `Rᵀ z R`: unscaled dual to scaled.
    fn scale_z(&self, z: &ConeVec) -> ConeVec {
        ConeVec {
            b: self.r.iter().zip(&z.b).map(|(r, z)| r.transpose() * z * r).collect(),
            l: self.w.component_mul(&z.l),
        }
    }

    /// `Q z Q` with `Q = R Rᵀ`.
    fn qzq(&self, q: &[DMatrix<f64>], z: &ConeVec) -> ConeVec {
        ConeVec {
            b: q.iter().zip(&z.b).map(|(q, z)| q * z * q).collect(),
            l: self.w.component_mul(&self.w).component_mul(&z.l),
        }
    }

    /// `λ \ u`: solves `λ ∘ v = u` for `v`.
    fn lam_div(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            b: self
                .lam
                .iter()
                .zip(&u.b)
                .map(|(l, u)| DMatrix::from_fn(l.len(), l.len(), |i, j| 2.0 * u[(i, j)] / (l[i] + l[j])))
                .collect(),
            l: u.l.component_div(&self.lam_l),
        }
    }

    /// Largest `α` keeping `λ + α d` in the cone.
    fn max_step(&self, d: &ConeVec) -> f64 {
        let mut worst: f64 = 0.0;
        for (l, d) in self.lam.iter().zip(&d.b) {
            let m = DMatrix::from_fn(l.len(), l.len(), |i, j| d[(i, j)] / (l[i] * l[j]).sqrt());
            worst = worst.min(m.symmetric_eigenvalues().min());
        }
        for (l, d) in self.lam_l.iter().zip(d.l.iter()) {
            worst = worst.min(d / l);
        }
        if worst < 0.0 {
            -1.0 / worst
        } else {
            f64::INFINITY
        }
    }

    /// Moves to `λ + α dx̃`, `λ + α dz̃` and refactors the scaling.
    fn step(&self, alpha: f64, dxt: &ConeVec, dzt: &ConeVec) -> Option<Self> {
        let mut next = self.clone();
        for i in 0..self.lam.len() {
            let lam = DMatrix::from_diagonal(&self.lam[i]);
            let xs = &lam + &dxt.b[i] * alpha;
            let zs = &lam + &dzt.b[i] * alpha;
            let (rt, rti, sig) = nt_block(&sym(&xs), &sym(&zs))?;
            next.r[i] = &self.r[i] * rt;
            next.rinv[i] = rti * &self.rinv[i];
            next.lam[i] = sig;
        }
        for j in 0..self.lam_l.len() {
            let xs = self.lam_l[j] + alpha * dxt.l[j];
            let zs = self.lam_l[j] + alpha * dzt.l[j];
            if !(xs > 0.0 && zs > 0.0) {
                return None;
            }
            next.w[j] = self.w[j] * (xs / zs).sqrt();
            next.lam_l[j] = (xs * zs).sqrt();
        }
        Some(next)
    }
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn jordan(u: &ConeVec, v: &ConeVec) -> ConeVec {
    ConeVec {
        b: u
            .b
            .iter()
            .zip(&v.b)
            .map(|(a, b)| {
                let p = a * b;
                (&p + p.transpose()) * 0.5
            })
            .collect(),
        l: u.l.component_mul(&v.l),
    }
}

/// Linear operators of the standard form.
struct Ops<'a> {
    sf: &'a StandardForm,
    af: DMatrix<f64>,
}

impl<'a> Ops<'a> {
    fn new(sf: &'a StandardForm) -> Self {
        let mut af = DMatrix::zeros(sf.m, sf.n_free);
        for (j, col) in sf.free_cols.iter().enumerate() {
            for &(r, v) in col {
                af[(r, j)] += v;
            }
        }
        Self { sf, af }
    }

    fn ac(&self, x: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.sf.m);
        for (bi, rows) in self.sf.block_rows.iter().enumerate() {
            for (r, coef) in rows {
                out[*r] += coef.inner(&x.b[bi]);
            }
        }
        for (j, col) in self.sf.lin_cols.iter().enumerate() {
            for &(r, v) in col {
                out[r] += v * x.l[j];
            }
        }
        out
    }

    fn act(&self, y: &DVector<f64>) -> ConeVec {
        let mut out = ConeVec::zeros(self.sf);
        for (bi, rows) in self.sf.block_rows.iter().enumerate() {
            for (r, coef) in rows {
                coef.add_scaled_to(y[*r], &mut out.b[bi]);
            }
        }
        for (j, col) in self.sf.lin_cols.iter().enumerate() {
            out.l[j] = col.iter().map(|&(r, v)| v * y[r]).sum();
        }
        out
    }

    fn c_cone(&self) -> ConeVec {
        ConeVec {
            b: self.sf.c_blocks.clone(),
            l: self.sf.c_lin.clone(),
        }
    }

    /// `A_c Q Aᵀ_c` for the current scaling.
    fn schur(&self, q: &[DMatrix<f64>], w: &DVector<f64>) -> DMatrix<f64> {
        let m = self.sf.m;
        let mut out = DMatrix::zeros(m, m);
        for (bi, rows) in self.sf.block_rows.iter().enumerate() {
            let g: Vec<DMatrix<f64>> = rows.iter().map(|(_, c)| c.congruence(&q[bi])).collect();
            for (i, (ri, _)) in rows.iter().enumerate() {
                for (rj, cj) in rows.iter().skip(i) {
                    let v = cj.inner(&g[i]);
                    out[(*ri, *rj)] += v;
                    if ri != rj {
                        out[(*rj, *ri)] += v;
                    }
                }
            }
        }
        for (j, col) in self.sf.lin_cols.iter().enumerate() {
            let w2 = w[j] * w[j];
            for &(r1, v1) in col {
                for &(r2, v2) in col {
                    out[(r1, r2)] += w2 * v1 * v2;
                }
            }
        }
        out
    }
}

/// Factored, equilibrated `[[M, A_f], [A_fᵀ, 0]]` with a small
/// quasi-definite regularization and iterative refinement.
struct Kkt {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    d: DVector<f64>,
}

impl Kkt {
    fn new(m_mat: &DMatrix<f64>, af: &DMatrix<f64>) -> Option<Self> {
        let m = m_mat.nrows();
        let nf = af.ncols();
        let n = m + nf;
        let mut k = DMatrix::zeros(n, n);
        k.view_mut((0, 0), (m, m)).copy_from(m_mat);
        k.view_mut((0, m), (m, nf)).copy_from(af);
        k.view_mut((m, 0), (nf, m)).copy_from(&af.transpose());
        let mut d = DVector::from_element(n, 1.0);
        for i in 0..m {
            let v = k[(i, i)];
            if v > 0.0 {
                d[i] = 1.0 / v.sqrt();
            }
        }
        for j in 0..nf {
            let nrm: f64 = (0..m).map(|i| (d[i] * k[(i, m + j)]).powi(2)).sum::<f64>().sqrt();
            if nrm > 0.0 {
                d[m + j] = 1.0 / nrm;
            }
        }
        let mut exact = k;
        for i in 0..n {
            for j in 0..n {
                exact[(i, j)] *= d[i] * d[j];
            }
        }
        let delta = 1e-11;
        let mut reg = exact.clone();
        for i in 0..m {
            reg[(i, i)] += delta;
        }
        for i in m..n {
            reg[(i, i)] -= delta;
        }
        let lu = reg.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Self { exact, lu, d })
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let rs = rhs.component_mul(&self.d);
        let mut x = self.lu.solve(&rs)?;
        for _ in 0..3 {
            let r = &rs - &self.exact * &x;
            let dx = self.lu.solve(&r)?;
            x += dx;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(x.component_mul(&self.d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Failed,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub status: IpmStatus,
    pub x: ConeVec,
    pub xf: DVector<f64>,
    pub y: DVector<f64>,
    pub z: ConeVec,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
    pub dobj: f64,
    pub iterations: usize,
}

struct Residuals {
    rp: DVector<f64>,
    rd: ConeVec,
    rf: DVector<f64>,
    rg: f64,
}

struct Direction {
    dxf: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    dxt: ConeVec,
    dzt: ConeVec,
    dz: ConeVec,
}

struct Point {
    s: Scaling,
    x: ConeVec,
    z: ConeVec,
    xf: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn run(sf: &StandardForm, settings: &SolverSettings) -> IpmResult {
    let ops = Ops::new(sf);
    let tol = settings.tolerance;
    let c_cone = ops.c_cone();
    let b = &sf.b;
    let cf = &sf.c_free;
    let nu = sf.degree() as f64;
    let bnorm = b.norm().max(1.0);
    let cnorm = (c_cone.norm().powi(2) + cf.norm_squared()).sqrt().max(1.0);

    let failed = |iterations: usize| IpmResult {
        status: IpmStatus::Failed,
        x: ConeVec::zeros(sf),
        xf: DVector::zeros(sf.n_free),
        y: DVector::zeros(sf.m),
        z: ConeVec::zeros(sf),
        pres: f64::INFINITY,
        dres: f64::INFINITY,
        gap: f64::INFINITY,
        dobj: f64::NAN,
        iterations,
    };

    // Starting point from least-norm problems with identity scaling.
    let ident_q: Vec<DMatrix<f64>> = sf.block_dims.iter().map(|&n| DMatrix::identity(n, n)).collect();
    let ones = DVector::from_element(sf.n_lin, 1.0);
    let Some(k0) = Kkt::new(&ops.schur(&ident_q, &ones), &ops.af) else {
        return failed(0);
    };
    let mut rhs = DVector::zeros(sf.m + sf.n_free);
    rhs.rows_mut(0, sf.m).copy_from(b);
    let Some(sol) = k0.solve(&rhs) else {
        return failed(0);
    };
    let mut x0 = ops.act(&sol.rows(0, sf.m).into_owned());
    let xf0 = sol.rows(sf.m, sf.n_free).into_owned();
    rhs.rows_mut(0, sf.m).copy_from(&ops.ac(&c_cone));
    rhs.rows_mut(sf.m, sf.n_free).copy_from(cf);
    let Some(sol) = k0.solve(&rhs) else {
        return failed(0);
    };
    let y0 = sol.rows(0, sf.m).into_owned();
    let mut z0 = c_cone.clone();
    z0.axpy(-1.0, &ops.act(&y0));
    let e = ConeVec::identity(sf);
    for v in [&mut x0, &mut z0] {
        let t = -v.min_eig();
        if t >= -1e-8 * v.norm().max(1.0) {
            v.axpy(1.0 + t, &e);
        }
    }
    let Some(s0) = Scaling::new(&x0, &z0) else {
        return failed(0);
    };
    let mut pt = Point {
        s: s0,
        x: x0,
        z: z0,
        xf: xf0,
        y: y0,
        tau: 1.0,
        kappa: 1.0,
    };

    let mut last = failed(0);
    for iter in 0..=settings.max_iterations {
        let x = pt.x.clone();
        let z = pt.z.clone();
        let cx = c_cone.dot(&x) + cf.dot(&pt.xf);
        let by = b.dot(&pt.y);
        let aty = ops.act(&pt.y);
        let afty = ops.af.transpose() * &pt.y;
        let ax = ops.ac(&x) + &ops.af * &pt.xf;
        let mut rd = aty.clone();
        rd.axpy(1.0, &z);
        rd.axpy(-pt.tau, &c_cone);
        let res = Residuals {
            rp: &ax - b * pt.tau,
            rd,
            rf: &afty - cf * pt.tau,
            rg: cx - by + pt.kappa,
        };
        let xz = x.dot(&z);
        let pres = res.rp.norm() / pt.tau / bnorm;
        let dres = (res.rd.norm().powi(2) + res.rf.norm_squared()).sqrt() / pt.tau / cnorm;
        let pobj = cx / pt.tau;
        let dobj = by / pt.tau;
        let gap = xz / (pt.tau * pt.tau) / (1.0 + pobj.abs());
        log::trace!(
            "iter {iter}: pobj {pobj:.9e} dobj {dobj:.9e} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} tau {:.2e} kappa {:.2e}",
            pt.tau,
            pt.kappa
        );
        last = IpmResult {
            status: IpmStatus::Failed,
            x: x.scaled(1.0 / pt.tau),
            xf: &pt.xf / pt.tau,
            y: &pt.y / pt.tau,
            z: z.scaled(1.0 / pt.tau),
            pres,
            dres,
            gap,
            dobj,
            iterations: iter,
        };
        if pres <= tol && dres <= tol && gap <= tol {
            last.status = IpmStatus::Optimal;
            return last;
        }
        if by > 0.0 {
            let mut dual_ray = aty.clone();
            dual_ray.axpy(1.0, &z);
            let pinf = (dual_ray.norm().powi(2) + afty.norm_squared()).sqrt() / by;
            if pinf <= tol {
                return IpmResult {
                    status: IpmStatus::PrimalInfeasible,
                    x: x.scaled(0.0),
                    xf: pt.xf.scale(0.0),
                    y: &pt.y / by,
                    z: z.scaled(1.0 / by),
                    iterations: iter,
                    ..last
                };
            }
        }
        if cx < 0.0 {
            let dinf = ax.norm() / (-cx);
            if dinf <= tol {
                return IpmResult {
                    status: IpmStatus::DualInfeasible,
                    x: x.scaled(-1.0 / cx),
                    xf: &pt.xf / (-cx),
                    y: pt.y.scale(0.0),
                    z: z.scaled(0.0),
                    iterations: iter,
                    ..last
                };
            }
        }
        if iter == settings.max_iterations {
            break;
        }

        let q = pt.s.q();
        let Some(kkt) = Kkt::new(&ops.schur(&q, &pt.s.w), &ops.af) else {
            return last;
        };

        // Direction for the τ column, shared by both solves.
        let qcq = pt.s.qzq(&q, &c_cone);
        let mut rhs2 = DVector::zeros(sf.m + sf.n_free);
        rhs2.rows_mut(0, sf.m).copy_from(&(b + ops.ac(&qcq)));
        rhs2.rows_mut(sf.m, sf.n_free).copy_from(cf);
        let Some(sol2) = kkt.solve(&rhs2) else {
            return last;
        };
        let dy2 = sol2.rows(0, sf.m).into_owned();
        let dxf2 = sol2.rows(sf.m, sf.n_free).into_owned();
        let mut dz2 = c_cone.clone();
        dz2.axpy(-1.0, &ops.act(&dy2));
        let dxc2 = pt.s.qzq(&q, &dz2).scaled(-1.0);
        let denom_base = c_cone.dot(&dxc2) + cf.dot(&dxf2) - b.dot(&dy2);

        let newton = |v: &ConeVec, dg: f64, f: f64| -> Option<Direction> {
            let rvr = pt.s.unscale_x(v);
            let qrq = pt.s.qzq(&q, &res.rd);
            let mut rhs1 = DVector::zeros(sf.m + sf.n_free);
            let top = -(&res.rp * f) - ops.ac(&rvr) - ops.ac(&qrq) * f;
            rhs1.rows_mut(0, sf.m).copy_from(&top);
            rhs1.rows_mut(sf.m, sf.n_free).copy_from(&(-(&res.rf * f)));
            let sol1 = kkt.solve(&rhs1)?;
            let dy1 = sol1.rows(0, sf.m).into_owned();
            let dxf1 = sol1.rows(sf.m, sf.n_free).into_owned();
            let mut dz1 = res.rd.scaled(-f);
            dz1.axpy(-1.0, &ops.act(&dy1));
            let mut dxc1 = rvr;
            dxc1.axpy(-1.0, &pt.s.qzq(&q, &dz1));
            let num = -f * res.rg - dg / pt.tau - (c_cone.dot(&dxc1) + cf.dot(&dxf1)) + b.dot(&dy1);
            let den = denom_base - pt.kappa / pt.tau;
            let dtau = num / den;
            if !dtau.is_finite() {
                return None;
            }
            let dy = &dy1 + &dy2 * dtau;
            let dxf = &dxf1 + &dxf2 * dtau;
            let mut dz = dz1;
            dz.axpy(dtau, &dz2);
            let dkappa = (dg - pt.kappa * dtau) / pt.tau;
            let dzt = pt.s.scale_z(&dz);
            let mut dxt = v.clone();
            dxt.axpy(-1.0, &dzt);
            Some(Direction {
                dxf,
                dy,
                dtau,
                dkappa,
                dxt,
                dzt,
                dz,
            })
        };

        let lam = pt.s.lambda();
        let total = xz + pt.tau * pt.kappa;
        let mu = total / (nu + 1.0);

        // Predictor.
        let Some(aff) = newton(&lam.scaled(-1.0), -pt.tau * pt.kappa, 1.0) else {
            return last;
        };
        let alpha_aff = step_limit(&pt, &aff).min(1.0);
        let dsdz = aff.dxt.dot(&aff.dzt) + aff.dtau * aff.dkappa;
        let ratio = 1.0 - alpha_aff + alpha_aff * alpha_aff * dsdz / total;
        let sigma = ratio.clamp(0.0, 1.0).powi(3);

        // Corrector.
        let mut ds = jordan(&lam, &lam).scaled(-1.0);
        ds.axpy(-1.0, &jordan(&aff.dxt, &aff.dzt));
        ds.axpy(sigma * mu, &e);
        let v = pt.s.lam_div(&ds);
        let dg = -pt.tau * pt.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let Some(dir) = newton(&v, dg, 1.0 - sigma) else {
            return last;
        };
        let mut alpha = (STEP * step_limit(&pt, &dir)).min(1.0);

        let mut next = None;
        for _ in 0..30 {
            if let Some(s) = pt.s.step(alpha, &dir.dxt, &dir.dzt) {
                next = Some(s);
                break;
            }
            alpha *= 0.5;
        }
        let Some(s) = next else {
            return last;
        };
        let mut x = pt.x.clone();
        x.axpy(alpha, &pt.s.unscale_x(&dir.dxt));
        let mut z = pt.z.clone();
        z.axpy(alpha, &dir.dz);
        for v in x.b.iter_mut().chain(z.b.iter_mut()) {
            *v = sym(v);
        }
        // Refactor from the iterates when possible.
        let s = Scaling::new(&x, &z).unwrap_or(s);
        pt = Point {
            s,
            x,
            z,
            xf: &pt.xf + &dir.dxf * alpha,
            y: &pt.y + &dir.dy * alpha,
            tau: pt.tau + alpha * dir.dtau,
            kappa: pt.kappa + alpha * dir.dkappa,
        };
        if !(pt.tau > 0.0 && pt.kappa > 0.0) {
            return last;
        }
    }
    last
}

fn step_limit(pt: &Point, d: &Direction) -> f64 {
    let mut a = pt.s.max_step(&d.dxt).min(pt.s.max_step(&d.dzt));
    if d.dtau < 0.0 {
        a = a.min(-pt.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-pt.kappa / d.dkappa);
    }
    a
}
