//! CRB-minimizing semidefinite relaxation, rank-one extraction and the
//! beampattern-matching benchmark designs.
//!
//! Covariances are handled in units of the power budget inside the conic
//! problem (`R̂ = R / P_t`), and each `t_k` in units of the largest value its
//! LMI allows at full power; [`solve_sdr`] converts back.

use isac_conic::{
    solve, ConicProblem, LinearExpr, LmiConstraint, MatrixVarId, Relation, ScalarVarId,
    SolverSettings, Status,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, CVec, ChannelSet};
use crate::error::{Error, Result};
use crate::fim::{crb_phi_closed_form, CMat, SensingParams};
use crate::geometry::LosPartition;
use crate::par::{map_indexed, ExecMode};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignConstraints {
    pub p_t: f64,
    /// Linear SINR threshold.
    pub gamma: f64,
    pub coverage: bool,
    pub channels: ChannelSet,
}

impl DesignConstraints {
    pub fn new(p_t: f64, gamma: f64, coverage: bool, channels: ChannelSet) -> Result<Self> {
        if !(p_t.is_finite() && p_t > 0.0) {
            return Err(Error::BadInput(format!("power budget {p_t} must be positive")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::BadInput(format!("SINR threshold {gamma} must be positive")));
        }
        Ok(Self {
            p_t,
            gamma,
            coverage,
            channels,
        })
    }

    pub fn users(&self) -> usize {
        self.channels.len()
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// Hermitian coefficient whose inner product with `R` is `Re(bᴴ R a)`.
fn cross_coef(a: &CVec, b: &CVec) -> CMat {
    (outer(a, b) + outer(b, a)) * real(0.5)
}

/// `Σ_c ⟨coef, R_c⟩`.
fn on_sum(ids: &[MatrixVarId], coef: &CMat) -> LinearExpr {
    ids.iter().fold(LinearExpr::new(), |e, &id| e.matrix(id, coef.clone()))
}

/// A built relaxation together with its variable handles.
#[derive(Debug, Clone)]
pub struct SdrProblem {
    pub problem: ConicProblem,
    pub r_ids: Vec<MatrixVarId>,
    pub t_ids: Vec<ScalarVarId>,
    pub t_min: ScalarVarId,
    /// Users served; `r_ids` has one extra sensing-only matrix when zero.
    pub users: usize,
    pub p_t: f64,
    /// `t_k = p_t · t_scale[k] · t̂_k`.
    pub t_scale: Vec<f64>,
    /// Conic objective times this factor gives `-Σ l_k t_k / p_t`.
    pub objective_scale: f64,
}

/// Relative headroom on the relaxed SINR rows.
pub const SINR_GUARD: f64 = 1e-5;

/// Adds per-user SINR rows and the power budget, both in normalized units.
fn add_comm_constraints(p: &mut ConicProblem, ids: &[MatrixVarId], cons: &DesignConstraints) {
    let gamma = cons.gamma * (1.0 + SINR_GUARD);
    for (c, h) in cons.channels.h.iter().enumerate() {
        let hh = outer(h, h);
        let mut e = LinearExpr::new();
        for (i, &id) in ids.iter().enumerate() {
            let w = if i == c { 1.0 / gamma } else { -1.0 };
            e = e.matrix(id, &hh * real(w));
        }
        p.add_constraint(format!("sinr_{c}"), e, Relation::Ge, cons.channels.noise[c] / cons.p_t);
    }
}

fn add_power_constraint(p: &mut ConicProblem, ids: &[MatrixVarId], n_t: usize, relation: Relation) {
    p.add_constraint("power", on_sum(ids, &CMat::identity(n_t, n_t)), relation, 1.0);
}

pub fn build_sdr_problem(
    partition: &LosPartition,
    geometry: &ArrayGeometry,
    constraints: &DesignConstraints,
) -> Result<SdrProblem> {
    let n_t = geometry.n_t;
    let users = constraints.users();
    if users > n_t {
        return Err(Error::BadInput(format!("{users} users exceed {n_t} transmit antennas")));
    }
    let mut p = ConicProblem::new();
    let r_ids: Vec<MatrixVarId> = (0..users.max(1))
        .map(|c| p.add_matrix_var(format!("R_{c}"), n_t))
        .collect();
    let t_ids: Vec<ScalarVarId> = (0..partition.len())
        .map(|k| p.add_scalar_var(format!("t_{k}")))
        .collect();
    let t_min = p.add_scalar_var("t_min");

    let coefs: Vec<f64> = partition
        .subsections
        .iter()
        .map(|s| geometry.steer_tx_deriv(s.phi).norm_squared() / geometry.steer_rx(s.phi).norm_squared())
        .collect();
    let t_scale: Vec<f64> = partition
        .subsections
        .iter()
        .zip(&coefs)
        .map(|(s, c)| c * n_t as f64 + geometry.steer_tx_deriv(s.phi).norm_squared())
        .map(|v| if v > 0.0 { v } else { 1.0 })
        .collect();
    let objective_scale: f64 = partition.subsections.iter().zip(&t_scale).map(|(s, w)| s.l * w).sum();
    let mut objective = LinearExpr::new();
    for ((s, &t), w) in partition.subsections.iter().zip(&t_ids).zip(&t_scale) {
        objective = objective.scalar(t, -s.l * w / objective_scale);
    }
    p.minimize(objective);

    for (k, s) in partition.subsections.iter().enumerate() {
        let a = geometry.steer_tx(s.phi);
        let da = geometry.steer_tx_deriv(s.phi);
        let aa = outer(&a, &a);
        let mut lmi = LmiConstraint::new(format!("P_{k}"), 2);
        lmi.set(
            0,
            0,
            on_sum(&r_ids, &(&aa * real(coefs[k]) + outer(&da, &da))).scalar(t_ids[k], -t_scale[k]),
        );
        lmi.set(0, 1, on_sum(&r_ids, &cross_coef(&a, &da)));
        lmi.set(1, 1, on_sum(&r_ids, &aa));
        p.add_lmi(lmi);
    }

    add_comm_constraints(&mut p, &r_ids[..users], constraints);
    add_power_constraint(&mut p, &r_ids, n_t, Relation::Le);

    if constraints.coverage {
        for (k, s) in partition.subsections.iter().enumerate() {
            let a = geometry.steer_tx(s.phi);
            let gain = on_sum(&r_ids, &outer(&a, &a));
            p.add_constraint(format!("cover_lo_{k}"), gain.clone().scalar(t_min, -1.0), Relation::Ge, 0.0);
            p.add_constraint(format!("cover_hi_{k}"), gain.scalar(t_min, -2.0), Relation::Le, 0.0);
        }
    } else {
        p.add_constraint("t_min_unused", LinearExpr::new().scalar(t_min, 1.0), Relation::Eq, 0.0);
    }

    Ok(SdrProblem {
        problem: p,
        r_ids,
        t_ids,
        t_min,
        users,
        p_t: constraints.p_t,
        t_scale,
        objective_scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: Status,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    /// Worst scaled constraint violation re-evaluated at the returned point.
    pub audit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdrSolution {
    /// Per-user covariances in watts; a single sensing-only matrix when no
    /// user is served.
    pub r_c: Vec<CMat>,
    pub t: Vec<f64>,
    pub t_min: f64,
    pub r_x: CMat,
    /// `Σ_k l_k t_k`.
    pub objective: f64,
    pub rank_one: Vec<bool>,
    pub users: usize,
    pub solver: SolverReport,
}

fn status_error(sol: &isac_conic::ConicSolution, problem: &ConicProblem) -> Error {
    match sol.status {
        Status::Infeasible => {
            let check = sol
                .certificate
                .as_ref()
                .map(|c| c.check(problem))
                .map(|c| (c.margin, c.violation))
                .unwrap_or((f64::NAN, f64::NAN));
            Error::Infeasible {
                margin: check.0,
                violation: check.1,
            }
        }
        Status::Unbounded => Error::Unbounded,
        _ => Error::SolverFailure {
            iterations: sol.iterations,
            primal: sol.primal_residual,
            dual: sol.dual_residual,
            gap: sol.duality_gap,
        },
    }
}

pub fn solve_sdr(sdr: &SdrProblem, settings: &SolverSettings, rank_eps: f64) -> Result<SdrSolution> {
    let sol = solve(&sdr.problem, settings)?;
    if sol.status != Status::Optimal {
        return Err(status_error(&sol, &sdr.problem));
    }
    let audit = sdr.problem.audit(&sol.matrices, &sol.scalars).worst();
    let scale = real(sdr.p_t);
    let r_c: Vec<CMat> = sdr.r_ids.iter().map(|&id| sol.matrix(id) * scale).collect();
    let r_x = r_c.iter().skip(1).fold(r_c[0].clone(), |acc, r| acc + r);
    let t: Vec<f64> = sdr
        .t_ids
        .iter()
        .zip(&sdr.t_scale)
        .map(|(&id, w)| sol.scalar(id) * w * sdr.p_t)
        .collect();
    Ok(SdrSolution {
        rank_one: r_c.iter().map(|r| check_rank_one(r, rank_eps)).collect(),
        r_c,
        t,
        t_min: sol.scalar(sdr.t_min) * sdr.p_t,
        r_x,
        objective: -sol.objective * sdr.objective_scale * sdr.p_t,
        users: sdr.users,
        solver: SolverReport {
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            duality_gap: sol.duality_gap,
            audit,
        },
    })
}

/// Eigenvalues in descending order with eigenvectors as matching columns.
fn eig_desc(r: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..r.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(r.nrows(), r.ncols(), |row, col| eig.eigenvectors[(row, order[col])]);
    (vals, vecs)
}

pub fn check_rank_one(r: &CMat, rank_eps: f64) -> bool {
    let (vals, _) = eig_desc(r);
    match vals.as_slice() {
        [] => false,
        [l1] => *l1 > 0.0,
        [l1, l2, ..] => *l1 > 0.0 && *l2 <= rank_eps * l1,
    }
}

fn psd_sqrt(r: &CMat) -> CMat {
    let (vals, vecs) = eig_desc(r);
    let d = CMat::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| real(v.max(0.0).sqrt())),
    ));
    &vecs * d * vecs.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DirectEigenvector,
    Randomized { epoch: usize },
    CoverageFallback { epoch: usize },
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::DirectEigenvector => "direct-eigenvector".into(),
            Provenance::Randomized { epoch } => format!("randomized({epoch})"),
            Provenance::CoverageFallback { epoch } => format!("coverage-fallback({epoch})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochStats {
    pub accepted: usize,
    pub singular: usize,
    pub negative: usize,
    pub over_power: usize,
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// `N_t × C` precoder; for a sensing-only design the columns span the
    /// sensing covariance instead.
    pub w: CMat,
    pub provenance: Provenance,
    pub stats: EpochStats,
}

impl BeamformerSet {
    pub fn covariance(&self) -> CMat {
        &self.w * self.w.adjoint()
    }

    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// `SINR_c = |h_cᴴw_c|² / (Σ_{i≠c} |h_cᴴw_i|² + σ_c²)`.
pub fn sinr(w: &CMat, channels: &ChannelSet) -> Vec<f64> {
    channels
        .h
        .iter()
        .enumerate()
        .map(|(c, h)| {
            let gains: Vec<f64> = (0..w.ncols()).map(|i| h.dotc(&w.column(i)).norm_sqr()).collect();
            let interference: f64 = gains.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, g)| g).sum();
            gains[c] / (interference + channels.noise[c])
        })
        .collect()
}

/// `2·min_k aₖᴴRaₖ − max_k aₖᴴRaₖ`; nonnegative iff the 3-dB coverage holds.
pub fn coverage_margin(r: &CMat, partition: &LosPartition, geometry: &ArrayGeometry) -> f64 {
    let gains: Vec<f64> = partition
        .subsections
        .iter()
        .map(|s| {
            let a = geometry.steer_tx(s.phi);
            a.dotc(&(r * &a)).re
        })
        .collect();
    let lo = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    2.0 * lo - hi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionSettings {
    pub epochs: usize,
    pub seed: u64,
    pub rank_eps: f64,
    pub mode: ExecMode,
}

/// Context needed to score candidate precoders.
#[derive(Debug, Clone, Copy)]
pub struct Scoring<'a> {
    pub partition: &'a LosPartition,
    pub geometry: &'a ArrayGeometry,
    pub params: &'a SensingParams,
}

enum Epoch {
    Singular,
    Negative,
    OverPower,
    Accepted { w: CMat, crb: f64, margin: f64 },
}

fn complex_normal(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
    })
}

/// Powers `q` that put every user exactly at `SINR = Γ` for the unit
/// directions `u`, or the reason the epoch fails.
fn equalize(u: &[CVec], channels: &ChannelSet, gamma: f64) -> std::result::Result<Vec<f64>, Epoch> {
    let c = u.len();
    let f = DMatrix::from_fn(c, c, |row, col| {
        let g = channels.h[row].dotc(&u[col]).norm_sqr();
        if row == col {
            g
        } else {
            -gamma * g
        }
    });
    let eta = DVector::from_iterator(c, channels.noise.iter().map(|s| gamma * s));
    let sv = f.clone().singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(Epoch::Singular);
    }
    let q = f.lu().solve(&eta).ok_or(Epoch::Singular)?;
    if q.iter().any(|&v| !(v > 0.0)) {
        return Err(Epoch::Negative);
    }
    Ok(q.iter().cloned().collect())
}

fn run_epoch(
    e: usize,
    roots: &[CMat],
    cons: &DesignConstraints,
    scoring: &Scoring,
    settings: &ExtractionSettings,
) -> Epoch {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(e as u64);
    let n_t = scoring.geometry.n_t;
    let u: Vec<CVec> = roots
        .iter()
        .map(|root| {
            let v = root * complex_normal(&mut rng, n_t);
            let norm = v.norm();
            v / real(norm)
        })
        .collect();
    if u.iter().any(|v| v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite())) {
        return Epoch::Singular;
    }
    let q = match equalize(&u, &cons.channels, cons.gamma) {
        Ok(q) => q,
        Err(e) => return e,
    };
    if q.iter().sum::<f64>() > cons.p_t * (1.0 + 1e-6) {
        return Epoch::OverPower;
    }
    let w = CMat::from_fn(n_t, u.len(), |row, col| u[col][row] * q[col].sqrt());
    let r = &w * w.adjoint();
    let crb = crb_phi_closed_form(scoring.partition, &r, scoring.params, scoring.geometry).unwrap_or(f64::INFINITY);
    let margin = coverage_margin(&r, scoring.partition, scoring.geometry);
    Epoch::Accepted { w, crb, margin }
}

/// Turns relaxed covariances into one beamformer per user.
pub fn extract_rank_one(
    solution: &SdrSolution,
    cons: &DesignConstraints,
    scoring: &Scoring,
    settings: &ExtractionSettings,
) -> Result<BeamformerSet> {
    if solution.users == 0 {
        // Sensing-only: keep the covariance's own eigenbeams.
        let (vals, vecs) = eig_desc(&solution.r_c[0]);
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > settings.rank_eps * vals[0]).collect();
        let w = CMat::from_fn(vecs.nrows(), keep.len(), |row, col| {
            vecs[(row, keep[col])] * vals[keep[col]].sqrt()
        });
        return Ok(BeamformerSet {
            w,
            provenance: Provenance::DirectEigenvector,
            stats: EpochStats::default(),
        });
    }
    if solution.rank_one.iter().all(|&b| b) {
        let n_t = scoring.geometry.n_t;
        let dirs: Vec<CVec> = solution
            .r_c
            .iter()
            .map(|r| eig_desc(r).1.column(0).into_owned())
            .collect();
        // Re-solve the powers so every SINR sits exactly at the threshold.
        if let Ok(q) = equalize(&dirs, &cons.channels, cons.gamma) {
            if q.iter().sum::<f64>() <= cons.p_t * (1.0 + 1e-6) {
                let mut w = CMat::zeros(n_t, solution.users);
                for (c, v) in dirs.iter().enumerate() {
                    w.set_column(c, &(v * real(q[c].sqrt())));
                }
                return Ok(BeamformerSet {
                    w,
                    provenance: Provenance::DirectEigenvector,
                    stats: EpochStats::default(),
                });
            }
        }
    }
    if settings.epochs == 0 {
        return Err(Error::BadInput("at least one randomization epoch is required".into()));
    }
    let roots: Vec<CMat> = solution.r_c.iter().map(psd_sqrt).collect();
    let epochs = map_indexed(settings.epochs, settings.mode, |e| run_epoch(e, &roots, cons, scoring, settings));

    let mut stats = EpochStats::default();
    let mut best: Option<(usize, f64)> = None;
    let mut fallback: Option<(usize, f64)> = None;
    for (e, ep) in epochs.iter().enumerate() {
        match ep {
            Epoch::Singular => stats.singular += 1,
            Epoch::Negative => stats.negative += 1,
            Epoch::OverPower => stats.over_power += 1,
            Epoch::Accepted { crb, margin, .. } => {
                stats.accepted += 1;
                let covered = !cons.coverage || *margin >= 0.0;
                if covered {
                    stats.covered += 1;
                    if best.is_none_or(|(_, b)| *crb < b) {
                        best = Some((e, *crb));
                    }
                }
                if fallback.is_none_or(|(_, m)| *margin > m) {
                    fallback = Some((e, *margin));
                }
            }
        }
    }
    let (epoch, provenance) = match (best, fallback) {
        (Some((e, _)), _) => (e, Provenance::Randomized { epoch: e }),
        (None, Some((e, _))) => (e, Provenance::CoverageFallback { epoch: e }),
        (None, None) => {
            return Err(Error::ExtractionFailed {
                epochs: settings.epochs,
            })
        }
    };
    let Epoch::Accepted { w, .. } = &epochs[epoch] else {
        unreachable!()
    };
    Ok(BeamformerSet {
        w: w.clone(),
        provenance,
        stats,
    })
}

/// Scales the precoder up to the full budget. SINRs can only grow, the
/// coverage ratio is unchanged and the CRB falls by the same factor.
pub fn fill_power(set: &mut BeamformerSet, p_t: f64) {
    let power = set.power();
    if power > 0.0 && power < p_t {
        set.w *= real((p_t / power).sqrt());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DesignVariant {
    #[default]
    CrbMin,
    Bp1,
    Bp2,
}

impl DesignVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignVariant::CrbMin => "crb-min",
            DesignVariant::Bp1 => "bp1",
            DesignVariant::Bp2 => "bp2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternSpec {
    /// Main-beam center in radians.
    pub center: f64,
    pub beamwidth_deg: f64,
    /// Grid directions in degrees.
    pub grid_deg: Vec<f64>,
}

impl BeampatternSpec {
    pub fn uniform(center: f64, beamwidth_deg: f64, lo_deg: f64, hi_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) || !(hi_deg >= lo_deg) {
            return Err(Error::BadInput("beampattern grid is empty".into()));
        }
        let n = ((hi_deg - lo_deg) / step_deg + 1e-9).floor() as usize + 1;
        Ok(Self {
            center,
            beamwidth_deg,
            grid_deg: (0..n).map(|i| lo_deg + i as f64 * step_deg).collect(),
        })
    }

    pub fn desired(&self, theta_deg: f64) -> f64 {
        if (theta_deg - self.center.to_degrees()).abs() <= 0.5 * self.beamwidth_deg + 1e-9 {
            1.0
        } else {
            0.0
        }
    }
}

/// Orthonormal basis of `n × n` Hermitian matrices under `Re tr(AᴴB)`.
fn hermitian_basis(n: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(n * n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        let mut e = CMat::zeros(n, n);
        e[(i, i)] = real(1.0);
        basis.push(e);
        for j in i + 1..n {
            let mut re = CMat::zeros(n, n);
            re[(i, j)] = real(s);
            re[(j, i)] = real(s);
            basis.push(re);
            let mut im = CMat::zeros(n, n);
            im[(i, j)] = Complex64::new(0.0, s);
            im[(j, i)] = Complex64::new(0.0, -s);
            basis.push(im);
        }
    }
    basis
}

/// Least-squares beampattern match, solved as an SDP in normalized power.
///
/// The residual map `(R̂_x, α) ↦ α P_des(θ_i) − a_iᴴR̂_xa_i` has rank at most
/// `2N_t`; its SVD gives the same squared norm with that many rows `r_j`,
/// each bounded by `[[u_j, r_j], [r_j, 1]] ⪰ 0` and `Σ u_j` minimized.
pub fn build_beampattern_problem(
    variant: DesignVariant,
    geometry: &ArrayGeometry,
    constraints: &DesignConstraints,
    pattern: &BeampatternSpec,
) -> Result<SdrProblem> {
    if variant == DesignVariant::CrbMin {
        return Err(Error::BadInput("not a beampattern variant".into()));
    }
    let n_t = geometry.n_t;
    let users = constraints.users();
    if users > n_t {
        return Err(Error::BadInput(format!("{users} users exceed {n_t} transmit antennas")));
    }
    let mut p = ConicProblem::new();
    let r_ids: Vec<MatrixVarId> = (0..users.max(1))
        .map(|c| p.add_matrix_var(format!("R_{c}"), n_t))
        .collect();
    let alpha = p.add_scalar_var("alpha");

    let basis = hermitian_basis(n_t);
    let nb = basis.len();
    let steer: Vec<CVec> = pattern.grid_deg.iter().map(|t| geometry.steer_tx(t.to_radians())).collect();
    let m = DMatrix::from_fn(steer.len(), nb + 1, |i, j| {
        if j == nb {
            pattern.desired(pattern.grid_deg[i])
        } else {
            -steer[i].dotc(&(&basis[j] * &steer[i])).re
        }
    });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > 1e-10 * smax)
        .collect();

    let mut objective = LinearExpr::new();
    for (pos, &j) in rows.iter().enumerate() {
        let sigma = svd.singular_values[j];
        let mut coef = CMat::zeros(n_t, n_t);
        for (b, basis_b) in basis.iter().enumerate() {
            coef += basis_b * real(sigma * v_t[(j, b)]);
        }
        let u = p.add_scalar_var(format!("u_{pos}"));
        objective = objective.scalar(u, 1.0);
        // r_j² ≤ u_j
        let mut lmi = LmiConstraint::new(format!("fit_{pos}"), 2);
        lmi.set(0, 0, LinearExpr::new().scalar(u, 1.0));
        lmi.set(0, 1, on_sum(&r_ids, &coef).scalar(alpha, sigma * v_t[(j, nb)]));
        lmi.set(1, 1, LinearExpr::constant(1.0));
        p.add_lmi(lmi);
    }
    p.minimize(objective);
    p.add_constraint("alpha_nonneg", LinearExpr::new().scalar(alpha, 1.0), Relation::Ge, 0.0);

    add_comm_constraints(&mut p, &r_ids[..users], constraints);
    match variant {
        DesignVariant::Bp1 => {
            for i in 0..n_t {
                let mut e = CMat::zeros(n_t, n_t);
                e[(i, i)] = real(1.0);
                p.add_constraint(format!("element_power_{i}"), on_sum(&r_ids, &e), Relation::Eq, 1.0 / n_t as f64);
            }
        }
        DesignVariant::Bp2 => add_power_constraint(&mut p, &r_ids, n_t, Relation::Eq),
        DesignVariant::CrbMin => unreachable!(),
    }
    Ok(SdrProblem {
        problem: p,
        r_ids,
        t_ids: Vec::new(),
        t_min: alpha,
        users,
        p_t: constraints.p_t,
        t_scale: Vec::new(),
        objective_scale: 1.0,
    })
}

/// Solves a benchmark design and extracts beamformers the same way as the
/// CRB-minimizing design.
pub fn benchmark_beampattern_design(
    variant: DesignVariant,
    geometry: &ArrayGeometry,
    constraints: &DesignConstraints,
    pattern: &BeampatternSpec,
    scoring: &Scoring,
    solver: &SolverSettings,
    extraction: &ExtractionSettings,
) -> Result<(SdrSolution, BeamformerSet)> {
    let prob = build_beampattern_problem(variant, geometry, constraints, pattern)?;
    let sol = solve_sdr(&prob, solver, extraction.rank_eps)?;
    let set = extract_rank_one(&sol, constraints, scoring, extraction)?;
    Ok((sol, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{generate_channels, ChannelModel};
    use crate::geometry::{compute_los_partition, ContourModel, TargetPose};

    fn scene(n_t: usize, angles_deg: &[f64], coverage: bool) -> (LosPartition, ArrayGeometry, DesignConstraints, SensingParams) {
        let model = ContourModel::new(
            vec![2.05, -0.002, 0.5, 0.0, 0.056, 0.001, -0.125, 0.003],
            vec![1.24, -0.001, 0.335, -0.001, 0.124, -0.001, 0.018, 0.0],
        )
        .unwrap();
        let pose = TargetPose::new(27.0, 0.0, 0.0).unwrap();
        let part = compute_los_partition(&model, &pose, 8, 2048).unwrap();
        let geo = ArrayGeometry::new(n_t, n_t).unwrap();
        let angles: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
        let ch = generate_channels(&geo, &angles, 1e-11, ChannelModel::LosOnly, 0).unwrap();
        let cons = DesignConstraints::new(1.0, 10.0, coverage, ch).unwrap();
        let params = SensingParams::new(1.0 / 729.0, 1e-11, 1e-3, 1e8).unwrap();
        (part, geo, cons, params)
    }

    fn settings() -> ExtractionSettings {
        ExtractionSettings {
            epochs: 50,
            seed: 7,
            rank_eps: 1e-6,
            mode: ExecMode::Sequential,
        }
    }

    #[test]
    fn counts_for_minimal_problem() {
        let (mut part, geo, cons, _) = scene(4, &[30.0], false);
        part.subsections.truncate(1);
        let p = build_sdr_problem(&part, &geo, &cons).unwrap();
        assert_eq!(p.problem.matrix_vars.len(), 1);
        assert_eq!(p.problem.scalar_vars.len(), 2);
        assert_eq!(p.problem.lmis.len(), 1);
    }

    #[test]
    fn counts_for_reference_problem() {
        let (part, geo, cons, _) = scene(16, &[-60.0, -35.0, 35.0, 60.0], true);
        let p = build_sdr_problem(&part, &geo, &cons).unwrap();
        assert_eq!(p.problem.matrix_vars.len(), 4);
        assert!(p.problem.matrix_vars.iter().all(|v| v.dim == 16));
        assert_eq!(p.problem.scalar_vars.len(), 9);
    }

    #[test]
    fn coverage_linearization_matches_margin() {
        use rand::{Rng, SeedableRng};
        let (part, geo, _, _) = scene(6, &[], true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = CMat::from_fn(6, 2, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let r = &g * g.adjoint();
            let gains: Vec<f64> = part
                .subsections
                .iter()
                .take(5)
                .map(|s| {
                    let a = geo.steer_tx(s.phi);
                    a.dotc(&(&r * &a)).re
                })
                .collect();
            let lo = gains.iter().cloned().fold(f64::INFINITY, f64::min);
            let feasible = gains.iter().all(|&x| x <= 2.0 * lo);
            let hi = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(feasible, 2.0 * lo - hi >= 0.0);
        }
    }

    #[test]
    fn rank_one_check() {
        let v = CVec::from_fn(4, |i, _| Complex64::new(i as f64 + 1.0, 0.5));
        assert!(check_rank_one(&(&v * v.adjoint()), 1e-6));
        assert!(!check_rank_one(&CMat::identity(4, 4), 1e-6));
    }

    #[test]
    fn single_user_extraction_hits_threshold() {
        let (part, geo, cons, params) = scene(6, &[20.0], false);
        let r = CMat::identity(6, 6) * real(0.1);
        let sol = SdrSolution {
            r_c: vec![r.clone()],
            t: vec![0.0; part.len()],
            t_min: 0.0,
            r_x: r,
            objective: 0.0,
            rank_one: vec![false],
            users: 1,
            solver: SolverReport {
                status: Status::Optimal,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                duality_gap: 0.0,
                audit: 0.0,
            },
        };
        let scoring = Scoring { partition: &part, geometry: &geo, params: &params };
        let set = extract_rank_one(&sol, &cons, &scoring, &settings()).unwrap();
        let s = sinr(&set.w, &cons.channels);
        assert!((s[0] - cons.gamma).abs() <= 1e-8 * cons.gamma);
    }

    #[test]
    fn rank_one_solution_is_equalized() {
        let (part, geo, cons, params) = scene(6, &[-30.0, 25.0], false);
        let beam = |c: usize, p: f64| {
            let h = &cons.channels.h[c];
            h * h.adjoint() * real(p / h.norm_squared())
        };
        let r_c = vec![beam(0, 0.02), beam(1, 0.03)];
        let sol = SdrSolution {
            r_x: &r_c[0] + &r_c[1],
            r_c,
            t: vec![0.0; part.len()],
            t_min: 0.0,
            objective: 0.0,
            rank_one: vec![true, true],
            users: 2,
            solver: SolverReport {
                status: Status::Optimal,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                duality_gap: 0.0,
                audit: 0.0,
            },
        };
        let scoring = Scoring { partition: &part, geometry: &geo, params: &params };
        let set = extract_rank_one(&sol, &cons, &scoring, &settings()).unwrap();
        assert_eq!(set.provenance, Provenance::DirectEigenvector);
        for s in sinr(&set.w, &cons.channels) {
            assert!((s - cons.gamma).abs() <= 1e-10 * cons.gamma);
        }
    }

    #[test]
    fn two_user_extraction_equalizes() {
        let (part, geo, cons, params) = scene(6, &[-30.0, 25.0], false);
        let mk = |c: usize, seed: u64| {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = CMat::from_fn(6, 3, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = &cons.channels.h[c];
            (h * h.adjoint() + &g * g.adjoint() * real(0.05)) * real(0.01)
        };
        let r_c = vec![mk(0, 1), mk(1, 2)];
        let sol = SdrSolution {
            r_x: &r_c[0] + &r_c[1],
            r_c,
            t: vec![0.0; part.len()],
            t_min: 0.0,
            objective: 0.0,
            rank_one: vec![false, false],
            users: 2,
            solver: SolverReport {
                status: Status::Optimal,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                duality_gap: 0.0,
                audit: 0.0,
            },
        };
        let scoring = Scoring { partition: &part, geometry: &geo, params: &params };
        let set = extract_rank_one(&sol, &cons, &scoring, &settings()).unwrap();
        for s in sinr(&set.w, &cons.channels) {
            assert!((s - cons.gamma).abs() <= 1e-8 * cons.gamma);
        }
        assert!(set.power() <= cons.p_t * (1.0 + 1e-6));
        let again = extract_rank_one(&sol, &cons, &scoring, &settings()).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn power_fill_keeps_sinr_and_coverage() {
        let (part, geo, cons, _) = scene(6, &[-30.0, 25.0], false);
        let w = CMat::from_fn(6, 2, |i, j| Complex64::new((i + j) as f64 * 0.01, 0.002 * i as f64));
        let mut set = BeamformerSet {
            w,
            provenance: Provenance::DirectEigenvector,
            stats: EpochStats::default(),
        };
        let before = sinr(&set.w, &cons.channels);
        let cov = coverage_margin(&set.covariance(), &part, &geo) / set.power();
        fill_power(&mut set, cons.p_t);
        assert!((set.power() - cons.p_t).abs() < 1e-12);
        for (a, b) in before.iter().zip(sinr(&set.w, &cons.channels)) {
            assert!(b >= *a);
        }
        let after = coverage_margin(&set.covariance(), &part, &geo) / set.power();
        assert!((cov - after).abs() < 1e-9 * cov.abs().max(1.0));
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for i in 0..9 {
            for j in 0..9 {
                let v = isac_conic::herm_inner(&b[i], &b[j]);
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }
}
