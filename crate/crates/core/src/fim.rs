//! Direction CRB: the per-subsection closed form and an independent
//! Fisher-information route through the Schur complement.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::error::{Error, Result};
use crate::geometry::{pose_jacobians, ContourModel, JacobianMode, LosPartition, TargetPose};

pub type CMat = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    /// Path-loss coefficient `1/d_o²`.
    pub g: f64,
    pub sigma_s2: f64,
    pub t_s: f64,
    pub bandwidth: f64,
}

impl SensingParams {
    pub fn new(g: f64, sigma_s2: f64, t_s: f64, bandwidth: f64) -> Result<Self> {
        for (name, v) in [("g", g), ("sigma_s2", sigma_s2), ("t_s", t_s), ("bandwidth", bandwidth)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            g,
            sigma_s2,
            t_s,
            bandwidth,
        })
    }

    fn gain(&self, n_r: usize) -> f64 {
        2.0 * self.g * self.g * n_r as f64 / self.sigma_s2
    }
}

pub fn compute_z1(n_r: usize, angle: f64) -> f64 {
    let n = n_r as f64;
    std::f64::consts::PI.powi(2) * (n * n - 1.0) * angle.cos().powi(2) / 12.0
}

pub fn compute_z2(bandwidth: f64) -> f64 {
    (4.0 * std::f64::consts::PI * bandwidth / SPEED_OF_LIGHT).powi(2)
}

pub fn compute_xk(partition: &LosPartition, pose: &TargetPose, model: &ContourModel, k: usize) -> f64 {
    let (cos_h, sin_h) = model.harmonics(partition.subsections[k].u);
    let sm: f64 = cos_h.iter().zip(&model.m).map(|(c, m)| c * m).sum();
    let sn: f64 = sin_h.iter().zip(&model.n).map(|(s, n)| s * n).sum();
    let (s, c) = (pose.phi_o - pose.varphi).sin_cos();
    (sm * s - sn * c).powi(2)
}

/// Beampattern quadratic forms at one subsection direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamQuad {
    /// `aᴴ R a`
    pub gain: f64,
    /// `ȧᴴ R ȧ`
    pub slope: f64,
    /// `ȧᴴ R a + aᴴ R ȧ`
    pub cross: f64,
}

pub fn beam_quad(geometry: &ArrayGeometry, rx: &CMat, phi: f64) -> BeamQuad {
    let a = geometry.steer_tx(phi);
    let da = geometry.steer_tx_deriv(phi);
    let ra = rx * &a;
    let rda = rx * &da;
    BeamQuad {
        gain: a.dotc(&ra).re,
        slope: da.dotc(&rda).re,
        cross: 2.0 * da.dotc(&ra).re,
    }
}

fn checked_quads(partition: &LosPartition, rx: &CMat, geometry: &ArrayGeometry) -> Result<Vec<BeamQuad>> {
    if rx.nrows() != geometry.n_t || rx.ncols() != geometry.n_t {
        return Err(Error::BadInput(format!(
            "covariance is {}x{}, array has {} elements",
            rx.nrows(),
            rx.ncols(),
            geometry.n_t
        )));
    }
    let floor = 1e-12 * rx.trace().re.abs();
    partition
        .subsections
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let q = beam_quad(geometry, rx, s.phi);
            if q.gain <= floor || !q.gain.is_finite() {
                Err(Error::DegenerateBeampattern { k })
            } else {
                Ok(q)
            }
        })
        .collect()
}

/// `l_k [Z₁ aᴴRa + ȧᴴRȧ - (ȧᴴRa + aᴴRȧ)² / (4 aᴴRa)]` for every `k`.
pub fn closed_form_terms(partition: &LosPartition, rx: &CMat, geometry: &ArrayGeometry) -> Result<Vec<f64>> {
    let quads = checked_quads(partition, rx, geometry)?;
    Ok(partition
        .subsections
        .iter()
        .zip(quads)
        .map(|(s, q)| {
            let z1 = compute_z1(geometry.n_r, s.phi);
            s.l * (z1 * q.gain + q.slope - q.cross * q.cross / (4.0 * q.gain))
        })
        .collect())
}

pub fn crb_phi_closed_form(
    partition: &LosPartition,
    rx: &CMat,
    params: &SensingParams,
    geometry: &ArrayGeometry,
) -> Result<f64> {
    let total: f64 = closed_form_terms(partition, rx, geometry)?.iter().sum();
    let info = params.gain(geometry.n_r) * params.t_s * total;
    if !(info > 0.0) {
        return Err(Error::SingularEfim { cond: f64::INFINITY });
    }
    Ok(1.0 / info)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimBlocks {
    pub i_k1: Matrix3<f64>,
    pub i_g: f64,
    pub i_k1g: Vector3<f64>,
}

pub fn assemble_fim_blocks(
    partition: &LosPartition,
    pose: &TargetPose,
    rx: &CMat,
    params: &SensingParams,
    geometry: &ArrayGeometry,
    mode: JacobianMode,
) -> Result<FimBlocks> {
    let quads = checked_quads(partition, rx, geometry)?;
    let jac = pose_jacobians(partition, pose, mode);
    let z2 = compute_z2(params.bandwidth);
    let nr = geometry.n_r as f64;
    let mut i_k1 = Matrix3::zeros();
    let mut i_g = 0.0;
    let mut cross = 0.0;
    for ((s, q), (mu, eta)) in partition.subsections.iter().zip(&quads).zip(&jac) {
        let z1 = compute_z1(geometry.n_r, s.phi);
        let w = s.l * q.gain;
        i_k1 += (mu * mu.transpose() * z2 + eta * eta.transpose() * ((z1 + q.slope / q.gain) * params.t_s)) * w;
        i_g += w;
        cross += s.l * q.cross;
    }
    Ok(FimBlocks {
        i_k1: i_k1 * params.gain(geometry.n_r),
        i_g: i_g * 2.0 * nr * params.t_s / params.sigma_s2,
        i_k1g: Vector3::new(0.0, params.g * nr * params.t_s / params.sigma_s2 * cross, 0.0),
    })
}

pub fn efim_schur(blocks: &FimBlocks) -> Result<Matrix3<f64>> {
    if !(blocks.i_g > 0.0) {
        return Err(Error::SingularPathLossInfo);
    }
    Ok(blocks.i_k1 - blocks.i_k1g * blocks.i_k1g.transpose() / blocks.i_g)
}

/// Inverse of the EFIM. Parameters carrying exactly zero information get
/// an infinite bound and are excluded from the inversion.
pub fn crb_k1_matrix(efim: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let keep: Vec<usize> = (0..3)
        .filter(|&i| (0..3).any(|j| efim[(i, j)] != 0.0))
        .collect();
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        if !keep.contains(&i) {
            out[(i, i)] = f64::INFINITY;
        }
    }
    if keep.is_empty() {
        return Ok(out);
    }
    let n = keep.len();
    let sub = DMatrix::from_fn(n, n, |i, j| efim[(keep[i], keep[j])]);
    let eig = SymmetricEigen::new(sub.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > 1e12 {
        return Err(Error::SingularEfim { cond });
    }
    let inv = sub.try_inverse().ok_or(Error::SingularEfim { cond })?;
    for i in 0..n {
        for j in 0..n {
            out[(keep[i], keep[j])] = inv[(i, j)];
        }
    }
    Ok(out)
}

pub fn crb_phi_oracle(
    partition: &LosPartition,
    pose: &TargetPose,
    rx: &CMat,
    params: &SensingParams,
    geometry: &ArrayGeometry,
    mode: JacobianMode,
) -> Result<f64> {
    let blocks = assemble_fim_blocks(partition, pose, rx, params, geometry, mode)?;
    Ok(crb_k1_matrix(&efim_schur(&blocks)?)?[(1, 1)])
}
