//! Echo synthesis for an extended target and a concentrated-likelihood
//! direction estimator used to sanity-check the CRB.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, CVec};
use crate::error::{Error, Result};
use crate::fim::{CMat, SensingParams, SPEED_OF_LIGHT};
use crate::geometry::{compute_los_partition, ContourModel, LosPartition, TargetPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sample_rate: f64,
    pub num_samples: usize,
    pub seed: u64,
    /// Draw fresh RCS gains for every observation.
    pub rcs_redraw: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) || self.num_samples == 0 {
            return Err(Error::BadInput("sample rate and sample count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoObservation {
    /// `N_r × num_samples`.
    pub y: CMat,
    pub alpha: Vec<Complex64>,
    pub delays: Vec<usize>,
    pub pose: TargetPose,
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (0.5 * variance).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
    })
}

/// `x = W c` with unit-power i.i.d. complex Gaussian symbols.
pub fn synthesize_tx(w: &CMat, num_samples: usize, rng: &mut ChaCha8Rng) -> CMat {
    let c = complex_gaussian(rng, w.ncols(), num_samples, 1.0);
    w * c
}

pub fn round_trip_delays(partition: &LosPartition, sample_rate: f64) -> Vec<usize> {
    partition
        .subsections
        .iter()
        .map(|s| (2.0 * s.d / SPEED_OF_LIGHT * sample_rate).round() as usize)
        .collect()
}

/// `a_kᴴ x(t − τ)` for every sample, zero before the first.
fn steered_row(a: &CVec, x: &CMat, delay: usize) -> DVector<Complex64> {
    let n = x.ncols();
    let mut z = DVector::zeros(n);
    for t in delay..n {
        z[t] = a.dotc(&x.column(t - delay));
    }
    z
}

/// `y = g Σ_k √l_k α_k b_k a_kᴴ x(t − τ_k) + z`. Pass `alpha` to fix the RCS
/// gains; otherwise they are drawn as `CN(0, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_echo(
    x: &CMat,
    partition: &LosPartition,
    pose: &TargetPose,
    params: &SensingParams,
    geometry: &ArrayGeometry,
    config: &SimConfig,
    alpha: Option<&[Complex64]>,
    rng: &mut ChaCha8Rng,
) -> Result<EchoObservation> {
    config.validate()?;
    let n = x.ncols();
    let delays = round_trip_delays(partition, config.sample_rate);
    for (k, &d) in delays.iter().enumerate() {
        if d >= n {
            return Err(Error::DelayOverflow {
                k,
                delay: d,
                num_samples: n,
            });
        }
    }
    let alpha: Vec<Complex64> = match alpha {
        Some(a) if a.len() == partition.len() => a.to_vec(),
        Some(a) => {
            return Err(Error::BadInput(format!(
                "{} RCS gains for {} subsections",
                a.len(),
                partition.len()
            )))
        }
        None => complex_gaussian(rng, partition.len(), 1, 1.0).iter().copied().collect(),
    };
    let mut y = CMat::zeros(geometry.n_r, n);
    for ((s, &d), al) in partition.subsections.iter().zip(&delays).zip(&alpha) {
        let a = geometry.steer_tx(s.phi);
        let b = geometry.steer_rx(s.phi) * (al * params.g * s.l.sqrt());
        y += &b * steered_row(&a, x, d).transpose();
    }
    if params.sigma_s2 > 0.0 {
        y += complex_gaussian(rng, geometry.n_r, n, params.sigma_s2);
    }
    Ok(EchoObservation {
        y,
        alpha,
        delays,
        pose: *pose,
    })
}

/// Directions, lengths and delays of one candidate `φ̂`.
#[derive(Debug, Clone)]
struct Candidate {
    phi_o: f64,
    subsections: Vec<(f64, f64, usize)>,
}

/// Everything the estimator treats as known, with the LoS partitions of the
/// search grid computed once.
#[derive(Debug, Clone)]
pub struct DirectionEstimator {
    model: ContourModel,
    pose: TargetPose,
    k: usize,
    sampling: usize,
    geometry: ArrayGeometry,
    sample_rate: f64,
    grid: Vec<Candidate>,
    step: f64,
    refine: bool,
}

impl DirectionEstimator {
    /// `grid` holds `(lo, hi, step)` in radians. `pose` supplies the known
    /// center range and orientation; its direction is ignored.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &ContourModel,
        pose: &TargetPose,
        k: usize,
        sampling: usize,
        geometry: &ArrayGeometry,
        sample_rate: f64,
        grid: (f64, f64, f64),
        refine: bool,
    ) -> Result<Self> {
        let (lo, hi, step) = grid;
        if !(step > 0.0 && hi >= lo) {
            return Err(Error::BadInput("estimator grid is empty".into()));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let mut est = Self {
            model: model.clone(),
            pose: *pose,
            k,
            sampling,
            geometry: *geometry,
            sample_rate,
            grid: Vec::with_capacity(n),
            step,
            refine,
        };
        for i in 0..n {
            let c = est.candidate(lo + i as f64 * step)?;
            est.grid.push(c);
        }
        Ok(est)
    }

    fn candidate(&self, phi_o: f64) -> Result<Candidate> {
        let pose = TargetPose::new(self.pose.d_o, phi_o, self.pose.varphi)?;
        let part = compute_los_partition(&self.model, &pose, self.k, self.sampling)?;
        let delays = round_trip_delays(&part, self.sample_rate);
        Ok(Candidate {
            phi_o,
            subsections: part
                .subsections
                .iter()
                .zip(delays)
                .map(|(s, d)| (s.phi, s.l, d))
                .collect(),
        })
    }

    /// Energy of `y` captured by the least-squares fit of the gains.
    fn captured(&self, cand: &Candidate, y: &CMat, x: &CMat) -> f64 {
        let k = cand.subsections.len();
        let n = x.ncols();
        let mut rows = Vec::with_capacity(k);
        let mut beams = Vec::with_capacity(k);
        for &(phi, l, d) in &cand.subsections {
            if d >= n {
                return f64::NEG_INFINITY;
            }
            rows.push(steered_row(&self.geometry.steer_tx(phi), x, d) * Complex64::new(l.sqrt(), 0.0));
            beams.push(self.geometry.steer_rx(phi));
        }
        let gram = DMatrix::from_fn(k, k, |i, j| beams[i].dotc(&beams[j]) * rows[i].dotc(&rows[j]));
        let r = DVector::from_fn(k, |i, _| {
            let by = y.adjoint() * &beams[i];
            // Σ_t conj(z_i(t)) bᴴy(t)
            rows[i].iter().zip(by.iter()).map(|(z, v)| z.conj() * v.conj()).sum::<Complex64>()
        });
        let svd = gram.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        match svd.solve(&r, tol) {
            Ok(sol) => r.dotc(&sol).re,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Concentrated log-likelihood (up to constants) of direction `phi_o`.
    pub fn score(&self, phi_o: f64, obs: &EchoObservation, x: &CMat) -> Result<f64> {
        Ok(self.captured(&self.candidate(phi_o)?, &obs.y, x))
    }

    pub fn estimate(&self, obs: &EchoObservation, x: &CMat) -> Result<f64> {
        let scores: Vec<f64> = self.grid.iter().map(|c| self.captured(c, &obs.y, x)).collect();
        let (best, _) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .ok_or_else(|| Error::BadInput("empty estimator grid".into()))?;
        let phi = self.grid[best].phi_o;
        if !self.refine {
            return Ok(phi);
        }
        let f = |p: f64| -> f64 {
            match self.candidate(p) {
                Ok(c) => -self.captured(&c, &obs.y, x),
                Err(_) => f64::INFINITY,
            }
        };
        let lo = phi - self.step;
        let hi = phi + self.step;
        let lo = lo.max(-std::f64::consts::FRAC_PI_2 + 1e-9);
        let hi = hi.min(std::f64::consts::FRAC_PI_2 - 1e-9);
        Ok(golden_section(f, lo, hi, 1e-12))
    }
}

/// Minimizer of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// One Monte-Carlo observation with its own RNG stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub estimate: f64,
    pub error: f64,
}

/// Fresh symbols and noise per run; RCS gains per run or fixed from the
/// base stream depending on `config.rcs_redraw`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_run(
    run: usize,
    w: &CMat,
    partition: &LosPartition,
    pose: &TargetPose,
    params: &SensingParams,
    geometry: &ArrayGeometry,
    config: &SimConfig,
    estimator: &DirectionEstimator,
) -> Result<RunOutcome> {
    let fixed: Option<Vec<Complex64>> = (!config.rcs_redraw).then(|| {
        let mut base = ChaCha8Rng::seed_from_u64(config.seed);
        complex_gaussian(&mut base, partition.len(), 1, 1.0).iter().copied().collect()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run as u64 + 1);
    let x = synthesize_tx(w, config.num_samples, &mut rng);
    let obs = synthesize_echo(&x, partition, pose, params, geometry, config, fixed.as_deref(), &mut rng)?;
    let estimate = estimator.estimate(&obs, &x)?;
    Ok(RunOutcome {
        run,
        estimate,
        error: estimate - pose.phi_o,
    })
}
