//! Centered half-wavelength ULA responses and communication channels.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_t: usize,
    pub n_r: usize,
}

impl ArrayGeometry {
    pub fn new(n_t: usize, n_r: usize) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::BadInput("arrays need at least one element".into()));
        }
        Ok(Self { n_t, n_r })
    }

    pub fn steer_tx(&self, phi: f64) -> CVec {
        steer(self.n_t, phi)
    }

    pub fn steer_rx(&self, phi: f64) -> CVec {
        steer(self.n_r, phi)
    }

    pub fn steer_tx_deriv(&self, phi: f64) -> CVec {
        steer_deriv(self.n_t, phi)
    }

    pub fn steer_rx_deriv(&self, phi: f64) -> CVec {
        steer_deriv(self.n_r, phi)
    }
}

/// Element weight `(n-1)/2 - i` about the array center.
fn offset(n: usize, i: usize) -> f64 {
    (n as f64 - 1.0) / 2.0 - i as f64
}

pub fn steer(n: usize, phi: f64) -> CVec {
    let s = std::f64::consts::PI * phi.sin();
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, s * offset(n, i)))
}

pub fn steer_deriv(n: usize, phi: f64) -> CVec {
    let c = std::f64::consts::PI * phi.cos();
    let a = steer(n, phi);
    CVec::from_fn(n, |i, _| a[i] * Complex64::new(0.0, c * offset(n, i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ChannelModel {
    #[default]
    LosOnly,
    /// Extra single-ray paths with `CN(0, decay^ℓ)` gains at uniform angles.
    Multipath { paths: usize, decay: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CVec>,
    /// Per-user noise power in watts.
    pub noise: Vec<f64>,
}

impl ChannelSet {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

pub fn generate_channels(
    geometry: &ArrayGeometry,
    angles: &[f64],
    noise: f64,
    model: ChannelModel,
    seed: u64,
) -> Result<ChannelSet> {
    let half = std::f64::consts::FRAC_PI_2;
    if let Some(a) = angles.iter().find(|a| !(a.abs() < half)) {
        return Err(Error::BadInput(format!("user angle {a} outside (-pi/2, pi/2)")));
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::BadInput("user noise power must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = angles
        .iter()
        .map(|&phi| {
            let mut h = geometry.steer_tx(phi);
            if let ChannelModel::Multipath { paths, decay } = model {
                for l in 1..=paths {
                    let scale = (decay.powi(l as i32) / 2.0).sqrt();
                    let gain = Complex64::new(
                        scale * rng.sample::<f64, _>(StandardNormal),
                        scale * rng.sample::<f64, _>(StandardNormal),
                    );
                    let theta = rng.random_range(-half..half);
                    h += geometry.steer_tx(theta) * gain;
                }
            }
            h
        })
        .collect();
    let set = ChannelSet {
        h,
        noise: vec![noise; angles.len()],
    };
    for (c, h) in set.h.iter().enumerate() {
        if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) || h.norm() == 0.0 {
            return Err(Error::BadInput(format!("channel of user {c} is degenerate")));
        }
    }
    Ok(set)
}
