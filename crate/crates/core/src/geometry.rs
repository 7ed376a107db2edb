//! Truncated-Fourier-series target contour, its placement in the global
//! frame and the partition of its line-of-sight part.
//!
//! Bearings follow the array convention: `φ` is measured from the +y
//! boresight towards +x, so a point at range `d` and bearing `φ` sits at
//! `(d sin φ, d cos φ)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourModel {
    /// Cosine coefficients `a_1 … a_Q` (meters).
    pub m: Vec<f64>,
    /// Sine coefficients `b_1 … b_Q` (meters).
    pub n: Vec<f64>,
}

impl ContourModel {
    pub fn new(m: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        if m.is_empty() || m.len() != n.len() {
            return Err(Error::InvalidModel(format!(
                "coefficient lists have lengths {} and {}",
                m.len(),
                n.len()
            )));
        }
        if m.iter().chain(&n).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(Self { m, n })
    }

    pub fn order(&self) -> usize {
        self.m.len()
    }

    /// `r(u)` in local coordinates.
    pub fn point(&self, u: f64) -> Vector2<f64> {
        let mut p = Vector2::zeros();
        for (q, (a, b)) in self.m.iter().zip(&self.n).enumerate() {
            let (s, c) = ((q + 1) as f64 * u).sin_cos();
            p.x += a * c;
            p.y += b * s;
        }
        p
    }

    /// `dr/du`.
    pub fn derivative(&self, u: f64) -> Vector2<f64> {
        let mut d = Vector2::zeros();
        for (q, (a, b)) in self.m.iter().zip(&self.n).enumerate() {
            let qf = (q + 1) as f64;
            let (s, c) = (qf * u).sin_cos();
            d.x -= qf * a * s;
            d.y += qf * b * c;
        }
        d
    }

    /// Cosine and sine harmonics `[cos(qu)]`, `[sin(qu)]` for `q = 1…Q`.
    pub fn harmonics(&self, u: f64) -> (Vec<f64>, Vec<f64>) {
        (1..=self.order())
            .map(|q| {
                let (s, c) = (q as f64 * u).sin_cos();
                (c, s)
            })
            .unzip()
    }

    /// Largest radius over a dense sampling, padded by the worst
    /// between-sample excursion.
    pub fn max_radius(&self) -> f64 {
        let n = 4096;
        let step = TAU / n as f64;
        let mut rmax: f64 = 0.0;
        let mut dmax: f64 = 0.0;
        for i in 0..n {
            let u = i as f64 * step;
            rmax = rmax.max(self.point(u).norm());
            dmax = dmax.max(self.derivative(u).norm());
        }
        rmax + 0.5 * step * dmax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub d_o: f64,
    pub phi_o: f64,
    pub varphi: f64,
}

impl TargetPose {
    pub fn new(d_o: f64, phi_o: f64, varphi: f64) -> Result<Self> {
        if !(d_o.is_finite() && d_o > 0.0) {
            return Err(Error::InvalidPose(format!("center range {d_o} must be positive")));
        }
        if !(phi_o.abs() < PI / 2.0) {
            return Err(Error::InvalidPose(format!("direction {phi_o} outside (-pi/2, pi/2)")));
        }
        if !varphi.is_finite() {
            return Err(Error::InvalidPose("orientation is not finite".into()));
        }
        Ok(Self { d_o, phi_o, varphi })
    }

    pub fn center(&self) -> Vector2<f64> {
        let (s, c) = self.phi_o.sin_cos();
        Vector2::new(self.d_o * s, self.d_o * c)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.varphi.sin_cos();
        Matrix2::new(c, -s, s, c)
    }
}

pub fn contour_point(model: &ContourModel, u: f64) -> Vector2<f64> {
    model.point(u)
}

pub fn global_point(model: &ContourModel, pose: &TargetPose, u: f64) -> Vector2<f64> {
    pose.center() + pose.rotation() * model.point(u)
}

/// Bearing from the +y axis.
pub fn bearing(p: &Vector2<f64>) -> f64 {
    p.x.atan2(p.y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosSubsection {
    pub u: f64,
    pub l: f64,
    pub d: f64,
    pub phi: f64,
    pub r: Vector2<f64>,
    pub p: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosPartition {
    pub subsections: Vec<LosSubsection>,
    pub u_lower: f64,
    /// May exceed 2π when the visible arc wraps past `u = 0`.
    pub u_upper: f64,
    /// False when the visible set had several components and only the
    /// largest was kept.
    pub contiguous: bool,
}

impl LosPartition {
    pub fn len(&self) -> usize {
        self.subsections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsections.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.subsections.iter().map(|s| s.l).sum()
    }

    /// Interval `[lo, hi]` of subsection `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let du = (self.u_upper - self.u_lower) / self.subsections.len() as f64;
        (self.u_lower + k as f64 * du, self.u_lower + (k + 1) as f64 * du)
    }

    /// Whether local direction `u` lies on the kept visible arc.
    pub fn contains(&self, u: f64) -> bool {
        let off = (u - self.u_lower).rem_euclid(TAU);
        off <= self.u_upper - self.u_lower
    }
}

/// Arc length of the contour over `[a, b]`.
pub fn arc_length(model: &ContourModel, a: f64, b: f64) -> f64 {
    let f = |u: f64| model.derivative(u).norm();
    adaptive_simpson(&f, a, b, 1e-12 * (1.0 + (b - a).abs()), 48)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, eps, depth)
}

/// `p × dp/du`; zero where the line of sight grazes the contour.
fn grazing(model: &ContourModel, pose: &TargetPose, u: f64) -> f64 {
    let p = global_point(model, pose, u);
    let dp = pose.rotation() * model.derivative(u);
    p.x * dp.y - p.y * dp.x
}

fn segments_cross(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> bool {
    // Segment origin→p against a→b.
    let cross = |u: Vector2<f64>, v: Vector2<f64>| u.x * v.y - u.y * v.x;
    let e = b - a;
    let den = cross(p, e);
    if den.abs() < 1e-300 {
        return false;
    }
    let t = cross(a, e) / den;
    let s = cross(a, p) / den;
    t > 0.0 && t < 1.0 - 1e-9 && (0.0..=1.0).contains(&s)
}

/// Sampled contour with segments bucketed by the bearing interval they
/// subtend, so a ray only meets the segments of its own bucket.
struct Polyline {
    u: Vec<f64>,
    p: Vec<Vector2<f64>>,
    phi_o: f64,
    lo: f64,
    width: f64,
    buckets: Vec<Vec<usize>>,
}

impl Polyline {
    fn new(u: Vec<f64>, p: Vec<Vector2<f64>>, phi_o: f64) -> Self {
        let n = p.len();
        let rel = |q: &Vector2<f64>| (bearing(q) - phi_o + PI).rem_euclid(TAU) - PI;
        let beta: Vec<f64> = p.iter().map(rel).collect();
        let lo = beta.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / n as f64).max(1e-12);
        let nb = ((hi - lo) / width).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nb];
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (beta[i].min(beta[j]), beta[i].max(beta[j]));
            let (ba, bb) = (((a - lo) / width) as usize, ((b - lo) / width) as usize);
            for bucket in &mut buckets[ba.min(nb - 1)..=bb.min(nb - 1)] {
                bucket.push(i);
            }
        }
        Self {
            u,
            p,
            phi_o,
            lo,
            width,
            buckets,
        }
    }

    fn occludes_point(&self, q: Vector2<f64>, u: f64) -> bool {
        let n = self.p.len();
        let h = TAU / n as f64;
        let beta = (bearing(&q) - self.phi_o + PI).rem_euclid(TAU) - PI;
        let idx = ((beta - self.lo) / self.width).floor();
        if idx < 0.0 || idx as usize >= self.buckets.len() {
            return false;
        }
        for &i in &self.buckets[idx as usize] {
            let mid = self.u[i] + 0.5 * h;
            let du = (mid - u + PI).rem_euclid(TAU) - PI;
            if du.abs() <= 2.0 * h {
                continue;
            }
            if segments_cross(q, self.p[i], self.p[(i + 1) % n]) {
                return true;
            }
        }
        false
    }

    fn occluded(&self, model: &ContourModel, pose: &TargetPose, u: f64) -> bool {
        self.occludes_point(global_point(model, pose, u), u)
    }
}

fn bisect(mut a: f64, mut b: f64, inside_a: impl Fn(f64) -> bool) -> f64 {
    // inside_a(a) holds, inside_a(b) does not.
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if inside_a(m) {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Refines the visible/invisible transition between sample `vis` (visible)
/// and its neighbour `inv` (`inv = vis ± 1`).
fn refine_edge(
    model: &ContourModel,
    pose: &TargetPose,
    line: &Polyline,
    vis: i64,
    dir: i64,
    h: f64,
) -> f64 {
    let at = |i: i64| i as f64 * h;
    let window = 24;
    let mut best: Option<(i64, i64)> = None;
    for off in 0..window {
        for cand in [vis + dir * off, vis - dir * (off + 1)] {
            let (a, b) = (cand, cand + dir);
            if grazing(model, pose, at(a)).signum() != grazing(model, pose, at(b)).signum() {
                best = Some((a, b));
                break;
            }
        }
        if best.is_some() {
            break;
        }
    }
    if let Some((a, b)) = best {
        let sa = grazing(model, pose, at(a)).signum();
        return bisect(at(a), at(b), |u| grazing(model, pose, u).signum() == sa);
    }
    bisect(at(vis), at(vis + dir), |u| !line.occluded(model, pose, u))
}

/// Finds the visible contour arc by ray casting and splits it into `k`
/// equal-`Δu` subsections.
pub fn compute_los_partition(
    model: &ContourModel,
    pose: &TargetPose,
    k: usize,
    sampling: usize,
) -> Result<LosPartition> {
    if k == 0 {
        return Err(Error::BadInput("K must be at least 1".into()));
    }
    if sampling < 1000 {
        return Err(Error::BadInput(format!("sampling {sampling} below 1000")));
    }
    let rmax = model.max_radius();
    if pose.d_o <= rmax {
        return Err(Error::InvalidPose(format!(
            "center range {} does not clear the contour radius {rmax:.4}",
            pose.d_o
        )));
    }
    let n = sampling;
    let h = TAU / n as f64;
    let us: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let pts: Vec<Vector2<f64>> = us.iter().map(|&u| global_point(model, pose, u)).collect();
    let line = Polyline::new(us, pts, pose.phi_o);
    let visible: Vec<bool> = (0..n)
        .map(|i| !line.occludes_point(line.p[i], line.u[i]))
        .collect();

    let runs = circular_runs(&visible);
    if runs.is_empty() {
        return Err(Error::NoVisibleContour);
    }
    let contiguous = runs.len() == 1;
    if !contiguous {
        log::warn!(
            "visible contour has {} components; keeping the largest",
            runs.len()
        );
    }
    let (start, len) = *runs.iter().max_by_key(|r| r.1).unwrap();
    if len == n {
        return Err(Error::InvalidPose("whole contour visible; base station inside target".into()));
    }
    let first = start as i64;
    let last = (start + len - 1) as i64;
    let u_lower = refine_edge(model, pose, &line, first, -1, h);
    let mut u_upper = refine_edge(model, pose, &line, last, 1, h);
    if u_upper <= u_lower {
        u_upper += TAU;
    }

    let du = (u_upper - u_lower) / k as f64;
    let rot = pose.rotation();
    let subsections = (0..k)
        .map(|i| {
            let lo = u_lower + i as f64 * du;
            let u = lo + 0.5 * du;
            let r = model.point(u);
            let p = pose.center() + rot * r;
            LosSubsection {
                u,
                l: arc_length(model, lo, lo + du),
                d: p.norm(),
                phi: bearing(&p),
                r,
                p,
            }
        })
        .collect();
    Ok(LosPartition {
        subsections,
        u_lower,
        u_upper,
        contiguous,
    })
}

/// Maximal runs of `true` as `(start, length)`, treating the slice as
/// circular.
fn circular_runs(v: &[bool]) -> Vec<(usize, usize)> {
    let n = v.len();
    if v.iter().all(|&b| b) {
        return vec![(0, n)];
    }
    let Some(pivot) = (0..n).find(|&i| !v[i]) else {
        return Vec::new();
    };
    let mut runs = Vec::new();
    let mut i = 1;
    while i <= n {
        let idx = (pivot + i) % n;
        if v[idx] {
            let start = idx;
            let mut len = 0;
            while i <= n && v[(pivot + i) % n] {
                len += 1;
                i += 1;
            }
            runs.push((start, len));
        } else {
            i += 1;
        }
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum JacobianMode {
    Exact,
    #[default]
    Approximate,
}

/// Per-subsection `(∂d_k/∂κ₁, ∂φ_k/∂κ₁)` with `κ₁ = [d_o, φ_o, varphi]`.
///
/// Exact mode differentiates `p_k = p_o + V r_k` directly. Approximate mode
/// uses the far-field forms `μ ≈ [1, rᵀVᵀp⊥/d_o, -rᵀVᵀp⊥/d_o]`, `η ≈ [0, 1, 0]`.
pub fn pose_jacobians(
    partition: &LosPartition,
    pose: &TargetPose,
    mode: JacobianMode,
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let po = pose.center();
    let pperp = Vector2::new(-po.y, po.x);
    let rot = pose.rotation();
    let d_o = pose.d_o;
    partition
        .subsections
        .iter()
        .map(|s| {
            let vr = rot * s.r;
            let along = vr.dot(&po);
            let across = vr.dot(&pperp);
            match mode {
                JacobianMode::Exact => {
                    let d = s.d;
                    let d2 = d * d;
                    (
                        Vector3::new((d_o + along / d_o) / d, -across / d, -across / d),
                        Vector3::new(
                            across / (d_o * d2),
                            (d_o * d_o + along) / d2,
                            -(along + s.r.norm_squared()) / d2,
                        ),
                    )
                }
                JacobianMode::Approximate => (
                    Vector3::new(1.0, across / d_o, -across / d_o),
                    Vector3::new(0.0, 1.0, 0.0),
                ),
            }
        })
        .collect()
}
