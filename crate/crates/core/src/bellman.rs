//! Grid value iteration for the scalar Burkholder (Bellman) surface of a
//! two-point real coefficient set `{b, B}`, with bisection for approximate
//! admissibility thresholds.
//!
//! The surface starts from the payoff `|y|^p - beta^p |x|^p` on the square
//! `[-L, L]^2` and is repeatedly replaced by its least concave majorant
//! along lines of direction `(1, b)` and `(1, B)`. Chord endpoints never
//! leave the square, so each envelope pass only under-approximates the true
//! envelope; because the true surface is p-homogeneous, every sweep also
//! reinjects `U(x, y) >= 2^p U(x/2, y/2)` (and the down-scaled counterpart)
//! at exact grid nodes. Sub-threshold trial betas then escalate the origin
//! value geometrically past the divergence cap, while admissible betas stay
//! dominated by any finite concave majorant, so Converged/Diverged reports
//! the admissibility dichotomy at grid resolution. Converged status is a
//! heuristic certificate, not a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BellmanError {
    #[error("resolution must be odd and at least 5, got {0}")]
    BadResolution(usize),
    #[error("need endpoints b < B, got b = {0}, B = {1}")]
    BadEndpoints(f64, f64),
    #[error("need p > 1, got {0}")]
    BadExponent(f64),
    #[error("need half width L > 0 and finite")]
    BadHalfWidth,
    #[error("trial beta must be nonnegative")]
    BadBeta,
    #[error("transform endpoints must differ")]
    EqualCoefficients,
    #[error("direction components must differ")]
    EqualDirection,
    #[error("invalid bracket: low end {lo:?}, high end {hi:?}")]
    InvalidBracket { lo: Status, hi: Status },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    Diverged,
    MaxIter,
}

/// A scalar surface sampled on the uniform grid of `[-L, L]^2`.
///
/// Values are stored row-major in the x index; out-of-domain evaluations of
/// derived surfaces are marked NaN and skipped by the report scans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surface {
    pub half_width: f64,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl Surface {
    pub fn filled(half_width: f64, resolution: usize, f: impl Fn(f64, f64) -> f64) -> Surface {
        let mut values = vec![0.0; resolution * resolution];
        let h = 2.0 * half_width / (resolution - 1) as f64;
        for ix in 0..resolution {
            let x = -half_width + ix as f64 * h;
            for iy in 0..resolution {
                let y = -half_width + iy as f64 * h;
                values[ix * resolution + iy] = f(x, y);
            }
        }
        Surface { half_width, resolution, values }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.resolution + iy]
    }

    /// Bilinear read; NaN outside the square.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let l = self.half_width;
        if !(x >= -l && x <= l && y >= -l && y <= l) {
            return f64::NAN;
        }
        let h = self.spacing();
        let fx = ((x + l) / h).clamp(0.0, (self.resolution - 1) as f64);
        let fy = ((y + l) / h).clamp(0.0, (self.resolution - 1) as f64);
        let ix = (fx as usize).min(self.resolution - 2);
        let iy = (fy as usize).min(self.resolution - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.at(ix, iy);
        let v01 = self.at(ix, iy + 1);
        let v10 = self.at(ix + 1, iy);
        let v11 = self.at(ix + 1, iy + 1);
        (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest local first-difference quotient, used to scale interpolation
    /// tolerances.
    pub fn lipschitz_bound(&self) -> f64 {
        let m = self.resolution;
        let h = self.spacing();
        let mut best = 0.0_f64;
        for ix in 0..m {
            for iy in 0..m {
                let v = self.at(ix, iy);
                if v.is_nan() {
                    continue;
                }
                if ix + 1 < m && !self.at(ix + 1, iy).is_nan() {
                    best = best.max((self.at(ix + 1, iy) - v).abs() / h);
                }
                if iy + 1 < m && !self.at(ix, iy + 1).is_nan() {
                    best = best.max((self.at(ix, iy + 1) - v).abs() / h);
                }
            }
        }
        best
    }

    pub fn write_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,y,u")?;
        for ix in 0..self.resolution {
            for iy in 0..self.resolution {
                writeln!(out, "{},{},{}", self.coord(ix), self.coord(iy), self.at(ix, iy))?;
            }
        }
        Ok(())
    }
}

/// Upper concave envelope of a uniformly sampled profile, evaluated at the
/// sample `zero_pos`. Returns at least the sample value there.
fn envelope_at(vals: &[f64], zero_pos: usize) -> f64 {
    let n = vals.len();
    if n <= 1 {
        return vals[zero_pos];
    }
    // Monotone scan keeping slopes strictly decreasing (upper hull).
    let mut hull: Vec<usize> = Vec::with_capacity(n.min(32));
    for j in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it lies on or below the chord a -> j
            let lhs = (vals[b] - vals[a]) * (j - a) as f64;
            let rhs = (vals[j] - vals[a]) * (b - a) as f64;
            if lhs <= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    // locate the hull segment containing zero_pos
    match hull.binary_search(&zero_pos) {
        Ok(_) => vals[zero_pos],
        Err(next) => {
            let a = hull[next - 1];
            let b = hull[next];
            let t = (zero_pos - a) as f64 / (b - a) as f64;
            vals[a] + t * (vals[b] - vals[a])
        }
    }
}

/// Trial configuration and state of the value iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BellmanGrid {
    pub p: f64,
    /// Lower transform endpoint b.
    pub lo: f64,
    /// Upper transform endpoint B.
    pub hi: f64,
    pub beta: f64,
    pub cap: f64,
    pub surface: Surface,
}

impl BellmanGrid {
    pub fn new(
        p: f64,
        lo: f64,
        hi: f64,
        beta: f64,
        half_width: f64,
        resolution: usize,
    ) -> Result<Self, BellmanError> {
        if resolution < 5 || resolution % 2 == 0 {
            return Err(BellmanError::BadResolution(resolution));
        }
        if !(lo < hi) {
            return Err(BellmanError::BadEndpoints(lo, hi));
        }
        if !(p > 1.0) {
            return Err(BellmanError::BadExponent(p));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(BellmanError::BadHalfWidth);
        }
        if !(beta >= 0.0) {
            return Err(BellmanError::BadBeta);
        }
        let cap = 1e10 * (1.0 + half_width.powf(p));
        let surface = initial_surface(p, beta, half_width, resolution);
        Ok(BellmanGrid { p, lo, hi, beta, cap, surface })
    }

    pub fn reset(&mut self) {
        self.surface = initial_surface(self.p, self.beta, self.surface.half_width, self.surface.resolution);
    }

    /// One directional envelope pass; pointwise non-decreasing.
    pub fn concavify_pass(&mut self, slope: f64) {
        let out = concavified(&self.surface, slope);
        self.surface.values = out;
    }

    /// Envelope along `(1, b)`, envelope along `(1, B)`, then the exact-node
    /// homogeneity reinjection. Returns the sup-norm change.
    pub fn bellman_step(&mut self) -> f64 {
        let before = self.surface.values.clone();
        self.concavify_pass(self.lo);
        self.concavify_pass(self.hi);
        let reinjected = homogeneity_pass(&self.surface, self.p);
        self.surface.values = reinjected;
        before
            .iter()
            .zip(&self.surface.values)
            .map(|(a, b)| b - a)
            .fold(0.0_f64, f64::max)
    }

    pub fn iterate(&mut self, max_iter: usize, tol: f64) -> IterationOutcome {
        assert!(max_iter >= 1);
        let mut last_change = f64::INFINITY;
        for it in 1..=max_iter {
            last_change = self.bellman_step();
            if self.surface.values.iter().any(|&v| v > self.cap) {
                return IterationOutcome { status: Status::Diverged, iterations: it, sup_change: last_change };
            }
            if last_change < tol {
                return IterationOutcome { status: Status::Converged, iterations: it, sup_change: last_change };
            }
        }
        IterationOutcome { status: Status::MaxIter, iterations: max_iter, sup_change: last_change }
    }

    /// Max of `U(x, a x)` over grid x for `a in {b, B}`; nonpositive up to
    /// tolerance on converged surfaces.
    pub fn diagonal_max(&self) -> f64 {
        let m = self.surface.resolution;
        let mut best = f64::NEG_INFINITY;
        for a in [self.lo, self.hi] {
            for ix in 0..m {
                let x = self.surface.coord(ix);
                let v = self.surface.interpolate(x, a * x);
                if !v.is_nan() {
                    best = best.max(v);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub status: Status,
    pub iterations: usize,
    pub sup_change: f64,
}

/// The payoff surface `|y|^p - beta^p |x|^p`.
pub fn initial_surface(p: f64, beta: f64, half_width: f64, resolution: usize) -> Surface {
    let bp = beta.powf(p);
    Surface::filled(half_width, resolution, |x, y| y.abs().powf(p) - bp * x.abs().powf(p))
}

fn concavified(surface: &Surface, slope: f64) -> Vec<f64> {
    let m = surface.resolution;
    let h = surface.spacing();
    let l = surface.half_width;
    let exact = slope.fract() == 0.0 && slope.abs() <= (m - 1) as f64;
    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(ix, row)| {
        let mut vals: Vec<f64> = Vec::with_capacity(2 * m);
        let x = surface.coord(ix);
        for (iy, slot) in row.iter_mut().enumerate() {
            let y = surface.coord(iy);
            vals.clear();
            if exact {
                // integer slopes stay on grid nodes when stepping x by h
                let s = slope as i64;
                let mut k_lo = -(ix as i64);
                let mut k_hi = (m - 1 - ix) as i64;
                if s > 0 {
                    k_lo = k_lo.max(-(iy as i64) / s - 1).max(-(iy as i64));
                    while k_lo * s + (iy as i64) < 0 {
                        k_lo += 1;
                    }
                    k_hi = k_hi.min(((m - 1 - iy) as i64) / s);
                } else if s < 0 {
                    k_lo = k_lo.max(-(((m - 1 - iy) as i64) / (-s)));
                    k_hi = k_hi.min((iy as i64) / (-s));
                }
                for k in k_lo..=k_hi {
                    let jx = (ix as i64 + k) as usize;
                    let jy = (iy as i64 + k * s) as usize;
                    vals.push(surface.at(jx, jy));
                }
                *slot = envelope_at(&vals, (-k_lo) as usize);
            } else {
                // parameter step keeps both coordinates within one cell
                let delta = h / slope.abs().max(1.0);
                let mut k_lo = ((-l - x) / delta).ceil() as i64;
                let mut k_hi = ((l - x) / delta).floor() as i64;
                if slope > 0.0 {
                    k_lo = k_lo.max(((-l - y) / (slope * delta)).ceil() as i64);
                    k_hi = k_hi.min(((l - y) / (slope * delta)).floor() as i64);
                } else if slope < 0.0 {
                    k_lo = k_lo.max(((l - y) / (slope * delta)).ceil() as i64);
                    k_hi = k_hi.min(((-l - y) / (slope * delta)).floor() as i64);
                }
                k_lo = k_lo.min(0);
                k_hi = k_hi.max(0);
                for k in k_lo..=k_hi {
                    if k == 0 {
                        vals.push(surface.at(ix, iy));
                        continue;
                    }
                    let t = k as f64 * delta;
                    let v = surface.interpolate(x + t, y + slope * t);
                    vals.push(if v.is_nan() { surface.at(ix, iy) } else { v });
                }
                *slot = envelope_at(&vals, (-k_lo) as usize);
            }
        }
    });
    out
}

/// Exact-node homogeneity reinjection: `U(x, y) >= 2^p U(x/2, y/2)` where
/// the half point is a node, and `U(x, y) >= 2^{-p} U(2x, 2y)` where the
/// doubled point is a node. Both hold with equality for the p-homogeneous
/// limit surface, so exact initial surfaces stay fixed points.
fn homogeneity_pass(surface: &Surface, p: f64) -> Vec<f64> {
    let m = surface.resolution;
    let center = (m - 1) / 2;
    let up = 2.0_f64.powf(p);
    let down = 2.0_f64.powf(-p);
    let mut out = surface.values.clone();
    out.par_chunks_mut(m).enumerate().for_each(|(ix, row)| {
        for (iy, slot) in row.iter_mut().enumerate() {
            if (ix + center) % 2 == 0 && (iy + center) % 2 == 0 {
                let hx = (ix + center) / 2;
                let hy = (iy + center) / 2;
                let cand = up * surface.at(hx, hy);
                if cand > *slot {
                    *slot = cand;
                }
            }
            let dx = 2 * ix as i64 - center as i64;
            let dy = 2 * iy as i64 - center as i64;
            if dx >= 0 && dy >= 0 && (dx as usize) < m && (dy as usize) < m {
                let cand = down * surface.at(dx as usize, dy as usize);
                if cand > *slot {
                    *slot = cand;
                }
            }
        }
    });
    out
}

// ---------------------------------------------------------------------------
// Threshold search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub beta_hat: f64,
    pub bracket: (f64, f64),
    pub lo_status: Status,
    pub hi_status: Status,
    pub probes: Vec<(f64, Status, usize)>,
}

pub const BISECTION_WIDTH: f64 = 1e-2;

/// Bisection between a diverging and a converging trial beta, to width
/// [`BISECTION_WIDTH`]. The bracket must already separate the behaviors.
#[allow(clippy::too_many_arguments)]
pub fn beta_threshold(
    p: f64,
    lo: f64,
    hi: f64,
    half_width: f64,
    resolution: usize,
    bracket: (f64, f64),
    max_iter: usize,
    tol: f64,
) -> Result<ThresholdOutcome, BellmanError> {
    let probe = |beta: f64| -> Result<(Status, usize), BellmanError> {
        let mut grid = BellmanGrid::new(p, lo, hi, beta, half_width, resolution)?;
        let out = grid.iterate(max_iter, tol);
        Ok((out.status, out.iterations))
    };
    let mut probes = Vec::new();
    let (mut beta_lo, mut beta_hi) = bracket;
    let (lo_status, lo_iters) = probe(beta_lo)?;
    probes.push((beta_lo, lo_status, lo_iters));
    let (hi_status, hi_iters) = probe(beta_hi)?;
    probes.push((beta_hi, hi_status, hi_iters));
    if lo_status != Status::Diverged || hi_status == Status::Diverged {
        return Err(BellmanError::InvalidBracket { lo: lo_status, hi: hi_status });
    }
    while beta_hi - beta_lo > BISECTION_WIDTH {
        let mid = 0.5 * (beta_lo + beta_hi);
        let (status, iters) = probe(mid)?;
        probes.push((mid, status, iters));
        if status == Status::Diverged {
            beta_lo = mid;
        } else {
            beta_hi = mid;
        }
    }
    Ok(ThresholdOutcome {
        beta_hat: 0.5 * (beta_lo + beta_hi),
        bracket: (beta_lo, beta_hi),
        lo_status,
        hi_status,
        probes,
    })
}

// ---------------------------------------------------------------------------
// Biconcave companion surfaces
// ---------------------------------------------------------------------------

/// `V(x, y) = U((x - y)/2, (a2 x - a1 y)/2)` by bilinear reads; NaN where
/// the argument leaves the square.
pub fn v_transform(u: &Surface, a1: f64, a2: f64) -> Result<Surface, BellmanError> {
    if a1 == a2 {
        return Err(BellmanError::EqualCoefficients);
    }
    Ok(Surface::filled(u.half_width, u.resolution, |x, y| {
        u.interpolate((x - y) / 2.0, (a2 * x - a1 * y) / 2.0)
    }))
}

/// Inverse map `U(x, y) = V((2y - 2x a1)/(a2 - a1), (2y - 2x a2)/(a2 - a1))`.
pub fn back_transform(v: &Surface, a1: f64, a2: f64) -> Result<Surface, BellmanError> {
    if a1 == a2 {
        return Err(BellmanError::EqualCoefficients);
    }
    Ok(Surface::filled(v.half_width, v.resolution, |x, y| {
        v.interpolate((2.0 * y - 2.0 * x * a1) / (a2 - a1), (2.0 * y - 2.0 * x * a2) / (a2 - a1))
    }))
}

/// Report of a midpoint-concavity scan along one direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcavityReport {
    /// Whether `(a2 c1 - a1 c2)/(c1 - c2)` lies in `[a1, a2]`; when it does
    /// not, the scan is informational only.
    pub covered: bool,
    pub membership_value: f64,
    pub max_violation: f64,
    pub samples: usize,
}

/// Scan midpoint concavity of `V` along direction `(c1, c2)`; the defining
/// directions of the transform satisfy the membership condition.
pub fn directional_concavity_report(
    v: &Surface,
    c1: f64,
    c2: f64,
    a1: f64,
    a2: f64,
) -> Result<ConcavityReport, BellmanError> {
    if c1 == c2 {
        return Err(BellmanError::EqualDirection);
    }
    if a1 == a2 {
        return Err(BellmanError::EqualCoefficients);
    }
    let membership_value = (a2 * c1 - a1 * c2) / (c1 - c2);
    let covered = membership_value >= a1.min(a2) - 1e-12 && membership_value <= a1.max(a2) + 1e-12;
    let m = v.resolution;
    let h = v.spacing();
    let scale = c1.abs().max(c2.abs()).max(1.0);
    let (dx, dy) = (c1 / scale * h, c2 / scale * h);
    let mut max_violation = f64::NEG_INFINITY;
    let mut samples = 0usize;
    for ix in 0..m {
        let x = v.coord(ix);
        for iy in 0..m {
            let y = v.coord(iy);
            let mid = v.at(ix, iy);
            let plus = v.interpolate(x + dx, y + dy);
            let minus = v.interpolate(x - dx, y - dy);
            if mid.is_nan() || plus.is_nan() || minus.is_nan() {
                continue;
            }
            samples += 1;
            max_violation = max_violation.max(0.5 * (plus + minus) - mid);
        }
    }
    Ok(ConcavityReport { covered, membership_value, max_violation, samples })
}

/// Max midpoint-convexity violation of `U(x, .)` along vertical grid lines.
pub fn convexity_in_y_violation(u: &Surface) -> f64 {
    let m = u.resolution;
    let mut worst = f64::NEG_INFINITY;
    for ix in 0..m {
        for iy in 1..m - 1 {
            let a = u.at(ix, iy - 1);
            let b = u.at(ix, iy);
            let c = u.at(ix, iy + 1);
            if a.is_nan() || b.is_nan() || c.is_nan() {
                continue;
            }
            worst = worst.max(b - 0.5 * (a + c));
        }
    }
    worst
}

/// Max midpoint-concavity violation of a surface separately in each
/// coordinate (the biconcavity scan).
pub fn biconcavity_violation(v: &Surface) -> f64 {
    let m = v.resolution;
    let mut worst = f64::NEG_INFINITY;
    for ix in 0..m {
        for iy in 0..m {
            let mid = v.at(ix, iy);
            if mid.is_nan() {
                continue;
            }
            if ix >= 1 && ix + 1 < m {
                let (a, b) = (v.at(ix - 1, iy), v.at(ix + 1, iy));
                if !a.is_nan() && !b.is_nan() {
                    worst = worst.max(0.5 * (a + b) - mid);
                }
            }
            if iy >= 1 && iy + 1 < m {
                let (a, b) = (v.at(ix, iy - 1), v.at(ix, iy + 1));
                if !a.is_nan() && !b.is_nan() {
                    worst = worst.max(0.5 * (a + b) - mid);
                }
            }
        }
    }
    worst
}

/// Metadata record exported next to surface CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceMetadata {
    pub p: f64,
    pub b: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub beta: f64,
    pub status: Status,
    pub iterations: usize,
    pub half_width: f64,
    pub resolution: usize,
}
