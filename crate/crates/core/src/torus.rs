//! Lattice-sampled Fourier multipliers on torus grids and operator-norm
//! lower bounds by a monotone-safeguarded nonlinear power method.
//!
//! Fields are sampled on the uniform `N^d` grid of the torus; applying an
//! operator runs a forward DFT per space coordinate, multiplies mode `k` by
//! the table value, and transforms back. Frequencies use the standard wrap
//! `t -> t` for `t < ceil(N/2)` and `t -> t - N` otherwise, so for even `N`
//! the Nyquist bin carries the symbol value at its negative representative.

use crate::spaces::{norm_q, Exponent, Field, Scalar, SpaceSpec};
use crate::symbols::LatticeTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TorusError {
    #[error("field resolution {field} does not match table resolution {table}")]
    ResolutionMismatch { field: usize, table: usize },
    #[error("field dimension {field} does not match table dimension {table}")]
    DimensionMismatch { field: usize, table: usize },
    #[error("grid fields need p > 1 for norm estimation")]
    BadExponent,
    #[error("non-finite sample")]
    NonFinite,
}

/// An X-valued field sampled on the uniform `n^d` torus grid.
///
/// Storage is coordinate-major: plane `c` holds the scalar grid of space
/// coordinate `c` in row-major order over the grid, which keeps the DFT
/// loops contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub d: usize,
    pub n: usize,
    pub space: SpaceSpec,
    data: Vec<Scalar>,
}

impl GridField {
    pub fn zero(d: usize, n: usize, space: SpaceSpec) -> Self {
        GridField { d, n, space, data: vec![Scalar::ZERO; n.pow(d as u32) * space.dim] }
    }

    /// Rebuild a field from its raw coordinate-major samples (the binary
    /// witness layout).
    pub fn from_data(d: usize, n: usize, space: SpaceSpec, data: Vec<Scalar>) -> Result<Self, TorusError> {
        if data.len() != n.pow(d as u32) * space.dim {
            return Err(TorusError::DimensionMismatch { field: data.len(), table: n.pow(d as u32) * space.dim });
        }
        if data.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
            return Err(TorusError::NonFinite);
        }
        Ok(GridField { d, n, space, data })
    }

    pub fn grid_len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    pub fn plane(&self, coord: usize) -> &[Scalar] {
        let len = self.grid_len();
        &self.data[coord * len..(coord + 1) * len]
    }

    pub fn plane_mut(&mut self, coord: usize) -> &mut [Scalar] {
        let len = self.grid_len();
        &mut self.data[coord * len..(coord + 1) * len]
    }

    /// Build from a function of the grid angles `theta in (-pi, pi]^d`
    /// (sampled at `2 pi j / n`) returning one scalar per space coordinate.
    pub fn from_fn(
        d: usize,
        n: usize,
        space: SpaceSpec,
        mut f: impl FnMut(&[f64]) -> Vec<Scalar>,
    ) -> Self {
        let mut out = GridField::zero(d, n, space);
        let len = out.grid_len();
        let mut theta = vec![0.0; d];
        for idx in 0..len {
            let mut rem = idx;
            for j in (0..d).rev() {
                theta[j] = 2.0 * std::f64::consts::PI * (rem % n) as f64 / n as f64;
                rem /= n;
            }
            let v = f(&theta);
            debug_assert_eq!(v.len(), space.dim);
            for (c, val) in v.iter().enumerate() {
                out.data[c * len + idx] = *val;
            }
        }
        out
    }

    /// Seeded white noise, imaginary parts included only for complex spaces.
    pub fn random(d: usize, n: usize, space: SpaceSpec, rng: &mut impl Rng) -> Self {
        let mut out = GridField::zero(d, n, space);
        for e in out.data.iter_mut() {
            let re = rng.gen_range(-1.0..=1.0);
            let im = if space.is_real() { 0.0 } else { rng.gen_range(-1.0..=1.0) };
            *e = Scalar::new(re, im);
        }
        out
    }

    /// Uniform-measure quadrature of the `L^p` norm:
    /// `(n^{-d} sum ||f(x)||_X^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        let len = self.grid_len();
        let dim = self.space.dim;
        let q = self.space.exponent;
        let mut sample = vec![Scalar::ZERO; dim];
        let mut sum = 0.0;
        for idx in 0..len {
            for c in 0..dim {
                sample[c] = self.data[c * len + idx];
            }
            sum += norm_q(&sample, q).powf(p);
        }
        (sum / len as f64).powf(1.0 / p)
    }

    pub fn scale(&mut self, t: f64) {
        for e in self.data.iter_mut() {
            *e *= t;
        }
    }

    pub fn axpy(&self, t: f64, other: &GridField) -> GridField {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + t * b).collect();
        GridField { d: self.d, n: self.n, space: self.space, data }
    }

    /// Subtract the grid mean of every coordinate plane.
    pub fn remove_mean(&mut self) {
        let len = self.grid_len();
        for c in 0..self.space.dim {
            let plane = self.plane_mut(c);
            let mean: Scalar = plane.iter().sum::<Scalar>() / len as f64;
            for e in plane.iter_mut() {
                *e -= mean;
            }
        }
    }

    /// Lift to `d+1` dimensions, constant in the new variable.
    pub fn lift(&self) -> GridField {
        let mut out = GridField::zero(self.d + 1, self.n, self.space);
        let out_len = out.grid_len();
        for c in 0..self.space.dim {
            let src = self.plane(c);
            let dst = &mut out.data[c * out_len..(c + 1) * out_len];
            // row-major with the new axis appended: index = old_idx * n + new
            for (block, chunk) in dst.chunks_exact_mut(self.n).enumerate() {
                chunk.fill(src[block]);
            }
        }
        out
    }

    /// Trigonometric upsampling to a finer resolution (even factors): the
    /// spectrum is embedded, so the upsampled field takes the same values
    /// on the coarse grid modes and achieves the same multiplier ratios.
    pub fn upsample(&self, n2: usize) -> GridField {
        assert!(n2 >= self.n);
        let mut spectrum = self.clone();
        forward_dft(&mut spectrum);
        let mut out = GridField::zero(self.d, n2, self.space);
        let len = self.grid_len();
        let out_len = out.grid_len();
        let mut k = vec![0i64; self.d];
        for c in 0..self.space.dim {
            for idx in 0..len {
                let mut rem = idx;
                for j in (0..self.d).rev() {
                    let t = rem % self.n;
                    rem /= self.n;
                    k[j] = wrap_index(t, self.n);
                }
                let mut out_idx = 0usize;
                for &kj in &k {
                    let t = unwrap_index(kj, n2);
                    out_idx = out_idx * n2 + t;
                }
                out.data[c * out_len + out_idx] = spectrum.data[c * len + idx];
            }
        }
        inverse_dft(&mut out);
        out
    }
}

/// DFT bin index to signed frequency.
pub fn wrap_index(t: usize, n: usize) -> i64 {
    if t < (n + 1) / 2 {
        t as i64
    } else {
        t as i64 - n as i64
    }
}

/// Signed frequency to DFT bin index.
pub fn unwrap_index(k: i64, n: usize) -> usize {
    if k >= 0 {
        k as usize
    } else {
        (k + n as i64) as usize
    }
}

fn fft_axes(field: &mut GridField, fft: &Arc<dyn Fft<f64>>) {
    let n = field.n;
    let d = field.d;
    let len = field.grid_len();
    let dim = field.space.dim;
    for c in 0..dim {
        let plane = &mut field.data[c * len..(c + 1) * len];
        for axis in 0..d {
            // stride of the axis in row-major order
            let stride = n.pow((d - 1 - axis) as u32);
            let lines = len / n;
            let mut line = vec![Scalar::ZERO; n];
            for l in 0..lines {
                // index of the line start: split l into (outer, inner)
                let outer = l / stride;
                let inner = l % stride;
                let base = outer * stride * n + inner;
                for (j, e) in line.iter_mut().enumerate() {
                    *e = plane[base + j * stride];
                }
                fft.process(&mut line);
                for (j, &e) in line.iter().enumerate() {
                    plane[base + j * stride] = e;
                }
            }
        }
    }
}

/// Forward DFT with the `n^{-d}` normalization on the coefficients.
pub fn forward_dft(field: &mut GridField) {
    let fft = FftPlanner::new().plan_fft_forward(field.n);
    fft_axes(field, &fft);
    let scale = 1.0 / field.grid_len() as f64;
    field.scale(scale);
}

/// Inverse DFT matching [`forward_dft`].
pub fn inverse_dft(field: &mut GridField) {
    let fft = FftPlanner::new().plan_fft_inverse(field.n);
    fft_axes(field, &fft);
}

/// A lattice table bound to the space its fields take values in.
#[derive(Debug, Clone)]
pub struct MultiplierOperator {
    pub table: LatticeTable,
    pub space: SpaceSpec,
}

impl MultiplierOperator {
    pub fn new(table: LatticeTable, space: SpaceSpec) -> Self {
        MultiplierOperator { table, space }
    }

    /// Frequency-side multiplication: per space coordinate, forward DFT,
    /// multiply bin `k` by the table value, inverse DFT. Exactly linear.
    pub fn apply(&self, f: &GridField) -> Result<GridField, TorusError> {
        if f.n != self.table.n {
            return Err(TorusError::ResolutionMismatch { field: f.n, table: self.table.n });
        }
        if f.d != self.table.d {
            return Err(TorusError::DimensionMismatch { field: f.d, table: self.table.d });
        }
        let mut out = f.clone();
        // A real multiplier table with a real field keeps values real only
        // in exact arithmetic; the complex representation carries the
        // round-off, so promote the field.
        out.space.field = Field::Complex;
        forward_dft(&mut out);
        let len = out.grid_len();
        let n = out.n;
        let d = out.d;
        let half = (n / 2) as i64;
        // DFT bin index -> table index, shared by all coordinate planes
        let mut bin_to_table = vec![0usize; len];
        for (idx, t) in bin_to_table.iter_mut().enumerate() {
            let mut rem = idx;
            let mut bins = vec![0usize; d];
            for j in (0..d).rev() {
                bins[j] = rem % n;
                rem /= n;
            }
            let mut tidx = 0usize;
            for &b in &bins {
                let k = wrap_index(b, n);
                tidx = tidx * n + (k + half) as usize;
            }
            *t = tidx;
        }
        let values = self.table.values();
        for c in 0..out.space.dim {
            let plane = &mut out.data[c * len..(c + 1) * len];
            for (idx, e) in plane.iter_mut().enumerate() {
                *e *= values[bin_to_table[idx]];
            }
        }
        inverse_dft(&mut out);
        Ok(out)
    }

    /// Adjoint under the uniform-grid pairing.
    ///
    /// The discrete operator is diagonal in frequency, so its adjoint
    /// conjugates each stored bin. For even symbols the stored bin value is
    /// `m(k) = m(-k)` (the Nyquist bin already holds its negative
    /// representative), so this realizes the symbol-level adjoint
    /// `k -> conj(m(-k))` exactly.
    pub fn adjoint(&self) -> MultiplierOperator {
        let values = self.table.values().iter().map(|v| v.conj()).collect();
        let table = LatticeTable::from_values(
            self.table.d,
            self.table.n,
            &format!("adjoint({})", self.table.tag),
            self.table.zero_mode.conj(),
            values,
        );
        MultiplierOperator { table, space: self.space }
    }
}

/// Sesquilinear uniform-grid pairing `n^{-d} sum_x <f(x), g(x)>`.
pub fn grid_pairing(f: &GridField, g: &GridField) -> Scalar {
    let len = f.grid_len();
    let mut sum = Scalar::ZERO;
    for (a, b) in f.data.iter().zip(g.data.iter()) {
        sum += a * b.conj();
    }
    sum / len as f64
}

// ---------------------------------------------------------------------------
// Norm estimation
// ---------------------------------------------------------------------------

/// Result of a norm search: an achieved Rayleigh ratio and its witness.
#[derive(Debug, Clone)]
pub struct NormEstimate {
    pub value: f64,
    pub witness: GridField,
    pub restarts_used: usize,
}

#[derive(Debug, Clone)]
pub struct PowerOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub rel_tol: f64,
    /// Extra deterministic warm starts (for example coarse-grid witnesses
    /// after [`GridField::upsample`]).
    pub warm_starts: Vec<GridField>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { restarts: 8, max_iter: 500, seed: 0, rel_tol: 1e-9, warm_starts: Vec::new() }
    }
}

/// Duality step: per sample, the subgradient of `||.||_X^p`, which encodes
/// both the outer Lebesgue exponent and the inner space duality.
fn duality_map(f: &GridField, p: f64, q_space: SpaceSpec) -> GridField {
    let len = f.grid_len();
    let dim = f.space.dim;
    let mut out = GridField::zero(f.d, f.n, q_space);
    let q = f.space.exponent;
    let mut sample = vec![Scalar::ZERO; dim];
    let mut g = vec![Scalar::ZERO; dim];
    for idx in 0..len {
        for c in 0..dim {
            sample[c] = f.data[c * len + idx];
        }
        subgradient_sample(&sample, q, p, &mut g);
        for c in 0..dim {
            out.data[c * len + idx] = g[c];
        }
    }
    out
}

fn subgradient_sample(entries: &[Scalar], q: Exponent, p: f64, out: &mut [Scalar]) {
    let n = norm_q(entries, q);
    if n == 0.0 {
        out.fill(Scalar::ZERO);
        return;
    }
    let scale = n.powf(p - 1.0);
    match q {
        Exponent::Infinity => {
            out.fill(Scalar::ZERO);
            let mut best = 0usize;
            let mut best_m = -1.0;
            for (i, e) in entries.iter().enumerate() {
                let m = e.norm();
                if m > best_m {
                    best_m = m;
                    best = i;
                }
            }
            out[best] = scale * entries[best] / entries[best].norm();
        }
        Exponent::Finite(q) => {
            for (o, e) in out.iter_mut().zip(entries) {
                let m = e.norm();
                *o = if m == 0.0 { Scalar::ZERO } else { scale * (m / n).powf(q - 1.0) * (e / m) };
            }
        }
    }
}

fn normalized(mut f: GridField, p: f64) -> Option<GridField> {
    let n = f.lp_norm(p);
    if n == 0.0 {
        None
    } else {
        f.scale(1.0 / n);
        Some(f)
    }
}

/// Deterministic start: a sign pattern along the table's extremal lattice
/// direction, placed in the first space coordinate. Square waves are the
/// discrete analogue of the Rademacher witnesses of the quotient symbols.
fn extremal_sign_start(op: &MultiplierOperator) -> GridField {
    let n = op.table.n;
    let d = op.table.d;
    // argmax |m(k)| with the lexicographically first k winning ties
    let mut best_k = vec![0i64; d];
    let mut best = -1.0;
    let half = (n / 2) as i64;
    let mut k = vec![0i64; d];
    for (idx, v) in op.table.values().iter().enumerate() {
        let mut rem = idx;
        for j in (0..d).rev() {
            k[j] = (rem % n) as i64 - half;
            rem /= n;
        }
        if k.iter().all(|&kj| kj == 0) {
            continue;
        }
        let m = v.norm();
        if m > best + 1e-15 {
            best = m;
            best_k.copy_from_slice(&k);
        }
    }
    GridField::from_fn(d, n, op.space, |theta| {
        let phase: f64 = best_k.iter().zip(theta).map(|(&kj, &t)| kj as f64 * t).sum();
        let mut v = vec![Scalar::ZERO; op.space.dim];
        v[0] = if phase.cos() >= 0.0 { Scalar::ONE } else { -Scalar::ONE };
        v
    })
}

/// Deterministic start: the pure extremal mode itself, which at `p = 2`
/// achieves the exact maximum lattice modulus immediately.
fn extremal_mode_start(op: &MultiplierOperator) -> GridField {
    let n = op.table.n;
    let d = op.table.d;
    let mut best_k = vec![0i64; d];
    let mut best = -1.0;
    let half = (n / 2) as i64;
    let mut k = vec![0i64; d];
    for (idx, v) in op.table.values().iter().enumerate() {
        let mut rem = idx;
        for j in (0..d).rev() {
            k[j] = (rem % n) as i64 - half;
            rem /= n;
        }
        let m = v.norm();
        if m > best + 1e-15 {
            best = m;
            best_k.copy_from_slice(&k);
        }
    }
    let complexish = SpaceSpec { field: Field::Complex, ..op.space };
    GridField::from_fn(d, n, complexish, |theta| {
        let phase: f64 = best_k.iter().zip(theta).map(|(&kj, &t)| kj as f64 * t).sum();
        let mut v = vec![Scalar::ZERO; op.space.dim];
        v[0] = Scalar::new(phase.cos(), phase.sin());
        v
    })
}

/// Safeguarded nonlinear power iteration from one start; the returned value
/// is the best Rayleigh ratio visited, which is always achieved by some
/// iterate.
fn power_run(
    op: &MultiplierOperator,
    adj: &MultiplierOperator,
    p: f64,
    start: GridField,
    max_iter: usize,
    rel_tol: f64,
) -> Option<(f64, GridField)> {
    let pd = p / (p - 1.0);
    let dual_space = SpaceSpec {
        exponent: op.space.exponent.dual(),
        field: Field::Complex,
        ..op.space
    };
    let primal_space = SpaceSpec { field: Field::Complex, ..op.space };
    let mut u = normalized(start, p)?;
    let mut value = op.apply(&u).ok()?.lp_norm(p);
    let mut best = (value, u.clone());
    for _ in 0..max_iter {
        let v = op.apply(&u).ok()?;
        let w = duality_map(&v, p, dual_space);
        let z = adj.apply(&w).ok()?;
        let candidate = duality_map(&z, pd, primal_space);
        let Some(candidate) = normalized(candidate, p) else { break };
        let cand_val = op.apply(&candidate).ok()?.lp_norm(p);
        if cand_val >= value {
            let gain = cand_val - value;
            u = candidate;
            value = cand_val;
            if value > best.0 {
                best = (value, u.clone());
            }
            if gain <= rel_tol * value {
                break;
            }
        } else {
            // step-halve toward the previous iterate; never accept a drop
            let mut t = 0.5;
            let mut accepted = false;
            while t >= 1e-10 {
                let mixed = u.axpy(t, &candidate.axpy(-1.0, &u));
                if let Some(mixed) = normalized(mixed, p) {
                    let val = op.apply(&mixed).ok()?.lp_norm(p);
                    if val >= value {
                        u = mixed;
                        value = val;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if value > best.0 {
                best = (value, u.clone());
            }
            if !accepted {
                break;
            }
        }
    }
    Some(best)
}

/// Multi-start lower bound on the discrete `L^p -> L^p` operator norm.
///
/// Starts: seeded white noise per restart, a sign pattern aligned with the
/// extremal lattice direction, the pure extremal mode, and any provided warm
/// starts. The best ratio over all runs is returned with its witness.
pub fn norm_lower_bound(
    op: &MultiplierOperator,
    p: f64,
    opts: &PowerOptions,
) -> Result<NormEstimate, TorusError> {
    if p <= 1.0 {
        return Err(TorusError::BadExponent);
    }
    let adj = op.adjoint();
    let d = op.table.d;
    let n = op.table.n;
    let mut starts: Vec<GridField> = Vec::new();
    starts.push(extremal_mode_start(op));
    starts.push(extremal_sign_start(op));
    for ws in &opts.warm_starts {
        starts.push(ws.clone());
    }
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        starts.push(GridField::random(d, n, op.space, &mut rng));
    }
    let results: Vec<Option<(f64, GridField)>> = starts
        .into_par_iter()
        .map(|s| power_run(op, &adj, p, s, opts.max_iter, opts.rel_tol))
        .collect();
    let mut best: Option<(f64, GridField)> = None;
    for r in results.into_iter().flatten() {
        match &best {
            Some((v, _)) if r.0 <= *v => {}
            _ => best = Some(r),
        }
    }
    let (value, witness) = best.expect("at least one start is valid");
    Ok(NormEstimate { value, witness, restarts_used: opts.restarts })
}
