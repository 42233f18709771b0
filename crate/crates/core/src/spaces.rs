//! Finite-dimensional complex `l^q` spaces: norms, subgradients of p-th
//! powers of norms, and exponent duality.
//!
//! Complex scalars are the universal representation; real-only experiments
//! constrain imaginary parts to zero and assert it. All values are immutable
//! after construction and the operations here are pure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex scalar; real quantities are stored with zero imaginary part.
pub type Scalar = Complex64;

/// Shorthand constructor used throughout the crate and its tests.
pub fn c(re: f64, im: f64) -> Scalar {
    Scalar::new(re, im)
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("exponent must satisfy q >= 1, got {0}")]
    BadExponent(f64),
    #[error("dimension must be >= 1")]
    BadDimension,
    #[error("entry count {got} does not match space dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("non-finite entry at coordinate {0}")]
    NonFinite(usize),
    #[error("real space holds an entry with nonzero imaginary part at coordinate {0}")]
    NotReal(usize),
}

/// The norm exponent q of an `l^q` space, with `q = ∞` encoded explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(q: f64) -> Result<Self, SpaceError> {
        if q.is_infinite() && q > 0.0 {
            Ok(Exponent::Infinity)
        } else if q.is_finite() && q >= 1.0 {
            Ok(Exponent::Finite(q))
        } else {
            Err(SpaceError::BadExponent(q))
        }
    }

    /// Conjugate exponent: 1/q + 1/q' = 1, with 1 and ∞ swapped.
    pub fn dual(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(q) if q == 1.0 => Exponent::Infinity,
            Exponent::Finite(q) => Exponent::Finite(q / (q - 1.0)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(q) => q,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(q) => s.serialize_f64(*q),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => Exponent::new(q).map_err(D::Error::custom),
            Raw::Tag(t) if t == "inf" => Ok(Exponent::Infinity),
            Raw::Tag(t) => Err(D::Error::custom(format!("bad exponent tag {t:?}"))),
        }
    }
}

/// Scalar field of the space. Real spaces store complex entries with zero
/// imaginary part, which vector constructors enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// A finite-dimensional `l^q` space over real or complex scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub dim: usize,
    pub exponent: Exponent,
    pub field: Field,
}

impl SpaceSpec {
    pub fn new(dim: usize, exponent: Exponent, field: Field) -> Result<Self, SpaceError> {
        if dim == 0 {
            return Err(SpaceError::BadDimension);
        }
        Ok(SpaceSpec { dim, exponent, field })
    }

    /// One-dimensional real space; the setting of the scalar experiments.
    pub fn scalar_real() -> Self {
        SpaceSpec { dim: 1, exponent: Exponent::Finite(2.0), field: Field::Real }
    }

    pub fn is_real(&self) -> bool {
        self.field == Field::Real
    }
}

/// An element of a finite-dimensional `l^q` space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    pub space: SpaceSpec,
    entries: Vec<Scalar>,
}

impl Vector {
    pub fn new(space: SpaceSpec, entries: Vec<Scalar>) -> Result<Self, SpaceError> {
        if entries.len() != space.dim {
            return Err(SpaceError::DimensionMismatch { got: entries.len(), want: space.dim });
        }
        for (i, e) in entries.iter().enumerate() {
            if !e.re.is_finite() || !e.im.is_finite() {
                return Err(SpaceError::NonFinite(i));
            }
            if space.is_real() && e.im != 0.0 {
                return Err(SpaceError::NotReal(i));
            }
        }
        Ok(Vector { space, entries })
    }

    pub fn zero(space: SpaceSpec) -> Self {
        Vector { space, entries: vec![Scalar::ZERO; space.dim] }
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.re == 0.0 && e.im == 0.0)
    }

    /// The `l^q` norm of the entry moduli.
    pub fn norm(&self) -> f64 {
        norm_q(&self.entries, self.space.exponent)
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.space, other.space);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Vector { space: self.space, entries }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.space, other.space);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Vector { space: self.space, entries }
    }

    pub fn scale(&self, a: Scalar) -> Vector {
        Vector { space: self.space, entries: self.entries.iter().map(|e| a * e).collect() }
    }

    pub fn scale_re(&self, t: f64) -> Vector {
        Vector { space: self.space, entries: self.entries.iter().map(|e| t * e).collect() }
    }

    /// Real inner product `Re ⟨u, v⟩ = Re Σ conj(u_i) v_i`, the pairing under
    /// which [`norm_pow_subgradient`] is a first-order expansion.
    pub fn pair(&self, other: &Vector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }
}

/// `l^q` norm of a slice of complex entries, overflow-safe for large q.
pub fn norm_q(entries: &[Scalar], exponent: Exponent) -> f64 {
    let max = entries.iter().map(|e| e.norm()).fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    match exponent {
        Exponent::Infinity => max,
        Exponent::Finite(q) => {
            if q == 1.0 {
                entries.iter().map(|e| e.norm()).sum()
            } else if q == 2.0 {
                entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
            } else {
                // Factor the max out to keep the powers in range.
                let s: f64 = entries.iter().map(|e| (e.norm() / max).powf(q)).sum();
                max * s.powf(1.0 / q)
            }
        }
    }
}

fn unit_direction(e: Scalar) -> Scalar {
    let m = e.norm();
    if m == 0.0 {
        Scalar::ZERO
    } else {
        e / m
    }
}

/// A subgradient of `w ↦ ||w||_q^p` at `v`, for `p > 1`.
///
/// At points of differentiability this is the gradient with respect to the
/// real pairing [`Vector::pair`]; the gradient of the zero vector is zero.
/// For `q = ∞` the subgradient is supported on the lowest-index coordinate
/// attaining the maximum modulus, which keeps ascent directions
/// deterministic.
pub fn norm_pow_subgradient(v: &Vector, p: f64) -> Vector {
    assert!(p > 1.0, "norm_pow_subgradient requires p > 1");
    let n = v.norm();
    if n == 0.0 {
        return Vector::zero(v.space);
    }
    let scale = p * n.powf(p - 1.0);
    let entries = match v.space.exponent {
        Exponent::Infinity => {
            let mut best = 0usize;
            let mut best_m = -1.0;
            for (i, e) in v.entries.iter().enumerate() {
                let m = e.norm();
                if m > best_m {
                    best_m = m;
                    best = i;
                }
            }
            let mut g = vec![Scalar::ZERO; v.space.dim];
            g[best] = scale * unit_direction(v.entries[best]);
            g
        }
        Exponent::Finite(q) => v
            .entries
            .iter()
            .map(|e| {
                let m = e.norm();
                if m == 0.0 {
                    Scalar::ZERO
                } else {
                    scale * (m / n).powf(q - 1.0) * unit_direction(*e)
                }
            })
            .collect(),
    };
    Vector { space: v.space, entries }
}
