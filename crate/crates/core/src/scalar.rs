//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::{Debug, Display};

/// Real floating-point type the toolkit computes in: `f32` or `f64`.
///
/// Symbols, matrices and polynomials all carry complex entries `Complex<T>`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Cx<T> = Complex<T>;

#[inline]
pub(crate) fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> Cx<T> {
    Complex::new(T::one(), T::zero())
}

/// Modulus without going through `ComplexField`, whose `abs` name clashes.
#[inline]
pub(crate) fn modulus<T: Real>(z: Cx<T>) -> T {
    z.re.hypot(z.im)
}

/// A Schatten exponent: a finite `p > 0` or `p = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exponent<T> {
    Finite(T),
    Infinity,
}

impl<T: Real> Exponent<T> {
    pub fn finite(p: f64) -> Self {
        Exponent::Finite(T::lit(p))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// Value as an `f64`, with `∞` mapped to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match self {
            Exponent::Finite(p) => p.to_f64_lossy(),
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// Hölder conjugate `p/(p-1)`.
    pub fn conjugate(&self) -> Self {
        match *self {
            Exponent::Infinity => Exponent::Finite(T::one()),
            Exponent::Finite(p) if p == T::one() => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - T::one())),
        }
    }

    /// Parses `"3"`, `"4/3"`, `"2.5"`, `"inf"`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if matches!(text, "inf" | "infinity" | "∞") {
            return Ok(Exponent::Infinity);
        }
        let value = match text.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| format!("bad exponent `{text}`"))?;
                let den: f64 = den.trim().parse().map_err(|_| format!("bad exponent `{text}`"))?;
                if den == 0.0 {
                    return Err(format!("zero denominator in exponent `{text}`"));
                }
                num / den
            }
            None => text.parse().map_err(|_| format!("bad exponent `{text}`"))?,
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(format!("exponent must be positive, got `{text}`"));
        }
        Ok(Exponent::Finite(T::lit(value)))
    }
}

impl<T: Real> Display for Exponent<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// The reference growth `(p²/(p-1))^power` appearing in the multiplier bounds.
pub fn bound_shape(p: f64, power: u32) -> f64 {
    (p * p / (p - 1.0)).powi(power as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rational_exponents() {
        let p = Exponent::<f64>::parse("4/3").unwrap();
        assert_eq!(p, Exponent::Finite(4.0 / 3.0));
        assert_eq!(Exponent::<f64>::parse("inf").unwrap(), Exponent::Infinity);
        assert!(Exponent::<f64>::parse("0").is_err());
        assert!(Exponent::<f64>::parse("1/0").is_err());
        match p.conjugate() {
            Exponent::Finite(q) => assert!((q - 4.0).abs() < 1e-12),
            Exponent::Infinity => panic!("conjugate of 4/3 is finite"),
        }
    }

    #[test]
    fn bound_shape_at_two() {
        assert_eq!(bound_shape(2.0, 3), 64.0);
    }
}
