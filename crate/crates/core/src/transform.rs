//! Conversions between three-phase real quantities and their complex
//! space-vector image.
//!
//! The forward map is `z = c·(x_a + α·x_b + ᾱ·x_c)`, `x0 = c·(x_a + x_b + x_c)`
//! with `α = e^{j2π/3}`. The conjugate row of the full transform is redundant
//! and is never stored: `(z, x0)` carries all the information.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::Error;

/// A space-vector quantity (voltage, current, control action or sliding
/// variable).
pub type ComplexSignal = Complex64;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Per-phase real values of a three-phase quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreePhaseSample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhaseSample {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// `a·a' + b·b' + c·c'`, the instantaneous power when `self` is a
    /// voltage and `other` a current.
    pub fn dot(&self, other: &Self) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }
}

/// Gain `c` of the complex transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TransformScale(f64);

impl TransformScale {
    /// `c = 2/3`: a balanced set of amplitude `X` maps to `|z| = X`.
    pub const AMPLITUDE_INVARIANT: Self = Self(2.0 / 3.0);
    /// `c = 1/√3`: the full transform, conjugate row included, is unitary.
    pub const POWER_INVARIANT: Self = Self(1.0 / SQRT_3);

    pub fn new(c: f64) -> Result<Self, Error> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::config("scale", format!("must be finite and > 0, got {c}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Magnitude of the complex image of an active switch vector.
    pub fn active_vector_magnitude(self) -> f64 {
        2.0 * self.0
    }
}

impl Default for TransformScale {
    fn default() -> Self {
        Self::AMPLITUDE_INVARIANT
    }
}

impl TryFrom<f64> for TransformScale {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self, Error> {
        Self::new(c)
    }
}

impl From<TransformScale> for f64 {
    fn from(s: TransformScale) -> f64 {
        s.0
    }
}

/// Forward transform. Returns the space vector and the homopolar component.
pub fn abc_to_complex(x: ThreePhaseSample, scale: TransformScale) -> (ComplexSignal, f64) {
    let c = scale.value();
    // α = -1/2 + j√3/2, ᾱ = -1/2 - j√3/2
    let re = x.a - 0.5 * (x.b + x.c);
    let im = 0.5 * SQRT_3 * (x.b - x.c);
    (Complex64::new(c * re, c * im), c * (x.a + x.b + x.c))
}

/// Left inverse of [`abc_to_complex`].
pub fn complex_to_abc(z: ComplexSignal, x0: f64, scale: TransformScale) -> ThreePhaseSample {
    let c = scale.value();
    // T⁻¹ = (1/3c)·[[1,1,1],[ᾱ,α,1],[α,ᾱ,1]] applied to (z, z̄, x0);
    // the pair terms collapse to 2·Re(·).
    let h = x0 / 3.0;
    let a = 2.0 * z.re / 3.0;
    let b = (-z.re + SQRT_3 * z.im) / 3.0;
    let cc = (-z.re - SQRT_3 * z.im) / 3.0;
    ThreePhaseSample::new((a + h) / c, (b + h) / c, (cc + h) / c)
}

/// Rotates a stationary-frame signal into the frame at angle `theta`
/// (radians): `e^{-jθ}·z`.
pub fn to_dq(z: ComplexSignal, theta: f64) -> ComplexSignal {
    z * Complex64::from_polar(1.0, -theta)
}

/// `Re(v·conj(i))`.
///
/// For balanced signals the abc power `Σ v_k·i_k` is `(2/(3c²))·Re(v·conj(i))`:
/// `3/2` of this value with `c = 2/3` and twice it with `c = 1/√3` (the
/// conjugate row carries the other half). See [`abc_power`].
pub fn instantaneous_power(v: ComplexSignal, i: ComplexSignal) -> f64 {
    (v * i.conj()).re
}

/// Instantaneous abc power `Σ v_k·i_k` of balanced signals from their
/// space vectors.
pub fn abc_power(v: ComplexSignal, i: ComplexSignal, scale: TransformScale) -> f64 {
    let c = scale.value();
    2.0 / (3.0 * c * c) * instantaneous_power(v, i)
}

/// Wraps an angle in radians into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    // rem_euclid can return exactly 2π for tiny negative inputs
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Wraps an angle in radians into `(-π, π]`.
pub fn wrap_signed(theta: f64) -> f64 {
    let w = wrap_angle(theta);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Unit phasors of the six active vectors, `k·60°` for `k = 0..6`.
pub(crate) fn sextant_angle(k: usize) -> f64 {
    k as f64 * FRAC_PI_3
}
