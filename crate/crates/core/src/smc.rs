//! The complex sliding mode law for the inverter current loop.
//!
//! Sliding variable `σ = i − i_ref`, switched action `u = −κ·σ/|σ|`. For the
//! two-level bridge the reachable control values lie on a circle of radius
//! `2c`, so the gain used throughout the simulator is `|κ| = 2c`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::transform::{ComplexSignal, TransformScale};
use crate::Error;

/// Below this magnitude (amperes) the switching law is undefined.
pub const DEFAULT_SIGMA_EPSILON: f64 = 1e-9;

/// Inverter, filter and load parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsiParams {
    /// Filter inductance (H).
    #[serde(rename = "L")]
    pub inductance: f64,
    /// Filter capacitance (F).
    #[serde(rename = "C")]
    pub capacitance: f64,
    /// Inductor loss resistance (Ω).
    #[serde(rename = "r")]
    pub resistance: f64,
    /// Load resistance (Ω).
    #[serde(rename = "R_L")]
    pub load_resistance: f64,
    /// Half DC bus voltage (V); the legs switch between ±V_dc.
    #[serde(rename = "V_dc")]
    pub dc_voltage: f64,
}

impl VsiParams {
    pub fn validate(&self) -> Result<(), Error> {
        fn positive(name: &str, x: f64) -> Result<(), Error> {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and > 0, got {x}")))
            }
        }
        positive("L", self.inductance)?;
        positive("C", self.capacitance)?;
        if !(self.resistance.is_finite() && self.resistance >= 0.0) {
            return Err(Error::config("r", format!("must be finite and >= 0, got {}", self.resistance)));
        }
        positive("R_L", self.load_resistance)?;
        positive("V_dc", self.dc_voltage)
    }
}

/// Balanced current reference `i_ref(t) = I_ref·e^{jωt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    /// Peak phase current (A).
    #[serde(rename = "I_ref")]
    pub amplitude: f64,
    /// Angular frequency (rad/s).
    pub omega: f64,
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::config("I_ref", format!("must be finite and >= 0, got {}", self.amplitude)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::config("omega", format!("must be finite and > 0, got {}", self.omega)));
        }
        Ok(())
    }
}

/// Complex switching gain `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingGain(Complex64);

impl SlidingGain {
    pub fn new(kappa: Complex64) -> Result<Self, Error> {
        if kappa.norm() > 0.0 && kappa.is_finite() {
            Ok(Self(kappa))
        } else {
            Err(Error::config("kappa", "gain must be finite and non-zero"))
        }
    }

    /// The real gain `2c` that reaches the active vectors of a two-level
    /// bridge.
    pub fn bridge(scale: TransformScale) -> Self {
        Self(Complex64::new(scale.active_vector_magnitude(), 0.0))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

pub fn sliding_variable(i: ComplexSignal, i_ref: ComplexSignal) -> ComplexSignal {
    i - i_ref
}

/// `−g·σ/|σ|` with the default degeneracy threshold.
pub fn switching_law(sigma: ComplexSignal, gain_magnitude: f64) -> Result<ComplexSignal, Error> {
    switching_law_eps(sigma, gain_magnitude, DEFAULT_SIGMA_EPSILON)
}

pub fn switching_law_eps(
    sigma: ComplexSignal,
    gain_magnitude: f64,
    epsilon: f64,
) -> Result<ComplexSignal, Error> {
    let m = sigma.norm();
    if m.is_nan() || m < epsilon || m == 0.0 {
        return Err(Error::DegenerateSigma { magnitude: m, epsilon });
    }
    // from_polar keeps the magnitude exact where σ/|σ|·g would not
    Ok(Complex64::from_polar(gain_magnitude, (-sigma).arg()))
}

/// General complex-gain form `−κ·σ/|σ|`.
pub fn switching_law_complex(sigma: ComplexSignal, kappa: SlidingGain) -> Result<ComplexSignal, Error> {
    let unit = switching_law(sigma, 1.0)?;
    Ok(kappa.value() * unit)
}

/// `u_eq = (r·i + v + jωL·i_ref)/V_dc`: the continuous control keeping
/// `σ̇ = 0`.
pub fn equivalent_control(
    i: ComplexSignal,
    v: ComplexSignal,
    i_ref: ComplexSignal,
    p: &VsiParams,
    omega: f64,
) -> ComplexSignal {
    equivalent_drive(i, v, i_ref, p, omega) / p.dc_voltage
}

fn equivalent_drive(
    i: ComplexSignal,
    v: ComplexSignal,
    i_ref: ComplexSignal,
    p: &VsiParams,
    omega: f64,
) -> ComplexSignal {
    i * p.resistance + v + Complex64::new(0.0, omega * p.inductance) * i_ref
}

/// Signed distance to the existence condition `2c·V_dc > |r·i + v + jωL·i_ref|`
/// expressed in volts: `V_dc − |r·i + v + jωL·i_ref|/(2c)`.
///
/// With `c = 2/3` this is `V_dc − (3/4)·|…|`. Positive means the sliding
/// motion can be enforced at this state.
pub fn existence_margin(
    i: ComplexSignal,
    v: ComplexSignal,
    i_ref: ComplexSignal,
    p: &VsiParams,
    omega: f64,
    scale: TransformScale,
) -> f64 {
    p.dc_voltage - equivalent_drive(i, v, i_ref, p, omega).norm() / scale.active_vector_magnitude()
}

/// General existence condition `|κ|·cos(δ_σg + δ_κ) − |u_eq|`, positive when
/// the Lyapunov derivative is negative definite. `sigma_g_angle` is the
/// argument of `∂σ/∂z·g(z)` (zero for the inverter).
pub fn existence_condition(kappa: SlidingGain, sigma_g_angle: f64, u_eq_magnitude: f64) -> f64 {
    let k = kappa.value();
    k.norm() * (sigma_g_angle + k.arg()).cos() - u_eq_magnitude
}

/// Largest zero-vector duty keeping the reduced gain `2c·(1 − d0)` above
/// `|u_eq|`. Negative when no budget exists.
pub fn d0_max(u_eq_magnitude: f64, scale: TransformScale) -> f64 {
    1.0 - u_eq_magnitude / scale.active_vector_magnitude()
}

/// Capacitor voltage reached on the ideal sliding manifold.
pub fn ideal_sliding_voltage(i_ref: ComplexSignal, load_resistance: f64) -> ComplexSignal {
    i_ref * load_resistance
}
