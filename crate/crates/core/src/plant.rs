//! Complex-domain model of the inverter with LC filter and resistive load:
//!
//! ```text
//! L di/dt = −r·i − v + V_dc·u
//! C dv/dt = i − v/R_L
//! ```
//!
//! The bridge input is constant over each gate segment, so segments are
//! propagated with the exact solution `x(t) = Φ(t)·x0 + Γ(t)·b·u`,
//! `Φ = e^{At}`, `Γ = ∫₀ᵗ e^{Aτ} dτ`.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::modulation::{vector_to_complex, GateSchedule, SwitchVector};
use crate::smc::VsiParams;
use crate::transform::{ComplexSignal, TransformScale};

/// Inductor current and capacitor voltage space vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub i: ComplexSignal,
    pub v: ComplexSignal,
}

impl PlantState {
    pub fn new(i: ComplexSignal, v: ComplexSignal) -> Self {
        Self { i, v }
    }

    pub fn norm(&self) -> f64 {
        (self.i.norm_sqr() + self.v.norm_sqr()).sqrt()
    }

    fn as_array(&self) -> [Complex64; 2] {
        [self.i, self.v]
    }

    fn from_array(x: [Complex64; 2]) -> Self {
        Self { i: x[0], v: x[1] }
    }
}

impl std::ops::Sub for PlantState {
    type Output = PlantState;

    fn sub(self, rhs: Self) -> Self {
        Self { i: self.i - rhs.i, v: self.v - rhs.v }
    }
}

/// Time derivative `(di/dt, dv/dt)` of the state, packed as a `PlantState`.
pub fn derivative(s: &PlantState, u: ComplexSignal, p: &VsiParams) -> PlantState {
    PlantState {
        i: (-s.i * p.resistance - s.v + u * p.dc_voltage) / p.inductance,
        v: (s.i - s.v / p.load_resistance) / p.capacitance,
    }
}

/// Stored energy of the three-phase filter for balanced quantities,
/// `(2/(3c²))·(L|i|² + C|v|²)/2` (the factor is `3/2` for `c = 2/3`).
pub fn stored_energy(s: &PlantState, p: &VsiParams, scale: TransformScale) -> f64 {
    let c = scale.value();
    2.0 / (3.0 * c * c) * 0.5 * (p.inductance * s.i.norm_sqr() + p.capacitance * s.v.norm_sqr())
}

type M2 = [[Complex64; 2]; 2];

fn state_matrix(p: &VsiParams) -> M2 {
    let r = |x: f64| Complex64::new(x, 0.0);
    [
        [r(-p.resistance / p.inductance), r(-1.0 / p.inductance)],
        [r(1.0 / p.capacitance), r(-1.0 / (p.capacitance * p.load_resistance))],
    ]
}

/// Relative eigenvalue gap below which the eigen form is abandoned for
/// scaling-and-squaring. The eigen form loses about `ε/gap` digits, so
/// this keeps it accurate to ~1e-11.
const DEFECTIVE_GAP: f64 = 1e-5;

/// `(e^z − 1)/z` without cancellation near zero.
fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        // 1 + z/2 + z²/6 + z³/24, truncation below 1e-21
        return Complex64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z / 24.0));
    }
    expm1(z) / z
}

fn expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

/// Exact one-segment propagator for a fixed duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    phi: M2,
    /// `Γ·b`, the response to a unit input.
    input: [Complex64; 2],
}

impl Discretization {
    pub fn new(p: &VsiParams, dt: f64) -> Self {
        let a = state_matrix(p);
        let b = [Complex64::new(p.dc_voltage / p.inductance, 0.0), Complex64::new(0.0, 0.0)];
        let (phi, gamma) = exp_and_integral(&a, dt);
        let input = [
            gamma[0][0] * b[0] + gamma[0][1] * b[1],
            gamma[1][0] * b[0] + gamma[1][1] * b[1],
        ];
        Self { phi, input }
    }

    pub fn apply(&self, s: &PlantState, u: ComplexSignal) -> PlantState {
        let x = s.as_array();
        PlantState::from_array([
            self.phi[0][0] * x[0] + self.phi[0][1] * x[1] + self.input[0] * u,
            self.phi[1][0] * x[0] + self.phi[1][1] * x[1] + self.input[1] * u,
        ])
    }
}

/// `(e^{At}, ∫₀ᵗ e^{Aτ}dτ)` for a 2×2 complex matrix.
fn exp_and_integral(a: &M2, t: f64) -> (M2, M2) {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if t == 0.0 {
        return ([[one, zero], [zero, one]], [[zero, zero], [zero, zero]]);
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let m = tr * 0.5;
    let delta = (m * m - det).sqrt();
    let l1 = m + delta;
    let l2 = m - delta;
    let scale = l1.norm().max(l2.norm());
    if scale == 0.0 || (l1 - l2).norm() < DEFECTIVE_GAP * scale {
        return exp_and_integral_squaring(a, t);
    }
    // Sylvester: f(A) = (f(λ1)(A − λ2 I) − f(λ2)(A − λ1 I))/(λ1 − λ2)
    let shifted = |l: Complex64| -> M2 { [[a[0][0] - l, a[0][1]], [a[1][0], a[1][1] - l]] };
    let p1 = shifted(l2);
    let p2 = shifted(l1);
    let combine = |f1: Complex64, f2: Complex64| -> M2 {
        let g = l1 - l2;
        let mut out = [[zero; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = (f1 * p1[r][c] - f2 * p2[r][c]) / g;
            }
        }
        out
    };
    let phi = combine((l1 * t).exp(), (l2 * t).exp());
    let gamma = combine(phi1(l1 * t) * t, phi1(l2 * t) * t);
    (phi, gamma)
}

/// Block exponential of `[[A·t, I·t], [0, 0]]`; the top blocks are `e^{At}`
/// and `∫₀ᵗ e^{Aτ}dτ`.
fn exp_and_integral_squaring(a: &M2, t: f64) -> (M2, M2) {
    let zero = Complex64::new(0.0, 0.0);
    let tt = Complex64::new(t, 0.0);
    let mut m = Matrix4::<Complex64>::zeros();
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = a[r][c] * tt;
        }
        m[(r, r + 2)] = tt;
    }
    let e = m.exp();
    let mut phi = [[zero; 2]; 2];
    let mut gamma = [[zero; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            phi[r][c] = e[(r, c)];
            gamma[r][c] = e[(r, c + 2)];
        }
    }
    (phi, gamma)
}

/// Exact state after holding `u` for `dt` seconds.
pub fn propagate_segment(s: &PlantState, u: ComplexSignal, dt: f64, p: &VsiParams) -> PlantState {
    if dt == 0.0 {
        return *s;
    }
    Discretization::new(p, dt).apply(s, u)
}

/// One constant-input piece of the applied bridge command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSegment {
    /// Offset from the start of the schedule (s).
    pub start: f64,
    pub duration: f64,
    pub vector: SwitchVector,
}

/// Folds [`propagate_segment`] over a schedule. Returns the end state and
/// the piecewise-constant bridge waveform that was applied.
pub fn propagate_schedule(
    s: &PlantState,
    sched: &GateSchedule,
    scale: TransformScale,
    p: &VsiParams,
) -> (PlantState, Vec<WaveformSegment>) {
    let mut state = *s;
    let mut start = 0.0;
    let mut waveform = Vec::with_capacity(sched.segments().len());
    for seg in sched.segments() {
        if seg.duration == 0.0 {
            continue;
        }
        state = propagate_segment(&state, vector_to_complex(seg.vector, scale), seg.duration, p);
        waveform.push(WaveformSegment { start, duration: seg.duration, vector: seg.vector });
        start += seg.duration;
    }
    (state, waveform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smc::equivalent_control;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const C23: TransformScale = TransformScale::AMPLITUDE_INVARIANT;

    fn params(load: f64) -> VsiParams {
        VsiParams {
            inductance: 2e-3,
            capacitance: 20e-6,
            resistance: 2e-3,
            load_resistance: load,
            dc_voltage: 300.0,
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &PlantState, b: &PlantState, rel: f64) -> bool {
        (*a - *b).norm() <= rel * a.norm().max(b.norm()).max(1e-12)
    }

    #[test]
    fn derivative_examples() {
        let p = params(10.0);
        let z = PlantState::default();
        assert_eq!(derivative(&z, c(0.0, 0.0), &p), z);

        let omega = 100.0 * PI;
        let iref = Complex64::from_polar(25.0, 0.7);
        let s = PlantState::new(iref, iref * 10.0);
        let ueq = equivalent_control(s.i, s.v, iref, &p, omega);
        let d = derivative(&s, ueq, &p);
        let expected = c(0.0, omega) * iref;
        assert_relative_eq!((d.i - expected).norm(), 0.0, epsilon = 1e-9);
        assert_relative_eq!(d.i.norm(), omega * 25.0, max_relative = 1e-12);

        let s = PlantState::new(c(3.0, 0.0), c(30.0, 0.0));
        assert_eq!(derivative(&s, c(0.0, 0.0), &p).v, c(0.0, 0.0));
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = params(5.0);
        let s = PlantState::new(c(1.0, 2.0), c(-3.0, 4.0));
        assert_eq!(propagate_segment(&s, c(1.0, 0.0), 0.0, &p), s);
    }

    #[test]
    fn passive_discharge() {
        let p = params(5.0);
        let s = PlantState::new(c(10.0, -5.0), c(100.0, 30.0));
        let end = propagate_segment(&s, c(0.0, 0.0), 0.05, &p);
        assert!(end.norm() < 1e-6 * s.norm(), "{}", end.norm());
    }

    #[test]
    fn schedule_fold_and_semigroup() {
        let p = params(10.0);
        let s = PlantState::new(c(5.0, 1.0), c(40.0, -20.0));
        let ts = 20e-6;
        let one = GateSchedule::constant(SwitchVector::V2, ts).unwrap();
        let (end, wf) = propagate_schedule(&s, &one, C23, &p);
        assert_eq!(wf.len(), 1);
        let direct = propagate_segment(&s, vector_to_complex(SwitchVector::V2, C23), ts, &p);
        assert_eq!(end, direct);

        let halves = GateSchedule::from_parts(ts, &[(SwitchVector::V2, ts / 2.0), (SwitchVector::V2, ts / 2.0)]).unwrap();
        let (end2, wf2) = propagate_schedule(&s, &halves, C23, &p);
        assert!(close(&end, &end2, 1e-12));
        assert_eq!(wf2.len(), 1);
        let u2 = vector_to_complex(SwitchVector::V2, C23);
        let split = propagate_segment(&propagate_segment(&s, u2, ts / 2.0, &p), u2, ts / 2.0, &p);
        assert!(close(&end, &split, 1e-12));

        let two = GateSchedule::from_parts(ts, &[(SwitchVector::V2, ts / 4.0), (SwitchVector::V3, 0.75 * ts)]).unwrap();
        let (_, wf4) = propagate_schedule(&s, &two, C23, &p);
        assert_eq!(wf4.len(), 2);
        assert_eq!(wf4[1].start, ts / 4.0);

        let with_gap = GateSchedule::from_parts(ts, &[(SwitchVector::V1, 0.0), (SwitchVector::V2, ts)]).unwrap();
        let (end3, wf3) = propagate_schedule(&s, &with_gap, C23, &p);
        assert_eq!(end3, direct);
        assert_eq!(wf3.len(), 1);
    }

    #[test]
    fn near_defective_uses_fallback_consistently() {
        // choose R_L so that the two eigenvalues coincide:
        // (r/L − 1/(C R_L))² = 4/(LC)
        let base = params(1.0);
        let (l, cap, r) = (base.inductance, base.capacitance, base.resistance);
        let g = r / l + 2.0 / (l * cap).sqrt();
        let load = 1.0 / (cap * g);
        let p = VsiParams { load_resistance: load, ..base };
        let a = state_matrix(&p);
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        assert!((tr * tr * 0.25 - det).norm() < 1e-6 * det.norm());

        let s = PlantState::new(c(1.0, -1.0), c(10.0, 5.0));
        let u = c(0.3, 0.9);
        let exact = propagate_segment(&s, u, 1e-4, &p);
        let (phi, gamma) = exp_and_integral_squaring(&a, 1e-4);
        let bu = u * p.dc_voltage / p.inductance;
        let alt = PlantState::new(
            phi[0][0] * s.i + phi[0][1] * s.v + gamma[0][0] * bu,
            phi[1][0] * s.i + phi[1][1] * s.v + gamma[1][0] * bu,
        );
        assert!(close(&exact, &alt, 1e-9));
    }

    #[test]
    fn eigen_form_agrees_with_squaring() {
        let a = state_matrix(&params(7.0));
        for t in [1e-9, 3e-7, 2e-5, 1e-3] {
            let (p1, g1) = exp_and_integral(&a, t);
            let (p2, g2) = exp_and_integral_squaring(&a, t);
            for r in 0..2 {
                for k in 0..2 {
                    assert!((p1[r][k] - p2[r][k]).norm() <= 1e-11 * (1.0 + p2[r][k].norm()));
                    assert!((g1[r][k] - g2[r][k]).norm() <= 1e-11 * (t + g2[r][k].norm()));
                }
            }
        }
    }

    #[test]
    fn sliding_manifold_is_invariant_under_equivalent_control() {
        let p = params(10.0);
        let omega = 100.0 * PI;
        let amp = 25.0;
        let iref = |t: f64| Complex64::from_polar(amp, omega * t);
        // start on the manifold with the capacitor discharged
        let mut s = PlantState::new(iref(0.0), c(0.0, 0.0));
        let h = 1e-6;
        let steps = 20_000; // 20 ms
        let mut worst: f64 = 0.0;
        for k in 0..steps {
            let t = k as f64 * h;
            // u_eq from a midpoint estimate of the state keeps the held-input
            // error third order in h
            let dv = derivative(&s, c(0.0, 0.0), &p).v;
            let v_mid = s.v + dv * (0.5 * h);
            let u = equivalent_control(iref(t + 0.5 * h), v_mid, iref(t + 0.5 * h), &p, omega);
            s = propagate_segment(&s, u, h, &p);
            worst = worst.max((s.i - iref(t + h)).norm());
        }
        assert!(worst < 1e-2, "σ drifted to {worst}");
        // the voltage settles near R_L·i_ref (exactly R_L·i_ref/(1 + jωCR_L))
        let t = steps as f64 * h;
        let target = iref(t) * p.load_resistance;
        let exact = target / c(1.0, omega * p.capacitance * p.load_resistance);
        assert!((s.v - exact).norm() < 1e-2 * exact.norm());
        assert!((s.v - target).norm() < 0.07 * target.norm());
    }

    proptest! {
        #[test]
        fn semigroup(a in 0.0..2e-5f64, b in 0.0..2e-5f64, ur in -2.0..2.0f64, ui in -2.0..2.0f64,
                     ir in -30.0..30.0f64, vr in -300.0..300.0f64, load in 1.0..50.0f64) {
            let p = params(load);
            let s = PlantState::new(c(ir, -ir / 2.0), c(vr, vr / 3.0));
            let u = c(ur, ui);
            let whole = propagate_segment(&s, u, a + b, &p);
            let split = propagate_segment(&propagate_segment(&s, u, a, &p), u, b, &p);
            prop_assert!(close(&whole, &split, 1e-10));
        }

        #[test]
        fn superposition(dt in 0.0..1e-4f64, x1 in -50.0..50.0f64, x2 in -50.0..50.0f64,
                         u1 in -2.0..2.0f64, u2 in -2.0..2.0f64) {
            let p = params(10.0);
            let s1 = PlantState::new(c(x1, 1.0), c(-x2, 2.0));
            let s2 = PlantState::new(c(x2, -3.0), c(x1 * 4.0, 0.5));
            let sum = PlantState::new(s1.i + s2.i, s1.v + s2.v);
            let lhs = propagate_segment(&sum, c(u1 + u2, u1), dt, &p);
            let r1 = propagate_segment(&s1, c(u1, u1), dt, &p);
            let r2 = propagate_segment(&s2, c(u2, 0.0), dt, &p);
            let rhs = PlantState::new(r1.i + r2.i, r1.v + r2.v);
            prop_assert!(close(&lhs, &rhs, 1e-10));
        }

        #[test]
        fn unforced_energy_is_non_increasing(ir in -30.0..30.0f64, ii in -30.0..30.0f64,
                                              vr in -300.0..300.0f64, vi in -300.0..300.0f64,
                                              load in 0.5..100.0f64, r in 0.0..1.0f64) {
            let p = VsiParams { resistance: r, ..params(load) };
            let mut s = PlantState::new(c(ir, ii), c(vr, vi));
            let mut e = stored_energy(&s, &p, C23);
            for _ in 0..50 {
                s = propagate_segment(&s, c(0.0, 0.0), 1e-5, &p);
                let e2 = stored_energy(&s, &p, C23);
                prop_assert!(e2 <= e * (1.0 + 1e-12) + 1e-15);
                e = e2;
            }
        }
    }
}
