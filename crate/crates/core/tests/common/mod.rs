//! Independent reference integrator for the plant: classical RK4 on the
//! state equations, written against the raw parameters only.

use csmc_core::plant::PlantState;
use csmc_core::smc::VsiParams;
use num_complex::Complex64;

fn rhs(i: Complex64, v: Complex64, u: Complex64, p: &VsiParams) -> (Complex64, Complex64) {
    (
        (u * p.dc_voltage - i * p.resistance - v) / p.inductance,
        (i - v / p.load_resistance) / p.capacitance,
    )
}

/// Integrates with constant input `u` over `dt` in `substeps` RK4 steps.
pub fn rk4(s: &PlantState, u: Complex64, dt: f64, substeps: usize, p: &VsiParams) -> PlantState {
    let h = dt / substeps as f64;
    let (mut i, mut v) = (s.i, s.v);
    for _ in 0..substeps {
        let (a1, b1) = rhs(i, v, u, p);
        let (a2, b2) = rhs(i + a1 * (h / 2.0), v + b1 * (h / 2.0), u, p);
        let (a3, b3) = rhs(i + a2 * (h / 2.0), v + b2 * (h / 2.0), u, p);
        let (a4, b4) = rhs(i + a3 * h, v + b3 * h, u, p);
        i += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        v += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
    }
    PlantState::new(i, v)
}

pub fn bench_params(load: f64) -> VsiParams {
    VsiParams { inductance: 2e-3, capacitance: 20e-6, resistance: 2e-3, load_resistance: load, dc_voltage: 300.0 }
}

/// `|a − b| / max(|b|, floor)` over the stacked state.
pub fn relative_error(a: &PlantState, b: &PlantState, floor: f64) -> f64 {
    (*a - *b).norm() / b.norm().max(floor)
}
