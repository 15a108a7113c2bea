//! Sampled closed loop: measure, compute the sliding action, modulate it
//! with the selected method, hold it for `delay_periods` periods and
//! propagate the plant over the resulting gate segments.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::modulation::{modulate, GateSchedule, Method, Sector, SwitchVector};
use crate::plant::{propagate_schedule, PlantState, WaveformSegment};
use crate::smc::{existence_margin, sliding_variable, switching_law, ReferenceSpec, VsiParams};
use crate::transform::{ComplexSignal, TransformScale};
use crate::Error;

/// Samples at the start of a run that are excluded from the sliding-band
/// summary.
pub const DEFAULT_TRANSIENT: f64 = 2e-3;

/// What a scripted event changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Change {
    /// New load resistance `R_L` (Ω).
    Load(f64),
    /// New reference amplitude `I_ref` (A).
    Reference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds from the start of the run.
    pub time: f64,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: VsiParams,
    pub reference: ReferenceSpec,
    pub method: Method,
    /// Zero-vector duty, used by zCSA only.
    pub d0: f64,
    /// Sampling period (s).
    pub ts: f64,
    /// Simulated time (s).
    pub duration: f64,
    pub events: Vec<Event>,
    pub scale: TransformScale,
    pub delay_periods: usize,
    /// Centre the CSA/zCSA pulses in odd sectors.
    pub centered: bool,
    /// Quantize gate durations onto this many steps per period; `None`
    /// keeps them exact.
    pub ticks_per_period: Option<u32>,
    /// Upper bound on post-transient `|σ|` (A) before a run is flagged as
    /// having lost the sliding motion. `None` uses [`nominal_sliding_band`].
    pub sliding_band: Option<f64>,
}

impl Scenario {
    /// Inverter test bench used throughout: 2 mH / 20 µF filter, 2 mΩ,
    /// ±300 V bridge, 50 kHz sampling with one period of delay, a 25 A
    /// 50 Hz reference, load 5 Ω → 10 Ω at 25 ms and reference 25 A → 15 A
    /// at 50 ms, 75 ms in total.
    pub fn benchmark(method: Method, d0: f64) -> Self {
        Self {
            params: VsiParams {
                inductance: 2e-3,
                capacitance: 20e-6,
                resistance: 2e-3,
                load_resistance: 5.0,
                dc_voltage: 300.0,
            },
            reference: ReferenceSpec { amplitude: 25.0, omega: 2.0 * std::f64::consts::PI * 50.0 },
            method,
            d0,
            ts: 20e-6,
            duration: 75e-3,
            events: vec![
                Event { time: 25e-3, change: Change::Load(10.0) },
                Event { time: 50e-3, change: Change::Reference(15.0) },
            ],
            scale: TransformScale::AMPLITUDE_INVARIANT,
            delay_periods: 1,
            centered: false,
            ticks_per_period: None,
            sliding_band: None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.params.validate()?;
        self.reference.validate()?;
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::config("Ts", format!("must be finite and > 0, got {}", self.ts)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::config("duration", format!("must be finite and >= 0, got {}", self.duration)));
        }
        if self.method == Method::Zcsa && !(0.0..1.0).contains(&self.d0) {
            return Err(Error::config("d0", format!("must lie in [0, 1) for zcsa, got {}", self.d0)));
        }
        if self.ticks_per_period == Some(0) {
            return Err(Error::config("ticks_per_period", "must be >= 1"));
        }
        if let Some(b) = self.sliding_band {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::config("sliding_band", format!("must be finite and > 0, got {b}")));
            }
        }
        for (n, e) in self.events.iter().enumerate() {
            let field = || format!("events[{n}]");
            if !(e.time.is_finite() && (0.0..=self.duration).contains(&e.time)) {
                return Err(Error::config(
                    field(),
                    format!("time {} outside [0, {}]", e.time, self.duration),
                ));
            }
            match e.change {
                Change::Load(r) if !(r.is_finite() && r > 0.0) => {
                    return Err(Error::config(field(), format!("R_L must be finite and > 0, got {r}")));
                }
                Change::Reference(a) if !(a.is_finite() && a >= 0.0) => {
                    return Err(Error::config(field(), format!("I_ref must be finite and >= 0, got {a}")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Number of sampling periods, the last one possibly truncated.
    pub fn periods(&self) -> usize {
        period_index(self.duration, self.ts)
    }

    pub fn sliding_threshold(&self) -> f64 {
        self.sliding_band.unwrap_or_else(|| nominal_sliding_band(&self.params, self.ts, self.scale))
    }
}

/// Index of the first sampling instant at or after `t`, tolerating a
/// rounding error just above a boundary.
fn period_index(t: f64, ts: f64) -> usize {
    (t / ts - 1e-9).ceil().max(0.0) as usize
}

/// Default post-transient bound on `|σ|`: three times the current swing of
/// one period of full bridge drive across the filter inductance,
/// `3·2c·V_dc·Ts/L`.
pub fn nominal_sliding_band(p: &VsiParams, ts: f64, scale: TransformScale) -> f64 {
    3.0 * scale.active_vector_magnitude() * p.dc_voltage * ts / p.inductance
}

/// Zero duty of the companion run that defines the sliding band.
pub const BAND_ZERO_DUTY: f64 = 0.25;
/// A run has lost the sliding motion when its post-transient `|σ|` exceeds
/// this multiple of the companion band.
pub const SLIDING_LOSS_FACTOR: f64 = 3.0;

/// `SLIDING_LOSS_FACTOR ×` the post-transient max `|σ|` of a zCSA run with
/// `d0 = BAND_ZERO_DUTY` on the same bench, events and timing as `base`.
/// Runs too short to have a post-transient part fall back to
/// [`nominal_sliding_band`].
pub fn calibrated_sliding_band(base: &Scenario) -> Result<f64, Error> {
    let companion = Scenario {
        method: Method::Zcsa,
        d0: BAND_ZERO_DUTY,
        sliding_band: Some(f64::MAX),
        ..base.clone()
    };
    let band = SLIDING_LOSS_FACTOR * run(&companion)?.summary.max_sigma;
    if band > 0.0 {
        Ok(band)
    } else {
        Ok(nominal_sliding_band(&base.params, base.ts, base.scale))
    }
}

/// `I_ref·e^{jωt}`.
pub fn reference_at(t: f64, reference: &ReferenceSpec) -> ComplexSignal {
    Complex64::from_polar(reference.amplitude, reference.omega * t)
}

/// State and controller decision at one sampling instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub i: ComplexSignal,
    pub v: ComplexSignal,
    pub i_ref: ComplexSignal,
    pub sigma: ComplexSignal,
    /// Desired control action computed at this sample.
    pub u: ComplexSignal,
    /// Sector of `u` under the method's convention; `None` while no action
    /// has been computed yet.
    pub sector: Option<Sector>,
    /// CSA duty of `u` (zero for SbI).
    pub duty: f64,
    /// Existence margin in volts.
    pub margin: f64,
    /// Schedule applied during this period (computed `delay_periods` ago).
    pub applied: GateSchedule,
    pub load_resistance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    /// Largest `|σ|` after [`DEFAULT_TRANSIENT`].
    pub max_sigma: f64,
    pub sliding_band: f64,
    pub sliding_lost: bool,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: Scenario,
    pub records: Vec<SampleRecord>,
    /// Applied bridge states with absolute start times, tiling
    /// `[0, duration]`.
    pub waveform: Vec<WaveformSegment>,
    pub final_state: PlantState,
    pub summary: TraceSummary,
}

impl Trace {
    pub fn duration(&self) -> f64 {
        self.scenario.duration
    }
}

/// Runs one scenario from rest (`i = v = 0`).
pub fn run(sc: &Scenario) -> Result<Trace, Error> {
    sc.validate()?;
    let n = sc.periods();
    let ts = sc.ts;
    let gain = sc.scale.active_vector_magnitude();
    let idle = GateSchedule::constant(SwitchVector::ZERO_NEG, ts)?;

    let mut events: Vec<(usize, Change)> = sc.events.iter().map(|e| (period_index(e.time, ts), e.change)).collect();
    // stable: simultaneous events keep file order
    events.sort_by_key(|e| e.0);
    let mut next_event = 0;

    let mut params = sc.params;
    let mut reference = sc.reference;
    let mut state = PlantState::default();
    let mut pipeline: VecDeque<GateSchedule> = std::iter::repeat_n(idle.clone(), sc.delay_periods).collect();
    let mut held: Option<(ComplexSignal, Sector, f64, GateSchedule)> = None;

    let mut records = Vec::with_capacity(n);
    let mut waveform = Vec::with_capacity(n * 3);
    for k in 0..n {
        while next_event < events.len() && events[next_event].0 <= k {
            match events[next_event].1 {
                Change::Load(r) => params.load_resistance = r,
                Change::Reference(a) => reference.amplitude = a,
            }
            next_event += 1;
        }
        let t = k as f64 * ts;
        let i_ref = reference_at(t, &reference);
        let sigma = sliding_variable(state.i, i_ref);
        let decision = match switching_law(sigma, gain) {
            Ok(u) => {
                let m = modulate(sc.method, u, sc.d0, ts, sc.centered)?;
                let schedule = match sc.ticks_per_period {
                    Some(ticks) => quantize(&m.schedule, ticks)?,
                    None => m.schedule,
                };
                Some((u, m.sector, m.duty, schedule))
            }
            Err(Error::DegenerateSigma { .. }) => held.clone(),
            Err(e) => return Err(e),
        };
        held = decision.clone();
        let (u, sector, duty, computed) = match decision {
            Some((u, s, d, sched)) => (u, Some(s), d, sched),
            None => (Complex64::new(0.0, 0.0), None, 0.0, idle.clone()),
        };
        pipeline.push_back(computed);
        let applied = pipeline.pop_front().expect("pipeline holds at least the current schedule");

        // the last period may be cut short by the duration
        let span = (sc.duration - t).min(ts);
        let clipped = clip(&applied, span)?;
        let (next, segments) = propagate_schedule(&state, &clipped, sc.scale, &params);
        waveform.extend(segments.into_iter().map(|s| WaveformSegment { start: t + s.start, ..s }));

        records.push(SampleRecord {
            t,
            i: state.i,
            v: state.v,
            i_ref,
            sigma,
            u,
            sector,
            duty,
            margin: existence_margin(state.i, state.v, i_ref, &params, reference.omega, sc.scale),
            applied,
            load_resistance: params.load_resistance,
        });
        state = next;
    }

    let sliding_band = sc.sliding_threshold();
    let max_sigma = records
        .iter()
        .filter(|r| r.t >= DEFAULT_TRANSIENT)
        .map(|r| r.sigma.norm())
        .fold(0.0, f64::max);
    let min_margin = records.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(Trace {
        scenario: sc.clone(),
        records,
        waveform,
        final_state: state,
        summary: TraceSummary { max_sigma, sliding_band, sliding_lost: max_sigma > sliding_band, min_margin },
    })
}

/// Independent zCSA runs of `base`, one per zero duty.
pub fn run_sweep(base: &Scenario, d0_values: &[f64]) -> Result<Vec<(f64, Trace)>, Error> {
    if base.method != Method::Zcsa {
        return Err(Error::config("method", "a d0 sweep needs method = zcsa"));
    }
    d0_values
        .iter()
        .map(|&d0| {
            let sc = Scenario { d0, ..base.clone() };
            run(&sc).map(|t| (d0, t))
        })
        .collect()
}

fn quantize(s: &GateSchedule, ticks: u32) -> Result<GateSchedule, Error> {
    let step = s.period() / ticks as f64;
    let parts: Vec<(SwitchVector, f64)> = s.to_ticks(ticks).into_iter().map(|(v, c)| (v, c as f64 * step)).collect();
    GateSchedule::from_parts(s.period(), &parts)
}

/// Keeps the first `span` seconds of a schedule.
fn clip(s: &GateSchedule, span: f64) -> Result<GateSchedule, Error> {
    if span >= s.period() {
        return Ok(s.clone());
    }
    let mut parts = Vec::with_capacity(s.segments().len());
    let mut left = span;
    for seg in s.segments() {
        if left <= 0.0 {
            break;
        }
        let d = seg.duration.min(left);
        parts.push((seg.vector, d));
        left -= d;
    }
    GateSchedule::from_parts(span, &parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::{schedule_average, vector_to_complex};
    use crate::transform::complex_to_abc;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn short(method: Method, d0: f64, duration: f64) -> Scenario {
        Scenario { duration, events: vec![], ..Scenario::benchmark(method, d0) }
    }

    #[test]
    fn reference_examples() {
        let r = ReferenceSpec { amplitude: 25.0, omega: 2.0 * PI * 50.0 };
        assert_eq!(reference_at(0.0, &r), Complex64::new(25.0, 0.0));
        let q = reference_at(5e-3, &r);
        assert!(q.re.abs() < 1e-12);
        assert_relative_eq!(q.im, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_projects_onto_balanced_cosines() {
        let r = ReferenceSpec { amplitude: 7.5, omega: 2.0 * PI * 60.0 };
        let c = TransformScale::AMPLITUDE_INVARIANT;
        for n in 0..200 {
            let t = n as f64 * 1.3e-4;
            let abc = complex_to_abc(reference_at(t, &r), 0.0, c);
            let th = r.omega * t;
            assert_relative_eq!(abc.a, 7.5 * th.cos(), epsilon = 1e-12);
            assert_relative_eq!(abc.b, 7.5 * (th - 2.0 * PI / 3.0).cos(), epsilon = 1e-12);
            assert_relative_eq!(abc.c, 7.5 * (th + 2.0 * PI / 3.0).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let t = run(&short(Method::Sbi, 0.0, 0.0)).unwrap();
        assert!(t.records.is_empty());
        assert!(t.waveform.is_empty());
    }

    #[test]
    fn invalid_scenarios_name_the_field() {
        let mut sc = short(Method::Zcsa, 1.2, 1e-3);
        match run(&sc) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "d0"),
            other => panic!("{other:?}"),
        }
        sc.d0 = 0.2;
        sc.ts = 0.0;
        match run(&sc) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "Ts"),
            other => panic!("{other:?}"),
        }
        sc.ts = 20e-6;
        sc.events.push(Event { time: 2e-3, change: Change::Load(1.0) });
        match run(&sc) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "events[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_structure() {
        let sc = Scenario { duration: 1.01e-3, ..short(Method::Zcsa, 0.2, 1e-3) };
        let t = run(&sc).unwrap();
        assert_eq!(t.records.len(), 51);
        for (k, r) in t.records.iter().enumerate() {
            assert_eq!(r.t, k as f64 * sc.ts);
        }
        // waveform tiles [0, duration]
        let mut end = 0.0;
        for w in &t.waveform {
            assert!((w.start - end).abs() < 1e-15);
            end = w.start + w.duration;
        }
        assert!((end - sc.duration).abs() < 1e-15);
        // pipeline fill
        assert_eq!(t.records[0].applied, GateSchedule::constant(SwitchVector::ZERO_NEG, sc.ts).unwrap());
    }

    #[test]
    fn delay_shifts_the_schedules() {
        let sc = short(Method::Csa, 0.0, 1e-3);
        let t0 = run(&Scenario { delay_periods: 0, ..sc.clone() }).unwrap();
        let t1 = run(&sc).unwrap();
        assert_eq!(t0.records[0].applied.segments().len(), 1 + usize::from(t0.records[0].duty > 0.0));
        // the first sample sees the same state in both runs
        assert_eq!(t0.records[0].u, t1.records[0].u);
        assert_eq!(t1.records[1].applied, modulate(Method::Csa, t1.records[0].u, 0.0, sc.ts, false).unwrap().schedule);
    }

    #[test]
    fn waveform_matches_applied_schedules() {
        let sc = short(Method::Zcsa, 0.25, 2e-3);
        let t = run(&sc).unwrap();
        let mut w = t.waveform.iter();
        for r in &t.records {
            for seg in r.applied.segments() {
                let ws = w.next().unwrap();
                assert_eq!(ws.vector, seg.vector);
                assert_eq!(ws.duration, seg.duration);
                assert!(ws.start >= r.t && ws.start < r.t + sc.ts);
            }
        }
        assert!(w.next().is_none());
    }

    #[test]
    fn quantized_csa_average_within_a_tick() {
        let ticks = 1000;
        let sc = Scenario { ticks_per_period: Some(ticks), ..short(Method::Csa, 0.0, 2e-3) };
        let t = run(&Scenario { delay_periods: 0, ..sc.clone() }).unwrap();
        let c = sc.scale;
        for r in &t.records {
            let s = r.sector.unwrap();
            let (up, um) = s.csa_vectors();
            let want = vector_to_complex(up, c) * r.duty + vector_to_complex(um, c) * (1.0 - r.duty);
            let got = schedule_average(&r.applied, c);
            // one tick moves the average by at most |u⁺ − u⁻|/ticks
            assert!((got - want).norm() <= 2.0 * c.value() * 2.0 / ticks as f64 + 1e-12);
        }
    }

    #[test]
    fn events_snap_and_apply_in_order() {
        let mut sc = short(Method::Sbi, 0.0, 1e-3);
        sc.events = vec![
            Event { time: 0.5e-3 + 1e-6, change: Change::Load(7.0) },
            Event { time: 0.5e-3 + 1e-6, change: Change::Load(8.0) },
        ];
        let t = run(&sc).unwrap();
        assert_eq!(t.records[25].load_resistance, 5.0);
        assert_eq!(t.records[26].load_resistance, 8.0);
        // an event exactly on a boundary applies at that boundary
        sc.events = vec![Event { time: 0.5e-3, change: Change::Reference(10.0) }];
        let t = run(&sc).unwrap();
        assert_eq!(t.records[24].i_ref.norm(), 25.0);
        assert_relative_eq!(t.records[25].i_ref.norm(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_sigma_at_start_applies_zero_vector() {
        let mut sc = short(Method::Csa, 0.0, 0.2e-3);
        sc.reference.amplitude = 0.0;
        sc.delay_periods = 0;
        let t = run(&sc).unwrap();
        // the plant never leaves rest, so σ stays at zero
        for r in &t.records {
            assert_eq!(r.sector, None);
            assert_eq!(r.applied.segments()[0].vector, SwitchVector::ZERO_NEG);
        }
        assert_eq!(t.final_state, PlantState::default());
    }

    #[test]
    fn sweep_matches_single_runs() {
        let base = short(Method::Zcsa, 0.0, 0.5e-3);
        let sweep = run_sweep(&base, &[0.1]).unwrap();
        assert_eq!(sweep[0].1, run(&Scenario { d0: 0.1, ..base.clone() }).unwrap());
        assert!(run_sweep(&short(Method::Csa, 0.0, 1e-4), &[0.1]).is_err());
    }

    #[test]
    fn no_delay_tightens_sbi_band() {
        let base = Scenario { events: vec![], duration: 20e-3, ..Scenario::benchmark(Method::Sbi, 0.0) };
        let d1 = run(&base).unwrap();
        let d0 = run(&Scenario { delay_periods: 0, ..base }).unwrap();
        assert!(d0.summary.max_sigma < d1.summary.max_sigma);
    }
}
