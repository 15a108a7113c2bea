//! Post-run metrics over a [`Trace`]: current-tracking KPIs, spectra of the
//! leg switching signals, the sliding-plane cloud and the sector sequence.
//!
//! Windows are half-open `[start, end)`; a sample at time `t` belongs to the
//! window when `start <= t < end`.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::modulation::Method;
use crate::sim::Trace;
use crate::transform::complex_to_abc;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    fn check(&self, trace: &Trace) -> Result<(), Error> {
        let slack = 1e-9 * trace.scenario.ts;
        if !(self.start.is_finite() && self.end.is_finite())
            || self.start < 0.0
            || self.end < self.start
            || self.end > trace.duration() + slack
        {
            return Err(Error::Range(format!(
                "window [{}, {}) is outside the trace [0, {}]",
                self.start,
                self.end,
                trace.duration()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }
}

/// Current-tracking errors over a window, pooled over the three phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub rmse: f64,
    /// Maximum absolute error.
    pub mae: f64,
    pub rmse_per_phase: [f64; 3],
    pub mae_per_phase: [f64; 3],
    pub window: Window,
    pub samples: usize,
    pub method: Method,
    pub d0: Option<f64>,
}

/// RMSE and maximum absolute error of `i_abc − i_abc^ref` at the sampling
/// instants of the window.
pub fn kpi(trace: &Trace, window: Window) -> Result<KpiReport, Error> {
    window.check(trace)?;
    let scale = trace.scenario.scale;
    let mut sq = [0.0; 3];
    let mut mae = [0.0f64; 3];
    let mut samples = 0usize;
    for r in trace.records.iter().filter(|r| window.contains(r.t)) {
        let e = complex_to_abc(r.i - r.i_ref, 0.0, scale).as_array();
        for k in 0..3 {
            sq[k] += e[k] * e[k];
            mae[k] = mae[k].max(e[k].abs());
        }
        samples += 1;
    }
    let n = samples.max(1) as f64;
    let sc = &trace.scenario;
    Ok(KpiReport {
        rmse: (sq.iter().sum::<f64>() / (3.0 * n)).sqrt(),
        mae: mae.iter().copied().fold(0.0, f64::max),
        rmse_per_phase: sq.map(|s| (s / n).sqrt()),
        mae_per_phase: mae,
        window,
        samples,
        method: sc.method,
        d0: (sc.method == Method::Zcsa).then_some(sc.d0),
    })
}

/// Single-sided amplitude spectrum. A sinusoid of amplitude `A` at a bin
/// frequency shows as `A` in that bin; the DC bin holds the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Number of resampled points the transform was taken over.
    pub points: usize,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Mean square of the time signal recovered from the amplitudes.
    pub fn mean_square(&self) -> f64 {
        let n = self.magnitudes.len();
        let even = self.points.is_multiple_of(2);
        self.magnitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k == 0 || (even && k == n - 1) {
                    a * a
                } else {
                    0.5 * a * a
                }
            })
            .sum()
    }
}

/// Default analysis rate as a multiple of the sampling frequency.
pub const DEFAULT_OVERSAMPLING: usize = 16;

/// Cell averages of one leg's switching signal (`±1`) on a uniform grid of
/// `oversampling` points per sampling period. The signal is piecewise
/// constant, so every cell value is exact.
pub fn resample_leg(trace: &Trace, phase: Phase, window: Window, oversampling: usize) -> Result<Vec<f64>, Error> {
    window.check(trace)?;
    if oversampling == 0 {
        return Err(Error::config("oversampling", "must be >= 1"));
    }
    let dt = trace.scenario.ts / oversampling as f64;
    let n = (window.length() / dt).round() as usize;
    let mut out = vec![0.0; n];
    let leg = phase.index();
    let first = trace.waveform.partition_point(|w| w.start + w.duration <= window.start);
    let mut w = first;
    for (m, cell) in out.iter_mut().enumerate() {
        let a = window.start + m as f64 * dt;
        let b = a + dt;
        while w < trace.waveform.len() && trace.waveform[w].start + trace.waveform[w].duration <= a {
            w += 1;
        }
        let mut acc = 0.0;
        let mut j = w;
        while j < trace.waveform.len() && trace.waveform[j].start < b {
            let seg = &trace.waveform[j];
            let lo = seg.start.max(a);
            let hi = (seg.start + seg.duration).min(b);
            if hi > lo {
                acc += (hi - lo) * seg.vector.legs()[leg] as f64;
            }
            j += 1;
        }
        *cell = acc / dt;
    }
    Ok(out)
}

/// Rectangular-window DFT of `signal` sampled at `rate`, as single-sided
/// amplitudes.
pub fn amplitude_spectrum(signal: &[f64], rate: f64) -> Spectrum {
    let n = signal.len();
    if n == 0 {
        return Spectrum { frequencies: vec![], magnitudes: vec![], points: 0 };
    }
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
        signal.iter().map(|&x| rustfft::num_complex::Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let nf = n as f64;
    let magnitudes = (0..=half)
        .map(|k| {
            let a = buf[k].norm() / nf;
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                a
            } else {
                2.0 * a
            }
        })
        .collect();
    let frequencies = (0..=half).map(|k| k as f64 * rate / nf).collect();
    Spectrum { frequencies, magnitudes, points: n }
}

/// Spectrum of one leg's switching signal over the window, resampled at
/// `oversampling × fs`.
pub fn switching_spectrum(trace: &Trace, phase: Phase, window: Window, oversampling: usize) -> Result<Spectrum, Error> {
    let signal = resample_leg(trace, phase, window, oversampling)?;
    let rate = oversampling as f64 / trace.scenario.ts;
    Ok(amplitude_spectrum(&signal, rate))
}

/// Frequencies below this are treated as the fundamental region.
pub const DEFAULT_PEAK_FLOOR: f64 = 1e3;

/// The `count` largest local maxima at or above `exclude_below` Hz,
/// descending by magnitude (ties by frequency). Maxima at rounding-noise
/// level (below `1e-9` of the largest bin) are ignored.
pub fn dominant_peaks(s: &Spectrum, count: usize, exclude_below: f64) -> Vec<(f64, f64)> {
    let m = &s.magnitudes;
    let floor = 1e-9 * m.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = (0..m.len())
        .filter(|&k| s.frequencies[k] >= exclude_below)
        .filter(|&k| {
            let left = k == 0 || m[k] > m[k - 1];
            let right = k + 1 == m.len() || m[k] >= m[k + 1];
            left && right && m[k] > floor
        })
        .map(|k| (s.frequencies[k], m[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    peaks.truncate(count);
    peaks
}

/// Six support values of a point cloud along directions
/// `orientation + k·60°`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexagonFit {
    /// Degrees in `[0, 60)`; direction of the first face normal.
    pub orientation_deg: f64,
    pub supports: [f64; 6],
    /// Mean support over the largest `|σ|`: `√3/2` for a cloud filling a
    /// hexagon up to its corners, `1` for a disc.
    pub vertex_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingPlane {
    /// `(Re σ, Im σ)` per sample.
    pub points: Vec<(f64, f64)>,
    pub max_abs: f64,
    pub hexagon: Option<HexagonFit>,
}

pub fn sliding_plane(trace: &Trace, window: Window) -> Result<SlidingPlane, Error> {
    window.check(trace)?;
    let points: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| window.contains(r.t))
        .map(|r| (r.sigma.re, r.sigma.im))
        .collect();
    let max_abs = points.iter().map(|p| p.0.hypot(p.1)).fold(0.0, f64::max);
    let hexagon = fit_hexagon(&points);
    Ok(SlidingPlane { points, max_abs, hexagon })
}

/// Orientation (0.25° grid) minimizing the mean support, i.e. the tightest
/// circumscribed equiangular hexagon.
pub fn fit_hexagon(points: &[(f64, f64)]) -> Option<HexagonFit> {
    let max_abs = points.iter().map(|p| p.0.hypot(p.1)).fold(0.0, f64::max);
    if max_abs == 0.0 {
        return None;
    }
    let supports_at = |deg: f64| -> [f64; 6] {
        let mut h = [f64::NEG_INFINITY; 6];
        for (k, hk) in h.iter_mut().enumerate() {
            let (s, c) = (deg + 60.0 * k as f64).to_radians().sin_cos();
            *hk = points.iter().map(|p| p.0 * c + p.1 * s).fold(f64::NEG_INFINITY, f64::max);
        }
        h
    };
    let mean = |h: &[f64; 6]| h.iter().sum::<f64>() / 6.0;
    let (orientation_deg, supports) = (0..240)
        .map(|k| {
            let deg = k as f64 * 0.25;
            (deg, supports_at(deg))
        })
        .min_by(|a, b| mean(&a.1).total_cmp(&mean(&b.1)))
        .expect("grid is non-empty");
    Some(HexagonFit { orientation_deg, supports, vertex_ratio: mean(&supports) / max_abs })
}

/// Sector of the desired action at each sample of the window.
pub fn sector_trace(trace: &Trace, window: Window) -> Result<Vec<(f64, u8)>, Error> {
    window.check(trace)?;
    Ok(trace
        .records
        .iter()
        .filter(|r| window.contains(r.t))
        .filter_map(|r| r.sector.map(|s| (r.t, s.index())))
        .collect())
}

/// Fraction of sector changes that move to a neighbouring sector. `None`
/// when the sector never changes.
pub fn adjacent_transition_fraction(sectors: &[(f64, u8)]) -> Option<f64> {
    let mut changes = 0usize;
    let mut adjacent = 0usize;
    for w in sectors.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if a != b {
            changes += 1;
            let step = (b as i32 - a as i32).rem_euclid(6);
            if step == 1 || step == 5 {
                adjacent += 1;
            }
        }
    }
    (changes > 0).then(|| adjacent as f64 / changes as f64)
}
