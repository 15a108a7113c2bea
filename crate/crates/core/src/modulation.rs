//! Sampled implementations of the complex switching law on a two-level
//! bridge.
//!
//! * **SbI** applies, for the whole sampling period, the active vector
//!   closest in angle to the desired control.
//! * **CSA** time-averages the two active vectors bracketing the desired
//!   control: `[u⁺ (d/2)Ts, u⁻ (1−d)Ts, u⁺ (d/2)Ts]`.
//! * **zCSA** additionally inserts a zero vector for `d0·Ts` in the middle
//!   of the period, scaling the averaged action by `1 − d0`.
//!
//! Sector intervals are half-open `[lower, upper)` on angles normalised to
//! `[0°, 360°)`.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::smc::DEFAULT_SIGMA_EPSILON;
use crate::transform::{abc_to_complex, sextant_angle, wrap_angle, ComplexSignal, ThreePhaseSample, TransformScale};
use crate::Error;

/// Per-leg state of the bridge, each entry `+1` (upper switch on) or `−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchVector([i8; 3]);

impl SwitchVector {
    pub const V1: Self = Self([1, -1, -1]);
    pub const V2: Self = Self([1, 1, -1]);
    pub const V3: Self = Self([-1, 1, -1]);
    pub const V4: Self = Self([-1, 1, 1]);
    pub const V5: Self = Self([-1, -1, 1]);
    pub const V6: Self = Self([1, -1, 1]);
    pub const ZERO_POS: Self = Self([1, 1, 1]);
    pub const ZERO_NEG: Self = Self([-1, -1, -1]);

    const ACTIVE: [Self; 6] = [Self::V1, Self::V2, Self::V3, Self::V4, Self::V5, Self::V6];

    pub fn new(ua: i8, ub: i8, uc: i8) -> Result<Self, Error> {
        for (leg, x) in ["ua", "ub", "uc"].iter().zip([ua, ub, uc]) {
            if x != 1 && x != -1 {
                return Err(Error::config(*leg, format!("switch state must be -1 or +1, got {x}")));
            }
        }
        Ok(Self([ua, ub, uc]))
    }

    /// Active vector `V_n`, `n` in `1..=6`.
    pub fn active(n: usize) -> Self {
        assert!((1..=6).contains(&n), "active vector index {n} out of 1..=6");
        Self::ACTIVE[n - 1]
    }

    /// All eight admissible states, `V1..V6` then `V0+`, `V0−`.
    pub fn all() -> [Self; 8] {
        [
            Self::V1,
            Self::V2,
            Self::V3,
            Self::V4,
            Self::V5,
            Self::V6,
            Self::ZERO_POS,
            Self::ZERO_NEG,
        ]
    }

    pub fn legs(self) -> [i8; 3] {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO_POS || self == Self::ZERO_NEG
    }

    /// Number of legs whose state differs.
    pub fn hamming(self, other: Self) -> u32 {
        self.0.iter().zip(other.0).filter(|(a, b)| **a != *b).count() as u32
    }

    /// The zero vector reachable from `self` by commuting a single leg.
    /// `None` for zero vectors themselves.
    pub fn adjacent_zero(self) -> Option<Self> {
        [Self::ZERO_POS, Self::ZERO_NEG].into_iter().find(|z| z.hamming(self) == 1)
    }

    pub fn as_sample(self) -> ThreePhaseSample {
        ThreePhaseSample::new(self.0[0] as f64, self.0[1] as f64, self.0[2] as f64)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::V1 => "V1",
            Self::V2 => "V2",
            Self::V3 => "V3",
            Self::V4 => "V4",
            Self::V5 => "V5",
            Self::V6 => "V6",
            Self::ZERO_POS => "V0+",
            _ => "V0-",
        }
    }
}

impl fmt::Display for SwitchVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{},{})", self.name(), self.0[0], self.0[1], self.0[2])
    }
}

/// Complex image of a bridge state: radius `2c` at `k·60°` for the active
/// vectors, the origin for the zero vectors.
pub fn vector_to_complex(v: SwitchVector, scale: TransformScale) -> ComplexSignal {
    abc_to_complex(v.as_sample(), scale).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorConvention {
    /// Sector `k` spans `[−30° + 60°(k−1), 30° + 60°(k−1))`, centred on `V_k`.
    Sbi,
    /// Sector `k` spans `[60°(k−1), 60°k)`, bounded by `V_k` and `V_{k+1}`.
    Csa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    index: u8,
    convention: SectorConvention,
}

impl Sector {
    pub fn new(index: u8, convention: SectorConvention) -> Result<Self, Error> {
        if (1..=6).contains(&index) {
            Ok(Self { index, convention })
        } else {
            Err(Error::config("sector", format!("index must be in 1..=6, got {index}")))
        }
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn convention(self) -> SectorConvention {
        self.convention
    }

    pub fn is_odd(self) -> bool {
        self.index % 2 == 1
    }

    /// `(u⁺, u⁻)` of a CSA sector: `u⁻ = V_k` at the lower edge, `u⁺ = V_{k+1}`.
    pub fn csa_vectors(self) -> (SwitchVector, SwitchVector) {
        let k = self.index as usize;
        (SwitchVector::active(k % 6 + 1), SwitchVector::active(k))
    }

    /// Lower edge angle `∠u⁻` in radians.
    pub fn lower_edge(self) -> f64 {
        match self.convention {
            SectorConvention::Csa => sextant_angle(self.index as usize - 1),
            SectorConvention::Sbi => wrap_angle(sextant_angle(self.index as usize - 1) - FRAC_PI_6),
        }
    }
}

fn control_angle(u: ComplexSignal) -> Result<f64, Error> {
    let m = u.norm();
    if m.is_nan() || m < DEFAULT_SIGMA_EPSILON {
        return Err(Error::DegenerateSigma { magnitude: m, epsilon: DEFAULT_SIGMA_EPSILON });
    }
    Ok(wrap_angle(u.arg()))
}

const SECTOR_EDGE_SNAP: f64 = 1e-12;

/// Splits a `[0, 2π)` angle into a sextant index `0..6` and the fractional
/// position `[0, 1)` inside it.
fn sextant(theta: f64) -> (usize, f64) {
    let mut x = theta / FRAC_PI_3;
    // angles a rounding error below a sector edge belong to the edge
    if (x - x.round()).abs() < SECTOR_EDGE_SNAP {
        x = x.round();
    }
    let k = x.floor();
    let frac = x - k;
    let k = k as usize;
    if k >= 6 || frac >= 1.0 {
        ((k + usize::from(frac >= 1.0)) % 6, 0.0)
    } else {
        (k, frac)
    }
}

pub fn sbi_sector(u: ComplexSignal) -> Result<Sector, Error> {
    let theta = control_angle(u)?;
    let (k, _) = sextant(wrap_angle(theta + FRAC_PI_6));
    Ok(Sector { index: k as u8 + 1, convention: SectorConvention::Sbi })
}

/// Active vector of the SbI sector containing `∠u`.
pub fn sbi_select(u: ComplexSignal) -> Result<SwitchVector, Error> {
    Ok(SwitchVector::active(sbi_sector(u)?.index as usize))
}

pub fn csa_sector(u: ComplexSignal) -> Result<Sector, Error> {
    let (k, _) = sextant(control_angle(u)?);
    Ok(Sector { index: k as u8 + 1, convention: SectorConvention::Csa })
}

/// `d = (∠u − ∠u⁻)/60°`, in `[0, 1)`.
pub fn csa_duty(u: ComplexSignal) -> Result<f64, Error> {
    let (_, d) = sextant(control_angle(u)?);
    Ok(d)
}

/// Duty cycles of one zCSA period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyPair {
    /// CSA duty `(∠u − ∠u⁻)/60°`.
    pub d: f64,
    /// Zero-vector duty.
    pub d0: f64,
    /// Applied duty `(1 − d0)·d`.
    pub d_a: f64,
}

impl DutyPair {
    pub fn new(d: f64, d0: f64) -> Result<Self, Error> {
        check_d0(d0)?;
        if !(0.0..1.0).contains(&d) {
            return Err(Error::InvalidDuty { value: d, reason: "duty must lie in [0, 1)" });
        }
        Ok(Self { d, d0, d_a: (1.0 - d0) * d })
    }
}

fn check_d0(d0: f64) -> Result<(), Error> {
    if (0.0..1.0).contains(&d0) {
        Ok(())
    } else {
        Err(Error::InvalidDuty { value: d0, reason: "zero duty must lie in [0, 1)" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub vector: SwitchVector,
    /// Seconds.
    pub duration: f64,
}

/// Piecewise-constant bridge command over one sampling period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSchedule {
    period: f64,
    segments: Vec<Segment>,
}

pub const MAX_SEGMENTS: usize = 5;

impl GateSchedule {
    /// Builds a schedule from `(vector, duration)` pairs. The last duration
    /// is recomputed from the period so the segments tile it; zero-length
    /// segments are dropped and neighbours with the same vector merged.
    pub fn from_parts(period: f64, parts: &[(SwitchVector, f64)]) -> Result<Self, Error> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::config("Ts", format!("sampling period must be > 0, got {period}")));
        }
        if parts.is_empty() || parts.len() > MAX_SEGMENTS {
            return Err(Error::config("schedule", format!("expected 1..={MAX_SEGMENTS} segments, got {}", parts.len())));
        }
        let n = parts.len();
        let head: f64 = parts[..n - 1].iter().map(|p| p.1).sum();
        let tol = 4.0 * f64::EPSILON * period * n as f64;
        if parts.iter().any(|p| p.1.is_nan() || p.1 < 0.0) || (head + parts[n - 1].1 - period).abs() > tol + 1e-9 * period {
            return Err(Error::config("schedule", "durations must be >= 0 and sum to the period"));
        }
        let mut segments: Vec<Segment> = Vec::with_capacity(n);
        for (i, &(vector, duration)) in parts.iter().enumerate() {
            let duration = if i == n - 1 { (period - head).max(0.0) } else { duration };
            if duration <= 0.0 {
                continue;
            }
            match segments.last_mut() {
                Some(last) if last.vector == vector => last.duration += duration,
                _ => segments.push(Segment { vector, duration }),
            }
        }
        Ok(Self { period, segments })
    }

    /// One vector for the whole period.
    pub fn constant(vector: SwitchVector, period: f64) -> Result<Self, Error> {
        Self::from_parts(period, &[(vector, period)])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Quantizes the durations onto `ticks` equal steps of the period using
    /// largest-remainder apportionment; counts always sum to `ticks`. Ties
    /// in the remainder go to the earlier segment. Segments that receive no
    /// tick are dropped.
    pub fn to_ticks(&self, ticks: u32) -> Vec<(SwitchVector, u32)> {
        let exact: Vec<f64> = self
            .segments
            .iter()
            .map(|s| s.duration / self.period * ticks as f64)
            .collect();
        let mut counts: Vec<u32> = exact.iter().map(|x| x.floor() as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut missing = ticks.saturating_sub(assigned) as usize;
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            counts[i] += 1;
            missing -= 1;
        }
        self.segments
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(s, c)| (s.vector, c))
            .collect()
    }
}

/// Duration-weighted mean of the complex images of the segments.
pub fn schedule_average(s: &GateSchedule, scale: TransformScale) -> ComplexSignal {
    let sum: Complex64 = s
        .segments
        .iter()
        .map(|seg| vector_to_complex(seg.vector, scale) * seg.duration)
        .sum();
    sum / s.period
}

pub fn csa_schedule(u: ComplexSignal, ts: f64) -> Result<GateSchedule, Error> {
    zcsa_schedule(u, 0.0, ts)
}

pub fn zcsa_duty(u: ComplexSignal, d0: f64) -> Result<DutyPair, Error> {
    check_d0(d0)?;
    DutyPair::new(csa_duty(u)?, d0)
}

/// Five-segment zero-vector schedule
/// `[u⁺ (d_a/2)Ts, u⁻ ((1−d0−d_a)/2)Ts, u⁰ d0·Ts, u⁻ …, u⁺ …]`, with `u⁰`
/// the zero vector one leg away from `u⁻`. With `d0 = 0` this is the CSA
/// schedule.
pub fn zcsa_schedule(u: ComplexSignal, d0: f64, ts: f64) -> Result<GateSchedule, Error> {
    let sector = csa_sector(u)?;
    let duty = zcsa_duty(u, d0)?;
    let (up, um) = sector.csa_vectors();
    let zero = um.adjacent_zero().expect("active vector has an adjacent zero vector");
    let edge = 0.5 * duty.d_a * ts;
    let side = 0.5 * (1.0 - d0 - duty.d_a) * ts;
    GateSchedule::from_parts(
        ts,
        &[(up, edge), (um, side), (zero, d0 * ts), (um, side), (up, edge)],
    )
}

/// Reorders CSA/zCSA schedules of odd sectors as `[u⁻, u⁺, (u⁰,) u⁺, u⁻]`
/// so the rising edges of all legs are centred in the period. The zero
/// vector is re-chosen adjacent to its new neighbour `u⁺`. Even sectors
/// and SbI-convention sectors are returned unchanged.
pub fn centered_reorder(s: &GateSchedule, sector: Sector) -> GateSchedule {
    if sector.convention != SectorConvention::Csa || !sector.is_odd() {
        return s.clone();
    }
    let (up, um) = sector.csa_vectors();
    let total = |pred: &dyn Fn(SwitchVector) -> bool| -> f64 {
        s.segments.iter().filter(|g| pred(g.vector)).map(|g| g.duration).sum()
    };
    let t_plus = total(&|v| v == up);
    let t_minus = total(&|v| v == um);
    let t_zero = total(&|v| v.is_zero());
    let zero = up.adjacent_zero().expect("active vector has an adjacent zero vector");
    let raw = [
        (um, 0.5 * t_minus),
        (up, 0.5 * t_plus),
        (zero, t_zero),
        (up, 0.5 * t_plus),
        (um, 0.5 * t_minus),
    ];
    let mut segments: Vec<Segment> = Vec::with_capacity(MAX_SEGMENTS);
    for (vector, duration) in raw {
        if duration <= 0.0 {
            continue;
        }
        match segments.last_mut() {
            Some(last) if last.vector == vector => last.duration += duration,
            _ => segments.push(Segment { vector, duration }),
        }
    }
    GateSchedule { period: s.period, segments }
}

/// Relative modulus deviation of the CSA average, `1 − √(d² − d + 1)`.
pub fn deviation_modulus(d: f64) -> f64 {
    1.0 - (d * d - d + 1.0).sqrt()
}

/// Phase deviation `∠u − ∠û` of the CSA average, in degrees:
/// `60°·d + atan(√3·d/(d − 2))`.
pub fn deviation_phase(d: f64) -> f64 {
    60.0 * d + (3f64.sqrt() * d / (d - 2.0)).atan().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationExtrema {
    pub modulus_max: f64,
    pub modulus_argmax: f64,
    /// Largest positive phase deviation (degrees) and where it occurs.
    pub phase_max: f64,
    pub phase_argmax: f64,
    /// Most negative phase deviation (degrees) and where it occurs.
    pub phase_min: f64,
    pub phase_argmin: f64,
}

/// Locates the extrema of both deviation functions on `[0, 1]` by a grid
/// scan of `steps` intervals followed by golden-section refinement.
pub fn locate_deviation_extrema(steps: usize) -> DeviationExtrema {
    let steps = steps.max(4);
    let grid = |f: &dyn Fn(f64) -> f64| -> f64 {
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for k in 0..=steps {
            let d = k as f64 / steps as f64;
            let y = f(d);
            if y > best {
                best = y;
                arg = d;
            }
        }
        let h = 1.0 / steps as f64;
        golden_max(f, (arg - h).max(0.0), (arg + h).min(1.0))
    };
    let modulus_argmax = grid(&deviation_modulus);
    let phase_argmax = grid(&deviation_phase);
    let phase_argmin = grid(&|d| -deviation_phase(d));
    DeviationExtrema {
        modulus_max: deviation_modulus(modulus_argmax),
        modulus_argmax,
        phase_max: deviation_phase(phase_argmax),
        phase_argmax,
        phase_min: deviation_phase(phase_argmin),
        phase_argmin,
    }
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Switching implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sbi,
    Csa,
    Zcsa,
}

impl Method {
    pub fn convention(self) -> SectorConvention {
        match self {
            Method::Sbi => SectorConvention::Sbi,
            Method::Csa | Method::Zcsa => SectorConvention::Csa,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::Sbi => "SBI",
            Method::Csa => "CSA",
            Method::Zcsa => "ZCSA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sbi" => Ok(Method::Sbi),
            "csa" => Ok(Method::Csa),
            "zcsa" => Ok(Method::Zcsa),
            other => Err(Error::config("method", format!("unknown method `{other}` (expected sbi, csa or zcsa)"))),
        }
    }
}

/// A method's decision for one sampling period.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    pub schedule: GateSchedule,
    pub sector: Sector,
    /// CSA duty `d` (always `0` for SbI).
    pub duty: f64,
}

/// Runs the selected method on a desired control action.
pub fn modulate(method: Method, u: ComplexSignal, d0: f64, ts: f64, centered: bool) -> Result<Modulated, Error> {
    match method {
        Method::Sbi => {
            let sector = sbi_sector(u)?;
            let schedule = GateSchedule::constant(SwitchVector::active(sector.index as usize), ts)?;
            Ok(Modulated { schedule, sector, duty: 0.0 })
        }
        Method::Csa | Method::Zcsa => {
            let sector = csa_sector(u)?;
            let d0 = if method == Method::Zcsa { d0 } else { 0.0 };
            let mut schedule = zcsa_schedule(u, d0, ts)?;
            if centered {
                schedule = centered_reorder(&schedule, sector);
            }
            Ok(Modulated { schedule, sector, duty: csa_duty(u)? })
        }
    }
}
