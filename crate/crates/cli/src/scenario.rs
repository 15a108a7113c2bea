//! Scenario files. TOML by default, JSON when the file name ends in `.json`;
//! both encode the same schema. All quantities are SI base units.
//!
//! ```toml
//! method = "zcsa"
//! d0 = 0.25
//! fs = 50000.0          # or Ts = 2e-5
//! duration = 0.075
//! delay_periods = 1
//!
//! [plant]
//! L = 2e-3
//! C = 20e-6
//! r = 2e-3
//! R_L = 5.0
//! V_dc = 300.0
//!
//! [reference]
//! I_ref = 25.0
//! f = 50.0              # or omega in rad/s
//!
//! [[events]]
//! time = 0.025
//! R_L = 10.0
//!
//! [analysis]
//! window = [0.03, 0.05]
//! ```

use std::path::Path;

use csmc_core::analysis::{Phase, Window, DEFAULT_OVERSAMPLING, DEFAULT_PEAK_FLOOR};
use csmc_core::modulation::Method;
use csmc_core::sim::{Change, Event, Scenario};
use csmc_core::smc::{ReferenceSpec, VsiParams};
use csmc_core::{Error, TransformScale};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    #[serde(rename = "L")]
    inductance: Option<f64>,
    #[serde(rename = "C")]
    capacitance: Option<f64>,
    r: Option<f64>,
    #[serde(rename = "R_L")]
    load_resistance: Option<f64>,
    #[serde(rename = "V_dc")]
    dc_voltage: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    #[serde(rename = "I_ref")]
    amplitude: Option<f64>,
    /// Hz.
    f: Option<f64>,
    /// rad/s.
    omega: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    time: Option<f64>,
    #[serde(rename = "R_L")]
    load_resistance: Option<f64>,
    #[serde(rename = "I_ref")]
    amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    window: Option<[f64; 2]>,
    phase: Option<Phase>,
    oversampling: Option<usize>,
    peak_floor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    method: Option<String>,
    d0: Option<f64>,
    #[serde(rename = "Ts")]
    ts: Option<f64>,
    fs: Option<f64>,
    duration: Option<f64>,
    scale: Option<f64>,
    delay_periods: Option<usize>,
    centered: Option<bool>,
    ticks_per_period: Option<u32>,
    sliding_band: Option<f64>,
    #[serde(default)]
    plant: RawPlant,
    #[serde(default)]
    reference: RawReference,
    #[serde(default)]
    events: Vec<RawEvent>,
    #[serde(default)]
    analysis: RawAnalysis,
}

/// Post-run analysis settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    pub window: Window,
    pub phase: Phase,
    pub oversampling: usize,
    pub peak_floor: f64,
}

/// A parsed and validated scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub analysis: AnalysisSettings,
}

impl ScenarioFile {
    /// Hex SHA-256 of the resolved scenario, identical for the TOML and
    /// JSON encodings of the same content.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.scenario).expect("scenario serializes");
        Sha256::digest(canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load(path: &Path) -> Result<ScenarioFile, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("scenario", format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("json"));
    if json {
        parse_json(&text)
    } else {
        parse_toml(&text)
    }
}

pub fn parse_toml(text: &str) -> Result<ScenarioFile, Error> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::config(field_of(&e.to_string()), e.message()))?;
    resolve(raw)
}

pub fn parse_json(text: &str) -> Result<ScenarioFile, Error> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| Error::config(field_of(&e.to_string()), e.to_string()))?;
    resolve(raw)
}

/// Best effort at naming the offending key in a serde message.
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "scenario".to_string())
}

fn required(name: &str, x: Option<f64>) -> Result<f64, Error> {
    x.ok_or_else(|| Error::config(name, "missing"))
}

fn resolve(raw: RawScenario) -> Result<ScenarioFile, Error> {
    let method: Method = raw.method.as_deref().ok_or_else(|| Error::config("method", "missing"))?.parse()?;
    let ts = match (raw.ts, raw.fs) {
        (Some(ts), None) => ts,
        (None, Some(fs)) => {
            if !(fs.is_finite() && fs > 0.0) {
                return Err(Error::config("fs", format!("must be finite and > 0, got {fs}")));
            }
            1.0 / fs
        }
        (Some(_), Some(_)) => return Err(Error::config("Ts", "give either Ts or fs, not both")),
        (None, None) => return Err(Error::config("Ts", "missing (give Ts in s or fs in Hz)")),
    };
    let d0 = match (method, raw.d0) {
        (Method::Zcsa, None) => return Err(Error::config("d0", "missing (required for zcsa)")),
        (_, d0) => d0.unwrap_or(0.0),
    };
    let params = VsiParams {
        inductance: required("L", raw.plant.inductance)?,
        capacitance: required("C", raw.plant.capacitance)?,
        resistance: required("r", raw.plant.r)?,
        load_resistance: required("R_L", raw.plant.load_resistance)?,
        dc_voltage: required("V_dc", raw.plant.dc_voltage)?,
    };
    let omega = match (raw.reference.f, raw.reference.omega) {
        (Some(f), None) => 2.0 * std::f64::consts::PI * f,
        (None, Some(w)) => w,
        (Some(_), Some(_)) => return Err(Error::config("f", "give either f or omega, not both")),
        (None, None) => return Err(Error::config("f", "missing (give f in Hz or omega in rad/s)")),
    };
    let reference = ReferenceSpec { amplitude: required("I_ref", raw.reference.amplitude)?, omega };
    let scale = match raw.scale {
        Some(c) => TransformScale::new(c).map_err(|e| Error::config("scale", e.to_string()))?,
        None => TransformScale::default(),
    };
    let mut events = Vec::with_capacity(raw.events.len());
    for (n, e) in raw.events.into_iter().enumerate() {
        let field = format!("events[{n}]");
        let time = e.time.ok_or_else(|| Error::config(&field, "missing time"))?;
        let change = match (e.load_resistance, e.amplitude) {
            (Some(r), None) => Change::Load(r),
            (None, Some(a)) => Change::Reference(a),
            _ => return Err(Error::config(&field, "needs exactly one of R_L or I_ref")),
        };
        events.push(Event { time, change });
    }
    let scenario = Scenario {
        params,
        reference,
        method,
        d0,
        ts,
        duration: required("duration", raw.duration)?,
        events,
        scale,
        delay_periods: raw.delay_periods.unwrap_or(1),
        centered: raw.centered.unwrap_or(false),
        ticks_per_period: raw.ticks_per_period,
        sliding_band: raw.sliding_band,
    };
    scenario.validate()?;

    let period = 2.0 * std::f64::consts::PI / omega;
    let window = match raw.analysis.window {
        Some([a, b]) => {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= scenario.duration) {
                return Err(Error::config(
                    "analysis.window",
                    format!("[{a}, {b}] must satisfy 0 <= start <= end <= duration"),
                ));
            }
            Window::new(a, b)
        }
        // last full reference period
        None => Window::new((scenario.duration - period).max(0.0), scenario.duration),
    };
    let oversampling = raw.analysis.oversampling.unwrap_or(DEFAULT_OVERSAMPLING);
    if oversampling == 0 {
        return Err(Error::config("analysis.oversampling", "must be >= 1"));
    }
    let peak_floor = raw.analysis.peak_floor.unwrap_or(DEFAULT_PEAK_FLOOR);
    if !(peak_floor.is_finite() && peak_floor >= 0.0) {
        return Err(Error::config("analysis.peak_floor", "must be finite and >= 0"));
    }
    Ok(ScenarioFile {
        scenario,
        analysis: AnalysisSettings { window, phase: raw.analysis.phase.unwrap_or(Phase::A), oversampling, peak_floor },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
method = "sbi"
fs = 50000.0
duration = 0.01

[plant]
L = 2e-3
C = 20e-6
r = 2e-3
R_L = 5.0
V_dc = 300.0

[reference]
I_ref = 25.0
f = 50.0
"#;

    fn field(text: &str) -> String {
        match parse_toml(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn base_resolves() {
        let s = parse_toml(BASE).unwrap();
        assert_eq!(s.scenario.ts, 2e-5);
        assert_eq!(s.scenario.delay_periods, 1);
        assert_eq!(s.analysis.window, Window::new(0.0, 0.01));
        assert_eq!(s.analysis.oversampling, 16);
    }

    #[test]
    fn missing_sampling_period_names_ts() {
        assert_eq!(field(&BASE.replace("fs = 50000.0", "")), "Ts");
        assert_eq!(field(&BASE.replace("fs = 50000.0", "fs = 50000.0\nTs = 2e-5")), "Ts");
    }

    #[test]
    fn errors_name_their_field() {
        assert_eq!(field(&BASE.replace("V_dc = 300.0", "")), "V_dc");
        assert_eq!(field(&BASE.replace("R_L = 5.0", "R_L = -5.0")), "R_L");
        assert_eq!(field(&BASE.replace("\"sbi\"", "\"svm\"")), "method");
        assert_eq!(field(&BASE.replace("\"sbi\"", "\"zcsa\"")), "d0");
        assert_eq!(field(&format!("{BASE}\n[[events]]\ntime = 0.5\nR_L = 10.0\n")), "events[0]");
        assert_eq!(field(&format!("{BASE}\n[[events]]\ntime = 0.005\n")), "events[0]");
        assert_eq!(field(&format!("{BASE}\n[analysis]\nwindow = [0.0, 0.02]\n")), "analysis.window");
    }

    #[test]
    fn degree_and_unknown_keys_are_rejected() {
        assert_eq!(field(&BASE.replace("f = 50.0", "f = 50.0\nphase_deg = 30.0")), "phase_deg");
        assert_eq!(field(&format!("{BASE}\nangle_deg = 10.0\n")), "angle_deg");
    }

    #[test]
    fn json_encoding_matches_toml() {
        let json = r#"{
            "method": "sbi", "fs": 50000.0, "duration": 0.01,
            "plant": {"L": 2e-3, "C": 20e-6, "r": 2e-3, "R_L": 5.0, "V_dc": 300.0},
            "reference": {"I_ref": 25.0, "f": 50.0}
        }"#;
        let a = parse_json(json).unwrap();
        let b = parse_toml(BASE).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
