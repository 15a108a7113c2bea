//! The three subcommands. Every output is a pure function of the inputs:
//! no clocks, no randomness, floats printed in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csmc_core::analysis::{
    adjacent_transition_fraction, dominant_peaks, kpi, sector_trace, sliding_plane, switching_spectrum, KpiReport,
};
use csmc_core::modulation::{deviation_modulus, deviation_phase, locate_deviation_extrema, DeviationExtrema, Method};
use csmc_core::sim::{calibrated_sliding_band, run, Scenario, Trace};
use csmc_core::Error;
use serde_json::json;

use crate::scenario::{self, ScenarioFile};

pub const TRACE_HEADER: &str = "# csmc trace v1";
pub const WAVEFORM_HEADER: &str = "# csmc waveform v1; legs in units of V_dc";
pub const SPECTRUM_HEADER: &str =
    "# csmc spectrum v1; single-sided amplitude of the leg signal, a unit square wave at f shows 4/pi at f";
pub const KPI_TABLE_HEADER: &str = "# csmc kpi_table v1";
pub const DEVIATION_HEADER: &str = "# csmc deviation v1; e_ph in degrees";
pub const PLANE_HEADER: &str = "# csmc sliding_plane v1";
pub const SECTORS_HEADER: &str = "# csmc sectors v1";
pub const KPI_FORMAT: &str = "csmc-kpi/1";

/// Number of spectral peaks reported in kpi.json.
const REPORTED_PEAKS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// `2` for configuration problems, `1` for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Config { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Analysis {
    Kpi,
    Fft,
    Plane,
    Sectors,
}

pub const DEFAULT_ANALYSES: &[Analysis] = &[Analysis::Kpi, Analysis::Fft];

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, comment: &str, columns: &str) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let mut csv = Self { path, out: BufWriter::new(file) };
        csv.line(comment)?;
        csv.line(columns)?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(|source| CliError::Io { path: self.path.clone(), source })
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|source| CliError::Io { path: self.path, source })
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn write_file(path: PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

/// Sliding band used for the loss flag: the scenario's own value when it
/// sets one, otherwise the calibrated companion band.
fn resolved_band(sc: &Scenario) -> Result<f64, Error> {
    match sc.sliding_band {
        Some(b) => Ok(b),
        None => calibrated_sliding_band(sc),
    }
}

pub fn write_trace(dir: &Path, trace: &Trace) -> Result<(), CliError> {
    let mut csv = Csv::create(
        dir,
        "trace.csv",
        TRACE_HEADER,
        "t,i_re,i_im,v_re,v_im,sigma_re,sigma_im,sector,duty,existence_margin",
    )?;
    for r in &trace.records {
        let sector = r.sector.map_or(0, |s| s.index());
        csv.line(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.t, r.i.re, r.i.im, r.v.re, r.v.im, r.sigma.re, r.sigma.im, sector, r.duty, r.margin
        ))?;
    }
    csv.finish()?;

    let mut csv = Csv::create(dir, "waveform.csv", WAVEFORM_HEADER, "t_start,dur,ua,ub,uc")?;
    for w in &trace.waveform {
        let [a, b, c] = w.vector.legs();
        csv.line(&format!("{},{},{a},{b},{c}", w.start, w.duration))?;
    }
    csv.finish()
}

/// Result of `run`, also printed as a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kpi: KpiReport,
    pub sliding_lost: bool,
    pub max_sigma: f64,
}

impl RunReport {
    pub fn line(&self) -> String {
        let d0 = self.kpi.d0.map(|d| format!(" d0={d}")).unwrap_or_default();
        format!(
            "{}{d0}: RMSE {:.4} A, MAE {:.4} A over [{}, {}) s, max|sigma| {:.4} A{}",
            self.kpi.method,
            self.kpi.rmse,
            self.kpi.mae,
            self.kpi.window.start,
            self.kpi.window.end,
            self.max_sigma,
            if self.sliding_lost { ", SLIDING_LOST" } else { "" }
        )
    }
}

pub fn cmd_run(scenario_path: &Path, out_dir: &Path, analyses: &[Analysis]) -> Result<RunReport, CliError> {
    let file = scenario::load(scenario_path)?;
    prepare_dir(out_dir)?;
    run_file(&file, out_dir, analyses)
}

pub fn run_file(file: &ScenarioFile, out_dir: &Path, analyses: &[Analysis]) -> Result<RunReport, CliError> {
    let mut sc = file.scenario.clone();
    sc.sliding_band = Some(resolved_band(&sc)?);
    let trace = run(&sc)?;
    write_trace(out_dir, &trace)?;

    let a = &file.analysis;
    let report = kpi(&trace, a.window)?;
    let mut doc = json!({
        "format": KPI_FORMAT,
        "scenario_hash": file.hash(),
        "method": sc.method.tag(),
        "d0": report.d0,
        "window": { "start": a.window.start, "end": a.window.end },
        "summary": trace.summary,
    });
    if analyses.contains(&Analysis::Kpi) {
        doc["kpi"] = json!({
            "rmse": report.rmse,
            "mae": report.mae,
            "rmse_per_phase": report.rmse_per_phase,
            "mae_per_phase": report.mae_per_phase,
            "samples": report.samples,
        });
    }
    if analyses.contains(&Analysis::Fft) {
        let s = switching_spectrum(&trace, a.phase, a.window, a.oversampling)?;
        let mut csv = Csv::create(out_dir, "spectrum.csv", SPECTRUM_HEADER, "frequency_hz,amplitude")?;
        for (f, m) in s.frequencies.iter().zip(&s.magnitudes) {
            csv.line(&format!("{f},{m}"))?;
        }
        csv.finish()?;
        doc["peaks"] = json!(dominant_peaks(&s, REPORTED_PEAKS, a.peak_floor)
            .into_iter()
            .map(|(f, m)| json!({ "frequency_hz": f, "amplitude": m }))
            .collect::<Vec<_>>());
    }
    if analyses.contains(&Analysis::Plane) {
        let plane = sliding_plane(&trace, a.window)?;
        let mut csv = Csv::create(out_dir, "sliding_plane.csv", PLANE_HEADER, "sigma_re,sigma_im")?;
        for (x, y) in &plane.points {
            csv.line(&format!("{x},{y}"))?;
        }
        csv.finish()?;
        doc["plane"] = json!({ "max_abs": plane.max_abs, "hexagon": plane.hexagon });
    }
    if analyses.contains(&Analysis::Sectors) {
        let sectors = sector_trace(&trace, a.window)?;
        let mut csv = Csv::create(out_dir, "sectors.csv", SECTORS_HEADER, "t,sector")?;
        for (t, k) in &sectors {
            csv.line(&format!("{t},{k}"))?;
        }
        csv.finish()?;
        doc["sectors"] = json!({ "adjacent_fraction": adjacent_transition_fraction(&sectors) });
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("json value serializes");
    text.push('\n');
    write_file(out_dir.join("kpi.json"), &text)?;

    Ok(RunReport { kpi: report, sliding_lost: trace.summary.sliding_lost, max_sigma: trace.summary.max_sigma })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub d0: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub max_sigma: f64,
    pub sliding_lost: bool,
}

/// Rows in table order: non-zCSA methods as listed, then one zCSA row per
/// zero duty. Listing `zcsa` without a `d0` list uses the scenario's `d0`;
/// a `d0` list adds zCSA rows even when `zcsa` is not listed.
pub fn variants(methods: &[Method], d0: &[f64], scenario_d0: f64) -> Vec<(Method, f64)> {
    let mut out: Vec<(Method, f64)> = Vec::new();
    for &m in methods {
        if m != Method::Zcsa && !out.iter().any(|v| v.0 == m) {
            out.push((m, 0.0));
        }
    }
    if !d0.is_empty() {
        out.extend(d0.iter().map(|&d| (Method::Zcsa, d)));
    } else if methods.contains(&Method::Zcsa) {
        out.push((Method::Zcsa, scenario_d0));
    }
    out
}

pub fn cmd_compare(
    scenario_path: &Path,
    methods: &[Method],
    d0: &[f64],
    out_dir: &Path,
) -> Result<Vec<CompareRow>, CliError> {
    let file = scenario::load(scenario_path)?;
    let list = variants(methods, d0, file.scenario.d0);
    if list.is_empty() {
        return Err(Error::config("methods", "nothing to compare").into());
    }
    let scenarios: Vec<Scenario> = list
        .iter()
        .map(|&(method, d0)| Scenario { method, d0, ..file.scenario.clone() })
        .collect();
    for sc in &scenarios {
        sc.validate()?;
    }
    prepare_dir(out_dir)?;
    let band = resolved_band(&file.scenario)?;
    let window = file.analysis.window;

    // variants are independent; each thread owns its run
    let results: Vec<Result<CompareRow, Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| {
                s.spawn(move || {
                    let sc = Scenario { sliding_band: Some(band), ..sc.clone() };
                    let trace = run(&sc)?;
                    let k = kpi(&trace, window)?;
                    Ok(CompareRow {
                        method: sc.method,
                        d0: k.d0,
                        rmse: k.rmse,
                        mae: k.mae,
                        max_sigma: trace.summary.max_sigma,
                        sliding_lost: trace.summary.sliding_lost,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut csv = Csv::create(out_dir, "kpi_table.csv", KPI_TABLE_HEADER, "method,d0,rmse,mae,max_sigma,sliding_lost")?;
    for r in &rows {
        let d0 = r.d0.map(|d| d.to_string()).unwrap_or_default();
        csv.line(&format!("{},{d0},{},{},{},{}", r.method.tag(), r.rmse, r.mae, r.max_sigma, r.sliding_lost))?;
    }
    csv.finish()?;
    Ok(rows)
}

/// Grid step of deviation.csv.
pub const DEVIATION_STEP: f64 = 1e-3;

pub fn cmd_deviation(out_dir: &Path) -> Result<DeviationExtrema, CliError> {
    prepare_dir(out_dir)?;
    let steps = (1.0 / DEVIATION_STEP).round() as usize;
    let mut csv = Csv::create(out_dir, "deviation.csv", DEVIATION_HEADER, "d,e_mod,e_ph")?;
    for k in 0..=steps {
        let d = k as f64 / steps as f64;
        csv.line(&format!("{d},{},{}", deviation_modulus(d), deviation_phase(d)))?;
    }
    csv.finish()?;
    Ok(locate_deviation_extrema(steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_variants() {
        let grid = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];
        let v = variants(&[Method::Sbi, Method::Csa], &grid, 0.0);
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], (Method::Sbi, 0.0));
        assert_eq!(v[7], (Method::Zcsa, 0.30));
        assert_eq!(variants(&[Method::Csa], &[], 0.2), vec![(Method::Csa, 0.0)]);
        assert_eq!(variants(&[Method::Zcsa], &[], 0.2), vec![(Method::Zcsa, 0.2)]);
        assert_eq!(variants(&[Method::Sbi, Method::Sbi], &[], 0.0).len(), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::config("Ts", "missing")).exit_code(), 2);
        assert_eq!(CliError::from(Error::Range("x".into())).exit_code(), 1);
    }
}
