//! Semiclassical levels against a matrix oracle, with log-log slope fits of
//! the residuals at a fixed action when several hbar values are given.

use std::path::PathBuf;

use anyhow::Result;
use bsq_core::format_number;
use bsq_core::oracle::{OracleRegistry, OracleRequest, OracleSpectrum};
use bsq_core::spectrum::{model_spectrum, Level, SpectrumResult};
use serde::Serialize;

use super::{out_dir, Status};
use crate::config::{Format, Job};
use crate::output::{json, write_atomic};

/// Accepted slope windows for the order-0 and order-2 residuals.
const SLOPE_WINDOWS: [(u32, f64, f64); 2] = [(0, 1.5, 2.5), (2, 3.5, 4.5)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Pass,
    Fail,
    /// Residuals at the oracle's resolution; nothing to fit.
    BelowFloor,
    /// Fewer than two hbar values, or the fit action is out of reach.
    Unavailable,
}

impl Gate {
    fn passed(self) -> bool {
        self != Gate::Fail
    }

    fn label(self) -> &'static str {
        match self {
            Gate::Pass => "pass",
            Gate::Fail => "fail",
            Gate::BelowFloor => "below_floor",
            Gate::Unavailable => "unavailable",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub hbar: f64,
    pub n: u32,
    pub action: f64,
    pub e0: f64,
    pub e0_err: f64,
    pub e2: f64,
    pub e2_err: f64,
    pub oracle: f64,
    pub oracle_err: f64,
    pub res0: f64,
    pub res0_err: f64,
    pub res2: f64,
    pub res2_err: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub order: u32,
    pub action: f64,
    pub hbar: Vec<f64>,
    /// `|E - E_oracle|` interpolated to the fit action, per hbar.
    pub residuals: Vec<f64>,
    pub slope: Option<f64>,
    /// Standard error of the fitted slope.
    pub slope_err: Option<f64>,
    pub window: (f64, f64),
    pub gate: Gate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub job: String,
    pub hamiltonian: String,
    pub oracle: String,
    pub floor: f64,
    pub rows: Vec<Row>,
    pub slopes: Vec<SlopeFit>,
    pub improvement_gate: Gate,
    pub skipped: Vec<String>,
}

fn e0_err(l: &Level) -> f64 {
    l.diagnostics.quadrature_tol * l.e0.abs()
}

fn row(hbar: f64, l: &Level, oracle: &OracleSpectrum, floor: f64) -> Row {
    let k = l.n as usize;
    let (e, de) = (oracle.eigenvalues[k], oracle.estimates[k]);
    let e0e = e0_err(l);
    let e2e = e0e + l.err_est;
    let res0 = l.e0 - e;
    let res2 = l.e2 - e;
    Row {
        hbar,
        n: l.n,
        action: l.action,
        e0: l.e0,
        e0_err: e0e,
        e2: l.e2,
        e2_err: e2e,
        oracle: e,
        oracle_err: de,
        res0,
        res0_err: e0e + de,
        res2,
        res2_err: e2e + de,
        improved: res2.abs() < res0.abs() || res2.abs() <= floor,
    }
}

/// Least-squares slope of `ln y` against `ln x` and its standard error.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let err = if lx.len() > 2 {
        let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, err)
}

fn fit(order: u32, action: f64, hbar: &[f64], residuals: Option<Vec<f64>>, floor: f64, window: (f64, f64)) -> SlopeFit {
    let mut out = SlopeFit {
        order,
        action,
        hbar: hbar.to_vec(),
        residuals: Vec::new(),
        slope: None,
        slope_err: None,
        window,
        gate: Gate::Unavailable,
    };
    let Some(residuals) = residuals else { return out };
    out.residuals = residuals;
    if hbar.len() < 2 {
        return out;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        hbar.iter().zip(&out.residuals).filter(|(_, r)| **r > floor).map(|(h, r)| (*h, *r)).unzip();
    if xs.len() < 2 {
        out.gate = Gate::BelowFloor;
        return out;
    }
    let (s, e) = loglog_fit(&xs, &ys);
    out.slope = Some(s);
    out.slope_err = Some(e);
    out.gate = if (window.0..=window.1).contains(&s) { Gate::Pass } else { Gate::Fail };
    out
}

/// Signed residuals of the two levels bracketing `action`, interpolated.
fn at_action(hbar: f64, action: f64, bracket: &SpectrumResult, oracle: &OracleSpectrum) -> Option<(f64, f64)> {
    let lo = (action / hbar - 0.5).floor().max(0.0) as u32;
    let (a, b) = (bracket.level(lo)?, bracket.level(lo + 1)?);
    let w = (action - a.action) / (b.action - a.action);
    let r = |l: &Level, e2: bool| (if e2 { l.e2 } else { l.e0 }) - oracle.eigenvalues[l.n as usize];
    Some(((r(a, false) + w * (r(b, false) - r(a, false))).abs(), (r(a, true) + w * (r(b, true) - r(a, true))).abs()))
}

pub fn compare(job: &Job) -> Result<CompareReport> {
    let model = job.model()?;
    let registry = OracleRegistry::builtin();
    let floor = 10.0 * job.tolerance;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut fit_points: Vec<Option<(f64, f64)>> = Vec::new();
    let mut oracle_name = String::new();
    for &hbar in job.require_hbar()? {
        let levels = model_spectrum(model.as_ref(), hbar, job.levels.clone(), 2, job.ceiling)?;
        let lo = (job.fit_action / hbar - 0.5).floor().max(0.0) as u32;
        let bracket = model_spectrum(model.as_ref(), hbar, lo..=lo + 1, 2, job.ceiling)?;
        let top = levels.levels.iter().chain(&bracket.levels).map(|l| l.n).max().unwrap_or(0);
        let oracle = registry.select(job.oracle.as_deref(), &model, levels.negated)?;
        oracle_name = oracle.name().to_string();
        let req = OracleRequest { hbar, levels: top as usize + 1, tolerance: job.tolerance, negate: levels.negated };
        let reference = oracle.spectrum(model.clone(), &req)?;
        rows.extend(levels.levels.iter().map(|l| row(hbar, l, &reference, floor)));
        skipped.extend(levels.skipped.iter().map(|s| format!("hbar {hbar}, n {}: {}", s.n, s.reason)));
        fit_points.push(at_action(hbar, job.fit_action, &bracket, &reference));
    }
    let hbar = job.require_hbar()?;
    let column =
        |pick: fn(&(f64, f64)) -> f64| fit_points.iter().map(|p| p.as_ref().map(pick)).collect::<Option<Vec<f64>>>();
    let slopes = SLOPE_WINDOWS
        .iter()
        .map(|&(order, lo, hi)| {
            let residuals = if order == 0 { column(|p| p.0) } else { column(|p| p.1) };
            fit(order, job.fit_action, hbar, residuals, floor, (lo, hi))
        })
        .collect();
    let improvement_gate = if rows.iter().all(|r| r.improved) { Gate::Pass } else { Gate::Fail };
    Ok(CompareReport {
        job: job.name.clone(),
        hamiltonian: model.name(),
        oracle: oracle_name,
        floor,
        rows,
        slopes,
        improvement_gate,
        skipped,
    })
}

fn rows_csv(report: &CompareReport) -> Vec<u8> {
    let mut s = String::from("hbar,n,A,E0,E0_err,E2,E2_err,E_oracle,oracle_err,res0,res0_err,res2,res2_err\n");
    for r in &report.rows {
        let cols =
            [r.action, r.e0, r.e0_err, r.e2, r.e2_err, r.oracle, r.oracle_err, r.res0, r.res0_err, r.res2, r.res2_err];
        let cols: Vec<String> = cols.iter().map(|v| format_number(*v)).collect();
        s.push_str(&format!("{},{},{}\n", format_number(r.hbar), r.n, cols.join(",")));
    }
    s.into_bytes()
}

fn slopes_csv(report: &CompareReport) -> Vec<u8> {
    let opt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    let mut s = String::from("order,A,slope,slope_err,gate\n");
    for f in &report.slopes {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            f.order,
            format_number(f.action),
            opt(f.slope),
            opt(f.slope_err),
            f.gate.label()
        ));
    }
    s.into_bytes()
}

pub fn run(jobs: &[Job], out_flag: Option<&PathBuf>) -> Result<Status> {
    let mut status = Status::Ok;
    for job in jobs {
        let report = compare(job)?;
        let dir = out_dir(out_flag, job);
        match job.format {
            Format::Csv => {
                write_atomic(&dir.join(format!("{}.compare.csv", job.name)), &rows_csv(&report))?;
                write_atomic(&dir.join(format!("{}.slopes.csv", job.name)), &slopes_csv(&report))?;
            }
            Format::Json => write_atomic(&dir.join(format!("{}.compare.json", job.name)), &json(&report))?,
        }
        println!("{}: {} levels against the {} oracle", job.name, report.rows.len(), report.oracle);
        let worst = |f: fn(&Row) -> f64| report.rows.iter().map(f).fold(0.0, f64::max);
        println!(
            "  max |E0 - oracle| = {:.3e}, max |E2 - oracle| = {:.3e}",
            worst(|r| r.res0.abs()),
            worst(|r| r.res2.abs())
        );
        println!(
            "  E2 improves on E0 (or is below {:.0e}) at every level: {}",
            report.floor,
            report.improvement_gate.label()
        );
        for f in &report.slopes {
            match (f.slope, f.slope_err) {
                (Some(s), Some(e)) => println!(
                    "  order {} residual slope at A = {}: {s:.3} +/- {e:.3} (window {}..{}): {}",
                    f.order,
                    f.action,
                    f.window.0,
                    f.window.1,
                    f.gate.label()
                ),
                _ => println!("  order {} residual slope at A = {}: {}", f.order, f.action, f.gate.label()),
            }
        }
        for s in &report.skipped {
            eprintln!("{}: skipped {s}", job.name);
        }
        let passed = report.improvement_gate.passed() && report.slopes.iter().all(|f| f.gate.passed());
        if !passed {
            status = status.max(Status::Failed);
        } else if !report.skipped.is_empty() {
            status = status.max(Status::Partial);
        }
    }
    Ok(status)
}
