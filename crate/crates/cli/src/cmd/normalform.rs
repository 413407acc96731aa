//! Birkhoff series of a job's Hamiltonian, checked against the numerical
//! action-energy relation near the fixed point.

use std::path::PathBuf;

use anyhow::Result;
use bsq_core::dynamics::{apply_linear_symplectic_symbol, OrbitEngine};
use bsq_core::format_number;
use bsq_core::normalform::{birkhoff_series, model_birkhoff, LinearSymplectic, ModelNormalForm};
use serde::Serialize;

use super::compare::loglog_fit;
use super::{out_dir, Status};
use crate::config::{Format, Job};
use crate::output::{json, write_atomic};

const CHECK_ACTIONS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Clone, Debug, Serialize)]
pub struct Coefficient {
    pub k: usize,
    pub value: f64,
    pub err: f64,
    /// `n/d` when the rational pipeline was used.
    pub exact: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub action: f64,
    pub f0: f64,
    pub f0_err: f64,
    pub energy: f64,
    pub energy_err: f64,
    pub diff: f64,
    pub diff_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormReport {
    pub job: String,
    pub hamiltonian: String,
    pub order: u32,
    pub normal_form: ModelNormalForm,
    pub coefficients: Vec<Coefficient>,
    pub check: Vec<CheckRow>,
    /// Log-log slope of `|f0 - E|` over the three smallest actions.
    pub check_slope: Option<f64>,
}

/// Rounding error of the floating-point pipeline, estimated from the spread
/// under a canonical rotation, which leaves the series invariant.
fn coefficient_errors(nf: &ModelNormalForm, order: u32) -> Vec<f64> {
    let a = &nf.series.coefficients;
    if nf.series.exact.is_some() {
        return vec![0.0; a.len()];
    }
    let rotated = LinearSymplectic::from_rotation_squeeze(0.7, 1.0, 0.0)
        .and_then(|s| apply_linear_symplectic_symbol(&nf.expanded, &s))
        .and_then(|p| birkhoff_series(&p, order));
    match rotated {
        Ok(r) => a.iter().zip(&r.coefficients).map(|(x, y)| (x - y).abs().max(f64::EPSILON * x.abs())).collect(),
        Err(_) => a.iter().map(|x| f64::EPSILON * x.abs()).collect(),
    }
}

pub fn normal_form(job: &Job) -> Result<NormalFormReport> {
    let model = job.model()?;
    let nf = model_birkhoff(model.as_ref(), job.nf_order)?;
    let errs = coefficient_errors(&nf, job.nf_order);
    let coefficients = nf
        .series
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, v)| Coefficient {
            k: i + 1,
            value: *v,
            err: errs[i],
            exact: nf.series.exact.as_ref().map(|e| e[i].to_string()),
        })
        .collect();

    let h = model.hamiltonian(0.0)?;
    let engine = OrbitEngine::new(&h, &nf.fixed_point)?.with_ceiling(model.energy_ceiling());
    let quad = engine.options.quadrature_tol;
    let mut check = Vec::new();
    for a in CHECK_ACTIONS {
        let Ok(e) = engine.energy_of_action(a) else { continue };
        let energy = e - nf.fixed_point.energy;
        let f0 = nf.series.eval(a);
        let f0_err: f64 = errs.iter().enumerate().map(|(i, d)| d * a.powi(i as i32 + 1)).sum();
        let energy_err = quad * e.abs().max(energy.abs());
        check.push(CheckRow {
            action: a,
            f0,
            f0_err,
            energy,
            energy_err,
            diff: f0 - energy,
            diff_err: f0_err + energy_err,
        });
    }
    let tail: Vec<&CheckRow> = check.iter().filter(|r| r.action <= 1e-2).collect();
    // a fit through rounding noise means nothing
    let check_slope = (tail.len() >= 2 && tail.iter().all(|r| r.diff.abs() > 10.0 * r.diff_err)).then(|| {
        let xs: Vec<f64> = tail.iter().map(|r| r.action).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.diff.abs()).collect();
        loglog_fit(&xs, &ys).0
    });
    Ok(NormalFormReport {
        job: job.name.clone(),
        hamiltonian: model.name(),
        order: job.nf_order,
        normal_form: nf,
        coefficients,
        check,
        check_slope,
    })
}

pub fn run(jobs: &[Job], out_flag: Option<&PathBuf>) -> Result<Status> {
    for job in jobs {
        let report = normal_form(job)?;
        let dir = out_dir(out_flag, job);
        match job.format {
            Format::Csv => {
                let mut s = String::from("k,a_k,a_k_err,exact\n");
                for c in &report.coefficients {
                    s.push_str(&format!(
                        "{},{},{},{}\n",
                        c.k,
                        format_number(c.value),
                        format_number(c.err),
                        c.exact.as_deref().unwrap_or("")
                    ));
                }
                write_atomic(&dir.join(format!("{}.normalform.csv", job.name)), s.as_bytes())?;
                let mut s = String::from("A,f0,f0_err,E,E_err,diff,diff_err\n");
                for r in &report.check {
                    let cols = [r.action, r.f0, r.f0_err, r.energy, r.energy_err, r.diff, r.diff_err];
                    let cols: Vec<String> = cols.iter().map(|v| format_number(*v)).collect();
                    s.push_str(&cols.join(","));
                    s.push('\n');
                }
                write_atomic(&dir.join(format!("{}.normalform_check.csv", job.name)), s.as_bytes())?;
            }
            Format::Json => write_atomic(&dir.join(format!("{}.normalform.json", job.name)), &json(&report))?,
        }
        let shown: Vec<String> = report
            .coefficients
            .iter()
            .map(|c| match &c.exact {
                Some(e) => format!("a{} = {e}", c.k),
                None => format!("a{} = {:.12e} +/- {:.1e}", c.k, c.value, c.err),
            })
            .collect();
        println!("{}: {}", job.name, shown.join(", "));
        match report.check_slope {
            Some(s) => println!(
                "  |f0(A) - E(A)| log-log slope over A = 1e-2..1e-4: {s:.3} (expected about {})",
                job.nf_order + 1
            ),
            None => println!("  |f0(A) - E(A)| is at the rounding level for A <= 1e-2"),
        }
    }
    Ok(Status::Ok)
}
