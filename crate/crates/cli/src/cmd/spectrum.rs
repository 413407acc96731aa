use std::path::PathBuf;

use anyhow::Result;
use bsq_core::spectrum::model_spectrum;

use super::{out_dir, Status};
use crate::config::{Format, Job};
use crate::output::{hbar_tag, write_atomic};

/// One file per job and hbar: `<job>.spectrum.h<hbar>.<ext>`.
pub fn run(jobs: &[Job], out_flag: Option<&PathBuf>) -> Result<Status> {
    let mut status = Status::Ok;
    for job in jobs {
        let model = job.model()?;
        let dir = out_dir(out_flag, job);
        for &hbar in job.require_hbar()? {
            let result = model_spectrum(model.as_ref(), hbar, job.levels.clone(), job.order, job.ceiling)?;
            let bytes = match job.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    result.write_csv(&mut buf)?;
                    buf
                }
                Format::Json => {
                    let mut s = result.to_json();
                    s.push('\n');
                    s.into_bytes()
                }
            };
            let path = dir.join(format!("{}.spectrum.h{}.{}", job.name, hbar_tag(hbar), job.format.extension()));
            write_atomic(&path, &bytes)?;
            println!(
                "{}: hbar = {hbar}, {} levels{} -> {}",
                job.name,
                result.levels.len(),
                if result.negated { " (from -H)" } else { "" },
                path.display()
            );
            for s in &result.skipped {
                eprintln!("{}: skipped n = {} (A = {}): {}", job.name, s.n, s.action, s.reason);
                status = status.max(Status::Partial);
            }
        }
    }
    Ok(status)
}
