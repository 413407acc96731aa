use std::path::Path;

use anyhow::Result;
use bsq_core::moyal::identities::{corrupted_bracket, run_suite, run_suite_with, IdentityReport};

use super::Status;
use crate::config::Format;
use crate::output::{json, write_atomic};

fn csv(report: &IdentityReport) -> Vec<u8> {
    let mut s = String::from("identity,trials,failures,first_failure\n");
    for c in &report.checks {
        let first = c.first_failure.as_deref().unwrap_or("").replace('"', "\"\"");
        s.push_str(&format!("\"{}\",{},{},\"{}\"\n", c.name, c.trials, c.failures, first));
    }
    s.into_bytes()
}

pub fn run(seed: u64, count: usize, corrupt: bool, format: Format, dir: &Path) -> Result<Status> {
    let report = if corrupt { run_suite_with(&corrupted_bracket, seed, count) } else { run_suite(seed, count) };
    println!(
        "identity suite: seed {seed}, {count} random triples{}",
        if corrupt { " (corrupted bracket)" } else { "" }
    );
    for c in &report.checks {
        if c.passed() {
            println!("PASS {} ({} trials)", c.name, c.trials);
        } else {
            println!("FAIL {} ({} of {} trials)", c.name, c.failures, c.trials);
            if let Some(t) = &c.first_failure {
                println!("  first offending triple: {t}");
            }
        }
    }
    let bytes = match format {
        Format::Csv => csv(&report),
        Format::Json => json(&report),
    };
    write_atomic(&dir.join(format!("identities.{}", format.extension())), &bytes)?;
    Ok(if report.all_passed() { Status::Ok } else { Status::Failed })
}
