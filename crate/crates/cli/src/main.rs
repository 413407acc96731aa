//! `bsq`: batch front end for semiclassical spectra, oracle comparisons,
//! star-product identity checks and normal-form reports.
//!
//! Exit codes: 0 success, 1 error or failed gate, 2 some levels skipped,
//! 3 oracle did not converge.

mod cmd;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use cmd::Status;
use config::{job_from_flags, load_config, parse_levels, Format, Job, NumberInput, Overrides, RawJob};

const DEFAULT_SEED: u64 = 20240601;
const DEFAULT_COUNT: usize = 100;

#[derive(Parser, Debug)]
#[command(name = "bsq", version, about = "Bohr-Sommerfeld spectra with O(hbar^2) corrections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Semiclassical levels for each job and hbar.
    Spectrum(JobArgs),
    /// Semiclassical levels against a matrix oracle, with residual slopes.
    Compare(JobArgs),
    /// Exact Moyal-bracket identity suite on seeded random symbols.
    Identities(IdentityArgs),
    /// Birkhoff normal-form coefficients and their numerical cross-check.
    Normalform(JobArgs),
}

#[derive(Args, Debug)]
struct JobArgs {
    /// TOML file with one table per job.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $BSQ_OUT_DIR, then the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated hbar values.
    #[arg(long, value_delimiter = ',')]
    hbar: Option<Vec<f64>>,
    /// Level range `a..b`, inclusive.
    #[arg(long)]
    levels: Option<String>,
    /// 0 for the leading-order rule, 2 for the corrected one; for
    /// `normalform`, the number of series coefficients.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Builtin Hamiltonian name (see `--list`).
    #[arg(long, conflicts_with_all = ["symbol", "potential"])]
    builtin: Option<String>,
    /// Builtin parameter `key=value`; repeatable.
    #[arg(long = "param", requires = "builtin")]
    params: Vec<String>,
    /// Polynomial symbol in x, p, h and I.
    #[arg(long, conflicts_with = "potential")]
    symbol: Option<String>,
    /// Polynomial potential V(x) for p^2/2m + V(x).
    #[arg(long)]
    potential: Option<String>,
    #[arg(long, requires = "potential")]
    mass: Option<String>,
    /// Energy ceiling of the semiclassical window.
    #[arg(long)]
    ceiling: Option<f64>,
    /// Oracle strategy (grid or fock); chosen from the Hamiltonian if absent.
    #[arg(long)]
    oracle: Option<String>,
    /// List the builtin Hamiltonians and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug)]
struct IdentityArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_COUNT)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Run with a deliberately broken bracket (harness check).
    #[arg(long, hide = true)]
    corrupt_bracket: bool,
}

impl JobArgs {
    fn has_hamiltonian(&self) -> bool {
        self.builtin.is_some() || self.symbol.is_some() || self.potential.is_some()
    }

    fn jobs(&self, nf: bool) -> Result<Vec<Job>> {
        let mut ov = Overrides {
            hbar: self.hbar.clone(),
            levels: self.levels.as_deref().map(parse_levels).transpose()?,
            format: self.format,
            oracle: self.oracle.clone(),
            ceiling: self.ceiling,
            ..Overrides::default()
        };
        if nf {
            ov.nf_order = self.order;
        } else {
            ov.order = self.order;
        }
        match (&self.config, self.has_hamiltonian()) {
            (Some(_), true) => bail!("--builtin, --symbol and --potential cannot be combined with --config"),
            (Some(path), false) => load_config(path, &ov),
            (None, false) => bail!("give a Hamiltonian (--builtin, --symbol or --potential) or --config"),
            (None, true) => {
                let mut params = std::collections::BTreeMap::new();
                for kv in &self.params {
                    let Some((k, v)) = kv.split_once('=') else { bail!("--param expects key=value, got '{kv}'") };
                    let v: f64 = v.trim().parse().map_err(|_| anyhow::anyhow!("--param {k}: bad number '{v}'"))?;
                    params.insert(k.trim().to_string(), v);
                }
                let raw = RawJob {
                    builtin: self.builtin.clone(),
                    params: (!params.is_empty()).then_some(params),
                    symbol: self.symbol.clone(),
                    potential: self.potential.clone(),
                    mass: self.mass.clone().map(NumberInput::Text),
                    ..RawJob::default()
                };
                Ok(vec![job_from_flags(raw, &ov)?])
            }
        }
    }
}

fn list_builtins() {
    for (name, summary) in bsq_core::catalog::Catalog::builtin().names() {
        println!("{name:18} {summary}");
    }
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Spectrum(a) | Command::Compare(a) | Command::Normalform(a) if a.list => {
            list_builtins();
            Ok(Status::Ok)
        }
        Command::Spectrum(a) => cmd::spectrum::run(&a.jobs(false)?, a.out.as_ref()),
        Command::Compare(a) => cmd::compare::run(&a.jobs(false)?, a.out.as_ref()),
        Command::Normalform(a) => cmd::normalform::run(&a.jobs(true)?, a.out.as_ref()),
        Command::Identities(a) => {
            let dir = output::resolve_out_dir(a.out.as_deref(), None);
            cmd::identities::run(a.seed, a.count, a.corrupt_bracket, a.format, &dir)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged =
        err.chain().any(|e| matches!(e.downcast_ref::<bsq_core::Error>(), Some(bsq_core::Error::OracleDiverged(_))));
    if diverged {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
