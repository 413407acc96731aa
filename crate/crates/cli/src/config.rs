//! Job configuration: TOML files with one table per job, plus command-line
//! overrides.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use bsq_core::catalog::{Catalog, Params, SharedModel, SymbolModel};
use bsq_core::polysym::{parse_rational, rational_from_decimal};
use bsq_core::Rational;
use serde::Deserialize;

pub const DEFAULT_LEVELS: RangeInclusive<u32> = 0..=9;
pub const DEFAULT_ORACLE_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_FIT_ACTION: f64 = 1.0;
pub const DEFAULT_NF_ORDER: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A number written either as a TOML number or as a string such as `"1/3"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum NumberInput {
    Int(i64),
    Float(f64),
    Text(String),
}

impl NumberInput {
    fn rational(&self) -> Result<Rational> {
        Ok(match self {
            NumberInput::Int(i) => Rational::from_integer((*i).into()),
            NumberInput::Float(f) => rational_from_decimal(*f)?,
            NumberInput::Text(s) => parse_rational(s)?,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum HbarInput {
    One(f64),
    Many(Vec<f64>),
}

/// One job table as written in the file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawJob {
    pub builtin: Option<String>,
    pub params: Option<BTreeMap<String, f64>>,
    pub symbol: Option<String>,
    pub potential: Option<String>,
    pub mass: Option<NumberInput>,
    pub hbar: Option<HbarInput>,
    pub levels: Option<String>,
    pub ceiling: Option<f64>,
    pub order: Option<u32>,
    pub nf_order: Option<u32>,
    pub oracle: Option<String>,
    pub tolerance: Option<f64>,
    pub fit_action: Option<f64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HamiltonianSpec {
    Builtin { name: String, params: Params },
    Symbol(String),
    Potential { expr: String, mass: Rational },
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<SharedModel> {
        Ok(match self {
            HamiltonianSpec::Builtin { name, params } => Catalog::builtin().build(name, params)?,
            HamiltonianSpec::Symbol(text) => Arc::new(SymbolModel::parse(text.clone(), text)?),
            HamiltonianSpec::Potential { expr, mass } => {
                Arc::new(SymbolModel::from_potential(format!("p^2/(2m) + {expr}"), expr, mass)?)
            }
        })
    }
}

/// A validated job.
#[derive(Clone, Debug)]
pub struct Job {
    pub name: String,
    pub hamiltonian: HamiltonianSpec,
    pub hbar: Vec<f64>,
    pub levels: RangeInclusive<u32>,
    pub ceiling: Option<f64>,
    pub order: u32,
    pub nf_order: u32,
    pub oracle: Option<String>,
    pub tolerance: f64,
    pub fit_action: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Job {
    pub fn model(&self) -> Result<SharedModel> {
        self.hamiltonian.build().with_context(|| format!("job '{}'", self.name))
    }

    pub fn require_hbar(&self) -> Result<&[f64]> {
        if self.hbar.is_empty() {
            bail!("job '{}': field 'hbar': no value given (use --hbar or set hbar in the config)", self.name);
        }
        Ok(&self.hbar)
    }
}

/// Parses `a..b` (inclusive) or a single level `n`.
pub fn parse_levels(s: &str) -> Result<RangeInclusive<u32>> {
    let s = s.trim();
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim_start_matches('=').trim()),
        None => (s, s),
    };
    let a: u32 = a.parse().map_err(|_| anyhow!("bad level range '{s}' (expected a..b)"))?;
    let b: u32 = b.parse().map_err(|_| anyhow!("bad level range '{s}' (expected a..b)"))?;
    if a > b {
        bail!("empty level range '{s}'");
    }
    Ok(a..=b)
}

/// Command-line values that override every job.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub hbar: Option<Vec<f64>>,
    pub levels: Option<RangeInclusive<u32>>,
    pub order: Option<u32>,
    pub nf_order: Option<u32>,
    pub format: Option<Format>,
    pub oracle: Option<String>,
    pub ceiling: Option<f64>,
}

fn line_of_table(source: &str, name: &str) -> Option<usize> {
    let plain = format!("[{name}]");
    let quoted = format!("[\"{name}\"]");
    source
        .lines()
        .position(|l| {
            let l = l.trim();
            l == plain || l == quoted
        })
        .map(|i| i + 1)
}

fn validate(name: &str, raw: RawJob, ov: &Overrides) -> Result<Job> {
    let field = |f: &str, msg: String| anyhow!("field '{f}': {msg}");
    let forms = [raw.builtin.is_some(), raw.symbol.is_some(), raw.potential.is_some()];
    let hamiltonian = match forms.iter().filter(|f| **f).count() {
        0 => bail!("no hamiltonian given: set exactly one of 'builtin', 'symbol' or 'potential'"),
        1 => {
            if raw.params.is_some() && raw.builtin.is_none() {
                return Err(field("params", "only allowed together with 'builtin'".into()));
            }
            if raw.mass.is_some() && raw.potential.is_none() {
                return Err(field("mass", "only allowed together with 'potential'".into()));
            }
            if let Some(b) = raw.builtin {
                HamiltonianSpec::Builtin { name: b, params: raw.params.unwrap_or_default() }
            } else if let Some(s) = raw.symbol {
                HamiltonianSpec::Symbol(s)
            } else {
                let mass = match &raw.mass {
                    Some(m) => m.rational().map_err(|e| field("mass", e.to_string()))?,
                    None => Rational::from_integer(1.into()),
                };
                if mass <= Rational::from_integer(0.into()) {
                    return Err(field("mass", "must be positive".into()));
                }
                HamiltonianSpec::Potential { expr: raw.potential.unwrap(), mass }
            }
        }
        _ => bail!("'builtin', 'symbol' and 'potential' are mutually exclusive"),
    };
    let hbar = match (&ov.hbar, raw.hbar) {
        (Some(h), _) => h.clone(),
        (None, Some(HbarInput::One(h))) => vec![h],
        (None, Some(HbarInput::Many(h))) => {
            if h.is_empty() {
                return Err(field("hbar", "list is empty".into()));
            }
            h
        }
        (None, None) => Vec::new(),
    };
    if let Some(bad) = hbar.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(field("hbar", format!("values must be positive, got {bad}")));
    }
    let levels = match (&ov.levels, &raw.levels) {
        (Some(l), _) => l.clone(),
        (None, Some(s)) => parse_levels(s).map_err(|e| field("levels", e.to_string()))?,
        (None, None) => DEFAULT_LEVELS,
    };
    let order = ov.order.or(raw.order).unwrap_or(2);
    if order != 0 && order != 2 {
        return Err(field("order", format!("must be 0 or 2, got {order}")));
    }
    let nf_order = ov.nf_order.or(raw.nf_order).unwrap_or(DEFAULT_NF_ORDER);
    if nf_order == 0 {
        return Err(field("nf_order", "must be at least 1".into()));
    }
    let tolerance = raw.tolerance.unwrap_or(DEFAULT_ORACLE_TOLERANCE);
    if !(tolerance > 0.0) {
        return Err(field("tolerance", "must be positive".into()));
    }
    let fit_action = raw.fit_action.unwrap_or(DEFAULT_FIT_ACTION);
    if !(fit_action > 0.0) {
        return Err(field("fit_action", "must be positive".into()));
    }
    Ok(Job {
        name: name.to_string(),
        hamiltonian,
        hbar,
        levels,
        ceiling: ov.ceiling.or(raw.ceiling),
        order,
        nf_order,
        oracle: ov.oracle.clone().or(raw.oracle),
        tolerance,
        fit_action,
        format: ov.format.or(raw.format).unwrap_or_default(),
        out: raw.out,
    })
}

/// Parses a config file body; job order follows the table names.
pub fn parse_config(source: &str, ov: &Overrides) -> Result<Vec<Job>> {
    let tables: BTreeMap<String, toml::Value> = toml::from_str(source).context("config parse error")?;
    if tables.is_empty() {
        bail!("config defines no jobs");
    }
    let mut jobs = Vec::new();
    for (name, value) in tables {
        let at = || match line_of_table(source, &name) {
            Some(l) => format!("job '{name}' (line {l})"),
            None => format!("job '{name}'"),
        };
        if !value.is_table() {
            bail!("{}: top-level entries must be job tables", at());
        }
        let raw: RawJob = value.try_into().map_err(|e: toml::de::Error| anyhow!("{}: {}", at(), e.message()))?;
        jobs.push(validate(&name, raw, ov).map_err(|e| anyhow!("{}: {e}", at()))?);
    }
    Ok(jobs)
}

pub fn load_config(path: &Path, ov: &Overrides) -> Result<Vec<Job>> {
    let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&source, ov).with_context(|| format!("in {}", path.display()))
}

/// A single job described entirely on the command line.
pub fn job_from_flags(raw: RawJob, ov: &Overrides) -> Result<Job> {
    let name = match (&raw.builtin, &raw.symbol, &raw.potential) {
        (Some(b), _, _) => b.clone(),
        (_, Some(_), _) => "symbol".to_string(),
        (_, _, Some(_)) => "potential".to_string(),
        _ => "job".to_string(),
    };
    validate(&name, raw, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("0..9").unwrap(), 0..=9);
        assert_eq!(parse_levels("3").unwrap(), 3..=3);
        assert_eq!(parse_levels(" 2 ..= 4").unwrap(), 2..=4);
        assert!(parse_levels("5..2").is_err());
        assert!(parse_levels("a..b").is_err());
    }

    #[test]
    fn jobs_from_toml() {
        let src = r#"
[quartic]
builtin = "perturbed_quartic"
params = { epsilon = 0.2 }
hbar = [0.5, 0.25]
levels = "0..4"

[well]
potential = "x^2/2 + x^4/10"
mass = "1/2"
hbar = 0.1
format = "json"
"#;
        let jobs = parse_config(src, &Overrides::default()).unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].name, "quartic");
        assert_eq!(jobs[0].hbar, vec![0.5, 0.25]);
        assert_eq!(jobs[0].levels, 0..=4);
        assert_eq!(jobs[1].format, Format::Json);
        assert!(
            matches!(&jobs[1].hamiltonian, HamiltonianSpec::Potential { mass, .. } if *mass == bsq_core::polysym::rat(1, 2))
        );
        let ov = Overrides { hbar: Some(vec![0.3]), order: Some(0), ..Overrides::default() };
        let jobs = parse_config(src, &ov).unwrap();
        assert!(jobs.iter().all(|j| j.hbar == vec![0.3] && j.order == 0));
    }

    #[test]
    fn errors_name_the_line_and_field() {
        let two = "[a]\nbuiltin = \"harmonic\"\nsymbol = \"I\"\n";
        let e = parse_config(two, &Overrides::default()).unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("mutually exclusive"), "{e}");
        let neg = "\n[b]\nsymbol = \"I\"\nhbar = [0.5, -1.0]\n";
        let e = format!("{:#}", parse_config(neg, &Overrides::default()).unwrap_err());
        assert!(e.contains("line 2") && e.contains("field 'hbar'"), "{e}");
        let unknown = "[c]\nsymbol = \"I\"\nhbarr = 1\n";
        let e = format!("{:#}", parse_config(unknown, &Overrides::default()).unwrap_err());
        assert!(e.contains("hbarr"), "{e}");
        let syntax = "[d]\nsymbol = \n";
        let e = format!("{:#}", parse_config(syntax, &Overrides::default()).unwrap_err());
        assert!(e.contains("line 2"), "{e}");
        let order = "[e]\nsymbol = \"I\"\norder = 1\n";
        assert!(parse_config(order, &Overrides::default()).is_err());
    }

    #[test]
    fn params_need_a_builtin() {
        let src = "[a]\nsymbol = \"I\"\nparams = { epsilon = 1.0 }\n";
        assert!(parse_config(src, &Overrides::default()).is_err());
        let src = "[a]\nbuiltin = \"harmonic\"\nmass = 2\n";
        assert!(parse_config(src, &Overrides::default()).is_err());
    }
}
