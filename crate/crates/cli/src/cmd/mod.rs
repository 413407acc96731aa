pub mod compare;
pub mod identities;
pub mod normalform;
pub mod spectrum;

use std::path::PathBuf;

use crate::config::Job;
use crate::output::resolve_out_dir;

/// Outcome of a command that ran to completion; errors map to exit code 1
/// (or 3 for oracle divergence) in `main`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    /// Some levels were skipped (outside the energy window).
    Partial,
    /// A gate failed.
    Failed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Failed => 1,
            Status::Partial => 2,
        }
    }
}

pub fn out_dir(flag: Option<&PathBuf>, job: &Job) -> PathBuf {
    resolve_out_dir(flag.map(|p| p.as_path()), job.out.as_deref())
}
