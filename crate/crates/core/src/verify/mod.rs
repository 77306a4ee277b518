//! Trace verifiers. Each one replays a finished run from its events alone and
//! checks the bounds the construction is supposed to respect.

use std::fmt;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::ordinal::CnfOrdinal;
use crate::trace::RunTrace;

mod low;
mod tree;

pub use low::verify_lowness_budget;
pub use tree::{verify_combined_bounds, verify_main_lemma_claims};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// Event id of the first violation.
    pub witness: Option<u64>,
    pub detail: String,
    /// Number of individual instances examined.
    pub checked: u64,
}

/// `bound eta=<η> x=<x> beta=<β> rho_bound=<n>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundLine {
    pub eta: String,
    pub x: u64,
    pub beta: CnfOrdinal,
    pub rho_bound: BigUint,
}

/// Observed injuries of one `η(x)` against its uniform bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjuryStat {
    pub eta: String,
    pub x: u64,
    pub observed: u64,
    pub bound: BigUint,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub checks: Vec<Check>,
    pub bounds: Vec<BoundLine>,
    pub phis: Vec<(u64, CnfOrdinal)>,
    pub injuries: Vec<InjuryStat>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Drops the checks whose name `keep` rejects.
    pub fn retain_checks(&mut self, keep: impl Fn(&str) -> bool) {
        self.checks.retain(|c| keep(c.name));
    }

    /// Largest `observed / bound` over all `η(x)`.
    pub fn worst_injury_ratio(&self) -> f64 {
        self.injuries
            .iter()
            .map(|i| i.observed as f64 / i.bound.to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let w = c.witness.map_or("-".to_string(), |w| w.to_string());
            writeln!(f, "check {} {} witness {}", c.name, if c.pass { "pass" } else { "fail" }, w)?;
        }
        for b in &self.bounds {
            writeln!(f, "bound eta={} x={} beta={} rho_bound={}", b.eta, b.x, b.beta, b.rho_bound)?;
        }
        for (e, v) in &self.phis {
            writeln!(f, "phi e={e} value={v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    /// Stages a ψ value must have been constant before the horizon for its
    /// follower to count in the diagonalization check.
    pub settle: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options { settle: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("trace has no construction meta field")]
    NoConstruction,
    #[error("unknown construction {0:?}")]
    UnknownConstruction(String),
    #[error("bad meta field {key}: {value:?}")]
    BadMeta { key: String, value: String },
}

/// Picks the verifier matching the trace's `construction` meta field.
pub fn verify(trace: &RunTrace, opts: &Options) -> Result<Report, VerifyError> {
    match trace.meta("construction") {
        None => Err(VerifyError::NoConstruction),
        Some("nonlow-low2") => verify_main_lemma_claims(trace, opts),
        Some("nonlow-alpha") => verify_combined_bounds(trace, opts),
        Some("low-alpha") => verify_lowness_budget(trace),
        Some(other) => Err(VerifyError::UnknownConstruction(other.to_string())),
    }
}

/// Every check name any verifier reports.
pub fn check_names() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = tree::COMMON.iter().chain(tree::ALPHA_ONLY).chain(low::CHECKS).copied().collect();
    v.sort();
    v.dedup();
    v
}

pub(crate) fn meta_num(trace: &RunTrace, key: &str) -> Result<u64, VerifyError> {
    let v = trace.meta(key).unwrap_or("");
    v.parse().map_err(|_| VerifyError::BadMeta { key: key.into(), value: v.into() })
}

pub(crate) fn meta_ordinals(trace: &RunTrace, key: &str) -> Result<Vec<CnfOrdinal>, VerifyError> {
    let v = trace.meta(key).unwrap_or("-");
    if v == "-" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.parse().map_err(|_| VerifyError::BadMeta { key: key.into(), value: v.into() }))
        .collect()
}

/// Check table: every check starts passing and keeps its first failure.
pub(crate) struct Checks {
    list: Vec<Check>,
}

impl Checks {
    pub fn new(names: &[&'static str]) -> Self {
        let list = names
            .iter()
            .map(|&name| Check { name, pass: true, witness: None, detail: String::new(), checked: 0 })
            .collect();
        Checks { list }
    }

    fn slot(&mut self, name: &str) -> &mut Check {
        self.list.iter_mut().find(|c| c.name == name).expect("declared check")
    }

    pub fn test(&mut self, name: &str, ok: bool, witness: Option<u64>, detail: impl FnOnce() -> String) {
        let c = self.slot(name);
        c.checked += 1;
        if !ok && c.pass {
            c.pass = false;
            c.witness = witness;
            c.detail = detail();
        }
    }

    pub fn finish(self) -> Vec<Check> {
        self.list
    }
}
