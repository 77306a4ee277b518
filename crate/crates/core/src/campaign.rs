//! Seeded batches of runs with aggregated verifier results.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use rayon::prelude::*;

use crate::scenario::Scenario;
use crate::verify::{Options, Report};

/// Result of one seed: digest and report, or the error that stopped it.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub digest: Option<String>,
    pub report: Option<Report>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorstRatio {
    pub seed: u64,
    pub eta: String,
    pub x: u64,
    pub observed: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CampaignSummary {
    pub construction: String,
    /// Outcomes sorted by seed.
    pub runs: Vec<RunOutcome>,
    /// `(passes, failures)` per check name.
    pub counts: BTreeMap<&'static str, (u64, u64)>,
    /// Largest observed injury count per argument `x`, over all runs and η.
    pub max_injuries: BTreeMap<u64, u64>,
    pub worst: Option<WorstRatio>,
}

impl CampaignSummary {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(|r| r.error.is_none() && r.report.as_ref().is_some_and(Report::passed))
    }

    pub fn digests(&self) -> Vec<(u64, Option<&str>)> {
        self.runs.iter().map(|r| (r.seed, r.digest.as_deref())).collect()
    }

    /// `(seed, check, witness)` for every failed check.
    pub fn failures(&self) -> Vec<(u64, &'static str, Option<u64>)> {
        self.runs
            .iter()
            .filter_map(|r| r.report.as_ref().map(|rep| (r.seed, rep)))
            .flat_map(|(s, rep)| rep.failures().map(move |c| (s, c.name, c.witness)))
            .collect()
    }

    pub fn errors(&self) -> impl Iterator<Item = (u64, &str)> {
        self.runs.iter().filter_map(|r| r.error.as_deref().map(|e| (r.seed, e)))
    }

    fn absorb(&mut self, run: &RunOutcome) {
        let Some(rep) = &run.report else { return };
        for c in &rep.checks {
            let slot = self.counts.entry(c.name).or_default();
            if c.pass {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
        for i in &rep.injuries {
            let m = self.max_injuries.entry(i.x).or_default();
            *m = (*m).max(i.observed);
        }
        for i in &rep.injuries {
            let ratio = i.observed as f64 / num_traits::ToPrimitive::to_f64(&i.bound).unwrap_or(f64::INFINITY);
            let better = match &self.worst {
                None => true,
                Some(w) => ratio > w.ratio || (ratio == w.ratio && run.seed < w.seed),
            };
            if better && ratio > 0.0 {
                self.worst = Some(WorstRatio { seed: run.seed, eta: i.eta.clone(), x: i.x, observed: i.observed, ratio });
            }
        }
    }
}

/// Runs `seeds` against the template (the scenario's own seed is replaced by
/// each seed) and verifies each trace. Run errors are recorded, not raised.
pub fn campaign(template: &Scenario, seeds: Range<u64>, opts: &Options) -> CampaignSummary {
    let mut runs: Vec<RunOutcome> = seeds
        .into_par_iter()
        .map(|seed| match template.run(seed) {
            Err(e) => RunOutcome { seed, digest: None, report: None, error: Some(e.to_string()) },
            Ok(trace) => {
                let digest = Some(trace.digest());
                match template.verify(&trace, opts) {
                    Ok(report) => RunOutcome { seed, digest, report: Some(report), error: None },
                    Err(e) => RunOutcome { seed, digest, report: None, error: Some(e.to_string()) },
                }
            }
        })
        .collect();
    runs.sort_by_key(|r| r.seed);
    let mut summary = CampaignSummary { construction: template.construction.to_string(), ..Default::default() };
    for r in &runs {
        summary.absorb(r);
    }
    summary.runs = runs;
    summary
}

impl fmt::Display for CampaignSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let errors = self.errors().count();
        writeln!(f, "campaign construction={} runs={} errors={}", self.construction, self.runs.len(), errors)?;
        for (name, (p, n)) in &self.counts {
            writeln!(f, "check {name} pass={p} fail={n}")?;
        }
        for (x, m) in &self.max_injuries {
            writeln!(f, "max-injuries x={x} observed={m}")?;
        }
        if let Some(w) = &self.worst {
            writeln!(f, "worst-ratio {:.3e} seed={} eta={} x={} observed={}", w.ratio, w.seed, w.eta, w.x, w.observed)?;
        }
        for (seed, name, witness) in self.failures() {
            let w = witness.map_or("-".to_string(), |w| w.to_string());
            writeln!(f, "fail seed={seed} check={name} witness={w}")?;
        }
        for (seed, e) in self.errors() {
            writeln!(f, "error seed={seed} {e}")?;
        }
        for (seed, d) in self.digests() {
            writeln!(f, "digest seed={seed} {}", d.unwrap_or("-"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    const LOW2: &str = "construction nonlow-low2\nstages 300\n\
        adv p0 mode random seed 1 flip 0.1 stabilize 150\nadv p1 mode alternating period 7\n\
        psi 0 p0\npsi 1 p1\n\
        fun 0 family first 1 stride 5 delay 1 policy low:1\nfun 1 family first 2 stride 5 delay 2 policy low:2\n";

    #[test]
    fn single_seed_matches_run() {
        let sc = load_scenario(LOW2).unwrap();
        let opts = Options::default();
        let sum = campaign(&sc, 4..5, &opts);
        let t = sc.run(4).unwrap();
        let rep = sc.verify(&t, &opts).unwrap();
        assert_eq!(sum.runs.len(), 1);
        assert_eq!(sum.runs[0].report.as_ref(), Some(&rep));
        assert_eq!(sum.runs[0].digest.as_deref(), Some(t.digest().as_str()));
        for c in &rep.checks {
            assert_eq!(sum.counts[c.name], if c.pass { (1, 0) } else { (0, 1) });
        }
    }

    #[test]
    fn campaigns_are_deterministic() {
        let sc = load_scenario(LOW2).unwrap();
        let a = campaign(&sc, 0..4, &Options::default());
        let b = campaign(&sc, 0..4, &Options::default());
        assert_eq!(a.to_string(), b.to_string());
        assert!(a.passed(), "{a}");
        let distinct: std::collections::BTreeSet<_> = a.digests().into_iter().map(|d| d.1).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn errors_are_recorded() {
        let sc = load_scenario("construction nonlow-low2\nlevels 2\n").unwrap();
        let sum = campaign(&sc, 0..3, &Options::default());
        assert_eq!(sum.errors().count(), 3);
        assert!(!sum.passed());
    }
}
