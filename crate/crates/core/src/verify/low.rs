//! Replay of the low-α construction.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;

use super::{meta_ordinals, Checks, Report, VerifyError};
use crate::approx::{verify_r_approximation, ApproxTrace, Verdict};
use crate::bounds::phi;
use crate::ordinal::CnfOrdinal;
use crate::trace::{join, reduce, Event, Kind, RunTrace};

pub(super) const CHECKS: &[&str] = &[
    "well-formed",
    "self-consistency",
    "permission-scope",
    "phi-value",
    "phi-below-alpha",
    "activation-once",
    "qlist-antimonotone",
    "injury-gate",
    "lowness-descent",
    "mind-change-cap",
    "delta-total",
];

/// One activated N-requirement.
struct Active {
    k: u64,
    value: CnfOrdinal,
    set_members: Vec<usize>,
    members: BTreeSet<usize>,
    inits_at_set: BTreeMap<usize, u64>,
    zeroed: BTreeSet<usize>,
    changes: u64,
    witness: ApproxTrace,
    dirty: bool,
    /// Natural cap contributions: per member, finite markers at epoch starts
    /// and acts in epochs that started with an infinite marker.
    cap: BigUint,
    last_id: u64,
}

#[derive(Clone, Default)]
struct Q {
    follower: bool,
    mu: Option<CnfOrdinal>,
    decl: Option<(u64, bool)>,
    inits: u64,
    /// Whether the current epoch started with an infinite marker.
    infinite_epoch: bool,
}

fn index(name: &str, prefix: char) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok()
}

/// Replays a `low-alpha` trace: the φ assignments and their bound `α`, the
/// Qlist discipline, and for every activated `N_e` an ordinal descent
/// witness for the mind changes of `Φ_e(e)` validated against `φ(e) + 1`.
pub fn verify_lowness_budget(trace: &RunTrace) -> Result<Report, VerifyError> {
    let found = trace.meta("construction").unwrap_or("");
    if found != "low-alpha" {
        return Err(VerifyError::BadMeta { key: "construction".into(), value: found.into() });
    }
    let gs = meta_ordinals(trace, "g")?;
    let alpha: CnfOrdinal = trace
        .meta("alpha")
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| VerifyError::BadMeta { key: "alpha".into(), value: trace.meta("alpha").unwrap_or("").into() })?;
    let mut r = LowReplay { gs, checks: Checks::new(CHECKS), qs: BTreeMap::new(), ns: BTreeMap::new(), stage: 0, last_id: 0 };
    let wf = trace.check_well_formed();
    r.checks.test("well-formed", wf.is_ok(), None, || wf.clone().unwrap_err());
    for ev in &trace.events {
        if ev.stage != r.stage {
            r.finish_stage();
            r.stage = ev.stage;
        }
        r.last_id = ev.id;
        r.event(ev, &alpha);
    }
    r.finish_stage();
    let consistent = reduce(&trace.events) == trace.summary;
    r.checks.test("self-consistency", consistent, None, || "summary differs from replay".into());

    let mut report = Report::default();
    for (&e, n) in &r.ns {
        let limit = n.value.add(&CnfOrdinal::one());
        let verdict = verify_r_approximation(&n.witness, &limit);
        let ok = verdict.is_valid();
        r.checks.test("lowness-descent", ok, Some(n.last_id), || match verdict {
            Verdict::Violation { stage, reason, .. } => format!("N{e}: {reason} at stage {stage} against {limit}"),
            Verdict::Valid => String::new(),
        });
        let within = BigUint::from(n.changes) <= n.cap;
        r.checks.test("mind-change-cap", within, Some(n.last_id), || {
            format!("N{e}: {} changes exceed cap {}", n.changes, n.cap)
        });
        report.phis.push((e as u64, n.value.clone()));
    }
    report.checks = r.checks.finish();
    Ok(report)
}

struct LowReplay {
    gs: Vec<CnfOrdinal>,
    checks: Checks,
    qs: BTreeMap<usize, Q>,
    ns: BTreeMap<usize, Active>,
    stage: u64,
    last_id: u64,
}

impl LowReplay {
    fn g(&self, i: usize) -> CnfOrdinal {
        self.gs.get(i).cloned().unwrap_or_else(CnfOrdinal::omega)
    }

    /// `Σ T_Q` over the members of `N_e` in ascending priority.
    fn marker(&self, e: usize) -> CnfOrdinal {
        let n = &self.ns[&e];
        let mut acc = CnfOrdinal::zero();
        for i in &n.set_members {
            if !n.members.contains(i) || n.zeroed.contains(i) {
                continue;
            }
            let q = self.qs.get(i).cloned().unwrap_or_default();
            let used = q.inits - n.inits_at_set[i];
            if used > n.k {
                continue;
            }
            let g = self.g(*i);
            let mu = if q.follower { q.mu.clone().unwrap_or_else(|| g.clone()) } else { g.clone() };
            acc = acc.add(&g.mul_nat(n.k - used).add(&mu));
        }
        acc
    }

    fn finish_stage(&mut self) {
        if self.stage == 0 {
            return;
        }
        let dead: Vec<String> =
            self.qs.iter().filter(|(_, q)| q.follower && !q.decl.is_some_and(|d| d.1)).map(|(i, _)| format!("Q{i}")).collect();
        if self.qs.values().any(|q| q.follower) {
            self.checks.test("delta-total", dead.is_empty(), Some(self.last_id), || {
                format!("stage {} ends with undeclared {}", self.stage, join(&dead))
            });
        }
        let dirty: Vec<usize> = self.ns.iter().filter(|(_, n)| n.dirty).map(|(e, _)| *e).collect();
        for e in dirty {
            let m = self.marker(e);
            let stage = self.stage;
            let n = self.ns.get_mut(&e).unwrap();
            n.witness.push(0, stage, n.changes, m);
            n.dirty = false;
        }
    }

    fn active_names(&self) -> String {
        join(self.ns.keys().map(|e| format!("N{e}")))
    }

    fn event(&mut self, ev: &Event, alpha: &CnfOrdinal) {
        let q_subject = index(&ev.subject, 'Q');
        match ev.kind {
            Kind::Follower => {
                if let Some(i) = q_subject {
                    let q = self.qs.entry(i).or_default();
                    q.follower = true;
                    q.mu = None;
                }
            }
            Kind::Declare => {
                let Some(i) = q_subject else { return };
                let marker: Option<CnfOrdinal> = ev.get("marker").and_then(|m| m.parse().ok());
                let fresh_epoch = matches!(ev.get("src"), Some("follow") | Some("init"));
                let acting = ev.get("src") == Some("act");
                let q = self.qs.entry(i).or_default();
                q.decl = Some((ev.num("use").unwrap_or(0), true));
                if fresh_epoch {
                    q.infinite_epoch = marker.as_ref().is_some_and(|m| !m.is_finite());
                }
                q.mu = marker.clone();
                let infinite = q.infinite_epoch;
                for n in self.ns.values_mut() {
                    if !n.members.contains(&i) {
                        continue;
                    }
                    if fresh_epoch && !infinite {
                        n.cap += marker.as_ref().and_then(CnfOrdinal::as_nat).unwrap_or_default();
                    } else if acting && infinite {
                        n.cap += 1u32;
                    }
                }
            }
            Kind::Enumerate => {
                let elem = ev.num("elem").unwrap_or(0);
                for q in self.qs.values_mut() {
                    if let Some(d) = q.decl.as_mut() {
                        if d.0 > elem {
                            d.1 = false;
                        }
                    }
                }
            }
            Kind::Init => {
                if let Some(i) = q_subject {
                    let q = self.qs.entry(i).or_default();
                    q.inits += 1;
                    q.follower = false;
                    q.mu = None;
                    q.decl = None;
                }
            }
            Kind::InjectDiverge => {
                let (e, x) = (ev.num("fun").unwrap_or(0) as usize, ev.num("arg").unwrap_or(0));
                if x != e as u64 {
                    return;
                }
                let by = ev.get("by").and_then(|b| index(b, 'Q'));
                if let Some(n) = self.ns.get_mut(&e) {
                    let ok = by.is_some_and(|b| n.members.contains(&b));
                    n.changes += 1;
                    n.dirty = true;
                    n.last_id = ev.id;
                    self.checks.test("injury-gate", ok, Some(ev.id), || format!("Φ_{e}({e}) injured from outside its Qlist"));
                }
            }
            Kind::Select => {
                let asked = self.active_names();
                let ok = ev.get("asked") == Some(asked.as_str());
                self.checks.test("permission-scope", ok, Some(ev.id), || format!("asked set differs from {asked}"));
                if let Some(i) = q_subject {
                    for n in self.ns.values_mut() {
                        for &m in &n.set_members {
                            if m > i {
                                n.zeroed.insert(m);
                            }
                        }
                    }
                }
            }
            Kind::Deny => {
                let ok = ev.get("by").and_then(|b| index(b, 'N')).is_some_and(|i| self.ns.contains_key(&i));
                self.checks.test("permission-scope", ok, Some(ev.id), || "denial by an inactive N".into());
            }
            Kind::PhiSet => self.phi_set(ev, alpha),
            Kind::QlistRemove => {
                let e = index(&ev.subject, 'N');
                let m = ev.get("member").and_then(|m| index(m, 'Q'));
                let ok = match (e.and_then(|e| self.ns.get_mut(&e)), m) {
                    (Some(n), Some(m)) => n.members.remove(&m),
                    _ => false,
                };
                self.checks.test("qlist-antimonotone", ok, Some(ev.id), || "removal of a non-member".into());
            }
            _ => {}
        }
    }

    fn phi_set(&mut self, ev: &Event, alpha: &CnfOrdinal) {
        let Some(e) = index(&ev.subject, 'N') else {
            self.checks.test("well-formed", false, Some(ev.id), || format!("bad subject {}", ev.subject));
            return;
        };
        let fresh = !self.ns.contains_key(&e);
        self.checks.test("activation-once", fresh, Some(ev.id), || format!("N{e} activated twice"));
        let members: Option<Vec<usize>> = ev.list("members").iter().map(|m| index(m, 'Q')).collect();
        let k = ev.num("k");
        let value: Option<CnfOrdinal> = ev.get("value").and_then(|v| v.parse().ok());
        let (Some(mut members), Some(k), Some(value)) = (members, k, value) else {
            self.checks.test("phi-value", false, Some(ev.id), || "unparsable phi-set".into());
            return;
        };
        members.sort();
        let gs: Vec<CnfOrdinal> = members.iter().map(|&i| self.g(i)).collect();
        let with_followers = members.iter().all(|i| self.qs.get(i).is_some_and(|q| q.follower));
        let expected_k = self.ns.len() as u64 + u64::from(fresh);
        let ok = value == phi(&gs, k) && k == expected_k && with_followers;
        self.checks.test("phi-value", ok, Some(ev.id), || format!("N{e}: φ={value} with k={k}"));
        self.checks.test("phi-below-alpha", value < *alpha, Some(ev.id), || format!("N{e}: φ={value} ≥ {alpha}"));
        let mut cap = BigUint::default();
        for &i in &members {
            let q = &self.qs[&i];
            match q.mu.as_ref().and_then(CnfOrdinal::as_nat) {
                Some(n) if !q.infinite_epoch => cap += n,
                _ => {}
            }
        }
        let n = Active {
            k,
            value,
            set_members: members.clone(),
            members: members.iter().copied().collect(),
            inits_at_set: members.iter().map(|&i| (i, self.qs[&i].inits)).collect(),
            zeroed: BTreeSet::new(),
            changes: 0,
            witness: ApproxTrace::new(),
            dirty: false,
            cap,
            last_id: ev.id,
        };
        self.ns.insert(e, n);
        let m = self.marker(e);
        let stage = ev.stage;
        self.ns.get_mut(&e).unwrap().witness.push(0, stage, 0, m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{BoundedCaAdversary, FcaMode};
    use crate::functional::{ArgSchedule, FunctionalSpec, UsePolicy};
    use crate::low_alpha::{run, LowAlphaSetup};

    fn setup(seed: u64, g: &str, stages: u64) -> LowAlphaSetup {
        let g: CnfOrdinal = g.parse().unwrap();
        let fca = (0..3)
            .map(|i| BoundedCaAdversary::new("f", g.clone(), FcaMode::Random { seed: i, change: 0.1, stabilize: 400 }))
            .collect();
        let functionals = (0..3)
            .map(|e| {
                let mut f = FunctionalSpec::new(e);
                f.family = Some((ArgSchedule { first: Some(1 + e), delay: 1, policy: UsePolicy::AdversarialLow(1), initial_use: None }, 1));
                f
            })
            .collect();
        LowAlphaSetup { levels: 3, stages, seed, alpha: "w^2".parse().unwrap(), fca, functionals }
    }

    #[test]
    fn low_alpha_runs_verify() {
        for g in ["3", "w"] {
            for seed in 0..4 {
                let t = run(setup(seed, g, 1000)).unwrap();
                let r = verify_lowness_budget(&t).unwrap();
                let fails: String = r.failures().map(|c| format!("{} {:?} {}\n", c.name, c.witness, c.detail)).collect();
                assert!(r.passed(), "g={g} seed={seed}\n{fails}");
                assert!(!r.phis.is_empty());
                assert!(r.check("lowness-descent").unwrap().checked > 0);
            }
        }
    }

    #[test]
    fn tampered_phi_fails() {
        let mut t = run(setup(1, "w", 200)).unwrap();
        let ev = t.events.iter_mut().find(|e| e.kind == Kind::PhiSet).unwrap();
        for f in &mut ev.fields {
            if f.0 == "value" {
                f.1 = "w^2".into();
            }
        }
        let r = verify_lowness_budget(&t).unwrap();
        assert!(!r.check("phi-value").unwrap().pass);
        assert!(!r.check("phi-below-alpha").unwrap().pass);
    }
}
