//! Replay of the two tree constructions.

use std::collections::{BTreeMap, BTreeSet};
use std::iter::once;

use num_bigint::BigUint;
use num_traits::Zero;

use super::{meta_num, meta_ordinals, BoundLine, Checks, InjuryStat, Options, Report, VerifyError};
use crate::approx::{verify_r_approximation, ApproxTrace, Verdict};
use crate::bounds::{beta_bound, edge_layer, in_quota, injury_bound, k_budget, k_prime, quota_for, Layout, Req};
use crate::ordinal::CnfOrdinal;
use crate::trace::{join, reduce, Event, Kind, RunTrace};
use crate::tree::{true_path_estimate, Node, Outcome, PathLog};

pub(super) const COMMON: &[&str] = &[
    "well-formed",
    "self-consistency",
    "level-discipline",
    "permission-scope",
    "quota-soundness",
    "exhaustion-gate",
    "trigger",
    "recursion",
    "global-bound",
    "diagonalization",
];
pub(super) const ALPHA_ONLY: &[&str] = &["xi-gate", "xi-descent", "kprime", "delta-total"];

/// Replays a `nonlow-low2` trace: quota soundness, the exhaustion gate, the
/// trigger property, the per-node recursion, the global injury bound and
/// diagonalization.
pub fn verify_main_lemma_claims(trace: &RunTrace, opts: &Options) -> Result<Report, VerifyError> {
    Replay::new(trace, Layout::Low2, opts)?.run()
}

/// Replays a `nonlow-alpha` trace: everything the low2 verifier checks for
/// the P-nodes plus the ξ-injury descent witnesses, the Qlist budgets and
/// totality of the Δ declarations.
pub fn verify_combined_bounds(trace: &RunTrace, opts: &Options) -> Result<Report, VerifyError> {
    Replay::new(trace, Layout::Alpha, opts)?.run()
}

#[derive(Clone, Copy)]
struct Pick {
    stage: u64,
    acted_before: u64,
    id: u64,
}

struct Qlist {
    /// Members at the `qlist-set` event, in priority order.
    set_members: Vec<Node>,
    members: BTreeSet<Node>,
    k: BigUint,
    beta: CnfOrdinal,
    inits_at_set: BTreeMap<Node, u64>,
    /// Members after an acting ξ: doomed to removal at the next update.
    zeroed: BTreeSet<Node>,
}

/// Counting window of one `η(x)`, opened at `t_η(x)`.
struct Window {
    t: u64,
    /// Per acting P-node: injuries and the id of the last one.
    by_rho: BTreeMap<Node, (u64, u64)>,
    xi: u64,
    last_id: u64,
    members_at_t: BTreeSet<Node>,
    beta: CnfOrdinal,
    witness: ApproxTrace,
    dirty: bool,
}

struct Replay<'a> {
    trace: &'a RunTrace,
    layout: Layout,
    alpha: bool,
    settle: u64,
    end: u64,
    gs: Vec<CnfOrdinal>,
    last_init: BTreeMap<Node, u64>,
    last_want: BTreeMap<Node, u64>,
    stab: BTreeMap<Node, u64>,
    checks: Checks,
    stage: u64,
    last_id: u64,
    phi: BTreeMap<(u64, u64), u64>,
    uses: BTreeMap<Node, u64>,
    followers: BTreeMap<Node, u64>,
    psi_run: BTreeMap<Node, (u8, u64)>,
    acted: BTreeMap<Node, u64>,
    picks: BTreeMap<Node, Pick>,
    enumerating: Option<(Node, Option<Pick>)>,
    l_now: BTreeMap<Node, u64>,
    inf_now: BTreeSet<Node>,
    windows: BTreeMap<(Node, u64), Window>,
    pending: Vec<(Node, u64)>,
    injuries: BTreeMap<(u64, u64), Vec<(u64, Node)>>,
    qlists: BTreeMap<(Node, u64), Qlist>,
    xi_mu: BTreeMap<Node, CnfOrdinal>,
    xi_decl: BTreeMap<Node, (u64, bool)>,
    inits: BTreeMap<Node, u64>,
    log: PathLog,
}

fn node(ev: &Event) -> Option<Node> {
    ev.subject.parse().ok()
}

fn inf_etas(layout: Layout, n: Node) -> Vec<Node> {
    n.proper_prefixes()
        .filter(|h| layout.req(h.len()) == Req::N && n.get(h.len()) == Outcome::Inf)
        .collect()
}

fn exhausted(layout: Layout, rho: Node, x: u64, acted: u64) -> bool {
    !(in_quota(layout, rho, x) && acted < quota_for(x))
}

impl<'a> Replay<'a> {
    fn new(trace: &'a RunTrace, layout: Layout, opts: &Options) -> Result<Self, VerifyError> {
        let expected = match layout {
            Layout::Low2 => "nonlow-low2",
            Layout::Alpha => "nonlow-alpha",
        };
        let found = trace.meta("construction").unwrap_or("");
        if found != expected {
            return Err(VerifyError::BadMeta { key: "construction".into(), value: found.into() });
        }
        let end = match trace.meta("stages") {
            Some(_) => meta_num(trace, "stages")?,
            None => trace.events.last().map_or(0, |e| e.stage),
        };
        let alpha = layout == Layout::Alpha;
        let gs = if alpha { meta_ordinals(trace, "g")? } else { Vec::new() };
        let mut last_init = BTreeMap::new();
        let mut last_want = BTreeMap::new();
        for ev in &trace.events {
            match (ev.kind, node(ev)) {
                (Kind::Init, Some(n)) => {
                    last_init.insert(n, ev.stage);
                }
                (Kind::Want, Some(n)) => {
                    last_want.insert(n, ev.stage);
                }
                _ => {}
            }
        }
        let names: Vec<&'static str> =
            COMMON.iter().chain(if alpha { ALPHA_ONLY } else { &[] }).copied().collect();
        Ok(Replay {
            trace,
            layout,
            alpha,
            settle: opts.settle,
            end,
            gs,
            last_init,
            last_want,
            stab: BTreeMap::new(),
            checks: Checks::new(&names),
            stage: 0,
            last_id: 0,
            phi: BTreeMap::new(),
            uses: BTreeMap::new(),
            followers: BTreeMap::new(),
            psi_run: BTreeMap::new(),
            acted: BTreeMap::new(),
            picks: BTreeMap::new(),
            enumerating: None,
            l_now: BTreeMap::new(),
            inf_now: BTreeSet::new(),
            windows: BTreeMap::new(),
            pending: Vec::new(),
            injuries: BTreeMap::new(),
            qlists: BTreeMap::new(),
            xi_mu: BTreeMap::new(),
            xi_decl: BTreeMap::new(),
            inits: BTreeMap::new(),
            log: PathLog::default(),
        })
    }

    /// First stage after the last initialization of some `δ ⪯ η` (and, in the
    /// α layout, after the last wish of some `ξ ≺ η` to act).
    fn stab(&mut self, eta: Node) -> u64 {
        if let Some(&s) = self.stab.get(&eta) {
            return s;
        }
        let mut m: Option<u64> = None;
        for d in eta.proper_prefixes().chain(once(eta)) {
            if let Some(&s) = self.last_init.get(&d) {
                m = m.max(Some(s));
            }
            if self.alpha && d != eta {
                if let Some(&s) = self.last_want.get(&d) {
                    m = m.max(Some(s));
                }
            }
        }
        let s = m.map_or(0, |s| s + 1);
        self.stab.insert(eta, s);
        s
    }

    fn g_of(&self, n: Node) -> CnfOrdinal {
        self.gs.get(self.layout.index(n.len())).cloned().unwrap_or_else(CnfOrdinal::omega)
    }

    fn guard(&self, observer: Node) -> Option<u64> {
        observer
            .proper_prefixes()
            .filter(|r| self.layout.req(r.len()) == Req::P && observer.get(r.len()) == Outcome::Inf)
            .chain((self.layout.req(observer.len()) == Req::P).then_some(observer))
            .filter_map(|r| self.uses.get(&r).copied())
            .min()
    }

    fn run(mut self) -> Result<Report, VerifyError> {
        let trace = self.trace;
        let wf = trace.check_well_formed();
        self.checks.test("well-formed", wf.is_ok(), None, || wf.clone().unwrap_err());
        for ev in &trace.events {
            if ev.stage != self.stage {
                self.finish_stage();
                self.stage = ev.stage;
                self.l_now.clear();
                self.inf_now.clear();
            }
            if !matches!(ev.kind, Kind::QlistSet | Kind::QlistRemove | Kind::Init) {
                self.snapshot();
            }
            self.last_id = ev.id;
            self.event(ev);
        }
        self.finish_stage();
        let consistent = reduce(&trace.events) == trace.summary;
        self.checks.test("self-consistency", consistent, None, || "summary differs from replay".into());
        self.diagonalization();
        Ok(self.close())
    }

    fn event(&mut self, ev: &Event) {
        if matches!(ev.kind, Kind::InjectConverge | Kind::InjectDiverge) {
            let (e, x) = (ev.num("fun").unwrap_or(0), ev.num("arg").unwrap_or(0));
            if ev.kind == Kind::InjectConverge {
                self.phi.insert((e, x), ev.num("use").unwrap_or(0));
            } else {
                self.phi.remove(&(e, x));
                match ev.get("by").and_then(|b| b.parse::<Node>().ok()) {
                    Some(by) => self.injury(ev, e, x, by),
                    None => self.checks.test("well-formed", false, Some(ev.id), || "injury without actor".into()),
                }
            }
            return;
        }
        let Some(n) = node(ev) else {
            self.checks.test("well-formed", false, Some(ev.id), || format!("bad node {}", ev.subject));
            return;
        };
        match ev.kind {
            Kind::Visit => self.visit(ev, n),
            Kind::Follower => {
                if let Some(y) = ev.num("y") {
                    self.followers.insert(n, y);
                }
                self.psi_run.remove(&n);
            }
            Kind::Declare => self.declare(ev, n),
            Kind::Enumerate => {
                let elem = ev.num("elem").unwrap_or(0);
                if self.layout.req(n.len()) == Req::P {
                    *self.acted.entry(n).or_default() += 1;
                    self.uses.remove(&n);
                    self.enumerating = Some((n, self.picks.remove(&n)));
                } else {
                    self.enumerating = Some((n, None));
                }
                for d in self.xi_decl.values_mut() {
                    if d.0 > elem {
                        d.1 = false;
                    }
                }
            }
            Kind::Init => {
                self.log.inits.push((ev.stage, n));
                *self.inits.entry(n).or_default() += 1;
                match self.layout.req(n.len()) {
                    Req::N => self.qlists.retain(|k, _| k.0 != n),
                    Req::P => {
                        self.uses.remove(&n);
                        self.picks.remove(&n);
                    }
                    Req::Q => {
                        self.xi_mu.remove(&n);
                        self.xi_decl.remove(&n);
                    }
                }
                self.followers.remove(&n);
                self.psi_run.remove(&n);
            }
            Kind::Select => {
                let asked = join(inf_etas(self.layout, n));
                let ok = ev.get("asked") == Some(asked.as_str());
                self.checks.test("permission-scope", ok, Some(ev.id), || format!("asked {asked} expected"));
                if self.alpha && self.layout.req(n.len()) == Req::Q {
                    for q in self.qlists.values_mut() {
                        for &m in &q.set_members {
                            if n < m {
                                q.zeroed.insert(m);
                            }
                        }
                    }
                }
            }
            Kind::Deny => {
                let by = ev.get("by").and_then(|b| b.split_once(':'));
                let ok = by.is_some_and(|(h, x)| match (h.parse::<Node>(), x.parse::<u64>()) {
                    (Ok(h), Ok(x)) => {
                        inf_etas(self.layout, n).contains(&h) && self.l_now.get(&h).is_some_and(|&l| x < l)
                    }
                    _ => false,
                });
                self.checks.test("permission-scope", ok, Some(ev.id), || "denial from outside scope".into());
            }
            Kind::QlistSet => self.qlist_set(ev, n),
            Kind::QlistRemove => {
                let (x, m) = (ev.num("x").unwrap_or(0), ev.get("member").and_then(|m| m.parse::<Node>().ok()));
                let ok = match (self.qlists.get_mut(&(n, x)), m) {
                    (Some(q), Some(m)) => q.members.remove(&m),
                    _ => false,
                };
                self.checks.test("kprime", ok, Some(ev.id), || "removal of a non-member".into());
            }
            _ => {}
        }
    }

    fn visit(&mut self, ev: &Event, n: Node) {
        let req = self.layout.req(n.len());
        let ok = ev.get("req") == Some(req.letter());
        self.checks.test("level-discipline", ok, Some(ev.id), || format!("{n} is a {} node", req.letter()));
        if ev.get("end").is_some() {
            self.log.paths.push((ev.stage, n));
            return;
        }
        match req {
            Req::N => {
                let l = ev.num("l").unwrap_or(0);
                self.l_now.insert(n, l);
                if ev.get("out") == Some("i") {
                    self.inf_now.insert(n);
                    if ev.stage >= self.stab(n) {
                        for x in 0..l {
                            if let std::collections::btree_map::Entry::Vacant(v) = self.windows.entry((n, x)) {
                                v.insert(Window {
                                    t: ev.stage,
                                    by_rho: BTreeMap::new(),
                                    xi: 0,
                                    last_id: ev.id,
                                    members_at_t: BTreeSet::new(),
                                    beta: CnfOrdinal::zero(),
                                    witness: ApproxTrace::new(),
                                    dirty: false,
                                });
                                self.pending.push((n, x));
                            }
                        }
                    }
                }
            }
            Req::P => {
                if let Some(v) = ev.num("psi") {
                    let v = v as u8;
                    match self.psi_run.get(&n) {
                        Some(&(old, _)) if old == v => {}
                        _ => {
                            self.psi_run.insert(n, (v, ev.stage));
                        }
                    }
                }
            }
            Req::Q => {}
        }
    }

    fn declare(&mut self, ev: &Event, n: Node) {
        let use_ = ev.num("use").unwrap_or(0);
        if ev.get("fn") == Some("delta") {
            if let Some(m) = ev.get("marker").and_then(|m| m.parse().ok()) {
                self.xi_mu.insert(n, m);
            }
            self.xi_decl.insert(n, (use_, true));
            return;
        }
        if ev.get("src") == Some("pick") {
            let acted_before = self.acted.get(&n).copied().unwrap_or(0);
            self.exhaustion_gate(ev, n, acted_before);
            *self.acted.entry(n).or_default() += 1;
            self.picks.insert(n, Pick { stage: ev.stage, acted_before, id: ev.id });
        }
        self.uses.insert(n, use_);
    }

    /// A pick made after `ρ` exhausted its quota from `x` must leave `η(x)`
    /// `ρ`-correct.
    fn exhaustion_gate(&mut self, ev: &Event, rho: Node, acted_before: u64) {
        let guard = self.guard(rho);
        for eta in inf_etas(self.layout, rho) {
            let e = self.layout.index(eta.len()) as u64;
            let l = self.l_now.get(&eta).copied().unwrap_or(0);
            for x in 0..l {
                if !exhausted(self.layout, rho, x, acted_before) {
                    continue;
                }
                if let Some(&u) = self.phi.get(&(e, x)) {
                    let ok = guard.is_none_or(|g| g > u);
                    self.checks.test("exhaustion-gate", ok, Some(ev.id), || {
                        format!("{rho} picked while exhausted and {eta}({x}) not correct")
                    });
                }
            }
        }
    }

    fn injury(&mut self, ev: &Event, e: u64, x: u64, by: Node) {
        self.injuries.entry((e, x)).or_default().push((ev.id, by));
        let etas: Vec<Node> = self
            .inf_now
            .iter()
            .copied()
            .filter(|h| self.layout.index(h.len()) as u64 == e && self.windows.contains_key(&(*h, x)))
            .collect();
        for eta in etas {
            let base = eta.child(Outcome::Inf);
            match self.layout.req(by.len()) {
                Req::P => {
                    let sound = in_quota(self.layout, by, x) && base.is_prefix_of(by);
                    self.checks.test("quota-soundness", sound, Some(ev.id), || {
                        format!("{by} injured {eta}({x}) outside quota")
                    });
                    self.trigger(ev, eta, e, x, by);
                    let w = self.windows.get_mut(&(eta, x)).unwrap();
                    let c = w.by_rho.entry(by).or_insert((0, 0));
                    c.0 += 1;
                    c.1 = ev.id;
                    w.last_id = ev.id;
                }
                Req::Q => {
                    let member = self.qlists.get(&(eta, x)).is_some_and(|q| q.members.contains(&by));
                    let ok = base.is_prefix_of(by) && member;
                    self.checks.test("xi-gate", ok, Some(ev.id), || format!("{by} injured {eta}({x}) outside Qlist"));
                    let w = self.windows.get_mut(&(eta, x)).unwrap();
                    w.xi += 1;
                    w.dirty = true;
                    w.last_id = ev.id;
                }
                Req::N => {
                    self.checks.test("quota-soundness", false, Some(ev.id), || format!("N-node {by} enumerated"));
                }
            }
        }
    }

    /// An injury through a use picked after exhaustion, inside the window,
    /// must be preceded by an injury of the same computation from below
    /// `ρ⌢∞` (or, in the α layout, from the Qlist at `t_η(x)`).
    fn trigger(&mut self, ev: &Event, eta: Node, e: u64, x: u64, rho: Node) {
        let pick = match self.enumerating {
            Some((r, Some(p))) if r == rho => p,
            _ => return,
        };
        let t = self.windows[&(eta, x)].t;
        if pick.stage < t || !exhausted(self.layout, rho, x, pick.acted_before) {
            return;
        }
        let list = &self.injuries[&(e, x)];
        let start = list.partition_point(|i| i.0 <= pick.id);
        let found = list[start..].iter().take_while(|i| i.0 < ev.id).find(|i| i.1 != rho).map(|i| i.1);
        let ok = found.is_some_and(|d| {
            rho.child(Outcome::Inf).is_prefix_of(d)
                || (self.alpha
                    && self.layout.req(d.len()) == Req::Q
                    && self.windows[&(eta, x)].members_at_t.contains(&d))
        });
        self.checks.test("trigger", ok, Some(ev.id), || match found {
            None => format!("{rho} injured {eta}({x}) with no earlier trigger"),
            Some(d) => format!("{rho} injured {eta}({x}) after a trigger by {d}"),
        });
    }

    fn qlist_set(&mut self, ev: &Event, eta: Node) {
        let x = ev.num("x").unwrap_or(0);
        let members: Option<Vec<Node>> = ev.list("members").iter().map(|m| m.parse().ok()).collect();
        let kps: Option<Vec<BigUint>> = ev.list("kprime").iter().map(|m| m.parse().ok()).collect();
        let lens: Option<BTreeMap<Node, u64>> = ev
            .list("lens")
            .iter()
            .map(|p| {
                let (n, l) = p.split_once('@')?;
                Some((n.parse().ok()?, l.parse().ok()?))
            })
            .collect();
        let k: Option<BigUint> = ev.get("k").and_then(|k| k.parse().ok());
        let beta: Option<CnfOrdinal> = ev.get("beta").and_then(|b| b.parse().ok());
        let (Some(members), Some(kps), Some(lens), Some(k), Some(beta)) = (members, kps, lens, k, beta) else {
            self.checks.test("kprime", false, Some(ev.id), || "unparsable qlist-set".into());
            return;
        };
        let mut ok = kps.len() == members.len();
        let mut recomputed = Vec::new();
        for m in &members {
            let ls: Option<Vec<u64>> = inf_etas(self.layout, *m).iter().map(|h| lens.get(h).copied()).collect();
            match ls {
                Some(ls) => recomputed.push(k_prime(&ls)),
                None => ok = false,
            }
        }
        ok &= recomputed == kps && k == k_budget(&recomputed);
        let gs: Vec<CnfOrdinal> = members.iter().map(|&m| self.g_of(m)).collect();
        ok &= beta == beta_bound(&gs, &k);
        ok &= lens.iter().all(|(h, l)| self.l_now.get(h).is_none_or(|v| v == l));
        ok &= members.iter().all(|m| eta.child(Outcome::Inf).is_prefix_of(*m));
        self.checks.test("kprime", ok, Some(ev.id), || format!("qlist-set {eta}:{x} disagrees with its lengths"));
        let inits_at_set = members.iter().map(|&m| (m, self.inits.get(&m).copied().unwrap_or(0))).collect();
        let mut set_members = members.clone();
        set_members.sort();
        self.qlists.insert(
            (eta, x),
            Qlist {
                set_members,
                members: members.into_iter().collect(),
                k,
                beta,
                inits_at_set,
                zeroed: BTreeSet::new(),
            },
        );
    }

    /// `Σ T_ξ` over the Qlist members in priority order, where
    /// `T_ξ = g(ξ)·(k − inits since the set) + μ_ξ` and `μ_ξ` is the marker at
    /// `ξ`'s last declaration (`g(ξ)` without a follower). Removed, exhausted
    /// and doomed members contribute 0.
    fn xi_marker(&self, key: (Node, u64)) -> CnfOrdinal {
        let Some(q) = self.qlists.get(&key) else { return CnfOrdinal::zero() };
        let mut acc = CnfOrdinal::zero();
        for m in &q.set_members {
            if !q.members.contains(m) || q.zeroed.contains(m) {
                continue;
            }
            let used = BigUint::from(self.inits.get(m).copied().unwrap_or(0) - q.inits_at_set[m]);
            if used > q.k {
                continue;
            }
            let g = self.g_of(*m);
            let mu = self.xi_mu.get(m).cloned().unwrap_or_else(|| g.clone());
            acc = acc.add(&g.mul_nat(&q.k - used).add(&mu));
        }
        acc
    }

    fn snapshot(&mut self) {
        for key in std::mem::take(&mut self.pending) {
            let marker = self.xi_marker(key);
            let (members, beta) = match self.qlists.get(&key) {
                Some(q) => (q.members.clone(), q.beta.clone()),
                None => (BTreeSet::new(), CnfOrdinal::zero()),
            };
            let w = self.windows.get_mut(&key).unwrap();
            w.members_at_t = members;
            w.beta = beta;
            w.witness.push(0, w.t, 0, marker);
        }
    }

    fn finish_stage(&mut self) {
        self.snapshot();
        if self.stage == 0 {
            return;
        }
        if self.alpha {
            let dead: Vec<Node> = self.xi_decl.iter().filter(|(_, d)| !d.1).map(|(n, _)| *n).collect();
            if !self.xi_decl.is_empty() {
                self.checks.test("delta-total", dead.is_empty(), Some(self.last_id), || {
                    format!("stage {} ends with undeclared {}", self.stage, join(&dead))
                });
            }
            let dirty: Vec<(Node, u64)> = self.windows.iter().filter(|(_, w)| w.dirty).map(|(k, _)| *k).collect();
            for key in dirty {
                let marker = self.xi_marker(key);
                let stage = self.stage;
                let w = self.windows.get_mut(&key).unwrap();
                w.witness.push(0, stage, w.xi, marker);
                w.dirty = false;
            }
        }
    }

    fn diagonalization(&mut self) {
        let estimate = true_path_estimate(&self.log);
        let rhos: Vec<Node> =
            self.followers.keys().copied().filter(|r| self.layout.req(r.len()) == Req::P).collect();
        for rho in rhos {
            if !rho.child(Outcome::Fin).is_prefix_of(estimate) {
                continue;
            }
            let Some(&(psi, since)) = self.psi_run.get(&rho) else { continue };
            if since + self.settle > self.end {
                continue;
            }
            let declared = self.uses.contains_key(&rho);
            let witness = self.trace.events.iter().rev().find(|e| e.kind == Kind::Follower && node(e) == Some(rho));
            self.checks.test("diagonalization", declared != (psi == 1), witness.map(|e| e.id), || {
                format!("{rho}: psi={psi} but declared={declared}")
            });
        }
    }

    fn close(mut self) -> Report {
        let mut report = Report::default();
        let windows = std::mem::take(&mut self.windows);
        for ((eta, x), w) in windows {
            let xi_term = if self.alpha { w.xi } else { 0 };
            let mut layered: Vec<(u64, u64, u64)> = Vec::new();
            for (&rho, &(c, last)) in &w.by_rho {
                if let Ok(r) = edge_layer(self.layout, rho, x) {
                    layered.push((r, c, last));
                }
            }
            for &(r, c, last) in &layered {
                let below: u64 = layered.iter().filter(|l| l.0 < r).map(|l| l.1).sum();
                let rhs = quota_for(x) + xi_term + below;
                self.checks.test("recursion", c <= rhs, Some(last), || {
                    format!("{eta}({x}): {c} injuries at layer {r} exceed {rhs}")
                });
            }
            let rho_total: u64 = w.by_rho.values().map(|v| v.0).sum();
            let total = BigUint::from(rho_total + xi_term);
            let bound = if self.alpha {
                let m = (x + 1) * (x + 1);
                BigUint::from(w.xi + x) * BigUint::from(x + 1) * BigUint::from(4u32).pow(m as u32)
            } else {
                injury_bound(x)
            };
            if !total.is_zero() {
                self.checks.test("global-bound", total <= bound, Some(w.last_id), || {
                    format!("{eta}({x}): {total} injuries exceed {bound}")
                });
            }
            if self.alpha {
                let limit = w.beta.add(&CnfOrdinal::one());
                match verify_r_approximation(&w.witness, &limit) {
                    Verdict::Valid => self.checks.test("xi-descent", true, None, String::new),
                    Verdict::Violation { stage, reason, .. } => {
                        self.checks.test("xi-descent", false, None, || {
                            format!("{eta}({x}): {reason} at stage {stage} against {limit}")
                        })
                    }
                }
            }
            report.bounds.push(BoundLine { eta: eta.to_string(), x, beta: w.beta.clone(), rho_bound: injury_bound(x) });
            report.injuries.push(InjuryStat { eta: eta.to_string(), x, observed: rho_total, bound: injury_bound(x) });
        }
        report.checks = self.checks.finish();
        report
    }
}
