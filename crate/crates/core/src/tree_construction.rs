//! The infinite-injury tree constructions: N/P levels (`nonlow-low2`) and
//! N/P/Q levels (`nonlow-alpha`), played on [`TreeEngine`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use num_bigint::BigUint;

use crate::approx::{BoundedCaAdversary, DeltaTwoAdversary};
use crate::bounds::{beta_bound, in_quota, k_budget, k_prime, quota_for, Layout, Req};
use crate::functional::{EnumerableSet, FunctionalRuntime, FunctionalSpec, Large};
use crate::ordinal::CnfOrdinal;
use crate::trace::{join, Kind, NodeSummary, RunTrace};
use crate::tree::{left_of, Node, Outcome, Strategies, TreeEngine, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("no {what} declared for level index {index}")]
    Missing { what: &'static str, index: usize },
    #[error("alpha {0} is not a power of omega")]
    AlphaNotPower(String),
    #[error("bound {g} of Q-level {index} is not below alpha {alpha}")]
    BoundTooLarge { index: usize, g: String, alpha: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub(crate) fn p(k: &'static str, v: impl Display) -> (&'static str, String) {
    (k, v.to_string())
}

pub(crate) fn check_alpha(alpha: &CnfOrdinal, gs: &[CnfOrdinal]) -> Result<(), ConfigError> {
    if alpha.is_zero() || !alpha.is_additively_closed() {
        return Err(ConfigError::AlphaNotPower(alpha.to_string()));
    }
    for (index, g) in gs.iter().enumerate() {
        if g >= alpha {
            return Err(ConfigError::BoundTooLarge { index, g: g.to_string(), alpha: alpha.to_string() });
        }
    }
    Ok(())
}

/// Inputs of one tree run. Adversary and functional vectors are indexed by
/// the requirement index of their level.
#[derive(Clone, Debug)]
pub struct TreeSetup {
    pub layout: Layout,
    /// Number of tree levels; `|δ_s| = min(s, levels)`.
    pub levels: usize,
    pub stages: u64,
    pub seed: u64,
    pub alpha: Option<CnfOrdinal>,
    pub psi: Vec<DeltaTwoAdversary>,
    pub fca: Vec<BoundedCaAdversary>,
    pub functionals: Vec<FunctionalSpec>,
    /// Argument restrictions per functional.
    pub restrict: BTreeMap<u64, Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Want {
    Pick,
    Enumerate,
}

#[derive(Clone, Debug, Default)]
struct RhoState {
    follower: Option<u64>,
    psi_arg: u64,
    use_: Option<u64>,
    gamma_live: bool,
    psi_now: u8,
}

#[derive(Clone, Debug, Default)]
struct XiState {
    follower: Option<u64>,
    use_: Option<u64>,
    value: u8,
    marker: CnfOrdinal,
    live: bool,
}

#[derive(Clone, Debug)]
struct Qlist {
    members: BTreeSet<Node>,
    k: BigUint,
    inits_at_set: BTreeMap<Node, u64>,
    /// Trace position from which the next update scans.
    since: usize,
}

#[derive(Clone, Debug, Default)]
struct EtaState {
    max_l: u64,
    qlists: BTreeMap<u64, Qlist>,
}

struct State {
    layout: Layout,
    trace: RunTrace,
    a: EnumerableSet,
    large: Large,
    fun: FunctionalRuntime,
    psi: Vec<DeltaTwoAdversary>,
    fca: Vec<BoundedCaAdversary>,
    rho: BTreeMap<Node, RhoState>,
    xi: BTreeMap<Node, XiState>,
    eta: BTreeMap<Node, EtaState>,
    acted: BTreeMap<Node, u64>,
    inits: BTreeMap<Node, u64>,
    psi_args: Vec<u64>,
    next_delta: u64,
    l_now: BTreeMap<Node, u64>,
    want_now: BTreeMap<Node, Want>,
    xi_want_now: BTreeSet<Node>,
}

fn out_sym(o: Outcome) -> char {
    o.symbol()
}

impl State {
    fn emit(&mut self, s: u64, kind: Kind, subject: impl ToString, fields: Vec<(&str, String)>) -> u64 {
        self.trace.push(s, kind, subject, fields)
    }

    fn fun_of(&self, eta: Node) -> u64 {
        self.layout.index(eta.len()) as u64
    }

    /// Least live use among the P-nodes `ρ` with `ρ = observer` or `ρ⌢∞ ⪯ observer`.
    fn guard_use(&self, observer: Node) -> Option<u64> {
        let mut m: Option<u64> = None;
        let mut consider = |r: Node| {
            if let Some(u) = self.rho.get(&r).and_then(|st| st.use_) {
                m = Some(m.map_or(u, |x| x.min(u)));
            }
        };
        for r in observer.proper_prefixes() {
            if self.layout.req(r.len()) == Req::P && observer.get(r.len()) == Outcome::Inf {
                consider(r);
            }
        }
        if self.layout.req(observer.len()) == Req::P {
            consider(observer);
        }
        m
    }

    fn correct(&self, observer: Node, phi_use: u64) -> bool {
        self.guard_use(observer).is_none_or(|u| u > phi_use)
    }

    /// `l_s(η)`.
    fn length(&self, eta: Node, s: u64) -> u64 {
        let e = self.fun_of(eta);
        let guard = self.guard_use(eta);
        let mut x = 0;
        while x < s {
            match self.fun.get(e, x) {
                Some((u, _)) if guard.is_none_or(|g| g > u) => x += 1,
                _ => break,
            }
        }
        x
    }

    /// `η` with `η⌢∞ ⪯ n`, shortest first.
    fn inf_etas(&self, n: Node) -> Vec<Node> {
        n.proper_prefixes()
            .filter(|h| self.layout.req(h.len()) == Req::N && n.get(h.len()) == Outcome::Inf)
            .collect()
    }

    fn l_of(&self, eta: Node, s: u64) -> u64 {
        self.l_now.get(&eta).copied().unwrap_or_else(|| self.length(eta, s))
    }

    fn pick_allowed(&self, rho: Node, s: u64) -> bool {
        let acted = self.acted.get(&rho).copied().unwrap_or(0);
        self.inf_etas(rho).into_iter().all(|eta| {
            let e = self.fun_of(eta);
            (0..self.l_of(eta, s)).all(|x| match self.fun.get(e, x) {
                None => true,
                Some((u, _)) => {
                    self.correct(rho, u) || (in_quota(self.layout, rho, x) && acted < quota_for(x))
                }
            })
        })
    }

    /// First `(η, x)` refusing an enumeration of `ρ`'s use.
    fn enumerate_refusal(&self, rho: Node, use_: u64, s: u64) -> Option<(Node, u64)> {
        for eta in self.inf_etas(rho) {
            let e = self.fun_of(eta);
            for x in 0..self.l_of(eta, s) {
                if let Some((u, _)) = self.fun.get(e, x) {
                    if !(use_ > u || in_quota(self.layout, rho, x)) {
                        return Some((eta, x));
                    }
                }
            }
        }
        None
    }

    fn xi_refusal(&self, xi: Node, use_: u64, s: u64) -> Option<(Node, u64)> {
        for eta in self.inf_etas(xi) {
            let e = self.fun_of(eta);
            let lists = self.eta.get(&eta);
            for x in 0..self.l_of(eta, s) {
                let member = lists.and_then(|st| st.qlists.get(&x)).is_some_and(|q| q.members.contains(&xi));
                let ok = member
                    || match self.fun.get(e, x) {
                        None => true,
                        Some((u, _)) => use_ > u,
                    };
                if !ok {
                    return Some((eta, x));
                }
            }
        }
        None
    }

    fn enumerate(&mut self, s: u64, by: Node, elem: u64) {
        self.emit(s, Kind::Enumerate, by, vec![p("elem", elem)]);
        self.a.enumerate(s, elem).expect("enumerated uses are fresh");
        for inj in self.fun.on_enumerate(s, elem) {
            self.emit(
                s,
                Kind::InjectDiverge,
                format!("{}:{}", inj.e, inj.x),
                vec![p("fun", inj.e), p("arg", inj.x), p("use", inj.use_), p("by", by), p("elem", elem)],
            );
        }
        for st in self.rho.values_mut() {
            if st.use_.is_some_and(|u| u > elem) {
                st.gamma_live = false;
            }
        }
        for st in self.xi.values_mut() {
            if st.use_.is_some_and(|u| u > elem) {
                st.live = false;
            }
        }
    }

    fn declare_gamma(&mut self, s: u64, rho: Node, src: &str) {
        let st = self.rho.get_mut(&rho).expect("declaring node has state");
        st.gamma_live = true;
        let (y, u) = (st.follower.expect("follower"), st.use_.expect("use"));
        self.emit(
            s,
            Kind::Declare,
            rho,
            vec![p("fn", "gamma"), p("arg", y), p("use", u), p("value", 1), p("src", src)],
        );
    }

    fn declare_delta(&mut self, s: u64, xi: Node, src: &str, fresh: bool) {
        let e = self.layout.index(xi.len());
        let z = self.xi[&xi].follower.expect("follower");
        if fresh {
            let f = self.fca[e].value(z, s);
            let marker = self.fca[e].marker(z, s);
            let st = self.xi.get_mut(&xi).unwrap();
            st.value = 1 - f;
            st.marker = marker;
        }
        let st = self.xi.get_mut(&xi).unwrap();
        st.live = true;
        let fields = vec![
            p("fn", "delta"),
            p("arg", z),
            p("use", st.use_.expect("use")),
            p("value", st.value),
            p("src", src),
            p("marker", &st.marker),
        ];
        self.emit(s, Kind::Declare, xi, fields);
    }

    fn new_xi_follower(&mut self, s: u64, xi: Node) {
        let z = self.next_delta;
        self.next_delta += 1;
        let u = self.large.fresh();
        let st = self.xi.entry(xi).or_default();
        st.follower = Some(z);
        st.use_ = Some(u);
        self.emit(s, Kind::Follower, xi, vec![p("y", z)]);
    }

    fn eta_visit(&mut self, eta: Node, s: u64) -> Outcome {
        let l = self.length(eta, s);
        let st = self.eta.entry(eta).or_default();
        let o = if l > st.max_l { Outcome::Inf } else { Outcome::Fin };
        st.max_l = st.max_l.max(l);
        self.l_now.insert(eta, l);
        self.emit(s, Kind::Visit, eta, vec![p("req", "N"), p("l", l), p("out", out_sym(o))]);
        o
    }

    fn rho_visit(&mut self, rho: Node, s: u64) -> Outcome {
        let e = self.layout.index(rho.len());
        if self.rho.get(&rho).and_then(|st| st.follower).is_none() {
            let y = self.large.fresh();
            let arg = self.psi_args[e];
            self.psi_args[e] += 1;
            let st = self.rho.entry(rho).or_default();
            st.follower = Some(y);
            st.psi_arg = arg;
            self.emit(s, Kind::Follower, rho, vec![p("y", y), p("arg", arg)]);
        }
        let arg = self.rho[&rho].psi_arg;
        let v = self.psi[e].value(arg, s);
        let st = self.rho.get_mut(&rho).unwrap();
        st.psi_now = v;
        let want = match (v, st.use_.is_some()) {
            (0, false) => Some(Want::Pick),
            (1, true) => Some(Want::Enumerate),
            _ => None,
        };
        let o = if want.is_some() { Outcome::Inf } else { Outcome::Fin };
        if let Some(w) = want {
            self.want_now.insert(rho, w);
        }
        self.emit(s, Kind::Visit, rho, vec![p("req", "P"), p("psi", v), p("out", out_sym(o))]);
        o
    }

    fn xi_visit(&mut self, xi: Node, s: u64) -> Outcome {
        self.emit(s, Kind::Visit, xi, vec![p("req", "Q"), p("out", 'q')]);
        let e = self.layout.index(xi.len());
        if self.xi.get(&xi).and_then(|st| st.follower).is_none() {
            self.new_xi_follower(s, xi);
            self.declare_delta(s, xi, "follow", true);
        } else {
            let z = self.xi[&xi].follower.unwrap();
            if self.fca[e].value(z, s) == self.xi[&xi].value {
                self.xi_want_now.insert(xi);
                self.emit(s, Kind::Want, xi, vec![p("arg", z)]);
            }
        }
        Outcome::Q
    }

    fn rho_fin(&mut self, rho: Node, s: u64) {
        let st = &self.rho[&rho];
        if st.psi_now == 0 && st.use_.is_some() && !st.gamma_live {
            self.declare_gamma(s, rho, "fin");
        }
    }

    fn k_prime_of(&self, xi: Node, s: u64) -> (BigUint, Vec<(Node, u64)>) {
        let lens: Vec<(Node, u64)> = self.inf_etas(xi).into_iter().map(|h| (h, self.l_of(h, s))).collect();
        let ls: Vec<u64> = lens.iter().map(|x| x.1).collect();
        (k_prime(&ls), lens)
    }

    fn g_of(&self, xi: Node) -> CnfOrdinal {
        self.fca[self.layout.index(xi.len())].bound.clone()
    }

    fn qlist_step(&mut self, eta: Node, s: u64) {
        let base = eta.child(Outcome::Inf);
        let l = self.l_now[&eta];
        for x in 0..l {
            let existing = self.eta.get(&eta).and_then(|st| st.qlists.get(&x)).cloned();
            match existing {
                None => {
                    let members: BTreeSet<Node> = self
                        .xi
                        .iter()
                        .filter(|(n, st)| base.is_prefix_of(**n) && st.follower.is_some())
                        .map(|(n, _)| *n)
                        .collect();
                    let mut kps = Vec::new();
                    let mut lens: BTreeMap<Node, u64> = BTreeMap::new();
                    for &m in &members {
                        let (kp, ls) = self.k_prime_of(m, s);
                        kps.push(kp);
                        lens.extend(ls);
                    }
                    let k = k_budget(&kps);
                    let gs: Vec<CnfOrdinal> = members.iter().map(|&m| self.g_of(m)).collect();
                    let beta = beta_bound(&gs, &k);
                    self.emit(
                        s,
                        Kind::QlistSet,
                        eta,
                        vec![
                            p("x", x),
                            p("members", join(&members)),
                            p("k", &k),
                            p("kprime", join(&kps)),
                            p("lens", join(lens.iter().map(|(n, l)| format!("{n}@{l}")))),
                            p("beta", &beta),
                        ],
                    );
                    let inits_at_set = members.iter().map(|&m| (m, self.inits.get(&m).copied().unwrap_or(0))).collect();
                    let since = self.trace.events.len();
                    self.eta
                        .entry(eta)
                        .or_default()
                        .qlists
                        .insert(x, Qlist { members, k, inits_at_set, since });
                }
                Some(q) => {
                    let window = &self.trace.events[q.since..];
                    let mut removed = Vec::new();
                    for &m in &q.members {
                        let inits = self.inits.get(&m).copied().unwrap_or(0) - q.inits_at_set[&m];
                        let clause = if BigUint::from(inits) > q.k {
                            Some(1)
                        } else if window.iter().any(|ev| {
                            ev.kind == Kind::Want && ev.subject.parse::<Node>().is_ok_and(|w| w.is_proper_prefix_of(m))
                        }) {
                            Some(2)
                        } else if window.iter().any(|ev| {
                            ev.kind == Kind::Init
                                && ev.subject.parse::<Node>().is_ok_and(|r| {
                                    self.layout.req(r.len()) == Req::P && r.is_proper_prefix_of(m)
                                })
                        }) {
                            Some(3)
                        } else if window.iter().any(|ev| {
                            ev.kind == Kind::Visit && ev.subject.parse::<Node>().is_ok_and(|d| left_of(d, m))
                        }) {
                            Some(4)
                        } else {
                            None
                        };
                        if let Some(c) = clause {
                            removed.push((m, c));
                        }
                    }
                    for (m, c) in removed {
                        self.emit(s, Kind::QlistRemove, eta, vec![p("x", x), p("member", m), p("clause", c)]);
                        self.eta.get_mut(&eta).unwrap().qlists.get_mut(&x).unwrap().members.remove(&m);
                    }
                    let since = self.trace.events.len();
                    self.eta.get_mut(&eta).unwrap().qlists.get_mut(&x).unwrap().since = since;
                }
            }
        }
    }

    fn repair(&mut self, s: u64) {
        let broken: Vec<Node> = self
            .xi
            .iter()
            .filter(|(_, st)| st.follower.is_some() && st.use_.is_some() && !st.live)
            .map(|(n, _)| *n)
            .collect();
        for xi in broken {
            self.declare_delta(s, xi, "repair", false);
        }
    }

    fn summary_nodes(&self) -> BTreeMap<String, NodeSummary> {
        let mut out = BTreeMap::new();
        for (n, st) in &self.rho {
            if st.follower.is_some() || st.use_.is_some() {
                out.insert(n.to_string(), NodeSummary { follower: st.follower, use_: st.use_ });
            }
        }
        for (n, st) in &self.xi {
            if st.follower.is_some() || st.use_.is_some() {
                out.insert(n.to_string(), NodeSummary { follower: st.follower, use_: st.use_ });
            }
        }
        out
    }
}

impl Strategies for State {
    fn alphabet(&self, level: usize) -> &'static [Outcome] {
        self.layout.alphabet(level)
    }

    fn outcome(&mut self, n: Node, s: u64) -> Outcome {
        match self.layout.req(n.len()) {
            Req::N => self.eta_visit(n, s),
            Req::P => self.rho_visit(n, s),
            Req::Q => self.xi_visit(n, s),
        }
    }

    fn initialize(&mut self, n: Node, s: u64) {
        self.emit(s, Kind::Init, n, vec![]);
        *self.inits.entry(n).or_default() += 1;
        match self.layout.req(n.len()) {
            Req::N => {
                if let Some(st) = self.eta.get_mut(&n) {
                    st.qlists.clear();
                }
            }
            Req::P => {
                if let Some(st) = self.rho.get_mut(&n) {
                    st.follower = None;
                    st.use_ = None;
                    st.gamma_live = false;
                }
            }
            Req::Q => {
                self.xi.remove(&n);
            }
        }
    }

    fn after_step(&mut self, n: Node, s: u64) {
        let parent = n.parent().expect("extended node has a parent");
        match (self.layout.req(parent.len()), n.last()) {
            (Req::P, Some(Outcome::Fin)) => self.rho_fin(parent, s),
            (Req::N, Some(Outcome::Inf)) if self.layout == Layout::Alpha => self.qlist_step(parent, s),
            _ => {}
        }
    }
}

fn validate(setup: &TreeSetup) -> Result<(), ConfigError> {
    for len in 0..setup.levels {
        let i = setup.layout.index(len);
        match setup.layout.req(len) {
            Req::N if !setup.functionals.iter().any(|f| f.e == i as u64) => {
                return Err(ConfigError::Missing { what: "functional", index: i })
            }
            Req::P if setup.psi.len() <= i => return Err(ConfigError::Missing { what: "psi adversary", index: i }),
            Req::Q if setup.fca.len() <= i => return Err(ConfigError::Missing { what: "f adversary", index: i }),
            _ => {}
        }
    }
    if setup.layout == Layout::Alpha {
        let alpha = setup.alpha.clone().unwrap_or_else(CnfOrdinal::omega);
        let gs: Vec<CnfOrdinal> = setup.fca.iter().map(|a| a.bound.clone()).collect();
        check_alpha(&alpha, &gs)?;
    }
    Ok(())
}

/// Runs stages `1..=stages` and returns the trace.
pub fn run(setup: TreeSetup) -> Result<RunTrace, ConfigError> {
    validate(&setup)?;
    let mut fun = FunctionalRuntime::new(setup.functionals.iter().cloned());
    for (e, args) in &setup.restrict {
        fun.restrict(*e, args.clone());
    }
    let n_p = (0..setup.levels).filter(|&l| setup.layout.req(l) == Req::P).count();
    let mut psi = setup.psi.clone();
    let mut fca = setup.fca.clone();
    for a in &mut psi {
        a.set_run_seed(setup.seed);
    }
    for a in &mut fca {
        a.set_run_seed(setup.seed);
    }
    let mut st = State {
        layout: setup.layout,
        trace: RunTrace::new(),
        a: EnumerableSet::new(),
        large: Large::default(),
        fun,
        psi,
        fca,
        rho: BTreeMap::new(),
        xi: BTreeMap::new(),
        eta: BTreeMap::new(),
        acted: BTreeMap::new(),
        inits: BTreeMap::new(),
        psi_args: vec![0; n_p.max(setup.psi.len())],
        next_delta: 0,
        l_now: BTreeMap::new(),
        want_now: BTreeMap::new(),
        xi_want_now: BTreeSet::new(),
    };
    let construction = match setup.layout {
        Layout::Low2 => "nonlow-low2",
        Layout::Alpha => "nonlow-alpha",
    };
    st.trace.set_meta("construction", construction);
    st.trace.set_meta("stages", setup.stages);
    st.trace.set_meta("seed", setup.seed);
    st.trace.set_meta("levels", setup.levels);
    if setup.layout == Layout::Alpha {
        st.trace.set_meta("alpha", setup.alpha.clone().unwrap_or_else(CnfOrdinal::omega));
        st.trace.set_meta("g", join(setup.fca.iter().map(|a| a.bound.clone())));
    }
    let mut engine = TreeEngine::new();
    for s in 1..=setup.stages {
        st.l_now.clear();
        st.want_now.clear();
        st.xi_want_now.clear();
        for c in st.fun.begin_stage(s, &st.a, &mut st.large) {
            st.emit(
                s,
                Kind::InjectConverge,
                format!("{}:{}", c.e, c.x),
                vec![p("fun", c.e), p("arg", c.x), p("use", c.use_), p("value", c.value)],
            );
        }
        let depth = (s as usize).min(setup.levels);
        let delta = engine.run_stage(s, depth, &mut st)?;
        let req = st.layout.req(delta.len()).letter();
        st.emit(s, Kind::Visit, delta, vec![p("req", req), p("end", 1)]);

        let mut theta = Vec::new();
        for r in delta.proper_prefixes() {
            match st.layout.req(r.len()) {
                Req::P if delta.get(r.len()) == Outcome::Inf => match st.want_now.get(&r) {
                    Some(Want::Enumerate) => theta.push(r),
                    Some(Want::Pick) if st.pick_allowed(r, s) => theta.push(r),
                    _ => {}
                },
                Req::Q if st.xi_want_now.contains(&r) => theta.push(r),
                _ => {}
            }
        }
        if let Some(actor) = engine.select(&theta) {
            let asked = join(st.inf_etas(actor));
            if st.layout.req(actor.len()) == Req::Q {
                st.emit(s, Kind::Select, actor, vec![p("action", "act"), p("asked", asked)]);
                let use_ = st.xi[&actor].use_.expect("wanting node has a use");
                match st.xi_refusal(actor, use_, s) {
                    None => {
                        st.enumerate(s, actor, use_);
                        let u = st.large.fresh();
                        st.xi.get_mut(&actor).unwrap().use_ = Some(u);
                        st.declare_delta(s, actor, "act", true);
                    }
                    Some((eta, x)) => {
                        st.emit(s, Kind::Deny, actor, vec![p("by", format!("{eta}:{x}"))]);
                        engine.initialize(s, actor, &mut st);
                        engine.revive(actor);
                        st.new_xi_follower(s, actor);
                        st.declare_delta(s, actor, "init", true);
                    }
                }
                let layout = st.layout;
                engine.initialize_where(s, &mut st, |d| {
                    (actor.is_proper_prefix_of(d) && layout.req(d.len()) == Req::Q) || left_of(actor, d)
                });
            } else {
                let want = st.want_now[&actor];
                match want {
                    Want::Pick => {
                        st.emit(s, Kind::Select, actor, vec![p("action", "pick"), p("asked", asked)]);
                        let u = st.large.fresh();
                        st.rho.get_mut(&actor).unwrap().use_ = Some(u);
                        *st.acted.entry(actor).or_default() += 1;
                        st.declare_gamma(s, actor, "pick");
                    }
                    Want::Enumerate => {
                        st.emit(s, Kind::Select, actor, vec![p("action", "enumerate"), p("asked", asked)]);
                        let use_ = st.rho[&actor].use_.expect("wanting node has a use");
                        match st.enumerate_refusal(actor, use_, s) {
                            None => {
                                st.enumerate(s, actor, use_);
                                let rs = st.rho.get_mut(&actor).unwrap();
                                rs.use_ = None;
                                rs.gamma_live = false;
                                *st.acted.entry(actor).or_default() += 1;
                            }
                            Some((eta, x)) => {
                                st.emit(s, Kind::Deny, actor, vec![p("by", format!("{eta}:{x}"))]);
                                engine.initialize_where(s, &mut st, |d| actor.is_prefix_of(d) || left_of(actor, d));
                            }
                        }
                    }
                }
            }
        }
        st.repair(s);
    }
    st.trace.summary.a = st.a.elements().collect();
    st.trace.summary.nodes = st.summary_nodes();
    Ok(st.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{FcaMode, PsiMode};
    use crate::functional::{ArgSchedule, UsePolicy};
    use crate::trace::reduce;

    fn fun_all(e: u64, delay: u64, policy: UsePolicy) -> FunctionalSpec {
        let mut f = FunctionalSpec::new(e);
        f.family = Some((ArgSchedule { first: Some(1), delay, policy, initial_use: None }, 1));
        f
    }

    fn low2(levels: usize, stages: u64, psi: Vec<DeltaTwoAdversary>) -> TreeSetup {
        TreeSetup {
            layout: Layout::Low2,
            levels,
            stages,
            seed: 1,
            alpha: None,
            psi,
            fca: vec![],
            functionals: vec![fun_all(0, 0, UsePolicy::FreshLarge), fun_all(1, 0, UsePolicy::FreshLarge)],
            restrict: [(0, (0..6).collect()), (1, (0..6).collect())].into_iter().collect(),
        }
    }

    fn scripted_psi(value: u8) -> DeltaTwoAdversary {
        let mut a = DeltaTwoAdversary::new("p", PsiMode::Scripted);
        a.script_point(None, 0, value);
        a
    }

    #[test]
    fn zero_stages_is_empty() {
        let t = run(low2(2, 0, vec![scripted_psi(0)])).unwrap();
        assert!(t.events.is_empty());
        assert!(t.summary.a.is_empty());
    }

    #[test]
    fn constant_zero_psi_declares_once() {
        let mut setup = low2(2, 10, vec![scripted_psi(0)]);
        setup.functionals = vec![FunctionalSpec::new(0)];
        let t = run(setup).unwrap();
        let decl: Vec<_> = t.of_kind(Kind::Declare).collect();
        assert_eq!(decl.len(), 1);
        assert_eq!(t.of_kind(Kind::Enumerate).count(), 0);
        assert_eq!(reduce(&t.events), t.summary);
    }

    #[test]
    fn flipping_psi_enumerations_follow_declarations_and_flips() {
        let setup = low2(2, 50, vec![DeltaTwoAdversary::new("p", PsiMode::Alternating { period: 1 })]);
        let t = run(setup).unwrap();
        assert!(t.of_kind(Kind::Enumerate).count() > 0);
        let mut psi_prev: BTreeMap<String, Option<String>> = BTreeMap::new();
        let mut declared: BTreeSet<(String, u64)> = BTreeSet::new();
        let mut flipped_since_declare: BTreeMap<String, bool> = BTreeMap::new();
        for e in &t.events {
            match e.kind {
                Kind::Visit if e.get("req") == Some("P") && e.get("psi").is_some() => {
                    let v = e.get("psi").map(str::to_string);
                    let prev = psi_prev.insert(e.subject.clone(), v.clone());
                    if prev.flatten() != v {
                        flipped_since_declare.insert(e.subject.clone(), true);
                    }
                }
                Kind::Declare => {
                    declared.insert((e.subject.clone(), e.num("use").unwrap()));
                    flipped_since_declare.insert(e.subject.clone(), false);
                }
                Kind::Enumerate => {
                    assert!(declared.contains(&(e.subject.clone(), e.num("elem").unwrap())));
                    assert_eq!(flipped_since_declare.get(&e.subject), Some(&true));
                }
                Kind::Init => {
                    psi_prev.remove(&e.subject);
                }
                _ => {}
            }
        }
        assert_eq!(reduce(&t.events), t.summary);
        t.check_well_formed().unwrap();
    }

    #[test]
    fn missing_adversary_is_a_config_error() {
        let err = run(low2(2, 5, vec![])).unwrap_err();
        assert_eq!(err, ConfigError::Missing { what: "psi adversary", index: 0 });
    }

    #[test]
    fn eta_correctness_examples() {
        let mut st = State {
            layout: Layout::Low2,
            trace: RunTrace::new(),
            a: EnumerableSet::new(),
            large: Large::default(),
            fun: FunctionalRuntime::new([]),
            psi: vec![],
            fca: vec![],
            rho: BTreeMap::new(),
            xi: BTreeMap::new(),
            eta: BTreeMap::new(),
            acted: BTreeMap::new(),
            inits: BTreeMap::new(),
            psi_args: vec![],
            next_delta: 0,
            l_now: BTreeMap::new(),
            want_now: BTreeMap::new(),
            xi_want_now: BTreeSet::new(),
        };
        let obs: Node = "fi".parse().unwrap();
        assert!(st.correct("f".parse().unwrap(), 9));
        let rho: Node = "f".parse().unwrap();
        // ρ = ⟨fin⟩ at length 1 sits below `fi` through ∞: relevant
        st.rho.insert(rho, RhoState { use_: Some(5), ..Default::default() });
        let obs2: Node = "fi".parse().unwrap();
        assert!(!st.correct("fii".parse().unwrap(), 9));
        st.rho.get_mut(&rho).unwrap().use_ = Some(20);
        assert!(st.correct("fii".parse().unwrap(), 9));
        // through fin the use is not consulted
        st.rho.get_mut(&rho).unwrap().use_ = Some(5);
        assert!(st.correct("ff".parse().unwrap(), 9));
        assert!(st.correct(obs, 9) == st.correct(obs2, 9));
    }

    #[test]
    fn alpha_single_q_frozen_f_mirrors_finite_injury() {
        let mut f = FunctionalSpec::new(0);
        f.per_arg.insert(0, ArgSchedule { first: Some(1), delay: 0, policy: UsePolicy::FreshLarge, initial_use: None });
        let setup = TreeSetup {
            layout: Layout::Alpha,
            levels: 3,
            stages: 30,
            seed: 1,
            alpha: Some("w^2".parse().unwrap()),
            psi: vec![scripted_psi(1)],
            fca: vec![BoundedCaAdversary::new("f", "w".parse().unwrap(), FcaMode::Scripted)],
            functionals: vec![f],
            restrict: BTreeMap::new(),
        };
        let t = run(setup).unwrap();
        assert_eq!(t.of_kind(Kind::Enumerate).count(), 0);
        assert_eq!(t.of_kind(Kind::Want).count(), 0);
        assert!(t.of_kind(Kind::Declare).any(|e| e.get("fn") == Some("delta")));
        assert_eq!(reduce(&t.events), t.summary);
    }

    #[test]
    fn alpha_rejects_non_power_alpha() {
        let setup = TreeSetup {
            layout: Layout::Alpha,
            levels: 3,
            stages: 3,
            seed: 1,
            alpha: Some("w*2".parse().unwrap()),
            psi: vec![scripted_psi(1)],
            fca: vec![BoundedCaAdversary::new("f", "w".parse().unwrap(), FcaMode::Scripted)],
            functionals: vec![FunctionalSpec::new(0)],
            restrict: BTreeMap::new(),
        };
        assert!(matches!(run(setup), Err(ConfigError::AlphaNotPower(_))));
    }
}
