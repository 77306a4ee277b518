//! The finite-injury `low-alpha` construction: Q-requirements diagonalize a
//! Δ functional against bounded-change opponents, N-requirements bound the
//! mind changes of `Φ_e(e)` by an ordinal `φ(e) < α`.

use std::collections::{BTreeMap, BTreeSet};

use crate::approx::BoundedCaAdversary;
use crate::bounds::phi;
use crate::functional::{EnumerableSet, FunctionalRuntime, FunctionalSpec, Large};
use crate::ordinal::CnfOrdinal;
use crate::trace::{join, Kind, NodeSummary, RunTrace};
use crate::tree_construction::{check_alpha, p, ConfigError};

#[derive(Clone, Debug)]
pub struct LowAlphaSetup {
    /// Number of N/Q index pairs.
    pub levels: usize,
    pub stages: u64,
    pub seed: u64,
    pub alpha: CnfOrdinal,
    pub fca: Vec<BoundedCaAdversary>,
    pub functionals: Vec<FunctionalSpec>,
}

pub fn q_name(e: usize) -> String {
    format!("Q{e}")
}

pub fn n_name(e: usize) -> String {
    format!("N{e}")
}

#[derive(Clone, Debug, Default)]
struct QState {
    follower: Option<u64>,
    use_: Option<u64>,
    value: u8,
    marker: CnfOrdinal,
    live: bool,
}

#[derive(Clone, Debug)]
struct NState {
    s0: u64,
    k: u64,
    qlist: BTreeSet<usize>,
    inits_at_set: BTreeMap<usize, u64>,
}

struct State {
    trace: RunTrace,
    a: EnumerableSet,
    large: Large,
    fun: FunctionalRuntime,
    fca: Vec<BoundedCaAdversary>,
    q: Vec<QState>,
    n: Vec<Option<NState>>,
    inits: Vec<u64>,
    /// Stages at which each Q wanted to act.
    wanted: Vec<Vec<u64>>,
    next_delta: u64,
}

impl State {
    fn declare(&mut self, s: u64, e: usize, src: &str, fresh: bool) {
        let z = self.q[e].follower.expect("follower");
        if fresh {
            let f = self.fca[e].value(z, s);
            self.q[e].value = 1 - f;
            self.q[e].marker = self.fca[e].marker(z, s);
        }
        let st = &mut self.q[e];
        st.live = true;
        let fields = vec![
            p("fn", "delta"),
            p("arg", z),
            p("use", st.use_.expect("use")),
            p("value", st.value),
            p("src", src),
            p("marker", &st.marker),
        ];
        self.trace.push(s, Kind::Declare, q_name(e), fields);
    }

    fn new_follower(&mut self, s: u64, e: usize) {
        let z = self.next_delta;
        self.next_delta += 1;
        let u = self.large.fresh();
        self.q[e].follower = Some(z);
        self.q[e].use_ = Some(u);
        self.trace.push(s, Kind::Follower, q_name(e), vec![p("y", z)]);
    }

    fn initialize(&mut self, s: u64, e: usize) {
        if self.q[e].follower.is_some() {
            self.trace.push(s, Kind::Init, q_name(e), vec![]);
            self.inits[e] += 1;
            self.q[e] = QState::default();
        }
    }

    fn enumerate(&mut self, s: u64, e: usize, elem: u64) {
        self.trace.push(s, Kind::Enumerate, q_name(e), vec![p("elem", elem)]);
        self.a.enumerate(s, elem).expect("enumerated uses are fresh");
        for inj in self.fun.on_enumerate(s, elem) {
            self.trace.push(
                s,
                Kind::InjectDiverge,
                format!("{}:{}", inj.e, inj.x),
                vec![p("fun", inj.e), p("arg", inj.x), p("use", inj.use_), p("by", q_name(e)), p("elem", elem)],
            );
        }
        for st in &mut self.q {
            if st.use_.is_some_and(|u| u > elem) {
                st.live = false;
            }
        }
    }

    fn play_n(&mut self, s: u64, e: usize) {
        match &self.n[e] {
            None => {
                if self.fun.get(e as u64, e as u64).is_none() {
                    return;
                }
                let k = self.n.iter().filter(|x| x.is_some()).count() as u64 + 1;
                let qlist: BTreeSet<usize> = (0..self.q.len()).filter(|&i| self.q[i].follower.is_some()).collect();
                let gs: Vec<CnfOrdinal> = qlist.iter().map(|&i| self.fca[i].bound.clone()).collect();
                let value = phi(&gs, k);
                self.trace.push(
                    s,
                    Kind::PhiSet,
                    n_name(e),
                    vec![
                        p("e", e),
                        p("k", k),
                        p("members", join(qlist.iter().map(|&i| q_name(i)))),
                        p("value", value),
                    ],
                );
                let inits_at_set = qlist.iter().map(|&i| (i, self.inits[i])).collect();
                self.n[e] = Some(NState { s0: s, k, qlist, inits_at_set });
            }
            Some(ns) => {
                let mut removed = Vec::new();
                for &qi in &ns.qlist {
                    let clause = if (0..qi).any(|j| self.wanted[j].iter().any(|&t| t >= ns.s0)) {
                        Some(2)
                    } else if self.inits[qi] - ns.inits_at_set[&qi] > ns.k {
                        Some(1)
                    } else {
                        None
                    };
                    if let Some(c) = clause {
                        removed.push((qi, c));
                    }
                }
                for (qi, c) in removed {
                    self.trace.push(s, Kind::QlistRemove, n_name(e), vec![p("member", q_name(qi)), p("clause", c)]);
                    self.n[e].as_mut().unwrap().qlist.remove(&qi);
                }
            }
        }
    }

    /// First active N refusing `Q_e`'s action.
    fn refusal(&self, e: usize) -> Option<usize> {
        let use_ = self.q[e].use_.expect("acting node has a use");
        self.n.iter().enumerate().find_map(|(i, ns)| {
            let ns = ns.as_ref()?;
            let ok = ns.qlist.contains(&e)
                || match self.fun.get(i as u64, i as u64) {
                    None => true,
                    Some((u, _)) => use_ > u,
                };
            (!ok).then_some(i)
        })
    }

    /// Returns false when the remaining Q steps are skipped.
    fn play_q(&mut self, s: u64, e: usize) -> bool {
        if self.q[e].follower.is_none() {
            self.new_follower(s, e);
            self.declare(s, e, "follow", true);
            return false;
        }
        let z = self.q[e].follower.unwrap();
        if self.fca[e].value(z, s) != self.q[e].value {
            return true;
        }
        self.wanted[e].push(s);
        self.trace.push(s, Kind::Want, q_name(e), vec![p("arg", z)]);
        let asked = join(self.n.iter().enumerate().filter(|x| x.1.is_some()).map(|x| n_name(x.0)));
        self.trace.push(s, Kind::Select, q_name(e), vec![p("action", "act"), p("asked", asked)]);
        match self.refusal(e) {
            None => {
                let u = self.q[e].use_.unwrap();
                self.enumerate(s, e, u);
                self.q[e].use_ = Some(self.large.fresh());
                self.declare(s, e, "act", true);
            }
            Some(i) => {
                self.trace.push(s, Kind::Deny, q_name(e), vec![p("by", n_name(i))]);
                self.initialize(s, e);
                self.new_follower(s, e);
                self.declare(s, e, "init", true);
            }
        }
        for j in e + 1..self.q.len() {
            self.initialize(s, j);
        }
        false
    }

    fn repair(&mut self, s: u64) {
        for e in 0..self.q.len() {
            let st = &self.q[e];
            if st.follower.is_some() && st.use_.is_some() && !st.live {
                self.declare(s, e, "repair", false);
            }
        }
    }
}

pub fn run(setup: LowAlphaSetup) -> Result<RunTrace, ConfigError> {
    if setup.fca.len() < setup.levels {
        return Err(ConfigError::Missing { what: "f adversary", index: setup.fca.len() });
    }
    for e in 0..setup.levels {
        if !setup.functionals.iter().any(|f| f.e == e as u64) {
            return Err(ConfigError::Missing { what: "functional", index: e });
        }
    }
    let gs: Vec<CnfOrdinal> = setup.fca.iter().map(|a| a.bound.clone()).collect();
    check_alpha(&setup.alpha, &gs)?;

    let mut fun = FunctionalRuntime::new(setup.functionals.iter().cloned());
    for f in &setup.functionals {
        fun.restrict(f.e, vec![f.e]);
    }
    let mut fca: Vec<BoundedCaAdversary> = setup.fca[..setup.levels].to_vec();
    for a in &mut fca {
        a.set_run_seed(setup.seed);
    }
    let mut st = State {
        trace: RunTrace::new(),
        a: EnumerableSet::new(),
        large: Large::default(),
        fun,
        fca,
        q: vec![QState::default(); setup.levels],
        n: vec![None; setup.levels],
        inits: vec![0; setup.levels],
        wanted: vec![Vec::new(); setup.levels],
        next_delta: 0,
    };
    st.trace.set_meta("construction", "low-alpha");
    st.trace.set_meta("stages", setup.stages);
    st.trace.set_meta("seed", setup.seed);
    st.trace.set_meta("levels", setup.levels);
    st.trace.set_meta("alpha", &setup.alpha);
    st.trace.set_meta("g", join(gs[..setup.levels].iter()));
    for s in 1..=setup.stages {
        for c in st.fun.begin_stage(s, &st.a, &mut st.large) {
            st.trace.push(
                s,
                Kind::InjectConverge,
                format!("{}:{}", c.e, c.x),
                vec![p("fun", c.e), p("arg", c.x), p("use", c.use_), p("value", c.value)],
            );
        }
        let horizon = ((s + 1) as usize).min(setup.levels);
        for e in 0..horizon {
            st.play_n(s, e);
        }
        for e in 0..horizon {
            if !st.play_q(s, e) {
                break;
            }
        }
        st.repair(s);
    }
    st.trace.summary.a = st.a.elements().collect();
    st.trace.summary.nodes = st
        .q
        .iter()
        .enumerate()
        .filter(|(_, q)| q.follower.is_some() || q.use_.is_some())
        .map(|(e, q)| (q_name(e), NodeSummary { follower: q.follower, use_: q.use_ }))
        .collect();
    Ok(st.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::FcaMode;
    use crate::functional::{ArgSchedule, UsePolicy};
    use crate::trace::reduce;

    fn o(s: &str) -> CnfOrdinal {
        s.parse().unwrap()
    }

    fn fun(e: u64, first: Option<u64>, policy: UsePolicy) -> FunctionalSpec {
        let mut f = FunctionalSpec::new(e);
        f.per_arg.insert(e, ArgSchedule { first, delay: 0, policy, initial_use: None });
        f
    }

    fn setup(levels: usize, stages: u64, fca: Vec<BoundedCaAdversary>, fs: Vec<FunctionalSpec>) -> LowAlphaSetup {
        LowAlphaSetup { levels, stages, seed: 3, alpha: o("w^2"), fca, functionals: fs }
    }

    #[test]
    fn zero_stages_is_empty() {
        let f = BoundedCaAdversary::new("f", o("w"), FcaMode::Scripted);
        let t = run(setup(1, 0, vec![f], vec![fun(0, Some(1), UsePolicy::FreshLarge)])).unwrap();
        assert!(t.summary.a.is_empty());
        assert!(t.events.is_empty());
    }

    #[test]
    fn constant_f_declares_once_and_never_acts() {
        let f = BoundedCaAdversary::new("f", o("w"), FcaMode::Scripted);
        let t = run(setup(1, 20, vec![f], vec![fun(0, None, UsePolicy::FreshLarge)])).unwrap();
        assert_eq!(t.of_kind(Kind::Declare).count(), 1);
        assert_eq!(t.of_kind(Kind::Enumerate).count(), 0);
        assert_eq!(t.of_kind(Kind::Want).count(), 0);
        assert_eq!(reduce(&t.events), t.summary);
    }

    #[test]
    fn three_changes_give_three_enumerations() {
        let mut f = BoundedCaAdversary::new("f", o("w"), FcaMode::Scripted);
        f.script_point(0, 0, 0, o("3"));
        f.script_point(0, 4, 1, o("2"));
        f.script_point(0, 8, 0, o("1"));
        f.script_point(0, 12, 1, o("0"));
        let t = run(setup(1, 30, vec![f.clone()], vec![fun(0, Some(1), UsePolicy::FreshLarge)])).unwrap();
        assert_eq!(t.of_kind(Kind::Enumerate).count(), 3, "{t}");
        let last = t.of_kind(Kind::Declare).last().unwrap();
        assert_ne!(last.num("value").unwrap(), f.clone().value(0, 30) as u64);
        assert_eq!(reduce(&t.events), t.summary);
        t.check_well_formed().unwrap();
        // activated before Q has a follower: empty list, φ = 0
        assert_eq!(t.of_kind(Kind::PhiSet).next().unwrap().get("value"), Some("0"));
        let t = run(setup(1, 30, vec![f], vec![fun(0, Some(2), UsePolicy::FreshLarge)])).unwrap();
        assert_eq!(t.of_kind(Kind::PhiSet).next().unwrap().get("value"), Some("w*2"));
    }

    #[test]
    fn missing_adversary_is_a_config_error() {
        let err = run(setup(2, 5, vec![BoundedCaAdversary::new("f", o("w"), FcaMode::Scripted)], vec![])).unwrap_err();
        assert_eq!(err, ConfigError::Missing { what: "f adversary", index: 1 });
    }
}
