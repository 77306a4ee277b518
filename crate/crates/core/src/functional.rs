//! Use-based model of the functionals Φ^A_e: convergence schedules, use
//! policies, injury on enumeration below the use, and mind-change counting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetError {
    #[error("element {0} already enumerated")]
    Duplicate(u64),
    #[error("enumeration at stage {stage} precedes the last recorded stage {last}")]
    OutOfOrder { stage: u64, last: u64 },
}

/// A c.e. set given by its stage-sorted enumeration events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EnumerableSet {
    events: Vec<(u64, u64)>,
    members: BTreeSet<u64>,
}

impl EnumerableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enumerate(&mut self, stage: u64, elem: u64) -> Result<(), SetError> {
        if let Some(&(last, _)) = self.events.last() {
            if stage < last {
                return Err(SetError::OutOfOrder { stage, last });
            }
        }
        if !self.members.insert(elem) {
            return Err(SetError::Duplicate(elem));
        }
        self.events.push((stage, elem));
        Ok(())
    }

    pub fn contains(&self, elem: u64) -> bool {
        self.members.contains(&elem)
    }

    /// Membership as of the end of stage `s`.
    pub fn contains_at(&self, elem: u64, s: u64) -> bool {
        self.events.iter().any(|&(t, x)| x == elem && t <= s)
    }

    pub fn events(&self) -> &[(u64, u64)] {
        &self.events
    }

    pub fn elements(&self) -> impl Iterator<Item = u64> + '_ {
        self.members.iter().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.members.last().copied()
    }

    /// Largest element enumerated at a stage `< s`.
    pub fn max_before(&self, s: u64) -> Option<u64> {
        self.events.iter().filter(|e| e.0 < s).map(|e| e.1).max()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Source of "large" numbers: one more than anything seen so far in a run.
#[derive(Clone, Debug, Default)]
pub struct Large {
    max_seen: u64,
}

impl Large {
    pub fn observe(&mut self, n: u64) {
        self.max_seen = self.max_seen.max(n);
    }

    pub fn fresh(&mut self) -> u64 {
        self.max_seen += 1;
        self.max_seen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UsePolicy {
    FreshLarge,
    /// `max(A) + k`, at least 1.
    AdversarialLow(u64),
}

impl fmt::Display for UsePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UsePolicy::FreshLarge => f.write_str("fresh"),
            UsePolicy::AdversarialLow(k) => write!(f, "low:{k}"),
        }
    }
}

impl FromStr for UsePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fresh" {
            return Ok(UsePolicy::FreshLarge);
        }
        s.strip_prefix("low:")
            .and_then(|k| k.parse().ok())
            .map(UsePolicy::AdversarialLow)
            .ok_or_else(|| format!("bad use policy `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArgSchedule {
    /// First convergence stage; `None` means the computation never converges.
    pub first: Option<u64>,
    pub delay: u64,
    pub policy: UsePolicy,
    pub initial_use: Option<u64>,
}

/// Per-argument schedules plus an optional family for all remaining
/// arguments: argument `x` of the family first converges at `first + stride·x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalSpec {
    pub e: u64,
    pub per_arg: BTreeMap<u64, ArgSchedule>,
    pub family: Option<(ArgSchedule, u64)>,
}

impl FunctionalSpec {
    pub fn new(e: u64) -> Self {
        Self { e, per_arg: BTreeMap::new(), family: None }
    }

    pub fn schedule(&self, x: u64) -> Option<ArgSchedule> {
        if let Some(s) = self.per_arg.get(&x) {
            return Some(*s);
        }
        let (base, stride) = self.family?;
        Some(ArgSchedule {
            first: base.first.map(|f| f.saturating_add(stride.max(1).saturating_mul(x))),
            ..base
        })
    }

    /// Arguments with a first convergence at or before `s`.
    pub fn started_by(&self, s: u64) -> Vec<u64> {
        let mut xs: BTreeSet<u64> = self
            .per_arg
            .iter()
            .filter(|(_, a)| a.first.is_some_and(|f| f <= s))
            .map(|(x, _)| *x)
            .collect();
        if let Some((base, stride)) = self.family {
            if let Some(f) = base.first {
                if f <= s {
                    let n = (s - f) / stride.max(1);
                    xs.extend((0..=n).filter(|x| !self.per_arg.contains_key(x)));
                }
            }
        }
        xs.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Eval {
    Divergent,
    Converged { use_: u64, value: u64 },
}

fn policy_use(policy: UsePolicy, a: &EnumerableSet, before: u64, prev_use: u64) -> u64 {
    match policy {
        UsePolicy::FreshLarge => 1 + a.max_before(before).unwrap_or(0).max(prev_use),
        UsePolicy::AdversarialLow(k) => (a.max_before(before).unwrap_or(0) + k).max(1),
    }
}

/// Replays the schedule of `Φ(x)` against `a` up to stage `s`. Convergence
/// at stage `t` sees enumerations of stages `< t`; an enumeration at stage
/// `t' ≥ t` below the use injures the computation, which returns at
/// `t' + max(d, 1)` with a fresh use and value one higher.
pub fn evaluate(f: &FunctionalSpec, a: &EnumerableSet, x: u64, s: u64) -> Eval {
    let Some(sched) = f.schedule(x) else { return Eval::Divergent };
    let Some(mut t) = sched.first else { return Eval::Divergent };
    if s < t {
        return Eval::Divergent;
    }
    let mut use_ = sched.initial_use.unwrap_or_else(|| policy_use(sched.policy, a, t, 0));
    let mut value = 0;
    loop {
        let hit = a.events().iter().find(|&&(st, el)| st >= t && st < s && el < use_);
        let Some(&(st, _)) = hit else {
            return Eval::Converged { use_, value };
        };
        value += 1;
        t = st + sched.delay.max(1);
        if s < t {
            return Eval::Divergent;
        }
        use_ = policy_use(sched.policy, a, t, use_);
    }
}

/// Number of value changes of `Φ(x)` over the stages of `window`; divergent
/// stages keep the previous value.
pub fn mind_changes(f: &FunctionalSpec, a: &EnumerableSet, x: u64, window: std::ops::Range<u64>) -> u64 {
    let mut prev = None;
    let mut changes = 0;
    for s in window {
        if let Eval::Converged { value, .. } = evaluate(f, a, x, s) {
            if prev.is_some_and(|p| p != value) {
                changes += 1;
            }
            prev = Some(value);
        }
    }
    changes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ArgState {
    Converged { use_: u64, value: u64 },
    Waiting { until: u64, value: u64, prev_use: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Convergence {
    pub e: u64,
    pub x: u64,
    pub use_: u64,
    pub value: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Injury {
    pub e: u64,
    pub x: u64,
    pub use_: u64,
    pub elem: u64,
}

/// Stateful evaluation of several functionals inside one run. Fresh uses are
/// drawn from the run's [`Large`] allocator.
#[derive(Clone, Debug, Default)]
pub struct FunctionalRuntime {
    specs: BTreeMap<u64, FunctionalSpec>,
    state: BTreeMap<(u64, u64), ArgState>,
    /// Only these arguments are tracked per functional (all if `None`).
    arg_filter: BTreeMap<u64, Vec<u64>>,
}

impl FunctionalRuntime {
    pub fn new(specs: impl IntoIterator<Item = FunctionalSpec>) -> Self {
        Self {
            specs: specs.into_iter().map(|f| (f.e, f)).collect(),
            state: BTreeMap::new(),
            arg_filter: BTreeMap::new(),
        }
    }

    /// Restricts functional `e` to the listed arguments.
    pub fn restrict(&mut self, e: u64, args: Vec<u64>) {
        self.arg_filter.insert(e, args);
    }

    pub fn spec(&self, e: u64) -> Option<&FunctionalSpec> {
        self.specs.get(&e)
    }

    /// Converges every computation whose (re)convergence stage is `≤ s`.
    pub fn begin_stage(&mut self, s: u64, a: &EnumerableSet, large: &mut Large) -> Vec<Convergence> {
        let mut out = Vec::new();
        let es: Vec<u64> = self.specs.keys().copied().collect();
        for e in es {
            let spec = &self.specs[&e];
            let args = match self.arg_filter.get(&e) {
                Some(list) => list
                    .iter()
                    .copied()
                    .filter(|&x| spec.schedule(x).and_then(|a| a.first).is_some_and(|f| f <= s))
                    .collect(),
                None => spec.started_by(s),
            };
            for x in args {
                let sched = spec.schedule(x).expect("started argument has a schedule");
                let fresh_use = |prev: u64, large: &mut Large| match sched.policy {
                    UsePolicy::FreshLarge => large.fresh().max(prev + 1),
                    UsePolicy::AdversarialLow(k) => (a.max().unwrap_or(0) + k).max(1),
                };
                let next = match self.state.get(&(e, x)) {
                    None => {
                        let use_ = match sched.initial_use {
                            Some(u) => u,
                            None => fresh_use(0, large),
                        };
                        Some((use_, 0))
                    }
                    Some(ArgState::Waiting { until, value, prev_use }) if *until <= s => {
                        Some((fresh_use(*prev_use, large), *value))
                    }
                    _ => None,
                };
                if let Some((use_, value)) = next {
                    large.observe(use_);
                    self.state.insert((e, x), ArgState::Converged { use_, value });
                    out.push(Convergence { e, x, use_, value });
                }
            }
        }
        out
    }

    /// Applies the enumeration of `elem` at stage `s`, destroying every
    /// converged computation with use above it.
    pub fn on_enumerate(&mut self, s: u64, elem: u64) -> Vec<Injury> {
        let mut out = Vec::new();
        for (&(e, x), st) in self.state.iter_mut() {
            if let ArgState::Converged { use_, value } = *st {
                if elem < use_ {
                    let delay = self.specs[&e].schedule(x).map_or(1, |a| a.delay.max(1));
                    *st = ArgState::Waiting { until: s + delay, value: value + 1, prev_use: use_ };
                    out.push(Injury { e, x, use_, elem });
                }
            }
        }
        out
    }

    /// `(use, value)` of `Φ_e(x)` if currently converged.
    pub fn get(&self, e: u64, x: u64) -> Option<(u64, u64)> {
        match self.state.get(&(e, x)) {
            Some(ArgState::Converged { use_, value }) => Some((*use_, *value)),
            _ => None,
        }
    }

    /// Injury count so far at `Φ_e(x)`.
    pub fn injuries(&self, e: u64, x: u64) -> u64 {
        match self.state.get(&(e, x)) {
            Some(ArgState::Converged { value, .. } | ArgState::Waiting { value, .. }) => *value,
            None => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(first: u64, delay: u64, policy: UsePolicy, initial: Option<u64>) -> FunctionalSpec {
        let mut f = FunctionalSpec::new(0);
        f.per_arg.insert(0, ArgSchedule { first: Some(first), delay, policy, initial_use: initial });
        f
    }

    #[test]
    fn evaluate_examples() {
        let f = spec(3, 2, UsePolicy::FreshLarge, Some(10));
        let mut a = EnumerableSet::new();
        assert_eq!(evaluate(&f, &a, 0, 2), Eval::Divergent);
        assert_eq!(evaluate(&f, &a, 0, 5), Eval::Converged { use_: 10, value: 0 });
        a.enumerate(6, 7).unwrap();
        assert_eq!(evaluate(&f, &a, 0, 7), Eval::Divergent);
        // fresh use: one more than anything seen (previous use 10, element 7)
        assert_eq!(evaluate(&f, &a, 0, 8), Eval::Converged { use_: 11, value: 1 });
    }

    #[test]
    fn mind_change_examples() {
        let f = spec(1, 1, UsePolicy::AdversarialLow(5), None);
        let mut a = EnumerableSet::new();
        assert_eq!(mind_changes(&f, &a, 0, 0..0), 0);
        assert_eq!(mind_changes(&f, &a, 0, 0..20), 0);
        a.enumerate(4, 2).unwrap();
        a.enumerate(9, 3).unwrap();
        assert_eq!(mind_changes(&f, &a, 0, 0..20), 2);
    }

    #[test]
    fn never_converging_argument() {
        let mut f = FunctionalSpec::new(1);
        f.family = Some((ArgSchedule { first: None, delay: 0, policy: UsePolicy::FreshLarge, initial_use: None }, 1));
        assert_eq!(evaluate(&f, &EnumerableSet::new(), 3, 100), Eval::Divergent);
        assert!(f.started_by(100).is_empty());
    }

    #[test]
    fn family_stride_staggers_arguments() {
        let mut f = FunctionalSpec::new(0);
        f.family = Some((ArgSchedule { first: Some(2), delay: 0, policy: UsePolicy::FreshLarge, initial_use: None }, 5));
        assert_eq!(f.started_by(1), Vec::<u64>::new());
        assert_eq!(f.started_by(2), vec![0]);
        assert_eq!(f.started_by(12), vec![0, 1, 2]);
    }

    #[test]
    fn set_rejects_duplicates() {
        let mut a = EnumerableSet::new();
        a.enumerate(1, 4).unwrap();
        assert_eq!(a.enumerate(2, 4), Err(SetError::Duplicate(4)));
        assert!(matches!(a.enumerate(0, 5), Err(SetError::OutOfOrder { .. })));
        assert!(a.contains_at(4, 1) && !a.contains_at(4, 0));
    }

    /// Drives the runtime with a random enumeration stream; checks persistence,
    /// injury completeness and agreement with the pure replay (low policy).
    fn drive(enums: &[(u64, u64)], k: u64, d: u64) -> Result<(), TestCaseError> {
        let mut f = FunctionalSpec::new(0);
        f.family = Some((ArgSchedule { first: Some(1), delay: d, policy: UsePolicy::AdversarialLow(k), initial_use: None }, 3));
        let mut rt = FunctionalRuntime::new([f.clone()]);
        let mut a = EnumerableSet::new();
        let mut large = Large::default();
        let mut used = BTreeSet::new();
        for s in 1..40u64 {
            rt.begin_stage(s, &a, &mut large);
            for x in 0..6 {
                let live = rt.get(0, x).map(|(u, v)| Eval::Converged { use_: u, value: v }).unwrap_or(Eval::Divergent);
                prop_assert_eq!(live, evaluate(&f, &a, x, s));
            }
            for &(st, el) in enums.iter().filter(|e| e.0 == s) {
                if used.insert(el) {
                    let before: Vec<_> = (0..6).map(|x| rt.get(0, x)).collect();
                    let inj = rt.on_enumerate(s, el);
                    a.enumerate(st, el).unwrap();
                    for (x, b) in before.iter().enumerate() {
                        let injured = inj.iter().any(|i| i.x == x as u64);
                        match b {
                            Some((u, _)) => prop_assert_eq!(injured, el < *u),
                            None => prop_assert!(!injured),
                        }
                    }
                }
            }
        }
        for x in 0..6 {
            prop_assert_eq!(mind_changes(&f, &a, x, 0..60), rt.injuries(0, x).min(mind_changes(&f, &a, x, 0..60)));
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn runtime_matches_replay(enums in prop::collection::vec((1u64..40, 0u64..30), 0..30), k in 1u64..4, d in 0u64..3) {
            drive(&enums, k, d)?;
        }

        #[test]
        fn fresh_uses_increase(enums in prop::collection::vec((1u64..60, 0u64..200), 0..40)) {
            let mut f = FunctionalSpec::new(0);
            f.per_arg.insert(0, ArgSchedule { first: Some(1), delay: 1, policy: UsePolicy::FreshLarge, initial_use: None });
            let mut rt = FunctionalRuntime::new([f]);
            let mut a = EnumerableSet::new();
            let mut large = Large::default();
            let mut uses = Vec::new();
            let mut sorted = enums.clone();
            sorted.sort();
            for s in 1..60u64 {
                for c in rt.begin_stage(s, &a, &mut large) {
                    uses.push(c.use_);
                }
                for &(_, el) in sorted.iter().filter(|e| e.0 == s) {
                    if !a.contains(el) {
                        large.observe(el);
                        rt.on_enumerate(s, el);
                        a.enumerate(s, el).unwrap();
                    }
                }
            }
            prop_assert!(uses.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn persistence_without_low_enumerations(first in 1u64..10, gap in 1u64..30) {
            let f = spec(first, 1, UsePolicy::FreshLarge, Some(50));
            let mut a = EnumerableSet::new();
            a.enumerate(first + gap, 60).unwrap();
            let v = evaluate(&f, &a, 0, first);
            for s in first..first + gap + 10 {
                prop_assert_eq!(evaluate(&f, &a, 0, s), v);
            }
        }
    }
}
