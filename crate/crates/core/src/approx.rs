//! Computable approximations with ordinal mind-change markers, and the
//! opponents (ψ schedules and bounded c.a. functions) the constructions face.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ordinal::CnfOrdinal;
use crate::rng::{id_code, stream};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub stage: u64,
    pub value: u64,
    pub marker: CnfOrdinal,
}

/// Per-argument record lists. A record holds from its stage until the next
/// record of the same argument.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApproxTrace {
    args: BTreeMap<u64, Vec<Record>>,
    horizon: Option<u64>,
}

impl ApproxTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_horizon(horizon: u64) -> Self {
        Self { args: BTreeMap::new(), horizon: Some(horizon) }
    }

    pub fn push(&mut self, arg: u64, stage: u64, value: u64, marker: CnfOrdinal) {
        self.args.entry(arg).or_default().push(Record { stage, value, marker });
    }

    pub fn set_horizon(&mut self, horizon: u64) {
        self.horizon = Some(horizon);
    }

    /// Last stage covered by the recording window, if one was recorded.
    pub fn horizon(&self) -> Option<u64> {
        self.horizon
    }

    pub fn args(&self) -> impl Iterator<Item = (u64, &[Record])> {
        self.args.iter().map(|(a, r)| (*a, r.as_slice()))
    }

    pub fn records(&self, arg: u64) -> &[Record] {
        self.args.get(&arg).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.args.values().all(Vec::is_empty)
    }

    pub fn value_at(&self, arg: u64, stage: u64) -> Option<u64> {
        let recs = self.records(arg);
        let idx = recs.partition_point(|r| r.stage <= stage);
        (idx > 0).then(|| recs[idx - 1].value)
    }

    /// `⟨x, s⟩` pairs with `a_s(x) ≠ a_{s+1}(x)`: for each change between two
    /// consecutive records, the stage just before the new value appears.
    pub fn change_points(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for (&x, recs) in &self.args {
            for w in recs.windows(2) {
                if w[0].value != w[1].value {
                    out.push((x, w[1].stage.saturating_sub(1).max(w[0].stage)));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationReason {
    Unsorted,
    MarkerIncreased,
    NoStrictDescent,
    MarkerNotBelowBound,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReason::Unsorted => "unsorted",
            ViolationReason::MarkerIncreased => "marker-increase",
            ViolationReason::NoStrictDescent => "strict-descent",
            ViolationReason::MarkerNotBelowBound => "bound",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Violation { stage: u64, arg: u64, reason: ViolationReason },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

/// Checks both approximation conditions and that every marker lies below
/// `bound`. Among all violations the one at the earliest stage (then smallest
/// argument) is reported.
pub fn verify_r_approximation(trace: &ApproxTrace, bound: &CnfOrdinal) -> Verdict {
    let mut first: Option<(u64, u64, ViolationReason)> = None;
    for (&arg, recs) in &trace.args {
        let found = first_violation(recs, bound);
        if let Some((stage, reason)) = found {
            if first.as_ref().is_none_or(|(s, a, _)| (stage, arg) < (*s, *a)) {
                first = Some((stage, arg, reason));
            }
        }
    }
    match first {
        None => Verdict::Valid,
        Some((stage, arg, reason)) => Verdict::Violation { stage, arg, reason },
    }
}

fn first_violation(recs: &[Record], bound: &CnfOrdinal) -> Option<(u64, ViolationReason)> {
    for (i, r) in recs.iter().enumerate() {
        if r.marker >= *bound {
            return Some((r.stage, ViolationReason::MarkerNotBelowBound));
        }
        if i == 0 {
            continue;
        }
        let p = &recs[i - 1];
        if r.stage < p.stage {
            return Some((r.stage, ViolationReason::Unsorted));
        }
        if r.marker > p.marker {
            return Some((r.stage, ViolationReason::MarkerIncreased));
        }
        if r.value != p.value && r.marker >= p.marker {
            return Some((r.stage, ViolationReason::NoStrictDescent));
        }
    }
    None
}

/// Uniform-ish random ordinal strictly below `a` (`a > 0`). Keeps a random
/// prefix of `a`'s terms and replaces the next term by a smaller one.
pub fn random_below(rng: &mut ChaCha8Rng, a: &CnfOrdinal) -> CnfOrdinal {
    assert!(!a.is_zero(), "no ordinal below 0");
    let terms = a.terms();
    let i = rng.gen_range(0..terms.len());
    let mut out = CnfOrdinal::zero();
    for t in &terms[..i] {
        out = out.add(&CnfOrdinal::monomial(t.exponent.clone(), t.coefficient.clone()));
    }
    let t = &terms[i];
    let same_exp_ok = t.coefficient > 1u32.into();
    let choice = rng.gen_range(0..3u8);
    let tail = if choice == 0 && same_exp_ok {
        let c: u64 = rng.gen_range(1..t.coefficient.clone().try_into().unwrap_or(u64::MAX).min(1 << 20));
        CnfOrdinal::monomial(t.exponent.clone(), c)
    } else if choice <= 1 && !t.exponent.is_zero() {
        let e = random_below(rng, &t.exponent);
        CnfOrdinal::monomial(e, rng.gen_range(1..=4u64))
    } else if t.exponent.is_zero() {
        let c: u64 = t.coefficient.clone().try_into().unwrap_or(u64::MAX).min(1 << 20);
        CnfOrdinal::nat(rng.gen_range(0..c))
    } else {
        CnfOrdinal::zero()
    };
    out.add(&tail)
}

/// Random ordinal `≤ a`.
pub fn random_at_most(rng: &mut ChaCha8Rng, a: &CnfOrdinal) -> CnfOrdinal {
    if a.is_zero() || rng.gen_bool(0.5) {
        a.clone()
    } else {
        random_below(rng, a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PsiMode {
    /// Values come from the script only.
    Scripted,
    /// Flips every `period` stages, forever.
    Alternating { period: u64 },
    /// Flips every stage before `at`, constant `value` from `at` on.
    Stabilizing { value: u8, at: u64 },
    /// Random start value, flips with probability `flip` at each stage before
    /// `stabilize`, constant afterwards.
    Random { seed: u64, flip: f64, stabilize: u64 },
}

/// A Δ⁰₂ opponent ψ: a 0/1 schedule per argument. Arguments are follower
/// indices of the level the adversary is attached to.
#[derive(Clone, Debug)]
pub struct DeltaTwoAdversary {
    pub id: String,
    pub mode: PsiMode,
    /// `None` key is the `*` wildcard.
    pub script: BTreeMap<Option<u64>, Vec<(u64, u8)>>,
    run_seed: u64,
    cache: BTreeMap<u64, (u8, Vec<u64>)>,
}

impl DeltaTwoAdversary {
    pub fn new(id: impl Into<String>, mode: PsiMode) -> Self {
        Self { id: id.into(), mode, script: BTreeMap::new(), run_seed: 0, cache: BTreeMap::new() }
    }

    pub fn script_point(&mut self, arg: Option<u64>, stage: u64, value: u8) {
        let pts = self.script.entry(arg).or_default();
        pts.push((stage, value));
        pts.sort_by_key(|p| p.0);
    }

    pub fn set_run_seed(&mut self, seed: u64) {
        self.run_seed = seed;
        self.cache.clear();
    }

    fn random_schedule(&mut self, arg: u64) -> &(u8, Vec<u64>) {
        let PsiMode::Random { seed, flip, stabilize } = self.mode else {
            unreachable!("random schedule requested in a non-random mode")
        };
        let run_seed = self.run_seed;
        let id = id_code(&self.id);
        self.cache.entry(arg).or_insert_with(|| {
            let mut rng = stream(&[run_seed, seed, id, arg]);
            let start = rng.gen_range(0..2u8);
            let flips = (1..stabilize).filter(|_| rng.gen_bool(flip)).collect();
            (start, flips)
        })
    }

    pub fn value(&mut self, arg: u64, stage: u64) -> u8 {
        match self.mode.clone() {
            PsiMode::Scripted => {
                let pts = self.script.get(&Some(arg)).or_else(|| self.script.get(&None));
                pts.and_then(|p| {
                    let i = p.partition_point(|q| q.0 <= stage);
                    (i > 0).then(|| p[i - 1].1)
                })
                .unwrap_or(0)
            }
            PsiMode::Alternating { period } => ((stage / period.max(1)) % 2) as u8,
            PsiMode::Stabilizing { value, at } => {
                if stage >= at {
                    value
                } else {
                    (stage % 2) as u8
                }
            }
            PsiMode::Random { .. } => {
                let (start, flips) = self.random_schedule(arg);
                let n = flips.partition_point(|&f| f <= stage);
                start ^ (n % 2) as u8
            }
        }
    }

    /// Last stage `≤ horizon` at which the value at `arg` changed; `None` if
    /// it is constant on `[0, horizon]`, `Some(u64::MAX)` if it never settles.
    pub fn last_change(&mut self, arg: u64, horizon: u64) -> Option<u64> {
        match self.mode.clone() {
            PsiMode::Alternating { .. } => Some(u64::MAX),
            _ => {
                let mut prev = self.value(arg, 0);
                let mut last = None;
                for s in self.change_candidates(arg, horizon) {
                    let v = self.value(arg, s);
                    if v != prev {
                        last = Some(s);
                        prev = v;
                    }
                }
                last
            }
        }
    }

    fn change_candidates(&mut self, arg: u64, horizon: u64) -> Vec<u64> {
        match self.mode {
            PsiMode::Random { .. } => {
                self.random_schedule(arg).1.iter().copied().filter(|&s| s <= horizon).collect()
            }
            PsiMode::Stabilizing { at, .. } => (1..=at.min(horizon)).collect(),
            _ => {
                let pts = self.script.get(&Some(arg)).or_else(|| self.script.get(&None));
                pts.map(|p| p.iter().map(|q| q.0).filter(|&s| s <= horizon).collect())
                    .unwrap_or_default()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum FcaMode {
    Scripted,
    /// Random descending marker schedules; value changes happen with
    /// probability `change` per stage before `stabilize`.
    Random { seed: u64, change: f64, stabilize: u64 },
}

/// A g-computably-approximable opponent `f` with its marker schedule. Values
/// are binary; an argument whose marker reached 0 is frozen.
#[derive(Clone, Debug)]
pub struct BoundedCaAdversary {
    pub id: String,
    pub bound: CnfOrdinal,
    pub mode: FcaMode,
    /// Scripted `(stage, value, marker)` points per argument.
    pub script: BTreeMap<u64, Vec<Record>>,
    run_seed: u64,
    cache: BTreeMap<u64, Vec<Record>>,
}

impl BoundedCaAdversary {
    pub fn new(id: impl Into<String>, bound: CnfOrdinal, mode: FcaMode) -> Self {
        Self {
            id: id.into(),
            bound,
            mode,
            script: BTreeMap::new(),
            run_seed: 0,
            cache: BTreeMap::new(),
        }
    }

    pub fn script_point(&mut self, arg: u64, stage: u64, value: u8, marker: CnfOrdinal) {
        let recs = self.script.entry(arg).or_default();
        recs.push(Record { stage, value: value as u64, marker });
        recs.sort_by_key(|r| r.stage);
    }

    pub fn set_run_seed(&mut self, seed: u64) {
        self.run_seed = seed;
        self.cache.clear();
    }

    /// The full record schedule at `arg`. Unscripted arguments default to a
    /// single record `(0, 0, bound)`.
    pub fn schedule(&mut self, arg: u64) -> &[Record] {
        if !self.cache.contains_key(&arg) {
            let recs = match self.mode {
                FcaMode::Random { seed, change, stabilize } => {
                    let mut rng = stream(&[self.run_seed, seed, id_code(&self.id), arg, 0xfca]);
                    let mut marker = random_at_most(&mut rng, &self.bound);
                    let mut value = rng.gen_range(0..2u64);
                    let mut recs = vec![Record { stage: 0, value, marker: marker.clone() }];
                    for s in 1..stabilize {
                        if marker.is_zero() {
                            break;
                        }
                        if rng.gen_bool(change) {
                            marker = random_below(&mut rng, &marker);
                            value ^= 1;
                            recs.push(Record { stage: s, value, marker: marker.clone() });
                        }
                    }
                    recs
                }
                FcaMode::Scripted => self.script.get(&arg).cloned().unwrap_or_else(|| {
                    vec![Record { stage: 0, value: 0, marker: self.bound.clone() }]
                }),
            };
            self.cache.insert(arg, recs);
        }
        &self.cache[&arg]
    }

    fn record_at(&mut self, arg: u64, stage: u64) -> Record {
        let recs = self.schedule(arg);
        let i = recs.partition_point(|r| r.stage <= stage);
        if i == 0 {
            Record { stage: 0, value: 0, marker: recs.first().map(|r| r.marker.clone()).unwrap_or_default() }
        } else {
            recs[i - 1].clone()
        }
    }

    pub fn value(&mut self, arg: u64, stage: u64) -> u8 {
        self.record_at(arg, stage).value as u8
    }

    pub fn marker(&mut self, arg: u64, stage: u64) -> CnfOrdinal {
        self.record_at(arg, stage).marker
    }

    /// Number of value changes at `arg` in the stage interval `[from, to]`.
    pub fn changes_between(&mut self, arg: u64, from: u64, to: u64) -> u64 {
        let recs = self.schedule(arg).to_vec();
        recs.windows(2)
            .filter(|w| w[0].value != w[1].value && w[1].stage >= from && w[1].stage <= to)
            .count() as u64
    }

    /// The approximation this adversary induces on arguments `0..args`.
    pub fn trace(&mut self, args: u64) -> ApproxTrace {
        let mut t = ApproxTrace::new();
        for x in 0..args {
            for r in self.schedule(x).to_vec() {
                t.push(x, r.stage, r.value, r.marker);
            }
        }
        t
    }
}

#[derive(Clone, Debug)]
pub enum Adversary {
    Psi(DeltaTwoAdversary),
    Fca(BoundedCaAdversary),
}

impl Adversary {
    pub fn id(&self) -> &str {
        match self {
            Adversary::Psi(a) => &a.id,
            Adversary::Fca(a) => &a.id,
        }
    }

    pub fn set_run_seed(&mut self, seed: u64) {
        match self {
            Adversary::Psi(a) => a.set_run_seed(seed),
            Adversary::Fca(a) => a.set_run_seed(seed),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SuiteMix {
    AllStabilizing,
    Bounded(CnfOrdinal),
    Mixed,
}

/// A deterministic list of opponents. Stabilizing ψ schedules settle before
/// stage 200; bounded ones draw their markers strictly descending below `g`.
pub fn make_adversary_suite(seed: u64, count: usize, mix: &SuiteMix) -> Vec<Adversary> {
    assert!(count >= 1, "suite needs at least one adversary");
    let mut rng = stream(&[seed, 0x5717e]);
    (0..count)
        .map(|i| {
            let id = format!("a{i}");
            let adv_seed: u64 = rng.gen();
            let psi = |rng: &mut ChaCha8Rng| {
                let mode = PsiMode::Random { seed: adv_seed, flip: 0.2, stabilize: rng.gen_range(10..200) };
                let mut a = DeltaTwoAdversary::new(id.clone(), mode);
                a.set_run_seed(seed);
                Adversary::Psi(a)
            };
            let fca = |rng: &mut ChaCha8Rng, g: CnfOrdinal| {
                let mode = FcaMode::Random { seed: adv_seed, change: 0.1, stabilize: rng.gen_range(10..500) };
                let mut a = BoundedCaAdversary::new(id.clone(), g, mode);
                a.set_run_seed(seed);
                Adversary::Fca(a)
            };
            match mix {
                SuiteMix::AllStabilizing => psi(&mut rng),
                SuiteMix::Bounded(g) => fca(&mut rng, g.clone()),
                SuiteMix::Mixed => {
                    if rng.gen_bool(0.5) {
                        psi(&mut rng)
                    } else {
                        let g = if rng.gen_bool(0.5) { CnfOrdinal::nat(rng.gen_range(1..6u32)) } else { CnfOrdinal::omega() };
                        fca(&mut rng, g)
                    }
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn o(s: &str) -> CnfOrdinal {
        s.parse().unwrap()
    }

    /// Pairwise scan: every later record is compared with every earlier one.
    fn brute_valid(recs: &[(u64, CnfOrdinal)], bound: &CnfOrdinal) -> bool {
        for (i, (v, m)) in recs.iter().enumerate() {
            if m >= bound {
                return false;
            }
            for (_, pm) in &recs[..i] {
                if m > pm {
                    return false;
                }
            }
            if i > 0 && *v != recs[i - 1].0 && *m >= recs[i - 1].1 {
                return false;
            }
        }
        true
    }

    #[test]
    fn verify_examples() {
        let mut t = ApproxTrace::new();
        for s in 0..5 {
            t.push(0, s, 0, o("w"));
        }
        assert_eq!(verify_r_approximation(&t, &o("w+1")), Verdict::Valid);

        let mut t = ApproxTrace::new();
        t.push(0, 0, 0, o("w"));
        t.push(0, 1, 1, o("w"));
        assert_eq!(
            verify_r_approximation(&t, &o("w+1")),
            Verdict::Violation { stage: 1, arg: 0, reason: ViolationReason::NoStrictDescent }
        );
        assert!(verify_r_approximation(&ApproxTrace::new(), &CnfOrdinal::zero()).is_valid());
    }

    #[test]
    fn violation_reports_earliest_stage() {
        let mut t = ApproxTrace::new();
        t.push(0, 0, 0, o("3"));
        t.push(0, 5, 1, o("3"));
        t.push(1, 0, 0, o("2"));
        t.push(1, 2, 0, o("4"));
        let v = verify_r_approximation(&t, &o("w"));
        assert_eq!(v, Verdict::Violation { stage: 2, arg: 1, reason: ViolationReason::MarkerIncreased });
    }

    #[test]
    fn suite_examples() {
        let s = make_adversary_suite(7, 1, &SuiteMix::AllStabilizing);
        let Adversary::Psi(mut a) = s[0].clone() else { panic!() };
        let last = a.last_change(0, 10_000).unwrap_or(0);
        assert!(last < 200);
        let v = a.value(0, last);
        assert!((last..1000).all(|t| a.value(0, t) == v));

        let a = make_adversary_suite(7, 3, &SuiteMix::Mixed);
        let b = make_adversary_suite(7, 3, &SuiteMix::Mixed);
        for (x, y) in a.into_iter().zip(b) {
            match (x, y) {
                (Adversary::Psi(mut x), Adversary::Psi(mut y)) => {
                    assert!((0..300).all(|s| x.value(1, s) == y.value(1, s)))
                }
                (Adversary::Fca(mut x), Adversary::Fca(mut y)) => assert_eq!(x.trace(4), y.trace(4)),
                _ => panic!("suites differ"),
            }
        }

        for adv in make_adversary_suite(9, 2, &SuiteMix::Bounded(o("w*2"))) {
            let Adversary::Fca(mut a) = adv else { panic!() };
            assert!(verify_r_approximation(&a.trace(20), &o("w*2+1")).is_valid());
        }
    }

    #[test]
    fn alternating_and_stabilizing_modes() {
        let mut a = DeltaTwoAdversary::new("p", PsiMode::Alternating { period: 3 });
        let flips = (1..30).filter(|&s| a.value(0, s) != a.value(0, s - 1)).count();
        assert_eq!(flips, 9);
        let mut b = DeltaTwoAdversary::new("q", PsiMode::Stabilizing { value: 1, at: 40 });
        assert!((40..400).all(|s| b.value(3, s) == 1));
        assert!(b.last_change(3, 1000).unwrap() <= 40);
    }

    #[test]
    fn scripted_psi_uses_wildcard_fallback() {
        let mut a = DeltaTwoAdversary::new("s", PsiMode::Scripted);
        a.script_point(None, 4, 1);
        a.script_point(Some(2), 1, 1);
        a.script_point(Some(2), 6, 0);
        assert_eq!(a.value(0, 3), 0);
        assert_eq!(a.value(0, 4), 1);
        assert_eq!(a.value(2, 5), 1);
        assert_eq!(a.value(2, 6), 0);
        assert_eq!(a.last_change(2, 100), Some(6));
    }

    #[test]
    fn frozen_at_zero_marker() {
        for seed in 0..50 {
            let mut a = BoundedCaAdversary::new(
                "f",
                o("3"),
                FcaMode::Random { seed, change: 0.5, stabilize: 1000 },
            );
            let recs = a.schedule(0).to_vec();
            if let Some(i) = recs.iter().position(|r| r.marker.is_zero()) {
                assert_eq!(i, recs.len() - 1);
            }
            assert!(recs.len() <= 4);
        }
    }

    fn arb_small_trace() -> impl Strategy<Value = Vec<(u64, u64)>> {
        prop::collection::vec((0u64..2, 0u64..6), 0..50)
    }

    proptest! {
        #[test]
        fn verifier_matches_pairwise_scan(recs in arb_small_trace(), b in 1u64..8) {
            let bound = CnfOrdinal::nat(b);
            let mut t = ApproxTrace::new();
            for (s, (v, m)) in recs.iter().enumerate() {
                t.push(0, s as u64, *v, CnfOrdinal::nat(*m));
            }
            let pairs: Vec<_> = recs.iter().map(|(v, m)| (*v, CnfOrdinal::nat(*m))).collect();
            prop_assert_eq!(verify_r_approximation(&t, &bound).is_valid(), brute_valid(&pairs, &bound));
        }

        #[test]
        fn generated_bounded_adversaries_verify(seed in 0u64..1000) {
            let g = if seed % 3 == 0 { o("w^2+w*3") } else if seed % 3 == 1 { o("w*2") } else { o("7") };
            for adv in make_adversary_suite(seed, 2, &SuiteMix::Bounded(g.clone())) {
                let Adversary::Fca(mut a) = adv else { unreachable!() };
                let bound = g.add(&CnfOrdinal::one());
                prop_assert!(verify_r_approximation(&a.trace(6), &bound).is_valid());
            }
        }

        #[test]
        fn random_below_is_below(seed in 0u64..500) {
            let mut rng = stream(&[seed]);
            for a in ["1", "w", "w^2*3+w+5", "w^(w+1)*2+7", "w^w"] {
                let a = o(a);
                let b = random_below(&mut rng, &a);
                prop_assert!(b < a);
                prop_assert!(b.validate().is_ok());
            }
        }

        #[test]
        fn stabilizing_random_psi_settles(seed in 0u64..300, arg in 0u64..5) {
            let mut a = DeltaTwoAdversary::new("r", PsiMode::Random { seed, flip: 0.3, stabilize: 100 });
            a.set_run_seed(seed);
            let v = a.value(arg, 100);
            prop_assert!((100..400).all(|s| a.value(arg, s) == v));
            if let Some(last) = a.last_change(arg, 1000) {
                prop_assert!(last < 100);
            }
        }
    }
}
