//! Tree-of-strategies machinery: nodes over an ordered outcome alphabet,
//! left-of, stage paths with rightward initialization, fair actor selection
//! and true-path estimation on a finite run.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Outcomes in priority order: `Inf < Fin`. `Q` is the single outcome of
/// finite-injury levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Inf = 0,
    Fin = 1,
    Q = 2,
}

impl Outcome {
    fn code(self) -> u64 {
        self as u64
    }

    fn from_code(c: u64) -> Outcome {
        match c {
            0 => Outcome::Inf,
            1 => Outcome::Fin,
            _ => Outcome::Q,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Inf => 'i',
            Outcome::Fin => 'f',
            Outcome::Q => 'q',
        }
    }
}

pub const MAX_DEPTH: usize = 32;

/// A finite outcome sequence, packed two bits per position.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Node {
    len: u8,
    code: u64,
}

impl Node {
    pub const ROOT: Node = Node { len: 0, code: 0 };

    pub fn from_outcomes(os: &[Outcome]) -> Node {
        assert!(os.len() <= MAX_DEPTH, "node deeper than {MAX_DEPTH}");
        os.iter().fold(Node::ROOT, |n, &o| n.child(o))
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_root(self) -> bool {
        self.len == 0
    }

    pub fn get(self, i: usize) -> Outcome {
        debug_assert!(i < self.len());
        Outcome::from_code((self.code >> (2 * i)) & 3)
    }

    pub fn child(self, o: Outcome) -> Node {
        assert!(self.len() < MAX_DEPTH, "node deeper than {MAX_DEPTH}");
        Node { len: self.len + 1, code: self.code | (o.code() << (2 * self.len())) }
    }

    pub fn prefix(self, n: usize) -> Node {
        let n = n.min(self.len());
        let mask = if n == 32 { u64::MAX } else { (1u64 << (2 * n)) - 1 };
        Node { len: n as u8, code: self.code & mask }
    }

    pub fn parent(self) -> Option<Node> {
        (self.len > 0).then(|| self.prefix(self.len() - 1))
    }

    pub fn last(self) -> Option<Outcome> {
        (self.len > 0).then(|| self.get(self.len() - 1))
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(self, other: Node) -> bool {
        self.len <= other.len && other.prefix(self.len()) == self
    }

    /// `self ≺ other`.
    pub fn is_proper_prefix_of(self, other: Node) -> bool {
        self.len < other.len && self.is_prefix_of(other)
    }

    pub fn outcomes(self) -> impl Iterator<Item = Outcome> {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Proper prefixes, shortest first.
    pub fn proper_prefixes(self) -> impl Iterator<Item = Node> {
        (0..self.len()).map(move |i| self.prefix(i))
    }
}

/// True iff some common prefix continues with a smaller outcome in `a` than in `b`.
pub fn left_of(a: Node, b: Node) -> bool {
    let n = a.len().min(b.len());
    for i in 0..n {
        let (x, y) = (a.get(i), b.get(i));
        if x != y {
            return x < y;
        }
    }
    false
}

impl Ord for Node {
    /// Tree order: left-of first, prefixes before extensions.
    fn cmp(&self, other: &Self) -> Ordering {
        for i in 0..self.len().min(other.len()) {
            let c = self.get(i).cmp(&other.get(i));
            if c != Ordering::Equal {
                return c;
            }
        }
        self.len.cmp(&other.len)
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("-");
        }
        for o in self.outcomes() {
            write!(f, "{}", o.symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Node({self})")
    }
}

impl FromStr for Node {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "-" {
            return Ok(Node::ROOT);
        }
        if s.len() > MAX_DEPTH {
            return Err(format!("node `{s}` too deep"));
        }
        let os: Result<Vec<Outcome>, String> = s
            .chars()
            .map(|c| match c {
                'i' => Ok(Outcome::Inf),
                'f' => Ok(Outcome::Fin),
                'q' => Ok(Outcome::Q),
                _ => Err(format!("bad outcome `{c}` in node `{s}`")),
            })
            .collect();
        Ok(Node::from_outcomes(&os?))
    }
}

/// Cantor pairing `⟨a, b⟩ = (a+b)(a+b+1)/2 + b`.
pub fn pair_code(a: u64, b: u64) -> u128 {
    let (a, b) = (a as u128, b as u128);
    (a + b) * (a + b + 1) / 2 + b
}

/// Argmin over `theta` of `⟨birth, times selected⟩`.
pub fn select_actor(
    theta: &[Node],
    birth: impl Fn(Node) -> u64,
    selected: impl Fn(Node) -> u64,
) -> Option<Node> {
    theta.iter().copied().min_by_key(|&n| (pair_code(birth(n), selected(n)), n))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("stage {stage}: outcome {outcome:?} not allowed at node {node}")]
    BadOutcome { stage: u64, node: Node, outcome: Outcome },
}

/// Callbacks of the construction hosted on the tree.
pub trait Strategies {
    /// Outcome alphabet at the given level.
    fn alphabet(&self, level: usize) -> &'static [Outcome];
    /// Processes node `n` on the current path and returns its outcome.
    fn outcome(&mut self, n: Node, s: u64) -> Outcome;
    /// Delivered to a live node that has been initialized.
    fn initialize(&mut self, n: Node, s: u64);
    /// Runs after the path has been extended to `n` and right-of nodes initialized.
    fn after_step(&mut self, _n: Node, _s: u64) {}
}

/// Stage paths and initialization events of a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathLog {
    pub paths: Vec<(u64, Node)>,
    pub inits: Vec<(u64, Node)>,
}

impl PathLog {
    pub fn path_at(&self, s: u64) -> Option<Node> {
        self.paths.binary_search_by_key(&s, |p| p.0).ok().map(|i| self.paths[i].1)
    }

    pub fn last_init(&self, n: Node) -> Option<u64> {
        self.inits.iter().rev().find(|i| i.1 == n).map(|i| i.0)
    }
}

/// Longest node reached by greedily taking the leftmost child that is on the
/// stage path at least twice within the last quarter of the run, each time
/// after its last initialization.
pub fn true_path_estimate(log: &PathLog) -> Node {
    let Some(&(last, _)) = log.paths.last() else { return Node::ROOT };
    let first = log.paths.first().map_or(0, |p| p.0);
    let start = last - (last - first) / 4;
    let window: Vec<(u64, Node)> = log.paths.iter().copied().filter(|p| p.0 >= start).collect();
    let mut last_init: BTreeMap<Node, u64> = BTreeMap::new();
    for &(s, n) in &log.inits {
        last_init.insert(n, s);
    }
    let mut cur = Node::ROOT;
    loop {
        let mut counts: BTreeMap<Node, u32> = BTreeMap::new();
        for &(s, d) in &window {
            if d.len() > cur.len() && cur.is_prefix_of(d) {
                let c = d.prefix(cur.len() + 1);
                if last_init.get(&c).is_none_or(|&t| s > t) {
                    *counts.entry(c).or_default() += 1;
                }
            }
        }
        match counts.into_iter().filter(|(_, k)| *k >= 2).map(|(c, _)| c).min() {
            Some(c) => cur = c,
            None => return cur,
        }
    }
}

/// Birth indices, live set, selection counts and the path log.
#[derive(Clone, Debug, Default)]
pub struct TreeEngine {
    birth: BTreeMap<Node, u64>,
    live: BTreeSet<Node>,
    selections: BTreeMap<Node, u64>,
    pub log: PathLog,
}

impl TreeEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn birth(&self, n: Node) -> Option<u64> {
        self.birth.get(&n).copied()
    }

    pub fn times_selected(&self, n: Node) -> u64 {
        self.selections.get(&n).copied().unwrap_or(0)
    }

    pub fn is_live(&self, n: Node) -> bool {
        self.live.contains(&n)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.live.iter().copied()
    }

    /// Marks `n` as holding state again (e.g. a fresh follower right after
    /// initialization).
    pub fn revive(&mut self, n: Node) {
        self.touch(n);
    }

    fn touch(&mut self, n: Node) {
        let next = self.birth.len() as u64;
        self.birth.entry(n).or_insert(next);
        self.live.insert(n);
    }

    /// Builds `δ_s` of length `depth`, initializing live nodes to the right of
    /// every new prefix.
    pub fn run_stage<H: Strategies>(&mut self, s: u64, depth: usize, host: &mut H) -> Result<Node, TreeError> {
        let mut cur = Node::ROOT;
        for level in 0..depth {
            self.touch(cur);
            let o = host.outcome(cur, s);
            if !host.alphabet(level).contains(&o) {
                return Err(TreeError::BadOutcome { stage: s, node: cur, outcome: o });
            }
            cur = cur.child(o);
            let right: Vec<Node> = self.live.iter().copied().filter(|&n| left_of(cur, n)).collect();
            for n in right {
                self.initialize(s, n, host);
            }
            host.after_step(cur, s);
        }
        self.log.paths.push((s, cur));
        Ok(cur)
    }

    /// Initializes `n` if it is live.
    pub fn initialize<H: Strategies>(&mut self, s: u64, n: Node, host: &mut H) {
        if self.live.remove(&n) {
            self.log.inits.push((s, n));
            host.initialize(n, s);
        }
    }

    /// Initializes every live node satisfying `pred`, in tree order.
    pub fn initialize_where<H: Strategies>(&mut self, s: u64, host: &mut H, pred: impl Fn(Node) -> bool) {
        let hit: Vec<Node> = self.live.iter().copied().filter(|&n| pred(n)).collect();
        for n in hit {
            self.initialize(s, n, host);
        }
    }

    /// Fair selection from `theta`; bumps the winner's selection count.
    pub fn select(&mut self, theta: &[Node]) -> Option<Node> {
        let pick = select_actor(
            theta,
            |n| self.birth.get(&n).copied().unwrap_or(u64::MAX / 4),
            |n| self.times_selected(n),
        )?;
        *self.selections.entry(pick).or_default() += 1;
        Some(pick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> Node {
        s.parse().unwrap()
    }

    fn all_nodes(max: usize) -> Vec<Node> {
        let mut out = vec![Node::ROOT];
        let mut frontier = vec![Node::ROOT];
        for _ in 0..max {
            let mut next = Vec::new();
            for f in frontier {
                for o in [Outcome::Inf, Outcome::Fin] {
                    next.push(f.child(o));
                }
            }
            out.extend(next.iter().copied());
            frontier = next;
        }
        out
    }

    #[test]
    fn left_of_examples() {
        assert!(left_of(n("i"), n("f")));
        assert!(!left_of(n("f"), n("fi")));
        assert!(left_of(n("if"), n("fi")));
        // exhaustive oracle over pairs of length <= 2: the definition verbatim
        for a in all_nodes(2) {
            for b in all_nodes(2) {
                let oracle = (0..a.len().min(b.len())).any(|i| {
                    a.prefix(i) == b.prefix(i) && a.get(i) < b.get(i)
                });
                assert_eq!(left_of(a, b), oracle, "{a} {b}");
            }
        }
    }

    #[test]
    fn left_of_is_a_strict_partial_order() {
        let ns = all_nodes(3);
        for &a in &ns {
            assert!(!left_of(a, a));
            for &b in &ns {
                assert!(!(left_of(a, b) && left_of(b, a)));
                for &c in &ns {
                    if left_of(a, b) && left_of(b, c) {
                        assert!(left_of(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn node_text_round_trip() {
        for s in ["-", "i", "fif", "iqf", "ffffffff"] {
            assert_eq!(n(s).to_string(), s);
        }
        assert!("x".parse::<Node>().is_err());
        assert!(n("if").is_prefix_of(n("iff")));
        assert!(!n("if").is_prefix_of(n("ii")));
        assert_eq!(n("iff").parent(), Some(n("if")));
    }

    #[test]
    fn select_actor_examples() {
        assert_eq!(select_actor(&[], |_| 0, |_| 0), None);
        assert_eq!(select_actor(&[n("i")], |_| 0, |_| 0), Some(n("i")));
        // a born 0 selected twice: <0,2> = 5; b born 1 never selected: <1,0> = 1
        assert_eq!(pair_code(0, 2), 5);
        assert_eq!(pair_code(1, 0), 1);
        let birth = |x: Node| if x == n("i") { 0 } else { 1 };
        let sel = |x: Node| if x == n("i") { 2 } else { 0 };
        assert_eq!(select_actor(&[n("i"), n("f")], birth, sel), Some(n("f")));
    }

    struct Scripted {
        flip_at: Option<u64>,
        inits: Vec<(u64, Node)>,
    }

    impl Strategies for Scripted {
        fn alphabet(&self, _: usize) -> &'static [Outcome] {
            &[Outcome::Inf, Outcome::Fin]
        }
        fn outcome(&mut self, n: Node, s: u64) -> Outcome {
            if n.is_root() && self.flip_at.is_some_and(|t| s >= t) {
                Outcome::Inf
            } else {
                Outcome::Fin
            }
        }
        fn initialize(&mut self, n: Node, s: u64) {
            self.inits.push((s, n));
        }
    }

    #[test]
    fn run_stage_examples() {
        let mut e = TreeEngine::new();
        let mut h = Scripted { flip_at: None, inits: vec![] };
        assert_eq!(e.run_stage(0, 0, &mut h).unwrap(), Node::ROOT);
        assert_eq!(e.run_stage(3, 3, &mut h).unwrap(), n("fff"));
        assert!(h.inits.is_empty());

        let mut e = TreeEngine::new();
        let mut h = Scripted { flip_at: Some(2), inits: vec![] };
        e.run_stage(1, 3, &mut h).unwrap();
        e.run_stage(2, 3, &mut h).unwrap();
        let hit: BTreeSet<Node> = h.inits.iter().filter(|i| i.0 == 2).map(|i| i.1).collect();
        assert_eq!(hit, [n("f"), n("ff")].into_iter().collect());
    }

    #[test]
    fn bad_outcome_is_reported() {
        struct Bad;
        impl Strategies for Bad {
            fn alphabet(&self, _: usize) -> &'static [Outcome] {
                &[Outcome::Q]
            }
            fn outcome(&mut self, _: Node, _: u64) -> Outcome {
                Outcome::Fin
            }
            fn initialize(&mut self, _: Node, _: u64) {}
        }
        assert!(matches!(TreeEngine::new().run_stage(1, 1, &mut Bad), Err(TreeError::BadOutcome { .. })));
    }

    #[test]
    fn true_path_examples() {
        let mut log = PathLog::default();
        log.paths.push((1, n("f")));
        assert_eq!(true_path_estimate(&log), Node::ROOT);

        let mut log = PathLog::default();
        for s in 1..=100 {
            log.paths.push((s, n("fif")));
        }
        assert!(n("fif").is_prefix_of(true_path_estimate(&log)));

        let mut log = PathLog::default();
        for s in 1..=1000 {
            log.paths.push((s, if s % 2 == 0 { n("if") } else { n("fi") }));
        }
        assert_eq!(true_path_estimate(&log), n("if"));
    }

    #[test]
    fn fairness_within_window() {
        // a persistent candidate that is never initialized gets selected
        let mut e = TreeEngine::new();
        struct H;
        impl Strategies for H {
            fn alphabet(&self, _: usize) -> &'static [Outcome] {
                &[Outcome::Inf, Outcome::Fin]
            }
            fn outcome(&mut self, _: Node, _: u64) -> Outcome {
                Outcome::Inf
            }
            fn initialize(&mut self, _: Node, _: u64) {}
        }
        e.run_stage(1, 4, &mut H).unwrap();
        let theta = [n("-"), n("i"), n("ii"), n("iii")];
        let mut seen = BTreeSet::new();
        for _ in 0..10_000 {
            seen.insert(e.select(&theta).unwrap());
        }
        assert_eq!(seen.len(), 4);
    }

    proptest! {
        #[test]
        fn stage_paths_have_requested_length_and_init_only_rightward(
            flips in prop::collection::vec(any::<bool>(), 1..40), depth in 0usize..6
        ) {
            struct F<'a> { bits: &'a [bool], inits: Vec<(u64, Node)> }
            impl Strategies for F<'_> {
                fn alphabet(&self, _: usize) -> &'static [Outcome] { &[Outcome::Inf, Outcome::Fin] }
                fn outcome(&mut self, n: Node, s: u64) -> Outcome {
                    let i = (s as usize * 7 + n.len() * 3) % self.bits.len();
                    if self.bits[i] { Outcome::Inf } else { Outcome::Fin }
                }
                fn initialize(&mut self, n: Node, s: u64) { self.inits.push((s, n)); }
            }
            let mut e = TreeEngine::new();
            let mut h = F { bits: &flips, inits: vec![] };
            for s in 1..30u64 {
                let d = e.run_stage(s, depth, &mut h).unwrap();
                prop_assert_eq!(d.len(), depth);
                for &(t, m) in h.inits.iter().filter(|i| i.0 == s) {
                    prop_assert!(left_of(d, m), "stage {} initialized {} left of or on {}", t, m, d);
                }
            }
        }
    }
}
