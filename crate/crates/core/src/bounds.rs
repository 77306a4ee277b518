//! Quota allocation, injury bounds and the ordinal budgets of the tree and
//! finite-injury constructions.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::ordinal::CnfOrdinal;
use crate::tree::{Node, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Req {
    N,
    P,
    Q,
}

impl Req {
    pub fn letter(self) -> &'static str {
        match self {
            Req::N => "N",
            Req::P => "P",
            Req::Q => "Q",
        }
    }
}

/// Level discipline of a tree construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// N at even lengths, P at odd lengths.
    Low2,
    /// N, P, Q at lengths `3e`, `3e+1`, `3e+2`.
    Alpha,
}

const BINARY: &[Outcome] = &[Outcome::Inf, Outcome::Fin];
const SINGLE: &[Outcome] = &[Outcome::Q];

impl Layout {
    pub fn req(self, len: usize) -> Req {
        match self {
            Layout::Low2 => [Req::N, Req::P][len % 2],
            Layout::Alpha => [Req::N, Req::P, Req::Q][len % 3],
        }
    }

    /// Requirement index `e` of the level at `len`.
    pub fn index(self, len: usize) -> usize {
        match self {
            Layout::Low2 => len / 2,
            Layout::Alpha => len / 3,
        }
    }

    pub fn alphabet(self, len: usize) -> &'static [Outcome] {
        if self.req(len) == Req::Q {
            SINGLE
        } else {
            BINARY
        }
    }

    /// All nodes of length exactly `len`.
    pub fn nodes_of_len(self, len: usize) -> Vec<Node> {
        let mut out = vec![Node::ROOT];
        for l in 0..len {
            out = out.iter().flat_map(|n| self.alphabet(l).iter().map(move |&o| n.child(o))).collect();
        }
        out
    }
}

/// Quota multiplicity `quotaFor_x(ρ) = |{k : 1 ≤ k < x}|`.
pub fn quota_for(x: u64) -> u64 {
    x.saturating_sub(1)
}

/// `ρ ∈ quota(x)`: a P-node with `|ρ| < x`, and `x ≥ 2` so that some `k` exists.
pub fn in_quota(layout: Layout, rho: Node, x: u64) -> bool {
    x >= 2 && layout.req(rho.len()) == Req::P && (rho.len() as u64) < x
}

/// `quota(x)` as `⟨ρ, k⟩` pairs.
pub fn quota(layout: Layout, x: u64) -> Vec<(Node, u64)> {
    quota_nodes(layout, x)
        .into_iter()
        .flat_map(|n| (1..x).map(move |k| (n, k)))
        .collect()
}

/// The distinct nodes of `quota(x)`, in tree order.
pub fn quota_nodes(layout: Layout, x: u64) -> Vec<Node> {
    let mut v: Vec<Node> = (0..x as usize)
        .flat_map(|l| layout.nodes_of_len(l))
        .filter(|&n| in_quota(layout, n, x))
        .collect();
    v.sort();
    v
}

/// `(x+1)²·4^{(x+1)²}`.
pub fn injury_bound(x: u64) -> BigUint {
    let m = (x + 1) * (x + 1);
    BigUint::from(m) * BigUint::from(4u32).pow(m as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BoundError {
    #[error("node {node} is not in quota({x})")]
    NotInQuota { node: Node, x: u64 },
}

/// Max over `ρ' ⪰ ρ⌢∞` in `quota(x)` of `|{ρ'' : ρ⌢∞ ⪯ ρ'' ⪯ ρ'}|`; 0 when
/// there is no such `ρ'`.
pub fn edge_layer(layout: Layout, rho: Node, x: u64) -> Result<u64, BoundError> {
    if !in_quota(layout, rho, x) {
        return Err(BoundError::NotInQuota { node: rho, x });
    }
    // Every path below ρ⌢∞ meets the same levels, so the deepest quota level
    // decides the maximum.
    let deepest = (rho.len() + 1..x as usize).rev().find(|&l| layout.req(l) == Req::P);
    Ok(deepest.map_or(0, |l| (l - rho.len()) as u64))
}

/// `k'(ξ) = Σ_{η'⌢∞ ⪯ ξ} Σ_{x < l_s(η')} injury_bound(x)`, given the `l_s(η')`.
pub fn k_prime(lengths: &[u64]) -> BigUint {
    lengths.iter().flat_map(|&l| 0..l).map(injury_bound).sum()
}

/// `max` of the members' `k'`, 0 for an empty list.
pub fn k_budget(kprimes: &[BigUint]) -> BigUint {
    kprimes.iter().max().cloned().unwrap_or_else(BigUint::zero)
}

/// `Σ g·(k+1)` in the given (priority) order.
pub fn beta_bound(gs: &[CnfOrdinal], k: &BigUint) -> CnfOrdinal {
    let k1 = k + BigUint::one();
    gs.iter().fold(CnfOrdinal::zero(), |acc, g| acc.add(&g.mul_nat(k1.clone())))
}

/// `φ(e) = Σ_{Q ∈ Qlist} g(Q)·(k+1)` in ascending priority.
pub fn phi(gs: &[CnfOrdinal], k: u64) -> CnfOrdinal {
    beta_bound(gs, &BigUint::from(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Node {
        s.parse().unwrap()
    }

    fn o(s: &str) -> CnfOrdinal {
        s.parse().unwrap()
    }

    #[test]
    fn quota_examples() {
        assert!(quota(Layout::Low2, 0).is_empty());
        assert!(quota(Layout::Low2, 1).is_empty());
        assert_eq!(quota(Layout::Low2, 2), vec![(n("i"), 1), (n("f"), 1)]);
        assert_eq!(quota_for(2), 1);
        // monotone in x
        for x in 0..6 {
            let a = quota(Layout::Alpha, x);
            let b = quota(Layout::Alpha, x + 1);
            assert!(a.iter().all(|p| b.contains(p)));
        }
    }

    #[test]
    fn injury_bound_examples() {
        assert_eq!(injury_bound(0), BigUint::from(4u32));
        assert_eq!(injury_bound(1), BigUint::from(1024u32));
        assert_eq!(injury_bound(2), BigUint::from(2_359_296u32));
        assert_eq!(injury_bound(2), BigUint::from(9u32) * BigUint::from(4u32).pow(9));
    }

    // Brute force: enumerate every quota node extending ρ⌢∞
    // and count the nodes on the segment.
    fn edge_layer_oracle(layout: Layout, rho: Node, x: u64) -> u64 {
        let base = rho.child(Outcome::Inf);
        quota_nodes(layout, x)
            .into_iter()
            .filter(|&p| base.is_prefix_of(p))
            .map(|p| (base.len()..=p.len()).filter(|&l| base.is_prefix_of(p.prefix(l))).count() as u64)
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn edge_layer_matches_enumeration() {
        for layout in [Layout::Low2, Layout::Alpha] {
            for x in 0..8 {
                for rho in quota_nodes(layout, x) {
                    assert_eq!(edge_layer(layout, rho, x).unwrap(), edge_layer_oracle(layout, rho, x));
                }
            }
        }
        // x = 4: ⟨∞⟩ reaches the length-3 P-nodes through ⟨∞,·⟩.
        assert_eq!(edge_layer(Layout::Low2, n("i"), 4).unwrap(), 2);
        assert_eq!(edge_layer(Layout::Low2, n("iii"), 4).unwrap(), 0);
        assert!(edge_layer(Layout::Low2, n("ii"), 4).is_err());
    }

    #[test]
    fn extensions_through_infinity_have_smaller_layer() {
        for layout in [Layout::Low2, Layout::Alpha] {
            for x in 2..9 {
                let q = quota_nodes(layout, x);
                for &a in &q {
                    for &b in &q {
                        if a.child(Outcome::Inf).is_prefix_of(b) {
                            assert!(edge_layer(layout, b, x).unwrap() < edge_layer(layout, a, x).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn k_prime_and_budget_examples() {
        assert_eq!(k_prime(&[]), BigUint::zero());
        assert_eq!(k_prime(&[1]), BigUint::from(4u32));
        assert_eq!(k_prime(&[2]), BigUint::from(1028u32));
        assert_eq!(k_budget(&[]), BigUint::zero());
        assert_eq!(k_budget(&[BigUint::from(1028u32)]), BigUint::from(1028u32));
        assert_eq!(k_budget(&[BigUint::from(4u32), BigUint::from(1028u32)]), BigUint::from(1028u32));
    }

    #[test]
    fn beta_and_phi_examples() {
        assert_eq!(beta_bound(&[], &BigUint::from(7u32)), CnfOrdinal::zero());
        assert_eq!(beta_bound(&[o("w")], &BigUint::from(1028u32)), o("w*1029"));
        assert_eq!(beta_bound(&[o("w"), o("w^2")], &BigUint::one()), o("w^2*2"));
        assert_eq!(phi(&[], 3), CnfOrdinal::zero());
        assert_eq!(phi(&[o("w")], 0), o("w"));
        assert_eq!(phi(&[o("w"), o("w*2")], 2), o("w*9"));
    }

    #[test]
    fn layouts_assign_levels() {
        assert_eq!(Layout::Low2.req(0), Req::N);
        assert_eq!(Layout::Low2.req(3), Req::P);
        assert_eq!(Layout::Alpha.req(5), Req::Q);
        assert_eq!(Layout::Alpha.alphabet(2), &[Outcome::Q]);
        assert_eq!(Layout::Alpha.nodes_of_len(3).len(), 4);
    }
}
