//! Ershov collapse: any finite-change approximation is witnessed by a
//! computable well-ordering of type ω built from its change points, and by
//! `ω·R` (type ω²) with computable limit points and successor.

use std::cmp::Ordering;

use crate::approx::ApproxTrace;
use crate::ordinal::{CnfOrdinal, NotationSystem, OrderType};

/// A change point `⟨x, s⟩`: the value at `x` differs between stage `s` and `s+1`.
pub type ChangePoint = (u64, u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CollapseError {
    #[error("trace has no recorded window")]
    NoWindow,
}

/// `R` with `⟨x,s⟩ <_R ⟨x',s'⟩` iff `x < x'`, or `x = x'` and `s > s'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapsedOrdering {
    /// Elements in increasing `<_R` order.
    elements: Vec<ChangePoint>,
}

pub fn r_less(a: &ChangePoint, b: &ChangePoint) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 > b.1)
}

fn r_cmp(a: &ChangePoint, b: &ChangePoint) -> Ordering {
    a.0.cmp(&b.0).then(b.1.cmp(&a.1))
}

pub fn collapse_to_omega(trace: &ApproxTrace) -> Result<CollapsedOrdering, CollapseError> {
    let horizon = trace.horizon().ok_or(CollapseError::NoWindow)?;
    let mut elements: Vec<ChangePoint> =
        trace.change_points().into_iter().filter(|p| p.1 <= horizon).collect();
    elements.sort_by(r_cmp);
    elements.dedup();
    Ok(CollapsedOrdering { elements })
}

impl CollapsedOrdering {
    pub fn elements(&self) -> &[ChangePoint] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, p: &ChangePoint) -> bool {
        self.elements.binary_search_by(|q| r_cmp(q, p)).is_ok()
    }

    pub fn less(&self, a: &ChangePoint, b: &ChangePoint) -> bool {
        r_less(a, b)
    }

    /// Position of `p` in the ordering, i.e. its notation below ω.
    pub fn rank(&self, p: &ChangePoint) -> Option<u64> {
        self.elements.binary_search_by(|q| r_cmp(q, p)).ok().map(|i| i as u64)
    }

    /// The R-least element.
    pub fn minimum(&self) -> Option<ChangePoint> {
        self.elements.first().copied()
    }

    pub fn notation_system(&self) -> NotationSystem {
        NotationSystem::new(OrderType::Below(CnfOrdinal::omega()))
    }

    /// Markers witnessing the trace over this ordering: at stage `s` argument
    /// `x` carries `⟨x, t⟩` for the least change stage `t ≥ s`, or no marker
    /// once it has stopped changing.
    pub fn marker(&self, x: u64, s: u64) -> Option<ChangePoint> {
        self.elements.iter().filter(|p| p.0 == x && p.1 >= s).min_by_key(|p| p.1).copied()
    }

    pub fn omega_times(&self) -> OmegaTimesR<'_> {
        OmegaTimesR { base: self }
    }
}

/// `ω·R`: elements `⟨n, z⟩`, ordered by `z` first, then `n`.
pub struct OmegaTimesR<'a> {
    base: &'a CollapsedOrdering,
}

pub type OmegaPoint = (u64, ChangePoint);

impl OmegaTimesR<'_> {
    pub fn contains(&self, p: &OmegaPoint) -> bool {
        self.base.contains(&p.1)
    }

    pub fn less(&self, a: &OmegaPoint, b: &OmegaPoint) -> bool {
        r_less(&a.1, &b.1) || (a.1 == b.1 && a.0 < b.0)
    }

    pub fn successor(&self, p: &OmegaPoint) -> OmegaPoint {
        (p.0 + 1, p.1)
    }

    /// `⟨n, z⟩` is a limit point iff `n = 0` and `z` is not R-least.
    pub fn is_limit(&self, p: &OmegaPoint) -> bool {
        p.0 == 0 && self.base.minimum() != Some(p.1)
    }

    /// `ω·rank(z) + n`.
    pub fn notation(&self, p: &OmegaPoint) -> Option<CnfOrdinal> {
        let r = self.base.rank(&p.1)?;
        Some(CnfOrdinal::omega().mul_nat(r).add(&CnfOrdinal::nat(p.0)))
    }

    pub fn order_type(&self) -> CnfOrdinal {
        CnfOrdinal::omega_pow(CnfOrdinal::nat(2u32))
    }
}

/// Checks that `less` is a strict total order on `elems` and that every
/// element has finitely many predecessors (no infinite descent inside the
/// window). Returns the offending pair on failure.
pub fn validate_well_order<T: Clone>(
    elems: &[T],
    less: impl Fn(&T, &T) -> bool,
) -> Result<(), (usize, usize)> {
    for i in 0..elems.len() {
        if less(&elems[i], &elems[i]) {
            return Err((i, i));
        }
        for j in 0..elems.len() {
            if i == j {
                continue;
            }
            let (a, b) = (less(&elems[i], &elems[j]), less(&elems[j], &elems[i]));
            if a == b {
                return Err((i, j));
            }
        }
    }
    // With totality and asymmetry in hand, transitivity is equivalent to the
    // predecessor counts being exactly 0..n-1.
    let mut counts: Vec<usize> = (0..elems.len())
        .map(|i| (0..elems.len()).filter(|&j| less(&elems[j], &elems[i])).count())
        .collect();
    counts.sort_unstable();
    match counts.iter().enumerate().find(|(k, c)| *k != **c) {
        Some((k, _)) => Err((k, k)),
        None => Ok(()),
    }
}
