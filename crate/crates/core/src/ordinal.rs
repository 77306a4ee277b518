//! Ordinals below ε₀ in Cantor normal form.
//!
//! A [`CnfOrdinal`] is the term list `ω^e₀·c₀ + … + ω^eₙ·cₙ` with strictly
//! decreasing exponents (themselves CNF ordinals) and positive coefficients.
//! Because the normal form is unique, structural equality is ordinal equality.
//!
//! Text form: `0`, or terms `w^(EXPR)*NAT` joined by `+`. `w` abbreviates
//! `w^(1)*1`, `w^k` takes a natural exponent, `w^w` an exponent of ω, `*1`
//! may be omitted and a bare `NAT` is a finite term.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct CnfOrdinal {
    terms: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub exponent: CnfOrdinal,
    pub coefficient: BigUint,
}

impl CnfOrdinal {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::nat(1u32)
    }

    pub fn nat(n: impl Into<BigUint>) -> Self {
        let n = n.into();
        if n.is_zero() {
            return Self::zero();
        }
        Self {
            terms: vec![Term { exponent: Self::zero(), coefficient: n }],
        }
    }

    pub fn omega() -> Self {
        Self::omega_pow(Self::one())
    }

    /// `ω^e`.
    pub fn omega_pow(exponent: CnfOrdinal) -> Self {
        Self {
            terms: vec![Term { exponent, coefficient: BigUint::one() }],
        }
    }

    /// `ω^e · c`; zero when `c = 0`.
    pub fn monomial(exponent: CnfOrdinal, coefficient: impl Into<BigUint>) -> Self {
        let coefficient = coefficient.into();
        if coefficient.is_zero() {
            return Self::zero();
        }
        Self { terms: vec![Term { exponent, coefficient }] }
    }

    /// Builds an ordinal from raw terms, rejecting anything not in normal form.
    pub fn from_terms(terms: Vec<Term>) -> Result<Self, CnfError> {
        let value = Self { terms };
        value.validate()?;
        Ok(value)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The value as a natural number, if finite.
    pub fn as_nat(&self) -> Option<BigUint> {
        match self.terms.as_slice() {
            [] => Some(BigUint::zero()),
            [t] if t.exponent.is_zero() => Some(t.coefficient.clone()),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        self.as_nat().and_then(|n| n.to_u64())
    }

    pub fn is_finite(&self) -> bool {
        self.as_nat().is_some()
    }

    pub fn leading_exponent(&self) -> Option<&CnfOrdinal> {
        self.terms.first().map(|t| &t.exponent)
    }

    /// Nesting depth of exponents; 0 for finite ordinals.
    pub fn depth(&self) -> usize {
        self.terms
            .iter()
            .map(|t| if t.exponent.is_zero() { 0 } else { 1 + t.exponent.depth() })
            .max()
            .unwrap_or(0)
    }

    /// Checks the normal-form invariant recursively.
    pub fn validate(&self) -> Result<(), CnfError> {
        for (i, term) in self.terms.iter().enumerate() {
            if term.coefficient.is_zero() {
                return Err(CnfError::ZeroCoefficient);
            }
            term.exponent.validate()?;
            if i > 0 && self.terms[i - 1].exponent <= term.exponent {
                return Err(CnfError::ExponentsNotDecreasing);
            }
        }
        Ok(())
    }

    /// Ordinal sum `self + rhs`. Terms of `self` below the leading exponent of
    /// `rhs` are absorbed.
    pub fn add(&self, rhs: &CnfOrdinal) -> CnfOrdinal {
        let Some(lead) = rhs.terms.first() else {
            return self.clone();
        };
        let mut terms: Vec<Term> = Vec::with_capacity(self.terms.len() + rhs.terms.len());
        for t in &self.terms {
            match t.exponent.cmp(&lead.exponent) {
                Ordering::Greater => terms.push(t.clone()),
                Ordering::Equal => {
                    terms.push(Term {
                        exponent: t.exponent.clone(),
                        coefficient: &t.coefficient + &lead.coefficient,
                    });
                    terms.extend(rhs.terms[1..].iter().cloned());
                    return CnfOrdinal { terms };
                }
                Ordering::Less => break,
            }
        }
        terms.extend(rhs.terms.iter().cloned());
        CnfOrdinal { terms }
    }

    /// `self · n` for a natural `n`: the leading coefficient is scaled, the
    /// remaining terms are kept once.
    pub fn mul_nat(&self, n: impl Into<BigUint>) -> CnfOrdinal {
        let n = n.into();
        if n.is_zero() || self.is_zero() {
            return CnfOrdinal::zero();
        }
        let mut terms = self.terms.clone();
        terms[0].coefficient = &terms[0].coefficient * &n;
        CnfOrdinal { terms }
    }

    /// True iff `b + c < self` for all `b, c < self`, i.e. `self` is a power
    /// of ω (which includes `1 = ω⁰`).
    pub fn is_additively_closed(&self) -> bool {
        matches!(self.terms.as_slice(), [t] if t.coefficient.is_one())
    }

    /// Value of `x` as an ordinal `x < ω`.
    pub fn from_u64(x: u64) -> CnfOrdinal {
        CnfOrdinal::nat(x)
    }
}

impl From<u64> for CnfOrdinal {
    fn from(x: u64) -> Self {
        CnfOrdinal::nat(x)
    }
}

impl Ord for CnfOrdinal {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.terms.iter().zip(&other.terms) {
            let ord = a
                .exponent
                .cmp(&b.exponent)
                .then_with(|| a.coefficient.cmp(&b.coefficient));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        self.terms.len().cmp(&other.terms.len())
    }
}

impl PartialOrd for CnfOrdinal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Three-way comparison of two ordinals.
pub fn compare(a: &CnfOrdinal, b: &CnfOrdinal) -> Ordering {
    a.cmp(b)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CnfError {
    #[error("coefficient must be positive")]
    ZeroCoefficient,
    #[error("exponents must be strictly decreasing")]
    ExponentsNotDecreasing,
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("ε₀ is only usable as an order-type bound")]
    EpsilonZeroOperand,
}

impl fmt::Display for CnfOrdinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            if t.exponent.is_zero() {
                write!(f, "{}", t.coefficient)?;
                continue;
            }
            f.write_str("w")?;
            if t.exponent != CnfOrdinal::one() {
                if let Some(k) = t.exponent.as_nat() {
                    write!(f, "^{k}")?;
                } else if t.exponent == CnfOrdinal::omega() {
                    f.write_str("^w")?;
                } else {
                    write!(f, "^({})", t.exponent)?;
                }
            }
            if !t.coefficient.is_one() {
                write!(f, "*{}", t.coefficient)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CnfOrdinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CnfOrdinal({self})")
    }
}

impl FromStr for CnfOrdinal {
    type Err = CnfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { src: s.as_bytes(), pos: 0 };
        p.skip_ws();
        let value = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(value)
    }
}

/// Recursive-descent parser. Sums of non-normalized terms are accepted and
/// folded with ordinal addition, so `1+w` reads as `w`.
struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> CnfError {
        CnfError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<CnfOrdinal, CnfError> {
        let mut acc = self.term()?;
        while self.eat(b'+') {
            let t = self.term()?;
            acc = acc.add(&t);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<CnfOrdinal, CnfError> {
        self.skip_ws();
        match self.peek() {
            Some(b'w') => {
                self.pos += 1;
                let exponent = if self.eat(b'^') { self.exponent()? } else { CnfOrdinal::one() };
                let coefficient = if self.eat(b'*') { self.nat()? } else { BigUint::one() };
                Ok(CnfOrdinal::monomial(exponent, coefficient))
            }
            Some(c) if c.is_ascii_digit() => {
                let n = self.nat()?;
                Ok(CnfOrdinal::nat(n))
            }
            Some(b'e') => Err(CnfError::EpsilonZeroOperand),
            _ => Err(self.err("expected `w` or a natural number")),
        }
    }

    fn exponent(&mut self) -> Result<CnfOrdinal, CnfError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(b'w') => {
                self.pos += 1;
                Ok(CnfOrdinal::omega())
            }
            Some(c) if c.is_ascii_digit() => Ok(CnfOrdinal::nat(self.nat()?)),
            _ => Err(self.err("expected exponent")),
        }
    }

    fn nat(&mut self) -> Result<BigUint, CnfError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a natural number"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        Ok(digits.parse::<BigUint>().expect("digits parse"))
    }
}

/// An order-type bound: either a CNF ordinal or ε₀ itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OrderType {
    Below(CnfOrdinal),
    EpsilonZero,
}

impl OrderType {
    /// Whether `a` is strictly below this bound.
    pub fn admits(&self, a: &CnfOrdinal) -> bool {
        match self {
            OrderType::Below(b) => a < b,
            OrderType::EpsilonZero => true,
        }
    }
}

impl fmt::Display for OrderType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderType::Below(a) => write!(f, "{a}"),
            OrderType::EpsilonZero => f.write_str("e0"),
        }
    }
}

impl FromStr for OrderType {
    type Err = CnfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "e0" {
            Ok(OrderType::EpsilonZero)
        } else {
            s.parse().map(OrderType::Below)
        }
    }
}

/// The canonical notation system of a given order type: its notations are the
/// CNF ordinals below the order type, so the normal-form map is the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotationSystem {
    order_type: OrderType,
}

impl NotationSystem {
    pub fn new(order_type: OrderType) -> Self {
        Self { order_type }
    }

    pub fn order_type(&self) -> &OrderType {
        &self.order_type
    }

    pub fn contains(&self, a: &CnfOrdinal) -> bool {
        self.order_type.admits(a)
    }

    pub fn less(&self, a: &CnfOrdinal, b: &CnfOrdinal) -> bool {
        a < b
    }

    /// Normal form of a notation: the notation itself.
    pub fn normal_form<'a>(&self, a: &'a CnfOrdinal) -> &'a [Term] {
        a.terms()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(s: &str) -> CnfOrdinal {
        s.parse().unwrap()
    }

    /// Lexicographic embedding of `ω²·a + ω·b + c` as the triple `(a, b, c)`.
    fn embed(a: u64, b: u64, c: u64) -> CnfOrdinal {
        let mut terms = Vec::new();
        if a > 0 {
            terms.push(Term { exponent: CnfOrdinal::nat(2u32), coefficient: a.into() });
        }
        if b > 0 {
            terms.push(Term { exponent: CnfOrdinal::one(), coefficient: b.into() });
        }
        if c > 0 {
            terms.push(Term { exponent: CnfOrdinal::zero(), coefficient: c.into() });
        }
        CnfOrdinal::from_terms(terms).unwrap()
    }

    #[test]
    fn compare_examples() {
        assert_eq!(compare(&o("w"), &o("w")), Ordering::Equal);
        assert_eq!(compare(&o("w^2*2+3"), &o("w^2*2+w")), Ordering::Less);
        assert_eq!(compare(&o("w^w"), &o("w^2*9+w*9+9")), Ordering::Greater);
        // embedding oracle agrees on the second example
        assert!((2, 0, 3) < (2, 1, 0));
        assert_eq!(embed(2, 0, 3), o("w^2*2+3"));
    }

    #[test]
    fn add_examples() {
        assert_eq!(o("1").add(&o("w")), o("w"));
        assert_eq!(o("w").add(&o("1")), o("w+1"));
        assert_eq!(o("w^2+w").add(&o("w+1")), o("w^2+w*2+1"));
        assert_eq!(o("w^2+w").add(&CnfOrdinal::zero()), o("w^2+w"));
        assert_eq!(CnfOrdinal::zero().add(&o("w^2+w")), o("w^2+w"));
    }

    #[test]
    fn mul_nat_examples() {
        assert_eq!(o("w").mul_nat(0u32), CnfOrdinal::zero());
        assert_eq!(o("w*2+3").mul_nat(1u32), o("w*2+3"));
        let a = o("w^2+w*2");
        assert_eq!(a.mul_nat(3u32), o("w^2*3+w*2"));
        assert_eq!(a.add(&a).add(&a), a.mul_nat(3u32));
    }

    #[test]
    fn additive_closure_examples() {
        assert!(o("w^w").is_additively_closed());
        assert!(!o("w*2").is_additively_closed());
        assert!(!o("w^2+1").is_additively_closed());
        assert_eq!(o("w^2").add(&o("1")), o("w^2+1"));
        assert!(o("1").is_additively_closed());
        assert!(!CnfOrdinal::zero().is_additively_closed());
    }

    #[test]
    fn text_round_trip() {
        for s in ["0", "w", "w^w", "w^2*3+w+5", "w^(w+1)*2+w^w+7", "w^(w^w)"] {
            assert_eq!(o(s).to_string(), s);
        }
        assert_eq!(o("w^(1)*1").to_string(), "w");
        assert_eq!(o("w + w^2").to_string(), "w^2");
        assert_eq!(o("w^0*4").to_string(), "4");
    }

    #[test]
    fn parse_errors() {
        assert!("".parse::<CnfOrdinal>().is_err());
        assert!("w^".parse::<CnfOrdinal>().is_err());
        assert!("w^(2".parse::<CnfOrdinal>().is_err());
        assert!("w*".parse::<CnfOrdinal>().is_err());
        assert_eq!("e0".parse::<CnfOrdinal>(), Err(CnfError::EpsilonZeroOperand));
        assert_eq!("e0".parse::<OrderType>(), Ok(OrderType::EpsilonZero));
    }

    #[test]
    fn from_terms_rejects_bad_normal_form() {
        let bad = vec![
            Term { exponent: CnfOrdinal::zero(), coefficient: 1u32.into() },
            Term { exponent: CnfOrdinal::one(), coefficient: 1u32.into() },
        ];
        assert_eq!(CnfOrdinal::from_terms(bad), Err(CnfError::ExponentsNotDecreasing));
        let zero = vec![Term { exponent: CnfOrdinal::one(), coefficient: 0u32.into() }];
        assert_eq!(CnfOrdinal::from_terms(zero), Err(CnfError::ZeroCoefficient));
    }

    #[test]
    fn notation_system_is_identity_coded() {
        let sys = NotationSystem::new(OrderType::Below(o("w^2")));
        assert!(sys.contains(&o("w*5+3")));
        assert!(!sys.contains(&o("w^2")));
        assert!(NotationSystem::new(OrderType::EpsilonZero).contains(&o("w^(w^w)")));
        assert_eq!(sys.normal_form(&o("w+1")).len(), 2);
    }
}
