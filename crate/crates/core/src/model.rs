//! Bid profiles, outcomes, and the mechanism abstraction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ModelError, ParseError};
use crate::money::{Money, Probability};

const FAKE_BASE: u32 = 1 << 31;

/// Identity token of a bidder. Real bidders are numbered from 0 in profile
/// order; miner-created bids get identities from a disjoint range.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BidderId(u32);

impl BidderId {
    pub fn real(index: usize) -> Self {
        let id = u32::try_from(index).expect("bidder index fits in u32");
        assert!(id < FAKE_BASE, "real bidder index too large");
        BidderId(id)
    }

    pub fn fake(k: usize) -> Self {
        BidderId(FAKE_BASE + u32::try_from(k).expect("fake index fits in u32"))
    }

    pub fn is_fake(self) -> bool {
        self.0 >= FAKE_BASE
    }
}

impl fmt::Display for BidderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_fake() {
            write!(f, "f{}", self.0 - FAKE_BASE)
        } else {
            write!(f, "b{}", self.0)
        }
    }
}

impl fmt::Debug for BidderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Accepts `b3`, `3`, or `f0`.
impl FromStr for BidderId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || ParseError::Bidder(s.to_string());
        if let Some(rest) = t.strip_prefix('f') {
            let k: usize = rest.parse().map_err(|_| bad())?;
            return Ok(BidderId::fake(k));
        }
        let digits = t.strip_prefix('b').unwrap_or(t);
        let k: u32 = digits.parse().map_err(|_| bad())?;
        if k >= FAKE_BASE {
            return Err(bad());
        }
        Ok(BidderId(k))
    }
}

impl Serialize for BidderId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BidderId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Fake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Entry {
    pub id: BidderId,
    pub bid: Money,
    pub origin: Origin,
}

/// An ordered list of bids. Real entries come first and share their index
/// with the corresponding true value, if any; fake entries follow.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BidProfile {
    entries: Vec<Entry>,
    true_values: Option<Vec<Money>>,
}

impl BidProfile {
    pub fn new(entries: Vec<Entry>, true_values: Option<Vec<Money>>) -> Result<Self, ModelError> {
        let real = entries
            .iter()
            .take_while(|e| e.origin == Origin::Real)
            .count();
        if entries[real..].iter().any(|e| e.origin == Origin::Real) {
            return Err(ModelError::MalformedProfile(
                "real entries must precede fake entries".into(),
            ));
        }
        if let Some(values) = &true_values {
            if values.len() != real {
                return Err(ModelError::LengthMismatch {
                    values: values.len(),
                    real,
                });
            }
        }
        Ok(BidProfile {
            entries,
            true_values,
        })
    }

    /// Real bidders `b0, b1, …` with the given bids and no fakes.
    pub fn from_bids(bids: &[Money]) -> Self {
        Self::with_fakes(bids, &[])
    }

    /// Real bidders followed by miner-created bids.
    pub fn with_fakes(real: &[Money], fakes: &[Money]) -> Self {
        let mut entries = Vec::with_capacity(real.len() + fakes.len());
        entries.extend(real.iter().enumerate().map(|(i, &bid)| Entry {
            id: BidderId::real(i),
            bid,
            origin: Origin::Real,
        }));
        entries.extend(fakes.iter().enumerate().map(|(k, &bid)| Entry {
            id: BidderId::fake(k),
            bid,
            origin: Origin::Fake,
        }));
        BidProfile {
            entries,
            true_values: None,
        }
    }

    /// Truthful profile: bids equal the true values.
    pub fn truthful(values: &[Money]) -> Self {
        let mut p = Self::from_bids(values);
        p.true_values = Some(values.to_vec());
        p
    }

    pub fn with_true_values(mut self, values: Vec<Money>) -> Result<Self, ModelError> {
        let real = self.real_count();
        if values.len() != real {
            return Err(ModelError::LengthMismatch {
                values: values.len(),
                real,
            });
        }
        self.true_values = Some(values);
        Ok(self)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> Option<&Entry> {
        self.entries.get(i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.entries
            .iter()
            .take_while(|e| e.origin == Origin::Real)
            .count()
    }

    pub fn true_values(&self) -> Option<&[Money]> {
        self.true_values.as_deref()
    }

    pub fn bids(&self) -> impl Iterator<Item = Money> + '_ {
        self.entries.iter().map(|e| e.bid)
    }

    pub fn bid_vec(&self) -> Vec<Money> {
        self.bids().collect()
    }

    /// Position of the highest bid, ties broken toward the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            match best {
                Some(b) if self.entries[b].bid >= e.bid => {}
                _ => best = Some(i),
            }
        }
        best
    }

    pub fn position_of(&self, id: BidderId) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    /// Same identities and origins with the bids replaced.
    pub fn rebid(&self, bids: &[Money]) -> BidProfile {
        assert_eq!(bids.len(), self.entries.len());
        BidProfile {
            entries: self
                .entries
                .iter()
                .zip(bids)
                .map(|(e, &bid)| Entry { bid, ..*e })
                .collect(),
            true_values: None,
        }
    }

    /// Refills `self` with the nonzero real bids and the fakes, recording in
    /// `slot[i]` where real bid `i` landed (`usize::MAX` if dropped).
    pub(crate) fn refill_nonzero(&mut self, real: &[Money], fakes: &[Money], slot: &mut [usize]) {
        self.entries.clear();
        self.true_values = None;
        for (i, &bid) in real.iter().enumerate() {
            if bid.is_zero() {
                slot[i] = usize::MAX;
            } else {
                slot[i] = self.entries.len();
                self.entries.push(Entry {
                    id: BidderId::real(i),
                    bid,
                    origin: Origin::Real,
                });
            }
        }
        for (k, &bid) in fakes.iter().enumerate() {
            debug_assert!(!bid.is_zero(), "fake bids are positive");
            self.entries.push(Entry {
                id: BidderId::fake(k),
                bid,
                origin: Origin::Fake,
            });
        }
    }

    /// Drops entries whose bid is 0, returning the compacted profile and the
    /// original position of every kept entry.
    pub(crate) fn without_zero_bids(&self) -> (BidProfile, Vec<usize>) {
        let mut entries = Vec::with_capacity(self.entries.len());
        let mut positions = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if !e.bid.is_zero() {
                entries.push(*e);
                positions.push(i);
            }
        }
        (
            BidProfile {
                entries,
                true_values: None,
            },
            positions,
        )
    }
}

/// Per-entry allocation probability, expected payment, and expected burn.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub alloc: Vec<Probability>,
    pub pay: Vec<Money>,
    pub burn: Vec<Money>,
}

impl Outcome {
    /// Nothing allocated, nothing paid.
    pub fn empty(n: usize) -> Self {
        Outcome {
            alloc: vec![Probability::ZERO; n],
            pay: vec![Money::ZERO; n],
            burn: vec![Money::ZERO; n],
        }
    }

    /// Deterministic award of the item to `winner`.
    pub fn award(n: usize, winner: usize, pay: Money, burn: Money) -> Self {
        let mut out = Outcome::empty(n);
        out.alloc[winner] = Probability::ONE;
        out.pay[winner] = pay;
        out.burn[winner] = burn;
        out
    }

    pub fn len(&self) -> usize {
        self.alloc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alloc.is_empty()
    }

    /// The unique allocated entry of a deterministic outcome.
    pub fn winner(&self) -> Option<usize> {
        self.alloc.iter().position(|a| a.is_one())
    }

    pub fn total_allocation(&self) -> crate::money::Ratio {
        self.alloc.iter().map(|a| a.ratio()).sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.alloc.iter().all(|a| a.is_zero() || a.is_one())
            && self.alloc.iter().filter(|a| a.is_one()).count() <= 1
    }
}

/// A transaction fee mechanism: allocation, payment, and burn rules.
///
/// `evaluate` must be a pure function of the profile and return an outcome
/// with one slot per entry.
pub trait Mechanism: Send + Sync {
    fn evaluate(&self, profile: &BidProfile) -> Outcome;

    fn name(&self) -> String;

    fn is_anonymous(&self) -> bool {
        true
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    /// Whether the rules are defined on these bids. Tabulated mechanisms only
    /// know their grid.
    fn defined_on(&self, _bids: &[Money]) -> bool {
        true
    }
}

impl<M: Mechanism + ?Sized> Mechanism for &M {
    fn evaluate(&self, profile: &BidProfile) -> Outcome {
        (**self).evaluate(profile)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn is_anonymous(&self) -> bool {
        (**self).is_anonymous()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn defined_on(&self, bids: &[Money]) -> bool {
        (**self).defined_on(bids)
    }
}

impl<M: Mechanism + ?Sized> Mechanism for Box<M> {
    fn evaluate(&self, profile: &BidProfile) -> Outcome {
        (**self).evaluate(profile)
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn is_anonymous(&self) -> bool {
        (**self).is_anonymous()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn defined_on(&self, bids: &[Money]) -> bool {
        (**self).defined_on(bids)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasicProperty {
    /// Outcome vectors do not match the profile length.
    Shape,
    /// An allocation probability lies outside `[0, 1]`.
    ProbabilityRange,
    /// Allocation probabilities sum above 1.
    Feasibility,
    /// A payment exceeds allocation times bid.
    IndividualRationality,
    /// A burn is negative or exceeds the payment.
    BurnBalance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicViolation {
    pub property: BasicProperty,
    pub index: Option<usize>,
}

/// Feasibility, individual rationality, and burn balance of one outcome.
pub fn validate_outcome(out: &Outcome, profile: &BidProfile) -> Vec<BasicViolation> {
    let n = profile.len();
    if out.alloc.len() != n || out.pay.len() != n || out.burn.len() != n {
        return vec![BasicViolation {
            property: BasicProperty::Shape,
            index: None,
        }];
    }
    let mut found = Vec::new();
    let mut total = crate::money::Ratio::from_integer(0);
    for i in 0..n {
        let a = out.alloc[i].ratio();
        if a < 0.into() || a > 1.into() {
            found.push(BasicViolation {
                property: BasicProperty::ProbabilityRange,
                index: Some(i),
            });
        }
        total += a;
        let bid = profile.entries()[i].bid;
        if out.pay[i].ratio() > bid.ratio() * a {
            found.push(BasicViolation {
                property: BasicProperty::IndividualRationality,
                index: Some(i),
            });
        }
        if out.burn[i] > out.pay[i] || out.burn[i].ratio() < 0.into() {
            found.push(BasicViolation {
                property: BasicProperty::BurnBalance,
                index: Some(i),
            });
        }
    }
    if total > 1.into() {
        found.push(BasicViolation {
            property: BasicProperty::Feasibility,
            index: None,
        });
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Ratio;

    fn m(n: u32) -> Money {
        Money::from_int(n)
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let p = BidProfile::from_bids(&[m(3), m(5), m(5)]);
        assert_eq!(p.argmax(), Some(1));
        assert_eq!(BidProfile::default().argmax(), None);
    }

    #[test]
    fn fakes_follow_reals() {
        let p = BidProfile::with_fakes(&[m(1)], &[m(2)]);
        assert_eq!(p.real_count(), 1);
        assert!(p.entries()[1].id.is_fake());
        let bad = BidProfile::new(
            vec![
                Entry {
                    id: BidderId::fake(0),
                    bid: m(1),
                    origin: Origin::Fake,
                },
                Entry {
                    id: BidderId::real(0),
                    bid: m(1),
                    origin: Origin::Real,
                },
            ],
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn true_values_must_pair_with_reals() {
        let p = BidProfile::with_fakes(&[m(1), m(2)], &[m(3)]);
        assert!(p.clone().with_true_values(vec![m(1)]).is_err());
        assert!(p.with_true_values(vec![m(1), m(2)]).is_ok());
    }

    #[test]
    fn bidder_id_round_trip() {
        for s in ["b0", "b17", "f2"] {
            assert_eq!(s.parse::<BidderId>().unwrap().to_string(), s);
        }
        assert_eq!("4".parse::<BidderId>().unwrap(), BidderId::real(4));
        assert!("x1".parse::<BidderId>().is_err());
    }

    #[test]
    fn validate_flags_each_basic_property() {
        let p = BidProfile::from_bids(&[m(5), m(3)]);
        let ok = Outcome::award(2, 0, m(3), m(0));
        assert!(validate_outcome(&ok, &p).is_empty());

        let over_burn = Outcome::award(2, 0, m(1), m(2));
        let v = validate_outcome(&over_burn, &p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].property, BasicProperty::BurnBalance);

        let mut infeasible = Outcome::empty(2);
        infeasible.alloc = vec![Probability::frac(3, 5), Probability::frac(3, 5)];
        let v = validate_outcome(&infeasible, &p);
        assert_eq!(
            v,
            vec![BasicViolation {
                property: BasicProperty::Feasibility,
                index: None
            }]
        );

        let overcharge = Outcome::award(2, 1, m(4), m(0));
        assert_eq!(
            validate_outcome(&overcharge, &p)[0].property,
            BasicProperty::IndividualRationality
        );

        assert_eq!(
            validate_outcome(&Outcome::empty(1), &p)[0].property,
            BasicProperty::Shape
        );
        assert_eq!(ok.total_allocation(), Ratio::from_integer(1));
    }
}
