//! Bidder, miner, and joint utilities.
//!
//! A bid of 0 stands for an absent transaction. Such entries are stripped
//! before the mechanism is consulted and receive a zero outcome.

use crate::error::ModelError;
use crate::model::{BidProfile, Mechanism, Origin, Outcome};
use crate::money::{Money, Utility};

/// Outcome of `profile` with zero-bid entries treated as omitted.
pub fn effective_outcome<M: Mechanism + ?Sized>(mech: &M, profile: &BidProfile) -> Outcome {
    if profile.bids().all(|b| !b.is_zero()) {
        return mech.evaluate(profile);
    }
    let (kept, positions) = profile.without_zero_bids();
    let inner = mech.evaluate(&kept);
    let mut out = Outcome::empty(profile.len());
    for (k, &pos) in positions.iter().enumerate() {
        out.alloc[pos] = inner.alloc[k];
        out.pay[pos] = inner.pay[k];
        out.burn[pos] = inner.burn[k];
    }
    out
}

/// `v_i · a_i − p_i` for entry `i` when its true value is `value`.
pub fn bidder_utility<M: Mechanism + ?Sized>(
    mech: &M,
    profile: &BidProfile,
    i: usize,
    value: Money,
) -> Result<Utility, ModelError> {
    if i >= profile.len() {
        return Err(ModelError::IndexOutOfRange {
            index: i,
            len: profile.len(),
        });
    }
    let out = effective_outcome(mech, profile);
    Ok(bidder_term(&out, i, value))
}

/// Payments minus burns over real entries, minus burns over fake entries.
pub fn miner_utility<M: Mechanism + ?Sized>(mech: &M, profile: &BidProfile) -> Utility {
    miner_term(&effective_outcome(mech, profile), profile)
}

/// Total value served to real bidders minus everything burnt.
///
/// `values` pairs with the real entries; absent bidders carry value 0.
pub fn joint_utility<M: Mechanism + ?Sized>(
    mech: &M,
    profile: &BidProfile,
    values: &[Money],
) -> Result<Utility, ModelError> {
    let real = profile.real_count();
    if values.len() != real {
        return Err(ModelError::LengthMismatch {
            values: values.len(),
            real,
        });
    }
    let out = effective_outcome(mech, profile);
    Ok(joint_term(&out, profile, values))
}

/// Every utility of one profile, computed from a single evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utilities {
    pub bidders: Vec<Utility>,
    pub miner: Utility,
    pub joint: Utility,
}

impl Utilities {
    pub fn compute<M: Mechanism + ?Sized>(
        mech: &M,
        profile: &BidProfile,
        values: &[Money],
    ) -> Result<Self, ModelError> {
        let real = profile.real_count();
        if values.len() != real {
            return Err(ModelError::LengthMismatch {
                values: values.len(),
                real,
            });
        }
        let out = effective_outcome(mech, profile);
        Ok(Self::from_outcome(&out, profile, values))
    }

    pub(crate) fn from_outcome(out: &Outcome, profile: &BidProfile, values: &[Money]) -> Self {
        let bidders: Vec<Utility> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| bidder_term(out, i, v))
            .collect();
        let miner = miner_term(out, profile);
        let joint = joint_term(out, profile, values);
        debug_assert_eq!(joint, miner + bidders.iter().copied().sum::<Utility>());
        Utilities {
            bidders,
            miner,
            joint,
        }
    }

    /// Miner plus the listed bidders.
    pub fn coalition<I: IntoIterator<Item = usize>>(&self, members: I) -> Utility {
        members
            .into_iter()
            .fold(self.miner, |acc, i| acc + self.bidders[i])
    }
}

pub(crate) fn bidder_term(out: &Outcome, i: usize, value: Money) -> Utility {
    Utility::from(value * out.alloc[i]) - out.pay[i]
}

pub(crate) fn miner_term(out: &Outcome, profile: &BidProfile) -> Utility {
    let mut total = Utility::ZERO;
    for (k, e) in profile.entries().iter().enumerate() {
        match e.origin {
            Origin::Real => total += out.pay[k] - out.burn[k],
            Origin::Fake => total -= Utility::from(out.burn[k]),
        }
    }
    total
}

pub(crate) fn joint_term(out: &Outcome, profile: &BidProfile, values: &[Money]) -> Utility {
    let mut total = Utility::ZERO;
    for (k, e) in profile.entries().iter().enumerate() {
        match e.origin {
            Origin::Real => total += Utility::from(values[k] * out.alloc[k]) - out.burn[k],
            Origin::Fake => total -= Utility::from(out.burn[k]),
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Probability;

    /// Highest bid wins and pays the runner-up, burning `burn`.
    struct Toy {
        burn: Money,
    }

    impl Mechanism for Toy {
        fn evaluate(&self, p: &BidProfile) -> Outcome {
            let Some(w) = p.argmax() else {
                return Outcome::empty(0);
            };
            let mut bids = p.bid_vec();
            bids.remove(w);
            let second = bids.into_iter().max().unwrap_or(Money::ZERO).max(self.burn);
            Outcome::award(p.len(), w, second, self.burn)
        }
        fn name(&self) -> String {
            "toy".into()
        }
    }

    fn m(n: u32) -> Money {
        Money::from_int(n)
    }

    #[test]
    fn utilities_of_an_honest_profile() {
        let mech = Toy { burn: m(1) };
        let p = BidProfile::truthful(&[m(5), m(3)]);
        assert_eq!(
            bidder_utility(&mech, &p, 0, m(5)).unwrap(),
            Utility::frac(2, 1)
        );
        assert_eq!(miner_utility(&mech, &p), Utility::frac(2, 1));
        assert_eq!(
            joint_utility(&mech, &p, &[m(5), m(3)]).unwrap(),
            Utility::frac(4, 1)
        );
        assert!(bidder_utility(&mech, &p, 2, m(1)).is_err());
        assert!(joint_utility(&mech, &p, &[m(5)]).is_err());
    }

    #[test]
    fn zero_bids_are_omitted() {
        let mech = Toy {
            burn: Money::ZERO,
        };
        let p = BidProfile::from_bids(&[Money::ZERO, m(3)]);
        let out = effective_outcome(&mech, &p);
        assert_eq!(out.alloc, vec![Probability::ZERO, Probability::ONE]);
        assert_eq!(out.pay[1], Money::ZERO);
        assert_eq!(
            bidder_utility(&mech, &p, 0, m(7)).unwrap(),
            Utility::ZERO
        );
    }

    #[test]
    fn fake_burns_count_against_the_miner() {
        let mech = Toy { burn: m(1) };
        let p = BidProfile::with_fakes(&[m(2)], &[m(4)]);
        let u = Utilities::compute(&mech, &p, &[m(2)]).unwrap();
        assert_eq!(u.miner, Utility::frac(-1, 1));
        assert_eq!(u.joint, Utility::frac(-1, 1));
        assert_eq!(u.coalition([0]), Utility::frac(-1, 1));
    }
}
