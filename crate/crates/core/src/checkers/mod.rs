//! Exhaustive, witness-producing property checks over a bid grid.
//!
//! A `Pass` only says that no violation exists on the grid under its caps.

mod enumerate;
mod incentive;
mod structural;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ModelError, ParseError};
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism};
use crate::money::{Money, Ratio, Utility};
use crate::utility::{effective_outcome, Utilities};

pub use incentive::{check_dsic, check_mmic, check_oca, check_oca_joint_form, check_scp};
pub use structural::{check_anonymity, check_ctpa, check_scale_invariance, DEFAULT_SCALE_FACTORS};

/// How many bidders may join the miner's coalition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoalitionCap {
    Limit(usize),
    All,
}

impl CoalitionCap {
    pub(crate) fn admits(self, size: usize) -> bool {
        match self {
            CoalitionCap::Limit(c) => size <= c,
            CoalitionCap::All => true,
        }
    }

    pub(crate) fn room(self, used: usize) -> usize {
        match self {
            CoalitionCap::Limit(c) => c.saturating_sub(used),
            CoalitionCap::All => usize::MAX,
        }
    }
}

impl fmt::Display for CoalitionCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoalitionCap::Limit(c) => write!(f, "{c}"),
            CoalitionCap::All => f.write_str("all"),
        }
    }
}

impl FromStr for CoalitionCap {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(CoalitionCap::All),
            other => other
                .parse()
                .map(CoalitionCap::Limit)
                .map_err(|_| ParseError::Property(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Dsic,
    Mmic,
    Oca(CoalitionCap),
    /// Joint-utility maximality, the equivalent form of OCA with no cap.
    OcaJoint,
    Scp(CoalitionCap),
    ScaleInvariance,
    Ctpa,
    Anonymity,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Dsic => f.write_str("dsic"),
            Property::Mmic => f.write_str("mmic"),
            Property::Oca(c) => write!(f, "oca:{c}"),
            Property::OcaJoint => f.write_str("oca_joint"),
            Property::Scp(c) => write!(f, "scp:{c}"),
            Property::ScaleInvariance => f.write_str("scale"),
            Property::Ctpa => f.write_str("ctpa"),
            Property::Anonymity => f.write_str("anon"),
        }
    }
}

impl FromStr for Property {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if let Some((head, cap)) = t.split_once(':') {
            let cap: CoalitionCap = cap.parse().map_err(|_| ParseError::Property(s.into()))?;
            return match head {
                "oca" => Ok(Property::Oca(cap)),
                "scp" => Ok(Property::Scp(cap)),
                _ => Err(ParseError::Property(s.into())),
            };
        }
        match t.as_str() {
            "dsic" => Ok(Property::Dsic),
            "mmic" => Ok(Property::Mmic),
            "oca" => Ok(Property::Oca(CoalitionCap::All)),
            "oca_joint" | "oca-joint" => Ok(Property::OcaJoint),
            "scp" => Ok(Property::Scp(CoalitionCap::All)),
            "scale" => Ok(Property::ScaleInvariance),
            "ctpa" => Ok(Property::Ctpa),
            "anon" | "anonymity" => Ok(Property::Anonymity),
            _ => Err(ParseError::Property(s.into())),
        }
    }
}

impl Serialize for Property {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Property {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationKind {
    /// A single bidder misreports (DSIC).
    Misreport,
    /// The miner omits real bids and adds fake ones.
    MinerStrategy,
    OffChainAgreement,
    SideContract,
}

/// A deviation from honest play, relative to a value vector `v`.
///
/// Real bidder `i` bids `changed[i]` if present, else `v_i` if `i ∈ kept`,
/// else 0 (omitted). Fakes are appended after the real bids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manipulation {
    pub kind: ManipulationKind,
    pub kept: BTreeSet<usize>,
    #[serde(deserialize_with = "index_keys")]
    pub changed: BTreeMap<usize, Money>,
    pub fakes: Vec<Money>,
    pub coalition: BTreeSet<usize>,
}

// Flattened evidence is buffered before it reaches this field, and the
// buffer only hands out map keys as strings.
fn index_keys<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, Money>, D::Error> {
    let raw = BTreeMap::<String, Money>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(serde::de::Error::custom))
        .collect()
}

impl Manipulation {
    /// Builds the record from a deviating real-bid vector.
    pub(crate) fn from_bids(
        kind: ManipulationKind,
        values: &[Money],
        bids: &[Money],
        fakes: &[Money],
        coalition: BTreeSet<usize>,
    ) -> Self {
        let mut kept = BTreeSet::new();
        let mut changed = BTreeMap::new();
        for (i, (&v, &b)) in values.iter().zip(bids).enumerate() {
            if b.is_zero() {
                continue;
            }
            if b == v {
                kept.insert(i);
            } else {
                changed.insert(i, b);
            }
        }
        Manipulation {
            kind,
            kept,
            changed,
            fakes: fakes.to_vec(),
            coalition,
        }
    }

    /// The real bids this manipulation submits for value vector `values`.
    pub fn real_bids(&self, values: &[Money]) -> Vec<Money> {
        (0..values.len())
            .map(|i| match self.changed.get(&i) {
                Some(&b) => b,
                None if self.kept.contains(&i) => values[i],
                None => Money::ZERO,
            })
            .collect()
    }

    /// The full deviating profile, real bids first.
    pub fn profile(&self, values: &[Money]) -> BidProfile {
        BidProfile::with_fakes(&self.real_bids(values), &self.fakes)
    }

    /// Real bidders whose bid is neither their value nor 0.
    pub fn altered(&self, values: &[Money]) -> BTreeSet<usize> {
        self.changed
            .iter()
            .filter(|(&i, &b)| !b.is_zero() && values.get(i) != Some(&b))
            .map(|(&i, _)| i)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRule {
    Alloc,
    Pay,
    Burn,
}

/// What was done to the profile to expose the violation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Manipulation(Manipulation),
    /// `lhs = a_index(values)`, `rhs = a_index(factor · values)`.
    Rescale { factor: Money, index: usize },
    /// `lhs = Σ a(values)`, `rhs = Σ a(other)`.
    Reprofile { other: Vec<Money> },
    /// With `π(b)_k = b_{permutation[k]}`:
    /// `lhs = x(values)_{permutation[index]}`, `rhs = x(π(values))_index`.
    Permute {
        permutation: Vec<usize>,
        index: usize,
        rule: OutcomeRule,
    },
}

/// A concrete strict failure: `rhs > lhs` with `margin = rhs − lhs`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationWitness {
    pub property: Property,
    pub values: Vec<Money>,
    #[serde(flatten)]
    pub evidence: Evidence,
    pub lhs: Utility,
    pub rhs: Utility,
    pub margin: Utility,
}

impl ViolationWitness {
    pub(crate) fn new(
        property: Property,
        values: Vec<Money>,
        evidence: Evidence,
        lhs: Utility,
        rhs: Utility,
    ) -> Box<Self> {
        debug_assert!(rhs > lhs, "witness must be strict");
        Box::new(ViolationWitness {
            property,
            values,
            evidence,
            lhs,
            rhs,
            margin: rhs - lhs,
        })
    }

    pub fn manipulation(&self) -> Option<&Manipulation> {
        match &self.evidence {
            Evidence::Manipulation(m) => Some(m),
            _ => None,
        }
    }
}

/// Details of a passing check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassInfo {
    pub grid: String,
    pub evaluated: u64,
    /// DSIC only: whether some misreport is strictly worse than the truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strictly_preferred: Option<bool>,
    /// CTPA only: the constant total allocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_allocation: Option<Utility>,
    /// Scale invariance only: pairs skipped because a rescaled profile is
    /// outside the mechanism's domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<u64>,
}

impl PassInfo {
    pub(crate) fn new(grid: &GridSpec, evaluated: u64) -> Self {
        PassInfo {
            grid: grid.label(),
            evaluated,
            strictly_preferred: None,
            total_allocation: None,
            skipped: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Pass(PassInfo),
    Violation { witness: Box<ViolationWitness> },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass(_))
    }

    pub fn witness(&self) -> Option<&ViolationWitness> {
        match self {
            Verdict::Violation { witness } => Some(witness),
            Verdict::Pass(_) => None,
        }
    }

    pub fn pass_info(&self) -> Option<&PassInfo> {
        match self {
            Verdict::Pass(info) => Some(info),
            Verdict::Violation { .. } => None,
        }
    }
}

impl From<Box<ViolationWitness>> for Verdict {
    fn from(witness: Box<ViolationWitness>) -> Self {
        Verdict::Violation { witness }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Search sequentially in a fixed order so the first witness is reproducible.
    pub deterministic: bool,
    /// Restrict incentive searches to these value vectors instead of the grid.
    pub values: Option<Vec<Vec<Money>>>,
}

impl CheckOptions {
    pub fn deterministic() -> Self {
        CheckOptions {
            deterministic: true,
            values: None,
        }
    }

    pub fn focused(values: Vec<Vec<Money>>) -> Self {
        CheckOptions {
            deterministic: true,
            values: Some(values),
        }
    }
}

/// Runs the check for `property`, using the default scale factors.
pub fn check<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    property: Property,
    opts: &CheckOptions,
) -> Verdict {
    match property {
        Property::Dsic => check_dsic(mech, grid, opts),
        Property::Mmic => check_mmic(mech, grid, opts),
        Property::Oca(c) => check_oca(mech, grid, c, opts),
        Property::OcaJoint => check_oca_joint_form(mech, grid, opts),
        Property::Scp(c) => check_scp(mech, grid, c, opts),
        Property::ScaleInvariance => {
            let factors: Vec<Ratio> = DEFAULT_SCALE_FACTORS
                .iter()
                .map(|&(n, d)| Ratio::new(n, d))
                .collect();
            check_scale_invariance(mech, grid, &factors, opts)
        }
        Property::Ctpa => check_ctpa(mech, grid, opts),
        Property::Anonymity => check_anonymity(mech, grid, opts),
    }
}

/// Recomputes `(lhs, rhs)` of a witness from scratch.
pub fn replay<M: Mechanism + ?Sized>(
    mech: &M,
    w: &ViolationWitness,
) -> Result<(Utility, Utility), ModelError> {
    let v = &w.values;
    match &w.evidence {
        Evidence::Manipulation(m) => {
            let honest = Utilities::compute(mech, &BidProfile::truthful(v), v)?;
            let dev = Utilities::compute(mech, &m.profile(v), v)?;
            let members = || m.coalition.iter().copied();
            Ok(match w.property {
                Property::Dsic => {
                    let i = *m.coalition.first().ok_or_else(|| {
                        ModelError::MalformedProfile("misreport without a bidder".into())
                    })?;
                    (honest.bidders[i], dev.bidders[i])
                }
                Property::Mmic => (honest.miner, dev.miner),
                Property::Oca(_) => (honest.joint, dev.coalition(members())),
                Property::OcaJoint => (honest.joint, dev.joint),
                Property::Scp(_) => (honest.coalition(members()), dev.coalition(members())),
                _ => {
                    return Err(ModelError::MalformedProfile(format!(
                        "{} witnesses do not carry manipulations",
                        w.property
                    )))
                }
            })
        }
        Evidence::Rescale { factor, index } => {
            let a = mech.evaluate(&BidProfile::from_bids(v));
            let scaled: Vec<Money> = v.iter().map(|b| b.scaled(factor.ratio())).collect();
            let b = mech.evaluate(&BidProfile::from_bids(&scaled));
            Ok((a.alloc[*index].into(), b.alloc[*index].into()))
        }
        Evidence::Reprofile { other } => {
            let a = mech.evaluate(&BidProfile::from_bids(v));
            let b = mech.evaluate(&BidProfile::from_bids(other));
            Ok((
                Utility::new(a.total_allocation()),
                Utility::new(b.total_allocation()),
            ))
        }
        Evidence::Permute {
            permutation,
            index,
            rule,
        } => {
            let permuted: Vec<Money> = permutation.iter().map(|&k| v[k]).collect();
            let a = mech.evaluate(&BidProfile::from_bids(v));
            let b = mech.evaluate(&BidProfile::from_bids(&permuted));
            let pick = |o: &crate::model::Outcome, k: usize| -> Utility {
                match rule {
                    OutcomeRule::Alloc => o.alloc[k].into(),
                    OutcomeRule::Pay => o.pay[k].into(),
                    OutcomeRule::Burn => o.burn[k].into(),
                }
            };
            Ok((pick(&a, permutation[*index]), pick(&b, *index)))
        }
    }
}

/// Whether two mechanisms produce identical effective outcomes on every grid
/// profile, fakes excluded.
pub fn equivalent_on_grid<A: Mechanism + ?Sized, B: Mechanism + ?Sized>(
    a: &A,
    b: &B,
    grid: &GridSpec,
) -> bool {
    grid.profiles().iter().all(|bids| {
        let p = BidProfile::from_bids(bids);
        effective_outcome(a, &p) == effective_outcome(b, &p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn property_strings_round_trip() {
        for s in [
            "dsic", "mmic", "oca:1", "oca:all", "oca_joint", "scp:2", "scp:all", "scale", "ctpa",
            "anon",
        ] {
            let p: Property = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("oca:x".parse::<Property>().is_err());
        assert!("bogus".parse::<Property>().is_err());
    }

    #[test]
    fn manipulation_reconstructs_bids() {
        let v = [Money::from_int(1), Money::frac(1, 2), Money::frac(1, 4)];
        let bids = [Money::from_int(1), Money::from_int(2), Money::ZERO];
        let m = Manipulation::from_bids(
            ManipulationKind::SideContract,
            &v,
            &bids,
            &[Money::from_int(3)],
            BTreeSet::from([1]),
        );
        assert_eq!(m.kept, BTreeSet::from([0]));
        assert_eq!(m.changed, BTreeMap::from([(1, Money::from_int(2))]));
        assert_eq!(m.real_bids(&v), bids.to_vec());
        assert_eq!(m.altered(&v), BTreeSet::from([1]));
        assert_eq!(m.profile(&v).len(), 4);
    }

    #[test]
    fn witness_json_has_flat_evidence() {
        let w = ViolationWitness::new(
            Property::Scp(CoalitionCap::Limit(1)),
            vec![Money::from_int(1)],
            Evidence::Manipulation(Manipulation {
                kind: ManipulationKind::SideContract,
                kept: BTreeSet::new(),
                changed: BTreeMap::from([(0, Money::from_int(2))]),
                fakes: vec![],
                coalition: BTreeSet::from([0]),
            }),
            Utility::frac(1, 4),
            Utility::frac(1, 2),
        );
        let json = serde_json::to_value(&w).unwrap();
        assert_eq!(json["property"], "scp:1");
        assert_eq!(json["manipulation"]["changed"]["0"], 2);
        assert_eq!(json["margin"], "1/4");
        let back: ViolationWitness = serde_json::from_value(json).unwrap();
        assert_eq!(back, *w);
        let verdict = Verdict::from(w);
        let text = serde_json::to_string(&verdict).unwrap();
        assert_eq!(serde_json::from_str::<Verdict>(&text).unwrap(), verdict);
    }
}
