//! The concrete mechanism families.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, SpecError};
use crate::model::{BidProfile, BidderId, Mechanism, Outcome};
use crate::money::{Money, Reserve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Trivial,
    FirstPrice,
    SecondPrice,
    ThirdPrice,
    BurnedSecondPrice,
    GeneralizedBurnedFirstPrice,
    NonAnonymousPostedBurn,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Trivial,
        Family::FirstPrice,
        Family::SecondPrice,
        Family::ThirdPrice,
        Family::BurnedSecondPrice,
        Family::GeneralizedBurnedFirstPrice,
        Family::NonAnonymousPostedBurn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Trivial => "trivial",
            Family::FirstPrice => "first_price",
            Family::SecondPrice => "second_price",
            Family::ThirdPrice => "third_price",
            Family::BurnedSecondPrice => "burned_second_price",
            Family::GeneralizedBurnedFirstPrice => "generalized_burned_first_price",
            Family::NonAnonymousPostedBurn => "non_anonymous_posted_burn",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        let norm = s.trim().replace('-', "_").to_ascii_lowercase();
        Family::ALL.into_iter().find(|f| f.as_str() == norm)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Monotone payment curve of the generalized burned first-price family.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaymentCurve {
    /// `f(v) = v`.
    Identity,
    /// `f(v) = r`.
    ConstantReserve,
    /// `f(v) = slope · v + intercept`.
    Affine { slope: Money, intercept: Money },
    /// Step function: `f(v)` is the value of the last key not above `v`,
    /// and 0 below the first key.
    Tabulated { steps: Vec<(Money, Money)> },
}

impl PaymentCurve {
    pub fn eval(&self, v: Money, r: Money) -> Money {
        match self {
            PaymentCurve::Identity => v,
            PaymentCurve::ConstantReserve => r,
            PaymentCurve::Affine { slope, intercept } => v.scaled(slope.ratio()) + *intercept,
            PaymentCurve::Tabulated { steps } => {
                let k = steps.partition_point(|(key, _)| *key <= v);
                if k == 0 {
                    Money::ZERO
                } else {
                    steps[k - 1].1
                }
            }
        }
    }

    fn validate(&self, r: Reserve) -> Result<(), SpecError> {
        if let PaymentCurve::Tabulated { steps } = self {
            if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(SpecError::NonMonotoneCurve(
                    "table keys must be strictly increasing".into(),
                ));
            }
            if steps.windows(2).any(|w| w[0].1 > w[1].1) {
                return Err(SpecError::NonMonotoneCurve(format!("{self}")));
            }
        }
        if let Reserve::Finite(r) = r {
            // Monotone, so checking the reserve itself covers every v ≥ r.
            let at = self.eval(r, r);
            if at < r {
                return Err(SpecError::CurveBelowReserve(format!("f({r}) = {at} < {r}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PaymentCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PaymentCurve::Identity => f.write_str("id"),
            PaymentCurve::ConstantReserve => f.write_str("const"),
            PaymentCurve::Affine { slope, intercept } => write!(f, "{slope}v+{intercept}"),
            PaymentCurve::Tabulated { steps } => {
                let parts: Vec<String> = steps.iter().map(|(k, v)| format!("{k}:{v}")).collect();
                write!(f, "table[{}]", parts.join(","))
            }
        }
    }
}

/// Parses the `Display` forms: `id`, `const`, `<a>v+<b>`, `table[k:v,...]`.
impl FromStr for PaymentCurve {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Curve(s.to_string());
        let t = s.trim();
        match t {
            "id" | "identity" => return Ok(PaymentCurve::Identity),
            "const" | "constant" => return Ok(PaymentCurve::ConstantReserve),
            _ => {}
        }
        if let Some(body) = t.strip_prefix("table[").and_then(|b| b.strip_suffix(']')) {
            let steps = body
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (k, v) = p.split_once(':').ok_or_else(bad)?;
                    Ok((k.trim().parse()?, v.trim().parse()?))
                })
                .collect::<Result<Vec<(Money, Money)>, ParseError>>()?;
            return Ok(PaymentCurve::Tabulated { steps });
        }
        let (slope, intercept) = t.split_once("v+").ok_or_else(bad)?;
        Ok(PaymentCurve::Affine {
            slope: slope.trim().parse()?,
            intercept: intercept.trim().parse()?,
        })
    }
}

/// Family tag plus parameters; the serialized form of a catalog mechanism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Reserve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<PaymentCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_star: Option<BidderId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_map: Option<BTreeMap<BidderId, Reserve>>,
}

impl MechanismSpec {
    pub fn of(family: Family) -> Self {
        MechanismSpec {
            family,
            r: None,
            f: None,
            i_star: None,
            r_map: None,
        }
    }

    pub fn trivial() -> Self {
        Self::of(Family::Trivial)
    }

    pub fn first_price() -> Self {
        Self::of(Family::FirstPrice)
    }

    pub fn second_price() -> Self {
        Self::of(Family::SecondPrice)
    }

    pub fn third_price() -> Self {
        Self::of(Family::ThirdPrice)
    }

    pub fn burned_second_price(r: impl Into<Reserve>) -> Self {
        MechanismSpec {
            r: Some(r.into()),
            ..Self::of(Family::BurnedSecondPrice)
        }
    }

    pub fn generalized_burned_first_price(f: PaymentCurve, r: impl Into<Reserve>) -> Self {
        MechanismSpec {
            r: Some(r.into()),
            f: Some(f),
            ..Self::of(Family::GeneralizedBurnedFirstPrice)
        }
    }

    pub fn non_anonymous_posted_burn(i_star: BidderId, r: impl Into<Reserve>) -> Self {
        MechanismSpec {
            r: Some(r.into()),
            i_star: Some(i_star),
            ..Self::of(Family::NonAnonymousPostedBurn)
        }
    }

    pub fn build(&self) -> Result<CatalogMechanism, SpecError> {
        make_mechanism(self.clone())
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        let mut params = Vec::new();
        if let Some(i) = self.i_star {
            params.push(format!("i*={i}"));
        }
        if let Some(c) = &self.f {
            params.push(format!("f={c}"));
        }
        if let Some(r) = self.r {
            params.push(format!("r={r}"));
        }
        if !params.is_empty() {
            write!(f, "({})", params.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Rule {
    Trivial,
    FirstPrice,
    SecondPrice,
    ThirdPrice,
    BurnedSecondPrice(Reserve),
    GeneralizedBurnedFirstPrice(PaymentCurve, Reserve),
    PostedBurn(BidderId, Reserve),
}

/// A validated mechanism from the catalog.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogMechanism {
    spec: MechanismSpec,
    rule: Rule,
}

/// Validates `spec` and returns the corresponding rule triple.
pub fn make_mechanism(spec: MechanismSpec) -> Result<CatalogMechanism, SpecError> {
    let r = spec.r.unwrap_or_default();
    let rule = match spec.family {
        Family::Trivial => Rule::Trivial,
        Family::FirstPrice => Rule::FirstPrice,
        Family::SecondPrice => Rule::SecondPrice,
        Family::ThirdPrice => Rule::ThirdPrice,
        Family::BurnedSecondPrice => Rule::BurnedSecondPrice(r),
        Family::GeneralizedBurnedFirstPrice => {
            let f = spec.f.clone().ok_or(SpecError::MissingParameter {
                family: "generalized_burned_first_price",
                param: "f",
            })?;
            f.validate(r)?;
            Rule::GeneralizedBurnedFirstPrice(f, r)
        }
        Family::NonAnonymousPostedBurn => {
            let star = spec.i_star.ok_or(SpecError::MissingParameter {
                family: "non_anonymous_posted_burn",
                param: "i_star",
            })?;
            if star.is_fake() {
                return Err(SpecError::FakeIdentity(star.to_string()));
            }
            let mut rates = spec.r_map.clone().unwrap_or_default();
            if let Some(r) = spec.r {
                rates.entry(star).or_insert(r);
            }
            let finite: Vec<BidderId> = rates
                .iter()
                .filter(|(_, r)| !r.is_infinite())
                .map(|(id, _)| *id)
                .collect();
            if finite.len() > 1 {
                return Err(SpecError::TooManyFiniteRates(finite.len()));
            }
            if let Some(other) = finite.iter().find(|id| **id != star) {
                return Err(SpecError::ForeignRate(other.to_string()));
            }
            Rule::PostedBurn(star, rates.get(&star).copied().unwrap_or(Reserve::Infinite))
        }
    };
    Ok(CatalogMechanism { spec, rule })
}

impl CatalogMechanism {
    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }
}

fn top_three(p: &BidProfile) -> (usize, Money, Money) {
    let w = p.argmax().expect("non-empty profile");
    let mut second = Money::ZERO;
    let mut third = Money::ZERO;
    for (k, b) in p.bids().enumerate() {
        if k == w {
            continue;
        }
        if b > second {
            third = second;
            second = b;
        } else if b > third {
            third = b;
        }
    }
    (w, second, third)
}

impl Mechanism for CatalogMechanism {
    fn evaluate(&self, p: &BidProfile) -> Outcome {
        let n = p.len();
        if n == 0 {
            return Outcome::empty(0);
        }
        match &self.rule {
            Rule::Trivial => Outcome::empty(n),
            Rule::FirstPrice => {
                let w = p.argmax().expect("non-empty");
                Outcome::award(n, w, p.entries()[w].bid, Money::ZERO)
            }
            Rule::SecondPrice => {
                let (w, second, _) = top_three(p);
                Outcome::award(n, w, second, Money::ZERO)
            }
            Rule::ThirdPrice => {
                let (w, _, third) = top_three(p);
                Outcome::award(n, w, third, Money::ZERO)
            }
            Rule::BurnedSecondPrice(r) => {
                let (w, second, _) = top_three(p);
                match *r {
                    Reserve::Finite(r) if p.entries()[w].bid >= r => {
                        Outcome::award(n, w, second.max(r), r)
                    }
                    _ => Outcome::empty(n),
                }
            }
            Rule::GeneralizedBurnedFirstPrice(f, r) => {
                let w = p.argmax().expect("non-empty");
                let top = p.entries()[w].bid;
                match *r {
                    Reserve::Finite(r) if top >= r => {
                        Outcome::award(n, w, f.eval(top, r).min(top), r)
                    }
                    _ => Outcome::empty(n),
                }
            }
            Rule::PostedBurn(star, rate) => match (p.position_of(*star), *rate) {
                (Some(k), Reserve::Finite(r)) if p.entries()[k].bid >= r => {
                    Outcome::award(n, k, r, r)
                }
                _ => Outcome::empty(n),
            },
        }
    }

    fn name(&self) -> String {
        self.spec.to_string()
    }

    fn is_anonymous(&self) -> bool {
        !matches!(self.rule, Rule::PostedBurn(..))
    }
}

/// The fixed curve menu for a reserve: identity, `v/2 + r`, and constant `r`.
pub fn curve_menu(r: Reserve) -> [PaymentCurve; 3] {
    let intercept = r.finite().unwrap_or(Money::ZERO);
    [
        PaymentCurve::Identity,
        PaymentCurve::Affine {
            slope: Money::frac(1, 2),
            intercept,
        },
        PaymentCurve::ConstantReserve,
    ]
}

/// Instantiates `family` once per reserve (and per menu curve for the
/// generalized burned first-price family). Parameter-free families yield a
/// single mechanism.
pub fn enumerate_family(family: Family, reserves: &[Reserve]) -> Vec<CatalogMechanism> {
    let specs: Vec<MechanismSpec> = match family {
        Family::BurnedSecondPrice => reserves
            .iter()
            .map(|&r| MechanismSpec::burned_second_price(r))
            .collect(),
        Family::GeneralizedBurnedFirstPrice => reserves
            .iter()
            .flat_map(|&r| {
                curve_menu(r)
                    .into_iter()
                    .map(move |f| MechanismSpec::generalized_burned_first_price(f, r))
            })
            .collect(),
        Family::NonAnonymousPostedBurn => reserves
            .iter()
            .map(|&r| MechanismSpec::non_anonymous_posted_burn(BidderId::real(0), r))
            .collect(),
        other => vec![MechanismSpec::of(other)],
    };
    specs
        .into_iter()
        .map(|s| make_mechanism(s).expect("menu curves are valid for their reserve"))
        .collect()
}

/// One representative of every family, with reserve 1 where a reserve applies.
pub fn default_catalog() -> Vec<CatalogMechanism> {
    let one = Money::from_int(1);
    [
        MechanismSpec::trivial(),
        MechanismSpec::first_price(),
        MechanismSpec::second_price(),
        MechanismSpec::third_price(),
        MechanismSpec::burned_second_price(one),
        MechanismSpec::generalized_burned_first_price(PaymentCurve::Identity, one),
        MechanismSpec::non_anonymous_posted_burn(BidderId::real(0), one),
    ]
    .into_iter()
    .map(|s| make_mechanism(s).expect("catalog specs are valid"))
    .collect()
}
