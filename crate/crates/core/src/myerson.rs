//! Monotonicity and the unique DSIC payment of a tabulated allocation rule.
//!
//! Payments use a left Riemann sum on the grid, treating the allocation as
//! constant on `[g_k, g_{k+1})`:
//!
//! `p_i(b) = a_i(b) · b_i − Σ_{g_k < b_i} a_i(g_k, b_{-i}) · (g_{k+1} − g_k)`.
//!
//! For anonymous tables the integrand is read with bidder `i` moved to the
//! front of the profile, so that under lowest-index tie breaking a tie at
//! `t` counts in the bidder's favor. That makes every threshold closed, and
//! the sum is then exact for the deterministic catalog rules.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MyersonError;
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism, Outcome};
use crate::money::{Money, Probability, Ratio, Utility};

/// An allocation rule given by its values on every grid profile.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AllocationRepr", into = "AllocationRepr")]
pub struct TabulatedAllocation {
    grid: GridSpec,
    anonymous: bool,
    table: BTreeMap<Vec<Money>, Vec<Probability>>,
}

impl fmt::Debug for TabulatedAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TabulatedAllocation")
            .field("grid", &self.grid)
            .field("anonymous", &self.anonymous)
            .field("profiles", &self.table.len())
            .finish()
    }
}

impl TabulatedAllocation {
    /// Validates that `table` covers every grid profile with feasible entries.
    pub fn new(
        grid: GridSpec,
        anonymous: bool,
        table: BTreeMap<Vec<Money>, Vec<Probability>>,
    ) -> Result<Self, MyersonError> {
        for bids in grid.profiles() {
            let Some(a) = table.get(&bids) else {
                return Err(MyersonError::OffGrid(show(&bids)));
            };
            let total: Ratio = a.iter().map(|p| p.ratio()).sum();
            if a.len() != bids.len() || total > Ratio::from_integer(1) {
                return Err(MyersonError::Infeasible(show(&bids)));
            }
        }
        if table.len() != grid.profiles().len() {
            let stray = table
                .keys()
                .find(|k| k.is_empty() || k.len() > grid.max_profile_size() || !k.iter().all(|&b| grid.contains(b)))
                .map(|k| show(k))
                .unwrap_or_default();
            return Err(MyersonError::OffGrid(stray));
        }
        Ok(TabulatedAllocation {
            grid,
            anonymous,
            table,
        })
    }

    pub fn from_fn(
        grid: GridSpec,
        anonymous: bool,
        f: impl Fn(&[Money]) -> Vec<Probability>,
    ) -> Result<Self, MyersonError> {
        let table = grid.profiles().into_iter().map(|b| {
            let a = f(&b);
            (b, a)
        });
        Self::new(grid.clone(), anonymous, table.collect())
    }

    /// The allocation rule of `mech` on every grid profile.
    pub fn from_mechanism<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec) -> Self {
        Self::from_fn(grid.clone(), mech.is_anonymous(), |b| {
            mech.evaluate(&BidProfile::from_bids(b)).alloc
        })
        .expect("mechanism outcomes are feasible")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_anonymous(&self) -> bool {
        self.anonymous
    }

    pub fn get(&self, bids: &[Money]) -> Option<&[Probability]> {
        self.table.get(bids).map(Vec::as_slice)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &Vec<Money>> {
        self.table.keys()
    }

    /// `a_i(t, b_{-i})` as used inside the payment integral.
    fn view(&self, bids: &[Money], i: usize, t: Money) -> Result<Probability, MyersonError> {
        let (key, slot) = if self.anonymous {
            let mut key = Vec::with_capacity(bids.len());
            key.push(t);
            key.extend(bids.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &b)| b));
            (key, 0)
        } else {
            let mut key = bids.to_vec();
            key[i] = t;
            (key, i)
        };
        self.get(&key)
            .map(|a| a[slot])
            .ok_or_else(|| MyersonError::OffGrid(show(&key)))
    }

    fn actual(&self, bids: &[Money], i: usize, t: Money) -> Result<Probability, MyersonError> {
        let mut key = bids.to_vec();
        key[i] = t;
        self.get(&key)
            .map(|a| a[i])
            .ok_or_else(|| MyersonError::OffGrid(show(&key)))
    }

    /// Checks the axis of bidder `i` through `bids`: the integrand must be
    /// non-decreasing, and the actual allocation at each grid bid must lie
    /// between the integrand there and just below.
    fn check_axis(&self, bids: &[Money], i: usize) -> Result<(), MonotonicityViolation> {
        let points = self.grid.points();
        let mut prev: Option<(Money, Probability)> = None;
        for &t in points {
            let view = self.view(bids, i, t).expect("complete table");
            let act = self.actual(bids, i, t).expect("complete table");
            let lower = prev.map_or(Probability::ZERO, |(_, p)| p);
            let fail = |lo: Money, hi: Money, a: Probability, b: Probability| MonotonicityViolation {
                profile: bids.to_vec(),
                index: i,
                lower_bid: lo,
                higher_bid: hi,
                lower_alloc: a,
                higher_alloc: b,
            };
            if let Some((pt, pv)) = prev {
                if view < pv {
                    return Err(fail(pt, t, pv, view));
                }
                if act < lower {
                    return Err(fail(pt, t, lower, act));
                }
            }
            if act > view {
                // Reachable only through a tie-breaking rule that favors the
                // bidder in place but not at the front.
                return Err(fail(t, t, act, view));
            }
            prev = Some((t, view));
        }
        Ok(())
    }

    /// Whether every bidder's allocation is non-decreasing in its own bid.
    pub fn is_monotone(&self) -> Monotonicity {
        for bids in self.table.keys() {
            for i in 0..bids.len() {
                if let Err(v) = self.check_axis(bids, i) {
                    return Monotonicity {
                        monotone: false,
                        counterexample: Some(v),
                    };
                }
            }
        }
        Monotonicity {
            monotone: true,
            counterexample: None,
        }
    }
}

fn show(bids: &[Money]) -> String {
    let parts: Vec<String> = bids.iter().map(ToString::to_string).collect();
    format!("({})", parts.join(", "))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub profile: Vec<Money>,
    pub index: usize,
    pub lower_bid: Money,
    pub higher_bid: Money,
    pub lower_alloc: Probability,
    pub higher_alloc: Probability,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub monotone: bool,
    pub counterexample: Option<MonotonicityViolation>,
}

impl From<MonotonicityViolation> for MyersonError {
    fn from(v: MonotonicityViolation) -> Self {
        MyersonError::NotMonotone {
            profile: show(&v.profile),
            index: v.index,
            lower: format!("a({}) = {}", v.lower_bid, v.lower_alloc),
            higher: format!("a({}) = {}", v.higher_bid, v.higher_alloc),
        }
    }
}

/// The DSIC payment of bidder `i` at the grid profile `bids`.
pub fn myerson_payment(
    alloc: &TabulatedAllocation,
    bids: &[Money],
    i: usize,
) -> Result<Money, MyersonError> {
    if alloc.get(bids).is_none() || i >= bids.len() {
        return Err(MyersonError::OffGrid(show(bids)));
    }
    alloc.check_axis(bids, i)?;
    let points = alloc.grid.points();
    let b = bids[i];
    let mut integral = Ratio::from_integer(0);
    for w in points.windows(2) {
        if w[0] >= b {
            break;
        }
        let a = alloc.view(bids, i, w[0])?;
        integral += a.ratio() * (w[1].ratio() - w[0].ratio());
    }
    let a = alloc.actual(bids, i, b)?;
    let p = Utility::new(a.ratio() * b.ratio() - integral);
    Money::new(p.ratio()).map_err(|_| MyersonError::NegativePayment(show(bids), i))
}

/// A mechanism defined by tables on a grid. Evaluating it off the grid
/// panics; `defined_on` reports coverage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabulatedMechanism {
    name: String,
    anonymous: bool,
    table: BTreeMap<Vec<Money>, Outcome>,
}

impl TabulatedMechanism {
    pub fn outcome(&self, bids: &[Money]) -> Option<&Outcome> {
        self.table.get(bids)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Mechanism for TabulatedMechanism {
    fn evaluate(&self, profile: &BidProfile) -> Outcome {
        if profile.is_empty() {
            return Outcome::empty(0);
        }
        let bids = profile.bid_vec();
        match self.table.get(&bids) {
            Some(out) => out.clone(),
            None => panic!("{} is not tabulated at {}", self.name, show(&bids)),
        }
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn is_anonymous(&self) -> bool {
        self.anonymous
    }

    fn defined_on(&self, bids: &[Money]) -> bool {
        bids.is_empty() || self.table.contains_key(bids)
    }
}

/// Per-profile burns, one entry per bidder.
pub type BurnTable = BTreeMap<Vec<Money>, Vec<Money>>;

/// Burns of `mech` on every grid profile.
pub fn burn_table<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec) -> BurnTable {
    grid.profiles()
        .into_iter()
        .map(|b| {
            let burn = mech.evaluate(&BidProfile::from_bids(&b)).burn;
            (b, burn)
        })
        .collect()
}

/// Packages `alloc` with its Myerson payments and the given burns.
pub fn derive_dsic_mechanism(
    alloc: &TabulatedAllocation,
    burn: &BurnTable,
) -> Result<TabulatedMechanism, MyersonError> {
    let mut table = BTreeMap::new();
    for (bids, a) in &alloc.table {
        let b = burn
            .get(bids)
            .filter(|b| b.len() == bids.len())
            .ok_or_else(|| MyersonError::MissingBurn(show(bids)))?;
        let mut pay = Vec::with_capacity(bids.len());
        for i in 0..bids.len() {
            let p = myerson_payment(alloc, bids, i)?;
            if b[i] > p {
                return Err(MyersonError::BurnExceedsPayment {
                    profile: show(bids),
                    index: i,
                    burn: b[i].to_string(),
                    payment: p.to_string(),
                });
            }
            pay.push(p);
        }
        table.insert(
            bids.clone(),
            Outcome {
                alloc: a.clone(),
                pay,
                burn: b.clone(),
            },
        );
    }
    Ok(TabulatedMechanism {
        name: format!("myerson[{}]", alloc.grid.label()),
        anonymous: alloc.anonymous,
        table,
    })
}

#[derive(Serialize, Deserialize)]
struct AllocationRepr {
    grid: GridSpec,
    anonymous: bool,
    rows: Vec<AllocationRow>,
}

#[derive(Serialize, Deserialize)]
struct AllocationRow {
    profile: Vec<Money>,
    alloc: Vec<Probability>,
}

impl TryFrom<AllocationRepr> for TabulatedAllocation {
    type Error = MyersonError;

    fn try_from(r: AllocationRepr) -> Result<Self, Self::Error> {
        let table = r.rows.into_iter().map(|row| (row.profile, row.alloc)).collect();
        TabulatedAllocation::new(r.grid, r.anonymous, table)
    }
}

impl From<TabulatedAllocation> for AllocationRepr {
    fn from(t: TabulatedAllocation) -> Self {
        AllocationRepr {
            grid: t.grid,
            anonymous: t.anonymous,
            rows: t
                .table
                .into_iter()
                .map(|(profile, alloc)| AllocationRow { profile, alloc })
                .collect(),
        }
    }
}
