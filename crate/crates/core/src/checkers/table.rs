//! Outcomes of deviating profiles, shared across value vectors.
//!
//! A deviation is a real-bid vector over the grid plus a fake multiset, and
//! its outcome does not depend on the true values. Small spaces are
//! evaluated once up front; larger ones are evaluated on demand.

use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism, Origin};
use crate::money::{Money, Probability, Utility};

/// Tables above this many bytes are not built.
const TABLE_BYTES: usize = 64 << 20;

const ABSENT: usize = usize::MAX;

/// Outcome of one deviation, indexed by real bidder. Omitted bidders read
/// as unallocated.
pub(crate) struct Eval<'a> {
    pub miner: Utility,
    pub fake_burn: Money,
    pub alloc: &'a [Probability],
    pub pay: &'a [Money],
    pub burn: &'a [Money],
}

impl Eval<'_> {
    pub fn bidder(&self, i: usize, value: Money) -> Utility {
        Utility::from(value * self.alloc[i]) - self.pay[i]
    }

    pub fn joint(&self, values: &[Money]) -> Utility {
        let mut total = -Utility::from(self.fake_burn);
        for (i, &v) in values.iter().enumerate() {
            if !self.alloc[i].is_zero() {
                total += Utility::from(v * self.alloc[i]);
            }
            if !self.burn[i].is_zero() {
                total -= Utility::from(self.burn[i]);
            }
        }
        total
    }
}

struct Table {
    miner: Vec<Utility>,
    fake_burn: Vec<Money>,
    alloc: Vec<Probability>,
    pay: Vec<Money>,
    burn: Vec<Money>,
}

/// Scratch space for on-demand evaluation.
pub(crate) struct Scratch {
    profile: BidProfile,
    slot: Vec<usize>,
    bids: Vec<Money>,
    alloc: Vec<Probability>,
    pay: Vec<Money>,
    burn: Vec<Money>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Scratch {
            profile: BidProfile::default(),
            slot: vec![ABSENT; n],
            bids: vec![Money::ZERO; n],
            alloc: vec![Probability::ZERO; n],
            pay: vec![Money::ZERO; n],
            burn: vec![Money::ZERO; n],
        }
    }
}

pub(crate) struct DeviationSpace<'m, M: ?Sized> {
    mech: &'m M,
    points: Vec<Money>,
    fakes: Vec<Vec<Money>>,
    tables: Vec<Option<Table>>,
}

impl<'m, M: Mechanism + ?Sized> DeviationSpace<'m, M> {
    /// Prepares the space for real-bid vectors of every length in `lengths`.
    pub fn new(
        mech: &'m M,
        grid: &GridSpec,
        fakes: Vec<Vec<Money>>,
        lengths: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut space = DeviationSpace {
            mech,
            points: grid.points().to_vec(),
            fakes,
            tables: Vec::new(),
        };
        for n in lengths {
            if space.tables.len() <= n {
                space.tables.resize_with(n + 1, || None);
            }
            if space.tables[n].is_none() {
                space.tables[n] = space.build(n);
            }
        }
        space
    }

    pub fn points(&self) -> &[Money] {
        &self.points
    }

    pub fn fakes(&self) -> &[Vec<Money>] {
        &self.fakes
    }

    fn entries(&self, n: usize) -> Option<usize> {
        let per_fake = self.points.len().checked_pow(u32::try_from(n).ok()?)?;
        per_fake.checked_mul(self.fakes.len())
    }

    fn build(&self, n: usize) -> Option<Table> {
        let entries = self.entries(n)?;
        let bytes = entries.checked_mul((2 + 3 * n) * std::mem::size_of::<Money>())?;
        if bytes > TABLE_BYTES {
            return None;
        }
        let mut t = Table {
            miner: Vec::with_capacity(entries),
            fake_burn: Vec::with_capacity(entries),
            alloc: vec![Probability::ZERO; entries * n],
            pay: vec![Money::ZERO; entries * n],
            burn: vec![Money::ZERO; entries * n],
        };
        let mut scratch = Scratch::new(n);
        let g = self.points.len();
        let mut idx = vec![0usize; n];
        for e in 0..entries {
            // Entry layout: fake multiset major, then real bids in mixed radix.
            let f = e / (entries / self.fakes.len());
            let mut rest = e % (entries / self.fakes.len());
            for pos in (0..n).rev() {
                idx[pos] = rest % g;
                rest /= g;
            }
            let (miner, fake_burn) = self.compute(&idx, f, &mut scratch);
            t.miner.push(miner);
            t.fake_burn.push(fake_burn);
            t.alloc[e * n..(e + 1) * n].copy_from_slice(&scratch.alloc);
            t.pay[e * n..(e + 1) * n].copy_from_slice(&scratch.pay);
            t.burn[e * n..(e + 1) * n].copy_from_slice(&scratch.burn);
        }
        Some(t)
    }

    fn compute(&self, idx: &[usize], f: usize, s: &mut Scratch) -> (Utility, Money) {
        for (b, &k) in s.bids.iter_mut().zip(idx) {
            *b = self.points[k];
        }
        s.profile.refill_nonzero(&s.bids, &self.fakes[f], &mut s.slot);
        s.alloc.fill(Probability::ZERO);
        s.pay.fill(Money::ZERO);
        s.burn.fill(Money::ZERO);
        if s.profile.is_empty() {
            return (Utility::ZERO, Money::ZERO);
        }
        let out = self.mech.evaluate(&s.profile);
        let mut miner = Utility::ZERO;
        let mut fake_burn = Money::ZERO;
        for (k, e) in s.profile.entries().iter().enumerate() {
            match e.origin {
                Origin::Real => miner += out.pay[k] - out.burn[k],
                Origin::Fake => fake_burn += out.burn[k],
            }
        }
        for (i, &k) in s.slot.iter().enumerate() {
            if k != ABSENT {
                s.alloc[i] = out.alloc[k];
                s.pay[i] = out.pay[k];
                s.burn[i] = out.burn[k];
            }
        }
        (miner - fake_burn, fake_burn)
    }

    /// Outcome of real bids `points[idx[i]]` plus multiset `fakes[f]`.
    pub fn eval<'s>(&'s self, idx: &[usize], f: usize, scratch: &'s mut Scratch) -> Eval<'s> {
        let n = idx.len();
        if let Some(Some(t)) = self.tables.get(n) {
            let g = self.points.len();
            let e = idx.iter().fold(f, |acc, &k| acc * g + k);
            return Eval {
                miner: t.miner[e],
                fake_burn: t.fake_burn[e],
                alloc: &t.alloc[e * n..(e + 1) * n],
                pay: &t.pay[e * n..(e + 1) * n],
                burn: &t.burn[e * n..(e + 1) * n],
            };
        }
        let (miner, fake_burn) = self.compute(idx, f, scratch);
        Eval {
            miner,
            fake_burn,
            alloc: &scratch.alloc,
            pay: &scratch.pay,
            burn: &scratch.burn,
        }
    }
}
