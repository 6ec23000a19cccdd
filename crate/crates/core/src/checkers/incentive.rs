//! DSIC, MMIC, OCA, and SCP searches.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use super::enumerate::{
    deviation_options, fake_multisets, keep_or_omit, search, value_vectors, Odometer,
};
use super::{
    CheckOptions, CoalitionCap, Evidence, Manipulation, ManipulationKind, PassInfo, Property,
    Verdict, ViolationWitness,
};
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism, Outcome};
use crate::money::{Money, Utility};
use super::table::{DeviationSpace, Eval, Scratch};
use crate::utility::{bidder_term, effective_outcome, miner_term, Utilities};

/// Truthful bidding is weakly dominant for every bidder on the grid.
pub fn check_dsic<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec, opts: &CheckOptions) -> Verdict {
    let points = grid.points();
    let mut units: Vec<(Vec<Money>, usize)> = Vec::new();
    for n in 1..=grid.max_profile_size() {
        for others in grid.profiles_of_len(n - 1) {
            for i in 0..n {
                units.push((others.clone(), i));
            }
        }
    }
    if let Some(focus) = &opts.values {
        units.retain(|(others, i)| focus.iter().any(|v| matches_others(v, others, *i)));
    }
    let count = AtomicU64::new(0);
    let strict = AtomicU64::new(0);
    let found = search(&units, opts.deterministic, &count, |(others, i), evaluated| {
        let i = *i;
        let outcomes: Vec<Outcome> = points
            .iter()
            .map(|&b| {
                let mut bids = others.clone();
                bids.insert(i, b);
                effective_outcome(mech, &BidProfile::from_bids(&bids))
            })
            .collect();
        *evaluated += outcomes.len() as u64;
        for (kv, &value) in points.iter().enumerate() {
            if let Some(focus) = &opts.values {
                let mut v = others.clone();
                v.insert(i, value);
                if !focus.contains(&v) {
                    continue;
                }
            }
            let honest = bidder_term(&outcomes[kv], i, value);
            for (kb, &bid) in points.iter().enumerate() {
                if kb == kv {
                    continue;
                }
                let dev = bidder_term(&outcomes[kb], i, value);
                if dev > honest {
                    let mut values = others.clone();
                    values.insert(i, value);
                    let mut bids = others.clone();
                    bids.insert(i, bid);
                    let mut m = Manipulation::from_bids(
                        ManipulationKind::Misreport,
                        &values,
                        &bids,
                        &[],
                        BTreeSet::from([i]),
                    );
                    // A misreport to 0 is recorded explicitly.
                    m.changed.insert(i, bid);
                    m.kept.remove(&i);
                    return Some(ViolationWitness::new(
                        Property::Dsic,
                        values,
                        Evidence::Manipulation(m),
                        honest,
                        dev,
                    ));
                }
                if honest > dev {
                    strict.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        None
    });
    match found {
        Some(w) => w.into(),
        None => {
            let mut info = PassInfo::new(grid, count.into_inner());
            info.strictly_preferred = Some(strict.into_inner() > 0);
            Verdict::Pass(info)
        }
    }
}

fn matches_others(v: &[Money], others: &[Money], i: usize) -> bool {
    v.len() == others.len() + 1
        && v[..i] == others[..i]
        && v[i + 1..] == others[i..]
}

/// The miner cannot gain by omitting real bids or adding fake ones.
pub fn check_mmic<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec, opts: &CheckOptions) -> Verdict {
    let units = value_vectors(grid, opts.values.as_deref());
    let fakes = fake_multisets(grid.positive_points(), grid.max_fake_bids());
    let space = DeviationSpace::new(mech, grid, fakes, lengths(&units));
    let count = AtomicU64::new(0);
    let found = search(&units, opts.deterministic, &count, |v, evaluated| {
        let honest = miner_utility_of(mech, &BidProfile::truthful(v));
        let options: Vec<Vec<Money>> = v.iter().map(|&x| keep_or_omit(x)).collect();
        deviations(&space, v, &options, CoalitionCap::Limit(0), evaluated, |bids, fk, e| {
            let dev = e.miner;
            (dev > honest).then(|| {
                ViolationWitness::new(
                    Property::Mmic,
                    v.clone(),
                    Evidence::Manipulation(Manipulation::from_bids(
                        ManipulationKind::MinerStrategy,
                        v,
                        bids,
                        fk,
                        BTreeSet::new(),
                    )),
                    honest,
                    dev,
                )
            })
        })
    });
    finish(found, grid, count)
}

/// No agreement between the miner and at most `cap` bidders beats the joint
/// utility of honest play.
pub fn check_oca<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    cap: CoalitionCap,
    opts: &CheckOptions,
) -> Verdict {
    let units = value_vectors(grid, opts.values.as_deref());
    let fakes = fake_multisets(grid.positive_points(), grid.max_fake_bids());
    let space = DeviationSpace::new(mech, grid, fakes, lengths(&units));
    let count = AtomicU64::new(0);
    let found = search(&units, opts.deterministic, &count, |v, evaluated| {
        let honest = Utilities::compute(mech, &BidProfile::truthful(v), v)
            .expect("values pair with reals")
            .joint;
        let options: Vec<Vec<Money>> = v
            .iter()
            .map(|&x| deviation_options(grid.points(), x))
            .collect();
        deviations(&space, v, &options, cap, evaluated, |bids, fk, e| {
            let (mask, rhs) = best_coalition(v, bids, e.miner, |i| e.bidder(i, v[i]), cap);
            (rhs > honest).then(|| {
                ViolationWitness::new(
                    Property::Oca(cap),
                    v.clone(),
                    Evidence::Manipulation(Manipulation::from_bids(
                        ManipulationKind::OffChainAgreement,
                        v,
                        bids,
                        fk,
                        members(mask),
                    )),
                    honest,
                    rhs,
                )
            })
        })
    });
    finish(found, grid, count)
}

/// Honest play maximizes joint utility over every agreement.
pub fn check_oca_joint_form<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    opts: &CheckOptions,
) -> Verdict {
    let units = value_vectors(grid, opts.values.as_deref());
    let fakes = fake_multisets(grid.positive_points(), grid.max_fake_bids());
    let space = DeviationSpace::new(mech, grid, fakes, lengths(&units));
    let count = AtomicU64::new(0);
    let found = search(&units, opts.deterministic, &count, |v, evaluated| {
        let honest = Utilities::compute(mech, &BidProfile::truthful(v), v)
            .expect("values pair with reals")
            .joint;
        let options: Vec<Vec<Money>> = v
            .iter()
            .map(|&x| deviation_options(grid.points(), x))
            .collect();
        deviations(&space, v, &options, CoalitionCap::All, evaluated, |bids, fk, e| {
            let dev = e.joint(v);
            (dev > honest).then(|| {
                let coalition = (0..v.len()).filter(|&i| !v[i].is_zero()).collect();
                ViolationWitness::new(
                    Property::OcaJoint,
                    v.clone(),
                    Evidence::Manipulation(Manipulation::from_bids(
                        ManipulationKind::OffChainAgreement,
                        v,
                        bids,
                        fk,
                        coalition,
                    )),
                    honest,
                    dev,
                )
            })
        })
    });
    finish(found, grid, count)
}

/// No side contract between the miner and at most `cap` bidders raises the
/// coalition's own aggregate utility.
pub fn check_scp<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    cap: CoalitionCap,
    opts: &CheckOptions,
) -> Verdict {
    let units = value_vectors(grid, opts.values.as_deref());
    let fakes = fake_multisets(grid.positive_points(), grid.max_fake_bids());
    let space = DeviationSpace::new(mech, grid, fakes, lengths(&units));
    let count = AtomicU64::new(0);
    let found = search(&units, opts.deterministic, &count, |v, evaluated| {
        let honest = Utilities::compute(mech, &BidProfile::truthful(v), v)
            .expect("values pair with reals");
        let options: Vec<Vec<Money>> = v
            .iter()
            .map(|&x| deviation_options(grid.points(), x))
            .collect();
        deviations(&space, v, &options, cap, evaluated, |bids, fk, e| {
            let miner_delta = e.miner - honest.miner;
            let delta = |i: usize| e.bidder(i, v[i]) - honest.bidders[i];
            let (mask, gain) = best_coalition(v, bids, miner_delta, delta, cap);
            gain.is_positive().then(|| {
                let coalition = members(mask);
                let lhs = honest.coalition(coalition.iter().copied());
                ViolationWitness::new(
                    Property::Scp(cap),
                    v.clone(),
                    Evidence::Manipulation(Manipulation::from_bids(
                        ManipulationKind::SideContract,
                        v,
                        bids,
                        fk,
                        coalition,
                    )),
                    lhs,
                    lhs + gain,
                )
            })
        })
    });
    finish(found, grid, count)
}

fn miner_utility_of<M: Mechanism + ?Sized>(mech: &M, p: &BidProfile) -> Utility {
    miner_term(&effective_outcome(mech, p), p)
}

fn finish(found: Option<Box<ViolationWitness>>, grid: &GridSpec, count: AtomicU64) -> Verdict {
    match found {
        Some(w) => w.into(),
        None => Verdict::Pass(PassInfo::new(grid, count.into_inner())),
    }
}

/// The coalition maximizing `base + Σ_{i∈C} term(i)`: every bidder whose bid
/// was altered, plus the best remaining positive terms while the cap allows.
/// Members come back as a bit mask.
fn best_coalition(
    v: &[Money],
    bids: &[Money],
    base: Utility,
    term: impl Fn(usize) -> Utility,
    cap: CoalitionCap,
) -> (u64, Utility) {
    assert!(v.len() <= 64, "coalition masks hold at most 64 bidders");
    let mut mask = 0u64;
    let mut total = base;
    let mut used = 0;
    for i in 0..v.len() {
        if is_altered(v[i], bids[i]) {
            mask |= 1 << i;
            total += term(i);
            used += 1;
        }
    }
    let mut room = cap.room(used);
    while room > 0 {
        let mut best: Option<(usize, Utility)> = None;
        for i in (0..v.len()).filter(|i| mask & (1 << i) == 0) {
            let t = term(i);
            if t.is_positive() && best.is_none_or(|(_, b)| t > b) {
                best = Some((i, t));
            }
        }
        let Some((i, t)) = best else { break };
        mask |= 1 << i;
        total += t;
        room -= 1;
    }
    (mask, total)
}

fn members(mask: u64) -> BTreeSet<usize> {
    (0..64).filter(|i| mask & (1 << i) != 0).collect()
}

fn is_altered(value: Money, bid: Money) -> bool {
    !bid.is_zero() && bid != value
}

fn lengths(units: &[Vec<Money>]) -> BTreeSet<usize> {
    units.iter().map(Vec::len).collect()
}

/// Visits every deviation from `v`: each real bidder picks from its options,
/// at most `cap` bidders alter their bid, and a fake multiset is appended.
/// Smaller fake multisets are visited first. Honest play itself is skipped.
fn deviations<M, W, F>(
    space: &DeviationSpace<'_, M>,
    v: &[Money],
    options: &[Vec<Money>],
    cap: CoalitionCap,
    evaluated: &mut u64,
    mut visit: F,
) -> Option<W>
where
    M: Mechanism + ?Sized,
    F: FnMut(&[Money], &[Money], &Eval<'_>) -> Option<W>,
{
    let points = space.points();
    let index_options: Vec<Vec<usize>> = options
        .iter()
        .map(|opts| {
            opts.iter()
                .map(|b| {
                    points
                        .binary_search(b)
                        .unwrap_or_else(|_| panic!("value {b} is not a grid point"))
                })
                .collect()
        })
        .collect();
    let mut bids = v.to_vec();
    let mut idx = vec![0usize; v.len()];
    let mut scratch = Scratch::new(v.len());
    for (f, fk) in space.fakes().iter().enumerate() {
        let mut od = Odometer::new(options.iter().map(Vec::len).collect());
        while let Some(digits) = od.advance() {
            let mut altered = 0;
            for (i, &d) in digits.iter().enumerate() {
                idx[i] = index_options[i][d];
                bids[i] = points[idx[i]];
                if is_altered(v[i], bids[i]) {
                    altered += 1;
                }
            }
            if !cap.admits(altered) || fk.is_empty() && bids == v {
                continue;
            }
            let e = space.eval(&idx, f, &mut scratch);
            *evaluated += 1;
            if let Some(w) = visit(&bids, fk, &e) {
                return Some(w);
            }
        }
    }
    None
}
