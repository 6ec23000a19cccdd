//! Scale invariance, constant total allocation, and anonymity.
//!
//! These look at the rules themselves, so profiles are evaluated as given,
//! zero bids included.

use std::sync::atomic::{AtomicU64, Ordering};

use super::enumerate::search;
use super::{CheckOptions, Evidence, OutcomeRule, PassInfo, Property, Verdict, ViolationWitness};
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism, Outcome};
use crate::money::{Money, Ratio, Utility};

/// Factors used when none are given: `1/2`, `2`, `3`.
pub const DEFAULT_SCALE_FACTORS: &[(i64, i64)] = &[(1, 2), (2, 1), (3, 1)];

/// `a(α·b) = a(b)` for every grid profile and listed factor.
pub fn check_scale_invariance<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    factors: &[Ratio],
    opts: &CheckOptions,
) -> Verdict {
    let profiles = grid.profiles();
    let count = AtomicU64::new(0);
    let skipped = AtomicU64::new(0);
    let found = search(&profiles, opts.deterministic, &count, |b, evaluated| {
        let base = mech.evaluate(&BidProfile::from_bids(b));
        for &alpha in factors {
            assert!(alpha > Ratio::from_integer(0), "scale factors must be positive");
            let scaled: Vec<Money> = b.iter().map(|x| x.scaled(alpha)).collect();
            if !mech.defined_on(b) || !mech.defined_on(&scaled) {
                skipped.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let other = mech.evaluate(&BidProfile::from_bids(&scaled));
            *evaluated += 1;
            let Some(k) = (0..b.len()).find(|&k| base.alloc[k] != other.alloc[k]) else {
                continue;
            };
            let (lo, hi) = (Utility::from(base.alloc[k]), Utility::from(other.alloc[k]));
            let factor = Money::new(alpha).expect("positive factor");
            let (values, factor, lhs, rhs) = if lo < hi {
                (b.clone(), factor, lo, hi)
            } else {
                let back = Money::new(alpha.recip()).expect("positive factor");
                (scaled, back, hi, lo)
            };
            return Some(ViolationWitness::new(
                Property::ScaleInvariance,
                values,
                Evidence::Rescale { factor, index: k },
                lhs,
                rhs,
            ));
        }
        None
    });
    match found {
        Some(w) => w.into(),
        None => {
            let mut info = PassInfo::new(grid, count.into_inner());
            info.skipped = Some(skipped.into_inner());
            Verdict::Pass(info)
        }
    }
}

/// `Σ_i a_i(b)` is the same constant on every grid profile.
pub fn check_ctpa<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec, opts: &CheckOptions) -> Verdict {
    let profiles = grid.profiles();
    let total = |b: &[Money]| mech.evaluate(&BidProfile::from_bids(b)).total_allocation();
    let reference = total(&profiles[0]);
    let count = AtomicU64::new(1);
    let found = search(&profiles[1..], opts.deterministic, &count, |b, evaluated| {
        *evaluated += 1;
        let t = total(b);
        if t == reference {
            return None;
        }
        let (values, other, lhs, rhs) = if t < reference {
            (b.clone(), profiles[0].clone(), t, reference)
        } else {
            (profiles[0].clone(), b.clone(), reference, t)
        };
        Some(ViolationWitness::new(
            Property::Ctpa,
            values,
            Evidence::Reprofile { other },
            Utility::new(lhs),
            Utility::new(rhs),
        ))
    });
    match found {
        Some(w) => w.into(),
        None => {
            let mut info = PassInfo::new(grid, count.into_inner());
            info.total_allocation = Some(Utility::new(reference));
            Verdict::Pass(info)
        }
    }
}

/// `x(π(b)) = π(x(b))` for allocation, payment, and burn, over every
/// permutation of every grid profile without tied bids.
pub fn check_anonymity<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    opts: &CheckOptions,
) -> Verdict {
    let profiles: Vec<Vec<Money>> = grid
        .profiles()
        .into_iter()
        .filter(|b| b.len() >= 2 && tie_free(b))
        .collect();
    let count = AtomicU64::new(0);
    let found = search(&profiles, opts.deterministic, &count, |b, evaluated| {
        let base = mech.evaluate(&BidProfile::from_bids(b));
        for perm in permutations(b.len()).into_iter().skip(1) {
            let permuted: Vec<Money> = perm.iter().map(|&k| b[k]).collect();
            let other = mech.evaluate(&BidProfile::from_bids(&permuted));
            *evaluated += 1;
            if let Some(w) = compare_permuted(b, &permuted, &perm, &base, &other) {
                return Some(w);
            }
        }
        None
    });
    match found {
        Some(w) => w.into(),
        None => Verdict::Pass(PassInfo::new(grid, count.into_inner())),
    }
}

fn compare_permuted(
    b: &[Money],
    permuted: &[Money],
    perm: &[usize],
    base: &Outcome,
    other: &Outcome,
) -> Option<Box<ViolationWitness>> {
    for rule in [OutcomeRule::Alloc, OutcomeRule::Pay, OutcomeRule::Burn] {
        let pick = |o: &Outcome, k: usize| -> Utility {
            match rule {
                OutcomeRule::Alloc => o.alloc[k].into(),
                OutcomeRule::Pay => o.pay[k].into(),
                OutcomeRule::Burn => o.burn[k].into(),
            }
        };
        for k in 0..perm.len() {
            let expected = pick(base, perm[k]);
            let actual = pick(other, k);
            if expected == actual {
                continue;
            }
            let evidence_for = |permutation: Vec<usize>, index: usize| Evidence::Permute {
                permutation,
                index,
                rule,
            };
            return Some(if expected < actual {
                ViolationWitness::new(
                    Property::Anonymity,
                    b.to_vec(),
                    evidence_for(perm.to_vec(), k),
                    expected,
                    actual,
                )
            } else {
                let mut inverse = vec![0; perm.len()];
                for (pos, &src) in perm.iter().enumerate() {
                    inverse[src] = pos;
                }
                ViolationWitness::new(
                    Property::Anonymity,
                    permuted.to_vec(),
                    evidence_for(inverse, perm[k]),
                    actual,
                    expected,
                )
            });
        }
    }
    None
}

fn tie_free(b: &[Money]) -> bool {
    let mut sorted = b.to_vec();
    sorted.sort();
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// All permutations of `0..n` in lexicographic order, identity first.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}
