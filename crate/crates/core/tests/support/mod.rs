// Independent reference rules used as oracles by several test targets.
// They work on plain rationals and never call into the checkers.
#![allow(dead_code)]

use num_rational::Rational64 as Q;
use tfmlab::money::Money;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

pub fn m(n: i64, d: i64) -> Money {
    Money::frac(n, d)
}

pub fn qs(v: &[Money]) -> Vec<Q> {
    v.iter().map(|x| x.ratio()).collect()
}

#[derive(Clone, Copy, Debug)]
pub enum Rule {
    SecondPrice,
    ThirdPrice,
    /// Burned second price with reserve r.
    Bsp(Q),
    /// Burned first price with identity payments and reserve r.
    GbfpIdentity(Q),
    /// Only bidder 0 can win, at posted price r, all burnt.
    PostedBurn(Q),
}

/// Winner position, payment, burn. Zero bids do not take part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefOutcome {
    pub winner: Option<usize>,
    pub pay: Q,
    pub burn: Q,
}

const NOTHING: RefOutcome = RefOutcome {
    winner: None,
    pay: Q::ZERO,
    burn: Q::ZERO,
};

pub fn reference(rule: Rule, bids: &[Q]) -> RefOutcome {
    let zero = Q::ZERO;
    let mut order: Vec<usize> = (0..bids.len()).filter(|&i| bids[i] > zero).collect();
    // Highest first; equal bids keep index order.
    order.sort_by(|&a, &b| bids[b].cmp(&bids[a]).then(a.cmp(&b)));
    let nth = |k: usize| order.get(k).map(|&i| bids[i]).unwrap_or(zero);
    let Some(&top) = order.first() else {
        return NOTHING;
    };
    let award = |pay: Q, burn: Q| RefOutcome {
        winner: Some(top),
        pay,
        burn,
    };
    match rule {
        Rule::SecondPrice => award(nth(1), zero),
        Rule::ThirdPrice => award(nth(2), zero),
        Rule::Bsp(r) if bids[top] >= r => award(nth(1).max(r), r),
        Rule::GbfpIdentity(r) if bids[top] >= r => award(bids[top], r),
        Rule::PostedBurn(r) if bids.first().is_some_and(|&b| b > zero && b >= r) => RefOutcome {
            winner: Some(0),
            pay: r,
            burn: r,
        },
        _ => NOTHING,
    }
}

/// Miner utility plus the utilities of `members`, when real bidders with
/// `values` bid `real` and the miner adds `fakes`.
pub fn coalition_utility(rule: Rule, values: &[Q], real: &[Q], fakes: &[Q], members: &[usize]) -> Q {
    let mut all = real.to_vec();
    all.extend_from_slice(fakes);
    let out = reference(rule, &all);
    let miner = match out.winner {
        Some(w) if w < real.len() => out.pay - out.burn,
        Some(_) => -out.burn,
        None => Q::ZERO,
    };
    let bidders: Q = members
        .iter()
        .map(|&i| if out.winner == Some(i) { values[i] - out.pay } else { Q::ZERO })
        .sum();
    miner + bidders
}

pub fn bidder_utility(rule: Rule, values: &[Q], real: &[Q], fakes: &[Q], i: usize) -> Q {
    coalition_utility(rule, values, real, fakes, &[i]) - coalition_utility(rule, values, real, fakes, &[])
}

/// Value served minus burn, over every real bidder and the miner.
pub fn joint_utility(rule: Rule, values: &[Q], real: &[Q], fakes: &[Q]) -> Q {
    let everyone: Vec<usize> = (0..values.len()).collect();
    coalition_utility(rule, values, real, fakes, &everyone)
}
