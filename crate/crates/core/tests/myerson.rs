use std::collections::BTreeMap;

use tfmlab::catalog::MechanismSpec;
use tfmlab::checkers::{check, equivalent_on_grid, CheckOptions, Property};
use tfmlab::grid::GridSpec;
use tfmlab::model::{BidProfile, Mechanism};
use tfmlab::money::{Money, Probability};
use tfmlab::myerson::{burn_table, derive_dsic_mechanism, myerson_payment, TabulatedAllocation};

fn grid(s: &str) -> GridSpec {
    s.parse().unwrap()
}

// Second-highest bid among the others, the textbook second-price payment.
fn second(bids: &[Money], i: usize) -> Money {
    let top = bids.iter().copied().max().unwrap();
    if bids[i] < top || bids.iter().position(|&b| b == top) != Some(i) {
        return Money::ZERO;
    }
    bids.iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &b)| b)
        .max()
        .unwrap_or(Money::ZERO)
}

#[test]
fn second_price_payments_are_the_second_bid() {
    let g = grid("0..3:1/2");
    let sp = MechanismSpec::second_price().build().unwrap();
    let alloc = TabulatedAllocation::from_mechanism(&sp, &g);
    assert!(alloc.is_monotone().monotone);
    for bids in g.profiles() {
        for i in 0..bids.len() {
            assert_eq!(myerson_payment(&alloc, &bids, i).unwrap(), second(&bids, i), "{bids:?} bidder {i}");
        }
    }
}

#[test]
fn burned_second_price_is_recovered_from_its_allocation() {
    let g = grid("0..3:1/2");
    let bsp = MechanismSpec::burned_second_price(Money::from_int(1)).build().unwrap();
    let derived =
        derive_dsic_mechanism(&TabulatedAllocation::from_mechanism(&bsp, &g), &burn_table(&bsp, &g)).unwrap();
    assert!(equivalent_on_grid(&derived, &bsp, &g));
    assert!(check(&derived, &g, Property::Dsic, &CheckOptions::deterministic()).is_pass());
}

#[test]
fn payments_scale_with_bids() {
    let small = grid("0..2:1/2");
    let large = grid("0..4:1");
    let sp = MechanismSpec::second_price().build().unwrap();
    let (a, b) = (
        TabulatedAllocation::from_mechanism(&sp, &small),
        TabulatedAllocation::from_mechanism(&sp, &large),
    );
    for bids in small.profiles() {
        let doubled: Vec<Money> = bids.iter().map(|x| x.scaled(2.into())).collect();
        for i in 0..bids.len() {
            let p = myerson_payment(&a, &bids, i).unwrap();
            assert_eq!(myerson_payment(&b, &doubled, i).unwrap(), p.scaled(2.into()));
        }
    }
}

#[test]
fn randomized_allocation_gets_integral_payments() {
    // A single bidder allocated with probability b/2 on [0, 2].
    let g = grid("0..2:1/2").with_caps(1, 0);
    let alloc = TabulatedAllocation::from_fn(g.clone(), true, |b| {
        vec![Probability::new(b[0].ratio() / 2).unwrap()]
    })
    .unwrap();
    // 1·2 − (0 + 1/4 + 1/2 + 3/4)·1/2, a left sum over the points below 2.
    let two = [Money::from_int(2)];
    let expected = Money::frac(5, 4);
    assert_eq!(myerson_payment(&alloc, &two, 0).unwrap(), expected);
    let derived = derive_dsic_mechanism(&alloc, &burn_table(&MechanismSpec::trivial().build().unwrap(), &g)).unwrap();
    assert!(check(&derived, &g, Property::Dsic, &CheckOptions::deterministic()).is_pass());
    assert_eq!(derived.evaluate(&BidProfile::from_bids(&two)).pay[0], expected);
}

#[test]
fn decreasing_allocation_is_rejected() {
    let g = grid("0..2:1").with_caps(1, 0);
    let mut table = BTreeMap::new();
    table.insert(vec![Money::ZERO], vec![Probability::ZERO]);
    table.insert(vec![Money::from_int(1)], vec![Probability::ONE]);
    table.insert(vec![Money::from_int(2)], vec![Probability::frac(1, 2)]);
    let alloc = TabulatedAllocation::new(g, true, table).unwrap();
    let m = alloc.is_monotone();
    assert!(!m.monotone);
    let v = m.counterexample.unwrap();
    assert_eq!((v.lower_bid, v.higher_bid), (Money::from_int(1), Money::from_int(2)));
    assert!(myerson_payment(&alloc, &[Money::from_int(2)], 0).is_err());
}
