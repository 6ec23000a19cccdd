//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Exact values are checked against the reference rules in `support`, which
//! share no code with the checkers.

mod support;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use support::{coalition_utility, m, q, qs, reference, Rule};
use tfmlab::bounds::{
    self, efficiency_witness_check, find_efficiency_threshold, minimize_allocation_bound, lp::ConstraintClass,
};
use tfmlab::catalog::{default_catalog, CatalogMechanism, MechanismSpec, PaymentCurve};
use tfmlab::checkers::{check, replay, CheckOptions, CoalitionCap, Evidence, OutcomeRule, Property, Verdict};
use tfmlab::grid::GridSpec;
use tfmlab::model::{BidProfile, BidderId, Mechanism, Outcome};
use tfmlab::money::{Money, Probability, Reserve, Utility};
use tfmlab::report::{lp_summary, suite_deterministic_impossibility};

type Outcome_ = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn grid(s: &str) -> GridSpec {
    s.parse().expect("grid literal")
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    ensure!(took < limit, "{what} took {took:.2?}, limit {limit:?}");
    Ok(())
}

fn utility(x: num_rational::Rational64) -> Utility {
    Utility::new(x)
}

fn expect_pass(v: &Verdict, what: &str) -> Result<(), String> {
    match v.witness() {
        None => Ok(()),
        Some(w) => Err(format!("{what} failed: lhs {} rhs {} at {:?}", w.lhs, w.rhs, w.values)),
    }
}

// Recomputes a manipulation witness with the reference rule and compares it
// both with the recorded values and with the library replay.
fn confirm_manipulation<M: Mechanism>(mech: &M, rule: Rule, v: &Verdict, what: &str) -> Result<String, String> {
    let w = v.witness().ok_or_else(|| format!("{what}: expected a violation"))?;
    let man = w.manipulation().ok_or_else(|| format!("{what}: witness without manipulation"))?;
    let values = qs(&w.values);
    let dev = qs(&man.real_bids(&w.values));
    let fakes = qs(&man.fakes);
    let members: Vec<usize> = man.coalition.iter().copied().collect();
    let (lhs, rhs) = match w.property {
        Property::Dsic => {
            let i = members[0];
            (
                support::bidder_utility(rule, &values, &values, &[], i),
                support::bidder_utility(rule, &values, &dev, &fakes, i),
            )
        }
        Property::Mmic => (
            coalition_utility(rule, &values, &values, &[], &[]),
            coalition_utility(rule, &values, &dev, &fakes, &[]),
        ),
        Property::Oca(_) => (
            support::joint_utility(rule, &values, &values, &[]),
            coalition_utility(rule, &values, &dev, &fakes, &members),
        ),
        Property::Scp(_) => (
            coalition_utility(rule, &values, &values, &[], &members),
            coalition_utility(rule, &values, &dev, &fakes, &members),
        ),
        other => return Err(format!("{what}: unexpected property {other}")),
    };
    ensure!(
        (w.lhs, w.rhs) == (utility(lhs), utility(rhs)),
        "{what}: witness says ({}, {}), reference gives ({lhs}, {rhs})",
        w.lhs,
        w.rhs
    );
    let replayed = replay(mech, w).map_err(|e| format!("{what}: replay failed: {e}"))?;
    ensure!(replayed == (w.lhs, w.rhs), "{what}: replay gives {replayed:?}");
    Ok(format!("{what} witness {:?} ({} < {})", w.values, w.lhs, w.rhs))
}

fn one() -> Money {
    Money::from_int(1)
}

fn build(spec: MechanismSpec) -> CatalogMechanism {
    spec.build().expect("valid spec")
}

fn criterion_1() -> Outcome_ {
    let started = Instant::now();
    let g = grid("0..2:1/4");
    let tp = build(MechanismSpec::third_price());
    let oca = check(&tp, &g, Property::Oca(CoalitionCap::All), &CheckOptions::default());
    expect_pass(&oca, "oca:all")?;
    let values = vec![m(1, 1), m(1, 2), m(1, 4)];
    let focused = check(
        &tp,
        &g,
        Property::Scp(CoalitionCap::Limit(1)),
        &CheckOptions::focused(vec![values.clone()]),
    );
    let w = focused.witness().ok_or("scp:1 found no violation at (1, 1/2, 1/4)")?;
    ensure!(
        w.lhs == Utility::frac(1, 4) && w.rhs == Utility::frac(1, 2),
        "focused witness is ({}, {}), want (1/4, 1/2)",
        w.lhs,
        w.rhs
    );
    confirm_manipulation(&tp, Rule::ThirdPrice, &focused, "focused scp:1")?;
    let full = check(&tp, &g, Property::Scp(CoalitionCap::Limit(1)), &CheckOptions::deterministic());
    let full_note = confirm_manipulation(&tp, Rule::ThirdPrice, &full, "grid scp:1")?;
    within(started, Duration::from_secs(10), "third-price separation")?;
    Ok(format!("oca:all pass; scp:1 honest 1/4, deviating 1/2; {full_note}"))
}

/// A catalog mechanism with a few profiles overridden by random outcomes.
struct Perturbed {
    base: CatalogMechanism,
    overrides: BTreeMap<Vec<Money>, Outcome>,
    label: String,
}

impl Mechanism for Perturbed {
    fn evaluate(&self, profile: &BidProfile) -> Outcome {
        match self.overrides.get(&profile.bid_vec()) {
            Some(out) => out.clone(),
            None => self.base.evaluate(profile),
        }
    }

    fn name(&self) -> String {
        self.label.clone()
    }

    fn is_anonymous(&self) -> bool {
        false
    }
}

fn random_outcome(rng: &mut StdRng, bids: &[Money]) -> Outcome {
    let n = bids.len();
    let mut out = Outcome::empty(n);
    match rng.random_range(0..3) {
        0 => {}
        1 => {
            let w = rng.random_range(0..n);
            let pay = bids[w].scaled(q(rng.random_range(0..=4), 4));
            out = Outcome::award(n, w, pay, pay.scaled(q(rng.random_range(0..=2), 2)));
        }
        _ => {
            for i in 0..n.min(2) {
                out.alloc[i] = Probability::frac(1, 2);
                out.pay[i] = bids[i].scaled(q(rng.random_range(0..=2), 4));
            }
        }
    }
    out
}

fn perturbed_family(count: usize, g: &GridSpec, seed: u64) -> Vec<Perturbed> {
    let mut rng = StdRng::seed_from_u64(seed);
    let positives = g.positive_points().to_vec();
    (0..count)
        .map(|k| {
            let base = default_catalog().swap_remove(k % 7);
            let mut overrides = BTreeMap::new();
            for _ in 0..rng.random_range(1..=4) {
                let n = rng.random_range(1..=g.max_profile_size());
                let bids: Vec<Money> = (0..n).map(|_| positives[rng.random_range(0..positives.len())]).collect();
                let out = random_outcome(&mut rng, &bids);
                overrides.insert(bids, out);
            }
            let label = format!("perturbed#{k}({})", base.name());
            Perturbed { base, overrides, label }
        })
        .collect()
}

fn criterion_2() -> Outcome_ {
    let started = Instant::now();
    let g = grid("0..2:1/2");
    let opts = CheckOptions::deterministic();
    let mut mechs: Vec<Box<dyn Mechanism>> = default_catalog()
        .into_iter()
        .map(|x| Box::new(x) as Box<dyn Mechanism>)
        .collect();
    mechs.extend(perturbed_family(20, &g, 0x5eed).into_iter().map(|x| Box::new(x) as Box<dyn Mechanism>));
    let caps = [CoalitionCap::Limit(1), CoalitionCap::Limit(2), CoalitionCap::All];
    let (mut pairs, mut scp_passes) = (0, 0);
    for mech in &mechs {
        for c in caps {
            pairs += 1;
            if check(mech, &g, Property::Scp(c), &opts).is_pass() {
                scp_passes += 1;
                let oca = check(mech, &g, Property::Oca(c), &opts);
                expect_pass(&oca, &format!("{} oca:{c} despite scp:{c} pass", mech.name()))?;
            }
        }
    }
    within(started, Duration::from_secs(60), "implication suite")?;
    Ok(format!(
        "{} mechanisms x {} caps; {scp_passes} of {pairs} scp passes, all oca passes",
        mechs.len(),
        caps.len()
    ))
}

fn criterion_3() -> Outcome_ {
    let g = grid("0..5:1/4").with_caps(2, 1);
    let opts = CheckOptions::default();
    let mut passers = Vec::new();
    for mech in default_catalog() {
        let dsic = check(&mech, &g, Property::Dsic, &opts).is_pass();
        if !dsic || !check(&mech, &g, Property::Oca(CoalitionCap::Limit(1)), &opts).is_pass() {
            continue;
        }
        for b in g.positive_points() {
            let out = mech.evaluate(&BidProfile::from_bids(&[*b]));
            ensure!(
                out.pay[0] == out.burn[0],
                "{} at single bid {b}: pay {} burn {}",
                mech.name(),
                out.pay[0],
                out.burn[0]
            );
        }
        passers.push(mech.name());
    }
    ensure!(passers.len() > 1, "only {passers:?} pass dsic + oca:1; nothing non-trivial was tested");
    Ok(format!("pay = burn on single bids for {}", passers.join(", ")))
}

fn criterion_4() -> Outcome_ {
    let g = grid("0..3:1/2");
    let opts = CheckOptions::deterministic();
    let oca1 = Property::Oca(CoalitionCap::Limit(1));
    let bsp = build(MechanismSpec::burned_second_price(one()));
    expect_pass(&check(&bsp, &g, Property::Dsic, &opts), "bsp(1) dsic")?;
    expect_pass(&check(&bsp, &g, oca1, &opts), "bsp(1) oca:1")?;
    let bsp_note = confirm_manipulation(&bsp, Rule::Bsp(q(1, 1)), &check(&bsp, &g, Property::Mmic, &opts), "bsp(1) mmic")?;
    let gbfp = build(MechanismSpec::generalized_burned_first_price(PaymentCurve::Identity, one()));
    expect_pass(&check(&gbfp, &g, Property::Mmic, &opts), "gbfp(id, 1) mmic")?;
    expect_pass(&check(&gbfp, &g, oca1, &opts), "gbfp(id, 1) oca:1")?;
    let gbfp_note = confirm_manipulation(
        &gbfp,
        Rule::GbfpIdentity(q(1, 1)),
        &check(&gbfp, &g, Property::Dsic, &opts),
        "gbfp(id, 1) dsic",
    )?;
    Ok(format!("{bsp_note}; {gbfp_note}"))
}

// Criteria 5 and 6 share one suite run.
fn impossibility() -> Result<(String, String), String> {
    let started = Instant::now();
    let reserves: Vec<Reserve> = ["0", "1/2", "1", "2", "inf"].iter().map(|r| r.parse().unwrap()).collect();
    let g = grid("0..4:1/2");
    let report = suite_deterministic_impossibility(&reserves, &g, true);
    within(started, Duration::from_secs(300), "impossibility suite")?;
    let suite = report.suite.ok_or("suite missing from report")?;
    let rows = &suite.mechanisms;
    let gbfp = rows.iter().filter(|r| r.spec.f.is_some()).count();
    ensure!(gbfp == 3 * reserves.len(), "expected three curves per reserve, got {gbfp} curve mechanisms");
    let offenders: Vec<String> = rows
        .iter()
        .filter(|r| r.triple && !r.trivial_equivalent)
        .map(|r| r.spec.to_string())
        .collect();
    let five = if offenders.is_empty() {
        let passers = rows.iter().filter(|r| r.triple).count();
        Ok(format!(
            "{} candidates in {:.1?}; {passers} pass all three, each equal to trivial",
            rows.len(),
            started.elapsed()
        ))
    } else {
        Err(format!("non-trivial triple passers: {}", offenders.join("; ")))
    };
    let mut checked = 0;
    let mut six = Ok(String::new());
    for row in rows.iter().filter(|r| r.triple) {
        let mech = build(row.spec.clone());
        for bids in g.profiles().iter().filter(|b| b.iter().all(|x| !x.is_zero())) {
            let out = mech.evaluate(&BidProfile::from_bids(bids));
            let revenue: num_rational::Rational64 = (0..bids.len()).map(|i| (out.pay[i] - out.burn[i]).ratio()).sum();
            if revenue != q(0, 1) || !row.zero_miner_revenue {
                six = Err(format!("{} earns {revenue} at {bids:?}", row.spec));
            }
            checked += 1;
        }
    }
    if six.is_ok() {
        six = Ok(format!("miner revenue 0 on {checked} passer profiles"));
    }
    Ok((five?, six?))
}

fn criterion_7() -> Outcome_ {
    let started = Instant::now();
    let min = minimize_allocation_bound(1e6, 1e-4).map_err(|e| e.to_string())?;
    within(started, Duration::from_secs(5), "minimization")?;
    ensure!(
        (0.91421..=0.91430).contains(&min.value),
        "value {} outside [0.91421, 0.91430]",
        min.value
    );
    // Closed form on the ray B = (√2 − 1)A, at the largest admissible A.
    let a = 1e6;
    let closed = (2.0 * std::f64::consts::SQRT_2 - 1.0) * a / (2.0 * (a - 1.0));
    ensure!((min.value - closed).abs() < 1e-6, "value {} vs closed form {closed}", min.value);
    ensure!(
        (bounds::allocation_infimum() - 0.91421356).abs() < 1e-8,
        "infimum {}",
        bounds::allocation_infimum()
    );
    Ok(format!("value {:.10} at A = {:.4e}, B/A = {:.6}", min.value, min.a, min.b / min.a))
}

fn criterion_8() -> Outcome_ {
    let started = Instant::now();
    let (v1, v2) = (19.8, 2.4);
    let lower = |u: f64| (u - v2) / (v1 - v2);
    let upper = |u: f64| 1.0 - (2.0 * u - 1.5 * v1 + (v1 - u) * (2.0 * (v1 - u) / (v1 - v2)).ln()) / v2;
    let hi = efficiency_witness_check(v1, v2, 0.842 * v1).map_err(|e| e.to_string())?;
    let lo = efficiency_witness_check(v1, v2, 0.83 * v1).map_err(|e| e.to_string())?;
    ensure!(hi.contradicts, "no contradiction at 0.842: {hi:?}");
    ensure!(!lo.contradicts, "contradiction at 0.83: {lo:?}");
    for r in [&hi, &lo] {
        ensure!(
            (r.lower - lower(r.u)).abs() < 1e-12 && (r.upper - upper(r.u)).abs() < 1e-12,
            "bounds at u = {} differ from the reference formulas",
            r.u
        );
    }
    let t = find_efficiency_threshold(v1, v2, 1e-4).map_err(|e| e.to_string())?;
    within(started, Duration::from_secs(1), "efficiency checks")?;
    ensure!(t.ratio > 0.83 && t.ratio <= 0.842, "threshold {} outside (0.83, 0.842]", t.ratio);
    ensure!(t.ratio - t.below <= 1e-4, "bracket [{}, {}] wider than tol", t.below, t.ratio);
    let gap = |r: f64| lower(r * v1) - upper(r * v1);
    ensure!(gap(t.ratio) > 0.0 && gap(t.below) <= 0.0, "bracket does not straddle the crossing");
    Ok(format!(
        "0.842: {:.5} > {:.5}; 0.83: {:.5} <= {:.5}; threshold {:.6}",
        hi.lower, hi.upper, lo.lower, lo.upper, t.ratio
    ))
}

fn reference_rule(rule: Rule, bids: &[Money], k: usize, which: OutcomeRule) -> Utility {
    let out = reference(rule, &qs(bids));
    let won = out.winner == Some(k);
    utility(match which {
        OutcomeRule::Alloc => q(won as i64, 1),
        OutcomeRule::Pay if won => out.pay,
        OutcomeRule::Burn if won => out.burn,
        _ => q(0, 1),
    })
}

// Checks a structural witness against the reference rule and the replay.
fn confirm_structural<M: Mechanism>(mech: &M, rule: Rule, v: &Verdict, what: &str) -> Result<String, String> {
    let w = v.witness().ok_or_else(|| format!("{what}: expected a violation"))?;
    let (lhs, rhs) = match &w.evidence {
        Evidence::Rescale { factor, index } => {
            let scaled: Vec<Money> = w.values.iter().map(|b| b.scaled(factor.ratio())).collect();
            (
                reference_rule(rule, &w.values, *index, OutcomeRule::Alloc),
                reference_rule(rule, &scaled, *index, OutcomeRule::Alloc),
            )
        }
        Evidence::Reprofile { other } => {
            let total = |b: &[Money]| utility(q(reference(rule, &qs(b)).winner.is_some() as i64, 1));
            (total(&w.values), total(other))
        }
        Evidence::Permute {
            permutation,
            index,
            rule: part,
        } => {
            let permuted: Vec<Money> = permutation.iter().map(|&k| w.values[k]).collect();
            (
                reference_rule(rule, &w.values, permutation[*index], *part),
                reference_rule(rule, &permuted, *index, *part),
            )
        }
        Evidence::Manipulation(_) => return Err(format!("{what}: unexpected manipulation witness")),
    };
    ensure!(
        (w.lhs, w.rhs) == (lhs, rhs),
        "{what}: witness says ({}, {}), reference gives ({lhs}, {rhs})",
        w.lhs,
        w.rhs
    );
    let replayed = replay(mech, w).map_err(|e| format!("{what}: replay failed: {e}"))?;
    ensure!(replayed == (w.lhs, w.rhs), "{what}: replay gives {replayed:?}");
    Ok(format!("{what} at {:?}", w.values))
}

fn criterion_9() -> Outcome_ {
    let g = grid("0..4:1/2");
    let opts = CheckOptions::deterministic();
    let sp = build(MechanismSpec::second_price());
    expect_pass(&check(&sp, &g, Property::ScaleInvariance, &opts), "second price scale")?;
    let ctpa = check(&sp, &g, Property::Ctpa, &opts);
    expect_pass(&ctpa, "second price ctpa")?;
    let alpha = ctpa.pass_info().and_then(|p| p.total_allocation);
    ensure!(alpha == Some(Utility::frac(1, 1)), "second price total allocation {alpha:?}");
    let bsp = build(MechanismSpec::burned_second_price(one()));
    let rule = Rule::Bsp(q(1, 1));
    let a = confirm_structural(&bsp, rule, &check(&bsp, &g, Property::ScaleInvariance, &opts), "bsp(1) scale")?;
    let b = confirm_structural(&bsp, rule, &check(&bsp, &g, Property::Ctpa, &opts), "bsp(1) ctpa")?;
    Ok(format!("second price: scale pass, ctpa pass with total 1; {a}; {b}"))
}

fn criterion_10() -> Outcome_ {
    let g = grid("0..3:1/2");
    let opts = CheckOptions::deterministic();
    let pb = build(MechanismSpec::non_anonymous_posted_burn(BidderId::real(0), one()));
    expect_pass(&check(&pb, &g, Property::Dsic, &opts), "posted burn dsic")?;
    expect_pass(&check(&pb, &g, Property::Mmic, &opts), "posted burn mmic")?;
    expect_pass(&check(&pb, &g, Property::Scp(CoalitionCap::All), &opts), "posted burn scp:all")?;
    let note = confirm_structural(
        &pb,
        Rule::PostedBurn(q(1, 1)),
        &check(&pb, &g, Property::Anonymity, &opts),
        "anonymity",
    )?;
    Ok(format!("dsic, mmic, scp:all pass; {note}"))
}

fn criterion_11() -> Outcome_ {
    let started = Instant::now();
    let g = GridSpec::parse_geometric("1:3/2:20").map_err(|e| e.to_string())?;
    let s = lp_summary(&g, None).map_err(|e| e.to_string())?;
    within(started, Duration::from_secs(120), "lp")?;
    ensure!(s.status == "optimal", "solver status {}", s.status);
    ensure!(s.max_residual <= bounds::lp::RESIDUAL_TOLERANCE, "residual {}", s.max_residual);
    ensure!(s.optimum <= 1.0 + bounds::TOLERANCE, "optimum {} above 1", s.optimum);
    ensure!(s.zero_assignment_feasible, "all-zero assignment violates a constraint");
    let v = s
        .second_price
        .iter()
        .find(|c| c.class == ConstraintClass::PaymentBurn)
        .ok_or("no payment-burn rows")?;
    ensure!(v.violated > 0, "second price satisfies every payment-burn row");
    let others: Vec<String> = s
        .second_price
        .iter()
        .filter(|c| c.violated > 0 && c.class != ConstraintClass::PaymentBurn)
        .map(|c| format!("({}) {}/{}", c.class, c.violated, c.rows))
        .collect();
    println!(
        "    lp: {} variables, {} rows; optimum a(top) = {:.6}; second price also violates {}",
        s.variables,
        s.constraints,
        s.optimum,
        if others.is_empty() { "nothing else".into() } else { others.join(", ") }
    );
    Ok(format!(
        "feasible, optimum {:.6}, zero assignment feasible, second price violates (v) in {}/{} rows",
        s.optimum, v.violated, v.rows
    ))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let names = [
        "scp/oca separation",
        "scp implies oca",
        "single-bidder zero revenue",
        "characterization smoke",
        "deterministic impossibility",
        "zero revenue",
        "allocation bound",
        "efficiency bound",
        "scale invariance / ctpa",
        "non-anonymous posted burn",
        "lp sanity",
    ];
    fn timed(f: fn() -> Outcome_) -> (Outcome_, Duration) {
        let t = Instant::now();
        let r = guarded(f);
        (r, t.elapsed())
    }
    let mut results: Vec<(Outcome_, Duration)> = [criterion_1, criterion_2, criterion_3, criterion_4]
        .into_iter()
        .map(timed)
        .collect();
    let t = Instant::now();
    let (five, six) = match guarded(impossibility) {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(e.clone()), Err(format!("depends on the suite run: {e}"))),
    };
    let took = t.elapsed();
    results.push((five, took));
    results.push((six, Duration::ZERO));
    let tail: [fn() -> Outcome_; 5] = [criterion_7, criterion_8, criterion_9, criterion_10, criterion_11];
    results.extend(tail.into_iter().map(timed));

    let mut failed = 0;
    for (k, ((r, took), name)) in results.iter().zip(names).enumerate() {
        match r {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({took:.2?}) {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({took:.2?}) {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
