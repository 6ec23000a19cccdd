//! Run configuration, JSON reports, and the prepared experiment suites.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::lp::{self, ClassCheck, LpSolution};
use crate::bounds::{
    allocation_infimum, efficiency_witness_check, find_efficiency_threshold, minimize_allocation_bound,
    AllocationBoundMinimum, ContradictionReport, EfficiencyThreshold,
};
use crate::catalog::{default_catalog, enumerate_family, CatalogMechanism, Family, MechanismSpec};
use crate::checkers::{check, equivalent_on_grid, CheckOptions, CoalitionCap, Property, Verdict};
use crate::error::{BoundsError, ConfigError};
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism};
use crate::money::{Money, Reserve, Utility};
use crate::utility::miner_utility;

pub const SCHEMA_VERSION: &str = "1";

fn default_a_max() -> f64 {
    1e6
}

fn default_tol() -> f64 {
    1e-4
}

fn default_ratios() -> Vec<f64> {
    vec![0.842, 0.83]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "job", rename_all = "snake_case")]
pub enum BoundsJob {
    AllocationBound {
        #[serde(default = "default_a_max")]
        a_max: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Efficiency {
        v1: f64,
        v2: f64,
        /// Values of `u/v1` at which to run the contradiction test.
        #[serde(default = "default_ratios")]
        ratios: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Lp {
        /// `base:ratio:count`.
        grid_geom: String,
        /// Grid index whose single-bid allocation is maximized; the top
        /// point when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<usize>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub properties: Vec<Property>,
    #[serde(default)]
    pub bounds: Vec<BoundsJob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub deterministic: bool,
    /// Restrict incentive searches to these value vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<Vec<Vec<Money>>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.properties.is_empty() && self.bounds.is_empty() {
            return Err(ConfigError::NoJobs);
        }
        if !self.properties.is_empty() && (self.mechanism.is_none() || self.grid.is_none()) {
            return Err(ConfigError::MissingTarget);
        }
        if let Some(spec) = &self.mechanism {
            spec.build()?;
        }
        Ok(())
    }

    fn options(&self) -> CheckOptions {
        CheckOptions {
            deterministic: self.deterministic,
            values: self.focus.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub mechanism: String,
    pub property: Property,
    pub grid: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<OrderedSeconds>,
}

/// Wall-clock seconds, kept as text so reports stay `Eq`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedSeconds(String);

impl OrderedSeconds {
    fn since(t: Instant) -> Self {
        OrderedSeconds(format!("{:.3}", t.elapsed().as_secs_f64()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSummary {
    pub grid: String,
    pub target_bid: f64,
    pub optimum: f64,
    pub status: String,
    pub max_residual: f64,
    pub gap: f64,
    pub variables: usize,
    pub constraints: usize,
    pub single_allocation: Vec<(f64, f64)>,
    pub zero_assignment_feasible: bool,
    /// Class checks of the tabulated second-price mechanism.
    pub second_price: Vec<ClassCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "job", rename_all = "snake_case")]
pub enum BoundsOutcome {
    AllocationBound {
        a_max: f64,
        tol: f64,
        infimum: f64,
        minimum: AllocationBoundMinimum,
    },
    Efficiency {
        v1: f64,
        v2: f64,
        checks: Vec<ContradictionReport>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<EfficiencyThreshold>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold_error: Option<String>,
    },
    Lp(LpSummary),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub ok: bool,
}

impl Expectation {
    fn new(name: &str, expected: impl Into<String>, actual: impl Into<String>, ok: bool) -> Self {
        Expectation {
            name: name.to_string(),
            expected: expected.into(),
            actual: actual.into(),
            ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismRow {
    pub spec: MechanismSpec,
    pub dsic: Verdict,
    pub mmic: Verdict,
    pub oca: Verdict,
    pub triple: bool,
    pub trivial_equivalent: bool,
    pub zero_miner_revenue: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub ok: bool,
    pub expectations: Vec<Expectation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mechanisms: Vec<MechanismRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(default)]
    pub verdicts: Vec<VerdictEntry>,
    #[serde(default)]
    pub bounds: Vec<BoundsOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteOutcome>,
    #[serde(default)]
    pub errors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<OrderedSeconds>,
}

impl Report {
    fn empty(config: Option<RunConfig>) -> Self {
        Report {
            schema: SCHEMA_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            verdicts: Vec::new(),
            bounds: Vec::new(),
            suite: None,
            errors: Vec::new(),
            seconds: None,
        }
    }

    /// Whether a job errored or a suite expectation failed. Violations are
    /// findings and do not count.
    pub fn failed(&self) -> bool {
        !self.errors.is_empty() || self.suite.as_ref().is_some_and(|s| !s.ok)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn verdict(&self, property: Property) -> Option<&Verdict> {
        self.verdicts
            .iter()
            .find(|v| v.property == property)
            .map(|v| &v.verdict)
    }
}

fn timed<T>(deterministic: bool, f: impl FnOnce() -> T) -> (T, Option<OrderedSeconds>) {
    let t = Instant::now();
    let out = f();
    (out, (!deterministic).then(|| OrderedSeconds::since(t)))
}

fn verdict_entry<M: Mechanism + ?Sized>(
    mech: &M,
    grid: &GridSpec,
    property: Property,
    opts: &CheckOptions,
) -> VerdictEntry {
    let (verdict, seconds) = timed(opts.deterministic, || check(mech, grid, property, opts));
    VerdictEntry {
        mechanism: mech.name(),
        property,
        grid: grid.label(),
        verdict,
        seconds,
    }
}

/// Executes every job in `config`. Job failures are collected in
/// `errors`; only an invalid configuration is returned as `Err`.
pub fn run(config: &RunConfig) -> Result<Report, ConfigError> {
    config.validate()?;
    let started = Instant::now();
    let mut report = Report::empty(Some(config.clone()));
    if let (Some(spec), Some(grid)) = (&config.mechanism, &config.grid) {
        let mech = spec.build()?;
        let opts = config.options();
        for &p in &config.properties {
            report.verdicts.push(verdict_entry(&mech, grid, p, &opts));
        }
    }
    for job in &config.bounds {
        match run_bounds(job, config.deterministic) {
            Ok(out) => report.bounds.push(out),
            Err(e) => report.errors.push(format!("{}: {e}", job_name(job))),
        }
    }
    if !config.deterministic {
        report.seconds = Some(OrderedSeconds::since(started));
    }
    Ok(report)
}

fn job_name(job: &BoundsJob) -> &'static str {
    match job {
        BoundsJob::AllocationBound { .. } => "allocation_bound",
        BoundsJob::Efficiency { .. } => "efficiency",
        BoundsJob::Lp { .. } => "lp",
    }
}

pub fn run_bounds(job: &BoundsJob, deterministic: bool) -> Result<BoundsOutcome, BoundsError> {
    Ok(match *job {
        BoundsJob::AllocationBound { a_max, tol } => {
            let mut minimum = minimize_allocation_bound(a_max, tol)?;
            if deterministic {
                minimum.evaluations = 0;
            }
            BoundsOutcome::AllocationBound {
                a_max,
                tol,
                infimum: allocation_infimum(),
                minimum,
            }
        }
        BoundsJob::Efficiency { v1, v2, ref ratios, tol } => {
            let checks = ratios
                .iter()
                .map(|&r| efficiency_witness_check(v1, v2, r * v1))
                .collect::<Result<Vec<_>, _>>()?;
            let (threshold, threshold_error) = match find_efficiency_threshold(v1, v2, tol) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BoundsOutcome::Efficiency {
                v1,
                v2,
                checks,
                threshold,
                threshold_error,
            }
        }
        BoundsJob::Lp { ref grid_geom, target } => {
            let grid = GridSpec::parse_geometric(grid_geom)
                .map_err(|e| BoundsError::Domain(e.to_string()))?;
            BoundsOutcome::Lp(lp_summary(&grid, target)?)
        }
    })
}

/// Builds and solves the program on `grid`, and runs the two reference
/// assignments through it.
pub fn lp_summary(grid: &GridSpec, target: Option<usize>) -> Result<LpSummary, BoundsError> {
    let mut program = lp::build_lp(grid)?;
    let k = target.unwrap_or(grid.len() - 1);
    if k >= grid.len() {
        return Err(BoundsError::Domain(format!("target index {k} is off the grid")));
    }
    let var = program.single_var(k);
    program.set_objective(lp::Direction::Maximize, vec![(var, 1.0)]);
    let solution: LpSolution = lp::solve_lp(&program)?;
    let zero = lp::evaluate_assignment(&program, &lp::Assignment::zero(&program), lp::RESIDUAL_TOLERANCE);
    let sp = MechanismSpec::second_price().build().expect("valid spec");
    let second_price = lp::evaluate_assignment(
        &program,
        &lp::Assignment::from_mechanism(&program, &sp),
        lp::RESIDUAL_TOLERANCE,
    );
    Ok(LpSummary {
        grid: grid.label(),
        target_bid: program.points()[k],
        optimum: solution.optimum,
        status: solution.status,
        max_residual: solution.max_residual,
        gap: solution.gap,
        variables: solution.variables,
        constraints: solution.constraints,
        single_allocation: solution.single_allocation,
        zero_assignment_feasible: zero.iter().all(ClassCheck::holds),
        second_price,
    })
}

fn describe(v: &Verdict) -> String {
    match v {
        Verdict::Pass(_) => "pass".into(),
        Verdict::Violation { .. } => "violation".into(),
    }
}

/// Miner revenue is zero on every truthful grid profile.
pub fn zero_miner_revenue<M: Mechanism + ?Sized>(mech: &M, grid: &GridSpec) -> bool {
    grid.profiles()
        .iter()
        .all(|b| miner_utility(mech, &BidProfile::from_bids(b)) == Utility::ZERO)
}

/// The anonymous mechanisms examined by the impossibility suite: both
/// characterized families over `reserves`, then the catalog, deduplicated.
pub fn impossibility_candidates(reserves: &[Reserve]) -> Vec<CatalogMechanism> {
    let mut out: Vec<CatalogMechanism> = Vec::new();
    let all = enumerate_family(Family::BurnedSecondPrice, reserves)
        .into_iter()
        .chain(enumerate_family(Family::GeneralizedBurnedFirstPrice, reserves))
        .chain(default_catalog());
    for m in all {
        if m.is_anonymous() && !out.iter().any(|o| o.spec() == m.spec()) {
            out.push(m);
        }
    }
    out
}

/// Runs DSIC, MMIC and OCA(1) on every candidate, and requires every
/// mechanism passing all three to match the trivial mechanism on `bid_grid`.
pub fn suite_deterministic_impossibility(reserves: &[Reserve], bid_grid: &GridSpec, deterministic: bool) -> Report {
    let started = Instant::now();
    let opts = CheckOptions {
        deterministic,
        values: None,
    };
    let trivial = MechanismSpec::trivial().build().expect("valid spec");
    let mut rows = Vec::new();
    for mech in impossibility_candidates(reserves) {
        let dsic = check(&mech, bid_grid, Property::Dsic, &opts);
        let mmic = check(&mech, bid_grid, Property::Mmic, &opts);
        let oca = check(&mech, bid_grid, Property::Oca(CoalitionCap::Limit(1)), &opts);
        let triple = dsic.is_pass() && mmic.is_pass() && oca.is_pass();
        rows.push(MechanismRow {
            spec: mech.spec().clone(),
            triple,
            trivial_equivalent: equivalent_on_grid(&mech, &trivial, bid_grid),
            zero_miner_revenue: zero_miner_revenue(&mech, bid_grid),
            dsic,
            mmic,
            oca,
        });
    }
    let nontrivial: Vec<String> = rows
        .iter()
        .filter(|r| r.triple && !r.trivial_equivalent)
        .map(|r| r.spec.to_string())
        .collect();
    let passers: Vec<String> = rows.iter().filter(|r| r.triple).map(|r| r.spec.to_string()).collect();
    let mut expectations = vec![
        Expectation::new(
            "non-trivial mechanisms passing dsic, mmic and oca:1",
            "none",
            if nontrivial.is_empty() { "none".to_string() } else { nontrivial.join("; ") },
            nontrivial.is_empty(),
        ),
        Expectation::new(
            "mechanisms passing all three",
            "only trivial equivalents",
            if passers.is_empty() { "none".to_string() } else { passers.join("; ") },
            nontrivial.is_empty(),
        ),
        Expectation::new(
            "zero miner revenue for every passer",
            "true",
            rows.iter().filter(|r| r.triple).all(|r| r.zero_miner_revenue).to_string(),
            rows.iter().filter(|r| r.triple).all(|r| r.zero_miner_revenue),
        ),
    ];
    let one = Money::from_int(1);
    let probes = [
        (MechanismSpec::burned_second_price(one), ["pass", "violation", "pass"]),
        (
            MechanismSpec::generalized_burned_first_price(crate::catalog::PaymentCurve::Identity, one),
            ["violation", "pass", "pass"],
        ),
    ];
    for (spec, expected) in probes {
        if let Some(row) = rows.iter().find(|r| r.spec == spec) {
            let actual = [describe(&row.dsic), describe(&row.mmic), describe(&row.oca)];
            expectations.push(Expectation::new(
                &format!("{spec}: dsic / mmic / oca:1"),
                expected.join(" / "),
                actual.join(" / "),
                actual == expected,
            ));
        }
    }
    let mut report = Report::empty(None);
    report.suite = Some(SuiteOutcome {
        name: format!("deterministic_impossibility on {}", bid_grid.label()),
        ok: expectations.iter().all(|e| e.ok),
        expectations,
        mechanisms: rows,
    });
    if !deterministic {
        report.seconds = Some(OrderedSeconds::since(started));
    }
    report
}

/// The third-price separation, the allocation-bound minimization, and the
/// efficiency contradiction, each with expected and actual values.
pub fn suite_paper_tables(deterministic: bool) -> Report {
    let started = Instant::now();
    let mut report = Report::empty(None);
    let mut expectations = Vec::new();

    let grid: GridSpec = "0..2:1/4".parse().expect("valid grid");
    let tp = MechanismSpec::third_price().build().expect("valid spec");
    let opts = CheckOptions {
        deterministic,
        values: None,
    };
    let oca = verdict_entry(&tp, &grid, Property::Oca(CoalitionCap::All), &opts);
    expectations.push(Expectation::new("third price oca:all", "pass", describe(&oca.verdict), oca.verdict.is_pass()));
    report.verdicts.push(oca);
    let scp = verdict_entry(&tp, &grid, Property::Scp(CoalitionCap::Limit(1)), &opts);
    expectations.push(Expectation::new("third price scp:1", "violation", describe(&scp.verdict), !scp.verdict.is_pass()));
    report.verdicts.push(scp);
    let focus = vec![vec![Money::from_int(1), Money::frac(1, 2), Money::frac(1, 4)]];
    let focused = verdict_entry(&tp, &grid, Property::Scp(CoalitionCap::Limit(1)), &CheckOptions::focused(focus));
    let (lhs, rhs) = focused
        .verdict
        .witness()
        .map(|w| (w.lhs.to_string(), w.rhs.to_string()))
        .unwrap_or_else(|| ("none".into(), "none".into()));
    expectations.push(Expectation::new("third price honest coalition utility", "1/4", lhs.clone(), lhs == "1/4"));
    expectations.push(Expectation::new("third price deviating coalition utility", "1/2", rhs.clone(), rhs == "1/2"));
    report.verdicts.push(focused);

    match run_bounds(&BoundsJob::AllocationBound { a_max: 1e6, tol: 1e-4 }, deterministic) {
        Ok(out) => {
            if let BoundsOutcome::AllocationBound { minimum, .. } = &out {
                let ok = (0.91421..=0.91430).contains(&minimum.value);
                expectations.push(Expectation::new(
                    "allocation bound minimum",
                    "[0.91421, 0.91430]",
                    format!("{:.8}", minimum.value),
                    ok,
                ));
            }
            report.bounds.push(out);
        }
        Err(e) => report.errors.push(format!("allocation_bound: {e}")),
    }

    let job = BoundsJob::Efficiency {
        v1: 19.8,
        v2: 2.4,
        ratios: default_ratios(),
        tol: 1e-4,
    };
    match run_bounds(&job, deterministic) {
        Ok(out) => {
            if let BoundsOutcome::Efficiency { checks, threshold, .. } = &out {
                for (c, want) in checks.iter().zip([true, false]) {
                    expectations.push(Expectation::new(
                        &format!("contradiction at u/v1 = {:.3}", c.u / c.v1),
                        want.to_string(),
                        format!("{} (lower {:.5}, upper {:.5})", c.contradicts, c.lower, c.upper),
                        c.contradicts == want,
                    ));
                }
                let ratio = threshold.as_ref().map(|t| t.ratio);
                expectations.push(Expectation::new(
                    "efficiency threshold",
                    "(0.83, 0.842]",
                    ratio.map_or("none".into(), |r| format!("{r:.6}")),
                    ratio.is_some_and(|r| r > 0.83 && r <= 0.842),
                ));
            }
            report.bounds.push(out);
        }
        Err(e) => report.errors.push(format!("efficiency: {e}")),
    }

    report.suite = Some(SuiteOutcome {
        name: "headline reproductions".into(),
        ok: expectations.iter().all(|e| e.ok),
        expectations,
        mechanisms: Vec::new(),
    });
    if !deterministic {
        report.seconds = Some(OrderedSeconds::since(started));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_needs_a_job() {
        assert!(matches!(RunConfig::default().validate(), Err(ConfigError::NoJobs)));
        let c = RunConfig {
            properties: vec![Property::Dsic],
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::MissingTarget)));
    }

    #[test]
    fn config_from_json() {
        let text = r#"{
            "mechanism": {"family": "second_price"},
            "grid": {"range": "0..2:1"},
            "properties": ["dsic", "mmic"],
            "bounds": [{"job": "efficiency", "v1": 19.8, "v2": 2.4}],
            "deterministic": true
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        let r = run(&c).unwrap();
        assert!(r.verdict(Property::Dsic).unwrap().is_pass());
        assert!(!r.verdict(Property::Mmic).unwrap().is_pass());
        assert_eq!(r.bounds.len(), 1);
        assert!(r.seconds.is_none());
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn job_errors_are_collected() {
        let c = RunConfig {
            bounds: vec![BoundsJob::Efficiency {
                v1: 1.0,
                v2: 2.0,
                ratios: vec![0.9],
                tol: 1e-4,
            }],
            ..RunConfig::default()
        };
        let r = run(&c).unwrap();
        assert_eq!(r.errors.len(), 1);
        assert!(r.failed());
    }
}
