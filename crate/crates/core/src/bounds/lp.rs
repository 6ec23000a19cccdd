//! Feasibility search over discretized one- and two-bid mechanisms.
//!
//! Variables are `a(b)`, `β(b)` for single bids and `a(x, y)`, `β(x, y)`
//! for ordered pairs on the grid, where `a(x, y)` is the allocation of the
//! bidder bidding `x` against `y`. Indexing pairs this way makes the
//! mechanism anonymous by construction. Integrals are left Riemann sums on
//! the grid, as in the Myerson module, and payments are the resulting
//! Myerson forms.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus};
use serde::{Deserialize, Serialize};

use crate::error::BoundsError;
use crate::grid::GridSpec;
use crate::model::{BidProfile, Mechanism};
use crate::money::Money;

/// Largest number of positive grid points accepted by [`build_lp`].
pub const MAX_LP_POINTS: usize = 40;

/// Residual above which a solver answer is rejected.
pub const RESIDUAL_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    /// (i) `a(x, y)` is shared by both slots. No rows.
    Anonymity,
    /// (ii) `a(x, y) + a(y, x) ≤ 1`, `0 ≤ a ≤ 1`.
    Feasibility,
    /// (iii) allocation non-decreasing along each bidder's own axis.
    Monotonicity,
    /// (iv) single-bid payment equals single-bid burn.
    SingleBidRevenue,
    /// (v) `p(x, y) ≤ β(x, y) + β(y, x)`.
    PaymentBurn,
    /// (vi) `a(y, x)·y + ∫₀^x a(t, y) dt ≥ ∫₀^x a(t) dt` for `x ≥ y`.
    TwoBidder,
    /// (vii) the lower bid gets at most the average allocation.
    LowValue,
    /// (viii) `0 ≤ β ≤ p`.
    BurnRange,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 8] = [
        ConstraintClass::Anonymity,
        ConstraintClass::Feasibility,
        ConstraintClass::Monotonicity,
        ConstraintClass::SingleBidRevenue,
        ConstraintClass::PaymentBurn,
        ConstraintClass::TwoBidder,
        ConstraintClass::LowValue,
        ConstraintClass::BurnRange,
    ];

    pub fn numeral(self) -> &'static str {
        match self {
            ConstraintClass::Anonymity => "i",
            ConstraintClass::Feasibility => "ii",
            ConstraintClass::Monotonicity => "iii",
            ConstraintClass::SingleBidRevenue => "iv",
            ConstraintClass::PaymentBurn => "v",
            ConstraintClass::TwoBidder => "vi",
            ConstraintClass::LowValue => "vii",
            ConstraintClass::BurnRange => "viii",
        }
    }
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.numeral())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// A payment appearing in a row, expanded to its Myerson form when solving.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PayRef {
    Single(usize),
    Pair(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub class: ConstraintClass,
    pub name: String,
    terms: Vec<(usize, f64)>,
    pays: Vec<(PayRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LpInstance {
    grid: GridSpec,
    points: Vec<f64>,
    constraints: Vec<Constraint>,
    objective: Vec<(usize, f64)>,
    direction: Direction,
}

/// Explicit payments, used in place of the Myerson forms when checking an
/// assignment that comes from an existing mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payments {
    pub single: Vec<f64>,
    pub pair: Vec<f64>,
}

/// Values for every variable, in [`LpInstance::var_name`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payments: Option<Payments>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub class: ConstraintClass,
    pub rows: usize,
    pub violated: usize,
    pub worst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_row: Option<String>,
}

impl ClassCheck {
    pub fn holds(&self) -> bool {
        self.violated == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub optimum: f64,
    pub status: String,
    pub max_residual: f64,
    pub gap: f64,
    pub variables: usize,
    pub constraints: usize,
    /// `(b, a(b))` along the single-bid axis.
    pub single_allocation: Vec<(f64, f64)>,
    #[serde(skip)]
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl LpInstance {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    fn m(&self) -> usize {
        self.points.len()
    }

    pub fn num_vars(&self) -> usize {
        2 * self.m() + 2 * self.m() * self.m()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    fn a1(&self, k: usize) -> usize {
        k
    }

    fn b1(&self, k: usize) -> usize {
        self.m() + k
    }

    fn a2(&self, x: usize, y: usize) -> usize {
        2 * self.m() + x * self.m() + y
    }

    fn b2(&self, x: usize, y: usize) -> usize {
        2 * self.m() + self.m() * self.m() + x * self.m() + y
    }

    fn is_allocation(&self, var: usize) -> bool {
        var < self.m() || (2 * self.m()..2 * self.m() + self.m() * self.m()).contains(&var)
    }

    pub fn var_name(&self, var: usize) -> String {
        let m = self.m();
        if var < m {
            format!("a_{var}")
        } else if var < 2 * m {
            format!("bt_{}", var - m)
        } else if var < 2 * m + m * m {
            let k = var - 2 * m;
            format!("a_{}_{}", k / m, k % m)
        } else {
            let k = var - 2 * m - m * m;
            format!("bt_{}_{}", k / m, k % m)
        }
    }

    /// Index of the single-bid allocation at the largest grid bid.
    pub fn top_single(&self) -> usize {
        self.a1(self.m() - 1)
    }

    /// Variable index of `a(g_k)` for the `k`-th grid point.
    pub fn single_var(&self, k: usize) -> usize {
        assert!(k < self.m(), "grid index out of range");
        self.a1(k)
    }

    pub fn set_objective(&mut self, direction: Direction, terms: Vec<(usize, f64)>) {
        self.direction = direction;
        self.objective = terms;
    }

    pub fn retain_classes(&mut self, keep: impl Fn(ConstraintClass) -> bool) {
        self.constraints.retain(|c| keep(c.class));
    }

    fn delta(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    /// `Σ_{g_k < g_x} a(g_k, ·) Δ_k` as terms; `var(k)` picks the slot.
    fn integral(&self, x: usize, var: impl Fn(usize) -> usize) -> Vec<(usize, f64)> {
        (0..x).map(|k| (var(k), self.delta(k))).collect()
    }

    fn pay_terms(&self, p: PayRef) -> Vec<(usize, f64)> {
        let (at, x, slot): (usize, usize, Box<dyn Fn(usize) -> usize + '_>) = match p {
            PayRef::Single(x) => (self.a1(x), x, Box::new(|k| self.a1(k))),
            PayRef::Pair(x, y) => (self.a2(x, y), x, Box::new(move |k| self.a2(k, y))),
        };
        let mut terms = vec![(at, self.points[x])];
        terms.extend(self.integral(x, slot).into_iter().map(|(v, c)| (v, -c)));
        terms
    }

    /// Row with payments expanded and duplicate variables merged.
    fn expand(&self, c: &Constraint) -> Vec<(usize, f64)> {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(v, coef) in &c.terms {
            *merged.entry(v).or_default() += coef;
        }
        for &(p, scale) in &c.pays {
            for (v, coef) in self.pay_terms(p) {
                *merged.entry(v).or_default() += scale * coef;
            }
        }
        merged.into_iter().filter(|&(_, c)| c != 0.0).collect()
    }

    fn push(&mut self, class: ConstraintClass, name: String, terms: Vec<(usize, f64)>, pays: Vec<(PayRef, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            class,
            name,
            terms,
            pays,
            sense,
            rhs,
        });
    }
}

/// Builds the feasibility program over the one- and two-bid profiles of
/// `grid`. Grids above [`MAX_LP_POINTS`] positive points are refused.
pub fn build_lp(grid: &GridSpec) -> Result<LpInstance, BoundsError> {
    let m = grid.len();
    let positive = m - 1;
    if positive > MAX_LP_POINTS || m < 2 {
        let variables = 2 * m + 2 * m * m;
        return Err(BoundsError::GridTooLarge {
            points: positive,
            max: MAX_LP_POINTS,
            variables,
            constraints: 5 * m * m + 4 * m,
        });
    }
    let mut lp = LpInstance {
        grid: grid.clone(),
        points: grid.points().iter().map(|p| p.to_f64()).collect(),
        constraints: Vec::new(),
        objective: Vec::new(),
        direction: Direction::Maximize,
    };
    lp.objective = vec![(lp.top_single(), 1.0)];
    use ConstraintClass as C;

    for x in 0..m {
        for y in x..m {
            let terms = if x == y {
                vec![(lp.a2(x, x), 2.0)]
            } else {
                vec![(lp.a2(x, y), 1.0), (lp.a2(y, x), 1.0)]
            };
            lp.push(C::Feasibility, format!("feas_{x}_{y}"), terms, vec![], Sense::Le, 1.0);
        }
    }
    for k in 0..m - 1 {
        let terms = vec![(lp.a1(k), 1.0), (lp.a1(k + 1), -1.0)];
        lp.push(C::Monotonicity, format!("mono_{k}"), terms, vec![], Sense::Le, 0.0);
        for y in 0..m {
            let terms = vec![(lp.a2(k, y), 1.0), (lp.a2(k + 1, y), -1.0)];
            lp.push(C::Monotonicity, format!("mono_{k}_{y}"), terms, vec![], Sense::Le, 0.0);
        }
    }
    for k in 0..m {
        let terms = vec![(lp.b1(k), -1.0)];
        lp.push(C::SingleBidRevenue, format!("rev_{k}"), terms, vec![(PayRef::Single(k), 1.0)], Sense::Eq, 0.0);
    }
    for x in 0..m {
        for y in 0..m {
            let terms = if x == y {
                vec![(lp.b2(x, x), -2.0)]
            } else {
                vec![(lp.b2(x, y), -1.0), (lp.b2(y, x), -1.0)]
            };
            lp.push(C::PaymentBurn, format!("payburn_{x}_{y}"), terms, vec![(PayRef::Pair(x, y), 1.0)], Sense::Le, 0.0);
        }
    }
    for x in 0..m {
        for y in 0..=x {
            let mut terms = vec![(lp.a2(y, x), lp.points[y])];
            terms.extend(lp.integral(x, |k| lp.a2(k, y)));
            terms.extend(lp.integral(x, |k| lp.a1(k)).into_iter().map(|(v, c)| (v, -c)));
            lp.push(C::TwoBidder, format!("two_{x}_{y}"), terms, vec![], Sense::Ge, 0.0);
        }
    }
    for x in 0..m {
        for y in 0..x {
            // a(y, x) ≤ (a(x, y) + a(y, x)) / 2 with y the lower bid.
            let terms = vec![(lp.a2(y, x), 0.5), (lp.a2(x, y), -0.5)];
            lp.push(C::LowValue, format!("low_{x}_{y}"), terms, vec![], Sense::Le, 0.0);
        }
    }
    for k in 0..m {
        let terms = vec![(lp.b1(k), 1.0)];
        lp.push(C::BurnRange, format!("burn_{k}"), terms, vec![(PayRef::Single(k), -1.0)], Sense::Le, 0.0);
    }
    for x in 0..m {
        for y in 0..m {
            let terms = vec![(lp.b2(x, y), 1.0)];
            lp.push(C::BurnRange, format!("burn_{x}_{y}"), terms, vec![(PayRef::Pair(x, y), -1.0)], Sense::Le, 0.0);
        }
    }
    Ok(lp)
}

fn violation(lhs: f64, sense: Sense, rhs: f64) -> f64 {
    match sense {
        Sense::Le => lhs - rhs,
        Sense::Ge => rhs - lhs,
        Sense::Eq => (lhs - rhs).abs(),
    }
}

/// Checks every constraint class, and the variable bounds, against `x`.
/// A row counts as violated when its residual, divided by its largest
/// coefficient, exceeds `tol`.
pub fn evaluate_assignment(lp: &LpInstance, x: &Assignment, tol: f64) -> Vec<ClassCheck> {
    assert_eq!(x.values.len(), lp.num_vars(), "assignment has the wrong length");
    let mut checks: BTreeMap<ConstraintClass, ClassCheck> = ConstraintClass::ALL
        .iter()
        .map(|&class| {
            (
                class,
                ClassCheck {
                    class,
                    rows: 0,
                    violated: 0,
                    worst: 0.0,
                    worst_row: None,
                },
            )
        })
        .collect();
    let mut record = |class: ConstraintClass, name: &str, amount: f64| {
        let check = checks.get_mut(&class).expect("all classes present");
        check.rows += 1;
        if amount > tol {
            check.violated += 1;
        }
        if amount > check.worst {
            check.worst = amount;
            check.worst_row = Some(name.to_string());
        }
    };
    let m = lp.m();
    let pay = |p: PayRef| -> f64 {
        match (&x.payments, p) {
            (Some(pm), PayRef::Single(k)) => pm.single[k],
            (Some(pm), PayRef::Pair(a, b)) => pm.pair[a * m + b],
            (None, p) => lp.pay_terms(p).iter().map(|&(v, c)| c * x.values[v]).sum(),
        }
    };
    for c in &lp.constraints {
        let lhs: f64 = c.terms.iter().map(|&(v, coef)| coef * x.values[v]).sum::<f64>()
            + c.pays.iter().map(|&(p, s)| s * pay(p)).sum::<f64>();
        // Rows carry grid-sized coefficients, so residuals are measured
        // relative to the largest one.
        let scale = lp.expand(c).iter().fold(1.0f64, |acc, &(_, k)| acc.max(k.abs()));
        record(c.class, &c.name, violation(lhs, c.sense, c.rhs) / scale);
    }
    for (v, &val) in x.values.iter().enumerate() {
        if lp.is_allocation(v) {
            let out = (-val).max(val - 1.0);
            record(ConstraintClass::Feasibility, &lp.var_name(v), out);
        } else {
            record(ConstraintClass::BurnRange, &lp.var_name(v), -val);
        }
    }
    checks.into_values().collect()
}

impl Assignment {
    pub fn zero(lp: &LpInstance) -> Self {
        Assignment {
            values: vec![0.0; lp.num_vars()],
            payments: None,
        }
    }

    /// Tabulates `mech` on the one- and two-bid grid profiles. Each pair
    /// entry averages both orderings, so ties under index-based tie
    /// breaking become even splits. Payments are taken from `mech`.
    pub fn from_mechanism<M: Mechanism + ?Sized>(lp: &LpInstance, mech: &M) -> Self {
        let m = lp.m();
        let pts = lp.grid.points();
        let mut values = vec![0.0; lp.num_vars()];
        let mut single = vec![0.0; m];
        let mut pair = vec![0.0; m * m];
        for k in 0..m {
            let out = mech.evaluate(&BidProfile::from_bids(&[pts[k]]));
            values[lp.a1(k)] = out.alloc[0].to_f64();
            values[lp.b1(k)] = out.burn[0].to_f64();
            single[k] = out.pay[0].to_f64();
        }
        for x in 0..m {
            for y in 0..m {
                let fwd = mech.evaluate(&BidProfile::from_bids(&[pts[x], pts[y]]));
                let rev = mech.evaluate(&BidProfile::from_bids(&[pts[y], pts[x]]));
                let avg = |a: Money, b: Money| 0.5 * (a.to_f64() + b.to_f64());
                values[lp.a2(x, y)] = 0.5 * (fwd.alloc[0].to_f64() + rev.alloc[1].to_f64());
                values[lp.b2(x, y)] = avg(fwd.burn[0], rev.burn[1]);
                pair[x * m + y] = avg(fwd.pay[0], rev.pay[1]);
            }
        }
        Assignment {
            values,
            payments: Some(Payments { single, pair }),
        }
    }
}

/// Solves `lp` and re-checks the answer against every row.
///
/// The solver reports no dual values, so optimality is taken from its
/// status and the answer is accepted only if its scaled primal residual is
/// at most [`RESIDUAL_TOLERANCE`].
pub fn solve_lp(lp: &LpInstance) -> Result<LpSolution, BoundsError> {
    let started = Instant::now();
    let dir = match lp.direction {
        Direction::Maximize => OptimizationDirection::Maximize,
        Direction::Minimize => OptimizationDirection::Minimize,
    };
    let mut obj = vec![0.0; lp.num_vars()];
    for &(v, c) in &lp.objective {
        obj[v] += c;
    }
    let mut problem = Problem::new(dir);
    let vars: Vec<_> = (0..lp.num_vars())
        .map(|v| {
            let bounds = if lp.is_allocation(v) { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
            problem.add_var(obj[v], bounds)
        })
        .collect();
    let mut rows = 0;
    for c in &lp.constraints {
        let terms = lp.expand(c);
        if terms.is_empty() {
            continue;
        }
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(terms.iter().map(|&(v, k)| (vars[v], k)).collect::<Vec<_>>(), op, c.rhs);
        rows += 1;
    }
    let outcome = problem.solve().map_err(|e| match e {
        microlp::Error::Infeasible => BoundsError::Infeasible,
        microlp::Error::Unbounded => BoundsError::Unbounded,
        other => BoundsError::Solver(other.to_string()),
    })?;
    let solution = outcome
        .into_solution()
        .map_err(|_| BoundsError::Solver("solve interrupted".into()))?;
    if solution.status() != SolutionStatus::Optimal {
        return Err(BoundsError::Solver("optimality not proven".into()));
    }
    let values: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
    let assignment = Assignment {
        values,
        payments: None,
    };
    let max_residual = evaluate_assignment(lp, &assignment, RESIDUAL_TOLERANCE)
        .iter()
        .map(|c| c.worst)
        .fold(0.0, f64::max);
    if max_residual > RESIDUAL_TOLERANCE {
        return Err(BoundsError::Solver(format!(
            "solver answer violates a row by {max_residual:e}"
        )));
    }
    let single_allocation = (0..lp.m())
        .map(|k| (lp.points[k], assignment.values[lp.a1(k)]))
        .collect();
    Ok(LpSolution {
        optimum: solution.objective(),
        status: "optimal".into(),
        max_residual,
        gap: solution.gap().unwrap_or(0.0),
        variables: lp.num_vars(),
        constraints: rows,
        single_allocation,
        assignment,
        seconds: Some(started.elapsed().as_secs_f64()),
    })
}

/// Writes `lp` in CPLEX LP format.
pub fn to_lp_format(lp: &LpInstance) -> String {
    let mut out = String::new();
    let expr = |terms: &[(usize, f64)]| -> String {
        let mut s = String::new();
        for (k, &(v, c)) in terms.iter().enumerate() {
            let sign = if c < 0.0 { "-" } else if k == 0 { "" } else { "+" };
            let _ = write!(s, " {sign} {} {}", c.abs(), lp.var_name(v));
        }
        if s.is_empty() {
            s.push_str(" 0");
        }
        s
    };
    let _ = writeln!(out, "\\ tfmlab feasibility program on {}", lp.grid.label());
    let _ = writeln!(
        out,
        "{}",
        match lp.direction {
            Direction::Maximize => "Maximize",
            Direction::Minimize => "Minimize",
        }
    );
    let _ = writeln!(out, " obj:{}", expr(&lp.objective));
    let _ = writeln!(out, "Subject To");
    for c in &lp.constraints {
        let terms = lp.expand(c);
        if terms.is_empty() {
            continue;
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {}_{}:{} {op} {}", c.class.numeral(), c.name, expr(&terms), c.rhs);
    }
    let _ = writeln!(out, "Bounds");
    for v in 0..lp.num_vars() {
        if lp.is_allocation(v) {
            let _ = writeln!(out, " 0 <= {} <= 1", lp.var_name(v));
        }
    }
    let _ = writeln!(out, "End");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::MechanismSpec;

    fn small() -> LpInstance {
        build_lp(&GridSpec::parse_geometric("1:2:4").unwrap()).unwrap()
    }

    #[test]
    fn zero_assignment_is_feasible() {
        let lp = small();
        let checks = evaluate_assignment(&lp, &Assignment::zero(&lp), 1e-12);
        assert!(checks.iter().all(ClassCheck::holds), "{checks:?}");
    }

    #[test]
    fn toy_programs() {
        let mut lp = small();
        lp.retain_classes(|_| false);
        assert!((solve_lp(&lp).unwrap().optimum - 1.0).abs() < 1e-12);
        let mut lp = small();
        let top = lp.top_single();
        lp.set_objective(Direction::Minimize, vec![(top, 1.0)]);
        assert!(solve_lp(&lp).unwrap().optimum.abs() < 1e-12);
    }

    #[test]
    fn solved_program_is_bounded() {
        let s = solve_lp(&small()).unwrap();
        assert!(s.optimum >= -1e-9 && s.optimum <= 1.0 + 1e-9);
        assert!(s.max_residual <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn second_price_breaks_payment_burn() {
        let lp = small();
        let sp = MechanismSpec::second_price().build().unwrap();
        let checks = evaluate_assignment(&lp, &Assignment::from_mechanism(&lp, &sp), 1e-9);
        let by = |c| checks.iter().find(|k| k.class == c).unwrap();
        assert!(!by(ConstraintClass::PaymentBurn).holds());
        assert!(by(ConstraintClass::SingleBidRevenue).holds());
        assert!(by(ConstraintClass::Feasibility).holds());
        assert!(by(ConstraintClass::Monotonicity).holds());
    }

    #[test]
    fn oversized_grid_is_refused() {
        let g = GridSpec::parse_geometric("1:2:41").unwrap();
        assert!(matches!(build_lp(&g), Err(BoundsError::GridTooLarge { points: 41, .. })));
    }

    #[test]
    fn lp_format_has_sections() {
        let text = to_lp_format(&small());
        for section in ["Maximize", "Subject To", "Bounds", "End"] {
            assert!(text.contains(section));
        }
        assert!(text.contains("0 <= a_4 <= 1"));
    }
}
