use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("cannot parse number `{0}`")]
    Number(String),
    #[error("amount must be non-negative, got {0}")]
    Negative(String),
    #[error("probability must lie in [0, 1], got {0}")]
    Probability(String),
    #[error("invalid grid `{0}`")]
    Grid(String),
    #[error("invalid bidder identity `{0}`")]
    Bidder(String),
    #[error("unknown property `{0}`")]
    Property(String),
    #[error("invalid payment curve `{0}`; expected id, const, <a>v+<b> or table[k:v,...]")]
    Curve(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("bidder index {index} out of range for a profile of {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{values} true values supplied for {real} real entries")]
    LengthMismatch { values: usize, real: usize },
    #[error("malformed profile: {0}")]
    MalformedProfile(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("payment curve is not monotone non-decreasing: {0}")]
    NonMonotoneCurve(String),
    #[error("payment curve falls below the reserve: {0}")]
    CurveBelowReserve(String),
    #[error("family `{family}` requires parameter `{param}`")]
    MissingParameter { family: &'static str, param: &'static str },
    #[error("at most one bidder may have a finite burn rate, found {0}")]
    TooManyFiniteRates(usize),
    #[error("the finite burn rate belongs to {0}, not to the special bidder")]
    ForeignRate(String),
    #[error("the special bidder must be a real identity, got {0}")]
    FakeIdentity(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MyersonError {
    #[error("allocation is not monotone for bidder {index} at profile {profile}: {lower} -> {higher}")]
    NotMonotone {
        profile: String,
        index: usize,
        lower: String,
        higher: String,
    },
    #[error("profile {0} is not on the tabulated grid")]
    OffGrid(String),
    #[error("burn {burn} exceeds the derived payment {payment} at profile {profile}, bidder {index}")]
    BurnExceedsPayment {
        profile: String,
        index: usize,
        burn: String,
        payment: String,
    },
    #[error("burn table is missing profile {0}")]
    MissingBurn(String),
    #[error("allocation at profile {0} has the wrong length or sums above one")]
    Infeasible(String),
    #[error("derived payment is negative at profile {0}, bidder {1}")]
    NegativePayment(String, usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("parameters outside the domain: {0}")]
    Domain(String),
    #[error("grid has {points} points; at most {max} are supported (about {variables} variables, {constraints} constraints)")]
    GridTooLarge {
        points: usize,
        max: usize,
        variables: usize,
        constraints: usize,
    },
    #[error("linear program is infeasible, which indicates a constraint construction bug")]
    Infeasible,
    #[error("linear program is unbounded, which indicates a variable bound bug")]
    Unbounded,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("minimization did not converge; best iterate A = {a}, B = {b}, value = {value}")]
    NotConverged { a: f64, b: f64, value: f64 },
    #[error("no sign change of the contradiction test on ratios [{lo}, {hi}]")]
    NoThreshold { lo: f64, hi: f64 },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration has no jobs")]
    NoJobs,
    #[error("property checks need both a mechanism and a grid")]
    MissingTarget,
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid configuration: {0}")]
    Json(#[from] serde_json::Error),
}
