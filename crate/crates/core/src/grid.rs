//! Finite discretizations of the non-negative bid line.

use std::fmt;
use std::str::FromStr;

use num_traits::CheckedMul;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ParseError};
use crate::money::{parse_ratio, Money};

pub const DEFAULT_MAX_PROFILE_SIZE: usize = 3;
pub const DEFAULT_MAX_FAKE_BIDS: usize = 2;

/// Bid grid plus the enumeration caps used by the exhaustive checkers.
///
/// Every verdict produced over a grid is relative to it: a pass means no
/// violation exists among profiles of at most `max_profile_size` real bids
/// drawn from `points`, with at most `max_fake_bids` injected bids.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridSpec {
    points: Vec<Money>,
    max_profile_size: usize,
    max_fake_bids: usize,
}

impl GridSpec {
    pub fn new(
        points: Vec<Money>,
        max_profile_size: usize,
        max_fake_bids: usize,
    ) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::InvalidGrid("no points".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        if points[0] != Money::ZERO {
            return Err(ModelError::InvalidGrid("0 must be a grid point".into()));
        }
        if max_profile_size == 0 {
            return Err(ModelError::InvalidGrid(
                "max_profile_size must be positive".into(),
            ));
        }
        Ok(GridSpec {
            points,
            max_profile_size,
            max_fake_bids,
        })
    }

    /// `lo, lo + step, …` up to and including `hi`, with 0 prepended if absent.
    pub fn arithmetic(lo: Money, hi: Money, step: Money) -> Result<Self, ModelError> {
        if step.is_zero() {
            return Err(ModelError::InvalidGrid("step must be positive".into()));
        }
        if hi < lo {
            return Err(ModelError::InvalidGrid("hi below lo".into()));
        }
        let mut points = Vec::new();
        if !lo.is_zero() {
            points.push(Money::ZERO);
        }
        let mut x = lo;
        while x <= hi {
            points.push(x);
            x += step;
            if points.len() > 10_000 {
                return Err(ModelError::InvalidGrid("more than 10000 points".into()));
            }
        }
        GridSpec::new(points, DEFAULT_MAX_PROFILE_SIZE, DEFAULT_MAX_FAKE_BIDS)
    }

    /// `{0} ∪ {base · ratio^k : k < count}`.
    pub fn geometric(base: Money, ratio: Money, count: usize) -> Result<Self, ModelError> {
        if base.is_zero() || ratio <= Money::from_int(1) || count == 0 {
            return Err(ModelError::InvalidGrid(
                "geometric grid needs base > 0, ratio > 1 and count > 0".into(),
            ));
        }
        let mut points = vec![Money::ZERO];
        let mut x = base.ratio();
        for k in 0..count {
            if k > 0 {
                x = x
                    .checked_mul(&ratio.ratio())
                    .ok_or_else(|| ModelError::InvalidGrid("geometric grid overflows".into()))?;
            }
            points.push(Money::new(x).expect("positive"));
        }
        GridSpec::new(points, 2, 1)
    }

    /// Parses `base:ratio:count`, e.g. `1:3/2:20`.
    pub fn parse_geometric(s: &str) -> Result<Self, ParseError> {
        let bad = || ParseError::Grid(s.to_string());
        let mut parts = s.split(':');
        let (Some(base), Some(ratio), Some(count), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let base = Money::new(parse_ratio(base)?)?;
        let ratio = Money::new(parse_ratio(ratio)?)?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        GridSpec::geometric(base, ratio, count).map_err(|_| bad())
    }

    pub fn with_caps(mut self, max_profile_size: usize, max_fake_bids: usize) -> Self {
        assert!(max_profile_size > 0, "max_profile_size must be positive");
        self.max_profile_size = max_profile_size;
        self.max_fake_bids = max_fake_bids;
        self
    }

    pub fn with_fake_bids(mut self, max_fake_bids: usize) -> Self {
        self.max_fake_bids = max_fake_bids;
        self
    }

    pub fn points(&self) -> &[Money] {
        &self.points
    }

    /// Grid points other than 0.
    pub fn positive_points(&self) -> &[Money] {
        &self.points[1..]
    }

    pub fn max_profile_size(&self) -> usize {
        self.max_profile_size
    }

    pub fn max_fake_bids(&self) -> usize {
        self.max_fake_bids
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, m: Money) -> bool {
        self.points.binary_search(&m).is_ok()
    }

    pub fn index_of(&self, m: Money) -> Option<usize> {
        self.points.binary_search(&m).ok()
    }

    /// All ordered bid vectors of length `1..=max_profile_size` over the grid.
    pub fn profiles(&self) -> Vec<Vec<Money>> {
        let mut out = Vec::new();
        for n in 1..=self.max_profile_size {
            out.extend(self.profiles_of_len(n));
        }
        out
    }

    /// All ordered bid vectors of length exactly `n`, in lexicographic grid order.
    pub fn profiles_of_len(&self, n: usize) -> Vec<Vec<Money>> {
        let g = self.points.len();
        let total = g.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            out.push(idx.iter().map(|&k| self.points[k]).collect());
            for pos in (0..n).rev() {
                idx[pos] += 1;
                if idx[pos] < g {
                    break;
                }
                idx[pos] = 0;
            }
        }
        out
    }

    /// Short human-readable label used to tag verdicts.
    pub fn label(&self) -> String {
        format!(
            "{} (n<={}, fakes<={})",
            describe_points(&self.points),
            self.max_profile_size,
            self.max_fake_bids
        )
    }
}

fn describe_points(points: &[Money]) -> String {
    if points.len() >= 3 {
        let step = points[1].ratio() - points[0].ratio();
        let uniform = points
            .windows(2)
            .all(|w| w[1].ratio() - w[0].ratio() == step);
        if uniform {
            let step = Money::new(step).expect("increasing grid");
            return format!("{}..{}:{}", points[0], points[points.len() - 1], step);
        }
    }
    let parts: Vec<String> = points.iter().map(ToString::to_string).collect();
    format!("{{{}}}", parts.join(","))
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `lo..hi:step`, e.g. `0..2:1/4`.
impl FromStr for GridSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Grid(s.to_string());
        let (range, step) = s.split_once(':').ok_or_else(bad)?;
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let lo = Money::new(parse_ratio(lo)?)?;
        let hi = Money::new(parse_ratio(hi)?)?;
        let step = Money::new(parse_ratio(step)?)?;
        GridSpec::arithmetic(lo, hi, step).map_err(|_| bad())
    }
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<Money>>,
    #[serde(default = "default_profile_size")]
    max_profile_size: usize,
    #[serde(default = "default_fake_bids")]
    max_fake_bids: usize,
}

fn default_profile_size() -> usize {
    DEFAULT_MAX_PROFILE_SIZE
}

fn default_fake_bids() -> usize {
    DEFAULT_MAX_FAKE_BIDS
}

impl TryFrom<GridRepr> for GridSpec {
    type Error = String;

    fn try_from(repr: GridRepr) -> Result<Self, Self::Error> {
        let points = match (repr.range, repr.points) {
            (Some(range), None) => range
                .parse::<GridSpec>()
                .map_err(|e| e.to_string())?
                .points,
            (None, Some(points)) => points,
            _ => return Err("grid needs exactly one of `range` or `points`".into()),
        };
        GridSpec::new(points, repr.max_profile_size, repr.max_fake_bids).map_err(|e| e.to_string())
    }
}

impl From<GridSpec> for GridRepr {
    fn from(g: GridSpec) -> Self {
        GridRepr {
            range: None,
            points: Some(g.points),
            max_profile_size: g.max_profile_size,
            max_fake_bids: g.max_fake_bids,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_grid_includes_endpoints() {
        let g: GridSpec = "0..2:1/4".parse().unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.points()[1], Money::frac(1, 4));
        assert_eq!(*g.points().last().unwrap(), Money::from_int(2));
        assert_eq!(g.label(), "0..2:1/4 (n<=3, fakes<=2)");
    }

    #[test]
    fn zero_is_prepended() {
        let g: GridSpec = "1..3:1".parse().unwrap();
        assert_eq!(g.points()[0], Money::ZERO);
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn geometric_grid() {
        let g = GridSpec::parse_geometric("1:3/2:4").unwrap();
        assert_eq!(g.points()[0], Money::ZERO);
        assert_eq!(g.points()[4], Money::frac(27, 8));
        assert_eq!(g.len(), 5);
        assert!(GridSpec::parse_geometric("1:1:4").is_err());
        assert!(GridSpec::parse_geometric("1:2").is_err());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(GridSpec::new(vec![], 1, 0).is_err());
        assert!(GridSpec::new(vec![Money::from_int(1)], 1, 0).is_err());
        assert!(GridSpec::new(vec![Money::ZERO, Money::ZERO], 1, 0).is_err());
        assert!("0..2".parse::<GridSpec>().is_err());
        assert!("0..2:0".parse::<GridSpec>().is_err());
    }

    #[test]
    fn profile_enumeration_counts() {
        let g = "0..2:1".parse::<GridSpec>().unwrap().with_caps(2, 0);
        assert_eq!(g.profiles_of_len(2).len(), 9);
        assert_eq!(g.profiles().len(), 3 + 9);
        assert_eq!(g.profiles_of_len(2)[1], vec![Money::ZERO, Money::from_int(1)]);
    }

    #[test]
    fn json_accepts_range_or_points() {
        let g: GridSpec = serde_json::from_str(r#"{"range": "0..1:1/2"}"#).unwrap();
        assert_eq!(g.len(), 3);
        let back: GridSpec = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GridSpec>(r#"{"points": [1, 2]}"#).is_err());
    }
}
