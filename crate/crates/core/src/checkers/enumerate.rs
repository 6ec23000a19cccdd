//! Search-space enumeration shared by the checkers.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::grid::GridSpec;
use crate::money::Money;

/// Mixed-radix counter, last digit fastest.
pub(crate) struct Odometer {
    radix: Vec<usize>,
    idx: Vec<usize>,
    started: bool,
}

impl Odometer {
    pub(crate) fn new(radix: Vec<usize>) -> Self {
        let n = radix.len();
        Odometer {
            radix,
            idx: vec![0; n],
            started: false,
        }
    }

    /// Advances and returns the current digits, or `None` when exhausted.
    pub(crate) fn advance(&mut self) -> Option<&[usize]> {
        if !self.started {
            self.started = true;
            if self.radix.contains(&0) {
                return None;
            }
            return Some(&self.idx);
        }
        for pos in (0..self.idx.len()).rev() {
            self.idx[pos] += 1;
            if self.idx[pos] < self.radix[pos] {
                return Some(&self.idx);
            }
            self.idx[pos] = 0;
        }
        None
    }
}

/// Every multiset of at most `max` values from `points`, each sorted
/// ascending, smaller multisets first.
pub(crate) fn fake_multisets(points: &[Money], max: usize) -> Vec<Vec<Money>> {
    let mut out = vec![Vec::new()];
    let mut layer: Vec<(Vec<Money>, usize)> = vec![(Vec::new(), 0)];
    for _ in 0..max {
        let mut next = Vec::new();
        for (set, from) in &layer {
            for (k, &p) in points.iter().enumerate().skip(*from) {
                let mut s = set.clone();
                s.push(p);
                next.push((s, k));
            }
        }
        out.extend(next.iter().map(|(s, _)| s.clone()));
        layer = next;
    }
    out
}

/// The value vectors a search ranges over: an explicit focus list, or every
/// grid profile up to the size cap.
pub(crate) fn value_vectors(grid: &GridSpec, focus: Option<&[Vec<Money>]>) -> Vec<Vec<Money>> {
    match focus {
        Some(list) => list.to_vec(),
        None => grid.profiles(),
    }
}

/// Bid options for a real bidder whose bid may be changed: unchanged first,
/// then omission, then every other grid point. Absent bidders stay absent.
pub(crate) fn deviation_options(points: &[Money], value: Money) -> Vec<Money> {
    if value.is_zero() {
        return vec![Money::ZERO];
    }
    let mut opts = vec![value, Money::ZERO];
    opts.extend(points.iter().copied().filter(|&p| p != value && !p.is_zero()));
    opts
}

/// Bid options for a real bidder the miner can only keep or omit.
pub(crate) fn keep_or_omit(value: Money) -> Vec<Money> {
    if value.is_zero() {
        vec![Money::ZERO]
    } else {
        vec![value, Money::ZERO]
    }
}

/// Runs `f` over `units` until one yields a witness. Sequential and in order
/// when `deterministic`; otherwise any worker's first witness wins.
pub(crate) fn search<T, W, F>(units: &[T], deterministic: bool, count: &AtomicU64, f: F) -> Option<W>
where
    T: Sync,
    W: Send,
    F: Fn(&T, &mut u64) -> Option<W> + Sync,
{
    let run = |u: &T| {
        let mut local = 0u64;
        let found = f(u, &mut local);
        count.fetch_add(local, Ordering::Relaxed);
        found
    };
    if deterministic {
        units.iter().find_map(run)
    } else {
        units.par_iter().find_map_any(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odometer_covers_the_product() {
        let mut od = Odometer::new(vec![2, 3]);
        let mut seen = Vec::new();
        while let Some(d) = od.advance() {
            seen.push(d.to_vec());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 1]);
        assert!(Odometer::new(vec![2, 0]).advance().is_none());
        assert_eq!(Odometer::new(vec![]).advance().map(<[usize]>::len), Some(0));
    }

    #[test]
    fn multisets_are_counted_with_repetition() {
        let pts: Vec<Money> = (1..=4).map(Money::from_int).collect();
        let sets = fake_multisets(&pts, 2);
        assert_eq!(sets.len(), 1 + 4 + 10);
        assert!(sets[0].is_empty());
        assert!(sets.iter().all(|s| s.windows(2).all(|w| w[0] <= w[1])));
        assert_eq!(fake_multisets(&pts, 0).len(), 1);
    }

    #[test]
    fn deviation_options_start_honest() {
        let pts: Vec<Money> = (0..=3).map(Money::from_int).collect();
        let opts = deviation_options(&pts, Money::from_int(2));
        assert_eq!(opts[0], Money::from_int(2));
        assert_eq!(opts[1], Money::ZERO);
        assert_eq!(opts.len(), 4);
        assert_eq!(deviation_options(&pts, Money::ZERO), vec![Money::ZERO]);
    }
}
