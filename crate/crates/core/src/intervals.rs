//! Finite unions of real intervals with exact measure arithmetic.

use serde::Serialize;

/// Sorted, pairwise disjoint, non-degenerate intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| b > a);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Self { intervals: out }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(vec![(a, b)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b)
    }

    /// |self ∩ (lo, hi)|.
    pub fn measure_in(&self, lo: f64, hi: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
            .sum()
    }

    pub fn intersect(&self, lo: f64, hi: f64) -> Self {
        Self::new(self.intervals.iter().map(|&(a, b)| (a.max(lo), b.min(hi))).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.intervals.iter().chain(&other.intervals).copied().collect())
    }

    /// self minus the open intervals of `holes`.
    pub fn subtract(&self, holes: &Self) -> Self {
        let mut out = Vec::new();
        for &(a, b) in &self.intervals {
            let mut start = a;
            for &(h0, h1) in &holes.intervals {
                if h1 <= start || h0 >= b {
                    continue;
                }
                if h0 > start {
                    out.push((start, h0));
                }
                start = start.max(h1);
            }
            if start < b {
                out.push((start, b));
            }
        }
        Self::new(out)
    }

    /// The longest interval (first one on ties).
    pub fn largest(&self) -> Option<(f64, f64)> {
        self.intervals
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, iv| match best {
                Some(b) if b.1 - b.0 >= iv.1 - iv.0 => Some(b),
                _ => Some(iv),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merges_and_measures() {
        let s = IntervalSet::new(vec![(0.5, 0.625), (0.0, 0.25), (0.125, 0.375), (0.625, 0.75), (0.875, 0.875)]);
        assert_eq!(s.intervals(), &[(0.0, 0.375), (0.5, 0.75)]);
        assert!((s.measure() - 0.625).abs() < 1e-15);
        assert!((s.measure_in(0.25, 0.625) - 0.25).abs() < 1e-15);
        assert_eq!(s.largest(), Some((0.0, 0.375)));
    }

    #[test]
    fn subtraction() {
        let s = IntervalSet::interval(0.0, 1.0).subtract(&IntervalSet::new(vec![(0.2, 0.3), (0.9, 1.5)]));
        assert_eq!(s.intervals(), &[(0.0, 0.2), (0.3, 0.9)]);
    }

    proptest! {
        #[test]
        fn measure_is_additive(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..0.3), 0..12), cut in 0.0f64..1.0) {
            let s = IntervalSet::new(raw.iter().map(|&(a, l)| (a, a + l)).collect());
            prop_assert!(s.intervals().windows(2).all(|w| w[0].1 < w[1].0));
            let total = s.measure();
            let split = s.measure_in(f64::NEG_INFINITY, cut) + s.measure_in(cut, f64::INFINITY);
            prop_assert!((total - split).abs() < 1e-12);
            let sub = s.subtract(&IntervalSet::interval(cut, cut + 0.1));
            prop_assert!(sub.measure() <= total + 1e-15);
            prop_assert!((sub.measure() + s.measure_in(cut, cut + 0.1) - total).abs() < 1e-12);
        }
    }
}
