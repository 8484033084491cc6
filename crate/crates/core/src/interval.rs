//! Half-open address intervals and coalesced interval sets.
//!
//! An [`IntervalSet`] keeps its members sorted by `lo`, pairwise disjoint and
//! non-adjacent: `[0, 10)` and `[10, 20)` are always stored as `[0, 20)`.
//! Every operation preserves that normal form.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open address range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[u64; 2]", try_from = "[u64; 2]")]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    /// Panics if `hi <= lo`; use [`Interval::try_new`] for untrusted input.
    pub fn new(lo: u64, hi: u64) -> Self {
        assert!(hi > lo, "empty interval [{lo}, {hi})");
        Interval { lo, hi }
    }

    pub fn try_new(lo: u64, hi: u64) -> Option<Self> {
        (hi > lo).then_some(Interval { lo, hi })
    }

    pub fn at(lo: u64, len: u64) -> Self {
        Interval::new(lo, lo + len)
    }

    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.lo <= addr && addr < self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

impl From<Interval> for [u64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

impl TryFrom<[u64; 2]> for Interval {
    type Error = String;

    fn try_from([lo, hi]: [u64; 2]) -> Result<Self, Self::Error> {
        Interval::try_new(lo, hi).ok_or_else(|| format!("empty interval [{lo}, {hi})"))
    }
}

/// Sorted, disjoint, coalesced set of [`Interval`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn new() -> Self {
        IntervalSet::default()
    }

    pub fn single(iv: Interval) -> Self {
        IntervalSet { intervals: vec![iv] }
    }

    /// Builds a set from arbitrary (possibly overlapping, unsorted) intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        let mut raw: Vec<Interval> = iter.into_iter().collect();
        raw.sort_unstable();
        let mut intervals: Vec<Interval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match intervals.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => intervals.push(iv),
            }
        }
        IntervalSet { intervals }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.intervals.iter()
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.intervals
    }

    /// Total number of addresses covered.
    pub fn measure(&self) -> u64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, addr: u64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi <= addr);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(addr))
    }

    /// True when `range` lies entirely inside one member.
    pub fn covers(&self, range: &Interval) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi <= range.lo);
        self.intervals.get(idx).is_some_and(|iv| iv.covers(range))
    }

    pub fn overlaps(&self, range: &Interval) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi <= range.lo);
        self.intervals.get(idx).is_some_and(|iv| iv.overlaps(range))
    }

    /// Adds `range`, merging with any touching members.
    pub fn insert(&mut self, range: Interval) {
        // first member whose hi reaches range.lo (touching counts)
        let start = self.intervals.partition_point(|iv| iv.hi < range.lo);
        // first member that starts strictly after range.hi
        let end = self.intervals.partition_point(|iv| iv.lo <= range.hi);
        if start == end {
            self.intervals.insert(start, range);
            return;
        }
        let lo = range.lo.min(self.intervals[start].lo);
        let hi = range.hi.max(self.intervals[end - 1].hi);
        self.intervals.splice(start..end, std::iter::once(Interval { lo, hi }));
    }

    /// Removes every address of `range` from the set.
    pub fn remove(&mut self, range: Interval) {
        let start = self.intervals.partition_point(|iv| iv.hi <= range.lo);
        let end = self.intervals.partition_point(|iv| iv.lo < range.hi);
        if start >= end {
            return;
        }
        let first = self.intervals[start];
        let last = self.intervals[end - 1];
        let mut keep = Vec::with_capacity(2);
        if first.lo < range.lo {
            keep.push(Interval::new(first.lo, range.lo));
        }
        if last.hi > range.hi {
            keep.push(Interval::new(range.hi, last.hi));
        }
        self.intervals.splice(start..end, keep);
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_intervals(self.intervals.iter().chain(other.intervals.iter()).copied())
    }

    /// Addresses present in both sets.
    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo < hi {
                out.push(Interval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        // members of each input are non-adjacent, so pieces never touch
        IntervalSet { intervals: out }
    }

    /// Addresses of `self` not present in `occupied`.
    pub fn subtract(&self, occupied: &IntervalSet) -> IntervalSet {
        let b = &occupied.intervals;
        let mut out = Vec::new();
        let mut j = 0;
        for iv in &self.intervals {
            let mut lo = iv.lo;
            while j < b.len() && b[j].hi <= lo {
                j += 1;
            }
            let mut k = j;
            while k < b.len() && b[k].lo < iv.hi {
                if b[k].lo > lo {
                    out.push(Interval { lo, hi: b[k].lo });
                }
                lo = lo.max(b[k].hi);
                k += 1;
            }
            if lo < iv.hi {
                out.push(Interval { lo, hi: iv.hi });
            }
        }
        IntervalSet { intervals: out }
    }

    /// Smallest member with length ≥ `size`; ties go to the lowest address.
    pub fn best_fit(&self, size: u64) -> Option<Interval> {
        self.intervals
            .iter()
            .filter(|iv| iv.len() >= size)
            .min_by_key(|iv| (iv.len(), iv.lo))
            .copied()
    }

    /// Checks the normal form; used by tests and debug assertions.
    pub fn is_normalized(&self) -> bool {
        self.intervals.iter().all(|iv| iv.hi > iv.lo) && self.intervals.windows(2).all(|w| w[0].hi < w[1].lo)
    }
}

impl From<Vec<Interval>> for IntervalSet {
    fn from(v: Vec<Interval>) -> Self {
        IntervalSet::from_intervals(v)
    }
}

impl From<IntervalSet> for Vec<Interval> {
    fn from(s: IntervalSet) -> Self {
        s.intervals
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        IntervalSet::from_intervals(iter)
    }
}

impl<'a> IntoIterator for &'a IntervalSet {
    type Item = &'a Interval;
    type IntoIter = std::slice::Iter<'a, Interval>;

    fn into_iter(self) -> Self::IntoIter {
        self.intervals.iter()
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{iv}")?;
        }
        f.write_str("}")
    }
}

/// Free-function form of [`IntervalSet::intersect`].
pub fn intersect(x: &IntervalSet, y: &IntervalSet) -> IntervalSet {
    x.intersect(y)
}

/// Free-function form of [`IntervalSet::subtract`].
pub fn subtract(universe: &IntervalSet, occupied: &IntervalSet) -> IntervalSet {
    universe.subtract(occupied)
}

/// Free-function form of [`IntervalSet::best_fit`].
pub fn best_fit(candidates: &IntervalSet, size: u64) -> Option<Interval> {
    candidates.best_fit(size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIVERSE: u64 = 128;

    fn set(ivs: &[(u64, u64)]) -> IntervalSet {
        ivs.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect()
    }

    fn bitmap(s: &IntervalSet) -> Vec<bool> {
        (0..UNIVERSE).map(|a| s.contains(a)).collect()
    }

    fn from_bitmap(bits: &[bool]) -> IntervalSet {
        let mut out = IntervalSet::new();
        for (a, &b) in bits.iter().enumerate() {
            if b {
                out.insert(Interval::at(a as u64, 1));
            }
        }
        out
    }

    #[test]
    fn intersect_example() {
        let x = set(&[(0, 50), (80, 100)]);
        let y = set(&[(30, 90)]);
        // point-wise oracle over 0..100
        let expected: Vec<bool> = (0..UNIVERSE).map(|a| x.contains(a) && y.contains(a)).collect();
        let got = x.intersect(&y);
        assert_eq!(bitmap(&got), expected);
        assert_eq!(got, set(&[(30, 50), (80, 90)]));
        assert!(x.intersect(&IntervalSet::new()).is_empty());
        assert_eq!(x.intersect(&x), x);
    }

    #[test]
    fn subtract_example() {
        let u = set(&[(0, 100)]);
        let occ = set(&[(20, 40), (60, 70)]);
        let got = u.subtract(&occ);
        let expected: Vec<bool> = (0..UNIVERSE).map(|a| u.contains(a) && !occ.contains(a)).collect();
        assert_eq!(bitmap(&got), expected);
        assert_eq!(got, set(&[(0, 20), (40, 60), (70, 100)]));
        assert_eq!(u.subtract(&IntervalSet::new()), u);
        assert!(u.subtract(&u).is_empty());
    }

    #[test]
    fn best_fit_examples() {
        let c = set(&[(0, 30), (50, 66), (100, 140)]);
        // exhaustive scan oracle: smallest adequate length, then lowest lo
        let mut oracle: Option<Interval> = None;
        for iv in c.iter() {
            if iv.len() >= 16 && oracle.is_none_or(|o| iv.len() < o.len()) {
                oracle = Some(*iv);
            }
        }
        assert_eq!(c.best_fit(16), oracle);
        assert_eq!(c.best_fit(16), Some(Interval::new(50, 66)));
        assert_eq!(c.best_fit(41), None);
        assert_eq!(set(&[(0, 16), (32, 48)]).best_fit(16), Some(Interval::new(0, 16)));
    }

    #[test]
    fn insert_coalesces_adjacent() {
        let mut s = set(&[(0, 10), (20, 30)]);
        s.insert(Interval::new(10, 20));
        assert_eq!(s, set(&[(0, 30)]));
        s.remove(Interval::new(5, 25));
        assert_eq!(s, set(&[(0, 5), (25, 30)]));
        s.remove(Interval::new(100, 120));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn from_intervals_merges_touching() {
        let s = set(&[(10, 20), (0, 10), (15, 25), (40, 50)]);
        assert_eq!(s.as_slice(), &[Interval::new(0, 25), Interval::new(40, 50)]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u64, u64),
        Remove(u64, u64),
        Intersect(Vec<(u64, u64)>),
        Subtract(Vec<(u64, u64)>),
    }

    fn range() -> impl Strategy<Value = (u64, u64)> {
        (0..UNIVERSE - 1).prop_flat_map(|lo| (Just(lo), lo + 1..=UNIVERSE))
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            range().prop_map(|(a, b)| Op::Insert(a, b)),
            range().prop_map(|(a, b)| Op::Remove(a, b)),
            prop::collection::vec(range(), 0..5).prop_map(Op::Intersect),
            prop::collection::vec(range(), 0..5).prop_map(Op::Subtract),
        ]
    }

    proptest! {
        #[test]
        fn closure_against_bitmap(ops in prop::collection::vec(op(), 1..40)) {
            let mut s = IntervalSet::new();
            let mut bits = vec![false; UNIVERSE as usize];
            for op in ops {
                match op {
                    Op::Insert(lo, hi) => {
                        s.insert(Interval::new(lo, hi));
                        bits[lo as usize..hi as usize].iter_mut().for_each(|b| *b = true);
                    }
                    Op::Remove(lo, hi) => {
                        s.remove(Interval::new(lo, hi));
                        bits[lo as usize..hi as usize].iter_mut().for_each(|b| *b = false);
                    }
                    Op::Intersect(other) => {
                        let o = set(&other);
                        s = s.intersect(&o);
                        for (a, b) in bits.iter_mut().enumerate() {
                            *b &= o.contains(a as u64);
                        }
                    }
                    Op::Subtract(other) => {
                        let o = set(&other);
                        s = s.subtract(&o);
                        for (a, b) in bits.iter_mut().enumerate() {
                            *b &= !o.contains(a as u64);
                        }
                    }
                }
                prop_assert!(s.is_normalized());
                prop_assert_eq!(bitmap(&s), bits.clone());
                prop_assert_eq!(&s, &from_bitmap(&bits));
            }
        }

        #[test]
        fn de_morgan(u in prop::collection::vec(range(), 1..5), x in prop::collection::vec(range(), 0..5)) {
            let u = set(&u);
            let x = set(&x).intersect(&u);
            prop_assert_eq!(u.subtract(&u.subtract(&x)), u.intersect(&x));
        }

        #[test]
        fn best_fit_matches_scan(ivs in prop::collection::vec(range(), 0..6), size in 1u64..64) {
            let s = set(&ivs);
            let oracle = s.iter().copied().filter(|iv| iv.len() >= size)
                .fold(None::<Interval>, |best, iv| match best {
                    Some(b) if b.len() < iv.len() || (b.len() == iv.len() && b.lo < iv.lo) => Some(b),
                    _ => Some(iv),
                });
            prop_assert_eq!(s.best_fit(size), oracle);
        }
    }
}
