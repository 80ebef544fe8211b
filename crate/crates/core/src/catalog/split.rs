use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

use super::Catalog;

/// Half-open range of calendar days `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DayRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DayRange {
    pub fn empty_at(day: NaiveDate) -> Self {
        DayRange { start: day, end: day }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).num_days().max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day < self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len() as u64).map(|i| self.start + Days::new(i))
    }
}

/// Chronological train/validation/test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DaySplit {
    pub train: DayRange,
    pub val: DayRange,
    pub test: DayRange,
}

/// Splits the catalog's day span into three contiguous chronological blocks.
///
/// Block boundaries sit at the cumulative fractions of the span. Every
/// non-empty block after the first starts `gap_days` after the previous
/// non-empty block ends, so no label cylinder reaching `gap_days` ahead can
/// cross a boundary. Zero fractions give empty blocks.
pub fn split_by_time(catalog: &Catalog, fractions: [f64; 3], gap_days: u32) -> Result<DaySplit> {
    let (first, last) = catalog.day_span().ok_or(Error::EmptyCatalog)?;
    let n_days = (last - first).num_days() as usize + 1;
    split_days(first, n_days, fractions, gap_days)
}

/// As [`split_by_time`] for an explicit span of `n_days` starting at `first`.
pub fn split_days(first: NaiveDate, n_days: usize, fractions: [f64; 3], gap_days: u32) -> Result<DaySplit> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::InvalidArgument(format!("split fractions must be non-negative, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions must sum to 1, got {total}")));
    }

    let n = n_days as f64;
    let bounds = [
        0usize,
        (n * fractions[0]).round() as usize,
        (n * (fractions[0] + fractions[1])).round() as usize,
        n_days,
    ];
    let day = |i: usize| first + Days::new(i as u64);

    let mut ranges = [DayRange::empty_at(first); 3];
    let mut prev_end: Option<usize> = None;
    for k in 0..3 {
        let (lo, hi) = (bounds[k], bounds[k + 1].min(n_days));
        if fractions[k] == 0.0 {
            ranges[k] = DayRange::empty_at(day(hi));
            continue;
        }
        let start = match prev_end {
            Some(end) => end + gap_days as usize,
            None => lo,
        };
        let start = start.max(lo);
        if start >= hi {
            return Err(Error::InvalidArgument(format!(
                "span of {n_days} days is too short for split {fractions:?} with {gap_days}-day gaps"
            )));
        }
        ranges[k] = DayRange { start: day(start), end: day(hi) };
        prev_end = Some(hi);
    }

    Ok(DaySplit {
        train: ranges[0],
        val: ranges[1],
        test: ranges[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
    }

    fn off(day: NaiveDate) -> i64 {
        (day - d0()).num_days()
    }

    #[test]
    fn thousand_days_with_fifty_day_gaps() {
        let s = split_days(d0(), 1000, [0.7, 0.1, 0.2], 50).unwrap();
        assert_eq!((off(s.train.start), off(s.train.end)), (0, 700));
        assert_eq!((off(s.val.start), off(s.val.end)), (750, 800));
        assert_eq!((off(s.test.start), off(s.test.end)), (850, 1000));
    }

    #[test]
    fn everything_in_train() {
        let s = split_days(d0(), 100, [1.0, 0.0, 0.0], 50).unwrap();
        assert_eq!(s.train.len(), 100);
        assert!(s.val.is_empty());
        assert!(s.test.is_empty());
    }

    #[test]
    fn too_short_for_gaps() {
        assert!(split_days(d0(), 60, [0.7, 0.1, 0.2], 50).is_err());
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(split_days(d0(), 100, [0.5, 0.1, 0.1], 5).is_err());
        assert!(split_days(d0(), 100, [1.2, -0.1, -0.1], 5).is_err());
    }

    #[test]
    fn ranges_are_ordered_and_disjoint() {
        let s = split_days(d0(), 2000, [0.6, 0.2, 0.2], 50).unwrap();
        assert!(s.train.end <= s.val.start);
        assert!(s.val.end <= s.test.start);
        assert_eq!(off(s.val.start) - off(s.train.end), 50);
        assert_eq!(off(s.test.start) - off(s.val.end), 50);
        assert_eq!(s.train.days().count(), s.train.len());
    }

    #[test]
    fn catalog_span_drives_split() {
        use crate::catalog::Event;
        let ev = |d: u64| Event::new((d0() + Days::new(d)).and_hms_opt(0, 0, 0).unwrap().and_utc(), 0.0, 0.0, 1.0);
        let cat = Catalog::new(vec![ev(999), ev(0)]);
        let s = split_by_time(&cat, [0.7, 0.1, 0.2], 50).unwrap();
        assert_eq!(off(s.val.start), 750);
        assert!(split_by_time(&Catalog::default(), [1.0, 0.0, 0.0], 1).is_err());
    }
}
