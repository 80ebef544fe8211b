use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

use super::{Catalog, GridSpec};

/// Time-cylinder definition: a label at reference day `T` is positive when an
/// event with `mag >= mag_threshold` occurs in the cell during
/// `[T + t_min_days, T + t_max_days]`, both ends inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelSpec {
    pub t_min_days: u32,
    pub t_max_days: u32,
    pub mag_threshold: f64,
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec {
            t_min_days: 10,
            t_max_days: 50,
            mag_threshold: 3.5,
        }
    }
}

impl LabelSpec {
    pub fn new(t_min_days: u32, t_max_days: u32, mag_threshold: f64) -> Result<Self> {
        let spec = LabelSpec {
            t_min_days,
            t_max_days,
            mag_threshold,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_min_days == 0 || self.t_min_days > self.t_max_days {
            return Err(Error::InvalidArgument(format!(
                "need 0 < t_min_days <= t_max_days, got {} and {}",
                self.t_min_days, self.t_max_days
            )));
        }
        if !self.mag_threshold.is_finite() {
            return Err(Error::InvalidArgument("mag_threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Binary labels per reference day and cell, with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTensor {
    pub reference_days: Vec<NaiveDate>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// `[day][row][col]`, 0 or 1.
    pub y: Vec<u8>,
    /// `[day][row][col]`, 0 where the cylinder runs past the observed period.
    pub valid: Vec<u8>,
}

impl LabelTensor {
    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn days(&self) -> usize {
        self.reference_days.len()
    }

    pub fn labels(&self, i: usize) -> &[u8] {
        let n = self.cells();
        &self.y[i * n..(i + 1) * n]
    }

    pub fn mask(&self, i: usize) -> &[u8] {
        let n = self.cells();
        &self.valid[i * n..(i + 1) * n]
    }

    pub fn positives(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().map(|&v| v as usize).sum()
    }

    /// Sub-tensor restricted to the days where `keep` holds.
    pub fn filter_days(&self, mut keep: impl FnMut(NaiveDate) -> bool) -> LabelTensor {
        let n = self.cells();
        let mut out = LabelTensor {
            reference_days: Vec::new(),
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            y: Vec::new(),
            valid: Vec::new(),
        };
        for (i, &day) in self.reference_days.iter().enumerate() {
            if keep(day) {
                out.reference_days.push(day);
                out.y.extend_from_slice(&self.y[i * n..(i + 1) * n]);
                out.valid.extend_from_slice(&self.valid[i * n..(i + 1) * n]);
            }
        }
        out
    }
}

/// Builds labels with the observation period ending at the catalog's last
/// event day.
pub fn build_labels(
    catalog: &Catalog,
    grid: &GridSpec,
    spec: &LabelSpec,
    reference_days: &[NaiveDate],
) -> Result<LabelTensor> {
    let end = catalog.day_span().map(|(_, last)| last);
    build_labels_until(catalog, grid, spec, reference_days, end)
}

/// Builds labels for an explicitly given last observed day. With `None`
/// every label is masked out.
pub fn build_labels_until(
    catalog: &Catalog,
    grid: &GridSpec,
    spec: &LabelSpec,
    reference_days: &[NaiveDate],
    observed_end: Option<NaiveDate>,
) -> Result<LabelTensor> {
    spec.validate()?;
    grid.validate()?;
    let cells = grid.n_cells();
    let n_days = reference_days.len();
    let mut y = vec![0u8; n_days * cells];
    let mut valid = vec![0u8; n_days * cells];

    for (i, &day) in reference_days.iter().enumerate() {
        let horizon = day + Days::new(spec.t_max_days as u64);
        if observed_end.is_some_and(|end| horizon <= end) {
            valid[i * cells..(i + 1) * cells].fill(1);
        }
    }

    // reference days sorted with their original positions, for range lookups
    let mut order: Vec<(NaiveDate, usize)> =
        reference_days.iter().copied().enumerate().map(|(i, d)| (d, i)).collect();
    order.sort();

    for event in catalog.events() {
        if event.mag < spec.mag_threshold {
            continue;
        }
        let Some(cell) = grid.project(event.lat, event.lon) else {
            continue;
        };
        let idx = grid.index(cell);
        // T + t_min <= day <= T + t_max  <=>  day - t_max <= T <= day - t_min
        let e = event.day();
        let lo = e - Days::new(spec.t_max_days as u64);
        let hi = e - Days::new(spec.t_min_days as u64);
        let start = order.partition_point(|(d, _)| *d < lo);
        for &(d, i) in order[start..].iter().take_while(|(d, _)| *d <= hi) {
            debug_assert!(d >= lo);
            if valid[i * cells + idx] == 1 {
                y[i * cells + idx] = 1;
            }
        }
    }

    Ok(LabelTensor {
        reference_days: reference_days.to_vec(),
        n_rows: grid.n_rows,
        n_cols: grid.n_cols,
        y,
        valid,
    })
}
