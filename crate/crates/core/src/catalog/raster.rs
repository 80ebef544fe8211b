use std::io::{Read, Write};

use chrono::{Days, NaiveDate};
use rayon::prelude::*;

use crate::binfmt::{self, BlockDims};
use crate::error::{Error, Result};

use super::{Catalog, GridSpec};

/// Dense per-day magnitude rasters, day-major then row-major.
///
/// A value is 0 where no in-bounds event fell in that cell on that day and
/// otherwise the largest magnitude among them.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMapSeq {
    pub start_day: NaiveDate,
    pub days: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub maps: Vec<f32>,
}

impl HeatMapSeq {
    pub fn zeros(start_day: NaiveDate, days: usize, n_rows: usize, n_cols: usize) -> Self {
        HeatMapSeq {
            start_day,
            days,
            n_rows,
            n_cols,
            maps: vec![0.0; days * n_rows * n_cols],
        }
    }

    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Map for day offset `d` (0-based from `start_day`).
    pub fn map(&self, d: usize) -> &[f32] {
        let n = self.cells();
        &self.maps[d * n..(d + 1) * n]
    }

    pub fn value(&self, d: usize, row: usize, col: usize) -> f32 {
        self.maps[(d * self.n_rows + row) * self.n_cols + col]
    }

    pub fn day(&self, d: usize) -> NaiveDate {
        self.start_day + Days::new(d as u64)
    }

    /// Offset of `day` within the sequence, if covered.
    pub fn day_offset(&self, day: NaiveDate) -> Option<usize> {
        let off = (day - self.start_day).num_days();
        (off >= 0 && (off as usize) < self.days).then_some(off as usize)
    }

    pub fn last_day(&self) -> NaiveDate {
        self.day(self.days.saturating_sub(1))
    }

    pub fn nonzero_count(&self) -> usize {
        self.maps.iter().filter(|v| **v != 0.0).count()
    }

    /// Writes the `QGRD` container (the start day is not part of it).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binfmt::write_f32_block(w, self.dims()?, &self.maps)
    }

    pub fn read_from<R: Read>(r: &mut R, start_day: NaiveDate) -> Result<Self> {
        let (dims, maps) = binfmt::read_f32_block(r)?;
        Ok(HeatMapSeq {
            start_day,
            days: dims.days as usize,
            n_rows: dims.rows as usize,
            n_cols: dims.cols as usize,
            maps,
        })
    }

    fn dims(&self) -> Result<BlockDims> {
        let narrow = |v: usize| {
            u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")))
        };
        Ok(BlockDims {
            days: narrow(self.days)?,
            rows: narrow(self.n_rows)?,
            cols: narrow(self.n_cols)?,
        })
    }
}

/// Rasterizes `days` consecutive days starting at `start_day`.
///
/// Days are filled in parallel; the max rule makes the result independent of
/// event and thread order.
pub fn rasterize_daily(
    catalog: &Catalog,
    grid: &GridSpec,
    start_day: NaiveDate,
    days: usize,
) -> Result<HeatMapSeq> {
    if days == 0 {
        return Err(Error::InvalidArgument("need at least one day to rasterize".into()));
    }
    grid.validate()?;
    let cells = grid.n_cells();
    let mut per_day: Vec<Vec<(usize, f32)>> = vec![Vec::new(); days];
    for event in catalog.events() {
        let off = (event.day() - start_day).num_days();
        if off < 0 || off as usize >= days {
            continue;
        }
        if let Some(cell) = grid.project(event.lat, event.lon) {
            per_day[off as usize].push((grid.index(cell), event.mag as f32));
        }
    }

    let mut maps = vec![0.0f32; days * cells];
    maps.par_chunks_mut(cells)
        .zip(per_day.par_iter())
        .for_each(|(map, hits)| {
            for &(idx, mag) in hits {
                // negative magnitudes never beat the empty-cell zero
                if mag > map[idx] {
                    map[idx] = mag;
                }
            }
        });

    Ok(HeatMapSeq {
        start_day,
        days,
        n_rows: grid.n_rows,
        n_cols: grid.n_cols,
        maps,
    })
}
