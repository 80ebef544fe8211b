//! Synthetic catalogs with planted precursor/mainshock pairs.
//!
//! Background seismicity is an independent Poisson process per cell and day
//! with Gutenberg-Richter magnitudes truncated at `m_min + 4`. Planted pairs
//! put a precursor below the label threshold in a cell and a mainshock above
//! it in the same cell `lag_days` later. Generation is sequential from a
//! seeded ChaCha stream, so a config fully determines its catalog.

use chrono::{Days, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::catalog::{Catalog, Event, GridSpec, LabelSpec};
use crate::error::{Error, Result};

/// Width of the magnitude range above `m_min`.
pub const GR_SPAN: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub start_day: NaiveDate,
    pub days: usize,
    /// Expected background events per cell per day.
    pub background_rate: f64,
    pub b_value: f64,
    pub m_min: f64,
    pub precursor_mag: f64,
    pub mainshock_mag: f64,
    pub lag_days: u32,
    /// Probability per cell per day of starting a planted pair.
    pub pair_rate: f64,
    pub labels: LabelSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid: GridSpec {
                origin_lat: 35.0,
                origin_lon: 135.0,
                cell_km: 10.0,
                n_rows: 16,
                n_cols: 16,
                ref_lat: 35.0,
            },
            start_day: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            days: 2000,
            background_rate: 0.002,
            b_value: 1.0,
            m_min: 2.0,
            precursor_mag: 4.5,
            mainshock_mag: 5.5,
            lag_days: 15,
            pair_rate: 2e-4,
            labels: LabelSpec {
                t_min_days: 10,
                t_max_days: 50,
                mag_threshold: 5.0,
            },
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.labels.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.days == 0 {
            return bad("synthetic catalog needs at least one day".into());
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return bad(format!("background rate must be >= 0, got {}", self.background_rate));
        }
        if !(0.0..=1.0).contains(&self.pair_rate) {
            return bad(format!("pair rate must lie in [0, 1], got {}", self.pair_rate));
        }
        if !(self.b_value > 0.0 && self.b_value.is_finite()) || !self.m_min.is_finite() {
            return bad("Gutenberg-Richter parameters must be finite with b > 0".into());
        }
        if self.lag_days < self.labels.t_min_days || self.lag_days > self.labels.t_max_days {
            return bad(format!(
                "lag {} outside the label cylinder [{}, {}]",
                self.lag_days, self.labels.t_min_days, self.labels.t_max_days
            ));
        }
        if self.precursor_mag >= self.labels.mag_threshold {
            return bad("precursor magnitude must stay below the label threshold".into());
        }
        if self.mainshock_mag < self.labels.mag_threshold {
            return bad("mainshock magnitude must reach the label threshold".into());
        }
        Ok(())
    }

    pub fn last_day(&self) -> NaiveDate {
        self.start_day + Days::new(self.days as u64 - 1)
    }
}

/// Counts from [`plant_precursors`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlantReport {
    pub planted: usize,
    /// Pairs drawn whose mainshock would fall after the last day.
    pub skipped: usize,
}

/// Inverse-CDF draw from `P(M >= m) ∝ 10^(-b (m - m_min))` on
/// `[m_min, m_min + GR_SPAN]`.
pub fn sample_gutenberg_richter<R: Rng>(rng: &mut R, b_value: f64, m_min: f64) -> f64 {
    let u: f64 = rng.random();
    let tail = 10f64.powf(-b_value * GR_SPAN);
    m_min - (1.0 - u * (1.0 - tail)).log10() / b_value
}

fn event_in_cell<R: Rng>(rng: &mut R, grid: &GridSpec, day: NaiveDate, cell: (usize, usize), mag: f64) -> Event {
    // keep away from cell edges so the point projects back into the cell
    let (lat, lon) = grid.cell_point(
        cell.0 as f64 + rng.random_range(0.05..0.95),
        cell.1 as f64 + rng.random_range(0.05..0.95),
    );
    let secs = rng.random_range(0..86_400);
    let time = day.and_hms_opt(0, 0, 0).unwrap().and_utc() + Duration::seconds(secs);
    Event::new(time, lat, lon, mag)
}

/// Poisson background seismicity.
pub fn generate_background(config: &SynthConfig) -> Result<Catalog> {
    config.validate()?;
    if config.background_rate == 0.0 {
        return Ok(Catalog::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let poisson = Poisson::new(config.background_rate)
        .map_err(|e| Error::InvalidArgument(format!("background rate: {e}")))?;
    let mut events = Vec::new();
    for d in 0..config.days {
        let day = config.start_day + Days::new(d as u64);
        for r in 0..config.grid.n_rows {
            for c in 0..config.grid.n_cols {
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    let mag = sample_gutenberg_richter(&mut rng, config.b_value, config.m_min);
                    events.push(event_in_cell(&mut rng, &config.grid, day, (r, c), mag));
                }
            }
        }
    }
    Ok(Catalog::new(events))
}

/// Adds planted pairs to `catalog` using an RNG stream independent of the
/// background draw.
pub fn plant_precursors(catalog: &Catalog, config: &SynthConfig) -> Result<(Catalog, PlantReport)> {
    config.validate()?;
    let mut report = PlantReport::default();
    if config.pair_rate == 0.0 {
        return Ok((catalog.clone(), report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut planted = Vec::new();
    for d in 0..config.days {
        let day = config.start_day + Days::new(d as u64);
        for r in 0..config.grid.n_rows {
            for c in 0..config.grid.n_cols {
                if !rng.random_bool(config.pair_rate) {
                    continue;
                }
                if d + config.lag_days as usize >= config.days {
                    report.skipped += 1;
                    continue;
                }
                let main_day = day + Days::new(config.lag_days as u64);
                planted.push(event_in_cell(&mut rng, &config.grid, day, (r, c), config.precursor_mag));
                planted.push(event_in_cell(&mut rng, &config.grid, main_day, (r, c), config.mainshock_mag));
                report.planted += 1;
            }
        }
    }
    Ok((catalog.merged(&Catalog::new(planted)), report))
}

/// Background plus planted pairs.
pub fn generate(config: &SynthConfig) -> Result<(Catalog, PlantReport)> {
    let background = generate_background(config)?;
    plant_precursors(&background, config)
}
