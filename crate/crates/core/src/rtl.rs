//! Region-Time-Length (RTL) seismicity features.
//!
//! For an evaluation point and time `t`, every past event `i` with
//! `mag_i >= m_min`, `0 < t - t_i <= t_max` and epicentral distance
//! `r_i <= r_max` (distances floored at `eps_km`) contributes to three sums:
//!
//! ```text
//! R = Σ exp(-r_i / r0)
//! T = Σ exp(-(t - t_i) / t0)
//! L = Σ l(mag_i) / r_i,   l(m) = 10^(0.5 m - 1.8) km
//! ```
//!
//! and the feature is the product `R * T * L`. [`rtl_grid`] evaluates it at
//! cell centres using time and latitude-band indexing; [`rtl_grid_naive`]
//! scans the whole catalog per cell and serves as its reference.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, Days, NaiveDate, Utc};
use rayon::prelude::*;

use crate::catalog::{Catalog, GridSpec, LabelTensor, KM_PER_DEGREE};
use crate::error::{Error, Result};

const EARTH_RADIUS_KM: f64 = 6371.0;
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtlParams {
    pub r0: f64,
    pub t0: f64,
    pub r_max: f64,
    pub t_max: f64,
    pub m_min: f64,
    pub eps_km: f64,
}

impl Default for RtlParams {
    fn default() -> Self {
        RtlParams::new(50.0, 100.0)
    }
}

impl RtlParams {
    /// Parameters with `r_max = 2 r0`, `t_max = 2 t0`, `m_min = 0`, `eps_km = 1`.
    pub fn new(r0: f64, t0: f64) -> Self {
        RtlParams {
            r0,
            t0,
            r_max: 2.0 * r0,
            t_max: 2.0 * t0,
            m_min: 0.0,
            eps_km: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.r0 > 0.0
            && self.t0 > 0.0
            && self.r_max >= self.r0
            && self.t_max >= self.t0
            && self.eps_km > 0.0
            && [self.r0, self.t0, self.r_max, self.t_max, self.m_min, self.eps_km]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid RTL parameters {self:?}")))
        }
    }

    /// `r0=..,t0=..,...` as echoed in exported files.
    pub fn describe(&self) -> String {
        format!(
            "r0={},t0={},r_max={},t_max={},m_min={},eps_km={}",
            self.r0, self.t0, self.r_max, self.t_max, self.m_min, self.eps_km
        )
    }
}

/// Rupture length in kilometres for magnitude `mag`.
pub fn rupture_length(mag: f64) -> f64 {
    10f64.powf(0.5 * mag - 1.8)
}

/// Great-circle distance on a spherical Earth.
pub fn epicentral_distance_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// The three RTL sums before multiplication.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RtlFactors {
    pub r: f64,
    pub t: f64,
    pub l: f64,
}

impl RtlFactors {
    pub fn value(&self) -> f64 {
        self.r * self.t * self.l
    }

    /// Adds one event at distance `dist_km` and age `age_days`, if it passes
    /// the magnitude, age and distance cuts.
    pub fn add(&mut self, dist_km: f64, age_days: f64, mag: f64, params: &RtlParams) {
        if mag < params.m_min || !(age_days > 0.0 && age_days <= params.t_max) {
            return;
        }
        let r = dist_km.max(params.eps_km);
        if r > params.r_max {
            return;
        }
        self.r += (-r / params.r0).exp();
        self.t += (-age_days / params.t0).exp();
        self.l += rupture_length(mag) / r;
    }
}

impl std::ops::Add for RtlFactors {
    type Output = RtlFactors;

    fn add(self, o: RtlFactors) -> RtlFactors {
        RtlFactors {
            r: self.r + o.r,
            t: self.t + o.t,
            l: self.l + o.l,
        }
    }
}

/// Sums contributions given directly as `(dist_km, age_days, mag)`.
pub fn factors_from<I>(contributions: I, params: &RtlParams) -> RtlFactors
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut f = RtlFactors::default();
    for (d, a, m) in contributions {
        f.add(d, a, m, params);
    }
    f
}

fn age_days(t: DateTime<Utc>, ti: DateTime<Utc>) -> f64 {
    (t - ti).num_milliseconds() as f64 / (1000.0 * SECONDS_PER_DAY)
}

/// RTL sums at a point by a full catalog scan.
pub fn rtl_factors_at(catalog: &Catalog, lat: f64, lon: f64, t: DateTime<Utc>, params: &RtlParams) -> RtlFactors {
    let mut f = RtlFactors::default();
    for e in catalog.events() {
        let dist = epicentral_distance_km(lat, lon, e.lat, e.lon);
        f.add(dist, age_days(t, e.time), e.mag, params);
    }
    f
}

pub fn rtl_at(catalog: &Catalog, lat: f64, lon: f64, t: DateTime<Utc>, params: &RtlParams) -> f64 {
    rtl_factors_at(catalog, lat, lon, t, params).value()
}

/// Instant at which a reference day is evaluated: the end of that day, so
/// every event on or before it counts.
pub fn evaluation_time(day: NaiveDate) -> DateTime<Utc> {
    (day + Days::new(1)).and_hms_opt(0, 0, 0).unwrap().and_utc()
}

/// RTL values per reference day and cell, `[day][row][col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RtlFeatureMap {
    pub reference_days: Vec<NaiveDate>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub params: RtlParams,
    pub standardized: bool,
}

impl RtlFeatureMap {
    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn day(&self, i: usize) -> &[f64] {
        let n = self.cells();
        &self.values[i * n..(i + 1) * n]
    }

    /// Z-scores every cell across reference days; constant cells become 0.
    pub fn standardize(&mut self) {
        let n = self.cells();
        let days = self.reference_days.len();
        if days == 0 {
            return;
        }
        for j in 0..n {
            let mean = (0..days).map(|i| self.values[i * n + j]).sum::<f64>() / days as f64;
            let var = (0..days).map(|i| (self.values[i * n + j] - mean).powi(2)).sum::<f64>() / days as f64;
            let sd = var.sqrt();
            for i in 0..days {
                let v = &mut self.values[i * n + j];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
        self.standardized = true;
    }
}

/// Reference path: a full catalog scan for every cell and day.
pub fn rtl_grid_naive(
    catalog: &Catalog,
    grid: &GridSpec,
    reference_days: &[NaiveDate],
    params: &RtlParams,
) -> Result<RtlFeatureMap> {
    params.validate()?;
    grid.validate()?;
    let mut values = Vec::with_capacity(reference_days.len() * grid.n_cells());
    for &day in reference_days {
        let t = evaluation_time(day);
        for r in 0..grid.n_rows {
            for c in 0..grid.n_cols {
                let (lat, lon) = grid.cell_center((r, c));
                values.push(rtl_at(catalog, lat, lon, t, params));
            }
        }
    }
    Ok(RtlFeatureMap {
        reference_days: reference_days.to_vec(),
        n_rows: grid.n_rows,
        n_cols: grid.n_cols,
        values,
        params: *params,
        standardized: false,
    })
}

struct IndexedEvent {
    millis: i64,
    lat: f64,
    lon: f64,
    mag: f64,
    row: i64,
}

/// Indexed evaluation at cell centres.
///
/// Events are restricted to the time window by binary search and to a band
/// of rows around each cell; the band is wide enough that every excluded
/// event is provably farther than `r_max`. Cells run in parallel; each cell
/// visits its candidates in a fixed order.
pub fn rtl_grid(
    catalog: &Catalog,
    grid: &GridSpec,
    reference_days: &[NaiveDate],
    params: &RtlParams,
) -> Result<RtlFeatureMap> {
    params.validate()?;
    grid.validate()?;

    let events: Vec<IndexedEvent> = catalog
        .events()
        .iter()
        .filter(|e| e.mag >= params.m_min)
        .map(|e| IndexedEvent {
            millis: e.time.timestamp_millis(),
            lat: e.lat,
            lon: e.lon,
            mag: e.mag,
            row: grid.project_unbounded(e.lat, e.lon).0,
        })
        .collect();

    // minimum great-circle km per degree of latitude separation
    let km_per_lat_degree = EARTH_RADIUS_KM.to_radians();
    let band = (params.r_max * KM_PER_DEGREE / (km_per_lat_degree * grid.cell_km)).ceil() as i64 + 1;
    let window_ms = (params.t_max * SECONDS_PER_DAY * 1000.0).ceil() as i64;

    let cells = grid.n_cells();
    let mut values = vec![0.0; reference_days.len() * cells];
    for (i, &day) in reference_days.iter().enumerate() {
        let t = evaluation_time(day);
        let t_ms = t.timestamp_millis();
        let lo = events.partition_point(|e| e.millis < t_ms - window_ms);
        let hi = events.partition_point(|e| e.millis < t_ms);
        let mut by_row: Vec<(i64, usize)> = (lo..hi).map(|k| (events[k].row, k)).collect();
        by_row.sort_unstable();

        values[i * cells..(i + 1) * cells]
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, out)| {
                let (r, c) = (j / grid.n_cols, j % grid.n_cols);
                let (lat, lon) = grid.cell_center((r, c));
                let row = r as i64;
                let start = by_row.partition_point(|(er, _)| *er < row - band);
                let mut f = RtlFactors::default();
                for &(er, k) in by_row[start..].iter().take_while(|(er, _)| *er <= row + band) {
                    debug_assert!((er - row).abs() <= band);
                    let e = &events[k];
                    let age = (t_ms - e.millis) as f64 / (1000.0 * SECONDS_PER_DAY);
                    f.add(epicentral_distance_km(lat, lon, e.lat, e.lon), age, e.mag, params);
                }
                *out = f.value();
            });
    }

    Ok(RtlFeatureMap {
        reference_days: reference_days.to_vec(),
        n_rows: grid.n_rows,
        n_cols: grid.n_cols,
        values,
        params: *params,
        standardized: false,
    })
}

/// One exported feature row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub day: NaiveDate,
    pub row: usize,
    pub col: usize,
    pub rtl: f64,
    pub label: u8,
}

/// Writes `day,row,col,rtl,label` for every valid labelled cell, preceded by
/// a `# r0=..` parameter comment. Returns the number of data rows.
pub fn export_features<W: Write>(features: &RtlFeatureMap, labels: &LabelTensor, mut sink: W) -> Result<usize> {
    if features.reference_days != labels.reference_days
        || features.n_rows != labels.n_rows
        || features.n_cols != labels.n_cols
    {
        return Err(Error::ShapeMismatch(format!(
            "features {}x{}x{} vs labels {}x{}x{} (or different days)",
            features.reference_days.len(),
            features.n_rows,
            features.n_cols,
            labels.days(),
            labels.n_rows,
            labels.n_cols
        )));
    }
    writeln!(sink, "# {},standardized={}", features.params.describe(), features.standardized)?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["day", "row", "col", "rtl", "label"])?;
    let mut rows = 0;
    for (i, day) in features.reference_days.iter().enumerate() {
        let values = features.day(i);
        for (j, (&y, &m)) in labels.labels(i).iter().zip(labels.mask(i)).enumerate() {
            if m != 1 {
                continue;
            }
            w.write_record([
                day.to_string(),
                (j / features.n_cols).to_string(),
                (j % features.n_cols).to_string(),
                values[j].to_string(),
                y.to_string(),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Reads a file written by [`export_features`]; returns the parameter
/// comment (without `# `) and the rows.
pub fn read_features<R: Read>(input: R) -> Result<(String, Vec<FeatureRow>)> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let comment = first
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| Error::Format("missing parameter comment line".into()))?
        .to_string();
    let mut csv = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| Error::MalformedRow {
            line: k + 3,
            field: field.to_string(),
            reason: "unparseable".to_string(),
        };
        rows.push(FeatureRow {
            day: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("day"))?,
            row: rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("row"))?,
            col: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("col"))?,
            rtl: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("rtl"))?,
            label: rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(|| bad("label"))?,
        });
    }
    Ok((comment, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Event;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 6, 1).unwrap()
    }

    #[test]
    fn rupture_length_values() {
        assert!((rupture_length(3.6) - 1.0).abs() < 1e-12);
        assert!((rupture_length(5.6) - 10.0).abs() < 1e-12);
        assert!((rupture_length(7.0) - 50.118_723_362_727_2).abs() < 1e-9);
    }

    #[test]
    fn empty_sums_are_zero() {
        let cat = Catalog::default();
        assert_eq!(rtl_at(&cat, 35.0, 140.0, evaluation_time(day0()), &RtlParams::default()), 0.0);
    }

    #[test]
    fn single_event_at_unit_distance_and_age() {
        let p = RtlParams::default();
        // place the event due north so the great-circle distance is exactly r0
        let dlat = (p.r0 / EARTH_RADIUS_KM).to_degrees();
        let t = evaluation_time(day0());
        let ti = t - chrono::Duration::days(p.t0 as i64);
        let cat = Catalog::new(vec![Event::new(ti, 35.0 + dlat, 140.0, 3.6)]);
        let f = rtl_factors_at(&cat, 35.0, 140.0, t, &p);
        let expected = (-1f64).exp() * (-1f64).exp() * (1.0 / p.r0);
        assert!((f.value() - expected).abs() < 1e-12 * expected, "{} vs {expected}", f.value());
    }

    #[test]
    fn zero_distance_uses_floor() {
        let p = RtlParams::default();
        let t = evaluation_time(day0());
        let cat = Catalog::new(vec![Event::new(t - chrono::Duration::days(1), 35.0, 140.0, 5.6)]);
        let f = rtl_factors_at(&cat, 35.0, 140.0, t, &p);
        assert!(f.value().is_finite());
        assert!((f.l - 10.0 / p.eps_km).abs() < 1e-12);
    }

    #[test]
    fn cuts_exclude_far_old_small_and_future_events() {
        let p = RtlParams { m_min: 2.0, ..RtlParams::default() };
        let mut f = RtlFactors::default();
        f.add(p.r_max * 1.01, 1.0, 4.0, &p);
        f.add(10.0, p.t_max + 0.5, 4.0, &p);
        f.add(10.0, 1.0, 1.5, &p);
        f.add(10.0, 0.0, 4.0, &p);
        f.add(10.0, -3.0, 4.0, &p);
        assert_eq!(f, RtlFactors::default());
        f.add(p.r_max, p.t_max, 2.0, &p);
        assert!(f.value() > 0.0);
    }

    #[test]
    fn factors_add_over_disjoint_sets() {
        let p = RtlParams::default();
        let a = [(5.0, 3.0, 4.0), (20.0, 40.0, 3.1)];
        let b = [(70.0, 1.5, 5.5)];
        let fa = factors_from(a, &p);
        let fb = factors_from(b, &p);
        let fab = factors_from(a.into_iter().chain(b), &p);
        let sum = fa + fb;
        assert!((fab.r - sum.r).abs() < 1e-15 && (fab.t - sum.t).abs() < 1e-15 && (fab.l - sum.l).abs() < 1e-15);
    }

    #[test]
    fn haversine_quarter_meridian() {
        let d = epicentral_distance_km(0.0, 0.0, 90.0, 0.0);
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RtlParams { r_max: 10.0, ..RtlParams::default() }.validate().is_err());
        assert!(RtlParams { eps_km: 0.0, ..RtlParams::default() }.validate().is_err());
    }

    #[test]
    fn export_counts_and_header() {
        let grid = GridSpec::new(35.0, 140.0, 10.0, 2, 2, 35.0).unwrap();
        let days = [day0(), day0() + Days::new(1)];
        let features = rtl_grid(&Catalog::default(), &grid, &days, &RtlParams::default()).unwrap();
        let labels = LabelTensor {
            reference_days: days.to_vec(),
            n_rows: 2,
            n_cols: 2,
            y: vec![0, 1, 0, 0, 0, 0, 1, 0],
            valid: vec![1; 8],
        };
        let mut buf = Vec::new();
        assert_eq!(export_features(&features, &labels, &mut buf).unwrap(), 8);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# r0=50,t0=100,r_max=100,t_max=200,m_min=0,eps_km=1,standardized=false\n"));

        let masked = LabelTensor { valid: vec![0; 8], ..labels.clone() };
        let mut buf = Vec::new();
        assert_eq!(export_features(&features, &masked, &mut buf).unwrap(), 0);
        let (_, rows) = read_features(buf.as_slice()).unwrap();
        assert!(rows.is_empty());

        let wrong = LabelTensor { n_cols: 4, n_rows: 1, ..labels };
        assert!(export_features(&features, &wrong, Vec::new()).is_err());
    }

    #[test]
    fn standardize_gives_zero_mean_unit_variance() {
        let mut m = RtlFeatureMap {
            reference_days: vec![day0(); 4],
            n_rows: 1,
            n_cols: 2,
            values: vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0],
            params: RtlParams::default(),
            standardized: false,
        };
        m.standardize();
        let col0: Vec<f64> = (0..4).map(|i| m.values[2 * i]).collect();
        let mean: f64 = col0.iter().sum::<f64>() / 4.0;
        let var: f64 = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!((0..4).all(|i| m.values[2 * i + 1] == 0.0));
    }
}
