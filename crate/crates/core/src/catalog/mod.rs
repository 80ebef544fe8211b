//! Earthquake catalogs and their gridded representations.
//!
//! A catalog is a time-sorted list of [`Event`]s read from CSV with header
//! `time,lat,lon,mag[,depth_km]`. Events are projected onto a [`GridSpec`],
//! rasterized into daily magnitude heat maps ([`HeatMapSeq`]) and turned into
//! binary time-cylinder labels ([`LabelTensor`]). All day arithmetic uses
//! whole UTC calendar days.

mod grid;
mod labels;
mod raster;
mod split;

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};

use crate::error::{Error, Result};

pub use grid::{project_to_cell, Cell, GridSpec, KM_PER_DEGREE};
pub use labels::{build_labels, build_labels_until, LabelSpec, LabelTensor};
pub use raster::{rasterize_daily, HeatMapSeq};
pub use split::{split_by_time, split_days, DayRange, DaySplit};

/// One catalog row.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub mag: f64,
    pub depth_km: Option<f64>,
}

impl Event {
    pub fn new(time: DateTime<Utc>, lat: f64, lon: f64, mag: f64) -> Self {
        Event {
            time,
            lat,
            lon,
            mag,
            depth_km: None,
        }
    }

    pub fn day(&self) -> NaiveDate {
        self.time.date_naive()
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !self.mag.is_finite() {
            return Err(("mag", format!("magnitude must be finite, got {}", self.mag)));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(("lat", format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(("lon", format!("longitude {} outside [-180, 180]", self.lon)));
        }
        if let Some(d) = self.depth_km {
            if !d.is_finite() {
                return Err(("depth_km", format!("depth must be finite, got {d}")));
            }
        }
        Ok(())
    }
}

/// Time-sorted collection of events.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    events: Vec<Event>,
    time_span: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl Catalog {
    /// Builds a catalog, sorting events by time (stable for equal times).
    pub fn new(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.time);
        let time_span = match (events.first(), events.last()) {
            (Some(a), Some(b)) => Some((a.time, b.time)),
            _ => None,
        };
        Catalog { events, time_span }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn time_span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        self.time_span
    }

    /// First and last calendar day covered by events.
    pub fn day_span(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.time_span.map(|(a, b)| (a.date_naive(), b.date_naive()))
    }

    /// Merges two catalogs, keeping time order.
    pub fn merged(&self, other: &Catalog) -> Catalog {
        let mut events = self.events.clone();
        events.extend(other.events.iter().cloned());
        Catalog::new(events)
    }

    /// Number of events with magnitude at least `mag`.
    pub fn count_at_least(&self, mag: f64) -> usize {
        self.events.iter().filter(|e| e.mag >= mag).count()
    }
}

/// CSV dialect options for [`parse_catalog`].
#[derive(Clone, Debug)]
pub struct CatalogFormat {
    pub delimiter: u8,
}

impl Default for CatalogFormat {
    fn default() -> Self {
        CatalogFormat { delimiter: b',' }
    }
}

/// Parses an ISO-8601 timestamp; values without an offset are taken as UTC.
pub fn parse_time(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
}

pub fn format_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Reads a catalog CSV. The first invalid row aborts parsing with its line
/// number and the offending field.
pub fn parse_catalog<R: Read>(input: R, format: &CatalogFormat) -> Result<Catalog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::MalformedRow {
        line: 1,
        field: name.to_string(),
        reason: "required column missing from header".to_string(),
    };
    let time_col = column("time").ok_or_else(|| missing("time"))?;
    let lat_col = column("lat").ok_or_else(|| missing("lat"))?;
    let lon_col = column("lon").ok_or_else(|| missing("lon"))?;
    let mag_col = column("mag").ok_or_else(|| missing("mag"))?;
    let depth_col = column("depth_km");

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize, name: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MalformedRow {
                line,
                field: name.to_string(),
                reason: "missing value".to_string(),
            })
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                field: name.to_string(),
                reason: format!("not a number: {raw:?}"),
            })
        };

        let raw_time = field(time_col, "time")?;
        let time = parse_time(raw_time).ok_or_else(|| Error::MalformedRow {
            line,
            field: "time".to_string(),
            reason: format!("not an ISO-8601 timestamp: {raw_time:?}"),
        })?;
        let depth_km = match depth_col.and_then(|i| record.get(i)) {
            Some(raw) if !raw.is_empty() => Some(number(depth_col.unwrap(), "depth_km")?),
            _ => None,
        };
        let event = Event {
            time,
            lat: number(lat_col, "lat")?,
            lon: number(lon_col, "lon")?,
            mag: number(mag_col, "mag")?,
            depth_km,
        };
        event.validate().map_err(|(field, reason)| Error::MalformedRow {
            line,
            field: field.to_string(),
            reason,
        })?;
        events.push(event);
    }

    if events.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    Ok(Catalog::new(events))
}

/// Writes the catalog in the same CSV layout [`parse_catalog`] reads.
pub fn write_catalog<W: Write>(catalog: &Catalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "lat", "lon", "mag", "depth_km"])?;
    for e in catalog.events() {
        let depth = e.depth_km.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            format_time(&e.time),
            e.lat.to_string(),
            e.lon.to_string(),
            e.mag.to_string(),
            depth,
        ])?;
    }
    w.flush()?;
    Ok(())
}
