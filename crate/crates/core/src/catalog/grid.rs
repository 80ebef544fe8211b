use crate::error::{Error, Result};

use super::Event;

/// Kilometres per degree of latitude used by the equirectangular projection.
pub const KM_PER_DEGREE: f64 = 111.32;

/// Grid cell index as `(row, col)`; row 0 is the southern edge.
pub type Cell = (usize, usize);

/// Equirectangular grid anchored at its south-west corner.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_km: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Latitude whose cosine scales longitude distances.
    pub ref_lat: f64,
}

impl GridSpec {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        cell_km: f64,
        n_rows: usize,
        n_cols: usize,
        ref_lat: f64,
    ) -> Result<Self> {
        let grid = GridSpec {
            origin_lat,
            origin_lon,
            cell_km,
            n_rows,
            n_cols,
            ref_lat,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_km > 0.0 && self.cell_km.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell_km must be > 0, got {}", self.cell_km)));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::InvalidArgument("grid needs at least one row and one column".into()));
        }
        if !(self.origin_lat.is_finite() && self.origin_lon.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        if !(self.ref_lat.abs() < 90.0) {
            return Err(Error::InvalidArgument(format!("ref_lat {} must lie in (-90, 90)", self.ref_lat)));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Row-major flat index of a cell.
    pub fn index(&self, (row, col): Cell) -> usize {
        row * self.n_cols + col
    }

    /// Kilometres covered by one degree of longitude on this grid.
    pub fn km_per_lon_degree(&self) -> f64 {
        KM_PER_DEGREE * self.ref_lat.to_radians().cos()
    }

    /// Cell coordinates without bounds clipping; may be negative or beyond
    /// the grid.
    pub fn project_unbounded(&self, lat: f64, lon: f64) -> (i64, i64) {
        let row = ((lat - self.origin_lat) * KM_PER_DEGREE / self.cell_km).floor();
        let col = ((lon - self.origin_lon) * self.km_per_lon_degree() / self.cell_km).floor();
        (row as i64, col as i64)
    }

    /// Cell containing `(lat, lon)`, if inside the grid.
    pub fn project(&self, lat: f64, lon: f64) -> Option<Cell> {
        let (row, col) = self.project_unbounded(lat, lon);
        if row < 0 || col < 0 || row as usize >= self.n_rows || col as usize >= self.n_cols {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Latitude/longitude of the centre of a cell.
    pub fn cell_center(&self, (row, col): Cell) -> (f64, f64) {
        self.cell_point(row as f64 + 0.5, col as f64 + 0.5)
    }

    /// Inverse projection of fractional cell coordinates.
    pub fn cell_point(&self, row: f64, col: f64) -> (f64, f64) {
        let lat = self.origin_lat + row * self.cell_km / KM_PER_DEGREE;
        let lon = self.origin_lon + col * self.cell_km / self.km_per_lon_degree();
        (lat, lon)
    }
}

/// Projects an event epicentre onto the grid; `None` when out of bounds.
pub fn project_to_cell(event: &Event, grid: &GridSpec) -> Option<Cell> {
    grid.project(event.lat, event.lon)
}
