//! Georeferenced grids in geographic degrees, north-up, row-major with the
//! top row first. Cell `(row, col)` has its center at
//! `(lon_min + (col + 0.5) * cell_size, lat_max - (row + 0.5) * cell_size)`.

mod interp;
pub mod io;
mod resample;
mod zonal;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use interp::interpolate_population;
pub use resample::{resample, ResampleMethod};
pub use zonal::{broadcast_zonal, zonal_stat, ZonalStat};

/// Mean Earth radius in km, used for cell areas.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

const INTEGRALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub cell_size: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub nodata: f64,
}

fn integral_count(span: f64, cell_size: f64, axis: &str) -> Result<usize> {
    let raw = span / cell_size;
    let rounded = raw.round();
    if (raw - rounded).abs() > INTEGRALITY_TOL || rounded < 1.0 {
        return Err(Error::Grid(format!(
            "{axis} span {span} is not an integer number of cells of size {cell_size} ({raw})"
        )));
    }
    Ok(rounded as usize)
}

impl GridSpec {
    pub fn new(
        lon_min: f64,
        lon_max: f64,
        lat_min: f64,
        lat_max: f64,
        cell_size: f64,
        nodata: f64,
    ) -> Result<Self> {
        if !(lon_min < lon_max && lat_min < lat_max) {
            return Err(Error::Grid(format!(
                "empty extent lon [{lon_min}, {lon_max}] lat [{lat_min}, {lat_max}]"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Grid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let n_cols = integral_count(lon_max - lon_min, cell_size, "longitude")?;
        let n_rows = integral_count(lat_max - lat_min, cell_size, "latitude")?;
        Ok(Self {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
            cell_size,
            n_rows,
            n_cols,
            nodata,
        })
    }

    /// Grid anchored at its lower-left corner.
    pub fn from_origin(
        lon_min: f64,
        lat_min: f64,
        cell_size: f64,
        n_rows: usize,
        n_cols: usize,
        nodata: f64,
    ) -> Result<Self> {
        Self::new(
            lon_min,
            lon_min + cell_size * n_cols as f64,
            lat_min,
            lat_min + cell_size * n_rows as f64,
            cell_size,
            nodata,
        )
    }

    /// The global deployment grid: (-180, 180, -56, 84) at 5 arc-minutes.
    pub fn deploy_default() -> Self {
        Self::new(-180.0, 180.0, -56.0, 84.0, 1.0 / 12.0, -9999.0)
            .expect("deployment grid is well formed")
    }

    /// Re-checks the header invariants, for grids read from files.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(
            self.lon_min,
            self.lon_max,
            self.lat_min,
            self.lat_max,
            self.cell_size,
            self.nodata,
        )?;
        if rebuilt.n_rows != self.n_rows || rebuilt.n_cols != self.n_cols {
            return Err(Error::Grid(format!(
                "header dimensions {}x{} disagree with extent ({}x{})",
                self.n_rows, self.n_cols, rebuilt.n_rows, rebuilt.n_cols
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn center_lon(&self, col: usize) -> f64 {
        self.lon_min + (col as f64 + 0.5) * self.cell_size
    }

    pub fn center_lat(&self, row: usize) -> f64 {
        self.lat_max - (row as f64 + 0.5) * self.cell_size
    }

    /// Same extent, resolution and shape (the nodata sentinel may differ).
    pub fn same_grid(&self, other: &GridSpec) -> bool {
        let tol = INTEGRALITY_TOL * self.cell_size.max(other.cell_size);
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && (self.lon_min - other.lon_min).abs() <= tol
            && (self.lat_max - other.lat_max).abs() <= tol
            && (self.cell_size - other.cell_size).abs() <= tol
    }

    pub(crate) fn ensure_aligned(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Alignment(format!(
                "{what}: {}x{} @ ({}, {}) cell {} vs {}x{} @ ({}, {}) cell {}",
                self.n_rows,
                self.n_cols,
                self.lon_min,
                self.lat_max,
                self.cell_size,
                other.n_rows,
                other.n_cols,
                other.lon_min,
                other.lat_max,
                other.cell_size
            )))
        }
    }

    /// Spherical area in km² of any cell in `row`.
    pub fn cell_area_km2(&self, row: usize) -> f64 {
        let top = (self.lat_max - row as f64 * self.cell_size).to_radians();
        let bottom = (self.lat_max - (row as f64 + 1.0) * self.cell_size).to_radians();
        EARTH_RADIUS_KM * EARTH_RADIUS_KM * self.cell_size.to_radians() * (top.sin() - bottom.sin())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }
}

/// A single-variable grid. Cells equal to `spec.nodata` (or NaN) are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub variable: String,
    pub year: i32,
    pub scenario: String,
}

impl Raster {
    pub fn new(
        spec: GridSpec,
        values: Vec<f64>,
        variable: impl Into<String>,
        year: i32,
        scenario: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Grid(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.n_rows,
                spec.n_cols,
                values.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !spec.is_nodata(**v) && !v.is_finite())
        {
            return Err(Error::Grid(format!("non-finite cell value {bad}")));
        }
        Ok(Self {
            spec,
            values,
            variable: variable.into(),
            year,
            scenario: scenario.into(),
        })
    }

    pub fn filled(spec: GridSpec, value: f64, variable: impl Into<String>) -> Self {
        Self {
            values: vec![value; spec.len()],
            spec,
            variable: variable.into(),
            year: 0,
            scenario: "observed".into(),
        }
    }

    /// Grid of spherical cell areas in km².
    pub fn cell_areas(spec: GridSpec) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for row in 0..spec.n_rows {
            let a = spec.cell_area_km2(row);
            values.extend(std::iter::repeat_n(a, spec.n_cols));
        }
        Self {
            spec,
            values,
            variable: "cell_area_km2".into(),
            year: 0,
            scenario: "observed".into(),
        }
    }

    pub fn with_meta(
        mut self,
        variable: impl Into<String>,
        year: i32,
        scenario: impl Into<String>,
    ) -> Self {
        self.variable = variable.into();
        self.year = year;
        self.scenario = scenario.into();
        self
    }

    pub fn get(&self, idx: usize) -> Option<f64> {
        let v = self.values[idx];
        if self.spec.is_nodata(v) {
            None
        } else {
            Some(v)
        }
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        !self.spec.is_nodata(self.values[idx])
    }

    /// Checks that every valid cell lies in `[lo, hi]`.
    pub fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        for (idx, v) in self.values.iter().enumerate() {
            if !self.spec.is_nodata(*v) && (*v < lo || *v > hi) {
                return Err(Error::Domain {
                    what: format!("{} cell {idx} outside [{lo}, {hi}]", self.variable),
                    value: *v,
                });
            }
        }
        Ok(())
    }

    /// Sum of valid cells in row-major order.
    pub fn valid_sum(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !self.spec.is_nodata(**v))
            .sum()
    }
}

/// Attributes a zone id resolves to through the legend.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZoneInfo {
    pub unit_id: String,
    pub country_iso3: String,
    pub region_code: String,
}

/// Assignment of grid cells to geographic units.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    pub spec: GridSpec,
    pub zone_ids: Vec<Option<u32>>,
    pub legend: BTreeMap<u32, ZoneInfo>,
}

impl ZoneMap {
    pub fn new(
        spec: GridSpec,
        zone_ids: Vec<Option<u32>>,
        legend: BTreeMap<u32, ZoneInfo>,
    ) -> Result<Self> {
        if zone_ids.len() != spec.len() {
            return Err(Error::Grid(format!(
                "zone map has {} cells for a grid of {}",
                zone_ids.len(),
                spec.len()
            )));
        }
        if let Some(missing) = zone_ids.iter().flatten().find(|z| !legend.contains_key(z)) {
            return Err(Error::Grid(format!(
                "zone id {missing} missing from legend"
            )));
        }
        Ok(Self {
            spec,
            zone_ids,
            legend,
        })
    }

    /// Builds a zone map from an integer-valued raster; nodata cells belong to no unit.
    pub fn from_raster(raster: &Raster, legend: BTreeMap<u32, ZoneInfo>) -> Result<Self> {
        let mut ids = Vec::with_capacity(raster.values.len());
        for (idx, v) in raster.values.iter().enumerate() {
            if raster.spec.is_nodata(*v) {
                ids.push(None);
            } else if *v < 0.0 || v.fract() != 0.0 || *v > u32::MAX as f64 {
                return Err(Error::Grid(format!("cell {idx}: invalid zone id {v}")));
            } else {
                ids.push(Some(*v as u32));
            }
        }
        Self::new(raster.spec, ids, legend)
    }

    pub fn to_raster(&self) -> Raster {
        let values = self
            .zone_ids
            .iter()
            .map(|z| z.map_or(self.spec.nodata, f64::from))
            .collect();
        Raster {
            spec: self.spec,
            values,
            variable: "zone_id".into(),
            year: 0,
            scenario: "observed".into(),
        }
    }

    pub fn info(&self, idx: usize) -> Option<&ZoneInfo> {
        self.zone_ids[idx].and_then(|z| self.legend.get(&z))
    }

    pub fn unit_of(&self, idx: usize) -> Option<&str> {
        self.info(idx).map(|i| i.unit_id.as_str())
    }

    /// Cell indices per unit, each list in row-major order.
    pub fn cells_by_unit(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for idx in 0..self.zone_ids.len() {
            if let Some(unit) = self.unit_of(idx) {
                out.entry(unit).or_default().push(idx);
            }
        }
        out
    }

    /// Distinct units with their attributes.
    pub fn units(&self) -> BTreeMap<&str, &ZoneInfo> {
        self.legend
            .values()
            .map(|info| (info.unit_id.as_str(), info))
            .collect()
    }

    /// The same cells grouped by country, with ISO3 codes as unit ids.
    pub fn by_country(&self) -> ZoneMap {
        let countries: BTreeMap<&str, &str> = self
            .legend
            .values()
            .map(|i| (i.country_iso3.as_str(), i.region_code.as_str()))
            .collect();
        let ids: BTreeMap<&str, u32> = countries
            .keys()
            .enumerate()
            .map(|(i, c)| (*c, i as u32 + 1))
            .collect();
        let legend = countries
            .iter()
            .map(|(c, r)| {
                let info = ZoneInfo {
                    unit_id: c.to_string(),
                    country_iso3: c.to_string(),
                    region_code: r.to_string(),
                };
                (ids[c], info)
            })
            .collect();
        let zone_ids = self
            .zone_ids
            .iter()
            .map(|z| z.map(|z| ids[self.legend[&z].country_iso3.as_str()]))
            .collect();
        ZoneMap {
            spec: self.spec,
            zone_ids,
            legend,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deploy_grid_dimensions() {
        let g = GridSpec::deploy_default();
        assert_eq!(g.n_cols, 4320);
        assert_eq!(g.n_rows, 1680);
    }

    #[test]
    fn non_integral_extent_is_rejected() {
        assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 0.3, -1.0).is_err());
        assert!(GridSpec::new(0.0, 360.0, 0.0, 1.0, 0.083, -1.0).is_err());
        assert!(GridSpec::new(1.0, 0.0, 0.0, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn cell_centers_follow_registration() {
        let g = GridSpec::new(10.0, 12.0, 0.0, 1.0, 0.5, -1.0).unwrap();
        assert_eq!(g.center_lon(0), 10.25);
        assert_eq!(g.center_lat(0), 0.75);
        assert_eq!(g.index(1, 3), 7);
    }

    #[test]
    fn cell_areas_sum_to_band_area() {
        let g = GridSpec::new(-180.0, 180.0, -90.0, 90.0, 1.0, -1.0).unwrap();
        let total: f64 = (0..g.n_rows)
            .map(|r| g.cell_area_km2(r) * g.n_cols as f64)
            .sum();
        let sphere = 4.0 * std::f64::consts::PI * EARTH_RADIUS_KM * EARTH_RADIUS_KM;
        assert!((total - sphere).abs() / sphere < 1e-12);
    }

    #[test]
    fn raster_rejects_bad_lengths_and_non_finite() {
        let g = GridSpec::from_origin(0.0, 0.0, 1.0, 2, 2, -9999.0).unwrap();
        assert!(Raster::new(g, vec![1.0; 3], "x", 0, "observed").is_err());
        assert!(Raster::new(g, vec![1.0, f64::INFINITY, 0.0, 0.0], "x", 0, "observed").is_err());
        assert!(Raster::new(g, vec![1.0, -9999.0, f64::NAN, 0.0], "x", 0, "observed").is_ok());
    }

    #[test]
    fn zone_map_requires_legend_entries() {
        let g = GridSpec::from_origin(0.0, 0.0, 1.0, 1, 2, -1.0).unwrap();
        let mut legend = BTreeMap::new();
        legend.insert(
            1,
            ZoneInfo {
                unit_id: "A".into(),
                country_iso3: "AAA".into(),
                region_code: "R1".into(),
            },
        );
        assert!(ZoneMap::new(g, vec![Some(1), Some(2)], legend.clone()).is_err());
        let z = ZoneMap::new(g, vec![Some(1), None], legend).unwrap();
        assert_eq!(z.cells_by_unit()["A"], vec![0]);
    }
}
