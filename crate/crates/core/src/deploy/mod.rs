//! Grid-cell deployment: per-cell EPWA prediction, agricultural worker
//! counts and the aggregate-preserving correction.

mod correction;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamm::{EffectSource, FittedModel};
use crate::ingest::Covariates;
use crate::raster::{
    broadcast_zonal, resample, zonal_stat, GridSpec, Raster, ResampleMethod, ZonalStat, ZoneMap,
};

pub use correction::{
    apply_correction, correction_factors, read_reference, write_corrections, Corrected,
    CorrectionOutcome, CorrectionRow, CorrectionTable, ReferenceTable,
};

/// Decades covered by a full deployment.
pub const DEPLOY_YEARS: [i32; 11] = [
    2000, 2010, 2020, 2030, 2040, 2050, 2060, 2070, 2080, 2090, 2100,
];
pub const SCENARIOS: [&str; 5] = ["SSP1", "SSP2", "SSP3", "SSP4", "SSP5"];
/// Populations below this are treated as interpolation residue and zeroed.
pub const MIN_CELL_POPULATION: f64 = 1.0;
/// Cells predicted per batch.
const CHUNK: usize = 4096;

/// Raw layers for one deployment year and scenario, on any grid.
pub struct StackInputs<'a> {
    pub rural: &'a Raster,
    pub total: &'a Raster,
    pub gdp_pc: &'a Raster,
    pub cropland: &'a Raster,
    pub pasture: &'a Raster,
    /// Admin-2 units; their legend supplies country and region.
    pub zones: &'a ZoneMap,
}

/// Layers aligned on the deployment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployStack {
    pub year: i32,
    pub scenario: String,
    pub grid: GridSpec,
    pub rural: Raster,
    pub total: Raster,
    /// Admin-2 median GDP per capita painted onto every cell of the unit.
    pub gdp: Raster,
    pub cropland: Raster,
    pub pasture: Raster,
    pub cell_area: Raster,
    pub zones: ZoneMap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    /// Population in cells zeroed by the below-one rule.
    pub zeroed_population: f64,
    pub zeroed_cells: usize,
    /// Population in cells outside every unit.
    pub masked_population: f64,
}

/// Resamples a count layer preserving mass per unit of area (in degrees²).
fn resample_counts(src: &Raster, grid: &GridSpec) -> Result<Raster> {
    let mut out = resample(src, grid, ResampleMethod::AreaWeightedMean)?;
    if !src.spec.same_grid(grid) {
        let ratio = (grid.cell_size / src.spec.cell_size).powi(2);
        for v in out.values.iter_mut().filter(|v| !grid.is_nodata(**v)) {
            *v *= ratio;
        }
    }
    Ok(out)
}

fn resample_zones(zones: &ZoneMap, grid: &GridSpec) -> Result<ZoneMap> {
    if zones.spec.same_grid(grid) {
        return Ok(zones.clone());
    }
    let r = resample(&zones.to_raster(), grid, ResampleMethod::Nearest)?;
    ZoneMap::from_raster(&r, zones.legend.clone())
}

/// Aligns the inputs on `grid` and derives the deployment features.
pub fn build_stack(
    inputs: &StackInputs<'_>,
    grid: &GridSpec,
    year: i32,
    scenario: &str,
) -> Result<(DeployStack, StackReport)> {
    let zones = resample_zones(inputs.zones, grid)?;
    let mut rural = resample_counts(inputs.rural, grid)?;
    let mut total = resample_counts(inputs.total, grid)?;
    let gdp_cells = resample(inputs.gdp_pc, grid, ResampleMethod::AreaWeightedMean)?;
    let cropland = resample(inputs.cropland, grid, ResampleMethod::AreaWeightedMean)?;
    let pasture = resample(inputs.pasture, grid, ResampleMethod::AreaWeightedMean)?;

    let mut report = StackReport::default();
    for idx in 0..grid.len() {
        if let Some(v) = total.get(idx) {
            if zones.unit_of(idx).is_none() {
                report.masked_population += v;
            }
            if v > 0.0 && v < MIN_CELL_POPULATION {
                report.zeroed_population += v;
                report.zeroed_cells += 1;
            }
        }
        for layer in [&mut rural, &mut total] {
            if let Some(v) = layer.get(idx) {
                if v > 0.0 && v < MIN_CELL_POPULATION {
                    layer.values[idx] = 0.0;
                }
            }
        }
    }

    let medians = zonal_stat(&gdp_cells, &zones, ZonalStat::Median)?;
    let gdp = broadcast_zonal(&medians, &zones);
    let meta = |r: Raster, name: &str| r.with_meta(name, year, scenario);
    Ok((
        DeployStack {
            year,
            scenario: scenario.to_string(),
            grid: *grid,
            rural: meta(rural, "rural"),
            total: meta(total, "total"),
            gdp: meta(gdp, "gdp_median"),
            cropland: meta(cropland, "cropland"),
            pasture: meta(pasture, "pasture"),
            cell_area: Raster::cell_areas(*grid),
            zones,
        },
        report,
    ))
}

impl DeployStack {
    /// Features of cell `idx`, or `None` when the cell is masked or unpopulated.
    pub fn cell_features(&self, idx: usize) -> Option<Covariates> {
        self.zones.info(idx)?;
        let total = self.total.get(idx)?;
        if total <= 0.0 {
            return None;
        }
        let rural = self.rural.get(idx)?;
        let gdp = self.gdp.get(idx)?;
        let agland = self.cropland.get(idx)? + self.pasture.get(idx)?;
        let area = self.cell_area.get(idx)?;
        Some(Covariates::from_raw(
            rural / total,
            total / area,
            gdp,
            agland,
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackCounts {
    pub country: usize,
    pub region: usize,
    pub missing: usize,
    pub not_modeled: usize,
}

impl FallbackCounts {
    fn add(&mut self, source: EffectSource) {
        match source {
            EffectSource::Country => self.country += 1,
            EffectSource::Region => self.region += 1,
            EffectSource::Missing => self.missing += 1,
            EffectSource::NotModeled => self.not_modeled += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    pub epwa: Raster,
    pub fallback: FallbackCounts,
    /// Countries predicted without their own random intercept.
    pub fallback_countries: BTreeMap<String, EffectSource>,
}

/// Predicts EPWA for every populated, unmasked cell. Cells are predicted in
/// fixed-size batches in parallel; each cell's value does not depend on the
/// batch it falls in.
pub fn predict_grid(model: &FittedModel, stack: &DeployStack) -> GridPrediction {
    let cells: Vec<(usize, Covariates)> = (0..stack.grid.len())
        .filter_map(|idx| stack.cell_features(idx).map(|x| (idx, x)))
        .collect();
    let predicted: Vec<Vec<(usize, f64, EffectSource)>> = cells
        .par_chunks(CHUNK)
        .map(|chunk| {
            let x: Vec<Covariates> = chunk.iter().map(|(_, x)| *x).collect();
            let infos: Vec<_> = chunk
                .iter()
                .map(|(idx, _)| stack.zones.info(*idx).expect("feature cells have a unit"))
                .collect();
            let countries: Vec<&str> = infos.iter().map(|i| i.country_iso3.as_str()).collect();
            let regions: Vec<&str> = infos.iter().map(|i| i.region_code.as_str()).collect();
            model
                .predict_many(&x, &countries, &regions)
                .into_iter()
                .zip(chunk)
                .map(|(p, (idx, _))| (*idx, p.mu, p.source))
                .collect()
        })
        .collect();

    let mut values = vec![stack.grid.nodata; stack.grid.len()];
    let mut fallback = FallbackCounts::default();
    let mut fallback_countries = BTreeMap::new();
    for (idx, mu, source) in predicted.into_iter().flatten() {
        values[idx] = mu;
        fallback.add(source);
        if matches!(source, EffectSource::Region | EffectSource::Missing) {
            let country = &stack
                .zones
                .info(idx)
                .expect("predicted cells have a unit")
                .country_iso3;
            fallback_countries.insert(country.clone(), source);
        }
    }
    for (country, source) in &fallback_countries {
        log::warn!("country {country} not in training data; random intercept from {source:?}");
    }
    GridPrediction {
        epwa: Raster {
            spec: stack.grid,
            values,
            variable: "epwa".into(),
            year: stack.year,
            scenario: stack.scenario.clone(),
        },
        fallback,
        fallback_countries,
    }
}

/// Employable-to-total population ratio per `(unit_id, year)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmployableTable {
    pub ratios: BTreeMap<String, BTreeMap<i32, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmployableRow {
    unit_id: String,
    year: i32,
    ratio: f64,
}

impl EmployableTable {
    pub fn insert(&mut self, unit: &str, year: i32, ratio: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Domain {
                what: format!("employable ratio for {unit}@{year}"),
                value: ratio,
            });
        }
        self.ratios
            .entry(unit.to_string())
            .or_default()
            .insert(year, ratio);
        Ok(())
    }

    /// Ratio for `year`, else the latest earlier year on record.
    pub fn lookup(&self, unit: &str, year: i32) -> Option<f64> {
        self.ratios
            .get(unit)?
            .range(..=year)
            .next_back()
            .map(|(_, r)| *r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr =
            csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let mut table = EmployableTable::default();
        for row in rdr.deserialize() {
            let row: EmployableRow = row.map_err(|e| Error::format(path, e.to_string()))?;
            table.insert(&row.unit_id, row.year, row.ratio)?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for (unit, years) in &self.ratios {
            for (year, ratio) in years {
                w.serialize(EmployableRow {
                    unit_id: unit.clone(),
                    year: *year,
                    ratio: *ratio,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workers {
    pub raster: Raster,
    /// Units without an employable ratio; their cells are nodata.
    pub missing_units: Vec<String>,
}

/// Agricultural workers per cell: `EPWA · N · R(unit)`. Unpopulated cells hold 0.
pub fn workers_raster(
    epwa: &Raster,
    population: &Raster,
    employable: &EmployableTable,
    zones: &ZoneMap,
    year: i32,
) -> Result<Workers> {
    epwa.spec
        .ensure_aligned(&population.spec, "workers_raster")?;
    epwa.spec.ensure_aligned(&zones.spec, "workers_raster")?;
    let nodata = epwa.spec.nodata;
    let mut missing = std::collections::BTreeSet::new();
    let values = (0..epwa.spec.len())
        .map(|idx| {
            let Some(unit) = zones.unit_of(idx) else {
                return nodata;
            };
            let Some(n) = population.get(idx) else {
                return nodata;
            };
            let Some(r) = employable.lookup(unit, year) else {
                missing.insert(unit.to_string());
                return nodata;
            };
            if n == 0.0 {
                return 0.0;
            }
            match epwa.get(idx) {
                Some(e) => e * n * r,
                None => nodata,
            }
        })
        .collect();
    for unit in &missing {
        log::warn!("unit {unit} has no employable ratio for {year}; cells left as nodata");
    }
    Ok(Workers {
        raster: Raster {
            spec: epwa.spec,
            values,
            variable: "workers".into(),
            year,
            scenario: epwa.scenario.clone(),
        },
        missing_units: missing.into_iter().collect(),
    })
}

/// Sum of valid cells per region code, accumulated in row-major order.
pub fn region_totals(raster: &Raster, zones: &ZoneMap) -> Result<BTreeMap<String, f64>> {
    raster.spec.ensure_aligned(&zones.spec, "region_totals")?;
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for idx in 0..raster.values.len() {
        if let (Some(info), Some(v)) = (zones.info(idx), raster.get(idx)) {
            *out.entry(info.region_code.clone()).or_default() += v;
        }
    }
    Ok(out)
}

pub const SUMMARY_BASELINE: i32 = 2020;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: String,
    pub pop_baseline: f64,
    pub pop_2050: f64,
    /// Percent change from the baseline.
    pub delta_2050: f64,
    pub pop_2100: f64,
    pub delta_2100: f64,
}

/// Worker totals per region for 2020, 2050 and 2100 with percent changes.
/// `totals` maps year to region totals; all three years are required.
pub fn regional_summary(
    totals: &BTreeMap<i32, BTreeMap<String, f64>>,
) -> Result<Vec<RegionSummary>> {
    let get = |year: i32| {
        totals
            .get(&year)
            .ok_or_else(|| Error::Spec(format!("regional summary needs a deployment for {year}")))
    };
    let (base, mid, end) = (get(SUMMARY_BASELINE)?, get(2050)?, get(2100)?);
    let pct = |v: f64, b: f64| {
        if b == 0.0 {
            f64::NAN
        } else {
            100.0 * (v - b) / b
        }
    };
    Ok(base
        .iter()
        .map(|(region, b)| {
            let m = mid.get(region).copied().unwrap_or(0.0);
            let e = end.get(region).copied().unwrap_or(0.0);
            RegionSummary {
                region: region.clone(),
                pop_baseline: *b,
                pop_2050: m,
                delta_2050: pct(m, *b),
                pop_2100: e,
                delta_2100: pct(e, *b),
            }
        })
        .collect())
}

pub fn write_summary(rows: &[RegionSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Output file stem, e.g. `epwa_SSP2_2050_uncorrected`.
pub fn output_name(kind: &str, scenario: &str, year: i32, corrected: bool) -> String {
    let tag = if corrected {
        "corrected"
    } else {
        "uncorrected"
    };
    format!("{kind}_{scenario}_{year}_{tag}")
}
