use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{zonal_stat, Raster, ZonalStat, ZoneMap};

/// Floor for ratio-type inputs (rural share, land fraction) before the log.
pub const EPS_RATIO: f64 = 1e-6;
/// Floor for densities and GDP before the log.
pub const EPS_POS: f64 = 1e-3;
/// Boundary offset keeping responses inside the open unit interval.
pub const EPS_Y: f64 = 1e-6;

/// The four log-scale predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Covariate {
    #[serde(rename = "ln_rural_prop")]
    RuralProp,
    #[serde(rename = "ln_pop_density")]
    PopDensity,
    #[serde(rename = "ln_gdp_median")]
    GdpMedian,
    #[serde(rename = "ln_agland")]
    AgLand,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [
        Covariate::RuralProp,
        Covariate::PopDensity,
        Covariate::GdpMedian,
        Covariate::AgLand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::RuralProp => "ln_rural_prop",
            Covariate::PopDensity => "ln_pop_density",
            Covariate::GdpMedian => "ln_gdp_median",
            Covariate::AgLand => "ln_agland",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownVariable(s.to_string()))
    }
}

/// Predictor values in [`Covariate::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates(pub [f64; 4]);

impl Covariates {
    pub fn get(&self, c: Covariate) -> f64 {
        self.0[c.index()]
    }

    /// Derives the log predictors from raw per-unit or per-cell quantities.
    pub fn from_raw(rural_share: f64, pop_density: f64, gdp: f64, agland: f64) -> Self {
        Covariates([
            floored_ln(rural_share.min(1.0), EPS_RATIO),
            floored_ln(pop_density, EPS_POS),
            floored_ln(gdp, EPS_POS),
            floored_ln(agland.clamp(0.0, 1.0), EPS_RATIO),
        ])
    }
}

pub fn floored_ln(x: f64, floor: f64) -> f64 {
    x.max(floor).ln()
}

/// Log-transformed predictors for one unit-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitFeatures {
    pub unit_id: String,
    pub country_iso3: String,
    pub region_code: String,
    pub year: i32,
    pub ln_rural_prop: f64,
    pub ln_pop_density: f64,
    pub ln_gdp_median: f64,
    pub ln_agland: f64,
}

impl UnitFeatures {
    pub fn covariates(&self) -> Covariates {
        Covariates([
            self.ln_rural_prop,
            self.ln_pop_density,
            self.ln_gdp_median,
            self.ln_agland,
        ])
    }
}

/// Clamps a label into the open interval required by the Beta likelihood.
pub fn squeeze_response(y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain {
            what: "response must lie in [0, 1]".into(),
            value: y,
        });
    }
    Ok(y.clamp(EPS_Y, 1.0 - EPS_Y))
}

/// Input layers for one feature year; all rasters share the zone grid.
pub struct FeatureLayers<'a> {
    pub rural: &'a Raster,
    pub total: &'a Raster,
    pub gdp_pc: &'a Raster,
    pub cropland: &'a Raster,
    pub pasture: &'a Raster,
    pub cell_area: &'a Raster,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureBuild {
    pub features: Vec<UnitFeatures>,
    /// Units dropped because their total population (or area) is zero or missing.
    pub skipped: Vec<String>,
}

/// Per-unit predictors from zonal statistics of the input layers.
pub fn build_unit_features(
    layers: &FeatureLayers<'_>,
    zones: &ZoneMap,
    year: i32,
) -> Result<FeatureBuild> {
    for (name, r) in [
        ("rural", layers.rural),
        ("total", layers.total),
        ("gdp_pc", layers.gdp_pc),
        ("cropland", layers.cropland),
        ("pasture", layers.pasture),
        ("cell_area", layers.cell_area),
    ] {
        r.spec.ensure_aligned(&zones.spec, name)?;
    }
    let agland = combined_agland(layers.cropland, layers.pasture);
    let rural = zonal_stat(layers.rural, zones, ZonalStat::Sum)?;
    let total = zonal_stat(layers.total, zones, ZonalStat::Sum)?;
    let area = zonal_stat(layers.cell_area, zones, ZonalStat::Sum)?;
    let gdp = zonal_stat(layers.gdp_pc, zones, ZonalStat::Median)?;
    let al = zonal_stat(&agland, zones, ZonalStat::Mean)?;

    let mut out = FeatureBuild::default();
    for (unit, info) in zones.units() {
        let tot = total.get(unit).copied().unwrap_or(0.0);
        let unit_area = area.get(unit).copied().unwrap_or(0.0);
        if tot <= 0.0 || unit_area <= 0.0 {
            out.skipped.push(unit.to_string());
            continue;
        }
        let lookup = |t: &BTreeMap<String, f64>| t.get(unit).copied().unwrap_or(0.0);
        let cov = Covariates::from_raw(
            lookup(&rural) / tot,
            tot / unit_area,
            lookup(&gdp),
            lookup(&al),
        );
        out.features.push(UnitFeatures {
            unit_id: unit.to_string(),
            country_iso3: info.country_iso3.clone(),
            region_code: info.region_code.clone(),
            year,
            ln_rural_prop: cov.0[0],
            ln_pop_density: cov.0[1],
            ln_gdp_median: cov.0[2],
            ln_agland: cov.0[3],
        });
    }
    Ok(out)
}

/// Cropland plus pasture fraction, clamped to 1; missing if either layer is.
pub fn combined_agland(cropland: &Raster, pasture: &Raster) -> Raster {
    let spec = cropland.spec;
    let values = (0..spec.len())
        .map(|i| match (cropland.get(i), pasture.get(i)) {
            (Some(c), Some(p)) => (c + p).clamp(0.0, 1.0),
            _ => spec.nodata,
        })
        .collect();
    Raster {
        spec,
        values,
        variable: "agland".into(),
        year: cropland.year,
        scenario: cropland.scenario.clone(),
    }
}

pub fn read_features(path: &Path) -> Result<Vec<UnitFeatures>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::format(path, e.to_string())))
        .collect()
}

pub fn features_to_csv(features: &[UnitFeatures]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in features {
        w.serialize(f)?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("CSV buffer: {e}")))
}

pub fn write_features(features: &[UnitFeatures], path: &Path) -> Result<()> {
    std::fs::write(path, features_to_csv(features)?).map_err(|e| Error::io(path, e))
}
