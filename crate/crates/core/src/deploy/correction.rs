use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EPS_Y;
use crate::raster::{Raster, ZoneMap};

/// Reference EPWA per unit and year.
pub type ReferenceTable = BTreeMap<String, BTreeMap<i32, f64>>;

/// ξ per unit for one year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTable {
    pub year: i32,
    pub xi: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    pub table: CorrectionTable,
    /// Units whose predicted population-weighted sum was zero.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReferenceRow {
    unit_id: String,
    year: i32,
    epwa: f64,
}

/// Reads `unit_id,year,epwa`.
pub fn read_reference(path: &Path) -> Result<ReferenceTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut table = ReferenceTable::new();
    for row in rdr.deserialize() {
        let row: ReferenceRow = row.map_err(|e| Error::format(path, e.to_string()))?;
        if !(0.0..=1.0).contains(&row.epwa) {
            return Err(Error::Domain {
                what: format!("reference EPWA for {}@{}", row.unit_id, row.year),
                value: row.epwa,
            });
        }
        table
            .entry(row.unit_id)
            .or_default()
            .insert(row.year, row.epwa);
    }
    Ok(table)
}

/// `ξ = Σ expected·N / Σ predicted·N` over each unit's cells with a valid
/// prediction and population, summed in row-major order.
pub fn correction_factors(
    expected: &BTreeMap<String, f64>,
    predicted: &Raster,
    population: &Raster,
    zones: &ZoneMap,
    year: i32,
) -> Result<CorrectionOutcome> {
    predicted
        .spec
        .ensure_aligned(&population.spec, "correction_factors")?;
    predicted
        .spec
        .ensure_aligned(&zones.spec, "correction_factors")?;
    let mut sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for idx in 0..predicted.values.len() {
        let Some(unit) = zones.unit_of(idx) else {
            continue;
        };
        let Some(e) = expected.get(unit) else {
            continue;
        };
        if let (Some(p), Some(n)) = (predicted.get(idx), population.get(idx)) {
            let s = sums.entry(unit).or_default();
            s.0 += e * n;
            s.1 += p * n;
        }
    }
    let mut table = CorrectionTable {
        year,
        xi: BTreeMap::new(),
    };
    let mut failed = Vec::new();
    for unit in expected.keys() {
        match sums.get(unit.as_str()) {
            Some((num, den)) if *den > 0.0 => {
                table.xi.insert(unit.clone(), num / den);
            }
            _ => {
                log::warn!("unit {unit}: no predicted population mass in {year}; ξ omitted");
                failed.push(unit.clone());
            }
        }
    }
    Ok(CorrectionOutcome { table, failed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub raster: Raster,
    /// Cells capped at `1 - ε_y`, per unit.
    pub clamped: BTreeMap<String, usize>,
    /// Units on the grid without a factor; passed through unchanged.
    pub uncorrected_units: Vec<String>,
}

/// Scales each unit's predictions by its ξ, capping at `1 - ε_y`.
pub fn apply_correction(
    predicted: &Raster,
    table: &CorrectionTable,
    zones: &ZoneMap,
) -> Result<Corrected> {
    predicted
        .spec
        .ensure_aligned(&zones.spec, "apply_correction")?;
    let cap = 1.0 - EPS_Y;
    let mut clamped: BTreeMap<String, usize> = table.xi.keys().map(|u| (u.clone(), 0)).collect();
    let mut uncorrected = std::collections::BTreeSet::new();
    let mut values = predicted.values.clone();
    for (idx, v) in values.iter_mut().enumerate() {
        let Some(unit) = zones.unit_of(idx) else {
            continue;
        };
        let Some(p) = predicted.get(idx) else {
            continue;
        };
        match table.xi.get(unit) {
            Some(xi) => {
                let c = xi * p;
                if c > cap {
                    *v = cap;
                    *clamped.get_mut(unit).expect("seeded from table") += 1;
                } else {
                    *v = c;
                }
            }
            None => {
                uncorrected.insert(unit.to_string());
            }
        }
    }
    Ok(Corrected {
        raster: Raster {
            values,
            ..predicted.clone()
        },
        clamped,
        uncorrected_units: uncorrected.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub unit_id: String,
    pub year: i32,
    pub xi: f64,
    pub clamped_cells: usize,
}

pub fn write_corrections(rows: &[CorrectionRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, ZoneInfo};

    fn setup(pred: Vec<f64>, pop: Vec<f64>) -> (Raster, Raster, ZoneMap) {
        let n = pred.len();
        let g = GridSpec::from_origin(0.0, 0.0, 1.0, 1, n, -9999.0).unwrap();
        let legend = BTreeMap::from([(
            7,
            ZoneInfo {
                unit_id: "U".into(),
                country_iso3: "AAA".into(),
                region_code: "R".into(),
            },
        )]);
        (
            Raster::new(g, pred, "epwa", 2020, "SSP2").unwrap(),
            Raster::new(g, pop, "total", 2020, "SSP2").unwrap(),
            ZoneMap::new(g, vec![Some(7); n], legend).unwrap(),
        )
    }

    #[test]
    fn identity_when_prediction_matches() {
        let (p, n, z) = setup(vec![0.3, 0.3], vec![5.0, 9.0]);
        let expected = BTreeMap::from([("U".to_string(), 0.3)]);
        let out = correction_factors(&expected, &p, &n, &z, 2020).unwrap();
        assert_eq!(out.table.xi["U"], 1.0);
        let c = apply_correction(&p, &out.table, &z).unwrap();
        assert_eq!(c.raster, p);
    }

    #[test]
    fn clamps_and_counts() {
        let (p, _, z) = setup(vec![0.9, 0.1], vec![1.0, 1.0]);
        let table = CorrectionTable {
            year: 2020,
            xi: BTreeMap::from([("U".to_string(), 2.0)]),
        };
        let c = apply_correction(&p, &table, &z).unwrap();
        assert_eq!(c.raster.values, vec![1.0 - EPS_Y, 0.2]);
        assert_eq!(c.clamped["U"], 1);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let (p, n, z) = setup(vec![0.3], vec![0.0]);
        let expected = BTreeMap::from([("U".to_string(), 0.3)]);
        let out = correction_factors(&expected, &p, &n, &z, 2020).unwrap();
        assert!(out.table.xi.is_empty());
        assert_eq!(out.failed, vec!["U".to_string()]);
    }

    #[test]
    fn uniform_population_reduces_to_mean_ratio() {
        let (p, n, z) = setup(vec![0.1, 0.2, 0.3], vec![4.0; 3]);
        let expected = BTreeMap::from([("U".to_string(), 0.4)]);
        let xi = correction_factors(&expected, &p, &n, &z, 2020)
            .unwrap()
            .table
            .xi["U"];
        assert!((xi - 0.4 / 0.2).abs() < 1e-12);
    }
}
