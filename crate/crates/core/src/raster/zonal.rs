use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Raster, ZoneMap};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZonalStat {
    Mean,
    Median,
    Sum,
}

/// Median of a non-empty slice; even counts average the two middle values.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-unit statistic over valid cells. Units without valid cells are absent.
///
/// Accumulation runs over each unit's cells in row-major order.
pub fn zonal_stat(
    value: &Raster,
    zones: &ZoneMap,
    stat: ZonalStat,
) -> Result<BTreeMap<String, f64>> {
    value.spec.ensure_aligned(&zones.spec, "zonal_stat")?;
    let mut out = BTreeMap::new();
    for (unit, cells) in zones.cells_by_unit() {
        let mut valid: Vec<f64> = cells.iter().filter_map(|&c| value.get(c)).collect();
        if valid.is_empty() {
            continue;
        }
        let v = match stat {
            ZonalStat::Sum => valid.iter().sum(),
            ZonalStat::Mean => valid.iter().sum::<f64>() / valid.len() as f64,
            ZonalStat::Median => median(&mut valid),
        };
        out.insert(unit.to_string(), v);
    }
    Ok(out)
}

/// Paints each cell with its unit's value; cells of units absent from `values` are nodata.
pub fn broadcast_zonal(values: &BTreeMap<String, f64>, zones: &ZoneMap) -> Raster {
    let spec = zones.spec;
    let data = (0..spec.len())
        .map(|idx| {
            zones
                .unit_of(idx)
                .and_then(|u| values.get(u).copied())
                .unwrap_or(spec.nodata)
        })
        .collect();
    Raster {
        spec,
        values: data,
        variable: "broadcast".into(),
        year: 0,
        scenario: "observed".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, ZoneInfo};

    fn zones_for(ids: Vec<Option<u32>>, n_cols: usize) -> ZoneMap {
        let n_rows = ids.len() / n_cols;
        let spec = GridSpec::from_origin(0.0, 0.0, 1.0, n_rows, n_cols, -1.0).unwrap();
        let legend = ids
            .iter()
            .flatten()
            .map(|z| {
                (
                    *z,
                    ZoneInfo {
                        unit_id: format!("U{z}"),
                        country_iso3: "AAA".into(),
                        region_code: "R".into(),
                    },
                )
            })
            .collect();
        ZoneMap::new(spec, ids, legend).unwrap()
    }

    #[test]
    fn median_of_three() {
        let z = zones_for(vec![Some(1); 3], 3);
        let r = Raster::new(z.spec, vec![3.0, 1.0, 2.0], "v", 0, "o").unwrap();
        assert_eq!(zonal_stat(&r, &z, ZonalStat::Median).unwrap()["U1"], 2.0);
    }

    #[test]
    fn median_even_count_averages_middle() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&mut v), 2.5);
    }

    #[test]
    fn mean_of_two() {
        let z = zones_for(vec![Some(1); 2], 2);
        let r = Raster::new(z.spec, vec![0.2, 0.4], "v", 0, "o").unwrap();
        let m = zonal_stat(&r, &z, ZonalStat::Mean).unwrap()["U1"];
        assert!((m - 0.3).abs() < 1e-15);
    }

    #[test]
    fn units_without_valid_cells_are_omitted() {
        let z = zones_for(vec![Some(1), Some(2)], 2);
        let r = Raster::new(z.spec, vec![5.0, -1.0], "v", 0, "o").unwrap();
        let t = zonal_stat(&r, &z, ZonalStat::Sum).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t["U1"], 5.0);
    }

    #[test]
    fn misaligned_inputs_fail() {
        let z = zones_for(vec![Some(1); 4], 2);
        let spec = GridSpec::from_origin(0.0, 0.0, 1.0, 1, 4, -1.0).unwrap();
        let r = Raster::filled(spec, 1.0, "v");
        assert!(zonal_stat(&r, &z, ZonalStat::Sum).is_err());
    }

    #[test]
    fn broadcast_single_zone_and_empty_table() {
        let z = zones_for(vec![Some(1), Some(1), None], 3);
        let mut t = BTreeMap::new();
        t.insert("U1".to_string(), 7.0);
        assert_eq!(broadcast_zonal(&t, &z).values, vec![7.0, 7.0, -1.0]);
        assert_eq!(broadcast_zonal(&BTreeMap::new(), &z).values, vec![-1.0; 3]);
    }
}
