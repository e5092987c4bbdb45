use serde::{Deserialize, Serialize};

use super::{GridSpec, Raster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    Nearest,
    BlockMean,
    AreaWeightedMean,
}

const RATIO_TOL: f64 = 1e-9;

fn overlaps(a: &GridSpec, b: &GridSpec) -> bool {
    a.lon_min < b.lon_max && b.lon_min < a.lon_max && a.lat_min < b.lat_max && b.lat_min < a.lat_max
}

fn integral(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= RATIO_TOL).then_some(r as i64)
}

/// Resamples `src` onto `target`. Output carries `target.nodata` for missing cells.
pub fn resample(src: &Raster, target: &GridSpec, method: ResampleMethod) -> Result<Raster> {
    target.validate()?;
    if !overlaps(&src.spec, target) {
        return Err(Error::Extent);
    }
    let values = if src.spec.same_grid(target) {
        src.values
            .iter()
            .map(|v| {
                if src.spec.is_nodata(*v) {
                    target.nodata
                } else {
                    *v
                }
            })
            .collect()
    } else {
        match method {
            ResampleMethod::Nearest => nearest(src, target),
            ResampleMethod::BlockMean => block_mean(src, target)?,
            ResampleMethod::AreaWeightedMean => area_weighted(src, target),
        }
    };
    Ok(Raster {
        spec: *target,
        values,
        variable: src.variable.clone(),
        year: src.year,
        scenario: src.scenario.clone(),
    })
}

fn nearest(src: &Raster, target: &GridSpec) -> Vec<f64> {
    let s = &src.spec;
    let mut out = Vec::with_capacity(target.len());
    for row in 0..target.n_rows {
        let v = (s.lat_max - target.center_lat(row)) / s.cell_size;
        for col in 0..target.n_cols {
            let u = (target.center_lon(col) - s.lon_min) / s.cell_size;
            let value = if u < 0.0 || v < 0.0 || u >= s.n_cols as f64 || v >= s.n_rows as f64 {
                None
            } else {
                src.get(s.index(v.floor() as usize, u.floor() as usize))
            };
            out.push(value.unwrap_or(target.nodata));
        }
    }
    out
}

fn block_mean(src: &Raster, target: &GridSpec) -> Result<Vec<f64>> {
    let s = &src.spec;
    let ratio_err = || Error::Ratio {
        target: target.cell_size,
        source_size: s.cell_size,
    };
    let k = integral(target.cell_size / s.cell_size).ok_or_else(ratio_err)?;
    if k < 1 {
        return Err(ratio_err());
    }
    let ox = integral((target.lon_min - s.lon_min) / s.cell_size);
    let oy = integral((s.lat_max - target.lat_max) / s.cell_size);
    let (Some(ox), Some(oy)) = (ox, oy) else {
        return Err(Error::Alignment(
            "block_mean target origin is not on a source cell boundary".into(),
        ));
    };
    let mut out = Vec::with_capacity(target.len());
    for row in 0..target.n_rows as i64 {
        for col in 0..target.n_cols as i64 {
            let mut sum = 0.0;
            let mut n = 0usize;
            for sr in (oy + row * k)..(oy + (row + 1) * k) {
                if sr < 0 || sr >= s.n_rows as i64 {
                    continue;
                }
                for sc in (ox + col * k)..(ox + (col + 1) * k) {
                    if sc < 0 || sc >= s.n_cols as i64 {
                        continue;
                    }
                    if let Some(v) = src.get(s.index(sr as usize, sc as usize)) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            out.push(if n == 0 {
                target.nodata
            } else {
                sum / n as f64
            });
        }
    }
    Ok(out)
}

/// Overlaps of `[a, b)` (in source cell units) with source cells `0..n`.
fn axis_overlaps(a: f64, b: f64, n: usize) -> Vec<(usize, f64)> {
    let lo = a.max(0.0);
    let hi = b.min(n as f64);
    if lo >= hi {
        return Vec::new();
    }
    let first = lo.floor() as usize;
    let last = (hi.ceil() as usize).min(n);
    (first..last)
        .filter_map(|j| {
            let w = hi.min(j as f64 + 1.0) - lo.max(j as f64);
            (w > 0.0).then_some((j, w))
        })
        .collect()
}

fn area_weighted(src: &Raster, target: &GridSpec) -> Vec<f64> {
    let s = &src.spec;
    let scale = target.cell_size / s.cell_size;
    let mut out = Vec::with_capacity(target.len());
    for row in 0..target.n_rows {
        let top = (s.lat_max - (target.lat_max - row as f64 * target.cell_size)) / s.cell_size;
        let rows = axis_overlaps(top, top + scale, s.n_rows);
        for col in 0..target.n_cols {
            let left = (target.lon_min + col as f64 * target.cell_size - s.lon_min) / s.cell_size;
            let cols = axis_overlaps(left, left + scale, s.n_cols);
            let mut num = 0.0;
            let mut den = 0.0;
            let mut single = None;
            let mut count = 0usize;
            for &(sr, wr) in &rows {
                for &(sc, wc) in &cols {
                    if let Some(v) = src.get(s.index(sr, sc)) {
                        let w = wr * wc;
                        num += w * v;
                        den += w;
                        single = Some(v);
                        count += 1;
                    }
                }
            }
            out.push(match count {
                0 => target.nodata,
                1 => single.unwrap_or(target.nodata),
                _ => num / den,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n_rows: usize, n_cols: usize, cell: f64) -> GridSpec {
        GridSpec::from_origin(0.0, 0.0, cell, n_rows, n_cols, -9999.0).unwrap()
    }

    fn random_raster(spec: GridSpec, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.len())
            .map(|_| rng.random_range(0.0..100.0))
            .collect();
        Raster::new(spec, values, "v", 2000, "observed").unwrap()
    }

    #[test]
    fn identity_for_every_method() {
        let r = random_raster(grid(7, 9, 0.25), 1);
        for m in [
            ResampleMethod::Nearest,
            ResampleMethod::BlockMean,
            ResampleMethod::AreaWeightedMean,
        ] {
            assert_eq!(resample(&r, &r.spec, m).unwrap().values, r.values);
        }
    }

    #[test]
    fn two_by_two_block_mean() {
        let r = Raster::new(grid(2, 2, 1.0), vec![1.0, 2.0, 3.0, 4.0], "v", 0, "o").unwrap();
        let out = resample(&r, &grid(1, 1, 2.0), ResampleMethod::BlockMean).unwrap();
        assert_eq!(out.values, vec![2.5]);
        let out = resample(&r, &grid(1, 1, 2.0), ResampleMethod::AreaWeightedMean).unwrap();
        assert_eq!(out.values, vec![2.5]);
    }

    #[test]
    fn block_mean_skips_nodata_and_all_missing_block_is_nodata() {
        let r = Raster::new(
            grid(2, 4, 1.0),
            vec![
                1.0, -9999.0, -9999.0, -9999.0, 3.0, -9999.0, -9999.0, -9999.0,
            ],
            "v",
            0,
            "o",
        )
        .unwrap();
        let out = resample(&r, &grid(1, 2, 2.0), ResampleMethod::BlockMean).unwrap();
        assert_eq!(out.values, vec![2.0, -9999.0]);
    }

    #[test]
    fn block_mean_requires_integer_ratio() {
        let r = random_raster(grid(10, 10, 1.0), 2);
        let t = GridSpec::from_origin(0.0, 0.0, 2.5, 4, 4, -9999.0).unwrap();
        assert!(matches!(
            resample(&r, &t, ResampleMethod::BlockMean),
            Err(Error::Ratio { .. })
        ));
    }

    #[test]
    fn disjoint_extents_fail() {
        let r = random_raster(grid(2, 2, 1.0), 3);
        let t = GridSpec::from_origin(50.0, 50.0, 1.0, 2, 2, -9999.0).unwrap();
        assert!(matches!(
            resample(&r, &t, ResampleMethod::Nearest),
            Err(Error::Extent)
        ));
    }

    /// Nearest-center search over every source cell, in source index units;
    /// equidistant ties go to the higher index (half-open cells).
    fn brute_nearest(src: &Raster, target: &GridSpec) -> Vec<f64> {
        let s = &src.spec;
        let mut out = Vec::new();
        for row in 0..target.n_rows {
            for col in 0..target.n_cols {
                let u = (target.center_lon(col) - s.lon_min) / s.cell_size;
                let v = (s.lat_max - target.center_lat(row)) / s.cell_size;
                let mut best = (f64::INFINITY, 0usize);
                for sr in 0..s.n_rows {
                    for sc in 0..s.n_cols {
                        let du = u - (sc as f64 + 0.5);
                        let dv = v - (sr as f64 + 0.5);
                        let d = du * du + dv * dv;
                        if d <= best.0 {
                            best = (d, s.index(sr, sc));
                        }
                    }
                }
                out.push(src.values[best.1]);
            }
        }
        out
    }

    #[test]
    fn nearest_matches_brute_force() {
        for seed in 0..5 {
            let r = random_raster(grid(10, 10, 0.3), seed);
            let t = GridSpec::from_origin(0.0, 0.0, 1.0, 3, 3, -9999.0).unwrap();
            let out = resample(&r, &t, ResampleMethod::Nearest).unwrap();
            assert_eq!(out.values, brute_nearest(&r, &t));
        }
    }

    #[test]
    fn block_mean_preserves_global_mean() {
        let r = random_raster(grid(12, 18, 0.5), 9);
        let t = grid(4, 6, 1.5);
        let out = resample(&r, &t, ResampleMethod::BlockMean).unwrap();
        let m_src = r.values.iter().sum::<f64>() / r.values.len() as f64;
        let m_out = out.values.iter().sum::<f64>() / out.values.len() as f64;
        assert!((m_src - m_out).abs() / m_src < 1e-12);
    }

    #[test]
    fn area_weighted_handles_partial_overlap() {
        // 1x2 source [0,2)x[0,1) onto one cell [0,1.5)x[0,1.5): overlap 1.0 and 0.5.
        let r = Raster::new(grid(1, 2, 1.0), vec![2.0, 8.0], "v", 0, "o").unwrap();
        let t = GridSpec::from_origin(0.0, -0.5, 1.5, 1, 1, -9999.0).unwrap();
        let out = resample(&r, &t, ResampleMethod::AreaWeightedMean).unwrap();
        assert!((out.values[0] - 4.0).abs() < 1e-12);
    }
}
