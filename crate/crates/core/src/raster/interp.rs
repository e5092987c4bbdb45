use super::Raster;
use crate::error::{Error, Result};

/// Exponential interpolation between two population anchors.
///
/// Each cell grows at the annualized rate `r = ln(p2 / p1) / (t2 - t1)`, so
/// `p(t) = p1 * exp(r * (t - t1))`. Cells with exactly one zero anchor have no
/// defined growth rate and are interpolated linearly. Nodata in either anchor
/// propagates.
pub fn interpolate_population(
    p1: &Raster,
    p2: &Raster,
    t1: i32,
    t2: i32,
    t: i32,
) -> Result<Raster> {
    p1.spec.ensure_aligned(&p2.spec, "interpolate_population")?;
    if t1 >= t2 || t < t1 || t > t2 {
        return Err(Error::YearRange { year: t, t1, t2 });
    }
    let span = f64::from(t2 - t1);
    let dt = f64::from(t - t1);
    let nodata = p1.spec.nodata;
    let mut values = Vec::with_capacity(p1.values.len());
    for idx in 0..p1.values.len() {
        let (Some(a), Some(b)) = (p1.get(idx), p2.get(idx)) else {
            values.push(nodata);
            continue;
        };
        if a < 0.0 || b < 0.0 {
            return Err(Error::Domain {
                what: format!("negative population at cell {idx}"),
                value: a.min(b),
            });
        }
        let v = if t == t1 {
            a
        } else if t == t2 {
            b
        } else if a == 0.0 && b == 0.0 {
            0.0
        } else if a == 0.0 || b == 0.0 {
            a + (b - a) * dt / span
        } else {
            let rate = (b / a).ln() / span;
            a * (rate * dt).exp()
        };
        values.push(v);
    }
    Ok(Raster {
        spec: p1.spec,
        values,
        variable: p1.variable.clone(),
        year: t,
        scenario: p1.scenario.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridSpec;

    fn one_row(values: Vec<f64>) -> Raster {
        let spec = GridSpec::from_origin(0.0, 0.0, 1.0, 1, values.len(), -1.0).unwrap();
        Raster::new(spec, values, "pop", 2000, "observed").unwrap()
    }

    #[test]
    fn decade_midpoint_is_geometric_mean() {
        let p = interpolate_population(
            &one_row(vec![100.0]),
            &one_row(vec![200.0]),
            2000,
            2010,
            2005,
        )
        .unwrap();
        assert!((p.values[0] - 100.0 * 2f64.sqrt()).abs() < 1e-10);
        assert!((p.values[0] - 141.4214).abs() < 1e-4);
    }

    #[test]
    fn anchors_are_exact() {
        let a = one_row(vec![3.7, 0.0, 12.0]);
        let b = one_row(vec![9.1, 0.0, 1.5]);
        assert_eq!(
            interpolate_population(&a, &b, 2000, 2010, 2000)
                .unwrap()
                .values,
            a.values
        );
        assert_eq!(
            interpolate_population(&a, &b, 2000, 2010, 2010)
                .unwrap()
                .values,
            b.values
        );
    }

    #[test]
    fn zero_anchor_falls_back_to_linear() {
        let a = one_row(vec![0.0, 40.0, 0.0]);
        let b = one_row(vec![10.0, 0.0, 0.0]);
        let p = interpolate_population(&a, &b, 2000, 2010, 2004).unwrap();
        assert_eq!(p.values, vec![4.0, 24.0, 0.0]);
    }

    #[test]
    fn nodata_propagates_and_range_is_checked() {
        let a = one_row(vec![-1.0, 5.0]);
        let b = one_row(vec![3.0, 5.0]);
        let p = interpolate_population(&a, &b, 2000, 2010, 2003).unwrap();
        assert_eq!(p.values[0], -1.0);
        assert!(matches!(
            interpolate_population(&a, &b, 2000, 2010, 2011),
            Err(Error::YearRange { .. })
        ));
        assert!(interpolate_population(&a, &b, 2010, 2010, 2010).is_err());
    }
}
