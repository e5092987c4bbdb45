//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use epwa::raster::{GridSpec, Raster, ZoneInfo, ZoneMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

pub const NODATA: f64 = -9999.0;

/// Beta log-density in the mean/precision parameterization, straight from
/// the definition.
pub fn ln_beta_density(y: f64, mu: f64, phi: f64) -> f64 {
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln()
}

pub fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn glm_loglik(x: &[Vec<f64>], y: &[f64], theta: &[f64]) -> f64 {
    let p = theta.len() - 1;
    let phi = theta[p].exp();
    x.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta: f64 = row.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
            ln_beta_density(yi, logistic(eta), phi)
        })
        .sum()
}

/// Gradient in `(β, ln φ)` from the digamma form of the Beta score.
fn glm_gradient(x: &[Vec<f64>], y: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = theta.len() - 1;
    let phi = theta[p].exp();
    let mut g = vec![0.0; p + 1];
    for (row, &yi) in x.iter().zip(y) {
        let eta: f64 = row.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
        let mu = logistic(eta);
        let (a, b) = (mu * phi, (1.0 - mu) * phi);
        let ystar = (yi / (1.0 - yi)).ln();
        let mustar = digamma(a) - digamma(b);
        let d_eta = phi * (ystar - mustar) * mu * (1.0 - mu);
        for j in 0..p {
            g[j] += d_eta * row[j];
        }
        g[p] += phi
            * (digamma(phi) - mu * digamma(a) - (1.0 - mu) * digamma(b)
                + mu * yi.ln()
                + (1.0 - mu) * (1.0 - yi).ln());
    }
    g
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            let pivot_row = a[k].clone();
            for (x, p) in a[i].iter_mut().zip(&pivot_row).skip(k) {
                *x -= f * p;
            }
            b[i] -= f * b[k];
        }
    }
    let mut xs = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * xs[j]).sum();
        xs[k] = (b[k] - s) / a[k][k];
    }
    xs
}

/// Unpenalized Beta GLM with logit link by Levenberg-damped Newton on
/// `(β, ln φ)`, with a finite-difference Hessian of the analytic gradient.
/// Starts from least squares on `logit(y)`. Returns `(β, φ)`.
pub fn beta_glm(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = x[0].len();
    let z: Vec<f64> = y.iter().map(|v| (v / (1.0 - v)).ln()).collect();
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| x.iter().map(|r| r[i] * r[j]).sum())
                .collect()
        })
        .collect();
    let xtz: Vec<f64> = (0..p)
        .map(|i| x.iter().zip(&z).map(|(r, v)| r[i] * v).sum())
        .collect();
    let mut theta = solve(xtx, xtz);
    theta.push(10f64.ln());
    let mut ll = glm_loglik(x, y, &theta);
    let mut damp = 0.0;
    for _ in 0..500 {
        let g = glm_gradient(x, y, &theta);
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm < 1e-8 * y.len() as f64 {
            break;
        }
        let h = 1e-5;
        let hess: Vec<Vec<f64>> = (0..=p)
            .map(|j| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let (gu, gd) = (glm_gradient(x, y, &up), glm_gradient(x, y, &dn));
                (0..=p).map(|i| -(gu[i] - gd[i]) / (2.0 * h)).collect()
            })
            .collect();
        let scale = (0..=p).map(|i| hess[i][i].abs()).fold(1.0, f64::max);
        let mut moved = false;
        while damp < 1e12 {
            let mut a = hess.clone();
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += damp * scale;
            }
            let step = solve(a, g.clone());
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + s).collect();
            let ll_c = glm_loglik(x, y, &cand);
            if ll_c.is_finite() && ll_c >= ll {
                theta = cand;
                ll = ll_c;
                moved = true;
                damp *= 0.1;
                if damp < 1e-10 {
                    damp = 0.0;
                }
                break;
            }
            damp = if damp == 0.0 { 1e-6 } else { damp * 10.0 };
        }
        if !moved {
            break;
        }
    }
    (theta[..p].to_vec(), theta[p].exp())
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn info(unit: &str, country: &str, region: &str) -> ZoneInfo {
    ZoneInfo {
        unit_id: unit.into(),
        country_iso3: country.into(),
        region_code: region.into(),
    }
}

pub fn random_raster(rng: &mut ChaCha8Rng, spec: GridSpec, nodata_share: f64) -> Raster {
    let values = (0..spec.len())
        .map(|_| {
            if rng.random::<f64>() < nodata_share {
                spec.nodata
            } else {
                rng.random_range(-50.0..50.0)
            }
        })
        .collect();
    Raster::new(spec, values, "v", 2000, "observed").unwrap()
}

/// `k` zones scattered over the grid, with some cells in none.
pub fn random_zones(rng: &mut ChaCha8Rng, spec: GridSpec, k: u32) -> ZoneMap {
    let legend: BTreeMap<u32, ZoneInfo> = (1..=k)
        .map(|z| (z * 3, info(&format!("U{z}"), &format!("C{}", z % 3), "R")))
        .collect();
    let ids = (0..spec.len())
        .map(|_| {
            let z = rng.random_range(0..=k);
            (z > 0).then_some(z * 3)
        })
        .collect();
    ZoneMap::new(spec, ids, legend).unwrap()
}

/// Per-unit sum, mean and median by direct accumulation over the cell list.
pub fn zonal_oracle(value: &Raster, zones: &ZoneMap) -> BTreeMap<String, (f64, f64, f64)> {
    let mut cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for idx in 0..value.values.len() {
        let Some(z) = zones.zone_ids[idx] else {
            continue;
        };
        let v = value.values[idx];
        if v == value.spec.nodata || !v.is_finite() {
            continue;
        }
        cells
            .entry(zones.legend[&z].unit_id.clone())
            .or_default()
            .push(v);
    }
    cells
        .into_iter()
        .map(|(u, mut vs)| {
            let mut sum = 0.0;
            for v in &vs {
                sum += v;
            }
            let mean = sum / vs.len() as f64;
            vs.sort_by(f64::total_cmp);
            let n = vs.len();
            let median = if n % 2 == 1 {
                vs[n / 2]
            } else {
                (vs[n / 2 - 1] + vs[n / 2]) / 2.0
            };
            (u, (sum, mean, median))
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
