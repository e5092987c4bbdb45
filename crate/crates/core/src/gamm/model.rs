use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::design::{FittedTerm, ModelRow, TermBasis};
use super::family::{clamp_mu, deviance, logistic, loglik_sum, Response};
use super::spec::{Grouping, ModelSpec};
use crate::error::{Error, Result};
use crate::ingest::{Covariate, Covariates};

pub const MODEL_FORMAT: &str = "epwa-beta-gamm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub deviance: f64,
    pub loglik: f64,
    pub pen_loglik: f64,
    pub edf: f64,
    pub gcv: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// A fitted Beta GAMM. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub terms: Vec<FittedTerm>,
    /// Intercept first, then each term's block at its offset.
    pub coefficients: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub penalty_labels: Vec<String>,
    pub phi: f64,
    pub country_effects: BTreeMap<String, f64>,
    pub region_effects: BTreeMap<String, f64>,
    pub covariate_ranges: BTreeMap<Covariate, [f64; 2]>,
    /// Training mean of each term's contribution.
    pub term_centers: Vec<f64>,
    /// Bayesian posterior covariance of the coefficients, row-major.
    pub covariance: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    pub region_diagnostics: Option<FitDiagnostics>,
}

/// Which random intercept a prediction used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSource {
    Country,
    Region,
    /// The model has a random intercept but neither group was seen in training.
    Missing,
    /// The model has no random intercept.
    NotModeled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    pub eta: f64,
    pub effect: f64,
    pub source: EffectSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub gcv: f64,
    pub aic: f64,
    pub explained_variance: f64,
    pub r2: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEffectRow {
    pub x: f64,
    pub effect: f64,
    pub se_lo: f64,
    pub se_hi: f64,
}

impl FittedModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }

    pub fn edf(&self) -> f64 {
        self.diagnostics.edf
    }

    fn has_random_intercept(&self) -> bool {
        self.terms.iter().any(|t| t.basis.is_random())
    }

    /// Link-scale contribution of every non-random term, row by row.
    pub fn fixed_linear_predictor(&self, x: &[Covariates]) -> Vec<f64> {
        let mut eta = vec![self.intercept(); x.len()];
        let no_groups: [&str; 0] = [];
        for t in self.terms.iter().filter(|t| !t.basis.is_random()) {
            let cols = t.basis.evaluate(x, &no_groups);
            let coef = &self.coefficients[t.offset..t.offset + t.width];
            for (i, e) in eta.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, c) in coef.iter().enumerate() {
                    acc += cols[(i, j)] * c;
                }
                *e += acc;
            }
        }
        eta
    }

    /// Random intercept for a country/region pair, with the fallback order
    /// country, then region.
    pub fn group_effect(&self, country: &str, region: &str) -> (f64, EffectSource) {
        if !self.has_random_intercept() {
            return (0.0, EffectSource::NotModeled);
        }
        if self.spec.grouping == Grouping::Country {
            if let Some(d) = self.country_effects.get(country) {
                return (*d, EffectSource::Country);
            }
        }
        match self.region_effects.get(region) {
            Some(d) => (*d, EffectSource::Region),
            None => (0.0, EffectSource::Missing),
        }
    }

    /// Batch prediction; row `i` is identical to `predict` on row `i` alone.
    pub fn predict_many<C: AsRef<str>, R: AsRef<str>>(
        &self,
        x: &[Covariates],
        countries: &[C],
        regions: &[R],
    ) -> Vec<Prediction> {
        let fixed = self.fixed_linear_predictor(x);
        fixed
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let (effect, source) =
                    self.group_effect(countries[i].as_ref(), regions[i].as_ref());
                let eta = f + effect;
                Prediction {
                    mu: clamp_mu(logistic(eta)),
                    eta,
                    effect,
                    source,
                }
            })
            .collect()
    }

    pub fn predict(&self, x: &Covariates, country: &str, region: &str) -> Prediction {
        self.predict_many(std::slice::from_ref(x), &[country], &[region])[0]
    }

    pub fn predict_rows(&self, rows: &[ModelRow]) -> Vec<Prediction> {
        let x: Vec<Covariates> = rows.iter().map(|r| r.x).collect();
        let c: Vec<&str> = rows.iter().map(|r| r.country_iso3.as_str()).collect();
        let g: Vec<&str> = rows.iter().map(|r| r.region_code.as_str()).collect();
        self.predict_many(&x, &c, &g)
    }

    fn smooth_term(&self, var: Covariate) -> Result<(usize, &FittedTerm)> {
        self.terms
            .iter()
            .enumerate()
            .find(|(_, t)| matches!(&t.basis, TermBasis::Smooth { var: v, .. } if *v == var))
            .ok_or_else(|| Error::UnknownVariable(format!("no univariate smooth of {var}")))
    }

    /// Centered smooth contribution and its standard error at `xs`.
    pub fn partial_effect_at(&self, var: Covariate, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
        let (idx, term) = self.smooth_term(var)?;
        let TermBasis::Smooth { basis, .. } = &term.basis else {
            unreachable!("smooth_term returns smooth terms")
        };
        let b = basis.evaluate(xs);
        let w = term.width;
        let p = self.n_coefficients();
        let coef = &self.coefficients[term.offset..term.offset + w];
        let center = self.term_centers[idx];
        Ok((0..xs.len())
            .map(|i| {
                let mut f = 0.0;
                for j in 0..w {
                    f += b[(i, j)] * coef[j];
                }
                let mut var = 0.0;
                for a in 0..w {
                    for c in 0..w {
                        var += b[(i, a)]
                            * self.covariance[(term.offset + a) * p + term.offset + c]
                            * b[(i, c)];
                    }
                }
                (f - center, var.max(0.0).sqrt())
            })
            .collect())
    }

    /// Smooth of `var` on an even grid spanning its training range, with ±2 se bands.
    pub fn export_partial_effects(
        &self,
        var: Covariate,
        grid_size: usize,
    ) -> Result<Vec<PartialEffectRow>> {
        self.smooth_term(var)?;
        if grid_size < 2 {
            return Err(Error::Spec(
                "partial-effect grid needs at least 2 points".into(),
            ));
        }
        let [lo, hi] = self.covariate_ranges[&var];
        let xs: Vec<f64> = (0..grid_size)
            .map(|i| {
                if i == grid_size - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (grid_size - 1) as f64
                }
            })
            .collect();
        Ok(self
            .partial_effect_at(var, &xs)?
            .into_iter()
            .zip(xs)
            .map(|((effect, se), x)| PartialEffectRow {
                x,
                effect,
                se_lo: effect - 2.0 * se,
                se_hi: effect + 2.0 * se,
            })
            .collect())
    }

    /// Fit statistics on `rows` using the model's edf.
    pub fn metrics(&self, rows: &[ModelRow]) -> Result<FitMetrics> {
        if rows.is_empty() {
            return Err(Error::EmptySplit("metrics on no rows".into()));
        }
        let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
        let mu: Vec<f64> = self.predict_rows(rows).iter().map(|p| p.mu).collect();
        response_metrics(&y, &mu, self.phi, self.edf())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: FittedModel = serde_json::from_slice(bytes)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Spec(format!(
                "unsupported model artifact {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// RMSE, R², explained variance, GCV and AIC for predictions `mu` of `y`.
pub fn response_metrics(y: &[f64], mu: &[f64], phi: f64, edf: f64) -> Result<FitMetrics> {
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let resid: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let r_mean = resid.iter().sum::<f64>() / n;
    let ss_res_centered: f64 = resid.iter().map(|r| (r - r_mean).powi(2)).sum();
    let resp = Response::new(y);
    let dev = deviance(&resp, mu, phi);
    let ll = loglik_sum(&resp, mu, phi);
    Ok(FitMetrics {
        gcv: if edf < n {
            n * dev / (n - edf).powi(2)
        } else {
            f64::INFINITY
        },
        aic: -2.0 * ll + 2.0 * edf,
        explained_variance: 1.0 - ss_res_centered / ss_tot,
        r2: 1.0 - ss_res / ss_tot,
        rmse: (ss_res / n).sqrt(),
    })
}

pub fn write_partial_effects(rows: &[PartialEffectRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
