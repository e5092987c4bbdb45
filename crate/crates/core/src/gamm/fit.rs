use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{join, levels, Design, ModelRow, TermBasis};
use super::family::{deviance, Response};
use super::model::{FitDiagnostics, FittedModel, MODEL_FORMAT, MODEL_VERSION};
use super::pirls::{pirls, PirlsFit};
use super::spec::{Grouping, ModelSpec};
use crate::error::{Error, Result};
use crate::ingest::{Covariate, LabelSet, UnitFeatures};

pub const MIN_ROWS: usize = 50;

/// How smoothing parameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Coordinate-wise GCV minimization over a log grid.
    Gcv {
        log10_min: f64,
        log10_max: f64,
        points: usize,
        sweeps: usize,
    },
    /// One value per penalty component, in term order.
    Fixed { lambdas: Vec<f64> },
    /// The same value for every component.
    Uniform { lambda: f64 },
}

impl Default for LambdaSelection {
    fn default() -> Self {
        LambdaSelection::Gcv {
            log10_min: -4.0,
            log10_max: 6.0,
            points: 11,
            sweeps: 2,
        }
    }
}

impl LambdaSelection {
    fn grid(&self) -> Vec<f64> {
        match self {
            LambdaSelection::Gcv {
                log10_min,
                log10_max,
                points,
                ..
            } => {
                if *points <= 1 {
                    return vec![10f64.powf(*log10_min)];
                }
                (0..*points)
                    .map(|i| {
                        let t = i as f64 / (*points - 1) as f64;
                        10f64.powf(log10_min + t * (log10_max - log10_min))
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda: LambdaSelection,
    /// Also fit the region-grouped model whose intercepts serve countries
    /// unseen in training.
    pub region_fallback: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: LambdaSelection::default(),
            region_fallback: true,
        }
    }
}

/// Fits the model to labels joined with their features.
pub fn fit(
    spec: &ModelSpec,
    labels: &LabelSet,
    features: &[UnitFeatures],
    options: &FitOptions,
) -> Result<FittedModel> {
    let rows = join(&labels.records, features)?;
    fit_rows(spec, &rows, options)
}

/// Smoothing-parameter search result for one model.
struct Selected {
    lambdas: Vec<f64>,
    fit: PirlsFit,
}

fn search(design: &Design, y: &[f64], selection: &LambdaSelection) -> Result<Selected> {
    let k = design.penalties.len();
    let run = |lam: &[f64], start: Option<(&DVector<f64>, f64)>| {
        pirls(&design.x, y, &design.penalty_matrix(lam), start)
    };
    match selection {
        LambdaSelection::Fixed { lambdas } => {
            if lambdas.len() != k {
                return Err(Error::Spec(format!(
                    "{} fixed smoothing parameters for {k} penalty components",
                    lambdas.len()
                )));
            }
            if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::Spec(
                    "smoothing parameters must be finite and ≥ 0".into(),
                ));
            }
            Ok(Selected {
                fit: run(lambdas, None)?,
                lambdas: lambdas.clone(),
            })
        }
        LambdaSelection::Uniform { lambda } => {
            let lambdas = vec![*lambda; k];
            search(design, y, &LambdaSelection::Fixed { lambdas })
        }
        LambdaSelection::Gcv { sweeps, .. } => {
            let grid = selection.grid();
            let start_lambda = grid
                .iter()
                .copied()
                .find(|l| (*l - 1.0).abs() < 1e-12)
                .unwrap_or(grid[grid.len() / 2]);
            let mut lambdas = vec![start_lambda; k];
            let mut best = run(&lambdas, None)?;
            if k == 0 {
                return Ok(Selected { lambdas, fit: best });
            }
            // Candidates are scored at one precision. The Beta deviance grows
            // with φ, so scoring each fit at its own φ would favour poor fits.
            let resp = Response::new(y);
            let phi_ref = best.phi;
            let n = y.len() as f64;
            let score = |f: &PirlsFit| {
                if f.edf >= n {
                    return f64::INFINITY;
                }
                n * deviance(&resp, &f.mu, phi_ref) / (n - f.edf).powi(2)
            };
            for _ in 0..*sweeps {
                for c in 0..k {
                    let start = (&best.beta, best.phi);
                    let trials: Vec<Option<PirlsFit>> = grid
                        .par_iter()
                        .map(|g| {
                            let mut lam = lambdas.clone();
                            lam[c] = *g;
                            run(&lam, Some(start)).ok()
                        })
                        .collect();
                    // Ties keep the smaller λ: strict improvement only, in grid order.
                    let mut chosen: Option<(usize, f64)> = None;
                    for (i, t) in trials.iter().enumerate() {
                        if let Some(t) = t {
                            let g = score(t);
                            if chosen.is_none_or(|(_, b)| g < b) {
                                chosen = Some((i, g));
                            }
                        }
                    }
                    if let Some((i, _)) = chosen {
                        lambdas[c] = grid[i];
                        best = trials
                            .into_iter()
                            .nth(i)
                            .flatten()
                            .expect("chosen trial exists");
                    }
                }
            }
            Ok(Selected { lambdas, fit: best })
        }
    }
}

fn diagnostics(fit: &PirlsFit, n: usize) -> FitDiagnostics {
    FitDiagnostics {
        n,
        deviance: fit.deviance,
        loglik: fit.loglik,
        pen_loglik: fit.pen_loglik,
        edf: fit.edf,
        gcv: fit.gcv(),
        aic: -2.0 * fit.loglik + 2.0 * fit.edf,
        iterations: fit.iterations,
        converged: fit.converged,
        objective_trace: fit.trace.clone(),
    }
}

fn random_effects(design: &Design, beta: &DVector<f64>) -> BTreeMap<String, f64> {
    design
        .terms
        .iter()
        .find_map(|t| match &t.basis {
            TermBasis::RandomIntercept { basis, .. } => Some(
                basis
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(j, l)| (l.clone(), beta[t.offset + j]))
                    .collect(),
            ),
            _ => None,
        })
        .unwrap_or_default()
}

/// Fits the model to already-joined rows.
pub fn fit_rows(spec: &ModelSpec, rows: &[ModelRow], options: &FitOptions) -> Result<FittedModel> {
    if rows.len() < MIN_ROWS {
        return Err(Error::TooFewRows {
            found: rows.len(),
            needed: MIN_ROWS,
        });
    }
    let design = Design::build(spec, rows)?;
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let Selected { lambdas, fit } = search(&design, &y, &options.lambda)?;

    let p = design.x.ncols();
    let beta = &fit.beta;
    let term_centers = design
        .terms
        .iter()
        .map(|t| {
            let cols = design.x.view((0, t.offset), (rows.len(), t.width));
            let coef = beta.rows(t.offset, t.width);
            (cols * coef).mean()
        })
        .collect();

    let mut covariate_ranges = BTreeMap::new();
    for c in Covariate::ALL {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.x.get(c)), hi.max(r.x.get(c)))
            });
        covariate_ranges.insert(c, [lo, hi]);
    }

    let effects = random_effects(&design, beta);
    let (mut country_effects, mut region_effects) = (BTreeMap::new(), BTreeMap::new());
    match spec.grouping {
        Grouping::Country => country_effects = effects,
        Grouping::Region => region_effects = effects,
    }

    let mut region_diagnostics = None;
    if spec.has_random_intercept()
        && spec.grouping == Grouping::Country
        && options.region_fallback
        && levels(rows, Grouping::Region).len() >= 2
    {
        let region_spec = spec.clone().grouped_by(Grouping::Region);
        let region_design = Design::build(&region_spec, rows)?;
        let region = search(&region_design, &y, &options.lambda)?;
        region_effects = random_effects(&region_design, &region.fit.beta);
        region_diagnostics = Some(diagnostics(&region.fit, rows.len()));
    }

    let penalty_labels = design
        .penalties
        .iter()
        .map(|pc| design.terms[pc.term].basis.label())
        .collect();

    Ok(FittedModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        spec: spec.clone(),
        terms: design.terms.clone(),
        coefficients: beta.iter().copied().collect(),
        lambdas,
        penalty_labels,
        phi: fit.phi,
        country_effects,
        region_effects,
        covariate_ranges,
        term_centers,
        covariance: (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| fit.covariance[(i, j)])
            .collect(),
        diagnostics: diagnostics(&fit, rows.len()),
        region_diagnostics,
    })
}
