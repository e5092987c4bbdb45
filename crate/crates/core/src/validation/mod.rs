//! Train/validation splits and held-out RMSE reports.
//!
//! Three strategies: a spatial split of subnational units within each
//! country, forward and backward temporal splits, and a multiscale split that
//! trains on national aggregates of a region's subnational countries and
//! validates on their unit-level labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamm::{fit_rows, join, FitOptions, ModelSpec};
use crate::ingest::{LabelRecord, LabelSet, Provenance, UnitFeatures};

/// Years kept for training by the forward split; later years are validated.
pub const FORWARD_TRAIN: (i32, i32) = (2000, 2017);
pub const FORWARD_VALID: (i32, i32) = (2018, 2020);
pub const BACKWARD_TRAIN: (i32, i32) = (2005, 2020);
pub const BACKWARD_VALID: (i32, i32) = (2000, 2004);

/// Share of each country's subnational units held out by the spatial split.
pub const SPATIAL_VALID_SHARE: f64 = 0.2;
/// Countries with fewer subnational units than this are flagged.
pub const MIN_SPATIAL_UNITS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    Spatial,
    TimeForward,
    TimeBackward,
    Multiscale { region: String },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Spatial => "spatial",
            Strategy::TimeForward => "time_forward",
            Strategy::TimeBackward => "time_backward",
            Strategy::Multiscale { .. } => "multiscale",
        }
    }

    /// Region column of the report; splits over all regions report `all`.
    pub fn region(&self) -> &str {
        match self {
            Strategy::Multiscale { region } => region,
            _ => "all",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Multiscale { region } => write!(f, "multiscale({region})"),
            s => f.write_str(s.name()),
        }
    }
}

/// Strategy names accepted in configuration; `multiscale` expands per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Spatial,
    TimeForward,
    TimeBackward,
    Multiscale,
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(StrategyKind::Spatial),
            "time_forward" => Ok(StrategyKind::TimeForward),
            "time_backward" => Ok(StrategyKind::TimeBackward),
            "multiscale" => Ok(StrategyKind::Multiscale),
            other => Err(Error::Spec(format!(
                "unknown validation strategy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub strategy: Strategy,
    pub seed: u64,
    pub train: Vec<LabelRecord>,
    pub valid: Vec<LabelRecord>,
    /// Countries whose unit count was below [`MIN_SPATIAL_UNITS`].
    pub flagged: Vec<String>,
}

impl SplitPlan {
    pub fn train_keys(&self) -> BTreeSet<(String, i32)> {
        self.train.iter().map(LabelRecord::key).collect()
    }

    pub fn valid_keys(&self) -> BTreeSet<(String, i32)> {
        self.valid.iter().map(LabelRecord::key).collect()
    }

    fn ensure_non_empty(self) -> Result<Self> {
        if self.train.is_empty() || self.valid.is_empty() {
            return Err(Error::EmptySplit(format!(
                "{} split has {} train and {} valid records",
                self.strategy,
                self.train.len(),
                self.valid.len()
            )));
        }
        Ok(self)
    }
}

fn within(year: i32, (lo, hi): (i32, i32)) -> bool {
    (lo..=hi).contains(&year)
}

/// Holds out a seeded 20% of each subnational country's units, all years of a
/// unit together. National-only records always train.
pub fn split_spatial(labels: &LabelSet, seed: u64) -> Result<SplitPlan> {
    let mut units: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in labels.subnational() {
        units.entry(&r.country_iso3).or_default().insert(&r.unit_id);
    }
    if units.is_empty() {
        return Err(Error::EmptySplit(
            "spatial split needs subnational labels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held_out = BTreeSet::new();
    let mut flagged = Vec::new();
    for (country, set) in &units {
        let mut ids: Vec<&str> = set.iter().copied().collect();
        ids.shuffle(&mut rng);
        let n_valid = ((SPATIAL_VALID_SHARE * ids.len() as f64).round() as usize).max(1);
        if ids.len() < MIN_SPATIAL_UNITS {
            log::warn!(
                "country {country} has {} subnational units; holding out {n_valid}",
                ids.len()
            );
            flagged.push(country.to_string());
        }
        held_out.extend(ids.into_iter().take(n_valid));
    }
    let (valid, train) = labels
        .records
        .iter()
        .cloned()
        .partition(|r| r.admin_level > 0 && held_out.contains(r.unit_id.as_str()));
    SplitPlan {
        strategy: Strategy::Spatial,
        seed,
        train,
        valid,
        flagged,
    }
    .ensure_non_empty()
}

/// Splits all records by year interval.
pub fn split_temporal(labels: &LabelSet, direction: Direction) -> Result<SplitPlan> {
    let (strategy, train_years, valid_years) = match direction {
        Direction::Forward => (Strategy::TimeForward, FORWARD_TRAIN, FORWARD_VALID),
        Direction::Backward => (Strategy::TimeBackward, BACKWARD_TRAIN, BACKWARD_VALID),
    };
    let train = labels
        .records
        .iter()
        .filter(|r| within(r.year, train_years))
        .cloned()
        .collect();
    let valid = labels
        .records
        .iter()
        .filter(|r| within(r.year, valid_years))
        .cloned()
        .collect();
    SplitPlan {
        strategy,
        seed: 0,
        train,
        valid,
        flagged: Vec::new(),
    }
    .ensure_non_empty()
}

/// Subnational countries of `region`.
pub fn region_subnational_countries<'a>(labels: &'a LabelSet, region: &str) -> BTreeSet<&'a str> {
    let regions = labels.country_regions();
    labels
        .provenance
        .iter()
        .filter(|(c, p)| {
            **p == Provenance::Subnational && regions.get(c.as_str()).copied() == Some(region)
        })
        .map(|(c, _)| c.as_str())
        .collect()
}

/// Regions holding at least one subnational country.
pub fn multiscale_regions(labels: &LabelSet) -> Vec<String> {
    let regions = labels.country_regions();
    labels
        .subnational_countries()
        .into_iter()
        .filter_map(|c| regions.get(c).map(|r| r.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Replaces the subnational labels of `region`'s countries with their national
/// records for training and validates on the replaced labels.
pub fn split_multiscale(labels: &LabelSet, region: &str) -> Result<SplitPlan> {
    let countries = region_subnational_countries(labels, region);
    if countries.is_empty() {
        return Err(Error::EmptySplit(format!(
            "region {region} has no subnational country"
        )));
    }
    let swapped =
        |r: &LabelRecord| r.admin_level > 0 && countries.contains(r.country_iso3.as_str());
    let mut train: Vec<LabelRecord> = labels
        .records
        .iter()
        .filter(|r| !swapped(r))
        .cloned()
        .collect();
    train.extend(
        labels
            .withheld_national
            .iter()
            .filter(|r| countries.contains(r.country_iso3.as_str()))
            .cloned(),
    );
    let valid = labels
        .records
        .iter()
        .filter(|r| swapped(r))
        .cloned()
        .collect();
    SplitPlan {
        strategy: Strategy::Multiscale {
            region: region.to_string(),
        },
        seed: 0,
        train,
        valid,
        flagged: Vec::new(),
    }
    .ensure_non_empty()
}

/// Plans for the requested strategies; multiscale expands to each region in
/// `regions`, or to every eligible region when `regions` is empty.
pub fn plan_all(
    labels: &LabelSet,
    kinds: &[StrategyKind],
    regions: &[String],
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    let mut plans = Vec::new();
    for kind in kinds {
        match kind {
            StrategyKind::Spatial => plans.push(split_spatial(labels, seed)?),
            StrategyKind::TimeForward => plans.push(split_temporal(labels, Direction::Forward)?),
            StrategyKind::TimeBackward => plans.push(split_temporal(labels, Direction::Backward)?),
            StrategyKind::Multiscale => {
                let regions = if regions.is_empty() {
                    multiscale_regions(labels)
                } else {
                    regions.to_vec()
                };
                for r in regions {
                    plans.push(split_multiscale(labels, &r)?);
                }
            }
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryResidual {
    pub n: usize,
    pub mean_residual: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub strategy: String,
    pub region: String,
    pub rmse: f64,
    pub n_train: usize,
    pub n_valid: usize,
    #[serde(skip)]
    pub by_country: BTreeMap<String, CountryResidual>,
}

pub fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Fits on the train side and scores the valid side on the response scale.
pub fn evaluate(
    spec: &ModelSpec,
    plan: &SplitPlan,
    features: &[UnitFeatures],
    options: &FitOptions,
) -> Result<ValidationReport> {
    let train = join(&plan.train, features)?;
    let valid = join(&plan.valid, features)?;
    let model = fit_rows(spec, &train, options)?;
    let pred = model.predict_rows(&valid);
    let residuals: Vec<f64> = valid.iter().zip(&pred).map(|(r, p)| r.y - p.mu).collect();
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (row, res) in valid.iter().zip(&residuals) {
        grouped
            .entry(row.country_iso3.clone())
            .or_default()
            .push(*res);
    }
    let by_country = grouped
        .into_iter()
        .map(|(c, r)| {
            let summary = CountryResidual {
                n: r.len(),
                mean_residual: r.iter().sum::<f64>() / r.len() as f64,
                rmse: rmse(&r),
            };
            (c, summary)
        })
        .collect();
    Ok(ValidationReport {
        strategy: plan.strategy.name().to_string(),
        region: plan.strategy.region().to_string(),
        rmse: rmse(&residuals),
        n_train: train.len(),
        n_valid: valid.len(),
        by_country,
    })
}

/// Evaluates plans concurrently; reports come back in plan order.
pub fn evaluate_all(
    spec: &ModelSpec,
    plans: &[SplitPlan],
    features: &[UnitFeatures],
    options: &FitOptions,
) -> Result<Vec<ValidationReport>> {
    plans
        .par_iter()
        .map(|p| evaluate(spec, p, features, options))
        .collect()
}

pub fn write_reports(reports: &[ValidationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
