use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{fill_template, CorrectionLevel, OutputFormat, RunConfig};
use super::manifest::Outputs;
use crate::deploy::{
    apply_correction, build_stack, correction_factors, output_name, predict_grid, read_reference,
    region_totals, regional_summary, workers_raster, write_corrections, write_summary,
    CorrectionRow, CorrectionTable, EmployableTable, FallbackCounts, ReferenceTable, StackInputs,
    StackReport, SUMMARY_BASELINE,
};
use crate::error::{Error, Result};
use crate::gamm::{
    fit_rows, join, write_partial_effects, EffectSource, FitOptions, FittedModel, Structure,
};
use crate::ingest::{
    build_unit_features, features_to_csv, merge_labels, read_features, read_labels, Covariate,
    FeatureLayers, LabelSet, UnitFeatures,
};
use crate::raster::io::{read_raster, read_zone_map, write_ascii, write_gwg1};
use crate::raster::{interpolate_population, Raster, ZoneMap};
use crate::validation::{evaluate_all, plan_all, write_reports, StrategyKind, ValidationReport};

pub fn load_labels(cfg: &RunConfig) -> Result<LabelSet> {
    let national = read_labels(&cfg.inputs.national_labels)?;
    let subnational = read_labels(&cfg.inputs.subnational_labels)?;
    let set = merge_labels(&national, &subnational)?;
    log::info!(
        "labels: {} records from {} countries ({} subnational)",
        set.records.len(),
        set.countries().len(),
        set.subnational_countries().len()
    );
    Ok(set)
}

/// Loads each population anchor once and interpolates the years between.
struct PopulationSeries<'a> {
    template: &'a str,
    anchors: Vec<i32>,
    cache: BTreeMap<i32, Raster>,
}

impl<'a> PopulationSeries<'a> {
    fn new(template: &'a str, anchors: &[i32]) -> Self {
        let mut anchors = anchors.to_vec();
        anchors.sort_unstable();
        anchors.dedup();
        PopulationSeries {
            template,
            anchors,
            cache: BTreeMap::new(),
        }
    }

    fn anchor(&mut self, year: i32) -> Result<&Raster> {
        if !self.cache.contains_key(&year) {
            let path = fill_template(self.template, year, "observed");
            let r = read_raster(Path::new(&path))?;
            self.cache.insert(year, r);
        }
        Ok(&self.cache[&year])
    }

    fn at(&mut self, year: i32) -> Result<Raster> {
        if self.anchors.contains(&year) {
            return self.anchor(year).cloned();
        }
        let before = self.anchors.iter().rev().find(|&&a| a < year).copied();
        let after = self.anchors.iter().find(|&&a| a > year).copied();
        let (Some(t1), Some(t2)) = (before, after) else {
            return Err(Error::YearRange {
                year,
                t1: self.anchors.first().copied().unwrap_or(year),
                t2: self.anchors.last().copied().unwrap_or(year),
            });
        };
        let p1 = self.anchor(t1)?.clone();
        let p2 = self.anchor(t2)?;
        interpolate_population(&p1, p2, t1, t2, year)
    }
}

/// Unit features for every configured year, plus country rows when enabled.
pub fn build_features(cfg: &RunConfig) -> Result<Vec<UnitFeatures>> {
    let f = &cfg.features;
    let zones = read_zone_map(&cfg.inputs.zones, &cfg.inputs.legend)?;
    let countries = zones.by_country();
    let cropland = read_raster(Path::new(&f.cropland))?;
    let pasture = read_raster(Path::new(&f.pasture))?;
    let area = Raster::cell_areas(zones.spec);
    let mut rural = PopulationSeries::new(&f.rural, &f.population_years);
    let mut total = PopulationSeries::new(&f.total, &f.population_years);
    let mut years = f.years.clone();
    years.sort_unstable();
    years.dedup();

    let mut out = Vec::new();
    for year in years {
        let gdp = read_raster(Path::new(&fill_template(&f.gdp, year, "observed")))?;
        let r = rural.at(year)?;
        let t = total.at(year)?;
        let layers = FeatureLayers {
            rural: &r,
            total: &t,
            gdp_pc: &gdp,
            cropland: &cropland,
            pasture: &pasture,
            cell_area: &area,
        };
        let mut maps: Vec<&ZoneMap> = vec![&zones];
        if f.national_rows {
            maps.push(&countries);
        }
        for map in maps {
            let built = build_unit_features(&layers, map, year)?;
            for unit in &built.skipped {
                log::warn!("unit {unit} skipped in {year}: no population");
            }
            out.extend(built.features);
        }
    }
    log::info!("features: {} rows", out.len());
    Ok(out)
}

pub fn cmd_features(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let features = build_features(cfg)?;
    out.write("features.csv", &features_to_csv(&features)?)?;
    Ok(())
}

/// One row of the structure comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub structure: String,
    pub n: usize,
    pub edf: f64,
    pub phi: f64,
    pub gcv: f64,
    pub aic: f64,
    pub explained_variance: f64,
    pub r2: f64,
    pub rmse: f64,
}

pub fn fit_options(cfg: &RunConfig, region_fallback: bool) -> FitOptions {
    FitOptions {
        lambda: cfg.model.lambda.clone(),
        region_fallback,
    }
}

pub fn cmd_fit(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let labels = load_labels(cfg)?;
    let features = read_features(&cfg.features_path())?;
    let rows = join(&labels.records, &features)?;
    let chosen = cfg.model.structure;
    let mut structures = cfg.model.compare.clone();
    if !structures.contains(&chosen) {
        structures.push(chosen);
    }
    structures.sort();
    structures.dedup();

    let fits: Vec<(Structure, FittedModel)> = structures
        .par_iter()
        .map(|&s| {
            let spec = cfg.model.spec(s);
            let options = fit_options(cfg, s == chosen && cfg.model.region_fallback);
            fit_rows(&spec, &rows, &options).map(|m| (s, m))
        })
        .collect::<Result<_>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for (s, m) in &fits {
        let metrics = m.metrics(&rows)?;
        log::info!(
            "fit {s}: aic {:.3}, r2 {:.4}, edf {:.2}",
            metrics.aic,
            metrics.r2,
            m.edf()
        );
        w.serialize(MetricsRow {
            structure: s.name().to_string(),
            n: rows.len(),
            edf: m.edf(),
            phi: m.phi,
            gcv: metrics.gcv,
            aic: metrics.aic,
            explained_variance: metrics.explained_variance,
            r2: metrics.r2,
            rmse: metrics.rmse,
        })?;
    }
    let table = w
        .into_inner()
        .map_err(|e| Error::Config(format!("CSV buffer: {e}")))?;
    out.write("fit_metrics.csv", &table)?;

    let (_, model) = fits
        .iter()
        .find(|(s, _)| *s == chosen)
        .expect("chosen structure was fitted");
    out.write("model.json", &model.to_json()?)?;
    for var in Covariate::ALL {
        match model.export_partial_effects(var, cfg.model.partial_effect_points) {
            Ok(rows) => {
                let p = out.path(&format!("partial_effects/{}.csv", var.name()))?;
                write_partial_effects(&rows, &p)?;
                out.record(p);
            }
            Err(Error::UnknownVariable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

pub fn strategy_kinds(names: &[String]) -> Result<Vec<StrategyKind>> {
    names.iter().map(|n| StrategyKind::from_str(n)).collect()
}

pub fn run_validation(cfg: &RunConfig) -> Result<Vec<ValidationReport>> {
    let kinds = strategy_kinds(&cfg.validation.strategies)?;
    let labels = load_labels(cfg)?;
    let features = read_features(&cfg.features_path())?;
    let plans = plan_all(&labels, &kinds, &cfg.validation.regions, cfg.seed)?;
    for plan in &plans {
        if !plan.flagged.is_empty() {
            log::warn!(
                "{}: countries with too few units for a stable split: {}",
                plan.strategy.name(),
                plan.flagged.join(", ")
            );
        }
    }
    let spec = cfg.model.spec(cfg.model.structure);
    let reports = evaluate_all(
        &spec,
        &plans,
        &features,
        &fit_options(cfg, cfg.model.region_fallback),
    )?;
    for r in &reports {
        log::info!("validate {}/{}: rmse {:.5}", r.strategy, r.region, r.rmse);
    }
    Ok(reports)
}

pub fn cmd_validate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let reports = run_validation(cfg)?;
    let p = out.path("validation.csv")?;
    write_reports(&reports, &p)?;
    out.record(p);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionSummary {
    /// Year whose reference values produced ξ.
    pub source_year: i32,
    pub failed_units: Vec<String>,
    pub uncorrected_units: Vec<String>,
    pub clamped_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeployEntry {
    pub scenario: String,
    pub year: i32,
    pub stack: StackReport,
    pub fallback: FallbackCounts,
    pub fallback_countries: BTreeMap<String, EffectSource>,
    pub missing_employable: Vec<String>,
    pub correction: Option<CorrectionSummary>,
}

struct Shared<'a> {
    cfg: &'a RunConfig,
    model: &'a FittedModel,
    zones: &'a ZoneMap,
    cropland: &'a Raster,
    pasture: &'a Raster,
    employable: &'a EmployableTable,
    reference: Option<&'a ReferenceTable>,
}

fn write_raster(raster: &Raster, stem: &str, shared: &Shared<'_>, out: &mut Outputs) -> Result<()> {
    for fmt in &shared.cfg.deploy.formats {
        let p = out.path(&format!("deploy/{stem}.{}", fmt.extension()))?;
        match fmt {
            OutputFormat::Gwg => write_gwg1(raster, &p, shared.cfg.deploy.dtype)?,
            OutputFormat::Asc => write_ascii(raster, &p)?,
        }
        out.record(p);
    }
    Ok(())
}

fn expected_for(reference: &ReferenceTable, year: i32) -> BTreeMap<String, f64> {
    reference
        .iter()
        .filter_map(|(unit, years)| years.get(&year).map(|v| (unit.clone(), *v)))
        .collect()
}

/// Deploys one scenario over the configured years, in year order.
fn deploy_scenario(
    scenario: &str,
    shared: &Shared<'_>,
    root: &Path,
) -> Result<(Outputs, Vec<DeployEntry>)> {
    let cfg = shared.cfg;
    let grid = cfg.deploy.grid.spec()?;
    let mut out = Outputs::new(root);
    let mut entries = Vec::new();
    let mut corrections = Vec::new();
    let mut carried: Option<CorrectionTable> = None;
    let mut totals: BTreeMap<i32, BTreeMap<String, f64>> = BTreeMap::new();
    let mut corrected_totals: BTreeMap<i32, BTreeMap<String, f64>> = BTreeMap::new();
    let mut years = cfg.deploy.years.clone();
    years.sort_unstable();
    years.dedup();

    for year in years {
        let load = |t: &str| read_raster(Path::new(&fill_template(t, year, scenario)));
        let rural = load(&cfg.deploy.rural)?;
        let total = load(&cfg.deploy.total)?;
        let gdp = load(&cfg.deploy.gdp)?;
        let inputs = StackInputs {
            rural: &rural,
            total: &total,
            gdp_pc: &gdp,
            cropland: shared.cropland,
            pasture: shared.pasture,
            zones: shared.zones,
        };
        let (stack, stack_report) = build_stack(&inputs, &grid, year, scenario)?;
        let pred = predict_grid(shared.model, &stack);
        let workers = workers_raster(
            &pred.epwa,
            &stack.total,
            shared.employable,
            &stack.zones,
            year,
        )?;
        write_raster(
            &pred.epwa,
            &output_name("epwa", scenario, year, false),
            shared,
            &mut out,
        )?;
        write_raster(
            &workers.raster,
            &output_name("workers", scenario, year, false),
            shared,
            &mut out,
        )?;
        totals.insert(year, region_totals(&workers.raster, &stack.zones)?);

        let mut correction = None;
        if let Some(reference) = shared.reference {
            let czones = match cfg.deploy.correction_level {
                CorrectionLevel::Country => stack.zones.by_country(),
                CorrectionLevel::Unit => stack.zones.clone(),
            };
            let expected = expected_for(reference, year);
            let mut failed = Vec::new();
            let table = if !expected.is_empty() {
                let outcome =
                    correction_factors(&expected, &pred.epwa, &stack.total, &czones, year)?;
                failed = outcome.failed;
                carried = Some(outcome.table.clone());
                Some(outcome.table)
            } else if cfg.deploy.carry_forward {
                carried.clone()
            } else {
                None
            };
            if let Some(table) = table {
                let corrected = apply_correction(&pred.epwa, &table, &czones)?;
                let cworkers = workers_raster(
                    &corrected.raster,
                    &stack.total,
                    shared.employable,
                    &stack.zones,
                    year,
                )?;
                write_raster(
                    &corrected.raster,
                    &output_name("epwa", scenario, year, true),
                    shared,
                    &mut out,
                )?;
                write_raster(
                    &cworkers.raster,
                    &output_name("workers", scenario, year, true),
                    shared,
                    &mut out,
                )?;
                corrected_totals.insert(year, region_totals(&cworkers.raster, &stack.zones)?);
                for (unit, xi) in &table.xi {
                    corrections.push(CorrectionRow {
                        unit_id: unit.clone(),
                        year,
                        xi: *xi,
                        clamped_cells: corrected.clamped.get(unit).copied().unwrap_or(0),
                    });
                }
                let clamped_cells = corrected.clamped.values().sum();
                if clamped_cells > 0 {
                    log::warn!("{scenario}/{year}: {clamped_cells} corrected cells clamped");
                }
                correction = Some(CorrectionSummary {
                    source_year: table.year,
                    failed_units: failed,
                    uncorrected_units: corrected.uncorrected_units,
                    clamped_cells,
                });
            }
        }
        log::info!(
            "deploy {scenario}/{year}: {} cells, {} via region effect, {} without effect",
            pred.fallback.country
                + pred.fallback.region
                + pred.fallback.missing
                + pred.fallback.not_modeled,
            pred.fallback.region,
            pred.fallback.missing
        );
        entries.push(DeployEntry {
            scenario: scenario.to_string(),
            year,
            stack: stack_report,
            fallback: pred.fallback,
            fallback_countries: pred.fallback_countries,
            missing_employable: workers.missing_units,
            correction,
        });
    }

    if shared.reference.is_some() {
        let p = out.path(&format!("corrections_{scenario}.csv"))?;
        write_corrections(&corrections, &p)?;
        out.record(p);
    }
    for (tag, t) in [("uncorrected", &totals), ("corrected", &corrected_totals)] {
        if [SUMMARY_BASELINE, 2050, 2100]
            .iter()
            .all(|y| t.contains_key(y))
        {
            let p = out.path(&format!("summary_{scenario}_{tag}.csv"))?;
            write_summary(&regional_summary(t)?, &p)?;
            out.record(p);
        } else if tag == "uncorrected" {
            log::info!(
                "{scenario}: regional summary needs {SUMMARY_BASELINE}, 2050 and 2100; skipped"
            );
        }
    }
    Ok((out, entries))
}

pub fn cmd_deploy(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = FittedModel::load(&cfg.model_path())?;
    let zones = read_zone_map(&cfg.inputs.zones, &cfg.inputs.legend)?;
    let cropland = read_raster(Path::new(&cfg.deploy.cropland))?;
    let pasture = read_raster(Path::new(&cfg.deploy.pasture))?;
    let employable = EmployableTable::read(&cfg.deploy.employable)?;
    let reference = cfg
        .deploy
        .reference
        .as_deref()
        .map(read_reference)
        .transpose()?;
    let shared = Shared {
        cfg,
        model: &model,
        zones: &zones,
        cropland: &cropland,
        pasture: &pasture,
        employable: &employable,
        reference: reference.as_ref(),
    };
    let root = out.root().to_path_buf();
    let results: Vec<(Outputs, Vec<DeployEntry>)> = cfg
        .deploy
        .scenarios
        .par_iter()
        .map(|s| deploy_scenario(s, &shared, &root))
        .collect::<Result<_>>()?;
    let mut report = Vec::new();
    for (files, entries) in results {
        out.extend(files);
        report.extend(entries);
    }
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    out.write("deploy_report.json", &json)?;
    Ok(())
}
