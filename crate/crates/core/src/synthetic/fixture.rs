use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::panel::true_eta;
use super::world::{label_world, world_features, LabelPlan, World, WorldSpec};
use crate::cli::config::{GridConfig, RunConfig};
use crate::deploy::EmployableTable;
use crate::error::{Error, Result};
use crate::gamm::family::logistic;
use crate::ingest::write_labels;
use crate::raster::io::{write_gwg1, write_legend, DType};
use crate::raster::Raster;

pub const FIXTURE_SCENARIOS: [&str; 2] = ["SSP1", "SSP2"];
pub const FIXTURE_DEPLOY_YEARS: [i32; 3] = [2020, 2050, 2100];
const ANCHORS: [i32; 3] = [2000, 2010, 2020];

fn put(raster: &Raster, dir: &Path, rel: &str) -> Result<()> {
    let p = dir.join(rel);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_gwg1(raster, &p, DType::F64)
}

/// Writes a complete small run directory (rasters, zones, labels, employable
/// ratios, a country reference series and `config.toml`) into `dir` and
/// returns the config path. Country K04 has no labels, so deployment
/// exercises the missing-effect path; K01 and K03 are national only.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let world = World::generate(&WorldSpec::small(seed))?;

    put(&world.zones.to_raster(), dir, "zones.gwg")?;
    write_legend(&world.zones.legend, &dir.join("legend.csv"))?;
    for year in ANCHORS {
        put(
            &world.rural(year, "observed"),
            dir,
            &format!("rasters/rural_{year}.gwg"),
        )?;
        put(
            &world.total(year, "observed"),
            dir,
            &format!("rasters/total_{year}.gwg"),
        )?;
    }
    for year in 2000..=2020 {
        put(
            &world.gdp(year, "observed"),
            dir,
            &format!("rasters/gdp_{year}.gwg"),
        )?;
    }
    put(&world.cropland(), dir, "rasters/cropland.gwg")?;
    put(&world.pasture(), dir, "rasters/pasture.gwg")?;
    for scenario in FIXTURE_SCENARIOS {
        for year in FIXTURE_DEPLOY_YEARS {
            put(
                &world.rural(year, scenario),
                dir,
                &format!("ssp/{scenario}/rural_{year}.gwg"),
            )?;
            put(
                &world.total(year, scenario),
                dir,
                &format!("ssp/{scenario}/total_{year}.gwg"),
            )?;
            put(
                &world.gdp(year, scenario),
                dir,
                &format!("ssp/{scenario}/gdp_{year}.gwg"),
            )?;
        }
    }

    let labels = label_world(
        &world,
        &LabelPlan {
            years: (2000..=2020).collect(),
            subnational: vec!["K00".into(), "K02".into()],
            national_only: vec!["K01".into(), "K03".into()],
            phi: 60.0,
            seed: seed ^ 0x5eed,
        },
    )?;
    write_labels(&labels.national, &dir.join("labels_national.csv"))?;
    write_labels(&labels.subnational, &dir.join("labels_subnational.csv"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut employable = EmployableTable::default();
    for unit in world.zones.units().keys() {
        let base = rng.random_range(0.45..0.7);
        employable.insert(unit, 2000, base)?;
        employable.insert(unit, 2050, (base + 0.05f64).min(1.0))?;
    }
    employable.write(&dir.join("employable.csv"))?;

    // Reference series: the truth at each country's own 2020 features,
    // nudged so the correction has something to do.
    let reference: BTreeMap<String, f64> = world_features(&world, 2020)?
        .into_iter()
        .filter(|f| f.unit_id == f.country_iso3)
        .map(|f| {
            let eta = true_eta(&f.covariates()) + labels.offsets[&f.country_iso3];
            let nudge = rng.random_range(-0.15..0.15);
            (f.unit_id, logistic(eta + nudge))
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("reference.csv"))?;
    w.write_record(["unit_id", "year", "epwa"])?;
    for (unit, epwa) in &reference {
        w.write_record([unit.as_str(), "2020", &epwa.to_string()])?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("reference.csv"), e))?;

    let g = world.grid;
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.features.years = (2000..=2020).collect();
    cfg.features.population_years = ANCHORS.to_vec();
    cfg.deploy.years = FIXTURE_DEPLOY_YEARS.to_vec();
    cfg.deploy.scenarios = FIXTURE_SCENARIOS.map(String::from).to_vec();
    // Twice the source cell size, so deployment resamples.
    cfg.deploy.grid = GridConfig {
        lon_min: g.lon_min,
        lon_max: g.lon_max,
        lat_min: g.lat_min,
        lat_max: g.lat_max,
        cell_size: 2.0 * g.cell_size,
        nodata: g.nodata,
    };
    cfg.deploy.reference = Some("reference.csv".into());
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
