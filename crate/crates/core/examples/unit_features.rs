//! Per-unit predictors from raster layers, and the national/subnational
//! label merge they are joined to.
//!
//! cargo run --example unit_features

use epwa::gamm::join;
use epwa::ingest::{build_unit_features, merge_labels, FeatureLayers, Provenance};
use epwa::raster::Raster;
use epwa::synthetic::{label_world, LabelPlan, World, WorldSpec};

fn main() -> epwa::Result<()> {
    let world = World::generate(&WorldSpec::small(2))?;
    let (rural, total, gdp) = (
        world.rural(2010, "observed"),
        world.total(2010, "observed"),
        world.gdp(2010, "observed"),
    );
    let (crop, past) = (world.cropland(), world.pasture());
    let area = Raster::cell_areas(world.grid);
    let layers = FeatureLayers {
        rural: &rural,
        total: &total,
        gdp_pc: &gdp,
        cropland: &crop,
        pasture: &past,
        cell_area: &area,
    };
    let built = build_unit_features(&layers, &world.zones, 2010)?;
    println!(
        "{} unit feature rows, {} skipped",
        built.features.len(),
        built.skipped.len()
    );
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10}",
        "unit", "ln_rural", "ln_dens", "ln_gdp", "ln_agland"
    );
    for f in built.features.iter().take(6) {
        println!(
            "{:<8} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            f.unit_id, f.ln_rural_prop, f.ln_pop_density, f.ln_gdp_median, f.ln_agland
        );
    }

    let labels = label_world(
        &world,
        &LabelPlan {
            years: (2000..=2020).collect(),
            subnational: vec!["K00".into(), "K02".into()],
            national_only: vec!["K01".into()],
            phi: 60.0,
            seed: 2,
        },
    )?;
    let set = merge_labels(&labels.national, &labels.subnational)?;
    for (country, p) in &set.provenance {
        let n = set
            .records
            .iter()
            .filter(|r| &r.country_iso3 == country)
            .count();
        let tag = match p {
            Provenance::Subnational => "subnational",
            Provenance::NationalOnly => "national only",
        };
        println!("{country}: {n} training records ({tag})");
    }
    println!(
        "{} national records held back for multiscale validation",
        set.withheld_national.len()
    );
    let rows = join(&set.records, &labels.features)?;
    println!("{} model rows after joining labels to features", rows.len());
    Ok(())
}
