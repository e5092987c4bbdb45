//! Cell-level deployment: stack the scenario layers on a coarser grid,
//! predict EPWA, count workers and correct toward a country reference.
//!
//! cargo run --release --example deploy_grid

use std::collections::BTreeMap;

use epwa::deploy::{
    apply_correction, build_stack, correction_factors, predict_grid, region_totals, workers_raster,
    EmployableTable, StackInputs,
};
use epwa::gamm::{fit, FitOptions, ModelSpec, Structure};
use epwa::ingest::merge_labels;
use epwa::raster::{zonal_stat, GridSpec, ZonalStat};
use epwa::synthetic::{label_world, LabelPlan, World, WorldSpec};

fn main() -> epwa::Result<()> {
    let world = World::generate(&WorldSpec::small(8))?;
    let labels = label_world(
        &world,
        &LabelPlan {
            years: (2000..=2020).collect(),
            subnational: vec!["K00".into()],
            national_only: vec!["K01".into(), "K02".into()],
            phi: 60.0,
            seed: 8,
        },
    )?;
    let set = merge_labels(&labels.national, &labels.subnational)?;
    let model = fit(
        &ModelSpec::new(Structure::SmoothsRe),
        &set,
        &labels.features,
        &FitOptions::default(),
    )?;

    let g = world.grid;
    let grid = GridSpec::new(
        g.lon_min,
        g.lon_max,
        g.lat_min,
        g.lat_max,
        2.0 * g.cell_size,
        g.nodata,
    )?;
    let mut employable = EmployableTable::default();
    for unit in world.zones.units().keys() {
        employable.insert(unit, 2000, 0.6)?;
    }

    for year in [2020, 2050] {
        let (rural, total, gdp) = (
            world.rural(year, "SSP2"),
            world.total(year, "SSP2"),
            world.gdp(year, "SSP2"),
        );
        let (crop, past) = (world.cropland(), world.pasture());
        let inputs = StackInputs {
            rural: &rural,
            total: &total,
            gdp_pc: &gdp,
            cropland: &crop,
            pasture: &past,
            zones: &world.zones,
        };
        let (stack, report) = build_stack(&inputs, &grid, year, "SSP2")?;
        let pred = predict_grid(&model, &stack);
        println!(
            "{year}: {} cells by own country effect, {} by region effect, {} without; {:.0} people zeroed",
            pred.fallback.country, pred.fallback.region, pred.fallback.missing, report.zeroed_population
        );
        for (c, source) in &pred.fallback_countries {
            println!("  {c} predicted via {source:?}");
        }

        // Reference: the prediction's own country means scaled by 0.9.
        let countries = stack.zones.by_country();
        let workers_like = |r: &epwa::raster::Raster| -> BTreeMap<String, f64> {
            let mut w = r.clone();
            for (v, n) in w.values.iter_mut().zip(&stack.total.values) {
                if *v != grid.nodata && *n != grid.nodata {
                    *v *= n;
                }
            }
            zonal_stat(&w, &countries, ZonalStat::Sum).unwrap_or_default()
        };
        let pop = zonal_stat(&stack.total, &countries, ZonalStat::Sum)?;
        let mass = workers_like(&pred.epwa);
        let expected: BTreeMap<String, f64> = mass
            .iter()
            .map(|(c, m)| (c.clone(), 0.9 * m / pop[c]))
            .collect();
        let table =
            correction_factors(&expected, &pred.epwa, &stack.total, &countries, year)?.table;
        let corrected = apply_correction(&pred.epwa, &table, &countries)?;
        for (c, xi) in &table.xi {
            println!("  {c}: ξ = {xi:.4}, {} clamped", corrected.clamped[c]);
        }

        let workers = workers_raster(
            &corrected.raster,
            &stack.total,
            &employable,
            &stack.zones,
            year,
        )?;
        for (region, n) in region_totals(&workers.raster, &stack.zones)? {
            println!("  region {region}: {n:.0} agricultural workers");
        }
    }
    Ok(())
}
