//! Grid algebra on a small synthetic world: resampling, zonal statistics,
//! population interpolation and the two raster file formats.
//!
//! cargo run --example raster_ops

use epwa::raster::io::{read_ascii, read_gwg1, write_ascii, write_gwg1, DType};
use epwa::raster::{
    broadcast_zonal, interpolate_population, resample, zonal_stat, GridSpec, ResampleMethod,
    ZonalStat,
};
use epwa::synthetic::{World, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = World::generate(&WorldSpec::small(1))?;
    let g = world.grid;
    println!(
        "grid {}x{} cells of {}°, {} units",
        g.n_rows,
        g.n_cols,
        g.cell_size,
        world.zones.units().len()
    );

    let p2000 = world.total(2000, "observed");
    let p2010 = world.total(2010, "observed");
    let p2005 = interpolate_population(&p2000, &p2010, 2000, 2010, 2005)?;
    println!(
        "population 2000 {:.0}, 2005 {:.0}, 2010 {:.0}",
        p2000.valid_sum(),
        p2005.valid_sum(),
        p2010.valid_sum()
    );

    let coarse = GridSpec::new(g.lon_min, g.lon_max, g.lat_min, g.lat_max, 2.5, g.nodata)?;
    for method in [
        ResampleMethod::Nearest,
        ResampleMethod::BlockMean,
        ResampleMethod::AreaWeightedMean,
    ] {
        let r = resample(&world.cropland(), &coarse, method)?;
        let valid: Vec<f64> = r
            .values
            .iter()
            .copied()
            .filter(|v| *v != g.nodata)
            .collect();
        let mean = valid.iter().sum::<f64>() / valid.len() as f64;
        println!(
            "cropland at 2.5° via {method:?}: {} cells, mean {mean:.4}",
            valid.len()
        );
    }

    let gdp = world.gdp(2010, "observed");
    let medians = zonal_stat(&gdp, &world.zones, ZonalStat::Median)?;
    let sums = zonal_stat(&p2010, &world.zones, ZonalStat::Sum)?;
    for (unit, m) in medians.iter().take(5) {
        println!("{unit}: median GDP {m:.0}, population {:.0}", sums[unit]);
    }
    let painted = broadcast_zonal(&medians, &world.zones);

    let dir = std::env::temp_dir().join("epwa-raster-ops");
    std::fs::create_dir_all(&dir)?;
    write_gwg1(&painted, &dir.join("gdp_median.gwg"), DType::F32)?;
    write_ascii(&painted, &dir.join("gdp_median.asc"))?;
    let a = read_gwg1(&dir.join("gdp_median.gwg"))?;
    let b = read_ascii(&dir.join("gdp_median.asc"))?;
    println!(
        "wrote {} (GWG1 f32 and ESRI ASCII); ascii equal to source: {}",
        dir.display(),
        b.values == painted.values
    );
    println!(
        "f32 storage max abs error {:.2e}",
        a.values
            .iter()
            .zip(&painted.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    );
    Ok(())
}
