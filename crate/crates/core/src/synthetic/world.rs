//! Synthetic raster worlds: a block grid of admin units grouped into
//! countries and regions, with population, GDP and land layers for any year
//! and scenario.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use super::panel::true_eta;
use crate::error::Result;
use crate::gamm::family::logistic;
use crate::ingest::{build_unit_features, FeatureLayers, LabelRecord, UnitFeatures};
use crate::raster::{GridSpec, Raster, ZoneInfo, ZoneMap};

pub const NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cell_size: f64,
    pub lon_min: f64,
    pub lat_min: f64,
    /// Cells per unit block, `(rows, cols)`.
    pub block: (usize, usize),
    /// Unit-block columns per country band.
    pub country_width: usize,
    pub countries_per_region: usize,
    /// Share of cells outside every unit.
    pub mask_share: f64,
    pub seed: u64,
}

impl WorldSpec {
    /// A 50×50 world of 50 units (10×5 blocks) in 5 countries and 3 regions:
    /// G0 = {K00, K01}, G1 = {K02, K03}, G2 = {K04}.
    pub fn small(seed: u64) -> Self {
        WorldSpec {
            n_rows: 50,
            n_cols: 50,
            cell_size: 0.5,
            lon_min: 10.0,
            lat_min: -10.0,
            block: (10, 5),
            country_width: 2,
            countries_per_region: 2,
            mask_share: 0.04,
            seed,
        }
    }
}

/// A generated world. Layers are deterministic functions of the spec, the
/// year and the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub grid: GridSpec,
    pub zones: ZoneMap,
    base_pop: Vec<f64>,
    base_rural: Vec<f64>,
    unit_gdp: BTreeMap<String, f64>,
    cell_gdp_jitter: Vec<f64>,
    cropland: Vec<f64>,
    pasture: Vec<f64>,
}

/// Annual growth rates `(population, GDP)` per scenario.
fn scenario_rates(scenario: &str) -> (f64, f64) {
    match scenario {
        "SSP1" => (0.002, 0.030),
        "SSP2" => (0.006, 0.022),
        "SSP3" => (0.011, 0.010),
        "SSP4" => (0.008, 0.015),
        "SSP5" => (0.003, 0.040),
        _ => (0.005, 0.020),
    }
}

impl World {
    pub fn generate(spec: &WorldSpec) -> Result<Self> {
        let grid = GridSpec::from_origin(
            spec.lon_min,
            spec.lat_min,
            spec.cell_size,
            spec.n_rows,
            spec.n_cols,
            NODATA,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (br, bc) = spec.block;
        let blocks_across = spec.n_cols.div_ceil(bc);
        let blocks_down = spec.n_rows.div_ceil(br);

        let mut legend = BTreeMap::new();
        let mut unit_gdp = BTreeMap::new();
        for by in 0..blocks_down {
            for bx in 0..blocks_across {
                let id = (by * blocks_across + bx) as u32 + 1;
                let country_idx = bx / spec.country_width;
                let country = format!("K{country_idx:02}");
                let region = format!("G{}", country_idx / spec.countries_per_region);
                let unit = format!("{country}-{by:02}{bx:02}");
                unit_gdp.insert(unit.clone(), rng.random_range(800.0..40_000.0));
                legend.insert(
                    id,
                    ZoneInfo {
                        unit_id: unit,
                        country_iso3: country,
                        region_code: region,
                    },
                );
            }
        }

        let n = grid.len();
        let mut zone_ids = Vec::with_capacity(n);
        let mut base_pop = Vec::with_capacity(n);
        let mut base_rural = Vec::with_capacity(n);
        let mut cell_gdp_jitter = Vec::with_capacity(n);
        let mut cropland = Vec::with_capacity(n);
        let mut pasture = Vec::with_capacity(n);
        for row in 0..spec.n_rows {
            for col in 0..spec.n_cols {
                let masked = rng.random::<f64>() < spec.mask_share;
                let id = ((row / br) * blocks_across + col / bc) as u32 + 1;
                zone_ids.push((!masked).then_some(id));
                let u: f64 = rng.random();
                // Heavy-tailed density with some empty and some sub-unit cells.
                let pop = if u < 0.05 {
                    0.0
                } else if u < 0.08 {
                    rng.random_range(0.1..0.9)
                } else {
                    rng.random_range(4.0..12.0f64).exp()
                };
                base_pop.push(pop);
                base_rural.push(rng.random_range(0.15..0.95));
                cell_gdp_jitter.push(rng.random_range(0.7..1.3));
                cropland.push(rng.random_range(0.0..0.6));
                pasture.push(rng.random_range(0.0..0.6));
            }
        }
        let zones = ZoneMap::new(grid, zone_ids, legend)?;
        Ok(World {
            spec: spec.clone(),
            grid,
            zones,
            base_pop,
            base_rural,
            unit_gdp,
            cell_gdp_jitter,
            cropland,
            pasture,
        })
    }

    fn raster(&self, values: Vec<f64>, variable: &str, year: i32, scenario: &str) -> Raster {
        Raster {
            spec: self.grid,
            values,
            variable: variable.into(),
            year,
            scenario: scenario.into(),
        }
    }

    /// Total population; growth starts in 2000 and depends on the scenario.
    pub fn total(&self, year: i32, scenario: &str) -> Raster {
        let (g, _) = scenario_rates(scenario);
        let f = (g * f64::from(year - 2000)).exp();
        let v = self.base_pop.iter().map(|p| p * f).collect();
        self.raster(v, "total", year, scenario)
    }

    /// Rural population; rural shares fall by 0.4% a year, floored at 5%.
    pub fn rural(&self, year: i32, scenario: &str) -> Raster {
        let total = self.total(year, scenario);
        let t = f64::from(year - 2000);
        let v = total
            .values
            .iter()
            .zip(&self.base_rural)
            .map(|(p, s)| p * (s - 0.004 * t).max(0.05))
            .collect();
        self.raster(v, "rural", year, scenario)
    }

    /// GDP per capita per cell: unit level times a fixed cell jitter.
    pub fn gdp(&self, year: i32, scenario: &str) -> Raster {
        let (_, g) = scenario_rates(scenario);
        let f = (g * f64::from(year - 2000)).exp();
        let v = (0..self.grid.len())
            .map(|idx| match self.zones.info(idx) {
                Some(info) => self.unit_gdp[&info.unit_id] * self.cell_gdp_jitter[idx] * f,
                None => NODATA,
            })
            .collect();
        self.raster(v, "gdp_pc", year, scenario)
    }

    pub fn cropland(&self) -> Raster {
        self.raster(self.cropland.clone(), "cropland", 0, "observed")
    }

    pub fn pasture(&self) -> Raster {
        self.raster(self.pasture.clone(), "pasture", 0, "observed")
    }

    pub fn countries(&self) -> Vec<String> {
        let mut c: Vec<String> = self
            .zones
            .legend
            .values()
            .map(|i| i.country_iso3.clone())
            .collect();
        c.sort();
        c.dedup();
        c
    }
}

/// Labels drawn from the known truth at the world's own unit features.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldLabels {
    pub national: Vec<LabelRecord>,
    pub subnational: Vec<LabelRecord>,
    /// Unit-level and country-level feature rows for every labelled year.
    pub features: Vec<UnitFeatures>,
    pub offsets: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelPlan {
    pub years: Vec<i32>,
    /// Countries publishing unit-level labels.
    pub subnational: Vec<String>,
    /// Countries publishing only national labels.
    pub national_only: Vec<String>,
    pub phi: f64,
    pub seed: u64,
}

/// Unit and country features for `year`, computed from the world's layers.
pub fn world_features(world: &World, year: i32) -> Result<Vec<UnitFeatures>> {
    let cropland = world.cropland();
    let pasture = world.pasture();
    let total = world.total(year, "observed");
    let rural = world.rural(year, "observed");
    let gdp = world.gdp(year, "observed");
    let area = Raster::cell_areas(world.grid);
    let layers = FeatureLayers {
        rural: &rural,
        total: &total,
        gdp_pc: &gdp,
        cropland: &cropland,
        pasture: &pasture,
        cell_area: &area,
    };
    let mut out = build_unit_features(&layers, &world.zones, year)?.features;
    out.extend(build_unit_features(&layers, &world.zones.by_country(), year)?.features);
    Ok(out)
}

pub fn label_world(world: &World, plan: &LabelPlan) -> Result<WorldLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let offsets: BTreeMap<String, f64> = world
        .countries()
        .into_iter()
        .map(|c| (c, rng.random_range(-0.5..0.5)))
        .collect();
    let mut labels = WorldLabels {
        national: Vec::new(),
        subnational: Vec::new(),
        features: Vec::new(),
        offsets,
    };
    for &year in &plan.years {
        let features = world_features(world, year)?;
        for f in &features {
            let national = f.unit_id == f.country_iso3;
            let wanted = if national {
                plan.national_only.contains(&f.country_iso3)
                    || plan.subnational.contains(&f.country_iso3)
            } else {
                plan.subnational.contains(&f.country_iso3)
            };
            if !wanted {
                continue;
            }
            let mu = logistic(true_eta(&f.covariates()) + labels.offsets[&f.country_iso3]);
            let y = Beta::new(mu * plan.phi, (1.0 - mu) * plan.phi)
                .expect("positive shape parameters")
                .sample(&mut rng);
            let record = LabelRecord {
                unit_id: f.unit_id.clone(),
                country_iso3: f.country_iso3.clone(),
                region_code: f.region_code.clone(),
                admin_level: if national { 0 } else { 2 },
                year,
                epwa: y,
            };
            if national {
                labels.national.push(record);
            } else {
                labels.subnational.push(record);
            }
        }
        labels.features.extend(features);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_world_layout() {
        let w = World::generate(&WorldSpec::small(3)).unwrap();
        assert_eq!(w.zones.units().len(), 50);
        assert_eq!(w.countries().len(), 5);
        let total = w.total(2020, "SSP2");
        let rural = w.rural(2020, "SSP2");
        assert!(rural.values.iter().zip(&total.values).all(|(r, t)| r <= t));
        assert_eq!(w, World::generate(&WorldSpec::small(3)).unwrap());
    }
}
