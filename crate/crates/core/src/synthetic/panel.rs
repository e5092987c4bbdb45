//! Labelled panels drawn from a known Beta GAMM.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::gamm::family::logistic;
use crate::ingest::{Covariate, Covariates, LabelRecord, UnitFeatures};

pub const TRUE_INTERCEPT: f64 = -1.2;
pub const TRUE_INTERACTION: f64 = 0.3;

/// Additive truth for one covariate on the link scale.
pub fn true_smooth(var: Covariate, x: f64) -> f64 {
    match var {
        Covariate::RuralProp => 0.8 * (3.0 * (x + 0.85)).sin(),
        Covariate::PopDensity => 0.15 * (x - 3.0).powi(2),
        Covariate::GdpMedian => -0.35 * (x - 8.5),
        Covariate::AgLand => 0.25 * (x + 1.3),
    }
}

/// The GDP × rural-share product interaction.
pub fn true_interaction(x: &Covariates) -> f64 {
    TRUE_INTERACTION * (x.get(Covariate::GdpMedian) - 8.5) * (x.get(Covariate::RuralProp) + 0.85)
}

/// Linear predictor of the generating model without any group offset.
pub fn true_eta(x: &Covariates) -> f64 {
    TRUE_INTERCEPT
        + Covariate::ALL
            .iter()
            .map(|c| true_smooth(*c, x.get(*c)))
            .sum::<f64>()
        + true_interaction(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountrySpec {
    pub iso3: String,
    pub region: String,
    pub offset: f64,
    pub n_units: usize,
    /// Whether unit-level records are published; national records always are.
    pub subnational: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub countries: Vec<CountrySpec>,
    pub first_year: i32,
    pub last_year: i32,
    pub phi: f64,
    pub seed: u64,
    /// Probability that a subnational unit-year is observed.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub national: Vec<LabelRecord>,
    pub subnational: Vec<LabelRecord>,
    /// Feature rows for every unit-year and every country-year.
    pub features: Vec<UnitFeatures>,
    /// Noise-free mean per `(unit_id, year)`.
    pub true_mu: BTreeMap<(String, i32), f64>,
    pub offsets: BTreeMap<String, f64>,
}

fn unit_features(unit_id: &str, c: &CountrySpec, year: i32, x: &Covariates) -> UnitFeatures {
    UnitFeatures {
        unit_id: unit_id.to_string(),
        country_iso3: c.iso3.clone(),
        region_code: c.region.clone(),
        year,
        ln_rural_prop: x.0[0],
        ln_pop_density: x.0[1],
        ln_gdp_median: x.0[2],
        ln_agland: x.0[3],
    }
}

fn draw_beta(rng: &mut ChaCha8Rng, mu: f64, phi: f64) -> f64 {
    Beta::new(mu * phi, (1.0 - mu) * phi)
        .expect("positive shape parameters")
        .sample(rng)
}

/// Draws a panel. National covariates are the unit means on the log scale and
/// the national mean EPWA is the unit average, so a model trained on national
/// rows sees a coarsened version of the unit-level relationship.
pub fn generate_panel(spec: &PanelSpec) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, 0.05).expect("valid normal");
    let mut panel = Panel {
        national: Vec::new(),
        subnational: Vec::new(),
        features: Vec::new(),
        true_mu: BTreeMap::new(),
        offsets: spec
            .countries
            .iter()
            .map(|c| (c.iso3.clone(), c.offset))
            .collect(),
    };
    for c in &spec.countries {
        let bases: Vec<[f64; 4]> = (0..c.n_units)
            .map(|_| {
                [
                    rng.random_range(-1.6..-0.1),
                    rng.random_range(0.5..5.5),
                    rng.random_range(6.5..10.5),
                    rng.random_range(-2.5..-0.1),
                ]
            })
            .collect();
        for year in spec.first_year..=spec.last_year {
            let t = f64::from(year - spec.first_year);
            let mut sum_x = [0.0; 4];
            let mut sum_mu = 0.0;
            for (u, b) in bases.iter().enumerate() {
                let x = Covariates([
                    (b[0] - 0.01 * t + jitter.sample(&mut rng)).min(0.0),
                    b[1] + 0.02 * t + jitter.sample(&mut rng),
                    b[2] + 0.03 * t + jitter.sample(&mut rng),
                    (b[3] + 0.4 * jitter.sample(&mut rng)).min(0.0),
                ]);
                let mu = logistic(true_eta(&x) + c.offset);
                let unit_id = format!("{}-{:03}", c.iso3, u + 1);
                for (s, v) in sum_x.iter_mut().zip(x.0) {
                    *s += v;
                }
                sum_mu += mu;
                let y = draw_beta(&mut rng, mu, spec.phi);
                let observed = rng.random::<f64>() < spec.coverage;
                if c.subnational && observed {
                    panel.subnational.push(LabelRecord {
                        unit_id: unit_id.clone(),
                        country_iso3: c.iso3.clone(),
                        region_code: c.region.clone(),
                        admin_level: 1,
                        year,
                        epwa: y,
                    });
                }
                panel.features.push(unit_features(&unit_id, c, year, &x));
                panel.true_mu.insert((unit_id, year), mu);
            }
            let n = c.n_units as f64;
            let x = Covariates(sum_x.map(|s| s / n));
            let mu = sum_mu / n;
            panel.national.push(LabelRecord {
                unit_id: c.iso3.clone(),
                country_iso3: c.iso3.clone(),
                region_code: c.region.clone(),
                admin_level: 0,
                year,
                epwa: draw_beta(&mut rng, mu, spec.phi),
            });
            panel.features.push(unit_features(&c.iso3, c, year, &x));
            panel.true_mu.insert((c.iso3.clone(), year), mu);
        }
    }
    panel
}

/// The recovery benchmark: three subnational countries with offsets
/// {-0.6, 0.1, 0.5}, 100 units over 20 years (2000 unit-years) and φ = 50.
pub fn recovery_benchmark(seed: u64) -> Panel {
    let countries = [
        ("AAA", "R1", -0.6, 34),
        ("BBB", "R1", 0.1, 33),
        ("CCC", "R2", 0.5, 33),
    ]
    .into_iter()
    .map(|(iso3, region, offset, n_units)| CountrySpec {
        iso3: iso3.into(),
        region: region.into(),
        offset,
        n_units,
        subnational: true,
    })
    .collect();
    generate_panel(&PanelSpec {
        countries,
        first_year: 2000,
        last_year: 2019,
        phi: 50.0,
        seed,
        coverage: 1.0,
    })
}

/// Forty countries in five regions over 2000–2020; eight publish unit-level
/// labels, three of them with fewer than five units.
pub fn split_fixture(seed: u64) -> Panel {
    const SUB_UNITS: [(usize, usize); 8] = [
        (0, 12),
        (1, 3),
        (2, 8),
        (8, 10),
        (9, 4),
        (16, 6),
        (17, 2),
        (24, 9),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let countries = (0..40)
        .map(|i| {
            let sub = SUB_UNITS.iter().find(|(c, _)| *c == i);
            CountrySpec {
                iso3: format!("C{i:02}"),
                region: format!("R{}", i / 8),
                offset: rng.random_range(-0.5..0.5),
                n_units: sub.map_or(4, |(_, n)| *n),
                subnational: sub.is_some(),
            }
        })
        .collect();
    generate_panel(&PanelSpec {
        countries,
        first_year: 2000,
        last_year: 2020,
        phi: 50.0,
        seed,
        coverage: 0.9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_shape() {
        let p = recovery_benchmark(1);
        assert_eq!(p.subnational.len(), 2000);
        assert_eq!(p.national.len(), 60);
        assert!(p.subnational.iter().all(|r| r.epwa > 0.0 && r.epwa < 1.0));
        assert_eq!(p, recovery_benchmark(1));
    }

    #[test]
    fn split_fixture_shape() {
        let p = split_fixture(3);
        assert_eq!(p.national.len(), 40 * 21);
        let subs: std::collections::BTreeSet<_> = p
            .subnational
            .iter()
            .map(|r| r.country_iso3.as_str())
            .collect();
        assert_eq!(subs.len(), 8);
    }
}
