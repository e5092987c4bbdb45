mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{info, NODATA};
use epwa::ingest::{
    build_unit_features, features_to_csv, merge_labels, read_features, read_labels, write_labels,
    FeatureLayers, LabelRecord, LabelSet, Provenance,
};
use epwa::raster::{GridSpec, Raster, ZoneMap};
use epwa::synthetic::split_fixture;
use proptest::prelude::*;

fn record(unit: &str, country: &str, level: u8, year: i32, epwa: f64) -> LabelRecord {
    LabelRecord {
        unit_id: unit.into(),
        country_iso3: country.into(),
        region_code: "R".into(),
        admin_level: level,
        year,
        epwa,
    }
}

fn keys(records: &[LabelRecord]) -> BTreeSet<(String, i32)> {
    records.iter().map(LabelRecord::key).collect()
}

/// Subnational records, plus national records of countries that have none.
fn merge_oracle(national: &[LabelRecord], sub: &[LabelRecord]) -> BTreeSet<(String, i32)> {
    let covered: BTreeSet<&str> = sub.iter().map(|r| r.country_iso3.as_str()).collect();
    national
        .iter()
        .filter(|r| !covered.contains(r.country_iso3.as_str()))
        .chain(sub)
        .map(LabelRecord::key)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_matches_set_oracle(
        nat in prop::collection::btree_set((0usize..6, 2000i32..2006), 0..20),
        sub in prop::collection::btree_set((0usize..6, 0usize..3, 2000i32..2006), 0..30),
    ) {
        let national: Vec<_> = nat.iter().map(|&(c, y)| {
            let iso = format!("C{c}");
            record(&iso, &iso, 0, y, 0.3)
        }).collect();
        let subnational: Vec<_> = sub.iter().map(|&(c, u, y)| {
            record(&format!("C{c}_{u}"), &format!("C{c}"), 1, y, 0.4)
        }).collect();
        let merged = merge_labels(&national, &subnational).unwrap();
        prop_assert_eq!(keys(&merged.records), merge_oracle(&national, &subnational));

        let all: BTreeSet<_> = keys(&national).union(&keys(&subnational)).cloned().collect();
        let used: BTreeSet<_> = keys(&merged.records).union(&keys(&merged.withheld_national)).cloned().collect();
        prop_assert_eq!(all, used);
        prop_assert!(keys(&merged.records).is_disjoint(&keys(&merged.withheld_national)));

        for (country, p) in &merged.provenance {
            let has_sub = subnational.iter().any(|r| &r.country_iso3 == country);
            prop_assert_eq!(*p == Provenance::Subnational, has_sub);
        }
    }
}

#[test]
fn merge_rejects_bad_records() {
    let ok = record("AAA", "AAA", 0, 2005, 0.2);
    let cases = [
        record("AAA", "AAA", 0, 2005, 1.2),
        record("AAA", "AAA", 0, 1990, 0.2),
        record("AAA_1", "AAA", 0, 2005, 0.2),
        record("AAA", "AAA", 3, 2005, 0.2),
    ];
    for bad in cases {
        assert!(
            merge_labels(std::slice::from_ref(&bad), &[]).is_err(),
            "{bad:?}"
        );
    }
    assert!(merge_labels(&[ok.clone(), ok.clone()], &[]).is_err());
    assert!(merge_labels(&[], std::slice::from_ref(&ok)).is_err());
    assert!(merge_labels(&[record("AAA_1", "AAA", 1, 2005, 0.2)], &[]).is_err());
}

#[test]
fn label_csv_round_trip() {
    let panel = split_fixture(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    write_labels(&panel.subnational, &path).unwrap();
    assert_eq!(read_labels(&path).unwrap(), panel.subnational);
    let set = LabelSet::from_records(&[panel.national.clone(), panel.subnational.clone()].concat())
        .unwrap();
    assert_eq!(
        set,
        merge_labels(&panel.national, &panel.subnational).unwrap()
    );
}

#[test]
fn unit_features_match_hand_computation() {
    // Two units on a 2x3 grid; the last cell belongs to neither.
    let g = GridSpec::from_origin(0.0, 0.0, 1.0, 2, 3, NODATA).unwrap();
    let legend = BTreeMap::from([(1, info("A1", "AAA", "R")), (2, info("A2", "AAA", "R"))]);
    let zones = ZoneMap::new(
        g,
        vec![Some(1), Some(1), Some(2), Some(2), Some(2), None],
        legend,
    )
    .unwrap();
    let r = |v: Vec<f64>| Raster::new(g, v, "v", 2010, "observed").unwrap();
    let rural = r(vec![10.0, 30.0, 5.0, 0.0, NODATA, 99.0]);
    let total = r(vec![20.0, 40.0, 10.0, 10.0, 30.0, 99.0]);
    let gdp = r(vec![100.0, 300.0, 7.0, 9.0, 8.0, 1.0]);
    let crop = r(vec![0.2, 0.4, 0.7, 0.1, NODATA, 0.0]);
    let pasture = r(vec![0.1, 0.1, 0.6, 0.0, 0.5, 0.0]);
    let area = r(vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
    let layers = FeatureLayers {
        rural: &rural,
        total: &total,
        gdp_pc: &gdp,
        cropland: &crop,
        pasture: &pasture,
        cell_area: &area,
    };
    let built = build_unit_features(&layers, &zones, 2010).unwrap();
    assert!(built.skipped.is_empty());
    let by_unit: BTreeMap<_, _> = built
        .features
        .iter()
        .map(|f| (f.unit_id.as_str(), f))
        .collect();

    let a1 = by_unit["A1"];
    assert!((a1.ln_rural_prop - (40.0f64 / 60.0).ln()).abs() < 1e-12);
    assert!((a1.ln_pop_density - (60.0f64 / 4.0).ln()).abs() < 1e-12);
    assert!((a1.ln_gdp_median - 200.0f64.ln()).abs() < 1e-12);
    assert!((a1.ln_agland - 0.4f64.ln()).abs() < 1e-12);

    // Combined land is capped at 1 and missing where cropland is.
    let a2 = by_unit["A2"];
    assert!((a2.ln_rural_prop - (5.0f64 / 50.0).ln()).abs() < 1e-12);
    assert!((a2.ln_pop_density - (50.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((a2.ln_gdp_median - 8.0f64.ln()).abs() < 1e-12);
    assert!((a2.ln_agland - 0.55f64.ln()).abs() < 1e-12);
    assert_eq!(a2.year, 2010);
}

#[test]
fn unit_without_population_is_skipped() {
    let g = GridSpec::from_origin(0.0, 0.0, 1.0, 1, 2, NODATA).unwrap();
    let legend = BTreeMap::from([(1, info("A1", "AAA", "R")), (2, info("A2", "AAA", "R"))]);
    let zones = ZoneMap::new(g, vec![Some(1), Some(2)], legend).unwrap();
    let r = |v: Vec<f64>| Raster::new(g, v, "v", 2010, "observed").unwrap();
    let ones = r(vec![1.0, 1.0]);
    let total = r(vec![5.0, 0.0]);
    let layers = FeatureLayers {
        rural: &ones,
        total: &total,
        gdp_pc: &ones,
        cropland: &ones,
        pasture: &ones,
        cell_area: &ones,
    };
    let built = build_unit_features(&layers, &zones, 2010).unwrap();
    assert_eq!(built.skipped, vec!["A2".to_string()]);
    assert_eq!(built.features.len(), 1);
}

#[test]
fn feature_csv_round_trip() {
    let panel = split_fixture(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    std::fs::write(&path, features_to_csv(&panel.features).unwrap()).unwrap();
    assert_eq!(read_features(&path).unwrap(), panel.features);
}
