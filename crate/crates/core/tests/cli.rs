mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use epwa::cli::commands::build_features;
use epwa::cli::{run, Manifest, RunConfig, EXIT_INVALID, EXIT_IO, EXIT_OK};
use epwa::ingest::features_to_csv;
use epwa::raster::io::{read_gwg1, read_zone_map};
use epwa::raster::{resample, ResampleMethod, ZoneMap};
use epwa::synthetic::{write_fixture, FIXTURE_SCENARIOS};

fn epwa(config: &Path, out: &Path, cmd: &str) -> i32 {
    std::env::set_var("RUST_LOG", "error");
    run([
        "epwa",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
        cmd,
    ])
}

fn manifest(out: &Path, cmd: &str) -> Manifest {
    serde_json::from_slice(&std::fs::read(out.join(format!("manifest_{cmd}.json"))).unwrap())
        .unwrap()
}

/// Writes a copy of `config` with the given edits applied.
fn variant(config: &Path, name: &str, edit: impl FnOnce(&mut RunConfig)) -> std::path::PathBuf {
    let (mut cfg, _) = RunConfig::load(config).unwrap();
    edit(&mut cfg);
    let path = config.with_file_name(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

/// Region totals of a deployed raster, by direct accumulation over the
/// deployment grid's zone assignment.
fn region_sums(raster_path: &Path, zones: &ZoneMap) -> BTreeMap<String, f64> {
    let r = read_gwg1(raster_path).unwrap();
    let z = resample(&zones.to_raster(), &r.spec, ResampleMethod::Nearest).unwrap();
    let mut out = BTreeMap::new();
    for (idx, v) in r.values.iter().enumerate() {
        let id = z.values[idx];
        if id == z.spec.nodata || *v == r.spec.nodata {
            continue;
        }
        let region = zones.legend[&(id as u32)].region_code.clone();
        *out.entry(region).or_insert(0.0) += v;
    }
    out
}

#[derive(serde::Deserialize)]
struct SummaryRow {
    region: String,
    pop_baseline: f64,
    pop_2050: f64,
    pop_2100: f64,
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(&dir.path().join("run"), 3).unwrap();
    let config = variant(&fixture, "carry.toml", |c| c.deploy.carry_forward = true);
    let out = dir.path().join("out");
    let (cfg, _) = RunConfig::load(&config).unwrap();

    assert_eq!(epwa(&config, &out, "features"), EXIT_OK);
    let expected = features_to_csv(&build_features(&cfg).unwrap()).unwrap();
    assert_eq!(std::fs::read(out.join("features.csv")).unwrap(), expected);

    assert_eq!(epwa(&config, &out, "fit"), EXIT_OK);
    let model = std::fs::read(out.join("model.json")).unwrap();
    let first_fit = manifest(&out, "fit");
    assert!(out.join("fit_metrics.csv").exists());
    assert!(out.join("partial_effects/ln_gdp_median.csv").exists());
    assert_eq!(epwa(&config, &out, "fit"), EXIT_OK);
    assert_eq!(std::fs::read(out.join("model.json")).unwrap(), model);
    assert_eq!(manifest(&out, "fit"), first_fit);

    assert_eq!(epwa(&config, &out, "deploy"), EXIT_OK);
    let deployed = manifest(&out, "deploy");
    let names: Vec<&str> = deployed.outputs.iter().map(|e| e.path.as_str()).collect();
    for s in FIXTURE_SCENARIOS {
        assert!(names.contains(&format!("deploy/epwa_{s}_2050_corrected.gwg").as_str()));
        assert!(names.contains(&format!("deploy/workers_{s}_2100_uncorrected.asc").as_str()));
        assert!(names.contains(&format!("corrections_{s}.csv").as_str()));
    }
    for e in &deployed.outputs {
        let bytes = std::fs::read(out.join(&e.path)).unwrap();
        assert_eq!(bytes.len() as u64, e.bytes, "{}", e.path);
        assert_eq!(epwa::cli::sha256_hex(&bytes), e.sha256, "{}", e.path);
    }

    let zones = read_zone_map(&cfg.inputs.zones, &cfg.inputs.legend).unwrap();
    for tag in ["uncorrected", "corrected"] {
        let path = out.join(format!("summary_SSP2_{tag}.csv"));
        let rows: Vec<SummaryRow> = csv::Reader::from_path(&path)
            .unwrap()
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        let sums = |y: i32| {
            region_sums(
                &out.join(format!("deploy/workers_SSP2_{y}_{tag}.gwg")),
                &zones,
            )
        };
        let (base, mid, end) = (sums(2020), sums(2050), sums(2100));
        assert_eq!(rows.len(), base.len());
        for r in rows {
            for (got, want) in [
                (r.pop_baseline, base[&r.region]),
                (r.pop_2050, mid[&r.region]),
                (r.pop_2100, end[&r.region]),
            ] {
                assert!(
                    (got - want).abs() <= 1e-9 * want.abs(),
                    "{tag} {}: {got} vs {want}",
                    r.region
                );
            }
        }
    }

    // Without a reference series nothing corrected is written.
    let plain = variant(&config, "plain.toml", |c| c.deploy.reference = None);
    let out2 = dir.path().join("out2");
    std::fs::create_dir_all(&out2).unwrap();
    std::fs::copy(out.join("model.json"), out2.join("model.json")).unwrap();
    assert_eq!(epwa(&plain, &out2, "deploy"), EXIT_OK);
    let m = manifest(&out2, "deploy");
    assert!(m
        .outputs
        .iter()
        .all(|e| !e.path.contains("corrected.") || e.path.contains("uncorrected")));
    assert!(m
        .outputs
        .iter()
        .all(|e| !e.path.starts_with("corrections_")));
    assert!(m
        .outputs
        .iter()
        .any(|e| e.path == "summary_SSP1_uncorrected.csv"));
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_fixture(&run_dir, 4).unwrap();
    let out = dir.path().join("out");

    let bad = variant(&config, "bad_strategy.toml", |c| {
        c.validation.strategies = vec!["crossfit".into()]
    });
    assert_eq!(epwa(&bad, &out, "validate"), EXIT_INVALID);

    std::fs::remove_file(run_dir.join("rasters/gdp_2005.gwg")).unwrap();
    assert_eq!(epwa(&config, &out, "features"), EXIT_IO);

    std::fs::write(run_dir.join("typo.toml"), "sed = 1\n").unwrap();
    assert_eq!(
        epwa(&run_dir.join("typo.toml"), &out, "features"),
        EXIT_INVALID
    );
    assert_eq!(
        epwa(&run_dir.join("absent.toml"), &out, "features"),
        EXIT_IO
    );
    assert_eq!(run(["epwa", "frobnicate"]), EXIT_INVALID);
    assert_eq!(run(["epwa", "--help"]), EXIT_OK);
}

#[test]
fn printed_defaults_parse_back() {
    let output = Command::new(env!("CARGO_BIN_EXE_epwa"))
        .args(["config", "--print-defaults"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
}

#[test]
fn binary_reports_exit_codes() {
    let status = Command::new(env!("CARGO_BIN_EXE_epwa"))
        .args(["--config", "/nonexistent/config.toml", "fit"])
        .env("RUST_LOG", "off")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_IO));
}
