//! Spatial, temporal and multiscale validation on a 40-country panel.
//!
//! cargo run --release --example validation_splits

use epwa::gamm::{FitOptions, ModelSpec, Structure};
use epwa::ingest::merge_labels;
use epwa::synthetic::split_fixture;
use epwa::validation::{evaluate_all, plan_all, StrategyKind};

fn main() -> epwa::Result<()> {
    let panel = split_fixture(3);
    let labels = merge_labels(&panel.national, &panel.subnational)?;
    let kinds = [
        StrategyKind::Spatial,
        StrategyKind::TimeForward,
        StrategyKind::TimeBackward,
        StrategyKind::Multiscale,
    ];
    let plans = plan_all(&labels, &kinds, &[], 3)?;
    for p in plans.iter().filter(|p| !p.flagged.is_empty()) {
        println!("{}: few units in {}", p.strategy, p.flagged.join(", "));
    }
    let reports = evaluate_all(
        &ModelSpec::new(Structure::SmoothsRe),
        &plans,
        &panel.features,
        &FitOptions::default(),
    )?;
    println!(
        "{:<14} {:<6} {:>8} {:>7} {:>7}",
        "strategy", "region", "RMSE", "train", "valid"
    );
    for r in &reports {
        println!(
            "{:<14} {:<6} {:>8.4} {:>7} {:>7}",
            r.strategy, r.region, r.rmse, r.n_train, r.n_valid
        );
    }
    Ok(())
}
