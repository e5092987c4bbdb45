//! Fits the four compared model structures to a panel with known truth and
//! reports fit statistics, recovered country offsets and a partial effect.
//!
//! cargo run --release --example fit_recovery

use epwa::gamm::{fit_rows, join, FitOptions, ModelSpec, Structure};
use epwa::ingest::{merge_labels, Covariate};
use epwa::synthetic::{recovery_benchmark, true_smooth};

fn main() -> epwa::Result<()> {
    let panel = recovery_benchmark(7);
    let labels = merge_labels(&panel.national, &panel.subnational)?;
    let rows = join(&labels.records, &panel.features)?;
    println!(
        "{} unit-years in {} countries",
        rows.len(),
        labels.countries().len()
    );

    let options = FitOptions {
        region_fallback: false,
        ..FitOptions::default()
    };
    let mut best = None;
    println!(
        "{:<26} {:>10} {:>8} {:>8} {:>7}",
        "structure", "AIC", "edf", "RMSE", "phi"
    );
    for s in Structure::COMPARED {
        let model = fit_rows(&ModelSpec::new(s), &rows, &options)?;
        let m = model.metrics(&rows)?;
        println!(
            "{:<26} {:>10.1} {:>8.2} {:>8.4} {:>7.1}",
            s.name(),
            m.aic,
            model.edf(),
            m.rmse,
            model.phi
        );
        if s == Structure::SmoothsRe {
            best = Some(model);
        }
    }

    let model = best.expect("smooths+RE is compared");
    for (country, d) in &model.country_effects {
        println!(
            "{country}: estimated offset {d:+.3}, true {:+.3}",
            panel.offsets[country]
        );
    }

    // The fitted smooth is centered, so compare shapes after centering the truth.
    let var = Covariate::PopDensity;
    let curve = model.export_partial_effects(var, 9)?;
    let truth: Vec<f64> = curve.iter().map(|r| true_smooth(var, r.x)).collect();
    let t_mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let f_mean = curve.iter().map(|r| r.effect).sum::<f64>() / curve.len() as f64;
    println!("{var}: x, fitted, truth (both centered on this grid)");
    for (r, t) in curve.iter().zip(&truth) {
        println!(
            "  {:>7.3} {:>8.3} {:>8.3}",
            r.x,
            r.effect - f_mean,
            t - t_mean
        );
    }
    Ok(())
}
