//! Writes a synthetic run directory and drives every subcommand through the
//! library entry point, as the `epwa` binary would.
//!
//! cargo run --release --example pipeline_cli -- /tmp/epwa-demo

use std::path::PathBuf;

use epwa::synthetic::write_fixture;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("epwa-pipeline"));
    let config = write_fixture(&dir, 11).expect("fixture");
    let config = config.to_string_lossy().into_owned();
    for cmd in ["features", "fit", "validate", "deploy"] {
        let code = epwa::cli::run(["epwa", cmd, "--config", &config]);
        println!("{cmd}: exit {code}");
        if code != 0 {
            std::process::exit(code);
        }
    }
    let manifest = std::fs::read_to_string(dir.join("out/manifest_deploy.json")).expect("manifest");
    println!("{manifest}");
}
