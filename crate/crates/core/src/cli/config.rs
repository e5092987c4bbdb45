use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deploy::{DEPLOY_YEARS, SCENARIOS};
use crate::error::{Error, Result};
use crate::gamm::{Grouping, LambdaSelection, ModelSpec, Structure};
use crate::raster::io::DType;
use crate::raster::GridSpec;

/// Everything a run needs. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub inputs: InputsConfig,
    pub features: FeaturesConfig,
    pub model: ModelConfig,
    pub validation: ValidationConfig,
    pub deploy: DeployConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    pub national_labels: PathBuf,
    pub subnational_labels: PathBuf,
    /// Feature table; the output of `features` when empty.
    pub features: Option<PathBuf>,
    /// Admin-unit zone raster and its legend.
    pub zones: PathBuf,
    pub legend: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub years: Vec<i32>,
    /// Years with population rasters; other years are interpolated.
    pub population_years: Vec<i32>,
    /// Path templates; `{year}` is substituted.
    pub rural: String,
    pub total: String,
    pub gdp: String,
    pub cropland: String,
    pub pasture: String,
    /// Also emit one row per country for national labels.
    pub national_rows: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub structure: Structure,
    pub grouping: Grouping,
    pub smooth_rank: usize,
    pub tensor_rank: usize,
    pub region_fallback: bool,
    /// Structures fitted for the metrics table.
    pub compare: Vec<Structure>,
    pub lambda: LambdaSelection,
    pub partial_effect_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub strategies: Vec<String>,
    /// Multiscale regions; every eligible region when empty.
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Gwg,
    Asc,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Gwg => "gwg",
            OutputFormat::Asc => "asc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionLevel {
    Country,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub cell_size: f64,
    pub nodata: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::deploy_default();
        GridConfig {
            lon_min: g.lon_min,
            lon_max: g.lon_max,
            lat_min: g.lat_min,
            lat_max: g.lat_max,
            cell_size: g.cell_size,
            nodata: g.nodata,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.lon_min,
            self.lon_max,
            self.lat_min,
            self.lat_max,
            self.cell_size,
            self.nodata,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeployConfig {
    pub years: Vec<i32>,
    pub scenarios: Vec<String>,
    pub grid: GridConfig,
    /// Path templates; `{scenario}` and `{year}` are substituted.
    pub rural: String,
    pub total: String,
    pub gdp: String,
    /// Held constant across years.
    pub cropland: String,
    pub pasture: String,
    /// CSV `unit_id,year,ratio`.
    pub employable: PathBuf,
    /// CSV `unit_id,year,epwa`; corrected outputs are produced only with it.
    pub reference: Option<PathBuf>,
    pub correction_level: CorrectionLevel,
    /// Reuse the latest reference-year ξ for later years.
    pub carry_forward: bool,
    pub formats: Vec<OutputFormat>,
    pub dtype: DType,
    /// Model artifact; the output of `fit` when empty.
    pub model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            inputs: InputsConfig::default(),
            features: FeaturesConfig::default(),
            model: ModelConfig::default(),
            validation: ValidationConfig::default(),
            deploy: DeployConfig::default(),
        }
    }
}

impl Default for InputsConfig {
    fn default() -> Self {
        InputsConfig {
            national_labels: "labels_national.csv".into(),
            subnational_labels: "labels_subnational.csv".into(),
            features: None,
            zones: "zones.gwg".into(),
            legend: "legend.csv".into(),
        }
    }
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            years: (2000..=2020).collect(),
            population_years: vec![2000, 2010, 2020],
            rural: "rasters/rural_{year}.gwg".into(),
            total: "rasters/total_{year}.gwg".into(),
            gdp: "rasters/gdp_{year}.gwg".into(),
            cropland: "rasters/cropland.gwg".into(),
            pasture: "rasters/pasture.gwg".into(),
            national_rows: true,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            structure: Structure::SmoothsReInteractions,
            grouping: Grouping::Country,
            smooth_rank: crate::basis::DEFAULT_SMOOTH_RANK,
            tensor_rank: crate::basis::DEFAULT_TENSOR_RANK,
            region_fallback: true,
            compare: Structure::COMPARED.to_vec(),
            lambda: LambdaSelection::default(),
            partial_effect_points: 200,
        }
    }
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            strategies: ["spatial", "time_forward", "time_backward", "multiscale"]
                .map(String::from)
                .to_vec(),
            regions: Vec::new(),
        }
    }
}

impl Default for DeployConfig {
    fn default() -> Self {
        DeployConfig {
            years: DEPLOY_YEARS.to_vec(),
            scenarios: SCENARIOS.map(String::from).to_vec(),
            grid: GridConfig::default(),
            rural: "ssp/{scenario}/rural_{year}.gwg".into(),
            total: "ssp/{scenario}/total_{year}.gwg".into(),
            gdp: "ssp/{scenario}/gdp_{year}.gwg".into(),
            cropland: "rasters/cropland.gwg".into(),
            pasture: "rasters/pasture.gwg".into(),
            employable: "employable.csv".into(),
            reference: None,
            correction_level: CorrectionLevel::Country,
            carry_forward: false,
            formats: vec![OutputFormat::Gwg, OutputFormat::Asc],
            dtype: DType::F64,
            model: None,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, structure: Structure) -> ModelSpec {
        ModelSpec::with_ranks(structure, self.smooth_rank, self.tensor_rank)
            .grouped_by(self.grouping)
    }
}

pub fn fill_template(template: &str, year: i32, scenario: &str) -> String {
    template
        .replace("{year}", &year.to_string())
        .replace("{scenario}", scenario)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok((cfg, bytes))
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let join_str = |s: &mut String| {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).to_string_lossy().into_owned();
            }
        };
        join(&mut self.out);
        join(&mut self.inputs.national_labels);
        join(&mut self.inputs.subnational_labels);
        if let Some(p) = self.inputs.features.as_mut() {
            join(p);
        }
        join(&mut self.inputs.zones);
        join(&mut self.inputs.legend);
        for t in [
            &mut self.features.rural,
            &mut self.features.total,
            &mut self.features.gdp,
            &mut self.features.cropland,
            &mut self.features.pasture,
            &mut self.deploy.rural,
            &mut self.deploy.total,
            &mut self.deploy.gdp,
            &mut self.deploy.cropland,
            &mut self.deploy.pasture,
        ] {
            join_str(t);
        }
        join(&mut self.deploy.employable);
        if let Some(p) = self.deploy.reference.as_mut() {
            join(p);
        }
        if let Some(p) = self.deploy.model.as_mut() {
            join(p);
        }
    }

    pub fn features_path(&self) -> PathBuf {
        self.inputs
            .features
            .clone()
            .unwrap_or_else(|| self.out.join("features.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.deploy
            .model
            .clone()
            .unwrap_or_else(|| self.out.join("model.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let d = RunConfig::default();
        let back = RunConfig::from_toml(&d.to_toml()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[model]\nstructure = \"smooths+RE\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.structure, Structure::SmoothsRe);
        assert_eq!(cfg.deploy.years.len(), 11);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            RunConfig::from_toml("sede = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn templates() {
        assert_eq!(
            fill_template("ssp/{scenario}/t_{year}.gwg", 2050, "SSP2"),
            "ssp/SSP2/t_2050.gwg"
        );
    }
}
