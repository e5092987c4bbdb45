use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grids are not aligned: {0}")]
    Alignment(String),

    #[error("extents do not overlap")]
    Extent,

    #[error(
        "target cell size {target} is not an integer multiple of source cell size {source_size}"
    )]
    Ratio { target: f64, source_size: f64 },

    #[error("year {year} outside interpolation range [{t1}, {t2}]")]
    YearRange { year: i32, t1: i32, t2: i32 },

    #[error("value {value} outside domain: {what}")]
    Domain { what: String, value: f64 },

    #[error("duplicate (unit_id, year) pairs: {}", format_pairs(.0))]
    Duplicate(Vec<(String, i32)>),

    #[error("invalid label record: {0}")]
    Label(String),

    #[error("basis rank error: need at least {needed} distinct values, found {found}")]
    Rank { needed: usize, found: usize },

    #[error("grouping factor has a single level; random intercept is degenerate")]
    DegenerateGrouping,

    #[error("labels without a matching feature row: {}", format_pairs(.0))]
    Join(Vec<(String, i32)>),

    #[error("not enough rows to fit: {found} (need at least {needed})")]
    TooFewRows { found: usize, needed: usize },

    #[error(
        "fit did not converge after {iterations} iterations (last relative change {last_change:e})"
    )]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        last_coefficients: Vec<f64>,
        last_phi: f64,
    },

    #[error("linear algebra failure: {0}")]
    Numeric(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("response has zero variance; R² is undefined")]
    ZeroVariance,

    #[error("empty split side: {0}")]
    EmptySplit(String),

    #[error("missing input layer: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_pairs(pairs: &[(String, i32)]) -> String {
    let shown: Vec<String> = pairs
        .iter()
        .take(20)
        .map(|(u, y)| format!("{u}@{y}"))
        .collect();
    let mut s = shown.join(", ");
    if pairs.len() > 20 {
        s.push_str(&format!(" (+{} more)", pairs.len() - 20));
    }
    s
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_)
        )
    }
}
