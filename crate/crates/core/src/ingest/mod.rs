//! Label harmonization and per-unit feature assembly.

mod features;
mod labels;

pub use features::{
    build_unit_features, combined_agland, features_to_csv, floored_ln, read_features,
    squeeze_response, write_features, Covariate, Covariates, FeatureBuild, FeatureLayers,
    UnitFeatures, EPS_POS, EPS_RATIO, EPS_Y,
};
pub use labels::{
    merge_labels, read_labels, write_labels, LabelRecord, LabelSet, Provenance, FIRST_YEAR,
    LAST_YEAR,
};
