//! Beta-regression GAMM with a logit link: bases, penalized fitting,
//! smoothing-parameter selection and prediction.

pub mod design;
pub mod family;
pub mod fit;
pub mod model;
pub mod pirls;
pub mod spec;

pub use design::{join, Design, FittedTerm, ModelRow, TermBasis};
pub use family::{beta_loglik, beta_loglik_gradient};
pub use fit::{fit, fit_rows, FitOptions, LambdaSelection, MIN_ROWS};
pub use model::{
    response_metrics, write_partial_effects, EffectSource, FitDiagnostics, FitMetrics, FittedModel,
    PartialEffectRow, Prediction, MODEL_FORMAT, MODEL_VERSION,
};
pub use pirls::{penalized_gradient, penalized_loglik, pirls, PirlsFit};
pub use spec::{Grouping, ModelSpec, Structure, Term, INTERACTIONS};
