use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spec::{Grouping, ModelSpec, Term};
use crate::basis::{
    build_random_intercept, build_tensor2, build_univariate, BasisMeta, RandomInterceptBasis,
    TensorBasis, UnivariateBasis,
};
use crate::error::{Error, Result};
use crate::ingest::{squeeze_response, Covariate, Covariates, LabelRecord, UnitFeatures};

/// A label joined to its features, with the response squeezed into (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub unit_id: String,
    pub country_iso3: String,
    pub region_code: String,
    pub year: i32,
    pub x: Covariates,
    pub y: f64,
}

impl ModelRow {
    pub fn group(&self, grouping: Grouping) -> &str {
        match grouping {
            Grouping::Country => &self.country_iso3,
            Grouping::Region => &self.region_code,
        }
    }
}

/// Joins labels to feature rows on `(unit_id, year)`.
pub fn join<'a>(
    labels: impl IntoIterator<Item = &'a LabelRecord>,
    features: &[UnitFeatures],
) -> Result<Vec<ModelRow>> {
    let index: BTreeMap<(&str, i32), &UnitFeatures> = features
        .iter()
        .map(|f| ((f.unit_id.as_str(), f.year), f))
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for l in labels {
        match index.get(&(l.unit_id.as_str(), l.year)) {
            Some(f) => {
                let x = f.covariates();
                if x.0.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain {
                        what: format!("non-finite feature for {}@{}", l.unit_id, l.year),
                        value: f64::NAN,
                    });
                }
                rows.push(ModelRow {
                    unit_id: l.unit_id.clone(),
                    country_iso3: l.country_iso3.clone(),
                    region_code: l.region_code.clone(),
                    year: l.year,
                    x,
                    y: squeeze_response(l.epwa)?,
                });
            }
            None => missing.push((l.unit_id.clone(), l.year)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Join(missing));
    }
    Ok(rows)
}

/// Re-evaluable basis of one model term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermBasis {
    Linear {
        var: Covariate,
        mean: f64,
    },
    Smooth {
        var: Covariate,
        basis: UnivariateBasis,
    },
    Tensor {
        vars: (Covariate, Covariate),
        basis: TensorBasis,
    },
    RandomIntercept {
        grouping: Grouping,
        basis: RandomInterceptBasis,
    },
}

impl TermBasis {
    pub fn width(&self) -> usize {
        match self {
            TermBasis::Linear { .. } => 1,
            TermBasis::Smooth { basis, .. } => basis.width(),
            TermBasis::Tensor { basis, .. } => basis.width(),
            TermBasis::RandomIntercept { basis, .. } => basis.width(),
        }
    }

    pub fn penalties(&self) -> Vec<DMatrix<f64>> {
        match self {
            TermBasis::Linear { .. } => Vec::new(),
            TermBasis::Smooth { basis, .. } => vec![basis.penalty()],
            TermBasis::Tensor { basis, .. } => basis.penalties().into(),
            TermBasis::RandomIntercept { basis, .. } => vec![basis.penalty()],
        }
    }

    pub fn label(&self) -> String {
        match self {
            TermBasis::Linear { var, .. } => var.to_string(),
            TermBasis::Smooth { var, .. } => format!("s({var})"),
            TermBasis::Tensor { vars, .. } => format!("ti({},{})", vars.0, vars.1),
            TermBasis::RandomIntercept { grouping, .. } => {
                format!("re({grouping:?})").to_lowercase()
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, TermBasis::RandomIntercept { .. })
    }

    /// Columns at covariate rows; group labels feed random-intercept terms.
    pub fn evaluate<S: AsRef<str>>(&self, x: &[Covariates], groups: &[S]) -> DMatrix<f64> {
        let col = |c: Covariate| x.iter().map(|r| r.get(c)).collect::<Vec<f64>>();
        match self {
            TermBasis::Linear { var, mean } => {
                DMatrix::from_iterator(x.len(), 1, x.iter().map(|r| r.get(*var) - mean))
            }
            TermBasis::Smooth { var, basis } => basis.evaluate(&col(*var)),
            TermBasis::Tensor { vars, basis } => basis.evaluate(&col(vars.0), &col(vars.1)),
            TermBasis::RandomIntercept { basis, .. } => basis.evaluate(groups),
        }
    }
}

/// A term placed in the coefficient vector (index 0 is the intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub basis: TermBasis,
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct PenaltyComponent {
    pub term: usize,
    pub offset: usize,
    pub matrix: DMatrix<f64>,
}

/// Model matrix plus embedded penalty components.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub terms: Vec<FittedTerm>,
    pub penalties: Vec<PenaltyComponent>,
}

impl Design {
    pub fn build(spec: &ModelSpec, rows: &[ModelRow]) -> Result<Self> {
        spec.validate()?;
        let n = rows.len();
        let col = |c: Covariate| rows.iter().map(|r| r.x.get(c)).collect::<Vec<f64>>();
        let groups: Vec<&str> = rows.iter().map(|r| r.group(spec.grouping)).collect();

        let mut blocks: Vec<(TermBasis, DMatrix<f64>)> = Vec::new();
        for term in &spec.terms {
            let entry = match term {
                Term::Linear { var } => {
                    let v = col(*var);
                    let mean = v.iter().sum::<f64>() / n as f64;
                    let basis = TermBasis::Linear { var: *var, mean };
                    let design = DMatrix::from_iterator(n, 1, v.iter().map(|x| x - mean));
                    (basis, design)
                }
                Term::Smooth { var, rank } => {
                    let b = build_univariate(&col(*var), *rank)?;
                    let BasisMeta::Univariate(basis) = b.meta else {
                        unreachable!("univariate builder returns univariate meta")
                    };
                    (TermBasis::Smooth { var: *var, basis }, b.design)
                }
                Term::Tensor { vars, ranks } => {
                    let b = build_tensor2(&col(vars.0), &col(vars.1), *ranks)?;
                    let BasisMeta::Tensor2(basis) = b.meta else {
                        unreachable!("tensor builder returns tensor meta")
                    };
                    (TermBasis::Tensor { vars: *vars, basis }, b.design)
                }
                Term::RandomIntercept => {
                    let b = build_random_intercept(&groups)?;
                    let BasisMeta::RandomIntercept(basis) = b.meta else {
                        unreachable!("random intercept builder returns its meta")
                    };
                    (
                        TermBasis::RandomIntercept {
                            grouping: spec.grouping,
                            basis,
                        },
                        b.design,
                    )
                }
            };
            blocks.push(entry);
        }

        let p = 1 + blocks.iter().map(|(_, d)| d.ncols()).sum::<usize>();
        let mut x = DMatrix::from_element(n, p, 1.0);
        let mut terms = Vec::new();
        let mut penalties = Vec::new();
        let mut offset = 1;
        for (idx, (basis, design)) in blocks.into_iter().enumerate() {
            let width = design.ncols();
            x.view_mut((0, offset), (n, width)).copy_from(&design);
            for matrix in basis.penalties() {
                penalties.push(PenaltyComponent {
                    term: idx,
                    offset,
                    matrix,
                });
            }
            terms.push(FittedTerm {
                basis,
                offset,
                width,
            });
            offset += width;
        }
        Ok(Self {
            x,
            terms,
            penalties,
        })
    }

    /// `Σ λ_c S_c` embedded in a `p × p` matrix.
    pub fn penalty_matrix(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let p = self.x.ncols();
        let mut s = DMatrix::zeros(p, p);
        for (pc, lam) in self.penalties.iter().zip(lambdas) {
            let w = pc.matrix.nrows();
            let mut view = s.view_mut((pc.offset, pc.offset), (w, w));
            view += &pc.matrix * *lam;
        }
        s
    }
}

/// Distinct group levels of the rows.
pub fn levels(rows: &[ModelRow], grouping: Grouping) -> BTreeSet<&str> {
    rows.iter().map(|r| r.group(grouping)).collect()
}
