use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{DEFAULT_SMOOTH_RANK, DEFAULT_TENSOR_RANK};
use crate::error::{Error, Result};
use crate::ingest::Covariate;

/// Grouping factor of the random intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Country,
    Region,
}

/// The four nested model structures compared when selecting the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "smooths")]
    Smooths,
    #[serde(rename = "smooths+RE")]
    SmoothsRe,
    #[serde(rename = "smooths+RE+interactions")]
    SmoothsReInteractions,
    /// Hand-assembled term list.
    #[serde(rename = "custom")]
    Custom,
}

impl Structure {
    pub const COMPARED: [Structure; 4] = [
        Structure::Linear,
        Structure::Smooths,
        Structure::SmoothsRe,
        Structure::SmoothsReInteractions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Linear => "linear",
            Structure::Smooths => "smooths",
            Structure::SmoothsRe => "smooths+RE",
            Structure::SmoothsReInteractions => "smooths+RE+interactions",
            Structure::Custom => "custom",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Structure::Linear,
            Structure::Smooths,
            Structure::SmoothsRe,
            Structure::SmoothsReInteractions,
            Structure::Custom,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::Spec(format!("unknown model structure `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    Linear {
        var: Covariate,
    },
    Smooth {
        var: Covariate,
        rank: usize,
    },
    Tensor {
        vars: (Covariate, Covariate),
        ranks: (usize, usize),
    },
    RandomIntercept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    pub terms: Vec<Term>,
    pub grouping: Grouping,
}

/// The interacting pairs: GDP with rural share and with population density.
pub const INTERACTIONS: [(Covariate, Covariate); 2] = [
    (Covariate::GdpMedian, Covariate::RuralProp),
    (Covariate::GdpMedian, Covariate::PopDensity),
];

impl ModelSpec {
    pub fn new(structure: Structure) -> Self {
        Self::with_ranks(structure, DEFAULT_SMOOTH_RANK, DEFAULT_TENSOR_RANK)
    }

    pub fn with_ranks(structure: Structure, smooth_rank: usize, tensor_rank: usize) -> Self {
        let smooths = || {
            Covariate::ALL
                .into_iter()
                .map(|var| Term::Smooth {
                    var,
                    rank: smooth_rank,
                })
                .collect::<Vec<_>>()
        };
        let terms = match structure {
            Structure::Linear => Covariate::ALL
                .into_iter()
                .map(|var| Term::Linear { var })
                .collect(),
            Structure::Smooths => smooths(),
            Structure::SmoothsRe => {
                let mut t = smooths();
                t.push(Term::RandomIntercept);
                t
            }
            Structure::SmoothsReInteractions | Structure::Custom => {
                let mut t = smooths();
                t.extend(INTERACTIONS.iter().map(|&vars| Term::Tensor {
                    vars,
                    ranks: (tensor_rank, tensor_rank),
                }));
                t.push(Term::RandomIntercept);
                t
            }
        };
        Self {
            structure,
            terms,
            grouping: Grouping::Country,
        }
    }

    pub fn custom(terms: Vec<Term>) -> Self {
        Self {
            structure: Structure::Custom,
            terms,
            grouping: Grouping::Country,
        }
    }

    /// Intercept-only model.
    pub fn intercept_only() -> Self {
        Self::custom(Vec::new())
    }

    pub fn grouped_by(mut self, grouping: Grouping) -> Self {
        self.grouping = grouping;
        self
    }

    pub fn has_random_intercept(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t, Term::RandomIntercept))
    }

    /// Checks that the term list matches the structure flag.
    pub fn validate(&self) -> Result<()> {
        if self.structure != Structure::Custom {
            let expected = Self::new(self.structure);
            // Term kind and covariates, ignoring basis ranks.
            let kinds = |terms: &[Term]| -> Vec<(u8, Vec<Covariate>)> {
                terms
                    .iter()
                    .map(|t| match t {
                        Term::Linear { var } => (0, vec![*var]),
                        Term::Smooth { var, .. } => (1, vec![*var]),
                        Term::Tensor { vars, .. } => (2, vec![vars.0, vars.1]),
                        Term::RandomIntercept => (3, Vec::new()),
                    })
                    .collect()
            };
            if kinds(&self.terms) != kinds(&expected.terms) {
                return Err(Error::Spec(format!(
                    "term list does not match structure `{}`",
                    self.structure
                )));
            }
        }
        if self
            .terms
            .iter()
            .filter(|t| matches!(t, Term::RandomIntercept))
            .count()
            > 1
        {
            return Err(Error::Spec("at most one random intercept term".into()));
        }
        for t in &self.terms {
            match t {
                Term::Smooth { rank, .. } if *rank < 3 => {
                    return Err(Error::Spec(format!("smooth rank {rank} < 3")))
                }
                Term::Tensor { ranks, vars } if ranks.0 < 3 || ranks.1 < 3 || vars.0 == vars.1 => {
                    return Err(Error::Spec(format!(
                        "invalid tensor term {vars:?} {ranks:?}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
