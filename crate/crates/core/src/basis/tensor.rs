use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::UnivariateBasis;
use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Pure-interaction tensor product of two marginal smooths.
///
/// Columns are row-wise products of the centered marginal bases, then
/// residualized against `[1, B₁, B₂]` on the training data so the block
/// carries nothing an additive model could already express. Column
/// `a * (k₂ - 1) + b` is the product of marginal columns `a` and `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub first: UnivariateBasis,
    pub second: UnivariateBasis,
    /// `(1 + w₁ + w₂) × (w₁ w₂)` main-effect regression coefficients, row-major.
    pub main_coef: Vec<f64>,
    pub penalty_scales: [f64; 2],
}

fn row_tensor(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> DMatrix<f64> {
    let (w1, w2) = (b1.ncols(), b2.ncols());
    DMatrix::from_fn(b1.nrows(), w1 * w2, |i, c| {
        b1[(i, c / w2)] * b2[(i, c % w2)]
    })
}

fn main_effects(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b1.nrows();
    let (w1, w2) = (b1.ncols(), b2.ncols());
    DMatrix::from_fn(n, 1 + w1 + w2, |i, c| {
        if c == 0 {
            1.0
        } else if c <= w1 {
            b1[(i, c - 1)]
        } else {
            b2[(i, c - 1 - w1)]
        }
    })
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

impl TensorBasis {
    pub fn build(x1: &[f64], x2: &[f64], ranks: (usize, usize)) -> Result<(Self, DMatrix<f64>)> {
        if x1.len() != x2.len() {
            return Err(Error::Spec("tensor covariates differ in length".into()));
        }
        let (first, b1) = UnivariateBasis::build(x1, ranks.0)?;
        let (second, b2) = UnivariateBasis::build(x2, ranks.1)?;
        let t = row_tensor(&b1, &b2);
        let m = main_effects(&b1, &b2);
        let coef = spd_solve(&(m.transpose() * &m), &(m.transpose() * &t))?;
        let mut main_coef = Vec::with_capacity(coef.len());
        for i in 0..coef.nrows() {
            for j in 0..coef.ncols() {
                main_coef.push(coef[(i, j)]);
            }
        }
        let mut basis = TensorBasis {
            first,
            second,
            main_coef,
            penalty_scales: [1.0, 1.0],
        };
        let design = basis.evaluate(x1, x2);
        let [p1, p2] = basis.unscaled_penalties();
        basis.penalty_scales = [
            super::penalty_scale(&design, &p1),
            super::penalty_scale(&design, &p2),
        ];
        Ok((basis, design))
    }

    pub fn width(&self) -> usize {
        self.first.width() * self.second.width()
    }

    pub fn evaluate(&self, x1: &[f64], x2: &[f64]) -> DMatrix<f64> {
        let b1 = self.first.evaluate(x1);
        let b2 = self.second.evaluate(x2);
        let t = row_tensor(&b1, &b2);
        let m = main_effects(&b1, &b2);
        let (q, w) = (m.ncols(), t.ncols());
        // Row-by-row accumulation keeps each output row independent of the
        // batch it is evaluated in.
        let mut out = t;
        for i in 0..out.nrows() {
            for c in 0..w {
                let mut acc = 0.0;
                for r in 0..q {
                    acc += m[(i, r)] * self.main_coef[r * w + c];
                }
                out[(i, c)] -= acc;
            }
        }
        out
    }

    fn unscaled_penalties(&self) -> [DMatrix<f64>; 2] {
        let s1 = self.first.penalty();
        let s2 = self.second.penalty();
        let i1 = DMatrix::identity(s1.nrows(), s1.ncols());
        let i2 = DMatrix::identity(s2.nrows(), s2.ncols());
        [kron(&s1, &i2), kron(&i1, &s2)]
    }

    /// Kronecker-sum components `S₁ ⊗ I` and `I ⊗ S₂`, each with its own λ.
    pub fn penalties(&self) -> [DMatrix<f64>; 2] {
        let [p1, p2] = self.unscaled_penalties();
        [p1 * self.penalty_scales[0], p2 * self.penalty_scales[1]]
    }
}
