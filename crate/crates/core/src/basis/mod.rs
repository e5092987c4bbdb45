//! Penalized regression bases: univariate thin-plate smooths, pure-interaction
//! tensor products and random-intercept blocks.

mod tensor;
mod univariate;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tensor::TensorBasis;
pub use univariate::UnivariateBasis;

pub const DEFAULT_SMOOTH_RANK: usize = 10;
pub const DEFAULT_TENSOR_RANK: usize = 5;

/// One indicator column per grouping level, ridge-penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInterceptBasis {
    pub levels: Vec<String>,
}

impl RandomInterceptBasis {
    pub fn width(&self) -> usize {
        self.levels.len()
    }

    /// Indicator rows; unseen levels give an all-zero row.
    pub fn evaluate<S: AsRef<str>>(&self, groups: &[S]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(groups.len(), self.levels.len());
        for (i, g) in groups.iter().enumerate() {
            if let Ok(j) = self.levels.binary_search_by(|l| l.as_str().cmp(g.as_ref())) {
                out[(i, j)] = 1.0;
            }
        }
        out
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        DMatrix::identity(self.levels.len(), self.levels.len())
    }
}

/// What is needed to re-evaluate a block at new covariate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisMeta {
    Univariate(UnivariateBasis),
    Tensor2(TensorBasis),
    RandomIntercept(RandomInterceptBasis),
}

impl BasisMeta {
    pub fn width(&self) -> usize {
        match self {
            BasisMeta::Univariate(b) => b.width(),
            BasisMeta::Tensor2(b) => b.width(),
            BasisMeta::RandomIntercept(b) => b.width(),
        }
    }

    /// Penalty components, one smoothing parameter each.
    pub fn penalties(&self) -> Vec<DMatrix<f64>> {
        match self {
            BasisMeta::Univariate(b) => vec![b.penalty()],
            BasisMeta::Tensor2(b) => b.penalties().into(),
            BasisMeta::RandomIntercept(b) => vec![b.penalty()],
        }
    }
}

/// An evaluated basis with its penalty components.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub design: DMatrix<f64>,
    pub penalties: Vec<DMatrix<f64>>,
    pub meta: BasisMeta,
}

impl BasisBlock {
    /// Sum of the penalty components (unit smoothing parameters).
    pub fn total_penalty(&self) -> DMatrix<f64> {
        let w = self.design.ncols();
        self.penalties
            .iter()
            .fold(DMatrix::zeros(w, w), |acc, p| acc + p)
    }
}

/// Thin-plate smooth of rank `rank`; the design has `rank - 1` centered columns.
/// Scale that puts a penalty on the same footing as the columns it acts on:
/// squared Frobenius norm of the penalized design columns over the Frobenius
/// norm of the penalty. Makes λ comparable across terms.
pub(crate) fn penalty_scale(design: &DMatrix<f64>, penalty: &DMatrix<f64>) -> f64 {
    let x2: f64 = (0..design.ncols())
        .filter(|&j| penalty[(j, j)] > 0.0)
        .map(|j| design.column(j).norm_squared())
        .sum();
    x2 / penalty.norm()
}

pub fn build_univariate(x: &[f64], rank: usize) -> Result<BasisBlock> {
    let (basis, design) = UnivariateBasis::build(x, rank)?;
    Ok(BasisBlock {
        design,
        penalties: vec![basis.penalty()],
        meta: BasisMeta::Univariate(basis),
    })
}

/// Interaction-only tensor smooth with `(k₁ - 1)(k₂ - 1)` columns.
pub fn build_tensor2(x1: &[f64], x2: &[f64], ranks: (usize, usize)) -> Result<BasisBlock> {
    let (basis, design) = TensorBasis::build(x1, x2, ranks)?;
    Ok(BasisBlock {
        design,
        penalties: basis.penalties().into(),
        meta: BasisMeta::Tensor2(basis),
    })
}

/// Random intercepts as an identity-penalized indicator block.
pub fn build_random_intercept<S: AsRef<str>>(groups: &[S]) -> Result<BasisBlock> {
    let levels: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    if levels.len() < 2 {
        return Err(Error::DegenerateGrouping);
    }
    let basis = RandomInterceptBasis {
        levels: levels.into_iter().map(str::to_string).collect(),
    };
    Ok(BasisBlock {
        design: basis.evaluate(groups),
        penalties: vec![basis.penalty()],
        meta: BasisMeta::RandomIntercept(basis),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
        m.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
        m
    }

    fn lstsq_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let coef = x.clone().svd(true, true).solve(y, 1e-13).unwrap();
        x * coef
    }

    #[test]
    fn univariate_shape_and_centering() {
        let x = uniform(200, -2.0, 3.0, 1);
        let b = build_univariate(&x, 10).unwrap();
        assert_eq!(b.design.shape(), (200, 9));
        for j in 0..9 {
            assert!(b.design.column(j).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn univariate_penalty_is_psd_with_linear_null_space() {
        let x = uniform(300, 0.0, 10.0, 2);
        let b = build_univariate(&x, 12).unwrap();
        let s = &b.penalties[0];
        assert_eq!(s, &s.transpose());
        let ev = symmetric_eigenvalues(s);
        assert!(ev[0] >= -1e-10 * ev[ev.len() - 1]);
        let null = ev
            .iter()
            .filter(|e| e.abs() <= 1e-10 * ev[ev.len() - 1])
            .count();
        assert_eq!(null, 1);

        // The last column is the linear term.
        let mut coef = DVector::zeros(11);
        coef[10] = 3.7;
        assert!((coef.transpose() * s * &coef)[(0, 0)].abs() < 1e-10);
    }

    #[test]
    fn sine_projection_error_below_1e3() {
        let n = 2000;
        let x: Vec<f64> = (0..n)
            .map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64)
            .collect();
        let b = build_univariate(&x, 20).unwrap();
        let y = DVector::from_iterator(n, x.iter().map(|v| v.sin()));
        let fit = lstsq_fit(&with_intercept(&b.design), &y);
        let max_err = (fit - y).amax();
        assert!(max_err < 1e-3, "max error {max_err}");
    }

    #[test]
    fn too_few_distinct_values() {
        let x = vec![1.0, 2.0, 2.0, 3.0, 1.0];
        assert!(matches!(
            build_univariate(&x, 4),
            Err(Error::Rank {
                needed: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn re_evaluation_reproduces_training_rows_exactly() {
        let x1 = uniform(150, 0.0, 1.0, 3);
        let x2 = uniform(150, -5.0, 5.0, 4);
        let b = build_univariate(&x1, 8).unwrap();
        let BasisMeta::Univariate(u) = &b.meta else {
            unreachable!()
        };
        assert_eq!(u.evaluate(&x1), b.design);

        let t = build_tensor2(&x1, &x2, (5, 4)).unwrap();
        let BasisMeta::Tensor2(tb) = &t.meta else {
            unreachable!()
        };
        assert_eq!(tb.evaluate(&x1, &x2), t.design);
    }

    #[test]
    fn construction_is_deterministic() {
        let x = uniform(100, 0.0, 1.0, 5);
        let a = build_univariate(&x, 10).unwrap();
        let b = build_univariate(&x, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tensor_shape_and_main_effect_exclusion() {
        let x1 = uniform(400, 0.0, 2.0, 6);
        let x2 = uniform(400, -1.0, 1.0, 7);
        let t = build_tensor2(&x1, &x2, (5, 6)).unwrap();
        assert_eq!(t.design.shape(), (400, 20));
        assert_eq!(t.penalties.len(), 2);
        for s in &t.penalties {
            let ev = symmetric_eigenvalues(s);
            assert!(ev[0] >= -1e-10 * ev[ev.len() - 1]);
        }

        let f = DVector::from_vec(x1.clone());
        let proj = lstsq_fit(&t.design, &f);
        assert!(
            proj.norm() / f.norm() < 1e-8,
            "relative projection {}",
            proj.norm() / f.norm()
        );
    }

    #[test]
    fn additive_plus_tensor_fits_product_surface() {
        let x1 = uniform(1500, 0.0, 3.0, 8);
        let x2 = uniform(1500, 0.0, 3.0, 9);
        let m1 = build_univariate(&x1, 10).unwrap();
        let m2 = build_univariate(&x2, 10).unwrap();
        let t = build_tensor2(&x1, &x2, (10, 10)).unwrap();
        assert_eq!(t.design.ncols(), 81);
        let n = x1.len();
        let p = 1 + m1.design.ncols() + m2.design.ncols() + t.design.ncols();
        let mut x = DMatrix::from_element(n, p, 1.0);
        let mut at = 1;
        for block in [&m1.design, &m2.design, &t.design] {
            x.view_mut((0, at), (n, block.ncols())).copy_from(block);
            at += block.ncols();
        }
        let y = DVector::from_iterator(n, (0..n).map(|i| x1[i].sin() * x2[i].cos()));
        let resid = lstsq_fit(&x, &y) - &y;
        let rmse = (resid.norm_squared() / n as f64).sqrt();
        assert!(rmse < 1e-2, "rmse {rmse}");
    }

    #[test]
    fn random_intercept_design_and_penalty() {
        let g = ["b", "a", "c", "a", "b"];
        let b = build_random_intercept(&g).unwrap();
        assert_eq!(b.design.shape(), (5, 3));
        for i in 0..5 {
            assert_eq!(b.design.row(i).sum(), 1.0);
            assert!(b.design.row(i).iter().all(|v| *v == 0.0 || *v == 1.0));
        }
        assert_eq!(b.design[(1, 0)], 1.0);
        assert_eq!(b.penalties[0], DMatrix::identity(3, 3));
        assert!(matches!(
            build_random_intercept(&["x", "x"]),
            Err(Error::DegenerateGrouping)
        ));
    }
}
