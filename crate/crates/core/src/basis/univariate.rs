use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Low-rank cubic thin-plate basis in one dimension.
///
/// Raw functions are `|u - κ_j|³ / 12` for `k` knots, reparameterized onto the
/// null space of `[1, κ]` (so the radial part has finite bending energy), plus
/// a linear term. The constant is absorbed by centering every column on the
/// training data, which leaves `k - 1` columns. Covariates are affinely
/// mapped to `u ∈ [0, 1]` over the training range before evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateBasis {
    pub shift: f64,
    pub scale: f64,
    pub knots: Vec<f64>,
    /// `k × (k - 2)` null-space basis of `[1, κ]ᵀ`, row-major.
    pub radial_map: Vec<f64>,
    pub col_means: Vec<f64>,
    pub penalty_scale: f64,
}

fn radial(r: f64) -> f64 {
    let a = r.abs();
    a * a * a / 12.0
}

/// Orthonormal basis of the orthogonal complement of `span(cols)` in `R^k`,
/// via Gram-Schmidt over the unit vectors in index order.
fn null_complement(cols: &[DVector<f64>], k: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let n = v.norm();
        basis.push(v / n);
    }
    let fixed = basis.len();
    for j in 0..k {
        let mut v = DVector::zeros(k);
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
        if basis.len() == k {
            break;
        }
    }
    basis.split_off(fixed)
}

impl UnivariateBasis {
    pub fn build(x: &[f64], rank: usize) -> Result<(Self, DMatrix<f64>)> {
        if rank < 3 {
            return Err(Error::Spec(format!(
                "univariate rank must be at least 3, got {rank}"
            )));
        }
        let mut unique: Vec<f64> = x.to_vec();
        if unique.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "non-finite covariate".into(),
                value: f64::NAN,
            });
        }
        unique.sort_by(f64::total_cmp);
        unique.dedup();
        if unique.len() < rank {
            return Err(Error::Rank {
                needed: rank,
                found: unique.len(),
            });
        }
        let lo = unique[0];
        let hi = unique[unique.len() - 1];
        let shift = lo;
        let scale = hi - lo;
        let m = unique.len() - 1;
        let knots: Vec<f64> = (0..rank)
            .map(|i| {
                let pos = i as f64 * m as f64 / (rank - 1) as f64;
                let j = (pos.floor() as usize).min(m);
                let frac = pos - j as f64;
                let v = if j == m {
                    unique[m]
                } else {
                    unique[j] + frac * (unique[j + 1] - unique[j])
                };
                (v - shift) / scale
            })
            .collect();

        let ones = DVector::from_element(rank, 1.0);
        let kv = DVector::from_vec(knots.clone());
        let z = null_complement(&[ones, kv], rank);
        let mut radial_map = Vec::with_capacity(rank * (rank - 2));
        for i in 0..rank {
            for col in &z {
                radial_map.push(col[i]);
            }
        }

        let mut basis = UnivariateBasis {
            shift,
            scale,
            knots,
            radial_map,
            col_means: vec![0.0; rank - 1],
            penalty_scale: 1.0,
        };
        let raw = basis.raw(x);
        basis.col_means = (0..raw.ncols()).map(|j| raw.column(j).mean()).collect();
        let design = basis.evaluate(x);
        let unscaled = basis.unscaled_penalty();
        basis.penalty_scale = super::penalty_scale(&design, &unscaled);
        Ok((basis, design))
    }

    pub fn rank(&self) -> usize {
        self.knots.len()
    }

    /// Number of design columns (`rank - 1`).
    pub fn width(&self) -> usize {
        self.knots.len() - 1
    }

    fn z(&self) -> DMatrix<f64> {
        let k = self.rank();
        DMatrix::from_row_slice(k, k - 2, &self.radial_map)
    }

    fn raw(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.rank();
        let z = self.z();
        let mut out = DMatrix::zeros(x.len(), k - 1);
        let mut r = vec![0.0; k];
        for (i, xi) in x.iter().enumerate() {
            let u = (xi - self.shift) / self.scale;
            for (rj, kj) in r.iter_mut().zip(&self.knots) {
                *rj = radial(u - kj);
            }
            for c in 0..k - 2 {
                let mut acc = 0.0;
                for (j, rj) in r.iter().enumerate() {
                    acc += rj * z[(j, c)];
                }
                out[(i, c)] = acc;
            }
            out[(i, k - 2)] = u;
        }
        out
    }

    /// Design rows at `x`, centered with the training column means.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.raw(x);
        for (j, m) in self.col_means.iter().enumerate() {
            out.column_mut(j).add_scalar_mut(-m);
        }
        out
    }

    fn unscaled_penalty(&self) -> DMatrix<f64> {
        let k = self.rank();
        let e = DMatrix::from_fn(k, k, |i, j| radial(self.knots[i] - self.knots[j]));
        let z = self.z();
        let core = z.transpose() * e * &z;
        let mut s = DMatrix::zeros(k - 1, k - 1);
        for i in 0..k - 2 {
            for j in 0..k - 2 {
                s[(i, j)] = 0.5 * (core[(i, j)] + core[(j, i)]);
            }
        }
        s
    }

    /// Bending-energy penalty; the linear column is unpenalized.
    pub fn penalty(&self) -> DMatrix<f64> {
        self.unscaled_penalty() * self.penalty_scale
    }
}
