//! Penalized iteratively reweighted least squares for the Beta working model.
//!
//! Each iteration takes one Fisher-scoring step on the coefficients for fixed
//! φ, halving it until the penalized log-likelihood does not decrease, then
//! re-profiles φ by Newton on ln φ. Both moves are ascent moves on the same
//! objective `ℓ(β, φ) - ½ βᵀSβ`.

use nalgebra::{DMatrix, DVector};

use super::family::{
    clamp_mu, deviance, fisher_weights, logistic, logit, loglik_sum, profile_phi, score_eta,
    Response,
};
use crate::error::{Error, Result};
use crate::linalg::spd_factor;

pub const MAX_ITER: usize = 200;
pub const TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone)]
pub struct PirlsFit {
    pub beta: DVector<f64>,
    pub phi: f64,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub loglik: f64,
    pub pen_loglik: f64,
    pub deviance: f64,
    pub edf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    /// Penalized log-likelihood after every accepted step, starting point first.
    pub trace: Vec<f64>,
    /// `(XᵀWX + S)⁻¹` at convergence.
    pub covariance: DMatrix<f64>,
}

impl PirlsFit {
    pub fn gcv(&self) -> f64 {
        let n = self.mu.len() as f64;
        if self.edf >= n {
            return f64::INFINITY;
        }
        n * self.deviance / (n - self.edf).powi(2)
    }
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..x.ncols() {
                acc += x[(i, j)] * beta[j];
            }
            acc
        })
        .collect()
}

fn mean_of(eta: &[f64]) -> Vec<f64> {
    eta.iter().map(|e| clamp_mu(logistic(*e))).collect()
}

fn objective(resp: &Response, mu: &[f64], phi: f64, beta: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    loglik_sum(resp, mu, phi) - 0.5 * (beta.transpose() * s * beta)[(0, 0)]
}

/// Gradient of the penalized log-likelihood in β: `Xᵀu - Sβ`.
pub fn penalized_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    s: &DMatrix<f64>,
    beta: &DVector<f64>,
    phi: f64,
) -> DVector<f64> {
    let resp = Response::new(y);
    let mu = mean_of(&linear_predictor(x, beta));
    let u = DVector::from_vec(score_eta(&resp, &mu, phi));
    x.tr_mul(&u) - s * beta
}

/// Penalized log-likelihood `ℓ(β, φ) - ½ βᵀSβ`.
pub fn penalized_loglik(
    x: &DMatrix<f64>,
    y: &[f64],
    s: &DMatrix<f64>,
    beta: &DVector<f64>,
    phi: f64,
) -> f64 {
    let resp = Response::new(y);
    let mu = mean_of(&linear_predictor(x, beta));
    objective(&resp, &mu, phi, beta, s)
}

fn weighted_system(x: &DMatrix<f64>, w: &[f64], rhs_obs: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(*wi);
    }
    let xtwx = x.tr_mul(&xw);
    let rhs = x.tr_mul(&DVector::from_column_slice(rhs_obs));
    (xtwx, rhs)
}

/// Fits β and φ for fixed penalty `s`, optionally warm-started.
pub fn pirls(
    x: &DMatrix<f64>,
    y: &[f64],
    s: &DMatrix<f64>,
    start: Option<(&DVector<f64>, f64)>,
) -> Result<PirlsFit> {
    let resp = Response::new(y);
    let n = y.len();
    let p = x.ncols();

    let (mut beta, phi0) = match start {
        Some((b, phi)) => (b.clone(), phi),
        None => {
            let mean = y.iter().sum::<f64>() / n as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let mut b = DVector::zeros(p);
            b[0] = logit(clamp_mu(mean));
            let phi = if var > 0.0 {
                (mean * (1.0 - mean) / var - 1.0).max(1.0)
            } else {
                1e4
            };
            (b, phi)
        }
    };
    let mut eta = linear_predictor(x, &beta);
    let mut mu = mean_of(&eta);
    let mut phi = profile_phi(&resp, &mu, phi0);
    let mut q = objective(&resp, &mu, phi, &beta, s);
    let mut trace = vec![q];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    while iterations < MAX_ITER {
        iterations += 1;
        let w = fisher_weights(&mu, phi);
        let u = score_eta(&resp, &mu, phi);
        let working: Vec<f64> = (0..n).map(|i| w[i] * eta[i] + u[i]).collect();
        let (xtwx, rhs) = weighted_system(x, &w, &working);
        let target = spd_factor(&(xtwx + s))?.solve(&rhs);
        let delta = target - &beta;

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + &delta * step;
            let cand_eta = linear_predictor(x, &cand);
            let cand_mu = mean_of(&cand_eta);
            let q_c = objective(&resp, &cand_mu, phi, &cand, s);
            if q_c >= q {
                accepted = Some((cand, cand_eta, cand_mu, q_c));
                break;
            }
            step *= 0.5;
        }
        let Some((b, e, m, q_step)) = accepted else {
            // No ascent along the scoring direction: the objective is flat to
            // working precision here.
            converged = true;
            last_change = 0.0;
            break;
        };
        beta = b;
        eta = e;
        mu = m;
        trace.push(q_step);
        phi = profile_phi(&resp, &mu, phi);
        let q_new = objective(&resp, &mu, phi, &beta, s);
        trace.push(q_new);
        last_change = (q_new - q).abs() / (q_new.abs() + 0.1);
        q = q_new;
        if last_change < TOL {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            last_change,
            last_coefficients: beta.iter().copied().collect(),
            last_phi: phi,
        });
    }

    let w = fisher_weights(&mu, phi);
    let (xtwx, _) = weighted_system(x, &w, &vec![0.0; n]);
    let chol = spd_factor(&(&xtwx + s))?;
    let covariance = chol.inverse();
    let mut edf = 0.0;
    for i in 0..p {
        for j in 0..p {
            edf += covariance[(i, j)] * xtwx[(j, i)];
        }
    }
    let loglik = loglik_sum(&resp, &mu, phi);
    Ok(PirlsFit {
        deviance: deviance(&resp, &mu, phi),
        beta,
        phi,
        eta,
        mu,
        loglik,
        pen_loglik: q,
        edf,
        iterations,
        converged,
        last_change,
        trace,
        covariance,
    })
}
