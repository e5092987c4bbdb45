//! Beta likelihood in the mean/precision parameterization with a logit link:
//! `y ~ Beta(μφ, (1 - μ)φ)`, `μ = logistic(η)`.

use statrs::function::gamma;

use crate::error::{Error, Result};

/// μ is kept inside `[MU_EPS, 1 - MU_EPS]` during fitting.
pub const MU_EPS: f64 = 1e-9;

/// `ln Γ(x)`, exact at small positive integers.
pub fn ln_gamma(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=30.0).contains(&x) {
        let mut f = 1.0f64;
        for k in 2..(x as u32) {
            f *= f64::from(k);
        }
        return f.ln();
    }
    gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    gamma::digamma(x)
}

/// ψ'(x) for x > 0: upward recurrence, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let series = 1.0 / x
        + z / 2.0
        + z / x
            * (1.0 / 6.0
                + z * (-1.0 / 30.0 + z * (1.0 / 42.0 + z * (-1.0 / 30.0 + z * (5.0 / 66.0)))));
    acc + series
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(mu: f64) -> f64 {
    (mu / (1.0 - mu)).ln()
}

pub(crate) fn clamp_mu(mu: f64) -> f64 {
    mu.clamp(MU_EPS, 1.0 - MU_EPS)
}

/// Precomputed response transforms.
#[derive(Debug, Clone)]
pub(crate) struct Response {
    pub y: Vec<f64>,
    pub ln_y: Vec<f64>,
    pub ln_1my: Vec<f64>,
}

impl Response {
    pub fn new(y: &[f64]) -> Self {
        Self {
            y: y.to_vec(),
            ln_y: y.iter().map(|v| v.ln()).collect(),
            ln_1my: y.iter().map(|v| (1.0 - v).ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }
}

#[inline]
fn obs_loglik(ln_y: f64, ln_1my: f64, mu: f64, phi: f64, lg_phi: f64) -> f64 {
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    lg_phi - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ln_y + (b - 1.0) * ln_1my
}

pub(crate) fn loglik_sum(resp: &Response, mu: &[f64], phi: f64) -> f64 {
    let lg_phi = ln_gamma(phi);
    (0..resp.len())
        .map(|i| obs_loglik(resp.ln_y[i], resp.ln_1my[i], clamp_mu(mu[i]), phi, lg_phi))
        .sum()
}

/// Beta log-likelihood summed over observations.
pub fn beta_loglik(y: &[f64], mu: &[f64], phi: f64) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::Spec("y and μ differ in length".into()));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Domain {
            what: "precision φ must be positive".into(),
            value: phi,
        });
    }
    for (what, v) in y
        .iter()
        .map(|v| ("y", v))
        .chain(mu.iter().map(|v| ("μ", v)))
    {
        if !(*v > 0.0 && *v < 1.0) {
            return Err(Error::Domain {
                what: format!("{what} must lie in (0, 1)"),
                value: *v,
            });
        }
    }
    let lg_phi = ln_gamma(phi);
    Ok(y.iter()
        .zip(mu)
        .map(|(y, m)| obs_loglik(y.ln(), (1.0 - y).ln(), *m, phi, lg_phi))
        .sum())
}

/// Per-observation derivatives of the log-likelihood with respect to the
/// linear predictor η and to ln φ.
pub fn beta_loglik_gradient(y: &[f64], eta: &[f64], phi: f64) -> (Vec<f64>, f64) {
    let resp = Response::new(y);
    let mu: Vec<f64> = eta.iter().map(|e| clamp_mu(logistic(*e))).collect();
    let d_eta = score_eta(&resp, &mu, phi);
    (d_eta, score_log_phi(&resp, &mu, phi))
}

/// `∂ℓᵢ/∂ηᵢ = φ (y*ᵢ - μ*ᵢ) μᵢ(1 - μᵢ)` with `y* = logit y` and
/// `μ* = ψ(μφ) - ψ((1 - μ)φ)`.
pub(crate) fn score_eta(resp: &Response, mu: &[f64], phi: f64) -> Vec<f64> {
    (0..resp.len())
        .map(|i| {
            let m = mu[i];
            let y_star = resp.ln_y[i] - resp.ln_1my[i];
            let mu_star = digamma(m * phi) - digamma((1.0 - m) * phi);
            phi * (y_star - mu_star) * m * (1.0 - m)
        })
        .collect()
}

/// Expected information for η: `φ² (ψ'(μφ) + ψ'((1 - μ)φ)) (μ(1 - μ))²`.
pub(crate) fn fisher_weights(mu: &[f64], phi: f64) -> Vec<f64> {
    mu.iter()
        .map(|&m| {
            let v = m * (1.0 - m);
            phi * phi * (trigamma(m * phi) + trigamma((1.0 - m) * phi)) * v * v
        })
        .collect()
}

fn dphi_terms(resp: &Response, mu: &[f64], phi: f64) -> (f64, f64) {
    let dg = digamma(phi);
    let tg = trigamma(phi);
    let mut grad = 0.0;
    let mut hess = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        let a = m * phi;
        let b = (1.0 - m) * phi;
        grad += dg - m * digamma(a) - (1.0 - m) * digamma(b)
            + m * resp.ln_y[i]
            + (1.0 - m) * resp.ln_1my[i];
        hess += tg - m * m * trigamma(a) - (1.0 - m) * (1.0 - m) * trigamma(b);
    }
    (grad, hess)
}

pub(crate) fn score_log_phi(resp: &Response, mu: &[f64], phi: f64) -> f64 {
    phi * dphi_terms(resp, mu, phi).0
}

pub const LN_PHI_MIN: f64 = -6.907755278982137; // ln 1e-3
pub const LN_PHI_MAX: f64 = 18.420680743952367; // ln 1e8

/// Maximizes the log-likelihood over ln φ for fixed μ by safeguarded Newton.
pub(crate) fn profile_phi(resp: &Response, mu: &[f64], phi0: f64) -> f64 {
    let mut theta = phi0.ln().clamp(LN_PHI_MIN, LN_PHI_MAX);
    let mut ll = loglik_sum(resp, mu, theta.exp());
    for _ in 0..100 {
        let phi = theta.exp();
        let (g, h) = dphi_terms(resp, mu, phi);
        let g_t = phi * g;
        let h_t = phi * phi * h + phi * g;
        let mut step = if h_t < 0.0 { -g_t / h_t } else { g_t.signum() };
        // Near the optimum the objective change falls below summation noise;
        // a short Newton step is taken without the ascent check.
        if h_t < 0.0 && step.abs() < 1e-6 {
            theta = (theta + step).clamp(LN_PHI_MIN, LN_PHI_MAX);
            break;
        }
        step = step.clamp(-2.0, 2.0);
        let mut accepted = false;
        for _ in 0..30 {
            let cand = (theta + step).clamp(LN_PHI_MIN, LN_PHI_MAX);
            let ll_c = loglik_sum(resp, mu, cand.exp());
            if ll_c >= ll {
                let moved = (cand - theta).abs();
                theta = cand;
                ll = ll_c;
                accepted = moved > 0.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-11 {
            break;
        }
    }
    theta.exp()
}

/// Unit deviance summed: `2 Σ [ℓ(yᵢ; yᵢ, φ) - ℓ(yᵢ; μᵢ, φ)]`.
pub(crate) fn deviance(resp: &Response, mu: &[f64], phi: f64) -> f64 {
    let lg_phi = ln_gamma(phi);
    let mut d = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        let sat = obs_loglik(
            resp.ln_y[i],
            resp.ln_1my[i],
            clamp_mu(resp.y[i]),
            phi,
            lg_phi,
        );
        let fit = obs_loglik(resp.ln_y[i], resp.ln_1my[i], clamp_mu(m), phi, lg_phi);
        d += 2.0 * (sat - fit);
    }
    d.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_has_zero_loglik() {
        for y in [0.01, 0.3, 0.5, 0.77, 0.999] {
            assert_eq!(beta_loglik(&[y], &[0.5], 2.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn beta_2_2_density_at_half() {
        // Beta(2, 2) density is 6 y (1 - y); at 0.5 that is 1.5.
        let ll = beta_loglik(&[0.5], &[0.5], 4.0).unwrap();
        assert!((ll - 1.5f64.ln()).abs() < 1e-12);
        assert!((ll - 0.405465).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(beta_loglik(&[0.0], &[0.5], 2.0).is_err());
        assert!(beta_loglik(&[0.5], &[1.0], 2.0).is_err());
        assert!(beta_loglik(&[0.5], &[0.5], 0.0).is_err());
    }

    #[test]
    fn trigamma_matches_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-13);
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
        // ψ'(x) - ψ'(x + 1) = 1/x²
        for x in [0.01, 0.7, 3.3, 25.0, 1e4] {
            let lhs = trigamma(x) - trigamma(x + 1.0);
            assert!((lhs - 1.0 / (x * x)).abs() <= 1e-12 * (1.0 / (x * x)).max(1.0));
        }
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for x in [0.3, 1.7, 9.9, 10.1, 80.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() / trigamma(x) < 1e-7);
        }
    }

    #[test]
    fn ln_gamma_integer_fast_path_agrees() {
        for n in 1..=30 {
            let x = f64::from(n);
            assert!((ln_gamma(x) - gamma::ln_gamma(x)).abs() < 1e-12 * ln_gamma(x).abs().max(1.0));
        }
    }

    #[test]
    fn profile_phi_recovers_moment_scale() {
        // For fixed μ the profile optimum satisfies the φ score equation.
        let y: Vec<f64> = (1..200)
            .map(|i| 0.3 + 0.2 * ((i as f64) * 0.37).sin())
            .collect();
        let resp = Response::new(&y);
        let mu = vec![0.3; y.len()];
        let phi = profile_phi(&resp, &mu, 1.0);
        assert!(score_log_phi(&resp, &mu, phi).abs() < 1e-6);
    }
}
