//! Maximum partial likelihood for the regression coefficients and the
//! weighted at-risk process Φ_n.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Result of [`fit_beta`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Any coefficient beyond this magnitude is treated as divergence.
    pub beta_cap: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, beta_cap: 50.0 }
    }
}

/// Log partial likelihood, gradient and Hessian at `beta` (Breslow ties).
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `p × p`.
    pub hessian: Vec<f64>,
}

fn check_dim(data: &Dataset, beta: &[f64]) -> Result<()> {
    if beta.len() != data.p() {
        return Err(Error::Domain(format!(
            "beta has dimension {}, dataset has {} covariates",
            beta.len(),
            data.p()
        )));
    }
    Ok(())
}

/// `Σ_{events i} [β'Z_i − log Σ_{j: T_j ≥ T_i} exp(β'Z_j)]`.
pub fn log_partial_likelihood(data: &Dataset, beta: &[f64]) -> Result<f64> {
    check_dim(data, beta)?;
    Ok(evaluate(data, beta, false).value)
}

/// Value, score and Hessian in one backward pass over the risk sets.
pub fn partial_likelihood_derivatives(data: &Dataset, beta: &[f64]) -> Result<PartialLikelihood> {
    check_dim(data, beta)?;
    Ok(evaluate(data, beta, true))
}

fn evaluate(data: &Dataset, beta: &[f64], derivatives: bool) -> PartialLikelihood {
    let p = data.p();
    let eta = data.linear_predictors(beta);
    // shifting every η by the same constant leaves the likelihood unchanged
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let times = data.times();
    let events = data.events();

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut value = 0.0;
    let mut gradient = vec![0.0; p];
    let mut hessian = vec![0.0; p * p];

    // walk tie groups from the largest time down; every member of a group
    // shares the risk set {j: T_j >= t}
    let mut end = data.len();
    while end > 0 {
        let t = times[end - 1];
        let mut start = end - 1;
        while start > 0 && times[start - 1] == t {
            start -= 1;
        }
        for i in start..end {
            let w = (eta[i] - shift).exp();
            s0 += w;
            if derivatives {
                let z = data.covariates(i);
                for a in 0..p {
                    s1[a] += w * z[a];
                    for c in 0..p {
                        s2[a * p + c] += w * z[a] * z[c];
                    }
                }
            }
        }
        let log_s0 = s0.ln();
        for i in start..end {
            if !events[i] {
                continue;
            }
            value += eta[i] - shift - log_s0;
            if derivatives {
                let z = data.covariates(i);
                for a in 0..p {
                    let mean_a = s1[a] / s0;
                    gradient[a] += z[a] - mean_a;
                    for c in 0..p {
                        hessian[a * p + c] -= s2[a * p + c] / s0 - mean_a * s1[c] / s0;
                    }
                }
            }
        }
        end = start;
    }
    PartialLikelihood { value, gradient, hessian }
}

/// Newton step length that, at a numerically zero score, indicates divergence.
const SEPARATION_STEP: f64 = 1e-3;

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton–Raphson with step halving on the log partial likelihood.
pub fn fit_beta(data: &Dataset, init: &[f64], options: &NewtonOptions) -> Result<CoxFit> {
    check_dim(data, init)?;
    if !(options.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {} must be positive", options.tol)));
    }
    if data.event_count() == 0 {
        return Err(Error::Degenerate("no uncensored observations".into()));
    }
    let p = data.p();
    let mut beta = init.to_vec();
    let mut current = evaluate(data, &beta, true);

    for iteration in 0..=options.max_iter {
        let gradient_norm = max_norm(&current.gradient);
        let info = DMatrix::from_row_slice(p, p, &current.hessian).map(|h| -h);
        let score = DVector::from_column_slice(&current.gradient);
        let direction = match info.cholesky() {
            Some(chol) => chol.solve(&score),
            // flat or singular information: fall back to gradient ascent
            None => score.clone(),
        };
        if gradient_norm < options.tol {
            // a vanishing score with a Newton step that does not shrink is the
            // signature of a likelihood that keeps increasing towards infinity
            if max_norm(direction.as_slice()) > SEPARATION_STEP {
                return Err(Error::Separation { beta, cap: options.beta_cap });
            }
            return Ok(CoxFit { beta, loglik: current.value, iterations: iteration, gradient_norm });
        }
        if iteration == options.max_iter {
            return Err(Error::NoConvergence { iterations: iteration, beta, gradient_norm });
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = beta.iter().zip(direction.iter()).map(|(b, d)| b + step * d).collect();
            if max_norm(&candidate) > options.beta_cap {
                // a concave objective that keeps improving past the cap is monotone
                let trial = evaluate(data, &candidate, false);
                if trial.value >= current.value {
                    return Err(Error::Separation { beta: candidate, cap: options.beta_cap });
                }
                step *= 0.5;
                continue;
            }
            let trial = evaluate(data, &candidate, true);
            if trial.value.is_finite() && trial.value >= current.value - 1e-12 * current.value.abs().max(1.0) {
                beta = candidate;
                current = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: iteration + 1, beta, gradient_norm });
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// `Φ_n(x; β) = n⁻¹ Σ 1{T_i ≥ x} exp(β'Z_i)`.
pub fn phi_n(data: &Dataset, x: f64, beta: &[f64]) -> Result<f64> {
    check_dim(data, beta)?;
    let first = data.times().partition_point(|&t| t < x);
    let sum: f64 = (first..data.len())
        .map(|i| data.covariates(i).iter().zip(beta).map(|(z, b)| z * b).sum::<f64>().exp())
        .sum();
    Ok(sum / data.len() as f64)
}
