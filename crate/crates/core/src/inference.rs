//! Pointwise confidence intervals for the baseline hazard: asymptotic
//! intervals under undersmoothing, and smooth-bootstrap percentile intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coxfit::phi_n;
use crate::data::{Dataset, Observation, StepFunction};
use crate::error::{Error, Result};
use crate::estimators::{ci_bandwidth, default_bandwidth, estimate_at, resolve_beta, resolve_tau_star, BetaSource, Method, Settings};
use crate::kernels::{Kernel, Triweight};
use crate::nonparam::{breslow, kaplan_meier_censoring};
use crate::rng::{stream, BOOT};
use crate::smoothing::CorrectedBreslow;

/// Share of failed bootstrap replicates above which the interval is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Cells in the table used to bracket and approximate inverses of the
/// smoothed Breslow estimator.
const INVERSION_TABLE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Asymptotic,
    Bootstrap,
}

impl std::fmt::Display for CiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CiMethod::Asymptotic => "asymptotic",
            CiMethod::Bootstrap => "bootstrap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiResult {
    pub x0: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub estimator: Method,
    pub bandwidth: f64,
    /// Bandwidth constant `c` in `b = c n^{-1/4}`; absent for bootstrap
    /// intervals.
    pub c: Option<f64>,
    pub beta: Vec<f64>,
    /// Bootstrap replicates that failed and were skipped.
    pub failures: usize,
}

impl CiResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("confidence level {level} must lie in (0, 1)")))
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `n^{-3/8} σ̂ q_{1-α/2}` with `σ̂ = sqrt(λ̂ ∫k² / (c Φ_n))`.
pub fn asymptotic_half_width(n: usize, lambda: f64, phi: f64, c: f64, kernel_l2: f64, level: f64) -> Result<f64> {
    check_level(level)?;
    if !(lambda >= 0.0) {
        return Err(Error::Numeric(format!("estimate {lambda} is negative: the variance estimate is invalid")));
    }
    if !(phi > 0.0) {
        return Err(Error::Domain("no subject at risk at x0 (Φ_n = 0)".into()));
    }
    let sigma = (lambda * kernel_l2 / (c * phi)).sqrt();
    Ok((n as f64).powf(-0.375) * sigma * normal_quantile(0.5 + level / 2.0))
}

fn check_x0(data: &Dataset, x0: f64) -> Result<()> {
    if x0 > 0.0 && x0 < data.max_time() {
        Ok(())
    } else {
        Err(Error::Domain(format!("x0 = {x0} is not interior to the follow-up range (0, {})", data.max_time())))
    }
}

/// Interval `λ̂(x₀) ± n^{-3/8} σ̂ q` at bandwidth `c n^{-1/4}`.
pub fn asymptotic_ci_with<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    x0: f64,
    level: f64,
    method: Method,
    c: f64,
    settings: &Settings,
) -> Result<CiResult> {
    check_level(level)?;
    check_x0(data, x0)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("bandwidth constant {c} must be positive")));
    }
    let n = data.len();
    let b = ci_bandwidth(n, c);
    let (estimate, beta) = estimate_at(kernel, data, method, b, x0, settings)?;
    let phi = phi_n(data, x0, &beta)?;
    let half = asymptotic_half_width(n, estimate, phi, c, kernel.squared_integral(), level)?;
    Ok(CiResult {
        x0,
        estimate,
        lower: estimate - half,
        upper: estimate + half,
        level,
        method: CiMethod::Asymptotic,
        estimator: method,
        bandwidth: b,
        c: Some(c),
        beta,
        failures: 0,
    })
}

/// Triweight asymptotic interval with estimated coefficients.
pub fn asymptotic_ci(data: &Dataset, x0: f64, level: f64, method: Method, c: f64) -> Result<CiResult> {
    asymptotic_ci_with(&Triweight, data, x0, level, method, c, &Settings::default())
}

/// Generalized inverse `x ↦ inf{x : Λ^s(x) ≥ target}` of a smoothed
/// Breslow estimator, continued linearly beyond `τ` with its terminal slope.
///
/// A table of values and exact slopes brackets the first crossing and
/// supplies a cubic Hermite starting point; Newton steps on the exact
/// function then finish the root.
#[derive(Debug, Clone)]
pub struct Inverter<'s, 'k, K: ?Sized> {
    smooth: &'s CorrectedBreslow<'k, K>,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    running_max: Vec<f64>,
    tail_slope: f64,
}

impl<'s, 'k, K: Kernel + ?Sized> Inverter<'s, 'k, K> {
    pub fn new(smooth: &'s CorrectedBreslow<'k, K>) -> Self {
        let tau = smooth.tau();
        let m = INVERSION_TABLE;
        let step = tau / m as f64;
        let (values, slopes): (Vec<f64>, Vec<f64>) =
            (0..=m).map(|j| smooth.eval(if j == m { tau } else { j as f64 * step })).unzip();
        let mut running_max = values.clone();
        for j in 1..running_max.len() {
            running_max[j] = running_max[j].max(running_max[j - 1]);
        }
        let tail_slope = slopes[m].max(0.0);
        Self { smooth, step, values, slopes, running_max, tail_slope }
    }

    /// `Λ^s` extended past `τ`.
    pub fn cumulative_hazard(&self, x: f64) -> f64 {
        let tau = self.smooth.tau();
        if x <= tau {
            self.smooth.value(x.max(0.0))
        } else {
            self.values[self.values.len() - 1] + self.tail_slope * (x - tau)
        }
    }

    /// Smallest `x ≥ 0` with `Λ^s(x) ≥ target`, where negative values of
    /// `Λ^s` near the origin count as zero; `+∞` when the extended function
    /// never reaches the target.
    ///
    /// Inside `[0, τ]` the answer is the root of the Hermite interpolant,
    /// accurate to roughly 1e-13 in `Λ^s`; see [`Inverter::invert_exact`].
    pub fn invert(&self, target: f64) -> f64 {
        self.invert_with(target, false)
    }

    /// As [`Inverter::invert`], finished with Newton steps on `Λ^s` itself.
    pub fn invert_exact(&self, target: f64) -> f64 {
        self.invert_with(target, true)
    }

    fn invert_with(&self, target: f64, exact: bool) -> f64 {
        if target <= self.values[0].max(0.0) {
            return 0.0;
        }
        let last = self.values.len() - 1;
        if target > self.running_max[last] {
            let excess = target - self.values[last];
            return if self.tail_slope > 0.0 { self.smooth.tau() + excess / self.tail_slope } else { f64::INFINITY };
        }
        let j = self.running_max.partition_point(|&v| v < target);
        let a0 = (j - 1) as f64 * self.step;
        let c0 = if j == last { self.smooth.tau() } else { j as f64 * self.step };
        let x = a0 + self.hermite_root(j, target) * (c0 - a0);
        if exact {
            self.polish(a0, c0, x, target)
        } else {
            x
        }
    }

    /// Root in `[0, 1]` of the cubic Hermite interpolant on cell `j`.
    fn hermite_root(&self, j: usize, target: f64) -> f64 {
        let h = self.step;
        let (y0, y1) = (self.values[j - 1] - target, self.values[j] - target);
        let (d0, d1) = (self.slopes[j - 1] * h, self.slopes[j] * h);
        let p = |s: f64| {
            let (s2, s3) = (s * s, s * s * s);
            let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1;
            let slope = (6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (6.0 * s - 6.0 * s2) * y1 + (3.0 * s2 - 2.0 * s) * d1;
            (value, slope)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut s = if y1 > y0 { -y0 / (y1 - y0) } else { 0.5 };
        for _ in 0..30 {
            let (f, d) = p(s);
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let next = s - f / d;
            let next = if d > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if (next - s).abs() < 1e-15 {
                return next;
            }
            s = next;
        }
        s
    }

    /// Safeguarded Newton on the exact function inside `[a, c]`.
    fn polish(&self, mut a: f64, mut c: f64, mut x: f64, target: f64) -> f64 {
        let tol = 1e-13 * target.abs().max(1.0);
        for _ in 0..200 {
            let (v, d) = self.smooth.eval(x);
            let f = v - target;
            if f.abs() <= tol {
                return x;
            }
            if f < 0.0 {
                a = x;
            } else {
                c = x;
            }
            if c - a <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
                return c;
            }
            let newton = x - f / d;
            x = if d > 0.0 && newton > a && newton < c { newton } else { 0.5 * (a + c) };
        }
        c
    }
}

/// `inf{c : G(c) ≥ u}` for a distribution function stored as a step
/// function; mass the function leaves unassigned goes to `residual`.
pub fn invert_step_distribution(g: &StepFunction, u: f64, residual: f64) -> f64 {
    let j = g.values().partition_point(|&v| v < u);
    g.knots().get(j).copied().unwrap_or(residual)
}

/// Draw one smooth-bootstrap sample, keeping the covariates fixed.
///
/// Event times come from `1 − exp(−Λ^s(x) e^{β'Z})`; censoring times from
/// the Kaplan–Meier estimate of the censoring law, with any mass it leaves
/// unassigned placed at the largest follow-up time.
pub fn sample_with_inverter<K: Kernel + ?Sized, R: Rng + ?Sized>(
    data: &Dataset,
    beta_hat: &[f64],
    inverter: &Inverter<'_, '_, K>,
    censor_km: &StepFunction,
    rng: &mut R,
) -> Result<Dataset> {
    let end = data.max_time();
    let predictors = data.linear_predictors(beta_hat);
    let obs = (0..data.len())
        .map(|i| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let target = -(1.0 - u).ln() * (-predictors[i]).exp();
            let x = inverter.invert(target);
            let c = invert_step_distribution(censor_km, v, end);
            Observation::new(x.min(c), x <= c, data.covariates(i).to_vec())
        })
        .collect();
    Dataset::new(obs)
}

/// One smooth-bootstrap sample drawn from the stream `(seed, [BOOT])`.
pub fn sample_bootstrap_dataset<K: Kernel + ?Sized>(
    data: &Dataset,
    beta_hat: &[f64],
    smooth: &CorrectedBreslow<'_, K>,
    censor_km: &StepFunction,
    seed: u64,
) -> Result<Dataset> {
    let inverter = Inverter::new(smooth);
    sample_with_inverter(data, beta_hat, &inverter, censor_km, &mut stream(seed, &[BOOT]))
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval from replicate values (in any order); `None` marks a
/// failed replicate.
pub fn percentile_interval(replicates: &[Option<f64>], level: f64) -> Result<(f64, f64, usize)> {
    check_level(level)?;
    let mut values: Vec<f64> = replicates.iter().flatten().copied().collect();
    let failed = replicates.len() - values.len();
    if failed as f64 > MAX_FAILURE_RATE * replicates.len() as f64 || values.is_empty() {
        return Err(Error::BootstrapInstability { failed, total: replicates.len() });
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok((percentile(&values, alpha / 2.0), percentile(&values, 1.0 - alpha / 2.0), failed))
}

/// Bootstrap configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Defaults to `n^{-1/5}`.
    pub bandwidth: Option<f64>,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, seed, bandwidth: None }
    }
}

/// Smooth-bootstrap percentile interval.
///
/// With [`BetaSource::Estimate`] the coefficients are refitted on every
/// replicate; with a fixed source they are held at the given value
/// throughout. Replicate `j` draws from the stream `(seed, [BOOT, j])`.
pub fn bootstrap_ci_with<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    x0: f64,
    level: f64,
    method: Method,
    options: &BootstrapOptions,
    settings: &Settings,
) -> Result<CiResult> {
    let BootstrapOptions { replicates, seed, bandwidth } = *options;
    check_level(level)?;
    check_x0(data, x0)?;
    if replicates < 2 {
        return Err(Error::Domain(format!("the bootstrap needs at least 2 replicates, got {replicates}")));
    }
    let n = data.len();
    let b = bandwidth.unwrap_or_else(|| default_bandwidth(n));
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("bandwidth {b} must be positive and finite")));
    }
    let beta_hat = resolve_beta(data, &settings.beta, &settings.newton)?;
    let pinned = Settings { beta: BetaSource::Fixed(beta_hat.clone()), ..settings.clone() };
    let (estimate, _) = estimate_at(kernel, data, method, b, x0, &pinned)?;

    let tau = resolve_tau_star(data, settings.tau_star)?;
    let step = breslow(data, &beta_hat)?;
    let smooth = CorrectedBreslow::new(&step, kernel, b, tau)?;
    let inverter = Inverter::new(&smooth);
    let km = kaplan_meier_censoring(data);

    let values: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, &[BOOT, j as u64]);
            let replicate = sample_with_inverter(data, &beta_hat, &inverter, &km, &mut rng).ok()?;
            match estimate_at(kernel, &replicate, method, b, x0, settings) {
                Ok((v, _)) => Some(v),
                Err(e) => {
                    log::debug!("bootstrap replicate {j} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let (lower, upper, failures) = percentile_interval(&values, level)?;
    Ok(CiResult {
        x0,
        estimate,
        lower,
        upper,
        level,
        method: CiMethod::Bootstrap,
        estimator: method,
        bandwidth: b,
        c: None,
        beta: beta_hat,
        failures,
    })
}

/// Triweight bootstrap interval with coefficients refitted per replicate.
pub fn bootstrap_ci(data: &Dataset, x0: f64, level: f64, method: Method, replicates: usize, seed: u64) -> Result<CiResult> {
    bootstrap_ci_with(&Triweight, data, x0, level, method, &BootstrapOptions::new(replicates, seed), &Settings::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_arithmetic() {
        let hw = asymptotic_half_width(500, 1.0, 0.5, 1.0, 0.8159, 0.95).unwrap();
        let expected = 500f64.powf(-0.375) * (0.8159f64 / 0.5).sqrt() * 1.959963984540054;
        assert!((hw - expected).abs() < 1e-12);
        assert!((hw - 0.2435).abs() < 1e-3);
    }

    #[test]
    fn half_width_scaling_and_errors() {
        let w1 = asymptotic_half_width(400, 1.2, 0.4, 1.0, 0.8, 0.9).unwrap();
        let w2 = asymptotic_half_width(800, 1.2, 0.4, 1.0, 0.8, 0.9).unwrap();
        assert!((w2 / w1 - 2f64.powf(-0.375)).abs() < 1e-14);
        let wide = asymptotic_half_width(400, 1.2, 0.4, 1.0, 0.8, 1.0 - 1e-12).unwrap();
        assert!(wide > 4.0 * w1 && wide > asymptotic_half_width(400, 1.2, 0.4, 1.0, 0.8, 1.0 - 1e-6).unwrap());
        assert!(matches!(asymptotic_half_width(400, -0.1, 0.4, 1.0, 0.8, 0.9), Err(Error::Numeric(_))));
        assert!(matches!(asymptotic_half_width(400, 0.1, 0.0, 1.0, 0.8, 0.9), Err(Error::Domain(_))));
        assert!(asymptotic_half_width(400, 0.1, 0.4, 1.0, 0.8, 1.0).is_err());
    }

    #[test]
    fn normal_quantile_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!(normal_quantile(0.5).abs() < 1e-12);
    }

    #[test]
    fn percentile_type_seven() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((percentile(&v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn constant_replicates_give_a_point_interval() {
        let reps = vec![Some(0.7); 50];
        assert_eq!(percentile_interval(&reps, 0.95).unwrap(), (0.7, 0.7, 0));
    }

    #[test]
    fn failure_budget() {
        let mut reps: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64)).collect();
        for r in reps.iter_mut().take(5) {
            *r = None;
        }
        assert_eq!(percentile_interval(&reps, 0.9).unwrap().2, 5);
        reps[5] = None;
        assert!(matches!(
            percentile_interval(&reps, 0.9),
            Err(Error::BootstrapInstability { failed: 6, total: 100 })
        ));
    }

    #[test]
    fn percentile_interval_ignores_order() {
        let a: Vec<Option<f64>> = (0..37).map(|i| Some(((i * 17) % 37) as f64 * 0.1)).collect();
        let mut b = a.clone();
        b.reverse();
        assert_eq!(percentile_interval(&a, 0.95).unwrap(), percentile_interval(&b, 0.95).unwrap());
    }

    #[test]
    fn step_distribution_inversion() {
        let g = StepFunction::new(vec![1.0, 2.0], vec![0.25, 0.5], 0.0).unwrap();
        assert_eq!(invert_step_distribution(&g, 0.1, 9.0), 1.0);
        assert_eq!(invert_step_distribution(&g, 0.25, 9.0), 1.0);
        assert_eq!(invert_step_distribution(&g, 0.3, 9.0), 2.0);
        assert_eq!(invert_step_distribution(&g, 0.7, 9.0), 9.0);
    }
}
