//! The two isotonized estimators of the baseline hazard and their naive
//! smooth counterparts, sampled on uniform grids.
//!
//! The smoothed likelihood estimator (MSLE) lives on `[0, max T + b]`, the
//! isotonized smoothed Breslow estimator (ISBE) on `[0, τ*]`. Both are
//! unreliable within a bandwidth of the right end of their domain.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::coxfit::{fit_beta, NewtonOptions};
use crate::data::{Dataset, HazardCurve};
use crate::error::{Error, Result};
use crate::isotonic::{isotonize_diagram, isotonize_msle};
use crate::kernels::{Kernel, Triweight};
use crate::nonparam::breslow;
use crate::smoothing::{cusum_diagram, CorrectedBreslow};

/// Default grid resolution.
pub const DEFAULT_GRID: usize = 1000;

/// Level of the empirical quantile used as the default `τ*`.
pub const TAU_STAR_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Msle,
    Isbe,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Msle => "msle",
            Method::Isbe => "isbe",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msle" => Ok(Method::Msle),
            "isbe" => Ok(Method::Isbe),
            other => Err(Error::Domain(format!("unknown method `{other}` (expected msle or isbe)"))),
        }
    }
}

/// Where the regression coefficients come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BetaSource {
    /// Maximum partial likelihood estimate.
    #[default]
    Estimate,
    /// A known value, e.g. the true coefficient in a simulation.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub grid_size: usize,
    pub beta: BetaSource,
    pub newton: NewtonOptions,
    /// Truncation point for the ISBE; `None` selects the 95% empirical
    /// quantile of the follow-up times.
    pub tau_star: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { grid_size: DEFAULT_GRID, beta: BetaSource::Estimate, newton: NewtonOptions::default(), tau_star: None }
    }
}

impl Settings {
    pub fn with_grid(grid_size: usize) -> Self {
        Self { grid_size, ..Self::default() }
    }
}

/// An estimated curve together with the coefficients it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub curve: HazardCurve,
    pub beta: Vec<f64>,
}

/// `n^{-1/5}`, the bandwidth used for point estimation and the bootstrap.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.2)
}

/// `c · n^{-1/4}`, the undersmoothing bandwidth of the asymptotic intervals.
pub fn ci_bandwidth(n: usize, c: f64) -> f64 {
    c * (n as f64).powf(-0.25)
}

pub fn resolve_beta(data: &Dataset, source: &BetaSource, newton: &NewtonOptions) -> Result<Vec<f64>> {
    match source {
        BetaSource::Estimate => Ok(fit_beta(data, &vec![0.0; data.p()], newton)?.beta),
        BetaSource::Fixed(beta) if beta.len() == data.p() => Ok(beta.clone()),
        BetaSource::Fixed(beta) => Err(Error::Domain(format!(
            "fixed beta has dimension {}, dataset has {} covariates",
            beta.len(),
            data.p()
        ))),
    }
}

/// Validate a requested `τ*`, defaulting to the 95% quantile and clamping
/// to the largest follow-up time.
pub fn resolve_tau_star(data: &Dataset, tau_star: Option<f64>) -> Result<f64> {
    let tau = match tau_star {
        None => data.empirical_quantile(TAU_STAR_QUANTILE)?,
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::Domain(format!("tau* = {t} must be positive and finite"))),
    };
    let max = data.max_time();
    if tau > max {
        log::warn!("tau* = {tau} exceeds the largest follow-up time; clamping to {max}");
        return Ok(max);
    }
    if !(tau > 0.0) {
        return Err(Error::Degenerate("truncation point is zero: too many zero follow-up times".into()));
    }
    Ok(tau)
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < 2 {
        return Err(Error::Domain(format!("grid size {grid_size} must be at least 2")));
    }
    Ok(())
}

fn uniform_grid(end: f64, size: usize) -> Vec<f64> {
    let h = end / (size - 1) as f64;
    (0..size).map(|j| if j + 1 == size { end } else { j as f64 * h }).collect()
}

fn monotone_curve(grid: Vec<f64>, values: Vec<f64>, b: f64) -> HazardCurve {
    let monotone = values.windows(2).all(|w| w[0] <= w[1]);
    HazardCurve::new(grid, values, b, monotone)
}

/// MSLE at an explicit kernel and settings.
pub fn msle_with<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, settings: &Settings) -> Result<Fit> {
    check_grid(settings.grid_size)?;
    let beta = resolve_beta(data, &settings.beta, &settings.newton)?;
    let diagram = cusum_diagram(kernel, data, b, &beta, settings.grid_size)?;
    let fit = isotonize_msle(&diagram)?;
    Ok(Fit { curve: monotone_curve(fit.grid, fit.slopes, b), beta })
}

/// `v_n / w_n` on the MSLE grid, omitting the right end where `w_n` vanishes.
pub fn naive_msle_with<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, settings: &Settings) -> Result<Fit> {
    check_grid(settings.grid_size)?;
    let beta = resolve_beta(data, &settings.beta, &settings.newton)?;
    let diagram = cusum_diagram(kernel, data, b, &beta, settings.grid_size)?;
    let (grid, values) = diagram
        .t_grid
        .iter()
        .zip(diagram.v.iter().zip(&diagram.w))
        .filter(|(_, (_, &w))| w > 0.0)
        .map(|(&t, (&v, &w))| (t, v / w))
        .unzip();
    Ok(Fit { curve: HazardCurve::new(grid, values, b, false), beta })
}

/// Boundary-corrected smoothed Breslow estimate sampled on `[0, τ*]`:
/// grid, values and exact derivatives.
fn sampled_smoothed_breslow<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    b: f64,
    beta: &[f64],
    settings: &Settings,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_grid(settings.grid_size)?;
    let tau = resolve_tau_star(data, settings.tau_star)?;
    let step = breslow(data, beta)?;
    let smooth = CorrectedBreslow::new(&step, kernel, b, tau)?;
    let grid = uniform_grid(tau, settings.grid_size);
    let (values, slopes) = grid.iter().map(|&x| smooth.eval(x)).unzip();
    Ok((grid, values, slopes))
}

/// ISBE at an explicit kernel and settings.
pub fn isbe_with<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, settings: &Settings) -> Result<Fit> {
    let beta = resolve_beta(data, &settings.beta, &settings.newton)?;
    let (grid, values, slopes) = sampled_smoothed_breslow(kernel, data, b, &beta, settings)?;
    let derivative: Vec<Option<f64>> = slopes.into_iter().map(Some).collect();
    let fit = isotonize_diagram(&grid, &values, &derivative)?;
    Ok(Fit { curve: monotone_curve(grid, fit.slopes, b), beta })
}

/// Derivative of the boundary-corrected smoothed Breslow estimator on the
/// ISBE grid. In `[b, τ* − b]` this is the plain kernel hazard estimate.
pub fn naive_isbe_with<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, settings: &Settings) -> Result<Fit> {
    let beta = resolve_beta(data, &settings.beta, &settings.newton)?;
    let (grid, _, slopes) = sampled_smoothed_breslow(kernel, data, b, &beta, settings)?;
    Ok(Fit { curve: HazardCurve::new(grid, slopes, b, false), beta })
}

pub fn fit_with<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    method: Method,
    b: f64,
    settings: &Settings,
) -> Result<Fit> {
    match method {
        Method::Msle => msle_with(kernel, data, b, settings),
        Method::Isbe => isbe_with(kernel, data, b, settings),
    }
}

/// Isotonized estimate at a single point.
pub fn estimate_at<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    method: Method,
    b: f64,
    x0: f64,
    settings: &Settings,
) -> Result<(f64, Vec<f64>)> {
    let fit = fit_with(kernel, data, method, b, settings)?;
    let value = fit
        .curve
        .eval(x0)
        .ok_or_else(|| Error::Domain(format!("x0 = {x0} lies outside the {method} domain")))?;
    Ok((value, fit.beta))
}

/// Triweight MSLE with estimated coefficients.
pub fn msle(data: &Dataset, b: f64, grid_size: usize) -> Result<HazardCurve> {
    Ok(msle_with(&Triweight, data, b, &Settings::with_grid(grid_size))?.curve)
}

/// Triweight ISBE with estimated coefficients.
pub fn isbe(data: &Dataset, b: f64, tau_star: Option<f64>, grid_size: usize) -> Result<HazardCurve> {
    let settings = Settings { tau_star, ..Settings::with_grid(grid_size) };
    Ok(isbe_with(&Triweight, data, b, &settings)?.curve)
}

/// Naive MSLE and naive ISBE curves, each on its isotonized counterpart's grid.
pub fn naive_curves(data: &Dataset, b: f64, tau_star: Option<f64>, grid_size: usize) -> Result<(HazardCurve, HazardCurve)> {
    let settings = Settings { tau_star, ..Settings::with_grid(grid_size) };
    let beta = resolve_beta(data, &settings.beta, &settings.newton)?;
    let settings = Settings { beta: BetaSource::Fixed(beta), ..settings };
    Ok((
        naive_msle_with(&Triweight, data, b, &settings)?.curve,
        naive_isbe_with(&Triweight, data, b, &settings)?.curve,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::smoothing::naive_msle;
    use monohaz_testkit::SplitMix;

    fn sample(seed: u64, n: usize) -> Dataset {
        // Weibull(1.5, 1) baseline, β = 0.5, uniform censoring and covariate
        let mut rng = SplitMix(seed);
        let obs = (0..n)
            .map(|_| {
                let z = rng.uniform();
                let e = -(1.0 - rng.uniform()).ln();
                let x = (e * (-0.5 * z).exp()).powf(1.0 / 1.5);
                let c = rng.uniform();
                Observation::new(x.min(c), x <= c, vec![z])
            })
            .collect();
        Dataset::new(obs).unwrap()
    }

    #[test]
    fn method_round_trips_through_strings() {
        for m in [Method::Msle, Method::Isbe] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("grenander".parse::<Method>().is_err());
    }

    #[test]
    fn bandwidth_schedules() {
        assert!((default_bandwidth(32) - 0.5).abs() < 1e-15);
        assert!((ci_bandwidth(16, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tau_star_rules() {
        let d = sample(1, 100);
        assert_eq!(resolve_tau_star(&d, None).unwrap(), d.empirical_quantile(0.95).unwrap());
        assert_eq!(resolve_tau_star(&d, Some(50.0)).unwrap(), d.max_time());
        assert!(matches!(resolve_tau_star(&d, Some(0.0)), Err(Error::Domain(_))));
        assert!(matches!(resolve_tau_star(&d, Some(-1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn curves_are_monotone_and_finite() {
        let d = sample(2, 300);
        let b = default_bandwidth(300);
        let m = msle(&d, b, 400).unwrap();
        assert!(m.monotone && m.is_nondecreasing());
        assert!(m.values.iter().all(|v| v.is_finite()));
        assert!((m.grid.last().unwrap() - (d.max_time() + b)).abs() < 1e-15);
        let i = isbe(&d, b, None, 400).unwrap();
        assert!(i.monotone && i.is_nondecreasing());
        assert_eq!(*i.grid.last().unwrap(), d.empirical_quantile(0.95).unwrap());
    }

    #[test]
    fn naive_msle_curve_is_pointwise_ratio() {
        let d = sample(3, 150);
        let b = 0.3;
        let (naive, _) = naive_curves(&d, b, None, 101).unwrap();
        let beta = resolve_beta(&d, &BetaSource::Estimate, &NewtonOptions::default()).unwrap();
        assert_eq!(naive.grid.len(), 100);
        for (&t, &v) in naive.grid.iter().zip(&naive.values).step_by(9) {
            let direct = naive_msle(&Triweight, &d, b, &beta, t).unwrap();
            assert!((v - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn naive_isbe_vanishes_away_from_events() {
        let obs = vec![
            Observation::new(0.1, true, vec![0.0]),
            Observation::new(0.9, false, vec![1.0]),
            Observation::new(1.0, true, vec![1.0]),
            Observation::new(1.1, false, vec![0.0]),
        ];
        let d = Dataset::new(obs).unwrap();
        let settings = Settings { tau_star: Some(1.1), beta: BetaSource::Fixed(vec![0.0]), ..Settings::with_grid(111) };
        let fit = naive_isbe_with(&Triweight, &d, 0.2, &settings).unwrap();
        let at = |x: f64| fit.curve.eval(x).unwrap();
        assert_eq!(at(0.5), 0.0);
        assert!(at(0.2) > 0.0);
    }

    #[test]
    fn fixed_beta_dimension_is_checked() {
        let d = sample(4, 50);
        let settings = Settings { beta: BetaSource::Fixed(vec![0.1, 0.2]), ..Settings::default() };
        assert!(matches!(msle_with(&Triweight, &d, 0.3, &settings), Err(Error::Domain(_))));
        assert!(msle(&d, 0.3, 1).is_err());
    }

    #[test]
    fn estimate_at_interpolates_the_curve() {
        let d = sample(5, 200);
        let b = default_bandwidth(200);
        let settings = Settings::with_grid(301);
        let fit = msle_with(&Triweight, &d, b, &settings).unwrap();
        let (v, beta) = estimate_at(&Triweight, &d, Method::Msle, b, 0.5, &settings).unwrap();
        assert_eq!(Some(v), fit.curve.eval(0.5));
        assert_eq!(beta, fit.beta);
        assert!(estimate_at(&Triweight, &d, Method::Msle, b, 10.0, &settings).is_err());
    }
}
