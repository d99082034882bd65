//! Monte Carlo experiments under Weibull proportional hazards models.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::estimators::{BetaSource, Method, Settings};
use crate::inference::{asymptotic_ci_with, bootstrap_ci_with, BootstrapOptions, CiMethod, CiResult};
use crate::kernels::Triweight;
use crate::rng::{derive, stream, BOOT, DATA};

/// Grid used by experiments unless configured otherwise. Coarser than the
/// estimation default; the value at `x0` is insensitive to it.
pub const SIMULATION_GRID: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariate {
    /// Uniform on (0, 1).
    Uniform01,
    /// Bernoulli with success probability 1/2.
    Bernoulli05,
}

/// Weibull baseline, uniform censoring and a single covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSpec {
    pub shape: f64,
    pub scale: f64,
    pub censor_upper: f64,
    pub covariate: Covariate,
    pub beta0: f64,
    pub x0: f64,
}

impl ModelSpec {
    pub fn model1() -> Self {
        Self { shape: 1.5, scale: 1.0, censor_upper: 1.0, covariate: Covariate::Uniform01, beta0: 0.5, x0: 0.5 }
    }

    pub fn model2() -> Self {
        Self { shape: 3.0, scale: 1.0, censor_upper: 2.0, covariate: Covariate::Bernoulli05, beta0: 0.1, x0: 0.5 }
    }

    pub fn by_number(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Self::model1()),
            2 => Ok(Self::model2()),
            other => Err(Error::Domain(format!("unknown model {other} (expected 1 or 2)"))),
        }
    }
}

/// `λ₀(x) = (shape/scale) (x/scale)^{shape−1}`.
pub fn true_hazard(model: &ModelSpec, x: f64) -> f64 {
    if x <= 0.0 && model.shape > 1.0 {
        return 0.0;
    }
    model.shape / model.scale * (x / model.scale).powf(model.shape - 1.0)
}

/// Draw `n` observations by inversion.
pub fn generate_from<R: Rng + ?Sized>(model: &ModelSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let obs = (0..n)
        .map(|_| {
            let z = match model.covariate {
                Covariate::Uniform01 => rng.random::<f64>(),
                Covariate::Bernoulli05 => f64::from(u8::from(rng.random::<f64>() < 0.5)),
            };
            let e = -(1.0 - rng.random::<f64>()).ln();
            let x = model.scale * (e * (-model.beta0 * z).exp()).powf(1.0 / model.shape);
            let c = model.censor_upper * rng.random::<f64>();
            Observation::new(x.min(c), x <= c, vec![z])
        })
        .collect();
    Dataset::new(obs)
}

/// A sample from the stream `(seed, [DATA])`.
pub fn generate(model: &ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    generate_from(model, n, &mut stream(seed, &[DATA]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub method: Method,
    pub ci: CiMethod,
    pub seed: u64,
    /// Use this coefficient in place of the partial likelihood estimate.
    pub fix_beta: Option<f64>,
    pub level: f64,
    /// Bandwidth constant of the asymptotic intervals.
    pub c: f64,
    pub bootstrap_replicates: usize,
    pub grid_size: usize,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, n: usize, reps: usize, method: Method, ci: CiMethod, seed: u64) -> Self {
        Self {
            model,
            n,
            reps,
            method,
            ci,
            seed,
            fix_beta: None,
            level: 0.95,
            c: 1.0,
            bootstrap_replicates: 1000,
            grid_size: SIMULATION_GRID,
        }
    }

    pub fn settings(&self) -> Settings {
        let beta = match self.fix_beta {
            Some(b) => BetaSource::Fixed(vec![b]),
            None => BetaSource::Estimate,
        };
        Settings { beta, ..Settings::with_grid(self.grid_size) }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub beta: Option<f64>,
    pub estimate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

/// Average length and coverage over the successful replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub n: usize,
    pub method: Method,
    pub ci_type: CiMethod,
    pub fix_beta: Option<f64>,
    /// Successful replications, the denominator of both averages.
    pub replications: usize,
    pub covered: usize,
    pub average_length: f64,
    pub coverage: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub result: ExperimentResult,
    pub records: Vec<ReplicateRecord>,
}

/// Run `config.reps` replications with a caller-supplied interval
/// procedure. Replication `r` samples from the stream `(seed, [DATA, r])`.
pub fn run_with<F>(config: &ExperimentConfig, ci: F) -> Result<Experiment>
where
    F: Fn(&Dataset, usize) -> Result<CiResult> + Sync,
{
    if config.reps == 0 {
        return Err(Error::Domain("at least one replication is required".into()));
    }
    let truth = true_hazard(&config.model, config.model.x0);
    let records: Vec<ReplicateRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let outcome = generate_from(&config.model, config.n, &mut stream(config.seed, &[DATA, rep as u64]))
                .and_then(|data| ci(&data, rep));
            match outcome {
                Ok(r) => ReplicateRecord {
                    rep,
                    beta: r.beta.first().copied(),
                    estimate: Some(r.estimate),
                    lower: Some(r.lower),
                    upper: Some(r.upper),
                    covered: Some(r.covers(truth)),
                    error: None,
                },
                Err(e) => ReplicateRecord {
                    rep,
                    beta: None,
                    estimate: None,
                    lower: None,
                    upper: None,
                    covered: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let replications = ok.len();
    let covered = ok.iter().filter(|r| r.covered == Some(true)).count();
    let total_length: f64 = ok.iter().map(|r| r.upper.unwrap() - r.lower.unwrap()).sum();
    let result = ExperimentResult {
        n: config.n,
        method: config.method,
        ci_type: config.ci,
        fix_beta: config.fix_beta,
        replications,
        covered,
        average_length: if replications > 0 { total_length / replications as f64 } else { f64::NAN },
        coverage: if replications > 0 { covered as f64 / replications as f64 } else { f64::NAN },
        failures: config.reps - replications,
    };
    Ok(Experiment { result, records })
}

/// Coverage experiment for the configured interval at `model.x0`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let settings = config.settings();
    let x0 = config.model.x0;
    run_with(config, |data, rep| match config.ci {
        CiMethod::Asymptotic => asymptotic_ci_with(&Triweight, data, x0, config.level, config.method, config.c, &settings),
        CiMethod::Bootstrap => bootstrap_ci_with(
            &Triweight,
            data,
            x0,
            config.level,
            config.method,
            &BootstrapOptions::new(config.bootstrap_replicates, derive(config.seed, &[BOOT, rep as u64])),
            &settings,
        ),
    })
}

/// Sample sizes of the asymptotic-interval table.
pub const TABLE1_SIZES: [usize; 4] = [100, 500, 1000, 5000];
/// Sample sizes of the bootstrap table.
pub const TABLE2_SIZES: [usize; 3] = [100, 500, 1000];

/// Asymptotic intervals under Model 1 for both estimators, with estimated
/// and with true coefficients.
pub fn table1_configs(sizes: &[usize], reps: usize, seed: u64) -> Vec<ExperimentConfig> {
    let model = ModelSpec::model1();
    let mut out = Vec::new();
    for &n in sizes {
        for fix_beta in [None, Some(model.beta0)] {
            for method in [Method::Msle, Method::Isbe] {
                out.push(ExperimentConfig { fix_beta, ..ExperimentConfig::new(model, n, reps, method, CiMethod::Asymptotic, seed) });
            }
        }
    }
    out
}

/// Bootstrap intervals under both models for both estimators.
pub fn table2_configs(sizes: &[usize], reps: usize, replicates: usize, seed: u64) -> Vec<(u32, ExperimentConfig)> {
    let mut out = Vec::new();
    for model_id in [1, 2] {
        let model = ModelSpec::by_number(model_id).expect("built-in model");
        for &n in sizes {
            for method in [Method::Msle, Method::Isbe] {
                let config = ExperimentConfig {
                    bootstrap_replicates: replicates,
                    ..ExperimentConfig::new(model, n, reps, method, CiMethod::Bootstrap, seed)
                };
                out.push((model_id, config));
            }
        }
    }
    out
}

/// Per-replication CSV dump.
pub fn write_records_csv<W: Write>(records: &[ReplicateRecord], mut out: W) -> Result<()> {
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map_or_else(String::new, T::to_string)
    }
    writeln!(out, "rep,beta,estimate,lower,upper,covered,error")?;
    for r in records {
        let error = r.error.as_deref().unwrap_or("").replace(['"', ','], ";");
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.rep,
            opt(&r.beta),
            opt(&r.estimate),
            opt(&r.lower),
            opt(&r.upper),
            opt(&r.covered),
            error
        )?;
    }
    Ok(())
}
