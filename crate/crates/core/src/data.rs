//! Right-censored survival data, step functions and sampled hazard curves.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One follow-up record `(T, Δ, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    /// `true` when the event was observed (uncensored).
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self { time, event, covariates }
    }
}

/// Borrowed view of one row of a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct ObsRef<'a> {
    pub time: f64,
    pub event: bool,
    pub covariates: &'a [f64],
}

/// Validated sample, stored column-wise and sorted by follow-up time.
///
/// At tied times events precede censorings; the sort is otherwise stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: Vec<f64>,
    p: usize,
    has_ties: bool,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Validation("dataset has no observations".into()))?;
        let p = first.covariates.len();
        if p == 0 {
            return Err(Error::Validation("at least one covariate is required".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if !obs.time.is_finite() || obs.time < 0.0 {
                return Err(Error::Validation(format!(
                    "observation {i}: follow-up time {} must be finite and nonnegative",
                    obs.time
                )));
            }
            if obs.covariates.len() != p {
                return Err(Error::Validation(format!(
                    "observation {i}: expected {p} covariates, found {}",
                    obs.covariates.len()
                )));
            }
            if obs.covariates.iter().any(|z| !z.is_finite()) {
                return Err(Error::Validation(format!("observation {i}: non-finite covariate")));
            }
        }
        if !observations.iter().any(|o| o.event) {
            return Err(Error::Degenerate("no uncensored observations".into()));
        }

        let mut order: Vec<usize> = (0..observations.len()).collect();
        // events (true) first at equal times
        order.sort_by(|&a, &b| {
            let (oa, ob) = (&observations[a], &observations[b]);
            oa.time.total_cmp(&ob.time).then(ob.event.cmp(&oa.event))
        });

        let n = observations.len();
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut covariates = Vec::with_capacity(n * p);
        for &i in &order {
            let obs = &observations[i];
            times.push(obs.time);
            events.push(obs.event);
            covariates.extend_from_slice(&obs.covariates);
        }
        let has_ties = times.windows(2).any(|w| w[0] == w[1]);
        if has_ties {
            log::debug!("dataset contains tied follow-up times");
        }
        Ok(Self { times, events, covariates, p, has_ties })
    }

    /// Read the `time,status,z1,...,zp` CSV schema from a file.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        if headers.len() < 3 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `time,status,z1,...,zp` with at least one covariate".into(),
            });
        }
        if !headers[0].eq_ignore_ascii_case("time") || !headers[1].eq_ignore_ascii_case("status") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header to start with `time,status`, found `{},{}`", &headers[0], &headers[1]),
            });
        }
        let p = headers.len() - 2;

        let mut observations = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |pos| pos.line());
            if record.len() != p + 2 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", p + 2, record.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("cannot parse {what} `{s}` as a number"),
                })
            };
            let time = parse(&record[0], "time")?;
            if !time.is_finite() || time < 0.0 {
                return Err(Error::Validation(format!(
                    "line {line}: follow-up time {time} must be finite and nonnegative"
                )));
            }
            let event = match &record[1] {
                "1" => true,
                "0" => false,
                other => {
                    // numeric but outside {0, 1} is a domain violation, anything else a parse error
                    return Err(match other.parse::<f64>() {
                        Ok(_) => Error::Validation(format!("line {line}: status `{other}` must be 0 or 1")),
                        Err(_) => Error::Parse { line, msg: format!("cannot parse status `{other}`") },
                    });
                }
            };
            let covariates = (0..p)
                .map(|j| parse(&record[j + 2], "covariate"))
                .collect::<Result<Vec<_>>>()?;
            observations.push(Observation { time, event, covariates });
        }
        Self::new(observations)
    }

    /// Write the dataset in the input schema. Numbers use the shortest
    /// representation that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "time,status")?;
        for j in 1..=self.p {
            write!(out, ",z{j}")?;
        }
        writeln!(out)?;
        for obs in self.iter() {
            write!(out, "{},{}", obs.time, u8::from(obs.event))?;
            for z in obs.covariates {
                write!(out, ",{z}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_ties(&self) -> bool {
        self.has_ties
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize) -> ObsRef<'_> {
        ObsRef { time: self.times[i], event: self.events[i], covariates: self.covariates(i) }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = ObsRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_observations(&self) -> Vec<Observation> {
        self.iter().map(|o| Observation::new(o.time, o.event, o.covariates.to_vec())).collect()
    }

    pub fn event_count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn max_time(&self) -> f64 {
        *self.times.last().expect("dataset is nonempty")
    }

    /// Linear predictors `β'Z_i`.
    pub fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.p, "beta has the wrong dimension");
        self.covariates
            .chunks_exact(self.p)
            .map(|z| z.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Relative risks `exp(β'Z_i)`.
    pub fn risk_weights(&self, beta: &[f64]) -> Vec<f64> {
        self.linear_predictors(beta).into_iter().map(f64::exp).collect()
    }

    /// The ⌈qn⌉-th order statistic of the follow-up times.
    pub fn empirical_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level {q} must lie in (0, 1)")));
        }
        let n = self.len();
        let r = q * n as f64;
        // 0.95 * 100 must give rank 95, not 96
        let rank = if (r - r.round()).abs() <= 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
        let rank = (rank as usize).clamp(1, n);
        Ok(self.times[rank - 1])
    }
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => Error::Parse { line, msg: format!("{kind:?}") },
    }
}

/// Right-continuous piecewise-constant function.
///
/// `values[j]` holds on `[knots[j], knots[j + 1])`; `initial` holds left of
/// the first knot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::Validation("knots and values differ in length".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation("knots must be strictly increasing".into()));
        }
        Ok(Self { knots, values, initial })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= x) {
            0 => self.initial,
            j => self.values[j - 1],
        }
    }

    /// Jump sizes at each knot.
    pub fn jumps(&self) -> Vec<f64> {
        let mut prev = self.initial;
        self.values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }

    pub fn terminal_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    pub fn is_nondecreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "knot,value")?;
        for (k, v) in self.knots.iter().zip(&self.values) {
            writeln!(out, "{k},{v}")?;
        }
        Ok(())
    }
}

/// Hazard estimate sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    /// Set only when `values` is nondecreasing.
    pub monotone: bool,
}

impl HazardCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, bandwidth: f64, monotone: bool) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        debug_assert!(!monotone || values.windows(2).all(|w| w[0] <= w[1]));
        Self { grid, values, bandwidth, monotone }
    }

    /// Linear interpolation between grid points; `None` outside the grid.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let (first, last) = (*self.grid.first()?, *self.grid.last()?);
        if !(x >= first && x <= last) {
            return None;
        }
        let j = self.grid.partition_point(|&g| g < x);
        if self.grid[j] == x {
            return Some(self.values[j]);
        }
        let (x0, x1) = (self.grid[j - 1], self.grid[j]);
        let (y0, y1) = (self.values[j - 1], self.values[j]);
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value")?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::from_csv_reader(text.as_bytes())
    }

    #[test]
    fn three_row_file() {
        let d = parse("time,status,z1\n1,1,0.2\n2,0,0.7\n3,1,0.1\n").unwrap();
        assert_eq!(d.p(), 1);
        assert_eq!(d.times(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.events(), &[true, false, true]);
        assert_eq!(d.covariates(1), &[0.7]);
    }

    #[test]
    fn rows_out_of_order_are_sorted() {
        let d = parse("time,status,z1\n3,1,0.1\n1,1,0.2\n2,0,0.7\n").unwrap();
        assert_eq!(d.times(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.covariates(0), &[0.2]);
    }

    #[test]
    fn status_two_is_rejected() {
        let err = parse("time,status,z1\n1,2,0.2\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        match parse("time,status,z1\n1,1,0.2\n2,0,abc\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(parse("time,status,z1\n1,1\n").unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn negative_time_and_no_events() {
        assert!(matches!(parse("time,status,z1\n-1,1,0\n").unwrap_err(), Error::Validation(_)));
        assert!(matches!(parse("time,status,z1\n1,0,0\n2,0,1\n").unwrap_err(), Error::Degenerate(_)));
        assert!(matches!(parse("time,status,z1\n").unwrap_err(), Error::Validation(_)));
        assert!(matches!(parse("time,status\n1,1\n").unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn ties_put_events_first() {
        let d = parse("time,status,z1\n2,0,1\n2,1,2\n1,0,3\n").unwrap();
        assert!(d.has_ties());
        assert_eq!(d.events(), &[false, true, false]);
        assert_eq!(d.covariates(1), &[2.0]);
    }

    #[test]
    fn quantile_convention() {
        let d = parse("time,status,z1\n1,1,0\n2,1,0\n3,1,0\n4,1,0\n5,1,0\n").unwrap();
        assert_eq!(d.empirical_quantile(0.95).unwrap(), 5.0);
        assert_eq!(d.empirical_quantile(0.5).unwrap(), 3.0);
        assert_eq!(d.empirical_quantile(0.2).unwrap(), 1.0);
        assert_eq!(d.empirical_quantile(0.4).unwrap(), 2.0);
        assert!(matches!(d.empirical_quantile(1.0), Err(Error::Domain(_))));
        assert!(matches!(d.empirical_quantile(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_rank_is_not_fooled_by_rounding() {
        let obs = (1..=100).map(|i| Observation::new(i as f64, true, vec![0.0])).collect();
        let d = Dataset::new(obs).unwrap();
        assert_eq!(d.empirical_quantile(0.95).unwrap(), 95.0);
    }

    #[test]
    fn step_function_is_right_continuous() {
        let f = StepFunction::new(vec![1.0, 3.0], vec![1.0 / 3.0, 4.0 / 3.0], 0.0).unwrap();
        assert_eq!(f.eval(0.999), 0.0);
        assert_eq!(f.eval(1.0), 1.0 / 3.0);
        assert_eq!(f.eval(3.0), 4.0 / 3.0);
        assert_eq!(f.jumps(), vec![1.0 / 3.0, 1.0]);
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn curve_interpolates() {
        let c = HazardCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0], 0.5, true);
        assert_eq!(c.eval(0.5), Some(0.5));
        assert_eq!(c.eval(1.5), Some(2.0));
        assert_eq!(c.eval(2.0), Some(3.0));
        assert_eq!(c.eval(2.1), None);
    }
}
