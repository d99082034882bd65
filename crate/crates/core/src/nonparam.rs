//! Step-function estimators: Breslow, the uncensored sub-distribution and
//! Kaplan–Meier for the censoring law.

use crate::data::{Dataset, StepFunction};
use crate::error::{Error, Result};

/// Distinct times carrying at least one observation with `event == want`,
/// with their multiplicities and the index of the first observation at that
/// time.
fn grouped(data: &Dataset, want: bool) -> Vec<(f64, usize, usize)> {
    let times = data.times();
    let events = data.events();
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < times.len() {
        let t = times[i];
        let mut j = i;
        let mut count = 0;
        while j < times.len() && times[j] == t {
            count += usize::from(events[j] == want);
            j += 1;
        }
        if count > 0 {
            out.push((t, count, i));
        }
        i = j;
    }
    out
}

/// `Λ_n(x) = Σ_{event times T_i ≤ x} 1 / (n Φ_n(T_i; β))`, one knot per
/// distinct event time.
pub fn breslow(data: &Dataset, beta: &[f64]) -> Result<StepFunction> {
    if beta.len() != data.p() {
        return Err(Error::Domain(format!("beta has dimension {}, expected {}", beta.len(), data.p())));
    }
    let weights = data.risk_weights(beta);
    // suffix[i] = Σ_{j >= i} exp(β'Z_j), i.e. n Φ_n(T_i) when i starts its tie group
    let mut suffix = vec![0.0; weights.len() + 1];
    for i in (0..weights.len()).rev() {
        suffix[i] = suffix[i + 1] + weights[i];
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut total = 0.0;
    for (t, deaths, first) in grouped(data, true) {
        let at_risk = suffix[first];
        if !(at_risk > 0.0) {
            return Err(Error::Numeric(format!("empty weighted risk set at event time {t}")));
        }
        total += deaths as f64 / at_risk;
        knots.push(t);
        values.push(total);
    }
    StepFunction::new(knots, values, 0.0)
}

/// Empirical sub-distribution function of the uncensored observations.
pub fn uncensored_ecdf(data: &Dataset) -> StepFunction {
    let n = data.len() as f64;
    let mut count = 0;
    let (knots, values) = grouped(data, true)
        .into_iter()
        .map(|(t, d, _)| {
            count += d;
            (t, count as f64 / n)
        })
        .unzip();
    StepFunction::new(knots, values, 0.0).expect("distinct sorted times")
}

/// Kaplan–Meier distribution function of the censoring times, treating
/// censoring as the event. Events tied with a censoring are taken to occur
/// first and so leave the censoring risk set.
pub fn kaplan_meier_censoring(data: &Dataset) -> StepFunction {
    let n = data.len();
    let mut survival = 1.0;
    let (knots, values) = grouped(data, false)
        .into_iter()
        .map(|(t, censored, first)| {
            let tied_events = data.times()[first..].iter().zip(&data.events()[first..])
                .take_while(|(s, _)| **s == t)
                .filter(|(_, e)| **e)
                .count();
            let at_risk = (n - first - tied_events) as f64;
            survival *= 1.0 - censored as f64 / at_risk;
            (t, 1.0 - survival)
        })
        .unzip();
    StepFunction::new(knots, values, 0.0).expect("distinct sorted times")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use monohaz_testkit::{nelson_aalen, SplitMix};

    fn dataset(rows: &[(f64, bool, f64)]) -> Dataset {
        Dataset::new(rows.iter().map(|&(t, e, z)| Observation::new(t, e, vec![z])).collect()).unwrap()
    }

    fn small() -> Dataset {
        dataset(&[(1.0, true, 0.0), (2.0, false, 0.0), (3.0, true, 0.0)])
    }

    #[test]
    fn breslow_hand_case() {
        let b = breslow(&small(), &[0.0]).unwrap();
        assert_eq!(b.knots(), &[1.0, 3.0]);
        let j = b.jumps();
        assert!((j[0] - 1.0 / 3.0).abs() < 1e-15 && (j[1] - 1.0).abs() < 1e-15);
        assert!((b.eval(3.0) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.eval(0.5), 0.0);
        // plateau between event times
        assert_eq!(b.eval(2.0), b.eval(1.0));
    }

    #[test]
    fn breslow_at_zero_beta_is_nelson_aalen() {
        let mut rng = SplitMix(11);
        let rows: Vec<(f64, bool, f64)> = (0..60)
            .map(|_| ((rng.uniform() * 30.0).floor() / 10.0, rng.uniform() < 0.6, rng.uniform()))
            .chain(std::iter::once((0.05, true, 0.0)))
            .collect();
        let d = dataset(&rows);
        assert!(d.has_ties());
        let b = breslow(&d, &[0.0]).unwrap();
        assert!(b.is_nondecreasing());
        let (times, events): (Vec<f64>, Vec<bool>) = rows.iter().map(|r| (r.0, r.1)).unzip();
        for x in [0.0, 0.05, 0.3, 1.0, 1.55, 2.9, 3.5] {
            assert!((b.eval(x) - nelson_aalen(&times, &events, x)).abs() < 1e-12, "x = {x}");
        }
        let distinct_event_times = {
            let mut t: Vec<f64> = rows.iter().filter(|r| r.1).map(|r| r.0).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t.len()
        };
        assert_eq!(b.knots().len(), distinct_event_times);
    }

    #[test]
    fn breslow_uses_relative_risks() {
        let d = dataset(&[(1.0, true, 1.0), (2.0, true, 0.0)]);
        let b = breslow(&d, &[0.5]).unwrap();
        let first = 1.0 / (0.5f64.exp() + 1.0);
        assert!((b.eval(1.0) - first).abs() < 1e-15);
        assert!((b.eval(2.0) - first - 1.0).abs() < 1e-15);
        assert!(breslow(&d, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn uncensored_ecdf_hand_case() {
        let h = uncensored_ecdf(&small());
        assert!((h.eval(2.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.eval(3.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.eval(-1.0), 0.0);
    }

    #[test]
    fn censoring_km_hand_case() {
        let g = kaplan_meier_censoring(&small());
        assert_eq!(g.eval(1.9), 0.0);
        assert!((g.eval(2.0) - 0.5).abs() < 1e-15);
        assert!((g.eval(10.0) - 0.5).abs() < 1e-15);
        let none = dataset(&[(1.0, true, 0.0), (2.0, true, 0.0)]);
        let g = kaplan_meier_censoring(&none);
        assert!(g.knots().is_empty());
        assert_eq!(g.eval(5.0), 0.0);
    }

    #[test]
    fn censoring_km_is_a_distribution_function() {
        let mut rng = SplitMix(5);
        let rows: Vec<(f64, bool, f64)> =
            (0..200).map(|_| ((rng.uniform() * 50.0).floor(), rng.uniform() < 0.4, 0.0)).collect();
        let mut rows = rows;
        rows.push((1.0, true, 0.0));
        let g = kaplan_meier_censoring(&dataset(&rows));
        assert!(g.is_nondecreasing());
        assert!(g.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
