//! Kernel-smoothed processes: `v_n`, `w_n`, the continuous cumulative sum
//! diagram built from their integrals, and the smoothed Breslow estimator
//! together with its derivative.

use serde::Serialize;

use crate::data::{Dataset, StepFunction};
use crate::error::{Error, Result};
use crate::kernels::{BoundaryKernel, Kernel};

fn check_bandwidth(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bandwidth {b} must be positive and finite")))
    }
}

/// `v_n(t) = n⁻¹ Σ Δ_i k_b(t − T_i)`.
pub fn v_n<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, t: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let sum: f64 = data
        .iter()
        .filter(|o| o.event)
        .map(|o| kernel.value((t - o.time) / b))
        .sum();
    Ok(sum / (b * data.len() as f64))
}

/// `w_n(t; β) = n⁻¹ Σ exp(β'Z_i) ∫_t^∞ k_b(u − T_i) du`.
pub fn w_n<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, t: f64, beta: &[f64]) -> Result<f64> {
    check_bandwidth(b)?;
    let weights = data.risk_weights(beta);
    let sum: f64 = data
        .times()
        .iter()
        .zip(&weights)
        .map(|(&s, &w)| w * (1.0 - kernel.antiderivative((t - s) / b)))
        .sum();
    Ok(sum / data.len() as f64)
}

/// `v_n(x) / w_n(x; β)`.
pub fn naive_msle<K: Kernel + ?Sized>(kernel: &K, data: &Dataset, b: f64, beta: &[f64], x: f64) -> Result<f64> {
    let w = w_n(kernel, data, b, x, beta)?;
    if !(w > 0.0) {
        return Err(Error::Domain(format!("w_n({x}) = {w} is not positive: x lies outside the estimator's domain")));
    }
    Ok(v_n(kernel, data, b, x)? / w)
}

/// The curve `t ↦ (∫₀ᵗ w_n, ∫₀ᵗ v_n)` sampled on a uniform grid of
/// `[0, max T + b]`, together with `w_n` and `v_n` at the grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CusumDiagram {
    pub t_grid: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub bandwidth: f64,
}

impl CusumDiagram {
    /// Right end `τ̂` of the diagram, beyond which `w_n` vanishes.
    pub fn tau(&self) -> f64 {
        *self.t_grid.last().expect("diagram has at least two points")
    }
}

/// Build the diagram from closed-form kernel antiderivatives.
///
/// Each cell increment is computed directly, visiting only observations
/// within one bandwidth of the cell; prefix and suffix sums cover the rest.
pub fn cusum_diagram<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    b: f64,
    beta: &[f64],
    grid_size: usize,
) -> Result<CusumDiagram> {
    check_bandwidth(b)?;
    if grid_size < 2 {
        return Err(Error::Domain(format!("grid size {grid_size} must be at least 2")));
    }
    let n = data.len();
    let inv_n = 1.0 / n as f64;
    let times = data.times();
    let events = data.events();
    let omega = data.risk_weights(beta);
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("relative risk overflow".into()));
    }
    // tail[i] = Σ_{j >= i} ω_j
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + omega[i];
    }

    let tau = data.max_time() + b;
    let h = tau / (grid_size - 1) as f64;
    let t_grid: Vec<f64> = (0..grid_size).map(|j| if j + 1 == grid_size { tau } else { j as f64 * h }).collect();

    // (K, ∫K) at the previous grid point; (0, 0) is correct for anything
    // that has not yet entered the kernel window
    let mut prev_k = vec![0.0; n];
    let mut prev_k2 = vec![0.0; n];

    let mut x = Vec::with_capacity(grid_size);
    let mut y = Vec::with_capacity(grid_size);
    let mut w = Vec::with_capacity(grid_size);
    let mut v = Vec::with_capacity(grid_size);

    let mut lo_prev = 0; // first index with T_i > t_{j-1} - b
    let mut x_acc = 0.0;
    let mut y_acc = 0.0;
    for (j, &t) in t_grid.iter().enumerate() {
        let hi = times.partition_point(|&s| s < t + b);
        let lo = lo_prev + times[lo_prev..].partition_point(|&s| s <= t - b);
        let step = if j == 0 { 0.0 } else { t - t_grid[j - 1] };
        let first = if j == 0 { lo } else { lo_prev };

        let mut v_sum = 0.0;
        let mut w_sum = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in first..hi {
            let u = (t - times[i]) / b;
            let (kv, kk, kk2) = kernel.value_and_antiderivatives(u);
            w_sum += omega[i] * (1.0 - kk);
            dx += omega[i] * (step - b * (kk2 - prev_k2[i]));
            if events[i] {
                v_sum += kv;
                dy += kk - prev_k[i];
            }
            prev_k[i] = kk;
            prev_k2[i] = kk2;
        }
        w_sum += tail[hi];
        dx += step * tail[hi];

        if j > 0 {
            // w_n >= 0 for nonnegative kernels; clip rounding noise
            let dx = dx * inv_n;
            x_acc += if kernel.is_nonnegative() { dx.max(0.0) } else { dx };
            y_acc += dy * inv_n;
        }
        x.push(x_acc);
        y.push(y_acc);
        w.push(w_sum * inv_n);
        v.push(v_sum * inv_n / b);
        lo_prev = lo;
    }

    Ok(CusumDiagram { t_grid, x, y, w, v, bandwidth: b })
}

/// `Λ_n^s(x) = ∫ k_b(x − u) Λ_n(u) du = Σ_jumps J · K((x − s)/b)`.
pub fn smoothed_breslow<K: Kernel + ?Sized>(breslow: &StepFunction, kernel: &K, b: f64, x: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let base = breslow.initial();
    Ok(base
        + breslow
            .knots()
            .iter()
            .zip(breslow.jumps())
            .map(|(&s, jump)| jump * kernel.antiderivative((x - s) / b))
            .sum::<f64>())
}

/// `λ_n^s(x) = ∫ k_b(x − u) dΛ_n(u) = Σ_jumps J · k_b(x − s)`.
pub fn naive_isbe<K: Kernel + ?Sized>(breslow: &StepFunction, kernel: &K, b: f64, x: f64) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(breslow
        .knots()
        .iter()
        .zip(breslow.jumps())
        .map(|(&s, jump)| jump * kernel.value((x - s) / b))
        .sum::<f64>()
        / b)
}

/// Smoothed Breslow estimator on `[0, τ]` using the boundary-corrected
/// kernel wherever the kernel window would leave the interval.
///
/// At `x` the window in kernel coordinates is `[lo, hi]` with
/// `lo = max(−1, (x − τ)/b)` and `hi = min(1, x/b)`. Inside `[b, τ − b]`
/// this is the plain kernel.
#[derive(Debug, Clone)]
pub struct CorrectedBreslow<'k, K: ?Sized> {
    kernel: &'k K,
    knots: Vec<f64>,
    jumps: Vec<f64>,
    b: f64,
    tau: f64,
}

impl<'k, K: Kernel + ?Sized> CorrectedBreslow<'k, K> {
    pub fn new(breslow: &StepFunction, kernel: &'k K, b: f64, tau: f64) -> Result<Self> {
        check_bandwidth(b)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("truncation point {tau} must be positive")));
        }
        // the narrowest windows occur at the two end points
        BoundaryKernel::new(kernel, (-tau / b).max(-1.0), 0.0)?;
        BoundaryKernel::new(kernel, 0.0, (tau / b).min(1.0))?;
        Ok(Self { kernel, knots: breslow.knots().to_vec(), jumps: breslow.jumps(), b, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bandwidth(&self) -> f64 {
        self.b
    }

    /// `(Λ^s(x), dΛ^s/dx(x))` for `x ∈ [0, τ]`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let b = self.b;
        let k = self.kernel;
        let raw_lo = (x - self.tau) / b;
        let raw_hi = x / b;
        let lo = raw_lo.max(-1.0);
        let hi = raw_hi.min(1.0);
        // jumps at s contribute when (x - s)/b > lo, i.e. s < x - b lo
        let end = self.knots.partition_point(|&s| s < x - b * lo);
        let full = self.knots.partition_point(|&s| s <= x - b * hi);

        let mut value: f64 = self.jumps[..full].iter().sum();
        let mut slope = 0.0;

        if lo == -1.0 && hi == 1.0 {
            for i in full..end {
                let u = (x - self.knots[i]) / b;
                value += self.jumps[i] * k.antiderivative(u);
                slope += self.jumps[i] * k.value(u);
            }
            return (value, slope / b);
        }

        let m = |j: u32, u: f64| k.partial_moment(j, u);
        let (phi0, phi1, phi2) = (m(0, hi) - m(0, lo), m(1, hi) - m(1, lo), m(2, hi) - m(2, lo));
        let det = phi0 * phi2 - phi1 * phi1;
        let dlo = if raw_lo > -1.0 { 1.0 / b } else { 0.0 };
        let dhi = if raw_hi < 1.0 { 1.0 / b } else { 0.0 };
        let (k_lo, k_hi) = (k.value(lo), k.value(hi));
        let dphi0 = k_hi * dhi - k_lo * dlo;
        let dphi1 = hi * k_hi * dhi - lo * k_lo * dlo;
        let dphi2 = hi * hi * k_hi * dhi - lo * lo * k_lo * dlo;
        let ddet = dphi0 * phi2 + phi0 * dphi2 - 2.0 * phi1 * dphi1;
        let (m0_lo, m1_lo) = (m(0, lo), m(1, lo));

        for i in full..end {
            let s = (x - self.knots[i]) / b;
            let (m0, m1) = (m(0, s) - m0_lo, m(1, s) - m1_lo);
            let ks = k.value(s);
            let num = phi2 * m0 - phi1 * m1;
            let dnum = dphi2 * m0 + phi2 * (ks / b - k_lo * dlo) - dphi1 * m1 - phi1 * (s * ks / b - lo * k_lo * dlo);
            value += self.jumps[i] * num / det;
            slope += self.jumps[i] * (dnum * det - num * ddet) / (det * det);
        }
        (value, slope)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::kernels::Triweight;
    use crate::nonparam::breslow;
    use monohaz_testkit::{central_difference, integrate, integrate_with_breaks, SplitMix};

    const K: Triweight = Triweight;

    fn random_dataset(seed: u64, n: usize) -> Dataset {
        let mut rng = SplitMix(seed);
        let obs = (0..n)
            .map(|_| Observation::new(0.05 + rng.uniform(), rng.uniform() < 0.5, vec![rng.uniform()]))
            .chain(std::iter::once(Observation::new(0.6, true, vec![0.3])))
            .collect();
        Dataset::new(obs).unwrap()
    }

    #[test]
    fn v_n_single_observation() {
        let d = Dataset::new(vec![Observation::new(0.5, true, vec![0.0])]).unwrap();
        assert_eq!(v_n(&K, &d, 0.25, 0.5).unwrap(), 4.375);
        assert_eq!(v_n(&K, &d, 0.25, 0.76).unwrap(), 0.0);
        assert!(v_n(&K, &d, 0.0, 0.5).is_err());
    }

    #[test]
    fn v_n_integrates_to_event_fraction() {
        let d = random_dataset(1, 30);
        let b = 0.04;
        let breaks: Vec<f64> = d.times().iter().flat_map(|&t| [t - b, t + b]).collect();
        let mass = integrate_with_breaks(|t| v_n(&K, &d, b, t).unwrap(), 0.0, d.max_time() + b, &breaks, 1e-12);
        assert!((mass - d.event_count() as f64 / d.len() as f64).abs() < 1e-8);
    }

    #[test]
    fn w_n_limits() {
        let d = random_dataset(2, 20);
        let b = 0.05;
        assert!((w_n(&K, &d, b, 0.0, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w_n(&K, &d, b, d.max_time() + b + 0.01, &[0.0]).unwrap(), 0.0);
        let single = Dataset::new(vec![Observation::new(0.5, true, vec![1.0])]).unwrap();
        assert_eq!(w_n(&K, &single, 0.2, 0.5, &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn naive_msle_hand_case() {
        // one event at x, the rest far away on the right
        let x = 0.5;
        let b = 0.1;
        let mut obs = vec![Observation::new(x, true, vec![0.0])];
        obs.extend((0..4).map(|i| Observation::new(2.0 + i as f64, true, vec![0.0])));
        let d = Dataset::new(obs).unwrap();
        let n = 5.0;
        let expected = (K.value(0.0) / b) / n / ((n - 1.0 + 0.5) / n);
        assert!((naive_msle(&K, &d, b, &[0.0], x).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(naive_msle(&K, &d, b, &[0.0], 5.2), Err(Error::Domain(_))));
    }

    #[test]
    fn diagram_matches_quadrature() {
        for seed in 0..4 {
            let d = random_dataset(seed, 25);
            let b = 0.15;
            let beta = [0.7];
            let diag = cusum_diagram(&K, &d, b, &beta, 301).unwrap();
            assert_eq!((diag.x[0], diag.y[0]), (0.0, 0.0));
            let breaks: Vec<f64> = d.times().iter().flat_map(|&t| [t - b, t + b]).collect();
            for j in (0..301).step_by(37).chain([300]) {
                let t = diag.t_grid[j];
                let xq = integrate_with_breaks(|s| w_n(&K, &d, b, s, &beta).unwrap(), 0.0, t, &breaks, 1e-13);
                let yq = integrate_with_breaks(|s| v_n(&K, &d, b, s).unwrap(), 0.0, t, &breaks, 1e-13);
                assert!((diag.x[j] - xq).abs() < 1e-9, "x at {t}: {} vs {xq}", diag.x[j]);
                assert!((diag.y[j] - yq).abs() < 1e-9, "y at {t}");
                assert!((diag.w[j] - w_n(&K, &d, b, t, &beta).unwrap()).abs() < 1e-12);
                assert!((diag.v[j] - v_n(&K, &d, b, t).unwrap()).abs() < 1e-12);
            }
            assert!(diag.x.windows(2).all(|p| p[0] <= p[1]));
            assert_eq!(*diag.w.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn diagram_terminal_ordinate_is_event_fraction() {
        let d = random_dataset(8, 40);
        let b = 0.04; // every time is at least 0.05 from zero
        let diag = cusum_diagram(&K, &d, b, &[0.2], 50).unwrap();
        let frac = d.event_count() as f64 / d.len() as f64;
        assert!((diag.y.last().unwrap() - frac).abs() < 1e-12);
        assert!((diag.tau() - (d.max_time() + b)).abs() < 1e-15);
        assert!(cusum_diagram(&K, &d, b, &[0.2], 1).is_err());
    }

    #[test]
    fn plain_smoothed_breslow() {
        let d = Dataset::new(vec![
            Observation::new(1.0, true, vec![0.0]),
            Observation::new(2.0, false, vec![0.0]),
            Observation::new(3.0, true, vec![0.0]),
        ])
        .unwrap();
        let br = breslow(&d, &[0.0]).unwrap();
        // constant on the window
        assert!((smoothed_breslow(&br, &K, 0.5, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let x = 1.2;
        let q = integrate_with_breaks(|u| K.value((x - u) / 0.5) / 0.5 * br.eval(u), x - 0.5, x + 0.5, &[1.0, 3.0], 1e-14);
        assert!((smoothed_breslow(&br, &K, 0.5, x).unwrap() - q).abs() < 1e-10);
        let unit = StepFunction::new(vec![1.0], vec![1.0], 0.0).unwrap();
        assert_eq!(smoothed_breslow(&unit, &K, 0.3, 1.0).unwrap(), 0.5);
        assert_eq!(naive_isbe(&unit, &K, 0.3, 1.0).unwrap(), K.value(0.0) / 0.3);
        assert_eq!(naive_isbe(&unit, &K, 0.3, 1.31).unwrap(), 0.0);
        let fd = central_difference(|t| smoothed_breslow(&br, &K, 0.5, t).unwrap(), x, 1e-6);
        assert!((fd - naive_isbe(&br, &K, 0.5, x).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn corrected_breslow_matches_quadrature_and_derivative() {
        let d = random_dataset(21, 60);
        let br = breslow(&d, &[0.4]).unwrap();
        let b = 0.2;
        let tau = 0.9;
        let cb = CorrectedBreslow::new(&br, &K, b, tau).unwrap();
        for i in 0..=45 {
            let x = tau * i as f64 / 45.0;
            let lo = ((x - tau) / b).max(-1.0);
            let hi = (x / b).min(1.0);
            let bk = BoundaryKernel::new(&K, lo, hi).unwrap();
            let breaks: Vec<f64> = br.knots().iter().map(|s| (x - s) / b).collect();
            let q = integrate_with_breaks(|v| bk.value(v) * br.eval(x - b * v), lo, hi, &breaks, 1e-14);
            let (value, slope) = cb.eval(x);
            assert!((value - q).abs() < 1e-10, "x = {x}: {value} vs {q}");
            if x > 1e-3 && x < tau - 1e-3 {
                let fd = central_difference(|t| cb.value(t), x, 1e-6);
                assert!((fd - slope).abs() < 1e-4 * slope.abs().max(1.0), "x = {x}: {slope} vs {fd}");
            }
            if x >= b && x <= tau - b {
                assert!((value - smoothed_breslow(&br, &K, b, x).unwrap()).abs() < 1e-13);
                assert!((slope - naive_isbe(&br, &K, b, x).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn naive_isbe_integrates_to_smoothed_breslow_increment() {
        let d = random_dataset(4, 30);
        let br = breslow(&d, &[0.0]).unwrap();
        let b = 0.1;
        let (l, m) = (0.2, 0.8);
        let breaks: Vec<f64> = br.knots().iter().flat_map(|&t| [t - b, t + b]).collect();
        let q = integrate_with_breaks(|x| naive_isbe(&br, &K, b, x).unwrap(), l, m, &breaks, 1e-13);
        let diff = smoothed_breslow(&br, &K, b, m).unwrap() - smoothed_breslow(&br, &K, b, l).unwrap();
        assert!((q - diff).abs() < 1e-8);
        let _ = integrate(|x| x, 0.0, 1.0, 1e-12);
    }
}
