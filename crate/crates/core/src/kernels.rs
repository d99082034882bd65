//! Smoothing kernels supported on [-1, 1].

use std::fmt::Debug;

use crate::error::{Error, Result};

/// An m-orthogonal kernel on [-1, 1] with closed-form antiderivatives.
pub trait Kernel: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Orthogonality order m.
    fn order(&self) -> u32;

    fn value(&self, u: f64) -> f64;

    fn derivative(&self, u: f64) -> f64;

    /// `K(u) = ∫_{-1}^u k`.
    fn antiderivative(&self, u: f64) -> f64;

    /// `∫_{-1}^u K`. Equals `u` for `u >= 1` when the first moment vanishes.
    fn second_antiderivative(&self, u: f64) -> f64;

    /// `∫_{-1}^u s^j k(s) ds` for `j` in `0..=2`.
    fn partial_moment(&self, j: u32, u: f64) -> f64;

    /// `∫ k²`.
    fn squared_integral(&self) -> f64;

    fn is_nonnegative(&self) -> bool {
        self.order() <= 2
    }

    /// `(k(u), K(u), ∫_{-1}^u K)` in one call.
    #[inline]
    fn value_and_antiderivatives(&self, u: f64) -> (f64, f64, f64) {
        (self.value(u), self.antiderivative(u), self.second_antiderivative(u))
    }
}

/// `k(u) = (35/32)(1 - u²)³` on `|u| <= 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Triweight;

const C: f64 = 35.0 / 32.0;

impl Kernel for Triweight {
    fn name(&self) -> &'static str {
        "triweight"
    }

    fn order(&self) -> u32 {
        2
    }

    #[inline]
    fn value(&self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        C * s * s * s
    }

    #[inline]
    fn derivative(&self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        -6.0 * C * u * s * s
    }

    #[inline]
    fn antiderivative(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let u2 = u * u;
        // u - u³ + 3u⁵/5 - u⁷/7
        0.5 + C * u * (1.0 + u2 * (-1.0 + u2 * (0.6 - u2 / 7.0)))
    }

    #[inline]
    fn second_antiderivative(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return u;
        }
        let u2 = u * u;
        // u²/2 - u⁴/4 + u⁶/10 - u⁸/56
        35.0 / 256.0 + 0.5 * u + C * u2 * (0.5 + u2 * (-0.25 + u2 * (0.1 - u2 / 56.0)))
    }

    fn partial_moment(&self, j: u32, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        match j {
            0 => self.antiderivative(u),
            1 => {
                let s = 1.0 - u * u;
                -35.0 / 256.0 * (s * s) * (s * s)
            }
            2 => {
                let u2 = u * u;
                // u³/3 - 3u⁵/5 + 3u⁷/7 - u⁹/9
                1.0 / 18.0 + C * u * u2 * (1.0 / 3.0 + u2 * (-0.6 + u2 * (3.0 / 7.0 - u2 / 9.0)))
            }
            _ => panic!("partial moments are provided for j <= 2 only"),
        }
    }

    fn squared_integral(&self) -> f64 {
        350.0 / 429.0
    }

    #[inline]
    fn value_and_antiderivatives(&self, u: f64) -> (f64, f64, f64) {
        if u <= -1.0 {
            return (0.0, 0.0, 0.0);
        }
        if u >= 1.0 {
            return (0.0, 1.0, u);
        }
        let u2 = u * u;
        let s = 1.0 - u2;
        (
            C * s * s * s,
            0.5 + C * u * (1.0 + u2 * (-1.0 + u2 * (0.6 - u2 / 7.0))),
            35.0 / 256.0 + 0.5 * u + C * u2 * (0.5 + u2 * (-0.25 + u2 * (0.1 - u2 / 56.0))),
        )
    }
}

/// Look up a built-in kernel by name.
pub fn by_name(name: &str) -> Result<Triweight> {
    match name {
        "triweight" => Ok(Triweight),
        other => Err(Error::Domain(format!("unknown kernel `{other}` (available: triweight)"))),
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bandwidth {b} must be positive and finite")))
    }
}

/// `k_b(u) = k(u / b) / b`.
pub fn eval_scaled<K: Kernel + ?Sized>(kernel: &K, b: f64, u: f64) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(kernel.value(u / b) / b)
}

/// `∫_t^∞ k_b(u - s) du = 1 - K((t - s) / b)`.
pub fn survival_integral<K: Kernel + ?Sized>(kernel: &K, b: f64, t: f64, s: f64) -> f64 {
    1.0 - kernel.antiderivative((t - s) / b)
}

/// Kernel restricted to `[lo, hi] ⊂ [-1, 1]` and reweighted by a linear
/// factor so that it keeps unit mass and a vanishing first moment:
/// `k_c(u) = (φ₂ - φ₁ u) k(u) / (φ₀ φ₂ - φ₁²)`, `φ_j = ∫_lo^hi u^j k`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryKernel<'a, K: ?Sized> {
    base: &'a K,
    lo: f64,
    hi: f64,
    phi0: f64,
    phi1: f64,
    phi2: f64,
    det: f64,
}

impl<'a, K: Kernel + ?Sized> BoundaryKernel<'a, K> {
    pub fn new(base: &'a K, lo: f64, hi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || !(lo < hi) {
            return Err(Error::Domain(format!("boundary kernel support [{lo}, {hi}] must be a subinterval of [-1, 1]")));
        }
        let (phi0, phi1, phi2) = moments_on(base, lo, hi);
        let det = phi0 * phi2 - phi1 * phi1;
        if !(phi0 > 0.0 && det > 1e-10 * phi0 * phi2) {
            return Err(Error::Numeric(format!(
                "boundary kernel on [{lo}, {hi}] has a degenerate moment matrix (det = {det:e})"
            )));
        }
        Ok(Self { base, lo, hi, phi0, phi1, phi2, det })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn value(&self, u: f64) -> f64 {
        if u < self.lo || u > self.hi {
            return 0.0;
        }
        (self.phi2 - self.phi1 * u) * self.base.value(u) / self.det
    }

    /// `∫_lo^u k_c`.
    pub fn cdf(&self, u: f64) -> f64 {
        let u = u.clamp(self.lo, self.hi);
        let m0 = self.base.partial_moment(0, u) - self.base.partial_moment(0, self.lo);
        let m1 = self.base.partial_moment(1, u) - self.base.partial_moment(1, self.lo);
        (self.phi2 * m0 - self.phi1 * m1) / self.det
    }

    /// `(φ₀, φ₁, φ₂)`.
    pub fn moments(&self) -> (f64, f64, f64) {
        (self.phi0, self.phi1, self.phi2)
    }
}

/// `∫_lo^hi u^j k(u) du` for `j = 0, 1, 2`.
pub(crate) fn moments_on<K: Kernel + ?Sized>(base: &K, lo: f64, hi: f64) -> (f64, f64, f64) {
    let m = |j| base.partial_moment(j, hi) - base.partial_moment(j, lo);
    (m(0), m(1), m(2))
}

/// Boundary-corrected kernel on `[-1, cut]`.
pub fn boundary_kernel<K: Kernel + ?Sized>(base: &K, cut: f64) -> Result<impl Fn(f64) -> f64 + '_> {
    let bk = BoundaryKernel::new(base, -1.0, cut)?;
    Ok(move |u| bk.value(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use monohaz_testkit::{central_difference, integrate, integrate_with_breaks};

    const K: Triweight = Triweight;

    #[test]
    fn triweight_values() {
        assert_eq!(K.value(0.0), 1.09375);
        assert_eq!(K.value(1.5), 0.0);
        assert_eq!(K.value(-1.0), 0.0);
        let k2 = integrate(|u| K.value(u).powi(2), -1.0, 1.0, 1e-14);
        assert!((k2 - K.squared_integral()).abs() < 1e-12);
        assert!((k2 - 0.8159).abs() < 1e-4);
    }

    #[test]
    fn moment_conditions_by_quadrature() {
        let mass = integrate(|u| K.value(u), -1.0, 1.0, 1e-14);
        let first = integrate(|u| u * K.value(u), -1.0, 1.0, 1e-14);
        let second = integrate(|u| u * u * K.value(u), -1.0, 1.0, 1e-14);
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(first.abs() < 1e-10);
        assert!((second - 1.0 / 9.0).abs() < 1e-12);
        assert!((K.partial_moment(2, 1.0) - second).abs() < 1e-14);
        assert!(K.partial_moment(1, 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let worst = (0..1000)
            .map(|i| -1.2 + 2.4 * (i as f64 + 0.5) / 1000.0)
            .map(|u| (K.derivative(u) - central_difference(|v| K.value(v), u, 1e-5)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "worst FD error {worst}");
    }

    #[test]
    fn antiderivatives_match_quadrature() {
        for i in 0..=40 {
            let u = -1.3 + 2.6 * i as f64 / 40.0;
            let k = integrate_with_breaks(|s| K.value(s), -1.0, u.max(-1.0), &[], 1e-14);
            assert!((K.antiderivative(u) - k).abs() < 1e-10, "K({u})");
            let kk = integrate_with_breaks(|s| K.antiderivative(s), -1.0, u.max(-1.0), &[1.0], 1e-14);
            assert!((K.second_antiderivative(u) - kk).abs() < 1e-10, "K2({u})");
            for j in 0..=2 {
                let m = integrate(|s| s.powi(j as i32) * K.value(s), -1.0, u.clamp(-1.0, 1.0), 1e-14);
                assert!((K.partial_moment(j, u) - m).abs() < 1e-10, "M{j}({u})");
            }
            let (a, b, c) = K.value_and_antiderivatives(u);
            assert_eq!((a, b, c), (K.value(u), K.antiderivative(u), K.second_antiderivative(u)));
        }
    }

    #[test]
    fn scaled_kernel() {
        assert_eq!(eval_scaled(&K, 0.25, 0.0).unwrap(), 4.375);
        assert_eq!(eval_scaled(&K, 0.25, 0.3).unwrap(), 0.0);
        assert!(matches!(eval_scaled(&K, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(eval_scaled(&K, -1.0, 0.0), Err(Error::Domain(_))));
        let mass = integrate(|u| eval_scaled(&K, 0.1, u).unwrap(), -0.1, 0.1, 1e-14);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn survival_integral_limits() {
        assert_eq!(survival_integral(&K, 0.5, 0.0, 1.0), 1.0);
        assert_eq!(survival_integral(&K, 0.5, -3.0, 1.0), 1.0);
        assert_eq!(survival_integral(&K, 0.5, 1.5, 1.0), 0.0);
        assert_eq!(survival_integral(&K, 0.5, 1.0, 1.0), 0.5);
    }

    #[test]
    fn boundary_kernel_moments() {
        for cut in [-0.5, 0.0, 0.5, 1.0] {
            let k = boundary_kernel(&K, cut).unwrap();
            let mass = integrate(&k, -1.0, cut, 1e-14);
            let first = integrate(|u| u * k(u), -1.0, cut, 1e-14);
            assert!((mass - 1.0).abs() < 1e-10, "cut {cut}: mass {mass}");
            assert!(first.abs() < 1e-10, "cut {cut}: first moment {first}");
        }
        let interior = boundary_kernel(&K, 1.0).unwrap();
        assert!((interior(0.0) - 1.09375).abs() < 1e-14);
        assert!((interior(0.37) - K.value(0.37)).abs() < 1e-14);
    }

    #[test]
    fn two_sided_boundary_kernel_and_cdf() {
        let bk = BoundaryKernel::new(&K, -0.3, 0.6).unwrap();
        let mass = integrate(|u| bk.value(u), -0.3, 0.6, 1e-14);
        let first = integrate(|u| u * bk.value(u), -0.3, 0.6, 1e-14);
        assert!((mass - 1.0).abs() < 1e-10 && first.abs() < 1e-10);
        let part = integrate(|u| bk.value(u), -0.3, 0.2, 1e-14);
        assert!((bk.cdf(0.2) - part).abs() < 1e-12);
        assert!((bk.cdf(0.6) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boundary_kernel() {
        assert!(matches!(BoundaryKernel::new(&K, -1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(BoundaryKernel::new(&K, -1.0, -0.99999), Err(Error::Numeric(_))));
        assert!(BoundaryKernel::new(&K, -1.0, 1.5).is_err());
    }

    #[test]
    fn kernel_lookup() {
        assert_eq!(by_name("triweight").unwrap(), Triweight);
        assert!(by_name("gaussian").is_err());
    }
}
