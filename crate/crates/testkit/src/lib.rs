//! Independent numerical oracles for the monohaz test suites.
//!
//! Nothing in here shares code with the production crate: quadrature is
//! plain adaptive Gauss–Kronrod, isotonic regression is brute force over
//! block partitions, and the survival estimators are written from their
//! textbook definitions.

/// 15-point Kronrod nodes on [0, 1] (symmetric half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
/// 7-point Gauss weights, matching the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (left, el) = gk15(f, a, c);
    let (right, er) = gk15(f, c, b);
    let refined = left + right;
    if depth == 0 || (el + er <= tol && (refined - whole).abs() <= 50.0 * tol) || (b - a) < 1e-14 {
        return refined;
    }
    adapt(f, a, c, left, 0.5 * tol, depth - 1) + adapt(f, c, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b == a {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    let (whole, _) = gk15(&f, a, b);
    adapt(&f, a, b, whole, tol, 40)
}

/// Quadrature split at the supplied breakpoints (kinks, jumps). Breakpoints
/// outside `[a, b]` are ignored.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pieces = (pts.len() - 1) as f64;
    pts.windows(2).map(|w| integrate(&f, w[0], w[1], tol / pieces)).sum()
}

/// Central finite difference.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Weighted isotonic regression by exhaustive search over the 2^(n-1)
/// partitions of `0..n` into contiguous blocks. Only feasible for small `n`.
pub fn brute_force_isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 1 && n <= 16, "brute force only for small inputs");
    assert_eq!(n, weights.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << (n - 1)) {
        // bit j set => a block boundary between j and j + 1
        let mut fitted = vec![0.0; n];
        let mut start = 0;
        let mut prev_mean = f64::NEG_INFINITY;
        let mut feasible = true;
        for end in 0..n {
            let boundary = end == n - 1 || mask & (1 << end) != 0;
            if !boundary {
                continue;
            }
            let sw: f64 = weights[start..=end].iter().sum();
            let swy: f64 = (start..=end).map(|i| weights[i] * values[i]).sum();
            let mean = swy / sw;
            if mean < prev_mean {
                feasible = false;
                break;
            }
            prev_mean = mean;
            fitted[start..=end].iter_mut().for_each(|v| *v = mean);
            start = end + 1;
        }
        if !feasible {
            continue;
        }
        let loss: f64 = (0..n).map(|i| weights[i] * (fitted[i] - values[i]).powi(2)).sum();
        if best.as_ref().map_or(true, |(l, _)| loss < *l) {
            best = Some((loss, fitted));
        }
    }
    best.expect("the all-pooled partition is always feasible").1
}

/// Nelson–Aalen cumulative hazard at `x`: sum over distinct event times
/// `t <= x` of d(t) / r(t), with r(t) the number of subjects with time >= t.
pub fn nelson_aalen(times: &[f64], events: &[bool], x: f64) -> f64 {
    let mut distinct: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(t, e)| **e && **t <= x)
        .map(|(t, _)| *t)
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    distinct
        .iter()
        .map(|&t| {
            let d = times.iter().zip(events).filter(|(s, e)| **e && **s == t).count() as f64;
            let r = times.iter().filter(|&&s| s >= t).count() as f64;
            d / r
        })
        .sum()
}

/// Two-sided Kolmogorov–Smirnov distance between a sample and a continuous cdf.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (f - lo).abs().max((hi - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > tol {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Small deterministic generator (splitmix64) so oracles never depend on
/// the production RNG plumbing.
#[derive(Debug, Clone)]
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
