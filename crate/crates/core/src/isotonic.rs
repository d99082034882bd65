//! Isotonization: greatest convex minorant slopes and weighted
//! pool-adjacent-violators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::smoothing::CusumDiagram;

/// Slopes of the greatest convex minorant of a cumulative sum diagram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotonicFit {
    pub grid: Vec<f64>,
    /// Left derivative of the minorant at each grid point; the first point
    /// takes the slope of the first segment.
    pub slopes: Vec<f64>,
    /// Indices where the minorant touches the diagram (hull vertices).
    pub touch_points: Vec<usize>,
    /// Minorant evaluated at each grid point.
    pub minorant: Vec<f64>,
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("diagram abscissa has {} points, ordinate {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Domain("a cumulative sum diagram needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in cumulative sum diagram".into()));
    }
    if x.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("diagram abscissa must be nondecreasing".into()));
    }
    if x[0] == x[x.len() - 1] {
        return Err(Error::Degenerate("all diagram abscissae are equal".into()));
    }
    Ok(())
}

/// Greatest convex minorant of the points `(x_j, y_j)` via a monotone
/// stack. Points sharing an abscissa collapse onto the lowest ordinate.
pub fn gcm_slopes(x: &[f64], y: &[f64]) -> Result<IsotonicFit> {
    validate(x, y)?;
    let n = x.len();

    let mut hull: Vec<usize> = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        // lowest point among those sharing x[j]
        let mut best = j;
        let mut k = j + 1;
        while k < n && x[k] == x[j] {
            if y[k] < y[best] {
                best = k;
            }
            k += 1;
        }
        j = k;

        let c = best;
        while hull.len() >= 2 {
            let m = hull[hull.len() - 1];
            let a = hull[hull.len() - 2];
            // drop m when it lies strictly above the chord from a to c
            if (y[m] - y[a]) * (x[c] - x[m]) > (y[c] - y[m]) * (x[m] - x[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }

    let segment_slope = |k: usize| (y[hull[k]] - y[hull[k - 1]]) / (x[hull[k]] - x[hull[k - 1]]);
    let mut slopes = Vec::with_capacity(n);
    let mut minorant = Vec::with_capacity(n);
    let mut seg = 1;
    for j in 0..n {
        // segment seg covers (x[hull[seg-1]], x[hull[seg]]]
        while seg < hull.len() - 1 && x[j] > x[hull[seg]] {
            seg += 1;
        }
        let s = segment_slope(seg);
        slopes.push(s);
        let anchor = hull[seg - 1];
        minorant.push(y[anchor] + s * (x[j] - x[anchor]));
    }
    Ok(IsotonicFit { grid: x.to_vec(), slopes, touch_points: hull, minorant })
}

/// Least concave majorant, for nonincreasing targets. Slopes are
/// nonincreasing and `minorant` holds the majorant.
pub fn lcm_slopes(x: &[f64], y: &[f64]) -> Result<IsotonicFit> {
    let negated: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut fit = gcm_slopes(x, &negated)?;
    fit.slopes.iter_mut().for_each(|s| *s = -*s);
    fit.minorant.iter_mut().for_each(|m| *m = -*m);
    Ok(fit)
}

/// Nondecreasing minimizer of `Σ w_j (λ_j − r_j)²`.
pub fn pava_weighted(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(Error::Domain("values and weights differ in length".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!("weight {w} must be positive and finite")));
    }
    // (Σw, Σwy, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&r, &w) in values.iter().zip(weights) {
        blocks.push((w, w * r, 1));
        while blocks.len() >= 2 {
            let (w1, s1, c1) = blocks[blocks.len() - 1];
            let (w0, s0, c0) = blocks[blocks.len() - 2];
            if s0 / w0 > s1 / w1 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (w0 + w1, s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    Ok(blocks.iter().flat_map(|&(w, s, c)| std::iter::repeat(s / w).take(c)).collect())
}

/// Slopes of the minorant of a diagram whose curve `t ↦ (x(t), y(t))` is
/// known together with its derivative `dy/dx` at the grid points.
///
/// Where consecutive grid points are both touch points the minorant follows
/// the curve, so its slope there is the curve's own derivative rather than
/// the chord through the two samples. Elsewhere the chord slope of the hull
/// segment applies. A final weighted PAVA pass only fires if discretization
/// left a violation of monotonicity.
pub fn isotonize_diagram(x: &[f64], y: &[f64], derivative: &[Option<f64>]) -> Result<IsotonicFit> {
    if derivative.len() != x.len() {
        return Err(Error::Domain("derivative samples do not match the diagram".into()));
    }
    let mut fit = gcm_slopes(x, y)?;
    let n = x.len();
    let mut on_hull = vec![false; n];
    for &v in &fit.touch_points {
        on_hull[v] = true;
    }
    for j in 0..n {
        let (a, b) = if j == 0 { (0, 1) } else { (j - 1, j) };
        if on_hull[a] && on_hull[b] && x[b] > x[a] {
            if let Some(d) = derivative[j].filter(|d| d.is_finite()) {
                fit.slopes[j] = d;
            }
        }
    }
    if fit.slopes.windows(2).any(|w| w[1] < w[0]) {
        let weights: Vec<f64> = (0..n)
            .map(|j| {
                let w = if j == 0 { x[1] - x[0] } else { x[j] - x[j - 1] };
                w.max(f64::MIN_POSITIVE)
            })
            .collect();
        fit.slopes = pava_weighted(&fit.slopes, &weights)?;
    }
    Ok(fit)
}

/// Isotonized smoothed-likelihood estimate on the diagram's time grid.
pub fn isotonize_msle(diagram: &CusumDiagram) -> Result<IsotonicFit> {
    let derivative: Vec<Option<f64>> = diagram
        .v
        .iter()
        .zip(&diagram.w)
        .map(|(&v, &w)| (w > 0.0).then(|| v / w))
        .collect();
    let mut fit = isotonize_diagram(&diagram.x, &diagram.y, &derivative)?;
    fit.grid = diagram.t_grid.clone();
    Ok(fit)
}
