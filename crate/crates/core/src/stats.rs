//! Small statistics helpers shared by the samplers and the rate fits.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination (weighted when the fit was weighted).
    pub r2: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    wls_fit(xs, ys, &vec![1.0; xs.len()])
}

/// Weighted least squares. Degenerate inputs (fewer than two distinct `x`)
/// give a zero slope through the weighted mean.
pub fn wls_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> LinearFit {
    assert!(xs.len() == ys.len() && xs.len() == ws.len());
    let sw: f64 = ws.iter().sum();
    if sw <= 0.0 {
        return LinearFit {
            slope: 0.0,
            intercept: 0.0,
            r2: 0.0,
        };
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    LinearFit { slope, intercept, r2 }
}

/// Weighted mean of `values` with a 95% half-width from batch means over
/// `batches` contiguous blocks (robust to serial correlation along a chain).
pub fn batch_mean_ci(values: &[f64], weights: &[f64], batches: usize) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    if values.is_empty() || total <= 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let b = batches.clamp(2, values.len().max(2)).min(values.len());
    if b < 2 {
        return (mean, f64::INFINITY);
    }
    let mut means = Vec::with_capacity(b);
    for k in 0..b {
        let lo = k * values.len() / b;
        let hi = (k + 1) * values.len() / b;
        let w: f64 = weights[lo..hi].iter().sum();
        if w > 0.0 {
            let s: f64 = values[lo..hi].iter().zip(&weights[lo..hi]).map(|(v, w)| v * w).sum();
            means.push(s / w);
        }
    }
    if means.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (mean, Z95 * (var / means.len() as f64).sqrt())
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// 95% normal-approximation half-width for a proportion `p` estimated from
/// `n_eff` effective draws.
pub fn binomial_half_width(p: f64, n_eff: f64) -> f64 {
    if n_eff <= 0.0 {
        return f64::INFINITY;
    }
    let p = p.clamp(0.0, 1.0);
    // Floor the variance at one success so that an empty count is not exact.
    let var = (p * (1.0 - p)).max(1.0 / n_eff * (1.0 - 1.0 / n_eff).max(0.0));
    Z95 * (var / n_eff).sqrt()
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = ols_fit(&xs, &ys);
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-13);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant_have_zero_width() {
        let v = vec![2.0; 1000];
        let w = vec![1.0; 1000];
        let (m, h) = batch_mean_ci(&v, &w, 32);
        assert_eq!(m, 2.0);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn binomial_width_shrinks() {
        assert!(binomial_half_width(0.5, 1e4) < binomial_half_width(0.5, 1e2));
        assert!(binomial_half_width(0.0, 1e4) > 0.0);
        assert!((effective_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 0.125), 1.5);
    }
}
