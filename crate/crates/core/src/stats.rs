//! Small descriptive-statistics helpers.

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    compensated_sum(x.iter().copied()) / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    (compensated_sum(x.iter().map(|v| (v - m).powi(2))) / (x.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile, `q` in [0, 1].
pub fn quantile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(&x[..n]);
    let my = mean(&y[..n]);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let a = x[i] - mx;
        let b = y[i] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Weighted mean and the standard error of a weighted mean using the
/// effective sample size `(Σw)² / Σw²`.
pub fn weighted_mean_se(x: &[f64], w: &[f64]) -> (f64, f64) {
    let sw = compensated_sum(w.iter().copied());
    if x.is_empty() || sw <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let m = compensated_sum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let var = compensated_sum(x.iter().zip(w).map(|(a, b)| b * (a - m).powi(2))) / sw;
    let sw2 = compensated_sum(w.iter().map(|b| b * b));
    let n_eff = sw * sw / sw2;
    let se = if n_eff > 1.0 { (var / (n_eff - 1.0)).sqrt() } else { f64::NAN };
    (m, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert_eq!(median(&x), 2.5);
        assert!((sd(&x) - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert!((correlation(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        let (m, _) = weighted_mean_se(&x, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(m, 2.5);
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
    }
}
