//! Small statistics toolkit: least squares, percentile bootstrap, Wilson
//! intervals and the Mann–Kendall trend test.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_ss: f64,
}

/// Ordinary least squares `y = a + b x`. `None` when the abscissas coincide.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_ss = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LineFit {
        slope,
        intercept,
        residual_ss,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    median_in_place(&mut v)
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    let mid = n / 2;
    let (lower, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().max_by(f64::total_cmp).expect("nonempty lower half");
        0.5 * (below + upper)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of a bootstrap sample at level 95%.
pub fn percentile_interval(mut values: Vec<f64>) -> Option<(f64, f64)> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some((quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975)))
}

/// Resamples `data` with replacement into `out`.
pub fn resample<R: Rng>(rng: &mut R, data: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..data.len()).map(|_| data[rng.random_range(0..data.len())]));
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// 95% Wilson score interval.
pub fn wilson(successes: u64, trials: u64) -> Result<Proportion> {
    if trials == 0 || successes > trials {
        return Err(Error::Domain(format!("invalid proportion {successes}/{trials}")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(Proportion {
        successes,
        trials,
        estimate: p,
        lower: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        upper: if successes == trials { 1.0 } else { (center + half).min(1.0) },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TrendTest {
    pub statistic: i64,
    pub z: f64,
    pub p_value: f64,
    /// Two-sided rejection of "no trend" at 5%.
    pub trend: bool,
}

/// Mann–Kendall test with the tie-corrected variance.
pub fn mann_kendall(xs: &[f64]) -> Result<TrendTest> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::Precondition("Mann–Kendall needs at least three values".into()));
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].total_cmp(&xs[i]) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if var <= 0.0 || s == 0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else {
        (s as f64 + 1.0) / var.sqrt()
    };
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
    Ok(TrendTest {
        statistic: s,
        z,
        p_value,
        trend: p_value < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream;

    #[test]
    fn least_squares_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-15);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!(f.residual_ss < 1e-25);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn medians_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(quantile_sorted(&[0.0, 10.0], 0.25), 2.5);
    }

    #[test]
    fn wilson_reference_values() {
        // 8/10 at 95%: [0.4902, 0.9433]
        let p = wilson(8, 10).unwrap();
        assert!((p.lower - 0.490_162).abs() < 1e-5, "{p:?}");
        assert!((p.upper - 0.943_318).abs() < 1e-5, "{p:?}");
        let zero = wilson(0, 100).unwrap();
        assert_eq!(zero.lower, 0.0);
        assert!(zero.upper > 0.0 && zero.upper < 0.05);
        assert!(wilson(3, 2).is_err());
    }

    #[test]
    fn mann_kendall_detects_trends() {
        let up: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t = mann_kendall(&up).unwrap();
        assert_eq!(t.statistic, 45);
        assert!(t.trend);
        let flat = [1.0, 3.0, 2.0, 1.0, 3.0, 2.0];
        assert!(!mann_kendall(&flat).unwrap().trend);
        assert!(!mann_kendall(&[2.0; 5]).unwrap().trend);
    }

    #[test]
    fn resampling_draws_from_the_data() {
        let mut rng = stream(1, &[2]);
        let mut out = Vec::new();
        resample(&mut rng, &[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| [1.0, 2.0, 3.0].contains(v)));
        assert_eq!(percentile_interval(vec![]), None);
    }
}
