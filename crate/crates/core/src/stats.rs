//! Statistics used by the experiment suite: batch-means confidence
//! intervals, energy-distance permutation tests, exact binomial bounds,
//! and least-squares fits.

use crate::rng::StreamKey;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, StudentsT};

/// Batch-means summary of a (possibly autocorrelated) series.
#[derive(Clone, Debug, Serialize)]
pub struct BatchStats {
    pub mean: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_batches: usize,
    pub n_samples: usize,
}

/// 95% batch-means interval with at least 20 batches.
pub fn batch_means(series: &[f64], n_batches: usize) -> BatchStats {
    let b = n_batches.max(20);
    assert!(
        series.len() >= 2 * b,
        "need at least two samples per batch ({} samples, {b} batches)",
        series.len()
    );
    let per = series.len() / b;
    let used = per * b;
    let means: Vec<f64> = (0..b)
        .map(|i| series[i * per..(i + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / b as f64;
    let var_batch = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let se = (var_batch / b as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (b - 1) as f64)
        .unwrap()
        .inverse_cdf(0.975);
    let var_all = series[..used]
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / (used - 1) as f64;
    BatchStats {
        mean,
        variance: var_all,
        ci_low: mean - t * se,
        ci_high: mean + t * se,
        n_batches: b,
        n_samples: used,
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|` between two samples of
/// vectors.
pub fn energy_distance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let n = xs.len() as f64;
    let m = ys.len() as f64;
    let mut xy = 0.0;
    for x in xs {
        for y in ys {
            xy += euclid(x, y);
        }
    }
    let mut xx = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            xx += euclid(a, b);
        }
    }
    let mut yy = 0.0;
    for (i, a) in ys.iter().enumerate() {
        for b in &ys[i + 1..] {
            yy += euclid(a, b);
        }
    }
    2.0 * xy / (n * m) - 2.0 * xx / (n * n) - 2.0 * yy / (m * m)
}

/// Permutation test on the energy distance; returns (statistic, p-value).
/// The p-value counts permuted statistics at least as large, with the
/// +1 correction.
pub fn energy_permutation_test(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    n_perm: usize,
    key: StreamKey,
) -> (f64, f64) {
    let observed = energy_distance(xs, ys);
    let mut pool: Vec<&Vec<f64>> = xs.iter().chain(ys.iter()).collect();
    let n = xs.len();
    let mut exceed = 0usize;
    for p in 0..n_perm {
        // Fisher-Yates with counter-based draws.
        for i in (1..pool.len()).rev() {
            let j = key.below(p as u64, i as u64, (i + 1) as u64) as usize;
            pool.swap(i, j);
        }
        let px: Vec<Vec<f64>> = pool[..n].iter().map(|v| (*v).clone()).collect();
        let py: Vec<Vec<f64>> = pool[n..].iter().map(|v| (*v).clone()).collect();
        if energy_distance(&px, &py) >= observed {
            exceed += 1;
        }
    }
    let pval = (exceed + 1) as f64 / (n_perm + 1) as f64;
    (observed, pval)
}

/// Exact (Clopper-Pearson) lower confidence bound for a binomial
/// proportion at the given confidence level.
pub fn clopper_pearson_lower(successes: usize, n: usize, confidence: f64) -> f64 {
    assert!(n > 0 && successes <= n);
    if successes == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    let a = successes as f64;
    let b = (n - successes + 1) as f64;
    Beta::new(a, b).unwrap().inverse_cdf(alpha)
}

/// Ordinary least squares `y ~ slope * x + intercept` with R^2.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (slope * a + intercept);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Two-sided p-value for "slope = 0" after batching the series to tame
/// autocorrelation: the series is reduced to `n_batches` (time, mean)
/// points and the OLS t-statistic is evaluated on those.
pub fn trend_pvalue(times: &[f64], values: &[f64], n_batches: usize) -> f64 {
    assert_eq!(times.len(), values.len());
    let b = n_batches.max(8).min(values.len() / 2);
    let per = values.len() / b;
    let (mut xs, mut ys) = (Vec::with_capacity(b), Vec::with_capacity(b));
    for i in 0..b {
        let lo = i * per;
        let hi = lo + per;
        xs.push(times[lo..hi].iter().sum::<f64>() / per as f64);
        ys.push(values[lo..hi].iter().sum::<f64>() / per as f64);
    }
    let fit = linear_fit(&xs, &ys);
    let n = b as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|v| (v - mx) * (v - mx)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| {
            let e = b - (fit.slope * a + fit.intercept);
            e * e
        })
        .sum();
    let dof = n - 2.0;
    let se = (ss_res / dof / sxx).sqrt();
    if se == 0.0 {
        return 1.0;
    }
    let t = fit.slope / se;
    let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Moment-based normality screen: standardized skewness and excess
/// kurtosis both within the two-sided z-bound at the given significance.
pub fn moments_look_gaussian(samples: &[f64], z_bound: f64) -> bool {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let exkurt = m4 / (m2 * m2) - 3.0;
    let z_skew = skew / (6.0 / n).sqrt();
    let z_kurt = exkurt / (24.0 / n).sqrt();
    z_skew.abs() < z_bound && z_kurt.abs() < z_bound
}
