//! Statistical machinery: intervals, goodness-of-fit and independence tests,
//! log-log slope fits, plus the environment verification batteries.

pub mod battery;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::Seed;

/// Outcome of a hypothesis test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: u64,
    pub method: String,
    pub null: String,
    /// Set when the data cannot inform the test (e.g. a constant statistic).
    pub inconclusive: bool,
}

impl TestReport {
    pub fn rejects(&self, level: f64) -> bool {
        !self.inconclusive && self.p_value < level
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes as f64 == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

pub const Z95: f64 = 1.959_963_984_540_054;

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Percentile bootstrap: resample `n` items with replacement `n_boot` times,
/// evaluate `stat` on each resample (given as indices) and return the 2.5% and
/// 97.5% quantiles of every output coordinate.
pub fn bootstrap_percentile(
    n: usize,
    n_boot: usize,
    seed: Seed,
    mut stat: impl FnMut(&[usize]) -> Vec<f64>,
) -> Vec<(f64, f64)> {
    let mut draws: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    for b in 0..n_boot {
        let mut st = seed.stream_at(&[b as u64]);
        for i in idx.iter_mut() {
            *i = st.below(n as u64) as usize;
        }
        let v = stat(&idx);
        if draws.is_empty() {
            draws = vec![Vec::with_capacity(n_boot); v.len()];
        }
        for (k, x) in v.into_iter().enumerate() {
            draws[k].push(x);
        }
    }
    draws
        .into_iter()
        .map(|mut col| {
            col.sort_by(|a, b| a.total_cmp(b));
            (quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975))
        })
        .collect()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn pearson_2x2(t: &[[u64; 2]; 2]) -> f64 {
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    let rows = [(t[0][0] + t[0][1]) as f64, (t[1][0] + t[1][1]) as f64];
    let cols = [(t[0][0] + t[1][0]) as f64, (t[0][1] + t[1][1]) as f64];
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            s += (t[i][j] as f64 - e).powi(2) / e;
        }
    }
    s
}

/// Pearson chi-squared test of independence on a 2x2 table.
///
/// When some expected count is below 5 the p-value comes from the
/// permutation distribution of the statistic with both margins fixed, which
/// for a 2x2 table is the hypergeometric law of the top-left cell; it is
/// evaluated exactly rather than by sampled permutations.
pub fn chi2_independence_2x2(t: &[[u64; 2]; 2]) -> TestReport {
    let n = t[0][0] + t[0][1] + t[1][0] + t[1][1];
    let r0 = t[0][0] + t[0][1];
    let c0 = t[0][0] + t[1][0];
    let null = "rows and columns independent".to_string();
    if n == 0 || r0 == 0 || r0 == n || c0 == 0 || c0 == n {
        return TestReport {
            statistic: 0.0,
            p_value: 1.0,
            n,
            method: "chi2-2x2".into(),
            null,
            inconclusive: true,
        };
    }
    let stat = pearson_2x2(t);
    let min_expected = [r0, n - r0]
        .iter()
        .flat_map(|&r| [c0, n - c0].map(|c| r as f64 * c as f64 / n as f64))
        .fold(f64::INFINITY, f64::min);
    if min_expected >= 5.0 {
        let p = 1.0 - ChiSquared::new(1.0).expect("df 1").cdf(stat);
        return TestReport {
            statistic: stat,
            p_value: p.clamp(0.0, 1.0),
            n,
            method: "chi2-2x2 asymptotic".into(),
            null,
            inconclusive: false,
        };
    }
    exact_report(t, stat)
}

/// Exact permutation p-value of the Pearson statistic with both margins
/// fixed; `t` must have non-degenerate margins.
fn exact_report(t: &[[u64; 2]; 2], stat: f64) -> TestReport {
    let n = t[0][0] + t[0][1] + t[1][0] + t[1][1];
    let r0 = t[0][0] + t[0][1];
    let c0 = t[0][0] + t[1][0];
    let lo = c0.saturating_sub(n - r0);
    let hi = r0.min(c0);
    let ln_total = ln_choose(n, c0);
    let mut p = 0.0;
    for a in lo..=hi {
        let tab = [[a, r0 - a], [c0 - a, n + a - r0 - c0]];
        if pearson_2x2(&tab) >= stat * (1.0 - 1e-9) {
            p += (ln_choose(r0, a) + ln_choose(n - r0, c0 - a) - ln_total).exp();
        }
    }
    let null = "rows and columns independent".to_string();
    TestReport {
        statistic: stat,
        p_value: p.clamp(0.0, 1.0),
        n,
        method: "chi2-2x2 permutation (exact)".into(),
        null,
        inconclusive: false,
    }
}

/// Pearson chi-squared test of independence on a 2x2 table, always
/// calibrated by the exact permutation distribution.
pub fn chi2_independence_2x2_permutation(t: &[[u64; 2]; 2]) -> TestReport {
    let asymptotic = chi2_independence_2x2(t);
    if asymptotic.inconclusive {
        return asymptotic;
    }
    exact_report(t, pearson_2x2(t))
}

/// Exact two-sided binomial test of `successes` out of `n` against success
/// probability `p`: sums the probabilities of outcomes no more likely than
/// the observed one.
pub fn binomial_test(successes: u64, n: u64, p: f64) -> TestReport {
    let b = Binomial::new(p, n).expect("p in [0, 1]");
    let observed = b.pmf(successes);
    let p_value: f64 = (0..=n)
        .map(|k| b.pmf(k))
        .filter(|&q| q <= observed * (1.0 + 1e-9))
        .sum();
    TestReport {
        statistic: successes as f64,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        method: "binomial (exact, two-sided)".into(),
        null: format!("success probability {p}"),
        inconclusive: n == 0,
    }
}

/// Asymptotic Kolmogorov distribution tail P(K > x).
fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, null: &str) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::usage("KS test needs at least one sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
    Ok(TestReport {
        statistic: d,
        p_value: p,
        n: xs.len() as u64,
        method: "kolmogorov-smirnov".into(),
        null: null.into(),
        inconclusive: false,
    })
}

/// Whiten with the Cholesky factor of `cov`, KS-test each coordinate against
/// N(0, 1) and combine with Bonferroni.
pub fn ks_gaussian(samples: &[Vec<f64>], mean: &[f64], cov: &[Vec<f64>]) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::usage("ks_gaussian needs at least one sample"));
    }
    let d = mean.len();
    if d == 0
        || cov.len() != d
        || cov.iter().any(|r| r.len() != d)
        || samples.iter().any(|s| s.len() != d)
    {
        return Err(Error::usage("ks_gaussian: inconsistent dimensions"));
    }
    let c = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let chol = c.cholesky().ok_or_else(|| {
        Error::usage("ks_gaussian: covariance is singular or not positive definite")
    })?;
    let l = chol.l();
    let m = DVector::from_column_slice(mean);
    let mut coords = vec![Vec::with_capacity(samples.len()); d];
    for s in samples {
        let v = DVector::from_column_slice(s) - &m;
        let w = l
            .solve_lower_triangular(&v)
            .ok_or_else(|| Error::usage("ks_gaussian: singular factor"))?;
        for i in 0..d {
            coords[i].push(w[i]);
        }
    }
    let normal = Normal::standard();
    let mut worst = TestReport {
        statistic: 0.0,
        p_value: 1.0,
        n: 0,
        method: String::new(),
        null: String::new(),
        inconclusive: false,
    };
    for col in &coords {
        let r = ks_test(col, |x| normal.cdf(x), "N(0,1)")?;
        if r.p_value <= worst.p_value {
            worst = r;
        }
    }
    Ok(TestReport {
        statistic: worst.statistic,
        p_value: (worst.p_value * d as f64).min(1.0),
        n: samples.len() as u64,
        method: format!("kolmogorov-smirnov after whitening, bonferroni over {d} coordinates"),
        null: "samples ~ N(mean, cov)".into(),
        inconclusive: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub intercept: f64,
    pub n: usize,
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::usage(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::usage("slope fit needs positive finite coordinates"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::usage(
            "slope fit needs at least two distinct x values",
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        se,
        intercept,
        n: points.len(),
    })
}

/// Total-variation distance between an empirical count vector and a pmf.
pub fn tv_distance(counts: &[u64], pmf: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let len = counts.len().max(pmf.len());
    let mut s = 0.0;
    for k in 0..len {
        let e = counts.get(k).map(|&c| c as f64 / n as f64).unwrap_or(0.0);
        let p = pmf.get(k).copied().unwrap_or(0.0);
        s += (e - p).abs();
    }
    s / 2.0
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn wilson_contains_truth_and_handles_zero() {
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn slope_examples() {
        let pts: Vec<_> = (1..=6).map(|i| (i as f64, (i as f64).powi(-2))).collect();
        let f = loglog_slope(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && f.se < 1e-12);
        assert!(loglog_slope(&pts[..2]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn noisy_slope_is_close() {
        let mut st = Seed(3).stream();
        for _ in 0..200 {
            let pts: Vec<_> = (1..=6)
                .map(|i| {
                    let x = 2f64.powi(i);
                    let noise: f64 = StandardNormal.sample(&mut st);
                    (x, 3.0 * x.powi(-2) * (1.0 + 0.05 * noise))
                })
                .collect();
            let f = loglog_slope(&pts).unwrap();
            assert!((-2.3..=-1.7).contains(&f.slope), "{}", f.slope);
        }
    }

    #[test]
    fn chi2_degenerate_is_inconclusive() {
        let r = chi2_independence_2x2(&[[10, 0], [20, 0]]);
        assert!(r.inconclusive && !r.rejects(0.05));
    }

    #[test]
    fn chi2_exact_matches_fisher_style_enumeration() {
        let r = chi2_independence_2x2(&[[3, 1], [1, 3]]);
        assert!(r.method.contains("permutation"));
        // Tables as extreme as [[3,1],[1,3]] under margins (4,4;4,4): a in {0,1,3,4}.
        let h = |a: u64| (ln_choose(4, a) + ln_choose(4, 4 - a) - ln_choose(8, 4)).exp();
        let want = h(0) + h(1) + h(3) + h(4);
        assert!((r.p_value - want).abs() < 1e-12);
    }

    #[test]
    fn chi2_null_calibration() {
        let mut rejections = 0;
        let batteries = 400;
        for b in 0..batteries {
            let mut st = Seed(b).stream();
            let mut t = [[0u64; 2]; 2];
            for _ in 0..200 {
                let x = (st.next_f64() < 0.3) as usize;
                let y = (st.next_f64() < 0.6) as usize;
                t[x][y] += 1;
            }
            rejections += chi2_independence_2x2(&t).rejects(0.05) as u32;
        }
        let rate = rejections as f64 / batteries as f64;
        assert!((rate - 0.05).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn ks_gaussian_calibration_and_power() {
        let cov = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let mean = vec![1.0, -1.0];
        let l = DMatrix::from_fn(2, 2, |i, j| cov[i][j])
            .cholesky()
            .unwrap()
            .l();
        let draw = |st: &mut crate::rng::Stream, shift: f64| -> Vec<f64> {
            let e = DVector::from_fn(2, |_, _| StandardNormal.sample(st));
            let v = &l * e;
            vec![v[0] + mean[0] + shift * 2f64.sqrt(), v[1] + mean[1]]
        };
        let mut rej = 0;
        let reps = 1000;
        for r in 0..reps {
            let mut st = Seed(r).stream();
            let xs: Vec<_> = (0..500).map(|_| draw(&mut st, 0.0)).collect();
            rej += ks_gaussian(&xs, &mean, &cov).unwrap().rejects(0.05) as u32;
        }
        let rate = rej as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 0.02, "null rate {rate}");
        let mut power = 0;
        for r in 0..100 {
            let mut st = Seed(10_000 + r).stream();
            let xs: Vec<_> = (0..2000).map(|_| draw(&mut st, 1.0)).collect();
            power += ks_gaussian(&xs, &mean, &cov).unwrap().rejects(0.05) as u32;
        }
        assert!(power >= 99);
        assert!(ks_gaussian(&[], &mean, &cov).is_err());
        assert!(ks_gaussian(&[vec![0.0, 0.0]], &mean, &[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn bootstrap_of_mean_covers() {
        let xs: Vec<f64> = (0..400).map(|i| (i % 10) as f64).collect();
        let ci = bootstrap_percentile(xs.len(), 500, Seed(1), |idx| {
            vec![idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64]
        });
        assert!(ci[0].0 < 4.5 && ci[0].1 > 4.5);
        let again = bootstrap_percentile(xs.len(), 500, Seed(1), |idx| {
            vec![idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64]
        });
        assert_eq!(ci, again);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Known: P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.01.
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 0.002);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 0.001);
    }

    #[test]
    fn binomial_test_matches_hand_values() {
        // n = 4, p = 1/2: P(k) = 1,4,6,4,1 / 16; observing 0 leaves {0, 4}.
        assert!((binomial_test(0, 4, 0.5).p_value - 2.0 / 16.0).abs() < 1e-12);
        assert!((binomial_test(2, 4, 0.5).p_value - 1.0).abs() < 1e-12);
        assert!((binomial_test(1, 4, 0.5).p_value - 10.0 / 16.0).abs() < 1e-12);
    }
}
