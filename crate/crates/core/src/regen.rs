//! Regeneration blocks and the speed / diffusion-matrix estimators.
//!
//! A block is drawn on a fresh environment conditioned (by rejection) on
//! eta_0 = 1: the walk runs from the origin until the first t > 0 with
//! eta_{Z_t} = 1, and the block is (T_1, X_{T_1}). Blocks on independent
//! environments are i.i.d. with the law of the regeneration increments.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{EnvSource, Environment};
use crate::error::{Error, Result};
use crate::lattice::{Displacement, LatticePoint, MAX_DIM};
use crate::rng::Seed;
use crate::stats::{bootstrap_percentile, correlation, loglog_slope, SlopeFit};
use crate::walk::{JumpKernel, Walker};

const TAG_ENV: u64 = 1;
const TAG_WALK: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOptions {
    /// Walk steps before a block is declared censored.
    pub horizon: u64,
    /// Smallest acceptance probability for the eta_0 = 1 conditioning that we
    /// are willing to wait for.
    pub acceptance_floor: f64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            horizon: 100_000,
            acceptance_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegenerationBlock {
    /// Seed the block was drawn from.
    pub seed: u64,
    pub t1: u64,
    pub disp: Displacement,
    pub censored: bool,
    /// Environments rejected before one with eta_0 = 1.
    pub rejections: u64,
}

/// Draw an environment with eta_0 = 1 by rejection. Returns it with the
/// number of rejected draws.
pub fn conditioned_realization<S: EnvSource>(
    source: &S,
    seed: Seed,
    floor: f64,
) -> Result<(S::Env, u64)> {
    let max = (20.0 / floor).ceil() as u64;
    let env_seed = seed.child(TAG_ENV);
    for attempt in 0..max {
        let env = source.realize(env_seed.child(attempt));
        if env.eta(&LatticePoint::ORIGIN)? {
            return Ok((env, attempt));
        }
    }
    Err(Error::Acceptance {
        accepted: 0,
        attempts: max,
        floor,
    })
}

/// One regeneration block.
pub fn sample_block<S: EnvSource>(
    source: &S,
    kernel: &JumpKernel,
    seed: Seed,
    opts: &BlockOptions,
) -> Result<RegenerationBlock> {
    source.dim().ensure(kernel.dim())?;
    let (env, rejections) = conditioned_realization(source, seed, opts.acceptance_floor)?;
    let mut w = Walker::new(LatticePoint::ORIGIN, kernel, seed.child(TAG_WALK));
    for t in 1..=opts.horizon {
        w.step(&env)?;
        if env.eta(&w.pos)? {
            return Ok(RegenerationBlock {
                seed: seed.0,
                t1: t,
                disp: w.pos.x,
                censored: false,
                rejections,
            });
        }
    }
    Ok(RegenerationBlock {
        seed: seed.0,
        t1: opts.horizon,
        disp: w.pos.x,
        censored: true,
        rejections,
    })
}

/// `n` blocks on per-index seeds, in index order regardless of threading.
pub fn sample_blocks<S: EnvSource>(
    source: &S,
    kernel: &JumpKernel,
    n: u64,
    seed: Seed,
    opts: &BlockOptions,
) -> Result<Vec<RegenerationBlock>> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_block(source, kernel, seed.child(i), opts))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitEstimates {
    /// Spatial speed; the time component is 1.
    pub v_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub v_ci: Vec<(f64, f64)>,
    pub sigma_ci: Vec<Vec<(f64, f64)>>,
    pub n_blocks: usize,
    pub n_censored: usize,
    pub mean_t1: f64,
}

/// Integer moment sums; exact, so estimates do not depend on block order.
#[derive(Clone, Debug, Default)]
struct Moments {
    n: i128,
    st: i128,
    stt: i128,
    sd: [i128; MAX_DIM],
    std: [i128; MAX_DIM],
    sdd: [[i128; MAX_DIM]; MAX_DIM],
}

impl Moments {
    fn add(&mut self, b: &RegenerationBlock, d: usize) {
        let t = b.t1 as i128;
        self.n += 1;
        self.st += t;
        self.stt += t * t;
        for i in 0..d {
            let x = b.disp[i] as i128;
            self.sd[i] += x;
            self.std[i] += t * x;
            for j in 0..d {
                self.sdd[i][j] += x * b.disp[j] as i128;
            }
        }
    }

    fn estimates(&self, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let st = self.st as f64;
        let v: Vec<f64> = (0..d).map(|i| self.sd[i] as f64 / st).collect();
        let n = self.n as f64;
        let mean_t = st / n;
        let mut s = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let c =
                    self.sdd[i][j] as f64 - v[i] * self.std[j] as f64 - v[j] * self.std[i] as f64
                        + v[i] * v[j] * self.stt as f64;
                s[i][j] = c / (n - 1.0) / mean_t;
            }
        }
        (v, make_psd(s))
    }
}

/// Symmetrise and clip tiny negative eigenvalues from rounding.
fn make_psd(mut s: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let d = s.len();
    for i in 0..d {
        for j in 0..i {
            let m = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = m;
            s[j][i] = m;
        }
    }
    if d == 1 {
        s[0][0] = s[0][0].max(0.0);
        return s;
    }
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| s[i][j]);
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return s;
    }
    let clipped = nalgebra::DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| l.max(0.0)));
    let r = &eig.eigenvectors
        * nalgebra::DMatrix::from_diagonal(&clipped)
        * eig.eigenvectors.transpose();
    (0..d)
        .map(|i| (0..d).map(|j| 0.5 * (r[(i, j)] + r[(j, i)])).collect())
        .collect()
}

/// Ratio estimator of the speed and block estimator of the diffusion matrix,
/// with percentile bootstrap intervals over blocks.
pub fn estimate_limits(
    blocks: &[RegenerationBlock],
    dim: crate::lattice::Dim,
    n_boot: usize,
    seed: Seed,
) -> Result<LimitEstimates> {
    let d = dim.get();
    let mut used: Vec<&RegenerationBlock> = blocks.iter().filter(|b| !b.censored).collect();
    let n_censored = blocks.len() - used.len();
    if used.len() < 2 {
        return Err(Error::usage(format!(
            "need at least 2 uncensored blocks, have {} ({} censored)",
            used.len(),
            n_censored
        )));
    }
    used.sort_by_key(|b| (b.seed, b.t1, b.disp));
    let mut m = Moments::default();
    for b in &used {
        m.add(b, d);
    }
    let (v_hat, sigma_hat) = m.estimates(d);
    let cis = if n_boot > 0 {
        bootstrap_percentile(used.len(), n_boot, seed, |idx| {
            let mut mb = Moments::default();
            for &i in idx {
                mb.add(used[i], d);
            }
            let (v, s) = mb.estimates(d);
            v.into_iter().chain(s.into_iter().flatten()).collect()
        })
    } else {
        vec![(f64::NAN, f64::NAN); d + d * d]
    };
    let v_ci = cis[..d].to_vec();
    let sigma_ci = (0..d)
        .map(|i| cis[d + i * d..d + (i + 1) * d].to_vec())
        .collect();
    Ok(LimitEstimates {
        v_hat,
        sigma_hat,
        v_ci,
        sigma_ci,
        n_blocks: used.len(),
        n_censored,
        mean_t1: m.st as f64 / m.n as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectRunSamples {
    pub t_final: u64,
    pub endpoints: Vec<Displacement>,
    pub x_over_t: Vec<Vec<f64>>,
    /// (X_t - t a) / sqrt(t), when a speed was supplied.
    pub standardized: Option<Vec<Vec<f64>>>,
}

/// Independent (environment, walk) pairs under the unconditioned law.
pub fn direct_run<S: EnvSource>(
    source: &S,
    kernel: &JumpKernel,
    t_final: u64,
    n_runs: u64,
    seed: Seed,
    speed: Option<&[f64]>,
) -> Result<DirectRunSamples> {
    let dim = source.dim();
    dim.ensure(kernel.dim())?;
    if t_final == 0 {
        return Err(Error::usage("direct runs need t_final >= 1"));
    }
    if let Some(a) = speed {
        if a.len() != dim.get() {
            return Err(Error::DimensionMismatch {
                expected: dim.get(),
                found: a.len(),
            });
        }
    }
    let endpoints: Vec<Displacement> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let s = seed.child(i);
            let env = source.realize(s.child(TAG_ENV));
            let mut w = Walker::new(LatticePoint::ORIGIN, kernel, s.child(TAG_WALK));
            for _ in 0..t_final {
                w.step(&env)?;
            }
            Ok(w.pos.x)
        })
        .collect::<Result<_>>()?;
    let t = t_final as f64;
    let d = dim.get();
    let x_over_t = endpoints
        .iter()
        .map(|x| (0..d).map(|i| x[i] as f64 / t).collect())
        .collect();
    let standardized = speed.map(|a| {
        endpoints
            .iter()
            .map(|x| {
                (0..d)
                    .map(|i| (x[i] as f64 - t * a[i]) / t.sqrt())
                    .collect()
            })
            .collect()
    });
    Ok(DirectRunSamples {
        t_final,
        endpoints,
        x_over_t,
        standardized,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedCrossCheck {
    pub v_block: Vec<f64>,
    pub v_direct: Vec<f64>,
    pub block_half_width: Vec<f64>,
    /// Normal 95% half-width of the mean of X_t / t over runs.
    pub direct_half_width: Vec<f64>,
    pub pass: bool,
}

/// The two speed estimates agree when, per coordinate, their distance is
/// within the sum of the two 95% half-widths.
pub fn speed_cross_check(
    est: &LimitEstimates,
    direct: &DirectRunSamples,
) -> Result<SpeedCrossCheck> {
    let d = est.v_hat.len();
    let n = direct.x_over_t.len();
    if n < 2 {
        return Err(Error::usage(
            "speed cross-check needs at least 2 direct runs",
        ));
    }
    let mut v_direct = Vec::new();
    let mut direct_half_width = Vec::new();
    for i in 0..d {
        let col: Vec<f64> = direct.x_over_t.iter().map(|x| x[i]).collect();
        v_direct.push(crate::stats::mean(&col));
        direct_half_width
            .push(crate::stats::Z95 * (crate::stats::variance(&col) / n as f64).sqrt());
    }
    let block_half_width: Vec<f64> = est.v_ci.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
    let pass = (0..d)
        .all(|i| (est.v_hat[i] - v_direct[i]).abs() <= block_half_width[i] + direct_half_width[i]);
    Ok(SpeedCrossCheck {
        v_block: est.v_hat.clone(),
        v_direct,
        block_half_width,
        direct_half_width,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianCheck {
    pub ks: crate::stats::TestReport,
    /// Empirical variance of each standardized coordinate over Sigma_hat_ii.
    pub variance_ratio: Vec<f64>,
    pub pass: bool,
}

/// (X_t - t v_hat) / sqrt(t) against N(0, Sigma_hat): KS after whitening
/// with p > `min_p`, and variance ratios within `ratio_band`.
pub fn gaussian_check(
    est: &LimitEstimates,
    direct: &DirectRunSamples,
    min_p: f64,
    ratio_band: (f64, f64),
) -> Result<GaussianCheck> {
    let z = direct
        .standardized
        .as_ref()
        .ok_or_else(|| Error::usage("direct runs were made without a speed"))?;
    let d = est.v_hat.len();
    let ks = crate::stats::ks_gaussian(z, &vec![0.0; d], &est.sigma_hat)?;
    let variance_ratio: Vec<f64> = (0..d)
        .map(|i| {
            crate::stats::variance(&z.iter().map(|x| x[i]).collect::<Vec<_>>())
                / est.sigma_hat[i][i]
        })
        .collect();
    let pass = ks.p_value > min_p
        && variance_ratio
            .iter()
            .all(|r| *r >= ratio_band.0 && *r <= ratio_band.1);
    Ok(GaussianCheck {
        ks,
        variance_ratio,
        pass,
    })
}

/// Empirical survival P(T_1 > t) at dyadic t, keeping points with at least
/// `min_count` exceedances, and its log-log slope.
pub fn t1_tail(
    blocks: &[RegenerationBlock],
    min_count: usize,
) -> Result<(Vec<(f64, f64)>, SlopeFit)> {
    let n = blocks.len() as f64;
    let mut pts = Vec::new();
    let mut t = 1u64;
    loop {
        let c = blocks.iter().filter(|b| b.t1 > t).count();
        if c < min_count {
            break;
        }
        pts.push((t as f64, c as f64 / n));
        t *= 2;
    }
    let fit = loglog_slope(&pts)?;
    Ok((pts, fit))
}

/// Successive eta-hits along ONE walk in ONE environment, without
/// resampling. Increments need not be i.i.d.; this measures how far they are.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnresampledDiagnostic {
    pub increments: Vec<(u64, Displacement)>,
    /// Lag-1 autocorrelation of the time increments.
    pub lag1_correlation: f64,
    pub censored: bool,
}

pub fn unresampled_increments<S: EnvSource>(
    source: &S,
    kernel: &JumpKernel,
    n_increments: usize,
    horizon: u64,
    seed: Seed,
    floor: f64,
) -> Result<UnresampledDiagnostic> {
    let (env, _) = conditioned_realization(source, seed, floor)?;
    let mut w = Walker::new(LatticePoint::ORIGIN, kernel, seed.child(TAG_WALK));
    let mut increments = Vec::with_capacity(n_increments);
    let mut last = (0u64, LatticePoint::ORIGIN);
    let mut censored = false;
    'outer: while increments.len() < n_increments {
        for _ in 0..horizon {
            w.step(&env)?;
            if env.eta(&w.pos)? {
                let t = w.pos.t as u64;
                let mut dx = [0i64; MAX_DIM];
                for (i, v) in dx.iter_mut().enumerate() {
                    *v = w.pos.x[i] - last.1.x[i];
                }
                increments.push((t - last.0, dx));
                last = (t, w.pos);
                continue 'outer;
            }
        }
        censored = true;
        break;
    }
    let ts: Vec<f64> = increments.iter().map(|p| p.0 as f64).collect();
    let lag1_correlation = if ts.len() > 3 {
        correlation(&ts[..ts.len() - 1], &ts[1..])
    } else {
        f64::NAN
    };
    Ok(UnresampledDiagnostic {
        increments,
        lag1_correlation,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, InterarrivalLaw, RenewalConfig};
    use crate::lattice::Dim;

    fn pinned() -> crate::env::EnvModel {
        EnvConfig::Renewal(RenewalConfig::default_1d(InterarrivalLaw::dirac(0)))
            .model()
            .unwrap()
    }

    #[test]
    fn pinned_environment_gives_single_steps() {
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        let blocks =
            sample_blocks(&pinned(), &k, 20_000, Seed(1), &BlockOptions::default()).unwrap();
        assert!(blocks
            .iter()
            .all(|b| b.t1 == 1 && !b.censored && b.rejections == 0 && b.disp[0].abs() <= 1));
        let est = estimate_limits(&blocks, Dim::ONE, 200, Seed(2)).unwrap();
        let (m, c) = k.step_moments(0).unwrap();
        // Standard errors: sd(step) / sqrt(n) ~ 0.004.
        assert!(
            (est.v_hat[0] - m[0]).abs() < 0.02,
            "{} vs {}",
            est.v_hat[0],
            m[0]
        );
        assert!((est.sigma_hat[0][0] - c[0][0]).abs() < 0.03);
        assert!(est.v_ci[0].0 < m[0] && m[0] < est.v_ci[0].1);
    }

    #[test]
    fn stay_kernel_gives_zero_limits() {
        let k = JumpKernel::stay(Dim::ONE, 1).unwrap();
        let blocks = sample_blocks(&pinned(), &k, 100, Seed(1), &BlockOptions::default()).unwrap();
        let est = estimate_limits(&blocks, Dim::ONE, 50, Seed(2)).unwrap();
        assert_eq!(est.v_hat, vec![0.0]);
        assert_eq!(est.sigma_hat, vec![vec![0.0]]);
        let runs = direct_run(&pinned(), &k, 100, 5, Seed(3), Some(&[0.0])).unwrap();
        assert!(runs.x_over_t.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn estimates_are_order_independent() {
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        let env = EnvConfig::Renewal(RenewalConfig::default_1d(
            InterarrivalLaw::geometric(0.5).unwrap(),
        ))
        .model()
        .unwrap();
        let blocks = sample_blocks(&env, &k, 300, Seed(5), &BlockOptions::default()).unwrap();
        let mut shuffled = blocks.clone();
        shuffled.reverse();
        shuffled.swap(3, 100);
        let a = estimate_limits(&blocks, Dim::ONE, 100, Seed(1)).unwrap();
        let b = estimate_limits(&shuffled, Dim::ONE, 100, Seed(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.sigma_hat[0][0] >= 0.0);
    }

    #[test]
    fn all_censored_is_an_error() {
        let b = RegenerationBlock {
            seed: 0,
            t1: 10,
            disp: [0; MAX_DIM],
            censored: true,
            rejections: 0,
        };
        assert!(estimate_limits(&[b.clone(), b], Dim::ONE, 10, Seed(0)).is_err());
    }

    #[test]
    fn censoring_is_monotone_in_horizon() {
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        let env = EnvConfig::Renewal(RenewalConfig::default_1d(
            InterarrivalLaw::geometric(0.5).unwrap(),
        ))
        .model()
        .unwrap();
        let mut prev = usize::MAX;
        for h in [1, 2, 4, 8, 16, 64] {
            let opts = BlockOptions {
                horizon: h,
                ..Default::default()
            };
            let c = sample_blocks(&env, &k, 400, Seed(9), &opts)
                .unwrap()
                .iter()
                .filter(|b| b.censored)
                .count();
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn ratio_estimator_rate() {
        // Synthetic blocks: T ~ 1 + Geometric, X | T ~ sum of T steps of +-1 with bias.
        let mut errs = Vec::new();
        let v_true = 0.2;
        for &n in &[250usize, 1000, 4000, 16000] {
            let mut tot = 0.0;
            let reps = 40;
            for r in 0..reps {
                let mut st = Seed(1000 * n as u64 + r).stream();
                let blocks: Vec<_> = (0..n)
                    .map(|i| {
                        let mut t = 1;
                        while st.next_f64() < 0.5 {
                            t += 1;
                        }
                        let x: i64 = (0..t)
                            .map(|_| if st.next_f64() < 0.6 { 1 } else { -1 })
                            .sum();
                        RegenerationBlock {
                            seed: i as u64,
                            t1: t,
                            disp: [x, 0, 0],
                            censored: false,
                            rejections: 0,
                        }
                    })
                    .collect();
                let e = estimate_limits(&blocks, Dim::ONE, 0, Seed(0)).unwrap();
                tot += (e.v_hat[0] - v_true).powi(2);
            }
            errs.push((n as f64, (tot / reps as f64).sqrt()));
        }
        let fit = loglog_slope(&errs).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.15, "slope {}", fit.slope);
    }
}
