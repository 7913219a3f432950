//! Verification batteries on environments: covariance decay of box
//! functionals of eta (decoupling) and conditional independence of past and
//! future statistics given eta_0 = 1 (random Markov property).

use rayon::prelude::*;
use serde::Serialize;

use super::{chi2_independence_2x2, chi2_independence_2x2_permutation, TestReport};
use crate::env::{EnvConfig, EnvModel, EnvSource, Environment};
use crate::error::{Error, Result};
use crate::lattice::{cone_contains, BoxSpec, Dim, Direction, LatticePoint};
use crate::regen::conditioned_realization;
use crate::rng::{Seed, Stream};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Reducer {
    AllZero,
    AnyOne,
    Parity,
    /// At least m ones.
    Threshold(u64),
}

/// Which field a functional reads; omega is read as the indicator omega != 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Field {
    Eta,
    Omega,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxFunctional {
    pub boxspec: BoxSpec,
    pub reducer: Reducer,
    pub field: Field,
}

impl BoxFunctional {
    pub fn new(boxspec: BoxSpec, reducer: Reducer, field: Field) -> Self {
        BoxFunctional {
            boxspec,
            reducer,
            field,
        }
    }

    pub fn eval<E: Environment + ?Sized>(&self, env: &E) -> Result<bool> {
        let ones = match self.field {
            Field::Eta => env
                .eta_grid(&self.boxspec)?
                .values()
                .iter()
                .filter(|&&b| b)
                .count(),
            Field::Omega => env
                .omega_grid(&self.boxspec)?
                .values()
                .iter()
                .filter(|&&v| v != 0)
                .count(),
        } as u64;
        Ok(match self.reducer {
            Reducer::AllZero => ones == 0,
            Reducer::AnyOne => ones > 0,
            Reducer::Parity => ones % 2 == 1,
            Reducer::Threshold(m) => ones >= m,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingReport {
    pub n: u64,
    pub separation: i64,
    pub mean1: f64,
    pub mean2: f64,
    pub cov: f64,
    /// Standard error of the covariance from its influence function.
    pub se: f64,
    /// Paired bootstrap 95% interval.
    pub ci: (f64, f64),
    /// Wald test of zero covariance.
    pub test: TestReport,
}

/// Covariance of f1 and f2 over independent realizations.
pub fn decoupling_test<S: EnvSource>(
    source: &S,
    f1: &BoxFunctional,
    f2: &BoxFunctional,
    n: u64,
    n_boot: usize,
    seed: Seed,
) -> Result<DecouplingReport> {
    let separation = f1.boxspec.separation(&f2.boxspec)?;
    if separation < 1 {
        return Err(Error::usage(
            "decoupling boxes must be vertically separated by at least 1",
        ));
    }
    if n < 2 {
        return Err(Error::usage("decoupling test needs at least 2 samples"));
    }
    source.dim().ensure(f1.boxspec.dim)?;
    let pairs: Vec<(bool, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let env = source.realize(seed.child(i));
            Ok((f1.eval(&env)?, f2.eval(&env)?))
        })
        .collect::<Result<_>>()?;
    let cov_of = |idx: &mut dyn Iterator<Item = usize>| -> (f64, f64, f64) {
        let (mut a, mut b, mut ab, mut m) = (0u64, 0u64, 0u64, 0u64);
        for i in idx {
            let (x, y) = pairs[i];
            a += x as u64;
            b += y as u64;
            ab += (x && y) as u64;
            m += 1;
        }
        // Integer numerator so deterministic fields give exactly 0.
        let num = ab as i128 * m as i128 - a as i128 * b as i128;
        let m2 = (m as f64).powi(2);
        (num as f64 / m2, a as f64 / m as f64, b as f64 / m as f64)
    };
    let (cov, mean1, mean2) = cov_of(&mut (0..n as usize));
    let infl: Vec<f64> = pairs
        .iter()
        .map(|&(x, y)| (x as u8 as f64 - mean1) * (y as u8 as f64 - mean2) - cov)
        .collect();
    let se = (infl.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
    let ci = super::bootstrap_percentile(n as usize, n_boot, seed.named("bootstrap"), |idx| {
        vec![cov_of(&mut idx.iter().copied()).0]
    })
    .first()
    .copied()
    .unwrap_or((cov, cov));
    let inconclusive = mean1 == 0.0 || mean1 == 1.0 || mean2 == 0.0 || mean2 == 1.0;
    let (statistic, p_value) = if se > 0.0 {
        let z = cov / se;
        (z, 2.0 * (1.0 - Normal::standard().cdf(z.abs())))
    } else {
        (0.0, 1.0)
    };
    let test = TestReport {
        statistic,
        p_value,
        n,
        method: "wald-covariance".into(),
        null: "zero covariance".into(),
        inconclusive,
    };
    Ok(DecouplingReport {
        n,
        separation,
        mean1,
        mean2,
        cov,
        se,
        ci,
        test,
    })
}

/// Shape of the analytic decoupling function, without the constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DecouplingForm {
    /// (r+1)^d (h+1) s^{d+1-beta}
    Boolean { d: usize, beta: f64 },
    /// (r+s+1)^d (h+1) s^{d+1-beta}
    Renewal { d: usize, beta: f64 },
}

impl DecouplingForm {
    pub fn of(config: &EnvConfig) -> Self {
        let d = config.dim().get();
        let beta = config.beta();
        match config {
            EnvConfig::Boolean(_) => DecouplingForm::Boolean { d, beta },
            EnvConfig::Renewal(_) => DecouplingForm::Renewal { d, beta },
        }
    }

    /// Box diameters enter as point counts per side, r + 1 and h + 1.
    pub fn unit(&self, r: i64, h: i64, s: i64) -> f64 {
        let (r, h, s) = (r as f64, h as f64, s as f64);
        match *self {
            DecouplingForm::Boolean { d, beta } => {
                (r + 1.0).powi(d as i32) * (h + 1.0) * s.powf(d as f64 + 1.0 - beta)
            }
            DecouplingForm::Renewal { d, beta } => {
                (r + s + 1.0).powi(d as i32) * (h + 1.0) * s.powf(d as f64 + 1.0 - beta)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingBatteryOptions {
    pub pairs: usize,
    pub n: u64,
    pub n_boot: usize,
    pub r_ref: i64,
    pub h_ref: i64,
    pub s_ref: i64,
    pub s_max: i64,
    /// Passing cases needed out of `pairs`.
    pub required: usize,
    /// Known constant; fitted at the reference geometry when absent.
    pub c: Option<f64>,
}

impl Default for DecouplingBatteryOptions {
    fn default() -> Self {
        DecouplingBatteryOptions {
            pairs: 50,
            n: 20_000,
            n_boot: 200,
            r_ref: 4,
            h_ref: 4,
            s_ref: 4,
            s_max: 32,
            required: 47,
            c: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingCase {
    pub f1: BoxFunctional,
    pub f2: BoxFunctional,
    pub r: i64,
    pub h: i64,
    pub s: i64,
    pub epsilon: f64,
    pub report: DecouplingReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingBattery {
    pub form: DecouplingForm,
    pub c: f64,
    pub cases: Vec<DecouplingCase>,
    pub passed: usize,
    pub pass: bool,
}

const REDUCERS: [Reducer; 4] = [
    Reducer::AllZero,
    Reducer::AnyOne,
    Reducer::Parity,
    Reducer::Threshold(2),
];

fn slab(dim: Dim, x_lo: &[i64], r: i64, t_lo: i64, h: i64) -> Result<BoxSpec> {
    let lo = dim.point(x_lo, t_lo)?;
    let hi_x: Vec<i64> = x_lo.iter().map(|x| x + r).collect();
    BoxSpec::new(dim, lo, dim.point(&hi_x, t_lo + h)?)
}

fn random_reducer(st: &mut Stream, card: u64) -> Reducer {
    match st.below(4) {
        0 => Reducer::AllZero,
        1 => Reducer::AnyOne,
        2 => Reducer::Parity,
        _ => Reducer::Threshold(1 + st.below(card)),
    }
}

/// Fit c at the reference geometry (largest positive covariance over the
/// reducer pairs, divided by the unit form) and check random pairs with
/// r <= r_ref, h <= h_ref, s in [s_ref, s_max] against c * unit + 3 SE.
pub fn decoupling_battery<S: EnvSource>(
    source: &S,
    form: DecouplingForm,
    opts: &DecouplingBatteryOptions,
    seed: Seed,
) -> Result<DecouplingBattery> {
    let dim = source.dim();
    let d = dim.get();
    if opts.s_ref < 1 || opts.s_max < opts.s_ref || opts.r_ref < 0 || opts.h_ref < 0 {
        return Err(Error::usage(
            "decoupling battery needs 1 <= s_ref <= s_max and non-negative r_ref, h_ref",
        ));
    }
    let c = match opts.c {
        Some(c) => c,
        None => {
            let b1 = slab(dim, &vec![0; d], opts.r_ref, 0, opts.h_ref)?;
            let b2 = slab(
                dim,
                &vec![0; d],
                opts.r_ref,
                opts.h_ref + opts.s_ref,
                opts.h_ref,
            )?;
            let unit = form.unit(opts.r_ref, opts.h_ref, opts.s_ref);
            let fit_seed = seed.named("fit");
            let mut c: f64 = 0.0;
            for (i, r1) in REDUCERS.iter().enumerate() {
                for (j, r2) in REDUCERS.iter().enumerate() {
                    let rep = decoupling_test(
                        source,
                        &BoxFunctional::new(b1, *r1, Field::Eta),
                        &BoxFunctional::new(b2, *r2, Field::Eta),
                        opts.n,
                        0,
                        fit_seed.child((i * REDUCERS.len() + j) as u64),
                    )?;
                    c = c.max(rep.cov.max(0.0) / unit);
                }
            }
            c
        }
    };
    let case_seed = seed.named("cases");
    let cases: Vec<DecouplingCase> = (0..opts.pairs)
        .map(|i| -> Result<DecouplingCase> {
            let mut st = case_seed.child(i as u64).stream();
            let (r1, r2) = (
                st.below(opts.r_ref as u64 + 1) as i64,
                st.below(opts.r_ref as u64 + 1) as i64,
            );
            let (h1, h2) = (
                st.below(opts.h_ref as u64 + 1) as i64,
                st.below(opts.h_ref as u64 + 1) as i64,
            );
            let s = opts.s_ref + st.below((opts.s_max - opts.s_ref) as u64 + 1) as i64;
            let x2: Vec<i64> = (0..d)
                .map(|_| st.below(2 * opts.r_ref as u64 + 1) as i64 - opts.r_ref)
                .collect();
            let b1 = slab(dim, &vec![0; d], r1, 0, h1)?;
            let b2 = slab(dim, &x2, r2, h1 + s, h2)?;
            let f1 = BoxFunctional::new(b1, random_reducer(&mut st, b1.volume()?), Field::Eta);
            let f2 = BoxFunctional::new(b2, random_reducer(&mut st, b2.volume()?), Field::Eta);
            let report = decoupling_test(
                source,
                &f1,
                &f2,
                opts.n,
                opts.n_boot,
                seed.named("samples").child(i as u64),
            )?;
            let (r, h) = (r1.max(r2), h1.max(h2));
            let epsilon = c * form.unit(r, h, s);
            let pass = report.cov <= epsilon + 3.0 * report.se;
            Ok(DecouplingCase {
                f1,
                f2,
                r,
                h,
                s,
                epsilon,
                report,
                pass,
            })
        })
        .collect::<Result<_>>()?;
    let passed = cases.iter().filter(|c| c.pass).count();
    Ok(DecouplingBattery {
        form,
        c,
        pass: passed >= opts.required,
        passed,
        cases,
    })
}

fn inside_cone(b: &BoxSpec, range: u32, dir: Direction) -> Result<bool> {
    // Cones are convex, so checking the corners suffices.
    let d = b.dim.get();
    for mask in 0..(1u32 << (d + 1)) {
        let mut z = b.lo;
        for i in 0..d {
            if mask >> i & 1 == 1 {
                z.x[i] = b.hi.x[i];
            }
        }
        if mask >> d & 1 == 1 {
            z.t = b.hi.t;
        }
        if !cone_contains(b.dim, &LatticePoint::ORIGIN, &z, range, dir)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Contingency table of (past, future) over `n` realizations, conditioned on
/// eta_0 = 1 unless `conditioned` is false.
pub fn rmp_table<S: EnvSource>(
    source: &S,
    past: &BoxFunctional,
    future: &BoxFunctional,
    n: u64,
    seed: Seed,
    conditioned: bool,
    floor: f64,
) -> Result<[[u64; 2]; 2]> {
    let range = source.range();
    if !inside_cone(&past.boxspec, range, Direction::Past)? {
        return Err(Error::usage(
            "past statistic must read inside the past cone of the origin",
        ));
    }
    if !inside_cone(&future.boxspec, range, Direction::Future)? {
        return Err(Error::usage(
            "future statistic must read inside the future cone of the origin",
        ));
    }
    if future.field != Field::Omega {
        return Err(Error::usage("future statistic may only read omega"));
    }
    let cells: Vec<(bool, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = seed.child(i);
            let env = if conditioned {
                conditioned_realization(source, s, floor)?.0
            } else {
                source.realize(s)
            };
            Ok((past.eval(&env)?, future.eval(&env)?))
        })
        .collect::<Result<_>>()?;
    let mut t = [[0u64; 2]; 2];
    for (a, b) in cells {
        t[a as usize][b as usize] += 1;
    }
    Ok(t)
}

/// Chi-squared test of independence of a past and a future statistic given
/// eta_0 = 1. A constant statistic yields an inconclusive report.
pub fn rmp_test<S: EnvSource>(
    source: &S,
    past: &BoxFunctional,
    future: &BoxFunctional,
    n: u64,
    seed: Seed,
    floor: f64,
) -> Result<TestReport> {
    let t = rmp_table(source, past, future, n, seed, true, floor)?;
    let mut rep = chi2_independence_2x2_permutation(&t);
    rep.null = "past and future statistics independent given eta_0 = 1".into();
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RmpBatteryOptions {
    pub pairs: usize,
    pub n: u64,
    /// Time depth of the cone windows.
    pub depth: i64,
    /// Largest box side (points per axis minus one).
    pub max_side: i64,
    pub level: f64,
    pub band: (f64, f64),
    /// Give up after this many drawn pairs.
    pub max_draws: usize,
    pub floor: f64,
}

impl Default for RmpBatteryOptions {
    fn default() -> Self {
        RmpBatteryOptions {
            pairs: 100,
            n: 2000,
            depth: 8,
            max_side: 3,
            level: 0.05,
            band: (0.02, 0.08),
            max_draws: 1000,
            floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RmpCase {
    pub past: BoxFunctional,
    pub future: BoxFunctional,
    pub report: TestReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RmpBattery {
    pub cases: Vec<RmpCase>,
    pub inconclusive: usize,
    pub rejected: usize,
    pub fraction: f64,
    pub pass: bool,
}

fn random_cone_box(
    st: &mut Stream,
    dim: Dim,
    range: u32,
    depth: i64,
    max_side: i64,
    dir: Direction,
) -> Result<BoxSpec> {
    let near = st.below(depth as u64 + 1) as i64;
    let h = st.below((depth - near).min(max_side) as u64 + 1) as i64;
    let w = range as i64 * near;
    let mut lo = Vec::new();
    let mut side = Vec::new();
    for _ in 0..dim.get() {
        let a = st.below(2 * w as u64 + 1) as i64 - w;
        lo.push(a);
        side.push(st.below((w - a).min(max_side) as u64 + 1) as i64);
    }
    let (t_lo, t_hi) = match dir {
        Direction::Future => (near, near + h),
        Direction::Past => (-near - h, -near),
    };
    let hi: Vec<i64> = lo.iter().zip(&side).map(|(a, s)| a + s).collect();
    BoxSpec::new(dim, dim.point(&lo, t_lo)?, dim.point(&hi, t_hi)?)
}

/// Random (past, future) pairs tested at `level`; the fraction rejected among
/// conclusive tests must lie in the band.
pub fn rmp_battery<S: EnvSource>(
    source: &S,
    opts: &RmpBatteryOptions,
    seed: Seed,
) -> Result<RmpBattery> {
    let dim = source.dim();
    let range = source.range();
    let mut cases = Vec::new();
    let mut inconclusive = 0;
    let mut draw = 0usize;
    while cases.len() < opts.pairs {
        if draw >= opts.max_draws {
            return Err(Error::Resource(format!(
                "only {} conclusive RMP pairs in {} draws",
                cases.len(),
                draw
            )));
        }
        // Draw a batch of candidate pairs and test them in parallel.
        let batch = (opts.pairs - cases.len()).min(opts.max_draws - draw);
        let results: Vec<RmpCase> = (draw..draw + batch)
            .into_par_iter()
            .map(|i| -> Result<RmpCase> {
                let mut st = seed.named("pairs").child(i as u64).stream();
                let pb = random_cone_box(
                    &mut st,
                    dim,
                    range,
                    opts.depth,
                    opts.max_side,
                    Direction::Past,
                )?;
                let fb = random_cone_box(
                    &mut st,
                    dim,
                    range,
                    opts.depth,
                    opts.max_side,
                    Direction::Future,
                )?;
                let pf = if st.below(2) == 0 {
                    Field::Eta
                } else {
                    Field::Omega
                };
                let past = BoxFunctional::new(pb, random_reducer(&mut st, pb.volume()?), pf);
                let future =
                    BoxFunctional::new(fb, random_reducer(&mut st, fb.volume()?), Field::Omega);
                let report = rmp_test(
                    source,
                    &past,
                    &future,
                    opts.n,
                    seed.named("samples").child(i as u64),
                    opts.floor,
                )?;
                Ok(RmpCase {
                    past,
                    future,
                    report,
                })
            })
            .collect::<Result<_>>()?;
        draw += batch;
        for c in results {
            if c.report.inconclusive {
                inconclusive += 1;
            } else {
                cases.push(c);
            }
        }
    }
    let rejected = cases
        .iter()
        .filter(|c| c.report.rejects(opts.level))
        .count();
    let fraction = rejected as f64 / cases.len() as f64;
    Ok(RmpBattery {
        pass: fraction >= opts.band.0 && fraction <= opts.band.1,
        cases,
        inconclusive,
        rejected,
        fraction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerReport {
    pub reps: usize,
    pub n: u64,
    pub rejected: usize,
    pub power: f64,
}

/// Rejection rate of the independence test on the unconditioned pair
/// {omega(0, -gap) >= past_min}, {omega(0, gap) >= future_min}.
///
/// Thresholds are chosen per family so the pair is dependent: with balls,
/// (1, 1) fires when one ball covers both points; with a renewal chain
/// counting down, omega(0, -gap) >= 2 gap + 1 forces omega(0, gap) >= 1.
pub fn rmp_positive_control<S: EnvSource>(
    source: &S,
    gap: i64,
    (past_min, future_min): (u64, u64),
    n: u64,
    reps: usize,
    level: f64,
    seed: Seed,
) -> Result<PowerReport> {
    if gap < 1 {
        return Err(Error::usage("control gap must be at least 1"));
    }
    let dim = source.dim();
    let mut before = LatticePoint::ORIGIN;
    before.t = -gap;
    let mut after = LatticePoint::ORIGIN;
    after.t = gap;
    let rejected = (0..reps)
        .map(|k| -> Result<bool> {
            let s = seed.child(k as u64);
            let cells: Vec<(bool, bool)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let env = source.realize(s.child(i));
                    dim.check(&before)?;
                    Ok((
                        env.omega(&before)? >= past_min,
                        env.omega(&after)? >= future_min,
                    ))
                })
                .collect::<Result<_>>()?;
            let mut t = [[0u64; 2]; 2];
            for (a, b) in cells {
                t[a as usize][b as usize] += 1;
            }
            Ok(chi2_independence_2x2(&t).rejects(level))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&r| r)
        .count();
    Ok(PowerReport {
        reps,
        n,
        rejected,
        power: rejected as f64 / reps as f64,
    })
}

/// Control thresholds for [`rmp_positive_control`].
pub fn control_thresholds(model: &EnvModel, gap: i64) -> (u64, u64) {
    match model {
        EnvModel::Boolean(_) => (1, 1),
        EnvModel::Renewal(_) => (2 * gap as u64 + 1, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BooleanConfig, CoinSource, FnEnv, InterarrivalLaw, RenewalConfig};

    fn bx(t_lo: i64, t_hi: i64) -> BoxSpec {
        BoxSpec::cube(Dim::ONE, 0, 2, t_lo, t_hi).unwrap()
    }

    #[test]
    fn reducers() {
        let env = FnEnv::with_eta(
            Dim::ONE,
            |z: &LatticePoint| (z.x[0] == 1) as u64,
            |z: &LatticePoint| z.x[0] >= 1,
        );
        let b = bx(0, 0);
        let f = |r, fld| BoxFunctional::new(b, r, fld).eval(&env).unwrap();
        assert!(!f(Reducer::AllZero, Field::Eta));
        assert!(f(Reducer::AnyOne, Field::Omega));
        assert!(!f(Reducer::Parity, Field::Eta));
        assert!(f(Reducer::Parity, Field::Omega));
        assert!(f(Reducer::Threshold(2), Field::Eta));
        assert!(!f(Reducer::Threshold(3), Field::Eta));
    }

    #[test]
    fn overlapping_boxes_are_rejected() {
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.5,
        };
        let f1 = BoxFunctional::new(bx(0, 2), Reducer::AnyOne, Field::Eta);
        let f2 = BoxFunctional::new(bx(2, 4), Reducer::AnyOne, Field::Eta);
        assert!(matches!(
            decoupling_test(&src, &f1, &f2, 10, 0, Seed(1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn constant_functional_has_zero_covariance() {
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.5,
        };
        let f1 = BoxFunctional::new(bx(0, 0), Reducer::Threshold(0), Field::Eta);
        let f2 = BoxFunctional::new(bx(3, 3), Reducer::Parity, Field::Eta);
        let r = decoupling_test(&src, &f1, &f2, 500, 50, Seed(2)).unwrap();
        assert_eq!(r.cov, 0.0);
        assert!(r.test.inconclusive);
    }

    #[test]
    fn independent_coins_have_small_covariance() {
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.5,
        };
        let f1 = BoxFunctional::new(bx(0, 1), Reducer::Parity, Field::Eta);
        let f2 = BoxFunctional::new(bx(3, 4), Reducer::AnyOne, Field::Eta);
        let r = decoupling_test(&src, &f1, &f2, 20_000, 100, Seed(3)).unwrap();
        assert!(r.cov.abs() <= 3.0 * r.se, "{r:?}");
        assert!(r.ci.0 <= r.cov && r.cov <= r.ci.1);
    }

    #[test]
    fn rmp_rejects_windows_outside_cones() {
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.5,
        };
        let past = BoxFunctional::new(
            BoxSpec::cube(Dim::ONE, -2, 2, -1, -1).unwrap(),
            Reducer::AnyOne,
            Field::Eta,
        );
        let fut = BoxFunctional::new(
            BoxSpec::cube(Dim::ONE, 0, 0, 1, 1).unwrap(),
            Reducer::AnyOne,
            Field::Omega,
        );
        assert!(rmp_test(&src, &past, &fut, 10, Seed(1), 1e-3).is_err());
        let past = BoxFunctional::new(
            BoxSpec::cube(Dim::ONE, -1, 1, -1, -1).unwrap(),
            Reducer::AnyOne,
            Field::Eta,
        );
        let fut_eta = BoxFunctional {
            field: Field::Eta,
            ..fut
        };
        assert!(rmp_test(&src, &past, &fut_eta, 10, Seed(1), 1e-3).is_err());
        assert!(rmp_test(&src, &past, &fut, 10, Seed(1), 1e-3).is_ok());
    }

    #[test]
    fn constant_future_is_inconclusive() {
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.5,
        };
        let past = BoxFunctional::new(
            BoxSpec::cube(Dim::ONE, 0, 0, -2, -1).unwrap(),
            Reducer::AnyOne,
            Field::Eta,
        );
        let fut = BoxFunctional::new(
            BoxSpec::cube(Dim::ONE, 0, 0, 1, 1).unwrap(),
            Reducer::Threshold(0),
            Field::Omega,
        );
        assert!(
            rmp_test(&src, &past, &fut, 200, Seed(1), 1e-3)
                .unwrap()
                .inconclusive
        );
    }

    #[test]
    fn random_cone_boxes_stay_in_cones() {
        let mut st = Seed(5).stream();
        for _ in 0..500 {
            for dir in [Direction::Past, Direction::Future] {
                let b = random_cone_box(&mut st, Dim::new(2).unwrap(), 2, 8, 3, dir).unwrap();
                assert!(inside_cone(&b, 2, dir).unwrap());
                assert!(b.points().all(|z| cone_contains(
                    b.dim,
                    &LatticePoint::ORIGIN,
                    &z,
                    2,
                    dir
                )
                .unwrap()));
            }
        }
    }

    #[test]
    fn positive_control_detects_shared_balls() {
        let m = EnvConfig::Boolean(BooleanConfig::default_1d())
            .model()
            .unwrap();
        let p = rmp_positive_control(&m, 1, control_thresholds(&m, 1), 10_000, 10, 0.05, Seed(9))
            .unwrap();
        assert!(p.power >= 0.9, "{p:?}");
    }

    #[test]
    fn positive_control_detects_renewal_countdown() {
        let mu = InterarrivalLaw::geometric(0.5).unwrap();
        let m = EnvConfig::Renewal(RenewalConfig::default_1d(mu))
            .model()
            .unwrap();
        let p = rmp_positive_control(&m, 1, control_thresholds(&m, 1), 5_000, 5, 0.05, Seed(9))
            .unwrap();
        assert_eq!(p.rejected, 5, "{p:?}");
        // Renewal epochs of a geometric law are i.i.d., so the zero pattern
        // alone carries no dependence and the (1, 1) pair is near the level.
        let q = rmp_positive_control(&m, 1, (1, 1), 5_000, 20, 0.05, Seed(9)).unwrap();
        assert!(q.power <= 0.3, "{q:?}");
    }

    #[test]
    fn decoupling_form_values() {
        let b = DecouplingForm::Boolean { d: 1, beta: 4.0 };
        assert_eq!(b.unit(4, 4, 8), 25.0 / 64.0);
        let r = DecouplingForm::Renewal { d: 1, beta: 4.0 };
        assert_eq!(r.unit(4, 4, 8), 13.0 * 5.0 / 64.0);
    }
}
