//! Walk engine: jump kernels, per-site uniforms and the coupled walk recursion
//! Z_{t+1} = Z_t + (g(omega_{Z_t}, U_{Z_t}), 1).

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::{offsets, AllowedPath, Dim, Displacement, LatticePoint, MAX_DIM};
use crate::rng::Seed;

const PMF_TOL: f64 = 1e-12;

/// Transition rule for one environment state: a pmf over [-R, R]^d in
/// lexicographic order, with its cumulative sums.
#[derive(Clone, Debug, PartialEq)]
struct Rule {
    pmf: Vec<f64>,
    cum: Vec<f64>,
    last_positive: usize,
}

impl Rule {
    fn new(pmf: Vec<f64>, expected_len: usize) -> Result<Self> {
        if pmf.len() != expected_len {
            return Err(Error::usage(format!(
                "pmf has {} entries, expected {expected_len}",
                pmf.len()
            )));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::usage("pmf entries must be finite and non-negative"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::usage(format!("pmf sums to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cum = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Ok(Rule {
            pmf,
            cum,
            last_positive,
        })
    }

    /// Index of the half-open interval [cum_{i-1}, cum_i) containing u.
    #[inline]
    fn lookup(&self, u: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= u);
        // u can exceed the last cumulative sum by rounding; give it to the
        // last atom with positive mass.
        i.min(self.last_positive)
    }
}

/// Jump kernel p(s, y) on [-R, R]^d indexed by non-negative integer states.
///
/// States below `explicit.len()` use their own rule; larger states use the
/// default rule if one is given.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel {
    dim: Dim,
    range: u32,
    name: String,
    explicit: Vec<Rule>,
    default: Option<Rule>,
    kappa: f64,
    displacements: Vec<Displacement>,
}

impl JumpKernel {
    /// Build a uniformly elliptic kernel; fails when some rule puts zero mass
    /// on a nearest-neighbour-or-stay move.
    pub fn new(
        dim: Dim,
        range: u32,
        name: &str,
        explicit: Vec<Vec<f64>>,
        default: Option<Vec<f64>>,
    ) -> Result<Self> {
        let k = Self::build(dim, range, name, explicit, default)?;
        if k.kappa <= 0.0 {
            return Err(Error::usage(format!(
                "kernel `{name}` is not uniformly elliptic (some nearest-neighbour-or-stay move has probability 0)"
            )));
        }
        Ok(k)
    }

    fn build(
        dim: Dim,
        range: u32,
        name: &str,
        explicit: Vec<Vec<f64>>,
        default: Option<Vec<f64>>,
    ) -> Result<Self> {
        if range == 0 {
            return Err(Error::usage("kernel range must be at least 1"));
        }
        if explicit.is_empty() && default.is_none() {
            return Err(Error::usage("kernel needs at least one rule"));
        }
        let displacements = offsets(dim, range as i64);
        let n = displacements.len();
        let explicit = explicit
            .into_iter()
            .map(|p| Rule::new(p, n))
            .collect::<Result<Vec<_>>>()?;
        let default = default.map(|p| Rule::new(p, n)).transpose()?;
        let near: Vec<usize> = displacements
            .iter()
            .enumerate()
            .filter(|(_, y)| y.iter().all(|c| c.abs() <= 1))
            .map(|(i, _)| i)
            .collect();
        let kappa = explicit
            .iter()
            .chain(default.iter())
            .flat_map(|r| near.iter().map(move |&i| r.pmf[i]))
            .fold(f64::INFINITY, f64::min);
        Ok(JumpKernel {
            dim,
            range,
            name: name.to_string(),
            explicit,
            default,
            kappa,
            displacements,
        })
    }

    /// Two-state drift kernel: every move in [-1, 1]^d gets mass kappa except
    /// the favoured one (+e_1 on state 0, -e_1 elsewhere), which takes the
    /// rest. For d = 1 this is (k, k, 1-2k) on state 0 and (1-2k, k, k) otherwise.
    pub fn drift(dim: Dim, range: u32, kappa: f64) -> Result<Self> {
        let n_near = 3usize.pow(dim.get() as u32);
        if !(kappa > 0.0 && kappa * n_near as f64 <= 1.0) {
            return Err(Error::config(
                "kernel.kappa",
                format!("must lie in (0, 1/{n_near}] for the drift kernel"),
            ));
        }
        let rule = |sign: i64| -> Result<Vec<f64>> {
            let mut e = [0i64; MAX_DIM];
            e[0] = sign;
            Ok(offsets(dim, range as i64)
                .iter()
                .map(|y| {
                    if y.iter().any(|c| c.abs() > 1) {
                        0.0
                    } else if *y == e {
                        1.0 - (n_near - 1) as f64 * kappa
                    } else {
                        kappa
                    }
                })
                .collect())
        };
        Self::new(dim, range, "drift", vec![rule(1)?], Some(rule(-1)?))
    }

    /// Lazy kernel ignoring the environment: mass kappa on each non-zero move
    /// in [-1, 1]^d and the rest on staying put. kappa = 1/4, d = 1 is the
    /// lazy simple random walk.
    pub fn lazy(dim: Dim, range: u32, kappa: f64) -> Result<Self> {
        let n_near = 3usize.pow(dim.get() as u32);
        if !(kappa > 0.0 && kappa * (n_near - 1) as f64 <= 1.0 - kappa) {
            return Err(Error::config(
                "kernel.kappa",
                format!("must lie in (0, 1/{n_near}] for the lazy kernel"),
            ));
        }
        let pmf = offsets(dim, range as i64)
            .iter()
            .map(|y| {
                if y.iter().any(|c| c.abs() > 1) {
                    0.0
                } else if y.iter().all(|&c| c == 0) {
                    1.0 - (n_near - 1) as f64 * kappa
                } else {
                    kappa
                }
            })
            .collect();
        Self::new(dim, range, "lazy", vec![], Some(pmf))
    }

    /// Degenerate kernel that never moves. It is not elliptic and exists only
    /// as a control for estimators (zero speed, zero covariance).
    pub fn stay(dim: Dim, range: u32) -> Result<Self> {
        let pmf = offsets(dim, range as i64)
            .iter()
            .map(|y| if y.iter().all(|&c| c == 0) { 1.0 } else { 0.0 })
            .collect();
        Self::build(dim, range, "stay", vec![], Some(pmf))
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ellipticity floor: min over states and nearest-neighbour-or-stay moves.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn displacements(&self) -> &[Displacement] {
        &self.displacements
    }

    fn rule(&self, state: u64) -> Result<&Rule> {
        match self.explicit.get(state as usize) {
            Some(r) => Ok(r),
            None => self.default.as_ref().ok_or_else(|| {
                Error::usage(format!(
                    "kernel `{}` has no rule for state {state}",
                    self.name
                ))
            }),
        }
    }

    /// p(s, .) in lexicographic order of displacements.
    pub fn pmf(&self, state: u64) -> Result<&[f64]> {
        Ok(&self.rule(state)?.pmf)
    }

    /// g(s, u): the displacement whose interval contains u.
    pub fn jump(&self, state: u64, u: f64) -> Result<Displacement> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::usage(format!("uniform {u} outside [0, 1)")));
        }
        let rule = self.rule(state)?;
        Ok(self.displacements[rule.lookup(u)])
    }

    /// Mean and covariance of one step from state s (spatial parts).
    pub fn step_moments(&self, state: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.dim.get();
        let pmf = self.pmf(state)?;
        let mut mean = vec![0.0; d];
        for (p, y) in pmf.iter().zip(&self.displacements) {
            for i in 0..d {
                mean[i] += p * y[i] as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for (p, y) in pmf.iter().zip(&self.displacements) {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += p * (y[i] as f64 - mean[i]) * (y[j] as f64 - mean[j]);
                }
            }
        }
        Ok((mean, cov))
    }
}

const TAG_SITE_UNIFORM: u64 = 0x5553_4954_45; // "USITE"

/// U_z: the uniform attached to site z.
#[inline]
pub fn site_uniform(seed: Seed, z: &LatticePoint) -> f64 {
    seed.uniform(&[
        TAG_SITE_UNIFORM,
        z.x[0] as u64,
        z.x[1] as u64,
        z.x[2] as u64,
        z.t as u64,
    ])
}

/// A walk path stored as its start and one displacement per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub start: LatticePoint,
    pub displacements: Vec<Displacement>,
}

impl Trajectory {
    pub fn sites(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        let mut cur = self.start;
        std::iter::once(self.start).chain(self.displacements.iter().map(move |y| {
            for i in 0..MAX_DIM {
                cur.x[i] += y[i];
            }
            cur.t += 1;
            cur
        }))
    }

    pub fn end(&self) -> LatticePoint {
        self.sites().last().unwrap_or(self.start)
    }

    pub fn to_path(&self, lipschitz: u32) -> AllowedPath {
        AllowedPath {
            start_time: self.start.t,
            sites: self.sites().collect(),
            lipschitz,
        }
    }
}

/// Step-by-step walker; use when only the current position matters.
#[derive(Clone, Debug)]
pub struct Walker<'k> {
    pub pos: LatticePoint,
    kernel: &'k JumpKernel,
    seed: Seed,
}

impl<'k> Walker<'k> {
    pub fn new(start: LatticePoint, kernel: &'k JumpKernel, seed: Seed) -> Self {
        Walker {
            pos: start,
            kernel,
            seed,
        }
    }

    /// Advance one step and return the displacement taken.
    #[inline]
    pub fn step<E: Environment + ?Sized>(&mut self, env: &E) -> Result<Displacement> {
        let z = self.pos;
        let s = env.omega(&z).map_err(|e| e.at(z))?;
        let y = self.kernel.jump(s, site_uniform(self.seed, &z))?;
        self.pos = z.checked_shift(self.kernel.dim, &y, 1)?;
        Ok(y)
    }
}

/// Run `steps` steps from `start` in a fixed environment.
pub fn simulate<E: Environment + ?Sized>(
    start: LatticePoint,
    steps: u64,
    env: &E,
    kernel: &JumpKernel,
    seed: Seed,
) -> Result<Trajectory> {
    env.dim().ensure(kernel.dim())?;
    kernel.dim().check(&start)?;
    let mut w = Walker::new(start, kernel, seed);
    let mut displacements = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        displacements.push(w.step(env)?);
    }
    Ok(Trajectory {
        start,
        displacements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FnEnv;

    fn example_kernel() -> JumpKernel {
        JumpKernel::new(Dim::ONE, 1, "ex", vec![], Some(vec![0.2, 0.5, 0.3])).unwrap()
    }

    #[test]
    fn jump_examples() {
        let k = example_kernel();
        assert_eq!(k.jump(0, 0.1).unwrap()[0], -1);
        assert_eq!(k.jump(0, 0.65).unwrap()[0], 0);
        assert_eq!(k.jump(0, 0.95).unwrap()[0], 1);
        assert_eq!(k.jump(0, 0.2).unwrap()[0], 0);
        assert_eq!(k.jump(0, 0.0).unwrap()[0], -1);
        assert_eq!(k.jump(0, 1.0 - f64::EPSILON / 2.0).unwrap()[0], 1);
        assert!(k.jump(0, 1.0).is_err());
    }

    #[test]
    fn unknown_state_is_usage_error() {
        let k = JumpKernel::new(Dim::ONE, 1, "two", vec![vec![0.2, 0.5, 0.3]], None).unwrap();
        assert!(k.jump(0, 0.5).is_ok());
        assert!(matches!(k.jump(1, 0.5), Err(Error::Usage(_))));
    }

    #[test]
    fn ellipticity_is_enforced() {
        assert!(JumpKernel::new(Dim::ONE, 1, "bad", vec![], Some(vec![0.5, 0.5, 0.0])).is_err());
        assert!(JumpKernel::new(Dim::ONE, 1, "bad", vec![], Some(vec![0.5, 0.5, 0.1])).is_err());
        // Zero mass on a long jump is fine; the floor covers [-1, 1]^d only.
        let k = JumpKernel::new(
            Dim::ONE,
            2,
            "r2",
            vec![],
            Some(vec![0.0, 0.3, 0.4, 0.3, 0.0]),
        )
        .unwrap();
        assert!((k.kappa() - 0.3).abs() < 1e-15);
        assert!(JumpKernel::stay(Dim::ONE, 1).unwrap().kappa() == 0.0);
    }

    #[test]
    fn drift_kernel_shape() {
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        assert_eq!(k.pmf(0).unwrap(), &[0.1, 0.1, 0.8]);
        let p1 = k.pmf(7).unwrap();
        assert!((p1[0] - 0.8).abs() < 1e-15 && p1[1] == 0.1 && p1[2] == 0.1);
        assert!((k.kappa() - 0.1).abs() < 1e-15);
        let d2 = JumpKernel::drift(Dim::new(2).unwrap(), 1, 0.05).unwrap();
        assert!((d2.pmf(0).unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(JumpKernel::drift(Dim::ONE, 1, 0.0).is_err());
    }

    #[test]
    fn lazy_kernel_is_lazy_srw_in_one_dimension() {
        let k = JumpKernel::lazy(Dim::ONE, 1, 0.25).unwrap();
        assert_eq!(k.pmf(0).unwrap(), &[0.25, 0.5, 0.25]);
        assert_eq!(k.pmf(123).unwrap(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn jump_law_matches_pmf() {
        let k = example_kernel();
        let mut counts = [0u64; 3];
        let seed = Seed(99);
        let n = 1_000_000u64;
        for i in 0..n {
            let y = k.jump(0, seed.uniform(&[i])).unwrap()[0];
            counts[(y + 1) as usize] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip([0.2, 0.5, 0.3])
            .map(|(&c, p)| (c as f64 / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.005, "tv = {tv}");
    }

    #[test]
    fn site_uniform_is_deterministic() {
        let z = LatticePoint::new1(3, -4);
        assert_eq!(site_uniform(Seed(1), &z), site_uniform(Seed(1), &z));
        assert_ne!(site_uniform(Seed(1), &z), site_uniform(Seed(2), &z));
    }

    #[test]
    fn zero_steps_and_stay_kernel() {
        let env = FnEnv::new(Dim::ONE, |_| 0);
        let k = JumpKernel::stay(Dim::ONE, 1).unwrap();
        let start = LatticePoint::new1(5, 2);
        let tr = simulate(start, 0, &env, &k, Seed(1)).unwrap();
        assert!(tr.displacements.is_empty());
        assert_eq!(tr.end(), start);
        let tr = simulate(start, 50, &env, &k, Seed(1)).unwrap();
        assert!(tr.sites().all(|z| z.x[0] == 5));
        assert_eq!(tr.end().t, 52);
    }

    #[test]
    fn trajectories_are_allowed_paths() {
        let env = FnEnv::new(Dim::ONE, |z| (z.x[0].rem_euclid(3) == 0) as u64);
        let k = JumpKernel::drift(Dim::ONE, 1, 0.2).unwrap();
        let tr = simulate(LatticePoint::ORIGIN, 500, &env, &k, Seed(4)).unwrap();
        assert!(tr.to_path(1).validate(Dim::ONE).unwrap());
        assert_eq!(tr.sites().count(), 501);
    }

    #[test]
    fn coupled_walks_merge_forever() {
        let env = FnEnv::new(Dim::ONE, |z| {
            ((z.x[0] * 7 + z.t * 3).rem_euclid(5) == 0) as u64
        });
        let k = JumpKernel::drift(Dim::ONE, 1, 0.25).unwrap();
        let seed = Seed(8);
        let mut merged = 0;
        for start in 1..40 {
            let a = simulate(LatticePoint::ORIGIN, 400, &env, &k, seed).unwrap();
            let b = simulate(LatticePoint::new1(2 * start, 0), 400, &env, &k, seed).unwrap();
            let sa: Vec<_> = a.sites().collect();
            let sb: Vec<_> = b.sites().collect();
            if let Some(m) = (0..sa.len()).find(|&i| sa[i] == sb[i]) {
                merged += 1;
                assert_eq!(sa[m..], sb[m..]);
            }
        }
        assert!(merged > 0);
    }

    #[test]
    fn one_step_law_given_state() {
        let env = FnEnv::new(Dim::ONE, |z| ((z.x[0] ^ z.t).rem_euclid(2)) as u64);
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        let tr = simulate(LatticePoint::ORIGIN, 100_000, &env, &k, Seed(21)).unwrap();
        let mut counts = [[0f64; 3]; 2];
        for (z, y) in tr.sites().zip(&tr.displacements) {
            let s = env.omega(&z).unwrap() as usize;
            counts[s][(y[0] + 1) as usize] += 1.0;
        }
        for s in 0..2 {
            let n: f64 = counts[s].iter().sum();
            let pmf = k.pmf(s as u64).unwrap();
            let tv: f64 = (0..3)
                .map(|i| (counts[s][i] / n - pmf[i]).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.01, "state {s}: tv = {tv}");
        }
    }
}
