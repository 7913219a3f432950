//! Trap sets, threatened points and the minimal number of threats along
//! allowed paths, plus the Monte Carlo diagnostics built on them: the q_k
//! cascade, the A_{k,H} events, the threatened-box frequency and the
//! fall-on-trap bound.
//!
//! A point z = (x, t) is H-threatened when some trap (x', t') has
//! t <= t' <= t + H and |x' - x| <= t' - t. Along a path only times in HZ are
//! counted.

use std::collections::HashSet;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{EnvSource, Environment, Grid};
use crate::error::{Error, Result};
use crate::lattice::{offsets, AllowedPath, BoxSpec, Dim, Displacement, LatticePoint, MAX_DIM};
use crate::rng::Seed;
use crate::stats::battery::{decoupling_test, BoxFunctional, Field, Reducer};
use crate::stats::{wilson_interval, Z95};
use crate::walk::{JumpKernel, Walker};

/// Largest grid (in points) a single diagnostic may allocate.
pub const GRID_LIMIT: u64 = 1 << 28;

pub trait TrapSet {
    fn dim(&self) -> Dim;
    fn contains(&self, z: &LatticePoint) -> Result<bool>;
    fn grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        Grid::try_from_fn(*window, |z| self.contains(z))
    }
}

/// A finite set of traps.
#[derive(Clone, Debug, Default)]
pub struct ExplicitTraps {
    pub dim: Option<Dim>,
    pub points: HashSet<LatticePoint>,
}

impl ExplicitTraps {
    pub fn new(dim: Dim, points: impl IntoIterator<Item = LatticePoint>) -> Self {
        ExplicitTraps {
            dim: Some(dim),
            points: points.into_iter().collect(),
        }
    }
}

impl TrapSet for ExplicitTraps {
    fn dim(&self) -> Dim {
        self.dim.unwrap_or(Dim::ONE)
    }
    fn contains(&self, z: &LatticePoint) -> Result<bool> {
        Ok(self.points.contains(z))
    }
}

/// Sigma = {z : eta_z = 1} of an environment realization.
pub struct EtaTraps<'a, E: ?Sized>(pub &'a E);

impl<E: Environment + ?Sized> TrapSet for EtaTraps<'_, E> {
    fn dim(&self) -> Dim {
        self.0.dim()
    }
    fn contains(&self, z: &LatticePoint) -> Result<bool> {
        self.0.eta(z)
    }
    fn grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        self.0.eta_grid(window)
    }
}

/// A trap set with some points removed.
pub struct Without<'a, T: ?Sized> {
    pub inner: &'a T,
    pub removed: Vec<LatticePoint>,
}

impl<T: TrapSet + ?Sized> TrapSet for Without<'_, T> {
    fn dim(&self) -> Dim {
        self.inner.dim()
    }
    fn contains(&self, z: &LatticePoint) -> Result<bool> {
        Ok(!self.removed.contains(z) && self.inner.contains(z)?)
    }
    fn grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        let mut g = self.inner.grid(window)?;
        for z in &self.removed {
            if let Some(v) = g.get_mut(z) {
                *v = false;
            }
        }
        Ok(g)
    }
}

/// Direct check of the definition by scanning the forward light cone.
pub fn is_threatened<T: TrapSet + ?Sized>(z: &LatticePoint, h: u64, traps: &T) -> Result<bool> {
    if h == 0 {
        return Err(Error::usage("H must be at least 1"));
    }
    let dim = traps.dim();
    dim.check(z)?;
    for dt in 0..=h as i64 {
        let t = z.t.checked_add(dt).ok_or(Error::Overflow)?;
        for y in offsets(dim, dt) {
            let w = LatticePoint { x: add(z.x, &y), t };
            if traps.contains(&w)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn add(mut x: [i64; MAX_DIM], y: &Displacement) -> [i64; MAX_DIM] {
    for i in 0..MAX_DIM {
        x[i] += y[i];
    }
    x
}

/// M(sigma, H): threatened sites of the path at times in HZ.
pub fn count_threats<T: TrapSet + ?Sized>(path: &AllowedPath, h: u64, traps: &T) -> Result<u64> {
    if !path.validate(traps.dim())? {
        return Err(Error::usage("path is not an allowed path"));
    }
    let mut n = 0;
    for s in &path.sites {
        if s.t.rem_euclid(h as i64) == 0 && is_threatened(s, h, traps)? {
            n += 1;
        }
    }
    Ok(n)
}

/// Spatial array over the spatial part of a box, last axis fastest.
struct Layer {
    lo: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    d: usize,
}

impl Layer {
    fn of(b: &BoxSpec) -> Self {
        let d = b.dim.get();
        let mut shape = [1usize; MAX_DIM];
        for i in 0..d {
            shape[i] = b.side(i) as usize;
        }
        Layer {
            lo: b.lo.x,
            shape,
            d,
        }
    }

    fn len(&self) -> usize {
        self.shape[..self.d].iter().product()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..self.d].iter().product()
    }

    /// Position of spatial index i.
    fn coords(&self, mut i: usize) -> [i64; MAX_DIM] {
        let mut x = [0i64; MAX_DIM];
        for a in (0..self.d).rev() {
            x[a] = self.lo[a] + (i % self.shape[a]) as i64;
            i /= self.shape[a];
        }
        x
    }

    /// out[i] = op over in[j] with |j - i| <= r on every axis, clipped to the layer.
    fn sliding<T: Copy>(&self, data: &mut Vec<T>, r: usize, op: impl Fn(T, T) -> T) {
        let mut tmp = data.clone();
        for axis in 0..self.d {
            let stride = self.stride(axis);
            let n = self.shape[axis];
            for (i, out) in tmp.iter_mut().enumerate() {
                let pos = (i / stride) % n;
                let base = i - pos * stride;
                let a = pos.saturating_sub(r);
                let b = (pos + r).min(n - 1);
                let mut acc = data[base + a * stride];
                for p in a + 1..=b {
                    acc = op(acc, data[base + p * stride]);
                }
                *out = acc;
            }
            std::mem::swap(data, &mut tmp);
        }
    }
}

/// H-threatened indicator for every site of the spatial box `region` at time
/// t0, computed by backward reachability over [t0, t0 + H]. `traps` must
/// cover `region` widened by H in space and [t0, t0 + H] in time.
pub fn threat_layer(traps: &Grid<bool>, region: &BoxSpec, t0: i64, h: u64) -> Result<Vec<bool>> {
    let dim = region.dim;
    let hh = h as i64;
    let mut wide = *region;
    for i in 0..dim.get() {
        wide.lo.x[i] -= hh;
        wide.hi.x[i] += hh;
    }
    wide.lo.t = t0;
    wide.hi.t = t0 + hh;
    let tw = &traps.window;
    if !(tw.contains(&wide.lo) && tw.contains(&wide.hi)) {
        return Err(Error::usage(
            "trap window does not cover the threat computation",
        ));
    }
    let layer = Layer::of(&wide);
    let mut reach = vec![false; layer.len()];
    for t in (t0..=t0 + hh).rev() {
        if t < t0 + hh {
            layer.sliding(&mut reach, 1, |a, b| a | b);
        }
        for (i, r) in reach.iter_mut().enumerate() {
            if !*r {
                let z = LatticePoint {
                    x: layer.coords(i),
                    t,
                };
                *r = *traps.get(&z).expect("covered");
            }
        }
    }
    // Restrict to the region.
    let inner = Layer::of(region);
    Ok((0..inner.len())
        .map(|i| {
            let z = LatticePoint {
                x: inner.coords(i),
                t: t0,
            };
            let mut j = 0usize;
            for a in 0..dim.get() {
                j += (z.x[a] - layer.lo[a]) as usize * layer.stride(a);
            }
            reach[j]
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreatProblem {
    /// Path length (number of steps).
    pub len: u64,
    pub h: u64,
    pub range: u32,
    /// Start sites; all must share one time.
    pub start: Vec<LatticePoint>,
}

impl ThreatProblem {
    /// M_J: paths of length J*H from the origin.
    pub fn m_j(j: u64, h: u64, range: u32) -> Self {
        ThreatProblem {
            len: j * h,
            h,
            range,
            start: vec![LatticePoint::ORIGIN],
        }
    }

    fn start_time(&self) -> Result<i64> {
        let t = self
            .start
            .first()
            .ok_or_else(|| Error::usage("empty start region"))?
            .t;
        if self.start.iter().any(|s| s.t != t) {
            return Err(Error::usage("start sites must share one time"));
        }
        Ok(t)
    }

    /// Smallest spatial-temporal box holding every reachable site.
    pub fn reachable_window(&self, dim: Dim) -> Result<BoxSpec> {
        let t = self.start_time()?;
        let reach = (self.range as i64)
            .checked_mul(self.len as i64)
            .ok_or(Error::Overflow)?;
        let mut lo = self.start[0];
        let mut hi = self.start[0];
        for s in &self.start {
            dim.check(s)?;
            for i in 0..dim.get() {
                lo.x[i] = lo.x[i].min(s.x[i]);
                hi.x[i] = hi.x[i].max(s.x[i]);
            }
        }
        for i in 0..dim.get() {
            lo.x[i] -= reach;
            hi.x[i] += reach;
        }
        lo.t = t;
        hi.t = t + self.len as i64;
        BoxSpec::new(dim, lo, hi)
    }

    /// Trap window needed to decide threats on `window`.
    pub fn trap_window(&self, window: &BoxSpec) -> Result<BoxSpec> {
        let mut w = *window;
        let h = self.h as i64;
        for i in 0..w.dim.get() {
            w.lo.x[i] -= h;
            w.hi.x[i] += h;
        }
        w.hi.t += h;
        if w.volume()? > GRID_LIMIT {
            return Err(Error::Resource(format!(
                "trap window of {} points exceeds {GRID_LIMIT}",
                w.volume()?
            )));
        }
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpMode {
    Serial,
    /// Threat layers computed in parallel; same output as serial.
    LayerParallel,
}

/// Minimum of M(sigma, H) over allowed paths of the problem, by backward
/// dynamic programming over time layers. `window` defaults to the reachable
/// window; a supplied one must contain it.
pub fn min_threats<T: TrapSet + ?Sized>(
    problem: &ThreatProblem,
    traps: &T,
    window: Option<&BoxSpec>,
    mode: DpMode,
) -> Result<u64> {
    let dim = traps.dim();
    if problem.h == 0 {
        return Err(Error::usage("H must be at least 1"));
    }
    let needed = problem.reachable_window(dim)?;
    let window = match window {
        Some(w) => {
            if !(w.contains(&needed.lo) && w.contains(&needed.hi)) {
                return Err(Error::usage("window does not contain every reachable site"));
            }
            *w
        }
        None => needed,
    };
    let grid = traps.grid(&problem.trap_window(&window)?)?;
    min_threats_on_grid(problem, &grid, &window, mode)
}

/// As [`min_threats`] with a precomputed trap grid.
pub fn min_threats_on_grid(
    problem: &ThreatProblem,
    traps: &Grid<bool>,
    window: &BoxSpec,
    mode: DpMode,
) -> Result<u64> {
    let dim = window.dim;
    let a = problem.start_time()?;
    let h = problem.h as i64;
    let end = a + problem.len as i64;
    let mut region = *window;
    region.lo.t = a;
    region.hi.t = a;
    let layer = Layer::of(&region);
    let counted: Vec<i64> = (a..=end).filter(|t| t.rem_euclid(h) == 0).collect();
    let compute = |t: i64| threat_layer(traps, &region, t, problem.h);
    let threats: Vec<Vec<bool>> = match mode {
        DpMode::Serial => counted.iter().map(|&t| compute(t)).collect::<Result<_>>()?,
        DpMode::LayerParallel => counted
            .par_iter()
            .map(|&t| compute(t))
            .collect::<Result<_>>()?,
    };
    let threat_at =
        |t: i64| -> Option<&Vec<bool>> { counted.binary_search(&t).ok().map(|k| &threats[k]) };
    let mut value = vec![0u32; layer.len()];
    for t in (a..=end).rev() {
        if t < end {
            layer.sliding(&mut value, problem.range as usize, u32::min);
        }
        if let Some(th) = threat_at(t) {
            for (v, &b) in value.iter_mut().zip(th) {
                *v += b as u32;
            }
        }
    }
    let mut best = u32::MAX;
    for s in &problem.start {
        dim.check(s)?;
        let mut j = 0usize;
        for ax in 0..dim.get() {
            let off = s.x[ax] - layer.lo[ax];
            if off < 0 || off as usize >= layer.shape[ax] {
                return Err(Error::usage("start site outside window"));
            }
            j += off as usize * layer.stride(ax);
        }
        best = best.min(value[j]);
    }
    Ok(best as u64)
}

/// Exhaustive minimum over every step sequence, using the definitional
/// threat check. Exponential; intended as an oracle for small problems.
pub fn min_threats_brute<T: TrapSet + ?Sized>(problem: &ThreatProblem, traps: &T) -> Result<u64> {
    let dim = traps.dim();
    let steps = offsets(dim, problem.range as i64);
    let n_paths = (steps.len() as f64).powf(problem.len as f64);
    if n_paths * problem.start.len() as f64 > 5e8 {
        return Err(Error::Resource(format!(
            "brute force over {n_paths:.3e} paths per start is too large"
        )));
    }
    problem.start_time()?;
    let h = problem.h;
    fn dfs<T: TrapSet + ?Sized>(
        z: LatticePoint,
        left: u64,
        h: u64,
        steps: &[Displacement],
        traps: &T,
        acc: u64,
        best: &mut u64,
    ) -> Result<()> {
        let here = (z.t.rem_euclid(h as i64) == 0 && is_threatened(&z, h, traps)?) as u64;
        let acc = acc + here;
        if acc >= *best {
            // No completion can do better; still exhaustive in the result.
            return Ok(());
        }
        if left == 0 {
            *best = acc;
            return Ok(());
        }
        for y in steps {
            let next = LatticePoint {
                x: add(z.x, y),
                t: z.t + 1,
            };
            dfs(next, left - 1, h, steps, traps, acc, best)?;
        }
        Ok(())
    }
    let mut best = u64::MAX;
    for s in &problem.start {
        dfs(*s, problem.len, h, &steps, traps, 0, &mut best)?;
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FallOnTrapReport {
    /// M_J for the trap set as given.
    pub m_j: u64,
    /// M_J with the starting point removed from the traps; the hitting time
    /// only looks at t > 0, so this is the count the bound is applied with.
    pub m_j_strict: u64,
    pub bound: f64,
    pub empirical: f64,
    pub se: f64,
    pub n_walks: u64,
    /// (bound - empirical) / se.
    pub margin_se: f64,
    pub pass: bool,
}

/// Compare P^omega(T^0 > JH) over walks in a fixed environment, with T^0 the
/// first t > 0 at a trap of Sigma = {eta = 1}, against (1 - kappa^H)^{M_J}.
pub fn verify_fall_on_trap<E: Environment + Clone + Send>(
    env: &E,
    kernel: &JumpKernel,
    j: u64,
    h: u64,
    n_walks: u64,
    seed: Seed,
) -> Result<FallOnTrapReport> {
    let dim = env.dim();
    dim.ensure(kernel.dim())?;
    let problem = ThreatProblem::m_j(j, h, kernel.range());
    let window = problem.reachable_window(dim)?;
    let sigma = EtaTraps(env);
    let grid = sigma.grid(&problem.trap_window(&window)?)?;
    let m_j = min_threats_on_grid(&problem, &grid, &window, DpMode::Serial)?;
    let mut strict = grid.clone();
    if let Some(v) = strict.get_mut(&LatticePoint::ORIGIN) {
        *v = false;
    }
    let m_j_strict = min_threats_on_grid(&problem, &strict, &window, DpMode::Serial)?;
    let jh = j * h;
    // Realizations may carry a lazy cache, so each worker walks on its own copy.
    let proto = Mutex::new(env.clone());
    let survived = (0..n_walks)
        .into_par_iter()
        .map_init(
            || proto.lock().expect("not poisoned").clone(),
            |env, i| -> Result<bool> {
                let mut w = Walker::new(LatticePoint::ORIGIN, kernel, seed.child(i));
                for _ in 0..jh {
                    w.step(env)?;
                    if *grid.get(&w.pos).expect("reachable sites are in the window") {
                        return Ok(false);
                    }
                }
                Ok(true)
            },
        )
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&s| s)
        .count() as u64;
    let p = survived as f64 / n_walks as f64;
    let bound = (1.0 - kernel.kappa().powi(h as i32)).powi(m_j_strict as i32);
    // The binomial SE vanishes at p = 0 or 1; fall back to the SE at the bound.
    let se = (p * (1.0 - p) / n_walks as f64)
        .sqrt()
        .max((bound * (1.0 - bound) / n_walks as f64).sqrt());
    let margin_se = if se > 0.0 {
        (bound - p) / se
    } else if p <= bound {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(FallOnTrapReport {
        m_j,
        m_j_strict,
        bound,
        empirical: p,
        se,
        n_walks,
        margin_se,
        pass: p <= bound + 3.0 * se,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub k: u32,
    pub scale: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub successes: u64,
    pub n: u64,
}

impl ProbabilityEstimate {
    fn new(k: u32, scale: u64, successes: u64, n: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, n, Z95);
        ProbabilityEstimate {
            k,
            scale,
            estimate: successes as f64 / n as f64,
            ci_lo,
            ci_hi,
            successes,
            n,
        }
    }
}

pub fn scale(k: u32) -> u64 {
    4u64.pow(k)
}

/// q_k = P(eta_(0,t) = 0 for all t in [0, L_k)) for k in k_min..=k_max, on
/// nested events of the same realizations.
pub fn estimate_qk_cascade<S: EnvSource>(
    source: &S,
    k_min: u32,
    k_max: u32,
    n: u64,
    seed: Seed,
) -> Result<Vec<ProbabilityEstimate>> {
    if k_min > k_max || k_max > 12 {
        return Err(Error::usage("need k_min <= k_max <= 12"));
    }
    let l_max = scale(k_max) as i64;
    // First eta-hit on the vertical segment, or l_max when there is none.
    let hits: Vec<i64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<i64> {
            let env = source.realize(seed.child(i));
            for t in 0..l_max {
                if env.eta(&LatticePoint { x: [0; MAX_DIM], t })? {
                    return Ok(t);
                }
            }
            Ok(l_max)
        })
        .collect::<Result<_>>()?;
    Ok((k_min..=k_max)
        .map(|k| {
            let l = scale(k) as i64;
            let s = hits.iter().filter(|&&h| h >= l).count() as u64;
            ProbabilityEstimate::new(k, l as u64, s, n)
        })
        .collect())
}

pub fn estimate_qk<S: EnvSource>(
    k: u32,
    source: &S,
    n: u64,
    seed: Seed,
) -> Result<ProbabilityEstimate> {
    Ok(estimate_qk_cascade(source, k, k, n, seed)?.remove(0))
}

/// Default triggering height H_k = floor(L_k / k^2).
pub fn default_h(k: u32) -> u64 {
    (scale(k) / (k as u64 * k as u64).max(1)).max(1)
}

/// P(A_{k,H}): some allowed path of length L_k - 1 started in
/// [0, L_k - 1]^d x {0} meets fewer than k^2 threats.
pub fn estimate_akh<S: EnvSource>(
    k: u32,
    h: u64,
    source: &S,
    n: u64,
    seed: Seed,
) -> Result<ProbabilityEstimate> {
    let dim = source.dim();
    let l = scale(k);
    let start_box = BoxSpec::cube(dim, 0, l as i64 - 1, 0, 0)?;
    let problem = ThreatProblem {
        len: l - 1,
        h,
        range: source.range(),
        start: start_box.points().collect(),
    };
    let window = problem.reachable_window(dim)?;
    let trap_window = problem.trap_window(&window)?;
    let threshold = (k as u64) * (k as u64);
    let hits = (0..n)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let env = source.realize(seed.child(i));
            let grid = env.eta_grid(&trap_window)?;
            Ok(min_threats_on_grid(&problem, &grid, &window, DpMode::Serial)? < threshold)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count() as u64;
    Ok(ProbabilityEstimate::new(k, l, hits, n))
}

/// P(some z in [0, L-1]^d x {0} is not L-threatened).
pub fn unthreatened_box_frequency<S: EnvSource>(
    l: u64,
    source: &S,
    n: u64,
    seed: Seed,
) -> Result<ProbabilityEstimate> {
    let dim = source.dim();
    let region = BoxSpec::cube(dim, 0, l as i64 - 1, 0, 0)?;
    let problem = ThreatProblem {
        len: 0,
        h: l,
        range: 1,
        start: vec![LatticePoint::ORIGIN],
    };
    let trap_window = problem.trap_window(&region)?;
    let hits = (0..n)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let env = source.realize(seed.child(i));
            let grid = env.eta_grid(&trap_window)?;
            Ok(threat_layer(&grid, &region, 0, l)?.iter().any(|&b| !b))
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count() as u64;
    Ok(ProbabilityEstimate::new(0, l, hits, n))
}

/// Decoupling constant of the cascade fitted at scale k: L_k^alpha times the
/// covariance of the indicators of F(0, L_k) and F(3 L_k, L_{k+1}).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeConstant {
    pub k: u32,
    pub cov: f64,
    pub se: f64,
    pub c_hat: f64,
    /// From the upper 95% bound on the covariance.
    pub c_upper: f64,
}

pub fn fit_cascade_constant<S: EnvSource>(
    source: &S,
    k: u32,
    alpha: f64,
    n: u64,
    seed: Seed,
) -> Result<CascadeConstant> {
    let l = scale(k) as i64;
    let dim = source.dim();
    let segment = |t_lo: i64, t_hi: i64| -> Result<BoxFunctional> {
        Ok(BoxFunctional::new(
            BoxSpec::cube(dim, 0, 0, t_lo, t_hi)?,
            Reducer::AllZero,
            Field::Eta,
        ))
    };
    let r = decoupling_test(
        source,
        &segment(0, l - 1)?,
        &segment(3 * l, 4 * l - 1)?,
        n,
        0,
        seed,
    )?;
    let w = (l as f64).powf(alpha);
    Ok(CascadeConstant {
        k,
        cov: r.cov,
        se: r.se,
        c_hat: w * r.cov.max(0.0),
        c_upper: w * (r.cov + Z95 * r.se).max(0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeCheck {
    pub alpha: f64,
    pub constant: CascadeConstant,
    /// (k, lhs = ci_lo(q_{k+1}), rhs = ci_hi(q_k)^2 + c_upper L_k^-alpha, holds)
    /// for the scales above the fitted one.
    pub checks: Vec<(u32, f64, f64, bool)>,
    pub slope: crate::stats::SlopeFit,
    /// Points used in the slope fit; zero estimates replaced by the upper
    /// confidence bound.
    pub slope_points: Vec<(f64, f64)>,
}

/// Test q_{k+1} <= q_k^2 + c L_k^-alpha at the scales above the one where c
/// was fitted, and fit the log-log slope of q_k against L_k.
pub fn check_cascade(
    q: &[ProbabilityEstimate],
    alpha: f64,
    constant: &CascadeConstant,
) -> Result<CascadeCheck> {
    if q.len() < 3 {
        return Err(Error::usage("cascade check needs at least 3 scales"));
    }
    let checks = q
        .windows(2)
        .filter(|w| w[0].k > constant.k)
        .map(|w| {
            let lhs = w[1].ci_lo;
            let rhs = w[0].ci_hi.powi(2) + constant.c_upper * (w[0].scale as f64).powf(-alpha);
            (w[0].k, lhs, rhs, lhs <= rhs)
        })
        .collect();
    let slope_points: Vec<(f64, f64)> = q
        .iter()
        .map(|e| {
            (
                e.scale as f64,
                if e.successes == 0 {
                    e.ci_hi
                } else {
                    e.estimate
                },
            )
        })
        .collect();
    let slope = crate::stats::loglog_slope(&slope_points)?;
    Ok(CascadeCheck {
        alpha,
        constant: constant.clone(),
        checks,
        slope,
        slope_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FnEnv;

    fn p(x: i64, t: i64) -> LatticePoint {
        LatticePoint::new1(x, t)
    }

    fn traps(pts: &[(i64, i64)]) -> ExplicitTraps {
        ExplicitTraps::new(Dim::ONE, pts.iter().map(|&(x, t)| p(x, t)))
    }

    #[test]
    fn threatened_examples() {
        for h in 1..6 {
            assert!(is_threatened(&p(0, 0), h, &traps(&[(0, h as i64)])).unwrap());
            assert!(!is_threatened(&p(0, 0), h, &traps(&[(h as i64 + 1, 1)])).unwrap());
        }
    }

    #[test]
    fn count_threats_examples() {
        let vertical = AllowedPath {
            start_time: 0,
            sites: (0..=4).map(|t| p(0, t)).collect(),
            lipschitz: 1,
        };
        assert_eq!(count_threats(&vertical, 2, &traps(&[])).unwrap(), 0);
        assert_eq!(count_threats(&vertical, 2, &traps(&[(0, 2)])).unwrap(), 2);
        for h in [1, 2, 4] {
            let c = count_threats(&vertical, h, &traps(&[(0, 2), (0, 3)])).unwrap();
            assert!(c <= 4 / h + 1);
        }
    }

    #[test]
    fn min_threats_example() {
        let pr = ThreatProblem::m_j(2, 2, 1);
        let t = traps(&[(0, 2)]);
        assert_eq!(min_threats(&pr, &t, None, DpMode::Serial).unwrap(), 1);
        assert_eq!(min_threats_brute(&pr, &t).unwrap(), 1);
        assert_eq!(
            min_threats(&pr, &traps(&[]), None, DpMode::Serial).unwrap(),
            0
        );
    }

    #[test]
    fn small_window_is_rejected() {
        let pr = ThreatProblem::m_j(2, 2, 1);
        let w = BoxSpec::cube(Dim::ONE, -2, 2, 0, 4).unwrap();
        assert!(matches!(
            min_threats(&pr, &traps(&[]), Some(&w), DpMode::Serial),
            Err(Error::Usage(_))
        ));
        let w = BoxSpec::cube(Dim::ONE, -6, 6, 0, 4).unwrap();
        assert_eq!(
            min_threats(&pr, &traps(&[(1, 1)]), Some(&w), DpMode::Serial).unwrap(),
            1
        );
    }

    #[test]
    fn threat_layer_matches_definition() {
        let mut st = Seed(3).stream();
        for _ in 0..300 {
            let h = 1 + st.below(5);
            let t = ExplicitTraps::new(
                Dim::ONE,
                (0..st.below(8)).map(|_| p(st.below(13) as i64 - 6, st.below(8) as i64 - 1)),
            );
            let region = BoxSpec::cube(Dim::ONE, -5, 5, 0, 0).unwrap();
            let tw = BoxSpec::cube(Dim::ONE, -5 - h as i64, 5 + h as i64, 0, h as i64).unwrap();
            let g = t.grid(&tw).unwrap();
            let layer = threat_layer(&g, &region, 0, h).unwrap();
            for (i, z) in region.points().enumerate() {
                assert_eq!(layer[i], is_threatened(&z, h, &t).unwrap());
            }
        }
    }

    #[test]
    fn dp_matches_brute_force_in_two_dimensions() {
        let d = Dim::new(2).unwrap();
        let mut st = Seed(8).stream();
        for _ in 0..40 {
            let h = 1 + st.below(2);
            let j = 1 + st.below(2);
            let t = ExplicitTraps::new(
                d,
                (0..st.below(6)).map(|_| {
                    d.point(
                        &[st.below(5) as i64 - 2, st.below(5) as i64 - 2],
                        st.below(4) as i64,
                    )
                    .unwrap()
                }),
            );
            let pr = ThreatProblem::m_j(j, h, 1);
            assert_eq!(
                min_threats(&pr, &t, None, DpMode::Serial).unwrap(),
                min_threats_brute(&pr, &t).unwrap()
            );
        }
    }

    #[test]
    fn layer_parallel_is_identical() {
        let mut st = Seed(4).stream();
        for _ in 0..50 {
            let t = ExplicitTraps::new(
                Dim::ONE,
                (0..10).map(|_| p(st.below(21) as i64 - 10, st.below(14) as i64)),
            );
            let pr = ThreatProblem::m_j(3, 3, 2);
            assert_eq!(
                min_threats(&pr, &t, None, DpMode::Serial).unwrap(),
                min_threats(&pr, &t, None, DpMode::LayerParallel).unwrap()
            );
        }
    }

    #[test]
    fn eta_everywhere_gives_certain_hit() {
        let env = FnEnv::with_eta(Dim::ONE, |_| 0, |_| true);
        let k = JumpKernel::drift(Dim::ONE, 1, 0.1).unwrap();
        let r = verify_fall_on_trap(&env, &k, 4, 4, 200, Seed(1)).unwrap();
        assert_eq!(r.empirical, 0.0);
        assert!(r.pass);
        let empty = FnEnv::with_eta(Dim::ONE, |_| 1, |_| false);
        let r = verify_fall_on_trap(&empty, &k, 4, 4, 200, Seed(1)).unwrap();
        assert_eq!((r.m_j, r.bound, r.empirical), (0, 1.0, 1.0));
        assert!(r.pass);
    }

    #[test]
    fn pinned_environment_qk_and_akh() {
        use crate::env::{EnvConfig, InterarrivalLaw, RenewalConfig};
        let m = EnvConfig::Renewal(RenewalConfig {
            trunc_s: 2,
            ..RenewalConfig::default_1d(InterarrivalLaw::dirac(0))
        })
        .model()
        .unwrap();
        let q = estimate_qk_cascade(&m, 0, 2, 50, Seed(1)).unwrap();
        assert!(q.iter().all(|e| e.estimate == 0.0));
        // k = 2: L = 16, H = 4, threats at every counted time: 4 >= k^2 = 4.
        let a = estimate_akh(2, default_h(2), &m, 5, Seed(2)).unwrap();
        assert_eq!(a.estimate, 0.0);
    }

    #[test]
    fn empty_eta_gives_akh_one() {
        use crate::env::CoinSource;
        let src = CoinSource {
            dim: Dim::ONE,
            range: 1,
            p: 0.0,
        };
        let a = estimate_akh(2, default_h(2), &src, 5, Seed(2)).unwrap();
        assert_eq!(a.estimate, 1.0);
    }
}
