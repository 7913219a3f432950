//! Boolean percolation environment.
//!
//! A Poisson process of space-time balls with random radii. omega_z = 1 when
//! z is covered; eta^s_z = 1 when no ball centred within s/2 of z (or covering
//! z) meets both the future and the past cone of z.
//!
//! Balls are generated lazily per cell. Radii are split into dyadic classes,
//! class j holding radii in (2^(j-1), 2^j] on cells of side 2^j, so that a
//! query only visits a bounded number of cells per class. Each cell of class j
//! draws a Poisson count with mean lambda * side^(d+1) * P(radius in class j);
//! summed over classes this is the same process as one Poisson(lambda) count
//! per unit cell.

use std::ops::ControlFlow;
use std::sync::Arc;

use rand_distr::{Distribution, Poisson};

use crate::env::{EnvSource, Environment, Grid};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Dim, LatticePoint, MAX_DIM};
use crate::rng::Seed;

const TAG_BALLS: u64 = 0xB011;
const DEFAULT_TAIL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadiusLaw {
    /// Survival min(1, (r / rho0)^-beta).
    Pareto {
        rho0: f64,
        beta: f64,
    },
    Deterministic {
        rho: f64,
    },
}

impl RadiusLaw {
    /// P(radius > r).
    pub fn survival(&self, r: f64) -> f64 {
        match *self {
            RadiusLaw::Pareto { rho0, beta } => {
                if r <= rho0 {
                    1.0
                } else {
                    (r / rho0).powf(-beta)
                }
            }
            RadiusLaw::Deterministic { rho } => {
                if r < rho {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius with survival u, for u in (0, 1].
    fn inverse_survival(&self, u: f64) -> f64 {
        match *self {
            RadiusLaw::Pareto { rho0, beta } => rho0 * u.powf(-1.0 / beta),
            RadiusLaw::Deterministic { rho } => rho,
        }
    }

    pub fn tail_exponent(&self) -> f64 {
        match *self {
            RadiusLaw::Pareto { beta, .. } => beta,
            RadiusLaw::Deterministic { .. } => f64::INFINITY,
        }
    }

    /// Smallest radius with survival at most `tol`.
    pub fn quantile_cap(&self, tol: f64) -> f64 {
        match *self {
            RadiusLaw::Pareto { rho0, beta } => rho0 * tol.powf(-1.0 / beta),
            RadiusLaw::Deterministic { rho } => rho,
        }
    }

    fn min_radius(&self) -> f64 {
        match *self {
            RadiusLaw::Pareto { rho0, .. } => rho0,
            RadiusLaw::Deterministic { rho } => rho,
        }
    }
}

/// Whether "meets a cone" means containing a lattice point of the discrete
/// cone or intersecting its real convex hull.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeMode {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BooleanConfig {
    pub dim: Dim,
    pub range: u32,
    pub lambda: f64,
    pub radius_law: RadiusLaw,
    pub trunc_s: u64,
    /// Radii above this are never sampled. None: survival 1e-9.
    pub rho_max: Option<f64>,
    pub cone_mode: ConeMode,
}

impl BooleanConfig {
    /// d = 1, R = 1, lambda = 0.3, Pareto(rho0 = 0.5, beta = 4).
    pub fn default_1d() -> Self {
        BooleanConfig {
            dim: Dim::ONE,
            range: 1,
            lambda: 0.3,
            radius_law: RadiusLaw::Pareto {
                rho0: 0.5,
                beta: 4.0,
            },
            trunc_s: 16,
            rho_max: None,
            cone_mode: ConeMode::Discrete,
        }
    }

    pub fn effective_rho_max(&self) -> f64 {
        self.rho_max
            .unwrap_or_else(|| self.radius_law.quantile_cap(DEFAULT_TAIL_TOL))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallRecord {
    pub x: [f64; MAX_DIM],
    pub t: f64,
    pub radius: f64,
}

impl BallRecord {
    /// Squared Euclidean distance from the centre to a lattice point.
    #[inline]
    pub fn dist2(&self, dim: Dim, z: &LatticePoint) -> f64 {
        let mut s = (self.t - z.t as f64).powi(2);
        for i in 0..dim.get() {
            s += (self.x[i] - z.x[i] as f64).powi(2);
        }
        s
    }

    #[inline]
    fn linf(&self, dim: Dim, z: &LatticePoint) -> f64 {
        let mut m = (self.t - z.t as f64).abs();
        for i in 0..dim.get() {
            m = m.max((self.x[i] - z.x[i] as f64).abs());
        }
        m
    }

    pub fn contains(&self, dim: Dim, z: &LatticePoint) -> bool {
        self.dist2(dim, z) < self.radius * self.radius
    }
}

/// Half-open real box [lo, hi) in space-time; the last entry is time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealWindow {
    pub lo: [f64; MAX_DIM + 1],
    pub hi: [f64; MAX_DIM + 1],
}

impl RealWindow {
    /// Union of the unit cells [z, z + 1) over lattice points z of the box.
    pub fn envelope(b: &BoxSpec) -> Self {
        let mut lo = [0.0; MAX_DIM + 1];
        let mut hi = [1.0; MAX_DIM + 1];
        for i in 0..b.dim.get() {
            lo[i] = b.lo.x[i] as f64;
            hi[i] = b.hi.x[i] as f64 + 1.0;
        }
        lo[MAX_DIM] = b.lo.t as f64;
        hi[MAX_DIM] = b.hi.t as f64 + 1.0;
        RealWindow { lo, hi }
    }

    pub fn is_empty(&self, dim: Dim) -> bool {
        (0..dim.get())
            .chain([MAX_DIM])
            .any(|i| self.lo[i] >= self.hi[i])
    }

    fn contains(&self, dim: Dim, b: &BallRecord) -> bool {
        (0..dim.get()).all(|i| b.x[i] >= self.lo[i] && b.x[i] < self.hi[i])
            && b.t >= self.lo[MAX_DIM]
            && b.t < self.hi[MAX_DIM]
    }
}

#[derive(Clone, Debug)]
struct RadiusClass {
    side: i64,
    /// Largest radius in the class.
    hi: f64,
    /// Survival at the class ends: radii r with s_hi <= S(r) < s_lo.
    s_lo: f64,
    s_hi: f64,
    poisson: Option<Poisson<f64>>,
}

/// Validated Boolean model with its radius classes.
#[derive(Clone, Debug)]
pub struct BooleanModel {
    config: BooleanConfig,
    rho_max: f64,
    classes: Vec<RadiusClass>,
}

impl BooleanModel {
    pub fn new(config: BooleanConfig) -> Result<Self> {
        let d = config.dim.get() as f64;
        if !(config.lambda > 0.0 && config.lambda.is_finite()) {
            return Err(Error::config(
                "boolean.lambda",
                "must be positive and finite",
            ));
        }
        if config.range == 0 {
            return Err(Error::config("kernel.R", "must be at least 1"));
        }
        if config.trunc_s == 0 {
            return Err(Error::config("boolean.trunc_s", "must be at least 1"));
        }
        match config.radius_law {
            RadiusLaw::Pareto { rho0, beta } => {
                if !(rho0 > 0.0 && rho0.is_finite()) {
                    return Err(Error::config("boolean.rho0", "must be positive"));
                }
                if !(beta > d + 1.0) {
                    return Err(Error::config(
                        "boolean.beta",
                        format!("must exceed d + 1 = {}", d + 1.0),
                    ));
                }
            }
            RadiusLaw::Deterministic { rho } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(Error::config("boolean.rho0", "must be positive"));
                }
            }
        }
        let rho_max = config.effective_rho_max();
        if !(rho_max >= config.radius_law.min_radius() && rho_max.is_finite()) {
            return Err(Error::config(
                "boolean.rho_max",
                "must be finite and at least the smallest radius",
            ));
        }
        if rho_max > 1e6 {
            return Err(Error::config("boolean.rho_max", "exceeds 1e6"));
        }
        let law = config.radius_law;
        let cap_survival = law.survival(rho_max);
        let mut classes = Vec::new();
        let mut j = 0u32;
        loop {
            let side = 1i64 << j;
            let lo = if j == 0 { 0.0 } else { (side / 2) as f64 };
            let hi = (side as f64).min(rho_max);
            // Radii r in (lo, hi]; for the deterministic law the atom sits in
            // the class whose interval contains it.
            let (s_lo, s_hi) = match law {
                RadiusLaw::Deterministic { rho } => {
                    if rho > lo && rho <= hi {
                        (1.0, 0.0)
                    } else {
                        (0.0, 0.0)
                    }
                }
                RadiusLaw::Pareto { .. } => (law.survival(lo), law.survival(hi).max(cap_survival)),
            };
            let mass = (s_lo - s_hi).max(0.0);
            if mass > 0.0 {
                let mean = config.lambda * (side as f64).powi(config.dim.get() as i32 + 1) * mass;
                let poisson = Some(
                    Poisson::new(mean)
                        .map_err(|e| Error::usage(format!("poisson mean {mean}: {e}")))?,
                );
                classes.push(RadiusClass {
                    side,
                    hi,
                    s_lo,
                    s_hi,
                    poisson,
                });
            }
            if side as f64 >= rho_max {
                break;
            }
            j += 1;
        }
        Ok(BooleanModel {
            config,
            rho_max,
            classes,
        })
    }

    pub fn config(&self) -> &BooleanConfig {
        &self.config
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Radius-law mass discarded by the cap.
    pub fn radius_tail_mass(&self) -> f64 {
        self.config.radius_law.survival(self.rho_max)
    }

    /// Upper bound on P(eta^s_z != eta_z) from balls centred at distance at
    /// least s/2: lambda times the volume integral of P(radius > |c|_inf / (1 + R)).
    pub fn truncation_budget(&self, s: u64) -> f64 {
        let d = self.config.dim.get() as i32;
        let rr = 1.0 + self.config.range as f64;
        let a0 = s as f64 / (2.0 * ((d + 1) as f64).sqrt());
        let bound = match self.config.radius_law {
            RadiusLaw::Pareto { rho0, beta } => {
                let b = a0.max(rr * rho0);
                let shell = (2.0 * b).powi(d + 1) - (2.0 * a0).powi(d + 1);
                let tail = 2f64.powi(d + 1)
                    * (d + 1) as f64
                    * (rr * rho0).powf(beta)
                    * b.powf(d as f64 + 1.0 - beta)
                    / (beta - d as f64 - 1.0);
                self.config.lambda * (shell + tail)
            }
            RadiusLaw::Deterministic { rho } => {
                let b = rr * rho;
                if a0 >= b {
                    0.0
                } else {
                    self.config.lambda * ((2.0 * b).powi(d + 1) - (2.0 * a0).powi(d + 1))
                }
            }
        };
        bound.min(1.0)
    }

    /// Draw the balls of one cell, calling `f` on each until it breaks.
    #[inline]
    fn for_each_in_cell<B>(
        &self,
        seed: Seed,
        class: usize,
        cell: [i64; MAX_DIM + 1],
        key_shift: &[i64; MAX_DIM + 1],
        f: &mut impl FnMut(&BallRecord) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let c = &self.classes[class];
        let Some(poisson) = &c.poisson else {
            return ControlFlow::Continue(());
        };
        let d = self.config.dim.get();
        let mut key = [TAG_BALLS, class as u64, 0, 0, 0, 0];
        for i in 0..=MAX_DIM {
            key[2 + i] = (cell[i] + key_shift[i] / c.side) as u64;
        }
        let mut st = seed.stream_at(&key);
        let n = poisson.sample(&mut st) as u64;
        let side = c.side as f64;
        for _ in 0..n {
            let mut b = BallRecord {
                x: [0.0; MAX_DIM],
                t: 0.0,
                radius: 0.0,
            };
            for i in 0..d {
                b.x[i] = (cell[i] as f64 + st.next_f64()) * side;
            }
            b.t = (cell[MAX_DIM] as f64 + st.next_f64()) * side;
            let u = st.next_f64();
            let surv = c.s_hi + (1.0 - u) * (c.s_lo - c.s_hi);
            b.radius = self.config.radius_law.inverse_survival(surv).min(c.hi);
            f(&b)?;
        }
        ControlFlow::Continue(())
    }

    /// Visit every ball of `class` whose cell meets [lo, hi] (per axis, time last).
    fn for_each_in_range<B>(
        &self,
        seed: Seed,
        class: usize,
        lo: [f64; MAX_DIM + 1],
        hi: [f64; MAX_DIM + 1],
        key_shift: &[i64; MAX_DIM + 1],
        f: &mut impl FnMut(&BallRecord) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let d = self.config.dim.get();
        let side = self.classes[class].side as f64;
        let axes: Vec<usize> = (0..d).chain([MAX_DIM]).collect();
        let mut clo = [0i64; MAX_DIM + 1];
        let mut chi = [0i64; MAX_DIM + 1];
        for &a in &axes {
            clo[a] = (lo[a] / side).floor() as i64;
            chi[a] = (hi[a] / side).floor() as i64;
        }
        let mut cell = clo;
        loop {
            self.for_each_in_cell(seed, class, cell, key_shift, f)?;
            let mut k = axes.len();
            loop {
                if k == 0 {
                    return ControlFlow::Continue(());
                }
                k -= 1;
                let a = axes[k];
                if cell[a] < chi[a] {
                    cell[a] += 1;
                    break;
                }
                cell[a] = clo[a];
            }
        }
    }

    fn scan_radius(&self, class: usize, s: u64) -> f64 {
        let hi = self.classes[class].hi;
        let rr = 1.0 + self.config.range as f64;
        (rr * hi).min((s as f64 / 2.0).max(hi))
    }
}

/// True iff the open ball contains a point of the future cone and a point of
/// the past cone of z.
pub fn ball_crosses_both_cones(
    dim: Dim,
    ball: &BallRecord,
    z: &LatticePoint,
    range: u32,
    mode: ConeMode,
) -> bool {
    match mode {
        ConeMode::Discrete => {
            hits_discrete_cone(dim, ball, z, range, true)
                && hits_discrete_cone(dim, ball, z, range, false)
        }
        ConeMode::Continuous => {
            hits_continuous_cone(dim, ball, z, range, true)
                && hits_continuous_cone(dim, ball, z, range, false)
        }
    }
}

/// Per integer time slice the cone is an L-infinity ball of lattice points;
/// the nearest of them to the slice centre is found coordinate-wise by
/// clamping the rounded centre, which is exact for the Euclidean distance.
fn hits_discrete_cone(
    dim: Dim,
    ball: &BallRecord,
    z: &LatticePoint,
    range: u32,
    future: bool,
) -> bool {
    let r2 = ball.radius * ball.radius;
    let ct = ball.t - z.t as f64;
    let (mut lo, mut hi) = (
        (ct - ball.radius).floor() as i64,
        (ct + ball.radius).ceil() as i64,
    );
    if future {
        lo = lo.max(0);
    } else {
        hi = hi.min(0);
    }
    for tau in lo..=hi {
        let rem = r2 - (tau as f64 - ct).powi(2);
        if rem <= 0.0 {
            continue;
        }
        let half = range as i64 * tau.abs();
        let mut dist2 = 0.0;
        for i in 0..dim.get() {
            let c = ball.x[i] - z.x[i] as f64;
            let y = (c.round() as i64).clamp(-half, half) as f64;
            dist2 += (y - c).powi(2);
        }
        if dist2 < rem {
            return true;
        }
    }
    false
}

/// Squared distance from the ball centre to the real cone, minimised over the
/// cone time by golden-section search (the objective is convex).
fn hits_continuous_cone(
    dim: Dim,
    ball: &BallRecord,
    z: &LatticePoint,
    range: u32,
    future: bool,
) -> bool {
    let sign = if future { 1.0 } else { -1.0 };
    let ct = sign * (ball.t - z.t as f64);
    let rr = range as f64;
    let xs: Vec<f64> = (0..dim.get())
        .map(|i| (ball.x[i] - z.x[i] as f64).abs())
        .collect();
    let obj = |tau: f64| -> f64 {
        let mut s = (tau - ct).powi(2);
        for &c in &xs {
            s += (c - rr * tau).max(0.0).powi(2);
        }
        s
    };
    let mut a = 0.0;
    let mut b = ct.max(0.0) + xs.iter().fold(0.0f64, |m, &c| m.max(c)) / rr + 1.0;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (obj(c), obj(e));
    for _ in 0..120 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = obj(e);
        }
    }
    let best = obj(0.0).min(fc).min(fe).min(obj(a)).min(obj(b));
    best < ball.radius * ball.radius
}

/// One Boolean realization. Stateless apart from its seed, so it is cheap to
/// create and safe to share.
#[derive(Clone, Debug)]
pub struct BooleanRealization {
    model: Arc<BooleanModel>,
    seed: Seed,
    key_shift: [i64; MAX_DIM + 1],
}

impl BooleanRealization {
    pub fn new(model: Arc<BooleanModel>, seed: Seed) -> Self {
        BooleanRealization {
            model,
            seed,
            key_shift: [0; MAX_DIM + 1],
        }
    }

    /// Re-key cells so that this realization is the unshifted one translated
    /// by `-shift`. Every shift coordinate must be a multiple of the largest
    /// cell side.
    pub fn with_shift(mut self, shift: &LatticePoint) -> Result<Self> {
        let max_side = self.model.classes.iter().map(|c| c.side).max().unwrap_or(1);
        let mut ks = [0i64; MAX_DIM + 1];
        for i in 0..self.model.config.dim.get() {
            ks[i] = shift.x[i];
        }
        ks[MAX_DIM] = shift.t;
        if ks.iter().any(|v| v % max_side != 0) {
            return Err(Error::usage(format!(
                "shift must be a multiple of {max_side}"
            )));
        }
        self.key_shift = ks;
        Ok(self)
    }

    pub fn model(&self) -> &BooleanModel {
        &self.model
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    /// Every ball whose centre lies in the window.
    pub fn sample_balls(&self, window: &RealWindow) -> Vec<BallRecord> {
        let dim = self.model.config.dim;
        let mut out = Vec::new();
        if window.is_empty(dim) {
            return out;
        }
        let mut hi = window.hi;
        for v in hi.iter_mut() {
            // Cells are half-open; stay strictly inside the upper face.
            *v = next_down(*v);
        }
        for class in 0..self.model.classes.len() {
            let _ = self.model.for_each_in_range::<()>(
                self.seed,
                class,
                window.lo,
                hi,
                &self.key_shift,
                &mut |b| {
                    if window.contains(dim, b) {
                        out.push(*b);
                    }
                    ControlFlow::Continue(())
                },
            );
        }
        out
    }

    fn around(&self, z: &LatticePoint, r: f64) -> ([f64; MAX_DIM + 1], [f64; MAX_DIM + 1]) {
        let mut lo = [0.0; MAX_DIM + 1];
        let mut hi = [0.0; MAX_DIM + 1];
        for i in 0..self.model.config.dim.get() {
            lo[i] = z.x[i] as f64 - r;
            hi[i] = z.x[i] as f64 + r;
        }
        lo[MAX_DIM] = z.t as f64 - r;
        hi[MAX_DIM] = z.t as f64 + r;
        (lo, hi)
    }

    /// Whether this ball makes eta^s_z = 0.
    #[inline]
    fn blocks_eta(&self, b: &BallRecord, z: &LatticePoint, s: u64) -> bool {
        let cfg = &self.model.config;
        if b.linf(cfg.dim, z) >= (1.0 + cfg.range as f64) * b.radius {
            return false;
        }
        let reach = (s as f64 / 2.0).max(b.radius);
        b.dist2(cfg.dim, z) < reach * reach
            && ball_crosses_both_cones(cfg.dim, b, z, cfg.range, cfg.cone_mode)
    }

    fn window_slack(&self, class: usize, s: u64) -> f64 {
        self.model.scan_radius(class, s)
    }

    fn eta_grid_s(&self, window: &BoxSpec, s: u64) -> Result<Grid<bool>> {
        let cfg = &self.model.config;
        cfg.dim.ensure(window.dim)?;
        let mut grid = Grid::filled(*window, true)?;
        let env = RealWindow::envelope(window);
        for class in 0..self.model.classes.len() {
            let slack = self.window_slack(class, s);
            let mut lo = env.lo;
            let mut hi = env.hi;
            for i in (0..cfg.dim.get()).chain([MAX_DIM]) {
                lo[i] -= slack;
                hi[i] += slack - 1.0;
            }
            let _ = self.model.for_each_in_range::<()>(
                self.seed,
                class,
                lo,
                hi,
                &self.key_shift,
                &mut |b| {
                    let lim = slack.min((1.0 + cfg.range as f64) * b.radius);
                    for_lattice_near(cfg.dim, b, lim, window, |z| {
                        if let Some(v) = grid.get_mut(&z) {
                            if *v && self.blocks_eta(b, &z, s) {
                                *v = false;
                            }
                        }
                    });
                    ControlFlow::Continue(())
                },
            );
        }
        Ok(grid)
    }
}

fn next_down(v: f64) -> f64 {
    if v == 0.0 {
        -f64::MIN_POSITIVE
    } else if v > 0.0 {
        f64::from_bits(v.to_bits() - 1)
    } else {
        f64::from_bits(v.to_bits() + 1)
    }
}

/// Lattice points of `window` within open L-infinity distance `lim` of the centre.
fn for_lattice_near(
    dim: Dim,
    b: &BallRecord,
    lim: f64,
    window: &BoxSpec,
    mut f: impl FnMut(LatticePoint),
) {
    let d = dim.get();
    let range = |c: f64, lo: i64, hi: i64| -> (i64, i64) {
        let a = ((c - lim).floor() as i64 + 1).max(lo);
        let e = ((c + lim).ceil() as i64 - 1).min(hi);
        (a, e)
    };
    let (t0, t1) = range(b.t, window.lo.t, window.hi.t);
    let mut xr = [(0i64, 0i64); MAX_DIM];
    for i in 0..d {
        xr[i] = range(b.x[i], window.lo.x[i], window.hi.x[i]);
        if xr[i].0 > xr[i].1 {
            return;
        }
    }
    for t in t0..=t1 {
        let mut z = LatticePoint { x: [0; MAX_DIM], t };
        for i in 0..d {
            z.x[i] = xr[i].0;
        }
        'outer: loop {
            f(z);
            let mut k = d;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                if z.x[k] < xr[k].1 {
                    z.x[k] += 1;
                    break;
                }
                z.x[k] = xr[k].0;
            }
        }
    }
}

impl Environment for BooleanRealization {
    fn dim(&self) -> Dim {
        self.model.config.dim
    }

    fn omega(&self, z: &LatticePoint) -> Result<u64> {
        let dim = self.model.config.dim;
        dim.check(z)?;
        for class in 0..self.model.classes.len() {
            let (lo, hi) = self.around(z, self.model.classes[class].hi);
            let hit =
                self.model
                    .for_each_in_range(self.seed, class, lo, hi, &self.key_shift, &mut |b| {
                        if b.contains(dim, z) {
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    });
            if hit.is_break() {
                return Ok(1);
            }
        }
        Ok(0)
    }

    fn eta_s(&self, z: &LatticePoint, s: u64) -> Result<bool> {
        self.model.config.dim.check(z)?;
        if s == 0 {
            return Err(Error::usage("truncation s must be at least 1"));
        }
        for class in 0..self.model.classes.len() {
            let (lo, hi) = self.around(z, self.model.scan_radius(class, s));
            let hit =
                self.model
                    .for_each_in_range(self.seed, class, lo, hi, &self.key_shift, &mut |b| {
                        if self.blocks_eta(b, z, s) {
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    });
            if hit.is_break() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn eta(&self, z: &LatticePoint) -> Result<bool> {
        self.eta_s(z, self.model.config.trunc_s)
    }

    fn eta_grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        self.eta_grid_s(window, self.model.config.trunc_s)
    }

    fn omega_grid(&self, window: &BoxSpec) -> Result<Grid<u64>> {
        let dim = self.model.config.dim;
        dim.ensure(window.dim)?;
        let mut grid = Grid::filled(*window, 0u64)?;
        let env = RealWindow::envelope(window);
        for class in 0..self.model.classes.len() {
            let slack = self.model.classes[class].hi;
            let mut lo = env.lo;
            let mut hi = env.hi;
            for i in (0..dim.get()).chain([MAX_DIM]) {
                lo[i] -= slack;
                hi[i] += slack - 1.0;
            }
            let _ = self.model.for_each_in_range::<()>(
                self.seed,
                class,
                lo,
                hi,
                &self.key_shift,
                &mut |b| {
                    for_lattice_near(dim, b, b.radius, window, |z| {
                        if b.contains(dim, &z) {
                            if let Some(v) = grid.get_mut(&z) {
                                *v = 1;
                            }
                        }
                    });
                    ControlFlow::Continue(())
                },
            );
        }
        Ok(grid)
    }
}

impl EnvSource for Arc<BooleanModel> {
    type Env = BooleanRealization;
    fn dim(&self) -> Dim {
        self.config.dim
    }
    fn range(&self) -> u32 {
        self.config.range
    }
    fn realize(&self, seed: Seed) -> BooleanRealization {
        BooleanRealization::new(self.clone(), seed)
    }
}
