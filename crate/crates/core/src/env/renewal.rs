//! Independent renewal chains, one per spatial site.
//!
//! Each column x carries a stationary discrete renewal chain: from a positive
//! value it counts down by one per step; from 0 it jumps to a fresh draw W of
//! the interarrival law mu. W is built from driving noise (W_hat, Z, Y) with
//! W_hat ~ mu_hat, Z ~ Bernoulli(gamma) and Y ~ (mu - gamma mu_hat)/(1 - gamma),
//! W = Z W_hat + (1 - Z) Y. Stationary values are obtained by starting the
//! chain at 0 further and further in the past until the value settles.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::env::{EnvSource, Environment, Grid};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Dim, LatticePoint, MAX_DIM};
use crate::rng::{mix64, unit_f64, Seed};

const PMF_TOL: f64 = 1e-12;
const TAIL_TOL: f64 = 1e-12;
const TAG_NOISE: u64 = 0x4E01_5E;
/// Epoch length for memoised chain segments.
const EPOCH: i64 = 64;
const CACHE_LIMIT: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
enum LawKind {
    Table(Vec<f64>),
    Geometric { q: f64 },
}

/// Interarrival law on the non-negative integers.
#[derive(Clone, Debug, PartialEq)]
pub struct InterarrivalLaw {
    kind: LawKind,
    moment_order: f64,
}

const DEFAULT_MOMENT_ORDER: f64 = 5.0;

impl InterarrivalLaw {
    pub fn table(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::config(
                "renewal.mu",
                "pmf entries must be finite and non-negative",
            ));
        }
        let s: f64 = pmf.iter().sum();
        if (s - 1.0).abs() > PMF_TOL {
            return Err(Error::config(
                "renewal.mu",
                format!("pmf sums to {s}, not 1"),
            ));
        }
        let mut pmf = pmf;
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        Ok(InterarrivalLaw {
            kind: LawKind::Table(pmf),
            moment_order: DEFAULT_MOMENT_ORDER,
        })
    }

    pub fn dirac(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        InterarrivalLaw {
            kind: LawKind::Table(pmf),
            moment_order: DEFAULT_MOMENT_ORDER,
        }
    }

    /// Uniform on {a, ..., b}.
    pub fn uniform(a: usize, b: usize) -> Result<Self> {
        if a > b {
            return Err(Error::config("renewal.mu", "uniform needs a <= b"));
        }
        let n = (b - a + 1) as f64;
        let mut pmf = vec![0.0; b + 1];
        for p in &mut pmf[a..=b] {
            *p = 1.0 / n;
        }
        Self::table(pmf)
    }

    /// mu(k) = (1 - q) q^k.
    pub fn geometric(q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::config(
                "renewal.mu",
                "geometric parameter must lie in [0, 1)",
            ));
        }
        Ok(InterarrivalLaw {
            kind: LawKind::Geometric { q },
            moment_order: DEFAULT_MOMENT_ORDER,
        })
    }

    /// Declare the finite moment order 1 + delta used in error budgets.
    pub fn with_moment_order(mut self, m: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::config("renewal.moment_order", "must exceed 1"));
        }
        self.moment_order = m;
        Ok(self)
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match &self.kind {
            LawKind::Table(p) => p.get(k).copied().unwrap_or(0.0),
            LawKind::Geometric { q } => (1.0 - q) * q.powi(k as i32),
        }
    }

    /// P(xi >= k).
    pub fn survival(&self, k: usize) -> f64 {
        match &self.kind {
            LawKind::Table(p) => p.iter().skip(k).sum(),
            LawKind::Geometric { q } => q.powi(k as i32),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            LawKind::Table(p) => p.iter().enumerate().map(|(k, v)| k as f64 * v).sum(),
            LawKind::Geometric { q } => q / (1.0 - q),
        }
    }

    /// Support points needed so the neglected tail is below 1e-12.
    fn support_len(&self) -> usize {
        match &self.kind {
            LawKind::Table(p) => p.len(),
            LawKind::Geometric { q } => {
                if *q == 0.0 {
                    1
                } else {
                    (TAIL_TOL.ln() / q.ln()).ceil() as usize + 1
                }
            }
        }
    }

    /// pmf truncated to its effective support.
    pub fn pmf_table(&self) -> Vec<f64> {
        (0..self.support_len()).map(|k| self.pmf(k)).collect()
    }

    /// Stationary law of the chain: mu_hat(k) = P(xi >= k) / (E xi + 1).
    /// Parametric laws are truncated where the tail drops below 1e-12.
    pub fn hat_mu(&self) -> Result<Vec<f64>> {
        let m = self.mean();
        if !m.is_finite() {
            return Err(Error::usage("interarrival law has infinite mean"));
        }
        Ok((0..self.support_len())
            .map(|k| self.survival(k) / (m + 1.0))
            .collect())
    }

    /// gamma = inf over the support of mu_hat of mu(k) / mu_hat(k).
    pub fn gamma(&self) -> f64 {
        match &self.kind {
            // mu_hat = mu, so every ratio is exactly 1.
            LawKind::Geometric { .. } => 1.0,
            LawKind::Table(_) => {
                let hat = self.hat_mu().expect("tables have finite mean");
                hat.iter()
                    .enumerate()
                    .filter(|(_, h)| **h > 0.0)
                    .map(|(k, h)| self.pmf(k) / h)
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

impl fmt::Display for InterarrivalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Geometric { q } => write!(f, "geometric:{q}"),
            LawKind::Table(p) => {
                if let Some(k) = p.iter().position(|&v| v == 1.0) {
                    return write!(f, "dirac:{k}");
                }
                let parts: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                write!(f, "pmf:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for InterarrivalLaw {
    type Err = Error;

    /// `geometric:Q`, `dirac:K`, `uniform:A:B` or `pmf:P0,P1,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::config("renewal.mu", format!("`{s}`: {m}"));
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("expected NAME:PARAMS"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("bad number"));
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("bad integer"));
        match name.trim() {
            "geometric" => Self::geometric(num(rest)?),
            "dirac" => Ok(Self::dirac(int(rest)?)),
            "uniform" => {
                let (a, b) = rest
                    .split_once(':')
                    .ok_or_else(|| bad("uniform needs A:B"))?;
                Self::uniform(int(a)?, int(b)?)
            }
            "pmf" => Self::table(rest.split(',').map(num).collect::<Result<Vec<_>>>()?),
            _ => Err(bad("unknown law")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenewalConfig {
    pub dim: Dim,
    pub range: u32,
    pub mu: InterarrivalLaw,
    pub trunc_s: u64,
    /// Initial backward depth.
    pub k0: u64,
    pub k_max: u64,
    /// Doublings over which the value must stay fixed.
    pub confirmations: u32,
    /// Scan horizon for the stopping times T^x.
    pub horizon: u64,
}

impl RenewalConfig {
    pub fn default_1d(mu: InterarrivalLaw) -> Self {
        RenewalConfig {
            dim: Dim::ONE,
            range: 1,
            mu,
            trunc_s: 32,
            k0: 32,
            k_max: 1 << 20,
            confirmations: 2,
            horizon: 1 << 20,
        }
    }
}

/// Cumulative table for inverse-CDF sampling.
#[derive(Clone, Debug)]
struct CumTable {
    cum: Vec<f64>,
}

impl CumTable {
    fn new(pmf: &[f64]) -> Self {
        let total: f64 = pmf.iter().sum();
        let mut acc = 0.0;
        let cum = pmf
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        CumTable { cum }
    }

    #[inline]
    fn sample(&self, u: f64) -> u32 {
        let i = self.cum.partition_point(|&c| c <= u);
        i.min(self.cum.len() - 1) as u32
    }
}

/// Validated renewal model: sampling tables for the driving noise.
#[derive(Clone, Debug)]
pub struct RenewalModel {
    config: RenewalConfig,
    gamma: f64,
    hat: CumTable,
    y: Option<CumTable>,
    y_defect: f64,
}

impl RenewalModel {
    pub fn new(config: RenewalConfig) -> Result<Self> {
        if config.range == 0 {
            return Err(Error::config("kernel.R", "must be at least 1"));
        }
        if config.trunc_s == 0 {
            return Err(Error::config("renewal.trunc_s", "must be at least 1"));
        }
        if config.k0 == 0 {
            return Err(Error::config("renewal.K0", "must be at least 1"));
        }
        if config.k_max < config.k0 {
            return Err(Error::config(
                "renewal.K_max",
                "must be at least renewal.K0",
            ));
        }
        if config.horizon == 0 {
            return Err(Error::config("renewal.horizon", "must be at least 1"));
        }
        if config.confirmations == 0 {
            return Err(Error::config("renewal.confirmations", "must be at least 1"));
        }
        let gamma = config.mu.gamma();
        if !(gamma > 0.0) {
            return Err(Error::config(
                "renewal.mu",
                "gamma_mu = 0: the law has no restart component",
            ));
        }
        let hat_pmf = config.mu.hat_mu()?;
        let hat = CumTable::new(&hat_pmf);
        let (y, y_defect) = if gamma < 1.0 - 1e-12 {
            let mu = config.mu.pmf_table();
            let raw: Vec<f64> = (0..mu.len().max(hat_pmf.len()))
                .map(|k| {
                    let m = mu.get(k).copied().unwrap_or(0.0);
                    let h = hat_pmf.get(k).copied().unwrap_or(0.0);
                    (m - gamma * h) / (1.0 - gamma)
                })
                .collect();
            let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
            let defect = (1.0 - clipped.iter().sum::<f64>()).abs();
            (Some(CumTable::new(&clipped)), defect)
        } else {
            (None, 0.0)
        };
        Ok(RenewalModel {
            config,
            gamma,
            hat,
            y,
            y_defect,
        })
    }

    pub fn config(&self) -> &RenewalConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Mass renormalised away from the Y law after truncation and clipping.
    pub fn y_defect(&self) -> f64 {
        self.y_defect
    }

    /// Coupling-tail bound K^-(1 + delta) at backward depth K.
    pub fn residual_bias(&self, depth: u64) -> f64 {
        (depth as f64).powf(-self.config.mu.moment_order())
    }
}

/// Driving noise at one space-time site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseTriple {
    pub w_hat: u32,
    pub z: bool,
    pub y: u32,
}

impl NoiseTriple {
    pub fn w(&self) -> u32 {
        if self.z {
            self.w_hat
        } else {
            self.y
        }
    }
}

/// Stationary value with its coalescence diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoalescedValue {
    pub value: u64,
    /// Backward depth at which the value was accepted.
    pub depth: u64,
    pub residual_bias: f64,
}

#[derive(Clone, Debug)]
struct Epoch {
    values: Box<[u32]>,
    depth: u64,
}

type ColumnKey = ([i64; MAX_DIM], i64);

/// One renewal realization. Chain segments are memoised per epoch of 64
/// times; the cache is per realization and never changes answers.
#[derive(Debug)]
pub struct RenewalRealization {
    model: Arc<RenewalModel>,
    seed: Seed,
    cache: RefCell<HashMap<ColumnKey, Epoch>>,
}

impl Clone for RenewalRealization {
    fn clone(&self) -> Self {
        RenewalRealization::new(self.model.clone(), self.seed)
    }
}

impl RenewalRealization {
    pub fn new(model: Arc<RenewalModel>, seed: Seed) -> Self {
        RenewalRealization {
            model,
            seed,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &RenewalModel {
        &self.model
    }

    #[inline]
    fn noise_hash(&self, x: &[i64; MAX_DIM], t: i64) -> u64 {
        self.seed
            .hash_words(&[TAG_NOISE, x[0] as u64, x[1] as u64, x[2] as u64, t as u64])
    }

    #[inline]
    fn z_from(&self, h: u64) -> bool {
        unit_f64(mix64(h ^ 1)) < self.model.gamma
    }

    /// The triple (W_hat, Z, Y) at (x, t).
    pub fn noise(&self, x: &[i64; MAX_DIM], t: i64) -> NoiseTriple {
        let h = self.noise_hash(x, t);
        let z = self.z_from(h);
        let w_hat = self.model.hat.sample(unit_f64(mix64(h ^ 2)));
        let y = match &self.model.y {
            Some(tab) => tab.sample(unit_f64(mix64(h ^ 3))),
            None => w_hat,
        };
        NoiseTriple { w_hat, z, y }
    }

    /// Z^x_t alone.
    #[inline]
    pub fn restart(&self, x: &[i64; MAX_DIM], t: i64) -> bool {
        self.model.gamma >= 1.0 || self.z_from(self.noise_hash(x, t))
    }

    /// Composite jump W^x_t.
    #[inline]
    pub fn jump_value(&self, x: &[i64; MAX_DIM], t: i64) -> u32 {
        let h = self.noise_hash(x, t);
        if self.model.gamma >= 1.0 || self.z_from(h) {
            self.model.hat.sample(unit_f64(mix64(h ^ 2)))
        } else {
            match &self.model.y {
                Some(tab) => tab.sample(unit_f64(mix64(h ^ 3))),
                None => self.model.hat.sample(unit_f64(mix64(h ^ 2))),
            }
        }
    }

    /// Advance the chain of column x from value v at time `from` to time `to`,
    /// drawing jumps only at zero times.
    fn advance(&self, x: &[i64; MAX_DIM], from: i64, to: i64, mut v: u64) -> u64 {
        let mut t = from;
        while t < to {
            if v == 0 {
                t += 1;
                v = self.jump_value(x, t) as u64;
            } else {
                let step = (v as i64).min(to - t);
                t += step;
                v -= step as u64;
            }
        }
        v
    }

    /// Stationary value at (x, a) by backward coalescence.
    fn coalesce(&self, x: &[i64; MAX_DIM], a: i64) -> Result<(u64, u64)> {
        let cfg = &self.model.config;
        let mut k = cfg.k0;
        let mut prev: Option<u64> = None;
        let mut stable = 0u32;
        loop {
            let v = self.advance(x, a - k as i64, a, 0);
            if prev == Some(v) {
                stable += 1;
                if stable >= cfg.confirmations {
                    return Ok((v, k));
                }
            } else {
                stable = 0;
            }
            prev = Some(v);
            if k >= cfg.k_max {
                let pos = LatticePoint { x: *x, t: a };
                return Err(Error::Censored {
                    what: "renewal chain value".into(),
                    position: Some(pos),
                    limit: cfg.k_max,
                    partial: prev,
                });
            }
            k = (k * 2).min(cfg.k_max);
        }
    }

    fn with_epoch<T>(
        &self,
        x: &[i64; MAX_DIM],
        t: i64,
        f: impl FnOnce(&Epoch, usize) -> T,
    ) -> Result<T> {
        let e = t.div_euclid(EPOCH);
        let off = t.rem_euclid(EPOCH) as usize;
        let key = (*x, e);
        if let Some(ep) = self.cache.borrow().get(&key) {
            return Ok(f(ep, off));
        }
        let a = e * EPOCH;
        let (v0, depth) = self.coalesce(x, a)?;
        let mut values = Vec::with_capacity(EPOCH as usize);
        let mut v = v0;
        values.push(v as u32);
        for s in 1..EPOCH {
            v = self.advance(x, a + s - 1, a + s, v);
            values.push(v as u32);
        }
        let ep = Epoch {
            values: values.into_boxed_slice(),
            depth,
        };
        let out = f(&ep, off);
        let mut cache = self.cache.borrow_mut();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, ep);
        Ok(out)
    }

    /// Stationary chain value with coalescence diagnostics.
    pub fn omega_detailed(&self, z: &LatticePoint) -> Result<CoalescedValue> {
        self.model.config.dim.check(z)?;
        let (value, depth) = self.with_epoch(&z.x, z.t, |ep, i| (ep.values[i] as u64, ep.depth))?;
        Ok(CoalescedValue {
            value,
            depth,
            residual_bias: self.model.residual_bias(depth),
        })
    }

    #[inline]
    fn omega_zero(&self, x: &[i64; MAX_DIM], t: i64) -> Result<bool> {
        self.with_epoch(x, t, |ep, i| ep.values[i] == 0)
    }

    /// ceil(k / R) for a spatial distance k.
    fn cone_time(&self, k: i64) -> i64 {
        let r = self.model.config.range as i64;
        (k + r - 1) / r
    }

    /// T^x relative to the anchor: first t from the lower limit with
    /// omega(x, t) = 0 and Z^x_{t+1} = 1. The lower limit is t_0 for x = x_0
    /// and t_0 - ceil(|x - x_0| / R) + 1 otherwise.
    pub fn t_x(&self, x: &[i64; MAX_DIM], anchor: &LatticePoint) -> Result<i64> {
        let dim = self.model.config.dim;
        let mut p = LatticePoint { x: *x, t: anchor.t };
        dim.check(&p)?;
        let k = p.spatial_dist(dim, anchor)?;
        let lower = if k == 0 {
            anchor.t
        } else {
            anchor.t - self.cone_time(k) + 1
        };
        let horizon = self.model.config.horizon as i64;
        for t in lower..lower + horizon {
            if self.restart(x, t + 1) && self.omega_zero(x, t)? {
                return Ok(t);
            }
        }
        p.t = lower;
        Err(Error::Censored {
            what: "stopping time T^x".into(),
            position: Some(p),
            limit: horizon as u64,
            partial: None,
        })
    }

    /// Whether some t in [lo, hi] has omega(x, t) = 0 and Z^x_{t+1} = 1.
    fn restarts_in(&self, x: &[i64; MAX_DIM], lo: i64, hi: i64) -> Result<bool> {
        for t in lo..=hi {
            if self.restart(x, t + 1) && self.omega_zero(x, t)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Spatial offsets with L-infinity norm exactly k.
fn shell(dim: Dim, k: i64) -> impl Iterator<Item = [i64; MAX_DIM]> {
    crate::lattice::offsets(dim, k)
        .into_iter()
        .filter(move |y| y.iter().any(|c| c.abs() == k))
}

impl Environment for RenewalRealization {
    fn dim(&self) -> Dim {
        self.model.config.dim
    }

    fn omega(&self, z: &LatticePoint) -> Result<u64> {
        self.model.config.dim.check(z)?;
        self.with_epoch(&z.x, z.t, |ep, i| ep.values[i] as u64)
    }

    fn eta_s(&self, z: &LatticePoint, s: u64) -> Result<bool> {
        let dim = self.model.config.dim;
        dim.check(z)?;
        if s == 0 {
            return Err(Error::usage("truncation s must be at least 1"));
        }
        // T^{x0} = t0.
        if !(self.restart(&z.x, z.t + 1) && self.omega_zero(&z.x, z.t)?) {
            return Ok(false);
        }
        // T^x < t0 + k/R: a restart in [t0 - ceil(k/R) + 1, t0 + ceil(k/R) - 1].
        for k in 1..=s as i64 {
            let c = self.cone_time(k);
            for y in shell(dim, k) {
                let mut x = z.x;
                for i in 0..dim.get() {
                    x[i] = x[i].checked_add(y[i]).ok_or(Error::Overflow)?;
                }
                if !self.restarts_in(&x, z.t - c + 1, z.t + c - 1)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn eta(&self, z: &LatticePoint) -> Result<bool> {
        self.eta_s(z, self.model.config.trunc_s)
    }

    fn eta_grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        Grid::try_from_fn(*window, |z| self.eta(z))
    }
}

impl EnvSource for Arc<RenewalModel> {
    type Env = RenewalRealization;
    fn dim(&self) -> Dim {
        self.config.dim
    }
    fn range(&self) -> u32 {
        self.config.range
    }
    fn realize(&self, seed: Seed) -> RenewalRealization {
        RenewalRealization::new(self.clone(), seed)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct StationarityReport {
    pub n: u64,
    /// counts[k] = number of realizations with omega((0), 0) = k.
    pub counts: Vec<u64>,
    pub tv: f64,
}

/// Empirical law of omega at the origin over `n` realizations against mu_hat.
pub fn stationarity(model: &Arc<RenewalModel>, n: u64, seed: Seed) -> Result<StationarityReport> {
    use rayon::prelude::*;
    let values: Vec<u64> = (0..n)
        .into_par_iter()
        .map(|i| RenewalRealization::new(model.clone(), seed.child(i)).omega(&LatticePoint::ORIGIN))
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; values.iter().max().map_or(0, |&m| m as usize + 1)];
    for v in values {
        counts[v as usize] += 1;
    }
    let tv = crate::stats::tv_distance(&counts, &model.config.mu.hat_mu()?);
    Ok(StationarityReport { n, counts, tv })
}

/// Closed-form quantities for the renewal environment, used as oracles and for
/// truncation errors too small to measure by sampling.
pub mod exact {
    use super::*;

    /// P(D >= m) for D = W_hat + sum_{i < S} (Y_i + 1), S ~ Geometric(gamma) on {1, 2, ...}:
    /// the offset of T^x above its lower limit.
    pub fn offset_survival(model: &RenewalModel, m: u64) -> f64 {
        let hat = model.config.mu.hat_mu().expect("validated");
        let hat_tail = |m: u64| -> f64 {
            // Tail of mu_hat computed directly to avoid cancellation.
            let mean = model.config.mu.mean();
            let mut s = 0.0;
            let mut k = m as usize;
            loop {
                let v = model.config.mu.survival(k) / (mean + 1.0);
                if v < 1e-300 || (k > hat.len() && v < 1e-18 * s) {
                    break;
                }
                s += v;
                k += 1;
                if k > m as usize + 100_000 {
                    break;
                }
            }
            s
        };
        let g = model.gamma;
        if g >= 1.0 - 1e-12 {
            return hat_tail(m);
        }
        let mu = model.config.mu.pmf_table();
        let ypmf: Vec<f64> = (0..mu.len().max(hat.len()))
            .map(|k| {
                ((mu.get(k).copied().unwrap_or(0.0) - g * hat.get(k).copied().unwrap_or(0.0))
                    / (1.0 - g))
                    .max(0.0)
            })
            .collect();
        // G(n) = P(C >= n) for the compound part C; G(n) = 1 for n <= 0 and
        // G(n) = (1 - gamma) sum_j P(Y + 1 = j) G(n - j).
        let mut gtab = vec![1.0f64; m as usize + 1];
        for n in 1..=m as usize {
            let mut acc = 0.0;
            for (y, p) in ypmf.iter().enumerate() {
                let j = y + 1;
                acc += p * if j >= n { 1.0 } else { gtab[n - j] };
            }
            gtab[n] = (1.0 - g) * acc;
        }
        let mut total = hat_tail(m);
        for w in 0..(m as usize).min(hat.len()) {
            total += hat[w] * gtab[m as usize - w];
        }
        total
    }

    /// Probability that a column at distance k fails its restart window.
    pub fn column_failure(model: &RenewalModel, k: u64) -> f64 {
        let r = model.config.range as u64;
        let c = k.div_ceil(r);
        offset_survival(model, 2 * c - 1)
    }

    fn shell_size(d: usize, k: u64) -> f64 {
        ((2 * k + 1) as f64).powi(d as i32) - ((2 * k - 1) as f64).powi(d as i32)
    }

    /// ln P(eta^s = 1).
    pub fn ln_eta_probability(model: &RenewalModel, s: u64) -> f64 {
        let d = model.config.dim.get();
        let hat0 = model.config.mu.hat_mu().expect("validated")[0];
        let mut ln = (hat0 * model.gamma).ln();
        for k in 1..=s {
            ln += shell_size(d, k) * (-column_failure(model, k)).ln_1p();
        }
        ln
    }

    pub fn eta_probability(model: &RenewalModel, s: u64) -> f64 {
        ln_eta_probability(model, s).exp()
    }

    /// P(eta^s != eta^s2) for s < s2 on the same realization.
    pub fn eta_mismatch(model: &RenewalModel, s: u64, s2: u64) -> f64 {
        let d = model.config.dim.get();
        let mut ln_keep = 0.0;
        for k in s + 1..=s2 {
            ln_keep += shell_size(d, k) * (-column_failure(model, k)).ln_1p();
        }
        eta_probability(model, s) * -ln_keep.exp_m1()
    }
}
