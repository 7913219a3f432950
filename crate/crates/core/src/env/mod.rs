//! Environments: the state field omega and the regeneration field eta on Z^d x Z.

pub mod boolean;
pub mod renewal;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Dim, LatticePoint};
use crate::rng::Seed;

pub use boolean::{
    BallRecord, BooleanConfig, BooleanModel, BooleanRealization, ConeMode, RadiusLaw,
};
pub use renewal::{InterarrivalLaw, RenewalConfig, RenewalModel, RenewalRealization};

/// One realization of an environment, queried lazily.
pub trait Environment {
    fn dim(&self) -> Dim;

    /// Environment state omega_z.
    fn omega(&self, z: &LatticePoint) -> Result<u64>;

    /// Truncated regeneration indicator eta^s_z with an explicit truncation.
    fn eta_s(&self, z: &LatticePoint, s: u64) -> Result<bool>;

    /// eta^s_z at the realization's configured truncation.
    fn eta(&self, z: &LatticePoint) -> Result<bool>;

    /// eta over a window. Implementations may batch, but the result must equal
    /// pointwise evaluation.
    fn eta_grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        Grid::try_from_fn(*window, |z| self.eta(z))
    }

    fn omega_grid(&self, window: &BoxSpec) -> Result<Grid<u64>> {
        Grid::try_from_fn(*window, |z| self.omega(z))
    }
}

/// Something that produces independent realizations from seeds.
pub trait EnvSource: Sync {
    type Env: Environment;
    fn dim(&self) -> Dim;
    fn range(&self) -> u32;
    fn realize(&self, seed: Seed) -> Self::Env;
}

/// Dense values over a box, stored in [`BoxSpec::points`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub window: BoxSpec,
    data: Vec<T>,
    strides: [usize; 4],
}

impl<T: Clone> Grid<T> {
    pub fn filled(window: BoxSpec, value: T) -> Result<Self> {
        let n = window.volume()?;
        if n > 1 << 31 {
            return Err(Error::Resource(format!("grid of {n} points is too large")));
        }
        let d = window.dim.get();
        let mut strides = [0usize; 4];
        let mut acc = 1usize;
        for i in (0..d).rev() {
            strides[i] = acc;
            acc *= window.side(i) as usize;
        }
        strides[3] = acc;
        Ok(Grid {
            window,
            data: vec![value; n as usize],
            strides,
        })
    }
}

impl<T> Grid<T> {
    pub fn try_from_fn(
        window: BoxSpec,
        mut f: impl FnMut(&LatticePoint) -> Result<T>,
    ) -> Result<Self> {
        let n = window.volume()?;
        if n > 1 << 31 {
            return Err(Error::Resource(format!("grid of {n} points is too large")));
        }
        let data = window.points().map(|z| f(&z)).collect::<Result<Vec<T>>>()?;
        let d = window.dim.get();
        let mut strides = [0usize; 4];
        let mut acc = 1usize;
        for i in (0..d).rev() {
            strides[i] = acc;
            acc *= window.side(i) as usize;
        }
        strides[3] = acc;
        Ok(Grid {
            window,
            data,
            strides,
        })
    }

    #[inline]
    pub fn index(&self, z: &LatticePoint) -> Option<usize> {
        if !self.window.contains(z) {
            return None;
        }
        let mut idx = (z.t - self.window.lo.t) as usize * self.strides[3];
        for i in 0..self.window.dim.get() {
            idx += (z.x[i] - self.window.lo.x[i]) as usize * self.strides[i];
        }
        Some(idx)
    }

    #[inline]
    pub fn get(&self, z: &LatticePoint) -> Option<&T> {
        self.index(z).map(|i| &self.data[i])
    }

    #[inline]
    pub fn get_mut(&mut self, z: &LatticePoint) -> Option<&mut T> {
        self.index(z).map(move |i| &mut self.data[i])
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    /// Number of points in one time slice.
    pub fn slice_len(&self) -> usize {
        self.strides[3]
    }

    /// Values at one time, in spatial lexicographic order.
    pub fn slice(&self, t: i64) -> Option<&[T]> {
        if t < self.window.lo.t || t > self.window.hi.t {
            return None;
        }
        let s = (t - self.window.lo.t) as usize * self.strides[3];
        Some(&self.data[s..s + self.strides[3]])
    }
}

/// Environment given by closures. Intended for tests and controls; eta
/// defaults to "omega is 0".
#[derive(Clone)]
pub struct FnEnv<F, G = fn(&LatticePoint) -> bool> {
    dim: Dim,
    omega: F,
    eta: Option<G>,
}

impl<F: Fn(&LatticePoint) -> u64> FnEnv<F> {
    pub fn new(dim: Dim, omega: F) -> Self {
        FnEnv {
            dim,
            omega,
            eta: None,
        }
    }
}

impl<F: Fn(&LatticePoint) -> u64, G: Fn(&LatticePoint) -> bool> FnEnv<F, G> {
    pub fn with_eta(dim: Dim, omega: F, eta: G) -> Self {
        FnEnv {
            dim,
            omega,
            eta: Some(eta),
        }
    }
}

impl<F: Fn(&LatticePoint) -> u64, G: Fn(&LatticePoint) -> bool> Environment for FnEnv<F, G> {
    fn dim(&self) -> Dim {
        self.dim
    }
    fn omega(&self, z: &LatticePoint) -> Result<u64> {
        Ok((self.omega)(z))
    }
    fn eta_s(&self, z: &LatticePoint, _s: u64) -> Result<bool> {
        self.eta(z)
    }
    fn eta(&self, z: &LatticePoint) -> Result<bool> {
        Ok(match &self.eta {
            Some(g) => g(z),
            None => (self.omega)(z) == 0,
        })
    }
}

/// I.i.d. field: eta_z ~ Bernoulli(p) independently, omega_z = 1 - eta_z.
/// A null control for the decoupling and Markov-property tests.
#[derive(Clone, Debug)]
pub struct CoinField {
    pub dim: Dim,
    pub p: f64,
    pub seed: Seed,
}

impl Environment for CoinField {
    fn dim(&self) -> Dim {
        self.dim
    }
    fn omega(&self, z: &LatticePoint) -> Result<u64> {
        Ok(!self.eta(z)? as u64)
    }
    fn eta_s(&self, z: &LatticePoint, _s: u64) -> Result<bool> {
        self.eta(z)
    }
    fn eta(&self, z: &LatticePoint) -> Result<bool> {
        Ok(self
            .seed
            .uniform(&[z.x[0] as u64, z.x[1] as u64, z.x[2] as u64, z.t as u64])
            < self.p)
    }
}

#[derive(Clone, Debug)]
pub struct CoinSource {
    pub dim: Dim,
    pub range: u32,
    pub p: f64,
}

impl EnvSource for CoinSource {
    type Env = CoinField;
    fn dim(&self) -> Dim {
        self.dim
    }
    fn range(&self) -> u32 {
        self.range
    }
    fn realize(&self, seed: Seed) -> CoinField {
        CoinField {
            dim: self.dim,
            p: self.p,
            seed,
        }
    }
}

/// Number of realizations among `n` with eta^s_0 != eta^{s2}_0.
pub fn eta_mismatch_count<S: EnvSource>(
    source: &S,
    s: u64,
    s2: u64,
    n: u64,
    seed: Seed,
) -> Result<u64> {
    use rayon::prelude::*;
    let z = LatticePoint::ORIGIN;
    let flags: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let env = source.realize(seed.child(i));
            Ok(env.eta_s(&z, s)? != env.eta_s(&z, s2)?)
        })
        .collect::<Result<_>>()?;
    Ok(flags.into_iter().filter(|&f| f).count() as u64)
}

/// Configuration of one of the two environment families.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvConfig {
    Boolean(BooleanConfig),
    Renewal(RenewalConfig),
}

impl EnvConfig {
    pub fn dim(&self) -> Dim {
        match self {
            EnvConfig::Boolean(c) => c.dim,
            EnvConfig::Renewal(c) => c.dim,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            EnvConfig::Boolean(_) => "boolean",
            EnvConfig::Renewal(_) => "renewal",
        }
    }

    pub fn trunc_s(&self) -> u64 {
        match self {
            EnvConfig::Boolean(c) => c.trunc_s,
            EnvConfig::Renewal(c) => c.trunc_s,
        }
    }

    pub fn with_trunc_s(&self, s: u64) -> EnvConfig {
        match self {
            EnvConfig::Boolean(c) => EnvConfig::Boolean(BooleanConfig {
                trunc_s: s,
                ..c.clone()
            }),
            EnvConfig::Renewal(c) => EnvConfig::Renewal(RenewalConfig {
                trunc_s: s,
                ..c.clone()
            }),
        }
    }

    /// Tail exponent beta entering the decoupling function.
    pub fn beta(&self) -> f64 {
        match self {
            EnvConfig::Boolean(c) => c.radius_law.tail_exponent(),
            EnvConfig::Renewal(c) => c.mu.moment_order() - 1.0,
        }
    }

    /// Decoupling exponent alpha = beta - d - 1.
    pub fn alpha(&self) -> f64 {
        self.beta() - self.dim().get() as f64 - 1.0
    }

    /// Validate and precompute tables.
    pub fn model(&self) -> Result<EnvModel> {
        Ok(match self {
            EnvConfig::Boolean(c) => EnvModel::Boolean(Arc::new(BooleanModel::new(c.clone())?)),
            EnvConfig::Renewal(c) => EnvModel::Renewal(Arc::new(RenewalModel::new(c.clone())?)),
        })
    }
}

/// Validated environment family with precomputed tables; cheap to clone.
#[derive(Clone, Debug)]
pub enum EnvModel {
    Boolean(Arc<BooleanModel>),
    Renewal(Arc<RenewalModel>),
}

impl EnvModel {
    pub fn config(&self) -> EnvConfig {
        match self {
            EnvModel::Boolean(m) => EnvConfig::Boolean(m.config().clone()),
            EnvModel::Renewal(m) => EnvConfig::Renewal(m.config().clone()),
        }
    }
}

impl EnvSource for EnvModel {
    type Env = Realization;
    fn dim(&self) -> Dim {
        match self {
            EnvModel::Boolean(m) => m.config().dim,
            EnvModel::Renewal(m) => m.config().dim,
        }
    }
    fn range(&self) -> u32 {
        match self {
            EnvModel::Boolean(m) => m.config().range,
            EnvModel::Renewal(m) => m.config().range,
        }
    }
    fn realize(&self, seed: Seed) -> Realization {
        match self {
            EnvModel::Boolean(m) => Realization::Boolean(BooleanRealization::new(m.clone(), seed)),
            EnvModel::Renewal(m) => Realization::Renewal(RenewalRealization::new(m.clone(), seed)),
        }
    }
}

/// A realization of either family.
#[derive(Clone, Debug)]
pub enum Realization {
    Boolean(BooleanRealization),
    Renewal(RenewalRealization),
}

impl Environment for Realization {
    fn dim(&self) -> Dim {
        match self {
            Realization::Boolean(r) => r.dim(),
            Realization::Renewal(r) => r.dim(),
        }
    }
    fn omega(&self, z: &LatticePoint) -> Result<u64> {
        match self {
            Realization::Boolean(r) => r.omega(z),
            Realization::Renewal(r) => r.omega(z),
        }
    }
    fn eta_s(&self, z: &LatticePoint, s: u64) -> Result<bool> {
        match self {
            Realization::Boolean(r) => r.eta_s(z, s),
            Realization::Renewal(r) => r.eta_s(z, s),
        }
    }
    fn eta(&self, z: &LatticePoint) -> Result<bool> {
        match self {
            Realization::Boolean(r) => r.eta(z),
            Realization::Renewal(r) => r.eta(z),
        }
    }
    fn eta_grid(&self, window: &BoxSpec) -> Result<Grid<bool>> {
        match self {
            Realization::Boolean(r) => r.eta_grid(window),
            Realization::Renewal(r) => r.eta_grid(window),
        }
    }
    fn omega_grid(&self, window: &BoxSpec) -> Result<Grid<u64>> {
        match self {
            Realization::Boolean(r) => r.omega_grid(window),
            Realization::Renewal(r) => r.omega_grid(window),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_matches_point_order() {
        let d = Dim::new(2).unwrap();
        let w = BoxSpec::new(
            d,
            d.point(&[-1, 2], 3).unwrap(),
            d.point(&[1, 4], 5).unwrap(),
        )
        .unwrap();
        let g = Grid::try_from_fn(w, |z| Ok(*z)).unwrap();
        for (i, z) in w.points().enumerate() {
            assert_eq!(g.index(&z), Some(i));
            assert_eq!(g.get(&z), Some(&z));
        }
        assert_eq!(g.slice_len(), 9);
        assert_eq!(g.slice(4).unwrap()[0], d.point(&[-1, 2], 4).unwrap());
        assert!(g.get(&d.point(&[2, 2], 3).unwrap()).is_none());
    }

    #[test]
    fn coin_field_frequency() {
        let c = CoinField {
            dim: Dim::ONE,
            p: 0.3,
            seed: Seed(4),
        };
        let n = 100_000;
        let hits = (0..n)
            .filter(|&i| c.eta(&LatticePoint::new1(i, 0)).unwrap())
            .count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.006);
        assert_eq!(
            c.omega(&LatticePoint::new1(3, 0)).unwrap(),
            !c.eta(&LatticePoint::new1(3, 0)).unwrap() as u64
        );
    }
}
