//! Space-time lattice Z^d x Z: points, cones, boxes and allowed paths.
//!
//! Points store a fixed-size spatial array; the active dimension `d` lives in
//! a [`Dim`] that callers pass alongside. Unused trailing coordinates are kept
//! at zero so that equality and hashing ignore them.

use crate::error::{Error, Result};
use serde::Serialize;

pub const MAX_DIM: usize = 3;

pub type Displacement = [i64; MAX_DIM];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LatticePoint {
    pub x: [i64; MAX_DIM],
    pub t: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint {
        x: [0; MAX_DIM],
        t: 0,
    };

    /// One-dimensional convenience constructor.
    pub const fn new1(x: i64, t: i64) -> Self {
        LatticePoint { x: [x, 0, 0], t }
    }

    pub fn spatial(&self, dim: Dim) -> &[i64] {
        &self.x[..dim.get()]
    }

    pub fn checked_shift(&self, dim: Dim, dx: &Displacement, dt: i64) -> Result<LatticePoint> {
        let mut out = *self;
        for i in 0..dim.get() {
            out.x[i] = out.x[i].checked_add(dx[i]).ok_or(Error::Overflow)?;
        }
        out.t = out.t.checked_add(dt).ok_or(Error::Overflow)?;
        Ok(out)
    }

    /// L-infinity norm of the spatial part of `self - other`.
    pub fn spatial_dist(&self, dim: Dim, other: &LatticePoint) -> Result<i64> {
        let mut m = 0i64;
        for i in 0..dim.get() {
            let d = self.x[i].checked_sub(other.x[i]).ok_or(Error::Overflow)?;
            m = m.max(d.checked_abs().ok_or(Error::Overflow)?);
        }
        Ok(m)
    }
}

/// Spatial dimension of an experiment, 1 ..= MAX_DIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Dim(usize);

impl Dim {
    pub const ONE: Dim = Dim(1);

    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::usage(format!(
                "dimension must be in 1..={MAX_DIM}, got {d}"
            )));
        }
        Ok(Dim(d))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    pub fn ensure(self, other: Dim) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.0,
                found: other.0,
            });
        }
        Ok(())
    }

    /// Build a point from a spatial slice whose length must equal d.
    pub fn point(self, x: &[i64], t: i64) -> Result<LatticePoint> {
        if x.len() != self.0 {
            return Err(Error::DimensionMismatch {
                expected: self.0,
                found: x.len(),
            });
        }
        let mut p = LatticePoint { x: [0; MAX_DIM], t };
        p.x[..self.0].copy_from_slice(x);
        Ok(p)
    }

    /// Reject points carrying non-zero coordinates beyond d.
    pub fn check(self, p: &LatticePoint) -> Result<()> {
        if let Some(i) = (self.0..MAX_DIM).rev().find(|&i| p.x[i] != 0) {
            return Err(Error::DimensionMismatch {
                expected: self.0,
                found: i + 1,
            });
        }
        Ok(())
    }

    /// Number of sites in the spatial L-infinity ball of radius r.
    pub fn ball_size(self, r: u64) -> u64 {
        (2 * r + 1).pow(self.0 as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Future,
    Past,
}

/// Membership of `w` in the future or past cone of slope `range` rooted at `apex`.
pub fn cone_contains(
    dim: Dim,
    apex: &LatticePoint,
    w: &LatticePoint,
    range: u32,
    dir: Direction,
) -> Result<bool> {
    dim.check(apex)?;
    dim.check(w)?;
    let dt = match dir {
        Direction::Future => w.t.checked_sub(apex.t),
        Direction::Past => apex.t.checked_sub(w.t),
    }
    .ok_or(Error::Overflow)?;
    if dt < 0 {
        return Ok(false);
    }
    let reach = (range as i64).checked_mul(dt).ok_or(Error::Overflow)?;
    Ok(w.spatial_dist(dim, apex)? <= reach)
}

/// Axis-aligned integer box with closed intervals [lo_i, hi_i] on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BoxSpec {
    pub dim: Dim,
    pub lo: LatticePoint,
    pub hi: LatticePoint,
}

impl BoxSpec {
    pub fn new(dim: Dim, lo: LatticePoint, hi: LatticePoint) -> Result<Self> {
        dim.check(&lo)?;
        dim.check(&hi)?;
        for i in 0..dim.get() {
            if lo.x[i] > hi.x[i] {
                return Err(Error::usage(format!(
                    "box axis {i}: {} > {}",
                    lo.x[i], hi.x[i]
                )));
            }
        }
        if lo.t > hi.t {
            return Err(Error::usage(format!("box time axis: {} > {}", lo.t, hi.t)));
        }
        Ok(BoxSpec { dim, lo, hi })
    }

    /// Box [x_lo, x_hi]^d x [t_lo, t_hi].
    pub fn cube(dim: Dim, x_lo: i64, x_hi: i64, t_lo: i64, t_hi: i64) -> Result<Self> {
        let mut lo = LatticePoint {
            x: [0; MAX_DIM],
            t: t_lo,
        };
        let mut hi = LatticePoint {
            x: [0; MAX_DIM],
            t: t_hi,
        };
        for i in 0..dim.get() {
            lo.x[i] = x_lo;
            hi.x[i] = x_hi;
        }
        Self::new(dim, lo, hi)
    }

    /// Spatial diameter: largest side length over spatial axes.
    pub fn r(&self) -> i64 {
        (0..self.dim.get())
            .map(|i| self.hi.x[i] - self.lo.x[i])
            .max()
            .unwrap_or(0)
    }

    /// Height: time side length.
    pub fn h(&self) -> i64 {
        self.hi.t - self.lo.t
    }

    pub fn side(&self, axis: usize) -> i64 {
        self.hi.x[axis] - self.lo.x[axis] + 1
    }

    /// Number of lattice points in the box.
    pub fn volume(&self) -> Result<u64> {
        let mut v: u64 = (self.h() + 1) as u64;
        for i in 0..self.dim.get() {
            v = v.checked_mul(self.side(i) as u64).ok_or(Error::Overflow)?;
        }
        Ok(v)
    }

    /// Vertical separation: gap between time intervals, 0 when they meet.
    pub fn separation(&self, other: &BoxSpec) -> Result<i64> {
        self.dim.ensure(other.dim)?;
        if other.hi.t < self.lo.t {
            Ok(self.lo.t - other.hi.t)
        } else if self.hi.t < other.lo.t {
            Ok(other.lo.t - self.hi.t)
        } else {
            Ok(0)
        }
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        p.t >= self.lo.t
            && p.t <= self.hi.t
            && (0..self.dim.get()).all(|i| p.x[i] >= self.lo.x[i] && p.x[i] <= self.hi.x[i])
    }

    /// Lattice points in lexicographic order (time slowest, last spatial axis fastest).
    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        let d = self.dim.get();
        let lo = self.lo;
        let hi = self.hi;
        let mut cur = Some(lo);
        std::iter::from_fn(move || {
            let out = cur?;
            let mut next = out;
            let mut i = d;
            loop {
                if i == 0 {
                    next.t += 1;
                    if next.t > hi.t {
                        cur = None;
                    } else {
                        next.x[..d].copy_from_slice(&lo.x[..d]);
                        cur = Some(next);
                    }
                    break;
                }
                i -= 1;
                if next.x[i] < hi.x[i] {
                    next.x[i] += 1;
                    next.x[i + 1..d].copy_from_slice(&lo.x[i + 1..d]);
                    cur = Some(next);
                    break;
                }
            }
            Some(out)
        })
    }
}

/// A finite space-time path with one site per consecutive time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllowedPath {
    pub start_time: i64,
    pub sites: Vec<LatticePoint>,
    pub lipschitz: u32,
}

impl AllowedPath {
    pub fn len_steps(&self) -> usize {
        self.sites.len().saturating_sub(1)
    }

    /// True iff site k sits at time start_time + k and every spatial step has
    /// L-infinity norm at most `lipschitz`.
    pub fn validate(&self, dim: Dim) -> Result<bool> {
        if self.sites.is_empty() {
            return Err(Error::usage("empty path"));
        }
        if self.lipschitz == 0 {
            return Err(Error::usage("lipschitz constant must be positive"));
        }
        for (k, s) in self.sites.iter().enumerate() {
            dim.check(s)?;
            let want = self
                .start_time
                .checked_add(k as i64)
                .ok_or(Error::Overflow)?;
            if s.t != want {
                return Ok(false);
            }
            if k > 0 && s.spatial_dist(dim, &self.sites[k - 1])? > self.lipschitz as i64 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Enumerate spatial offsets in [-r, r]^d in lexicographic order.
pub fn offsets(dim: Dim, r: i64) -> Vec<Displacement> {
    let d = dim.get();
    let side = (2 * r + 1) as usize;
    let n = side.pow(d as u32);
    (0..n)
        .map(|mut idx| {
            let mut y = [0i64; MAX_DIM];
            for i in (0..d).rev() {
                y[i] = (idx % side) as i64 - r;
                idx /= side;
            }
            y
        })
        .collect()
}
