//! Stochastic increments: temporal white noise, affine (fractional
//! Brownian) noise and the discretized space-time noise field.
//!
//! All draws come from counter-addressed Philox streams. A stream is keyed by
//! `(master_seed, stream_index, role)`; within a stream a draw is addressed by
//! a (row, column) pair, so a generator is a pure function of its arguments
//! no matter which thread evaluates it or in which order.

mod fgn;
pub mod philox;

pub use fgn::{affine_increments, AffineNoise, FgnMethod, CHOLESKY_MAX_STEPS};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::SpatialGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Affine,
}

/// Temporal character of one noise role.
///
/// For `Affine`, the integrated process obeys Var(B(t)) = t^a with stationary
/// increments (fractional Gaussian noise, Hurst exponent a/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub a: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::white()
    }
}

impl NoiseSpec {
    pub fn white() -> Self {
        Self {
            kind: NoiseKind::White,
            a: 1.0,
        }
    }

    pub fn affine(a: f64) -> Result<Self> {
        let spec = Self {
            kind: NoiseKind::Affine,
            a,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NoiseKind::Affine && !(self.a > 0.0 && self.a <= 2.0) {
            return Err(invalid(format!(
                "affine exponent must lie in (0, 2], got {}",
                self.a
            )));
        }
        Ok(())
    }

    /// Variance growth exponent of the integrated noise (1 for white noise).
    pub fn exponent(&self) -> f64 {
        match self.kind {
            NoiseKind::White => 1.0,
            NoiseKind::Affine => self.a,
        }
    }
}

/// Which physical noise a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseRole {
    /// Shared momentum/position noise dw.
    Dw,
    /// Localization field dB (or its scalar reduction).
    Field,
    /// Initial-condition sampling.
    Initial,
}

impl NoiseRole {
    fn tag(self) -> u64 {
        match self {
            NoiseRole::Dw => 1,
            NoiseRole::Field => 2,
            NoiseRole::Initial => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }
}

/// Row reserved for one-dimensional sequences (scalar noise paths).
const SEQUENCE_ROW: u64 = u64::MAX;

/// Counter-addressed standard normal source for one (seed, stream, role).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    key: u64,
}

impl NoiseStream {
    pub fn new(seed: SeedPolicy, role: NoiseRole) -> Self {
        let base = philox::mix64(seed.master_seed);
        let salt = philox::mix64(seed.stream_index ^ (role.tag() << 60));
        Self {
            key: philox::mix64(base ^ salt.rotate_left(17)),
        }
    }

    /// Standard normal at (row, column).
    #[inline]
    pub fn normal(&self, row: u64, column: u64) -> f64 {
        let (a, b) = philox::normal_pair(self.key, row, column >> 1);
        if column & 1 == 0 {
            a
        } else {
            b
        }
    }

    /// Uniform on [0, 1) at (row, column), independent of the normal at the
    /// same address.
    #[inline]
    pub fn uniform(&self, row: u64, column: u64) -> f64 {
        let (a, _) = philox::block_u64(self.key ^ 0x5555_5555_5555_5555, row, column);
        (a >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Fills `out` with the normals at (row, start..start + out.len()).
    pub fn fill_row(&self, row: u64, start: u64, out: &mut [f64]) {
        let mut col = start;
        let mut i = 0;
        if col & 1 == 1 && !out.is_empty() {
            out[0] = self.normal(row, col);
            col += 1;
            i = 1;
        }
        while i + 1 < out.len() {
            let (a, b) = philox::normal_pair(self.key, row, col >> 1);
            out[i] = a;
            out[i + 1] = b;
            i += 2;
            col += 2;
        }
        if i < out.len() {
            out[i] = self.normal(row, col);
        }
    }

    /// First `n` normals of the stream's one-dimensional sequence.
    pub fn sequence(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.fill_row(SEQUENCE_ROW, 0, &mut out);
        out
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive and finite, got {dt}")));
    }
    Ok(())
}

/// i.i.d. N(0, dt) increments.
pub fn white_increments(
    n_steps: usize,
    dt: f64,
    seed: SeedPolicy,
    role: NoiseRole,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    let scale = dt.sqrt();
    let mut z = NoiseStream::new(seed, role).sequence(n_steps);
    z.iter_mut().for_each(|v| *v *= scale);
    Ok(z)
}

/// One time slice of the space-time white-noise field: an independent
/// N(0, dt·dq) increment per grid cell, addressed by `step`.
pub fn field_increments(
    grid: &SpatialGrid,
    dt: f64,
    seed: SeedPolicy,
    step: u64,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    grid.validate()?;
    let scale = (dt * grid.dq()).sqrt();
    let mut out = vec![0.0; grid.n_cells];
    NoiseStream::new(seed, NoiseRole::Field).fill_row(step, 0, &mut out);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Temporal increment generator for one role, shared by every trajectory of
/// a run.
#[derive(Debug, Clone)]
pub enum Increments {
    White { scale: f64 },
    Affine(AffineNoise),
}

impl Increments {
    pub fn new(spec: &NoiseSpec, n_steps: usize, dt: f64) -> Result<Self> {
        spec.validate()?;
        check_dt(dt)?;
        Ok(match spec.kind {
            NoiseKind::White => Increments::White { scale: dt.sqrt() },
            NoiseKind::Affine => Increments::Affine(AffineNoise::new(spec.a, n_steps, dt)?),
        })
    }

    /// Scalar increment path of length `n` drawn from `stream`.
    pub fn path(&self, stream: &NoiseStream, n: usize) -> Vec<f64> {
        match self {
            Increments::White { scale } => {
                let mut z = stream.sequence(n);
                z.iter_mut().for_each(|v| *v *= scale);
                z
            }
            Increments::Affine(noise) => noise.sample(stream),
        }
    }

    /// Unit-measure increment of the field's temporal process at (`step`,
    /// `cell`); multiply by sqrt(dq) for the cell's spatial weight.
    #[inline]
    pub fn cell_increment(&self, stream: &NoiseStream, step: usize, cell: u64) -> f64 {
        match self {
            Increments::White { scale } => scale * stream.normal(step as u64, cell),
            Increments::Affine(noise) => noise.cell_increment(stream, step, cell),
        }
    }

    pub fn supports_cells(&self) -> bool {
        match self {
            Increments::White { .. } => true,
            Increments::Affine(noise) => noise.method() == FgnMethod::Cholesky,
        }
    }
}
