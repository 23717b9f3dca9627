//! Fractional Gaussian noise with unit scale: increments over steps of
//! length dt whose partial sums satisfy Var(B(t_k)) = t_k^a.

use super::NoiseStream;
use crate::error::{invalid, CslError, Result};

/// Largest path length synthesized with the dense Cholesky factor.
pub const CHOLESKY_MAX_STEPS: usize = 4096;

/// Relative pivot below which a Cholesky column is treated as null
/// (semi-definite covariance, e.g. the ballistic a = 2 limit).
const PIVOT_TOL: f64 = 1e-10;
/// Largest relative residual tolerated in a null column.
const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgnMethod {
    /// Dense lower-triangular factor of the increment covariance.
    Cholesky,
    /// Durbin–Levinson (Hosking) recursion, O(n) memory per path.
    Hosking,
}

#[derive(Debug, Clone)]
pub struct AffineNoise {
    a: f64,
    dt: f64,
    n: usize,
    method: FgnMethod,
    /// Packed rows of the Cholesky factor (row k starts at k(k+1)/2).
    factor: Vec<f64>,
}

impl AffineNoise {
    /// Cholesky up to [`CHOLESKY_MAX_STEPS`], Hosking beyond.
    pub fn new(a: f64, n_steps: usize, dt: f64) -> Result<Self> {
        let method = if n_steps <= CHOLESKY_MAX_STEPS {
            FgnMethod::Cholesky
        } else {
            FgnMethod::Hosking
        };
        Self::with_method(a, n_steps, dt, method)
    }

    pub fn with_method(a: f64, n_steps: usize, dt: f64, method: FgnMethod) -> Result<Self> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(invalid(format!(
                "affine exponent must lie in (0, 2], got {a}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive and finite, got {dt}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        let mut noise = Self {
            a,
            dt,
            n: n_steps,
            method,
            factor: Vec::new(),
        };
        if method == FgnMethod::Cholesky {
            noise.factor = noise.cholesky()?;
        }
        Ok(noise)
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn n_steps(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn method(&self) -> FgnMethod {
        self.method
    }

    /// Covariance of two increments `lag` steps apart.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        let k = lag as f64;
        let a = self.a;
        let g = if lag == 0 {
            1.0
        } else {
            0.5 * ((k + 1.0).powf(a) - 2.0 * k.powf(a) + (k - 1.0).powf(a))
        };
        g * self.dt.powf(a)
    }

    fn cholesky(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let gamma: Vec<f64> = (0..n).map(|k| self.autocovariance(k)).collect();
        let g0 = gamma[0];
        let mut l = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let row_i = i * (i + 1) / 2;
            for j in 0..=i {
                let row_j = j * (j + 1) / 2;
                let dot: f64 = l[row_i..row_i + j]
                    .iter()
                    .zip(&l[row_j..row_j + j])
                    .map(|(x, y)| x * y)
                    .sum();
                let resid = gamma[i - j] - dot;
                if j == i {
                    if resid > PIVOT_TOL * g0 {
                        l[row_i + i] = resid.sqrt();
                    } else if resid < -RESIDUAL_TOL * g0 {
                        return Err(CslError::Synthesis(format!(
                            "increment covariance not positive semi-definite at row {i} (pivot {resid:e})"
                        )));
                    }
                } else {
                    let pivot = l[row_j + j];
                    if pivot > 0.0 {
                        l[row_i + j] = resid / pivot;
                    } else if resid.abs() > RESIDUAL_TOL * g0 {
                        return Err(CslError::Synthesis(format!(
                            "inconsistent null column {j} at row {i} (residual {resid:e})"
                        )));
                    }
                }
            }
        }
        Ok(l)
    }

    /// Row `k` of the Cholesky factor. Panics for the Hosking method.
    pub fn factor_row(&self, k: usize) -> &[f64] {
        assert_eq!(
            self.method,
            FgnMethod::Cholesky,
            "no dense factor for Hosking synthesis"
        );
        let start = k * (k + 1) / 2;
        &self.factor[start..start + k + 1]
    }

    /// Maps i.i.d. standard normals `z` to correlated increments `out`.
    pub fn transform(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n.min(z.len()).min(out.len());
        match self.method {
            FgnMethod::Cholesky => {
                for (k, o) in out.iter_mut().enumerate().take(n) {
                    *o = self.factor_row(k).iter().zip(z).map(|(l, z)| l * z).sum();
                }
            }
            FgnMethod::Hosking => self.hosking(&z[..n], &mut out[..n]),
        }
    }

    fn hosking(&self, z: &[f64], out: &mut [f64]) {
        let n = z.len();
        if n == 0 {
            return;
        }
        let gamma: Vec<f64> = (0..n).map(|k| self.autocovariance(k)).collect();
        let mut phi = vec![0.0; n];
        let mut prev = vec![0.0; n];
        let mut v = gamma[0];
        out[0] = v.sqrt() * z[0];
        for k in 1..n {
            if v <= PIVOT_TOL * gamma[0] {
                // Remaining increments are determined by the past.
                out[k] = (1..=k).map(|j| prev[j] * out[k - j]).sum();
                continue;
            }
            let num = gamma[k] - (1..k).map(|j| prev[j] * gamma[k - j]).sum::<f64>();
            let pkk = num / v;
            phi[k] = pkk;
            for j in 1..k {
                phi[j] = prev[j] - pkk * prev[k - j];
            }
            v *= 1.0 - pkk * pkk;
            let mean: f64 = (1..=k).map(|j| phi[j] * out[k - j]).sum();
            out[k] = mean + v.max(0.0).sqrt() * z[k];
            prev[1..=k].copy_from_slice(&phi[1..=k]);
        }
    }

    /// Full increment path from the stream's one-dimensional sequence.
    pub fn sample(&self, stream: &NoiseStream) -> Vec<f64> {
        let z = stream.sequence(self.n);
        let mut out = vec![0.0; self.n];
        self.transform(&z, &mut out);
        out
    }

    /// Increment at `step` of the temporal process attached to field cell
    /// `cell`; the underlying normals live at rows 0..=step, column `cell`.
    pub fn cell_increment(&self, stream: &NoiseStream, step: usize, cell: u64) -> f64 {
        self.factor_row(step)
            .iter()
            .enumerate()
            .map(|(j, l)| l * stream.normal(j as u64, cell))
            .sum()
    }
}

/// Correlated increments with Var(B(t_k)) = t_k^a for a single stream.
pub fn affine_increments(
    a: f64,
    n_steps: usize,
    dt: f64,
    seed: super::SeedPolicy,
    role: super::NoiseRole,
) -> Result<Vec<f64>> {
    let noise = AffineNoise::new(a, n_steps, dt)?;
    Ok(noise.sample(&NoiseStream::new(seed, role)))
}
