//! Gaussian localization kernel, its gradient, and the gradient-weighted sum
//! of the noise field over a spatial grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CslError, Result};

/// Half-width of the convolution window in kernel widths (1/sqrt(alpha)).
pub const WINDOW_WIDTHS: f64 = 6.0;

/// Uniform cell-centred grid on [q_min, q_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub n_cells: usize,
}

impl SpatialGrid {
    pub fn new(q_min: f64, q_max: f64, n_cells: usize) -> Result<Self> {
        let g = Self {
            q_min,
            q_max,
            n_cells,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid centred on `center` with spacing `dq`, covering at least `half` each side.
    pub fn centered(center: f64, half: f64, dq: f64) -> Result<Self> {
        if !(half > 0.0 && dq > 0.0) {
            return Err(invalid("grid half-width and spacing must be positive"));
        }
        // Widen to a whole number of cells so the spacing is exactly `dq`.
        let n_cells = ((2.0 * half / dq).ceil() as usize).max(1);
        let half = 0.5 * n_cells as f64 * dq;
        Self::new(center - half, center + half, n_cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(invalid("spatial grid has no cells"));
        }
        if !(self.q_min.is_finite() && self.q_max.is_finite() && self.q_max > self.q_min) {
            return Err(invalid(format!(
                "spatial grid bounds must satisfy q_min < q_max, got [{}, {}]",
                self.q_min, self.q_max
            )));
        }
        Ok(())
    }

    /// Extra checks for kernel work: at least 8 kernel widths of span and 5
    /// cells per width.
    pub fn validate_for_kernel(&self, alpha: f64) -> Result<()> {
        self.validate()?;
        let width = 1.0 / alpha.sqrt();
        if self.q_max - self.q_min < 8.0 * width {
            return Err(invalid(format!(
                "grid span {} is below 8 kernel widths ({})",
                self.q_max - self.q_min,
                8.0 * width
            )));
        }
        if self.dq() > 0.2 * width {
            return Err(invalid(format!(
                "grid spacing {} exceeds 0.2 kernel widths ({})",
                self.dq(),
                0.2 * width
            )));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.q_min + (i as f64 + 0.5) * self.dq()
    }

    /// Index range of cells whose centres lie within `half` of `x`, or a
    /// domain error when [x - half, x + half] is not inside the grid.
    pub fn window(&self, x: f64, half: f64) -> Result<std::ops::Range<usize>> {
        if !(x - half >= self.q_min && x + half <= self.q_max) {
            return Err(CslError::Domain(format!(
                "window [{}, {}] leaves grid [{}, {}]",
                x - half,
                x + half,
                self.q_min,
                self.q_max
            )));
        }
        let dq = self.dq();
        let lo = ((x - half - self.q_min) / dq - 0.5).ceil().max(0.0) as usize;
        let hi = (((x + half - self.q_min) / dq - 0.5).floor() as usize + 1).min(self.n_cells);
        Ok(lo..hi.max(lo))
    }
}

/// G(x) = sqrt(alpha/2π) exp(-alpha x²/2).
#[inline]
pub fn gaussian_kernel(alpha: f64, x: f64) -> f64 {
    (alpha / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * alpha * x * x).exp()
}

/// dG/dx = -alpha x G(x).
#[inline]
pub fn kernel_gradient(alpha: f64, x: f64) -> f64 {
    -alpha * x * gaussian_kernel(alpha, x)
}

/// Closed form of ∫ (dG/dx)² dq = alpha^{3/2} / (4 sqrt(π)).
pub fn gradient_square_integral(alpha: f64) -> f64 {
    alpha.powf(1.5) / (4.0 * std::f64::consts::PI.sqrt())
}

/// Kernel-gradient weights dG/dx(x - q_i) over the convolution window around
/// `x`. Returns the first cell index; `weights` is overwritten.
///
/// The Gaussian factor is advanced by a multiplicative recurrence along the
/// uniform grid, so only two exponentials are evaluated per window.
pub fn gradient_window(
    grid: &SpatialGrid,
    alpha: f64,
    x: f64,
    weights: &mut Vec<f64>,
) -> Result<usize> {
    let range = grid.window(x, WINDOW_WIDTHS / alpha.sqrt())?;
    weights.clear();
    if range.is_empty() {
        return Ok(range.start);
    }
    let dq = grid.dq();
    let norm = (alpha / (2.0 * std::f64::consts::PI)).sqrt();
    let mut u = x - grid.center(range.start);
    let mut g = (-0.5 * alpha * u * u).exp();
    let mut ratio = (alpha * u * dq - 0.5 * alpha * dq * dq).exp();
    let step = (-alpha * dq * dq).exp();
    for _ in range.clone() {
        weights.push(-alpha * u * norm * g);
        g *= ratio;
        ratio *= step;
        u -= dq;
    }
    Ok(range.start)
}

/// Σ_i field_i · dG/dx(x - q_i) over the window [x - 6/√α, x + 6/√α].
pub fn convolve_gradient(field: &[f64], grid: &SpatialGrid, alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if field.len() != grid.n_cells {
        return Err(CslError::Alignment(format!(
            "field has {} cells, grid has {}",
            field.len(),
            grid.n_cells
        )));
    }
    let range = grid.window(x, WINDOW_WIDTHS / alpha.sqrt())?;
    Ok(range
        .map(|i| field[i] * kernel_gradient(alpha, x - grid.center(i)))
        .sum())
}
