//! Explicit finite-difference solver for the phase-space Fokker–Planck
//! equation of the Markovian subsystem
//!
//! ∂P/∂t = -(p₀/m) ∂ₓP + (ħ/2m) ∂ₓ²P + sqrt(ħ³αλ/2m) ∂ₓ∂ₚP + (ħ²αλ/4) ∂ₚ²P
//!
//! All terms are written in flux form with zero flux through the domain
//! boundary, so total mass is conserved to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CslError, Result};
use crate::noise::{NoiseRole, NoiseStream, SeedPolicy};
use crate::params::PhysParams;

/// Safety factor applied to every explicit stability limit.
pub const STABILITY_FACTOR: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
}

impl PhaseGrid {
    pub fn new(x: (f64, f64), n_x: usize, p: (f64, f64), n_p: usize) -> Result<Self> {
        let g = Self {
            x_min: x.0,
            x_max: x.1,
            n_x,
            p_min: p.0,
            p_max: p.1,
            n_p,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 32 || self.n_p < 32 {
            return Err(CslError::GridResolution(format!(
                "phase grid needs at least 32 cells per axis, got {}x{}",
                self.n_x, self.n_p
            )));
        }
        let ok = self.x_min.is_finite()
            && self.x_max.is_finite()
            && self.p_min.is_finite()
            && self.p_max.is_finite()
            && self.x_max > self.x_min
            && self.p_max > self.p_min;
        if !ok {
            return Err(invalid("phase grid extents must be finite and increasing"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + (j as f64 + 0.5) * self.dp()
    }

    fn len(&self) -> usize {
        self.n_x * self.n_p
    }
}

/// Discrete density, stored x-major (`density[i * n_p + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FPEState {
    pub grid: PhaseGrid,
    pub density: Vec<f64>,
    pub t: f64,
    pub mass: f64,
}

impl FPEState {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.grid.n_p + j]
    }

    fn recompute_mass(&mut self) {
        self.mass = self.density.iter().sum::<f64>() * self.grid.dx() * self.grid.dp();
    }

    /// Most negative density value (0 when non-negative everywhere).
    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::min)
    }

    /// Largest boundary-cell density relative to the peak.
    pub fn boundary_ratio(&self) -> f64 {
        let g = &self.grid;
        let peak = self.density.iter().copied().fold(0.0, f64::max);
        let mut edge: f64 = 0.0;
        for i in 0..g.n_x {
            edge = edge
                .max(self.at(i, 0).abs())
                .max(self.at(i, g.n_p - 1).abs());
        }
        for j in 0..g.n_p {
            edge = edge
                .max(self.at(0, j).abs())
                .max(self.at(g.n_x - 1, j).abs());
        }
        if peak > 0.0 {
            edge / peak
        } else {
            f64::INFINITY
        }
    }
}

/// Normalized product Gaussian sampled at cell centres.
pub fn fpe_init(
    grid: &PhaseGrid,
    x0: f64,
    p0_mean: f64,
    sigma_x: f64,
    sigma_p: f64,
) -> Result<FPEState> {
    grid.validate()?;
    if !(sigma_x >= 2.0 * grid.dx() && sigma_p >= 2.0 * grid.dp()) {
        return Err(CslError::GridResolution(format!(
            "initial widths ({sigma_x}, {sigma_p}) must be at least two cells ({}, {})",
            2.0 * grid.dx(),
            2.0 * grid.dp()
        )));
    }
    let mut density = Vec::with_capacity(grid.len());
    for i in 0..grid.n_x {
        let gx = (-0.5 * ((grid.x(i) - x0) / sigma_x).powi(2)).exp();
        for j in 0..grid.n_p {
            density.push(gx * (-0.5 * ((grid.p(j) - p0_mean) / sigma_p).powi(2)).exp());
        }
    }
    let norm = density.iter().sum::<f64>() * grid.dx() * grid.dp();
    density.iter_mut().for_each(|v| *v /= norm);
    let mut s = FPEState {
        grid: *grid,
        density,
        t: 0.0,
        mass: 0.0,
    };
    s.recompute_mass();
    Ok(s)
}

/// Drift and diffusion coefficients of the phase-space equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpeCoefficients {
    pub velocity: f64,
    pub dxx: f64,
    pub dpp: f64,
    pub dxp: f64,
}

impl FpeCoefficients {
    pub fn new(p: &PhysParams) -> Result<Self> {
        p.validate()?;
        let al = p.alpha * p.lambda;
        Ok(Self {
            velocity: p.p0 / p.mass,
            dxx: p.hbar / (2.0 * p.mass),
            dpp: p.hbar * p.hbar * al / 4.0,
            dxp: (p.hbar.powi(3) * al / (2.0 * p.mass)).sqrt(),
        })
    }
}

/// Largest time step accepted by [`fpe_step`].
///
/// The per-term limits (diffusion in x and p, advection, cross term) each
/// carry the 0.4 safety factor. Because the terms act together, the step is
/// further capped by the von Neumann bound of the combined stencil,
/// dt·(4Dxx/dx² + 4Dpp/dp² + |Dxp|/(dx dp)) ≤ 2, with the same factor.
pub fn max_stable_dt(grid: &PhaseGrid, coeffs: &FpeCoefficients) -> f64 {
    let (dx, dp) = (grid.dx(), grid.dp());
    let mut bound = f64::INFINITY;
    if coeffs.dxx > 0.0 {
        bound = bound.min(dx * dx / coeffs.dxx);
    }
    if coeffs.dpp > 0.0 {
        bound = bound.min(dp * dp / coeffs.dpp);
    }
    if coeffs.velocity != 0.0 {
        bound = bound.min(dx / coeffs.velocity.abs());
    }
    if coeffs.dxp > 0.0 {
        bound = bound.min(dx * dp / coeffs.dxp);
    }
    let spectral =
        4.0 * coeffs.dxx / (dx * dx) + 4.0 * coeffs.dpp / (dp * dp) + coeffs.dxp / (dx * dp);
    if spectral > 0.0 {
        bound = bound.min(2.0 / spectral);
    }
    STABILITY_FACTOR * bound
}

/// One forward-Euler step of the flux-form central scheme.
pub fn fpe_step(state: &FPEState, params: &PhysParams, dt: f64) -> Result<FPEState> {
    let coeffs = FpeCoefficients::new(params)?;
    step_with(state, &coeffs, dt)
}

fn step_with(state: &FPEState, c: &FpeCoefficients, dt: f64) -> Result<FPEState> {
    let limit = max_stable_dt(&state.grid, c);
    if !(dt > 0.0) || dt > limit {
        return Err(CslError::Unstable(format!(
            "dt = {dt} outside (0, {limit}] for this grid"
        )));
    }
    let g = &state.grid;
    let (nx, np) = (g.n_x, g.n_p);
    let (dx, dp) = (g.dx(), g.dp());
    let p = &state.density;
    let idx = |i: usize, j: usize| i * np + j;

    // Centred ∂ₚP with mirrored ghosts at the p boundaries.
    let mut dpdp = vec![0.0; nx * np];
    for i in 0..nx {
        for j in 0..np {
            let up = p[idx(i, (j + 1).min(np - 1))];
            let dn = p[idx(i, j.saturating_sub(1))];
            dpdp[idx(i, j)] = (up - dn) / (2.0 * dp);
        }
    }

    let mut out = p.clone();
    // x-faces: advection, x-diffusion and the cross term.
    for i in 0..nx - 1 {
        for j in 0..np {
            let (a, b) = (idx(i, j), idx(i + 1, j));
            let flux = -c.velocity * 0.5 * (p[a] + p[b])
                + c.dxx * (p[b] - p[a]) / dx
                + c.dxp * 0.5 * (dpdp[a] + dpdp[b]);
            let delta = dt * flux / dx;
            out[a] += delta;
            out[b] -= delta;
        }
    }
    // p-faces: momentum diffusion.
    if c.dpp > 0.0 {
        for i in 0..nx {
            for j in 0..np - 1 {
                let (a, b) = (idx(i, j), idx(i, j + 1));
                let delta = dt * c.dpp * (p[b] - p[a]) / (dp * dp);
                out[a] += delta;
                out[b] -= delta;
            }
        }
    }
    let mut next = FPEState {
        grid: *g,
        density: out,
        t: state.t + dt,
        mass: 0.0,
    };
    next.recompute_mass();
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMoments {
    pub t: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    pub mass: f64,
}

/// Midpoint-quadrature moments, normalized by the current mass.
pub fn fpe_moments(state: &FPEState) -> PhaseMoments {
    let g = &state.grid;
    let (mut m, mut sx, mut sp) = (0.0, 0.0, 0.0);
    for i in 0..g.n_x {
        let x = g.x(i);
        for j in 0..g.n_p {
            let w = state.at(i, j);
            m += w;
            sx += w * x;
            sp += w * g.p(j);
        }
    }
    let (mx, mp) = (sx / m, sp / m);
    let (mut vx, mut vp, mut cxp) = (0.0, 0.0, 0.0);
    for i in 0..g.n_x {
        let dx = g.x(i) - mx;
        for j in 0..g.n_p {
            let w = state.at(i, j);
            let dp = g.p(j) - mp;
            vx += w * dx * dx;
            vp += w * dp * dp;
            cxp += w * dx * dp;
        }
    }
    PhaseMoments {
        t: state.t,
        mean_x: mx,
        mean_p: mp,
        var_x: vx / m,
        var_p: vp / m,
        cov_xp: cxp / m,
        mass: m * g.dx() * g.dp(),
    }
}

/// Time history of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct FpeRun {
    pub final_state: FPEState,
    pub moments: Vec<PhaseMoments>,
    pub snapshots: Vec<FPEState>,
    pub dt: f64,
    pub max_mass_error: f64,
    pub min_density: f64,
    pub max_boundary_ratio: f64,
}

/// Integrates to `t_final` with the largest stable uniform step (or `dt`),
/// recording moments every `record_every` steps and snapshots every
/// `snapshot_every` steps (0 disables snapshots).
pub fn fpe_run(
    initial: &FPEState,
    params: &PhysParams,
    t_final: f64,
    dt: Option<f64>,
    record_every: usize,
    snapshot_every: usize,
) -> Result<FpeRun> {
    let coeffs = FpeCoefficients::new(params)?;
    if !(t_final > initial.t) {
        return Err(invalid("t_final must exceed the initial time"));
    }
    let span = t_final - initial.t;
    let dt_max = dt.unwrap_or_else(|| max_stable_dt(&initial.grid, &coeffs));
    let n_steps = (span / dt_max).ceil().max(1.0) as usize;
    let dt = span / n_steps as f64;
    let record_every = record_every.max(1);
    let mut state = initial.clone();
    let mut moments = vec![fpe_moments(&state)];
    let mut snapshots = Vec::new();
    if snapshot_every > 0 {
        snapshots.push(state.clone());
    }
    let mut max_mass_error = (state.mass - 1.0).abs();
    let mut min_density = state.min_density();
    let mut max_boundary_ratio = state.boundary_ratio();
    for k in 1..=n_steps {
        state = step_with(&state, &coeffs, dt)?;
        if k == n_steps {
            state.t = t_final;
        }
        max_mass_error = max_mass_error.max((state.mass - 1.0).abs());
        if k % record_every == 0 || k == n_steps {
            moments.push(fpe_moments(&state));
            min_density = min_density.min(state.min_density());
            max_boundary_ratio = max_boundary_ratio.max(state.boundary_ratio());
        }
        if snapshot_every > 0 && (k % snapshot_every == 0 || k == n_steps) {
            snapshots.push(state.clone());
        }
    }
    Ok(FpeRun {
        final_state: state,
        moments,
        snapshots,
        dt,
        max_mass_error,
        min_density,
        max_boundary_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramComparison {
    /// Σ |histogram mass − density mass| over bins, in [0, 2].
    pub l1_distance: f64,
    /// Same distance for the x and p marginals.
    pub per_marginal_l1: [f64; 2],
    /// Sample weight falling outside the grid.
    pub outside_weight: f64,
    pub bins: [usize; 2],
}

/// L1 distance between weighted samples `(x, p, w)` (weights summing to 1)
/// and the density, on bins of `block × block` solver cells.
pub fn compare_weighted(
    samples: &[(f64, f64, f64)],
    state: &FPEState,
    block: usize,
) -> Result<HistogramComparison> {
    let g = &state.grid;
    if block == 0 || !g.n_x.is_multiple_of(block) || !g.n_p.is_multiple_of(block) {
        return Err(CslError::Alignment(format!(
            "bin block {block} does not divide the {}x{} grid",
            g.n_x, g.n_p
        )));
    }
    let (bx, bp) = (g.n_x / block, g.n_p / block);
    let cell = g.dx() * g.dp();
    let mut model = vec![0.0; bx * bp];
    for i in 0..g.n_x {
        for j in 0..g.n_p {
            model[(i / block) * bp + j / block] += state.at(i, j) * cell;
        }
    }
    let mut hist = vec![0.0; bx * bp];
    let mut outside = 0.0;
    for &(x, p, w) in samples {
        let fi = ((x - g.x_min) / g.dx()).floor();
        let fj = ((p - g.p_min) / g.dp()).floor();
        if fi < 0.0
            || fj < 0.0
            || fi >= g.n_x as f64
            || fj >= g.n_p as f64
            || !fi.is_finite()
            || !fj.is_finite()
        {
            outside += w;
            continue;
        }
        hist[(fi as usize / block) * bp + fj as usize / block] += w;
    }
    let l1 = hist
        .iter()
        .zip(&model)
        .map(|(h, m)| (h - m).abs())
        .sum::<f64>()
        + outside;
    let marginal = |axis: usize| -> f64 {
        let n = if axis == 0 { bx } else { bp };
        let mut h = vec![0.0; n];
        let mut m = vec![0.0; n];
        for a in 0..bx {
            for b in 0..bp {
                let k = if axis == 0 { a } else { b };
                h[k] += hist[a * bp + b];
                m[k] += model[a * bp + b];
            }
        }
        h.iter().zip(&m).map(|(h, m)| (h - m).abs()).sum::<f64>() + outside
    };
    Ok(HistogramComparison {
        l1_distance: l1,
        per_marginal_l1: [marginal(0), marginal(1)],
        outside_weight: outside,
        bins: [bx, bp],
    })
}

/// L1 distance between an equally weighted Monte Carlo sample and the density.
pub fn compare_histogram(
    mc: &[(f64, f64)],
    state: &FPEState,
    block: usize,
) -> Result<HistogramComparison> {
    if mc.is_empty() {
        return Err(CslError::InsufficientData(
            "empty Monte Carlo sample".into(),
        ));
    }
    let w = 1.0 / mc.len() as f64;
    let samples: Vec<(f64, f64, f64)> = mc.iter().map(|&(x, p)| (x, p, w)).collect();
    compare_weighted(&samples, state, block)
}

/// Draws `n` points from the discrete density (cell-uniform within cells).
pub fn sample_density(state: &FPEState, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let g = &state.grid;
    let mut cdf = Vec::with_capacity(state.density.len());
    let mut acc = 0.0;
    for v in &state.density {
        acc += v.max(0.0);
        cdf.push(acc);
    }
    let stream = NoiseStream::new(SeedPolicy::new(seed, 0), NoiseRole::Initial);
    (0..n as u64)
        .map(|k| {
            let u = stream.uniform(k, 0) * acc;
            let c = cdf.partition_point(|v| *v <= u).min(cdf.len() - 1);
            let (i, j) = (c / g.n_p, c % g.n_p);
            let x = g.x_min + (i as f64 + stream.uniform(k, 1)) * g.dx();
            let p = g.p_min + (j as f64 + stream.uniform(k, 2)) * g.dp();
            (x, p)
        })
        .collect()
}

/// Expected L1 distance from finite sampling alone: compares `n` points
/// drawn from the density itself against that density.
pub fn self_consistency_l1(state: &FPEState, n: usize, block: usize, seed: u64) -> Result<f64> {
    Ok(compare_histogram(&sample_density(state, n, seed), state, block)?.l1_distance)
}

/// Product-Gaussian initial state propagated analytically: mean and
/// covariance of the exact solution at time `t` for a point-free Gaussian
/// start, evaluated at cell centres.
pub fn exact_gaussian(
    grid: &PhaseGrid,
    params: &PhysParams,
    init: (f64, f64, f64, f64),
    t: f64,
) -> Result<FPEState> {
    let c = FpeCoefficients::new(params)?;
    let (x0, p0, sx, sp) = init;
    let mx = x0 + c.velocity * t;
    let vxx = sx * sx + 2.0 * c.dxx * t;
    let vpp = sp * sp + 2.0 * c.dpp * t;
    let vxp = c.dxp * t;
    let det = vxx * vpp - vxp * vxp;
    if !(det > 0.0) {
        return Err(invalid("degenerate covariance"));
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let mut density = Vec::with_capacity(grid.len());
    for i in 0..grid.n_x {
        let dx = grid.x(i) - mx;
        for j in 0..grid.n_p {
            let dp = grid.p(j) - p0;
            let q = (vpp * dx * dx - 2.0 * vxp * dx * dp + vxx * dp * dp) / det;
            density.push(norm * (-0.5 * q).exp());
        }
    }
    let mut s = FPEState {
        grid: *grid,
        density,
        t,
        mass: 0.0,
    };
    s.recompute_mass();
    Ok(s)
}

/// Σ |a − b| dx dp between two states on the same grid.
pub fn l1_between(a: &FPEState, b: &FPEState) -> Result<f64> {
    if a.grid != b.grid {
        return Err(CslError::Alignment("states live on different grids".into()));
    }
    Ok(a.density
        .iter()
        .zip(&b.density)
        .map(|(u, v)| (u - v).abs())
        .sum::<f64>()
        * a.grid.dx()
        * a.grid.dp())
}
