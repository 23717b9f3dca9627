//! Euler–Maruyama integration of the beable position/momentum equations over
//! trajectory ensembles.
//!
//! Three modes share one update rule and differ only in where the
//! localization-field increment comes from:
//!
//! * `FullField` convolves an explicit space-time noise field against the
//!   kernel gradient at the walker position;
//! * `Effective` replaces that convolution by a scalar noise with the same
//!   variance rate;
//! * `MarkovianOnly` drops the field term and keeps the shared dw noise.
//!
//! Trajectory `i` draws every random number from streams keyed by
//! `(seed, i, role)`, and moment sums are merged in trajectory order, so a
//! run is bit-reproducible regardless of the worker count.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CslError, Result};
use crate::estimators::{EnsembleMoments, MomentRow};
use crate::kernel::{gradient_square_integral, gradient_window, SpatialGrid, WINDOW_WIDTHS};
use crate::noise::{Increments, NoiseKind, NoiseRole, NoiseSpec, NoiseStream, SeedPolicy};
use crate::params::{analytic_rates, PhysParams};

/// Largest fraction of diverged trajectories a run tolerates.
pub const MAX_DIVERGED_FRACTION: f64 = 1e-3;

/// Trajectories per accumulation chunk.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    FullField,
    Effective,
    MarkovianOnly,
}

/// Where the kernel gradient inside the field time integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEvaluation {
    /// At the position held when each increment is drawn; the integral is
    /// accumulated as a scalar.
    Frozen,
    /// Re-summed against the current position every step. O(step) work per
    /// step; meant for small sensitivity studies.
    Reconvolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub x0: f64,
    pub p_mean: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            x0: 0.0,
            p_mean: 0.0,
            sigma_x: 0.0,
            sigma_p: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(skip)]
    pub params: PhysParams,
    #[serde(skip)]
    pub seed: u64,
    pub mode: SimMode,
    pub n_trajectories: usize,
    pub n_steps: usize,
    pub dt: f64,
    /// Moments are recorded every this many steps (plus t = 0).
    pub output_every: usize,
    pub noise_db: NoiseSpec,
    pub noise_dw: NoiseSpec,
    pub field_evaluation: FieldEvaluation,
    /// Field grid for `FullField`; derived from the expected spread when absent.
    pub grid: Option<SpatialGrid>,
    /// Cells per kernel width 1/sqrt(alpha) for the derived grid.
    pub cells_per_width: f64,
    pub initial: InitialSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: PhysParams::default(),
            seed: 0,
            mode: SimMode::Effective,
            n_trajectories: 10_000,
            n_steps: 2000,
            dt: 1e-3,
            output_every: 20,
            noise_db: NoiseSpec::white(),
            noise_dw: NoiseSpec::white(),
            field_evaluation: FieldEvaluation::Frozen,
            grid: None,
            cells_per_width: 20.0,
            initial: InitialSpec::default(),
        }
    }
}

impl SimConfig {
    pub fn t_max(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Same configuration with the localization switched off.
    pub fn baseline(&self) -> Self {
        let mut cfg = self.clone();
        cfg.params.lambda = 0.0;
        cfg
    }

    /// Step indices (0 included) at which moments are recorded.
    pub fn output_steps(&self) -> Vec<usize> {
        (0..=self.n_steps)
            .step_by(self.output_every.max(1))
            .collect()
    }

    /// Field grid: explicit, or wide enough for ten standard deviations of
    /// the expected position spread plus the convolution window.
    pub fn resolved_grid(&self) -> Result<SpatialGrid> {
        if let Some(g) = self.grid {
            return Ok(g);
        }
        let p = &self.params;
        let rates = analytic_rates(p)?;
        let t = self.t_max();
        let a_db = self.noise_db.exponent();
        let a_dw = self.noise_dw.exponent();
        let spread = self.initial.sigma_x.powi(2)
            + rates.x_var_rate * t.max(t.powf(a_dw))
            + 3.0 * rates.msd_cubic_coeff * t.powf(a_db + 2.0);
        let width = 1.0 / p.alpha.sqrt();
        let half = (p.p0 / p.mass).abs() * t + 10.0 * spread.sqrt() + (WINDOW_WIDTHS + 2.0) * width;
        SpatialGrid::centered(self.initial.x0, half, width / self.cells_per_width)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.noise_db.validate()?;
        self.noise_dw.validate()?;
        if self.n_trajectories < 2 {
            return Err(invalid("n_trajectories must be at least 2"));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.output_every == 0 || self.output_every > self.n_steps {
            return Err(invalid("output_every must lie in 1..=n_steps"));
        }
        let i = &self.initial;
        if !(i.sigma_x >= 0.0 && i.sigma_p >= 0.0 && i.x0.is_finite() && i.p_mean.is_finite()) {
            return Err(invalid("initial spreads must be non-negative and finite"));
        }
        if self.mode == SimMode::FullField {
            if !(self.cells_per_width >= 5.0) {
                return Err(invalid("cells_per_width must be at least 5"));
            }
            let grid = self.resolved_grid()?;
            grid.validate_for_kernel(self.params.alpha)?;
            let drift = (self.params.p0 / self.params.mass).abs() * self.dt;
            if drift >= grid.dq() {
                return Err(invalid(format!(
                    "per-step drift {drift} is not below the field spacing {}",
                    grid.dq()
                )));
            }
            if self.noise_db.kind == NoiseKind::Affine
                && self.n_steps > crate::noise::CHOLESKY_MAX_STEPS
            {
                return Err(CslError::Config(format!(
                    "affine field noise needs n_steps <= {}",
                    crate::noise::CHOLESKY_MAX_STEPS
                )));
            }
        }
        Ok(())
    }
}

/// Phase-space state of one walker plus the accumulated field integral.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub x: f64,
    pub p: f64,
    /// Running value of ∫∫ dq dB(q,t') ∂G/∂x.
    pub y: f64,
    pub t: f64,
}

impl TrajectoryState {
    pub fn at(x: f64, p: f64) -> Self {
        Self {
            x,
            p,
            y: 0.0,
            t: 0.0,
        }
    }

    fn check(self) -> Result<Self> {
        if self.x.is_finite() && self.p.is_finite() && self.y.is_finite() {
            Ok(self)
        } else {
            Err(CslError::Diverged(format!(
                "non-finite state x={} p={} y={} at t={}",
                self.x, self.p, self.y, self.t
            )))
        }
    }
}

/// Step coefficients derived from the physical parameters.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    velocity: f64,
    position_noise: f64,
    field_gain: f64,
    momentum_noise: f64,
    /// sqrt(∫ (∂G/∂x)² dq): scale of the reduced scalar field noise.
    field_scale: f64,
}

impl Coefficients {
    fn new(p: &PhysParams) -> Self {
        Self {
            velocity: p.p0 / p.mass,
            position_noise: p.position_noise(),
            field_gain: 2.0 * p.nu() * p.gamma().sqrt(),
            momentum_noise: p.momentum_noise(),
            field_scale: gradient_square_integral(p.alpha).sqrt(),
        }
    }

    #[inline]
    fn advance(
        &self,
        s: &TrajectoryState,
        y_next: f64,
        dt: f64,
        dw: f64,
    ) -> Result<TrajectoryState> {
        TrajectoryState {
            x: s.x + self.velocity * dt + self.field_gain * y_next * dt + self.position_noise * dw,
            p: s.p + self.momentum_noise * dw,
            y: y_next,
            t: s.t + dt,
        }
        .check()
    }
}

/// One step with an explicit field slice covering the whole grid.
pub fn step_full(
    state: &TrajectoryState,
    params: &PhysParams,
    grid: &SpatialGrid,
    dt: f64,
    db_field: &[f64],
    dw: f64,
) -> Result<TrajectoryState> {
    let dy = crate::kernel::convolve_gradient(db_field, grid, params.alpha, state.x)?;
    Coefficients::new(params).advance(state, state.y + dy, dt, dw)
}

/// One step of the reduced dynamics; `dxi` is a unit-rate scalar increment.
pub fn step_effective(
    state: &TrajectoryState,
    params: &PhysParams,
    dt: f64,
    dxi: f64,
    dw: f64,
) -> Result<TrajectoryState> {
    let c = Coefficients::new(params);
    c.advance(state, state.y + c.field_scale * dxi, dt, dw)
}

/// One step of the Markovian subsystem (field term omitted).
pub fn step_markovian(
    state: &TrajectoryState,
    params: &PhysParams,
    dt: f64,
    dw: f64,
) -> Result<TrajectoryState> {
    let c = Coefficients {
        field_gain: 0.0,
        ..Coefficients::new(params)
    };
    c.advance(state, 0.0, dt, dw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub trajectory: u64,
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub moments: EnsembleMoments,
    pub diverged: Vec<DivergenceRecord>,
}

/// Power sums about a deterministic centre, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct MomentSums {
    n: u64,
    x: [f64; 4],
    p: [f64; 4],
    xp: f64,
}

impl MomentSums {
    #[inline]
    fn add(&mut self, dx: f64, dp: f64) {
        self.n += 1;
        let (mut ax, mut ap) = (dx, dp);
        for k in 0..4 {
            self.x[k] += ax;
            self.p[k] += ap;
            ax *= dx;
            ap *= dp;
        }
        self.xp += dx * dp;
    }

    fn merge(&mut self, o: &MomentSums) {
        self.n += o.n;
        for k in 0..4 {
            self.x[k] += o.x[k];
            self.p[k] += o.p[k];
        }
        self.xp += o.xp;
    }

    /// (mean offset, unbiased variance, standard error of the variance).
    fn central(s: &[f64; 4], n: f64) -> (f64, f64, f64) {
        let m1 = s[0] / n;
        let r2 = s[1] / n;
        let r3 = s[2] / n;
        let r4 = s[3] / n;
        let m2 = (r2 - m1 * m1).max(0.0);
        let m4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
        let var = m2 * n / (n - 1.0);
        let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
        (m1, var, se)
    }

    fn row(&self, t: f64, cx: f64, cp: f64) -> MomentRow {
        let n = self.n as f64;
        if self.n < 2 {
            return MomentRow {
                t,
                mean_x: f64::NAN,
                var_x: 0.0,
                mean_p: f64::NAN,
                var_p: 0.0,
                cov_xp: 0.0,
                se_var_x: f64::NAN,
                se_var_p: f64::NAN,
                n_alive: self.n as usize,
            };
        }
        let (mx, var_x, se_x) = Self::central(&self.x, n);
        let (mp, var_p, se_p) = Self::central(&self.p, n);
        let bound = (var_x * var_p).sqrt();
        let cov = ((self.xp / n - mx * mp) * n / (n - 1.0)).clamp(-bound, bound);
        MomentRow {
            t,
            mean_x: cx + mx,
            var_x,
            mean_p: cp + mp,
            var_p,
            cov_xp: cov,
            se_var_x: se_x,
            se_var_p: se_p,
            n_alive: self.n as usize,
        }
    }
}

/// Shared, immutable run context.
struct Runner<'a> {
    cfg: &'a SimConfig,
    coeffs: Coefficients,
    db: Increments,
    dw: Increments,
    grid: Option<SpatialGrid>,
    outputs: Vec<usize>,
}

struct Trajectory {
    /// (x, p) at each recorded output reached before any divergence.
    samples: Vec<(f64, f64)>,
    diverged: Option<DivergenceRecord>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let field_active = cfg.mode != SimMode::MarkovianOnly && cfg.params.lambda > 0.0;
        let grid = if cfg.mode == SimMode::FullField {
            Some(cfg.resolved_grid()?)
        } else {
            None
        };
        let db = if field_active {
            Increments::new(&cfg.noise_db, cfg.n_steps, cfg.dt)?
        } else {
            Increments::White { scale: 0.0 }
        };
        Ok(Self {
            cfg,
            coeffs: Coefficients::new(&cfg.params),
            db,
            dw: Increments::new(&cfg.noise_dw, cfg.n_steps, cfg.dt)?,
            grid,
            outputs: cfg.output_steps(),
        })
    }

    fn field_active(&self) -> bool {
        self.cfg.mode != SimMode::MarkovianOnly && self.cfg.params.lambda > 0.0
    }

    fn run(&self, index: u64) -> Trajectory {
        let cfg = self.cfg;
        let seed = SeedPolicy::new(cfg.seed, index);
        let init = NoiseStream::new(seed, NoiseRole::Initial);
        let field = NoiseStream::new(seed, NoiseRole::Field);
        let dw = self
            .dw
            .path(&NoiseStream::new(seed, NoiseRole::Dw), cfg.n_steps);
        let dxi = if cfg.mode == SimMode::Effective && self.field_active() {
            self.db.path(&field, cfg.n_steps)
        } else {
            Vec::new()
        };

        let mut state = TrajectoryState::at(
            cfg.initial.x0 + cfg.initial.sigma_x * init.normal(0, 0),
            cfg.initial.p_mean + cfg.initial.sigma_p * init.normal(0, 1),
        );
        let mut samples = Vec::with_capacity(self.outputs.len());
        samples.push((state.x, state.p));
        let mut next_out = 1;
        let mut weights = Vec::new();
        let mut buf = Vec::new();
        let c = if self.field_active() {
            self.coeffs
        } else {
            Coefficients {
                field_gain: 0.0,
                ..self.coeffs
            }
        };

        for step in 0..cfg.n_steps {
            let y_next = if !self.field_active() {
                0.0
            } else {
                match cfg.mode {
                    SimMode::Effective => state.y + c.field_scale * dxi[step],
                    SimMode::FullField => {
                        match self.field_term(&field, step, state, &mut weights, &mut buf) {
                            Ok(v) => v,
                            Err(e) => {
                                return Trajectory {
                                    samples,
                                    diverged: Some(DivergenceRecord {
                                        trajectory: index,
                                        step,
                                        reason: e.to_string(),
                                    }),
                                }
                            }
                        }
                    }
                    SimMode::MarkovianOnly => 0.0,
                }
            };
            state = match c.advance(&state, y_next, cfg.dt, dw[step]) {
                Ok(mut s) => {
                    s.t = (step + 1) as f64 * cfg.dt;
                    s
                }
                Err(e) => {
                    return Trajectory {
                        samples,
                        diverged: Some(DivergenceRecord {
                            trajectory: index,
                            step,
                            reason: e.to_string(),
                        }),
                    }
                }
            };
            if next_out < self.outputs.len() && self.outputs[next_out] == step + 1 {
                samples.push((state.x, state.p));
                next_out += 1;
            }
        }
        Trajectory {
            samples,
            diverged: None,
        }
    }

    /// New value of the accumulated field integral after `step`.
    fn field_term(
        &self,
        stream: &NoiseStream,
        step: usize,
        state: TrajectoryState,
        weights: &mut Vec<f64>,
        buf: &mut Vec<f64>,
    ) -> Result<f64> {
        let grid = self.grid.as_ref().expect("full-field runner has a grid");
        let start = gradient_window(grid, self.cfg.params.alpha, state.x, weights)?;
        let sqrt_dq = grid.dq().sqrt();
        let slice_sum = |row: usize, buf: &mut Vec<f64>| -> f64 {
            match &self.db {
                Increments::White { scale } => {
                    buf.resize(weights.len(), 0.0);
                    stream.fill_row(row as u64, start as u64, buf);
                    scale
                        * sqrt_dq
                        * weights
                            .iter()
                            .zip(buf.iter())
                            .map(|(w, z)| w * z)
                            .sum::<f64>()
                }
                inc => {
                    sqrt_dq
                        * weights
                            .iter()
                            .enumerate()
                            .map(|(k, w)| w * inc.cell_increment(stream, row, (start + k) as u64))
                            .sum::<f64>()
                }
            }
        };
        match self.cfg.field_evaluation {
            FieldEvaluation::Frozen => Ok(state.y + slice_sum(step, buf)),
            FieldEvaluation::Reconvolve => Ok((0..=step).map(|row| slice_sum(row, buf)).sum()),
        }
    }

    fn output_centres(&self, out: usize) -> (f64, f64, f64) {
        let cfg = self.cfg;
        let t = self.outputs[out] as f64 * cfg.dt;
        (
            t,
            cfg.initial.x0 + self.coeffs.velocity * t,
            cfg.initial.p_mean,
        )
    }

    fn chunk(&self, range: std::ops::Range<u64>) -> (Vec<MomentSums>, Vec<DivergenceRecord>) {
        let mut sums = vec![MomentSums::default(); self.outputs.len()];
        let mut diverged = Vec::new();
        let centres: Vec<(f64, f64, f64)> = (0..self.outputs.len())
            .map(|o| self.output_centres(o))
            .collect();
        for idx in range {
            let traj = self.run(idx);
            for (o, (x, p)) in traj.samples.iter().enumerate() {
                let (_, cx, cp) = centres[o];
                sums[o].add(x - cx, p - cp);
            }
            diverged.extend(traj.diverged);
        }
        (sums, diverged)
    }
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<u64>> {
    (0..n)
        .step_by(CHUNK)
        .map(|s| s as u64..(s + CHUNK).min(n) as u64)
        .collect()
}

/// Maps `f` over `items` on `workers` threads (0 = all cores), preserving order.
pub(crate) fn ordered_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if workers != 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| CslError::Config(format!("thread pool: {e}")))?;
            return Ok(pool.install(|| items.into_par_iter().map(&f).collect()));
        }
    }
    let _ = workers;
    Ok(items.into_iter().map(f).collect())
}

fn check_divergence(diverged: &[DivergenceRecord], n: usize) -> Result<()> {
    if diverged.len() as f64 > MAX_DIVERGED_FRACTION * n as f64 {
        let first = &diverged[0];
        return Err(CslError::Diverged(format!(
            "{} of {} trajectories diverged (first: #{} at step {}: {})",
            diverged.len(),
            n,
            first.trajectory,
            first.step,
            first.reason
        )));
    }
    Ok(())
}

/// Runs the ensemble and records moments at every output time.
///
/// `workers` = 0 uses every available core. Results do not depend on it.
pub fn simulate_ensemble(cfg: &SimConfig, workers: usize) -> Result<SimOutput> {
    let runner = Runner::new(cfg)?;
    let parts = ordered_map(chunk_ranges(cfg.n_trajectories), workers, |r| {
        runner.chunk(r)
    })?;
    let mut total = vec![MomentSums::default(); runner.outputs.len()];
    let mut diverged = Vec::new();
    for (sums, div) in parts {
        for (t, s) in total.iter_mut().zip(&sums) {
            t.merge(s);
        }
        diverged.extend(div);
    }
    check_divergence(&diverged, cfg.n_trajectories)?;
    let rows = total
        .iter()
        .enumerate()
        .map(|(o, s)| {
            let (t, cx, cp) = runner.output_centres(o);
            s.row(t, cx, cp)
        })
        .collect();
    Ok(SimOutput {
        moments: EnsembleMoments { rows },
        diverged,
    })
}

/// Same ensemble with the localization switched off (λ = 0) and the same
/// seeds, so the dw noise is shared with the paired full run.
pub fn schrodinger_baseline(cfg: &SimConfig, workers: usize) -> Result<SimOutput> {
    simulate_ensemble(&cfg.baseline(), workers)
}

/// Final (x, p) of every non-diverged trajectory, in trajectory order.
pub fn simulate_endpoints(cfg: &SimConfig, workers: usize) -> Result<Vec<(f64, f64)>> {
    let runner = Runner::new(cfg)?;
    let n_out = runner.outputs.len();
    let parts = ordered_map(chunk_ranges(cfg.n_trajectories), workers, |r| {
        r.map(|i| runner.run(i)).collect::<Vec<_>>()
    })?;
    let mut points = Vec::with_capacity(cfg.n_trajectories);
    let mut diverged = Vec::new();
    for traj in parts.into_iter().flatten() {
        match traj.diverged {
            Some(d) => diverged.push(d),
            None if traj.samples.len() == n_out => points.push(*traj.samples.last().unwrap()),
            None => {}
        }
    }
    check_divergence(&diverged, cfg.n_trajectories)?;
    Ok(points)
}
