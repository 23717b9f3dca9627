//! End-to-end acceptance checks. Each test prints one PASS/FAIL line per
//! criterion and then asserts on it. Run with `--nocapture` to see them.

use std::sync::OnceLock;

use csl_diffusion::config::ExperimentConfig;
use csl_diffusion::dynamics::{
    simulate_endpoints, simulate_ensemble, InitialSpec, SimConfig, SimMode,
};
use csl_diffusion::estimators::{
    excess_moments, excess_p_series, excess_x_series, fit_power_law, intermittency_exponent,
    predicted_exponents, ExcessPoint, FitResult, SeriesPoint,
};
use csl_diffusion::fokker_planck::{compare_histogram, fpe_init, fpe_run, PhaseGrid};
use csl_diffusion::kernel::{gaussian_kernel, gradient_square_integral, kernel_gradient};
use csl_diffusion::noise::{Increments, NoiseRole, NoiseSpec, NoiseStream, SeedPolicy};
use csl_diffusion::pipeline::{max_agreement_sigma, noise_variance, noise_verdict};
use csl_diffusion::{analytic_rates, mean_energy_input, PhysParams};

const SEED: u64 = 20240601;

// Criteria 1-4.
const X_EXPONENT: (f64, f64) = (3.0, 0.15);
const X_AMPLITUDE: (f64, f64) = (1.0, 0.10);
const P_EXPONENT: (f64, f64) = (1.0, 0.05);
const P_AMPLITUDE: (f64, f64) = (3.0, 0.15);
const FIELD_AGREEMENT_SIGMAS: f64 = 3.0;
// Criterion 5.
const FPE_RATE_REL: f64 = 0.02;
const FPE_MASS: f64 = 1e-6;
const FPE_L1: f64 = 0.05;
const HISTOGRAM_BLOCK: usize = 8;
// Criterion 6.
const AFFINE_A: f64 = 1.5;
const AFFINE_X: (f64, f64) = (3.5, 0.2);
const AFFINE_P: (f64, f64) = (1.5, 0.1);
const NOISE_SLOPE_TOL: f64 = 0.05;
// Criterion 8.
const KERNEL_MASS_TOL: f64 = 1e-6;
const GRADIENT_SQUARE_REL: f64 = 0.01;
const KS_LEVEL: f64 = 1e-3;
const KS_SAMPLES: usize = 100_000;
const FBM_STEPS: usize = 2048;
const FBM_REALIZATIONS: usize = 10_000;
const FBM_SIGMAS: f64 = 4.0;

struct Checks {
    criterion: u32,
    failures: Vec<String>,
}

impl Checks {
    fn new(criterion: u32) -> Self {
        Self {
            criterion,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!(
            "criterion {} {}: {name}: {detail}",
            self.criterion,
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            self.failures.push(format!("{name}: {detail}"));
        }
    }

    fn near(&mut self, name: &str, measured: f64, (target, tol): (f64, f64)) {
        let pass = (measured - target).abs() <= tol;
        self.record(
            name,
            pass,
            format!("measured {measured:.6}, target {target} ± {tol}"),
        );
    }

    fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "criterion {} failed: {:?}",
            self.criterion,
            self.failures
        );
    }
}

fn desk_params() -> PhysParams {
    PhysParams::new(1.0, 1.0, 6.0, 1.0).unwrap()
}

fn desk_sim(mode: SimMode, n: usize) -> SimConfig {
    SimConfig {
        params: desk_params(),
        seed: SEED,
        mode,
        n_trajectories: n,
        n_steps: 2000,
        dt: 1e-3,
        output_every: 20,
        ..SimConfig::default()
    }
}

struct Paired {
    excess: Vec<ExcessPoint>,
    x: FitResult,
    p: FitResult,
}

fn paired(cfg: &SimConfig) -> Paired {
    let full = simulate_ensemble(cfg, 0).unwrap().moments;
    let base = simulate_ensemble(&cfg.baseline(), 0).unwrap().moments;
    let excess = excess_moments(&full, &base).unwrap();
    Paired {
        x: fit_power_law(&excess_x_series(&excess), None).unwrap(),
        p: fit_power_law(&excess_p_series(&excess), None).unwrap(),
        excess,
    }
}

fn effective() -> &'static Paired {
    static RUN: OnceLock<Paired> = OnceLock::new();
    RUN.get_or_init(|| paired(&desk_sim(SimMode::Effective, 10_000)))
}

#[test]
fn criterion_1_cubic_position_law() {
    let run = effective();
    let mut c = Checks::new(1);
    c.near("excess <x^2> exponent", run.x.exponent, X_EXPONENT);
    c.near("excess <x^2> amplitude", run.x.amplitude, X_AMPLITUDE);
    let coeff = analytic_rates(&desk_params()).unwrap().msd_cubic_coeff;
    c.near("closed-form t^3 coefficient", coeff, (1.0, 1e-12));
    c.finish();
}

#[test]
fn criterion_2_momentum_heating() {
    let run = effective();
    let mut c = Checks::new(2);
    c.near("excess <p^2> exponent", run.p.exponent, P_EXPONENT);
    c.near("excess <p^2> amplitude", run.p.amplitude, P_AMPLITUDE);
    c.finish();
}

#[test]
fn criterion_3_full_field_equivalence() {
    let mut cfg = desk_sim(SimMode::FullField, 10_000);
    // dq = 0.05 / sqrt(alpha).
    cfg.cells_per_width = 20.0;
    let grid = cfg.resolved_grid().unwrap();
    let field = paired(&cfg);
    let mut c = Checks::new(3);
    c.near(
        "grid spacing × sqrt(alpha)",
        grid.dq() * 6.0f64.sqrt(),
        (0.05, 1e-12),
    );
    c.near(
        "full-field excess <x^2> exponent",
        field.x.exponent,
        X_EXPONENT,
    );
    c.near(
        "full-field excess <x^2> amplitude",
        field.x.amplitude,
        X_AMPLITUDE,
    );
    let z = max_agreement_sigma(&field.excess, &effective().excess).unwrap();
    c.record(
        "pointwise agreement with effective mode",
        z <= FIELD_AGREEMENT_SIGMAS,
        format!("max deviation {z:.3} combined SE, limit {FIELD_AGREEMENT_SIGMAS}"),
    );
    c.finish();
}

#[test]
fn criterion_4_energy_input_identity() {
    let run = effective();
    let energy = mean_energy_input(&desk_params()).unwrap();
    let mut c = Checks::new(4);
    c.near(
        "energy input vs fitted amplitude",
        energy,
        (run.x.amplitude, X_AMPLITUDE.1 * run.x.amplitude),
    );
    c.finish();
}

#[test]
fn criterion_5_fokker_planck_fidelity() {
    let params = PhysParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
    let (sx, sp, t_final) = (0.5, 0.5, 1.0);
    let cfg = csl_diffusion::config::FpeConfig {
        sigma_x: sx,
        sigma_p: sp,
        t_final,
        ..Default::default()
    };
    let grid: PhaseGrid = cfg.resolved_grid(&params).unwrap();
    assert_eq!((grid.n_x, grid.n_p), (256, 256));
    let init = fpe_init(&grid, 0.0, 0.0, sx, sp).unwrap();
    let run = fpe_run(&init, &params, t_final, None, 0, 0).unwrap();
    let (a, b) = (run.moments.first().unwrap(), run.moments.last().unwrap());
    let span = b.t - a.t;
    let rates = [
        (b.var_x - a.var_x) / span,
        (b.var_p - a.var_p) / span,
        (b.cov_xp - a.cov_xp) / span,
    ];
    let mut c = Checks::new(5);
    for (name, r) in ["var_x", "var_p", "cov_xp"].iter().zip(rates) {
        c.near(&format!("{name} rate"), r, (1.0, FPE_RATE_REL));
    }
    c.record(
        "mass conservation",
        run.max_mass_error <= FPE_MASS,
        format!(
            "max |mass - 1| = {:.3e}, limit {FPE_MASS:e}",
            run.max_mass_error
        ),
    );
    let mc = SimConfig {
        params,
        seed: SEED,
        mode: SimMode::MarkovianOnly,
        n_trajectories: 100_000,
        n_steps: 100,
        dt: 0.01,
        output_every: 100,
        initial: InitialSpec {
            x0: 0.0,
            p_mean: 0.0,
            sigma_x: sx,
            sigma_p: sp,
        },
        ..SimConfig::default()
    };
    let points = simulate_endpoints(&mc, 0).unwrap();
    let h = compare_histogram(&points, &run.final_state, HISTOGRAM_BLOCK).unwrap();
    c.record(
        "L1 to Monte Carlo histogram",
        h.l1_distance <= FPE_L1,
        format!(
            "{:.4} on {}x{} bins, limit {FPE_L1}",
            h.l1_distance, h.bins[0], h.bins[1]
        ),
    );
    c.finish();
}

#[test]
fn criterion_6_affine_noise_exponents() {
    let spec = NoiseSpec::affine(AFFINE_A).unwrap();
    let mut cfg = desk_sim(SimMode::Effective, 10_000);
    cfg.noise_db = spec;
    cfg.noise_dw = spec;
    let run = paired(&cfg);
    let predicted = predicted_exponents(AFFINE_A).unwrap();
    let mut c = Checks::new(6);
    c.near(
        "predicted x exponent",
        predicted.x2_exponent,
        (AFFINE_X.0, 0.0),
    );
    c.near(
        "predicted p exponent",
        predicted.p2_exponent,
        (AFFINE_P.0, 0.0),
    );
    c.near("affine excess <x^2> exponent", run.x.exponent, AFFINE_X);
    c.near("affine excess <p^2> exponent", run.p.exponent, AFFINE_P);
    for a in [0.5, 1.0, 1.5, 2.0] {
        let var = noise_variance(a, 10_000, 1000, 1e-3, SEED, 0).unwrap();
        let v = noise_verdict(a, &var, 1e-3, 10_000).unwrap();
        c.near(
            &format!("Var(B(t)) slope at A={a}"),
            v.slope,
            (a, NOISE_SLOPE_TOL),
        );
    }
    c.finish();
}

#[test]
fn criterion_7_intermittency_map() {
    let mut c = Checks::new(7);
    let a = intermittency_exponent(3.0, 2.0).unwrap();
    c.record("A(E=3, df=2) = 2 exactly", a == 2.0, format!("{a}"));
    let white = intermittency_exponent(3.0, 3.0).unwrap();
    c.record(
        "white limit A(E=3, df=3) = 1",
        white == 1.0,
        format!("{white}"),
    );
    let p = predicted_exponents(white).unwrap();
    c.record(
        "A=1 recovers the (3, 1) growth laws",
        p.x2_exponent == 3.0 && p.p2_exponent == 1.0,
        format!("({}, {})", p.x2_exponent, p.p2_exponent),
    );
    c.finish();
}

fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Paths of `noise` for realizations `0..n`, split across threads.
fn paths(
    noise: &Increments,
    n_steps: usize,
    n: usize,
    seed: u64,
    role: NoiseRole,
) -> Vec<Vec<f64>> {
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let per = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                s.spawn(move || {
                    (k * per..((k + 1) * per).min(n))
                        .map(|i| {
                            noise.path(
                                &NoiseStream::new(SeedPolicy::new(seed, i as u64), role),
                                n_steps,
                            )
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect()
    })
}

#[test]
fn criterion_8_property_suites() {
    let mut c = Checks::new(8);

    for alpha in [1.0f64, 6.0, 40.0] {
        let w = 12.0 / alpha.sqrt();
        let mass = trapezoid(|x| gaussian_kernel(alpha, x), -w, w, 20_000);
        c.near(
            &format!("kernel mass at alpha={alpha}"),
            mass,
            (1.0, KERNEL_MASS_TOL),
        );
        let closed = alpha.powf(1.5) / (4.0 * std::f64::consts::PI.sqrt());
        let quad = trapezoid(|x| kernel_gradient(alpha, x).powi(2), -w, w, 20_000);
        c.near(
            &format!("gradient-square quadrature at alpha={alpha}"),
            quad,
            (closed, GRADIENT_SQUARE_REL * closed),
        );
        c.near(
            &format!("gradient-square closed form at alpha={alpha}"),
            gradient_square_integral(alpha),
            (closed, GRADIENT_SQUARE_REL * closed),
        );
        let h = 1e-5 / alpha.sqrt();
        let worst = (-20..=20)
            .map(|k| {
                let x = k as f64 * 0.15 / alpha.sqrt();
                let fd =
                    (gaussian_kernel(alpha, x + h) - gaussian_kernel(alpha, x - h)) / (2.0 * h);
                (fd - kernel_gradient(alpha, x)).abs() / alpha
            })
            .fold(0.0, f64::max);
        c.record(
            &format!("kernel gradient vs finite difference at alpha={alpha}"),
            worst < 1e-8,
            format!("max scaled deviation {worst:.2e}"),
        );
    }

    for (amp, exponent) in [(1.0, 3.0), (0.37, 1.0), (12.5, 3.5), (2.0, -0.5)] {
        let series: Vec<SeriesPoint> = (1..=60)
            .map(|k| {
                let t = 0.05 * k as f64;
                SeriesPoint {
                    t,
                    y: amp * t.powf(exponent),
                    se: 0.0,
                }
            })
            .collect();
        let f = fit_power_law(&series, None).unwrap();
        c.record(
            &format!("noiseless fit of {amp} t^{exponent}"),
            (f.exponent - exponent).abs() < 1e-10 && (f.amplitude / amp - 1.0).abs() < 1e-10,
            format!("exponent {}, amplitude {}", f.exponent, f.amplitude),
        );
    }

    let mut cfg = ExperimentConfig::named("round-trip");
    cfg.seed = u64::MAX;
    cfg.params = cfg.params.with_p0(0.25).with_lambda(0.5);
    cfg.sim.mode = SimMode::FullField;
    cfg.sim.noise_db = NoiseSpec::affine(1.25).unwrap();
    cfg.fit.t_lo = Some(0.5);
    cfg.outputs = Some("results".into());
    let back = ExperimentConfig::parse(&cfg.to_flat_string().unwrap()).unwrap();
    c.record("config round trip", back == cfg, String::new());

    let small = SimConfig {
        n_trajectories: 300,
        n_steps: 200,
        output_every: 10,
        ..desk_sim(SimMode::Effective, 300)
    };
    let reference = simulate_ensemble(&small, 1).unwrap();
    let identical = [2, 3, 0].iter().all(|&w| {
        let other = simulate_ensemble(&small, w).unwrap();
        reference
            .moments
            .rows
            .iter()
            .zip(&other.moments.rows)
            .all(|(a, b)| {
                a.var_x.to_bits() == b.var_x.to_bits()
                    && a.var_p.to_bits() == b.var_p.to_bits()
                    && a.cov_xp.to_bits() == b.cov_xp.to_bits()
            })
    });
    c.record(
        "bit-identical moments for 1, 2, 3 and auto workers",
        identical,
        String::new(),
    );

    // Affine A = 1 against white noise, independent seeds.
    let n_steps = 1000;
    let affine_one = Increments::new(&NoiseSpec::affine(1.0).unwrap(), n_steps, 1e-3).unwrap();
    let white = Increments::new(&NoiseSpec::white(), n_steps, 1e-3).unwrap();
    let n_paths = KS_SAMPLES / n_steps;
    let a: Vec<f64> = paths(&affine_one, n_steps, n_paths, SEED, NoiseRole::Field).concat();
    let b: Vec<f64> = paths(
        &white,
        n_steps,
        n_paths,
        SEED ^ 0xdead_beef,
        NoiseRole::Field,
    )
    .concat();
    let d = ks_statistic(a, b);
    let critical = (-(KS_LEVEL / 2.0).ln() / 2.0).sqrt() * (2.0 / KS_SAMPLES as f64).sqrt();
    c.record(
        "KS: affine A=1 increments vs white",
        d < critical,
        format!("D = {d:.5}, critical {critical:.5} at level {KS_LEVEL}"),
    );

    // fBm covariance at A = 1.5 on a subsample of times.
    let dt = 1.0 / FBM_STEPS as f64;
    let fbm = Increments::new(&NoiseSpec::affine(1.5).unwrap(), FBM_STEPS, dt).unwrap();
    let sample_steps = [16usize, 128, 512, 1024, 2048];
    let mut sums = vec![0.0; sample_steps.len() * sample_steps.len()];
    let mut fourth = vec![0.0; sums.len()];
    for path in paths(&fbm, FBM_STEPS, FBM_REALIZATIONS, SEED, NoiseRole::Dw) {
        let mut b = 0.0;
        let mut at = Vec::with_capacity(sample_steps.len());
        let mut next = 0;
        for (k, d) in path.iter().enumerate() {
            b += d;
            if next < sample_steps.len() && k + 1 == sample_steps[next] {
                at.push(b);
                next += 1;
            }
        }
        for i in 0..at.len() {
            for j in 0..at.len() {
                let v = at[i] * at[j];
                sums[i * at.len() + j] += v;
                fourth[i * at.len() + j] += v * v;
            }
        }
    }
    let n = FBM_REALIZATIONS as f64;
    let mut worst = 0.0f64;
    for (i, &si) in sample_steps.iter().enumerate() {
        for (j, &sj) in sample_steps.iter().enumerate() {
            let (t, s) = (si as f64 * dt, sj as f64 * dt);
            let exact = 0.5 * (t.powf(1.5) + s.powf(1.5) - (t - s).abs().powf(1.5));
            let k = i * sample_steps.len() + j;
            let mean = sums[k] / n;
            let se = ((fourth[k] / n - mean * mean) / n).sqrt();
            worst = worst.max((mean - exact).abs() / se);
        }
    }
    c.record(
        "fBm covariance at A=1.5",
        worst <= FBM_SIGMAS,
        format!(
            "max deviation {worst:.2} SE over {} time pairs, limit {FBM_SIGMAS}",
            sums.len()
        ),
    );

    c.finish();
}
