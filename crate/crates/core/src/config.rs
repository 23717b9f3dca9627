//! Experiment configuration and its flat `section.key = value` file format.
//!
//! The file is valid TOML restricted to dotted keys, one per line, which
//! keeps parameter sweeps diff-friendly:
//!
//! ```text
//! run_name = "richardson"
//! params.alpha = 6.0
//! sim.n_trajectories = 10000
//! sim.noise_db.kind = "affine"
//! ```

use serde::{Deserialize, Serialize};

use crate::dynamics::SimConfig;
use crate::error::{CslError, Result};
use crate::fokker_planck::PhaseGrid;
use crate::params::{analytic_rates, PhysParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpeConfig {
    /// Explicit phase grid; derived from `n_x`, `n_p` and the expected
    /// spread when absent.
    pub grid: Option<PhaseGrid>,
    pub n_x: usize,
    pub n_p: usize,
    pub x0: f64,
    pub p_mean: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
    pub t_final: f64,
    /// Moment rows are written every this many solver steps (0 = about 100 rows).
    pub record_every: usize,
    /// Density snapshots every this many steps (0 = none).
    pub snapshot_every: usize,
    /// Monte Carlo walkers for the histogram cross-check.
    pub mc_trajectories: usize,
    pub mc_dt: f64,
    /// Solver cells per histogram bin along each axis.
    pub histogram_block: usize,
}

impl Default for FpeConfig {
    fn default() -> Self {
        Self {
            grid: None,
            n_x: 256,
            n_p: 256,
            x0: 0.0,
            p_mean: 0.0,
            sigma_x: 0.5,
            sigma_p: 0.5,
            t_final: 1.0,
            record_every: 0,
            snapshot_every: 0,
            mc_trajectories: 100_000,
            mc_dt: 0.01,
            histogram_block: 8,
        }
    }
}

impl FpeConfig {
    /// Explicit grid, or one spanning seven final standard deviations on
    /// each axis around the drifting mean.
    pub fn resolved_grid(&self, params: &PhysParams) -> Result<PhaseGrid> {
        if let Some(g) = self.grid {
            g.validate()?;
            return Ok(g);
        }
        let r = analytic_rates(params)?;
        let t = self.t_final;
        let sx = (self.sigma_x.powi(2) + r.x_var_rate * t).sqrt();
        let sp = (self.sigma_p.powi(2) + r.p_var_rate * t).sqrt();
        let shift = (params.p0 / params.mass) * t;
        let (lo, hi) = (self.x0 + shift.min(0.0), self.x0 + shift.max(0.0));
        PhaseGrid::new(
            (lo - 7.0 * sx, hi + 7.0 * sx),
            self.n_x,
            (self.p_mean - 7.0 * sp, self.p_mean + 7.0 * sp),
            self.n_p,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Exponent of the affine-noise variant.
    pub affine_a: f64,
    pub full_field: bool,
    pub full_field_trajectories: usize,
    pub noise_realizations: usize,
    pub noise_steps: usize,
    pub noise_dt: f64,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            affine_a: 1.5,
            full_field: true,
            full_field_trajectories: 10_000,
            noise_realizations: 10_000,
            noise_steps: 1000,
            noise_dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_name: String,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    /// Output root; falls back to `CSL_DIFFUSION_OUT`, then `./out`.
    pub outputs: Option<String>,
    pub params: PhysParams,
    pub sim: SimConfig,
    pub fpe: FpeConfig,
    pub fit: FitConfig,
    pub reproduce: ReproduceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_name: String::new(),
            seed: 20_240_601,
            outputs: None,
            params: PhysParams::default(),
            sim: SimConfig::default(),
            fpe: FpeConfig::default(),
            fit: FitConfig::default(),
            reproduce: ReproduceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn named(run_name: &str) -> Self {
        Self {
            run_name: run_name.to_string(),
            ..Self::default()
        }
    }

    /// Simulation config with the shared parameters and seed filled in.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            params: self.params,
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_name.trim().is_empty() {
            return Err(CslError::Config("run_name is required".into()));
        }
        if self.run_name.contains(['/', '\\']) {
            return Err(CslError::Config(
                "run_name must not contain path separators".into(),
            ));
        }
        self.params.validate()?;
        self.sim_config().validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            CslError::Parse {
                line,
                msg: e.message().to_string(),
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Flat dotted-key rendering, one `key = value` per line.
    pub fn to_flat_string(&self) -> Result<String> {
        let value = toml::Value::try_from(self)
            .map_err(|e| CslError::Config(format!("cannot serialize config: {e}")))?;
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        let mut out = lines.join("\n");
        out.push('\n');
        Ok(out)
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        leaf => out.push(format!("{prefix} = {leaf}")),
    }
}

/// TOML integers are signed 64-bit; seeds above `i64::MAX` are written as
/// strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if *seed <= i64::MAX as u64 {
            s.serialize_i64(*seed as i64)
        } else {
            s.serialize_str(&seed.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) if v >= 0 => Ok(v as u64),
            Repr::Int(v) => Err(de::Error::custom(format!(
                "seed must be non-negative, got {v}"
            ))),
            Repr::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimMode;
    use crate::kernel::SpatialGrid;
    use crate::noise::NoiseSpec;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse("run_name = \"demo\"\n").unwrap();
        assert_eq!(cfg.run_name, "demo");
        assert_eq!(cfg.params, PhysParams::default());
        assert_eq!(
            (
                cfg.params.hbar,
                cfg.params.mass,
                cfg.params.alpha,
                cfg.params.lambda
            ),
            (1.0, 1.0, 6.0, 1.0)
        );
        cfg.validate().unwrap();
        assert!(ExperimentConfig::parse("").unwrap().validate().is_err());
    }

    #[test]
    fn flat_rendering_uses_dotted_keys() {
        let text = ExperimentConfig::named("x").to_flat_string().unwrap();
        assert!(text.lines().all(|l| !l.starts_with('[')));
        assert!(text.contains("sim.n_trajectories = 10000"), "{text}");
        assert!(text.contains("params.alpha = 6.0"));
        assert!(text.contains("sim.noise_db.kind = \"white\""));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("run_name = \"a\"\nsim.n_trajectories = \"many\"\n")
            .unwrap_err();
        match err {
            CslError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::parse("run_name = \"a\"\n\nparams.alhpa = 2.0\n").unwrap_err();
        assert!(matches!(err, CslError::Parse { line: 3, .. }), "{err:?}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn huge_seed_round_trips() {
        let mut cfg = ExperimentConfig::named("s");
        cfg.seed = u64::MAX;
        let back = ExperimentConfig::parse(&cfg.to_flat_string().unwrap()).unwrap();
        assert_eq!(back.seed, u64::MAX);
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            any::<u64>(),
            0.1f64..10.0,
            0.0f64..5.0,
            -2.0f64..2.0,
            2usize..100_000,
            prop::sample::select(vec![
                SimMode::Effective,
                SimMode::FullField,
                SimMode::MarkovianOnly,
            ]),
            prop::option::of(0.1f64..2.0),
            prop::option::of(0.05f64..2.0),
            any::<bool>(),
            prop::option::of((-50.0f64..-1.0, 1usize..5000)),
        )
            .prop_map(|(seed, alpha, lambda, p0, n, mode, a, t_lo, ff, grid)| {
                let mut c = ExperimentConfig::named("prop-run");
                c.seed = seed;
                c.params.alpha = alpha;
                c.params.lambda = lambda;
                c.params.p0 = p0;
                c.sim.n_trajectories = n;
                c.sim.mode = mode;
                if let Some(a) = a {
                    c.sim.noise_db = NoiseSpec::affine(a).unwrap();
                }
                c.fit.t_lo = t_lo;
                c.reproduce.full_field = ff;
                c.sim.grid = grid.map(|(lo, n)| SpatialGrid {
                    q_min: lo,
                    q_max: -lo,
                    n_cells: n,
                });
                c.outputs = t_lo.map(|v| format!("runs/{v}"));
                c
            })
    }

    proptest! {
        #[test]
        fn flat_round_trip(cfg in arb_config()) {
            let text = cfg.to_flat_string().unwrap();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
