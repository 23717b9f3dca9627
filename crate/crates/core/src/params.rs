//! Physical constants, localization parameters and the closed-form rate
//! coefficients consumed by the other modules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical constants and localization parameters.
///
/// Units default to ħ = m = 1 with O(1) localization parameters so the cubic
/// position growth is visible over a few time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysParams {
    pub hbar: f64,
    pub mass: f64,
    /// Inverse squared localization length.
    pub alpha: f64,
    /// Localization rate; zero switches every localization term off.
    pub lambda: f64,
    /// Constant drift momentum of the position equation.
    pub p0: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            alpha: 6.0,
            lambda: 1.0,
            p0: 0.0,
        }
    }
}

/// Second-moment growth rates implied by the beable equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRates {
    /// Coefficient c of the excess position variance c·t³.
    pub msd_cubic_coeff: f64,
    /// d Var(p)/dt.
    pub p_var_rate: f64,
    /// d Var(x)/dt of the standard (Schrödinger) diffusion.
    pub x_var_rate: f64,
    /// d Cov(x, p)/dt from the shared momentum noise.
    pub xp_cov_rate: f64,
}

impl PhysParams {
    pub fn new(hbar: f64, mass: f64, alpha: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            hbar,
            mass,
            alpha,
            lambda,
            p0: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_p0(mut self, p0: f64) -> Self {
        self.p0 = p0;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.hbar, self.mass, self.alpha, self.lambda, self.p0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("physical parameters must be finite"));
        }
        if self.hbar <= 0.0 {
            return Err(invalid(format!("hbar must be positive, got {}", self.hbar)));
        }
        if self.mass <= 0.0 {
            return Err(invalid(format!("mass must be positive, got {}", self.mass)));
        }
        if self.alpha <= 0.0 {
            return Err(invalid(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.lambda < 0.0 {
            return Err(invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// ν = ħ / 2m.
    pub fn nu(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    /// Noise strength γ = λ (4π/α)^{1/2}. Assumes validated parameters.
    pub fn gamma(&self) -> f64 {
        self.lambda * (4.0 * std::f64::consts::PI / self.alpha).sqrt()
    }

    /// Momentum noise amplitude ħ (αλ/2)^{1/2}.
    pub fn momentum_noise(&self) -> f64 {
        self.hbar * (self.alpha * self.lambda / 2.0).sqrt()
    }

    /// Standard position noise amplitude (2ν)^{1/2}.
    pub fn position_noise(&self) -> f64 {
        (2.0 * self.nu()).sqrt()
    }
}

pub fn derive_gamma(params: &PhysParams) -> Result<f64> {
    if !(params.alpha > 0.0) {
        return Err(invalid(format!(
            "alpha must be positive, got {}",
            params.alpha
        )));
    }
    params.validate()?;
    Ok(params.gamma())
}

/// Mean energy input per unit time and unit mass, αλħ²/(6m²).
pub fn mean_energy_input(params: &PhysParams) -> Result<f64> {
    params.validate()?;
    Ok(
        params.alpha * params.lambda * params.hbar * params.hbar
            / (6.0 * params.mass * params.mass),
    )
}

pub fn analytic_rates(params: &PhysParams) -> Result<AnalyticRates> {
    params.validate()?;
    let PhysParams {
        hbar,
        mass,
        alpha,
        lambda,
        ..
    } = *params;
    Ok(AnalyticRates {
        msd_cubic_coeff: alpha * lambda * hbar * hbar / (6.0 * mass * mass),
        p_var_rate: hbar * hbar * alpha * lambda / 2.0,
        x_var_rate: hbar / mass,
        xp_cov_rate: (hbar.powi(3) * alpha * lambda / (2.0 * mass)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(alpha: f64, lambda: f64) -> PhysParams {
        PhysParams::new(1.0, 1.0, alpha, lambda).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert!((derive_gamma(&unit(4.0 * PI, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(derive_gamma(&unit(3.7, 0.0)).unwrap(), 0.0);
        // 2·sqrt(4π) = 4·sqrt(π) = 7.0898154036220641...
        let g = derive_gamma(&unit(1.0, 2.0)).unwrap();
        assert!((g - 7.089_815_403_622_064).abs() < 1e-13);
    }

    #[test]
    fn gamma_rejects_bad_alpha() {
        let p = PhysParams {
            alpha: 0.0,
            ..PhysParams::default()
        };
        assert!(derive_gamma(&p).is_err());
        let p = PhysParams {
            alpha: -1.0,
            ..PhysParams::default()
        };
        assert!(matches!(
            derive_gamma(&p),
            Err(crate::CslError::InvalidParameter(_))
        ));
    }

    #[test]
    fn energy_input_examples() {
        assert!((mean_energy_input(&unit(6.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mean_energy_input(&unit(6.0, 0.0)).unwrap(), 0.0);
        // Proton in cgs units, alpha = 1e10 cm^-2, lambda = 1e-16 s^-1.
        // 40-digit evaluation: 6.625299283107498725e-14 cm^2 s^-3.
        let p = PhysParams::new(1.054_571_817e-27, 1.672_621_923_69e-24, 1e10, 1e-16).unwrap();
        let e = mean_energy_input(&p).unwrap();
        let ratio = 1.054_571_817e-27_f64 / 1.672_621_923_69e-24;
        let oracle = 1e-6 * ratio * ratio / 6.0;
        assert!((e / oracle - 1.0).abs() < 1e-12);
        assert!((e / 6.625_299_283_107_499e-14 - 1.0).abs() < 1e-13, "{e}");
    }

    #[test]
    fn rate_examples() {
        assert!((analytic_rates(&unit(6.0, 1.0)).unwrap().msd_cubic_coeff - 1.0).abs() < 1e-15);
        assert!((analytic_rates(&unit(2.0, 1.0)).unwrap().p_var_rate - 1.0).abs() < 1e-15);
        let r = analytic_rates(&PhysParams::new(1.3, 0.7, 5.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.p_var_rate, 0.0);
        assert_eq!(r.xp_cov_rate, 0.0);
        assert!((r.x_var_rate - 1.3 / 0.7).abs() < 1e-15);
    }

    #[test]
    fn mass_scaling() {
        let a = analytic_rates(&PhysParams::new(1.0, 1.0, 3.0, 2.0).unwrap()).unwrap();
        let b = analytic_rates(&PhysParams::new(1.0, 2.5, 3.0, 2.0).unwrap()).unwrap();
        assert!((b.msd_cubic_coeff * 2.5 * 2.5 / a.msd_cubic_coeff - 1.0).abs() < 1e-14);
        assert!((b.x_var_rate * 2.5 / a.x_var_rate - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn gamma_round_trip(alpha in 1e-3f64..1e3, lambda in 0.0f64..1e2) {
            let p = unit(alpha, lambda);
            let back = derive_gamma(&p).unwrap() * (alpha / (4.0 * PI)).sqrt();
            prop_assert!((back - lambda).abs() <= 1e-12 * lambda.max(1.0));
        }

        #[test]
        fn energy_input_equals_cubic_coefficient(
            hbar in 0.1f64..10.0, mass in 0.1f64..10.0, alpha in 0.01f64..100.0, lambda in 0.0f64..10.0
        ) {
            let p = PhysParams::new(hbar, mass, alpha, lambda).unwrap();
            let e = mean_energy_input(&p).unwrap();
            let c = analytic_rates(&p).unwrap().msd_cubic_coeff;
            prop_assert!((e - c).abs() <= 1e-14 * e.abs().max(1e-300));
        }
    }
}
