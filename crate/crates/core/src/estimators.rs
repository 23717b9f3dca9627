//! Ensemble moment tables, excess moments over the Schrödinger baseline,
//! weighted log-log power-law fits and the intermittency exponent map.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CslError, Result};

/// Ensemble statistics at one output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_p: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    pub se_var_x: f64,
    pub se_var_p: f64,
    pub n_alive: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub rows: Vec<MomentRow>,
}

impl EnsembleMoments {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Checks non-negative variances, Cauchy–Schwarz and increasing times.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.var_x < 0.0 || r.var_p < 0.0 {
                return Err(invalid(format!("negative variance in row {i}")));
            }
            let bound = (r.var_x * r.var_p).sqrt();
            if r.cov_xp.abs() > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(invalid(format!(
                    "|cov_xp| exceeds sqrt(var_x var_p) in row {i}"
                )));
            }
            if i > 0 && r.t <= self.rows[i - 1].t {
                return Err(invalid(format!("times not strictly increasing at row {i}")));
            }
        }
        Ok(())
    }
}

/// Moments of the full dynamics minus the paired baseline, with combined
/// standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessPoint {
    pub t: f64,
    pub excess_var_x: f64,
    pub se_x: f64,
    pub excess_var_p: f64,
    pub se_p: f64,
}

/// A (t, y, standard error) sample of a positive quantity to be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub y: f64,
    pub se: f64,
}

pub fn excess_moments(
    full: &EnsembleMoments,
    baseline: &EnsembleMoments,
) -> Result<Vec<ExcessPoint>> {
    if full.rows.len() != baseline.rows.len() {
        return Err(CslError::Alignment(format!(
            "moment tables have {} and {} rows",
            full.rows.len(),
            baseline.rows.len()
        )));
    }
    full.rows
        .iter()
        .zip(&baseline.rows)
        .map(|(f, b)| {
            if (f.t - b.t).abs() > 1e-12 * f.t.abs().max(1.0) {
                return Err(CslError::Alignment(format!(
                    "time grids differ: {} vs {}",
                    f.t, b.t
                )));
            }
            Ok(ExcessPoint {
                t: f.t,
                excess_var_x: f.var_x - b.var_x,
                se_x: f.se_var_x.hypot(b.se_var_x),
                excess_var_p: f.var_p - b.var_p,
                se_p: f.se_var_p.hypot(b.se_var_p),
            })
        })
        .collect()
}

pub fn excess_x_series(excess: &[ExcessPoint]) -> Vec<SeriesPoint> {
    excess
        .iter()
        .map(|e| SeriesPoint {
            t: e.t,
            y: e.excess_var_x,
            se: e.se_x,
        })
        .collect()
}

pub fn excess_p_series(excess: &[ExcessPoint]) -> Vec<SeriesPoint> {
    excess
        .iter()
        .map(|e| SeriesPoint {
            t: e.t,
            y: e.excess_var_p,
            se: e.se_p,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Upper half (in log t) of the positive sample times.
pub fn default_window(times: &[f64]) -> Option<FitWindow> {
    let first = times.iter().copied().find(|t| *t > 0.0)?;
    let last = times
        .iter()
        .copied()
        .filter(|t| *t > 0.0)
        .fold(f64::NAN, f64::max);
    Some(FitWindow {
        t_lo: (first * last).sqrt(),
        t_hi: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    /// Fitted value at t = 1.
    pub amplitude: f64,
    pub exponent_se: f64,
    pub amplitude_se: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub n_points: usize,
}

/// Minimum number of samples inside the fit window.
pub const MIN_FIT_POINTS: usize = 5;

/// Weighted least squares of ln y on ln t.
///
/// Weights are (y/se)², the inverse variance of ln y, when every standard
/// error in the window is positive; otherwise the fit is unweighted.
pub fn fit_power_law(series: &[SeriesPoint], window: Option<FitWindow>) -> Result<FitResult> {
    let times: Vec<f64> = series.iter().map(|p| p.t).collect();
    let window = match window {
        Some(w) => w,
        None => default_window(&times)
            .ok_or_else(|| CslError::InsufficientData("no positive times in series".into()))?,
    };
    let eps = 1e-12 * window.t_hi.abs().max(1.0);
    let pts: Vec<&SeriesPoint> = series
        .iter()
        .filter(|p| p.t >= window.t_lo - eps && p.t <= window.t_hi + eps)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(CslError::InsufficientData(format!(
            "{} points in window [{}, {}], need {}",
            pts.len(),
            window.t_lo,
            window.t_hi,
            MIN_FIT_POINTS
        )));
    }
    if let Some(p) = pts.iter().find(|p| !(p.y > 0.0) || !(p.t > 0.0)) {
        return Err(CslError::FitDomain(format!(
            "non-positive value y={} at t={}",
            p.y, p.t
        )));
    }
    let weighted = pts.iter().all(|p| p.se > 0.0 && p.se.is_finite());
    let xs: Vec<f64> = pts.iter().map(|p| p.t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y.ln()).collect();
    let ws: Vec<f64> = pts
        .iter()
        .map(|p| if weighted { (p.y / p.se).powi(2) } else { 1.0 })
        .collect();

    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((w, x), y) in ws.iter().zip(&xs).zip(&ys) {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
        syy += w * (y - ybar) * (y - ybar);
    }
    if !(sxx > 0.0) {
        return Err(CslError::InsufficientData(
            "all window times coincide".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = ws
        .iter()
        .zip(&xs)
        .zip(&ys)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (pts.len() - 2) as f64;
    let scale = if weighted {
        (ss_res / dof).max(1.0)
    } else {
        ss_res / dof
    };
    let var_slope = scale / sxx;
    let var_intercept = scale * (1.0 / sw + xbar * xbar / sxx);
    let amplitude = intercept.exp();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let floor = f64::EPSILON * slope.abs().max(1.0);
    Ok(FitResult {
        exponent: slope,
        amplitude,
        exponent_se: var_slope.sqrt().max(floor),
        amplitude_se: amplitude * var_intercept.sqrt(),
        r_squared,
        window: [window.t_lo, window.t_hi],
        n_points: pts.len(),
    })
}

/// Noise exponent A = 1 + 3μ/(4 − μ) for codimension μ = E − df.
pub fn intermittency_exponent(euclidean_dim: f64, fractal_dim: f64) -> Result<f64> {
    let mu = euclidean_dim - fractal_dim;
    if !mu.is_finite() {
        return Err(CslError::InvalidDimension(
            "dimensions must be finite".into(),
        ));
    }
    if mu < 0.0 {
        return Err(CslError::InvalidDimension(format!(
            "fractal dimension {fractal_dim} exceeds euclidean dimension {euclidean_dim}"
        )));
    }
    if mu >= 4.0 {
        return Err(CslError::SingularMap(format!(
            "codimension {mu} reaches the pole at 4"
        )));
    }
    Ok(1.0 + 3.0 * mu / (4.0 - mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedExponents {
    pub x2_exponent: f64,
    pub p2_exponent: f64,
}

/// Growth exponents of the excess position and momentum variances for noise
/// exponent `a`.
pub fn predicted_exponents(a: f64) -> Result<PredictedExponents> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("noise exponent must be positive, got {a}")));
    }
    Ok(PredictedExponents {
        x2_exponent: a + 2.0,
        p2_exponent: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseRole, NoiseStream, SeedPolicy};
    use proptest::prelude::*;

    fn power_series(c: f64, k: f64, n: usize) -> Vec<SeriesPoint> {
        (1..=n)
            .map(|i| {
                let t = 0.02 * i as f64;
                SeriesPoint {
                    t,
                    y: c * t.powf(k),
                    se: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn exact_cubic() {
        let f = fit_power_law(&power_series(4.0, 3.0, 100), None).unwrap();
        assert!((f.exponent - 3.0).abs() < 1e-12);
        assert!((f.amplitude - 4.0).abs() < 1e-12);
        assert!(f.exponent_se > 0.0);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.window[0] - (0.02f64 * 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_linear_heating() {
        let c = 3.0; // hbar^2 alpha lambda / 2 with alpha = 6, lambda = 1
        let f = fit_power_law(&power_series(c, 1.0, 50), None).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
        assert!((f.amplitude - c).abs() < 1e-12);
    }

    #[test]
    fn noisy_cubic_calibration() {
        let stream = NoiseStream::new(SeedPolicy::new(2024, 0), NoiseRole::Field);
        let mut worst: f64 = 0.0;
        for r in 0..100u64 {
            let series: Vec<SeriesPoint> = (1..=100)
                .map(|i| {
                    let t = 0.02 * i as f64;
                    let eps = 0.05 * stream.normal(r, i);
                    SeriesPoint {
                        t,
                        y: t.powi(3) * (1.0 + eps),
                        se: 0.05 * t.powi(3),
                    }
                })
                .collect();
            let f = fit_power_law(&series, None).unwrap();
            worst = worst.max((f.exponent - 3.0).abs());
        }
        assert!(worst < 0.1, "worst deviation {worst}");
    }

    #[test]
    fn fit_errors() {
        let mut s = power_series(1.0, 2.0, 20);
        s[18].y = -1.0;
        assert!(matches!(
            fit_power_law(&s, None),
            Err(CslError::FitDomain(_))
        ));
        let s = power_series(1.0, 2.0, 20);
        let w = FitWindow {
            t_lo: 0.1,
            t_hi: 0.16,
        };
        assert!(matches!(
            fit_power_law(&s, Some(w)),
            Err(CslError::InsufficientData(_))
        ));
    }

    #[test]
    fn excess_alignment() {
        let row = |t: f64, v: f64| MomentRow {
            t,
            mean_x: 0.0,
            var_x: v,
            mean_p: 0.0,
            var_p: v,
            cov_xp: 0.0,
            se_var_x: 0.1,
            se_var_p: 0.1,
            n_alive: 10,
        };
        let a = EnsembleMoments {
            rows: vec![row(0.1, 1.0), row(0.2, 2.0)],
        };
        let z = excess_moments(&a, &a).unwrap();
        assert!(z
            .iter()
            .all(|e| e.excess_var_x == 0.0 && e.excess_var_p == 0.0));
        assert!((z[0].se_x - 0.1 * 2f64.sqrt()).abs() < 1e-15);
        let b = EnsembleMoments {
            rows: vec![row(0.1, 1.0), row(0.3, 2.0)],
        };
        assert!(matches!(
            excess_moments(&a, &b),
            Err(CslError::Alignment(_))
        ));
        let c = EnsembleMoments {
            rows: vec![row(0.1, 1.0)],
        };
        assert!(matches!(
            excess_moments(&a, &c),
            Err(CslError::Alignment(_))
        ));
    }

    #[test]
    fn intermittency_map() {
        assert_eq!(intermittency_exponent(3.0, 3.0).unwrap(), 1.0);
        assert_eq!(intermittency_exponent(3.0, 2.0).unwrap(), 2.0);
        assert!(matches!(
            intermittency_exponent(4.0, 0.0),
            Err(CslError::SingularMap(_))
        ));
        assert!(intermittency_exponent(4.0, 0.01).is_ok());
        assert!(matches!(
            intermittency_exponent(2.0, 2.5),
            Err(CslError::InvalidDimension(_))
        ));
        let a = intermittency_exponent(3.0, 2.0).unwrap();
        let p = predicted_exponents(a).unwrap();
        assert_eq!((p.x2_exponent, p.p2_exponent), (4.0, 2.0));
        let p = predicted_exponents(1.0).unwrap();
        assert_eq!((p.x2_exponent, p.p2_exponent), (3.0, 1.0));
        assert!(predicted_exponents(0.0).is_err());
    }

    proptest! {
        #[test]
        fn exact_for_any_exponent(k in -2.0f64..5.0, c in 1e-3f64..1e3) {
            let f = fit_power_law(&power_series(c, k, 60), None).unwrap();
            prop_assert!((f.exponent - k).abs() < 1e-10);
            prop_assert!((f.amplitude / c - 1.0).abs() < 1e-10);
        }

        #[test]
        fn scale_equivariant(k in 0.5f64..4.0, c in 1e-2f64..1e2, seed in 0u64..1000) {
            let stream = NoiseStream::new(SeedPolicy::new(seed, 0), NoiseRole::Field);
            let base: Vec<SeriesPoint> = (1..=40).map(|i| {
                let t = 0.05 * i as f64;
                let y = t.powf(k) * (1.0 + 0.05 * stream.normal(0, i)).abs();
                SeriesPoint { t, y, se: 0.05 * y }
            }).collect();
            let scaled: Vec<SeriesPoint> = base.iter().map(|p| SeriesPoint { t: p.t, y: c * p.y, se: c * p.se }).collect();
            let f0 = fit_power_law(&base, None).unwrap();
            let f1 = fit_power_law(&scaled, None).unwrap();
            prop_assert!((f0.exponent - f1.exponent).abs() < 1e-10);
            prop_assert!((f1.amplitude / (c * f0.amplitude) - 1.0).abs() < 1e-10);
        }
    }
}
