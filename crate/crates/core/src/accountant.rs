//! Gaussian differential privacy accounting.
//!
//! Everything is expressed through the Gaussian DP parameter μ. A single
//! Gaussian mechanism with L2 sensitivity Δ and noise std σ is μ = Δ/σ GDP;
//! adaptive composition adds the squares; zCDP ρ maps to μ = √(2ρ); and the
//! exact (ε, δ(ε)) curve comes from the analytical Gaussian mechanism
//!
//! ```text
//! δ(ε) = Φ(μ/2 − ε/μ) − e^ε Φ(−μ/2 − ε/μ)
//! ```
//!
//! Noise is always an absolute standard deviation. A step that clips at τ and
//! adds N(0, σ²τ²) noise is `MechanismStep { sensitivity: τ, noise_std: σ·τ }`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::std_normal_cdf;

/// Gaussian DP parameter μ (μ = 0 is perfect privacy).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GdpParam(f64);

impl GdpParam {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid(format!("GDP mu must be finite and >= 0, got {mu}")));
        }
        Ok(Self(mu))
    }

    pub fn mu(self) -> f64 {
        self.0
    }
}

/// zCDP parameter ρ.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ZcdpParam(f64);

impl ZcdpParam {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(invalid(format!(
                "zCDP rho must be finite and >= 0, got {rho}"
            )));
        }
        Ok(Self(rho))
    }

    pub fn rho(self) -> f64 {
        self.0
    }
}

/// An (ε, δ) target or guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpPoint {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpPoint {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || epsilon.is_nan() {
            return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// One Gaussian mechanism invocation: L2 sensitivity and absolute noise std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismStep {
    pub sensitivity: f64,
    pub noise_std: f64,
}

impl MechanismStep {
    pub fn new(sensitivity: f64, noise_std: f64) -> Result<Self> {
        if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
            return Err(invalid(format!(
                "sensitivity must be >= 0, got {sensitivity}"
            )));
        }
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(invalid(format!("noise std must be > 0, got {noise_std}")));
        }
        Ok(Self {
            sensitivity,
            noise_std,
        })
    }

    /// Signal-to-noise ratio Δ/σ of this step.
    pub fn ratio(&self) -> f64 {
        self.sensitivity / self.noise_std
    }
}

/// δ(ε) of a μ-GDP mechanism.
pub fn gaussian_delta(mu: GdpParam, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(delta_unchecked(mu.mu(), epsilon))
}

fn delta_unchecked(mu: f64, epsilon: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    if epsilon.is_infinite() {
        return 0.0;
    }
    let a = std_normal_cdf(mu / 2.0 - epsilon / mu);
    let tail = std_normal_cdf(-mu / 2.0 - epsilon / mu);
    // e^ε·Φ(·) in log space so a huge ε with an underflowed tail stays 0.
    let b = if tail == 0.0 {
        0.0
    } else {
        (epsilon + tail.ln()).exp()
    };
    (a - b).clamp(0.0, 1.0)
}

/// μ of the adaptive composition of Gaussian mechanisms.
pub fn compose_gaussian(steps: &[MechanismStep]) -> GdpParam {
    // Neumaier summation keeps long compositions exact to a few ulps.
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for s in steps {
        let v = s.ratio() * s.ratio();
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    GdpParam((sum + comp).sqrt())
}

/// ρ = TΔ²/(2σ²) for T full-batch NoisyGD steps.
pub fn noisygd_rho(steps: u64, sensitivity: f64, noise_std: f64) -> Result<ZcdpParam> {
    let step = MechanismStep::new(sensitivity, noise_std)?;
    ZcdpParam::new(steps as f64 * step.ratio() * step.ratio() / 2.0)
}

/// μ = √(2ρ).
pub fn gdp_of_rho(rho: ZcdpParam) -> GdpParam {
    GdpParam((2.0 * rho.rho()).sqrt())
}

/// ρ = μ²/2.
pub fn rho_of_gdp(mu: GdpParam) -> ZcdpParam {
    ZcdpParam(mu.mu() * mu.mu() / 2.0)
}

/// Sufficient zCDP level ε²/(8 ln(1/δ)) for an (ε, δ) target.
///
/// Only meaningful in the regime ρ ≤ √(ln(1/δ)).
pub fn rho_lower_bound_from_dp(point: DpPoint) -> Result<ZcdpParam> {
    if !(point.delta > 0.0 && point.delta < 1.0) {
        return Err(invalid("delta must lie strictly inside (0, 1)"));
    }
    if !(point.epsilon > 0.0) {
        return Err(invalid("epsilon must be > 0"));
    }
    ZcdpParam::new(point.epsilon * point.epsilon / (8.0 * (1.0 / point.delta).ln()))
}

/// Smallest ε with δ(ε) = `delta` for a μ-GDP mechanism, by bisection.
pub fn epsilon_of_mu(mu: GdpParam, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be > 0, got {delta}")));
    }
    let m = mu.mu();
    if m == 0.0 {
        return Err(Error::EpsilonZeroSuffices {
            delta,
            delta_at_zero: 0.0,
        });
    }
    let d0 = delta_unchecked(m, 0.0);
    if delta >= d0 {
        return Err(Error::EpsilonZeroSuffices {
            delta,
            delta_at_zero: d0,
        });
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64.max(m);
    while delta_unchecked(m, hi) > delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid("epsilon search did not bracket the target delta"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta_unchecked(m, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest T such that T identical steps with ratio Δ/σ meet `target`.
///
/// Returns 0 when even a single step exceeds the target. Ties (δ exactly
/// equal to the target) are accepted.
pub fn calibrate_steps(target: DpPoint, sensitivity: f64, noise_std: f64) -> Result<u64> {
    if !(target.delta > 0.0 && target.delta < 1.0) {
        return Err(invalid("calibration delta must lie strictly inside (0, 1)"));
    }
    let step = MechanismStep::new(sensitivity, noise_std)?;
    if step.sensitivity == 0.0 {
        return Err(invalid("calibration needs a positive sensitivity"));
    }
    let r = step.ratio();
    let ok = |t: u64| delta_unchecked((t as f64).sqrt() * r, target.epsilon) <= target.delta;
    if !ok(1) {
        return Ok(0);
    }
    // Exponential bracket: ok(lo) and !ok(hi).
    let mut lo = 1_u64;
    let mut hi = 2_u64;
    while ok(hi) {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .filter(|&h| h <= 1 << 62)
            .ok_or_else(|| invalid("calibration did not terminate: target admits unbounded T"))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gdp(mu: f64) -> GdpParam {
        GdpParam::new(mu).unwrap()
    }

    #[test]
    fn zero_mu_has_zero_delta() {
        assert_eq!(gaussian_delta(gdp(0.0), 1.0).unwrap(), 0.0);
        assert!(gaussian_delta(gdp(1.0), -0.1).is_err());
    }

    #[test]
    fn composition_examples() {
        assert_eq!(compose_gaussian(&[]).mu(), 0.0);
        let steps = vec![MechanismStep::new(1.0, 20.0).unwrap(); 100];
        assert!((compose_gaussian(&steps).mu() - 0.5).abs() < 1e-15);
        let steps =
            [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)].map(|(d, s)| MechanismStep::new(d, s).unwrap());
        assert!((compose_gaussian(&steps).mu() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        assert_eq!(noisygd_rho(100, 1.0, 20.0).unwrap().rho(), 0.125);
        assert_eq!(noisygd_rho(0, 1.0, 1.0).unwrap().rho(), 0.0);
        let rho = noisygd_rho(4, 2.0, 2.0).unwrap();
        assert_eq!(rho.rho(), 2.0);
        assert_eq!(gdp_of_rho(rho).mu(), 2.0);
        assert_eq!(gdp_of_rho(ZcdpParam::new(0.125).unwrap()).mu(), 0.5);
        assert_eq!(gdp_of_rho(ZcdpParam::new(0.0).unwrap()).mu(), 0.0);
    }

    #[test]
    fn rho_from_dp_examples() {
        let e = std::f64::consts::E;
        let r = rho_lower_bound_from_dp(DpPoint::new(1.0, 1.0 / e).unwrap()).unwrap();
        assert!((r.rho() - 0.125).abs() < 1e-15);
        let r = rho_lower_bound_from_dp(DpPoint::new(2.0, (-2.0f64).exp()).unwrap()).unwrap();
        assert!((r.rho() - 0.25).abs() < 1e-15);
        let r = rho_lower_bound_from_dp(DpPoint::new(3.0, 1e-5).unwrap()).unwrap();
        assert!((r.rho() - 9.0 / (8.0 * 1e5f64.ln())).abs() < 1e-15);
        assert!((r.rho() - 0.0977).abs() < 1e-4);
        assert!(rho_lower_bound_from_dp(DpPoint::new(1.0, 0.0).unwrap()).is_err());
        assert!(rho_lower_bound_from_dp(DpPoint::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn epsilon_round_trip() {
        let d = gaussian_delta(gdp(0.8), 1.3).unwrap();
        assert!((epsilon_of_mu(gdp(0.8), d).unwrap() - 1.3).abs() < 1e-9);
        assert!((epsilon_of_mu(gdp(1.0), 0.126936737).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn epsilon_zero_suffices_is_signalled() {
        let d0 = gaussian_delta(gdp(1.0), 0.0).unwrap();
        assert!(matches!(
            epsilon_of_mu(gdp(1.0), d0 + 1e-3),
            Err(Error::EpsilonZeroSuffices { .. })
        ));
        assert!(epsilon_of_mu(gdp(1.0), 0.0).is_err());
    }

    #[test]
    fn calibration_single_step_violation_returns_zero() {
        // sigma = 0.1 gives mu = 10 for one step, far beyond (1, 1e-5).
        let target = DpPoint::new(1.0, 1e-5).unwrap();
        assert_eq!(calibrate_steps(target, 1.0, 0.1).unwrap(), 0);
    }

    #[test]
    fn calibration_brackets() {
        let target = DpPoint::new(3.0, 1e-5).unwrap();
        let t = calibrate_steps(target, 1.0, 20.0).unwrap();
        let d = |t: u64| gaussian_delta(gdp((t as f64).sqrt() / 20.0), 3.0).unwrap();
        assert!(t >= 1);
        assert!(d(t) <= 1e-5);
        assert!(d(t + 1) > 1e-5);
    }

    #[test]
    fn huge_epsilon_does_not_overflow() {
        let d = gaussian_delta(gdp(2.0), 800.0).unwrap();
        assert_eq!(d, 0.0);
    }
}
