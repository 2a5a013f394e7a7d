//! Lossy fiber plus threshold detector at Bob's side.
//!
//! This is the ground-truth physics used by the simulator. The estimator
//! never reads it.

use crate::error::{ensure, Result};

/// Error probability of a click caused only by a dark count.
pub const DARK_COUNT_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub alpha_db_per_km: f64,
    /// Bob-side detection efficiency.
    pub eta_bob: f64,
    /// Dark count probability per pulse.
    pub dark_count: f64,
    /// Misalignment error probability.
    pub e_det: f64,
}

impl ChannelParams {
    /// Representative 50 km link with the defaults used by the Fig. 1 style sweeps.
    pub fn peng50km_like() -> Self {
        Self {
            distance_km: 50.0,
            alpha_db_per_km: 0.2,
            eta_bob: 0.045,
            dark_count: 1.0e-5,
            e_det: 0.015,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.distance_km >= 0.0 && self.distance_km.is_finite(), || {
            format!("distance must be >= 0, got {}", self.distance_km)
        })?;
        ensure(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite(), || {
            format!("attenuation must be >= 0, got {}", self.alpha_db_per_km)
        })?;
        for (name, v) in [
            ("eta_bob", self.eta_bob),
            ("dark_count", self.dark_count),
            ("e_det", self.e_det),
        ] {
            ensure((0.0..=1.0).contains(&v), || {
                format!("{name} must lie in [0,1], got {v}")
            })?;
        }
        Ok(())
    }

    /// Overall single-photon transmittance including Bob's detector.
    pub fn transmittance(&self) -> f64 {
        self.eta_bob * 10f64.powf(-self.alpha_db_per_km * self.distance_km / 10.0)
    }

    /// Probability that a `k`-photon pulse causes a click.
    pub fn yield_k(&self, k: usize) -> f64 {
        self.dark_count + self.signal_part(k)
    }

    // (1 - d)(1 - (1 - eta)^k), kept separate so Y_0 is exactly d
    fn signal_part(&self, k: usize) -> f64 {
        let eta = self.transmittance();
        let lost = if eta >= 1.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (k as f64 * (-eta).ln_1p()).exp()
        };
        (1.0 - self.dark_count) * (1.0 - lost)
    }

    /// Error probability of a click caused by a `k`-photon pulse.
    pub fn error_prob_k(&self, k: usize) -> f64 {
        if k == 0 {
            return DARK_COUNT_ERROR;
        }
        let signal = self.signal_part(k);
        let y = self.dark_count + signal;
        if y == 0.0 {
            // no clicks ever happen; pick the limit of the click-conditioned value
            return self.e_det;
        }
        (DARK_COUNT_ERROR * self.dark_count + self.e_det * signal) / y
    }
}

/// Convenience for call sites that only want the transmittance.
pub fn transmittance(params: &ChannelParams) -> f64 {
    params.transmittance()
}
