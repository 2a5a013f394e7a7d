use super::envelope::{check_condition, RatioEnvelope};
use crate::error::{ensure, Error, Result};
use crate::simulator::ObservedStats;
use crate::source::{AykiSourceParams, PulseEnsembleSpec};

/// Smallest accepted `r_max[1] - r_max[2]`.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// Bounds on the vacuum contributions: `n_0d <= n0d_ub`, `n_0s >= n0s_lb`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacuumBounds {
    pub n0d_ub: f64,
    pub n0s_lb: f64,
}

impl VacuumBounds {
    pub fn new(n0d_ub: f64, n0s_lb: f64) -> Self {
        Self { n0d_ub, n0s_lb }
    }
}

/// Vacuum bounds from the counts of a vacuum source: the decoy vacuum
/// fraction is largest at the smallest decoy intensity, the signal vacuum
/// fraction smallest at the largest signal intensity.
pub fn bound_vacuum_3intensity(obs: &ObservedStats, spec: &PulseEnsembleSpec) -> Result<VacuumBounds> {
    if spec.p_0 <= 0.0 {
        return Err(Error::MissingVacuumSource);
    }
    let (decoy_min, _) = spec.decoy_range();
    let (_, signal_max) = spec.signal_range();
    let n0d_ub = spec.p / spec.p_0 * (-decoy_min).exp() * obs.n_0;
    let n0s_lb = spec.p_prime / spec.p_0 * (-signal_max).exp() * obs.n_0;
    Ok(VacuumBounds {
        n0d_ub: n0d_ub.clamp(0.0, obs.n_d.max(0.0)),
        n0s_lb: n0s_lb.clamp(0.0, obs.n_s.max(0.0)),
    })
}

/// Two-intensity fallback from a calibrated upper bound `y0_ub` on the
/// vacuum yield: `n_0d <= y0_ub * sent_d * max_i a_0i`, `n_0s >= 0`.
pub fn calibrated_vacuum_bounds(obs: &ObservedStats, spec: &PulseEnsembleSpec, y0_ub: f64) -> VacuumBounds {
    let (decoy_min, _) = spec.decoy_range();
    let n0d_ub = y0_ub * obs.sent_d * (-decoy_min).exp();
    VacuumBounds::new(n0d_ub.clamp(0.0, obs.n_d.max(0.0)), 0.0)
}

/// Heralded-source counterpart of [`calibrated_vacuum_bounds`]. The no-click
/// branch holds vacuum with probability `(1 + mu eta_A)/(1 + mu)`, largest at
/// the weakest pump.
pub fn ayki_vacuum_bound(obs: &ObservedStats, params: &AykiSourceParams, y0_ub: f64) -> f64 {
    let mu = params.mu * (1.0 - params.mu_fluct);
    let vacuum_fraction = (1.0 + mu * params.eta_a) / (1.0 + mu);
    (y0_ub * obs.sent_d * vacuum_fraction).clamp(0.0, obs.n_d.max(0.0))
}

/// Lower bound on the single-photon signal counts, with audit terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct N1sBound {
    /// Bound after clamping to `[0, N_s]`.
    pub value: f64,
    pub raw: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub clamped: bool,
}

/// `(N_d - r2 N_s + r2 n0s - n0d) / (r1 - r2)`, clamped to `[0, N_s]`.
pub fn bound_n1s(obs: &ObservedStats, env: &RatioEnvelope, vacuum: VacuumBounds) -> Result<N1sBound> {
    if !check_condition(env, env.len_k()) {
        return Err(Error::ConditionViolated(format!(
            "envelope r_max = {:?} is not ordered r_k <= r_2 <= r_1",
            env.r_max
        )));
    }
    let (r1, r2) = (env.r1(), env.r2());
    let denominator = r1 - r2;
    if !(denominator >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator {
            value: denominator,
            floor: DENOMINATOR_FLOOR,
        });
    }
    let numerator = obs.n_d - r2 * obs.n_s + r2 * vacuum.n0s_lb - vacuum.n0d_ub;
    let raw = numerator / denominator;
    let value = raw.clamp(0.0, obs.n_s.max(0.0));
    Ok(N1sBound {
        value,
        raw,
        numerator,
        denominator,
        clamped: value != raw,
    })
}

/// Decoy-side single-photon fraction bound in its two readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta1Decoy {
    /// `r1_min * n1s_lb / N_d`, from `n_1d >= r1_min n_1s`.
    pub count_normalized: f64,
    /// `r1_min * delta1s_lb` taken literally.
    pub raw: f64,
}

pub fn bound_delta1_decoy(delta1s_lb: f64, env: &RatioEnvelope, n_s: f64, n_d: f64) -> Delta1Decoy {
    let raw = env.r1_min * delta1s_lb;
    let count_normalized = if n_d > 0.0 { raw * n_s / n_d } else { 0.0 };
    Delta1Decoy {
        count_normalized: count_normalized.clamp(0.0, 1.0),
        raw: raw.clamp(0.0, 1.0),
    }
}

/// Sandwich of the signal single-photon QBER around the decoy one.
pub fn bound_e1s(e1d: f64, env: &RatioEnvelope) -> Result<(f64, f64)> {
    ensure((0.0..=1.0).contains(&e1d), || {
        format!("e1d must lie in [0,1], got {e1d}")
    })?;
    ensure(env.r1_min > 0.0 && env.r1().is_finite(), || {
        "error sandwich needs 0 < r1_min and finite r_max[1]".into()
    })?;
    let spread = env.r1() / env.r1_min;
    Ok((e1d / spread, (spread * e1d).min(1.0)))
}

/// Signal single-photon fraction for the heralded source from observables and
/// a bound on the decoy vacuum counts. Depends on the pump only through the
/// observables.
pub fn ayki_delta1(obs: &ObservedStats, params: &AykiSourceParams, n0d_ub: f64) -> Result<f64> {
    let (g1, g2) = (params.gamma(1), params.gamma(2));
    ensure(g1 > 0.0 && g2 > 0.0, || "gamma_1 and gamma_2 must be > 0".into())?;
    ensure(obs.n_s > 0.0, || "no signal counts".into())?;
    let r1 = (1.0 - g1) / g1;
    let r2 = (1.0 - g2) / g2;
    let denominator = r1 - r2;
    if !(denominator.abs() >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator {
            value: denominator,
            floor: DENOMINATOR_FLOOR,
        });
    }
    let vacuum_coeff = 1.0 - r2 * params.d_a / (1.0 - params.d_a);
    let numerator = obs.n_d - r2 * obs.n_s - vacuum_coeff * n0d_ub;
    Ok((numerator / (obs.n_s * denominator)).clamp(0.0, 1.0))
}
