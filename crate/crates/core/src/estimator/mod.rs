//! Security bounds from observables and worst-case ratio envelopes.
//!
//! The estimator only ever sees [`ObservedStats`]; per-photon-number ground
//! truth stays inside the simulator's [`Tally`](crate::simulator::Tally).

mod bounds;
mod envelope;

pub use bounds::{
    ayki_delta1, ayki_vacuum_bound, bound_delta1_decoy, bound_e1s, bound_n1s, bound_vacuum_3intensity,
    calibrated_vacuum_bounds, Delta1Decoy, N1sBound, VacuumBounds, DENOMINATOR_FLOOR,
};
pub use envelope::{
    ayki_ratio_envelope, check_condition, coherent_corner_ratio, coherent_ratio_envelope, normal_worstcase_envelope,
    Provenance, RatioEnvelope,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simulator::{fmt_f64, ObservedStats};
use crate::source::PulseEnsembleSpec;

/// Which worst case the coherent envelope uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Economic,
    Normal,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Economic, Variant::Normal];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Economic => "economic",
            Variant::Normal => "normal",
        }
    }

    pub fn envelope(self, spec: &PulseEnsembleSpec, k_max: usize) -> Result<RatioEnvelope> {
        match self {
            Variant::Economic => coherent_ratio_envelope(spec, k_max),
            Variant::Normal => normal_worstcase_envelope(spec, k_max),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "economic" => Ok(Variant::Economic),
            "normal" => Ok(Variant::Normal),
            other => Err(Error::InvalidParameter(format!("unknown estimator variant `{other}`"))),
        }
    }
}

/// Post-processing constants of the key-rate kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateParams {
    /// Basis-sifting factor.
    pub sifting: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        Self {
            sifting: 0.5,
            f_ec: 1.16,
        }
    }
}

/// Binary Shannon entropy in bits, with the argument folded at 1/2.
pub fn binary_entropy(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0).min(0.5);
    if x <= 0.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Secure key per signal pulse,
/// `q [Q Delta'_1 (1 - H(e1s_ub)) - f Q H(E)]`, clamped at 0.
pub fn key_rate(gain: f64, qber: f64, delta1s_lb: f64, e1s_ub: f64, params: &KeyRateParams) -> f64 {
    let single = gain * delta1s_lb * (1.0 - binary_entropy(e1s_ub));
    let leak = params.f_ec * gain * binary_entropy(qber);
    (params.sifting * (single - leak)).max(0.0)
}

/// Where the decoy single-photon QBER comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum E1dInput {
    /// Supplied directly (e.g. the simulator's exact value, or an external estimate).
    Known(f64),
    /// Worst case from observables: all decoy errors charged to single photons,
    /// `e1d <= QBER_d N_d / n1d_lb` with `n1d_lb = r1_min n1s_lb`.
    FromObserved,
}

/// Everything the estimator concluded about one run, with audit terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub label: String,
    pub provenance: Provenance,
    pub condition_ok: bool,
    pub r0_max: f64,
    pub r1_max: f64,
    pub r2_max: f64,
    pub r1_min: f64,
    pub n0d_ub: f64,
    pub n0s_lb: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub n1s_lb: f64,
    pub n1s_clamped: bool,
    pub delta1s_lb: f64,
    pub delta1d_lb: f64,
    pub delta1d_lb_raw: f64,
    pub e1d: f64,
    pub e1s_lb: f64,
    pub e1s_ub: f64,
    pub key_rate: f64,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 20] = [
        "label",
        "provenance",
        "condition_ok",
        "r0_max",
        "r1_max",
        "r2_max",
        "r1_min",
        "n0d_ub",
        "n0s_lb",
        "numerator",
        "denominator",
        "n1s_lb",
        "n1s_clamped",
        "delta1s_lb",
        "delta1d_lb",
        "delta1d_lb_raw",
        "e1d",
        "e1s_lb",
        "e1s_ub",
        "key_rate",
    ];

    /// Values in [`Self::CSV_HEADER`] order.
    pub fn csv_fields(&self) -> Vec<String> {
        let nums = [
            self.r0_max,
            self.r1_max,
            self.r2_max,
            self.r1_min,
            self.n0d_ub,
            self.n0s_lb,
            self.numerator,
            self.denominator,
            self.n1s_lb,
        ];
        let mut out = vec![
            self.label.clone(),
            self.provenance.to_string(),
            self.condition_ok.to_string(),
        ];
        out.extend(nums.iter().map(|v| fmt_f64(*v)));
        out.push(self.n1s_clamped.to_string());
        out.extend(
            [
                self.delta1s_lb,
                self.delta1d_lb,
                self.delta1d_lb_raw,
                self.e1d,
                self.e1s_lb,
                self.e1s_ub,
                self.key_rate,
            ]
            .iter()
            .map(|v| fmt_f64(*v)),
        );
        out
    }

    /// Flat `key = value` block.
    pub fn to_kv(&self) -> String {
        Self::CSV_HEADER
            .iter()
            .zip(self.csv_fields())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Run the full bound chain for one envelope.
pub fn estimate(
    label: &str,
    obs: &ObservedStats,
    env: &RatioEnvelope,
    vacuum: VacuumBounds,
    e1d: E1dInput,
    rate: &KeyRateParams,
) -> Result<BoundReport> {
    let n1s = bound_n1s(obs, env, vacuum)?;
    let delta1s_lb = if obs.n_s > 0.0 { n1s.value / obs.n_s } else { 0.0 };
    let decoy = bound_delta1_decoy(delta1s_lb, env, obs.n_s, obs.n_d);
    let e1d = match e1d {
        E1dInput::Known(v) => v,
        E1dInput::FromObserved => {
            let n1d_lb = env.r1_min * n1s.value;
            match obs.qber_d {
                Some(q) if n1d_lb > 0.0 => (q * obs.n_d / n1d_lb).min(1.0),
                _ => 1.0,
            }
        }
    };
    let (e1s_lb, e1s_ub) = bound_e1s(e1d, env)?;
    let rate = key_rate(obs.signal_gain(), obs.qber_s.unwrap_or(0.0), delta1s_lb, e1s_ub, rate);
    Ok(BoundReport {
        label: label.to_string(),
        provenance: env.provenance,
        condition_ok: true,
        r0_max: env.r_max[0],
        r1_max: env.r1(),
        r2_max: env.r2(),
        r1_min: env.r1_min,
        n0d_ub: vacuum.n0d_ub,
        n0s_lb: vacuum.n0s_lb,
        numerator: n1s.numerator,
        denominator: n1s.denominator,
        n1s_lb: n1s.value,
        n1s_clamped: n1s.clamped,
        delta1s_lb,
        delta1d_lb: decoy.count_normalized,
        delta1d_lb_raw: decoy.raw,
        e1d,
        e1s_lb,
        e1s_ub,
        key_rate: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.11) - 0.4999162).abs() < 1e-6);
        assert_eq!(binary_entropy(0.9), 1.0);
    }

    #[test]
    fn key_rate_limits() {
        let p = KeyRateParams::default();
        assert_eq!(key_rate(1e-3, 0.02, 0.0, 0.02, &p), 0.0);
        let q = 2e-3;
        assert!((key_rate(q, 0.0, 1.0, 0.0, &p) - p.sifting * q).abs() < 1e-18);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("economic".parse::<Variant>().unwrap(), Variant::Economic);
        assert_eq!("normal".parse::<Variant>().unwrap(), Variant::Normal);
        assert!("both".parse::<Variant>().is_err());
    }

    proptest! {
        #[test]
        fn key_rate_nonincreasing_in_e1s(
            gain in 1e-4f64..1e-1, qber in 0.0f64..0.1, delta in 0.0f64..1.0, e in 0.0f64..0.5, bump in 0.0f64..0.1,
        ) {
            let p = KeyRateParams::default();
            prop_assert!(key_rate(gain, qber, delta, e + bump, &p) <= key_rate(gain, qber, delta, e, &p));
        }
    }
}
