//! Worst-case envelopes of the per-pulse ratio `p a_k / (p' a'_k)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::source::{AykiSourceParams, PulseEnsembleSpec};

/// Where an envelope came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Joint maximum over the coherent fluctuation box (economic worst case).
    CoherentClosedForm,
    /// Numerator maximised and denominator minimised independently (normal worst case).
    CoherentNormal,
    /// Heralded source: ratios are exact constants.
    AykiConstant,
    UserSupplied,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::CoherentClosedForm => "coherent-closed-form",
            Provenance::CoherentNormal => "coherent-normal",
            Provenance::AykiConstant => "ayki-constant",
            Provenance::UserSupplied => "user-supplied",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper bounds `r_max[k]` on the decoy/signal ratio for `k = 0..=K`, and a
/// lower bound `r1_min` on the single-photon ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEnvelope {
    pub r_max: Vec<f64>,
    pub r1_min: f64,
    pub provenance: Provenance,
}

impl RatioEnvelope {
    pub fn user_supplied(r_max: Vec<f64>, r1_min: f64) -> Result<Self> {
        if r_max.len() < 3 {
            return Err(Error::InvalidParameter("envelope needs r_max[0..=2]".into()));
        }
        if r_max.iter().any(|r| r.is_nan() || *r < 0.0) || !(r1_min >= 0.0) {
            return Err(Error::InvalidParameter("envelope ratios must be >= 0".into()));
        }
        Ok(Self {
            r_max,
            r1_min,
            provenance: Provenance::UserSupplied,
        })
    }

    /// Highest photon number covered, `K`.
    pub fn len_k(&self) -> usize {
        self.r_max.len() - 1
    }

    pub fn r1(&self) -> f64 {
        self.r_max[1]
    }

    pub fn r2(&self) -> f64 {
        self.r_max[2]
    }
}

/// `r_max[2] <= r_max[1]` and `r_max[k] <= r_max[2]` for `2 < k <= K`.
pub fn check_condition(env: &RatioEnvelope, k_max: usize) -> bool {
    if k_max < 2 || env.r_max.len() <= k_max {
        return false;
    }
    let (r1, r2) = (env.r_max[1], env.r_max[2]);
    r1.is_finite() && r2.is_finite() && r2 <= r1 && env.r_max[3..=k_max].iter().all(|r| *r <= r2)
}

fn selection_ratio(spec: &PulseEnsembleSpec) -> Result<f64> {
    if spec.p <= 0.0 || spec.p_prime <= 0.0 {
        return Err(Error::DegenerateSource(
            "decoy and signal selection probabilities must both be > 0".into(),
        ));
    }
    Ok(spec.p / spec.p_prime)
}

fn check_ordering(spec: &PulseEnsembleSpec) -> Result<()> {
    let f = &spec.fluctuation;
    let top_decoy = spec.mu * (1.0 + f.eps_d);
    let bottom_signal = spec.mu_prime * (1.0 - f.eps_s);
    if !(top_decoy < bottom_signal) {
        return Err(Error::ConditionViolated(format!(
            "mu(1+eps_d) = {top_decoy} is not below mu'(1-eps_s) = {bottom_signal}"
        )));
    }
    Ok(())
}

/// `ln(a_k(mu_i) / a'_k(mu_i'))` for a coherent pulse at the given draw.
fn log_ratio(spec: &PulseEnsembleSpec, k: usize, delta: f64, eps_d: f64, eps_s: f64) -> f64 {
    let k = k as f64;
    let decoy = spec.mu * (1.0 + eps_d);
    let signal = spec.mu_prime * (1.0 + eps_s);
    k * (decoy.ln() - signal.ln()) + (1.0 + delta) * (signal - decoy)
}

/// Extremes of the log ratio over the fluctuation box.
///
/// For fixed `delta` the log ratio separates into a concave function of
/// `eps_d` and a convex function of `eps_s`, and it is linear in `delta`.
/// The maximum therefore sits at a `delta` corner, an `eps_s` corner and the
/// clamped stationary point in `eps_d`; the minimum swaps the roles of the
/// two attenuators.
fn log_ratio_extreme(spec: &PulseEnsembleSpec, k: usize, maximise: bool) -> f64 {
    let f = &spec.fluctuation;
    let mut best = if maximise { f64::NEG_INFINITY } else { f64::INFINITY };
    for delta in [-f.delta, f.delta] {
        let father = 1.0 + delta;
        let candidates: [(f64, f64); 2] = if maximise {
            let eps_d = (k as f64 / (father * spec.mu) - 1.0).clamp(-f.eps_d, f.eps_d);
            [(eps_d, -f.eps_s), (eps_d, f.eps_s)]
        } else {
            let eps_s = (k as f64 / (father * spec.mu_prime) - 1.0).clamp(-f.eps_s, f.eps_s);
            [(-f.eps_d, eps_s), (f.eps_d, eps_s)]
        };
        for (eps_d, eps_s) in candidates {
            let v = log_ratio(spec, k, delta, eps_d, eps_s);
            best = if maximise { best.max(v) } else { best.min(v) };
        }
    }
    best
}

/// Economic worst case: the ratio maximised jointly over each pulse's
/// `(delta_i, eps_id, eps_is)`, exploiting that the father-pulse fluctuation
/// is shared by the decoy and signal would-be intensities.
pub fn coherent_ratio_envelope(spec: &PulseEnsembleSpec, k_max: usize) -> Result<RatioEnvelope> {
    let sel = selection_ratio(spec)?;
    check_ordering(spec)?;
    let r_max = (0..=k_max.max(2))
        .map(|k| sel * log_ratio_extreme(spec, k, true).exp())
        .collect();
    Ok(RatioEnvelope {
        r_max,
        r1_min: sel * log_ratio_extreme(spec, 1, false).exp(),
        provenance: Provenance::CoherentClosedForm,
    })
}

/// The textbook corner `(p/p') (mu(1+eps_d) / mu'(1-eps_s))^k exp{(1+delta)[mu'(1-eps_s) - mu(1+eps_d)]}`.
///
/// It coincides with the true box maximum whenever the corner is the
/// maximiser, which holds for `k >= 1` in the usual weak-pulse regime; see
/// [`coherent_ratio_envelope`] for the general case.
pub fn coherent_corner_ratio(spec: &PulseEnsembleSpec, k: usize) -> f64 {
    let f = &spec.fluctuation;
    let decoy = spec.mu * (1.0 + f.eps_d);
    let signal = spec.mu_prime * (1.0 - f.eps_s);
    spec.p / spec.p_prime * (decoy / signal).powi(k as i32) * ((1.0 + f.delta) * (signal - decoy)).exp()
}

fn poisson_pmf(mu: f64, k: usize) -> f64 {
    let ln_fact: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
    (-mu + k as f64 * mu.ln() - ln_fact).exp()
}

/// Largest and smallest Poisson weight `a_k(mu)` over `mu` in `[lo, hi]`.
fn pmf_range(lo: f64, hi: f64, k: usize) -> (f64, f64) {
    // unimodal in mu with its peak at mu = k
    let peak = (k as f64).clamp(lo, hi);
    let max = poisson_pmf(peak, k);
    let min = poisson_pmf(lo, k).min(poisson_pmf(hi, k));
    (max, min)
}

/// Normal worst case: `p max_i a_k(mu_i) / (p' min_i a'_k(mu_i'))` with the
/// extremes taken independently over the intensity ranges.
pub fn normal_worstcase_envelope(spec: &PulseEnsembleSpec, k_max: usize) -> Result<RatioEnvelope> {
    let sel = selection_ratio(spec)?;
    check_ordering(spec)?;
    let (dlo, dhi) = spec.decoy_range();
    let (slo, shi) = spec.signal_range();
    let r_max = (0..=k_max.max(2))
        .map(|k| {
            let (decoy_max, _) = pmf_range(dlo, dhi, k);
            let (_, signal_min) = pmf_range(slo, shi, k);
            sel * decoy_max / signal_min
        })
        .collect();
    let (_, decoy_min) = pmf_range(dlo, dhi, 1);
    let (signal_max, _) = pmf_range(slo, shi, 1);
    Ok(RatioEnvelope {
        r_max,
        r1_min: sel * decoy_min / signal_max,
        provenance: Provenance::CoherentNormal,
    })
}

/// Heralded source: `(1 - gamma_k) / gamma_k`, the same for every pulse.
pub fn ayki_ratio_envelope(params: &AykiSourceParams, k_max: usize) -> Result<RatioEnvelope> {
    if params.gamma(1) <= 0.0 {
        return Err(Error::DegenerateSource("gamma_1 = 0".into()));
    }
    let r_max: Vec<f64> = (0..=k_max.max(2))
        .map(|k| {
            let g = params.gamma(k);
            if g == 0.0 {
                f64::INFINITY
            } else {
                (1.0 - g) / g
            }
        })
        .collect();
    Ok(RatioEnvelope {
        r1_min: r_max[1],
        r_max,
        provenance: Provenance::AykiConstant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{FluctuationBounds, PulseEnsembleSpec};
    use proptest::prelude::*;

    fn spec(delta: f64, eps_d: f64, eps_s: f64, p: f64, p_prime: f64) -> PulseEnsembleSpec {
        PulseEnsembleSpec {
            p,
            p_prime,
            p_0: 1.0 - p - p_prime,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: FluctuationBounds::uniform(delta, eps_d, eps_s),
            truncation: 24,
        }
    }

    /// Dense grid search over the box, independent of the stationary-point analysis.
    fn grid_extreme(s: &PulseEnsembleSpec, k: usize, maximise: bool, n: usize) -> f64 {
        let f = &s.fluctuation;
        let pts = |b: f64| -> Vec<f64> {
            if b == 0.0 {
                vec![0.0]
            } else {
                (0..=n).map(|j| -b + 2.0 * b * j as f64 / n as f64).collect()
            }
        };
        let mut best = if maximise { f64::NEG_INFINITY } else { f64::INFINITY };
        for d in pts(f.delta) {
            for ed in pts(f.eps_d) {
                for es in pts(f.eps_s) {
                    let mu_i = s.mu * (1.0 + d) * (1.0 + ed);
                    let mu_p = s.mu_prime * (1.0 + d) * (1.0 + es);
                    let ratio = s.p * poisson_pmf(mu_i, k) / (s.p_prime * poisson_pmf(mu_p, k));
                    best = if maximise { best.max(ratio) } else { best.min(ratio) };
                }
            }
        }
        best
    }

    #[test]
    fn zero_fluctuation_limit() {
        let s = spec(0.0, 0.0, 0.0, 0.3, 0.6);
        let env = coherent_ratio_envelope(&s, 6).unwrap();
        for k in 0..=6 {
            let expected = 0.5 * (0.2f64 / 0.6).powi(k as i32) * (0.4f64).exp();
            assert!((env.r_max[k] - expected).abs() <= 1e-14 * expected);
        }
        assert_eq!(env.r1_min, env.r_max[1]);
        let normal = normal_worstcase_envelope(&s, 6).unwrap();
        for k in 0..=6 {
            assert!((normal.r_max[k] - env.r_max[k]).abs() <= 1e-12 * env.r_max[k]);
        }
    }

    #[test]
    fn father_pulse_only_closed_form() {
        let s = spec(0.06, 0.0, 0.0, 0.4, 0.4);
        let env = coherent_ratio_envelope(&s, 2).unwrap();
        let expected = (0.2 / 0.6) * (1.06f64 * 0.4).exp();
        assert!((env.r_max[1] - expected).abs() <= 1e-14);
        assert!((coherent_corner_ratio(&s, 1) - expected).abs() <= 1e-14);
    }

    #[test]
    fn box_extremes_match_grid_search() {
        for (d, ed, es) in [
            (0.06, 0.0, 0.0),
            (0.06, 0.02, 0.02),
            (0.1, 0.05, 0.01),
            (0.01, 0.03, 0.05),
        ] {
            let s = spec(d, ed, es, 0.25, 0.65);
            let env = coherent_ratio_envelope(&s, 4).unwrap();
            for k in 0..=4 {
                let g = grid_extreme(&s, k, true, 40);
                assert!((env.r_max[k] - g).abs() <= 1e-9 * g, "k={k}: {} vs {g}", env.r_max[k]);
            }
            let g = grid_extreme(&s, 1, false, 40);
            assert!((env.r1_min - g).abs() <= 1e-9 * g);
        }
    }

    #[test]
    fn corner_is_not_always_the_maximiser() {
        // strong signal: the exponent prefers the high signal corner for k = 1
        let mut s = spec(0.1, 0.0, 0.05, 0.3, 0.6);
        s.mu = 0.3;
        s.mu_prime = 1.0;
        let env = coherent_ratio_envelope(&s, 2).unwrap();
        let g = grid_extreme(&s, 1, true, 200);
        assert!((env.r_max[1] - g).abs() <= 1e-9 * g);
        assert!(env.r_max[1] > coherent_corner_ratio(&s, 1));
    }

    #[test]
    fn normal_dominates_economic() {
        let s = spec(0.06, 0.02, 0.02, 0.2, 0.7);
        let eco = coherent_ratio_envelope(&s, 6).unwrap();
        let nor = normal_worstcase_envelope(&s, 6).unwrap();
        for k in 0..=6 {
            assert!(nor.r_max[k] >= eco.r_max[k]);
        }
        assert!(nor.r_max[1] > eco.r_max[1]);
        assert!(nor.r1_min <= eco.r1_min);
    }

    #[test]
    fn ordering_violation() {
        let mut s = spec(0.0, 0.3, 0.3, 0.3, 0.6);
        s.mu = 0.4;
        s.mu_prime = 0.6;
        assert!(matches!(
            coherent_ratio_envelope(&s, 2),
            Err(Error::ConditionViolated(_))
        ));
        // the envelope itself exists once the precondition is bypassed, and fails the check
        let env = RatioEnvelope::user_supplied(vec![1.0, 0.9, 1.1, 1.2], 0.9).unwrap();
        assert!(!check_condition(&env, 3));
    }

    #[test]
    fn ayki_examples() {
        let perfect = AykiSourceParams::new(0.1, 0.2, 1.0, 0.0).unwrap();
        let env = ayki_ratio_envelope(&perfect, 4).unwrap();
        assert!(env.r_max[1..].iter().all(|r| *r == 0.0));

        let half = AykiSourceParams::new(0.1, 0.2, 0.5, 0.0).unwrap();
        let env = ayki_ratio_envelope(&half, 4).unwrap();
        assert_eq!(env.r_max[1], 1.0);
        assert!(check_condition(&env, 4));

        let steady = AykiSourceParams::new(0.1, 0.0, 0.5, 0.01).unwrap();
        let shaky = AykiSourceParams::new(0.1, 0.2, 0.5, 0.01).unwrap();
        assert_eq!(
            ayki_ratio_envelope(&steady, 4).unwrap(),
            ayki_ratio_envelope(&shaky, 4).unwrap()
        );
    }

    #[test]
    fn coherent_condition_holds_without_fluctuation() {
        let env = coherent_ratio_envelope(&spec(0.0, 0.0, 0.0, 0.3, 0.6), 20).unwrap();
        assert!(check_condition(&env, 20));
    }

    proptest! {
        #[test]
        fn economic_never_exceeds_normal(
            mu in 0.05f64..0.5, gap in 0.1f64..0.5, delta in 0.0f64..0.1, eps_d in 0.0f64..0.05, eps_s in 0.0f64..0.05,
        ) {
            let mut s = spec(delta, eps_d, eps_s, 0.3, 0.6);
            s.mu = mu;
            s.mu_prime = (mu + gap).min(0.95);
            prop_assume!(s.mu * (1.0 + eps_d) < s.mu_prime * (1.0 - eps_s));
            let eco = coherent_ratio_envelope(&s, 8).unwrap();
            let nor = normal_worstcase_envelope(&s, 8).unwrap();
            for k in 0..=8 {
                prop_assert!(eco.r_max[k] <= nor.r_max[k] * (1.0 + 1e-12));
            }
            prop_assert!(eco.r1_min >= nor.r1_min * (1.0 - 1e-12));
            prop_assert!(check_condition(&eco, 8));
        }
    }
}
