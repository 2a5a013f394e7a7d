use crate::error::{ensure, Result};
use crate::simulator::Tally;

pub const MAX_PULSES: usize = 10_000;
pub const MAX_TRUNCATION: usize = 6;

const SUM_TOL: f64 = 1e-12;

/// One time slot of a micro-instance.
///
/// `occupancy[k]` is the weight with which the pulse is a `k`-photon pulse
/// (one-hot for an explicit Fock assignment, `p a_k + p' a'_k` for an
/// averaged pulse) and `clicks[k] <= occupancy[k]` the part of it that
/// caused a count. Clicks are chosen freely, not drawn from a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroPulse {
    pub p: f64,
    pub p_prime: f64,
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub clicks: Vec<f64>,
    /// Bit-flip probability of a single-photon count in this slot.
    pub e1: f64,
}

impl MicroPulse {
    /// `P_{d|k} = p a_k / (p a_k + p' a'_k)`.
    pub fn p_decoy_given(&self, k: usize) -> f64 {
        let (d, s) = (self.p * self.a[k], self.p_prime * self.a_prime[k]);
        d / (d + s)
    }

    pub fn p_signal_given(&self, k: usize) -> f64 {
        let (d, s) = (self.p * self.a[k], self.p_prime * self.a_prime[k]);
        s / (d + s)
    }

    /// `p a_k / (p' a'_k)`; infinite when the signal branch is empty.
    pub fn ratio(&self, k: usize) -> f64 {
        (self.p * self.a[k]) / (self.p_prime * self.a_prime[k])
    }

    pub fn clicked(&self) -> bool {
        self.clicks.iter().any(|c| *c > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroInstance {
    pulses: Vec<MicroPulse>,
    truncation: usize,
}

impl MicroInstance {
    pub fn new(pulses: Vec<MicroPulse>) -> Result<Self> {
        ensure(!pulses.is_empty() && pulses.len() <= MAX_PULSES, || {
            format!("micro-instance needs 1..={MAX_PULSES} pulses, got {}", pulses.len())
        })?;
        let len = pulses[0].a.len();
        ensure((2..=MAX_TRUNCATION + 1).contains(&len), || {
            format!(
                "photon-number vectors need length 2..={}, got {len}",
                MAX_TRUNCATION + 1
            )
        })?;
        for (i, q) in pulses.iter().enumerate() {
            let at = i + 1;
            ensure(
                [&q.a, &q.a_prime, &q.occupancy, &q.clicks]
                    .iter()
                    .all(|v| v.len() == len),
                || format!("pulse {at}: vector lengths differ"),
            )?;
            ensure(
                q.p >= 0.0 && q.p_prime >= 0.0 && (q.p + q.p_prime - 1.0).abs() <= SUM_TOL,
                || format!("pulse {at}: p + p' must be 1"),
            )?;
            for (name, v) in [("a", &q.a), ("a'", &q.a_prime), ("occupancy", &q.occupancy)] {
                ensure(v.iter().all(|x| *x >= 0.0), || {
                    format!("pulse {at}: negative entry in {name}")
                })?;
                let s: f64 = v.iter().sum();
                ensure((s - 1.0).abs() <= SUM_TOL, || format!("pulse {at}: {name} sums to {s}"))?;
            }
            for k in 0..len {
                ensure(q.clicks[k] >= 0.0 && q.clicks[k] <= q.occupancy[k] + SUM_TOL, || {
                    format!("pulse {at}: click weight for k={k} outside [0, occupancy]")
                })?;
                let weight = q.p * q.a[k] + q.p_prime * q.a_prime[k];
                ensure(q.occupancy[k] == 0.0 || weight > 0.0, || {
                    format!("pulse {at}: occupied k={k} branch has zero emission probability")
                })?;
                ensure(q.clicks[k] == 0.0 || q.p_prime * q.a_prime[k] > 0.0, || {
                    format!("pulse {at}: clicked k={k} branch has no signal component")
                })?;
            }
            ensure((0.0..=1.0).contains(&q.e1), || format!("pulse {at}: e1 outside [0,1]"))?;
        }
        Ok(Self {
            pulses,
            truncation: len - 1,
        })
    }

    /// Instance where slot `i` holds exactly `photon_numbers[i]` photons and
    /// counts iff `clicked[i]`.
    pub fn from_fock_assignment(
        sources: &[(f64, Vec<f64>, Vec<f64>)],
        photon_numbers: &[usize],
        clicked: &[bool],
        e1: &[f64],
    ) -> Result<Self> {
        ensure(
            sources.len() == photon_numbers.len()
                && clicked.len() == photon_numbers.len()
                && e1.len() == photon_numbers.len(),
            || "per-pulse inputs differ in length".into(),
        )?;
        let pulses = sources
            .iter()
            .zip(photon_numbers)
            .zip(clicked)
            .zip(e1)
            .map(|((((p, a, a_prime), &k), &c), &e)| {
                let mut occupancy = vec![0.0; a.len()];
                let mut clicks = vec![0.0; a.len()];
                if k < a.len() {
                    occupancy[k] = 1.0;
                    if c {
                        clicks[k] = 1.0;
                    }
                }
                MicroPulse {
                    p: *p,
                    p_prime: 1.0 - p,
                    a: a.clone(),
                    a_prime: a_prime.clone(),
                    occupancy,
                    clicks,
                    e1: e,
                }
            })
            .collect();
        Self::new(pulses)
    }

    pub fn pulses(&self) -> &[MicroPulse] {
        &self.pulses
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// 1-based indices of slots that caused a count (`C`).
    pub fn click_set(&self) -> Vec<usize> {
        (0..self.pulses.len())
            .filter(|&i| self.pulses[i].clicked())
            .map(|i| i + 1)
            .collect()
    }

    /// 1-based indices of `k`-photon slots that caused a count (`c_k`).
    pub fn photon_class(&self, k: usize) -> Vec<usize> {
        (0..self.pulses.len())
            .filter(|&i| self.pulses[i].clicks.get(k).is_some_and(|c| *c > 0.0))
            .map(|i| i + 1)
            .collect()
    }

    /// `max_{j in c_k} p_j a_kj / (p'_j a'_kj)`; 0 for an empty class.
    pub fn class_max_ratio(&self, k: usize) -> f64 {
        self.pulses
            .iter()
            .filter(|q| q.clicks[k] > 0.0)
            .map(|q| q.ratio(k))
            .fold(0.0, f64::max)
    }

    /// Extremes of `p_j a_kj / (p'_j a'_kj)` over all of `C`.
    pub fn global_ratio_range(&self, k: usize) -> (f64, f64) {
        self.pulses
            .iter()
            .filter(|q| q.clicked())
            .map(|q| q.ratio(k))
            .fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }
}

/// Exact expected counts: `n_kd = sum_{i in c_k} P_{d,i|k}` with click weights.
///
/// Only single-photon errors are modelled, so `err_d = err_1d` and
/// `err_s = err_1s`.
pub fn exact_counts(instance: &MicroInstance) -> Tally {
    let j = instance.truncation();
    let mut t = Tally::empty(j, [0.0; 3]);
    for q in instance.pulses() {
        for k in 0..=j {
            if q.occupancy[k] > 0.0 {
                t.sent_kd[k] += q.occupancy[k] * q.p_decoy_given(k);
                t.sent_ks[k] += q.occupancy[k] * q.p_signal_given(k);
            }
            if q.clicks[k] > 0.0 {
                t.n_kd[k] += q.clicks[k] * q.p_decoy_given(k);
                t.n_ks[k] += q.clicks[k] * q.p_signal_given(k);
            }
        }
        if q.clicks[1] > 0.0 {
            t.err_1d += q.clicks[1] * q.p_decoy_given(1) * q.e1;
            t.err_1s += q.clicks[1] * q.p_signal_given(1) * q.e1;
        }
    }
    t.pulses = instance.len() as f64;
    t.sent_d = t.sent_kd.iter().sum();
    t.sent_s = t.sent_ks.iter().sum();
    t.n_d = t.n_kd.iter().sum();
    t.n_s = t.n_ks.iter().sum();
    t.err_d = t.err_1d;
    t.err_s = t.err_1s;
    t.selection = [t.sent_d / t.pulses, t.sent_s / t.pulses, 0.0];
    t
}

/// Per-source yields `n_kd / N_kd` and `n_ks / N_ks` for each `k`; `None`
/// where a source emitted no `k`-photon weight.
pub fn per_source_yields(instance: &MicroInstance) -> Vec<(Option<f64>, Option<f64>)> {
    let t = exact_counts(instance);
    (0..=instance.truncation())
        .map(|k| {
            let y = |n: f64, sent: f64| (sent > 0.0).then(|| n / sent);
            (y(t.n_kd[k], t.sent_kd[k]), y(t.n_ks[k], t.sent_ks[k]))
        })
        .collect()
}

/// Whether the per-photon-number yields of the two sources coincide (to
/// `rel_tol`) for every `k` both sources populate.
pub fn equal_yields_hold(instance: &MicroInstance, rel_tol: f64) -> bool {
    per_source_yields(instance).into_iter().all(|pair| match pair {
        (Some(d), Some(s)) => (d - s).abs() <= rel_tol * d.abs().max(s.abs()).max(f64::MIN_POSITIVE),
        _ => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_pulse(p: f64, clicks: Vec<f64>) -> MicroPulse {
        let a = vec![0.5, 0.3, 0.2];
        let a_prime = vec![0.3, 0.4, 0.3];
        let occupancy: Vec<f64> = (0..3).map(|k| p * a[k] + (1.0 - p) * a_prime[k]).collect();
        let clicks = clicks.iter().zip(&occupancy).map(|(c, o)| c * o).collect();
        MicroPulse {
            p,
            p_prime: 1.0 - p,
            a,
            a_prime,
            occupancy,
            clicks,
            e1: 0.05,
        }
    }

    #[test]
    fn decoy_only_slot_has_no_signal_counts() {
        let a = vec![0.6, 0.3, 0.1];
        let inst = MicroInstance::new(vec![MicroPulse {
            p: 1.0,
            p_prime: 0.0,
            a: a.clone(),
            a_prime: vec![0.5, 0.3, 0.2],
            occupancy: a,
            clicks: vec![0.0; 3],
            e1: 0.0,
        }])
        .unwrap();
        let t = exact_counts(&inst);
        assert!(t.n_ks.iter().all(|n| *n == 0.0));
        assert_eq!(t.sent_s, 0.0);
    }

    #[test]
    fn counts_are_additive() {
        let one = MicroInstance::new(vec![uniform_pulse(0.3, vec![0.1, 0.7, 0.9])]).unwrap();
        let two = MicroInstance::new(vec![uniform_pulse(0.3, vec![0.1, 0.7, 0.9]); 2]).unwrap();
        let (a, b) = (exact_counts(&one), exact_counts(&two));
        for ((_, x), (_, y)) in a.fields().into_iter().zip(b.fields()) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn validation_rejects_bad_slots() {
        let mut q = uniform_pulse(0.3, vec![1.0, 1.0, 1.0]);
        q.p = 0.5;
        assert!(MicroInstance::new(vec![q]).is_err());
        let mut q = uniform_pulse(0.3, vec![1.0, 1.0, 1.0]);
        q.clicks[1] = 0.9;
        assert!(MicroInstance::new(vec![q]).is_err());
        let mut q = uniform_pulse(0.3, vec![0.0; 3]);
        q.a = vec![0.5; 8];
        assert!(MicroInstance::new(vec![q]).is_err());
    }

    #[test]
    fn constant_ratio_instance_has_equal_yields() {
        let inst = MicroInstance::new(vec![
            uniform_pulse(0.3, vec![0.0, 1.0, 0.5]),
            uniform_pulse(0.3, vec![1.0, 0.2, 0.0]),
        ])
        .unwrap();
        assert!(equal_yields_hold(&inst, 1e-12));
    }
}
