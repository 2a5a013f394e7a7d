use rand::Rng;

use super::chain::condition_holds;
use super::instance::{MicroInstance, MicroPulse, MAX_TRUNCATION};
use crate::error::{Error, Result};

/// Poisson weights on `0..=j`, renormalised so the vector sums to 1 exactly
/// as far as rounding allows.
pub fn truncated_poisson(mu: f64, j: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(j + 1);
    let mut term = (-mu).exp();
    for k in 0..=j {
        if k > 0 {
            term *= mu / k as f64;
        }
        w.push(term);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub max_pulses: usize,
    /// Draws rejected for violating the ratio ordering before giving up.
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            max_pulses: 60,
            max_attempts: 500,
        }
    }
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-9).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Decoy/signal photon-number vectors for one slot.
fn random_sources<R: Rng + ?Sized>(rng: &mut R, j: usize, family: u8) -> (Vec<f64>, Vec<f64>) {
    match family {
        0 => {
            // attenuated common father pulse with large per-slot fluctuation
            let mu = rng.gen_range(0.05..0.5);
            let mu_prime = mu * rng.gen_range(1.5..6.0);
            let delta = rng.gen_range(-0.3..0.3);
            let (ed, es) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            (
                truncated_poisson(mu * (1.0 + delta) * (1.0 + ed), j),
                truncated_poisson(mu_prime * (1.0 + delta) * (1.0 + es), j),
            )
        }
        _ => {
            // arbitrary signal vector, decoy tilted towards low photon numbers
            let a_prime = random_simplex(rng, j + 1);
            let t: f64 = rng.gen_range(0.05..0.9);
            let mut a: Vec<f64> = a_prime.iter().enumerate().map(|(k, x)| x * t.powi(k as i32)).collect();
            let total: f64 = a.iter().sum();
            a.iter_mut().for_each(|x| *x /= total);
            (a, a_prime)
        }
    }
}

fn random_slot<R: Rng + ?Sized>(rng: &mut R, j: usize, p: f64, family: u8, bias: f64) -> MicroPulse {
    let (a, a_prime) = random_sources(rng, j, family);
    let p_prime = 1.0 - p;
    let mixture: Vec<f64> = (0..=j).map(|k| p * a[k] + p_prime * a_prime[k]).collect();
    let fock = rng.gen_bool(0.5);
    let (occupancy, clicks) = if fock {
        // explicit photon number and a hard click decision
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k_i = j;
        for (k, w) in mixture.iter().enumerate() {
            acc += w;
            if u < acc {
                k_i = k;
                break;
            }
        }
        let mut occ = vec![0.0; j + 1];
        occ[k_i] = 1.0;
        let mut clk = vec![0.0; j + 1];
        let click_rate = 0.3 + 0.6 * rng.gen::<f64>();
        if rng.gen_bool(click_rate) {
            clk[k_i] = 1.0;
        }
        (occ, clk)
    } else {
        // adversary-chosen click weights, optionally skewed by the ratio
        let clk = (0..=j)
            .map(|k| {
                let ratio = (p * a[k]) / (p_prime * a_prime[k]);
                let skew = (ratio / (1.0 + ratio)).powf(bias);
                (mixture[k] * rng.gen::<f64>() * skew).min(mixture[k])
            })
            .collect();
        (mixture, clk)
    };
    MicroPulse {
        p,
        p_prime,
        a,
        a_prime,
        occupancy,
        clicks,
        e1: rng.gen_range(0.0..0.25),
    }
}

/// A random instance satisfying the ratio ordering, by rejection.
/// Returns the instance and the number of rejected draws.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, cfg: &GeneratorConfig) -> Result<(MicroInstance, usize)> {
    for attempt in 0..cfg.max_attempts {
        let j = rng.gen_range(2..=MAX_TRUNCATION);
        let m = rng.gen_range(1..=cfg.max_pulses.max(1));
        let family = rng.gen_range(0..2u8);
        let p_base = rng.gen_range(0.05..0.95);
        let jitter: f64 = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..0.05)
        };
        let bias = rng.gen_range(-1.0..1.0);
        let pulses = (0..m)
            .map(|_| {
                let p = (p_base + jitter * rng.gen_range(-1.0f64..1.0)).clamp(0.01, 0.99);
                random_slot(rng, j, p, family, bias)
            })
            .collect();
        let inst = MicroInstance::new(pulses)?;
        let strict = {
            let (r1, r2) = (inst.class_max_ratio(1), inst.class_max_ratio(2));
            r1 > r2
        };
        if strict && condition_holds(&inst) {
            return Ok((inst, attempt));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no ordered instance after {} attempts",
        cfg.max_attempts
    )))
}

fn coherent_slot(p: f64, mu: f64, mu_prime: f64, j: usize, clicks: Vec<f64>, e1: f64) -> MicroPulse {
    let (a, a_prime) = (truncated_poisson(mu, j), truncated_poisson(mu_prime, j));
    let occupancy: Vec<f64> = (0..=j).map(|k| p * a[k] + (1.0 - p) * a_prime[k]).collect();
    let clicks = clicks.iter().zip(&occupancy).map(|(c, o)| c * o).collect();
    MicroPulse {
        p,
        p_prime: 1.0 - p,
        a,
        a_prime,
        occupancy,
        clicks,
        e1,
    }
}

/// Correlated fluctuation at its worst: every single-photon branch of the
/// slots with the largest decoy/signal ratio clicks, nothing else in the
/// single-photon class does, and multi-photon clicks come from the slots
/// whose ratios are smallest.
pub fn adversarial_instance() -> MicroInstance {
    let j = 4;
    let (mu, mu_prime, p) = (0.2, 0.6, 0.25);
    let corners = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut pulses = Vec::new();
    for (n, &d) in corners.iter().enumerate() {
        for &ed in &corners {
            for &es in &corners {
                let mu_i = mu * (1.0 + 0.06 * d) * (1.0 + 0.02 * ed);
                let mu_prime_i = mu_prime * (1.0 + 0.06 * d) * (1.0 + 0.02 * es);
                // large ratio <=> decoy pushed up and signal pushed down
                let hot = ed - es >= 1.0;
                let clicks = if hot {
                    vec![1.0, 1.0, 0.0, 0.0, 0.0]
                } else {
                    vec![1.0, 0.0, 1.0, 1.0, 1.0]
                };
                pulses.push(coherent_slot(p, mu_i, mu_prime_i, j, clicks, 0.01 + 0.01 * n as f64));
            }
        }
    }
    MicroInstance::new(pulses).expect("adversarial instance is well formed")
}

/// Two kinds of slot with different ratios; single-photon clicks come only
/// from the first kind. The two sources then see different single-photon
/// yields, while the ratio ordering over the click classes still holds.
pub fn unequal_yield_witness() -> MicroInstance {
    let j = 3;
    let p = 0.5;
    let mut pulses = Vec::new();
    for _ in 0..5 {
        pulses.push(coherent_slot(p, 0.2, 0.6, j, vec![1.0, 1.0, 0.0, 0.0], 0.02));
        pulses.push(coherent_slot(p, 0.26, 0.5, j, vec![1.0, 0.0, 1.0, 1.0], 0.02));
    }
    MicroInstance::new(pulses).expect("witness instance is well formed")
}

/// Photon numbers and clicks of a ten-slot toy run.
pub const TEN_PULSE_PHOTONS: [usize; 10] = [0, 0, 1, 2, 0, 1, 3, 2, 1, 0];
pub const TEN_PULSE_CLICKS: [usize; 6] = [2, 3, 5, 6, 9, 10];

/// The ten-slot toy run as a Fock-assigned instance, with a mildly
/// fluctuating coherent source behind each slot.
pub fn ten_pulse_example() -> MicroInstance {
    let j = 3;
    let sources: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..10)
        .map(|i| {
            let f = 1.0 + 0.02 * ((i % 5) as f64 - 2.0);
            (0.3, truncated_poisson(0.2 * f, j), truncated_poisson(0.6 * f, j))
        })
        .collect();
    let clicked: Vec<bool> = (1..=10).map(|i| TEN_PULSE_CLICKS.contains(&i)).collect();
    MicroInstance::from_fock_assignment(&sources, &TEN_PULSE_PHOTONS, &clicked, &[0.03; 10])
        .expect("ten-pulse example is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::chain::verify_chain;
    use crate::oracle::instance::equal_yields_hold;
    use crate::rng::{substream, Purpose};

    #[test]
    fn ten_pulse_classes() {
        let inst = ten_pulse_example();
        assert_eq!(inst.click_set(), vec![2, 3, 5, 6, 9, 10]);
        assert_eq!(inst.photon_class(0), vec![2, 5, 10]);
        assert_eq!(inst.photon_class(1), vec![3, 6, 9]);
        assert!(inst.photon_class(2).is_empty());
        assert!(verify_chain(&inst).unwrap().passed());
    }

    #[test]
    fn witness_breaks_equal_yields_but_not_the_chain() {
        let inst = unequal_yield_witness();
        assert!(!equal_yields_hold(&inst, 1e-6));
        let rec = verify_chain(&inst).unwrap();
        assert!(rec.passed(), "{rec}");
    }

    #[test]
    fn adversarial_instance_passes() {
        let rec = verify_chain(&adversarial_instance()).unwrap();
        assert!(rec.passed(), "{rec}");
        assert!(rec.slack.xi1 > 0.0);
    }

    #[test]
    fn generator_yields_ordered_instances() {
        let mut rng = substream(11, Purpose::Sampling, 0);
        for _ in 0..50 {
            let (inst, _) = random_instance(&mut rng, &GeneratorConfig::default()).unwrap();
            assert!(condition_holds(&inst));
        }
    }

    #[test]
    fn truncated_poisson_sums_to_one() {
        for mu in [0.01, 0.3, 2.0] {
            let s: f64 = truncated_poisson(mu, 5).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }
}
