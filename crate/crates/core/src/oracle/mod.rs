//! Exact small-ensemble verifier for the single-photon bound derivation.
//!
//! A [`MicroInstance`] fixes every slot's source weights and which
//! photon-number branches caused a count. Nothing is sampled: the counts are
//! exact sums, so each step of the derivation can be checked as an identity
//! or inequality with a residual.

mod chain;
mod generate;
mod instance;

pub use chain::{
    condition_holds, error_bound_check, slack_terms, verify_chain, AuditRecord, AuditStep, ErrorBoundCheck, Relation,
    SlackTerms, CHAIN_TOL,
};
pub use generate::{
    adversarial_instance, random_instance, ten_pulse_example, truncated_poisson, unequal_yield_witness,
    GeneratorConfig, TEN_PULSE_CLICKS, TEN_PULSE_PHOTONS,
};
pub use instance::{
    equal_yields_hold, exact_counts, per_source_yields, MicroInstance, MicroPulse, MAX_PULSES, MAX_TRUNCATION,
};

use crate::par::{map_indexed, Execution};
use crate::rng::{substream, Purpose};

/// Outcome of one randomized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    pub index: usize,
    pub rejected_draws: usize,
    pub chain_passed: bool,
    pub xi: [f64; 3],
    /// `None` when the instance has no single-photon counts.
    pub error_sandwich: Option<bool>,
    /// Pretty-printed audit record or generator error, for failures only.
    pub detail: Option<String>,
}

impl InstanceOutcome {
    pub fn passed(&self) -> bool {
        self.chain_passed && self.error_sandwich != Some(false) && self.xi.iter().all(|x| *x >= -CHAIN_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub seed: u64,
    pub outcomes: Vec<InstanceOutcome>,
}

impl BatchSummary {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.outcomes.len()
    }

    pub fn min_xi(&self) -> [f64; 3] {
        let mut m = [f64::INFINITY; 3];
        for o in &self.outcomes {
            for (slot, x) in m.iter_mut().zip(o.xi) {
                *slot = slot.min(x);
            }
        }
        m
    }

    pub fn rejected_draws(&self) -> usize {
        self.outcomes.iter().map(|o| o.rejected_draws).sum()
    }

    pub fn error_checks(&self) -> (usize, usize) {
        let checked: Vec<bool> = self.outcomes.iter().filter_map(|o| o.error_sandwich).collect();
        (checked.iter().filter(|b| **b).count(), checked.len())
    }
}

/// Verify one instance end to end.
pub fn check_instance(index: usize, instance: &MicroInstance, rejected_draws: usize) -> InstanceOutcome {
    let error_sandwich = error_bound_check(instance).map(|c| c.holds);
    match verify_chain(instance) {
        Ok(rec) => {
            let s = rec.slack;
            let passed = rec.passed();
            InstanceOutcome {
                index,
                rejected_draws,
                chain_passed: passed,
                xi: [s.xi1, s.xi2, s.xi3],
                error_sandwich,
                detail: (!passed || error_sandwich == Some(false)).then(|| rec.to_string()),
            }
        }
        Err(e) => InstanceOutcome {
            index,
            rejected_draws,
            chain_passed: false,
            xi: [f64::NAN; 3],
            error_sandwich,
            detail: Some(e.to_string()),
        },
    }
}

/// Draw `count` ordered random instances from `seed` and verify each. Instance
/// `i` uses its own substream, so results do not depend on `execution`.
pub fn run_batch(count: usize, seed: u64, cfg: &GeneratorConfig, execution: Execution) -> BatchSummary {
    let outcomes = map_indexed(count, execution, |i| {
        let mut rng = substream(seed, Purpose::Sampling, i as u64);
        match random_instance(&mut rng, cfg) {
            Ok((inst, rejected)) => check_instance(i, &inst, rejected),
            Err(e) => InstanceOutcome {
                index: i,
                rejected_draws: cfg.max_attempts,
                chain_passed: false,
                xi: [f64::NAN; 3],
                error_sandwich: None,
                detail: Some(e.to_string()),
            },
        }
    });
    BatchSummary { seed, outcomes }
}
