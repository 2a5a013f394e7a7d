use std::fmt;

use super::instance::{exact_counts, MicroInstance};
use crate::error::{Error, Result};

/// Absolute tolerance per unit of click weight.
pub const CHAIN_TOL: f64 = 1e-12;

/// Slack terms of the single-photon bound and the intermediate sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackTerms {
    /// `n_1s - N~_1s`.
    pub xi1: f64,
    /// `Lambda' - Lambda~`.
    pub xi2: f64,
    /// `sum_{k>=2} sum_{c_k} (R_2 - R_k) / (1 + R_k)`.
    pub xi3: f64,
    /// Multi-photon decoy counts `sum_{k>=2} sum_{c_k} P_{d|k}`.
    pub lambda: f64,
    /// Multi-photon signal counts.
    pub lambda_prime: f64,
    /// `sum_{k>=2} sum_{c_k} 1 / (1 + R_k)`.
    pub lambda_tilde: f64,
    /// `sum_{c_1} 1 / (1 + R_1)`.
    pub n1s_tilde: f64,
    /// Per-class maxima `R_k = max_{j in c_k}` of the decoy/signal ratio.
    pub class_max: [f64; 7],
}

impl SlackTerms {
    pub fn r1(&self) -> f64 {
        self.class_max[1]
    }

    pub fn r2(&self) -> f64 {
        self.class_max[2]
    }
}

/// `R_k <= R_2 <= R_1` for every `k >= 2`, with maxima over the click classes.
pub fn condition_holds(instance: &MicroInstance) -> bool {
    let r: Vec<f64> = (0..=instance.truncation())
        .map(|k| instance.class_max_ratio(k))
        .collect();
    r[2] <= r[1] && r.iter().skip(3).all(|rk| *rk <= r[2]) && r.iter().all(|x| x.is_finite())
}

pub fn slack_terms(instance: &MicroInstance) -> Result<SlackTerms> {
    let j = instance.truncation();
    let mut class_max = [0.0; 7];
    for (k, slot) in class_max.iter_mut().enumerate().take(j + 1) {
        *slot = instance.class_max_ratio(k);
    }
    if !condition_holds(instance) {
        return Err(Error::ConditionViolated(format!(
            "click-class ratio maxima {:?} are not ordered R_k <= R_2 <= R_1",
            &class_max[..=j]
        )));
    }
    let (r1, r2) = (class_max[1], class_max[2]);
    let mut s = SlackTerms {
        xi1: 0.0,
        xi2: 0.0,
        xi3: 0.0,
        lambda: 0.0,
        lambda_prime: 0.0,
        lambda_tilde: 0.0,
        n1s_tilde: 0.0,
        class_max,
    };
    for q in instance.pulses() {
        let w1 = q.clicks[1];
        if w1 > 0.0 {
            let tilde = w1 / (1.0 + r1);
            s.n1s_tilde += tilde;
            s.xi1 += w1 * q.p_signal_given(1) - tilde;
        }
        for k in 2..=j {
            let w = q.clicks[k];
            if w == 0.0 {
                continue;
            }
            let rk = class_max[k];
            let tilde = w / (1.0 + rk);
            s.lambda += w * q.p_decoy_given(k);
            s.lambda_prime += w * q.p_signal_given(k);
            s.lambda_tilde += tilde;
            s.xi2 += w * q.p_signal_given(k) - tilde;
            s.xi3 += w * (r2 - rk) / (1.0 + rk);
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `lhs == rhs`.
    Equal,
    /// `lhs >= rhs`.
    AtLeast,
}

/// One checked step: `lhs (relation) rhs` with the signed residual.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditStep {
    pub name: &'static str,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// Not evaluated (e.g. a precondition of this step fails); counts as passed.
    pub skipped: bool,
}

impl AuditStep {
    fn new(name: &'static str, relation: Relation, lhs: f64, rhs: f64, scale: f64) -> Self {
        Self {
            name,
            relation,
            lhs,
            rhs,
            tolerance: CHAIN_TOL * scale.max(1.0),
            skipped: false,
        }
    }

    fn skipped(name: &'static str, relation: Relation) -> Self {
        Self {
            name,
            relation,
            lhs: f64::NAN,
            rhs: f64::NAN,
            tolerance: 0.0,
            skipped: true,
        }
    }

    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn passed(&self) -> bool {
        if self.skipped {
            return true;
        }
        let r = self.residual();
        match self.relation {
            Relation::Equal => r.abs() <= self.tolerance,
            Relation::AtLeast => r >= -self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub slack: SlackTerms,
    pub steps: Vec<AuditStep>,
    /// `n_1s` of the instance.
    pub n1s: f64,
    /// Right-hand side of the bound with click-class maxima.
    pub bound: f64,
}

impl AuditRecord {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(AuditStep::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditStep> {
        self.steps.iter().filter(|s| !s.passed())
    }
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.slack;
        writeln!(f, "xi1 = {:e}  xi2 = {:e}  xi3 = {:e}", s.xi1, s.xi2, s.xi3)?;
        writeln!(
            f,
            "R1 = {}  R2 = {}  n1s = {}  bound = {}",
            s.r1(),
            s.r2(),
            self.n1s,
            self.bound
        )?;
        for step in &self.steps {
            let rel = match step.relation {
                Relation::Equal => "==",
                Relation::AtLeast => ">=",
            };
            if step.skipped {
                writeln!(f, "  [skip] {}", step.name)?;
            } else {
                writeln!(
                    f,
                    "  [{}] {:<28} {} {} {}  residual {:+e} (tol {:e})",
                    if step.passed() { " ok " } else { "FAIL" },
                    step.name,
                    step.lhs,
                    rel,
                    step.rhs,
                    step.residual(),
                    step.tolerance
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluate every step of the single-photon bound derivation on an instance.
pub fn verify_chain(instance: &MicroInstance) -> Result<AuditRecord> {
    let s = slack_terms(instance)?;
    let t = exact_counts(instance);
    let (r1, r2) = (s.r1(), s.r2());
    let (n_d, n_s) = (t.n_d, t.n_s);
    let (n0d, n0s, n1s) = (t.n_kd[0], t.n_ks[0], t.n_ks[1]);
    let scale = n_d + n_s;
    let rscale = scale * (1.0 + r1);
    let step = |name, rel, lhs, rhs, sc| AuditStep::new(name, rel, lhs, rhs, sc);

    let mut steps = vec![
        step("n1s >= N~1s", Relation::AtLeast, n1s, s.n1s_tilde, scale),
        step("xi1 >= 0", Relation::AtLeast, s.xi1, 0.0, scale),
        step(
            "Lambda' >= Lambda~",
            Relation::AtLeast,
            s.lambda_prime,
            s.lambda_tilde,
            scale,
        ),
        step("xi2 >= 0", Relation::AtLeast, s.xi2, 0.0, scale),
        step("xi3 >= 0", Relation::AtLeast, s.xi3, 0.0, rscale),
        step(
            "n1d == R1 N~1s - xi1",
            Relation::Equal,
            t.n_kd[1],
            r1 * s.n1s_tilde - s.xi1,
            rscale,
        ),
        step(
            "Lambda == R2 Lambda~ - xi2 - xi3",
            Relation::Equal,
            s.lambda,
            r2 * s.lambda_tilde - s.xi2 - s.xi3,
            rscale,
        ),
        step(
            "N_d decomposition",
            Relation::Equal,
            n_d,
            n0d + r1 * s.n1s_tilde + r2 * s.lambda_tilde - s.xi1 - s.xi2 - s.xi3,
            rscale,
        ),
        step(
            "N_s decomposition",
            Relation::Equal,
            n_s,
            n0s + s.n1s_tilde + s.lambda_tilde + s.xi1 + s.xi2,
            scale,
        ),
    ];

    let numerator = n_d - r2 * n_s + r2 * n0s - n0d;
    let denominator = r1 - r2;
    let bound = if denominator > 0.0 {
        numerator / denominator
    } else {
        f64::NAN
    };
    if denominator > 0.0 {
        let solved = (numerator + r2 * (s.xi1 + s.xi2) + s.xi1 + s.xi2 + s.xi3) / denominator;
        let sc = rscale / denominator;
        steps.push(step("N~1s solved form", Relation::Equal, s.n1s_tilde, solved, sc));
        steps.push(step(
            "N~1s >= bound (class max)",
            Relation::AtLeast,
            s.n1s_tilde,
            bound,
            sc,
        ));
        steps.push(step("n1s >= bound (class max)", Relation::AtLeast, n1s, bound, sc));
    } else {
        steps.push(AuditStep::skipped("N~1s solved form", Relation::Equal));
        steps.push(AuditStep::skipped("N~1s >= bound (class max)", Relation::AtLeast));
        steps.push(AuditStep::skipped("n1s >= bound (class max)", Relation::AtLeast));
    }

    // the same bound with maxima over all of C, when the ordering survives there
    let g: Vec<f64> = (0..=instance.truncation())
        .map(|k| instance.global_ratio_range(k).1)
        .collect();
    let global_ok = g[2] < g[1] && g.iter().skip(3).all(|x| *x <= g[2]);
    if global_ok {
        let gb = (n_d - g[2] * n_s + g[2] * n0s - n0d) / (g[1] - g[2]);
        steps.push(step(
            "n1s >= bound (max over C)",
            Relation::AtLeast,
            n1s,
            gb,
            scale * (1.0 + g[1]) / (g[1] - g[2]),
        ));
    } else {
        steps.push(AuditStep::skipped("n1s >= bound (max over C)", Relation::AtLeast));
    }

    Ok(AuditRecord {
        slack: s,
        steps,
        n1s,
        bound,
    })
}

/// Exact single-photon QBERs and the ratio sandwich around them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundCheck {
    pub e1d: f64,
    pub e1s: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `(r_min / r_max) e1d <= e1s <= (r_max / r_min) e1d` with the ratio range
/// over `C`. `None` when there are no single-photon counts.
pub fn error_bound_check(instance: &MicroInstance) -> Option<ErrorBoundCheck> {
    let t = exact_counts(instance);
    let (e1d, e1s) = (t.e1d()?, t.e1s()?);
    let (lo, hi) = instance.global_ratio_range(1);
    if !(lo > 0.0 && hi.is_finite()) {
        return None;
    }
    let spread = hi / lo;
    let (lower, upper) = (e1d / spread, e1d * spread);
    let tol = CHAIN_TOL * spread;
    Some(ErrorBoundCheck {
        e1d,
        e1s,
        lower,
        upper,
        holds: e1s >= lower - tol && e1s <= upper + tol,
    })
}
