//! Ground-truth protocol runs.
//!
//! Two engines produce a [`Tally`]: a chunked Monte-Carlo engine that follows
//! every pulse, and an expectation engine that integrates the per-pulse
//! probabilities over a fluctuation grid. [`observe`] projects a tally to the
//! quantities an experiment actually sees.

mod expectation;
mod monte_carlo;

pub use expectation::{run_expectation, run_expectation_with, FluctuationGrid};
pub use monte_carlo::{run_monte_carlo, MonteCarloConfig, MonteCarloRun};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::source::{
    ayki_split, coherent_fock, pdc_number_dist, realized_intensities, AykiSourceParams, DrawLaw, FluctuationBounds,
    FluctuationDraw, PulseEnsembleSpec,
};

/// Which virtual source produced a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceTag {
    Decoy,
    Signal,
    Vacuum,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Decoy => "decoy",
            SourceTag::Signal => "signal",
            SourceTag::Vacuum => "vacuum",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A source configuration the engines can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    /// Attenuated laser with decoy/signal (and optionally vacuum) settings.
    Coherent(PulseEnsembleSpec),
    /// Passive heralded PDC source.
    Ayki {
        params: AykiSourceParams,
        law: DrawLaw,
        truncation: usize,
    },
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SourceModel::Coherent(spec) => spec.validate(),
            SourceModel::Ayki { params, truncation, .. } => {
                params.validate()?;
                self.fluctuation().validate()?;
                let top = params.mu * (1.0 + params.mu_fluct);
                pdc_number_dist(top, *truncation)?;
                ayki_split(params, top, *truncation)?;
                Ok(())
            }
        }
    }

    pub fn truncation(&self) -> usize {
        match self {
            SourceModel::Coherent(spec) => spec.truncation,
            SourceModel::Ayki { truncation, .. } => *truncation,
        }
    }

    pub fn fluctuation(&self) -> FluctuationBounds {
        match self {
            SourceModel::Coherent(spec) => spec.fluctuation,
            SourceModel::Ayki { params, law, .. } => params.fluctuation(*law),
        }
    }

    /// Nominal `(p, p', p_0)`. For the heralded source these are the values at the nominal pump.
    pub fn selection(&self) -> [f64; 3] {
        match self {
            SourceModel::Coherent(spec) => [spec.p, spec.p_prime, spec.p_0],
            SourceModel::Ayki { params, .. } => {
                let herald = 1.0 + params.mu * params.eta_a;
                [
                    (1.0 - params.d_a) / herald,
                    (params.d_a + params.mu * params.eta_a) / herald,
                    0.0,
                ]
            }
        }
    }

    /// Would-be decoy and signal intensities for a draw.
    pub fn intensities(&self, draw: &FluctuationDraw) -> (f64, f64) {
        match self {
            SourceModel::Coherent(spec) => realized_intensities(spec, draw),
            SourceModel::Ayki { params, .. } => {
                let mu = params.realized_intensity(draw);
                (mu, mu)
            }
        }
    }

    /// Selection probabilities and lumped photon-number weights of one pulse.
    pub fn branches(&self, draw: &FluctuationDraw) -> Result<PulseBranches> {
        match self {
            SourceModel::Coherent(spec) => {
                let (mu_i, mu_prime_i) = realized_intensities(spec, draw);
                Ok(PulseBranches {
                    p_decoy: spec.p,
                    decoy: coherent_fock(mu_i, spec.truncation)?.lumped(),
                    p_signal: spec.p_prime,
                    signal: coherent_fock(mu_prime_i, spec.truncation)?.lumped(),
                    p_vacuum: spec.p_0,
                })
            }
            SourceModel::Ayki { params, truncation, .. } => {
                let split = ayki_split(params, params.realized_intensity(draw), *truncation)?;
                Ok(PulseBranches {
                    p_decoy: split.p_decoy,
                    decoy: split.decoy.lumped(),
                    p_signal: split.p_signal,
                    signal: split.signal.lumped(),
                    p_vacuum: 0.0,
                })
            }
        }
    }
}

/// Per-pulse source mixture: selection probability and lumped `a_k` per source.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseBranches {
    pub p_decoy: f64,
    pub decoy: Vec<f64>,
    pub p_signal: f64,
    pub signal: Vec<f64>,
    pub p_vacuum: f64,
}

/// One simulated pulse, kept for debugging dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    pub index: u64,
    pub source: SourceTag,
    pub photon_number: usize,
    pub clicked: bool,
    pub bit_error: bool,
    pub mu_i: f64,
    pub mu_prime_i: f64,
}

/// Full count bookkeeping of a run, including the hidden per-photon-number split.
///
/// Counts are `f64` so that the expectation engine can report real-valued
/// expectations; Monte-Carlo tallies hold exact integers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    /// Total pulses `M`.
    pub pulses: f64,
    /// Nominal `(p, p', p_0)` of the run.
    pub selection: [f64; 3],
    pub sent_d: f64,
    pub sent_s: f64,
    pub sent_0: f64,
    /// Counts caused by decoy, signal and vacuum pulses.
    pub n_d: f64,
    pub n_s: f64,
    pub n_0: f64,
    /// Counts caused by `k`-photon decoy / signal pulses; bin `J` collects `k >= J`.
    pub n_kd: Vec<f64>,
    pub n_ks: Vec<f64>,
    /// Emitted `k`-photon decoy / signal pulses.
    pub sent_kd: Vec<f64>,
    pub sent_ks: Vec<f64>,
    pub err_1d: f64,
    pub err_1s: f64,
    pub err_d: f64,
    pub err_s: f64,
    pub err_0: f64,
}

impl Tally {
    pub fn empty(truncation: usize, selection: [f64; 3]) -> Self {
        Self {
            pulses: 0.0,
            selection,
            sent_d: 0.0,
            sent_s: 0.0,
            sent_0: 0.0,
            n_d: 0.0,
            n_s: 0.0,
            n_0: 0.0,
            n_kd: vec![0.0; truncation + 1],
            n_ks: vec![0.0; truncation + 1],
            sent_kd: vec![0.0; truncation + 1],
            sent_ks: vec![0.0; truncation + 1],
            err_1d: 0.0,
            err_1s: 0.0,
            err_d: 0.0,
            err_s: 0.0,
            err_0: 0.0,
        }
    }

    pub fn truncation(&self) -> usize {
        self.n_kd.len() - 1
    }

    /// Add another tally of the same shape. Associative and commutative.
    pub fn merge(&mut self, other: &Tally) {
        assert_eq!(self.n_kd.len(), other.n_kd.len(), "tally shapes differ");
        self.pulses += other.pulses;
        self.sent_d += other.sent_d;
        self.sent_s += other.sent_s;
        self.sent_0 += other.sent_0;
        self.n_d += other.n_d;
        self.n_s += other.n_s;
        self.n_0 += other.n_0;
        for (a, b) in self.n_kd.iter_mut().zip(&other.n_kd) {
            *a += b;
        }
        for (a, b) in self.n_ks.iter_mut().zip(&other.n_ks) {
            *a += b;
        }
        for (a, b) in self.sent_kd.iter_mut().zip(&other.sent_kd) {
            *a += b;
        }
        for (a, b) in self.sent_ks.iter_mut().zip(&other.sent_ks) {
            *a += b;
        }
        self.err_1d += other.err_1d;
        self.err_1s += other.err_1s;
        self.err_d += other.err_d;
        self.err_s += other.err_s;
        self.err_0 += other.err_0;
    }

    /// `n_k = n_kd + n_ks`.
    pub fn n_k(&self, k: usize) -> f64 {
        self.n_kd[k] + self.n_ks[k]
    }

    /// Exact single-photon QBER of decoy counts.
    pub fn e1d(&self) -> Option<f64> {
        (self.n_kd[1] > 0.0).then(|| self.err_1d / self.n_kd[1])
    }

    pub fn e1s(&self) -> Option<f64> {
        (self.n_ks[1] > 0.0).then(|| self.err_1s / self.n_ks[1])
    }

    /// Check `N_d = sum n_kd`, `N_s = sum n_ks` and the pulse budget, to `rel_tol`.
    pub fn check_identities(&self, rel_tol: f64) -> std::result::Result<(), String> {
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1.0);
        let sum_d: f64 = self.n_kd.iter().sum();
        let sum_s: f64 = self.n_ks.iter().sum();
        if !close(self.n_d, sum_d) {
            return Err(format!("N_d = {} but sum n_kd = {}", self.n_d, sum_d));
        }
        if !close(self.n_s, sum_s) {
            return Err(format!("N_s = {} but sum n_ks = {}", self.n_s, sum_s));
        }
        if !close(self.pulses, self.sent_d + self.sent_s + self.sent_0) {
            return Err("emitted pulses do not add up to M".into());
        }
        let counts = [self.n_d, self.n_s, self.n_0, self.err_d, self.err_s];
        if counts.iter().any(|c| *c < 0.0 || *c > self.pulses * (1.0 + rel_tol)) {
            return Err("a count lies outside [0, M]".into());
        }
        Ok(())
    }

    /// Named scalar and per-`k` fields, in a stable order.
    pub fn fields(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("pulses".to_string(), self.pulses),
            ("sent_d".into(), self.sent_d),
            ("sent_s".into(), self.sent_s),
            ("sent_0".into(), self.sent_0),
            ("n_d".into(), self.n_d),
            ("n_s".into(), self.n_s),
            ("n_0".into(), self.n_0),
            ("err_1d".into(), self.err_1d),
            ("err_1s".into(), self.err_1s),
            ("err_d".into(), self.err_d),
            ("err_s".into(), self.err_s),
            ("err_0".into(), self.err_0),
        ];
        for (k, v) in self.n_kd.iter().enumerate() {
            out.push((format!("n_{k}d"), *v));
        }
        for (k, v) in self.n_ks.iter().enumerate() {
            out.push((format!("n_{k}s"), *v));
        }
        for (k, v) in self.sent_kd.iter().enumerate() {
            out.push((format!("sent_{k}d"), *v));
        }
        for (k, v) in self.sent_ks.iter().enumerate() {
            out.push((format!("sent_{k}s"), *v));
        }
        out
    }

    /// Flat `key = value` text block.
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "selection = [{}, {}, {}]\n",
            self.selection[0], self.selection[1], self.selection[2]
        );
        for (k, v) in self.fields() {
            s.push_str(&format!("{k} = {}\n", fmt_f64(v)));
        }
        s
    }
}

/// Everything Alice and Bob can see at the end of a run. No per-photon-number data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedStats {
    pub pulses: f64,
    pub sent_d: f64,
    pub sent_s: f64,
    pub sent_0: f64,
    pub n_d: f64,
    pub n_s: f64,
    pub n_0: f64,
    /// `None` when there were no counts to take a rate over.
    pub qber_d: Option<f64>,
    pub qber_s: Option<f64>,
    pub p: f64,
    pub p_prime: f64,
    pub p_0: f64,
}

/// Drop the hidden fields of a tally.
pub fn observe(tally: &Tally) -> ObservedStats {
    ObservedStats {
        pulses: tally.pulses,
        sent_d: tally.sent_d,
        sent_s: tally.sent_s,
        sent_0: tally.sent_0,
        n_d: tally.n_d,
        n_s: tally.n_s,
        n_0: tally.n_0,
        qber_d: (tally.n_d > 0.0).then(|| tally.err_d / tally.n_d),
        qber_s: (tally.n_s > 0.0).then(|| tally.err_s / tally.n_s),
        p: tally.selection[0],
        p_prime: tally.selection[1],
        p_0: tally.selection[2],
    }
}

const UNDEFINED: &str = "undefined";

/// Shortest round-trip decimal form, used by every text and CSV writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl ObservedStats {
    /// Signal gain `Q = N_s / (pulses sent from the signal source)`.
    pub fn signal_gain(&self) -> f64 {
        if self.sent_s > 0.0 {
            self.n_s / self.sent_s
        } else {
            0.0
        }
    }

    pub fn to_kv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| format!("\"{UNDEFINED}\""));
        format!(
            "pulses = {}\nsent_d = {}\nsent_s = {}\nsent_0 = {}\nn_d = {}\nn_s = {}\nn_0 = {}\nqber_d = {}\nqber_s = {}\np = {}\np_prime = {}\np_0 = {}\n",
            fmt_f64(self.pulses),
            fmt_f64(self.sent_d),
            fmt_f64(self.sent_s),
            fmt_f64(self.sent_0),
            fmt_f64(self.n_d),
            fmt_f64(self.n_s),
            fmt_f64(self.n_0),
            opt(self.qber_d),
            opt(self.qber_s),
            fmt_f64(self.p),
            fmt_f64(self.p_prime),
            fmt_f64(self.p_0),
        )
    }
}

impl FromStr for ObservedStats {
    type Err = Error;

    /// Parse the block written by [`ObservedStats::to_kv`]. Blank lines and `#` comments are ignored.
    fn from_str(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected `key = value`", lineno + 1)))?;
            let value = value.trim().trim_matches('"');
            let parsed = if value == UNDEFINED {
                None
            } else {
                Some(value.parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("line {}: `{}` is not a number", lineno + 1, value))
                })?)
            };
            map.insert(key.trim().to_string(), parsed);
        }
        let get = |key: &str| -> Result<f64> {
            match map.get(key) {
                Some(Some(v)) => Ok(*v),
                Some(None) => Err(Error::InvalidParameter(format!("field `{key}` is undefined"))),
                None => Err(Error::InvalidParameter(format!("missing field `{key}`"))),
            }
        };
        let opt = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("missing field `{key}`")))
        };
        Ok(Self {
            pulses: get("pulses")?,
            sent_d: get("sent_d")?,
            sent_s: get("sent_s")?,
            sent_0: get("sent_0")?,
            n_d: get("n_d")?,
            n_s: get("n_s")?,
            n_0: get("n_0")?,
            qber_d: opt("qber_d")?,
            qber_s: opt("qber_s")?,
            p: get("p")?,
            p_prime: get("p_prime")?,
            p_0: get("p_0")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tally() -> Tally {
        let mut t = Tally::empty(3, [0.2, 0.7, 0.1]);
        t.pulses = 100.0;
        t.sent_d = 20.0;
        t.sent_s = 70.0;
        t.sent_0 = 10.0;
        t.n_kd = vec![1.0, 2.0, 1.0, 0.0];
        t.n_ks = vec![0.0, 5.0, 3.0, 1.0];
        t.n_d = 4.0;
        t.n_s = 9.0;
        t.n_0 = 1.0;
        t.err_d = 1.0;
        t.err_s = 0.0;
        t
    }

    #[test]
    fn observe_copies_visible_fields() {
        let t = sample_tally();
        t.check_identities(0.0).unwrap();
        let o = observe(&t);
        assert_eq!(o.n_d, t.n_d);
        assert_eq!(o.n_s, t.n_s);
        assert_eq!(o.qber_d, Some(0.25));
        assert_eq!(o.qber_s, Some(0.0));
        assert_eq!(o.p_prime, 0.7);
    }

    #[test]
    fn zero_clicks_give_undefined_qber() {
        let t = Tally::empty(3, [0.5, 0.5, 0.0]);
        let o = observe(&t);
        assert_eq!(o.qber_d, None);
        assert_eq!(o.qber_s, None);
        let text = o.to_kv();
        assert!(text.contains("qber_d = \"undefined\""));
        let back: ObservedStats = text.parse().unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn observed_text_round_trip() {
        let o = observe(&sample_tally());
        let back: ObservedStats = o.to_kv().parse().unwrap();
        assert_eq!(back, o);
        assert!("n_d = x".parse::<ObservedStats>().is_err());
    }

    #[test]
    fn merge_adds_fields() {
        let mut a = sample_tally();
        let b = sample_tally();
        a.merge(&b);
        assert_eq!(a.n_s, 18.0);
        assert_eq!(a.n_ks[1], 10.0);
        a.check_identities(0.0).unwrap();
    }

    #[test]
    fn identity_violation_is_reported() {
        let mut t = sample_tally();
        t.n_d += 1.0;
        assert!(t.check_identities(1e-12).is_err());
    }
}
