//! Photon-number distributions and per-pulse source models.
//!
//! Two source families are supported:
//!
//! * attenuated-laser (coherent) pulses, Poissonian in photon number, with a
//!   common father-pulse fluctuation and independent attenuator fluctuation
//!   for the decoy and signal settings;
//! * heralded PDC pairs, where Alice's local detector passively splits the
//!   thermal pair distribution into a click branch (signal) and a no-click
//!   branch (decoy).
//!
//! Distributions are truncated at a finite cutoff `J` and carry the omitted
//! tail mass explicitly so that the error of the truncation is auditable.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};

/// Default bound on the probability mass allowed beyond the cutoff.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Truncated photon-number distribution `a_0..=a_J` plus the mass beyond `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDistribution {
    weights: Vec<f64>,
    tail_mass: f64,
}

impl FockDistribution {
    /// Build from explicit weights, checking normalisation and the tail bound.
    pub fn new(weights: Vec<f64>, tail_mass: f64, tolerance: f64) -> Result<Self> {
        ensure(weights.len() >= 2, || "cutoff J must be at least 1".into())?;
        ensure(weights.iter().all(|w| *w >= 0.0 && w.is_finite()), || {
            "photon-number weights must be finite and non-negative".into()
        })?;
        let truncation = weights.len() - 1;
        if !(tail_mass <= tolerance) {
            return Err(Error::TailTooLarge {
                truncation,
                tail_mass,
                tolerance,
            });
        }
        let total: f64 = weights.iter().sum::<f64>() + tail_mass;
        ensure((total - 1.0).abs() <= 1e-12, || {
            format!("weights plus tail sum to {total}, expected 1")
        })?;
        Ok(Self { weights, tail_mass })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `a_k`, zero beyond the cutoff.
    pub fn weight(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncation(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Weights with the tail folded into the last bin, so bin `J` means "J or more".
    pub fn lumped(&self) -> Vec<f64> {
        let mut w = self.weights.clone();
        if let Some(last) = w.last_mut() {
            *last += self.tail_mass;
        }
        w
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
    }
}

fn check_intensity(mu: f64, truncation: usize) -> Result<()> {
    ensure(mu.is_finite() && mu >= 0.0, || {
        format!("intensity must be >= 0, got {mu}")
    })?;
    ensure(truncation >= 1, || "cutoff J must be at least 1".into())
}

/// Poissonian `a_k = e^{-mu} mu^k / k!` for `k <= J`.
pub fn coherent_fock(mu: f64, truncation: usize) -> Result<FockDistribution> {
    coherent_fock_with_tolerance(mu, truncation, DEFAULT_TAIL_TOLERANCE)
}

pub fn coherent_fock_with_tolerance(mu: f64, truncation: usize, tolerance: f64) -> Result<FockDistribution> {
    check_intensity(mu, truncation)?;
    if mu == 0.0 {
        let mut weights = vec![0.0; truncation + 1];
        weights[0] = 1.0;
        return FockDistribution::new(weights, 0.0, tolerance);
    }
    // log space: mu^k / k! underflows long before k reaches a generous cutoff.
    let ln_mu = mu.ln();
    let mut ln_fact = 0.0;
    let mut weights = Vec::with_capacity(truncation + 1);
    for k in 0..=truncation {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        weights.push((-mu + k as f64 * ln_mu - ln_fact).exp());
    }
    // Sum the tail directly; 1 - sum would lose it to cancellation.
    let mut tail = 0.0;
    let mut k = truncation + 1;
    loop {
        ln_fact += (k as f64).ln();
        let term = (-mu + k as f64 * ln_mu - ln_fact).exp();
        tail += term;
        if (k as f64 > mu && term <= tail * 1e-17) || term == 0.0 || k > truncation + 100_000 {
            break;
        }
        k += 1;
    }
    let tail = tail.clamp(0.0, 1.0);
    FockDistribution::new(weights, tail, tolerance)
}

/// Thermal pair statistics of a PDC source, `X_k = mu^k (1+mu)^{-(k+1)}`.
pub fn pdc_number_dist(mu: f64, truncation: usize) -> Result<FockDistribution> {
    pdc_number_dist_with_tolerance(mu, truncation, DEFAULT_TAIL_TOLERANCE)
}

pub fn pdc_number_dist_with_tolerance(mu: f64, truncation: usize, tolerance: f64) -> Result<FockDistribution> {
    check_intensity(mu, truncation)?;
    let weights = (0..=truncation).map(|k| thermal_weight(mu, k)).collect();
    let tail = (mu / (1.0 + mu)).powi(truncation as i32 + 1);
    FockDistribution::new(weights, tail, tolerance)
}

fn thermal_weight(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mu.ln() - (k as f64 + 1.0) * mu.ln_1p()).exp()
}

/// Click probability of a threshold detector with efficiency `eta` and dark
/// count probability `dark` when `k` photons arrive: `1 - (1-dark)(1-eta)^k`.
pub fn gamma(k: usize, dark: f64, eta: f64) -> f64 {
    1.0 - (1.0 - dark) * (1.0 - eta).powi(k as i32)
}

/// Heralded PDC source parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AykiSourceParams {
    /// Nominal pair intensity.
    pub mu: f64,
    /// Relative bound on pump intensity fluctuation, `|mu_i / mu - 1| <= mu_fluct`.
    pub mu_fluct: f64,
    /// Alice's heralding detector efficiency.
    pub eta_a: f64,
    /// Alice's heralding detector dark count probability.
    pub d_a: f64,
}

impl AykiSourceParams {
    pub fn new(mu: f64, mu_fluct: f64, eta_a: f64, d_a: f64) -> Result<Self> {
        let params = Self {
            mu,
            mu_fluct,
            eta_a,
            d_a,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.mu.is_finite() && self.mu > 0.0, || {
            format!("PDC intensity must be > 0, got {}", self.mu)
        })?;
        ensure((0.0..1.0).contains(&self.mu_fluct), || {
            format!("pump fluctuation bound must lie in [0,1), got {}", self.mu_fluct)
        })?;
        ensure((0.0..1.0).contains(&self.d_a), || {
            format!("d_A must lie in [0,1), got {}", self.d_a)
        })?;
        ensure(self.eta_a > 0.0 && self.eta_a <= 1.0, || {
            format!("eta_A must lie in (0,1], got {}", self.eta_a)
        })?;
        if self.gamma(1) <= 0.0 {
            return Err(Error::DegenerateSource("gamma_1 = 0".into()));
        }
        Ok(())
    }

    pub fn gamma(&self, k: usize) -> f64 {
        gamma(k, self.d_a, self.eta_a)
    }

    /// Pump-fluctuation bounds as a single-axis fluctuation box.
    pub fn fluctuation(&self, law: DrawLaw) -> FluctuationBounds {
        FluctuationBounds {
            delta: self.mu_fluct,
            eps_d: 0.0,
            eps_s: 0.0,
            law,
        }
    }

    /// Realized pair intensity for a pump draw.
    pub fn realized_intensity(&self, draw: &FluctuationDraw) -> f64 {
        self.mu * (1.0 + draw.delta)
    }
}

/// Output of the passive heralding split at one pump intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct AykiSplit {
    /// Probability of the no-click (decoy) branch.
    pub p_decoy: f64,
    /// Probability of the click (signal) branch.
    pub p_signal: f64,
    pub decoy: FockDistribution,
    pub signal: FockDistribution,
}

/// Split the heralded pair state at intensity `mu_i` into the two branches.
///
/// The click branch carries weights proportional to `gamma_k` and is the
/// signal source; the no-click branch is the decoy source.
pub fn ayki_split(params: &AykiSourceParams, mu_i: f64, truncation: usize) -> Result<AykiSplit> {
    ayki_split_with_tolerance(params, mu_i, truncation, DEFAULT_TAIL_TOLERANCE)
}

pub fn ayki_split_with_tolerance(
    params: &AykiSourceParams,
    mu_i: f64,
    truncation: usize,
    tolerance: f64,
) -> Result<AykiSplit> {
    check_intensity(mu_i, truncation)?;
    let AykiSourceParams { eta_a, d_a, .. } = *params;
    ensure(d_a < 1.0, || "d_A must be < 1".into())?;
    let herald = 1.0 + mu_i * eta_a;
    let p_signal = (d_a + mu_i * eta_a) / herald;
    let p_decoy = (1.0 - d_a) / herald;
    if p_signal <= 0.0 {
        return Err(Error::DegenerateSource(
            "click branch has zero probability (d_A = 0 and mu_i * eta_A = 0)".into(),
        ));
    }
    let mut decoy = Vec::with_capacity(truncation + 1);
    let mut signal = Vec::with_capacity(truncation + 1);
    for k in 0..=truncation {
        let x = thermal_weight(mu_i, k);
        let g = gamma(k, d_a, eta_a);
        decoy.push(x * (1.0 - g) / p_decoy);
        signal.push(x * g / p_signal);
    }
    let ratio = mu_i * (1.0 - eta_a) / (1.0 + mu_i);
    let decoy_tail = ratio.powi(truncation as i32 + 1);
    let pair_tail = (mu_i / (1.0 + mu_i)).powi(truncation as i32 + 1);
    let signal_tail = ((pair_tail - p_decoy * decoy_tail) / p_signal).max(0.0);
    Ok(AykiSplit {
        p_decoy,
        p_signal,
        decoy: FockDistribution::new(decoy, decoy_tail, tolerance)?,
        signal: FockDistribution::new(signal, signal_tail, tolerance)?,
    })
}

/// Shape of the per-pulse fluctuation draws inside the bounded box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DrawLaw {
    /// Independent uniform draws on `[-bound, bound]`.
    #[default]
    Uniform,
    /// Independent Gaussian draws with `sigma = sigma_frac * bound`, truncated to the box.
    TruncatedGaussian { sigma_frac: f64 },
    /// Slow deterministic sinusoidal drift with the given period in pulses;
    /// the three components are phase-shifted by a third of a period.
    Drift { period: u64 },
}

/// Relative fluctuation bounds `|delta_i| <= delta`, `|eps_id| <= eps_d`, `|eps_is| <= eps_s`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluctuationBounds {
    pub delta: f64,
    pub eps_d: f64,
    pub eps_s: f64,
    pub law: DrawLaw,
}

impl FluctuationBounds {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn uniform(delta: f64, eps_d: f64, eps_s: f64) -> Self {
        Self {
            delta,
            eps_d,
            eps_s,
            law: DrawLaw::Uniform,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta == 0.0 && self.eps_d == 0.0 && self.eps_s == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("eps_d", self.eps_d), ("eps_s", self.eps_s)] {
            ensure((0.0..1.0).contains(&v), || format!("{name} must lie in [0,1), got {v}"))?;
        }
        match self.law {
            DrawLaw::TruncatedGaussian { sigma_frac } => ensure(sigma_frac > 0.0 && sigma_frac.is_finite(), || {
                format!("sigma_frac must be > 0, got {sigma_frac}")
            }),
            DrawLaw::Drift { period } => ensure(period > 0, || "drift period must be > 0".into()),
            DrawLaw::Uniform => Ok(()),
        }
    }
}

/// One pulse's relative deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluctuationDraw {
    pub delta: f64,
    pub eps_d: f64,
    pub eps_s: f64,
}

impl FluctuationDraw {
    pub const ZERO: Self = Self {
        delta: 0.0,
        eps_d: 0.0,
        eps_s: 0.0,
    };
}

fn draw_component<R: Rng + ?Sized>(bound: f64, law: DrawLaw, rng: &mut R) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    match law {
        DrawLaw::Uniform => rng.gen_range(-bound..=bound),
        DrawLaw::TruncatedGaussian { sigma_frac } => {
            let normal = Normal::new(0.0, sigma_frac * bound).expect("validated sigma");
            loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= bound {
                    return x;
                }
            }
        }
        DrawLaw::Drift { .. } => unreachable!("drift is index-driven"),
    }
}

/// Draw the fluctuation of pulse `index`.
///
/// Random laws consume exactly three draws from `rng` per call (fewer when a
/// bound is zero); the drift law ignores `rng` and depends only on `index`.
pub fn draw_fluctuation<R: Rng + ?Sized>(bounds: &FluctuationBounds, rng: &mut R, index: u64) -> FluctuationDraw {
    match bounds.law {
        DrawLaw::Drift { period } => {
            let phase = 2.0 * PI * (index % period) as f64 / period as f64;
            drift_point(bounds, phase)
        }
        law => FluctuationDraw {
            delta: draw_component(bounds.delta, law, rng),
            eps_d: draw_component(bounds.eps_d, law, rng),
            eps_s: draw_component(bounds.eps_s, law, rng),
        },
    }
}

pub(crate) fn drift_point(bounds: &FluctuationBounds, phase: f64) -> FluctuationDraw {
    FluctuationDraw {
        delta: bounds.delta * phase.sin(),
        eps_d: bounds.eps_d * (phase + 2.0 * PI / 3.0).sin(),
        eps_s: bounds.eps_s * (phase + 4.0 * PI / 3.0).sin(),
    }
}

/// Coherent-state protocol description: selection probabilities, nominal
/// intensities, fluctuation box and photon-number cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEnsembleSpec {
    /// Decoy selection probability.
    pub p: f64,
    /// Signal selection probability.
    pub p_prime: f64,
    /// Vacuum selection probability; zero for two-intensity protocols.
    pub p_0: f64,
    pub mu: f64,
    pub mu_prime: f64,
    pub fluctuation: FluctuationBounds,
    pub truncation: usize,
}

impl PulseEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("p_prime", self.p_prime), ("p_0", self.p_0)] {
            ensure((0.0..=1.0).contains(&v), || {
                format!("{name} must lie in [0,1], got {v}")
            })?;
        }
        let total = self.p + self.p_prime + self.p_0;
        ensure((total - 1.0).abs() <= 1e-12, || {
            format!("selection probabilities sum to {total}, expected 1")
        })?;
        ensure(self.mu > 0.0 && self.mu.is_finite(), || {
            format!("mu must be > 0, got {}", self.mu)
        })?;
        ensure(self.mu_prime.is_finite() && self.mu_prime > self.mu, || {
            format!("need 0 < mu < mu_prime, got mu={} mu_prime={}", self.mu, self.mu_prime)
        })?;
        self.fluctuation.validate()?;
        // The largest intensities in the box must fit under the cutoff.
        coherent_fock(self.decoy_range().1, self.truncation)?;
        coherent_fock(self.signal_range().1, self.truncation)?;
        Ok(())
    }

    pub fn has_vacuum(&self) -> bool {
        self.p_0 > 0.0
    }

    /// Smallest and largest decoy intensity reachable inside the fluctuation box.
    pub fn decoy_range(&self) -> (f64, f64) {
        let f = &self.fluctuation;
        (
            self.mu * (1.0 - f.delta) * (1.0 - f.eps_d),
            self.mu * (1.0 + f.delta) * (1.0 + f.eps_d),
        )
    }

    pub fn signal_range(&self) -> (f64, f64) {
        let f = &self.fluctuation;
        (
            self.mu_prime * (1.0 - f.delta) * (1.0 - f.eps_s),
            self.mu_prime * (1.0 + f.delta) * (1.0 + f.eps_s),
        )
    }

    pub fn with_fluctuation(mut self, fluctuation: FluctuationBounds) -> Self {
        self.fluctuation = fluctuation;
        self
    }
}

/// Would-be decoy and signal intensities of one pulse, `(mu_i, mu_i')`.
pub fn realized_intensities(spec: &PulseEnsembleSpec, draw: &FluctuationDraw) -> (f64, f64) {
    let father = 1.0 + draw.delta;
    (
        spec.mu * father * (1.0 + draw.eps_d),
        spec.mu_prime * father * (1.0 + draw.eps_s),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coherent_vacuum() {
        let d = coherent_fock(0.0, 4).unwrap();
        assert_eq!(d.weights(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.tail_mass(), 0.0);
    }

    #[test]
    fn coherent_half() {
        let d = coherent_fock(0.5, 20).unwrap();
        assert!(close(d.weight(0), (-0.5f64).exp(), 1e-15));
        assert!(close(d.weight(0), 0.606531, 1e-6));
        assert!(d.tail_mass() < 1e-12);
        assert!(close(d.weights().iter().sum::<f64>() + d.tail_mass(), 1.0, 1e-12));
        assert!(close(d.mean(), 0.5, 1e-12));
    }

    #[test]
    fn coherent_cutoff_too_small() {
        // P(k > 3 | mu = 5) = 1 - e^{-5}(1 + 5 + 12.5 + 125/6) ~ 0.735
        match coherent_fock(5.0, 3) {
            Err(Error::TailTooLarge {
                truncation, tail_mass, ..
            }) => {
                assert_eq!(truncation, 3);
                let head = (-5.0f64).exp() * (1.0 + 5.0 + 12.5 + 125.0 / 6.0);
                assert!(close(tail_mass, 1.0 - head, 1e-12));
            }
            other => panic!("expected TailTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn pdc_examples() {
        let d = pdc_number_dist(0.0, 5).unwrap();
        assert_eq!(d.weight(0), 1.0);
        assert_eq!(d.tail_mass(), 0.0);

        let d = pdc_number_dist_with_tolerance(1.0, 10, 1.0).unwrap();
        assert_eq!(d.weight(0), 0.5);
        assert_eq!(d.weight(1), 0.25);
        assert!(close(d.tail_mass(), 2f64.powi(-11), 1e-18));
        assert!(matches!(pdc_number_dist(1.0, 10), Err(Error::TailTooLarge { .. })));
    }

    #[test]
    fn gamma_examples() {
        assert!(close(gamma(0, 0.01, 0.5), 0.01, 1e-15));
        assert!(close(gamma(1, 0.0, 0.5), 0.5, 1e-15));
        assert_eq!(gamma(2, 0.0, 1.0), 1.0);
    }

    #[test]
    fn ayki_perfect_herald_has_no_signal_vacuum() {
        let params = AykiSourceParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let split = ayki_split(&params, 1.0, 60).unwrap();
        assert_eq!(split.signal.weight(0), 0.0);
        // no-click branch of a perfect detector is pure vacuum
        assert!(close(split.decoy.weight(0), 1.0, 1e-15));
    }

    #[test]
    fn ayki_split_probabilities() {
        let params = AykiSourceParams::new(1.0, 0.2, 0.5, 0.01).unwrap();
        let split = ayki_split(&params, 1.0, 60).unwrap();
        assert!(close(split.p_decoy, 0.66, 1e-15));
        assert!(close(split.p_decoy + split.p_signal, 1.0, 1e-12));
        let x = pdc_number_dist(1.0, 60).unwrap();
        for k in 0..=60 {
            let recombined = split.p_decoy * split.decoy.weight(k) + split.p_signal * split.signal.weight(k);
            assert!(close(recombined, x.weight(k), 1e-12));
        }
    }

    #[test]
    fn ayki_rejects_degenerate_click_branch() {
        let params = AykiSourceParams {
            mu: 0.1,
            mu_fluct: 0.0,
            eta_a: 0.5,
            d_a: 0.0,
        };
        assert!(matches!(ayki_split(&params, 0.0, 4), Err(Error::DegenerateSource(_))));
    }

    #[test]
    fn zero_bounds_draw_zero() {
        let mut rng = substream(1, Purpose::Fluctuation, 0);
        let b = FluctuationBounds::none();
        for i in 0..100 {
            assert_eq!(draw_fluctuation(&b, &mut rng, i), FluctuationDraw::ZERO);
        }
    }

    #[test]
    fn uniform_draws_stay_in_box_and_center() {
        let mut rng = substream(2, Purpose::Fluctuation, 0);
        let b = FluctuationBounds::uniform(0.06, 0.0, 0.0);
        let n = 100_000;
        let mut max_abs: f64 = 0.0;
        let mut sum = 0.0;
        for i in 0..n {
            let d = draw_fluctuation(&b, &mut rng, i);
            max_abs = max_abs.max(d.delta.abs());
            sum += d.delta;
            assert_eq!(d.eps_d, 0.0);
        }
        assert!(max_abs <= 0.06);
        // uniform on [-a, a]: sd = a / sqrt(3)
        let se = 0.06 / 3f64.sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64).abs() < 5.0 * se);
    }

    #[test]
    fn gaussian_and_drift_respect_bounds() {
        let mut rng = substream(3, Purpose::Fluctuation, 0);
        for law in [
            DrawLaw::TruncatedGaussian { sigma_frac: 0.7 },
            DrawLaw::Drift { period: 97 },
        ] {
            let b = FluctuationBounds {
                delta: 0.05,
                eps_d: 0.02,
                eps_s: 0.01,
                law,
            };
            b.validate().unwrap();
            for i in 0..10_000 {
                let d = draw_fluctuation(&b, &mut rng, i);
                assert!(d.delta.abs() <= 0.05 && d.eps_d.abs() <= 0.02 && d.eps_s.abs() <= 0.01);
            }
        }
    }

    #[test]
    fn drift_is_periodic() {
        let b = FluctuationBounds {
            delta: 0.05,
            eps_d: 0.02,
            eps_s: 0.01,
            law: DrawLaw::Drift { period: 10 },
        };
        let mut rng = substream(3, Purpose::Fluctuation, 0);
        let a = draw_fluctuation(&b, &mut rng, 3);
        let c = draw_fluctuation(&b, &mut rng, 13);
        assert_eq!(a, c);
    }

    #[test]
    fn realized_intensity_examples() {
        let spec = PulseEnsembleSpec {
            p: 0.5,
            p_prime: 0.5,
            p_0: 0.0,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: FluctuationBounds::uniform(0.05, 0.02, 0.0),
            truncation: 20,
        };
        assert_eq!(realized_intensities(&spec, &FluctuationDraw::ZERO), (0.2, 0.6));
        let draw = FluctuationDraw {
            delta: 0.05,
            eps_d: 0.02,
            eps_s: 0.0,
        };
        assert!(close(realized_intensities(&spec, &draw).0, 0.2142, 1e-15));
        let corner = FluctuationDraw {
            delta: -0.05,
            eps_d: -0.02,
            eps_s: 0.0,
        };
        assert!(close(
            realized_intensities(&spec, &corner).0,
            spec.decoy_range().0,
            1e-15
        ));
    }

    #[test]
    fn spec_validation() {
        let good = PulseEnsembleSpec {
            p: 0.2,
            p_prime: 0.7,
            p_0: 0.1,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: FluctuationBounds::uniform(0.06, 0.02, 0.02),
            truncation: 24,
        };
        good.validate().unwrap();
        let bad_sum = PulseEnsembleSpec { p_0: 0.2, ..good };
        assert!(bad_sum.validate().is_err());
        let bad_order = PulseEnsembleSpec { mu: 0.7, ..good };
        assert!(bad_order.validate().is_err());
        let short = PulseEnsembleSpec { truncation: 3, ..good };
        assert!(matches!(short.validate(), Err(Error::TailTooLarge { .. })));
    }

    proptest! {
        #[test]
        fn fock_distributions_are_normalised(mu in 0.0f64..3.0) {
            let d = coherent_fock(mu, 40).unwrap();
            prop_assert!((d.weights().iter().sum::<f64>() + d.tail_mass() - 1.0).abs() <= 1e-12);
            let t = pdc_number_dist_with_tolerance(mu, 40, 1.0).unwrap();
            prop_assert!((t.weights().iter().sum::<f64>() + t.tail_mass() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn ayki_ratio_is_independent_of_pump(
            scale in 0.8f64..1.2,
            eta in 0.05f64..1.0,
            dark in 0.0f64..0.1,
        ) {
            let params = AykiSourceParams::new(0.1, 0.2, eta, dark).unwrap();
            let split = ayki_split(&params, 0.1 * scale, 14).unwrap();
            for k in 0..=6 {
                let g = params.gamma(k);
                if g == 0.0 { continue; }
                let ratio = split.p_decoy * split.decoy.weight(k) / (split.p_signal * split.signal.weight(k));
                prop_assert!((ratio - (1.0 - g) / g).abs() <= 1e-12 * (1.0 + (1.0 - g) / g));
            }
        }

        #[test]
        fn realized_intensities_are_monotone(
            d in -0.1f64..0.1, e in -0.05f64..0.05, s in -0.05f64..0.05, bump in 0.0f64..0.01,
        ) {
            let spec = PulseEnsembleSpec {
                p: 0.5, p_prime: 0.5, p_0: 0.0, mu: 0.2, mu_prime: 0.6,
                fluctuation: FluctuationBounds::none(), truncation: 20,
            };
            let base = FluctuationDraw { delta: d, eps_d: e, eps_s: s };
            let (m0, s0) = realized_intensities(&spec, &base);
            let (m1, s1) = realized_intensities(&spec, &FluctuationDraw { delta: d + bump, ..base });
            prop_assert!(m1 >= m0 && s1 >= s0);
            let (m2, _) = realized_intensities(&spec, &FluctuationDraw { eps_d: e + bump, ..base });
            let (_, s3) = realized_intensities(&spec, &FluctuationDraw { eps_s: s + bump, ..base });
            prop_assert!(m2 >= m0 && s3 >= s0);
        }
    }
}
