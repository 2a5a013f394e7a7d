//! TOML run configuration. Every section is optional; numeric defaults come
//! from the named preset.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use decoy_core::channel::ChannelParams;
use decoy_core::estimator::{KeyRateParams, Variant};
use decoy_core::presets::preset;
use decoy_core::simulator::SourceModel;
use decoy_core::source::{AykiSourceParams, DrawLaw, FluctuationBounds, PulseEnsembleSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    TwoIntensityCoherent,
    ThreeIntensityCoherent,
    Ayki,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[value(name = "mc", alias = "monte-carlo")]
    #[serde(alias = "mc")]
    MonteCarlo,
    #[value(name = "exp", alias = "expectation")]
    #[serde(alias = "exp")]
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChoice {
    Economic,
    Normal,
    Both,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::Economic => vec![Variant::Economic],
            VariantChoice::Normal => vec![Variant::Normal],
            VariantChoice::Both => Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    Uniform,
    TruncatedGaussian,
    Drift,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub protocol: Protocol,
    pub preset: String,
    pub pulses: f64,
    pub seed: u64,
    pub engine: Engine,
    /// Quadrature points per fluctuation axis for the expectation engine.
    pub grid_per_axis: usize,
    pub truncation: usize,
    pub chunk_size: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::ThreeIntensityCoherent,
            preset: "peng50km-like".into(),
            pulses: 1e6,
            seed: 1,
            engine: Engine::Expectation,
            grid_per_axis: 5,
            truncation: 24,
            chunk_size: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub p: Option<f64>,
    pub p_prime: Option<f64>,
    pub p_0: Option<f64>,
    pub mu: Option<f64>,
    pub mu_prime: Option<f64>,
    pub delta: f64,
    pub eps_d: f64,
    pub eps_s: f64,
    pub law: Option<LawName>,
    pub sigma_frac: Option<f64>,
    pub period: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AykiSection {
    pub mu: f64,
    #[serde(default)]
    pub mu_fluct: f64,
    pub eta_a: f64,
    pub d_a: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub distance_km: Option<f64>,
    pub alpha_db_per_km: Option<f64>,
    pub eta_bob: Option<f64>,
    pub dark_count: Option<f64>,
    pub e_det: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum E1dSetting {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    pub r_max: Vec<f64>,
    pub r1_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub variant: VariantChoice,
    pub sifting: f64,
    pub f_ec: f64,
    /// A number, or `"observed"` for the worst case from the decoy QBER.
    pub e1d: Option<E1dSetting>,
    /// Upper bound on the vacuum yield when there is no vacuum source.
    pub y0_ub: Option<f64>,
    pub k_max: Option<usize>,
    pub envelope: Option<EnvelopeSection>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let rate = KeyRateParams::default();
        Self {
            variant: VariantChoice::Both,
            sifting: rate.sifting,
            f_ec: rate.f_ec,
            e1d: None,
            y0_ub: None,
            k_max: None,
            envelope: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            deltas: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06],
            epsilons: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    /// Also dump per-pulse records (Monte-Carlo engine only).
    pub records: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub source: SourceSection,
    pub ayki: Option<AykiSection>,
    pub channel: ChannelSection,
    pub estimate: EstimateSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn check(&self) -> Result<(), CliError> {
        preset(&self.run.preset).map_err(|e| CliError::Config(format!("run.preset: {e}")))?;
        if self.run.protocol == Protocol::Ayki && self.ayki.is_none() {
            return Err(CliError::Config("protocol `ayki` needs an [ayki] section".into()));
        }
        if self.sweep.deltas.is_empty() || self.sweep.epsilons.is_empty() {
            return Err(CliError::Config(
                "sweep.deltas and sweep.epsilons must be nonempty".into(),
            ));
        }
        if let Some(E1dSetting::Named(name)) = &self.estimate.e1d {
            if name != "observed" {
                return Err(CliError::Config(format!(
                    "estimate.e1d: expected a number or \"observed\", got \"{name}\""
                )));
            }
        }
        if !(self.run.pulses > 0.0 && self.run.pulses.is_finite()) {
            return Err(CliError::Config(format!(
                "run.pulses must be > 0, got {}",
                self.run.pulses
            )));
        }
        Ok(())
    }

    pub fn law(&self) -> DrawLaw {
        match self.source.law.unwrap_or(LawName::Uniform) {
            LawName::Uniform => DrawLaw::Uniform,
            LawName::TruncatedGaussian => DrawLaw::TruncatedGaussian {
                sigma_frac: self.source.sigma_frac.unwrap_or(0.5),
            },
            LawName::Drift => DrawLaw::Drift {
                period: self.source.period.unwrap_or(1000),
            },
        }
    }

    pub fn fluctuation(&self) -> FluctuationBounds {
        FluctuationBounds {
            delta: self.source.delta,
            eps_d: self.source.eps_d,
            eps_s: self.source.eps_s,
            law: self.law(),
        }
    }

    /// Coherent-source parameters after applying preset defaults. A
    /// two-intensity protocol drops the vacuum setting and, unless `p_prime`
    /// is given, assigns its probability to the signal.
    pub fn coherent_spec(&self) -> Result<PulseEnsembleSpec, CliError> {
        let base = preset(&self.run.preset)?.spec;
        let s = &self.source;
        let p = s.p.unwrap_or(base.p);
        let (p_prime, p_0) = match self.run.protocol {
            Protocol::TwoIntensityCoherent => {
                if s.p_0.is_some_and(|v| v != 0.0) {
                    return Err(CliError::Config(
                        "source.p_0 must be 0 for two-intensity-coherent".into(),
                    ));
                }
                (s.p_prime.unwrap_or(1.0 - p), 0.0)
            }
            _ => (s.p_prime.unwrap_or(base.p_prime), s.p_0.unwrap_or(base.p_0)),
        };
        let spec = PulseEnsembleSpec {
            p,
            p_prime,
            p_0,
            mu: s.mu.unwrap_or(base.mu),
            mu_prime: s.mu_prime.unwrap_or(base.mu_prime),
            fluctuation: self.fluctuation(),
            truncation: self.run.truncation,
        };
        spec.validate()
            .map_err(|e| CliError::Config(format!("[source]: {e}")))?;
        if self.run.protocol == Protocol::ThreeIntensityCoherent && spec.p_0 <= 0.0 {
            return Err(CliError::Config("three-intensity-coherent needs source.p_0 > 0".into()));
        }
        Ok(spec)
    }

    pub fn ayki_params(&self) -> Result<AykiSourceParams, CliError> {
        let a = self
            .ayki
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [ayki] section".into()))?;
        AykiSourceParams::new(a.mu, a.mu_fluct, a.eta_a, a.d_a).map_err(|e| CliError::Config(format!("[ayki]: {e}")))
    }

    pub fn source_model(&self) -> Result<SourceModel, CliError> {
        Ok(match self.run.protocol {
            Protocol::Ayki => SourceModel::Ayki {
                params: self.ayki_params()?,
                law: self.law(),
                truncation: self.run.truncation,
            },
            _ => SourceModel::Coherent(self.coherent_spec()?),
        })
    }

    pub fn channel(&self) -> Result<ChannelParams, CliError> {
        let base = preset(&self.run.preset)?.channel;
        let c = &self.channel;
        let ch = ChannelParams {
            distance_km: c.distance_km.unwrap_or(base.distance_km),
            alpha_db_per_km: c.alpha_db_per_km.unwrap_or(base.alpha_db_per_km),
            eta_bob: c.eta_bob.unwrap_or(base.eta_bob),
            dark_count: c.dark_count.unwrap_or(base.dark_count),
            e_det: c.e_det.unwrap_or(base.e_det),
        };
        ch.validate().map_err(|e| CliError::Config(format!("[channel]: {e}")))?;
        Ok(ch)
    }

    pub fn rate_params(&self) -> KeyRateParams {
        KeyRateParams {
            sifting: self.estimate.sifting,
            f_ec: self.estimate.f_ec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_preset() {
        let cfg = RunConfig::parse("", "test").unwrap();
        let spec = cfg.coherent_spec().unwrap();
        assert_eq!((spec.mu, spec.mu_prime, spec.p_0), (0.2, 0.6, 0.1));
        assert_eq!(cfg.channel().unwrap(), ChannelParams::peng50km_like());
    }

    #[test]
    fn unknown_protocol_reports_location() {
        let err = RunConfig::parse("[run]\nprotocol = \"four-intensity\"\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("protocol"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = RunConfig::parse("[channel]\ndistance = 3\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("distance"));
    }

    #[test]
    fn two_intensity_moves_vacuum_share_to_signal() {
        let cfg = RunConfig::parse("[run]\nprotocol = \"two-intensity-coherent\"\n", "t").unwrap();
        let spec = cfg.coherent_spec().unwrap();
        assert_eq!((spec.p, spec.p_prime, spec.p_0), (0.2, 0.8, 0.0));
    }

    #[test]
    fn e1d_setting_forms() {
        let cfg = RunConfig::parse("[estimate]\ne1d = 0.02\n", "t").unwrap();
        assert_eq!(cfg.estimate.e1d, Some(E1dSetting::Value(0.02)));
        assert!(RunConfig::parse("[estimate]\ne1d = \"guess\"\n", "t").is_err());
    }

    #[test]
    fn empty_sweep_grid_rejected() {
        assert!(RunConfig::parse("[sweep]\ndeltas = []\n", "t").is_err());
    }
}
