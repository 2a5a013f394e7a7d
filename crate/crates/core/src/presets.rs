//! Named parameter sets.

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::source::{FluctuationBounds, PulseEnsembleSpec};

pub const PRESET_NAMES: [&str; 1] = ["peng50km-like"];

/// Representative 50 km fibre link with a three-intensity coherent source.
/// Not a reproduction of any published dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub spec: PulseEnsembleSpec,
    pub channel: ChannelParams,
}

pub fn peng50km_like() -> Preset {
    Preset {
        spec: PulseEnsembleSpec {
            p: 0.2,
            p_prime: 0.7,
            p_0: 0.1,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: FluctuationBounds::none(),
            truncation: 24,
        },
        channel: ChannelParams::peng50km_like(),
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "peng50km-like" => Ok(peng50km_like()),
        other => Err(Error::InvalidParameter(format!(
            "unknown preset `{other}` (known: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid() {
        let p = preset("peng50km-like").unwrap();
        p.spec.validate().unwrap();
        p.channel.validate().unwrap();
        assert!(preset("nope").is_err());
    }
}
