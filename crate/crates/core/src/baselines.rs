//! Named variant presets over the CADENT update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cadent::{GateMode, StudentConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantPreset {
    Cadent,
    /// Strategic guidance only.
    Ad,
    /// Tactical guidance only.
    Pd,
    /// Plain Q-learning.
    NoTransfer,
    /// Both guidance terms with constant ω = 0.5.
    NoTrustGate,
}

impl VariantPreset {
    pub const ALL: [VariantPreset; 5] = [
        VariantPreset::Cadent,
        VariantPreset::Ad,
        VariantPreset::Pd,
        VariantPreset::NoTransfer,
        VariantPreset::NoTrustGate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantPreset::Cadent => "cadent",
            VariantPreset::Ad => "ad",
            VariantPreset::Pd => "pd",
            VariantPreset::NoTransfer => "no_transfer",
            VariantPreset::NoTrustGate => "no_trust_gate",
        }
    }

    /// Applies the preset patch to `base`. Idempotent.
    pub fn apply(self, base: &StudentConfig) -> StudentConfig {
        let mut c = *base;
        match self {
            VariantPreset::Cadent => {}
            VariantPreset::Ad => c.guidance.lambda_pd = 0.0,
            VariantPreset::Pd => c.guidance.lambda_ad = 0.0,
            VariantPreset::NoTransfer => {
                c.guidance.lambda_ad = 0.0;
                c.guidance.lambda_pd = 0.0;
                c.gate = GateMode::Bypass;
            }
            VariantPreset::NoTrustGate => c.gate = GateMode::Fixed { omega: 0.5 },
        }
        c
    }
}

impl fmt::Display for VariantPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantPreset {
    type Err = Error;

    /// Accepts the canonical names plus the aliases `none` and `fixed-trust`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => return Ok(VariantPreset::NoTransfer),
            "fixed-trust" => return Ok(VariantPreset::NoTrustGate),
            _ => {}
        }
        VariantPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s || p.as_str().replace('_', "-") == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_owned()))
    }
}

pub fn resolve_preset(name: &str, base: &StudentConfig) -> Result<StudentConfig> {
    Ok(name.parse::<VariantPreset>()?.apply(base))
}
