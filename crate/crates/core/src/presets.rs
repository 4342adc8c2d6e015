//! Ready-to-run scenarios embedded in the library.
//!
//! Each preset is a TOML file under `presets/`; names match file stems. The
//! demonstration presets mirror desk-scale versions of trunk-disturbance
//! experiments, the `*-bound` presets are configurations whose envelope
//! certificate is expected to hold pointwise.

use crate::error::{Error, Result};
use crate::sim::Scenario;

/// Name and raw TOML of one embedded preset.
#[derive(Debug, Clone, Copy)]
pub struct PresetEntry {
    pub name: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[PresetEntry] = &[
    PresetEntry {
        name: "trunk-smoothstep",
        toml: include_str!("../presets/trunk-smoothstep.toml"),
    },
    PresetEntry {
        name: "trunk-fast-clock",
        toml: include_str!("../presets/trunk-fast-clock.toml"),
    },
    PresetEntry {
        name: "trunk-constant-load-ff",
        toml: include_str!("../presets/trunk-constant-load-ff.toml"),
    },
    PresetEntry {
        name: "zero-disturbance",
        toml: include_str!("../presets/zero-disturbance.toml"),
    },
    PresetEntry {
        name: "trunk-exp-bound",
        toml: include_str!("../presets/trunk-exp-bound.toml"),
    },
    PresetEntry {
        name: "trunk-exp-sinusoid-bound",
        toml: include_str!("../presets/trunk-exp-sinusoid-bound.toml"),
    },
    PresetEntry {
        name: "trunk-baseline-comparison",
        toml: include_str!("../presets/trunk-baseline-comparison.toml"),
    },
    PresetEntry {
        name: "twolink-sinusoid",
        toml: include_str!("../presets/twolink-sinusoid.toml"),
    },
    PresetEntry {
        name: "twolink-exp-bound",
        toml: include_str!("../presets/twolink-exp-bound.toml"),
    },
];

/// Presets whose clock/gain pair satisfies the growth condition, so the
/// logged envelope is a real certificate.
pub const CERTIFIED_PRESETS: &[&str] = &[
    "trunk-exp-bound",
    "trunk-exp-sinusoid-bound",
    "trunk-baseline-comparison",
    "twolink-exp-bound",
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Parses and validates the named preset.
pub fn load(name: &str) -> Result<Scenario> {
    let entry = PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        Error::invalid(format!(
            "unknown preset {name:?}; available: {}",
            names().join(", ")
        ))
    })?;
    Scenario::from_toml_str(entry.toml)
}

/// Parses and validates every preset.
pub fn load_all() -> Result<Vec<Scenario>> {
    PRESETS.iter().map(|p| load(p.name)).collect()
}
