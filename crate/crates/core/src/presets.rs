//! Shipped scenarios for the two field links, with and without the WDM clock.

use crate::config::ScenarioFile;
use crate::error::{Error, Result};
use crate::simulate::LinkScenario;
use crate::stats_table::{read_stats_table, read_targets, CalibrationTarget, StatsRow};

pub const PRESET_NAMES: [&str; 4] = ["65km-wdm", "97km-wdm", "65km-nowdm", "97km-nowdm"];

const PRESETS: [(&str, &str); 4] = [
    ("65km-wdm", include_str!("../presets/65km-wdm.toml")),
    ("97km-wdm", include_str!("../presets/97km-wdm.toml")),
    ("65km-nowdm", include_str!("../presets/65km-nowdm.toml")),
    ("97km-nowdm", include_str!("../presets/97km-nowdm.toml")),
];

const FIELD_TARGETS: &str = include_str!("../data/field_targets.csv");
const LONG_HAUL_STATS: &str = include_str!("../data/long_haul_stats.csv");

/// TOML source of a preset, comments included.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_file(name: &str) -> Result<ScenarioFile> {
    let text = preset_text(name).ok_or_else(|| {
        Error::config(format!("unknown preset `{name}` (available: {})", PRESET_NAMES.join(", ")))
    })?;
    ScenarioFile::parse(text)
}

pub fn preset(name: &str) -> Result<LinkScenario> {
    preset_file(name)?.to_scenario()
}

/// Signal-intensity operating points the presets are calibrated against.
pub fn field_targets() -> Vec<CalibrationTarget> {
    read_targets(FIELD_TARGETS.as_bytes()).expect("bundled targets parse")
}

/// Measured 97 km statistics at all four intensities.
pub fn long_haul_stats() -> Vec<StatsRow> {
    read_stats_table(LONG_HAUL_STATS.as_bytes()).expect("bundled stats parse")
}

pub fn field_targets_csv() -> &'static str {
    FIELD_TARGETS
}

pub fn long_haul_stats_csv() -> &'static str {
    LONG_HAUL_STATS
}
