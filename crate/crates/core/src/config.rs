//! Scenario files: a TOML document with one table per link component.
//!
//! Keys carry their unit in the name. Unknown keys are rejected, and parse
//! or range errors report the line of the offending key.

use serde::{Deserialize, Serialize};

use crate::decoy::KeyRateParams;
use crate::error::{Error, Result};
use crate::model::{IntensityLevel, IntensityTable};
use crate::optics::{ChannelModel, DetectorModel, RamanSide, ReceiverModel, SyncMode, TransmitterModel, DETECTORS};
use crate::simulate::{AliceSource, DoubleClickPolicy, LinkScenario};
use crate::timing::{DriftModel, GateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliceSourceKind {
    Prbs,
    Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSection {
    #[serde(default = "d::clock_rate_hz")]
    pub clock_rate_hz: f64,
    #[serde(default = "d::double_pulse_delay_ps")]
    pub double_pulse_delay_ps: f64,
    #[serde(default = "d::pulse_width_ps")]
    pub pulse_width_ps: f64,
    #[serde(default = "d::stray_mu")]
    pub stray_mu: f64,
    #[serde(default = "d::alice_source")]
    pub alice_source: AliceSourceKind,
    #[serde(default = "d::prbs_seed")]
    pub prbs_seed: u8,
    #[serde(default = "d::prbs_bit_offset")]
    pub prbs_bit_offset: u64,
    pub intensities: Vec<IntensityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub loss_db: f64,
    pub length_km: f64,
    pub sync_mode: SyncMode,
    pub clock_launch_power_dbm: f64,
    /// Photons per pulse per mW of clock power in a 100 GHz filter.
    #[serde(default = "d::raman_coefficient")]
    pub raman_coefficient: f64,
    #[serde(default = "d::raman_side")]
    pub raman_side: RamanSide,
    #[serde(default = "d::anti_stokes_penalty_db")]
    pub anti_stokes_penalty_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub insertion_transmittance: f64,
    pub visibility: f64,
    #[serde(default = "d::extinction_ratio_db")]
    pub extinction_ratio_db: f64,
    #[serde(default = "d::filter_bandwidth_ghz")]
    pub filter_bandwidth_ghz: f64,
    /// T0, T1, P0, P1.
    pub detectors: Vec<DetectorModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    #[serde(default = "d::coefficient")]
    pub coefficient_ns_per_c_per_100km: f64,
    #[serde(default = "d::differential_fraction")]
    pub differential_fraction: f64,
    /// (time s, temperature change degC) breakpoints.
    #[serde(default)]
    pub profile_s_degc: Vec<(f64, f64)>,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            coefficient_ns_per_c_per_100km: d::coefficient(),
            differential_fraction: d::differential_fraction(),
            profile_s_degc: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default = "d::gate_ps")]
    pub gate_ps: f64,
    #[serde(default = "d::slot_ps")]
    pub slot_ps: f64,
    #[serde(default = "d::jitter_ps")]
    pub jitter_ps: f64,
    #[serde(default)]
    pub alignment_error_ps: f64,
    #[serde(default = "d::tracking")]
    pub tracking: bool,
}

impl Default for GateSection {
    fn default() -> Self {
        let g = GateModel::default();
        GateSection {
            gate_ps: g.gate_ps,
            slot_ps: g.slot_ps,
            jitter_ps: g.jitter_ps,
            alignment_error_ps: g.alignment_error_ps,
            tracking: g.tracking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "d::double_click_policy")]
    pub double_click_policy: DoubleClickPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulses: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "d::sift_factor")]
    pub sift_factor: f64,
    #[serde(default = "d::ec_inefficiency")]
    pub ec_inefficiency: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            double_click_policy: d::double_click_policy(),
            pulses: None,
            seed: None,
            sift_factor: d::sift_factor(),
            ec_inefficiency: d::ec_inefficiency(),
        }
    }
}

/// Parsed scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub transmitter: TransmitterSection,
    pub channel: ChannelSection,
    pub receiver: ReceiverSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub run: RunSection,
}

mod d {
    use super::*;

    pub fn clock_rate_hz() -> f64 {
        625e6
    }
    pub fn double_pulse_delay_ps() -> f64 {
        800.0
    }
    pub fn pulse_width_ps() -> f64 {
        100.0
    }
    pub fn stray_mu() -> f64 {
        1e-4
    }
    pub fn alice_source() -> AliceSourceKind {
        AliceSourceKind::Prbs
    }
    pub fn prbs_seed() -> u8 {
        0x7f
    }
    pub fn prbs_bit_offset() -> u64 {
        64
    }
    pub fn raman_coefficient() -> f64 {
        5e-3
    }
    pub fn raman_side() -> RamanSide {
        RamanSide::AntiStokes
    }
    pub fn anti_stokes_penalty_db() -> f64 {
        1.5
    }
    pub fn extinction_ratio_db() -> f64 {
        20.0
    }
    pub fn filter_bandwidth_ghz() -> f64 {
        100.0
    }
    pub fn coefficient() -> f64 {
        DriftModel::default().coefficient_ns_per_c_per_100km
    }
    pub fn differential_fraction() -> f64 {
        DriftModel::default().differential_fraction
    }
    pub fn gate_ps() -> f64 {
        GateModel::default().gate_ps
    }
    pub fn slot_ps() -> f64 {
        GateModel::default().slot_ps
    }
    pub fn jitter_ps() -> f64 {
        GateModel::default().jitter_ps
    }
    pub fn tracking() -> bool {
        true
    }
    pub fn double_click_policy() -> DoubleClickPolicy {
        DoubleClickPolicy::RandomBit
    }
    pub fn sift_factor() -> f64 {
        KeyRateParams::default().sift_factor
    }
    pub fn ec_inefficiency() -> f64 {
        KeyRateParams::default().ec_inefficiency
    }
}

/// Line (1-based) of `key = ...` inside `[section]` or `[[section.*]]`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl ScenarioFile {
    /// Parse and validate a scenario document.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().to_string()))?;
        if let Err(e) = file.validate() {
            return Err(annotate(text, e));
        }
        Ok(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if !(r.sift_factor > 0.0 && r.sift_factor <= 1.0) {
            return Err(Error::config(format!("run.sift_factor {} must lie in (0, 1]", r.sift_factor)));
        }
        if !(r.ec_inefficiency >= 1.0) || !r.ec_inefficiency.is_finite() {
            return Err(Error::config(format!("run.ec_inefficiency {} must be >= 1", r.ec_inefficiency)));
        }
        if r.pulses == Some(0) {
            return Err(Error::config("run.pulses must be >= 1"));
        }
        self.to_scenario().map(|_| ())
    }

    pub fn to_scenario(&self) -> Result<LinkScenario> {
        let t = &self.transmitter;
        let detectors: [DetectorModel; DETECTORS] = self.receiver.detectors.clone().try_into().map_err(|v: Vec<_>| {
            Error::config(format!("receiver.detectors: expected {DETECTORS} entries, found {}", v.len()))
        })?;
        let intensities = IntensityTable::new(t.intensities.clone())
            .map_err(|e| Error::config(format!("transmitter.intensities: {}", strip(&e))))?;
        let scenario = LinkScenario {
            transmitter: TransmitterModel {
                clock_rate_hz: t.clock_rate_hz,
                double_pulse_delay_ps: t.double_pulse_delay_ps,
                pulse_width_ps: t.pulse_width_ps,
                intensities,
                stray_mu: t.stray_mu,
            },
            channel: ChannelModel {
                loss_db: self.channel.loss_db,
                length_km: self.channel.length_km,
                raman_coefficient: self.channel.raman_coefficient,
                raman_side: self.channel.raman_side,
                anti_stokes_penalty_db: self.channel.anti_stokes_penalty_db,
                clock_launch_power_dbm: self.channel.clock_launch_power_dbm,
                sync_mode: self.channel.sync_mode,
            },
            receiver: ReceiverModel {
                insertion_transmittance: self.receiver.insertion_transmittance,
                visibility: self.receiver.visibility,
                extinction_ratio_db: self.receiver.extinction_ratio_db,
                filter_bandwidth_ghz: self.receiver.filter_bandwidth_ghz,
                detectors,
            },
            drift: DriftModel {
                profile: self.drift.profile_s_degc.clone(),
                coefficient_ns_per_c_per_100km: self.drift.coefficient_ns_per_c_per_100km,
                differential_fraction: self.drift.differential_fraction,
            },
            gate: GateModel {
                gate_ps: self.gate.gate_ps,
                slot_ps: self.gate.slot_ps,
                jitter_ps: self.gate.jitter_ps,
                alignment_error_ps: self.gate.alignment_error_ps,
                tracking: self.gate.tracking,
            },
            alice_source: match t.alice_source {
                AliceSourceKind::Prbs => AliceSource::Prbs { seed: t.prbs_seed, bit_offset: t.prbs_bit_offset },
                AliceSourceKind::Rng => AliceSource::Rng,
            },
            double_click_policy: self.run.double_click_policy,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Document describing `scenario`, with `run` settings attached.
    pub fn from_scenario(scenario: &LinkScenario, run: RunSection) -> Self {
        let tx = &scenario.transmitter;
        let (alice_source, prbs_seed, prbs_bit_offset) = match scenario.alice_source {
            AliceSource::Prbs { seed, bit_offset } => (AliceSourceKind::Prbs, seed, bit_offset),
            AliceSource::Rng => (AliceSourceKind::Rng, d::prbs_seed(), d::prbs_bit_offset()),
        };
        let ch = &scenario.channel;
        let rx = &scenario.receiver;
        let g = &scenario.gate;
        ScenarioFile {
            transmitter: TransmitterSection {
                clock_rate_hz: tx.clock_rate_hz,
                double_pulse_delay_ps: tx.double_pulse_delay_ps,
                pulse_width_ps: tx.pulse_width_ps,
                stray_mu: tx.stray_mu,
                alice_source,
                prbs_seed,
                prbs_bit_offset,
                intensities: tx.intensities.levels().to_vec(),
            },
            channel: ChannelSection {
                loss_db: ch.loss_db,
                length_km: ch.length_km,
                sync_mode: ch.sync_mode,
                clock_launch_power_dbm: ch.clock_launch_power_dbm,
                raman_coefficient: ch.raman_coefficient,
                raman_side: ch.raman_side,
                anti_stokes_penalty_db: ch.anti_stokes_penalty_db,
            },
            receiver: ReceiverSection {
                insertion_transmittance: rx.insertion_transmittance,
                visibility: rx.visibility,
                extinction_ratio_db: rx.extinction_ratio_db,
                filter_bandwidth_ghz: rx.filter_bandwidth_ghz,
                detectors: rx.detectors.to_vec(),
            },
            drift: DriftSection {
                coefficient_ns_per_c_per_100km: scenario.drift.coefficient_ns_per_c_per_100km,
                differential_fraction: scenario.drift.differential_fraction,
                profile_s_degc: scenario.drift.profile.clone(),
            },
            gate: GateSection {
                gate_ps: g.gate_ps,
                slot_ps: g.slot_ps,
                jitter_ps: g.jitter_ps,
                alignment_error_ps: g.alignment_error_ps,
                tracking: g.tracking,
            },
            run: RunSection { double_click_policy: scenario.double_click_policy, ..run },
        }
    }

    pub fn key_rate_params(&self) -> KeyRateParams {
        KeyRateParams {
            sift_factor: self.run.sift_factor,
            ec_inefficiency: self.run.ec_inefficiency,
            clock_rate_hz: self.transmitter.clock_rate_hz,
        }
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Domain(m) | Error::Data(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Attach `line N` to a range error that names a `section.key`.
fn annotate(text: &str, e: Error) -> Error {
    let Error::Config(msg) = &e else { return e };
    let first = msg.split_whitespace().next().unwrap_or("").trim_end_matches(':');
    let mut parts = first.splitn(2, '.');
    let (Some(section), Some(key)) = (parts.next(), parts.next()) else { return e };
    let key = key.split('[').next().unwrap_or(key);
    let key = key.rsplit('.').next().unwrap_or(key);
    match locate(text, section, key).or_else(|| text.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)) {
        Some(line) => Error::config(format!("line {line}: {msg}")),
        None => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[transmitter]
alice_source = "rng"
intensities = [{ label = "signal", mu = 0.4 }]

[channel]
loss_db = 20.2
length_km = 97
sync_mode = "wdm"
clock_launch_power_dbm = -33.3

[receiver]
insertion_transmittance = 0.15
visibility = 0.96

[[receiver.detectors]]
efficiency = 0.014
dark_rate_cps = 125
[[receiver.detectors]]
efficiency = 0.014
dark_rate_cps = 125
[[receiver.detectors]]
efficiency = 0.014
dark_rate_cps = 125
[[receiver.detectors]]
efficiency = 0.014
dark_rate_cps = 125
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let f = ScenarioFile::parse(MINIMAL).unwrap();
        let s = f.to_scenario().unwrap();
        assert_eq!(s.transmitter.clock_rate_hz, 625e6);
        assert_eq!(s.gate, GateModel::default());
        assert_eq!(s.channel.anti_stokes_penalty_db, 1.5);
        assert_eq!(s.alice_source, AliceSource::Rng);
        assert_eq!(f.run.sift_factor, 0.5);
    }

    #[test]
    fn round_trips_through_toml() {
        let f = ScenarioFile::parse(MINIMAL).unwrap();
        let again = ScenarioFile::parse(&f.to_toml()).unwrap();
        assert_eq!(f, again);
        let s = f.to_scenario().unwrap();
        assert_eq!(ScenarioFile::from_scenario(&s, f.run.clone()), f);
    }

    #[test]
    fn missing_key_is_named_with_its_line() {
        let text = MINIMAL.replace("loss_db = 20.2\n", "");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("loss_db"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("loss_db = 20.2", "loss_db = 20.2\nloss_dbm = 3");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("loss_dbm"), "{err}");
    }

    #[test]
    fn range_errors_point_at_the_key() {
        let text = MINIMAL.replace("visibility = 0.96", "visibility = 1.5");
        let err = ScenarioFile::parse(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let msg = err.to_string();
        assert!(msg.contains("receiver.visibility"), "{msg}");
        assert!(msg.contains("line 14"), "{msg}");
        let text = MINIMAL.replace("loss_db = 20.2", "loss_db = -1");
        assert!(ScenarioFile::parse(&text).unwrap_err().to_string().contains("line 7"));
    }

    #[test]
    fn wrong_detector_count() {
        let cut = MINIMAL.rfind("[[receiver.detectors]]").unwrap();
        let err = ScenarioFile::parse(&MINIMAL[..cut]).unwrap_err().to_string();
        assert!(err.contains("expected 4"), "{err}");
    }

    #[test]
    fn run_section_is_checked() {
        let text = format!("{MINIMAL}\n[run]\nec_inefficiency = 0.5\n");
        assert!(ScenarioFile::parse(&text).unwrap_err().to_string().contains("run.ec_inefficiency"));
        let text = format!("{MINIMAL}\n[run]\ndouble_click_policy = \"discard\"\nseed = 9\n");
        let f = ScenarioFile::parse(&text).unwrap();
        assert_eq!(f.to_scenario().unwrap().double_click_policy, DoubleClickPolicy::Discard);
        assert_eq!(f.run.seed, Some(9));
    }
}
