//! Monte-Carlo link engine and its closed-form expectation counterpart.

mod analytic;
mod engine;
mod series;
mod stats;

pub use analytic::{run_analytic, AnalyticLabel, AnalyticStats, SinglePhotonTruth};
pub use engine::{
    alice_symbol, resolve_double_clicks, run_montecarlo, run_montecarlo_with, write_events, DetectionEvent,
    Execution, McOutput, RunOptions, BLOCK_PULSES,
};
pub use series::{time_series, SeriesPoint};
pub use stats::{IntensityTally, PhotonTally, RunStats, PHOTON_BINS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Prbs7, PRBS7_PERIOD};
use crate::optics::{ChannelModel, ReceiverModel, TransmitterModel};
use crate::timing::{gate_acceptance, track_gate, DriftModel, GateAcceptance, GateModel};

/// Where Alice's basis and bit values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliceSource {
    /// Two PRBS-7 sequences: basis from `seed`, bit from the same
    /// sequence shifted by `bit_offset` pulses.
    Prbs { seed: u8, bit_offset: u64 },
    /// Seeded ChaCha8 stream.
    Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleClickPolicy {
    /// Keep the pulse and assign it to one clicked detector uniformly.
    RandomBit,
    /// Drop pulses with more than one in-gate click.
    Discard,
}

/// Full parameter set of one link experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario {
    pub transmitter: TransmitterModel,
    pub channel: ChannelModel,
    pub receiver: ReceiverModel,
    pub drift: DriftModel,
    pub gate: GateModel,
    pub alice_source: AliceSource,
    pub double_click_policy: DoubleClickPolicy,
}

impl LinkScenario {
    pub fn validate(&self) -> Result<()> {
        self.transmitter.validate()?;
        self.channel.validate()?;
        self.receiver.validate()?;
        self.drift.validate()?;
        self.gate.validate()?;
        let slot = self.transmitter.slot_ps();
        if (self.gate.slot_ps - slot).abs() > 1e-6 * slot {
            return Err(Error::config(format!(
                "gate.slot_ps {} does not match the clock period {} ps",
                self.gate.slot_ps, slot
            )));
        }
        if let AliceSource::Prbs { seed, .. } = self.alice_source {
            Prbs7::from_seed(seed).map_err(|e| Error::config(format!("transmitter.prbs_seed: {e}")))?;
        }
        Ok(())
    }

    pub fn clock_rate_hz(&self) -> f64 {
        self.transmitter.clock_rate_hz
    }

    /// Copy of the scenario that sends only `label`.
    pub fn with_fixed_intensity(&self, label: &str) -> Result<Self> {
        let mut s = self.clone();
        s.transmitter.intensities = self.transmitter.intensities.fixed(label)?;
        Ok(s)
    }

    /// Start of the temperature profile, or zero when there is none.
    pub fn reference_time(&self) -> f64 {
        self.drift.profile.first().map(|p| p.0).unwrap_or(0.0)
    }

    /// Gate alignment error at time `t`, after clock tracking.
    pub fn alignment_at(&self, t: f64) -> Result<f64> {
        let raw = self.drift.arrival_offset_ns(t, self.channel.length_km)?;
        let tracked = track_gate(&[raw], self.gate.tracking, self.channel.sync_mode, self.drift.differential_fraction);
        Ok(self.gate.alignment_error_ps + tracked[0])
    }

    pub fn gate_at(&self, t: f64) -> Result<GateModel> {
        Ok(self.gate.with_alignment(self.alignment_at(t)?))
    }

    pub(crate) fn acceptance_at(&self, t: f64) -> Result<GateAcceptance> {
        Ok(gate_acceptance(&self.gate_at(t)?))
    }

    /// Relative frequency of the four encoded states (T0, T1, P0, P1).
    pub fn state_weights(&self) -> Result<[f64; 4]> {
        match self.alice_source {
            AliceSource::Rng => Ok([0.25; 4]),
            AliceSource::Prbs { seed, bit_offset } => {
                let prbs = Prbs7::from_seed(seed)?;
                let mut counts = [0u32; 4];
                for i in 0..PRBS7_PERIOD as u64 {
                    let state = if prbs.bit(i) { 2 } else { 0 } + prbs.bit(i + bit_offset) as usize;
                    counts[state] += 1;
                }
                Ok(counts.map(|c| c as f64 / PRBS7_PERIOD as f64))
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::model::{IntensityLevel, IntensityTable};
    use crate::optics::{DetectorModel, RamanSide, SyncMode};

    /// A long-haul link with round-number parameters, independent of the shipped presets.
    pub fn link(loss_db: f64, mus: &[f64]) -> LinkScenario {
        let levels = mus
            .iter()
            .enumerate()
            .map(|(i, &mu)| IntensityLevel { label: format!("l{i}"), mu, weight: 1.0 })
            .collect();
        LinkScenario {
            transmitter: TransmitterModel {
                clock_rate_hz: 625e6,
                double_pulse_delay_ps: 800.0,
                pulse_width_ps: 100.0,
                intensities: IntensityTable::new(levels).unwrap(),
                stray_mu: 1e-4,
            },
            channel: ChannelModel {
                loss_db,
                length_km: 97.0,
                raman_coefficient: 5e-3,
                raman_side: RamanSide::AntiStokes,
                anti_stokes_penalty_db: 1.5,
                clock_launch_power_dbm: -33.3,
                sync_mode: SyncMode::Wdm,
            },
            receiver: ReceiverModel {
                insertion_transmittance: 0.15,
                visibility: 0.96,
                extinction_ratio_db: 20.0,
                filter_bandwidth_ghz: 100.0,
                detectors: [DetectorModel { efficiency: 0.014, dark_rate_cps: 125.0 }; 4],
            },
            drift: DriftModel::default(),
            gate: GateModel::default(),
            alice_source: AliceSource::Rng,
            double_click_policy: DoubleClickPolicy::RandomBit,
        }
    }
}
