//! Transmitter, fiber, WDM noise, passive 2x4 decoder and detector models.
//!
//! Every quantity here is a per-pulse probability or mean photon number; the
//! simulator composes them, it never looks at waveforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{db_to_transmittance, dbm_to_mw, IntensityTable, QuantumSymbol};

pub const DETECTORS: usize = 4;

/// Raman coefficients are quoted for this filter bandwidth.
pub const RAMAN_REFERENCE_BANDWIDTH_GHZ: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterModel {
    pub clock_rate_hz: f64,
    pub double_pulse_delay_ps: f64,
    pub pulse_width_ps: f64,
    pub intensities: IntensityTable,
    /// Residual clock light leaking into the quantum channel, photons/pulse.
    pub stray_mu: f64,
}

impl TransmitterModel {
    pub fn slot_ps(&self) -> f64 {
        1e12 / self.clock_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clock_rate_hz > 0.0) || !self.clock_rate_hz.is_finite() {
            return Err(Error::config("transmitter.clock_rate_hz must be > 0"));
        }
        if !(self.double_pulse_delay_ps > 0.0) || self.double_pulse_delay_ps >= self.slot_ps() {
            return Err(Error::config(format!(
                "transmitter.double_pulse_delay_ps {} must lie in (0, {}) ps",
                self.double_pulse_delay_ps,
                self.slot_ps()
            )));
        }
        if !(self.pulse_width_ps > 0.0) {
            return Err(Error::config("transmitter.pulse_width_ps must be > 0"));
        }
        if !(self.stray_mu >= 0.0) || !self.stray_mu.is_finite() {
            return Err(Error::config("transmitter.stray_mu must be >= 0"));
        }
        self.intensities.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncMode {
    /// Clock shares the quantum fiber on a second wavelength.
    Wdm,
    /// Clock travels on a separate fiber of the same cable.
    PairedFiber,
}

/// Which Raman sideband of the clock the quantum wavelength sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RamanSide {
    AntiStokes,
    Stokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub loss_db: f64,
    pub length_km: f64,
    /// Raman photons per pulse at the fiber output per mW of launched clock
    /// power, Stokes side, in a 100 GHz filter.
    pub raman_coefficient: f64,
    pub raman_side: RamanSide,
    pub anti_stokes_penalty_db: f64,
    pub clock_launch_power_dbm: f64,
    pub sync_mode: SyncMode,
}

impl ChannelModel {
    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.loss_db).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db >= 0.0) || !self.loss_db.is_finite() {
            return Err(Error::config(format!("channel.loss_db {} must be >= 0", self.loss_db)));
        }
        if !(self.length_km >= 0.0) || !self.length_km.is_finite() {
            return Err(Error::config("channel.length_km must be >= 0"));
        }
        if !(self.anti_stokes_penalty_db >= 0.0) {
            return Err(Error::config("channel.anti_stokes_penalty_db must be >= 0"));
        }
        if !(self.raman_coefficient >= 0.0) || !self.raman_coefficient.is_finite() {
            return Err(Error::config("channel.raman_coefficient must be >= 0"));
        }
        if self.clock_launch_power_dbm.is_nan() || self.clock_launch_power_dbm == f64::INFINITY {
            return Err(Error::config("channel.clock_launch_power_dbm must be finite or -inf"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_cps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverModel {
    /// Lumped transmittance from fiber output to detector input.
    pub insertion_transmittance: f64,
    pub visibility: f64,
    pub extinction_ratio_db: f64,
    pub filter_bandwidth_ghz: f64,
    /// Order: T0, T1, P0, P1.
    pub detectors: [DetectorModel; DETECTORS],
}

impl ReceiverModel {
    pub fn mean_efficiency(&self) -> f64 {
        self.detectors.iter().map(|d| d.efficiency).sum::<f64>() / DETECTORS as f64
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("receiver.{name} {v} must lie in [0, 1]")))
            }
        };
        unit("insertion_transmittance", self.insertion_transmittance)?;
        unit("visibility", self.visibility)?;
        for (i, d) in self.detectors.iter().enumerate() {
            unit(&format!("detector[{i}].efficiency"), d.efficiency)?;
            if !(d.dark_rate_cps >= 0.0) || !d.dark_rate_cps.is_finite() {
                return Err(Error::config(format!("receiver.detector[{i}].dark_rate_cps must be >= 0")));
            }
        }
        if !(self.extinction_ratio_db >= 0.0) {
            return Err(Error::config("receiver.extinction_ratio_db must be >= 0"));
        }
        if !(self.filter_bandwidth_ghz > 0.0) || !self.filter_bandwidth_ghz.is_finite() {
            return Err(Error::config("receiver.filter_bandwidth_ghz must be > 0"));
        }
        Ok(())
    }
}

/// Product of fiber, receiver insertion, mean detector efficiency and gate acceptance.
pub fn total_transmittance(channel: &ChannelModel, receiver: &ReceiverModel, gate_acceptance: f64) -> Result<f64> {
    let fiber = db_to_transmittance(channel.loss_db)?;
    if !(0.0..=1.0).contains(&gate_acceptance) {
        return Err(Error::domain(format!("gate acceptance {gate_acceptance} outside [0, 1]")));
    }
    Ok(fiber * receiver.insertion_transmittance * receiver.mean_efficiency() * gate_acceptance)
}

/// Wrong-bit probability inside the time basis from a finite extinction ratio.
pub fn time_basis_error(extinction_ratio_db: f64) -> f64 {
    if extinction_ratio_db.is_infinite() {
        return 0.0;
    }
    let leak = 10f64.powf(-extinction_ratio_db / 10.0);
    leak / (1.0 + leak)
}

/// Wrong-bit probability inside the phase basis from interference visibility.
pub fn phase_basis_error(visibility: f64) -> f64 {
    (1.0 - visibility) / 2.0
}

/// Conditional output-port probabilities of the passive 2x4 decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingMatrix {
    /// rows: encoded state (T0, T1, P0, P1); columns: detector.
    pub rows: [[f64; DETECTORS]; 4],
}

impl RoutingMatrix {
    pub fn ideal(receiver: &ReceiverModel) -> Self {
        let e_time = time_basis_error(receiver.extinction_ratio_db);
        let e_phase = phase_basis_error(receiver.visibility);
        let mut rows = [[0.0; DETECTORS]; 4];
        for (state, row) in rows.iter_mut().enumerate() {
            let (own, other, err) = if state < 2 { (0, 2, e_time) } else { (2, 0, e_phase) };
            let bit = state & 1;
            row[own + bit] = 0.5 * (1.0 - err);
            row[own + (1 - bit)] = 0.5 * err;
            row[other] = 0.25;
            row[other + 1] = 0.25;
        }
        RoutingMatrix { rows }
    }

    pub fn row(&self, symbol: &QuantumSymbol) -> [f64; DETECTORS] {
        self.rows[symbol.state_index()]
    }
}

/// Probability that a photon reaching the decoder exits towards each detector.
pub fn routing_probabilities(symbol: &QuantumSymbol, receiver: &ReceiverModel) -> [f64; DETECTORS] {
    RoutingMatrix::ideal(receiver).row(symbol)
}

/// Raman photons per pulse at the fiber output, before gating.
pub fn raman_photons_per_pulse(channel: &ChannelModel, filter_bandwidth_ghz: f64) -> f64 {
    if channel.sync_mode == SyncMode::PairedFiber {
        return 0.0;
    }
    let side = match channel.raman_side {
        RamanSide::AntiStokes => 10f64.powf(-channel.anti_stokes_penalty_db / 10.0),
        RamanSide::Stokes => 1.0,
    };
    channel.raman_coefficient
        * dbm_to_mw(channel.clock_launch_power_dbm)
        * side
        * (filter_bandwidth_ghz / RAMAN_REFERENCE_BANDWIDTH_GHZ)
}

/// Uncorrelated noise photons per pulse at the receiver input that fall in
/// the detection gate: Raman from the WDM clock plus transmitted stray light.
pub fn noise_photons_per_pulse(
    channel: &ChannelModel,
    stray_mu: f64,
    filter_bandwidth_ghz: f64,
    gate_fraction: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gate_fraction) {
        return Err(Error::domain(format!("gate fraction {gate_fraction} outside [0, 1]")));
    }
    let stray = stray_mu * db_to_transmittance(channel.loss_db)?;
    Ok((raman_photons_per_pulse(channel, filter_bandwidth_ghz) + stray) * gate_fraction)
}

/// Vacuum yield from dark counts summed over all detectors for one gated pulse.
pub fn dark_click_probability(receiver: &ReceiverModel, gate_width_ps: f64, clock_rate_hz: f64) -> Result<f64> {
    let slot_ps = 1e12 / clock_rate_hz;
    if !(gate_width_ps > 0.0) || gate_width_ps > slot_ps * (1.0 + 1e-12) {
        return Err(Error::domain(format!("gate {gate_width_ps} ps must lie in (0, {slot_ps}] ps")));
    }
    let per_slot: f64 = receiver.detectors.iter().map(|d| d.dark_rate_cps / clock_rate_hz).sum();
    Ok(per_slot * (gate_width_ps / slot_ps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Basis;

    fn receiver(v: f64, ext: f64, eta_rx: f64, eff: f64, dark: f64) -> ReceiverModel {
        ReceiverModel {
            insertion_transmittance: eta_rx,
            visibility: v,
            extinction_ratio_db: ext,
            filter_bandwidth_ghz: 100.0,
            detectors: [DetectorModel { efficiency: eff, dark_rate_cps: dark }; 4],
        }
    }

    fn channel(loss: f64, power_dbm: f64, mode: SyncMode) -> ChannelModel {
        ChannelModel {
            loss_db: loss,
            length_km: 97.0,
            raman_coefficient: 5e-3,
            raman_side: RamanSide::AntiStokes,
            anti_stokes_penalty_db: 1.5,
            clock_launch_power_dbm: power_dbm,
            sync_mode: mode,
        }
    }

    #[test]
    fn transmittance_identity_and_presets() {
        let rx = receiver(1.0, 20.0, 1.0, 1.0, 0.0);
        let ch = channel(0.0, -30.0, SyncMode::Wdm);
        assert_eq!(total_transmittance(&ch, &rx, 1.0).unwrap(), 1.0);

        let rx = receiver(1.0, 20.0, 0.15, 0.014, 0.0);
        let eta97 = total_transmittance(&channel(20.2, -33.3, SyncMode::Wdm), &rx, 0.93).unwrap();
        assert!((eta97 / 1.87e-5 - 1.0).abs() < 0.05, "{eta97}");
        let eta65 = total_transmittance(&channel(13.2, -39.6, SyncMode::Wdm), &rx, 0.93).unwrap();
        assert!((eta65 / 9.1e-5 - 1.0).abs() < 0.05, "{eta65}");
    }

    #[test]
    fn ideal_routing() {
        let rx = receiver(1.0, f64::INFINITY, 1.0, 1.0, 0.0);
        let t0 = QuantumSymbol { basis: Basis::Time, bit: false, intensity: 0 };
        assert_eq!(routing_probabilities(&t0, &rx), [0.5, 0.0, 0.25, 0.25]);
        let p1 = QuantumSymbol { basis: Basis::Phase, bit: true, intensity: 0 };
        assert_eq!(routing_probabilities(&p1, &rx), [0.25, 0.25, 0.0, 0.5]);
    }

    #[test]
    fn conditional_basis_errors() {
        let rx = receiver(0.98, 20.0, 1.0, 1.0, 0.0);
        let m = RoutingMatrix::ideal(&rx);
        let t = m.rows[0];
        assert!((t[1] / (t[0] + t[1]) - 0.0099).abs() < 1e-4);
        let p = m.rows[2];
        assert!((p[3] / (p[2] + p[3]) - 0.01).abs() < 1e-12);
        for row in m.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn errors_monotone_in_visibility_and_extinction() {
        let mut last = f64::INFINITY;
        for i in 0..=100 {
            let e = phase_basis_error(i as f64 / 100.0);
            assert!(e < last);
            last = e;
        }
        let mut last = f64::INFINITY;
        for db in 0..60 {
            let e = time_basis_error(db as f64);
            assert!(e < last);
            last = e;
        }
        assert_eq!(time_basis_error(f64::INFINITY), 0.0);
    }

    #[test]
    fn noise_sources() {
        let mut ch = channel(20.2, f64::NEG_INFINITY, SyncMode::Wdm);
        assert_eq!(noise_photons_per_pulse(&ch, 0.0, 100.0, 1.0).unwrap(), 0.0);
        let stray = noise_photons_per_pulse(&ch, 1e-4, 100.0, 1.0).unwrap();
        assert!((stray - 9.55e-7).abs() < 1e-9, "{stray}");

        ch.clock_launch_power_dbm = 0.0;
        ch.anti_stokes_penalty_db = 1.5;
        let anti = raman_photons_per_pulse(&ch, 100.0);
        ch.raman_side = RamanSide::Stokes;
        let stokes = raman_photons_per_pulse(&ch, 100.0);
        assert!((anti / stokes - 0.708).abs() < 1e-3);
    }

    #[test]
    fn noise_is_linear_in_power_and_stray() {
        let mut ch = channel(10.0, 0.0, SyncMode::Wdm);
        let base = noise_photons_per_pulse(&ch, 0.0, 100.0, 0.25).unwrap();
        ch.clock_launch_power_dbm = 10.0 * 2f64.log10();
        let doubled = noise_photons_per_pulse(&ch, 0.0, 100.0, 0.25).unwrap();
        assert!((doubled / base - 2.0).abs() < 1e-12);
        ch.clock_launch_power_dbm = f64::NEG_INFINITY;
        let s1 = noise_photons_per_pulse(&ch, 1e-4, 100.0, 0.25).unwrap();
        let s3 = noise_photons_per_pulse(&ch, 3e-4, 100.0, 0.25).unwrap();
        assert!((s3 / s1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn paired_fiber_removes_raman() {
        let wdm = channel(20.2, -33.3, SyncMode::Wdm);
        let paired = ChannelModel { sync_mode: SyncMode::PairedFiber, ..wdm.clone() };
        let a = noise_photons_per_pulse(&wdm, 0.0, 100.0, 1.0).unwrap();
        let b = noise_photons_per_pulse(&paired, 0.0, 100.0, 1.0).unwrap();
        assert!(a > 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn dark_yield() {
        let rx = receiver(1.0, 20.0, 1.0, 1.0, 0.0);
        assert_eq!(dark_click_probability(&rx, 400.0, 625e6).unwrap(), 0.0);
        let rx = receiver(1.0, 20.0, 1.0, 1.0, 125.0);
        let y0 = dark_click_probability(&rx, 400.0, 625e6).unwrap();
        assert!((y0 - 2.0e-7).abs() < 1e-18);
        let full = dark_click_probability(&rx, 1600.0, 625e6).unwrap();
        assert!((full - 8.0e-7).abs() < 1e-18);
        assert!(dark_click_probability(&rx, 2000.0, 625e6).is_err());
    }
}
