//! Arrival-time drift, clock-synchronization residuals and gate acceptance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::SyncMode;

/// Fiber temperature excursion and its effect on photon arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Piecewise-linear (t [s], delta T [degC]) breakpoints, sorted by time.
    /// Empty means no temperature change.
    pub profile: Vec<(f64, f64)>,
    pub coefficient_ns_per_c_per_100km: f64,
    /// Share of the drift not common to both fibers of a pair.
    pub differential_fraction: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel { profile: Vec::new(), coefficient_ns_per_c_per_100km: 5.0, differential_fraction: 0.05 }
    }
}

impl DriftModel {
    /// Linear ramp from 0 to `delta_c` over `duration_s`.
    pub fn ramp(delta_c: f64, duration_s: f64) -> Self {
        DriftModel { profile: vec![(0.0, 0.0), (duration_s, delta_c)], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coefficient_ns_per_c_per_100km >= 0.0) {
            return Err(Error::config("drift.coefficient_ns_per_c_per_100km must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.differential_fraction) {
            return Err(Error::config("drift.differential_fraction must lie in [0, 1]"));
        }
        for w in self.profile.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::config("drift.profile times must be strictly increasing"));
            }
        }
        if self.profile.iter().any(|(t, d)| !t.is_finite() || !d.is_finite()) {
            return Err(Error::config("drift.profile entries must be finite"));
        }
        Ok(())
    }

    /// Temperature change at time `t`.
    pub fn delta_t(&self, t: f64) -> Result<f64> {
        let p = &self.profile;
        if p.is_empty() {
            return Ok(0.0);
        }
        let (t0, t1) = (p[0].0, p[p.len() - 1].0);
        if !(t >= t0 && t <= t1) {
            return Err(Error::domain(format!("t = {t} s outside temperature profile [{t0}, {t1}]")));
        }
        if p.len() == 1 {
            return Ok(p[0].1);
        }
        let i = p.partition_point(|(ti, _)| *ti <= t).clamp(1, p.len() - 1);
        let ((ta, da), (tb, db)) = (p[i - 1], p[i]);
        Ok(da + (db - da) * (t - ta) / (tb - ta))
    }

    /// Raw propagation-delay change of a fiber of `length_km` at time `t`.
    pub fn arrival_offset_ns(&self, t: f64, length_km: f64) -> Result<f64> {
        Ok(self.coefficient_ns_per_c_per_100km * self.delta_t(t)? * (length_km / 100.0))
    }
}

/// Raw arrival offset at time `t`; see [`DriftModel::arrival_offset_ns`].
pub fn arrival_offset(t: f64, drift: &DriftModel, length_km: f64) -> Result<f64> {
    drift.arrival_offset_ns(t, length_km)
}

/// Drift left over after the receiver recovers the clock.
pub fn residual_offset_ns(raw_ns: f64, mode: SyncMode, differential_fraction: f64) -> f64 {
    match mode {
        SyncMode::Wdm => 0.0,
        SyncMode::PairedFiber => raw_ns * differential_fraction,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub gate_ps: f64,
    pub slot_ps: f64,
    /// Gaussian arrival-time spread of detected signal photons.
    pub jitter_ps: f64,
    /// Static offset of the gate center from the mean arrival time.
    pub alignment_error_ps: f64,
    /// Whether the gate follows the recovered clock.
    pub tracking: bool,
}

impl Default for GateModel {
    fn default() -> Self {
        GateModel { gate_ps: 400.0, slot_ps: 1600.0, jitter_ps: 110.0, alignment_error_ps: 0.0, tracking: true }
    }
}

impl GateModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_ps > 0.0 && self.gate_ps <= self.slot_ps) {
            return Err(Error::config(format!(
                "gate.gate_ps {} must lie in (0, slot_ps = {}]",
                self.gate_ps, self.slot_ps
            )));
        }
        if !(self.jitter_ps >= 0.0) || !self.jitter_ps.is_finite() {
            return Err(Error::config("gate.jitter_ps must be >= 0"));
        }
        if !self.alignment_error_ps.is_finite() {
            return Err(Error::config("gate.alignment_error_ps must be finite"));
        }
        Ok(())
    }

    pub fn with_alignment(&self, alignment_error_ps: f64) -> Self {
        GateModel { alignment_error_ps, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateAcceptance {
    /// Probability a detected signal photon lands inside the gate.
    pub signal: f64,
    /// Probability a slot-uniform noise click lands inside the gate.
    pub noise: f64,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn gate_acceptance(gate: &GateModel) -> GateAcceptance {
    let half = gate.gate_ps / 2.0;
    let a = gate.alignment_error_ps;
    let signal = if gate.jitter_ps == 0.0 {
        if a.abs() <= half {
            1.0
        } else {
            0.0
        }
    } else {
        let s = gate.jitter_ps;
        (normal_cdf((half - a) / s) - normal_cdf((-half - a) / s)).clamp(0.0, 1.0)
    };
    GateAcceptance { signal, noise: gate.gate_ps / gate.slot_ps }
}

/// Gate alignment error (ps) over time given raw arrival offsets (ns).
///
/// With tracking the gate rides the recovered clock, so only the part of the
/// drift the clock does not share remains; without it the full walk-off does.
pub fn track_gate(offsets_ns: &[f64], tracking: bool, mode: SyncMode, differential_fraction: f64) -> Vec<f64> {
    offsets_ns
        .iter()
        .map(|&raw| {
            let ns = if tracking { residual_offset_ns(raw, mode, differential_fraction) } else { raw };
            ns * 1e3
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_over_100km_is_5ns() {
        let d = DriftModel { profile: vec![(0.0, 1.0), (10.0, 1.0)], ..Default::default() };
        let off = arrival_offset(5.0, &d, 100.0).unwrap();
        assert!((off - 5.0).abs() < 1e-12);
        assert!((off / 1.6 - 3.125).abs() < 1e-12);
    }

    #[test]
    fn offsets_follow_profile() {
        let flat = DriftModel::default();
        assert_eq!(arrival_offset(123.0, &flat, 97.0).unwrap(), 0.0);
        let half = DriftModel { profile: vec![(0.0, 0.5), (1.0, 0.5)], ..Default::default() };
        assert!((arrival_offset(0.5, &half, 50.0).unwrap() - 1.25).abs() < 1e-12);
        let ramp = DriftModel::ramp(1.0, 100.0);
        assert!((ramp.delta_t(25.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(ramp.delta_t(101.0).is_err());
        assert!(ramp.delta_t(-1.0).is_err());
    }

    #[test]
    fn default_gate_discards_about_seven_percent() {
        let acc = gate_acceptance(&GateModel::default());
        assert!((acc.signal - 0.93).abs() < 0.005, "{}", acc.signal);
        assert_eq!(acc.noise, 0.25);
    }

    #[test]
    fn full_open_gate() {
        for sigma in [0.0, 50.0, 150.0, 300.0] {
            let g = GateModel { gate_ps: 1600.0, jitter_ps: sigma, ..Default::default() };
            let acc = gate_acceptance(&g);
            assert_eq!(acc.noise, 1.0);
            assert!(acc.signal >= 0.99, "{sigma}: {}", acc.signal);
        }
    }

    #[test]
    fn acceptance_monotone() {
        let mut last = 1.1;
        for a in 0..60 {
            let s = gate_acceptance(&GateModel::default().with_alignment(a as f64 * 25.0)).signal;
            assert!(s <= last);
            last = s;
        }
        let mut last = 1.1;
        for j in 1..60 {
            let g = GateModel { jitter_ps: j as f64 * 10.0, ..Default::default() };
            let s = gate_acceptance(&g).signal;
            assert!(s <= last);
            last = s;
        }
    }

    #[test]
    fn tracking_modes() {
        let ramp = DriftModel::ramp(1.0, 100.0);
        let offs: Vec<f64> = (0..=10).map(|i| arrival_offset(i as f64 * 10.0, &ramp, 100.0).unwrap()).collect();
        assert!(track_gate(&offs, true, SyncMode::Wdm, 0.05).iter().all(|a| *a == 0.0));
        let off = track_gate(&offs, false, SyncMode::Wdm, 0.05);
        assert!((off[10] - 5000.0).abs() < 1e-9);
        let lost = gate_acceptance(&GateModel::default().with_alignment(off[10])).signal;
        assert!(lost < 1e-100);

        let raw97 = arrival_offset(100.0, &ramp, 97.0).unwrap();
        let paired = track_gate(&[raw97], true, SyncMode::PairedFiber, 0.05);
        assert!((paired[0] - 242.5).abs() < 1e-9);
    }
}
