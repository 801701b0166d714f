//! Basis sifting, QBER bookkeeping, rate conversion and error-correction cost.

use crate::error::{Error, Result};
use crate::model::detector_basis;
use crate::model::{binary_entropy, QuantumSymbol};
use crate::simulate::{DetectionEvent, RunStats};

/// Matched-basis (alice_bit, bob_bit) pairs per intensity index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedBatch {
    pub pairs: Vec<Vec<(bool, bool)>>,
}

impl SiftedBatch {
    pub fn sifted(&self, intensity: usize) -> usize {
        self.pairs.get(intensity).map_or(0, Vec::len)
    }

    pub fn errors(&self, intensity: usize) -> usize {
        self.pairs.get(intensity).map_or(0, |p| p.iter().filter(|(a, b)| a != b).count())
    }

    pub fn qber(&self, intensity: usize) -> f64 {
        let n = self.sifted(intensity);
        if n == 0 {
            0.0
        } else {
            self.errors(intensity) as f64 / n as f64
        }
    }

    pub fn total_sifted(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Keep in-gate detections whose detector basis matches Alice's basis.
pub fn sift(alice: &[QuantumSymbol], detections: &[DetectionEvent]) -> Result<SiftedBatch> {
    sift_by(detections, |i| alice.get(i as usize).copied())
}

/// As [`sift`], with Alice's symbols supplied by lookup (e.g. a replayed stream).
pub fn sift_by<F>(detections: &[DetectionEvent], mut alice: F) -> Result<SiftedBatch>
where
    F: FnMut(u64) -> Option<QuantumSymbol>,
{
    let mut batch = SiftedBatch::default();
    for e in detections.iter().filter(|e| e.within_gate) {
        let sym = alice(e.pulse_index)
            .ok_or_else(|| Error::data(format!("detection references unknown pulse {}", e.pulse_index)))?;
        if e.detector_id as usize >= 4 {
            return Err(Error::data(format!("detector id {} out of range", e.detector_id)));
        }
        if detector_basis(e.detector_id as usize) != sym.basis {
            continue;
        }
        if batch.pairs.len() <= sym.intensity {
            batch.pairs.resize(sym.intensity + 1, Vec::new());
        }
        batch.pairs[sym.intensity].push((sym.bit, e.detector_id & 1 == 1));
    }
    Ok(batch)
}

/// Sifted key rate (bits/s) contributed by each intensity class of a run.
pub fn sifted_rate(stats: &RunStats, clock_rate_hz: f64) -> Result<Vec<f64>> {
    if stats.pulses == 0 {
        return Err(Error::data("run has no pulses"));
    }
    Ok(stats
        .tallies
        .iter()
        .map(|t| {
            if t.pulses_sent == 0 {
                return 0.0;
            }
            let duty = t.pulses_sent as f64 / stats.pulses as f64;
            t.sifted as f64 / t.pulses_sent as f64 * clock_rate_hz * duty
        })
        .collect())
}

/// Sifted rate implied by a gain.
pub fn sifted_rate_from_gain(gain: f64, sift_fraction: f64, clock_rate_hz: f64, duty: f64) -> f64 {
    gain * sift_fraction * clock_rate_hz * duty
}

/// Gain implied by a sifted rate at duty 1 with half the clicks sifted.
pub fn gain_from_sifted_rate(sifted_bps: f64, clock_rate_hz: f64) -> f64 {
    2.0 * sifted_bps / clock_rate_hz
}

/// Bits disclosed per sifted bit by error correction of efficiency `f`.
pub fn ec_cost(qber: f64, f: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(Error::domain(format!("QBER {qber} outside [0, 0.5]")));
    }
    if !(f >= 1.0) {
        return Err(Error::domain(format!("error-correction inefficiency {f} must be >= 1")));
    }
    Ok(f * binary_entropy(qber)?)
}
