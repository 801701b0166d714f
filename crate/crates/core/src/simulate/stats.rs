use serde::{Deserialize, Serialize};

/// Photon-number bins kept per intensity; the last bin collects n >= PHOTON_BINS - 1.
pub const PHOTON_BINS: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonTally {
    pub pulses: u64,
    pub clicks: u64,
    pub sifted: u64,
    pub errors: u64,
}

impl PhotonTally {
    fn merge(&mut self, o: &PhotonTally) {
        self.pulses += o.pulses;
        self.clicks += o.clicks;
        self.sifted += o.sifted;
        self.errors += o.errors;
    }
}

/// Counts for one intensity class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntensityTally {
    pub pulses_sent: u64,
    pub clicks_in_gate: u64,
    /// Pulses whose only clicks fell outside the gate.
    pub clicks_out_of_gate: u64,
    /// Pulses with two or more in-gate clicks.
    pub double_clicks: u64,
    pub sifted: u64,
    pub errors: u64,
    /// Ground truth split by emitted photon number.
    pub by_photon_number: [PhotonTally; PHOTON_BINS],
}

impl IntensityTally {
    pub fn merge(&mut self, o: &IntensityTally) {
        self.pulses_sent += o.pulses_sent;
        self.clicks_in_gate += o.clicks_in_gate;
        self.clicks_out_of_gate += o.clicks_out_of_gate;
        self.double_clicks += o.double_clicks;
        self.sifted += o.sifted;
        self.errors += o.errors;
        for (a, b) in self.by_photon_number.iter_mut().zip(&o.by_photon_number) {
            a.merge(b);
        }
    }

    /// Gain: in-gate detections per pulse.
    pub fn gain(&self) -> f64 {
        ratio(self.clicks_in_gate, self.pulses_sent)
    }

    pub fn gain_stderr(&self) -> f64 {
        binomial_stderr(self.clicks_in_gate, self.pulses_sent)
    }

    pub fn qber(&self) -> f64 {
        ratio(self.errors, self.sifted)
    }

    pub fn qber_stderr(&self) -> f64 {
        binomial_stderr(self.errors, self.sifted)
    }

    pub fn sift_fraction(&self) -> f64 {
        ratio(self.sifted, self.clicks_in_gate)
    }

    pub fn out_of_gate_fraction(&self) -> f64 {
        ratio(self.clicks_out_of_gate, self.clicks_in_gate + self.clicks_out_of_gate)
    }
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub(crate) fn binomial_stderr(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Tallies of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub labels: Vec<String>,
    pub mus: Vec<f64>,
    pub tallies: Vec<IntensityTally>,
    pub pulses: u64,
    /// Link time represented by the run, pulses / clock rate.
    pub duration_s: f64,
}

impl RunStats {
    pub fn tally(&self, label: &str) -> Option<&IntensityTally> {
        self.labels.iter().position(|l| l == label).map(|i| &self.tallies[i])
    }

    /// Per-photon-number ground truth pooled across intensities.
    pub fn pooled_photon_tally(&self, n: usize) -> PhotonTally {
        let mut t = PhotonTally::default();
        for tally in &self.tallies {
            t.merge(&tally.by_photon_number[n]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rates_handle_empty_tallies() {
        let t = IntensityTally::default();
        assert_eq!(t.gain(), 0.0);
        assert_eq!(t.qber(), 0.0);
        assert_eq!(t.gain_stderr(), 0.0);
    }

    #[test]
    fn merge_is_additive() {
        let mut a = IntensityTally { pulses_sent: 10, clicks_in_gate: 3, sifted: 2, errors: 1, ..Default::default() };
        a.by_photon_number[1].clicks = 2;
        let b = a.clone();
        a.merge(&b);
        assert_eq!(a.pulses_sent, 20);
        assert_eq!(a.by_photon_number[1].clicks, 4);
        assert_eq!(a.qber(), 0.5);
    }
}
