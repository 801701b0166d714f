//! Machine-readable run reports.
//!
//! A report carries everything needed to regenerate it: the scenario as
//! parsed, the seed and the pulse count. It has no timestamp, so identical
//! invocations give byte-identical JSON.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioFile;
use crate::decoy::{secure_rate, DecoyEstimate, IntensityStats};
use crate::error::Result;
use crate::simulate::{run_analytic, AnalyticStats, RunStats};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "qkdsim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Montecarlo,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityReport {
    pub label: String,
    pub mu: f64,
    /// Fraction of pulses carrying this intensity.
    pub duty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulses_sent: Option<u64>,
    pub gain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_stderr: Option<f64>,
    pub qber: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qber_stderr: Option<f64>,
    /// Sifted rate if this intensity were sent on every pulse.
    pub sifted_bps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sifted_bps_stderr: Option<f64>,
    /// Sifted rate contributed inside the interleaved stream (scaled by duty).
    pub sifted_bps_in_mix: f64,
    /// Out-of-gate share of all clicks.
    pub out_of_gate_fraction: f64,
    pub double_click_probability: f64,
    /// Share of the QBER caused by dark counts (analytic reports only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark_qber_share: Option<f64>,
}

impl IntensityReport {
    pub fn stats(&self) -> IntensityStats {
        IntensityStats { mu: self.mu, gain: self.gain, qber: self.qber }
    }
}

/// Monte-Carlo agreement with the analytic expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub label: String,
    pub quantity: String,
    pub montecarlo: f64,
    pub analytic: f64,
    pub sigma: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// Largest accepted |z|.
    pub threshold: f64,
    pub passed: bool,
    pub checks: Vec<VerifyCheck>,
}

/// Single-photon quantities the simulator knows exactly, beside their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub kind: ReportKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulses: Option<u64>,
    /// Link time covered by the simulated pulses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_time_s: Option<f64>,
    pub scenario: ScenarioFile,
    pub intensities: Vec<IntensityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoy: Option<DecoyEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoy_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn intensity(&self, label: &str) -> Option<&IntensityReport> {
        self.intensities.iter().find(|i| i.label == label)
    }

    fn attach_decoy(&mut self) {
        if self.intensities.len() < 3 {
            return;
        }
        let stats: Vec<IntensityStats> = self.intensities.iter().map(|i| i.stats()).collect();
        match secure_rate(&stats, &self.scenario.key_rate_params()) {
            Ok(d) => self.decoy = Some(d),
            Err(e) => self.decoy_error = Some(e.to_string()),
        }
    }
}

fn blank(kind: ReportKind, scenario: &ScenarioFile) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        tool: TOOL.into(),
        version: VERSION.into(),
        kind,
        seed: None,
        pulses: None,
        link_time_s: None,
        scenario: scenario.clone(),
        intensities: Vec::new(),
        ground_truth: None,
        decoy: None,
        decoy_error: None,
        verify: None,
    }
}

/// Report of a Monte-Carlo run, with decoy analysis when there are at
/// least three intensities.
pub fn montecarlo_report(scenario: &ScenarioFile, stats: &RunStats, seed: u64) -> Result<Report> {
    let clock = scenario.transmitter.clock_rate_hz;
    let mut r = blank(ReportKind::Montecarlo, scenario);
    r.seed = Some(seed);
    r.pulses = Some(stats.pulses);
    r.link_time_s = Some(stats.duration_s);
    for ((label, &mu), t) in stats.labels.iter().zip(&stats.mus).zip(&stats.tallies) {
        let duty = t.pulses_sent as f64 / stats.pulses as f64;
        let per_pulse = if t.pulses_sent > 0 { t.sifted as f64 / t.pulses_sent as f64 } else { 0.0 };
        let per_pulse_se = if t.pulses_sent > 0 { (per_pulse * (1.0 - per_pulse) / t.pulses_sent as f64).sqrt() } else { 0.0 };
        r.intensities.push(IntensityReport {
            label: label.clone(),
            mu,
            duty,
            pulses_sent: Some(t.pulses_sent),
            gain: t.gain(),
            gain_stderr: Some(t.gain_stderr()),
            qber: t.qber(),
            qber_stderr: Some(t.qber_stderr()),
            sifted_bps: per_pulse * clock,
            sifted_bps_stderr: Some(per_pulse_se * clock),
            sifted_bps_in_mix: per_pulse * clock * duty,
            out_of_gate_fraction: t.out_of_gate_fraction(),
            double_click_probability: if t.pulses_sent > 0 { t.double_clicks as f64 / t.pulses_sent as f64 } else { 0.0 },
            dark_qber_share: None,
        });
    }
    let y0 = stats.pooled_photon_tally(0);
    let y1 = stats.pooled_photon_tally(1);
    if y0.pulses > 0 && y1.pulses > 0 {
        r.ground_truth = Some(GroundTruth {
            y0: y0.clicks as f64 / y0.pulses as f64,
            y1: y1.clicks as f64 / y1.pulses as f64,
            e1: if y1.sifted > 0 { y1.errors as f64 / y1.sifted as f64 } else { 0.0 },
        });
    }
    r.attach_decoy();
    Ok(r)
}

/// Report of the closed-form expectation.
pub fn analytic_report(scenario: &ScenarioFile) -> Result<Report> {
    let an = run_analytic(&scenario.to_scenario()?)?;
    Ok(analytic_report_from(scenario, &an))
}

pub fn analytic_report_from(scenario: &ScenarioFile, an: &AnalyticStats) -> Report {
    let mut r = blank(ReportKind::Analytic, scenario);
    for l in &an.labels {
        let total = l.gain + l.out_of_gate_gain;
        r.intensities.push(IntensityReport {
            label: l.label.clone(),
            mu: l.mu,
            duty: l.duty,
            pulses_sent: None,
            gain: l.gain,
            gain_stderr: None,
            qber: l.qber,
            qber_stderr: None,
            sifted_bps: l.sifted_per_pulse * an.clock_rate_hz,
            sifted_bps_stderr: None,
            sifted_bps_in_mix: l.sifted_per_pulse * an.clock_rate_hz * l.duty,
            out_of_gate_fraction: if total > 0.0 { l.out_of_gate_gain / total } else { 0.0 },
            double_click_probability: l.double_click_probability,
            dark_qber_share: Some(if l.gain > 0.0 { 0.5 * an.dark_yield / l.gain } else { 0.0 }),
        });
    }
    r.ground_truth = Some(GroundTruth { y0: an.single_photon.y0, y1: an.single_photon.y1, e1: an.single_photon.e1 });
    r.attach_decoy();
    r
}

/// Compare a Monte-Carlo report against the analytic expectation of the
/// same scenario; gain and QBER of every intensity must lie within
/// `threshold` binomial standard errors.
pub fn verify(mc: &Report, threshold: f64) -> Result<VerifyReport> {
    let an = analytic_report(&mc.scenario)?;
    let mut checks = Vec::new();
    for (m, a) in mc.intensities.iter().zip(&an.intensities) {
        let n = m.pulses_sent.unwrap_or(0) as f64;
        if n == 0.0 {
            continue;
        }
        let sigma_q = (a.gain * (1.0 - a.gain) / n).sqrt();
        checks.push(check(&m.label, "gain", m.gain, a.gain, sigma_q));
        let sifted = a.sifted_bps / mc.scenario.transmitter.clock_rate_hz * n;
        if sifted >= 1.0 {
            let sigma_e = (a.qber * (1.0 - a.qber) / sifted).sqrt();
            checks.push(check(&m.label, "qber", m.qber, a.qber, sigma_e));
        }
    }
    let passed = checks.iter().all(|c| c.z.abs() <= threshold);
    Ok(VerifyReport { threshold, passed, checks })
}

fn check(label: &str, quantity: &str, montecarlo: f64, analytic: f64, sigma: f64) -> VerifyCheck {
    let z = if sigma > 0.0 {
        (montecarlo - analytic) / sigma
    } else if montecarlo == analytic {
        0.0
    } else {
        f64::INFINITY
    };
    VerifyCheck { label: label.into(), quantity: quantity.into(), montecarlo, analytic, sigma, z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset_file;
    use crate::simulate::run_montecarlo;

    #[test]
    fn analytic_report_has_decoy_and_dark_share() {
        let f = preset_file("97km-wdm").unwrap();
        let r = analytic_report(&f).unwrap();
        let s = r.intensity("signal").unwrap();
        assert!((s.qber - 0.0289).abs() < 1e-4, "{}", s.qber);
        assert!((s.dark_qber_share.unwrap() - 0.013).abs() < 1e-3);
        assert!((s.sifted_bps_in_mix - s.sifted_bps / 4.0).abs() < 1e-9);
        let d = r.decoy.as_ref().unwrap();
        assert!(d.r_bps > 0.0);
        assert_eq!(d.consistency.len(), 1);
    }

    #[test]
    fn montecarlo_report_is_reproducible_and_verifies() {
        let f = preset_file("65km-wdm").unwrap();
        let s = f.to_scenario().unwrap();
        let a = montecarlo_report(&f, &run_montecarlo(&s, 3_000_000, 5).unwrap(), 5).unwrap();
        let b = montecarlo_report(&f, &run_montecarlo(&s, 3_000_000, 5).unwrap(), 5).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let v = verify(&a, 4.0).unwrap();
        assert!(v.passed, "{v:?}");
        // the vacuum QBER check needs at least one expected sifted bit
        assert!(v.checks.len() >= 7);
        let back: Report = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back.scenario, f);
    }

    #[test]
    fn verify_flags_a_wrong_scenario() {
        let f = preset_file("65km-wdm").unwrap();
        let mut other = f.clone();
        other.receiver.insertion_transmittance *= 1.5;
        let s = other.to_scenario().unwrap();
        let mut r = montecarlo_report(&other, &run_montecarlo(&s, 30_000_000, 5).unwrap(), 5).unwrap();
        r.scenario = f;
        assert!(!verify(&r, 4.0).unwrap().passed);
    }
}
