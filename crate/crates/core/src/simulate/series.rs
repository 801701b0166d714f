use serde::{Deserialize, Serialize};

use super::engine::{run_montecarlo_with, RunOptions};
use super::LinkScenario;
use crate::error::{Error, Result};
use crate::model::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// Window midpoint.
    pub t_s: f64,
    pub sifted_bps: f64,
    pub qber: f64,
    pub alignment_error_ps: f64,
}

/// Key-generation performance over consecutive windows of a long run.
///
/// Each window simulates `pulses_per_window` pulses at the drift state of
/// its midpoint and scales counts to rates; windows draw from independent
/// seeds derived from `seed` and the window index.
pub fn time_series(
    scenario: &LinkScenario,
    label: &str,
    duration_s: f64,
    window_s: f64,
    pulses_per_window: u64,
    seed: u64,
) -> Result<Vec<SeriesPoint>> {
    if !(window_s > 0.0 && window_s <= duration_s) {
        return Err(Error::config(format!("window {window_s} s must lie in (0, duration = {duration_s} s]")));
    }
    let fixed = scenario.with_fixed_intensity(label)?;
    let idx = fixed.transmitter.intensities.index_of(label).expect("label resolved above");
    let t0 = scenario.reference_time();
    let windows = (duration_s / window_s - 1e-9).ceil() as u64;
    let clock = scenario.clock_rate_hz();
    (0..windows)
        .map(|k| {
            let start = k as f64 * window_s;
            let end = ((k + 1) as f64 * window_s).min(duration_s);
            let t = t0 + 0.5 * (start + end);
            let opts = RunOptions { time_s: Some(t), ..Default::default() };
            let out = run_montecarlo_with(&fixed, pulses_per_window, RngStream::derive_seed(seed, k), &opts)?;
            let tally = &out.stats.tallies[idx];
            Ok(SeriesPoint {
                t_s: t,
                sifted_bps: tally.sifted as f64 / tally.pulses_sent as f64 * clock,
                qber: tally.qber(),
                alignment_error_ps: fixed.alignment_at(t)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::link;
    use super::*;
    use crate::timing::DriftModel;

    #[test]
    fn window_count_rounds_up() {
        let s = link(3.0, &[0.4]);
        let pts = time_series(&s, "l0", 4800.0, 220.0, 10_000, 1).unwrap();
        assert_eq!(pts.len(), 22);
        let pts = time_series(&s, "l0", 1800.0, 150.0, 10_000, 1).unwrap();
        assert_eq!(pts.len(), 12);
        assert!(time_series(&s, "l0", 100.0, 200.0, 10, 1).is_err());
        assert!(time_series(&s, "nope", 100.0, 20.0, 10, 1).is_err());
    }

    #[test]
    fn untracked_ramp_loses_the_gate() {
        let mut s = link(10.0, &[0.4]);
        s.drift = DriftModel::ramp(1.0, 1000.0);
        s.gate.tracking = false;
        let pts = time_series(&s, "l0", 1000.0, 100.0, 2_000_000, 3).unwrap();
        assert!(pts.last().unwrap().sifted_bps < 0.1 * pts[0].sifted_bps);
        s.gate.tracking = true;
        let pts = time_series(&s, "l0", 1000.0, 100.0, 2_000_000, 3).unwrap();
        assert!(pts.iter().all(|p| p.alignment_error_ps == 0.0));
    }
}
