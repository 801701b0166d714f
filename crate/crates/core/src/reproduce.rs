//! Datasets behind the two result figures of the field trial: key rate and
//! QBER over time at both distances, and both against mean photon number.

use std::io::Write;

use rayon_shim::par_map;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RngStream;
use crate::presets::preset;
use crate::simulate::{run_analytic, run_montecarlo, time_series, SeriesPoint};
use crate::timing::DriftModel;

/// One time-series setup: preset, run length and window count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSetup {
    pub preset: &'static str,
    pub duration_s: f64,
    pub windows: u32,
    /// Fiber temperature change over the run, degC.
    pub temperature_swing_c: f64,
}

pub const FIG2_SETUPS: [SeriesSetup; 2] = [
    SeriesSetup { preset: "65km-wdm", duration_s: 1800.0, windows: 12, temperature_swing_c: 0.5 },
    SeriesSetup { preset: "97km-wdm", duration_s: 4800.0, windows: 22, temperature_swing_c: 0.5 },
];

pub const FIG3_MUS: [f64; 3] = [0.05, 0.15, 0.4];
pub const FIG3_PRESETS: [&str; 4] = ["65km-wdm", "65km-nowdm", "97km-wdm", "97km-nowdm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub preset: String,
    pub distance_km: f64,
    pub window: u32,
    pub t_s: f64,
    pub sifted_bps: f64,
    pub qber: f64,
    pub alignment_error_ps: f64,
}

impl SeriesRow {
    fn new(preset: &str, distance_km: f64, window: u32, p: SeriesPoint) -> Self {
        SeriesRow {
            preset: preset.into(),
            distance_km,
            window,
            t_s: p.t_s,
            sifted_bps: p.sifted_bps,
            qber: p.qber,
            alignment_error_ps: p.alignment_error_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub preset: String,
    pub distance_km: f64,
    pub sync_mode: String,
    pub mu: f64,
    pub analytic_sifted_bps: f64,
    pub analytic_qber: f64,
    pub mc_sifted_bps: f64,
    pub mc_sifted_bps_stderr: f64,
    pub mc_qber: f64,
    pub mc_qber_stderr: f64,
    pub pulses: u64,
}

mod rayon_shim {
    /// Order-preserving map, parallel when the feature is on.
    #[cfg(feature = "parallel")]
    pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        items.iter().map(f).collect()
    }
}

/// Time series for each setup: the signal intensity alone, a slow linear
/// temperature drift, the gate tracking the recovered clock.
pub fn fig2(pulses_per_window: u64, seed: u64) -> Result<Vec<SeriesRow>> {
    let mut rows = Vec::new();
    for (i, setup) in FIG2_SETUPS.iter().enumerate() {
        let mut s = preset(setup.preset)?;
        s.drift = DriftModel { profile: vec![(0.0, 0.0), (setup.duration_s, setup.temperature_swing_c)], ..s.drift };
        let window = setup.duration_s / setup.windows as f64;
        let pts = time_series(&s, "signal", setup.duration_s, window, pulses_per_window, RngStream::derive_seed(seed, i as u64))?;
        for (k, p) in pts.into_iter().enumerate() {
            rows.push(SeriesRow::new(setup.preset, s.channel.length_km, k as u32, p));
        }
    }
    Ok(rows)
}

/// Sifted rate and QBER against mean photon number, analytic and simulated
/// with `pulses` fixed-intensity pulses per point.
pub fn fig3(pulses: u64, seed: u64) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for name in FIG3_PRESETS {
        for (j, &mu) in FIG3_MUS.iter().enumerate() {
            let label = ["weak", "decoy", "signal"][j];
            jobs.push((name, label, mu));
        }
    }
    let rows = par_map(&jobs, |&(name, label, mu)| -> Result<SweepRow> {
        let s = preset(name)?.with_fixed_intensity(label)?;
        let idx = s.transmitter.intensities.index_of(label).expect("preset label");
        if s.transmitter.intensities.levels()[idx].mu != mu {
            return Err(Error::config(format!("preset {name} label {label} is not mu = {mu}")));
        }
        let clock = s.clock_rate_hz();
        let an = run_analytic(&s)?;
        let a = &an.labels[idx];
        let point = jobs.iter().position(|j| j.0 == name && j.1 == label).expect("job listed") as u64;
        let mc = run_montecarlo(&s, pulses, RngStream::derive_seed(seed, point))?;
        let t = &mc.tallies[idx];
        let n = t.pulses_sent as f64;
        let p = t.sifted as f64 / n;
        Ok(SweepRow {
            preset: name.into(),
            distance_km: s.channel.length_km,
            sync_mode: serde_json::to_value(s.channel.sync_mode)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            mu,
            analytic_sifted_bps: a.sifted_per_pulse * clock,
            analytic_qber: a.qber,
            mc_sifted_bps: p * clock,
            mc_sifted_bps_stderr: (p * (1.0 - p) / n).sqrt() * clock,
            mc_qber: t.qber(),
            mc_qber_stderr: t.qber_stderr(),
            pulses,
        })
    });
    rows.into_iter().collect()
}

pub fn write_csv<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::data(format!("csv write: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::data(format!("csv write: {e}")))?;
    Ok(())
}
