//! Vacuum + weak-decoy bounds on single-photon yield and error, and the
//! asymptotic secure key rate built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::binary_entropy;
use crate::simulate::RunStats;

/// Observed gain and QBER at one mean photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityStats {
    pub mu: f64,
    pub gain: f64,
    pub qber: f64,
}

impl IntensityStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::data(format!("mu {} must be >= 0", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.gain) {
            return Err(Error::data(format!("gain {} outside [0, 1]", self.gain)));
        }
        if !(0.0..=1.0).contains(&self.qber) {
            return Err(Error::data(format!("qber {} outside [0, 1]", self.qber)));
        }
        Ok(())
    }

    /// One entry per intensity class of a run.
    pub fn from_run(stats: &RunStats) -> Vec<IntensityStats> {
        stats
            .mus
            .iter()
            .zip(&stats.tallies)
            .filter(|(_, t)| t.pulses_sent > 0)
            .map(|(&mu, t)| IntensityStats { mu, gain: t.gain(), qber: t.qber() })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateParams {
    /// Fraction of detections surviving basis sifting.
    pub sift_factor: f64,
    /// Error-correction inefficiency, 1 at the Shannon limit.
    pub ec_inefficiency: f64,
    pub clock_rate_hz: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        KeyRateParams { sift_factor: 0.5, ec_inefficiency: 1.0, clock_rate_hz: 625e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    pub signal_mu: f64,
    pub decoy_mu: f64,
    pub y0: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1: f64,
    pub r_per_pulse: f64,
    pub r_bps: f64,
    /// Single-photon yield bound recomputed with each extra weak intensity
    /// in place of the decoy, as (mu, Y1 lower bound).
    pub consistency: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn y1_lower_unclamped(signal: &IntensityStats, decoy: &IntensityStats, y0: f64) -> Result<f64> {
    let (mu, nu) = (signal.mu, decoy.mu);
    if !(nu > 0.0 && mu > nu) {
        return Err(Error::domain(format!("decoy bound needs signal mu > decoy nu > 0, got {mu} and {nu}")));
    }
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    Ok(mu / (mu * nu - nu2)
        * (decoy.gain * nu.exp() - signal.gain * mu.exp() * nu2 / mu2 - (mu2 - nu2) / mu2 * y0))
}

/// Lower bound on the single-photon yield, clamped to [0, 1].
pub fn y1_lower(signal: &IntensityStats, decoy: &IntensityStats, y0: f64) -> Result<f64> {
    Ok(y1_lower_unclamped(signal, decoy, y0)?.clamp(0.0, 1.0))
}

/// Upper bound on the single-photon error rate, clamped to [0, 1].
pub fn e1_upper(decoy: &IntensityStats, y0: f64, y1_lower: f64) -> Result<f64> {
    if !(y1_lower > 0.0) {
        return Err(Error::UndefinedBound("single-photon error bound needs Y1 > 0".into()));
    }
    let nu = decoy.mu;
    if !(nu > 0.0) {
        return Err(Error::domain("decoy intensity must be > 0"));
    }
    Ok(((decoy.qber * decoy.gain * nu.exp() - 0.5 * y0) / (y1_lower * nu)).clamp(0.0, 1.0))
}

/// Asymptotic secure key rate from vacuum, decoy and signal statistics.
///
/// The largest intensity is the signal, the next largest nonzero one the
/// decoy; further weak intensities only feed the consistency list.
pub fn secure_rate(stats: &[IntensityStats], params: &KeyRateParams) -> Result<DecoyEstimate> {
    for s in stats {
        s.validate()?;
    }
    let vacuum = stats
        .iter()
        .find(|s| s.mu == 0.0)
        .ok_or_else(|| Error::config("decoy analysis needs a vacuum (mu = 0) intensity"))?;
    let mut weak: Vec<&IntensityStats> = stats.iter().filter(|s| s.mu > 0.0).collect();
    weak.sort_by(|a, b| b.mu.total_cmp(&a.mu));
    if weak.len() < 2 {
        return Err(Error::config("decoy analysis needs a signal and a decoy intensity"));
    }
    let (signal, decoy) = (weak[0], weak[1]);
    if signal.mu == decoy.mu {
        return Err(Error::config("signal and decoy intensities must differ"));
    }
    let mut warnings = Vec::new();
    let y0 = vacuum.gain;

    let raw = y1_lower_unclamped(signal, decoy, y0)?;
    if raw < 0.0 {
        warnings.push(format!("Y1 lower bound {raw:.3e} is negative; clamped to 0"));
    }
    let y1 = raw.clamp(0.0, 1.0);
    let e1 = if y1 > 0.0 {
        e1_upper(decoy, y0, y1)?
    } else {
        warnings.push("Y1 lower bound is zero; single-photon error taken as 0.5".into());
        0.5
    };

    let q1 = y1 * signal.mu * (-signal.mu).exp();
    let r = if signal.qber > 0.5 {
        warnings.push(format!("signal QBER {} exceeds 0.5", signal.qber));
        0.0
    } else {
        let ec = params.ec_inefficiency * binary_entropy(signal.qber)?;
        let pa = binary_entropy(e1.min(0.5))?;
        params.sift_factor * (-signal.gain * ec + q1 * (1.0 - pa))
    };
    let r_per_pulse = r.max(0.0);

    let consistency = weak[2..]
        .iter()
        .map(|extra| Ok((extra.mu, y1_lower(signal, extra, y0)?)))
        .collect::<Result<Vec<_>>>()?;
    for w in weak.windows(2) {
        if w[0].gain < w[1].gain {
            warnings.push(format!("gain at mu = {} is below gain at mu = {}", w[0].mu, w[1].mu));
        }
    }

    Ok(DecoyEstimate {
        signal_mu: signal.mu,
        decoy_mu: decoy.mu,
        y0,
        y1_lower: y1,
        e1_upper: e1,
        q1,
        r_per_pulse,
        r_bps: r_per_pulse * params.clock_rate_hz,
        consistency,
        warnings,
    })
}
