use serde::{Deserialize, Serialize};

use super::{DoubleClickPolicy, LinkScenario};
use crate::error::Result;
use crate::model::detector_basis;
use crate::model::QuantumSymbol;
use crate::optics::{noise_photons_per_pulse, RoutingMatrix, DETECTORS};

/// Expected yields of vacuum and single-photon pulses, the quantities the
/// decoy bounds estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhotonTruth {
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
}

/// Expected per-pulse outcome probabilities for one intensity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticLabel {
    pub label: String,
    pub mu: f64,
    pub duty: f64,
    pub gain: f64,
    pub sifted_per_pulse: f64,
    pub errors_per_pulse: f64,
    pub qber: f64,
    pub out_of_gate_gain: f64,
    pub double_click_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticStats {
    pub labels: Vec<AnalyticLabel>,
    pub clock_rate_hz: f64,
    /// Mean probability that an emitted photon gives an in-gate click.
    pub eta_total: f64,
    /// In-gate background yield summed over detectors (dark + noise).
    pub background_yield: f64,
    pub dark_yield: f64,
    pub signal_acceptance: f64,
    pub noise_fraction: f64,
    /// Matched-basis error share of signal photons.
    pub e_opt: f64,
    pub single_photon: SinglePhotonTruth,
}

impl AnalyticStats {
    pub fn label(&self, label: &str) -> Option<&AnalyticLabel> {
        self.labels.iter().find(|l| l.label == label)
    }
}

/// Probability that the final (post-resolution) detection is at each
/// detector when detectors click independently with `click[d]`.
fn final_distribution(click: [f64; DETECTORS], policy: DoubleClickPolicy) -> ([f64; DETECTORS], f64, f64) {
    let mut out = [0.0; DETECTORS];
    let mut any = 0.0;
    let mut multi = 0.0;
    for set in 1u8..16 {
        let mut p = 1.0;
        for (d, c) in click.iter().enumerate() {
            p *= if set & (1 << d) != 0 { *c } else { 1.0 - c };
        }
        if p == 0.0 {
            continue;
        }
        any += p;
        let k = set.count_ones();
        if k > 1 {
            multi += p;
        }
        if k == 1 || policy == DoubleClickPolicy::RandomBit {
            for (d, o) in out.iter_mut().enumerate() {
                if set & (1 << d) != 0 {
                    *o += p / k as f64;
                }
            }
        }
    }
    (out, any, multi)
}

fn sift_and_errors(final_at: &[f64; DETECTORS], symbol: &QuantumSymbol) -> (f64, f64) {
    let mut sifted = 0.0;
    let mut errors = 0.0;
    for (d, p) in final_at.iter().enumerate() {
        if detector_basis(d) == symbol.basis {
            sifted += p;
            if (d & 1 == 1) != symbol.bit {
                errors += p;
            }
        }
    }
    (sifted, errors)
}

/// Closed-form expectation of [`super::run_montecarlo`].
///
/// Emitted photons split into independent Poisson streams per
/// (detector, gate) outcome, so click probabilities are exact; the click
/// sets are enumerated to apply the double-click policy.
pub fn run_analytic(scenario: &LinkScenario) -> Result<AnalyticStats> {
    scenario.validate()?;
    let tx = &scenario.transmitter;
    let rx = &scenario.receiver;
    let acc = scenario.acceptance_at(scenario.reference_time())?;
    let weights = scenario.state_weights()?;
    let survive = scenario.channel.transmittance() * rx.insertion_transmittance;
    let routing = RoutingMatrix::ideal(rx);
    let policy = scenario.double_click_policy;

    let noise = noise_photons_per_pulse(&scenario.channel, tx.stray_mu, rx.filter_bandwidth_ghz, 1.0)?;
    let mut bg = [0.0; DETECTORS];
    let mut bg_in = [0.0; DETECTORS];
    let mut dark_yield = 0.0;
    for d in 0..DETECTORS {
        let det = &rx.detectors[d];
        bg[d] = (det.dark_rate_cps / tx.clock_rate_hz + noise * rx.insertion_transmittance * det.efficiency / 4.0)
            .min(1.0);
        bg_in[d] = bg[d] * acc.noise;
        dark_yield += det.dark_rate_cps / tx.clock_rate_hz * acc.noise;
    }

    // per state: per-photon in-gate and out-of-gate click probability at each detector
    let mut inside = [[0.0; DETECTORS]; 4];
    let mut outside = [[0.0; DETECTORS]; 4];
    for s in 0..4 {
        for d in 0..DETECTORS {
            let detect = survive * routing.rows[s][d] * rx.detectors[d].efficiency;
            inside[s][d] = detect * acc.signal;
            outside[s][d] = detect * (1.0 - acc.signal);
        }
    }

    let duties = tx.intensities.duties();
    let mut labels = Vec::new();
    for (level, duty) in tx.intensities.levels().iter().zip(duties) {
        let mu = level.mu;
        let (mut gain, mut sifted, mut errors, mut out_gain, mut multi) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..4 {
            let sym = QuantumSymbol::from_state_index(s, 0);
            let mut click = [0.0; DETECTORS];
            let mut none_in = 1.0;
            let mut none_at_all = 1.0;
            for d in 0..DETECTORS {
                let q_in = (-mu * inside[s][d]).exp() * (1.0 - bg_in[d]);
                click[d] = 1.0 - q_in;
                none_in *= q_in;
                none_at_all *= (-mu * (inside[s][d] + outside[s][d])).exp() * (1.0 - bg[d]);
            }
            let (final_at, any, m) = final_distribution(click, policy);
            let (sf, er) = sift_and_errors(&final_at, &sym);
            let w = weights[s];
            gain += w * any;
            sifted += w * sf;
            errors += w * er;
            multi += w * m;
            out_gain += w * (none_in - none_at_all);
        }
        labels.push(AnalyticLabel {
            label: level.label.clone(),
            mu,
            duty,
            gain,
            sifted_per_pulse: sifted,
            errors_per_pulse: errors,
            qber: if sifted > 0.0 { errors / sifted } else { 0.0 },
            out_of_gate_gain: out_gain,
            double_click_probability: multi,
        });
    }

    // vacuum and single-photon truth
    let (_, y0, _) = final_distribution(bg_in, policy);
    let (mut y1, mut s1, mut err1) = (0.0, 0.0, 0.0);
    let (mut eta_total, mut opt_sift, mut opt_err) = (0.0, 0.0, 0.0);
    for s in 0..4 {
        let sym = QuantumSymbol::from_state_index(s, 0);
        let w = weights[s];
        let a_total: f64 = inside[s].iter().sum();
        // photon gives no in-gate click
        let (fa, any, _) = final_distribution(bg_in, policy);
        let (sf, er) = sift_and_errors(&fa, &sym);
        let (mut y, mut sft, mut e) = ((1.0 - a_total) * any, (1.0 - a_total) * sf, (1.0 - a_total) * er);
        for d in 0..DETECTORS {
            let mut c = bg_in;
            c[d] = 1.0;
            let (fa, any, _) = final_distribution(c, policy);
            let (sf, er) = sift_and_errors(&fa, &sym);
            y += inside[s][d] * any;
            sft += inside[s][d] * sf;
            e += inside[s][d] * er;
            if detector_basis(d) == sym.basis {
                opt_sift += w * inside[s][d];
                if (d & 1 == 1) != sym.bit {
                    opt_err += w * inside[s][d];
                }
            }
        }
        y1 += w * y;
        s1 += w * sft;
        err1 += w * e;
        eta_total += w * a_total;
    }

    Ok(AnalyticStats {
        labels,
        clock_rate_hz: tx.clock_rate_hz,
        eta_total,
        background_yield: y0,
        dark_yield,
        signal_acceptance: acc.signal,
        noise_fraction: acc.noise,
        e_opt: if opt_sift > 0.0 { opt_err / opt_sift } else { 0.0 },
        single_photon: SinglePhotonTruth { y0, y1, e1: if s1 > 0.0 { err1 / s1 } else { 0.0 } },
    })
}
