use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

use super::stats::{IntensityTally, RunStats, PHOTON_BINS};
use super::{AliceSource, DoubleClickPolicy, LinkScenario};
use crate::error::{Error, Result};
use crate::model::{uniform_f64, Basis, Prbs7, QuantumSymbol, RngStream};
use crate::model::detector_basis;
use crate::optics::{RoutingMatrix, DETECTORS, noise_photons_per_pulse};

/// Pulses per independently seeded block. Part of the reproducibility
/// contract: changing it changes every result.
pub const BLOCK_PULSES: u64 = 1 << 16;

const SYMBOL_STREAM: u64 = u64::MAX;
const PULSE_PURPOSE: u64 = 0;
const BACKGROUND_PURPOSE: u64 = 1;

fn block_stream(seed: u64, block: u64, purpose: u64) -> RngStream {
    RngStream::new(seed, block * 2 + purpose)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Blocks spread over the current rayon pool. Without the `parallel`
    /// feature this runs sequentially; results are identical either way.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub execution: Execution,
    pub record_events: bool,
    /// Link time at which drift is evaluated; defaults to the profile start.
    pub time_s: Option<f64>,
}

/// One resolved detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub pulse_index: u64,
    pub detector_id: u8,
    pub within_gate: bool,
}

#[derive(Debug, Clone)]
pub struct McOutput {
    pub stats: RunStats,
    pub events: Option<Vec<DetectionEvent>>,
}

/// Pick one of the clicked detectors (bit mask over T0, T1, P0, P1).
///
/// A single click is returned as is; with several, `RandomBit` chooses
/// uniformly and `Discard` yields nothing.
pub fn resolve_double_clicks<R: RngCore + ?Sized>(
    clicked: u8,
    policy: DoubleClickPolicy,
    rng: &mut R,
) -> Option<usize> {
    let count = clicked.count_ones();
    match count {
        0 => None,
        1 => Some(clicked.trailing_zeros() as usize),
        _ => match policy {
            DoubleClickPolicy::Discard => None,
            DoubleClickPolicy::RandomBit => {
                let pick = ((uniform_f64(rng.next_u64()) * count as f64) as u32).min(count - 1);
                let mut m = clicked;
                for _ in 0..pick {
                    m &= m - 1;
                }
                Some(m.trailing_zeros() as usize)
            }
        },
    }
}

struct LabelPlan {
    /// Cumulative P(n photons emitted, none reaches the decoder).
    quiet_cdf: Vec<f64>,
    /// Cumulative P(n | at least one photon reaches the decoder), index n.
    survivor_cdf: Vec<f64>,
}

impl LabelPlan {
    fn new(mu: f64, survive: f64) -> Self {
        let mut pmf = Vec::new();
        let mut p = (-mu).exp();
        let mut n = 0u32;
        loop {
            pmf.push(p);
            n += 1;
            p *= mu / n as f64;
            if (n as f64 > mu && p < 1e-18) || p == 0.0 {
                break;
            }
        }
        let mut acc = 0.0;
        let quiet_cdf = pmf
            .iter()
            .enumerate()
            .map(|(n, p)| {
                acc += p * (1.0 - survive).powi(n as i32);
                acc
            })
            .collect();
        let weights: Vec<f64> = pmf
            .iter()
            .enumerate()
            .map(|(n, p)| p * (1.0 - (1.0 - survive).powi(n as i32)))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let survivor_cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                if total > 0.0 {
                    acc / total
                } else {
                    0.0
                }
            })
            .collect();
        LabelPlan { quiet_cdf, survivor_cdf }
    }

    /// Photon number if no photon reaches the decoder, else `None`.
    #[inline]
    fn quiet(&self, u: f64) -> Option<usize> {
        for (n, c) in self.quiet_cdf.iter().enumerate() {
            if u < *c {
                return Some(n);
            }
        }
        if *self.survivor_cdf.last().unwrap_or(&0.0) == 0.0 {
            return Some(self.quiet_cdf.len() - 1);
        }
        None
    }

    fn survivor_photons(&self, u: f64) -> usize {
        self.survivor_cdf.iter().position(|c| u < *c).unwrap_or(self.survivor_cdf.len() - 1)
    }
}

struct Plan {
    seed: u64,
    pulses: u64,
    labels: Vec<LabelPlan>,
    selection_cdf: Vec<f64>,
    fixed_label: Option<usize>,
    prbs: Option<(Prbs7, u64)>,
    /// Probability an emitted photon reaches the decoder.
    survive: f64,
    /// Per state: cumulative over (detector, in-gate / out-of-gate) outcomes
    /// of one photon at the decoder.
    outcome_cdf: [[f64; 2 * DETECTORS]; 4],
    /// Per detector background click probability over the whole slot.
    background: [f64; DETECTORS],
    noise_fraction: f64,
    policy: DoubleClickPolicy,
    record: bool,
}

impl Plan {
    fn new(scenario: &LinkScenario, pulses: u64, seed: u64, opts: &RunOptions) -> Result<Self> {
        scenario.validate()?;
        if pulses == 0 {
            return Err(Error::config("pulses must be >= 1"));
        }
        let tx = &scenario.transmitter;
        let rx = &scenario.receiver;
        let t = opts.time_s.unwrap_or_else(|| scenario.reference_time());
        let acc = scenario.acceptance_at(t)?;
        let survive = scenario.channel.transmittance() * rx.insertion_transmittance;

        let labels = tx.intensities.levels().iter().map(|l| LabelPlan::new(l.mu, survive)).collect();
        let duties = tx.intensities.duties();
        let active: Vec<usize> = (0..duties.len()).filter(|&i| duties[i] > 0.0).collect();
        let fixed_label = (active.len() == 1).then(|| active[0]);
        let mut acc_w = 0.0;
        let mut selection_cdf: Vec<f64> = duties
            .iter()
            .map(|d| {
                acc_w += d;
                acc_w
            })
            .collect();
        if let Some(&last) = active.last() {
            for c in selection_cdf[last..].iter_mut() {
                *c = 1.0;
            }
        }

        let routing = RoutingMatrix::ideal(rx);
        let mut outcome_cdf = [[0.0; 2 * DETECTORS]; 4];
        for (s, row) in routing.rows.iter().enumerate() {
            let mut c = 0.0;
            for d in 0..DETECTORS {
                let detect = row[d] * rx.detectors[d].efficiency;
                c += detect * acc.signal;
                outcome_cdf[s][2 * d] = c;
                c += detect * (1.0 - acc.signal);
                outcome_cdf[s][2 * d + 1] = c;
            }
        }

        let noise = noise_photons_per_pulse(&scenario.channel, tx.stray_mu, rx.filter_bandwidth_ghz, 1.0)?;
        let mut background = [0.0; DETECTORS];
        for (d, b) in background.iter_mut().enumerate() {
            let det = &rx.detectors[d];
            *b = (det.dark_rate_cps / tx.clock_rate_hz + noise * rx.insertion_transmittance * det.efficiency / 4.0)
                .min(1.0);
        }

        let prbs = match scenario.alice_source {
            AliceSource::Prbs { seed, bit_offset } => Some((Prbs7::from_seed(seed)?, bit_offset)),
            AliceSource::Rng => None,
        };

        Ok(Plan {
            seed,
            pulses,
            labels,
            selection_cdf,
            fixed_label,
            prbs,
            survive,
            outcome_cdf,
            background,
            noise_fraction: acc.noise,
            policy: scenario.double_click_policy,
            record: opts.record_events,
        })
    }

    #[inline]
    fn select(&self, word: u64) -> usize {
        let u = uniform_f64(word);
        self.selection_cdf.iter().position(|c| u < *c).unwrap_or(self.selection_cdf.len() - 1)
    }

    fn symbol(&self, index: u64, word: u64, intensity: usize) -> QuantumSymbol {
        let (basis_bit, value) = match &self.prbs {
            Some((p, off)) => (p.bit(index), p.bit(index.wrapping_add(*off))),
            None => (word & 1 == 1, word & 2 == 2),
        };
        let basis = if basis_bit { Basis::Phase } else { Basis::Time };
        QuantumSymbol { basis, bit: value, intensity }
    }

    fn symbol_word(&self, index: u64) -> u64 {
        RngStream::new(self.seed, SYMBOL_STREAM).rng_at(index).next_u64()
    }

    fn blocks(&self) -> u64 {
        self.pulses.div_ceil(BLOCK_PULSES)
    }
}

/// Number of failures before the first success of a Bernoulli(p) process.
#[inline]
fn geometric(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u = uniform_f64(rng.next_u64());
    let g = (-u).ln_1p() / (-p).ln_1p();
    if g >= u64::MAX as f64 {
        u64::MAX / 2
    } else {
        g as u64
    }
}

struct BlockResult {
    tallies: Vec<IntensityTally>,
    events: Vec<DetectionEvent>,
}

fn simulate_block(plan: &Plan, block: u64) -> BlockResult {
    let start = block * BLOCK_PULSES;
    let len = BLOCK_PULSES.min(plan.pulses - start);
    let mut tallies = vec![IntensityTally::default(); plan.labels.len()];
    let mut events = Vec::new();

    // uncorrelated background clicks, pre-generated as (offset, detector, in_gate)
    let mut background = Vec::new();
    let mut bg_rng = block_stream(plan.seed, block, BACKGROUND_PURPOSE).rng();
    for (d, &p) in plan.background.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let mut pos = geometric(&mut bg_rng, p);
        while pos < len {
            let in_gate = uniform_f64(bg_rng.next_u64()) < plan.noise_fraction;
            background.push((pos, d, in_gate));
            pos = pos.saturating_add(1 + geometric(&mut bg_rng, p));
        }
    }
    background.sort_unstable();
    let mut bg_next = 0usize;

    let mut rng = block_stream(plan.seed, block, PULSE_PURPOSE).rng();
    let mut symbols = plan.fixed_label.is_none().then(|| RngStream::new(plan.seed, SYMBOL_STREAM).rng_at(start));
    let ln_quiet = (-plan.survive).ln_1p();

    for offset in 0..len {
        let index = start + offset;
        let (label, word) = match (&mut symbols, plan.fixed_label) {
            (Some(s), _) => {
                let w = s.next_u64();
                (plan.select(w), Some(w))
            }
            (None, Some(l)) => (l, None),
            (None, None) => unreachable!(),
        };
        let lp = &plan.labels[label];
        let u = uniform_f64(rng.next_u64());
        let (photons, survivors) = match lp.quiet(u) {
            Some(n) => (n, 0),
            None => {
                let n = lp.survivor_photons(uniform_f64(rng.next_u64()));
                // index of the first photon that makes it, 1-based
                let first = if plan.survive >= 1.0 {
                    1
                } else {
                    let v = uniform_f64(rng.next_u64());
                    let all_lost = (n as f64 * ln_quiet).exp();
                    let j = 1 + ((-(v * (1.0 - all_lost))).ln_1p() / ln_quiet) as usize;
                    j.min(n)
                };
                let rest = (first..n).filter(|_| uniform_f64(rng.next_u64()) < plan.survive).count();
                (n, 1 + rest)
            }
        };
        let bin = photons.min(PHOTON_BINS - 1);
        let tally = &mut tallies[label];
        tally.by_photon_number[bin].pulses += 1;

        let has_bg = background.get(bg_next).is_some_and(|b| b.0 == offset);
        if survivors == 0 && !has_bg {
            continue;
        }

        let word = word.unwrap_or_else(|| if plan.prbs.is_some() { 0 } else { plan.symbol_word(index) });
        let symbol = plan.symbol(index, word, label);
        let (mut in_mask, mut out_mask) = (0u8, 0u8);
        let cdf = &plan.outcome_cdf[symbol.state_index()];
        for _ in 0..survivors {
            let v = uniform_f64(rng.next_u64());
            if let Some(k) = cdf.iter().position(|c| v < *c) {
                let bit = 1u8 << (k / 2);
                if k % 2 == 0 {
                    in_mask |= bit;
                } else {
                    out_mask |= bit;
                }
            }
        }
        while let Some(&(pos, d, in_gate)) = background.get(bg_next) {
            if pos != offset {
                break;
            }
            if in_gate {
                in_mask |= 1 << d;
            } else {
                out_mask |= 1 << d;
            }
            bg_next += 1;
        }

        if in_mask != 0 {
            tally.clicks_in_gate += 1;
            tally.by_photon_number[bin].clicks += 1;
            if in_mask.count_ones() > 1 {
                tally.double_clicks += 1;
            }
            if let Some(det) = resolve_double_clicks(in_mask, plan.policy, &mut rng) {
                if plan.record {
                    events.push(DetectionEvent { pulse_index: index, detector_id: det as u8, within_gate: true });
                }
                if detector_basis(det) == symbol.basis {
                    tally.sifted += 1;
                    tally.by_photon_number[bin].sifted += 1;
                    if (det & 1 == 1) != symbol.bit {
                        tally.errors += 1;
                        tally.by_photon_number[bin].errors += 1;
                    }
                }
            }
        } else if out_mask != 0 {
            tally.clicks_out_of_gate += 1;
            if plan.record {
                let det = out_mask.trailing_zeros() as u8;
                events.push(DetectionEvent { pulse_index: index, detector_id: det, within_gate: false });
            }
        }
    }
    for t in tallies.iter_mut() {
        t.pulses_sent = t.by_photon_number.iter().map(|b| b.pulses).sum();
    }
    BlockResult { tallies, events }
}

fn run_blocks(plan: &Plan, execution: Execution) -> Vec<BlockResult> {
    let blocks = plan.blocks();
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..blocks).into_par_iter().map(|b| simulate_block(plan, b)).collect()
        }
        _ => (0..blocks).map(|b| simulate_block(plan, b)).collect(),
    }
}

/// Simulate `pulses` clock periods of the link.
///
/// Output depends only on (scenario, pulses, seed): blocks own their RNG
/// streams and tallies are merged with integer addition.
pub fn run_montecarlo_with(scenario: &LinkScenario, pulses: u64, seed: u64, opts: &RunOptions) -> Result<McOutput> {
    let plan = Plan::new(scenario, pulses, seed, opts)?;
    let results = run_blocks(&plan, opts.execution);
    let levels = scenario.transmitter.intensities.levels();
    let mut tallies = vec![IntensityTally::default(); levels.len()];
    let mut events = plan.record.then(Vec::new);
    for r in results {
        for (a, b) in tallies.iter_mut().zip(&r.tallies) {
            a.merge(b);
        }
        if let Some(ev) = events.as_mut() {
            ev.extend(r.events);
        }
    }
    let stats = RunStats {
        labels: levels.iter().map(|l| l.label.clone()).collect(),
        mus: levels.iter().map(|l| l.mu).collect(),
        tallies,
        pulses,
        duration_s: pulses as f64 / scenario.clock_rate_hz(),
    };
    Ok(McOutput { stats, events })
}

pub fn run_montecarlo(scenario: &LinkScenario, pulses: u64, seed: u64) -> Result<RunStats> {
    Ok(run_montecarlo_with(scenario, pulses, seed, &RunOptions::default())?.stats)
}

/// Alice's symbol for `pulse_index` of a run with `seed`, replayed without simulating.
pub fn alice_symbol(scenario: &LinkScenario, seed: u64, pulse_index: u64) -> Result<QuantumSymbol> {
    let plan = Plan::new(scenario, 1, seed, &RunOptions::default())?;
    let needs_word = plan.fixed_label.is_none() || plan.prbs.is_none();
    let word = if needs_word { plan.symbol_word(pulse_index) } else { 0 };
    let label = plan.fixed_label.unwrap_or_else(|| plan.select(word));
    Ok(plan.symbol(pulse_index, word, label))
}

/// Event stream as delimited text with a versioned header.
pub fn write_events<W: Write>(mut w: W, events: &[DetectionEvent]) -> std::io::Result<()> {
    writeln!(w, "# qkdsim detection events v1")?;
    writeln!(w, "pulse_index,detector_id,within_gate")?;
    for e in events {
        writeln!(w, "{},{},{}", e.pulse_index, e.detector_id, e.within_gate as u8)?;
    }
    Ok(())
}
