//! Fit of the receiver parameters nobody measures directly.
//!
//! One insertion transmittance is shared by every distance; visibility (and
//! through it the optical error rate) is fitted per distance, and the
//! vacuum yield comes from the detector specs unless a vacuum target row
//! pins it, in which case that distance's dark rates are rescaled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IntensityTable;
use crate::simulate::{run_analytic, LinkScenario};
use crate::stats_table::CalibrationTarget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub mu: f64,
    pub sifted_bps_target: f64,
    pub sifted_bps_fit: f64,
    pub qber_target: f64,
    pub qber_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFit {
    pub distance_km: f64,
    pub loss_db: f64,
    pub clock_launch_power_dbm: f64,
    pub visibility: f64,
    /// Matched-basis optical error rate implied by `visibility`.
    pub e_opt: f64,
    /// Factor applied to every detector's dark rate (1 without a vacuum row).
    pub dark_rate_scale: f64,
    /// Vacuum yield: dark counts plus noise, in-gate, all detectors.
    pub background_yield: f64,
    pub dark_yield: f64,
    pub targets: Vec<TargetFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub insertion_transmittance: f64,
    /// Root-mean-square relative sifted-rate residual over the rate rows.
    pub rate_rms_residual: f64,
    pub distance: Vec<DistanceFit>,
}

impl Calibration {
    pub fn overlay_toml(&self) -> String {
        format!("# qkdsim calibration overlay v1\n{}", toml::to_string(self).expect("calibration serializes"))
    }

    /// `template` with the fitted parameters for `distance_km` applied.
    pub fn apply(&self, template: &LinkScenario, distance_km: f64) -> Result<LinkScenario> {
        let d = self
            .distance
            .iter()
            .find(|d| d.distance_km == distance_km)
            .ok_or_else(|| Error::Calibration(format!("no calibration for {distance_km} km")))?;
        let mut s = template.clone();
        s.channel.loss_db = d.loss_db;
        s.channel.length_km = d.distance_km;
        s.channel.clock_launch_power_dbm = d.clock_launch_power_dbm;
        s.receiver.insertion_transmittance = self.insertion_transmittance;
        s.receiver.visibility = d.visibility;
        for det in s.receiver.detectors.iter_mut() {
            det.dark_rate_cps *= d.dark_rate_scale;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Minimize a unimodal function on [lo, hi].
fn golden_section(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    for _ in 0..200 {
        if (hi - lo) <= 1e-14 * hi.abs().max(1e-300) {
            break;
        }
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Single-intensity scenario for one target row.
pub fn row_scenario(template: &LinkScenario, target: &CalibrationTarget) -> Result<LinkScenario> {
    let mut s = template.clone();
    s.channel.loss_db = target.loss_db;
    s.channel.length_km = target.distance_km;
    if let Some(p) = target.clock_launch_power_dbm {
        s.channel.clock_launch_power_dbm = p;
    }
    s.transmitter.intensities = IntensityTable::single("target", target.mu)?;
    s.validate()?;
    Ok(s)
}

/// Expected (sifted bps, QBER) of a single-intensity scenario.
pub fn predict(scenario: &LinkScenario) -> Result<(f64, f64)> {
    let a = run_analytic(scenario)?;
    let l = &a.labels[0];
    Ok((l.sifted_per_pulse * a.clock_rate_hz, l.qber))
}

fn with_eta(s: &LinkScenario, eta: f64) -> LinkScenario {
    let mut s = s.clone();
    s.receiver.insertion_transmittance = eta;
    s
}

fn scale_dark(s: &mut LinkScenario, scale: f64) {
    for d in s.receiver.detectors.iter_mut() {
        d.dark_rate_cps *= scale;
    }
}

fn check_rate_rows(rows: &[(LinkScenario, CalibrationTarget)]) -> Result<()> {
    for (s, t) in rows {
        let (floor, _) = predict(&with_eta(s, 0.0))?;
        if t.sifted_bps <= floor {
            return Err(Error::Calibration(format!(
                "{} km, mu {}: target {} bps is not above the background rate {floor:.4} bps",
                t.distance_km, t.mu, t.sifted_bps
            )));
        }
    }
    Ok(())
}

fn fit_eta(rows: &[(LinkScenario, CalibrationTarget)]) -> Result<f64> {
    check_rate_rows(rows)?;
    let cost = |eta: f64| -> Result<f64> {
        let mut c = 0.0;
        for (s, t) in rows {
            let (rate, _) = predict(&with_eta(s, eta))?;
            c += (rate / t.sifted_bps - 1.0).powi(2);
        }
        Ok(c)
    };
    let log_eta = golden_section(-14.0, 0.0, |x| cost(10f64.powf(x)))?;
    let eta = 10f64.powf(log_eta).min(1.0);
    if eta > 1.0 - 1e-6 {
        for (s, t) in rows {
            let (rate, _) = predict(&with_eta(s, 1.0))?;
            if rate < t.sifted_bps * (1.0 - 1e-3) {
                return Err(Error::Calibration(format!(
                    "{} km, mu {}: {} bps needs an insertion transmittance above 1",
                    t.distance_km, t.mu, t.sifted_bps
                )));
            }
        }
    }
    Ok(eta)
}

/// Shared insertion transmittance reproducing the sifted rates of
/// `targets` in the relative least-squares sense. One row suffices.
pub fn fit_insertion_transmittance(template: &LinkScenario, targets: &[CalibrationTarget]) -> Result<f64> {
    let rows = targets
        .iter()
        .filter(|t| t.mu > 0.0)
        .map(|t| Ok((row_scenario(template, t)?, *t)))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Calibration("no target row with mu > 0".into()));
    }
    fit_eta(&rows)
}

fn fit_dark_scale(s: &LinkScenario, target: &CalibrationTarget) -> Result<f64> {
    let goal = 2.0 * target.sifted_bps / s.clock_rate_hz();
    let gain = |scale: f64| -> Result<f64> {
        let mut s = s.clone();
        scale_dark(&mut s, scale);
        Ok(run_analytic(&s)?.labels[0].gain)
    };
    let floor = gain(0.0)?;
    if goal < floor {
        return Err(Error::Calibration(format!(
            "{} km vacuum row: gain {goal:.3e} is below the noise floor {floor:.3e}",
            target.distance_km
        )));
    }
    let mut hi = 1.0;
    while gain(hi)? < goal {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Calibration(format!(
                "{} km vacuum row: gain {goal:.3e} is out of reach",
                target.distance_km
            )));
        }
    }
    golden_section(0.0, hi, |x| Ok((gain(x)? - goal).abs()))
}

fn fit_visibility(rows: &[(LinkScenario, CalibrationTarget)]) -> Result<f64> {
    let qber = |v: f64, s: &LinkScenario| -> Result<f64> {
        let mut s = s.clone();
        s.receiver.visibility = v;
        Ok(predict(&s)?.1)
    };
    let v = golden_section(0.0, 1.0, |v| {
        let mut c = 0.0;
        for (s, t) in rows {
            c += (qber(v, s)? / t.qber - 1.0).powi(2);
        }
        Ok(c)
    })?;
    for (s, t) in rows {
        let q = qber(v, s)?;
        if (q / t.qber - 1.0).abs() > 0.05 {
            return Err(Error::Calibration(format!(
                "{} km, mu {}: QBER {} is out of reach (best {q:.4} at visibility {v:.4})",
                t.distance_km, t.mu, t.qber
            )));
        }
    }
    Ok(v)
}

/// Fit shared insertion transmittance and per-distance visibility and
/// vacuum yield to `targets`, starting from the device parameters of
/// `template`.
pub fn calibrate(template: &LinkScenario, targets: &[CalibrationTarget]) -> Result<Calibration> {
    let rate_rows = targets.iter().filter(|t| t.mu > 0.0).count();
    if rate_rows < 2 {
        return Err(Error::Calibration(format!(
            "{rate_rows} target row(s) with mu > 0: a shared transmittance plus a per-distance visibility needs at least 2"
        )));
    }
    let mut groups: BTreeMap<(u64, u64), Vec<CalibrationTarget>> = BTreeMap::new();
    for t in targets {
        groups.entry((t.distance_km.to_bits(), t.loss_db.to_bits())).or_default().push(*t);
    }
    let mut seen = BTreeMap::new();
    for &(d, l) in groups.keys() {
        if seen.insert(d, l).is_some() {
            return Err(Error::Calibration(format!("{} km appears with two losses", f64::from_bits(d))));
        }
    }
    for rows in groups.values() {
        if rows.iter().all(|t| t.mu == 0.0) {
            return Err(Error::Calibration(format!("{} km has only vacuum rows", rows[0].distance_km)));
        }
    }

    let mut scales: Vec<f64> = vec![1.0; groups.len()];
    let mut eta = template.receiver.insertion_transmittance;
    let build = |scales: &[f64], eta: f64| -> Result<Vec<(LinkScenario, CalibrationTarget)>> {
        let mut out = Vec::new();
        for (rows, &scale) in groups.values().zip(scales) {
            for t in rows.iter().filter(|t| t.mu > 0.0) {
                let mut s = with_eta(&row_scenario(template, t)?, eta);
                scale_dark(&mut s, scale);
                out.push((s, *t));
            }
        }
        Ok(out)
    };
    // vacuum rows depend weakly on eta through the noise term
    for _ in 0..3 {
        for (rows, scale) in groups.values().zip(scales.iter_mut()) {
            if let Some(vac) = rows.iter().find(|t| t.mu == 0.0) {
                let s = with_eta(&row_scenario(template, vac)?, eta);
                *scale = fit_dark_scale(&s, vac)?;
            }
        }
        eta = fit_eta(&build(&scales, eta)?)?;
        if !groups.values().any(|r| r.iter().any(|t| t.mu == 0.0)) {
            break;
        }
    }

    let all = build(&scales, eta)?;
    let mut sse = 0.0;
    let mut distance = Vec::new();
    for (rows, &scale) in groups.values().zip(&scales) {
        let first = rows[0];
        let fit_rows: Vec<_> = all.iter().filter(|(_, t)| t.distance_km == first.distance_km).cloned().collect();
        let v = fit_visibility(&fit_rows)?;
        let mut base = fit_rows[0].0.clone();
        base.receiver.visibility = v;
        let a = run_analytic(&base)?;
        let mut fits = Vec::new();
        for (s, t) in &fit_rows {
            let mut s = s.clone();
            s.receiver.visibility = v;
            let (rate, qber) = predict(&s)?;
            sse += (rate / t.sifted_bps - 1.0).powi(2);
            fits.push(TargetFit {
                mu: t.mu,
                sifted_bps_target: t.sifted_bps,
                sifted_bps_fit: rate,
                qber_target: t.qber,
                qber_fit: qber,
            });
        }
        distance.push(DistanceFit {
            distance_km: first.distance_km,
            loss_db: first.loss_db,
            clock_launch_power_dbm: base.channel.clock_launch_power_dbm,
            visibility: v,
            e_opt: a.e_opt,
            dark_rate_scale: scale,
            background_yield: a.background_yield,
            dark_yield: a.dark_yield,
            targets: fits,
        });
    }
    Ok(Calibration { insertion_transmittance: eta, rate_rms_residual: (sse / all.len() as f64).sqrt(), distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::test_support::link;

    fn target(distance_km: f64, loss_db: f64, mu: f64, sifted_bps: f64, qber: f64) -> CalibrationTarget {
        CalibrationTarget { distance_km, loss_db, mu, sifted_bps, qber, clock_launch_power_dbm: None }
    }

    #[test]
    fn golden_section_finds_minimum() {
        let x = golden_section(0.0, 10.0, |x| Ok((x - 3.3f64).powi(2))).unwrap();
        assert!((x - 3.3).abs() < 1e-6);
    }

    #[test]
    fn recovers_parameters_of_a_synthetic_link() {
        let mut truth = link(20.2, &[0.4]);
        truth.receiver.insertion_transmittance = 0.12;
        truth.receiver.visibility = 0.95;
        let (rate97, q97) = predict(&truth).unwrap();
        let mut near = truth.clone();
        near.channel.loss_db = 13.2;
        near.channel.length_km = 65.0;
        near.receiver.visibility = 0.975;
        let (rate65, q65) = predict(&near).unwrap();

        let template = link(20.2, &[0.4]);
        let cal = calibrate(&template, &[target(97.0, 20.2, 0.4, rate97, q97), target(65.0, 13.2, 0.4, rate65, q65)])
            .unwrap();
        assert!((cal.insertion_transmittance / 0.12 - 1.0).abs() < 1e-6, "{}", cal.insertion_transmittance);
        let v: Vec<f64> = cal.distance.iter().map(|d| d.visibility).collect();
        // ordered by distance as stored in the map key
        assert!(v.iter().any(|x| (x - 0.95).abs() < 1e-6), "{v:?}");
        assert!(v.iter().any(|x| (x - 0.975).abs() < 1e-6), "{v:?}");
        assert!(cal.rate_rms_residual < 1e-6);
        let s = cal.apply(&template, 97.0).unwrap();
        assert!((predict(&s).unwrap().0 / rate97 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vacuum_row_rescales_dark_rates() {
        let template = link(20.2, &[0.4]);
        let mut truth = template.clone();
        scale_dark(&mut truth, 1.3);
        truth.receiver.visibility = 0.97;
        let mut rows = Vec::new();
        for mu in [0.0, 0.15, 0.4] {
            let t = target(97.0, 20.2, mu, 0.0, 0.0);
            let (rate, qber) = predict(&row_scenario(&truth, &t).unwrap()).unwrap();
            rows.push(CalibrationTarget { sifted_bps: rate, qber, ..t });
        }
        let cal = calibrate(&template, &rows).unwrap();
        let d = &cal.distance[0];
        assert!((d.dark_rate_scale - 1.3).abs() < 1e-4, "{}", d.dark_rate_scale);
        assert!((cal.insertion_transmittance - 0.15).abs() < 1e-6);
        assert!((d.visibility - 0.97).abs() < 1e-5);
    }

    #[test]
    fn underdetermined_and_infeasible_targets() {
        let template = link(20.2, &[0.4]);
        let one = [target(97.0, 20.2, 0.4, 2400.0, 0.0289)];
        assert!(matches!(calibrate(&template, &one), Err(Error::Calibration(_))));
        assert!(fit_insertion_transmittance(&template, &one).is_ok());
        let too_fast = [target(97.0, 20.2, 0.4, 1e7, 0.0289), target(65.0, 13.2, 0.4, 1e8, 0.0136)];
        assert!(matches!(calibrate(&template, &too_fast), Err(Error::Calibration(_))));
        let below_dark = [target(97.0, 20.2, 0.4, 1e-3, 0.0289), target(65.0, 13.2, 0.4, 11510.0, 0.0136)];
        assert!(matches!(calibrate(&template, &below_dark), Err(Error::Calibration(_))));
        let too_clean = [target(97.0, 20.2, 0.4, 2400.0, 0.001), target(65.0, 13.2, 0.4, 11510.0, 0.0136)];
        assert!(matches!(calibrate(&template, &too_clean), Err(Error::Calibration(_))));
    }
}
