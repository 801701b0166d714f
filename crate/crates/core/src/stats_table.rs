//! CSV tables of measured statistics and calibration targets.
//!
//! Both formats have a header row; lines starting with `#` are comments.
//!
//! Stats table (v1): `mu,value,value_kind,qber`, where `value_kind` is
//! `gain` (clicks per pulse) or `sifted_bps` (sifted bits per second at
//! duty 1, converted with Q = 2 R / clock).
//!
//! Calibration targets (v1): `distance_km,loss_db,mu,sifted_bps,qber` with
//! an optional trailing `clock_launch_power_dbm` column.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoy::IntensityStats;
use crate::distill::gain_from_sifted_rate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Gain,
    SiftedBps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub mu: f64,
    pub value: f64,
    pub value_kind: ValueKind,
    pub qber: f64,
}

impl StatsRow {
    pub fn to_intensity_stats(&self, clock_rate_hz: f64) -> IntensityStats {
        let gain = match self.value_kind {
            ValueKind::Gain => self.value,
            ValueKind::SiftedBps => gain_from_sifted_rate(self.value, clock_rate_hz),
        };
        IntensityStats { mu: self.mu, gain, qber: self.qber }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub distance_km: f64,
    pub loss_db: f64,
    pub mu: f64,
    pub sifted_bps: f64,
    pub qber: f64,
    #[serde(default)]
    pub clock_launch_power_dbm: Option<f64>,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(false).from_reader(r)
}

fn rows<T: for<'de> Deserialize<'de>, R: Read>(r: R, what: &str) -> Result<Vec<T>> {
    let mut rdr = reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: T = rec.map_err(|e| match e.position() {
            Some(p) => Error::data(format!("{what} line {}: {e}", p.line())),
            None => Error::data(format!("{what} row {}: {e}", i + 1)),
        })?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::data(format!("{what} has no rows")));
    }
    Ok(out)
}

pub fn read_stats_table<R: Read>(r: R) -> Result<Vec<StatsRow>> {
    let rows: Vec<StatsRow> = rows(r, "stats table")?;
    for (i, row) in rows.iter().enumerate() {
        let bad = |m: &str| Error::data(format!("stats table row {}: {m}", i + 1));
        if !(row.mu >= 0.0) || !row.mu.is_finite() {
            return Err(bad("mu must be >= 0"));
        }
        if !(row.value >= 0.0) || !row.value.is_finite() {
            return Err(bad("value must be >= 0"));
        }
        if !(0.0..=1.0).contains(&row.qber) {
            return Err(bad("qber must lie in [0, 1]"));
        }
    }
    Ok(rows)
}

pub fn load_stats_table(path: &Path) -> Result<Vec<StatsRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    read_stats_table(f)
}

/// Intensity statistics from a stats table, checked to contain the vacuum,
/// decoy and signal classes the decoy analysis needs.
pub fn decoy_inputs(rows: &[StatsRow], clock_rate_hz: f64) -> Result<Vec<IntensityStats>> {
    let stats: Vec<IntensityStats> = rows.iter().map(|r| r.to_intensity_stats(clock_rate_hz)).collect();
    if !stats.iter().any(|s| s.mu == 0.0) {
        return Err(Error::data("stats table has no vacuum (mu = 0) row"));
    }
    if stats.iter().filter(|s| s.mu > 0.0).count() < 2 {
        return Err(Error::data("stats table needs a decoy and a signal row (two mu > 0)"));
    }
    for s in &stats {
        s.validate()?;
    }
    Ok(stats)
}

pub fn read_targets<R: Read>(r: R) -> Result<Vec<CalibrationTarget>> {
    let rows: Vec<CalibrationTarget> = rows(r, "targets table")?;
    for (i, t) in rows.iter().enumerate() {
        let bad = |m: &str| Error::data(format!("targets table row {}: {m}", i + 1));
        if !(t.loss_db >= 0.0) || !(t.distance_km >= 0.0) {
            return Err(bad("distance_km and loss_db must be >= 0"));
        }
        if !(t.mu >= 0.0) || !(t.sifted_bps >= 0.0) || !t.sifted_bps.is_finite() {
            return Err(bad("mu and sifted_bps must be >= 0"));
        }
        if !(0.0..=0.5).contains(&t.qber) {
            return Err(bad("qber must lie in [0, 0.5]"));
        }
    }
    Ok(rows)
}

pub fn load_targets(path: &Path) -> Result<Vec<CalibrationTarget>> {
    let f = std::fs::File::open(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    read_targets(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "# long-haul run\nmu,value,value_kind,qber\n0,2e-7,gain,0.5\n0.15, 930, sifted_bps, 0.0532\n0.4,2400,sifted_bps,0.0289\n";

    #[test]
    fn reads_mixed_value_kinds() {
        let rows = read_stats_table(TABLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        let s = decoy_inputs(&rows, 625e6).unwrap();
        assert_eq!(s[0].gain, 2e-7);
        assert!((s[2].gain - 7.68e-6).abs() < 1e-15);
        assert!((s[1].gain - 2.976e-6).abs() < 1e-15);
    }

    #[test]
    fn missing_vacuum_is_a_data_error() {
        let t = "mu,value,value_kind,qber\n0.15,930,sifted_bps,0.05\n0.4,2400,sifted_bps,0.03\n";
        let rows = read_stats_table(t.as_bytes()).unwrap();
        assert!(matches!(decoy_inputs(&rows, 625e6), Err(Error::Data(_))));
    }

    #[test]
    fn bad_rows_are_reported() {
        let t = "mu,value,value_kind,qber\n0.4,2400,bits,0.03\n";
        let e = read_stats_table(t.as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Data(_)));
        assert!(e.to_string().contains("line 2"), "{e}");
        let t = "mu,value,value_kind,qber\n0.4,2400,gain,1.5\n";
        assert!(read_stats_table(t.as_bytes()).is_err());
        assert!(read_stats_table("mu,value,value_kind,qber\n".as_bytes()).is_err());
    }

    #[test]
    fn targets_with_and_without_power_column() {
        let t = "distance_km,loss_db,mu,sifted_bps,qber\n97,20.2,0.4,2400,0.0289\n";
        let rows = read_targets(t.as_bytes()).unwrap();
        assert_eq!(rows[0].clock_launch_power_dbm, None);
        let t = "distance_km,loss_db,mu,sifted_bps,qber,clock_launch_power_dbm\n97,20.2,0.4,2400,0.0289,-33.3\n";
        let rows = read_targets(t.as_bytes()).unwrap();
        assert_eq!(rows[0].clock_launch_power_dbm, Some(-33.3));
    }
}
