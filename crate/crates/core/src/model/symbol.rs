use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Early/late time bins, states |0> and |1>.
    Time,
    /// Equal-weight superpositions |0> - i|1> (bit 0) and |0> + i|1> (bit 1).
    Phase,
}

/// Alice's choice for one clock period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantumSymbol {
    pub basis: Basis,
    pub bit: bool,
    /// Index into the scenario's [`IntensityTable`].
    pub intensity: usize,
}

impl QuantumSymbol {
    /// Index 0..4 of the encoded state: T0, T1, P0, P1.
    ///
    /// Detector indices use the same order, so a detector id doubles as the
    /// (basis, bit) it announces.
    #[inline]
    pub fn state_index(&self) -> usize {
        let b = match self.basis {
            Basis::Time => 0,
            Basis::Phase => 2,
        };
        b + self.bit as usize
    }

    pub fn from_state_index(index: usize, intensity: usize) -> Self {
        let basis = if index < 2 { Basis::Time } else { Basis::Phase };
        QuantumSymbol { basis, bit: index & 1 == 1, intensity }
    }

    /// Ket written in time-bin notation.
    pub fn ket(&self) -> &'static str {
        match (self.basis, self.bit) {
            (Basis::Time, false) => "|0>",
            (Basis::Time, true) => "|1>",
            (Basis::Phase, false) => "|0>-i|1>",
            (Basis::Phase, true) => "|0>+i|1>",
        }
    }
}

/// Basis announced by detector `id`.
#[inline]
pub fn detector_basis(id: usize) -> Basis {
    if id < 2 {
        Basis::Time
    } else {
        Basis::Phase
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityLevel {
    pub label: String,
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Relative selection weight when intensities are interleaved per pulse.
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// Ordered intensity classes with their selection weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntensityTable {
    levels: Vec<IntensityLevel>,
}

impl IntensityTable {
    pub fn new(levels: Vec<IntensityLevel>) -> Result<Self> {
        let t = IntensityTable { levels };
        t.validate()?;
        Ok(t)
    }

    pub fn single(label: &str, mu: f64) -> Result<Self> {
        Self::new(vec![IntensityLevel { label: label.into(), mu, weight: 1.0 }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("intensity table is empty"));
        }
        let mut vacuum = 0;
        for (i, l) in self.levels.iter().enumerate() {
            if !l.mu.is_finite() || l.mu < 0.0 {
                return Err(Error::config(format!("intensity `{}`: mu {} must be >= 0", l.label, l.mu)));
            }
            if !l.weight.is_finite() || l.weight < 0.0 {
                return Err(Error::config(format!("intensity `{}`: weight must be >= 0", l.label)));
            }
            if l.mu == 0.0 {
                vacuum += 1;
            }
            if self.levels[..i].iter().any(|o| o.label == l.label) {
                return Err(Error::config(format!("duplicate intensity label `{}`", l.label)));
            }
        }
        if vacuum > 1 {
            return Err(Error::config("at most one intensity may be vacuum (mu = 0)"));
        }
        if self.levels.iter().map(|l| l.weight).sum::<f64>() <= 0.0 {
            return Err(Error::config("intensity weights sum to zero"));
        }
        Ok(())
    }

    pub fn levels(&self) -> &[IntensityLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    /// Fraction of pulses carrying each intensity.
    pub fn duties(&self) -> Vec<f64> {
        let total: f64 = self.levels.iter().map(|l| l.weight).sum();
        self.levels.iter().map(|l| l.weight / total).collect()
    }

    /// Copy of the table where only `label` is ever sent.
    pub fn fixed(&self, label: &str) -> Result<Self> {
        let idx = self
            .index_of(label)
            .ok_or_else(|| Error::config(format!("unknown intensity label `{label}`")))?;
        let mut levels = self.levels.clone();
        for (i, l) in levels.iter_mut().enumerate() {
            l.weight = if i == idx { 1.0 } else { 0.0 };
        }
        Ok(IntensityTable { levels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_are_one_to_one() {
        let mut kets = std::collections::HashSet::new();
        for i in 0..4 {
            let s = QuantumSymbol::from_state_index(i, 0);
            assert_eq!(s.state_index(), i);
            kets.insert(s.ket());
        }
        assert_eq!(kets.len(), 4);
    }

    #[test]
    fn table_validation() {
        let lvl = |l: &str, mu: f64| IntensityLevel { label: l.into(), mu, weight: 1.0 };
        assert!(IntensityTable::new(vec![lvl("a", 0.0), lvl("b", 0.4)]).is_ok());
        assert!(IntensityTable::new(vec![lvl("a", 0.0), lvl("b", 0.0)]).is_err());
        assert!(IntensityTable::new(vec![lvl("a", 0.1), lvl("a", 0.4)]).is_err());
        assert!(IntensityTable::new(vec![lvl("a", -0.1)]).is_err());
        assert!(IntensityTable::new(vec![]).is_err());
    }

    #[test]
    fn fixed_selects_one_label() {
        let t = IntensityTable::new(vec![
            IntensityLevel { label: "v".into(), mu: 0.0, weight: 0.2 },
            IntensityLevel { label: "s".into(), mu: 0.4, weight: 0.8 },
        ])
        .unwrap();
        assert_eq!(t.fixed("s").unwrap().duties(), vec![0.0, 1.0]);
        assert!(t.fixed("x").is_err());
    }
}
