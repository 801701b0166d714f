use crate::error::{Error, Result};

/// Period of a maximal-length 7-bit LFSR.
pub const PRBS7_PERIOD: usize = 127;

/// Register of a Fibonacci LFSR with feedback polynomial x^7 + x^6 + 1.
///
/// Only the low seven bits are meaningful and at least one of them is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prbs7State(u8);

impl Prbs7State {
    pub fn new(register: u8) -> Result<Self> {
        let register = register & 0x7f;
        if register == 0 {
            return Err(Error::InvalidState("PRBS-7 register must be nonzero".into()));
        }
        Ok(Prbs7State(register))
    }

    pub fn register(self) -> u8 {
        self.0
    }

    /// Emit the next output bit and advance the register.
    pub fn next(self) -> (bool, Prbs7State) {
        let r = self.0;
        let out = (r >> 6) & 1;
        let feedback = ((r >> 6) ^ (r >> 5)) & 1;
        let next = ((r << 1) | feedback) & 0x7f;
        (out == 1, Prbs7State(next))
    }
}

impl Default for Prbs7State {
    fn default() -> Self {
        Prbs7State(0x7f)
    }
}

/// A precomputed period of the PRBS-7 sequence for random access by pulse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prbs7 {
    bits: [bool; PRBS7_PERIOD],
}

impl Prbs7 {
    pub fn from_state(mut state: Prbs7State) -> Self {
        let mut bits = [false; PRBS7_PERIOD];
        for b in bits.iter_mut() {
            let (bit, s) = state.next();
            *b = bit;
            state = s;
        }
        Prbs7 { bits }
    }

    pub fn from_seed(register: u8) -> Result<Self> {
        Ok(Self::from_state(Prbs7State::new(register)?))
    }

    #[inline]
    pub fn bit(&self, index: u64) -> bool {
        self.bits[(index % PRBS7_PERIOD as u64) as usize]
    }

    pub fn period(&self) -> &[bool; PRBS7_PERIOD] {
        &self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u8, steps: usize) -> Vec<bool> {
        let mut s = Prbs7State::new(seed).unwrap();
        (0..steps)
            .map(|_| {
                let (b, n) = s.next();
                s = n;
                b
            })
            .collect()
    }

    #[test]
    fn zero_register_is_rejected() {
        assert!(matches!(Prbs7State::new(0), Err(Error::InvalidState(_))));
        assert!(Prbs7State::new(0x80).is_err());
    }

    #[test]
    fn every_seed_has_period_127_and_is_balanced() {
        for seed in 1u8..=127 {
            let seq = run(seed, 254);
            assert_eq!(seq[..127], seq[127..], "seed {seed}");
            // no shorter period
            for p in 1..127 {
                if 127 % p == 0 {
                    assert_ne!(seq[..127 - p], seq[p..127], "seed {seed} period {p}");
                }
            }
            let ones = seq[..127].iter().filter(|b| **b).count();
            assert_eq!(ones, 64, "seed {seed}");
        }
    }

    #[test]
    fn register_visits_all_nonzero_states() {
        let mut s = Prbs7State::default();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..127 {
            seen.insert(s.register());
            s = s.next().1;
        }
        assert_eq!(seen.len(), 127);
        assert!(!seen.contains(&0));
    }

    #[test]
    fn table_matches_stepping() {
        let table = Prbs7::from_seed(0x35).unwrap();
        let seq = run(0x35, 300);
        for (i, b) in seq.iter().enumerate() {
            assert_eq!(table.bit(i as u64), *b);
        }
    }
}
