use rand_core::RngCore;

use super::rng::uniform_f64;
use crate::error::{Error, Result};

/// Shannon binary entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Power transmittance of a loss given in dB.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if loss_db.is_nan() || loss_db < 0.0 {
        return Err(Error::domain(format!("loss {loss_db} dB is negative")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Cumulative Poisson table for inversion sampling.
///
/// Photon means in this domain are well below one, so the table is short and
/// the first comparison resolves most draws.
#[derive(Debug, Clone)]
pub struct PoissonCdf {
    mean: f64,
    cdf: Vec<f64>,
}

impl PoissonCdf {
    pub fn new(mean: f64) -> Result<Self> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(Error::domain(format!("Poisson mean {mean} must be finite and >= 0")));
        }
        if mean > 700.0 {
            return Err(Error::domain(format!("Poisson mean {mean} too large for inversion")));
        }
        let mut cdf = Vec::new();
        let mut p = (-mean).exp();
        let mut acc = 0.0;
        let mut n = 0u32;
        loop {
            acc += p;
            cdf.push(acc);
            n += 1;
            p *= mean / n as f64;
            if (n as f64 > mean && p < 1e-18) || acc >= 1.0 {
                break;
            }
        }
        Ok(PoissonCdf { mean, cdf })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Photon number for a uniform sample in [0, 1).
    #[inline]
    pub fn invert(&self, u: f64) -> u32 {
        for (n, c) in self.cdf.iter().enumerate() {
            if u < *c {
                return n as u32;
            }
        }
        (self.cdf.len() - 1) as u32
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u32 {
        self.invert(uniform_f64(rng.next_u64()))
    }
}

/// Draw one Poisson variate. A zero mean always yields zero.
pub fn poisson_sample<R: RngCore + ?Sized>(mean: f64, rng: &mut R) -> Result<u32> {
    Ok(PoissonCdf::new(mean)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_endpoints_and_maximum() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_relative_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_of_long_haul_qber() {
        // -x log2 x - (1-x) log2 (1-x) at x = 0.0289, evaluated independently
        let h = binary_entropy(0.0289).unwrap();
        assert!((h - 0.188845).abs() < 1e-4, "{h}");
    }

    #[test]
    fn entropy_domain() {
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn entropy_symmetric_and_concave_on_grid() {
        let n = 1000;
        let h: Vec<f64> = (0..=n).map(|i| binary_entropy(i as f64 / n as f64).unwrap()).collect();
        for i in 0..=n {
            assert!((h[i] - h[n - i]).abs() < 1e-12);
        }
        for i in 1..n {
            assert!(h[i] >= 0.5 * (h[i - 1] + h[i + 1]) - 1e-15);
        }
    }

    #[test]
    fn transmittance_values() {
        assert_eq!(db_to_transmittance(0.0).unwrap(), 1.0);
        assert!((db_to_transmittance(20.2).unwrap() - 9.55e-3).abs() < 1e-5);
        assert!((db_to_transmittance(13.2).unwrap() - 4.79e-2).abs() < 1e-4);
        assert!(db_to_transmittance(-1.0).is_err());
    }

    #[test]
    fn vacuum_is_always_zero() {
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..10_000 {
            assert_eq!(poisson_sample(0.0, &mut rng).unwrap(), 0);
        }
        assert!(poisson_sample(-0.1, &mut rng).is_err());
    }

    #[test]
    fn weak_coherent_statistics() {
        let table = PoissonCdf::new(0.4).unwrap();
        let mut rng = RngStream::new(11, 0).rng();
        let n = 10_000_000u64;
        let (mut sum, mut ge1, mut ge2) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let k = table.sample(&mut rng) as u64;
            sum += k;
            ge1 += (k >= 1) as u64;
            ge2 += (k >= 2) as u64;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 0.4).abs() < 1e-3, "{mean}");
        // (1 - e^-mu - mu e^-mu) / (1 - e^-mu)
        let mu: f64 = 0.4;
        let oracle = (1.0 - (-mu).exp() - mu * (-mu).exp()) / (1.0 - (-mu).exp());
        let ratio = ge2 as f64 / ge1 as f64;
        assert!((ratio - oracle).abs() < 0.01, "{ratio}");
    }

    proptest::proptest! {
        #[test]
        fn db_losses_compose(a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let lhs = db_to_transmittance(a + b).unwrap();
            let rhs = db_to_transmittance(a).unwrap() * db_to_transmittance(b).unwrap();
            proptest::prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }
    }
}
