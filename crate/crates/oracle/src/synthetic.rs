//! Planted-ground-truth surrogate models.

use std::collections::BTreeMap;

use memreason_core::lattice::{self, Mask, ValueTable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `baseline + Σ_{S⊆T} and[S] + Σ_{S∩T≠∅} or[S]` plus optional seeded noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub n: usize,
    pub planted_and: BTreeMap<u32, f64>,
    pub planted_or: BTreeMap<u32, f64>,
    pub baseline: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticModel {
    pub fn new(n: usize, baseline: f64) -> Self {
        Self {
            n,
            planted_and: BTreeMap::new(),
            planted_or: BTreeMap::new(),
            baseline,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_and(mut self, mask: u32, weight: f64) -> Self {
        self.planted_and.insert(mask, weight);
        self
    }

    pub fn with_or(mut self, mask: u32, weight: f64) -> Self {
        self.planted_or.insert(mask, weight);
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let len = lattice::table_len(self.n)?;
        for (family, map) in [("AND", &self.planted_and), ("OR", &self.planted_or)] {
            for (&mask, &w) in map {
                if mask == 0 {
                    return Err(Error::Config(format!(
                        "planted {family} entry at the empty mask"
                    )));
                }
                if mask as usize >= len {
                    return Err(Error::Config(format!(
                        "planted {family} mask {mask:#b} does not fit n = {}",
                        self.n
                    )));
                }
                if !w.is_finite() {
                    return Err(Error::Config(format!(
                        "planted {family} weight {w} is not finite"
                    )));
                }
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Noise-free value at the raw mask bits.
    fn clean(&self, t: u32) -> f64 {
        let and: f64 = self
            .planted_and
            .iter()
            .filter(|(&s, _)| s & !t == 0)
            .map(|(_, w)| w)
            .sum();
        let or: f64 = self
            .planted_or
            .iter()
            .filter(|(&s, _)| s & t != 0)
            .map(|(_, w)| w)
            .sum();
        self.baseline + and + or
    }

    fn noise(&self, t: u32) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        // one independent stream per mask keeps the draw order-free
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        Normal::new(0.0, self.noise_sigma)
            .expect("sigma validated")
            .sample(&mut rng)
    }

    /// Full table, one entry per mask.
    pub fn table(&self, variant_id: &str) -> Result<ValueTable> {
        self.validate()?;
        let len = lattice::table_len(self.n)?;
        let values = (0..len as u32)
            .map(|t| self.clean(t) + self.noise(t))
            .collect();
        Ok(ValueTable::new(variant_id, values)?)
    }
}

pub fn synthetic_eval(model: &SyntheticModel, mask: Mask) -> f64 {
    model.clean(mask.bits()) + model.noise(mask.bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = SyntheticModel::new(3, 0.4)
            .with_and(0b011, 2.0)
            .with_or(0b110, -0.5);
        assert_eq!(synthetic_eval(&m, Mask::empty(3).unwrap()), 0.4);
        assert_eq!(synthetic_eval(&m, Mask::full(3).unwrap()), 0.4 + 2.0 - 0.5);
        assert_eq!(synthetic_eval(&m, Mask::new(0b001, 3).unwrap()), 0.4);
        assert_eq!(synthetic_eval(&m, Mask::new(0b100, 3).unwrap()), 0.4 - 0.5);
    }

    #[test]
    fn noise_is_fixed_per_seed_and_mask() {
        let m = SyntheticModel::new(4, 0.0).with_noise(0.1, 9);
        let t = Mask::new(0b1010, 4).unwrap();
        assert_eq!(synthetic_eval(&m, t), synthetic_eval(&m, t));
        assert_ne!(
            synthetic_eval(&m, t),
            synthetic_eval(&m, Mask::new(0b1011, 4).unwrap())
        );
        let other = SyntheticModel::new(4, 0.0).with_noise(0.1, 10);
        assert_ne!(synthetic_eval(&m, t), synthetic_eval(&other, t));
    }

    #[test]
    fn validation() {
        assert!(SyntheticModel::new(3, 0.0)
            .with_and(0, 1.0)
            .validate()
            .is_err());
        assert!(SyntheticModel::new(3, 0.0)
            .with_or(0b1000, 1.0)
            .validate()
            .is_err());
        assert!(SyntheticModel::new(3, 0.0)
            .with_noise(-1.0, 0)
            .validate()
            .is_err());
    }
}
