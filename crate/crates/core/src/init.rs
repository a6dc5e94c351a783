//! Weight and bias fillers.
//!
//! Every draw comes from a [`ChaCha8Rng`] seeded explicitly through
//! [`seeded_rng`]; nothing consults system entropy, so a seed pins the
//! whole initialization bit-for-bit.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Generator used for initialization and batch shuffling.
pub type EngineRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillerSpec {
    Constant { value: f64 },
    /// Uniform on ±√(3 / fan_in).
    Xavier,
    /// Each weight is nonzero with probability `min(1, sparse / fan_in)`;
    /// nonzero entries are drawn from N(0, std²).
    GaussianSparse { std: f64, sparse: usize },
}

impl Default for FillerSpec {
    fn default() -> Self {
        FillerSpec::Constant { value: 0.0 }
    }
}

impl fmt::Display for FillerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillerSpec::Constant { value } if *value == 0.0 => write!(f, "constant"),
            FillerSpec::Constant { value } => write!(f, "constant(value={value:?})"),
            FillerSpec::Xavier => write!(f, "xavier"),
            FillerSpec::GaussianSparse { std, sparse } => {
                write!(f, "gaussian(std={std:?},sparse={sparse})")
            }
        }
    }
}

impl FillerSpec {
    pub fn xavier_bound(fan_in: usize) -> f64 {
        (3.0 / fan_in as f64).sqrt()
    }

    /// Overwrites `values` according to this filler.
    pub fn fill(&self, values: &mut [f64], fan_in: usize, rng: &mut EngineRng) {
        match *self {
            FillerSpec::Constant { value } => values.fill(value),
            FillerSpec::Xavier => {
                let bound = Self::xavier_bound(fan_in.max(1));
                for v in values.iter_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
            }
            FillerSpec::GaussianSparse { std, sparse } => {
                let normal = Normal::new(0.0, std).expect("filler std must be finite and positive");
                let keep = (sparse as f64 / fan_in.max(1) as f64).min(1.0);
                for v in values.iter_mut() {
                    // The mask draw is skipped when every weight is kept, which
                    // makes sparse >= fan_in identical to a dense gaussian.
                    let live = keep >= 1.0 || rng.random::<f64>() < keep;
                    *v = if live { normal.sample(rng) } else { 0.0 };
                }
            }
        }
    }
}
