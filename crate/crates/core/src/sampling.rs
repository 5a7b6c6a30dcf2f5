//! Seeded parameter draws, tensor grids and the frozen test set.
//!
//! One master seed drives every experiment. Training mini-batches and the
//! test set come from the same ChaCha8 key on different stream ids
//! ([`TRAINING_STREAM`], [`TEST_STREAM`]), so they never overlap and either
//! can be regenerated without replaying the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::systems::{ParameterDomain, ParameterSample};

pub const TRAINING_STREAM: u64 = 0;
pub const TEST_STREAM: u64 = 1;

/// Default size of the evaluation set.
pub const DEFAULT_TEST_SIZE: usize = 300;

/// Deterministic generator: `(seed, stream)` plus the call sequence fixes the
/// output on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn training(seed: u64) -> Self {
        Self::new(seed, TRAINING_STREAM)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn sample(&mut self, domain: &ParameterDomain) -> ParameterSample {
        ParameterSample(
            domain
                .lower()
                .iter()
                .zip(domain.upper())
                .map(|(&lo, &hi)| {
                    let x = lo + self.uniform() * (hi - lo);
                    // lo + U(hi − lo) can round up to hi; keep the box closed.
                    x.min(hi)
                })
                .collect(),
        )
    }
}

/// `m` independent uniform draws from the box.
pub fn sample_batch(
    domain: &ParameterDomain,
    m: usize,
    rng: &mut SeededRng,
) -> Result<Vec<ParameterSample>> {
    if m == 0 {
        return Err(Error::Config("mini-batch size must be at least 1".into()));
    }
    Ok((0..m).map(|_| rng.sample(domain)).collect())
}

/// Endpoint-inclusive tensor grid with `points_per_dim` values per axis, in
/// lexicographic order (last coordinate varies fastest).
pub fn fixed_grid(domain: &ParameterDomain, points_per_dim: usize) -> Result<Vec<ParameterSample>> {
    if points_per_dim < 2 {
        return Err(Error::Config(format!(
            "grid needs at least 2 points per dimension, got {points_per_dim}"
        )));
    }
    let d = domain.dim();
    let p = points_per_dim;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let (lo, hi) = (domain.lower()[i], domain.upper()[i]);
            (0..p)
                .map(|k| {
                    if k == p - 1 {
                        hi
                    } else {
                        lo + k as f64 * (hi - lo) / (p - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let total = p.checked_pow(d as u32).ok_or_else(|| {
        Error::Config(format!("{p}^{d} grid points overflow"))
    })?;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        out.push(ParameterSample(
            idx.iter().enumerate().map(|(i, &k)| axes[i][k]).collect(),
        ));
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < p {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(out)
}

/// The frozen evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub seed: u64,
    pub samples: Vec<ParameterSample>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draws `size` samples on the test stream of `seed`.
pub fn make_test_set(domain: &ParameterDomain, size: usize, seed: u64) -> Result<TestSet> {
    if size == 0 {
        return Err(Error::Config("test set must hold at least one sample".into()));
    }
    let mut rng = SeededRng::new(seed, TEST_STREAM);
    Ok(TestSet {
        seed,
        samples: sample_batch(domain, size, &mut rng)?,
    })
}
