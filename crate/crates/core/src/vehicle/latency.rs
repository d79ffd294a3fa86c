use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Triangular, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid latency model: {0}")]
pub struct LatencyModelError(String);

/// ECU reply-delay distribution in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Triangular { min_ms: f64, mode_ms: f64, max_ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
    Fixed { ms: f64 },
}

impl Default for LatencyModel {
    /// triangular(50, 80, 200): support [50, 200] with mean 110.
    fn default() -> Self {
        LatencyModel::Triangular {
            min_ms: 50.0,
            mode_ms: 80.0,
            max_ms: 200.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), LatencyModelError> {
        let ok = match *self {
            LatencyModel::Triangular { min_ms, mode_ms, max_ms } => {
                min_ms > 0.0 && min_ms <= mode_ms && mode_ms <= max_ms && min_ms < max_ms
            }
            LatencyModel::Uniform { min_ms, max_ms } => min_ms > 0.0 && min_ms < max_ms,
            LatencyModel::Fixed { ms } => ms > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LatencyModelError(format!("{self:?}")))
        }
    }

    pub fn mean_ms(&self) -> f64 {
        match *self {
            LatencyModel::Triangular { min_ms, mode_ms, max_ms } => (min_ms + mode_ms + max_ms) / 3.0,
            LatencyModel::Uniform { min_ms, max_ms } => (min_ms + max_ms) / 2.0,
            LatencyModel::Fixed { ms } => ms,
        }
    }

    pub fn min_ms(&self) -> f64 {
        match *self {
            LatencyModel::Triangular { min_ms, .. } | LatencyModel::Uniform { min_ms, .. } => min_ms,
            LatencyModel::Fixed { ms } => ms,
        }
    }

    pub fn max_ms(&self) -> f64 {
        match *self {
            LatencyModel::Triangular { max_ms, .. } | LatencyModel::Uniform { max_ms, .. } => max_ms,
            LatencyModel::Fixed { ms } => ms,
        }
    }

    /// Parses the CLI shorthand: `triangular:50,80,200`, `uniform:50,200`,
    /// `fixed:100`.
    pub fn parse(text: &str) -> Result<Self, LatencyModelError> {
        let err = || LatencyModelError(text.to_string());
        let (kind, args) = text.split_once(':').ok_or_else(err)?;
        let nums = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        let model = match (kind, nums.as_slice()) {
            ("triangular", [a, b, c]) => LatencyModel::Triangular {
                min_ms: *a,
                mode_ms: *b,
                max_ms: *c,
            },
            ("uniform", [a, b]) => LatencyModel::Uniform {
                min_ms: *a,
                max_ms: *b,
            },
            ("fixed", [a]) => LatencyModel::Fixed { ms: *a },
            _ => return Err(err()),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn sampler(&self, seed: u64) -> Result<LatencySampler, LatencyModelError> {
        self.validate()?;
        let dist = match *self {
            LatencyModel::Triangular { min_ms, mode_ms, max_ms } => Sampler::Triangular(
                Triangular::new(min_ms, max_ms, mode_ms).map_err(|e| LatencyModelError(e.to_string()))?,
            ),
            LatencyModel::Uniform { min_ms, max_ms } => Sampler::Uniform(
                Uniform::new_inclusive(min_ms, max_ms).map_err(|e| LatencyModelError(e.to_string()))?,
            ),
            LatencyModel::Fixed { ms } => Sampler::Fixed(ms),
        };
        Ok(LatencySampler {
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Triangular(Triangular<f64>),
    Uniform(Uniform<f64>),
    Fixed(f64),
}

/// Seeded stream of reply delays.
#[derive(Debug, Clone)]
pub struct LatencySampler {
    dist: Sampler,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn sample_ms(&mut self) -> f64 {
        match &self.dist {
            Sampler::Triangular(d) => d.sample(&mut self.rng),
            Sampler::Uniform(d) => d.sample(&mut self.rng),
            Sampler::Fixed(ms) => *ms,
        }
    }
}
