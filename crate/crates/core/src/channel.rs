//! Per-slot channel power gains.
//!
//! Every SU has two fading links: `gamma` towards the base station and
//! `g` towards the primary user. Gains are i.i.d. across slots,
//! independent and possibly heterogeneous across SUs, and bounded above
//! by a hard truncation point so that the peak rate stays finite.
//!
//! Exponential gains are truncated by rejection: a draw above `max` is
//! resampled, so the configured `mean` is the pre-truncation parameter
//! of the exponential law. [`GainDistribution::expected_gain`] returns
//! the post-truncation mean.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::rng::{substream, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("gain mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("truncation point {max} must be at least the mean {mean}")]
    MaxBelowMean { mean: f64, max: f64 },
    #[error("discrete gain table must be non-empty")]
    EmptyTable,
    #[error("discrete table probabilities sum to {0}, expected 1")]
    UnnormalizedTable(f64),
    #[error("discrete table entry ({value}, {prob}) is invalid")]
    BadTableEntry { value: f64, prob: f64 },
}

/// A truncated distribution of a dimensionless power gain.
#[derive(Debug, Clone, PartialEq)]
pub enum GainDistribution {
    /// Degenerate gain: every draw equals `value`.
    Constant { value: f64 },
    /// Exponential with pre-truncation mean `mean`, resampled until the
    /// draw falls in `(0, max]`.
    TruncatedExp { mean: f64, max: f64 },
    /// Explicit finite support: `(value, probability)` pairs.
    DiscreteTable { points: Vec<(f64, f64)> },
}

impl GainDistribution {
    pub fn constant(value: f64) -> Result<Self, ChannelError> {
        if value <= 0.0 {
            return Err(ChannelError::NonPositiveMean(value));
        }
        Ok(GainDistribution::Constant { value })
    }

    pub fn truncated_exp(mean: f64, max: f64) -> Result<Self, ChannelError> {
        if mean <= 0.0 {
            return Err(ChannelError::NonPositiveMean(mean));
        }
        if max < mean {
            return Err(ChannelError::MaxBelowMean { mean, max });
        }
        Ok(GainDistribution::TruncatedExp { mean, max })
    }

    /// Builds a discrete table; probabilities must sum to 1 within 1e-12.
    pub fn discrete_table(points: Vec<(f64, f64)>) -> Result<Self, ChannelError> {
        if points.is_empty() {
            return Err(ChannelError::EmptyTable);
        }
        for &(value, prob) in &points {
            if value <= 0.0 || prob < 0.0 || !value.is_finite() || !prob.is_finite() {
                return Err(ChannelError::BadTableEntry { value, prob });
            }
        }
        let total: f64 = points.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ChannelError::UnnormalizedTable(total));
        }
        Ok(GainDistribution::DiscreteTable { points })
    }

    /// Largest value a draw can take.
    pub fn max_gain(&self) -> f64 {
        match self {
            GainDistribution::Constant { value } => *value,
            GainDistribution::TruncatedExp { max, .. } => *max,
            GainDistribution::DiscreteTable { points } => points
                .iter()
                .map(|&(v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Mean of the truncated law (closed form).
    ///
    /// For the exponential this is the conditional mean given the draw
    /// lands below the truncation point:
    /// `mean - max * e^{-max/mean} / (1 - e^{-max/mean})`.
    pub fn expected_gain(&self) -> f64 {
        match self {
            GainDistribution::Constant { value } => *value,
            GainDistribution::TruncatedExp { mean, max } => {
                let z = (-max / mean).exp();
                mean - max * z / (1.0 - z)
            }
            GainDistribution::DiscreteTable { points } => {
                points.iter().map(|&(v, p)| v * p).sum()
            }
        }
    }

    /// Draws one gain; always in `(0, max]`.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            GainDistribution::Constant { value } => *value,
            GainDistribution::TruncatedExp { mean, max } => {
                let exp = Exp::new(1.0 / mean).expect("validated mean");
                loop {
                    let draw = exp.sample(rng);
                    if draw > 0.0 && draw <= *max {
                        return draw;
                    }
                }
            }
            GainDistribution::DiscreteTable { points } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(value, prob) in points {
                    acc += prob;
                    if u < acc {
                        return value;
                    }
                }
                points.last().expect("non-empty table").0
            }
        }
    }
}

/// One slot's worth of gains: `gamma[i]` towards the BS and `g[i]`
/// towards the PU, for every SU `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub gamma: Vec<f64>,
    pub g: Vec<f64>,
}

/// The per-SU pair of gain distributions.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub gamma: Vec<GainDistribution>,
    pub g: Vec<GainDistribution>,
}

impl ChannelModel {
    pub fn new(gamma: Vec<GainDistribution>, g: Vec<GainDistribution>) -> Self {
        assert_eq!(gamma.len(), g.len(), "one gain pair per SU");
        assert!(!gamma.is_empty(), "need at least one SU");
        Self { gamma, g }
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }
}

/// Per-replication sampling state: one substream per SU per link.
pub struct ChannelSampler {
    model: ChannelModel,
    gamma_rngs: Vec<ChaCha8Rng>,
    g_rngs: Vec<ChaCha8Rng>,
}

impl ChannelSampler {
    pub fn new(model: ChannelModel, master_seed: u64) -> Self {
        let n = model.n();
        let gamma_rngs = (0..n)
            .map(|i| substream(master_seed, Domain::GammaGain, i as u64))
            .collect();
        let g_rngs = (0..n)
            .map(|i| substream(master_seed, Domain::InterferenceGain, i as u64))
            .collect();
        Self {
            model,
            gamma_rngs,
            g_rngs,
        }
    }

    /// Draws one slot of gains for every SU.
    pub fn sample_slot(&mut self) -> ChannelDraw {
        let n = self.model.n();
        let mut gamma = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            gamma.push(self.model.gamma[i].sample(&mut self.gamma_rngs[i]));
            g.push(self.model.g[i].sample(&mut self.g_rngs[i]));
        }
        ChannelDraw { gamma, g }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }
}
