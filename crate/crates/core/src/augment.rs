//! Stochastic input augmentation producing the positive view for the
//! contrastive task: history masking plus embedding-bit dropout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Probability of dropping each history item independently.
    #[serde(default = "default_history_mask_rate")]
    pub history_mask_rate: f64,
    /// Probability of zeroing each embedding component of the augmented view.
    #[serde(default = "default_embed_drop_rate")]
    pub embed_drop_rate: f64,
}

fn default_history_mask_rate() -> f64 {
    0.2
}

fn default_embed_drop_rate() -> f64 {
    0.1
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            history_mask_rate: default_history_mask_rate(),
            embed_drop_rate: default_embed_drop_rate(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("history_mask_rate", self.history_mask_rate),
            ("embed_drop_rate", self.embed_drop_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Randomly mask items from the click history. A non-empty history never
/// masks down to empty: the draw is rejected and retried, which conditions
/// the mask on retaining at least one item. All other fields pass through
/// unchanged.
pub fn augment_history(sample: &Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Sample {
    let mut out = sample.clone();
    if sample.history.is_empty() || cfg.history_mask_rate == 0.0 {
        return out;
    }
    if cfg.history_mask_rate >= 1.0 {
        // Limit of the rejection scheme as the mask rate approaches 1:
        // a single uniformly chosen survivor.
        let keep = rng.gen_range(0..sample.history.len());
        out.history = vec![sample.history[keep]];
        return out;
    }
    loop {
        let kept: Vec<usize> = sample
            .history
            .iter()
            .copied()
            .filter(|_| rng.gen::<f64>() >= cfg.history_mask_rate)
            .collect();
        if !kept.is_empty() {
            out.history = kept;
            return out;
        }
    }
}

/// Binary mask over embedding outputs: each element is zeroed independently
/// with probability `embed_drop_rate`. Survivors are NOT rescaled; this is a
/// view perturbation, not regularization-by-expectation.
pub fn embed_dropout_mask(shape: &[usize], cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < cfg.embed_drop_rate {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sample_with_history(history: Vec<usize>) -> Sample {
        Sample {
            user_id: 3,
            item_id: 7,
            timestamp: 0,
            label: 1,
            history,
            extras: vec![2],
        }
    }

    #[test]
    fn zero_mask_rate_keeps_history() {
        let cfg = AugmentConfig {
            history_mask_rate: 0.0,
            embed_drop_rate: 0.0,
        };
        let s = sample_with_history(vec![1, 2, 3]);
        let out = augment_history(&s, &cfg, &mut stream(1, "aug", 0));
        assert_eq!(out.history, vec![1, 2, 3]);
    }

    #[test]
    fn single_item_history_always_retained() {
        let cfg = AugmentConfig {
            history_mask_rate: 0.9,
            embed_drop_rate: 0.0,
        };
        let s = sample_with_history(vec![42]);
        for i in 0..200 {
            let out = augment_history(&s, &cfg, &mut stream(i, "aug", 0));
            assert_eq!(out.history, vec![42]);
        }
    }

    #[test]
    fn other_fields_never_change() {
        let cfg = AugmentConfig::default();
        let s = sample_with_history(vec![5, 6, 7, 8]);
        let out = augment_history(&s, &cfg, &mut stream(9, "aug", 0));
        assert_eq!(out.user_id, s.user_id);
        assert_eq!(out.item_id, s.item_id);
        assert_eq!(out.label, s.label);
        assert_eq!(out.extras, s.extras);
    }

    #[test]
    fn reproducible_given_same_stream() {
        let cfg = AugmentConfig::default();
        let s = sample_with_history((0..50).collect());
        let a = augment_history(&s, &cfg, &mut stream(11, "aug", 4));
        let b = augment_history(&s, &cfg, &mut stream(11, "aug", 4));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn mask_rate_half_keeps_roughly_half_of_large_history() {
        // Binomial(1000, 0.5): being outside [400, 600] has probability
        // far below 1e-3.
        let cfg = AugmentConfig {
            history_mask_rate: 0.5,
            embed_drop_rate: 0.0,
        };
        let s = sample_with_history((0..1000).collect());
        let out = augment_history(&s, &cfg, &mut stream(2024, "aug", 0));
        assert!(
            (400..=600).contains(&out.history.len()),
            "kept {}",
            out.history.len()
        );
    }

    #[test]
    fn drop_rate_extremes() {
        let mut rng = stream(0, "mask", 0);
        let all_ones = embed_dropout_mask(
            &[4, 8],
            &AugmentConfig {
                history_mask_rate: 0.0,
                embed_drop_rate: 0.0,
            },
            &mut rng,
        );
        assert!(all_ones.data.iter().all(|&v| v == 1.0));
        let all_zeros = embed_dropout_mask(
            &[4, 8],
            &AugmentConfig {
                history_mask_rate: 0.0,
                embed_drop_rate: 1.0,
            },
            &mut rng,
        );
        assert!(all_zeros.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drop_fraction_concentrates() {
        let cfg = AugmentConfig {
            history_mask_rate: 0.0,
            embed_drop_rate: 0.1,
        };
        let mask = embed_dropout_mask(&[100_000], &cfg, &mut stream(7, "mask", 0));
        let zeros = mask.data.iter().filter(|&&v| v == 0.0).count() as f64;
        let frac = zeros / 100_000.0;
        assert!((frac - 0.1).abs() < 0.005, "zero fraction {frac}");
    }
}
