use crate::error::{param_err, Error, Result};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;
use crate::propagation::PropagationConfig;
use crate::split::SplitKind;
use crate::tokenizer::{SequenceStrategy, SwapConfig};

/// Model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Token swapping with center alignment.
    Full,
    /// Center alignment removed (`lambda = 0`).
    NoCal,
    /// One long sequence of the top `2k` tokens, no augmentation.
    LargeK,
    /// `1 + s` sequences of `k` tokens drawn at random from the top `2k`.
    RandomSubsample,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoCal, Variant::LargeK, Variant::RandomSubsample];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCal => "no-cal",
            Variant::LargeK => "large-k",
            Variant::RandomSubsample => "random-subsample",
        }
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| param_err!("unknown variant {s:?}"))
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub ppr_steps: usize,
    pub ppr_beta: f64,
    pub swap_p: f64,
    pub swap_t: usize,
    pub aug_s: usize,
    pub resample_each_epoch: bool,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub dropout: f64,
    pub share_encoder: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Training nodes per optimizer step; 0 means the whole training set.
    pub batch_size: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub split: SplitKind,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 6,
            ppr_steps: 10,
            ppr_beta: 0.15,
            swap_p: 0.5,
            swap_t: 2,
            aug_s: 4,
            resample_each_epoch: false,
            hidden_dim: 256,
            ffn_dim: 512,
            layers: 1,
            heads: 8,
            alpha: 0.5,
            lambda: 1.0,
            dropout: 0.5,
            share_encoder: true,
            learning_rate: 0.005,
            weight_decay: 0.0,
            max_epochs: 500,
            patience: 50,
            batch_size: 0,
            runs: 10,
            base_seed: 0,
            split: SplitKind::Dense,
            variant: Variant::Full,
        }
    }
}

/// Tokenizer and loss settings after a variant has been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveSetup {
    /// Row width of the token tables.
    pub table_k: usize,
    pub strategy: SequenceStrategy,
    pub lambda: f64,
}

impl EffectiveSetup {
    /// Length of every token sequence, target included.
    pub fn seq_len(&self) -> usize {
        match self.strategy {
            SequenceStrategy::Swap(_) | SequenceStrategy::Single => 1 + self.table_k,
            SequenceStrategy::Subsample { k, .. } => 1 + k,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(param_err!("learning_rate must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(param_err!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if self.runs == 0 {
            return Err(param_err!("runs must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(param_err!("max_epochs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(param_err!("alpha must lie in [0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(param_err!("lambda must be finite and non-negative"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(param_err!("weight_decay must be non-negative"));
        }
        if self.k == 0 {
            return Err(param_err!("k must be at least 1"));
        }
        self.propagation().validate()?;
        self.swap().validate()
    }

    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig { steps: self.ppr_steps, beta: self.ppr_beta }
    }

    pub fn swap(&self) -> SwapConfig {
        SwapConfig { p: self.swap_p, t: self.swap_t, s: self.aug_s }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    pub fn model(&self, in_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden_dim: self.hidden_dim,
            ffn_dim: self.ffn_dim,
            layers: self.layers,
            heads: self.heads,
            classes,
            share_encoder: self.share_encoder,
            dropout: self.dropout,
        }
    }

    /// Maps the variant onto table width, sequence strategy and loss weight.
    pub fn apply_variant(&self) -> EffectiveSetup {
        match self.variant {
            Variant::Full => EffectiveSetup {
                table_k: self.k,
                strategy: SequenceStrategy::Swap(self.swap()),
                lambda: self.lambda,
            },
            Variant::NoCal => EffectiveSetup {
                table_k: self.k,
                strategy: SequenceStrategy::Swap(self.swap()),
                lambda: 0.0,
            },
            Variant::LargeK => EffectiveSetup {
                table_k: 2 * self.k,
                strategy: SequenceStrategy::Single,
                lambda: self.lambda,
            },
            Variant::RandomSubsample => EffectiveSetup {
                table_k: 2 * self.k,
                strategy: SequenceStrategy::Subsample { k: self.k, s: self.aug_s },
                lambda: self.lambda,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants() {
        let cfg = TrainConfig { k: 4, ..Default::default() };
        assert_eq!(cfg.apply_variant().lambda, 1.0);
        let no_cal = TrainConfig { variant: Variant::NoCal, ..cfg.clone() }.apply_variant();
        assert_eq!(no_cal.lambda, 0.0);
        let large = TrainConfig { variant: Variant::LargeK, ..cfg.clone() }.apply_variant();
        assert_eq!(large.seq_len(), 9);
        assert_eq!(large.strategy, SequenceStrategy::Single);
        let sub = TrainConfig { variant: Variant::RandomSubsample, ..cfg }.apply_variant();
        assert_eq!((sub.table_k, sub.seq_len()), (8, 5));
        assert!("bogus".parse::<Variant>().is_err());
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { patience: 600, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { runs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { swap_t: 0, ..Default::default() }.validate().is_err());
    }
}
