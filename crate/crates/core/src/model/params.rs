use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{param_err, shape_err, Result};
use crate::nn::{ParamStore, Tensor};
use crate::rng::{self, streams};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Raw feature width `d`.
    pub in_dim: usize,
    /// Model width `d0`; also the predictor's hidden width.
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub classes: usize,
    /// One encoder (projection and transformer layers) for both views.
    pub share_encoder: bool,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.ffn_dim == 0 || self.classes == 0 {
            return Err(param_err!("model dimensions must be positive"));
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(param_err!("hidden_dim {} is not divisible by {} heads", self.hidden_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(param_err!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    /// Number of encoders: one when shared, otherwise one per view.
    pub fn encoder_count(&self) -> usize {
        if self.share_encoder {
            1
        } else {
            2
        }
    }

    pub fn encoder_prefix(&self, encoder: usize) -> &'static str {
        match (self.share_encoder, encoder) {
            (true, _) => "enc",
            (false, 0) => "enc_attr",
            (false, _) => "enc_topo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerIx {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub w1: usize,
    pub w2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncoderIx {
    pub proj_w: usize,
    pub proj_b: usize,
    pub layers: Vec<LayerIx>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub encoders: Vec<EncoderIx>,
    pub pred_w1: usize,
    pub pred_b1: usize,
    pub pred_w2: usize,
    pub pred_b2: usize,
}

enum Init {
    Xavier,
    Zeros,
    Ones,
}

/// Parameter names and shapes in store order.
fn spec(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, h, f, c) = (cfg.in_dim, cfg.hidden_dim, cfg.ffn_dim, cfg.classes);
    let mut out = Vec::new();
    for e in 0..cfg.encoder_count() {
        let p = cfg.encoder_prefix(e);
        out.push((format!("{p}.proj.w"), alloc::vec![d, h], Init::Xavier));
        out.push((format!("{p}.proj.b"), alloc::vec![h], Init::Zeros));
        for l in 0..cfg.layers {
            let q = format!("{p}.layer{l}");
            out.push((format!("{q}.ln1.gain"), alloc::vec![h], Init::Ones));
            out.push((format!("{q}.ln1.bias"), alloc::vec![h], Init::Zeros));
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("{q}.attn.{w}"), alloc::vec![h, h], Init::Xavier));
            }
            out.push((format!("{q}.ln2.gain"), alloc::vec![h], Init::Ones));
            out.push((format!("{q}.ln2.bias"), alloc::vec![h], Init::Zeros));
            out.push((format!("{q}.ffn.w1"), alloc::vec![h, f], Init::Xavier));
            out.push((format!("{q}.ffn.w2"), alloc::vec![f, h], Init::Xavier));
        }
    }
    out.push(("pred.w1".into(), alloc::vec![2 * h, h], Init::Xavier));
    out.push(("pred.b1".into(), alloc::vec![h], Init::Zeros));
    out.push(("pred.w2".into(), alloc::vec![h, c], Init::Xavier));
    out.push(("pred.b2".into(), alloc::vec![c], Init::Zeros));
    out
}

fn layout(cfg: &ModelConfig, store: &ParamStore) -> Result<Layout> {
    let ix = |name: String| store.index(&name).ok_or_else(|| param_err!("missing parameter {name}"));
    let mut encoders = Vec::new();
    for e in 0..cfg.encoder_count() {
        let p = cfg.encoder_prefix(e);
        let mut layers = Vec::new();
        for l in 0..cfg.layers {
            let q = format!("{p}.layer{l}");
            layers.push(LayerIx {
                ln1_gain: ix(format!("{q}.ln1.gain"))?,
                ln1_bias: ix(format!("{q}.ln1.bias"))?,
                wq: ix(format!("{q}.attn.wq"))?,
                wk: ix(format!("{q}.attn.wk"))?,
                wv: ix(format!("{q}.attn.wv"))?,
                wo: ix(format!("{q}.attn.wo"))?,
                ln2_gain: ix(format!("{q}.ln2.gain"))?,
                ln2_bias: ix(format!("{q}.ln2.bias"))?,
                w1: ix(format!("{q}.ffn.w1"))?,
                w2: ix(format!("{q}.ffn.w2"))?,
            });
        }
        encoders.push(EncoderIx { proj_w: ix(format!("{p}.proj.w"))?, proj_b: ix(format!("{p}.proj.b"))?, layers });
    }
    Ok(Layout {
        encoders,
        pred_w1: ix("pred.w1".into())?,
        pred_b1: ix("pred.b1".into())?,
        pred_w2: ix("pred.w2".into())?,
        pred_b2: ix("pred.b2".into())?,
    })
}

/// All trainable weights of the network together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub store: ParamStore,
    pub(crate) layout: Layout,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit LayerNorm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, streams::INIT);
        let mut store = ParamStore::new();
        for (name, shape, init) in spec(&config) {
            let len: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => alloc::vec![0.0; len],
                Init::Ones => alloc::vec![1.0; len],
                Init::Xavier => {
                    let bound = libm::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
                }
            };
            store.push(&name, Tensor::new(&shape, data)?);
        }
        let layout = layout(&config, &store)?;
        Ok(Self { config, store, layout })
    }

    /// Adopts a stored parameter set after checking names and shapes.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = spec(&config);
        if expected.len() != store.len() {
            return Err(shape_err!("{} parameters stored, architecture needs {}", store.len(), expected.len()));
        }
        for (i, (name, shape, _)) in expected.iter().enumerate() {
            if store.name(i) != name || store.value(i).shape() != &shape[..] {
                return Err(shape_err!("parameter {i} is {} {:?}, expected {name} {shape:?}", store.name(i), store.value(i).shape()));
            }
        }
        if !store.is_finite() {
            return Err(crate::error::Error::NonFinite("stored parameters".into()));
        }
        let layout = layout(&config, &store)?;
        Ok(Self { config, store, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
}
