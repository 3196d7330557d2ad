//! The CTR network: embedding layer, feature interaction MLP producing the
//! latent code, sigmoid prediction head, and the contrastive projector.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Attention,
}

impl Default for Pooling {
    fn default() -> Self {
        Pooling::Mean
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    /// Exactly three projector layer widths; the last must equal `z_dim`.
    #[serde(default = "default_projector_dims")]
    pub projector_dims: Vec<usize>,
    #[serde(default = "default_z_dim")]
    pub z_dim: usize,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default = "default_dropout_rate")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub num_users: usize,
    #[serde(default)]
    pub num_items: usize,
    #[serde(default)]
    pub extra_vocab_sizes: Vec<usize>,
}

fn default_embed_dim() -> usize {
    16
}
fn default_hidden_dims() -> Vec<usize> {
    vec![64, 32]
}
fn default_projector_dims() -> Vec<usize> {
    vec![32, 32, 32]
}
fn default_z_dim() -> usize {
    32
}
fn default_dropout_rate() -> f64 {
    0.2
}

impl Default for ModelConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig("hidden_dims must be non-empty".into()));
        }
        if self.projector_dims.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "projector must have exactly 3 layers, got {}",
                self.projector_dims.len()
            )));
        }
        if self.z_dim == 0 {
            return Err(Error::InvalidConfig("z_dim must be >= 1".into()));
        }
        if *self.projector_dims.last().unwrap() != self.z_dim {
            return Err(Error::InvalidConfig(format!(
                "projector output width {} must equal z_dim {}",
                self.projector_dims.last().unwrap(),
                self.z_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1], got {}",
                self.dropout_rate
            )));
        }
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::InvalidConfig(
                "num_users and num_items must be set from the dataset".into(),
            ));
        }
        Ok(())
    }

    pub fn h_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap()
    }

    /// Width of the concatenated embedding-layer output.
    pub fn feature_dim(&self) -> usize {
        self.embed_dim * (3 + self.extra_vocab_sizes.len())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    /// Uniform init with a bound of `gain / sqrt(fan_in)`. The gain keeps
    /// activation magnitudes near unity through the stack: sqrt(6) before a
    /// leaky-ReLU (He-style), sqrt(3) for purely linear outputs.
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, gain: f64) -> Self {
        let bound = gain / (fan_in as f64).sqrt();
        let w = Tensor::matrix(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        );
        Dense {
            w,
            b: Tensor::zeros(vec![1, fan_out]),
        }
    }
}

const GAIN_PRE_ACTIVATION: f64 = 2.449489742783178; // sqrt(6)
const GAIN_LINEAR: f64 = 1.7320508075688772; // sqrt(3)

/// All trainable tensors.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub user_embed: Tensor,
    pub item_embed: Tensor,
    pub extra_embed: Vec<Tensor>,
    /// Candidate-to-query projection for attention pooling.
    pub attn_query: Option<Tensor>,
    pub hidden: Vec<Dense>,
    pub head: Dense,
    pub projector: Vec<Dense>,
}

fn embed_table(rng: &mut ChaCha8Rng, vocab: usize, dim: usize) -> Tensor {
    let bound = 1.0 / (dim as f64).sqrt();
    Tensor::matrix(
        vocab,
        dim,
        (0..vocab * dim).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

impl ModelParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, "model-init", 0);
        let d = config.embed_dim;
        let user_embed = embed_table(&mut rng, config.num_users, d);
        let item_embed = embed_table(&mut rng, config.num_items, d);
        let extra_embed = config
            .extra_vocab_sizes
            .iter()
            .map(|&v| embed_table(&mut rng, v, d))
            .collect();
        let attn_query = match config.pooling {
            Pooling::Attention => {
                let bound = 1.0 / (d as f64).sqrt();
                Some(Tensor::matrix(
                    d,
                    d,
                    (0..d * d).map(|_| rng.gen_range(-bound..bound)).collect(),
                ))
            }
            Pooling::Mean => None,
        };
        let mut hidden = Vec::new();
        let mut fan_in = config.feature_dim();
        for &width in &config.hidden_dims {
            hidden.push(Dense::init(&mut rng, fan_in, width, GAIN_PRE_ACTIVATION));
            fan_in = width;
        }
        let head = Dense::init(&mut rng, config.h_dim(), 1, GAIN_LINEAR);
        let mut projector = Vec::new();
        let mut fan_in = config.h_dim();
        let last = config.projector_dims.len() - 1;
        for (i, &width) in config.projector_dims.iter().enumerate() {
            let gain = if i < last { GAIN_PRE_ACTIVATION } else { GAIN_LINEAR };
            projector.push(Dense::init(&mut rng, fan_in, width, gain));
            fan_in = width;
        }
        Ok(ModelParams {
            config,
            user_embed,
            item_embed,
            extra_embed,
            attn_query,
            hidden,
            head,
            projector,
        })
    }

    /// Stable (name, tensor) listing used by the optimizer and checkpoints.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("user_embed".into(), &self.user_embed),
            ("item_embed".into(), &self.item_embed),
        ];
        for (i, t) in self.extra_embed.iter().enumerate() {
            out.push((format!("extra_embed.{i}"), t));
        }
        if let Some(q) = &self.attn_query {
            out.push(("attn_query".into(), q));
        }
        for (i, d) in self.hidden.iter().enumerate() {
            out.push((format!("hidden.{i}.w"), &d.w));
            out.push((format!("hidden.{i}.b"), &d.b));
        }
        out.push(("head.w".into(), &self.head.w));
        out.push(("head.b".into(), &self.head.b));
        for (i, d) in self.projector.iter().enumerate() {
            out.push((format!("projector.{i}.w"), &d.w));
            out.push((format!("projector.{i}.b"), &d.b));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("user_embed".into(), &mut self.user_embed),
            ("item_embed".into(), &mut self.item_embed),
        ];
        for (i, t) in self.extra_embed.iter_mut().enumerate() {
            out.push((format!("extra_embed.{i}"), t));
        }
        if let Some(q) = &mut self.attn_query {
            out.push(("attn_query".into(), q));
        }
        for (i, d) in self.hidden.iter_mut().enumerate() {
            out.push((format!("hidden.{i}.w"), &mut d.w));
            out.push((format!("hidden.{i}.b"), &mut d.b));
        }
        out.push(("head.w".into(), &mut self.head.w));
        out.push(("head.b".into(), &mut self.head.b));
        for (i, d) in self.projector.iter_mut().enumerate() {
            out.push((format!("projector.{i}.w"), &mut d.w));
            out.push((format!("projector.{i}.b"), &mut d.b));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }
}

/// Tape handles for every parameter tensor, in [`ModelParams::named`] order.
pub struct ParamVars {
    pub user_embed: Var,
    pub item_embed: Var,
    pub extra_embed: Vec<Var>,
    pub attn_query: Option<Var>,
    pub hidden: Vec<(Var, Var)>,
    pub head: (Var, Var),
    pub projector: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Vars in the same order as [`ModelParams::named`].
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.user_embed, self.item_embed];
        out.extend(&self.extra_embed);
        if let Some(q) = self.attn_query {
            out.push(q);
        }
        for &(w, b) in &self.hidden {
            out.push(w);
            out.push(b);
        }
        out.push(self.head.0);
        out.push(self.head.1);
        for &(w, b) in &self.projector {
            out.push(w);
            out.push(b);
        }
        out
    }
}

pub fn register(tape: &mut Tape, params: &ModelParams) -> ParamVars {
    ParamVars {
        user_embed: tape.leaf(&params.user_embed),
        item_embed: tape.leaf(&params.item_embed),
        extra_embed: params.extra_embed.iter().map(|t| tape.leaf(t)).collect(),
        attn_query: params.attn_query.as_ref().map(|t| tape.leaf(t)),
        hidden: params
            .hidden
            .iter()
            .map(|d| (tape.leaf(&d.w), tape.leaf(&d.b)))
            .collect(),
        head: (tape.leaf(&params.head.w), tape.leaf(&params.head.b)),
        projector: params
            .projector
            .iter()
            .map(|d| (tape.leaf(&d.w), tape.leaf(&d.b)))
            .collect(),
    }
}

/// One view of a batch: histories to pool (augmented or original) and an
/// optional 0/1 perturbation mask over the embedding-layer output.
pub struct ForwardView {
    pub histories: Vec<Vec<usize>>,
    pub embed_mask: Option<Tensor>,
}

#[derive(Debug)]
pub struct ForwardOutput {
    /// Latent codes, B x h_dim.
    pub h: Var,
    /// Click probabilities, B x 1, strictly inside (0, 1).
    pub yhat: Var,
}

fn validate_batch(config: &ModelConfig, batch: &[&Sample]) -> Result<()> {
    for (position, s) in batch.iter().enumerate() {
        if s.user_id >= config.num_users {
            return Err(Error::SampleIndexOutOfRange {
                position,
                field: "user_id",
                index: s.user_id,
                bound: config.num_users,
            });
        }
        if s.item_id >= config.num_items {
            return Err(Error::SampleIndexOutOfRange {
                position,
                field: "item_id",
                index: s.item_id,
                bound: config.num_items,
            });
        }
        for &h in &s.history {
            if h >= config.num_items {
                return Err(Error::SampleIndexOutOfRange {
                    position,
                    field: "history",
                    index: h,
                    bound: config.num_items,
                });
            }
        }
        if s.extras.len() != config.extra_vocab_sizes.len() {
            return Err(Error::InvalidConfig(format!(
                "sample {position} has {} extra features, model expects {}",
                s.extras.len(),
                config.extra_vocab_sizes.len()
            )));
        }
        for (f, (&e, &vocab)) in s.extras.iter().zip(&config.extra_vocab_sizes).enumerate() {
            if e >= vocab {
                let _ = f;
                return Err(Error::SampleIndexOutOfRange {
                    position,
                    field: "extras",
                    index: e,
                    bound: vocab,
                });
            }
        }
    }
    Ok(())
}

/// Run the backbone on a batch. `view` overrides histories and optionally
/// masks the embedding output (the augmented branch); `dropout_rng` drives
/// inverted dropout between hidden layers and must be `None` in eval mode,
/// which makes the pass a pure function of (params, batch).
pub fn forward(
    tape: &mut Tape,
    vars: &ParamVars,
    config: &ModelConfig,
    batch: &[&Sample],
    view: Option<&ForwardView>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardOutput> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("forward on an empty batch".into()));
    }
    validate_batch(config, batch)?;

    let user_ids: Vec<usize> = batch.iter().map(|s| s.user_id).collect();
    let item_ids: Vec<usize> = batch.iter().map(|s| s.item_id).collect();
    let histories: Vec<Vec<usize>> = match view {
        Some(v) => {
            assert_eq!(v.histories.len(), batch.len(), "view/batch size mismatch");
            v.histories.clone()
        }
        None => batch.iter().map(|s| s.history.clone()).collect(),
    };

    let user_e = tape.embed_gather(vars.user_embed, &user_ids)?;
    let item_e = tape.embed_gather(vars.item_embed, &item_ids)?;
    let pooled = match config.pooling {
        Pooling::Mean => tape.embed_mean_pool(vars.item_embed, &histories)?,
        Pooling::Attention => {
            let q = vars
                .attn_query
                .expect("attention pooling requires attn_query weights");
            let query = tape.matmul(item_e, q)?;
            tape.attention_pool(vars.item_embed, query, &histories)?
        }
    };

    let mut parts = vec![user_e, item_e, pooled];
    for (f, &table) in vars.extra_embed.iter().enumerate() {
        let ids: Vec<usize> = batch.iter().map(|s| s.extras[f]).collect();
        parts.push(tape.embed_gather(table, &ids)?);
    }
    let mut x = tape.concat_cols(&parts)?;

    if let Some(v) = view {
        if let Some(mask) = &v.embed_mask {
            let mask = tape.leaf(mask);
            x = tape.mul(x, mask)?;
        }
    }

    let n_hidden = vars.hidden.len();
    for (i, &(w, b)) in vars.hidden.iter().enumerate() {
        let lin = tape.matmul(x, w)?;
        let lin = tape.add_bias(lin, b)?;
        x = tape.leaky_relu(lin, LEAKY_SLOPE);
        if i + 1 < n_hidden {
            if let Some(rng) = dropout_rng.as_deref_mut() {
                x = apply_dropout(tape, x, config.dropout_rate, rng)?;
            }
        }
    }
    let h = x;

    let logits = tape.matmul(h, vars.head.0)?;
    let logits = tape.add_bias(logits, vars.head.1)?;
    let yhat = tape.sigmoid(logits);

    Ok(ForwardOutput { h, yhat })
}

fn apply_dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
    if rate == 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape.clone();
    let keep_scale = if rate < 1.0 { 1.0 / (1.0 - rate) } else { 0.0 };
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let mask = tape.leaf_owned(Tensor::new(shape, data));
    tape.mul(x, mask)
}

/// Projector g: three dense layers with leaky-ReLU between them.
pub fn project(tape: &mut Tape, vars: &ParamVars, h: Var) -> Result<Var> {
    let mut x = h;
    let last = vars.projector.len() - 1;
    for (i, &(w, b)) in vars.projector.iter().enumerate() {
        let lin = tape.matmul(x, w)?;
        x = tape.add_bias(lin, b)?;
        if i < last {
            x = tape.leaky_relu(x, LEAKY_SLOPE);
        }
    }
    Ok(x)
}

/// The attention-pool contract on raw tensors: softmax-weighted convex
/// combination of history embeddings against a single candidate embedding.
/// An empty history returns the zero vector, matching mean pooling.
pub fn attention_pool_single(
    params: &ModelParams,
    history_embeds: &Tensor,
    candidate: &Tensor,
) -> Result<Vec<f64>> {
    let q = params
        .attn_query
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("model has no attention weights".into()))?;
    let mut tape = Tape::no_grad();
    let table = tape.leaf(history_embeds);
    let cand = tape.leaf(candidate);
    let qv = tape.leaf(q);
    let query = tape.matmul(cand, qv)?;
    let list: Vec<usize> = (0..history_embeds.rows()).collect();
    let pooled = tape.attention_pool(table, query, &[list])?;
    Ok(tape.value(pooled).data.clone())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Versioned container for config + named tensors (+ optional codebook).
/// JSON with shortest-roundtrip float rendering, so save/load round-trips
/// bitwise.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
    pub codebook: Option<Codebook>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, codebook: Option<&Codebook>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: params.config.clone(),
            tensors: params
                .named()
                .into_iter()
                .map(|(k, t)| (k, t.clone()))
                .collect(),
            codebook: codebook.cloned(),
        }
    }

    /// Rebuild parameters. Projector tensors may be absent (the auxiliary
    /// path is unused at evaluation); they come back zeroed in that case.
    pub fn into_params(mut self) -> Result<(ModelParams, Option<Codebook>)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        self.config.validate()?;
        let mut proto = ModelParams::init(self.config.clone(), 0)?;
        for (name, slot) in proto.named_mut() {
            match self.tensors.remove(&name) {
                Some(t) => {
                    if t.shape != slot.shape {
                        return Err(Error::Checkpoint(format!(
                            "tensor `{name}` has shape {:?}, expected {:?}",
                            t.shape, slot.shape
                        )));
                    }
                    *slot = t;
                }
                None if name.starts_with("projector.") => {
                    *slot = Tensor::zeros(slot.shape.clone());
                }
                None => {
                    return Err(Error::Checkpoint(format!("missing tensor `{name}`")));
                }
            }
        }
        if let Some(extra) = self.tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok((proto, self.codebook))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss;
    use crate::reference;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            hidden_dims: vec![6, 4],
            projector_dims: vec![4, 4, 4],
            z_dim: 4,
            pooling: Pooling::Mean,
            dropout_rate: 0.2,
            num_users: 5,
            num_items: 6,
            extra_vocab_sizes: vec![3],
        }
    }

    fn sample(user: usize, item: usize, history: Vec<usize>, label: u8) -> Sample {
        Sample {
            user_id: user,
            item_id: item,
            timestamp: 0,
            label,
            history,
            extras: vec![user % 3],
        }
    }

    fn eval_forward(params: &ModelParams, batch: &[&Sample]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::no_grad();
        let vars = register(&mut tape, params);
        let out = forward(&mut tape, &vars, &params.config, batch, None, None).unwrap();
        (
            tape.value(out.yhat).data.clone(),
            tape.value(out.h).data.clone(),
        )
    }

    #[test]
    fn predictions_inside_unit_interval() {
        let params = ModelParams::init(tiny_config(), 3).unwrap();
        let s = sample(0, 1, vec![2, 3], 1);
        let (yhat, h) = eval_forward(&params, &[&s]);
        assert!(yhat[0] > 0.0 && yhat[0] < 1.0);
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let params = ModelParams::init(tiny_config(), 3).unwrap();
        let s = sample(1, 2, vec![0, 5], 0);
        let (y1, _) = eval_forward(&params, &[&s, &s]);
        assert_eq!(y1[0], y1[1]);
        let (y2, _) = eval_forward(&params, &[&s, &s]);
        assert_eq!(y1, y2);
    }

    #[test]
    fn empty_history_equals_zero_pooled_history() {
        // A sample with no history must produce the same latent code as the
        // same sample pooled to zeros by construction.
        let params = ModelParams::init(tiny_config(), 7).unwrap();
        let empty = sample(2, 3, vec![], 1);
        let (_, h_empty) = eval_forward(&params, &[&empty]);

        let mut tape = Tape::no_grad();
        let vars = register(&mut tape, &params);
        let view = ForwardView {
            histories: vec![vec![]],
            embed_mask: None,
        };
        let out = forward(&mut tape, &vars, &params.config, &[&empty], Some(&view), None).unwrap();
        assert_eq!(h_empty, tape.value(out.h).data);
    }

    #[test]
    fn mean_pool_history_order_invariant() {
        let params = ModelParams::init(tiny_config(), 11).unwrap();
        let a = sample(0, 1, vec![2, 3, 4], 1);
        let b = sample(0, 1, vec![4, 2, 3], 1);
        let (ya, ha) = eval_forward(&params, &[&a]);
        let (yb, hb) = eval_forward(&params, &[&b]);
        for (x, y) in ha.iter().zip(&hb) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((ya[0] - yb[0]).abs() < 1e-12);
    }

    #[test]
    fn attention_pool_history_order_invariant() {
        let cfg = ModelConfig {
            pooling: Pooling::Attention,
            ..tiny_config()
        };
        let params = ModelParams::init(cfg, 11).unwrap();
        let a = sample(0, 1, vec![2, 3, 4], 1);
        let b = sample(0, 1, vec![4, 2, 3], 1);
        let (ya, _) = eval_forward(&params, &[&a]);
        let (yb, _) = eval_forward(&params, &[&b]);
        assert!((ya[0] - yb[0]).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index_names_sample_and_field() {
        let params = ModelParams::init(tiny_config(), 3).unwrap();
        let bad = sample(0, 1, vec![99], 1);
        let good = sample(0, 1, vec![], 1);
        let mut tape = Tape::no_grad();
        let vars = register(&mut tape, &params);
        let err = forward(&mut tape, &vars, &params.config, &[&good, &bad], None, None)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sample 1"), "{msg}");
        assert!(msg.contains("history"), "{msg}");
    }

    #[test]
    fn projector_zero_in_zero_out() {
        let mut params = ModelParams::init(tiny_config(), 5).unwrap();
        for d in &mut params.projector {
            d.b = Tensor::zeros(d.b.shape.clone());
        }
        let mut tape = Tape::new();
        let vars = register(&mut tape, &params);
        let h = tape.leaf_owned(Tensor::matrix(2, 4, vec![0.0; 8]));
        let z = project(&mut tape, &vars, h).unwrap();
        assert!(tape.value(z).data.iter().all(|&v| v == 0.0));
        assert_eq!(tape.value(z).shape, vec![2, 4]);
    }

    #[test]
    fn attention_single_history_returns_embedding() {
        let cfg = ModelConfig {
            pooling: Pooling::Attention,
            ..tiny_config()
        };
        let params = ModelParams::init(cfg, 13).unwrap();
        let hist = Tensor::matrix(1, 4, vec![0.5, -0.2, 0.3, 0.9]);
        let cand = Tensor::matrix(1, 4, vec![0.1, 0.1, 0.1, 0.1]);
        let out = attention_pool_single(&params, &hist, &cand).unwrap();
        for (o, e) in out.iter().zip(&hist.data) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_identical_history_rows_collapse() {
        let cfg = ModelConfig {
            pooling: Pooling::Attention,
            ..tiny_config()
        };
        let params = ModelParams::init(cfg, 13).unwrap();
        let row = [0.4, 0.0, -0.3, 0.2];
        let hist = Tensor::matrix(3, 4, row.repeat(3));
        let cand = Tensor::matrix(1, 4, vec![0.9, -0.4, 0.2, 0.0]);
        let out = attention_pool_single(&params, &hist, &cand).unwrap();
        for (o, e) in out.iter().zip(&row) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_is_convex_combination() {
        // any output coordinate stays within the per-coordinate range of the
        // history rows (weights sum to one and are nonnegative)
        let cfg = ModelConfig {
            pooling: Pooling::Attention,
            ..tiny_config()
        };
        let params = ModelParams::init(cfg, 17).unwrap();
        let mut rng = stream(99, "attn-test", 0);
        let hist = Tensor::matrix(7, 4, (0..28).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let cand = Tensor::matrix(1, 4, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let out = attention_pool_single(&params, &hist, &cand).unwrap();
        for k in 0..4 {
            let lo = (0..7).map(|i| hist.data[i * 4 + k]).fold(f64::INFINITY, f64::min);
            let hi = (0..7)
                .map(|i| hist.data[i * 4 + k])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(out[k] >= lo - 1e-12 && out[k] <= hi + 1e-12);
        }
    }

    #[test]
    fn logloss_gradients_match_finite_differences() {
        let params = ModelParams::init(tiny_config(), 23).unwrap();
        let batch = [
            sample(0, 1, vec![2], 1),
            sample(1, 3, vec![0, 4], 0),
            sample(2, 5, vec![], 1),
            sample(4, 0, vec![1, 2, 3], 0),
        ];
        let refs: Vec<&Sample> = batch.iter().collect();
        let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();

        let loss_value = |p: &ModelParams| -> f64 {
            let mut tape = Tape::no_grad();
            let vars = register(&mut tape, p);
            let out = forward(&mut tape, &vars, &p.config, &refs, None, None).unwrap();
            let l = loss::logloss(&mut tape, out.yhat, &labels).unwrap();
            tape.value(l).scalar_value()
        };

        // analytic gradients
        let mut tape = Tape::new();
        let vars = register(&mut tape, &params);
        let out = forward(&mut tape, &vars, &params.config, &refs, None, None).unwrap();
        let l = loss::logloss(&mut tape, out.yhat, &labels).unwrap();
        let grads = tape.backward(l).unwrap();

        let names: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
        for (pos, var) in vars.ordered().into_iter().enumerate() {
            let analytic = grads.grad(var);
            let name = &names[pos];
            let n = analytic.numel();
            // probe a handful of coordinates per tensor
            let step = (n / 6).max(1);
            for coord in (0..n).step_by(step) {
                let mut perturbed = params.clone();
                let base = {
                    let mut f = |v: &[f64]| {
                        let slot = &mut perturbed.named_mut()[pos].1.data;
                        slot.copy_from_slice(v);
                        loss_value(&perturbed)
                    };
                    let x0 = params.named()[pos].1.data.clone();
                    reference::central_diff(&mut f, &x0, coord, 1e-6)
                };
                assert!(
                    reference::grads_agree(analytic.data[coord], base, 1e-4),
                    "{name}[{coord}]: analytic {} fd {}",
                    analytic.data[coord],
                    base
                );
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_bitwise() {
        let params = ModelParams::init(tiny_config(), 31).unwrap();
        let codebook = Codebook::init(4, 4, 0.1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_params(&params, Some(&codebook)).save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let (p2, c2) = Checkpoint::load(&path).unwrap().into_params().unwrap();
        Checkpoint::from_params(&p2, c2.as_ref()).save(&path).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        for ((_, a), (_, b)) in params.named().iter().zip(p2.named().iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn checkpoint_without_projector_and_codebook_still_evaluates() {
        let params = ModelParams::init(tiny_config(), 31).unwrap();
        let codebook = Codebook::init(4, 4, 0.1, 5).unwrap();
        let s = sample(1, 2, vec![3], 1);
        let (y_full, _) = eval_forward(&params, &[&s]);

        let mut ckpt = Checkpoint::from_params(&params, Some(&codebook));
        ckpt.codebook = None;
        ckpt.tensors.retain(|k, _| !k.starts_with("projector."));
        let (stripped, cb) = ckpt.into_params().unwrap();
        assert!(cb.is_none());
        let (y_stripped, _) = eval_forward(&stripped, &[&s]);
        assert_eq!(y_full, y_stripped);
    }

    use crate::rng::stream;
}
