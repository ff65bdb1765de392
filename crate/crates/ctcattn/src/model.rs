//! Hierarchical CTC encoder-decoder.
//!
//! The encoder first produces length-adjusted source-oriented states
//! (up-sampling by repetition for MT, a strided convolution block for the
//! ST analog), reads a source CTC head at the boundary, then applies
//! re-ordering layers and a target CTC head. An autoregressive decoder
//! cross-attends over the target-oriented states.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{concat_cols, embed_lookup, NumericsError, Tape, Tensor};
use crate::ctc::{CtcError, PosteriorGrid, TokenSeq};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token id {id} out of vocabulary {vocab}")]
    BadToken { id: usize, vocab: usize },
    #[error("prefix contains eos")]
    EosInPrefix,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint corrupt: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Mt,
    StAnalog,
}

/// Architecture hyperparameters. `n_src_layers`/`n_adjust_layers` sit
/// before the source CTC head, `n_tgt_layers` after it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub task: TaskKind,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_src_layers: usize,
    pub n_adjust_layers: usize,
    pub n_tgt_layers: usize,
    pub n_dec_layers: usize,
    #[serde(default = "one")]
    pub upsample_rate: usize,
    #[serde(default = "one")]
    pub downsample_rate: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    #[serde(default)]
    pub dropout: f64,
}

fn one() -> usize {
    1
}

impl ModelConfig {
    /// Desk-scale defaults: d=64, 4 heads, 2+2+2 encoder layers,
    /// 2 decoder layers.
    pub fn desk_default(task: TaskKind, src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            task,
            d_model: 64,
            n_heads: 4,
            n_src_layers: 2,
            n_adjust_layers: 2,
            n_tgt_layers: 2,
            n_dec_layers: 2,
            upsample_rate: if task == TaskKind::Mt { 3 } else { 1 },
            downsample_rate: if task == TaskKind::StAnalog { 4 } else { 1 },
            src_vocab,
            tgt_vocab,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.upsample_rate < 1 || self.downsample_rate < 1 {
            return Err(ModelError::BadConfig("sampling rates must be ≥ 1".into()));
        }
        if self.src_vocab == 0 || self.tgt_vocab == 0 {
            return Err(ModelError::BadConfig("vocabularies must be nonempty".into()));
        }
        Ok(())
    }

    /// Index of the layer whose output feeds the source CTC head.
    pub fn src_ctc_layer_index(&self) -> usize {
        self.n_src_layers + self.n_adjust_layers
    }

    /// Adjusted encoder length for an input of `t_in` positions.
    pub fn adjusted_len(&self, t_in: usize) -> usize {
        match self.task {
            TaskKind::Mt => t_in * self.upsample_rate,
            TaskKind::StAnalog => t_in.div_ceil(self.downsample_rate),
        }
    }

    /// Decoder output vocabulary size: target tokens plus eos.
    pub fn dec_vocab(&self) -> usize {
        self.tgt_vocab + 1
    }

    pub fn eos_id(&self) -> usize {
        self.tgt_vocab
    }
}

/// One named trainable array.
#[derive(Debug, Clone)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// All trainable arrays, keyed by parameter path.
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    entries: BTreeMap<String, Param>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries.get(name).ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries.get_mut(name).ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.insert(name.to_string(), Param { shape, data });
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.values().map(|p| p.data.len()).sum()
    }
}

/// Model = config + parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Forward-pass context: binds named parameters to (at most one) tape so
/// gradients accumulate per parameter, and owns the dropout RNG when
/// training.
pub struct ForwardCtx<'a> {
    tape: Option<&'a Tape>,
    dropout: f64,
    rng: RefCell<Option<ChaCha8Rng>>,
    bound: RefCell<HashMap<String, Tensor>>,
}

impl<'a> ForwardCtx<'a> {
    fn bind(&self, params: &ModelParams, name: &str) -> Result<Tensor> {
        if let Some(t) = self.bound.borrow().get(name) {
            return Ok(t.clone());
        }
        let p = params.get(name)?;
        let t = match self.tape {
            Some(tape) => tape.var(p.data.clone(), &p.shape)?,
            None => Tensor::constant(p.data.clone(), &p.shape)?,
        };
        self.bound.borrow_mut().insert(name.to_string(), t.clone());
        Ok(t)
    }

    fn dropout_mask(&self, x: &Tensor) -> Result<Tensor> {
        let mut rng_slot = self.rng.borrow_mut();
        let Some(rng) = rng_slot.as_mut() else {
            return Ok(x.clone());
        };
        if self.dropout <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.dropout;
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = Tensor::constant(mask, x.shape())?;
        Ok(x.mul(&m)?)
    }

    /// Gradients for every parameter touched in this context; call after
    /// `autodiff::backward`.
    pub fn grads(&self) -> HashMap<String, Vec<f64>> {
        self.bound
            .borrow()
            .iter()
            .filter_map(|(name, t)| t.grad().map(|g| (name.clone(), g)))
            .collect()
    }
}

/// Encoder outputs: source- and target-oriented states plus both CTC
/// head grids (log-softmax tensors of shape T' × vocab+1, blank last).
pub struct EncodeResult {
    pub h_src: Tensor,
    pub h_tgt: Tensor,
    pub src_grid_logp: Tensor,
    pub tgt_grid_logp: Tensor,
    pub t_prime: usize,
}

impl EncodeResult {
    pub fn src_grid(&self) -> PosteriorGrid {
        grid_from_tensor(&self.src_grid_logp, self.t_prime)
    }

    pub fn tgt_grid(&self) -> PosteriorGrid {
        grid_from_tensor(&self.tgt_grid_logp, self.t_prime)
    }
}

fn grid_from_tensor(logp: &Tensor, t_prime: usize) -> PosteriorGrid {
    let vocab = logp.shape()[1];
    PosteriorGrid::new(logp.data().to_vec(), t_prime, vocab, vocab - 1)
        .expect("log-softmax rows are normalized")
}

impl Model {
    /// Fresh model with seeded Xavier-uniform weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f64656c);
        let mut params = ModelParams::default();
        let d = config.d_model;
        let mut linear = |params: &mut ModelParams, name: &str, rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
            params.insert(&format!("{name}.w"), vec![rows, cols], data);
            params.insert(&format!("{name}.b"), vec![cols], vec![0.0; cols]);
        };
        let norm = |params: &mut ModelParams, name: &str| {
            params.insert(&format!("{name}.g"), vec![d], vec![1.0; d]);
            params.insert(&format!("{name}.b"), vec![d], vec![0.0; d]);
        };
        let block = |params: &mut ModelParams,
                     linear: &mut dyn FnMut(&mut ModelParams, &str, usize, usize),
                     name: &str,
                     cross: bool| {
            linear(params, &format!("{name}.self.wq"), d, d);
            linear(params, &format!("{name}.self.wk"), d, d);
            linear(params, &format!("{name}.self.wv"), d, d);
            linear(params, &format!("{name}.self.wo"), d, d);
            norm(params, &format!("{name}.norm1"));
            if cross {
                linear(params, &format!("{name}.cross.wq"), d, d);
                linear(params, &format!("{name}.cross.wk"), d, d);
                linear(params, &format!("{name}.cross.wv"), d, d);
                linear(params, &format!("{name}.cross.wo"), d, d);
                norm(params, &format!("{name}.normc"));
            }
            linear(params, &format!("{name}.ffn.w1"), d, 2 * d);
            linear(params, &format!("{name}.ffn.w2"), 2 * d, d);
            norm(params, &format!("{name}.norm2"));
        };

        // embeddings: decoder table carries one extra BOS row
        linear(&mut params, "src_embed", config.src_vocab, d);
        linear(&mut params, "tgt_embed", config.tgt_vocab + 1, d);
        if config.task == TaskKind::StAnalog {
            linear(&mut params, "down_conv", config.downsample_rate * d, d);
        }
        for i in 0..config.n_src_layers {
            block(&mut params, &mut linear, &format!("src.{i}"), false);
        }
        for i in 0..config.n_adjust_layers {
            block(&mut params, &mut linear, &format!("adj.{i}"), false);
        }
        for i in 0..config.n_tgt_layers {
            block(&mut params, &mut linear, &format!("tgt.{i}"), false);
        }
        for i in 0..config.n_dec_layers {
            block(&mut params, &mut linear, &format!("dec.{i}"), true);
        }
        norm(&mut params, "enc_norm");
        norm(&mut params, "dec_norm");
        linear(&mut params, "src_ctc", d, config.src_vocab + 1);
        linear(&mut params, "tgt_ctc", d, config.tgt_vocab + 1);
        linear(&mut params, "dec_out", d, config.dec_vocab());
        // drop the unused embedding/bias rows created by `linear`
        Ok(Model { config, params })
    }

    pub fn eval_ctx(&self) -> ForwardCtx<'static> {
        ForwardCtx {
            tape: None,
            dropout: 0.0,
            rng: RefCell::new(None),
            bound: RefCell::new(HashMap::new()),
        }
    }

    pub fn train_ctx<'a>(&self, tape: &'a Tape, step_seed: u64) -> ForwardCtx<'a> {
        ForwardCtx {
            tape: Some(tape),
            dropout: self.config.dropout,
            rng: RefCell::new(Some(ChaCha8Rng::seed_from_u64(step_seed ^ 0x64726f70))),
            bound: RefCell::new(HashMap::new()),
        }
    }

    fn linear(&self, ctx: &ForwardCtx, name: &str, x: &Tensor) -> Result<Tensor> {
        let w = ctx.bind(&self.params, &format!("{name}.w"))?;
        let b = ctx.bind(&self.params, &format!("{name}.b"))?;
        Ok(x.matmul(&w)?.add_bias(&b)?)
    }

    fn layer_norm(&self, ctx: &ForwardCtx, name: &str, x: &Tensor) -> Result<Tensor> {
        let g = ctx.bind(&self.params, &format!("{name}.g"))?;
        let b = ctx.bind(&self.params, &format!("{name}.b"))?;
        Ok(x.layer_norm(&g, &b, 1e-5)?)
    }

    fn attention(
        &self,
        ctx: &ForwardCtx,
        name: &str,
        q_in: &Tensor,
        kv_in: &Tensor,
        causal: bool,
        maps: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Tensor> {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let q = self.linear(ctx, &format!("{name}.wq"), q_in)?;
        let k = self.linear(ctx, &format!("{name}.wk"), kv_in)?;
        let v = self.linear(ctx, &format!("{name}.wv"), kv_in)?;
        let lq = q.shape()[0];
        let lk = k.shape()[0];
        let mask = if causal {
            let mut m = vec![0.0; lq * lk];
            for i in 0..lq {
                for j in 0..lk {
                    if j > i {
                        m[i * lk + j] = -1e9;
                    }
                }
            }
            Some(Tensor::constant(m, &[lq, lk])?)
        } else {
            None
        };
        let mut outs = Vec::with_capacity(heads);
        let mut collected: Vec<Vec<f64>> = Vec::new();
        for h in 0..heads {
            let qh = q.slice_cols(h * dh, (h + 1) * dh)?;
            let kh = k.slice_cols(h * dh, (h + 1) * dh)?;
            let vh = v.slice_cols(h * dh, (h + 1) * dh)?;
            let mut scores = qh.matmul(&kh.transpose()?)?.scale(1.0 / (dh as f64).sqrt())?;
            if let Some(m) = &mask {
                scores = scores.add(m)?;
            }
            let att = scores.softmax()?;
            if maps.is_some() {
                collected.push(att.data().to_vec());
            }
            outs.push(att.matmul(&vh)?);
        }
        if let Some(slot) = maps {
            *slot = collected;
        }
        let refs: Vec<&Tensor> = outs.iter().collect();
        let cat = concat_cols(&refs)?;
        let out = self.linear(ctx, &format!("{name}.wo"), &cat)?;
        ctx.dropout_mask(&out)
    }

    /// One pre-norm transformer block (self-attention + FFN).
    fn encoder_block(&self, ctx: &ForwardCtx, name: &str, x: &Tensor) -> Result<Tensor> {
        let n1 = self.layer_norm(ctx, &format!("{name}.norm1"), x)?;
        let att = self.attention(ctx, &format!("{name}.self"), &n1, &n1, false, None)?;
        let x = x.add(&att)?;
        let n2 = self.layer_norm(ctx, &format!("{name}.norm2"), &x)?;
        let f = self.linear(ctx, &format!("{name}.ffn.w1"), &n2)?.relu()?;
        let f = self.linear(ctx, &format!("{name}.ffn.w2"), &f)?;
        let f = ctx.dropout_mask(&f)?;
        Ok(x.add(&f)?)
    }

    /// Hierarchical encode of a source token sequence.
    pub fn encode(&self, ctx: &ForwardCtx, input: &TokenSeq) -> Result<EncodeResult> {
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let cfg = &self.config;
        if let Some(&id) = input.ids.iter().find(|&&id| id >= cfg.src_vocab) {
            return Err(ModelError::BadToken { id, vocab: cfg.src_vocab });
        }
        let d = cfg.d_model;
        let embed = ctx.bind(&self.params, "src_embed.w")?;
        let mut h = embed_lookup(&embed, &input.ids)?;
        h = h.add(&positional_encoding(input.len(), d)?)?;
        h = ctx.dropout_mask(&h)?;

        match cfg.task {
            TaskKind::Mt => {
                for i in 0..cfg.n_src_layers {
                    h = self.encoder_block(ctx, &format!("src.{i}"), &h)?;
                }
                if cfg.upsample_rate > 1 {
                    h = h.repeat_rows(cfg.upsample_rate)?;
                    // sub-position encodings distinguish the repeats
                    h = h.add(&positional_encoding(h.shape()[0], d)?)?;
                }
                for i in 0..cfg.n_adjust_layers {
                    h = self.encoder_block(ctx, &format!("adj.{i}"), &h)?;
                }
            }
            TaskKind::StAnalog => {
                let r = cfg.downsample_rate;
                if r > 1 {
                    let t_prime = input.len().div_ceil(r);
                    // frame stacking: (T'·r, d) rows reinterpret as (T', r·d)
                    h = h.pad_rows(t_prime * r)?.reshape(&[t_prime, r * d])?;
                    h = self.linear(ctx, "down_conv", &h)?.relu()?;
                    h = h.add(&positional_encoding(t_prime, d)?)?;
                }
                for i in 0..cfg.n_src_layers {
                    h = self.encoder_block(ctx, &format!("src.{i}"), &h)?;
                }
                for i in 0..cfg.n_adjust_layers {
                    h = self.encoder_block(ctx, &format!("adj.{i}"), &h)?;
                }
            }
        }
        let h_src = h.clone();
        let src_grid_logp = self.linear(ctx, "src_ctc", &h_src)?.log_softmax()?;

        for i in 0..cfg.n_tgt_layers {
            h = self.encoder_block(ctx, &format!("tgt.{i}"), &h)?;
        }
        let h_tgt = self.layer_norm(ctx, "enc_norm", &h)?;
        let tgt_grid_logp = self.linear(ctx, "tgt_ctc", &h_tgt)?.log_softmax()?;
        let t_prime = h_tgt.shape()[0];
        debug_assert_eq!(t_prime, cfg.adjusted_len(input.len()));
        Ok(EncodeResult { h_src, h_tgt, src_grid_logp, tgt_grid_logp, t_prime })
    }

    /// Teacher-forced decoder pass over prefix tokens (no eos inside).
    /// Row l of the output is the log-distribution of the token after
    /// `prefix[..l]`; there are |prefix|+1 rows. When `maps` is given it
    /// receives per-layer, per-head cross-attention weights.
    pub fn decoder_logprobs(
        &self,
        ctx: &ForwardCtx,
        h_tgt: &Tensor,
        prefix: &[usize],
        mut maps: Option<&mut Vec<Vec<Vec<f64>>>>,
    ) -> Result<Tensor> {
        let cfg = &self.config;
        if prefix.iter().any(|&id| id >= cfg.tgt_vocab) {
            return Err(ModelError::EosInPrefix);
        }
        let d = cfg.d_model;
        let bos = cfg.tgt_vocab; // last embedding row
        let mut ids = Vec::with_capacity(prefix.len() + 1);
        ids.push(bos);
        ids.extend_from_slice(prefix);
        let embed = ctx.bind(&self.params, "tgt_embed.w")?;
        let mut x = embed_lookup(&embed, &ids)?;
        x = x.add(&positional_encoding(ids.len(), d)?)?;
        x = ctx.dropout_mask(&x)?;
        for i in 0..cfg.n_dec_layers {
            let name = format!("dec.{i}");
            let n1 = self.layer_norm(ctx, &format!("{name}.norm1"), &x)?;
            let att = self.attention(ctx, &format!("{name}.self"), &n1, &n1, true, None)?;
            x = x.add(&att)?;
            let nc = self.layer_norm(ctx, &format!("{name}.normc"), &x)?;
            let mut layer_maps = Vec::new();
            let slot = maps.as_deref_mut().map(|_| &mut layer_maps);
            let cross = self.attention(ctx, &format!("{name}.cross"), &nc, h_tgt, false, slot)?;
            if let Some(m) = maps.as_deref_mut() {
                m.push(layer_maps);
            }
            x = x.add(&cross)?;
            let n2 = self.layer_norm(ctx, &format!("{name}.norm2"), &x)?;
            let f = self.linear(ctx, &format!("{name}.ffn.w1"), &n2)?.relu()?;
            let f = self.linear(ctx, &format!("{name}.ffn.w2"), &f)?;
            let f = ctx.dropout_mask(&f)?;
            x = x.add(&f)?;
        }
        let x = self.layer_norm(ctx, "dec_norm", &x)?;
        Ok(self.linear(ctx, "dec_out", &x)?.log_softmax()?)
    }

    /// Next-token log-distribution over tgt vocab ∪ {eos} given a prefix.
    pub fn decode_step(&self, ctx: &ForwardCtx, h_tgt: &Tensor, prefix: &[usize]) -> Result<Vec<f64>> {
        let logp = self.decoder_logprobs(ctx, h_tgt, prefix, None)?;
        let v = logp.shape()[1];
        let last = logp.shape()[0] - 1;
        Ok(logp.data()[last * v..(last + 1) * v].to_vec())
    }

    /// Per-layer, per-head cross-attention maps (|y| rows each, the BOS
    /// row dropped) from a teacher-forced pass.
    pub fn cross_attention_maps(
        &self,
        ctx: &ForwardCtx,
        h_tgt: &Tensor,
        y: &[usize],
    ) -> Result<Vec<Vec<crate::metrics::AttentionMap>>> {
        let mut maps = Vec::new();
        self.decoder_logprobs(ctx, h_tgt, y, Some(&mut maps))?;
        let t = h_tgt.shape()[0];
        let rows = y.len() + 1;
        let out = maps
            .into_iter()
            .map(|layer| {
                layer
                    .into_iter()
                    .map(|w| {
                        debug_assert_eq!(w.len(), rows * t);
                        // drop the BOS query row
                        crate::metrics::AttentionMap::new(w[t..].to_vec(), rows - 1, t)
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }
}

/// Sinusoidal positional encoding, untracked constant.
pub fn positional_encoding(len: usize, d: usize) -> Result<Tensor> {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = (pos as f64 * freq).sin();
            data[pos * d + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    Ok(Tensor::constant(data, &[len, d])?)
}

// ── checkpoint container ─────────────────────────────────────────────
//
// Layout: magic "CTCATTN\x01", u32 LE config JSON length, config JSON,
// u32 LE parameter count, then per parameter: u32 name length, name
// bytes, u32 rank, u64 dims, raw f64 little-endian payload. Reload is
// bit-exact.

const MAGIC: &[u8; 8] = b"CTCATTN\x01";

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    buf.extend_from_slice(&(model.params.entries.len() as u32).to_le_bytes());
    for (name, p) in model.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &dim in &p.shape {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Cursor { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(ModelError::BadCheckpoint("bad magic".into()));
    }
    let cfg_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| ModelError::BadCheckpoint(format!("config: {e}")))?;
    let n = r.u32()? as usize;
    let mut params = ModelParams::default();
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ModelError::BadCheckpoint("non-utf8 name".into()))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let b: [u8; 8] = r.take(8)?.try_into().unwrap();
            data.push(f64::from_le_bytes(b));
        }
        params.insert(&name, shape, data);
    }
    if r.pos != buf.len() {
        return Err(ModelError::BadCheckpoint("trailing bytes".into()));
    }
    Ok(Model { config, params })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::BadCheckpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
