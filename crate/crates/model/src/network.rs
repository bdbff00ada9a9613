//! Fixation-query transformer decoder and the Gaussian output heads.
//!
//! `F` learned queries run through a stack of post-norm decoder layers:
//! self-attention among the queries, cross-attention into the patch memory
//! (embedding plus fixed 2D positional encoding), and a GELU feed-forward
//! block, each wrapped in a residual connection and layer normalization.
//! Seven row-wise MLPs then read every decoder row: six regress the mean
//! and log-variance of x, y and duration, the seventh is a two-way softmax
//! whose second class is the probability that the row is padding.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use gazebench_core::FixationQuadSequence;

use crate::container::{Container, Tensor};
use crate::embedding::{positional_encoding_2d, MultimodalEmbedding};
use crate::loss::{case_loss, LossBreakdown, Noise};
use crate::tape::{Gradients, Tape, Var};
use crate::{GazeModelConfig, ModelError, Result};

/// Optimizer parameter groups, trained with separate learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Decoder layers: attention, feed-forward and normalization weights.
    Decoder,
    /// Fixation queries and the seven output heads.
    Heads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Array2<f64>,
    pub group: ParamGroup,
}

/// Output of the decoder stack: one `d`-wide row per fixation query.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationDecoderOutput {
    pub rows: Array2<f64>,
}

/// Per-row Gaussian parameters and padding probability, each of length `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHeadOutput {
    pub mean_x: Vec<f64>,
    pub logvar_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub logvar_y: Vec<f64>,
    /// Duration in seconds.
    pub mean_t: Vec<f64>,
    pub logvar_t: Vec<f64>,
    pub pad_prob: Vec<f64>,
}

impl GaussianHeadOutput {
    pub fn len(&self) -> usize {
        self.pad_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pad_prob.is_empty()
    }
}

pub const HEAD_NAMES: [&str; 7] = [
    "mean_x", "logvar_x", "mean_y", "logvar_y", "mean_t", "logvar_t", "validity",
];

#[derive(Debug, Clone, Copy)]
struct AttentionIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerIdx {
    self_attn: AttentionIdx,
    norm1: (usize, usize),
    cross_attn: AttentionIdx,
    norm2: (usize, usize),
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    norm3: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct HeadIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    queries: usize,
    layers: Vec<LayerIdx>,
    heads: [HeadIdx; 7],
}

#[derive(Debug, Clone)]
pub struct GazeModel {
    cfg: GazeModelConfig,
    params: Vec<Parameter>,
    layout: Layout,
}

struct Builder {
    params: Vec<Parameter>,
    rng: ChaCha8Rng,
}

enum Init {
    Xavier,
    Zeros,
    Ones,
    Normal,
}

impl Builder {
    fn add(&mut self, name: String, shape: (usize, usize), group: ParamGroup, init: Init) -> usize {
        let value = match init {
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
            Init::Xavier => {
                let bound = (6.0 / (shape.0 + shape.1) as f64).sqrt();
                Array2::from_shape_fn(shape, |_| self.rng.random_range(-bound..bound))
            }
            Init::Normal => Array2::from_shape_fn(shape, |_| self.rng.sample(StandardNormal)),
        };
        self.params.push(Parameter { name, value, group });
        self.params.len() - 1
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIdx {
        let g = ParamGroup::Decoder;
        let pair = |b: &mut Self, name: &str| {
            (
                b.add(format!("{prefix}.w{name}"), (d, d), g, Init::Xavier),
                b.add(format!("{prefix}.b{name}"), (1, d), g, Init::Zeros),
            )
        };
        let (wq, bq) = pair(self, "q");
        let (wk, bk) = pair(self, "k");
        let (wv, bv) = pair(self, "v");
        let (wo, bo) = pair(self, "o");
        AttentionIdx { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> (usize, usize) {
        (
            self.add(format!("{prefix}.gamma"), (1, d), ParamGroup::Decoder, Init::Ones),
            self.add(format!("{prefix}.beta"), (1, d), ParamGroup::Decoder, Init::Zeros),
        )
    }
}

impl GazeModel {
    /// Randomly initialized model; deterministic in `cfg.seed`.
    pub fn new(cfg: GazeModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let mut b = Builder {
            params: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let queries = b.add("queries".into(), (cfg.max_fixations, d), ParamGroup::Heads, Init::Normal);
        let layers = (0..cfg.n_decoder_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                let self_attn = b.attention(&format!("{p}.self_attn"), d);
                let norm1 = b.norm(&format!("{p}.norm1"), d);
                let cross_attn = b.attention(&format!("{p}.cross_attn"), d);
                let norm2 = b.norm(&format!("{p}.norm2"), d);
                let g = ParamGroup::Decoder;
                let w1 = b.add(format!("{p}.ffn.w1"), (d, cfg.mlp_hidden), g, Init::Xavier);
                let b1 = b.add(format!("{p}.ffn.b1"), (1, cfg.mlp_hidden), g, Init::Zeros);
                let w2 = b.add(format!("{p}.ffn.w2"), (cfg.mlp_hidden, d), g, Init::Xavier);
                let b2 = b.add(format!("{p}.ffn.b2"), (1, d), g, Init::Zeros);
                let norm3 = b.norm(&format!("{p}.norm3"), d);
                LayerIdx { self_attn, norm1, cross_attn, norm2, w1, b1, w2, b2, norm3 }
            })
            .collect();
        let heads = HEAD_NAMES.map(|name| {
            let out = if name == "validity" { 2 } else { 1 };
            let g = ParamGroup::Heads;
            HeadIdx {
                w1: b.add(format!("head.{name}.w1"), (d, cfg.head_hidden), g, Init::Xavier),
                b1: b.add(format!("head.{name}.b1"), (1, cfg.head_hidden), g, Init::Zeros),
                w2: b.add(format!("head.{name}.w2"), (cfg.head_hidden, out), g, Init::Xavier),
                b2: b.add(format!("head.{name}.b2"), (1, out), g, Init::Zeros),
            }
        });
        Ok(Self {
            cfg,
            params: b.params,
            layout: Layout { queries, layers, heads },
        })
    }

    pub fn config(&self) -> &GazeModelConfig {
        &self.cfg
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value
                .iter_mut()
                .zip(&flat[offset..offset + n])
                .for_each(|(dst, &src)| *dst = src);
            offset += n;
        }
        Ok(())
    }

    fn load_params(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }

    fn attention(&self, tape: &mut Tape, pv: &[Var], idx: &AttentionIdx, query: Var, memory: Var) -> Var {
        let q = Self::linear(tape, query, pv[idx.wq], pv[idx.bq]);
        let k = Self::linear(tape, memory, pv[idx.wk], pv[idx.bk]);
        let v = Self::linear(tape, memory, pv[idx.wv], pv[idx.bv]);
        let head_dim = self.cfg.d_model / self.cfg.n_heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let outputs: Vec<Var> = (0..self.cfg.n_heads)
            .map(|h| {
                let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
                let qh = tape.slice_cols(q, lo, hi);
                let kh = tape.slice_cols(k, lo, hi);
                let vh = tape.slice_cols(v, lo, hi);
                let scores = tape.matmul_t(qh, kh);
                let scores = tape.scale(scores, scale);
                let weights = tape.softmax_rows(scores);
                tape.matmul(weights, vh)
            })
            .collect();
        let merged = if outputs.len() == 1 {
            outputs[0]
        } else {
            tape.concat_cols(&outputs)
        };
        Self::linear(tape, merged, pv[idx.wo], pv[idx.bo])
    }

    fn memory(&self, tape: &mut Tape, m: &MultimodalEmbedding) -> Result<Var> {
        if m.width() != self.cfg.d_model {
            return Err(ModelError::Shape(format!(
                "embedding width {} does not match model width {}",
                m.width(),
                self.cfg.d_model
            )));
        }
        let patches = if self.cfg.positional_encoding {
            m.patches() + &positional_encoding_2d(m.grid(), self.cfg.d_model)?
        } else {
            m.patches().clone()
        };
        Ok(tape.leaf(patches))
    }

    fn decoder_on_tape(&self, tape: &mut Tape, pv: &[Var], memory: Var) -> Var {
        let mut x = pv[self.layout.queries];
        for layer in &self.layout.layers {
            let sa = self.attention(tape, pv, &layer.self_attn, x, x);
            let res = tape.add(x, sa);
            x = tape.layer_norm(res, pv[layer.norm1.0], pv[layer.norm1.1]);

            let ca = self.attention(tape, pv, &layer.cross_attn, x, memory);
            let res = tape.add(x, ca);
            x = tape.layer_norm(res, pv[layer.norm2.0], pv[layer.norm2.1]);

            let h = Self::linear(tape, x, pv[layer.w1], pv[layer.b1]);
            let h = tape.gelu(h);
            let ff = Self::linear(tape, h, pv[layer.w2], pv[layer.b2]);
            let res = tape.add(x, ff);
            x = tape.layer_norm(res, pv[layer.norm3.0], pv[layer.norm3.1]);
        }
        x
    }

    /// Returns the six regression columns and the softmax over validity logits.
    fn heads_on_tape(&self, tape: &mut Tape, pv: &[Var], z: Var) -> [Var; 7] {
        self.layout.heads.map(|h| {
            let hidden = Self::linear(tape, z, pv[h.w1], pv[h.b1]);
            let hidden = tape.gelu(hidden);
            Self::linear(tape, hidden, pv[h.w2], pv[h.b2])
        })
    }

    fn read_heads(tape: &Tape, heads: &[Var; 7], probs: Var) -> GaussianHeadOutput {
        let col = |v: Var| tape.value(v).column(0).to_vec();
        GaussianHeadOutput {
            mean_x: col(heads[0]),
            logvar_x: col(heads[1]),
            mean_y: col(heads[2]),
            logvar_y: col(heads[3]),
            mean_t: col(heads[4]),
            logvar_t: col(heads[5]),
            pad_prob: tape.value(probs).column(1).to_vec(),
        }
    }

    pub fn decoder_forward(&self, m: &MultimodalEmbedding) -> Result<FixationDecoderOutput> {
        let mut tape = Tape::new();
        let pv = self.load_params(&mut tape);
        let memory = self.memory(&mut tape, m)?;
        let z = self.decoder_on_tape(&mut tape, &pv, memory);
        Ok(FixationDecoderOutput {
            rows: tape.value(z).clone(),
        })
    }

    pub fn heads_forward(&self, z: &FixationDecoderOutput) -> Result<GaussianHeadOutput> {
        if z.rows.ncols() != self.cfg.d_model {
            return Err(ModelError::Shape(format!(
                "decoder output width {} does not match model width {}",
                z.rows.ncols(),
                self.cfg.d_model
            )));
        }
        let mut tape = Tape::new();
        let pv = self.load_params(&mut tape);
        let zv = tape.leaf(z.rows.clone());
        let heads = self.heads_on_tape(&mut tape, &pv, zv);
        let probs = tape.softmax_rows(heads[6]);
        Ok(Self::read_heads(&tape, &heads, probs))
    }

    pub fn forward(&self, m: &MultimodalEmbedding) -> Result<GaussianHeadOutput> {
        Ok(self.forward_pass(m)?.output)
    }

    fn forward_pass(&self, m: &MultimodalEmbedding) -> Result<ForwardPass> {
        let mut tape = Tape::new();
        let params = self.load_params(&mut tape);
        let memory = self.memory(&mut tape, m)?;
        let z = self.decoder_on_tape(&mut tape, &params, memory);
        let heads = self.heads_on_tape(&mut tape, &params, z);
        let probs = tape.softmax_rows(heads[6]);
        let output = Self::read_heads(&tape, &heads, probs);
        Ok(ForwardPass { tape, params, heads, probs, output })
    }

    /// Loss of one case and the gradient of `weight * loss` for every
    /// parameter tensor.
    pub fn case_gradient(
        &self,
        m: &MultimodalEmbedding,
        target: &FixationQuadSequence,
        noise: &Noise,
        weight: f64,
    ) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
        if target.max_len() != self.cfg.max_fixations {
            return Err(ModelError::Shape(format!(
                "target has {} rows, model predicts {}",
                target.max_len(),
                self.cfg.max_fixations
            )));
        }
        let pass = self.forward_pass(m)?;
        let (loss, g) = case_loss(&pass.output, noise, target)?;
        let column = |v: &[f64]| Array2::from_shape_fn((v.len(), 1), |(i, _)| weight * v[i]);
        let validity = Array2::from_shape_fn((g.pad_prob.len(), 2), |(i, j)| {
            if j == 1 {
                weight * g.pad_prob[i]
            } else {
                0.0
            }
        });
        let seeds = vec![
            (pass.heads[0], column(&g.mean_x)),
            (pass.heads[1], column(&g.logvar_x)),
            (pass.heads[2], column(&g.mean_y)),
            (pass.heads[3], column(&g.logvar_y)),
            (pass.heads[4], column(&g.mean_t)),
            (pass.heads[5], column(&g.logvar_t)),
            (pass.probs, validity),
        ];
        let grads = pass.tape.backward(seeds);
        Ok((loss, self.collect(&grads, &pass.params)))
    }

    fn collect(&self, grads: &Gradients, vars: &[Var]) -> Vec<Array2<f64>> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, &v)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(p.value.raw_dim()))
            })
            .collect()
    }

    /// Mean loss over a batch and the gradient of that mean.
    ///
    /// Per-case work runs in parallel; gradients are summed in case order so
    /// the result does not depend on scheduling.
    pub fn batch_gradient(
        &self,
        batch: &[(&MultimodalEmbedding, &FixationQuadSequence, &Noise)],
    ) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
        use rayon::prelude::*;
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let per_case = batch
            .par_iter()
            .map(|(m, t, n)| self.case_gradient(m, t, n, weight))
            .collect::<Vec<_>>();
        let mut total = LossBreakdown::default();
        let mut sum: Option<Vec<Array2<f64>>> = None;
        for result in per_case {
            let (loss, grads) = result?;
            total.accumulate(&loss, weight);
            match &mut sum {
                None => sum = Some(grads),
                Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| *a += g),
            }
        }
        Ok((total, sum.expect("non-empty batch")))
    }

    /// Mean loss over a batch without gradients.
    pub fn batch_loss(
        &self,
        batch: &[(&MultimodalEmbedding, &FixationQuadSequence, &Noise)],
    ) -> Result<LossBreakdown> {
        use rayon::prelude::*;
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let per_case = batch
            .par_iter()
            .map(|(m, t, n)| -> Result<LossBreakdown> {
                let out = self.forward(m)?;
                Ok(case_loss(&out, n, t)?.0)
            })
            .collect::<Vec<_>>();
        let mut total = LossBreakdown::default();
        for r in per_case {
            total.accumulate(&r?, weight);
        }
        Ok(total)
    }

    pub fn to_container(&self) -> Container {
        let header = serde_json::json!({
            "kind": MODEL_KIND,
            "config": self.cfg,
        });
        let tensors = self
            .params
            .iter()
            .map(|p| Tensor::from_array(&p.name, &p.value))
            .collect();
        Container { header, tensors }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.header.get("kind").and_then(|k| k.as_str()) != Some(MODEL_KIND) {
            return Err(ModelError::Format("not a gaze-model container".into()));
        }
        let cfg: GazeModelConfig = serde_json::from_value(c.header["config"].clone())
            .map_err(|e| ModelError::Format(format!("model config: {e}")))?;
        let mut model = Self::new(cfg)?;
        for p in &mut model.params {
            let t = c
                .tensor(&p.name)
                .ok_or_else(|| ModelError::Format(format!("missing tensor '{}'", p.name)))?;
            let value = t.to_array()?;
            if value.raw_dim() != p.value.raw_dim() {
                return Err(ModelError::Shape(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    p.name,
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_container().write_file(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_container(&Container::read_file(path)?)
    }
}

const MODEL_KIND: &str = "gaze-model";

struct ForwardPass {
    tape: Tape,
    params: Vec<Var>,
    heads: [Var; 7],
    probs: Var,
    output: GaussianHeadOutput,
}
