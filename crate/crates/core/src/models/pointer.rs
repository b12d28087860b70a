//! Pointer reader over a typed joint sequence.
//!
//! Question, object and candidate rows are projected into the model space,
//! each group gets its own learnable type embedding, and one encoder block
//! mixes the joint sequence. The first question row's output state is dotted
//! with each candidate's output state to produce pointer logits over the
//! candidate group only.

use crate::align::{AlignKind, AlignNodes, AlignmentSpec};
use crate::attention::{encoder_block_graph, EncoderBlockNodes, MultiHeadNodes};
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::models::counting::argmax_row;
use crate::models::params::{BoundParams, ParamId, ParamSet};
use crate::rng::derive_seed;
use crate::tasks::PointerInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct PointerModelConfig {
    pub input_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub kind: AlignKind,
    pub swap: bool,
}

#[derive(Debug, Clone)]
pub struct PointerModel {
    pub cfg: PointerModelConfig,
    pub params: ParamSet,
    pub input_proj: ParamId,
    pub type_emb: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_shift: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_shift: ParamId,
    pub align_w: Option<ParamId>,
    pub align_b: Option<ParamId>,
    pub ln_eps: f64,
}

impl PointerModel {
    pub fn new(cfg: PointerModelConfig, seed: u64) -> Result<Self> {
        if cfg.kind == AlignKind::Cosine {
            return Err(CoreError::Unsupported(
                "cosine alignment is not used in self attention".into(),
            ));
        }
        let d = cfg.model_dim;
        if cfg.heads == 0 || d % cfg.heads != 0 {
            return Err(CoreError::config(format!(
                "model dim {d} must be divisible by heads {}",
                cfg.heads
            )));
        }
        let mut params = ParamSet::new();
        let gauss = crate::models::scaled_gaussian;
        let input_proj = params.add("input_proj", gauss(cfg.input_dim, d, seed, 0x51));
        let type_emb = params.add("type_emb", gauss(3, d, seed, 0x52));
        let wq = params.add("wq", gauss(d, d, seed, 0x53));
        let wk = params.add("wk", gauss(d, d, seed, 0x54));
        let wv = params.add("wv", gauss(d, d, seed, 0x55));
        let wo = params.add("wo", gauss(d, d, seed, 0x56));
        let w1 = params.add("ffn_w1", gauss(d, cfg.ff_dim, seed, 0x57));
        let w2 = params.add("ffn_w2", gauss(cfg.ff_dim, d, seed, 0x58));
        let ln1_gain = params.add("ln1_gain", Matrix::full(1, d, 1.0));
        let ln1_shift = params.add("ln1_shift", Matrix::zeros(1, d));
        let ln2_gain = params.add("ln2_gain", Matrix::full(1, d, 1.0));
        let ln2_shift = params.add("ln2_shift", Matrix::zeros(1, d));
        // alignment transform lives in per-head space
        let dh = d / cfg.heads;
        let spec = AlignmentSpec::init(cfg.kind, cfg.swap, dh, derive_seed(seed, 0x59))?;
        let align_w = spec.w.map(|w| params.add("align_w", w));
        let align_b = spec.b.map(|b| params.add("align_b", b));
        Ok(PointerModel {
            cfg,
            params,
            input_proj,
            type_emb,
            wq,
            wk,
            wv,
            wo,
            w1,
            w2,
            ln1_gain,
            ln1_shift,
            ln2_gain,
            ln2_shift,
            align_w,
            align_b,
            ln_eps: 1e-5,
        })
    }

    pub fn align_nodes(&self, bound: &BoundParams) -> AlignNodes {
        AlignNodes {
            kind: self.cfg.kind,
            swap: self.cfg.swap,
            w: self.align_w.map(|id| bound.node(id)),
            b: self.align_b.map(|id| bound.node(id)),
        }
    }

    fn encoder_nodes(&self, bound: &BoundParams) -> EncoderBlockNodes {
        EncoderBlockNodes {
            attn: MultiHeadNodes {
                heads: self.cfg.heads,
                wq: bound.node(self.wq),
                wk: bound.node(self.wk),
                wv: bound.node(self.wv),
                wo: bound.node(self.wo),
            },
            w1: bound.node(self.w1),
            w2: bound.node(self.w2),
            ln1_gain: bound.node(self.ln1_gain),
            ln1_shift: bound.node(self.ln1_shift),
            ln2_gain: bound.node(self.ln2_gain),
            ln2_shift: bound.node(self.ln2_shift),
            eps: self.ln_eps,
        }
    }

    /// Pointer logits (`1 x ocr`) for one instance.
    pub fn logits_node(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        inst: &PointerInstance,
    ) -> Result<NodeId> {
        let proj = bound.node(self.input_proj);
        let type_emb = bound.node(self.type_emb);
        let mut segments = Vec::with_capacity(3);
        for (group, m) in [(0, &inst.question), (1, &inst.objects), (2, &inst.ocr)] {
            let raw = g.constant(m.clone());
            let projected = g.matmul(raw, proj)?;
            let tag = g.slice_rows(type_emb, group, group + 1)?;
            let tag_b = g.broadcast_rows(tag, m.rows())?;
            segments.push(g.add(projected, tag_b)?);
        }
        let seq = g.concat_rows(&segments)?;
        let align = self.align_nodes(bound);
        let enc = self.encoder_nodes(bound);
        let hidden = encoder_block_graph(g, enc, align, seq)?;
        let m = inst.question.rows();
        let n = inst.objects.rows();
        let o = inst.ocr.rows();
        let anchor = g.slice_rows(hidden, 0, 1)?;
        let candidates = g.slice_rows(hidden, m + n, m + n + o)?;
        let cand_t = g.transpose(candidates);
        g.matmul(anchor, cand_t)
    }

    /// Distribution over candidate indices, shape `1 x ocr`.
    pub fn forward(&self, inst: &PointerInstance) -> Result<Matrix> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let logits = self.logits_node(&mut g, &bound, inst)?;
        Ok(g.value(logits).row_softmax())
    }

    pub fn predict(&self, inst: &PointerInstance) -> Result<usize> {
        Ok(argmax_row(&self.forward(inst)?))
    }

    /// Mean cross-entropy over a batch, as a graph node.
    pub fn batch_loss_node(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        batch: &[&PointerInstance],
    ) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(CoreError::contract("empty batch"));
        }
        let mut acc: Option<NodeId> = None;
        for inst in batch {
            let logits = self.logits_node(g, bound, inst)?;
            let ce = g.cross_entropy(logits, inst.answer_index)?;
            acc = Some(match acc {
                Some(a) => g.add(a, ce)?,
                None => ce,
            });
        }
        Ok(g.scale(acc.expect("non-empty batch"), 1.0 / batch.len() as f64))
    }
}
