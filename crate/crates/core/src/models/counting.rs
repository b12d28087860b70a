//! Counting reader.
//!
//! A learnable control state (projected from the query encoding) scores each
//! object row through the read unit; the attended context plus the summed
//! sigmoid of the raw scores feed a linear head over count classes. The
//! sigmoid-sum channel is what lets the head see "how many keys scored
//! high", which a softmax-normalized context alone cannot carry.

use crate::align::{AlignKind, AlignNodes};
use crate::attention::mac_score_aligned_graph;
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::models::params::{BoundParams, ParamId, ParamSet};
use crate::rng::derive_seed;
use crate::tasks::{CountingInstance, ATTR_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct CountingModelConfig {
    /// Count classes (max count + 1).
    pub classes: usize,
    pub kind: AlignKind,
    pub swap: bool,
}

#[derive(Debug, Clone)]
pub struct CountingModel {
    pub cfg: CountingModelConfig,
    pub params: ParamSet,
    pub control_proj: ParamId,
    pub wp: ParamId,
    pub bp: ParamId,
    pub head: ParamId,
    pub align_w: Option<ParamId>,
    pub align_b: Option<ParamId>,
}

impl CountingModel {
    pub fn new(cfg: CountingModelConfig, seed: u64) -> Result<Self> {
        if cfg.kind == AlignKind::Cosine {
            return Err(CoreError::Unsupported(
                "cosine alignment has no elementwise read-unit form".into(),
            ));
        }
        if cfg.classes < 2 {
            return Err(CoreError::config("need at least two count classes"));
        }
        let d = ATTR_DIM;
        let mut params = ParamSet::new();
        let control_proj = params.add(
            "control_proj",
            crate::models::scaled_gaussian(d, d, seed, 0x41),
        );
        let wp = params.add("read_map", crate::models::scaled_gaussian(1, d, seed, 0x42));
        let bp = params.add("read_offset", Matrix::zeros(1, 1));
        let head = params.add(
            "count_head",
            crate::models::scaled_gaussian(d + 1, cfg.classes, seed, 0x43),
        );
        let spec =
            crate::align::AlignmentSpec::init(cfg.kind, cfg.swap, d, derive_seed(seed, 0x44))?;
        let align_w = spec.w.map(|w| params.add("align_w", w));
        let align_b = spec.b.map(|b| params.add("align_b", b));
        Ok(CountingModel {
            cfg,
            params,
            control_proj,
            wp,
            bp,
            head,
            align_w,
            align_b,
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

    /// Logits node (`1 x classes`) for one scene.
    pub fn logits_node(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        inst: &CountingInstance,
    ) -> Result<NodeId> {
        let query = g.constant(inst.query.clone());
        let objects = g.constant(inst.objects.clone());
        let e = g.matmul(query, bound.node(self.control_proj))?;
        let align = self.align_nodes(bound);
        let scores = mac_score_aligned_graph(
            g,
            align,
            e,
            objects,
            bound.node(self.wp),
            bound.node(self.bp),
        )?;
        let weights = g.row_softmax(scores);
        let context = g.matmul(weights, objects)?;
        let mass = g.sum_sigmoid(scores)?;
        let features = g.concat_cols(&[context, mass])?;
        g.matmul(features, bound.node(self.head))
    }

    /// Count-class distribution (softmax over logits), shape `1 x classes`.
    pub fn forward(&self, inst: &CountingInstance) -> Result<Matrix> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let logits = self.logits_node(&mut g, &bound, inst)?;
        Ok(g.value(logits).row_softmax())
    }

    /// Arg-max predicted count.
    pub fn predict(&self, inst: &CountingInstance) -> Result<usize> {
        let dist = self.forward(inst)?;
        Ok(argmax_row(&dist))
    }

    /// Mean cross-entropy over a batch, as a graph node.
    pub fn batch_loss_node(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        batch: &[&CountingInstance],
    ) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(CoreError::contract("empty batch"));
        }
        let mut acc: Option<NodeId> = None;
        for inst in batch {
            if inst.count >= self.cfg.classes {
                return Err(CoreError::contract(format!(
                    "count {} exceeds head classes {}",
                    inst.count, self.cfg.classes
                )));
            }
            let logits = self.logits_node(g, bound, inst)?;
            let ce = g.cross_entropy(logits, inst.count)?;
            acc = Some(match acc {
                Some(a) => g.add(a, ce)?,
                None => ce,
            });
        }
        Ok(g.scale(acc.expect("non-empty batch"), 1.0 / batch.len() as f64))
    }
}

pub(crate) fn argmax_row(m: &Matrix) -> usize {
    let row = m.row(0);
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
