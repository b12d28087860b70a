//! Token/region matcher.
//!
//! Both modalities are projected into a shared space; the query side attends
//! over the key side with the configured alignment, each projected token is
//! compared to its attended context by cosine, and the per-token cosines are
//! average-pooled into one scalar similarity per (tokens, regions) pair.
//! Training uses a hardest-in-batch triplet hinge in both retrieval
//! directions.

use crate::align::{AlignKind, AlignNodes, AlignmentSpec};
use crate::attention::cross_attend_graph;
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::models::params::{BoundParams, ParamId, ParamSet};
use crate::rng::derive_seed;
use crate::tasks::RetrievalInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalModelConfig {
    pub input_dim: usize,
    pub shared_dim: usize,
    pub kind: AlignKind,
    pub swap: bool,
}

#[derive(Debug, Clone)]
pub struct RetrievalModel {
    pub cfg: RetrievalModelConfig,
    pub params: ParamSet,
    pub token_proj: ParamId,
    pub region_proj: ParamId,
    pub align_w: Option<ParamId>,
    pub align_b: Option<ParamId>,
}

impl RetrievalModel {
    pub fn new(cfg: RetrievalModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let token_proj = params.add(
            "token_proj",
            crate::models::scaled_gaussian(cfg.input_dim, cfg.shared_dim, seed, 0x31),
        );
        let region_proj = params.add(
            "region_proj",
            crate::models::scaled_gaussian(cfg.input_dim, cfg.shared_dim, seed, 0x32),
        );
        let spec = AlignmentSpec::init(cfg.kind, cfg.swap, cfg.shared_dim, derive_seed(seed, 0x33))?;
        let align_w = spec.w.map(|w| params.add("align_w", w));
        let align_b = spec.b.map(|b| params.add("align_b", b));
        Ok(RetrievalModel {
            cfg,
            params,
            token_proj,
            region_proj,
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

    /// Similarity subgraph over already-projected token/region nodes.
    pub fn similarity_node(
        &self,
        g: &mut Graph,
        align: AlignNodes,
        proj_tokens: NodeId,
        proj_regions: NodeId,
    ) -> Result<NodeId> {
        let attn = cross_attend_graph(g, align, proj_tokens, proj_regions)?;
        let cos = g.cosine_sim(proj_tokens, attn.contexts)?;
        let m = g.value(proj_tokens).rows();
        let eye = g.constant(Matrix::identity(m));
        let diag = g.hadamard(cos, eye)?;
        let total = g.sum_all(diag);
        Ok(g.scale(total, 1.0 / m as f64))
    }

    /// Scalar similarity between a token set and a region set.
    pub fn similarity(&self, tokens: &Matrix, regions: &Matrix) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let align = self.align_nodes(&bound);
        let t = g.constant(tokens.clone());
        let r = g.constant(regions.clone());
        let pt = g.matmul(t, bound.node(self.token_proj))?;
        let pr = g.matmul(r, bound.node(self.region_proj))?;
        let s = self.similarity_node(&mut g, align, pt, pr)?;
        g.value(s).scalar()
    }

    /// Full pairwise similarity matrix over a pool of instances:
    /// entry `(i, j)` compares tokens of instance i with regions of
    /// instance j.
    pub fn similarity_matrix(&self, pool: &[RetrievalInstance]) -> Result<Matrix> {
        let n = pool.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, self.similarity(&pool[i].tokens, &pool[j].regions)?);
            }
        }
        Ok(out)
    }

    /// Hardest-negative triplet loss over a matched batch, built in-graph so
    /// it can be differentiated. Returns the scalar loss node.
    pub fn batch_loss_node(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        batch: &[&RetrievalInstance],
        margin: f64,
    ) -> Result<NodeId> {
        let b = batch.len();
        if b < 2 {
            return Err(CoreError::contract(
                "triplet loss needs at least two matched pairs",
            ));
        }
        let align = self.align_nodes(bound);
        let mut proj_tokens = Vec::with_capacity(b);
        let mut proj_regions = Vec::with_capacity(b);
        for inst in batch {
            let t = g.constant(inst.tokens.clone());
            let r = g.constant(inst.regions.clone());
            proj_tokens.push(g.matmul(t, bound.node(self.token_proj))?);
            proj_regions.push(g.matmul(r, bound.node(self.region_proj))?);
        }
        let mut sims = vec![vec![NodeId(0); b]; b];
        for i in 0..b {
            for j in 0..b {
                sims[i][j] = self.similarity_node(g, align, proj_tokens[i], proj_regions[j])?;
            }
        }
        // hardest negative per direction, chosen by current value; ties go to
        // the lowest index so training is deterministic
        let hardest = |g: &Graph, idx: &dyn Fn(usize) -> NodeId, skip: usize| -> NodeId {
            let mut best: Option<(f64, NodeId)> = None;
            for j in 0..b {
                if j == skip {
                    continue;
                }
                let v = g.value(idx(j)).get(0, 0);
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, idx(j)));
                }
            }
            best.expect("batch has at least one negative").1
        };
        let margin_node = g.constant(Matrix::full(1, 1, margin));
        let mut terms = Vec::with_capacity(2 * b);
        for i in 0..b {
            for neg in [
                hardest(g, &|j| sims[i][j], i), // mismatched regions for tokens i
                hardest(g, &|j| sims[j][i], i), // mismatched tokens for regions i
            ] {
                let gap = g.sub(neg, sims[i][i])?;
                let raised = g.add(gap, margin_node)?;
                terms.push(g.relu(raised));
            }
        }
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = g.add(acc, t)?;
        }
        Ok(acc)
    }
}

/// Hardest-negative triplet loss from a precomputed pairwise similarity
/// matrix (entry `(i, j)` = query i against candidate j, diagonal matched):
/// for every pair, `max(0, margin - s_pos + s_neg)` with the strongest
/// negative in each direction, summed over pairs and directions.
pub fn hardest_triplet_loss(sims: &Matrix, margin: f64) -> Result<f64> {
    if sims.rows() != sims.cols() {
        return Err(CoreError::contract("similarity matrix must be square"));
    }
    let b = sims.rows();
    if b < 2 {
        return Err(CoreError::contract(
            "triplet loss needs at least two matched pairs",
        ));
    }
    let mut total = 0.0;
    for i in 0..b {
        let pos = sims.get(i, i);
        let neg_row = (0..b)
            .filter(|&j| j != i)
            .map(|j| sims.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        let neg_col = (0..b)
            .filter(|&j| j != i)
            .map(|j| sims.get(j, i))
            .fold(f64::NEG_INFINITY, f64::max);
        total += (margin - pos + neg_row).max(0.0);
        total += (margin - pos + neg_col).max(0.0);
    }
    Ok(total)
}
