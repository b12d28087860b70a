//! Attention mechanisms built on the alignment score functions.
//!
//! * [`cross_attend`]: score -> row softmax -> convex combination of keys.
//! * [`mac_score`]: read-unit scoring `a_y = Wp . (e (*) K_y) + bp`, the
//!   scalar-projection form used by compositional-reasoning read units, plus
//!   a generalized variant where the elementwise similarity vector follows
//!   the chosen alignment kind.
//! * [`self_attend`] / [`encoder_block`]: multi-head self attention over a
//!   joint sequence and a post-norm residual encoder block.
//!
//! Every mechanism has a graph-building form (used for training and gradient
//! checks) and a plain eager wrapper that evaluates through a throwaway
//! graph, so there is exactly one composition of primitives per mechanism.

use crate::align::{bind_alignment, score_graph, AlignKind, AlignNodes, AlignmentSpec};
use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

/// Raw scores, normalized weights and context vectors for one query/key
/// pairing. `weights` is the row softmax of `scores`; `contexts` is
/// `weights x K`.
#[derive(Debug, Clone)]
pub struct CrossAttentionOutput {
    pub scores: Matrix,
    pub weights: Matrix,
    pub contexts: Matrix,
}

/// Graph node handles for the three cross-attention stages.
#[derive(Debug, Clone, Copy)]
pub struct CrossAttentionNodes {
    pub scores: NodeId,
    pub weights: NodeId,
    pub contexts: NodeId,
}

pub fn cross_attend_graph(
    g: &mut Graph,
    a: AlignNodes,
    q: NodeId,
    k: NodeId,
) -> Result<CrossAttentionNodes> {
    let scores = score_graph(g, a, q, k)?;
    let weights = g.row_softmax(scores);
    let contexts = g.matmul(weights, k)?;
    Ok(CrossAttentionNodes {
        scores,
        weights,
        contexts,
    })
}

/// Attend `q` over `k` (values are the keys themselves).
pub fn cross_attend(spec: &AlignmentSpec, q: &Matrix, k: &Matrix) -> Result<CrossAttentionOutput> {
    let mut g = Graph::new();
    let a = bind_alignment(&mut g, spec);
    let qn = g.constant(q.clone());
    let kn = g.constant(k.clone());
    let nodes = cross_attend_graph(&mut g, a, qn, kn)?;
    Ok(CrossAttentionOutput {
        scores: g.value(nodes.scores).clone(),
        weights: g.value(nodes.weights).clone(),
        contexts: g.value(nodes.contexts).clone(),
    })
}

/// Learnable scalar projection of the read unit: a `1 x d` row map and a
/// scalar offset.
#[derive(Debug, Clone)]
pub struct MacScoreParams {
    pub wp: Matrix,
    pub bp: f64,
}

impl MacScoreParams {
    pub fn new(wp: Matrix, bp: f64) -> Result<Self> {
        if wp.rows() != 1 {
            return Err(CoreError::contract("read-unit row map must be 1 x d"));
        }
        if !bp.is_finite() {
            return Err(CoreError::NonFinite("read-unit offset"));
        }
        Ok(MacScoreParams { wp, bp })
    }

    pub fn init(d: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(derive_seed(seed, 0x77));
        let std = 1.0 / (d as f64).sqrt();
        MacScoreParams {
            wp: Matrix::from_computed(
                1,
                d,
                rng.gaussian_vec(d).into_iter().map(|v| v * std).collect(),
            ),
            bp: 0.0,
        }
    }
}

fn check_control_row(e: &Matrix) -> Result<()> {
    if e.rows() != 1 {
        return Err(CoreError::contract(format!(
            "control state must be a single row, got {} rows",
            e.rows()
        )));
    }
    Ok(())
}

/// Read-unit scores with the elementwise-product similarity:
/// `a_y = wp . (e (*) K_y) + bp`, one score per key row, shape `1 x n`.
pub fn mac_score_graph(
    g: &mut Graph,
    e: NodeId,
    k: NodeId,
    wp: NodeId,
    bp: NodeId,
) -> Result<NodeId> {
    check_control_row(g.value(e))?;
    let sim = elementwise_sim_graph(
        g,
        AlignNodes {
            kind: AlignKind::Dot,
            swap: false,
            w: None,
            b: None,
        },
        e,
        k,
    )?;
    project_sim_rows(g, sim, wp, bp)
}

/// Read-unit scores where the d-dimensional similarity vector follows the
/// alignment kind: the transform (and bias) of the general family is applied
/// to one side before the elementwise product, and the activated kind passes
/// the vector through ReLU. Cosine has no elementwise form and is rejected.
pub fn mac_score_aligned_graph(
    g: &mut Graph,
    a: AlignNodes,
    e: NodeId,
    k: NodeId,
    wp: NodeId,
    bp: NodeId,
) -> Result<NodeId> {
    check_control_row(g.value(e))?;
    let sim = elementwise_sim_graph(g, a, e, k)?;
    project_sim_rows(g, sim, wp, bp)
}

/// `n x d` matrix of per-key similarity vectors between a control row and
/// each key row.
fn elementwise_sim_graph(g: &mut Graph, a: AlignNodes, e: NodeId, k: NodeId) -> Result<NodeId> {
    let d = g.value(e).cols();
    if g.value(k).cols() != d {
        return Err(CoreError::ShapeMismatch {
            op: "read-unit similarity",
            left_rows: 1,
            left_cols: d,
            right_rows: g.value(k).rows(),
            right_cols: g.value(k).cols(),
        });
    }
    let n = g.value(k).rows();
    match a.kind {
        AlignKind::Dot | AlignKind::ScaledDot => {
            let eb = g.broadcast_rows(e, n)?;
            let prod = g.hadamard(eb, k)?;
            Ok(if a.kind == AlignKind::ScaledDot {
                g.scale(prod, 1.0 / (d as f64).sqrt())
            } else {
                prod
            })
        }
        AlignKind::General | AlignKind::BiasedGeneral | AlignKind::ActivatedGeneral => {
            let w = a
                .w
                .ok_or_else(|| CoreError::contract("missing alignment transform node"))?;
            let wt = g.transpose(w);
            let mut sim = if a.swap {
                // transform the control state: K_y (*) (W e + b)
                let mut ew = g.matmul(e, wt)?; // 1 x d
                if a.kind.has_bias() {
                    let b = a
                        .b
                        .ok_or_else(|| CoreError::contract("missing alignment bias node"))?;
                    ew = g.add(ew, b)?;
                }
                let ewb = g.broadcast_rows(ew, n)?;
                g.hadamard(ewb, k)?
            } else {
                // transform the keys: e (*) (W K_y + b)
                let mut kw = g.matmul(k, wt)?; // n x d
                if a.kind.has_bias() {
                    let b = a
                        .b
                        .ok_or_else(|| CoreError::contract("missing alignment bias node"))?;
                    let bb = g.broadcast_rows(b, n)?;
                    kw = g.add(kw, bb)?;
                }
                let eb = g.broadcast_rows(e, n)?;
                g.hadamard(eb, kw)?
            };
            if a.kind == AlignKind::ActivatedGeneral {
                sim = g.relu(sim);
            }
            Ok(sim)
        }
        AlignKind::Cosine => Err(CoreError::Unsupported(
            "cosine alignment has no elementwise read-unit form".into(),
        )),
    }
}

/// Map each similarity row to a scalar and lay the scores out as `1 x n`.
fn project_sim_rows(g: &mut Graph, sim: NodeId, wp: NodeId, bp: NodeId) -> Result<NodeId> {
    let n = g.value(sim).rows();
    let wpt = g.transpose(wp); // d x 1
    let col = g.matmul(sim, wpt)?; // n x 1
    let row = g.transpose(col); // 1 x n
    let ones = g.constant(Matrix::full(1, n, 1.0));
    let bias = g.matmul(bp, ones)?; // bp is 1 x 1
    g.add(row, bias)
}

/// Eager read-unit scores (elementwise-product form).
pub fn mac_score(e: &Matrix, k: &Matrix, p: &MacScoreParams) -> Result<Matrix> {
    let mut g = Graph::new();
    let en = g.constant(e.clone());
    let kn = g.constant(k.clone());
    let wp = g.constant(p.wp.clone());
    let bp = g.constant(Matrix::full(1, 1, p.bp));
    let s = mac_score_graph(&mut g, en, kn, wp, bp)?;
    Ok(g.value(s).clone())
}

/// Multi-head self attention parameters: four `d x d` projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl MultiHeadAttention {
    pub fn new(heads: usize, wq: Matrix, wk: Matrix, wv: Matrix, wo: Matrix) -> Result<Self> {
        let d = wq.rows();
        for (name, m) in [("wq", &wq), ("wk", &wk), ("wv", &wv), ("wo", &wo)] {
            if m.shape() != (d, d) {
                return Err(CoreError::contract(format!(
                    "projection {name} must be {d}x{d}"
                )));
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(CoreError::contract(format!(
                "model dim {d} must be divisible by heads {heads}"
            )));
        }
        Ok(MultiHeadAttention {
            heads,
            wq,
            wk,
            wv,
            wo,
        })
    }

    pub fn init(heads: usize, d: usize, seed: u64) -> Result<Self> {
        let std = 1.0 / (d as f64).sqrt();
        let mk = |stream: u64| {
            let mut rng = SplitMix64::new(derive_seed(seed, stream));
            Matrix::from_computed(
                d,
                d,
                rng.gaussian_vec(d * d).into_iter().map(|v| v * std).collect(),
            )
        };
        MultiHeadAttention::new(heads, mk(0x11), mk(0x12), mk(0x13), mk(0x14))
    }

    pub fn model_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim() / self.heads
    }
}

/// Node handles for bound multi-head projections.
#[derive(Debug, Clone, Copy)]
pub struct MultiHeadNodes {
    pub heads: usize,
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

pub fn bind_multi_head(g: &mut Graph, p: &MultiHeadAttention) -> MultiHeadNodes {
    MultiHeadNodes {
        heads: p.heads,
        wq: g.constant(p.wq.clone()),
        wk: g.constant(p.wk.clone()),
        wv: g.constant(p.wv.clone()),
        wo: g.constant(p.wo.clone()),
    }
}

/// Multi-head self attention over a row-stacked sequence. Scores inside each
/// head use the alignment spec with the per-head width as the scaling
/// dimension; head outputs are concatenated and passed through the output
/// projection. Cosine alignment is not supported here.
pub fn self_attend_graph(
    g: &mut Graph,
    mh: MultiHeadNodes,
    a: AlignNodes,
    s: NodeId,
) -> Result<NodeId> {
    if a.kind == AlignKind::Cosine {
        return Err(CoreError::Unsupported(
            "cosine alignment is not used in self attention".into(),
        ));
    }
    let d = g.value(s).cols();
    if g.value(mh.wq).shape() != (d, d) {
        return Err(CoreError::contract(format!(
            "sequence width {d} does not match projection width {}",
            g.value(mh.wq).rows()
        )));
    }
    if d % mh.heads != 0 {
        return Err(CoreError::contract(format!(
            "model dim {d} must be divisible by heads {}",
            mh.heads
        )));
    }
    let dh = d / mh.heads;
    if let Some(w) = a.w {
        if g.value(w).shape() != (dh, dh) {
            return Err(CoreError::contract(format!(
                "alignment transform must match the per-head width {dh}"
            )));
        }
    }
    let qf = g.matmul(s, mh.wq)?;
    let kf = g.matmul(s, mh.wk)?;
    let vf = g.matmul(s, mh.wv)?;
    let mut head_outputs = Vec::with_capacity(mh.heads);
    for h in 0..mh.heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(qf, lo, hi)?;
        let kh = g.slice_cols(kf, lo, hi)?;
        let vh = g.slice_cols(vf, lo, hi)?;
        let attended = cross_attend_graph(
            g,
            a,
            qh,
            kh,
        )?;
        // contexts from cross_attend aggregate the keys; heads aggregate
        // the value projection instead
        let out_h = g.matmul(attended.weights, vh)?;
        head_outputs.push(out_h);
    }
    let cat = g.concat_cols(&head_outputs)?;
    g.matmul(cat, mh.wo)
}

pub fn self_attend(p: &MultiHeadAttention, spec: &AlignmentSpec, s: &Matrix) -> Result<Matrix> {
    let mut g = Graph::new();
    let mh = bind_multi_head(&mut g, p);
    let a = bind_alignment(&mut g, spec);
    let sn = g.constant(s.clone());
    let out = self_attend_graph(&mut g, mh, a, sn)?;
    Ok(g.value(out).clone())
}

/// Residual encoder block parameters: self attention, a two-layer ReLU
/// feed-forward, and two layer-norm gain/shift pairs.
#[derive(Debug, Clone)]
pub struct EncoderBlockParams {
    pub attn: MultiHeadAttention,
    pub w1: Matrix,
    pub w2: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_shift: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_shift: Matrix,
    pub eps: f64,
}

impl EncoderBlockParams {
    pub fn init(heads: usize, d: usize, d_ff: usize, seed: u64) -> Result<Self> {
        let attn = MultiHeadAttention::init(heads, d, derive_seed(seed, 0x21))?;
        let mut rng1 = SplitMix64::new(derive_seed(seed, 0x22));
        let mut rng2 = SplitMix64::new(derive_seed(seed, 0x23));
        let s1 = 1.0 / (d as f64).sqrt();
        let s2 = 1.0 / (d_ff as f64).sqrt();
        Ok(EncoderBlockParams {
            attn,
            w1: Matrix::from_computed(
                d,
                d_ff,
                rng1.gaussian_vec(d * d_ff).into_iter().map(|v| v * s1).collect(),
            ),
            w2: Matrix::from_computed(
                d_ff,
                d,
                rng2.gaussian_vec(d_ff * d).into_iter().map(|v| v * s2).collect(),
            ),
            ln1_gain: Matrix::full(1, d, 1.0),
            ln1_shift: Matrix::zeros(1, d),
            ln2_gain: Matrix::full(1, d, 1.0),
            ln2_shift: Matrix::zeros(1, d),
            eps: 1e-5,
        })
    }
}

/// Node handles for a bound encoder block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderBlockNodes {
    pub attn: MultiHeadNodes,
    pub w1: NodeId,
    pub w2: NodeId,
    pub ln1_gain: NodeId,
    pub ln1_shift: NodeId,
    pub ln2_gain: NodeId,
    pub ln2_shift: NodeId,
    pub eps: f64,
}

pub fn bind_encoder_block(g: &mut Graph, p: &EncoderBlockParams) -> EncoderBlockNodes {
    EncoderBlockNodes {
        attn: bind_multi_head(g, &p.attn),
        w1: g.constant(p.w1.clone()),
        w2: g.constant(p.w2.clone()),
        ln1_gain: g.constant(p.ln1_gain.clone()),
        ln1_shift: g.constant(p.ln1_shift.clone()),
        ln2_gain: g.constant(p.ln2_gain.clone()),
        ln2_shift: g.constant(p.ln2_shift.clone()),
        eps: p.eps,
    }
}

/// Post-norm residual block: `h = LN(S + SelfAttn(S))`, then
/// `LN(h + W2 relu(h W1))`. Output shape equals input shape.
pub fn encoder_block_graph(
    g: &mut Graph,
    p: EncoderBlockNodes,
    a: AlignNodes,
    s: NodeId,
) -> Result<NodeId> {
    let attended = self_attend_graph(g, p.attn, a, s)?;
    let res1 = g.add(s, attended)?;
    let h = g.layer_norm(res1, p.ln1_gain, p.ln1_shift, p.eps)?;
    let f1 = g.matmul(h, p.w1)?;
    let f1r = g.relu(f1);
    let f2 = g.matmul(f1r, p.w2)?;
    let res2 = g.add(h, f2)?;
    g.layer_norm(res2, p.ln2_gain, p.ln2_shift, p.eps)
}

pub fn encoder_block(p: &EncoderBlockParams, spec: &AlignmentSpec, s: &Matrix) -> Result<Matrix> {
    let mut g = Graph::new();
    let pn = bind_encoder_block(&mut g, p);
    let a = bind_alignment(&mut g, spec);
    let sn = g.constant(s.clone());
    let out = encoder_block_graph(&mut g, pn, a, sn)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs_diff;

    fn rand_matrix(rng: &mut SplitMix64, r: usize, c: usize) -> Matrix {
        Matrix::from_computed(r, c, rng.gaussian_vec(r * c))
    }

    #[test]
    fn single_key_context_equals_key() {
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let q = Matrix::from_rows(vec![vec![0.3, -0.7], vec![2.0, 1.0]]).unwrap();
        let k = Matrix::from_rows(vec![vec![5.0, -1.0]]).unwrap();
        let out = cross_attend(&spec, &q, &k).unwrap();
        for r in 0..q.rows() {
            assert!((out.weights.get(r, 0) - 1.0).abs() <= 1e-15);
            assert_eq!(out.contexts.row(r), k.row(0));
        }
    }

    #[test]
    fn equal_scores_give_column_mean() {
        // zero queries make every dot score zero -> uniform weights
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let q = Matrix::zeros(2, 3);
        let k = Matrix::from_rows(vec![
            vec![1.0, 2.0, 3.0],
            vec![3.0, 4.0, 5.0],
            vec![5.0, 6.0, 7.0],
            vec![-1.0, 0.0, 1.0],
        ])
        .unwrap();
        let out = cross_attend(&spec, &q, &k).unwrap();
        for c in 0..3 {
            let mean = (0..4).map(|r| k.get(r, c)).sum::<f64>() / 4.0;
            assert!((out.contexts.get(0, c) - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_attend_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(8);
        let q = rand_matrix(&mut rng, 2, 3);
        let k = rand_matrix(&mut rng, 4, 3);
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let out = cross_attend(&spec, &q, &k).unwrap();

        // explicit per-query exp/normalize/sum loop
        for x in 0..2 {
            let scores: Vec<f64> = (0..4)
                .map(|y| q.row(x).iter().zip(k.row(y)).map(|(a, b)| a * b).sum())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..3 {
                let want: f64 = (0..4).map(|y| exps[y] / z * k.get(y, c)).sum();
                assert!((out.contexts.get(x, c) - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn contexts_stay_in_key_hull() {
        let mut rng = SplitMix64::new(12);
        for name in crate::align::ALIGNMENT_NAMES {
            let (kind, swap) = crate::align::parse_alignment_name(name).unwrap();
            let spec = AlignmentSpec::init(kind, swap, 4, rng.next_u64()).unwrap();
            let q = rand_matrix(&mut rng, 3, 4);
            let k = rand_matrix(&mut rng, 5, 4);
            let out = cross_attend(&spec, &q, &k).unwrap();
            for c in 0..4 {
                let lo = (0..5).map(|r| k.get(r, c)).fold(f64::INFINITY, f64::min);
                let hi = (0..5).map(|r| k.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                for r in 0..3 {
                    let v = out.contexts.get(r, c);
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{name}: {v} not in [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn mac_unit_map_reduces_to_dot() {
        let mut rng = SplitMix64::new(4);
        let e = rand_matrix(&mut rng, 1, 5);
        let k = rand_matrix(&mut rng, 3, 5);
        let p = MacScoreParams::new(Matrix::full(1, 5, 1.0), 0.0).unwrap();
        let scores = mac_score(&e, &k, &p).unwrap();
        let dot = AlignmentSpec::simple(AlignKind::Dot)
            .unwrap()
            .score(&e, &k)
            .unwrap();
        assert!(max_abs_diff(&scores, &dot) <= 1e-12);
    }

    #[test]
    fn mac_zero_control_gives_uniform_weights() {
        let e = Matrix::zeros(1, 4);
        let k = Matrix::from_rows(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 0.0]])
            .unwrap();
        let p = MacScoreParams::init(4, 3);
        let scores = mac_score(&e, &k, &p).unwrap();
        assert!((scores.get(0, 0) - p.bp).abs() <= 1e-15);
        assert!((scores.get(0, 1) - p.bp).abs() <= 1e-15);
        let w = scores.row_softmax();
        assert!((w.get(0, 0) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn mac_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(41);
        let e = rand_matrix(&mut rng, 1, 6);
        let k = rand_matrix(&mut rng, 4, 6);
        let wp = rand_matrix(&mut rng, 1, 6);
        let bp = rng.next_gaussian();
        let p = MacScoreParams::new(wp.clone(), bp).unwrap();
        let scores = mac_score(&e, &k, &p).unwrap();
        for y in 0..4 {
            let mut acc = bp;
            for j in 0..6 {
                acc += wp.get(0, j) * e.get(0, j) * k.get(y, j);
            }
            assert!((scores.get(0, y) - acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn mac_rejects_multi_row_control() {
        let e = Matrix::zeros(2, 4);
        let k = Matrix::zeros(3, 4);
        let p = MacScoreParams::init(4, 0);
        assert!(matches!(
            mac_score(&e, &k, &p).unwrap_err(),
            CoreError::Contract(_)
        ));
    }

    #[test]
    fn single_head_identity_projections_match_cross_attention() {
        let mut rng = SplitMix64::new(15);
        let s = rand_matrix(&mut rng, 4, 4);
        let id = Matrix::identity(4);
        let p = MultiHeadAttention::new(1, id.clone(), id.clone(), id.clone(), id).unwrap();
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let out = self_attend(&p, &spec, &s).unwrap();
        let cross = cross_attend(&spec, &s, &s).unwrap();
        assert!(max_abs_diff(&out, &cross.contexts) <= 1e-12);
    }

    #[test]
    fn single_row_sequence_is_its_own_context() {
        let mut rng = SplitMix64::new(16);
        let s = rand_matrix(&mut rng, 1, 6);
        let p = MultiHeadAttention::init(2, 6, 7).unwrap();
        let spec = AlignmentSpec::simple(AlignKind::ScaledDot).unwrap();
        let out = self_attend(&p, &spec, &s).unwrap();
        // weight over the single position is 1: output = (s wv) wo
        let want = s.matmul(&p.wv).unwrap().matmul(&p.wo).unwrap();
        assert!(max_abs_diff(&out, &want) <= 1e-12);
    }

    #[test]
    fn two_heads_match_head_loop_oracle() {
        let mut rng = SplitMix64::new(77);
        let s = rand_matrix(&mut rng, 3, 4);
        let p = MultiHeadAttention::init(2, 4, 5).unwrap();
        let spec = AlignmentSpec::simple(AlignKind::ScaledDot).unwrap();
        let got = self_attend(&p, &spec, &s).unwrap();

        // head-by-head eager recomputation
        let qf = s.matmul(&p.wq).unwrap();
        let kf = s.matmul(&p.wk).unwrap();
        let vf = s.matmul(&p.wv).unwrap();
        let mut heads = Vec::new();
        for h in 0..2 {
            let (lo, hi) = (h * 2, (h + 1) * 2);
            let qh = qf.slice_cols(lo, hi).unwrap();
            let kh = kf.slice_cols(lo, hi).unwrap();
            let vh = vf.slice_cols(lo, hi).unwrap();
            let scores = qh.matmul(&kh.transpose()).unwrap().scale(1.0 / 2.0_f64.sqrt());
            heads.push(scores.row_softmax().matmul(&vh).unwrap());
        }
        let refs: Vec<&Matrix> = heads.iter().collect();
        let want = Matrix::concat_cols(&refs).unwrap().matmul(&p.wo).unwrap();
        assert!(max_abs_diff(&got, &want) <= 1e-10);
    }

    #[test]
    fn self_attention_rejects_cosine() {
        let s = Matrix::zeros(2, 4);
        let p = MultiHeadAttention::init(2, 4, 1).unwrap();
        let spec = AlignmentSpec::simple(AlignKind::Cosine).unwrap();
        assert!(matches!(
            self_attend(&p, &spec, &s).unwrap_err(),
            CoreError::Unsupported(_)
        ));
    }

    #[test]
    fn encoder_block_preserves_shape() {
        let mut rng = SplitMix64::new(30);
        let s = rand_matrix(&mut rng, 5, 8);
        let p = EncoderBlockParams::init(4, 8, 16, 2).unwrap();
        let spec = AlignmentSpec::simple(AlignKind::ScaledDot).unwrap();
        let out = encoder_block(&p, &spec, &s).unwrap();
        assert_eq!(out.shape(), s.shape());
    }

    #[test]
    fn zeroed_block_is_double_layer_norm() {
        let mut rng = SplitMix64::new(31);
        let s = rand_matrix(&mut rng, 3, 4);
        let mut p = EncoderBlockParams::init(2, 4, 8, 5).unwrap();
        // zero attention output and zero FFN leave only the norms
        p.attn.wv = Matrix::zeros(4, 4);
        p.w2 = Matrix::zeros(8, 4);
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let out = encoder_block(&p, &spec, &s).unwrap();
        let gain = Matrix::full(1, 4, 1.0);
        let shift = Matrix::zeros(1, 4);
        let want = s
            .layer_norm(&gain, &shift, p.eps)
            .unwrap()
            .layer_norm(&gain, &shift, p.eps)
            .unwrap();
        assert!(max_abs_diff(&out, &want) <= 1e-12);
    }
}
