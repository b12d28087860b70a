//! Alignment score functions for attention.
//!
//! Six ways to turn a query row q and a key row k into a raw compatibility
//! score:
//!
//! * `Dot`: `q . k`
//! * `ScaledDot`: `q . k / sqrt(d)`
//! * `General`: a bilinear form with a learnable square transform
//! * `BiasedGeneral`: bilinear form plus a learnable bias row on the
//!   transformed side
//! * `ActivatedGeneral`: ReLU applied to the biased-general score
//! * `Cosine`: normalized dot product (zero-norm rows score 0)
//!
//! The parameterized kinds come in two orientations. With `swap = false`
//! (written `dagger` on the CLI) the transform is applied to the key:
//! `q . (W k + b)`. With `swap = true` (`star`) it is applied to the query:
//! `k . (W q + b)`. The score matrix is always `n_Q x n_K` regardless of
//! orientation; only the side carrying the learnable transform changes.

use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlignKind {
    Dot,
    ScaledDot,
    General,
    BiasedGeneral,
    ActivatedGeneral,
    Cosine,
}

impl AlignKind {
    /// Whether this kind carries a learnable transform `W`.
    pub fn has_transform(self) -> bool {
        matches!(
            self,
            AlignKind::General | AlignKind::BiasedGeneral | AlignKind::ActivatedGeneral
        )
    }

    /// Whether this kind carries a learnable bias row `b`.
    pub fn has_bias(self) -> bool {
        matches!(self, AlignKind::BiasedGeneral | AlignKind::ActivatedGeneral)
    }

    /// Kinds without parameters are symmetric in parameter placement, so the
    /// swap flag is meaningless (and rejected) for them.
    pub fn supports_swap(self) -> bool {
        self.has_transform()
    }
}

/// Parse one of the CLI/config names:
/// `dot`, `scaled_dot`, `general_star`, `general_dagger`,
/// `biased_general_star`, `biased_general_dagger`, `activated_general`,
/// `cosine`. Returns the kind and its swap flag.
pub fn parse_alignment_name(name: &str) -> Result<(AlignKind, bool)> {
    match name {
        "dot" => Ok((AlignKind::Dot, false)),
        "scaled_dot" => Ok((AlignKind::ScaledDot, false)),
        "general_star" => Ok((AlignKind::General, true)),
        "general_dagger" => Ok((AlignKind::General, false)),
        "biased_general_star" => Ok((AlignKind::BiasedGeneral, true)),
        "biased_general_dagger" => Ok((AlignKind::BiasedGeneral, false)),
        // Only the key-transform orientation is exposed by name here.
        "activated_general" => Ok((AlignKind::ActivatedGeneral, false)),
        "cosine" => Ok((AlignKind::Cosine, false)),
        other => Err(CoreError::config(format!(
            "unknown alignment name {other:?}"
        ))),
    }
}

/// Inverse of [`parse_alignment_name`].
pub fn alignment_name(kind: AlignKind, swap: bool) -> &'static str {
    match (kind, swap) {
        (AlignKind::Dot, _) => "dot",
        (AlignKind::ScaledDot, _) => "scaled_dot",
        (AlignKind::General, true) => "general_star",
        (AlignKind::General, false) => "general_dagger",
        (AlignKind::BiasedGeneral, true) => "biased_general_star",
        (AlignKind::BiasedGeneral, false) => "biased_general_dagger",
        (AlignKind::ActivatedGeneral, _) => "activated_general",
        (AlignKind::Cosine, _) => "cosine",
    }
}

/// All eight name/orientation combinations, in CLI order.
pub const ALIGNMENT_NAMES: [&str; 8] = [
    "dot",
    "scaled_dot",
    "general_star",
    "general_dagger",
    "biased_general_star",
    "biased_general_dagger",
    "activated_general",
    "cosine",
];

/// An alignment function together with its parameters.
#[derive(Debug, Clone)]
pub struct AlignmentSpec {
    pub kind: AlignKind,
    /// `true` transforms the query side (`star`), `false` the key side
    /// (`dagger`). Must be `false` for Dot/ScaledDot/Cosine.
    pub swap: bool,
    /// `d x d` transform, present exactly for the general family.
    pub w: Option<Matrix>,
    /// `1 x d` bias row, present exactly for the biased/activated kinds.
    pub b: Option<Matrix>,
}

impl AlignmentSpec {
    /// A parameter-free spec (Dot, ScaledDot, Cosine).
    pub fn simple(kind: AlignKind) -> Result<Self> {
        AlignmentSpec::with_params(kind, false, None, None)
    }

    pub fn with_params(
        kind: AlignKind,
        swap: bool,
        w: Option<Matrix>,
        b: Option<Matrix>,
    ) -> Result<Self> {
        if swap && !kind.supports_swap() {
            return Err(CoreError::contract(format!(
                "swap is not meaningful for {}",
                alignment_name(kind, false)
            )));
        }
        match (kind.has_transform(), &w) {
            (true, Some(m)) if m.rows() != m.cols() => {
                return Err(CoreError::contract("alignment transform must be square"));
            }
            (true, None) => {
                return Err(CoreError::contract(format!(
                    "{} requires a transform matrix",
                    alignment_name(kind, swap)
                )));
            }
            (false, Some(_)) => {
                return Err(CoreError::contract(format!(
                    "{} takes no transform matrix",
                    alignment_name(kind, swap)
                )));
            }
            _ => {}
        }
        match (kind.has_bias(), &b) {
            (true, Some(bias)) => {
                let d = w.as_ref().expect("transform checked above").rows();
                if bias.shape() != (1, d) {
                    return Err(CoreError::contract("alignment bias must be 1 x d"));
                }
            }
            (true, None) => {
                return Err(CoreError::contract(format!(
                    "{} requires a bias row",
                    alignment_name(kind, swap)
                )));
            }
            (false, Some(_)) => {
                return Err(CoreError::contract(format!(
                    "{} takes no bias row",
                    alignment_name(kind, swap)
                )));
            }
            _ => {}
        }
        Ok(AlignmentSpec { kind, swap, w, b })
    }

    /// Deterministically initialized parameters for dimension `d`.
    pub fn init(kind: AlignKind, swap: bool, d: usize, seed: u64) -> Result<Self> {
        let (w, b) = init_params(kind, d, seed)?;
        AlignmentSpec::with_params(kind, swap, w, b)
    }

    pub fn name(&self) -> &'static str {
        alignment_name(self.kind, self.swap)
    }

    /// Check the spec against a concrete feature dimension.
    pub fn validate_dim(&self, d: usize) -> Result<()> {
        if let Some(w) = &self.w {
            if w.rows() != d {
                return Err(CoreError::ShapeMismatch {
                    op: "alignment transform",
                    left_rows: w.rows(),
                    left_cols: w.cols(),
                    right_rows: d,
                    right_cols: d,
                });
            }
        }
        Ok(())
    }

    /// Raw score matrix (`n_Q x n_K`) for row-stacked queries and keys.
    pub fn score(&self, q: &Matrix, k: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let bound = bind_alignment(&mut g, self);
        let qn = g.constant(q.clone());
        let kn = g.constant(k.clone());
        let s = score_graph(&mut g, bound, qn, kn)?;
        Ok(g.value(s).clone())
    }
}

/// Scaled-Gaussian initialization: `W` has entries drawn N(0, 1/d), `b`
/// starts at zero. Deterministic per seed.
pub fn init_params(kind: AlignKind, d: usize, seed: u64) -> Result<(Option<Matrix>, Option<Matrix>)> {
    if d == 0 {
        return Err(CoreError::contract("feature dimension must be positive"));
    }
    let w = if kind.has_transform() {
        let mut rng = SplitMix64::new(derive_seed(seed, 0x57));
        let std = 1.0 / (d as f64).sqrt();
        Some(Matrix::from_computed(
            d,
            d,
            rng.gaussian_vec(d * d).into_iter().map(|v| v * std).collect(),
        ))
    } else {
        None
    };
    let b = kind.has_bias().then(|| Matrix::zeros(1, d));
    Ok((w, b))
}

/// An alignment's pieces bound into a graph. The parameter nodes may be
/// constants (pure evaluation) or parameter leaves (training).
#[derive(Debug, Clone, Copy)]
pub struct AlignNodes {
    pub kind: AlignKind,
    pub swap: bool,
    pub w: Option<NodeId>,
    pub b: Option<NodeId>,
}

/// Bind a spec's parameters as constants.
pub fn bind_alignment(g: &mut Graph, spec: &AlignmentSpec) -> AlignNodes {
    AlignNodes {
        kind: spec.kind,
        swap: spec.swap,
        w: spec.w.as_ref().map(|w| g.constant(w.clone())),
        b: spec.b.as_ref().map(|b| g.constant(b.clone())),
    }
}

/// Build the score matrix inside a graph. `q` is `n_Q x d`, `k` is
/// `n_K x d`; the result is `n_Q x n_K`.
pub fn score_graph(g: &mut Graph, a: AlignNodes, q: NodeId, k: NodeId) -> Result<NodeId> {
    let d = g.value(q).cols();
    if g.value(k).cols() != d {
        return Err(CoreError::ShapeMismatch {
            op: "alignment score",
            left_rows: g.value(q).rows(),
            left_cols: d,
            right_rows: g.value(k).rows(),
            right_cols: g.value(k).cols(),
        });
    }
    if a.swap && !a.kind.supports_swap() {
        return Err(CoreError::contract(format!(
            "swap is not meaningful for {}",
            alignment_name(a.kind, false)
        )));
    }
    let n_q = g.value(q).rows();
    let n_k = g.value(k).rows();
    let kt = g.transpose(k);

    match a.kind {
        AlignKind::Dot => g.matmul(q, kt),
        AlignKind::ScaledDot => {
            let s = g.matmul(q, kt)?;
            Ok(g.scale(s, 1.0 / (d as f64).sqrt()))
        }
        AlignKind::Cosine => g.cosine_sim(q, k),
        AlignKind::General | AlignKind::BiasedGeneral | AlignKind::ActivatedGeneral => {
            let w = a
                .w
                .ok_or_else(|| CoreError::contract("missing alignment transform node"))?;
            // dagger: Q W K^T gives q.(W k); star: Q W^T K^T gives k.(W q).
            let w_oriented = if a.swap { g.transpose(w) } else { w };
            let qw = g.matmul(q, w_oriented)?;
            let mut s = g.matmul(qw, kt)?;
            if a.kind.has_bias() {
                let b = a
                    .b
                    .ok_or_else(|| CoreError::contract("missing alignment bias node"))?;
                let bias = if a.swap {
                    // k.(W q + b): the b term is k.b, varying per key column.
                    let bk = g.matmul(b, kt)?; // 1 x n_K
                    let ones = g.constant(Matrix::full(n_q, 1, 1.0));
                    g.matmul(ones, bk)?
                } else {
                    // q.(W k + b): the b term is q.b, constant per query row.
                    let bt = g.transpose(b); // d x 1
                    let qb = g.matmul(q, bt)?; // n_Q x 1
                    let ones = g.constant(Matrix::full(1, n_k, 1.0));
                    g.matmul(qb, ones)?
                };
                s = g.add(s, bias)?;
            }
            if a.kind == AlignKind::ActivatedGeneral {
                s = g.relu(s);
            }
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs_diff;

    fn rand_matrix(rng: &mut SplitMix64, r: usize, c: usize) -> Matrix {
        Matrix::from_computed(r, c, rng.gaussian_vec(r * c))
    }

    /// Per-pair scalar-loop oracle over explicit q/k rows.
    fn oracle_score(spec: &AlignmentSpec, q: &Matrix, k: &Matrix) -> Matrix {
        let d = q.cols();
        let mut out = Matrix::zeros(q.rows(), k.rows());
        for x in 0..q.rows() {
            for y in 0..k.rows() {
                let qr = q.row(x);
                let kr = k.row(y);
                let val = match spec.kind {
                    AlignKind::Dot => qr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>(),
                    AlignKind::ScaledDot => {
                        qr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()
                    }
                    AlignKind::Cosine => {
                        let na = qr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let nb = kr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if na == 0.0 || nb == 0.0 {
                            0.0
                        } else {
                            qr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() / (na * nb)
                        }
                    }
                    _ => {
                        let w = spec.w.as_ref().unwrap();
                        // transformed = W applied to key (dagger) or query (star)
                        let (fixed, moved) = if spec.swap { (kr, qr) } else { (qr, kr) };
                        let mut acc = 0.0;
                        for i in 0..d {
                            let mut wi = 0.0;
                            for j in 0..d {
                                wi += w.get(i, j) * moved[j];
                            }
                            if let Some(b) = &spec.b {
                                wi += b.get(0, i);
                            }
                            acc += fixed[i] * wi;
                        }
                        if spec.kind == AlignKind::ActivatedGeneral {
                            acc = acc.max(0.0);
                        }
                        acc
                    }
                };
                out.set(x, y, val);
            }
        }
        out
    }

    #[test]
    fn dot_orthonormal_rows() {
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let q = Matrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let k = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = spec.score(&q, &k).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn scaled_dot_closed_form() {
        let spec = AlignmentSpec::simple(AlignKind::ScaledDot).unwrap();
        let q = Matrix::from_rows(vec![vec![2.0, 0.0, 0.0, 0.0]]).unwrap();
        let s = spec.score(&q, &q).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn general_with_identity_reduces_to_dot() {
        let mut rng = SplitMix64::new(3);
        let q = rand_matrix(&mut rng, 2, 3);
        let k = rand_matrix(&mut rng, 4, 3);
        let spec =
            AlignmentSpec::with_params(AlignKind::General, false, Some(Matrix::identity(3)), None)
                .unwrap();
        let dot = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        assert!(max_abs_diff(&spec.score(&q, &k).unwrap(), &dot.score(&q, &k).unwrap()) <= 1e-12);
    }

    #[test]
    fn cosine_parallel_orthogonal_antiparallel() {
        let spec = AlignmentSpec::simple(AlignKind::Cosine).unwrap();
        let q = Matrix::from_rows(vec![vec![2.0, 0.0]]).unwrap();
        let k = Matrix::from_rows(vec![
            vec![5.0, 0.0],
            vec![0.0, 3.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let s = spec.score(&q, &k).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() <= 1e-15);
        assert!(s.get(0, 1).abs() <= 1e-15);
        assert!((s.get(0, 2) + 1.0).abs() <= 1e-15);
    }

    #[test]
    fn biased_general_star_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(21);
        let q = rand_matrix(&mut rng, 3, 3);
        let k = rand_matrix(&mut rng, 5, 3);
        let w = rand_matrix(&mut rng, 3, 3);
        let b = rand_matrix(&mut rng, 1, 3);
        let spec =
            AlignmentSpec::with_params(AlignKind::BiasedGeneral, true, Some(w), Some(b)).unwrap();
        let got = spec.score(&q, &k).unwrap();
        assert!(max_abs_diff(&got, &oracle_score(&spec, &q, &k)) <= 1e-12);
    }

    #[test]
    fn every_kind_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(100);
        for (kind, swap) in [
            (AlignKind::Dot, false),
            (AlignKind::ScaledDot, false),
            (AlignKind::General, false),
            (AlignKind::General, true),
            (AlignKind::BiasedGeneral, false),
            (AlignKind::BiasedGeneral, true),
            (AlignKind::ActivatedGeneral, false),
            (AlignKind::ActivatedGeneral, true),
            (AlignKind::Cosine, false),
        ] {
            let q = rand_matrix(&mut rng, 3, 4);
            let k = rand_matrix(&mut rng, 5, 4);
            let spec = AlignmentSpec::init(kind, swap, 4, rng.next_u64()).unwrap();
            // bias starts at zero; give it some mass so the oracle is not trivial
            let spec = if kind.has_bias() {
                AlignmentSpec::with_params(kind, swap, spec.w, Some(rand_matrix(&mut rng, 1, 4)))
                    .unwrap()
            } else {
                spec
            };
            let got = spec.score(&q, &k).unwrap();
            let want = oracle_score(&spec, &q, &k);
            assert!(
                max_abs_diff(&got, &want) <= 1e-12,
                "{} diverges from oracle",
                spec.name()
            );
        }
    }

    #[test]
    fn swap_rejected_for_symmetric_kinds() {
        for kind in [AlignKind::Dot, AlignKind::ScaledDot, AlignKind::Cosine] {
            let err = AlignmentSpec::with_params(kind, true, None, None).unwrap_err();
            assert!(matches!(err, CoreError::Contract(_)));
        }
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let a = init_params(AlignKind::General, 64, 9).unwrap().0.unwrap();
        let b = init_params(AlignKind::General, 64, 9).unwrap().0.unwrap();
        assert_eq!(a, b);
        let mean = a.sum() / 4096.0;
        let std =
            (a.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4096.0).sqrt();
        assert!((std - 0.125).abs() <= 0.15 * 0.125, "std {std}");
        let (_, bias) = init_params(AlignKind::BiasedGeneral, 8, 1).unwrap();
        assert_eq!(bias.unwrap(), Matrix::zeros(1, 8));
    }

    #[test]
    fn name_round_trip() {
        for name in ALIGNMENT_NAMES {
            let (kind, swap) = parse_alignment_name(name).unwrap();
            assert_eq!(alignment_name(kind, swap), name);
        }
        assert!(parse_alignment_name("magic").is_err());
    }

    #[test]
    fn mismatched_feature_dims_error() {
        let spec = AlignmentSpec::simple(AlignKind::Dot).unwrap();
        let q = Matrix::zeros(2, 3);
        let k = Matrix::zeros(2, 4);
        assert!(matches!(
            spec.score(&q, &k).unwrap_err(),
            CoreError::ShapeMismatch { .. }
        ));
    }
}
