//! Deterministic synthetic tasks with planted ground truth.
//!
//! Three desk-scale problem families, one per model family under study:
//! matched region/token retrieval, attribute-conjunction counting, and
//! pointer QA over a typed joint sequence. Every generator is a pure
//! function of its config and seed, and every instance's ground truth can be
//! recomputed by an independent scan of the generated data.

mod counting;
mod pointer;
mod retrieval;

pub use counting::{
    gen_counting, scan_count, write_counting_csv, CountingConfig, CountingInstance,
    CountingSplits, ATTR_DIM, GROUP_SIZES,
};
pub use pointer::{gen_pointer, write_pointer_csv, PointerConfig, PointerInstance, PointerSplits};
pub use retrieval::{
    gen_retrieval, write_retrieval_csv, RetrievalConfig, RetrievalInstance, RetrievalSplits,
};

use std::io::Write;

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::rng::SplitMix64;

/// Latent prototype vectors both modalities are generated from. Rows are
/// unit norm and pairwise well separated (|cosine| <= 0.6), resampled until
/// the separation holds.
#[derive(Debug, Clone)]
pub struct ConceptBank {
    concepts: Matrix,
    pub seed: u64,
}

impl ConceptBank {
    pub fn generate(count: usize, dim: usize, seed: u64) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(CoreError::config("concept bank needs positive count and dim"));
        }
        let mut rng = SplitMix64::new(seed);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while rows.len() < count {
            attempts += 1;
            if attempts > 100_000 {
                return Err(CoreError::config(format!(
                    "could not place {count} concepts of dim {dim} with pairwise |cos| <= 0.6"
                )));
            }
            let raw = rng.gaussian_vec(dim);
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let cand: Vec<f64> = raw.into_iter().map(|v| v / norm).collect();
            let separated = rows.iter().all(|r| {
                let cos: f64 = r.iter().zip(&cand).map(|(a, b)| a * b).sum();
                cos.abs() <= 0.6
            });
            if separated {
                rows.push(cand);
            }
        }
        Ok(ConceptBank {
            concepts: Matrix::from_rows(rows)?,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.concepts.cols()
    }

    pub fn concept(&self, id: usize) -> &[f64] {
        self.concepts.row(id)
    }

    /// Concept row plus isotropic Gaussian noise of the given sigma.
    pub fn noisy_concept(&self, id: usize, sigma: f64, rng: &mut SplitMix64) -> Vec<f64> {
        self.concept(id)
            .iter()
            .map(|v| v + sigma * rng.next_gaussian())
            .collect()
    }

    /// Index of the nearest concept by cosine similarity.
    pub fn nearest(&self, row: &[f64]) -> usize {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nr = norm(row);
        let mut best = (0, f64::NEG_INFINITY);
        for id in 0..self.len() {
            let c = self.concept(id);
            let cos = if nr == 0.0 {
                0.0
            } else {
                c.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() / nr
            };
            if cos > best.1 {
                best = (id, cos);
            }
        }
        best.0
    }
}

/// Write a labelled set of row-major matrices as text: a one-line header
/// followed by one CSV row per matrix row (`instance,role,row,v0,v1,...`).
/// Ground-truth scalars are emitted with role `label`.
pub fn write_rows_csv<W: Write>(
    out: &mut W,
    width: usize,
    rows: impl Iterator<Item = (usize, &'static str, usize, Vec<f64>)>,
) -> std::io::Result<()> {
    write!(out, "instance,role,row")?;
    for i in 0..width {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for (instance, role, row, values) in rows {
        write!(out, "{instance},{role},{row}")?;
        for v in &values {
            write!(out, ",{v}")?;
        }
        for _ in values.len()..width {
            write!(out, ",")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub(crate) fn matrix_rows<'a>(
    instance: usize,
    role: &'static str,
    m: &'a Matrix,
) -> impl Iterator<Item = (usize, &'static str, usize, Vec<f64>)> + 'a {
    (0..m.rows()).map(move |r| (instance, role, r, m.row(r).to_vec()))
}
