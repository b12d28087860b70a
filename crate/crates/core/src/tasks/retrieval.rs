//! Matched region/token retrieval instances.
//!
//! Each instance plants a multiset of concepts; the "image" side carries one
//! noisy concept row per region and the "caption" side carries noisy rows of
//! the same concepts, so matched pairs agree on concepts and mismatched
//! pairs mostly do not. Concept multisets are unique within a split so the
//! noiseless problem has a single correct answer per query.

use std::collections::HashSet;
use std::io::Write;

use super::{matrix_rows, write_rows_csv, ConceptBank};
use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    /// Number of concepts in the bank.
    pub concepts: usize,
    /// Raw feature width of both modalities.
    pub feature_dim: usize,
    /// Region rows per instance (the key side).
    pub regions: usize,
    /// Token rows per instance (the query side).
    pub tokens: usize,
    /// Std-dev of the additive Gaussian feature noise.
    pub sigma: f64,
    /// Matched pairs in the held-out pool used for ranking metrics.
    pub test_pairs: usize,
    /// Matched pairs available for training.
    pub train_pairs: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            concepts: 16,
            feature_dim: 32,
            regions: 6,
            tokens: 6,
            sigma: 0.05,
            test_pairs: 100,
            train_pairs: 256,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regions == 0 || self.tokens == 0 {
            return Err(CoreError::config("regions and tokens must be positive"));
        }
        if self.regions > self.concepts || self.tokens > self.concepts {
            return Err(CoreError::config(format!(
                "instance needs at most {} concepts, bank only has {}",
                self.regions.max(self.tokens),
                self.concepts
            )));
        }
        if self.sigma < 0.0 {
            return Err(CoreError::config("sigma must be non-negative"));
        }
        if self.test_pairs == 0 || self.train_pairs == 0 {
            return Err(CoreError::config("split sizes must be positive"));
        }
        Ok(())
    }
}

/// One matched image/caption pair.
#[derive(Debug, Clone)]
pub struct RetrievalInstance {
    /// `regions x feature_dim`, the key side.
    pub regions: Matrix,
    /// `tokens x feature_dim`, the query side.
    pub tokens: Matrix,
    /// Concept ids backing the region rows, in row order.
    pub concept_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RetrievalSplits {
    pub bank: ConceptBank,
    pub train: Vec<RetrievalInstance>,
    pub test: Vec<RetrievalInstance>,
}

pub fn gen_retrieval(cfg: &RetrievalConfig, seed: u64) -> Result<RetrievalSplits> {
    cfg.validate()?;
    let bank = ConceptBank::generate(cfg.concepts, cfg.feature_dim, derive_seed(seed, 1))?;
    let train = gen_split(cfg, &bank, cfg.train_pairs, derive_seed(seed, 2))?;
    let test = gen_split(cfg, &bank, cfg.test_pairs, derive_seed(seed, 3))?;
    Ok(RetrievalSplits { bank, train, test })
}

fn gen_split(
    cfg: &RetrievalConfig,
    bank: &ConceptBank,
    count: usize,
    seed: u64,
) -> Result<Vec<RetrievalInstance>> {
    let mut rng = SplitMix64::new(seed);
    let mut used: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count + 10_000 {
            return Err(CoreError::config(format!(
                "cannot draw {count} distinct concept multisets from a bank of {}",
                bank.len()
            )));
        }
        // distinct ids per instance; uniqueness of the sorted multiset across
        // the split keeps the noiseless ranking problem unambiguous
        let mut ids: Vec<usize> = (0..bank.len()).collect();
        rng.shuffle(&mut ids);
        ids.truncate(cfg.regions);
        let mut key = ids.clone();
        key.sort_unstable();
        if !used.insert(key) {
            continue;
        }
        let region_rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| bank.noisy_concept(id, cfg.sigma, &mut rng))
            .collect();
        let token_rows: Vec<Vec<f64>> = (0..cfg.tokens)
            .map(|t| bank.noisy_concept(ids[t % ids.len()], cfg.sigma, &mut rng))
            .collect();
        out.push(RetrievalInstance {
            regions: Matrix::from_rows(region_rows)?,
            tokens: Matrix::from_rows(token_rows)?,
            concept_ids: ids,
        });
    }
    Ok(out)
}

impl RetrievalInstance {
    /// Decode each region row back to its nearest concept.
    pub fn decode_regions(&self, bank: &ConceptBank) -> Vec<usize> {
        (0..self.regions.rows())
            .map(|r| bank.nearest(self.regions.row(r)))
            .collect()
    }
}

/// Text dump of a split for inspection: one CSV row per matrix row.
pub fn write_retrieval_csv<W: Write>(split: &[RetrievalInstance], out: &mut W) -> std::io::Result<()> {
    let width = split.first().map_or(0, |i| i.regions.cols());
    let rows = split.iter().enumerate().flat_map(|(idx, inst)| {
        matrix_rows(idx, "region", &inst.regions)
            .chain(matrix_rows(idx, "token", &inst.tokens))
            .chain(std::iter::once((
                idx,
                "label",
                0,
                inst.concept_ids.iter().map(|&c| c as f64).collect(),
            )))
    });
    write_rows_csv(out, width, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_rows_equal_concepts() {
        let cfg = RetrievalConfig {
            sigma: 0.0,
            test_pairs: 4,
            train_pairs: 4,
            ..RetrievalConfig::default()
        };
        let splits = gen_retrieval(&cfg, 5).unwrap();
        for inst in &splits.test {
            for (r, &id) in inst.concept_ids.iter().enumerate() {
                assert_eq!(inst.regions.row(r), splits.bank.concept(id));
            }
        }
    }

    #[test]
    fn same_seed_same_split() {
        let cfg = RetrievalConfig {
            test_pairs: 6,
            train_pairs: 6,
            ..RetrievalConfig::default()
        };
        let a = gen_retrieval(&cfg, 11).unwrap();
        let b = gen_retrieval(&cfg, 11).unwrap();
        for (x, y) in a.test.iter().zip(&b.test) {
            assert_eq!(x.regions, y.regions);
            assert_eq!(x.tokens, y.tokens);
            assert_eq!(x.concept_ids, y.concept_ids);
        }
    }

    #[test]
    fn nearest_concept_decoding_is_reliable() {
        let cfg = RetrievalConfig::default();
        let splits = gen_retrieval(&cfg, 17).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for inst in splits.test.iter().chain(&splits.train) {
            let decoded = inst.decode_regions(&splits.bank);
            for (d, &want) in decoded.iter().zip(&inst.concept_ids) {
                total += 1;
                correct += usize::from(*d == want);
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.99, "decoding accuracy {acc}");
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let cfg = RetrievalConfig {
            concepts: 4,
            regions: 6,
            ..RetrievalConfig::default()
        };
        assert!(matches!(
            gen_retrieval(&cfg, 0).unwrap_err(),
            CoreError::Config(_)
        ));
    }

    #[test]
    fn multisets_are_unique_within_split() {
        let cfg = RetrievalConfig {
            test_pairs: 50,
            train_pairs: 10,
            ..RetrievalConfig::default()
        };
        let splits = gen_retrieval(&cfg, 23).unwrap();
        let mut seen = HashSet::new();
        for inst in &splits.test {
            let mut key = inst.concept_ids.clone();
            key.sort_unstable();
            assert!(seen.insert(key));
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let cfg = RetrievalConfig {
            test_pairs: 2,
            train_pairs: 2,
            ..RetrievalConfig::default()
        };
        let splits = gen_retrieval(&cfg, 29).unwrap();
        let mut buf = Vec::new();
        write_retrieval_csv(&splits.test, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("instance,role,row,v0"));
        // 2 instances x (6 regions + 6 tokens + 1 label)
        assert_eq!(lines.count(), 2 * 13);
    }
}
