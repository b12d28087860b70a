//! Pointer QA over a typed joint sequence.
//!
//! An instance stacks three row groups of shared width: question tokens,
//! object features and candidate (OCR-like) tokens, each row tagged with its
//! group. The first question row carries the queried concept and exactly one
//! candidate row carries the same concept; the answer is that candidate's
//! index. Answers stringify as `token_<concept id>` so edit-distance metrics
//! have something to chew on.

use std::io::Write;

use super::{matrix_rows, write_rows_csv, ConceptBank};
use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq)]
pub struct PointerConfig {
    /// Question rows per instance.
    pub question_len: usize,
    /// Object rows per instance.
    pub objects: usize,
    /// Candidate rows per instance; the answer set.
    pub ocr: usize,
    /// Raw feature width.
    pub feature_dim: usize,
    /// Std-dev of the additive feature noise.
    pub sigma: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for PointerConfig {
    fn default() -> Self {
        PointerConfig {
            question_len: 3,
            objects: 3,
            ocr: 4,
            feature_dim: 16,
            sigma: 0.05,
            train_size: 256,
            test_size: 200,
        }
    }
}

impl PointerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ocr < 2 {
            return Err(CoreError::config("at least two answer candidates required"));
        }
        if self.question_len == 0 || self.objects == 0 {
            return Err(CoreError::config("question and object groups must be non-empty"));
        }
        if self.sigma < 0.0 {
            return Err(CoreError::config("sigma must be non-negative"));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(CoreError::config("split sizes must be positive"));
        }
        Ok(())
    }

    /// Concepts needed so candidates, fillers and objects can all be
    /// distinct from the queried concept.
    pub fn bank_size(&self) -> usize {
        self.ocr + self.question_len + self.objects + 2
    }

    pub fn sequence_len(&self) -> usize {
        self.question_len + self.objects + self.ocr
    }
}

/// One pointer instance. Row groups share `feature_dim` columns.
#[derive(Debug, Clone)]
pub struct PointerInstance {
    pub question: Matrix,
    pub objects: Matrix,
    pub ocr: Matrix,
    /// Concept id behind each candidate row.
    pub ocr_concept_ids: Vec<usize>,
    /// Index of the matching candidate within the ocr group.
    pub answer_index: usize,
}

impl PointerInstance {
    /// The answer as a string, for QA-style metrics.
    pub fn answer_string(&self) -> String {
        format!("token_{}", self.ocr_concept_ids[self.answer_index])
    }

    /// Stringify an arbitrary candidate index.
    pub fn candidate_string(&self, index: usize) -> String {
        format!("token_{}", self.ocr_concept_ids[index])
    }
}

#[derive(Debug, Clone)]
pub struct PointerSplits {
    pub bank: ConceptBank,
    pub train: Vec<PointerInstance>,
    pub test: Vec<PointerInstance>,
}

pub fn gen_pointer(cfg: &PointerConfig, seed: u64) -> Result<PointerSplits> {
    cfg.validate()?;
    let bank = ConceptBank::generate(cfg.bank_size(), cfg.feature_dim, derive_seed(seed, 1))?;
    let train = gen_split(cfg, &bank, cfg.train_size, derive_seed(seed, 2))?;
    let test = gen_split(cfg, &bank, cfg.test_size, derive_seed(seed, 3))?;
    Ok(PointerSplits { bank, train, test })
}

fn gen_split(
    cfg: &PointerConfig,
    bank: &ConceptBank,
    size: usize,
    seed: u64,
) -> Result<Vec<PointerInstance>> {
    let mut rng = SplitMix64::new(seed);
    (0..size).map(|_| gen_instance(cfg, bank, &mut rng)).collect()
}

fn gen_instance(
    cfg: &PointerConfig,
    bank: &ConceptBank,
    rng: &mut SplitMix64,
) -> Result<PointerInstance> {
    let mut ids: Vec<usize> = (0..bank.len()).collect();
    rng.shuffle(&mut ids);
    let queried = ids[0];
    // candidates: the queried concept plus ocr-1 distractors, shuffled
    let mut ocr_ids: Vec<usize> = ids[0..cfg.ocr].to_vec();
    rng.shuffle(&mut ocr_ids);
    let answer_index = ocr_ids
        .iter()
        .position(|&id| id == queried)
        .expect("queried concept is among the candidates");
    // fillers and objects avoid the queried concept entirely
    let fillers = &ids[cfg.ocr..cfg.ocr + cfg.question_len - 1];
    let object_ids = &ids[cfg.ocr + cfg.question_len - 1..cfg.ocr + cfg.question_len - 1 + cfg.objects];

    let mut question_rows = Vec::with_capacity(cfg.question_len);
    question_rows.push(bank.noisy_concept(queried, cfg.sigma, rng));
    for &f in fillers {
        question_rows.push(bank.noisy_concept(f, cfg.sigma, rng));
    }
    let object_rows: Vec<Vec<f64>> = object_ids
        .iter()
        .map(|&id| bank.noisy_concept(id, cfg.sigma, rng))
        .collect();
    let ocr_rows: Vec<Vec<f64>> = ocr_ids
        .iter()
        .map(|&id| bank.noisy_concept(id, cfg.sigma, rng))
        .collect();

    Ok(PointerInstance {
        question: Matrix::from_rows(question_rows)?,
        objects: Matrix::from_rows(object_rows)?,
        ocr: Matrix::from_rows(ocr_rows)?,
        ocr_concept_ids: ocr_ids,
        answer_index,
    })
}

/// Text dump for inspection.
pub fn write_pointer_csv<W: Write>(split: &[PointerInstance], out: &mut W) -> std::io::Result<()> {
    let width = split.first().map_or(0, |i| i.question.cols());
    let rows = split.iter().enumerate().flat_map(|(idx, inst)| {
        matrix_rows(idx, "question", &inst.question)
            .chain(matrix_rows(idx, "object", &inst.objects))
            .chain(matrix_rows(idx, "ocr", &inst.ocr))
            .chain(std::iter::once((
                idx,
                "label",
                0,
                vec![inst.answer_index as f64],
            )))
    });
    write_rows_csv(out, width, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_answer_is_nearest_neighbor() {
        let cfg = PointerConfig {
            ocr: 2,
            sigma: 0.0,
            train_size: 16,
            test_size: 16,
            ..PointerConfig::default()
        };
        let splits = gen_pointer(&cfg, 3).unwrap();
        for inst in splits.test.iter().chain(&splits.train) {
            let q = inst.question.row(0);
            let best = (0..inst.ocr.rows())
                .max_by(|&a, &b| {
                    let da: f64 = inst.ocr.row(a).iter().zip(q).map(|(x, y)| x * y).sum();
                    let db: f64 = inst.ocr.row(b).iter().zip(q).map(|(x, y)| x * y).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(best, inst.answer_index);
        }
    }

    #[test]
    fn exactly_one_candidate_matches() {
        let cfg = PointerConfig::default();
        let splits = gen_pointer(&cfg, 9).unwrap();
        for inst in &splits.test {
            let answer = inst.ocr_concept_ids[inst.answer_index];
            let matches = inst
                .ocr_concept_ids
                .iter()
                .filter(|&&id| id == answer)
                .count();
            assert_eq!(matches, 1);
        }
    }

    #[test]
    fn same_seed_same_split() {
        let cfg = PointerConfig {
            train_size: 8,
            test_size: 8,
            ..PointerConfig::default()
        };
        let a = gen_pointer(&cfg, 4).unwrap();
        let b = gen_pointer(&cfg, 4).unwrap();
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.question, y.question);
            assert_eq!(x.answer_index, y.answer_index);
        }
    }

    #[test]
    fn uniform_guessing_hits_one_over_candidates() {
        let cfg = PointerConfig {
            train_size: 1,
            test_size: 10_000,
            ..PointerConfig::default()
        };
        let splits = gen_pointer(&cfg, 31).unwrap();
        let mut rng = SplitMix64::new(99);
        let hits = splits
            .test
            .iter()
            .filter(|inst| rng.next_below(cfg.ocr) == inst.answer_index)
            .count();
        let acc = hits as f64 / splits.test.len() as f64;
        let chance = 1.0 / cfg.ocr as f64;
        assert!((acc - chance).abs() <= 0.02, "random accuracy {acc} vs chance {chance}");
    }

    #[test]
    fn too_few_candidates_rejected() {
        let cfg = PointerConfig {
            ocr: 1,
            ..PointerConfig::default()
        };
        assert!(matches!(
            gen_pointer(&cfg, 0).unwrap_err(),
            CoreError::Config(_)
        ));
    }

    #[test]
    fn answer_strings_name_concepts() {
        let cfg = PointerConfig {
            train_size: 2,
            test_size: 2,
            ..PointerConfig::default()
        };
        let splits = gen_pointer(&cfg, 8).unwrap();
        let inst = &splits.test[0];
        assert_eq!(
            inst.answer_string(),
            format!("token_{}", inst.ocr_concept_ids[inst.answer_index])
        );
    }
}
