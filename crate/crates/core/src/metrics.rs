//! Evaluation measures: recall@K / Rsum over a similarity table, soft QA
//! scoring by ground-truth vote, and edit-distance based answer similarity.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// A similarity matrix (queries x candidates) with the ground-truth
/// candidate index for each query row.
#[derive(Debug, Clone)]
pub struct RankingTable {
    sims: Matrix,
    truth: Vec<usize>,
}

impl RankingTable {
    pub fn new(sims: Matrix, truth: Vec<usize>) -> Result<Self> {
        if truth.len() != sims.rows() {
            return Err(CoreError::contract(format!(
                "{} ground-truth indices for {} queries",
                truth.len(),
                sims.rows()
            )));
        }
        if let Some(&bad) = truth.iter().find(|&&t| t >= sims.cols()) {
            return Err(CoreError::contract(format!(
                "ground-truth index {bad} out of range for {} candidates",
                sims.cols()
            )));
        }
        Ok(RankingTable { sims, truth })
    }

    pub fn queries(&self) -> usize {
        self.sims.rows()
    }

    pub fn candidates(&self) -> usize {
        self.sims.cols()
    }

    /// Zero-based rank of the ground truth for query `q`. Ties are broken by
    /// the lower candidate index winning, so results are deterministic.
    fn truth_rank(&self, q: usize) -> usize {
        let row = self.sims.row(q);
        let t = self.truth[q];
        let tv = row[t];
        row.iter()
            .enumerate()
            .filter(|&(j, &v)| v > tv || (v == tv && j < t))
            .count()
    }
}

/// Percentage (0..=100) of queries whose ground truth ranks within the top
/// `k` candidates.
pub fn recall_at_k(table: &RankingTable, k: usize) -> Result<f64> {
    if k == 0 || k > table.candidates() {
        return Err(CoreError::contract(format!(
            "k = {k} out of range for {} candidates",
            table.candidates()
        )));
    }
    let hits = (0..table.queries())
        .filter(|&q| table.truth_rank(q) < k)
        .count();
    Ok(100.0 * hits as f64 / table.queries() as f64)
}

/// `R@1 + R@5 + R@10`; needs at least 10 candidates.
pub fn rsum(table: &RankingTable) -> Result<f64> {
    if table.candidates() < 10 {
        return Err(CoreError::contract(format!(
            "rsum needs at least 10 candidates, got {}",
            table.candidates()
        )));
    }
    Ok(recall_at_k(table, 1)? + recall_at_k(table, 5)? + recall_at_k(table, 10)?)
}

/// A prediction with one or more reference answers.
#[derive(Debug, Clone)]
pub struct QaResult {
    pub prediction: String,
    pub truths: Vec<String>,
}

impl QaResult {
    pub fn new(prediction: impl Into<String>, truths: Vec<String>) -> Result<Self> {
        if truths.is_empty() {
            return Err(CoreError::contract("at least one ground truth is required"));
        }
        Ok(QaResult {
            prediction: prediction.into(),
            truths,
        })
    }
}

/// Soft QA accuracy by vote: `min(matches / 3, 1)` over exact string
/// matches among the ground truths.
pub fn vqa_soft_score(r: &QaResult) -> f64 {
    let matches = r.truths.iter().filter(|t| **t == r.prediction).count();
    (matches as f64 / 3.0).min(1.0)
}

/// Minimal edit distance with unit-cost insert/delete/substitute, over
/// Unicode scalar values. Single-row dynamic program.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized-Levenshtein answer similarity: per ground truth,
/// `NL = lev / max(len)` (0 when both strings are empty) and the score is
/// `1 - NL` when `NL` is below the rejection threshold, else 0. The best
/// ground truth wins. Strings are whitespace-trimmed and case-folded first.
pub fn anls(r: &QaResult, threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CoreError::contract(format!(
            "anls threshold {threshold} must lie in [0, 1]"
        )));
    }
    let fold = |s: &str| s.trim().to_lowercase();
    let pred = fold(&r.prediction);
    let mut best = 0.0_f64;
    for t in &r.truths {
        let truth = fold(t);
        let len = pred.chars().count().max(truth.chars().count());
        let nl = if len == 0 {
            0.0
        } else {
            levenshtein(&pred, &truth) as f64 / len as f64
        };
        let score = if nl < threshold { 1.0 - nl } else { 0.0 };
        best = best.max(score);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn diag_table(n: usize) -> RankingTable {
        let sims = Matrix::identity(n);
        RankingTable::new(sims, (0..n).collect()).unwrap()
    }

    /// Sort-based oracle: full argsort of each row, stable on index.
    fn oracle_recall(table: &RankingTable, k: usize) -> f64 {
        let mut hits = 0;
        for q in 0..table.queries() {
            let row = table.sims.row(q);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&i, &j| row[j].partial_cmp(&row[i]).unwrap().then(i.cmp(&j)));
            if order[..k].contains(&table.truth[q]) {
                hits += 1;
            }
        }
        100.0 * hits as f64 / table.queries() as f64
    }

    #[test]
    fn perfect_diagonal_scores_100() {
        let t = diag_table(12);
        assert_eq!(recall_at_k(&t, 1).unwrap(), 100.0);
        assert_eq!(rsum(&t).unwrap(), 300.0);
    }

    #[test]
    fn reversed_ranking_boundaries() {
        // ground truth always the worst candidate of 10
        let sims = Matrix::from_fn(4, 10, |_, c| -(c as f64));
        let t = RankingTable::new(sims, vec![9; 4]).unwrap();
        assert_eq!(recall_at_k(&t, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&t, 10).unwrap(), 100.0);
        // worst possible table with more than 10 candidates has rsum 0
        let sims = Matrix::from_fn(4, 11, |_, c| -(c as f64));
        let t = RankingTable::new(sims, vec![10; 4]).unwrap();
        assert_eq!(rsum(&t).unwrap(), 0.0);
    }

    #[test]
    fn random_tables_match_sort_oracle() {
        let mut rng = SplitMix64::new(50);
        for _ in 0..20 {
            let sims = Matrix::from_computed(20, 20, rng.gaussian_vec(400));
            let truth: Vec<usize> = (0..20).map(|_| rng.next_below(20)).collect();
            let t = RankingTable::new(sims, truth).unwrap();
            for k in [1, 5, 10, 20] {
                assert_eq!(recall_at_k(&t, k).unwrap(), oracle_recall(&t, k));
            }
            let composed =
                recall_at_k(&t, 1).unwrap() + recall_at_k(&t, 5).unwrap() + recall_at_k(&t, 10).unwrap();
            assert_eq!(rsum(&t).unwrap(), composed);
        }
    }

    #[test]
    fn recall_monotone_in_k() {
        let mut rng = SplitMix64::new(51);
        let sims = Matrix::from_computed(10, 15, rng.gaussian_vec(150));
        let truth: Vec<usize> = (0..10).map(|_| rng.next_below(15)).collect();
        let t = RankingTable::new(sims, truth).unwrap();
        let mut prev = 0.0;
        for k in 1..=15 {
            let r = recall_at_k(&t, k).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        assert_eq!(prev, 100.0);
    }

    #[test]
    fn recall_invariant_under_monotone_transform() {
        let mut rng = SplitMix64::new(52);
        let sims = Matrix::from_computed(8, 12, rng.gaussian_vec(96));
        let truth: Vec<usize> = (0..8).map(|_| rng.next_below(12)).collect();
        let t1 = RankingTable::new(sims.clone(), truth.clone()).unwrap();
        let warped = Matrix::from_computed(
            8,
            12,
            sims.data().iter().map(|v| v.atan() + 2.0 * v).collect(),
        );
        let t2 = RankingTable::new(warped, truth).unwrap();
        for k in [1, 3, 12] {
            assert_eq!(recall_at_k(&t1, k).unwrap(), recall_at_k(&t2, k).unwrap());
        }
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let t = diag_table(4);
        assert!(recall_at_k(&t, 0).is_err());
        assert!(recall_at_k(&t, 5).is_err());
        assert!(rsum(&t).is_err()); // only 4 candidates
    }

    #[test]
    fn soft_score_vote_cases() {
        let truths =
            |n: usize| -> Vec<String> { (0..10).map(|i| if i < n { "yes".into() } else { format!("no{i}") }).collect() };
        let hit3 = QaResult::new("yes", truths(3)).unwrap();
        assert_eq!(vqa_soft_score(&hit3), 1.0);
        let hit0 = QaResult::new("yes", truths(0)).unwrap();
        assert_eq!(vqa_soft_score(&hit0), 0.0);
        let hit1 = QaResult::new("yes", truths(1)).unwrap();
        assert!((vqa_soft_score(&hit1) - 1.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn levenshtein_cases() {
        assert_eq!(levenshtein("same", "same"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn anls_cases() {
        let exact = QaResult::new("word", vec!["word".into()]).unwrap();
        assert_eq!(anls(&exact, 0.5).unwrap(), 1.0);
        let disjoint = QaResult::new("abcd", vec!["wxyz".into()]).unwrap();
        assert_eq!(anls(&disjoint, 0.5).unwrap(), 0.0);
        let near = QaResult::new("kitten", vec!["sitting".into()]).unwrap();
        assert!((anls(&near, 0.5).unwrap() - 0.5714).abs() <= 1e-4);
        // threshold 0 rejects everything that is not a perfect zero distance
        assert_eq!(anls(&near, 0.0).unwrap(), 0.0);
        // folding: case and surrounding whitespace do not count
        let folded = QaResult::new("  WORD ", vec!["word".into()]).unwrap();
        assert_eq!(anls(&folded, 0.5).unwrap(), 1.0);
        assert!(anls(&exact, 1.5).is_err());
    }
}
