//! Held-out evaluation for the three models, expressed in the metric
//! vocabulary the grid runner records.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::metrics::{anls, recall_at_k, rsum, QaResult, RankingTable};
use crate::models::counting::CountingModel;
use crate::models::pointer::PointerModel;
use crate::models::retrieval::RetrievalModel;
use crate::tasks::{CountingInstance, PointerInstance, RetrievalInstance};

/// Ranking metrics in both retrieval directions over a matched pool.
/// `sentence_*` ranks token sets given a region set (the similarity matrix
/// column); `image_*` ranks region sets given a token set (the row).
pub fn eval_retrieval(
    model: &RetrievalModel,
    pool: &[RetrievalInstance],
) -> Result<Vec<(String, f64)>> {
    let sims = model.similarity_matrix(pool)?;
    let truth: Vec<usize> = (0..pool.len()).collect();
    let image_table = RankingTable::new(sims.clone(), truth.clone())?;
    let sentence_table = RankingTable::new(sims.transpose(), truth)?;
    let mut out = Vec::new();
    for (prefix, table) in [("sentence", &sentence_table), ("image", &image_table)] {
        out.push((format!("{prefix}_r1"), recall_at_k(table, 1)?));
        out.push((format!("{prefix}_r5"), recall_at_k(table, 5)?));
        out.push((format!("{prefix}_r10"), recall_at_k(table, 10)?));
        out.push((format!("{prefix}_rsum"), rsum(table)?));
    }
    Ok(out)
}

/// Overall accuracy plus the single-object (`n_queried <= 1`) and
/// multi-object (`n_queried >= 2`) breakdown. Breakdown entries are omitted
/// when their subset is empty.
pub fn eval_counting(
    model: &CountingModel,
    pool: &[CountingInstance],
) -> Result<Vec<(String, f64)>> {
    let mut hits = 0usize;
    let mut single = (0usize, 0usize);
    let mut multi = (0usize, 0usize);
    for inst in pool {
        let ok = model.predict(inst)? == inst.count;
        hits += usize::from(ok);
        let bucket = if inst.n_queried >= 2 { &mut multi } else { &mut single };
        bucket.0 += usize::from(ok);
        bucket.1 += 1;
    }
    let mut out = vec![("accuracy".to_string(), hits as f64 / pool.len() as f64)];
    if single.1 > 0 {
        out.push((
            "accuracy_single".to_string(),
            single.0 as f64 / single.1 as f64,
        ));
    }
    if multi.1 > 0 {
        out.push((
            "accuracy_multi".to_string(),
            multi.0 as f64 / multi.1 as f64,
        ));
    }
    Ok(out)
}

/// Pointer accuracy and mean answer-string similarity.
pub fn eval_pointer(model: &PointerModel, pool: &[PointerInstance]) -> Result<Vec<(String, f64)>> {
    let mut hits = 0usize;
    let mut anls_total = 0.0;
    for inst in pool {
        let pred = model.predict(inst)?;
        hits += usize::from(pred == inst.answer_index);
        let qa = QaResult::new(inst.candidate_string(pred), vec![inst.answer_string()])?;
        anls_total += anls(&qa, 0.5)?;
    }
    Ok(vec![
        ("accuracy".to_string(), hits as f64 / pool.len() as f64),
        ("anls".to_string(), anls_total / pool.len() as f64),
    ])
}

/// Similarity matrix helper exposed for tests and the grid runner.
pub fn retrieval_similarities(
    model: &RetrievalModel,
    pool: &[RetrievalInstance],
) -> Result<Matrix> {
    model.similarity_matrix(pool)
}
