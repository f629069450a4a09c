//! Grid search over hybrid fusion parameters.

use serde::{Deserialize, Serialize};

use crate::corpus::Claim;
use crate::error::{Error, Result};
use crate::eval::{sentence_recall_at_k, RetrievalRun, Subset};
use crate::hybrid::{hybrid_rank, HybridParams};
use crate::pipeline::ClaimRun;

pub const DEFAULT_GRID: [f64; 8] = [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mth: f64,
    pub gamma: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridCell,
    pub cells: Vec<GridCell>,
}

/// Fuses every stored run and turns the top `k` into a retrieval run.
pub fn fused_run(runs: &[ClaimRun], params: &HybridParams, k: usize) -> RetrievalRun {
    let mut out = RetrievalRun::new();
    for r in runs {
        let ranked = hybrid_rank(&r.single_map(), &r.sequences, params);
        out.set_evidence(r.claim_id, ranked.into_iter().take(k).map(|(a, _)| a));
    }
    out
}

/// Sentence recall@k for every `(mth, gamma)` cell. The best cell has the
/// highest recall; ties go to the smallest mth, then the smallest gamma.
pub fn grid_search(
    runs: &[ClaimRun],
    claims: &[Claim],
    mths: &[f64],
    gammas: &[f64],
    k: usize,
) -> Result<GridResult> {
    let mut mths = mths.to_vec();
    let mut gammas = gammas.to_vec();
    mths.sort_by(f64::total_cmp);
    gammas.sort_by(f64::total_cmp);
    let mut cells = Vec::with_capacity(mths.len() * gammas.len());
    let mut best: Option<GridCell> = None;
    for &mth in &mths {
        for &gamma in &gammas {
            let params = HybridParams::new(mth, gamma)?;
            let recall = sentence_recall_at_k(&fused_run(runs, &params, k), claims, k, Subset::All);
            let cell = GridCell { mth, gamma, recall };
            if let Some(r) = recall {
                if best.and_then(|b| b.recall).is_none_or(|b| r > b) {
                    best = Some(cell);
                }
            }
            cells.push(cell);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Config("grid search needs a non-empty grid and verifiable claims".into())
    })?;
    Ok(GridResult { best, cells })
}
