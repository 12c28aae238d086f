//! Selection pools on disk: every row of every stage, tagged with the stage.

use serde::{Deserialize, Serialize};

use trialmatch_core::selection::{CriterionRow, SelectionPool, Stage};

pub const POOL_FILE: &str = "pool.jsonl";
pub const FINAL_FILE: &str = "final.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLine {
    pub stage: Stage,
    #[serde(flatten)]
    pub row: CriterionRow,
}

pub const STAGES: [Stage; 5] = [
    Stage::Predicted,
    Stage::Reduced,
    Stage::Selected,
    Stage::Novel,
    Stage::Final,
];

pub fn pool_lines(pool: &SelectionPool) -> Vec<PoolLine> {
    STAGES
        .iter()
        .flat_map(|&stage| {
            pool.stage(stage).iter().map(move |row| PoolLine {
                stage,
                row: row.clone(),
            })
        })
        .collect()
}

/// Rows of one stage, in file order.
pub fn stage_rows(lines: &[PoolLine], stage: Stage) -> Vec<CriterionRow> {
    lines
        .iter()
        .filter(|l| l.stage == stage)
        .map(|l| l.row.clone())
        .collect()
}
