//! Statistics used to relate episode consistency to task outcome.

mod describe;
mod gap;
mod logistic;
mod roc;

pub use describe::{cohens_d, correlations, mean, midranks, population_std, zscore_per_task, Correlations, ZScored};
pub use gap::{gap_curve, GapCurve};
pub use logistic::{fit_logistic_1d, sigmoid, LogisticFit};
pub use roc::{auc_raw, roc_auc_cv, roc_curve, CvReport, FoldResult, RocCurve};

use serde::{Deserialize, Serialize};

/// One episode-level scalar paired with its outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore<T = f64> {
    pub task_id: String,
    pub episode_id: u64,
    pub score: T,
    pub label: bool,
}

impl<T> LabeledScore<T> {
    pub fn new(task_id: impl Into<String>, episode_id: u64, score: T, label: bool) -> Self {
        LabeledScore {
            task_id: task_id.into(),
            episode_id,
            score,
            label,
        }
    }
}
