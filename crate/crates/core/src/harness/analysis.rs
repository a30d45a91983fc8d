//! Reports computed from a [`RunDataset`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::io::{write_csv, write_table};
use super::{alignment_of, Alignment, EpisodeLog, RunDataset};
use crate::consistency::StepDiagnostics;
use crate::error::{Error, Result};
use crate::primitives::derive_stream;
use crate::primitives::rng::lanes;
use crate::selection::Strategy;
use crate::stats::{
    auc_raw, cohens_d, correlations, gap_curve, zscore_per_task, Correlations, CvReport, GapCurve, LabeledScore,
};

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// First index of the final third of a sequence of length `len`.
pub fn late_start(len: usize) -> usize {
    len - len.div_ceil(3)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub preset: String,
    pub strategy: String,
    pub n_candidates: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_consistency: f64,
    pub exploration_cost: usize,
}

/// Success rate per (preset, strategy, N) cell.
pub fn summarize(ds: &RunDataset) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, Strategy, usize), Vec<&EpisodeLog>> = BTreeMap::new();
    for e in &ds.episodes {
        cells
            .entry((e.wam_preset.clone(), e.strategy, e.n_candidates))
            .or_default()
            .push(e);
    }
    cells
        .into_iter()
        .map(|((preset, strategy, n), eps)| {
            let successes = eps.iter().filter(|e| e.success).count();
            let c: Vec<f64> = eps.iter().map(|e| e.episode_consistency).collect();
            SummaryRow {
                preset,
                strategy: strategy.name().to_string(),
                n_candidates: n,
                episodes: eps.len(),
                successes,
                success_rate: successes as f64 / eps.len() as f64,
                mean_consistency: mean(&c).unwrap_or(0.0),
                exploration_cost: eps.iter().map(|e| e.total_exploration_cost).sum(),
            }
        })
        .collect()
}

/// Success rate of the episodes matching `strategy` and `n`, over all tasks and presets.
pub fn success_rate(ds: &RunDataset, strategy: Strategy, n: usize) -> Option<f64> {
    let eps: Vec<_> = ds
        .episodes
        .iter()
        .filter(|e| e.strategy == strategy && e.n_candidates == n)
        .collect();
    (!eps.is_empty()).then(|| eps.iter().filter(|e| e.success).count() as f64 / eps.len() as f64)
}

fn single_episodes(ds: &RunDataset) -> Vec<&EpisodeLog> {
    ds.episodes.iter().filter(|e| e.strategy == Strategy::Single).collect()
}

/// Group label: the task id, qualified by the preset when the dataset holds several presets.
fn group_key(ds: &RunDataset) -> impl Fn(&EpisodeLog) -> String {
    let multi = ds
        .episodes
        .iter()
        .map(|e| e.wam_preset.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        > 1;
    move |e: &EpisodeLog| {
        if multi {
            format!("{}@{}", e.task_id, e.wam_preset)
        } else {
            e.task_id.clone()
        }
    }
}

/// Deduplicated Single episodes: Single ignores N, so one candidate count is kept per group.
fn baseline_episodes(ds: &RunDataset) -> Vec<&EpisodeLog> {
    let single = single_episodes(ds);
    let Some(n) = single.iter().map(|e| e.n_candidates).min() else {
        return vec![];
    };
    single.into_iter().filter(|e| e.n_candidates == n).collect()
}

fn grouped<'a>(ds: &RunDataset, eps: &[&'a EpisodeLog]) -> BTreeMap<String, Vec<&'a EpisodeLog>> {
    let key = group_key(ds);
    let mut groups: BTreeMap<String, Vec<&EpisodeLog>> = BTreeMap::new();
    for e in eps {
        groups.entry(key(e)).or_default().push(e);
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskRow {
    pub task: String,
    pub alignment: String,
    pub n_success: usize,
    pub n_failure: usize,
    pub mean_consistency_success: Option<f64>,
    pub mean_consistency_failure: Option<f64>,
    pub cohens_d: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparabilityReport {
    /// Per-task z-scored episode consistency of the Single-strategy episodes.
    pub zscores: Vec<LabeledScore>,
    pub alignment: BTreeMap<String, Alignment>,
    /// Cohen's d of pooled z-scores, success minus failure, over tasks with both outcomes.
    pub pooled_d: Option<f64>,
    /// Cross-validated ROC over the consistency-aligned tasks.
    pub cv: Option<CvReport>,
    pub per_task: Vec<TaskRow>,
    pub warnings: Vec<String>,
}

pub fn separability(ds: &RunDataset, master_seed: u64, k_folds: usize) -> SeparabilityReport {
    let base = baseline_episodes(ds);
    let groups = grouped(ds, &base);
    let mut warnings = vec![];
    if base.is_empty() {
        warnings.push("no single-strategy episodes; separability needs the unselected baseline".into());
    }

    let mut raw = vec![];
    let mut alignment = BTreeMap::new();
    let mut per_task = vec![];
    for (task, eps) in &groups {
        let a = alignment_of(eps.iter().copied());
        alignment.insert(task.clone(), a);
        let (s, f): (Vec<f64>, Vec<f64>) = {
            let s = eps
                .iter()
                .filter(|e| e.success)
                .map(|e| e.episode_consistency)
                .collect();
            let f = eps
                .iter()
                .filter(|e| !e.success)
                .map(|e| e.episode_consistency)
                .collect();
            (s, f)
        };
        let scores: Vec<f64> = eps.iter().map(|e| e.episode_consistency).collect();
        let labels: Vec<bool> = eps.iter().map(|e| e.success).collect();
        per_task.push(TaskRow {
            task: task.clone(),
            alignment: a.name().to_string(),
            n_success: s.len(),
            n_failure: f.len(),
            mean_consistency_success: mean(&s),
            mean_consistency_failure: mean(&f),
            cohens_d: cohens_d(&s, &f).ok(),
            auc: auc_raw(&scores, &labels).ok(),
        });
        for e in eps {
            raw.push(LabeledScore::new(
                task.clone(),
                e.seed_index,
                e.episode_consistency,
                e.success,
            ));
        }
    }

    let zscored = zscore_per_task(&raw);
    let contrasted: Vec<&LabeledScore> = zscored
        .scores
        .iter()
        .filter(|z| alignment[&z.task_id] != Alignment::Undetermined)
        .collect();
    let zs: Vec<f64> = contrasted.iter().filter(|z| z.label).map(|z| z.score).collect();
    let zf: Vec<f64> = contrasted.iter().filter(|z| !z.label).map(|z| z.score).collect();
    let pooled_d = match cohens_d(&zs, &zf) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("pooled effect size unavailable: {e}"));
            None
        }
    };

    let aligned: Vec<LabeledScore> = zscored
        .scores
        .iter()
        .filter(|z| alignment[&z.task_id] == Alignment::Aligned)
        .cloned()
        .collect();
    let mut stream = derive_stream(master_seed, 0, 0, lanes::ANALYSIS);
    let cv = match crate::stats::roc_auc_cv(&aligned, k_folds, &mut stream) {
        Ok(r) => {
            if r.k_reduced {
                warnings.push(format!(
                    "cross-validation used {} folds instead of {}",
                    r.k_used, r.k_requested
                ));
            }
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("cross-validated ROC unavailable: {e}"));
            None
        }
    };

    SeparabilityReport {
        zscores: zscored.scores,
        alignment,
        pooled_d,
        cv,
        per_task,
        warnings,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellCurve {
    pub alignment: Alignment,
    pub success: bool,
    pub episodes: usize,
    /// Per-step mean latent change over the episodes still running.
    pub delta_z: Vec<f64>,
    /// Mean latent change over the final third of every episode's steps.
    pub late_delta_z: Option<f64>,
    /// Mean latent change over all steps.
    pub mean_delta_z: Option<f64>,
}

impl CellCurve {
    pub fn name(&self) -> String {
        format!(
            "{}_{}",
            self.alignment.name(),
            if self.success { "success" } else { "failure" }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    pub alignment: BTreeMap<String, Alignment>,
    /// The four alignment × outcome cells; empty cells are omitted.
    pub cells: Vec<CellCurve>,
    pub missing_cells: Vec<String>,
    /// Step-level latent change against consistency over all baseline steps.
    pub correlation: Option<Correlations>,
    /// Mean episode consistency per (alignment, outcome).
    pub mean_consistency: BTreeMap<String, f64>,
}

impl CollapseReport {
    pub fn cell(&self, alignment: Alignment, success: bool) -> Option<&CellCurve> {
        self.cells
            .iter()
            .find(|c| c.alignment == alignment && c.success == success)
    }

    pub fn misaligned_tasks(&self) -> usize {
        self.alignment.values().filter(|a| **a == Alignment::Misaligned).count()
    }
}

fn alive_mean_curve(series: &[Vec<f64>]) -> Vec<f64> {
    let longest = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|t| {
            let alive: Vec<f64> = series.iter().filter_map(|s| s.get(t).copied()).collect();
            mean(&alive).unwrap_or(0.0)
        })
        .collect()
}

pub fn collapse(ds: &RunDataset) -> CollapseReport {
    let base = baseline_episodes(ds);
    let groups = grouped(ds, &base);
    let key = group_key(ds);
    let alignment: BTreeMap<String, Alignment> = groups
        .iter()
        .map(|(t, eps)| (t.clone(), alignment_of(eps.iter().copied())))
        .collect();

    let mut cells = vec![];
    let mut missing_cells = vec![];
    let mut mean_consistency = BTreeMap::new();
    for a in [Alignment::Aligned, Alignment::Misaligned] {
        for success in [true, false] {
            let eps: Vec<&EpisodeLog> = base
                .iter()
                .copied()
                .filter(|e| alignment[&key(e)] == a && e.success == success)
                .collect();
            let label = format!("{}_{}", a.name(), if success { "success" } else { "failure" });
            if eps.is_empty() {
                missing_cells.push(label);
                continue;
            }
            let series: Vec<Vec<f64>> = eps
                .iter()
                .map(|e| e.steps.iter().map(|s| s.delta_z).collect())
                .collect();
            let late: Vec<f64> = series
                .iter()
                .flat_map(|s| s[late_start(s.len())..].iter().copied())
                .collect();
            let all: Vec<f64> = series.iter().flatten().copied().collect();
            let c: Vec<f64> = eps.iter().map(|e| e.episode_consistency).collect();
            mean_consistency.insert(label, mean(&c).unwrap_or(0.0));
            cells.push(CellCurve {
                alignment: a,
                success,
                episodes: eps.len(),
                delta_z: alive_mean_curve(&series),
                late_delta_z: mean(&late),
                mean_delta_z: mean(&all),
            });
        }
    }

    let (dz, c): (Vec<f64>, Vec<f64>) = base
        .iter()
        .flat_map(|e| e.steps.iter().map(|s| (s.delta_z, s.c_t)))
        .unzip();
    CollapseReport {
        alignment,
        cells,
        missing_cells,
        correlation: correlations(&dz, &c).ok(),
        mean_consistency,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilityReport {
    pub value: GapCurve,
    pub consistency: GapCurve,
    /// Fraction of common steps at which both gaps have the same sign.
    pub sign_agreement: f64,
    /// Fraction of steps with a positive value gap.
    pub value_positive: f64,
}

pub fn utility_gap(ds: &RunDataset) -> Result<UtilityReport> {
    let base = baseline_episodes(ds);
    let values = |success: bool| -> Result<Vec<Vec<f64>>> {
        base.iter()
            .filter(|e| e.success == success)
            .map(|e| {
                e.steps
                    .iter()
                    .map(|s| {
                        s.value_pred
                            .ok_or_else(|| Error::InsufficientData("episode without value predictions".into()))
                    })
                    .collect()
            })
            .collect()
    };
    let consistency = |success: bool| -> Vec<Vec<f64>> {
        base.iter()
            .filter(|e| e.success == success)
            .map(|e| e.steps.iter().map(|s| s.c_t).collect())
            .collect()
    };
    let value = gap_curve(&values(true)?, &values(false)?)?;
    let consistency = gap_curve(&consistency(true), &consistency(false))?;
    let common = value.values.len().min(consistency.values.len());
    let agree = (0..common)
        .filter(|&t| value.values[t].signum() == consistency.values[t].signum())
        .count();
    let positive = value.values.iter().filter(|&&v| v > 0.0).count();
    Ok(UtilityReport {
        sign_agreement: if common == 0 { 0.0 } else { agree as f64 / common as f64 },
        value_positive: if value.values.is_empty() {
            0.0
        } else {
            positive as f64 / value.values.len() as f64
        },
        value,
        consistency,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MitigationReport {
    pub strategy: Strategy,
    pub n_candidates: usize,
    pub baseline: Strategy,
    pub pairs: usize,
    /// Mean over pairs of latent change, strategy minus baseline, per progress bin.
    pub delta_z: Vec<f64>,
    /// Mean over pairs of consistency, strategy minus baseline, per progress bin.
    pub consistency: Vec<f64>,
    /// Fraction of the final third of the bins where the latent-change difference is positive.
    pub late_positive: f64,
}

/// Value of `xs` at bin `k` of `bins` when the series is stretched over the bins.
pub fn stretched(xs: &[f64], bins: usize, k: usize) -> f64 {
    xs[k * xs.len() / bins]
}

/// Compares `strategy` at `n` against Single on matched (task, preset, seed) episodes.
///
/// Episodes end at different steps, so each one is stretched over as many progress bins as the
/// longest matched episode has steps. Bin `k` then holds every pair, and the final third of the
/// bins is the final third of every episode, as in [`collapse`].
pub fn mitigation(ds: &RunDataset, strategy: Strategy, n: usize) -> Result<MitigationReport> {
    let base = baseline_episodes(ds);
    let index: BTreeMap<(&str, &str, u64), &EpisodeLog> = base
        .iter()
        .map(|e| ((e.task_id.as_str(), e.wam_preset.as_str(), e.seed_index), *e))
        .collect();
    let treated: Vec<&EpisodeLog> = ds
        .episodes
        .iter()
        .filter(|e| e.strategy == strategy && e.n_candidates == n)
        .collect();
    if treated.is_empty() {
        return Err(Error::InsufficientData(format!("no `{strategy}` episodes with N={n}")));
    }
    let mut matched = vec![];
    for e in &treated {
        let Some(b) = index.get(&(e.task_id.as_str(), e.wam_preset.as_str(), e.seed_index)) else {
            return Err(Error::InsufficientData(format!(
                "no single-strategy episode matches {} seed {}",
                e.task_id, e.seed_index
            )));
        };
        matched.push((*e, *b));
    }

    let series = |e: &EpisodeLog, f: fn(&StepDiagnostics) -> f64| e.steps.iter().map(f).collect::<Vec<f64>>();
    let pairs: Vec<_> = matched
        .iter()
        .filter(|(h, l)| !h.steps.is_empty() && !l.steps.is_empty())
        .map(|(h, l)| {
            (
                series(h, |s| s.delta_z),
                series(l, |s| s.delta_z),
                series(h, |s| s.c_t),
                series(l, |s| s.c_t),
            )
        })
        .collect();
    let bins = pairs.iter().map(|p| p.0.len().max(p.1.len())).max().unwrap_or(0);
    let k_pairs = pairs.len() as f64;
    let (mut delta_z, mut consistency) = (vec![], vec![]);
    for k in 0..bins {
        let (mut dz, mut dc) = (0.0, 0.0);
        for (hz, lz, hc, lc) in &pairs {
            dz += stretched(hz, bins, k) - stretched(lz, bins, k);
            dc += stretched(hc, bins, k) - stretched(lc, bins, k);
        }
        delta_z.push(dz / k_pairs);
        consistency.push(dc / k_pairs);
    }
    let late = &delta_z[late_start(bins)..];
    let late_positive = if late.is_empty() {
        0.0
    } else {
        late.iter().filter(|&&d| d > 0.0).count() as f64 / late.len() as f64
    };
    Ok(MitigationReport {
        strategy,
        n_candidates: n,
        baseline: Strategy::Single,
        pairs: matched.len(),
        delta_z,
        consistency,
        late_positive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct ZRow<'a> {
    task: &'a str,
    seed_index: u64,
    success: bool,
    z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct RocRow {
    false_positive_rate: f64,
    true_positive_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct FoldRow {
    fold: usize,
    n_train: usize,
    n_test: usize,
    intercept: f64,
    slope: f64,
    separated: bool,
    oof_auc: f64,
    raw_auc: f64,
}

/// `zscores.csv`, `roc_points.csv`, `roc_folds.csv` and `per_task.csv`.
pub fn write_separability(dir: &Path, r: &SeparabilityReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let z: Vec<ZRow> = r
        .zscores
        .iter()
        .map(|s| ZRow {
            task: &s.task_id,
            seed_index: s.episode_id,
            success: s.label,
            z: s.score,
        })
        .collect();
    let mut out = vec![dir.join("zscores.csv"), dir.join("per_task.csv")];
    write_csv(&out[0], &z)?;
    write_csv(&out[1], &r.per_task)?;
    if let Some(cv) = &r.cv {
        let pts: Vec<RocRow> = cv
            .roc
            .points
            .iter()
            .map(|&(x, y)| RocRow {
                false_positive_rate: x,
                true_positive_rate: y,
            })
            .collect();
        let folds: Vec<FoldRow> = cv
            .folds
            .iter()
            .map(|f| FoldRow {
                fold: f.fold,
                n_train: f.n_train,
                n_test: f.n_test,
                intercept: f.fit.intercept,
                slope: f.fit.slope,
                separated: f.fit.separated,
                oof_auc: f.oof_auc,
                raw_auc: f.raw_auc,
            })
            .collect();
        out.push(dir.join("roc_points.csv"));
        write_csv(&out[2], &pts)?;
        out.push(dir.join("roc_folds.csv"));
        write_csv(&out[3], &folds)?;
    }
    Ok(out)
}

/// Wide per-step table: one column per curve, blank where a curve has ended.
fn curves_table(names: &[String], curves: &[&[f64]]) -> (Vec<String>, Vec<Vec<String>>) {
    let longest = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut header = vec!["step".to_string()];
    header.extend(names.iter().cloned());
    let rows = (0..longest)
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(curves.iter().map(|c| fmt_opt(c.get(t).copied())));
            row
        })
        .collect();
    (header, rows)
}

/// `collapse_delta_z.csv` (per-step curves), `collapse_summary.csv` and `alignment.csv`.
pub fn write_collapse(dir: &Path, r: &CollapseReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let names: Vec<String> = r.cells.iter().map(CellCurve::name).collect();
    let curves: Vec<&[f64]> = r.cells.iter().map(|c| c.delta_z.as_slice()).collect();
    let (header, rows) = curves_table(&names, &curves);
    let curves_path = dir.join("collapse_delta_z.csv");
    write_table(&curves_path, &header, &rows)?;

    let mut summary = vec![];
    for c in &r.cells {
        summary.push(vec![
            c.name(),
            c.episodes.to_string(),
            fmt_opt(c.mean_delta_z),
            fmt_opt(c.late_delta_z),
            fmt_opt(r.mean_consistency.get(&c.name()).copied()),
        ]);
    }
    for m in &r.missing_cells {
        summary.push(vec![m.clone(), "0".into(), String::new(), String::new(), String::new()]);
    }
    let (p, s) = r
        .correlation
        .map(|c| (Some(c.pearson), Some(c.spearman)))
        .unwrap_or((None, None));
    summary.push(vec![
        "pearson_delta_z_consistency".into(),
        String::new(),
        fmt_opt(p),
        String::new(),
        String::new(),
    ]);
    summary.push(vec![
        "spearman_delta_z_consistency".into(),
        String::new(),
        fmt_opt(s),
        String::new(),
        String::new(),
    ]);
    let header: Vec<String> = ["cell", "episodes", "mean_delta_z", "late_delta_z", "mean_consistency"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let summary_path = dir.join("collapse_summary.csv");
    write_table(&summary_path, &header, &summary)?;

    let align_path = dir.join("alignment.csv");
    let rows: Vec<Vec<String>> = r
        .alignment
        .iter()
        .map(|(t, a)| vec![t.clone(), a.name().to_string()])
        .collect();
    write_table(&align_path, &["task".into(), "alignment".into()], &rows)?;
    Ok(vec![curves_path, summary_path, align_path])
}

/// `value_gap.csv` and `consistency_gap.csv`.
pub fn write_utility(dir: &Path, r: &UtilityReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = vec![];
    for (name, curve) in [("value_gap.csv", &r.value), ("consistency_gap.csv", &r.consistency)] {
        let path = dir.join(name);
        let (header, rows) = curves_table(&["gap".to_string()], &[curve.values.as_slice()]);
        write_table(&path, &header, &rows)?;
        out.push(path);
    }
    Ok(out)
}

/// `mitigation_<strategy>_n<N>.csv` with the latent-change and consistency difference curves.
pub fn write_mitigation(dir: &Path, r: &MitigationReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("mitigation_{}_n{}.csv", r.strategy, r.n_candidates));
    let header: Vec<String> = ["bin", "late", "delta_z_difference", "consistency_difference"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let late = late_start(r.delta_z.len());
    let rows: Vec<Vec<String>> = (0..r.delta_z.len())
        .map(|t| {
            vec![
                t.to_string(),
                (t >= late).to_string(),
                r.delta_z[t].to_string(),
                r.consistency[t].to_string(),
            ]
        })
        .collect();
    write_table(&path, &header, &rows)?;
    Ok(vec![path])
}

/// `scaling.csv`: success rate per preset, strategy and candidate count.
pub fn write_scaling(dir: &Path, rows: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("scaling.csv");
    write_csv(&path, rows)?;
    Ok(vec![path])
}
