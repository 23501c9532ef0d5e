//! Instance-level F1 and point-wise recall under the symmetry-aware distance.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::so3::{symmetric_pose_distance, Pose, Symmetry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Distance tolerance, mm.
    pub t_e: f64,
    /// Minimum visible fraction relative to the most visible instance.
    pub t_v: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { t_e: 5.0, t_v: 0.4 }
    }
}

impl EvalConfig {
    pub fn new(t_e: f64, t_v: f64) -> Result<Self> {
        let c = EvalConfig { t_e, t_v };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_e > 0.0) || !self.t_e.is_finite() {
            return Err(invalid(format!("t_e must be positive, got {}", self.t_e)));
        }
        if !(self.t_v > 0.0 && self.t_v < 1.0) {
            return Err(invalid(format!("t_v must lie in (0, 1), got {}", self.t_v)));
        }
        Ok(())
    }
}

/// Indices of instances whose visible point count exceeds `t_v` times the
/// largest count.
pub fn count_visible_gt(visible_counts: &[usize], t_v: f64) -> Vec<usize> {
    let max = visible_counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Vec::new();
    }
    visible_counts.iter().enumerate().filter(|(_, &n)| n as f64 / max as f64 > t_v).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub pred: usize,
    /// Index into the ground-truth list passed to [`match_predictions`].
    pub gt: usize,
    /// Mean symmetry-aware distance, mm.
    pub distance: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    /// Matched pairs in the order they were accepted.
    pub matches: Vec<MatchRecord>,
    pub tp: usize,
}

/// Mean symmetry-aware distance for every (pred, gt) pair, row-major by pred.
pub fn pair_distances(
    preds: &[Pose],
    gts: &[Pose],
    model: &[Vector3<f64>],
    symmetry: &Symmetry,
) -> Result<Vec<Vec<f64>>> {
    preds
        .par_iter()
        .map(|p| {
            gts.iter()
                .map(|g| Ok(symmetric_pose_distance(model, g, p, &symmetry.group, &symmetry.mask)?.mean))
                .collect()
        })
        .collect()
}

/// Greedy one-to-one matching in ascending distance (ties: lowest pred, then
/// lowest gt index).
pub fn match_predictions(
    preds: &[Pose],
    gts: &[Pose],
    model: &[Vector3<f64>],
    symmetry: &Symmetry,
    t_e: f64,
) -> Result<MatchTable> {
    let dist = pair_distances(preds, gts, model, symmetry)?;
    Ok(greedy_match(&dist, t_e))
}

/// Greedy matching over a precomputed distance table.
pub fn greedy_match(dist: &[Vec<f64>], t_e: f64) -> MatchTable {
    let mut pairs: Vec<(f64, usize, usize)> =
        dist.iter().enumerate().flat_map(|(p, row)| row.iter().enumerate().map(move |(g, &d)| (d, p, g))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_gt = dist.first().map_or(0, Vec::len);
    let mut pred_used = vec![false; dist.len()];
    let mut gt_used = vec![false; n_gt];
    let mut matches = Vec::new();
    for (d, p, g) in pairs {
        if pred_used[p] || gt_used[g] {
            continue;
        }
        pred_used[p] = true;
        gt_used[g] = true;
        matches.push(MatchRecord { pred: p, gt: g, distance: d, true_positive: d < t_e });
    }
    let tp = matches.iter().filter(|m| m.true_positive).count();
    MatchTable { matches, tp }
}

pub fn f1_inst(tp: usize, n_pred: usize, n_gt: usize) -> f64 {
    let denom = n_pred + n_gt;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Point counts behind the point-wise recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecallCounts {
    pub hits: u64,
    pub total: u64,
}

impl RecallCounts {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// Counts model points within `t_e` of their symmetry-corrected ground-truth
/// position, using each ground truth's matched prediction. Unmatched ground
/// truths contribute no hits.
pub fn pointwise_recall(
    table: &MatchTable,
    preds: &[Pose],
    gts: &[Pose],
    model: &[Vector3<f64>],
    symmetry: &Symmetry,
    t_e: f64,
) -> Result<RecallCounts> {
    let mut hits = 0u64;
    for m in &table.matches {
        let d = symmetric_pose_distance(model, &gts[m.gt], &preds[m.pred], &symmetry.group, &symmetry.mask)?;
        hits += d.per_point.iter().filter(|&&x| x < t_e).count() as u64;
    }
    Ok(RecallCounts { hits, total: (gts.len() * model.len()) as u64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_gt: usize,
    /// Predictions counted in F1 (excludes ignored ones).
    pub n_pred: usize,
    /// Predictions that landed on an instance excluded by the visibility
    /// filter; neither true nor false positives.
    pub n_ignored: usize,
    pub tp: usize,
    pub f1_inst: f64,
    pub recall: f64,
    pub recall_counts: RecallCounts,
    /// Matches with `gt` given as the scene instance index.
    pub per_instance: Vec<MatchRecord>,
}

impl EvalReport {
    /// Pools counts over several scenes; the per-instance table is dropped.
    pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
        let n_gt = reports.iter().map(|r| r.n_gt).sum();
        let n_pred = reports.iter().map(|r| r.n_pred).sum();
        let n_ignored = reports.iter().map(|r| r.n_ignored).sum();
        let tp = reports.iter().map(|r| r.tp).sum();
        let recall_counts = RecallCounts {
            hits: reports.iter().map(|r| r.recall_counts.hits).sum(),
            total: reports.iter().map(|r| r.recall_counts.total).sum(),
        };
        EvalReport {
            n_gt,
            n_pred,
            n_ignored,
            tp,
            f1_inst: f1_inst(tp, n_pred, n_gt),
            recall: recall_counts.value(),
            recall_counts,
            per_instance: Vec::new(),
        }
    }
}

/// Evaluates predicted poses against all ground-truth instances of a scene,
/// keeping only the sufficiently visible ones. A prediction outside every
/// true-positive pair that lies within `t_e` of a filtered-out instance is
/// ignored instead of counted as a false positive.
pub fn evaluate(
    preds: &[Pose],
    gts: &[Pose],
    visible_counts: &[usize],
    model: &[Vector3<f64>],
    symmetry: &Symmetry,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if gts.len() != visible_counts.len() {
        return Err(invalid("one visible count per ground-truth instance is required"));
    }
    if model.is_empty() {
        return Err(invalid("evaluation model is empty"));
    }
    let visible = count_visible_gt(visible_counts, config.t_v);
    let visible_gts: Vec<Pose> = visible.iter().map(|&i| gts[i]).collect();
    let table = match_predictions(preds, &visible_gts, model, symmetry, config.t_e)?;
    let recall_counts = pointwise_recall(&table, preds, &visible_gts, model, symmetry, config.t_e)?;
    let hidden_gts: Vec<Pose> = (0..gts.len()).filter(|i| !visible.contains(i)).map(|i| gts[i]).collect();
    let in_tp: Vec<bool> =
        (0..preds.len()).map(|p| table.matches.iter().any(|m| m.pred == p && m.true_positive)).collect();
    let to_hidden = pair_distances(preds, &hidden_gts, model, symmetry)?;
    let n_ignored = (0..preds.len()).filter(|&p| !in_tp[p] && to_hidden[p].iter().any(|&d| d < config.t_e)).count();
    let n_pred = preds.len() - n_ignored;
    let per_instance = table.matches.iter().map(|m| MatchRecord { gt: visible[m.gt], ..m.clone() }).collect();
    Ok(EvalReport {
        n_gt: visible.len(),
        n_pred,
        n_ignored,
        tp: table.tp,
        f1_inst: f1_inst(table.tp, n_pred, visible.len()),
        recall: recall_counts.value(),
        recall_counts,
        per_instance,
    })
}
