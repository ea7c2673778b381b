//! Floor plan scoring: corner recall/precision on a 256x256 scene grid and
//! room recall/precision at IoU thresholds, after similarity alignment of the
//! estimated poses to ground truth.

use nalgebra::Matrix2;

use crate::geometry::{polygon_iou, RoomPolygon, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("alignment needs at least 3 pose pairs with common timestamps, got {0}")]
    TooFewCorrespondences(usize),
    #[error("pose configuration is rank deficient (all points coincide)")]
    RankDeficient,
}

/// Grid side used by the corner metric.
pub const CORNER_GRID: usize = 256;
/// True-positive gate for the corner metric, in grid pixels.
pub const CORNER_GATE_PX: f64 = 10.0;
/// Room IoU thresholds reported in the evaluation.
pub const IOU_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// 2D similarity transform `p -> scale * R p + t`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity2 {
    pub rotation: Matrix2<f64>,
    pub scale: f64,
    pub translation: Vec2,
}

impl Similarity2 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix2::identity(),
            scale: 1.0,
            translation: Vec2::zeros(),
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply_polygon(&self, poly: &RoomPolygon) -> RoomPolygon {
        let corners = poly.corners().iter().map(|&c| self.apply(c)).collect();
        RoomPolygon::new(corners, poly.room_id).expect("similarity preserves validity")
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

/// Least-squares similarity aligning predicted points onto ground truth:
/// minimizes `sum |gt_i - (c R pred_i + t)|^2` in closed form (Umeyama).
///
/// Inputs pair up by timestamp; only common timestamps contribute.
pub fn align_to_ground_truth(
    pred: &[(u64, Vec2)],
    gt: &[(u64, Vec2)],
) -> Result<Similarity2, MetricsError> {
    let mut pairs: Vec<(Vec2, Vec2)> = Vec::new();
    let gt_by_ts: std::collections::HashMap<u64, Vec2> = gt.iter().copied().collect();
    for &(ts, p) in pred {
        if let Some(&g) = gt_by_ts.get(&ts) {
            pairs.push((p, g));
        }
    }
    if pairs.len() < 3 {
        return Err(MetricsError::TooFewCorrespondences(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut mean_p = Vec2::zeros();
    let mut mean_g = Vec2::zeros();
    for &(p, g) in &pairs {
        mean_p += p;
        mean_g += g;
    }
    mean_p /= n;
    mean_g /= n;
    let mut cov = Matrix2::zeros();
    let mut var_p = 0.0;
    for &(p, g) in &pairs {
        let dp = p - mean_p;
        let dg = g - mean_g;
        cov += dg * dp.transpose();
        var_p += dp.norm_squared();
    }
    cov /= n;
    var_p /= n;
    if var_p < 1e-15 {
        return Err(MetricsError::RankDeficient);
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let det_sign = (u * v_t).determinant().signum();
    let s = Matrix2::from_diagonal(&nalgebra::Vector2::new(1.0, det_sign));
    let rotation = u * s * v_t;
    let scale = (svd.singular_values[0] + det_sign * svd.singular_values[1]) / var_p;
    let translation = mean_g - scale * (rotation * mean_p);
    Ok(Similarity2 {
        rotation,
        scale,
        translation,
    })
}

/// Counts plus derived rates for one matching task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub recall: f64,
    pub precision: f64,
}

impl PrecisionRecall {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
        }
    }
}

/// World window the corner grid is stretched over.
#[derive(Debug, Clone, Copy)]
pub struct SceneBounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl SceneBounds {
    /// Union bounding box of both corner sets plus a 5% margin.
    pub fn around(pred: &[Vec2], gt: &[Vec2]) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pred.iter().chain(gt) {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        if !min.x.is_finite() {
            min = Vec2::zeros();
            max = Vec2::new(1.0, 1.0);
        }
        let span = (max - min).amax().max(1e-9);
        let margin = 0.05 * span;
        Self {
            min: min - Vec2::new(margin, margin),
            max: max + Vec2::new(margin, margin),
        }
    }

    fn to_pixels(&self, p: Vec2) -> Vec2 {
        let span = self.max - self.min;
        Vec2::new(
            (p.x - self.min.x) / span.x.max(1e-12) * CORNER_GRID as f64,
            (p.y - self.min.y) / span.y.max(1e-12) * CORNER_GRID as f64,
        )
    }
}

/// Corner recall/precision on the 256x256 scene grid.
///
/// Corners of both sets are projected onto the grid; each ground-truth corner
/// accepts the closest unmatched prediction within 10 pixels as its true
/// positive. Predictions left over (too far, or beaten to a ground truth by a
/// closer one) count as false positives; unmatched ground truths as misses.
pub fn corner_metric(pred: &[Vec2], gt: &[Vec2], bounds: &SceneBounds) -> PrecisionRecall {
    let pred_px: Vec<Vec2> = pred.iter().map(|&p| bounds.to_pixels(p)).collect();
    let gt_px: Vec<Vec2> = gt.iter().map(|&p| bounds.to_pixels(p)).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt_px.iter().enumerate() {
        for (pi, p) in pred_px.iter().enumerate() {
            let d = (g - p).norm();
            if d <= CORNER_GATE_PX {
                candidates.push((d, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_taken = vec![false; gt.len()];
    let mut pred_taken = vec![false; pred.len()];
    let mut tp = 0;
    for (_, gi, pi) in candidates {
        if !gt_taken[gi] && !pred_taken[pi] {
            gt_taken[gi] = true;
            pred_taken[pi] = true;
            tp += 1;
        }
    }
    PrecisionRecall::from_counts(tp, pred.len() - tp, gt.len() - tp)
}

/// Room recall/precision at one IoU threshold.
///
/// Pairs greedily by descending IoU, one-to-one; a matched pair counts as a
/// true positive when its IoU clears the threshold. `resolution` is the
/// rasterization cell size handed to [`polygon_iou`].
pub fn room_metric(
    pred: &[RoomPolygon],
    gt: &[RoomPolygon],
    iou_threshold: f64,
    resolution: f64,
) -> PrecisionRecall {
    let (pr, _) = room_metric_with_pairs(pred, gt, iou_threshold, resolution);
    pr
}

/// [`room_metric`] plus the matched `(pred_idx, gt_idx, iou)` table.
pub fn room_metric_with_pairs(
    pred: &[RoomPolygon],
    gt: &[RoomPolygon],
    iou_threshold: f64,
    resolution: f64,
) -> (PrecisionRecall, Vec<(usize, usize, f64)>) {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            let iou = polygon_iou(p, g, resolution);
            if iou > 0.0 {
                candidates.push((iou, pi, gi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_taken = vec![false; pred.len()];
    let mut gt_taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    let mut tp = 0;
    for (iou, pi, gi) in candidates {
        if !pred_taken[pi] && !gt_taken[gi] {
            pred_taken[pi] = true;
            gt_taken[gi] = true;
            pairs.push((pi, gi, iou));
            if iou >= iou_threshold {
                tp += 1;
            }
        }
    }
    (
        PrecisionRecall::from_counts(tp, pred.len() - tp, gt.len() - tp),
        pairs,
    )
}

/// Full evaluation report, one scene.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub corner: PrecisionRecall,
    /// Room recall/precision per threshold in [`IOU_THRESHOLDS`] order.
    pub rooms: Vec<(f64, PrecisionRecall)>,
    /// Matched room pairs `(pred_room_id, gt_index, iou)`.
    pub room_pairs: Vec<(usize, usize, f64)>,
    pub alignment: Similarity2,
    /// Mean shape-solve time per room, when the prediction carries one.
    pub runtime_per_room_seconds: Option<f64>,
}

impl EvalReport {
    /// Machine-parseable key/value rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("corner_recall = {:.6}\n", self.corner.recall));
        out.push_str(&format!("corner_precision = {:.6}\n", self.corner.precision));
        for (threshold, pr) in &self.rooms {
            out.push_str(&format!(
                "room_recall_iou_{threshold:.1} = {:.6}\n",
                pr.recall
            ));
            out.push_str(&format!(
                "room_precision_iou_{threshold:.1} = {:.6}\n",
                pr.precision
            ));
        }
        out.push_str(&format!("alignment_scale = {:.9}\n", self.alignment.scale));
        out.push_str(&format!(
            "alignment_rotation_rad = {:.9}\n",
            self.alignment.angle()
        ));
        if let Some(rt) = self.runtime_per_room_seconds {
            out.push_str(&format!("runtime_per_room_seconds = {rt:.3}\n"));
        }
        out.push_str("# per-room IoU\n");
        for (pred_id, gt_idx, iou) in &self.room_pairs {
            out.push_str(&format!("room_iou_pred_{pred_id}_gt_{gt_idx} = {iou:.6}\n"));
        }
        out
    }
}
