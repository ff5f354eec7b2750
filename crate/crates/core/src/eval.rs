//! Mask IoU, greedy matching, precision/recall curves and AP / mAP.
//!
//! Matching: predictions are visited by descending score (input order breaks
//! ties) and each claims the still-unmatched ground truth of the same
//! category with the highest IoU at or above the threshold (lowest index
//! breaks IoU ties). AP is the area under the all-point interpolated
//! precision envelope.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::annotations::{Category, Instance, LabeledScene};
use crate::error::{Error, Result};
use crate::raster::PixelMask;

pub const MAP50_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(prediction index, ground-truth index, iou)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.pairs.len(),
            fp: self.unmatched_preds.len(),
            fn_: self.unmatched_gts.len(),
        }
    }
}

/// `(recall, precision)` after each prediction in rank order. The origin is
/// implicit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    points: Vec<(f64, f64)>,
    n_gt: usize,
}

impl PrCurve {
    /// Builds the curve from the TP/FP outcome of each ranked prediction.
    pub fn from_ranked(is_tp: &[bool], n_gt: usize) -> Result<Self> {
        if n_gt == 0 {
            return Err(Error::NoGroundTruth);
        }
        let mut tp = 0usize;
        let points = is_tp
            .iter()
            .enumerate()
            .map(|(k, &hit)| {
                tp += hit as usize;
                (tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64)
            })
            .collect();
        Ok(Self { points, n_gt })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn n_gt(&self) -> usize {
        self.n_gt
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn mask_iou(a: &PixelMask, b: &PixelMask) -> Result<f64> {
    a.same_dims(b)?;
    let union = a.union_area(b);
    if union == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(a.intersection_area(b) as f64 / union as f64)
}

/// Indices of `preds` by descending score; equal scores keep input order.
pub fn score_order(preds: &[Instance]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if iou_threshold > 0.0 && iou_threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "IoU threshold must be in (0, 1], got {iou_threshold}"
        )))
    }
}

pub fn match_instances(
    preds: &[Instance],
    gts: &[Instance],
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_threshold(iou_threshold)?;
    if let Some(first) = preds.first().or(gts.first()) {
        for inst in preds.iter().chain(gts) {
            first.mask.same_dims(&inst.mask)?;
        }
    }

    let mut gt_taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for p in score_order(preds) {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] || gt.category != pred.category {
                continue;
            }
            let iou = mask_iou(&pred.mask, &gt.mask)?;
            if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) => {
                gt_taken[g] = true;
                result.pairs.push((p, g, iou));
            }
            None => result.unmatched_preds.push(p),
        }
    }
    result.unmatched_gts = (0..gts.len()).filter(|&g| !gt_taken[g]).collect();
    Ok(result)
}

pub fn pr_curve(preds: &[Instance], gts: &[Instance], iou_threshold: f64) -> Result<PrCurve> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let matched = match_instances(preds, gts, iou_threshold)?;
    let mut hit = vec![false; preds.len()];
    for &(p, _, _) in &matched.pairs {
        hit[p] = true;
    }
    let ranked: Vec<bool> = score_order(preds).into_iter().map(|p| hit[p]).collect();
    PrCurve::from_ranked(&ranked, gts.len())
}

/// All-point interpolated AP. An empty curve scores 0.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let points = curve.points();
    let mut envelope: Vec<f64> = points.iter().map(|&(_, p)| p).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (&(recall, _), &precision) in points.iter().zip(&envelope) {
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub category: Category,
    pub ap: f64,
    pub counts: ConfusionCounts,
    pub n_gt: usize,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// One entry per category present in the ground truth, in category order.
    pub classes: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class APs.
    pub map: f64,
}

impl MapReport {
    pub fn class(&self, category: Category) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.category == category)
    }
}

/// Pairs scenes by `image_id`; both sides must hold the same set of ids.
fn align<'a>(
    preds: &'a [LabeledScene],
    gts: &'a [LabeledScene],
) -> Result<Vec<(&'a LabeledScene, &'a LabeledScene)>> {
    let mut gt_sorted: Vec<&LabeledScene> = gts.iter().collect();
    gt_sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut pred_sorted: Vec<&LabeledScene> = preds.iter().collect();
    pred_sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for w in gt_sorted.windows(2).chain(pred_sorted.windows(2)) {
        if w[0].image_id == w[1].image_id {
            return Err(Error::ImageIdMismatch(format!(
                "duplicate image id {:?}",
                w[0].image_id
            )));
        }
    }
    let gt_ids: BTreeSet<&str> = gt_sorted.iter().map(|s| s.image_id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = pred_sorted.iter().map(|s| s.image_id.as_str()).collect();
    if gt_ids != pred_ids {
        let missing: Vec<_> = gt_ids.symmetric_difference(&pred_ids).collect();
        return Err(Error::ImageIdMismatch(format!(
            "image ids present on only one side: {missing:?}"
        )));
    }
    Ok(pred_sorted.into_iter().zip(gt_sorted).collect())
}

struct RankedPrediction {
    score: f64,
    image: usize,
    index: usize,
    is_tp: bool,
}

/// Pools predictions per class across images, ranks them globally by score
/// (ties: image id order, then input order) and reports AP per class
/// present in the ground truth together with their mean.
pub fn mean_average_precision(
    preds: &[LabeledScene],
    gts: &[LabeledScene],
    iou_threshold: f64,
) -> Result<MapReport> {
    check_threshold(iou_threshold)?;
    let aligned = align(preds, gts)?;
    let classes: BTreeSet<Category> = gts
        .iter()
        .flat_map(|s| s.instances.iter().map(|i| i.category))
        .collect();
    if classes.is_empty() {
        return Err(Error::NoGroundTruth);
    }

    let mut out = Vec::with_capacity(classes.len());
    for category in classes {
        let per_image: Vec<(Vec<RankedPrediction>, usize)> = aligned
            .par_iter()
            .enumerate()
            .map(|(image, (pred, gt))| {
                let p: Vec<Instance> = of_class(&pred.instances, category);
                let g: Vec<Instance> = of_class(&gt.instances, category);
                let matched = match_instances(&p, &g, iou_threshold)?;
                let mut hit = vec![false; p.len()];
                for &(k, _, _) in &matched.pairs {
                    hit[k] = true;
                }
                let ranked = p
                    .iter()
                    .enumerate()
                    .map(|(index, inst)| RankedPrediction {
                        score: inst.score,
                        image,
                        index,
                        is_tp: hit[index],
                    })
                    .collect();
                Ok((ranked, g.len()))
            })
            .collect::<Result<_>>()?;

        let n_gt: usize = per_image.iter().map(|(_, n)| n).sum();
        let mut pooled: Vec<RankedPrediction> =
            per_image.into_iter().flat_map(|(r, _)| r).collect();
        pooled.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.image.cmp(&b.image))
                .then(a.index.cmp(&b.index))
        });
        let flags: Vec<bool> = pooled.iter().map(|r| r.is_tp).collect();
        let curve = PrCurve::from_ranked(&flags, n_gt)?;
        let tp = flags.iter().filter(|&&t| t).count();
        out.push(ClassMetrics {
            category,
            ap: average_precision(&curve),
            counts: ConfusionCounts {
                tp,
                fp: flags.len() - tp,
                fn_: n_gt - tp,
            },
            n_gt,
            curve,
        });
    }
    let map = out.iter().map(|c| c.ap).sum::<f64>() / out.len() as f64;
    Ok(MapReport { classes: out, map })
}

/// [`mean_average_precision`] at IoU 0.5.
pub fn map_at_50(preds: &[LabeledScene], gts: &[LabeledScene]) -> Result<MapReport> {
    mean_average_precision(preds, gts, MAP50_IOU)
}

fn of_class(instances: &[Instance], category: Category) -> Vec<Instance> {
    instances
        .iter()
        .filter(|i| i.category == category)
        .cloned()
        .collect()
}
