//! Reference implementations used only by tests.
//!
//! The reference evaluator shares no code with `htmask::eval`: IoU is
//! counted pixel by pixel, the matching is found by enumerating every
//! injective same-class assignment, and AP is a rank sum over exact
//! rational precisions.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use htmask::synth::SceneRng;
use htmask::{Category, GrayImage, Instance, LabeledScene, PixelMask, Polygon};

pub fn pixel_iou(a: &PixelMask, b: &PixelMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.get(x, y), b.get(x, y));
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
    }
    inter as f64 / union as f64
}

fn rank(preds: &[Instance]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    // descending score, then input position
    idx.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Lexicographic quality of one prediction's outcome: matched beats
/// unmatched, then higher IoU, then lower ground-truth index.
type Quality = (u8, f64, i64);

/// TP flags (indexed like `preds`) of the assignment that lexicographically
/// maximises the rank-ordered outcome qualities over every valid injective
/// assignment. This is the outcome greedy matching must reproduce.
pub fn exhaustive_match(preds: &[Instance], gts: &[Instance], thr: f64) -> Vec<bool> {
    let order = rank(preds);
    let iou: Vec<Vec<Option<f64>>> = order
        .iter()
        .map(|&p| {
            gts.iter()
                .map(|g| {
                    if g.category != preds[p].category {
                        return None;
                    }
                    let v = pixel_iou(&preds[p].mask, &g.mask);
                    (v >= thr).then_some(v)
                })
                .collect()
        })
        .collect();

    fn search(
        k: usize,
        iou: &[Vec<Option<f64>>],
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<Quality>, Vec<Option<usize>>)>,
    ) {
        if k == iou.len() {
            let q: Vec<Quality> = current
                .iter()
                .enumerate()
                .map(|(r, m)| match m {
                    Some(g) => (1, iou[r][*g].unwrap(), -(*g as i64)),
                    None => (0, 0.0, 0),
                })
                .collect();
            let better = match best {
                None => true,
                Some((bq, _)) => q.partial_cmp(bq) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((q, current.clone()));
            }
            return;
        }
        current.push(None);
        search(k + 1, iou, used, current, best);
        current.pop();
        for g in 0..used.len() {
            if !used[g] && iou[k][g].is_some() {
                used[g] = true;
                current.push(Some(g));
                search(k + 1, iou, used, current, best);
                current.pop();
                used[g] = false;
            }
        }
    }

    let mut best = None;
    search(0, &iou, &mut vec![false; gts.len()], &mut Vec::new(), &mut best);
    let (_, assignment) = best.expect("the empty assignment always exists");
    let mut tp = vec![false; preds.len()];
    for (r, m) in assignment.iter().enumerate() {
        tp[order[r]] = m.is_some();
    }
    tp
}

/// AP as `(1 / n_gt) * sum over TP ranks k of max_{j >= k} precision_j`,
/// with precisions compared as exact fractions.
pub fn rank_sum_ap(ranked_tp: &[bool], n_gt: usize) -> f64 {
    let mut frac = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0u64;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        tp += hit as u64;
        frac.push((tp, k as u64 + 1));
    }
    let mut total = 0.0;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        if !hit {
            continue;
        }
        let best = frac[k..]
            .iter()
            .copied()
            .max_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)))
            .unwrap();
        total += best.0 as f64 / best.1 as f64;
    }
    total / n_gt as f64
}

/// Per-class AP and their mean from the reference route. Scenes pair by id.
pub fn reference_map(
    preds: &[LabeledScene],
    gts: &[LabeledScene],
    thr: f64,
) -> (BTreeMap<Category, f64>, f64) {
    let mut pairs: Vec<(&LabeledScene, &LabeledScene)> = gts
        .iter()
        .map(|g| (preds.iter().find(|p| p.image_id == g.image_id).unwrap(), g))
        .collect();
    pairs.sort_by(|a, b| a.1.image_id.cmp(&b.1.image_id));

    let mut classes: Vec<Category> = gts
        .iter()
        .flat_map(|s| s.instances.iter().map(|i| i.category))
        .collect();
    classes.sort();
    classes.dedup();

    let mut aps = BTreeMap::new();
    for &c in &classes {
        // (score, image, index, tp)
        let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
        let mut n_gt = 0;
        for (img, (p, g)) in pairs.iter().enumerate() {
            let pc: Vec<Instance> = p.instances.iter().filter(|i| i.category == c).cloned().collect();
            let gc: Vec<Instance> = g.instances.iter().filter(|i| i.category == c).cloned().collect();
            n_gt += gc.len();
            let tp = exhaustive_match(&pc, &gc, thr);
            for (k, inst) in pc.iter().enumerate() {
                pooled.push((inst.score, img, k, tp[k]));
            }
        }
        pooled.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let flags: Vec<bool> = pooled.iter().map(|t| t.3).collect();
        aps.insert(c, rank_sum_ap(&flags, n_gt));
    }
    let mean = aps.values().sum::<f64>() / aps.len() as f64;
    (aps, mean)
}

/// Random evaluation fixture: one or two 12x12 images holding at most six
/// predictions and six ground truths in total. Predictions are often
/// perturbed copies of ground truths so that matches, near misses and
/// duplicate claims all occur; scores come from a coarse grid to force ties.
pub fn random_fixture(rng: &mut SceneRng) -> (Vec<LabeledScene>, Vec<LabeledScene>) {
    const SIDE: usize = 12;
    let image = Arc::new(GrayImage::filled(SIDE, SIDE, 0).unwrap());
    let n_images = 1 + rng.below(2);
    let n_gt_total = rng.below(7);
    let n_pred_total = rng.below(7);
    let cat = |rng: &mut SceneRng| if rng.below(2) == 0 { Category::New } else { Category::Old };
    let random_rect = |rng: &mut SceneRng| {
        let w = 2 + rng.below(5);
        let h = 2 + rng.below(5);
        let x = rng.below(SIDE - w + 1);
        let y = rng.below(SIDE - h + 1);
        (x as f64, y as f64, w as f64, h as f64)
    };

    let mut gts: Vec<LabeledScene> = (0..n_images)
        .map(|k| LabeledScene::new(format!("img{k}"), image.clone()))
        .collect();
    let mut preds = gts.clone();
    let mut gt_rects: Vec<(usize, (f64, f64, f64, f64), Category)> = Vec::new();
    for _ in 0..n_gt_total {
        let img = rng.below(n_images);
        let r = random_rect(rng);
        let c = cat(rng);
        gt_rects.push((img, r, c));
        let poly = Polygon::rect(r.0, r.1, r.2, r.3).unwrap();
        gts[img].instances.push(Instance::new(poly, c, 1.0, SIDE, SIDE).unwrap());
    }
    for _ in 0..n_pred_total {
        let (img, r, c) = if !gt_rects.is_empty() && rng.below(3) != 0 {
            let (img, r, c) = gt_rects[rng.below(gt_rects.len())];
            let dx = rng.below(3) as f64 - 1.0;
            let dy = rng.below(3) as f64 - 1.0;
            let c = if rng.below(6) == 0 { c.flipped() } else { c };
            (img, (r.0 + dx, r.1 + dy, r.2, r.3), c)
        } else {
            (rng.below(n_images), random_rect(rng), cat(rng))
        };
        let score = (1 + rng.below(5)) as f64 / 5.0;
        let poly = Polygon::rect(r.0, r.1, r.2, r.3).unwrap();
        match Instance::new(poly, c, score, SIDE, SIDE) {
            Ok(inst) => preds[img].instances.push(inst),
            Err(htmask::Error::EmptyMask) => {}
            Err(e) => panic!("{e}"),
        }
    }
    (preds, gts)
}

pub fn has_ground_truth(gts: &[LabeledScene]) -> bool {
    gts.iter().any(|s| !s.instances.is_empty())
}
