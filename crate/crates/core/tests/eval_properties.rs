mod common;

use htmask::eval::{
    average_precision, map_at_50, mask_iou, match_instances, pr_curve, score_order, PrCurve,
};
use htmask::synth::SceneRng;
use htmask::{Category, GrayImage, Instance, LabeledScene, PixelMask, Polygon};
use proptest::prelude::*;

fn fixture(seed: u64) -> (Vec<LabeledScene>, Vec<LabeledScene>) {
    common::random_fixture(&mut SceneRng::new(seed))
}

#[test]
fn greedy_matches_exhaustive_reference() {
    let mut checked = 0;
    for seed in 0..400u64 {
        let (preds, gts) = fixture(seed);
        for (p, g) in preds.iter().zip(&gts) {
            let m = match_instances(&p.instances, &g.instances, 0.5).unwrap();
            let mut tp = vec![false; p.instances.len()];
            for &(k, _, _) in &m.pairs {
                tp[k] = true;
            }
            assert_eq!(tp, common::exhaustive_match(&p.instances, &g.instances, 0.5), "seed {seed}");
        }
        if !common::has_ground_truth(&gts) {
            continue;
        }
        let report = map_at_50(&preds, &gts).unwrap();
        let (aps, mean) = common::reference_map(&preds, &gts, 0.5);
        for c in &report.classes {
            assert!((c.ap - aps[&c.category]).abs() <= 1e-12, "seed {seed}");
        }
        assert!((report.map - mean).abs() <= 1e-12, "seed {seed}");
        checked += 1;
    }
    assert!(checked > 300);
}

#[test]
fn two_prediction_single_gt_trace() {
    let gt = Instance::new(Polygon::rect(0.0, 0.0, 4.0, 4.0).unwrap(), Category::New, 1.0, 8, 8).unwrap();
    let mut a = gt.clone();
    a.score = 0.9;
    let mut b = gt.clone();
    b.score = 0.8;
    let m = match_instances(&[b.clone(), a.clone()], &[gt.clone()], 0.5).unwrap();
    assert_eq!(m.pairs, vec![(1, 0, 1.0)]);
    assert_eq!(m.unmatched_preds, vec![0]);
    let curve = pr_curve(&[b, a], &[gt], 0.5).unwrap();
    assert_eq!(curve.points(), &[(1.0, 1.0), (1.0, 0.5)]);
}

fn random_mask(bits: &[bool]) -> PixelMask {
    let mut m = PixelMask::empty(9, 7);
    for (i, &b) in bits.iter().enumerate() {
        if b {
            m.set(i % 9, i / 9);
        }
    }
    m
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in prop::collection::vec(any::<bool>(), 63), b in prop::collection::vec(any::<bool>(), 63)) {
        let (ma, mb) = (random_mask(&a), random_mask(&b));
        match (mask_iou(&ma, &mb), mask_iou(&mb, &ma)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert!((x - common::pixel_iou(&ma, &mb)).abs() == 0.0);
            }
            (Err(_), Err(_)) => prop_assert!(ma.is_empty() && mb.is_empty()),
            _ => prop_assert!(false, "asymmetric failure"),
        }
        if !ma.is_empty() {
            prop_assert_eq!(mask_iou(&ma, &ma).unwrap(), 1.0);
        }
    }

    #[test]
    fn ap_depends_only_on_score_order(seed in 0u64..5000, scale in 0.01f64..1.0, offset in 0.0f64..0.5) {
        let (preds, gts) = fixture(seed);
        prop_assume!(common::has_ground_truth(&gts));
        let before = map_at_50(&preds, &gts).unwrap();
        let mut rescaled = preds.clone();
        for s in &mut rescaled {
            for i in &mut s.instances {
                i.score = (i.score * scale + offset) / (1.0 + offset);
            }
        }
        let after = map_at_50(&rescaled, &gts).unwrap();
        prop_assert_eq!(before.map, after.map);
    }

    #[test]
    fn raising_a_matched_score_keeps_the_match(seed in 0u64..5000, pick in any::<prop::sample::Index>()) {
        let (preds, gts) = fixture(seed);
        let (p, g) = (&preds[0].instances, &gts[0].instances);
        let m = match_instances(p, g, 0.5).unwrap();
        prop_assume!(!m.pairs.is_empty());
        let (k, _, _) = m.pairs[pick.index(m.pairs.len())];
        let mut raised = p.clone();
        raised[k].score = 1.0;
        let m2 = match_instances(&raised, g, 0.5).unwrap();
        prop_assert!(m2.pairs.iter().any(|&(q, _, _)| q == k));
    }

    #[test]
    fn envelope_dominates_raw_curve(flags in prop::collection::vec(any::<bool>(), 0..30), extra_gt in 0usize..5) {
        let n_gt = flags.iter().filter(|&&f| f).count() + extra_gt;
        prop_assume!(n_gt > 0);
        let curve = PrCurve::from_ranked(&flags, n_gt).unwrap();
        let mut raw = 0.0;
        let mut prev = 0.0;
        for &(r, p) in curve.points() {
            raw += (r - prev) * p;
            prev = r;
        }
        let ap = average_precision(&curve);
        prop_assert!(raw <= ap + 1e-15);
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert!((ap - common::rank_sum_ap(&flags, n_gt)).abs() <= 1e-12);
        for w in curve.points().windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
        }
    }

    #[test]
    fn duplicate_below_saturated_scene_never_helps(seed in 0u64..5000, dup_score in 0.0f64..0.2) {
        // saturate: every ground truth predicted exactly at score >= 0.2
        let (_, gts) = fixture(seed);
        prop_assume!(common::has_ground_truth(&gts));
        let mut preds = gts.clone();
        for s in &mut preds {
            for (k, i) in s.instances.iter_mut().enumerate() {
                i.score = 0.2 + 0.1 * k as f64;
            }
        }
        let base = map_at_50(&preds, &gts).unwrap().map;
        let target = preds.iter().position(|s| !s.instances.is_empty()).unwrap();
        let mut dup = preds[target].instances[0].clone();
        dup.score = dup_score;
        preds[target].instances.push(dup);
        prop_assert!(map_at_50(&preds, &gts).unwrap().map <= base);
    }
}

#[test]
fn score_order_is_stable() {
    let img = GrayImage::filled(4, 4, 0).unwrap();
    let inst = |s: f64| {
        Instance::new(Polygon::rect(0.0, 0.0, 2.0, 2.0).unwrap(), Category::Old, s, img.width(), img.height())
            .unwrap()
    };
    let preds = [inst(0.5), inst(0.9), inst(0.5), inst(1.0)];
    assert_eq!(score_order(&preds), vec![3, 1, 0, 2]);
}
