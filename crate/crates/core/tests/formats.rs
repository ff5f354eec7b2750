use std::sync::Arc;

use htmask::annotations::{load_detections, load_via, save_detections, save_via};
use htmask::synth::{
    generate_scene, simulate_detector, DetectorClasses, DetectorSpec, GrayDist, SceneSpec,
};
use htmask::{Category, GrayImage, Instance, LabeledScene, Polygon};
use proptest::prelude::*;

fn arb_scene() -> impl Strategy<Value = LabeledScene> {
    let instance = (
        prop::collection::vec((-4.0f64..36.0, -4.0f64..36.0), 3..7),
        prop::sample::select(Category::ALL.to_vec()),
        0.0f64..=1.0,
    );
    ("[a-z_]{1,10}\\.png", prop::collection::vec(instance, 0..6)).prop_map(|(id, raw)| {
        let image = Arc::new(GrayImage::filled(32, 32, 0).unwrap());
        let mut scene = LabeledScene::new(id, image);
        for (verts, cat, score) in raw {
            if let Ok(inst) = Instance::new(Polygon::new(verts).unwrap(), cat, score, 32, 32) {
                scene.instances.push(inst);
            }
        }
        scene
    })
}

proptest! {
    #[test]
    fn detections_roundtrip(scene in arb_scene()) {
        let back = load_detections(&save_detections(&scene), scene.image.clone()).unwrap();
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn via_roundtrip(mut scene in arb_scene()) {
        for inst in &mut scene.instances {
            inst.score = 1.0;
        }
        let back = load_via(&save_via(&scene), scene.image.clone()).unwrap();
        prop_assert_eq!(back, scene);
    }
}

#[test]
fn synthetic_scene_files_roundtrip() {
    let spec = SceneSpec {
        width: 96,
        height: 80,
        n_new: 3,
        n_old: 2,
        new_gray: GrayDist { mean: 190.0, std: 8.0 },
        old_gray: GrayDist { mean: 80.0, std: 8.0 },
        background_gray: 30,
        building_size: (6, 14),
        min_gap: 1,
        seed: 11,
    };
    let gt = generate_scene(&spec).unwrap();
    let png = gt.image.encode_png().unwrap();
    let image = Arc::new(GrayImage::decode(&png).unwrap());
    assert_eq!(*image, *gt.image);
    assert_eq!(load_via(&save_via(&gt), image.clone()).unwrap(), gt);

    let det = simulate_detector(
        &gt,
        &DetectorSpec {
            recall_rate: 0.8,
            vertex_jitter: 1.3,
            label_flip_rate: 0.2,
            score_base: 0.6,
            score_noise: 0.3,
            classes: DetectorClasses::TwoClass,
            seed: 5,
        },
    )
    .unwrap();
    assert_eq!(load_detections(&save_detections(&det), image).unwrap(), det);
}
