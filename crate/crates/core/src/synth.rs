//! Seeded synthetic villages and a detector simulator standing in for the
//! one-class and two-class segmentation models.
//!
//! # Random stream
//!
//! Every generator is `xoshiro256++` seeded through `SplitMix64`
//! (`Xoshiro256PlusPlus::seed_from_u64`). Draws are derived from `next_u64`
//! only, so other implementations can reproduce fixtures bit-exactly:
//!
//! * uniform `u = (next_u64 >> 11) * 2^-53`, in `[0, 1)`
//! * integer below `n`: `floor(u * n)`
//! * normal: Box-Muller cosine branch, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`
//!
//! [`generate_scene`] consumes the stream in this order: for each building
//! (all new ones, then all old ones) placement attempts of four draws each
//! (width, height, x, y); then, building by building, one normal per
//! footprint pixel in row-major order, skipped when the class std is 0.
//!
//! [`simulate_detector`] draws per ground-truth instance, in order: the
//! emit test, then (only if emitted) `dx, dy` per vertex, the flip test and
//! the score noise.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use serde::{Deserialize, Serialize};

use crate::annotations::{Category, Instance, LabeledScene};
use crate::error::{Error, Result};
use crate::raster::{GrayImage, Polygon};

/// Placement attempts per building before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrayDist {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_new: usize,
    pub n_old: usize,
    pub new_gray: GrayDist,
    pub old_gray: GrayDist,
    pub background_gray: u8,
    /// `[min, max]` rectangle side length in pixels, inclusive.
    pub building_size: (usize, usize),
    pub min_gap: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty frame {}x{}", self.width, self.height));
        }
        for (name, d) in [("new_gray", self.new_gray), ("old_gray", self.old_gray)] {
            if !(0.0..=255.0).contains(&d.mean) {
                return bad(format!("{name}.mean {} outside [0, 255]", d.mean));
            }
            if !(d.std >= 0.0 && d.std.is_finite()) {
                return bad(format!("{name}.std {} must be finite and >= 0", d.std));
            }
        }
        let (lo, hi) = self.building_size;
        if lo == 0 || lo >= hi {
            return bad(format!("building_size needs 0 < min < max, got [{lo}, {hi}]"));
        }
        if hi > self.width.min(self.height) {
            return bad(format!(
                "building_size max {hi} exceeds the {}x{} frame",
                self.width, self.height
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorClasses {
    OneClass,
    TwoClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub recall_rate: f64,
    pub vertex_jitter: f64,
    pub label_flip_rate: f64,
    pub score_base: f64,
    pub score_noise: f64,
    pub classes: DetectorClasses,
    #[serde(default)]
    pub seed: u64,
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("recall_rate", self.recall_rate),
            ("label_flip_rate", self.label_flip_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} {p} outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("vertex_jitter", self.vertex_jitter),
            ("score_noise", self.score_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} {v} must be finite and >= 0")));
            }
        }
        if !self.score_base.is_finite() {
            return Err(Error::InvalidSpec("score_base must be finite".into()));
        }
        Ok(())
    }
}

/// The documented random stream over `xoshiro256++`.
pub struct SceneRng(Xoshiro256PlusPlus);

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform in `[-half_width, half_width)`.
    pub fn symmetric(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.uniform() - 1.0)
    }
}

/// Independent seed for the `index`-th member of `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(master);
    let base = sm.next_u64();
    let mut sm = SplitMix64::seed_from_u64(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mixed = sm.next_u64();
    SplitMix64::seed_from_u64(mixed.wrapping_add(index)).next_u64()
}

#[derive(Debug, Clone, Copy)]
struct Footprint {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Footprint {
    fn separated(&self, other: &Footprint, gap: usize) -> bool {
        self.x + self.w + gap <= other.x
            || other.x + other.w + gap <= self.x
            || self.y + self.h + gap <= other.y
            || other.y + other.h + gap <= self.y
    }
}

/// Draws a scene of non-overlapping rectangular buildings on a uniform
/// background. The image id is `scene_<seed>.png`.
pub fn generate_scene(spec: &SceneSpec) -> Result<LabeledScene> {
    spec.validate()?;
    let mut rng = SceneRng::new(spec.seed);
    let labels: Vec<Category> = std::iter::repeat(Category::New)
        .take(spec.n_new)
        .chain(std::iter::repeat(Category::Old).take(spec.n_old))
        .collect();

    let (lo, hi) = spec.building_size;
    let mut placed: Vec<Footprint> = Vec::with_capacity(labels.len());
    for _ in &labels {
        let mut found = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let w = lo + rng.below(hi - lo + 1);
            let h = lo + rng.below(hi - lo + 1);
            let x = rng.below(spec.width - w + 1);
            let y = rng.below(spec.height - h + 1);
            let cand = Footprint { x, y, w, h };
            if placed.iter().all(|p| p.separated(&cand, spec.min_gap)) {
                found = Some(cand);
                break;
            }
        }
        match found {
            Some(f) => placed.push(f),
            None => {
                return Err(Error::PlacementInfeasible {
                    placed: placed.len(),
                    requested: labels.len(),
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let mut data = vec![spec.background_gray; spec.width * spec.height];
    for (f, &cat) in placed.iter().zip(&labels) {
        let dist = if cat == Category::New {
            spec.new_gray
        } else {
            spec.old_gray
        };
        for y in f.y..f.y + f.h {
            for x in f.x..f.x + f.w {
                let v = if dist.std == 0.0 {
                    dist.mean
                } else {
                    dist.mean + dist.std * rng.normal()
                };
                data[y * spec.width + x] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let image = Arc::new(GrayImage::new(spec.width, spec.height, data)?);
    let mut scene = LabeledScene::new(format!("scene_{}.png", spec.seed), image);
    for (f, &cat) in placed.iter().zip(&labels) {
        let poly = Polygon::rect(f.x as f64, f.y as f64, f.w as f64, f.h as f64)?;
        scene
            .instances
            .push(Instance::new(poly, cat, 1.0, spec.width, spec.height)?);
    }
    Ok(scene)
}

/// Emits a noisy copy of `gt` as a detector would. A jittered polygon that
/// no longer covers any pixel centre is dropped like a missed detection.
pub fn simulate_detector(gt: &LabeledScene, spec: &DetectorSpec) -> Result<LabeledScene> {
    spec.validate()?;
    let mut rng = SceneRng::new(spec.seed);
    let (w, h) = (gt.image.width(), gt.image.height());
    let mut out = LabeledScene::new(gt.image_id.clone(), gt.image.clone());
    for inst in &gt.instances {
        if rng.uniform() >= spec.recall_rate {
            continue;
        }
        let vertices: Vec<(f64, f64)> = inst
            .polygon
            .vertices()
            .iter()
            .map(|&(x, y)| {
                let dx = rng.symmetric(spec.vertex_jitter);
                let dy = rng.symmetric(spec.vertex_jitter);
                (x + dx, y + dy)
            })
            .collect();
        let flip = rng.uniform() < spec.label_flip_rate;
        let score = (spec.score_base + rng.symmetric(spec.score_noise)).clamp(0.0, 1.0);
        let category = match spec.classes {
            DetectorClasses::OneClass => Category::Building,
            DetectorClasses::TwoClass if flip => inst.category.flipped(),
            DetectorClasses::TwoClass => inst.category,
        };
        match Instance::new(Polygon::new(vertices)?, category, score, w, h) {
            Ok(det) => out.instances.push(det),
            Err(Error::EmptyMask) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
