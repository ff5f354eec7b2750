//! Valley-point thresholding: class gray statistics from two-class
//! detections, the midpoint threshold, and relabelling of one-class
//! detections.
//!
//! Class means are pixel-weighted over the union of each class's footprints.
//! The threshold is the midpoint of the two class means, and a building whose
//! own mean gray is at or above it takes the brighter class.
//!
//! Decisions are made on exact integer sums rather than on the rounded
//! floating-point means, so ties and invariances hold bit-for-bit. The `f64`
//! fields exist for reporting.

use crate::annotations::{Category, Instance, LabeledScene};
use crate::error::{Error, Result};
use crate::raster::{GrayImage, PixelMask};

/// Counts of pixels per gray level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayHistogram {
    bins: [u64; 256],
    total: u64,
}

impl Default for GrayHistogram {
    fn default() -> Self {
        Self {
            bins: [0; 256],
            total: 0,
        }
    }
}

impl GrayHistogram {
    pub fn add(&mut self, level: u8) {
        self.bins[level as usize] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &GrayHistogram) {
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Sum of gray levels over all counted pixels.
    pub fn level_sum(&self) -> u64 {
        self.bins
            .iter()
            .enumerate()
            .map(|(level, &n)| level as u64 * n)
            .sum()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| self.level_sum() as f64 / self.total as f64)
    }

    fn from_mask(mask: &PixelMask, image: &GrayImage) -> Self {
        let mut hist = Self::default();
        let data = image.data();
        for idx in mask.iter_indices() {
            hist.add(data[idx]);
        }
        hist
    }
}

/// Exact per-class totals behind a mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ClassTotals {
    level_sum: u64,
    pixels: u64,
}

impl ClassTotals {
    fn mean(self) -> f64 {
        self.level_sum as f64 / self.pixels as f64
    }
}

/// Class means `N` (new) and `O` (old), their midpoint `theta`, and which
/// class is the brighter one.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdModel {
    n_mean: f64,
    o_mean: f64,
    theta: f64,
    bright: Category,
    new: ClassTotals,
    old: ClassTotals,
}

impl ThresholdModel {
    pub fn from_histograms(new: &GrayHistogram, old: &GrayHistogram) -> Result<Self> {
        if new.total == 0 {
            return Err(Error::NoClassSamples(Category::New));
        }
        if old.total == 0 {
            return Err(Error::NoClassSamples(Category::Old));
        }
        let new = ClassTotals {
            level_sum: new.level_sum(),
            pixels: new.total,
        };
        let old = ClassTotals {
            level_sum: old.level_sum(),
            pixels: old.total,
        };
        // sign of N - O, exactly
        let lhs = new.level_sum as u128 * old.pixels as u128;
        let rhs = old.level_sum as u128 * new.pixels as u128;
        let bright = match lhs.cmp(&rhs) {
            std::cmp::Ordering::Greater => Category::New,
            std::cmp::Ordering::Less => Category::Old,
            std::cmp::Ordering::Equal => return Err(Error::DegenerateThreshold(new.mean())),
        };
        let (n_mean, o_mean) = (new.mean(), old.mean());
        Ok(Self {
            n_mean,
            o_mean,
            theta: (n_mean + o_mean) / 2.0,
            bright,
            new,
            old,
        })
    }

    pub fn n_mean(&self) -> f64 {
        self.n_mean
    }

    pub fn o_mean(&self) -> f64 {
        self.o_mean
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn bright_category(&self) -> Category {
        self.bright
    }

    pub fn dark_category(&self) -> Category {
        self.bright.flipped()
    }

    /// `(new_pixels, old_pixels)`.
    pub fn pixel_counts(&self) -> (u64, u64) {
        (self.new.pixels, self.old.pixels)
    }

    /// Category for a region whose gray levels sum to `level_sum` over
    /// `pixels` pixels: the bright class iff `level_sum / pixels >= theta`.
    pub fn classify(&self, level_sum: u64, pixels: u64) -> Category {
        assert!(pixels > 0, "classify needs a nonempty region");
        // level_sum/pixels >= (Sn/Pn + So/Po)/2
        // <=> 2 * level_sum * Pn * Po >= pixels * (Sn * Po + So * Pn)
        let lhs = 2 * level_sum as u128 * self.new.pixels as u128 * self.old.pixels as u128;
        let rhs = pixels as u128
            * (self.new.level_sum as u128 * self.old.pixels as u128
                + self.old.level_sum as u128 * self.new.pixels as u128);
        if lhs >= rhs {
            self.bright
        } else {
            self.dark_category()
        }
    }
}

fn check_dims(mask: &PixelMask, image: &GrayImage) -> Result<()> {
    if mask.width() == image.width() && mask.height() == image.height() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left_w: mask.width(),
            left_h: mask.height(),
            right_w: image.width(),
            right_h: image.height(),
        })
    }
}

fn instance_totals(inst: &Instance, image: &GrayImage) -> Result<(u64, u64)> {
    check_dims(&inst.mask, image)?;
    let data = image.data();
    let (sum, count) = inst
        .mask
        .iter_indices()
        .fold((0u64, 0u64), |(s, n), idx| (s + data[idx] as u64, n + 1));
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum, count))
}

/// Mean gray level under the instance mask.
pub fn instance_mean_gray(inst: &Instance, image: &GrayImage) -> Result<f64> {
    let (sum, count) = instance_totals(inst, image)?;
    Ok(sum as f64 / count as f64)
}

/// Histogram over the union of all `category` footprints; overlapping
/// footprints contribute their shared pixels once.
pub fn class_histogram(
    instances: &[Instance],
    category: Category,
    image: &GrayImage,
) -> Result<GrayHistogram> {
    let mut union: Option<PixelMask> = None;
    for inst in instances.iter().filter(|i| i.category == category) {
        check_dims(&inst.mask, image)?;
        match union.as_mut() {
            Some(u) => u.union_with(&inst.mask)?,
            None => union = Some(inst.mask.clone()),
        }
    }
    let union = union.ok_or(Error::NoClassSamples(category))?;
    Ok(GrayHistogram::from_mask(&union, image))
}

/// Fits the threshold on one image's two-class detections.
pub fn fit_threshold(r2: &LabeledScene) -> Result<ThresholdModel> {
    let new = class_histogram(&r2.instances, Category::New, &r2.image)?;
    let old = class_histogram(&r2.instances, Category::Old, &r2.image)?;
    ThresholdModel::from_histograms(&new, &old)
}

/// Fits one threshold from the summed class histograms of several images.
/// Images lacking one class still contribute the other.
pub fn fit_threshold_pooled(r2s: &[LabeledScene]) -> Result<ThresholdModel> {
    let mut new = GrayHistogram::default();
    let mut old = GrayHistogram::default();
    for scene in r2s {
        for (category, acc) in [(Category::New, &mut new), (Category::Old, &mut old)] {
            match class_histogram(&scene.instances, category, &scene.image) {
                Ok(h) => acc.merge(&h),
                Err(Error::NoClassSamples(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    ThresholdModel::from_histograms(&new, &old)
}

/// Relabels one-class detections into new/old. Geometry, scores and order
/// are untouched, so the output has exactly as many instances as `r1`.
pub fn fuse(r1: &LabeledScene, model: &ThresholdModel) -> Result<LabeledScene> {
    let mut instances = Vec::with_capacity(r1.instances.len());
    for inst in &r1.instances {
        if inst.category != Category::Building {
            return Err(Error::UnexpectedCategory {
                expected: Category::Building,
                found: inst.category,
            });
        }
        let (sum, count) = instance_totals(inst, &r1.image)?;
        instances.push(Instance {
            category: model.classify(sum, count),
            ..inst.clone()
        });
    }
    Ok(LabeledScene {
        image_id: r1.image_id.clone(),
        image: r1.image.clone(),
        instances,
    })
}
