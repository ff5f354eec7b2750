//! Grayscale-threshold fusion of building segmentations.
//!
//! A one-class segmentation (R1) supplies building footprints; a two-class
//! segmentation (R2, new vs old) supplies class gray statistics. The midpoint
//! of the two class means relabels every R1 footprint, giving R3. The crate
//! also evaluates segmentations by mask mAP at IoU 0.5 and generates seeded
//! synthetic villages with simulated detectors to exercise the whole chain.

pub mod annotations;
pub mod cli;
pub mod error;
pub mod eval;
pub mod raster;
pub mod report;
pub mod synth;
pub mod threshold;

pub use annotations::{Category, Instance, LabeledScene};
pub use error::{Error, Result};
pub use raster::{GrayImage, PixelMask, Polygon};
pub use threshold::ThresholdModel;
