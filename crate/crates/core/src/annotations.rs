//! Ground-truth (VIA subset) and detection files, and the typed scenes they
//! load into.
//!
//! Recognised VIA subset: one image entry carrying `filename` and `regions`,
//! where each region has `shape_attributes` of name `polygon`
//! (`all_points_x`, `all_points_y`) or `rect` (`x`, `y`, `width`, `height`)
//! and `region_attributes.type` in {`building`, `new`, `old`}. The entry may
//! be given bare, wrapped in a one-entry map keyed by any string, or inside a
//! VIA project's `_via_img_metadata`. `regions` may be an array (VIA 2) or an
//! index-keyed object (VIA 1).
//!
//! Detections file:
//!
//! ```json
//! {"image": "scene_000.png",
//!  "instances": [{"class": "building", "score": 0.9, "polygon": [[0, 0], [4, 0], [4, 4]]}]}
//! ```
//!
//! Unknown extra fields are ignored in both formats.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::raster::{rasterize, GrayImage, PixelMask, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Building,
    New,
    Old,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Building, Category::New, Category::Old];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Building => "building",
            Category::New => "new",
            Category::Old => "old",
        }
    }

    /// The other class of the two-class task. `Building` maps to itself.
    pub fn flipped(self) -> Self {
        match self {
            Category::Building => Category::Building,
            Category::New => Category::Old,
            Category::Old => Category::New,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "building" => Ok(Category::Building),
            "new" => Ok(Category::New),
            "old" => Ok(Category::Old),
            other => Err(Error::UnknownCategory(other.to_string())),
        }
    }
}

/// One building footprint with its rasterized mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub polygon: Polygon,
    pub category: Category,
    /// Confidence in `[0, 1]`; ground truth carries 1.0.
    pub score: f64,
    pub mask: PixelMask,
}

impl Instance {
    /// Validates the score and rasterizes `polygon` on a `width x height` frame.
    pub fn new(
        polygon: Polygon,
        category: Category,
        score: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        let mask = rasterize(&polygon, width, height)?;
        Ok(Self {
            polygon,
            category,
            score,
            mask,
        })
    }
}

/// An image together with the instances annotated or detected on it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub image_id: String,
    pub image: Arc<GrayImage>,
    pub instances: Vec<Instance>,
}

impl LabeledScene {
    pub fn new(image_id: impl Into<String>, image: Arc<GrayImage>) -> Self {
        Self {
            image_id: image_id.into(),
            image,
            instances: Vec::new(),
        }
    }

    pub fn count(&self, category: Category) -> usize {
        self.instances
            .iter()
            .filter(|i| i.category == category)
            .count()
    }
}

#[derive(Deserialize)]
struct ViaEntry {
    filename: String,
    regions: ViaRegions,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ViaRegions {
    List(Vec<ViaRegion>),
    Map(BTreeMap<String, ViaRegion>),
}

#[derive(Deserialize)]
struct ViaRegion {
    shape_attributes: ViaShape,
    #[serde(default)]
    region_attributes: serde_json::Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
enum ViaShape {
    Polygon {
        all_points_x: Vec<f64>,
        all_points_y: Vec<f64>,
    },
    Rect {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
}

impl ViaShape {
    fn into_polygon(self) -> Result<Polygon> {
        match self {
            ViaShape::Polygon {
                all_points_x,
                all_points_y,
            } => {
                if all_points_x.len() != all_points_y.len() {
                    return Err(Error::Parse(format!(
                        "all_points_x has {} entries but all_points_y has {}",
                        all_points_x.len(),
                        all_points_y.len()
                    )));
                }
                Polygon::new(all_points_x.into_iter().zip(all_points_y).collect())
            }
            ViaShape::Rect {
                x,
                y,
                width,
                height,
            } => Polygon::rect(x, y, width, height),
        }
    }
}

fn find_via_entry(root: Value) -> Result<ViaEntry> {
    let Value::Object(mut map) = root else {
        return Err(Error::Parse("VIA file must be a JSON object".into()));
    };
    if map.contains_key("filename") {
        return Ok(serde_json::from_value(Value::Object(map))?);
    }
    if let Some(meta) = map.remove("_via_img_metadata") {
        return find_via_entry(meta);
    }
    if map.len() != 1 {
        return Err(Error::Parse(format!(
            "expected exactly one image entry, found {}",
            map.len()
        )));
    }
    let (_, entry) = map.into_iter().next().expect("one entry");
    Ok(serde_json::from_value(entry)?)
}

/// The `filename` of the image a VIA file annotates.
pub fn via_image_name(json: &[u8]) -> Result<String> {
    #[derive(Deserialize)]
    struct Named {
        filename: String,
    }
    let root: Value = serde_json::from_slice(json)?;
    let Value::Object(mut map) = root else {
        return Err(Error::Parse("VIA file must be a JSON object".into()));
    };
    if !map.contains_key("filename") {
        if let Some(meta) = map.remove("_via_img_metadata") {
            return via_image_name(meta.to_string().as_bytes());
        }
        if map.len() == 1 {
            let (_, entry) = map.into_iter().next().expect("one entry");
            return Ok(serde_json::from_value::<Named>(entry)?.filename);
        }
    }
    Ok(serde_json::from_value::<Named>(Value::Object(map))?.filename)
}

/// The `image` named by a detections file.
pub fn detections_image_name(json: &[u8]) -> Result<String> {
    #[derive(Deserialize)]
    struct Named {
        image: String,
    }
    Ok(serde_json::from_slice::<Named>(json)?.image)
}

/// Parses a VIA annotation file and rasterizes its regions against `image`.
pub fn load_via(json: &[u8], image: Arc<GrayImage>) -> Result<LabeledScene> {
    let entry = find_via_entry(serde_json::from_slice(json)?)?;
    let regions: Vec<ViaRegion> = match entry.regions {
        ViaRegions::List(list) => list,
        ViaRegions::Map(map) => {
            let mut keyed: Vec<(String, ViaRegion)> = map.into_iter().collect();
            keyed.sort_by(|(a, _), (b, _)| match (a.parse::<u64>(), b.parse::<u64>()) {
                (Ok(x), Ok(y)) => x.cmp(&y),
                _ => a.cmp(b),
            });
            keyed.into_iter().map(|(_, r)| r).collect()
        }
    };

    let (w, h) = (image.width(), image.height());
    let mut scene = LabeledScene::new(entry.filename, image);
    for region in regions {
        let category = match region.region_attributes.get("type") {
            Some(Value::String(s)) => s.parse::<Category>()?,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "region_attributes.type must be a string, got {other}"
                )))
            }
            None => return Err(Error::Parse("region without region_attributes.type".into())),
        };
        let polygon = region.shape_attributes.into_polygon()?;
        scene
            .instances
            .push(Instance::new(polygon, category, 1.0, w, h)?);
    }
    Ok(scene)
}

/// Writes `scene` as a one-entry VIA file. Every region is written as a
/// polygon; scores are not part of the format.
pub fn save_via(scene: &LabeledScene) -> Vec<u8> {
    let regions: Vec<Value> = scene
        .instances
        .iter()
        .map(|inst| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = inst.polygon.vertices().iter().copied().unzip();
            serde_json::json!({
                "shape_attributes": ViaShape::Polygon { all_points_x: xs, all_points_y: ys },
                "region_attributes": { "type": inst.category.as_str() },
            })
        })
        .collect();
    let doc = serde_json::json!({
        scene.image_id.clone(): {
            "filename": scene.image_id,
            "size": -1,
            "regions": regions,
            "file_attributes": {},
        }
    });
    serde_json::to_vec_pretty(&doc).expect("VIA document serializes")
}

#[derive(Serialize, Deserialize)]
struct DetectionsFile {
    image: String,
    instances: Vec<DetectionRecord>,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    class: String,
    score: f64,
    polygon: Vec<[f64; 2]>,
}

/// Parses a detections file and rasterizes its polygons against `image`.
pub fn load_detections(json: &[u8], image: Arc<GrayImage>) -> Result<LabeledScene> {
    let file: DetectionsFile = serde_json::from_slice(json)?;
    let (w, h) = (image.width(), image.height());
    let mut scene = LabeledScene::new(file.image, image);
    for rec in file.instances {
        let category = rec.class.parse::<Category>()?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(Error::ScoreOutOfRange(rec.score));
        }
        let polygon = Polygon::new(rec.polygon.into_iter().map(|[x, y]| (x, y)).collect())?;
        scene
            .instances
            .push(Instance::new(polygon, category, rec.score, w, h)?);
    }
    Ok(scene)
}

pub fn save_detections(scene: &LabeledScene) -> Vec<u8> {
    let file = DetectionsFile {
        image: scene.image_id.clone(),
        instances: scene
            .instances
            .iter()
            .map(|inst| DetectionRecord {
                class: inst.category.to_string(),
                score: inst.score,
                polygon: inst.polygon.vertices().iter().map(|&(x, y)| [x, y]).collect(),
            })
            .collect(),
    };
    serde_json::to_vec_pretty(&file).expect("detections serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas() -> Arc<GrayImage> {
        Arc::new(GrayImage::filled(8, 8, 0).unwrap())
    }

    #[test]
    fn via_single_polygon() {
        let json = br#"{"a.png1234": {"filename": "a.png", "size": 1234, "file_attributes": {},
            "regions": [{"shape_attributes": {"name": "polygon",
                "all_points_x": [0, 4, 4, 0], "all_points_y": [0, 0, 4, 4]},
                "region_attributes": {"type": "new"}}]}}"#;
        let scene = load_via(json, canvas()).unwrap();
        assert_eq!(scene.image_id, "a.png");
        assert_eq!(scene.instances.len(), 1);
        assert_eq!(scene.instances[0].category, Category::New);
        assert_eq!(scene.instances[0].mask.area(), 16);
        assert_eq!(scene.instances[0].score, 1.0);
    }

    #[test]
    fn via_zero_regions() {
        let json = br#"{"filename": "b.png", "regions": []}"#;
        assert!(load_via(json, canvas()).unwrap().instances.is_empty());
    }

    #[test]
    fn via_unknown_type() {
        let json = br#"{"filename": "b.png", "regions": [{"shape_attributes": {"name": "rect",
            "x": 0, "y": 0, "width": 4, "height": 4}, "region_attributes": {"type": "garage"}}]}"#;
        assert!(matches!(load_via(json, canvas()), Err(Error::UnknownCategory(s)) if s == "garage"));
    }

    #[test]
    fn via_rect_and_keyed_regions() {
        let json = br#"{"_via_settings": {}, "_via_img_metadata": {"c.png-1": {"filename": "c.png",
            "regions": {
              "10": {"shape_attributes": {"name": "rect", "x": 4, "y": 4, "width": 2, "height": 2},
                     "region_attributes": {"type": "old"}},
              "2": {"shape_attributes": {"name": "rect", "x": 0, "y": 0, "width": 3, "height": 3},
                    "region_attributes": {"type": "new", "note": "x"}}}}}}"#;
        let scene = load_via(json, canvas()).unwrap();
        let cats: Vec<_> = scene.instances.iter().map(|i| i.category).collect();
        assert_eq!(cats, vec![Category::New, Category::Old]);
        assert_eq!(scene.instances[0].mask.area(), 9);
        assert_eq!(scene.instances[1].polygon.vertices().len(), 4);
    }

    #[test]
    fn via_errors() {
        let missing = br#"{"filename": "b.png"}"#;
        assert!(matches!(load_via(missing, canvas()), Err(Error::Parse(_))));
        let degenerate = br#"{"filename": "b.png", "regions": [{"shape_attributes": {"name": "polygon",
            "all_points_x": [0, 0.9, 0], "all_points_y": [0, 0, 0.9]}, "region_attributes": {"type": "old"}}]}"#;
        assert!(matches!(load_via(degenerate, canvas()), Err(Error::EmptyMask)));
        let circle = br#"{"filename": "b.png", "regions": [{"shape_attributes": {"name": "circle",
            "cx": 3, "cy": 3, "r": 2}, "region_attributes": {"type": "old"}}]}"#;
        assert!(matches!(load_via(circle, canvas()), Err(Error::Parse(_))));
        assert!(matches!(load_via(b"not json", canvas()), Err(Error::Parse(_))));
    }

    #[test]
    fn detections_load() {
        let json = br#"{"image": "a.png", "model": "r1", "instances": [
            {"class": "building", "score": 0.9, "polygon": [[0,0],[4,0],[4,4],[0,4]], "extra": 1}]}"#;
        let scene = load_detections(json, canvas()).unwrap();
        assert_eq!(scene.instances.len(), 1);
        assert_eq!(scene.instances[0].score, 0.9);
        assert_eq!(scene.instances[0].category, Category::Building);
    }

    #[test]
    fn detections_errors() {
        let bad_score = br#"{"image": "a.png", "instances": [
            {"class": "building", "score": 1.5, "polygon": [[0,0],[4,0],[4,4],[0,4]]}]}"#;
        assert!(matches!(load_detections(bad_score, canvas()), Err(Error::ScoreOutOfRange(s)) if s == 1.5));
        let bad_class = br#"{"image": "a.png", "instances": [
            {"class": "shed", "score": 0.5, "polygon": [[0,0],[4,0],[4,4],[0,4]]}]}"#;
        assert!(matches!(load_detections(bad_class, canvas()), Err(Error::UnknownCategory(_))));
        let no_instances = br#"{"image": "a.png"}"#;
        assert!(matches!(load_detections(no_instances, canvas()), Err(Error::Parse(_))));
    }

    #[test]
    fn overlapping_detections_are_kept() {
        let json = br#"{"image": "a.png", "instances": [
            {"class": "building", "score": 0.9, "polygon": [[0,0],[4,0],[4,4],[0,4]]},
            {"class": "building", "score": 0.8, "polygon": [[2,2],[6,2],[6,6],[2,6]]}]}"#;
        assert_eq!(load_detections(json, canvas()).unwrap().instances.len(), 2);
    }

    #[test]
    fn save_empty_and_roundtrip() {
        let empty = LabeledScene::new("e.png", canvas());
        let text: Value = serde_json::from_slice(&save_detections(&empty)).unwrap();
        assert_eq!(text["instances"], serde_json::json!([]));

        let mut scene = LabeledScene::new("r.png", canvas());
        let poly = Polygon::new(vec![(0.25, 0.5), (6.125, 1.0), (3.0, 7.75)]).unwrap();
        scene
            .instances
            .push(Instance::new(poly, Category::Old, 0.123456, 8, 8).unwrap());
        let back = load_detections(&save_detections(&scene), canvas()).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.instances[0].score, 0.123456);

        let mut gt = scene.clone();
        gt.instances[0].score = 1.0;
        assert_eq!(load_via(&save_via(&gt), canvas()).unwrap(), gt);
    }
}
