//! The `synth`, `fuse`, `eval` and `pipeline` commands.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{
    detections_image_name, load_detections, load_via, save_detections, save_via, via_image_name,
    LabeledScene,
};
use crate::error::Error;
use crate::eval::{mean_average_precision, MapReport, MAP50_IOU};
use crate::raster::GrayImage;
use crate::report::{self, Series};
use crate::synth::{derive_seed, generate_scene, simulate_detector, DetectorSpec, SceneSpec};
use crate::threshold::{fit_threshold, fit_threshold_pooled, fuse, ThresholdModel};

const SCENE_STREAM: u64 = 1;
const R1_STREAM: u64 = 2;
const R2_STREAM: u64 = 3;

/// A failed command: the exit code plus the diagnostic to print.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(err: Error) -> Self {
        Self {
            code: 2,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::InvalidSpec(_) => CliError {
                code: 1,
                message: err.to_string(),
            },
            other => CliError::data(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Inline(SceneSpec),
    /// Path to a scene-spec JSON file, relative to the config file.
    Path(PathBuf),
}

fn default_n_scenes() -> usize {
    1
}

fn default_budgets() -> Vec<f64> {
    vec![1.0]
}

fn default_iou() -> f64 {
    MAP50_IOU
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment configuration, read from JSON.
///
/// `r2_spec` describes the two-class detector at full label budget; a
/// budget `b` in `(0, 1]` scales its recall by `b` and moves its label-flip
/// rate towards 0.5 (chance) by `1 - b`. Scene and detector seeds inside the
/// specs are replaced by seeds derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scene: SceneSource,
    #[serde(default = "default_n_scenes")]
    pub n_scenes: usize,
    pub r1_spec: DetectorSpec,
    pub r2_spec: DetectorSpec,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<f64>,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Fit one threshold per budget level over all scenes instead of per image.
    #[serde(default)]
    pub pool: bool,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        if let SceneSource::Path(rel) = &cfg.scene {
            let full = path.parent().unwrap_or(Path::new(".")).join(rel);
            let bytes = std::fs::read(&full).map_err(|e| {
                CliError::config(format!("cannot read scene spec {}: {e}", full.display()))
            })?;
            let spec: SceneSpec = serde_json::from_slice(&bytes).map_err(|e| {
                CliError::config(format!("invalid scene spec {}: {e}", full.display()))
            })?;
            cfg.scene = SceneSource::Inline(spec);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let spec = self.scene_spec()?;
        spec.validate()?;
        self.r1_spec.validate()?;
        self.r2_spec.validate()?;
        if self.n_scenes == 0 {
            return Err(CliError::config("n_scenes must be at least 1"));
        }
        if self.budgets.is_empty() {
            return Err(CliError::config("budgets must not be empty"));
        }
        if let Some(b) = self.budgets.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(CliError::config(format!("budget {b} outside (0, 1]")));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(CliError::config(format!(
                "iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    pub fn scene_spec(&self) -> CliResult<&SceneSpec> {
        match &self.scene {
            SceneSource::Inline(spec) => Ok(spec),
            SceneSource::Path(p) => Err(CliError::config(format!(
                "scene spec {} has not been loaded",
                p.display()
            ))),
        }
    }
}

/// Two-class detector quality at label budget `budget`.
pub fn r2_at_budget(spec: &DetectorSpec, budget: f64) -> DetectorSpec {
    let chance = spec.label_flip_rate.max(0.5);
    DetectorSpec {
        recall_rate: spec.recall_rate * budget,
        label_flip_rate: spec.label_flip_rate + (chance - spec.label_flip_rate) * (1.0 - budget),
        ..spec.clone()
    }
}

/// One synthetic image with its ground truth and one-class detections.
pub struct SyntheticSet {
    pub gts: Vec<LabeledScene>,
    pub r1s: Vec<LabeledScene>,
}

fn scene_name(k: usize) -> String {
    format!("scene_{k:03}.png")
}

/// Ground truth and R1 for every scene of the configuration.
pub fn build_scenes(cfg: &PipelineConfig) -> CliResult<SyntheticSet> {
    let base = cfg.scene_spec()?;
    let pairs: Vec<(LabeledScene, LabeledScene)> = (0..cfg.n_scenes)
        .into_par_iter()
        .map(|k| {
            let spec = SceneSpec {
                seed: derive_seed(cfg.seed, SCENE_STREAM, k as u64),
                ..base.clone()
            };
            let mut gt = generate_scene(&spec)?;
            gt.image_id = scene_name(k);
            let r1 = simulate_detector(
                &gt,
                &DetectorSpec {
                    seed: derive_seed(cfg.seed, R1_STREAM, k as u64),
                    ..cfg.r1_spec.clone()
                },
            )?;
            Ok((gt, r1))
        })
        .collect::<Result<_, Error>>()?;
    let (gts, r1s) = pairs.into_iter().unzip();
    Ok(SyntheticSet { gts, r1s })
}

/// R2 for every scene at one budget level.
pub fn simulate_r2(cfg: &PipelineConfig, gts: &[LabeledScene], budget: f64) -> CliResult<Vec<LabeledScene>> {
    let spec = r2_at_budget(&cfg.r2_spec, budget);
    Ok(gts
        .par_iter()
        .enumerate()
        .map(|(k, gt)| {
            simulate_detector(
                gt,
                &DetectorSpec {
                    seed: derive_seed(cfg.seed, R2_STREAM, k as u64),
                    ..spec.clone()
                },
            )
        })
        .collect::<Result<_, Error>>()?)
}

/// Threshold per image, or one pooled threshold when `pool` is set. An image
/// whose R2 lacks a class (or has equal class means) falls back to the
/// pooled threshold; the returned flags mark those images.
pub fn fit_models(r2s: &[LabeledScene], pool: bool) -> CliResult<(Vec<ThresholdModel>, Vec<bool>)> {
    let pooled = || fit_threshold_pooled(r2s);
    if pool {
        let m = pooled()?;
        return Ok((vec![m; r2s.len()], vec![false; r2s.len()]));
    }
    let mut shared: Option<ThresholdModel> = None;
    let mut models = Vec::with_capacity(r2s.len());
    let mut fell_back = Vec::with_capacity(r2s.len());
    for r2 in r2s {
        match fit_threshold(r2) {
            Ok(m) => {
                models.push(m);
                fell_back.push(false);
            }
            Err(Error::NoClassSamples(_) | Error::DegenerateThreshold(_)) => {
                if shared.is_none() {
                    shared = Some(pooled()?);
                }
                models.push(shared.clone().expect("pooled model"));
                fell_back.push(true);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((models, fell_back))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRow {
    pub budget: f64,
    pub r2_map: f64,
    pub r3_map: f64,
}

/// Runs the label-budget sweep in memory.
pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<Vec<PipelineRow>> {
    cfg.validate()?;
    let set = build_scenes(cfg)?;
    let mut rows = Vec::with_capacity(cfg.budgets.len());
    for &budget in &cfg.budgets {
        let r2s = simulate_r2(cfg, &set.gts, budget)?;
        let (models, _) = fit_models(&r2s, cfg.pool)?;
        let r3s: Vec<LabeledScene> = set
            .r1s
            .iter()
            .zip(&models)
            .map(|(r1, m)| fuse(r1, m))
            .collect::<Result<_, Error>>()?;
        let r2 = mean_average_precision(&r2s, &set.gts, cfg.iou_threshold)?;
        let r3 = mean_average_precision(&r3s, &set.gts, cfg.iou_threshold)?;
        rows.push(PipelineRow {
            budget,
            r2_map: r2.map,
            r3_map: r3.map,
        });
    }
    Ok(rows)
}

pub fn pipeline_csv(rows: &[PipelineRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["budget", "r2_map50", "r3_map50"])
        .expect("in-memory csv");
    for r in rows {
        w.write_record([r.budget.to_string(), r.r2_map.to_string(), r.r3_map.to_string()])
            .expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn pipeline_svg(rows: &[PipelineRow]) -> String {
    let series = [
        Series {
            name: "R2 two-class".into(),
            points: rows.iter().map(|r| (r.budget, r.r2_map)).collect(),
        },
        Series {
            name: "R3 fused".into(),
            points: rows.iter().map(|r| (r.budget, r.r3_map)).collect(),
        },
    ];
    report::unit_line_plot_svg("mAP50 by label budget", "label budget", "mAP50", &series)
}

/// Files staged in a temporary directory inside the destination and moved
/// into place only once every file has been written.
struct Staging {
    dir: tempfile::TempDir,
    dest: PathBuf,
    names: Vec<String>,
}

impl Staging {
    fn new(dest: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dest).map_err(|e| {
            CliError::config(format!("cannot create output dir {}: {e}", dest.display()))
        })?;
        let dir = tempfile::Builder::new()
            .prefix(".htmask-staging")
            .tempdir_in(dest)
            .map_err(|e| {
                CliError::config(format!("output dir {} is not writable: {e}", dest.display()))
            })?;
        Ok(Self {
            dir,
            dest: dest.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.path().join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let target = self.dest.join(name);
            std::fs::rename(self.dir.path().join(name), &target).map_err(|e| {
                CliError::config(format!("cannot move output to {}: {e}", target.display()))
            })?;
            out.push(target);
        }
        Ok(out)
    }
}

fn file_stem(image_id: &str) -> &str {
    Path::new(image_id)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(image_id)
}

/// Writes, per scene, `<stem>.png`, `<stem>.via.json`, `<stem>.r1.json` and
/// `<stem>.r2.json` (R2 at full budget).
pub fn cmd_synth(cfg: &PipelineConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let set = build_scenes(cfg)?;
    let r2s = simulate_r2(cfg, &set.gts, 1.0)?;
    let mut staging = Staging::new(&cfg.output_dir)?;
    for ((gt, r1), r2) in set.gts.iter().zip(&set.r1s).zip(&r2s) {
        let stem = file_stem(&gt.image_id);
        staging.write(&gt.image_id, &gt.image.encode_png()?)?;
        staging.write(&format!("{stem}.via.json"), &save_via(gt))?;
        staging.write(&format!("{stem}.r1.json"), &save_detections(r1))?;
        staging.write(&format!("{stem}.r2.json"), &save_detections(r2))?;
    }
    staging.commit()
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::data(Error::io(path, e)))
}

pub struct FuseArgs {
    pub images: Vec<PathBuf>,
    pub r1: Vec<PathBuf>,
    pub r2: Vec<PathBuf>,
    /// Output file for a single image, output directory for several.
    pub out: PathBuf,
    pub report: PathBuf,
    pub pool: bool,
}

/// Returns the fused scenes in input order.
pub fn cmd_fuse(args: &FuseArgs) -> CliResult<Vec<LabeledScene>> {
    if args.images.is_empty()
        || args.images.len() != args.r1.len()
        || args.images.len() != args.r2.len()
    {
        return Err(CliError::config(
            "fuse needs the same number (>= 1) of --image, --r1 and --r2 arguments",
        ));
    }
    let mut r1s = Vec::new();
    let mut r2s = Vec::new();
    for ((img, r1), r2) in args.images.iter().zip(&args.r1).zip(&args.r2) {
        let image = Arc::new(GrayImage::load(img)?);
        r1s.push(load_detections(&read(r1)?, image.clone())?);
        r2s.push(load_detections(&read(r2)?, image)?);
    }
    let models: Vec<ThresholdModel> = if args.pool {
        fit_models(&r2s, true)?.0
    } else {
        r2s.iter().map(fit_threshold).collect::<Result<_, Error>>()?
    };
    let r3s: Vec<LabeledScene> = r1s
        .iter()
        .zip(&models)
        .map(|(r1, m)| fuse(r1, m))
        .collect::<Result<_, Error>>()?;

    let write = |path: &Path, bytes: &[u8]| -> CliResult<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::config(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
        std::fs::write(path, bytes)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
    };
    if r3s.len() == 1 {
        write(&args.out, &save_detections(&r3s[0]))?;
    } else {
        for r3 in &r3s {
            let name = format!("{}.r3.json", file_stem(&r3.image_id));
            write(&args.out.join(name), &save_detections(r3))?;
        }
    }
    let rows = r3s.iter().map(|s| s.image_id.as_str()).zip(models.iter());
    write(&args.report, &report::threshold_csv(rows))?;
    Ok(r3s)
}

pub struct EvalArgs {
    pub gt: Vec<PathBuf>,
    pub pred: Vec<PathBuf>,
    /// Where images are looked up; defaults to each ground-truth file's directory.
    pub images: Option<PathBuf>,
    pub iou_threshold: f64,
    pub out: PathBuf,
    pub svg: bool,
}

/// Writes `metrics.csv`, `pr.csv` and, with `svg`, `pr.svg` into `out`.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<MapReport> {
    if !(args.iou_threshold > 0.0 && args.iou_threshold <= 1.0) {
        return Err(CliError::config(format!(
            "--iou {} outside (0, 1]",
            args.iou_threshold
        )));
    }
    let mut images: BTreeMap<String, Arc<GrayImage>> = BTreeMap::new();
    let mut gts = Vec::new();
    for path in &args.gt {
        let bytes = read(path)?;
        let name = via_image_name(&bytes)?;
        let dir = match &args.images {
            Some(d) => d.clone(),
            None => path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        };
        let image = Arc::new(GrayImage::load(dir.join(&name))?);
        images.insert(name, image.clone());
        gts.push(load_via(&bytes, image)?);
    }
    let mut preds = Vec::new();
    for path in &args.pred {
        let bytes = read(path)?;
        let name = detections_image_name(&bytes)?;
        let image = images.get(&name).cloned().ok_or_else(|| {
            CliError::data(Error::ImageIdMismatch(format!(
                "{} refers to {name:?}, which no ground-truth file annotates",
                path.display()
            )))
        })?;
        preds.push(load_detections(&bytes, image)?);
    }
    let report = mean_average_precision(&preds, &gts, args.iou_threshold)?;

    let mut staging = Staging::new(&args.out)?;
    staging.write("metrics.csv", &report::metrics_csv(&report))?;
    staging.write("pr.csv", &report::pr_csv(&report))?;
    if args.svg {
        staging.write("pr.svg", report::pr_svg(&report).as_bytes())?;
    }
    staging.commit()?;
    Ok(report)
}

/// Writes `pipeline.csv` and `pipeline.svg` into the configured output dir.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> CliResult<Vec<PipelineRow>> {
    let rows = run_pipeline(cfg)?;
    let mut staging = Staging::new(&cfg.output_dir)?;
    staging.write("pipeline.csv", &pipeline_csv(&rows))?;
    staging.write("pipeline.svg", pipeline_svg(&rows).as_bytes())?;
    staging.commit()?;
    Ok(rows)
}
