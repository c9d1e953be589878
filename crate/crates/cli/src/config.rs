//! Flat `key = value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use gnncca::baselines::{BaselineConfig, BaselineMethod};
use gnncca::mpn::{Aggregation, TrainConfig, DEFAULT_GRAD_CLIP};
use gnncca::numeric::TrainSchedule;
use gnncca::{Error, MessageSource, PostProcessing, Result, SceneSpec};

/// Every tunable, with defaults. Config files and flags both go through
/// [`RunConfig::set`], so they accept the same keys and values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub frame_range: Option<(u32, u32)>,
    /// Expected descriptor width; `None` accepts whatever the store holds.
    pub descriptor_dim: Option<usize>,
    pub normalize_descriptors: bool,

    pub steps: usize,
    pub message_source: MessageSource,
    pub aggregation: Aggregation,
    pub grad_clip: Option<f64>,
    pub positive_weight: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,

    pub threshold: f64,
    pub prune: bool,
    pub split: bool,

    pub method: BaselineMethod,
    pub appearance_threshold: f64,
    pub spatial_threshold: f64,
    pub normalize: bool,
    pub per_frame_normalization: bool,
    pub baseline_post: bool,

    pub cameras: usize,
    pub identities: usize,
    pub frames: usize,
    pub noise_sigma: f64,
    pub bias_sigma: f64,
    pub miss_prob: f64,
    pub walk_step_sigma: f64,
    pub area_size: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = TrainSchedule::default();
        let train = TrainConfig::default();
        let post = PostProcessing::default();
        let base = BaselineConfig::new(BaselineMethod::L2Threshold);
        let scene = SceneSpec::default();
        Self {
            seed: 0,
            threads: 0,
            frame_range: None,
            descriptor_dim: None,
            normalize_descriptors: false,
            steps: train.steps,
            message_source: train.message_source,
            aggregation: train.aggregation,
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            positive_weight: train.positive_weight,
            epochs: schedule.total_epochs,
            warmup_epochs: schedule.warmup_epochs,
            batch_size: schedule.batch_size,
            lr: schedule.base_lr,
            momentum: schedule.momentum,
            threshold: post.threshold,
            prune: post.prune,
            split: post.split,
            method: base.method,
            appearance_threshold: base.appearance_threshold,
            spatial_threshold: base.spatial_threshold,
            normalize: base.normalize,
            per_frame_normalization: base.per_frame_normalization,
            baseline_post: false,
            cameras: scene.cameras,
            identities: scene.identities,
            frames: scene.frames,
            noise_sigma: scene.appearance_noise_sigma,
            bias_sigma: scene.camera_bias_sigma,
            miss_prob: scene.miss_prob,
            walk_step_sigma: scene.walk_step_sigma,
            area_size: scene.area_size,
            image_width: scene.image_width,
            image_height: scene.image_height,
        }
    }
}

/// All recognized keys, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "frame_range",
    "descriptor_dim",
    "normalize_descriptors",
    "steps",
    "message_source",
    "aggregation",
    "grad_clip",
    "positive_weight",
    "epochs",
    "warmup_epochs",
    "batch_size",
    "lr",
    "momentum",
    "threshold",
    "prune",
    "split",
    "method",
    "appearance_threshold",
    "spatial_threshold",
    "normalize",
    "per_frame_normalization",
    "baseline_post",
    "cameras",
    "identities",
    "frames",
    "noise_sigma",
    "bias_sigma",
    "miss_prob",
    "walk_step_sigma",
    "area_size",
    "image_width",
    "image_height",
];

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("{key}: expected {what}, got `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true|false, got `{value}`")),
    }
}

fn parse_finite(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(key, value, "a number")?;
    if !v.is_finite() {
        return Err(format!("{key}: expected a finite number, got `{value}`"));
    }
    Ok(v)
}

fn non_negative(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v = parse_finite(key, value)?;
    if v < 0.0 {
        return Err(format!("{key}: must be >= 0, got {v}"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v = parse_finite(key, value)?;
    if v <= 0.0 {
        return Err(format!("{key}: must be > 0, got {v}"));
    }
    Ok(v)
}

fn at_least_one(key: &str, value: &str) -> std::result::Result<usize, String> {
    let v: usize = parse(key, value, "a whole number")?;
    if v == 0 {
        return Err(format!("{key}: must be >= 1"));
    }
    Ok(v)
}

/// `start:end`, end exclusive.
pub fn parse_frame_range(value: &str) -> std::result::Result<(u32, u32), String> {
    let err = || format!("frame_range: expected `start:end` with start < end, got `{value}`");
    let (a, b) = value.split_once(':').ok_or_else(err)?;
    let start: u32 = a.trim().parse().map_err(|_| err())?;
    let end: u32 = b.trim().parse().map_err(|_| err())?;
    if start >= end {
        return Err(err());
    }
    Ok((start, end))
}

impl RunConfig {
    /// Sets one key. The error text names the key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "threads" => self.threads = parse(key, value, "a whole number")?,
            "frame_range" => {
                self.frame_range = match value {
                    "all" | "" => None,
                    v => Some(parse_frame_range(v)?),
                }
            }
            "descriptor_dim" => {
                self.descriptor_dim = match value {
                    "auto" => None,
                    v => Some(at_least_one(key, v)?),
                }
            }
            "normalize_descriptors" => self.normalize_descriptors = parse_bool(key, value)?,
            "steps" => self.steps = at_least_one(key, value)?,
            "message_source" => self.message_source = value.parse().map_err(|e: Error| format!("{key}: {}", inner(&e)))?,
            "aggregation" => self.aggregation = value.parse().map_err(|e: Error| format!("{key}: {}", inner(&e)))?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "none" | "off" => None,
                    v => Some(positive(key, v)?),
                }
            }
            "positive_weight" => self.positive_weight = positive(key, value)?,
            "epochs" => self.epochs = parse(key, value, "a whole number")?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value, "a whole number")?,
            "batch_size" => self.batch_size = at_least_one(key, value)?,
            "lr" => self.lr = non_negative(key, value)?,
            "momentum" => {
                let m = non_negative(key, value)?;
                if m >= 1.0 {
                    return Err(format!("{key}: must lie in [0, 1), got {m}"));
                }
                self.momentum = m;
            }
            "threshold" => {
                let t = non_negative(key, value)?;
                if t > 1.0 {
                    return Err(format!("{key}: must lie in [0, 1], got {t}"));
                }
                self.threshold = t;
            }
            "prune" => self.prune = parse_bool(key, value)?,
            "split" => self.split = parse_bool(key, value)?,
            "method" => self.method = value.parse().map_err(|e: Error| format!("{key}: {}", inner(&e)))?,
            "appearance_threshold" => self.appearance_threshold = non_negative(key, value)?,
            "spatial_threshold" => self.spatial_threshold = non_negative(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "per_frame_normalization" => self.per_frame_normalization = parse_bool(key, value)?,
            "baseline_post" => self.baseline_post = parse_bool(key, value)?,
            "cameras" => self.cameras = at_least_one(key, value)?,
            "identities" => self.identities = at_least_one(key, value)?,
            "frames" => self.frames = at_least_one(key, value)?,
            "noise_sigma" => self.noise_sigma = non_negative(key, value)?,
            "bias_sigma" => self.bias_sigma = non_negative(key, value)?,
            "miss_prob" => {
                let p = non_negative(key, value)?;
                if p > 1.0 {
                    return Err(format!("{key}: must lie in [0, 1], got {p}"));
                }
                self.miss_prob = p;
            }
            "walk_step_sigma" => self.walk_step_sigma = non_negative(key, value)?,
            "area_size" => self.area_size = positive(key, value)?,
            "image_width" => self.image_width = positive(key, value)?,
            "image_height" => self.image_height = positive(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", idx + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {assignment}: expected KEY=VALUE")))?;
        self.set(key.trim(), value).map_err(|e| Error::Config(format!("--set: {e}")))
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            base_lr: self.lr,
            warmup_epochs: self.warmup_epochs,
            total_epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
        }
    }

    pub fn train_config(&self, threads: usize) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule(),
            seed: self.seed,
            steps: self.steps,
            message_source: self.message_source,
            aggregation: self.aggregation,
            grad_clip: self.grad_clip,
            positive_weight: self.positive_weight,
            threads,
        }
    }

    pub fn post_processing(&self) -> PostProcessing {
        PostProcessing {
            threshold: self.threshold,
            prune: self.prune,
            split: self.split,
        }
    }

    pub fn baseline_config(&self, num_cameras: usize) -> BaselineConfig {
        BaselineConfig {
            method: self.method,
            appearance_threshold: self.appearance_threshold,
            spatial_threshold: self.spatial_threshold,
            normalize: self.normalize,
            per_frame_normalization: self.per_frame_normalization,
            post: self.baseline_post.then(|| (self.post_processing(), num_cameras.max(2))),
        }
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            cameras: self.cameras,
            identities: self.identities,
            frames: self.frames,
            descriptor_dim: self.descriptor_dim.unwrap_or(SceneSpec::default().descriptor_dim),
            appearance_noise_sigma: self.noise_sigma,
            camera_bias_sigma: self.bias_sigma,
            miss_prob: self.miss_prob,
            walk_step_sigma: self.walk_step_sigma,
            area_size: self.area_size,
            image_width: self.image_width,
            image_height: self.image_height,
            rigs: None,
            seed: self.seed,
        }
    }

    /// Every key with its current value; reads back through [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "frame_range" => self.frame_range.map_or("all".into(), |(a, b)| format!("{a}:{b}")),
            "descriptor_dim" => self.descriptor_dim.map_or("auto".into(), |d| d.to_string()),
            "normalize_descriptors" => self.normalize_descriptors.to_string(),
            "steps" => self.steps.to_string(),
            "message_source" => self.message_source.as_str().into(),
            "aggregation" => self.aggregation.as_str().into(),
            "grad_clip" => self.grad_clip.map_or("none".into(), |c| c.to_string()),
            "positive_weight" => self.positive_weight.to_string(),
            "epochs" => self.epochs.to_string(),
            "warmup_epochs" => self.warmup_epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "threshold" => self.threshold.to_string(),
            "prune" => self.prune.to_string(),
            "split" => self.split.to_string(),
            "method" => self.method.as_str().into(),
            "appearance_threshold" => self.appearance_threshold.to_string(),
            "spatial_threshold" => self.spatial_threshold.to_string(),
            "normalize" => self.normalize.to_string(),
            "per_frame_normalization" => self.per_frame_normalization.to_string(),
            "baseline_post" => self.baseline_post.to_string(),
            "cameras" => self.cameras.to_string(),
            "identities" => self.identities.to_string(),
            "frames" => self.frames.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "bias_sigma" => self.bias_sigma.to_string(),
            "miss_prob" => self.miss_prob.to_string(),
            "walk_step_sigma" => self.walk_step_sigma.to_string(),
            "area_size" => self.area_size.to_string(),
            "image_width" => self.image_width.to_string(),
            "image_height" => self.image_height.to_string(),
            _ => unreachable!("KEYS and value_of disagree on `{key}`"),
        }
    }
}

/// Strips the error-kind prefix so messages read `key: ...`.
fn inner(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Argument(m) | Error::Data(m) => m.clone(),
        other => other.to_string(),
    }
}
