//! Non-learned associators used for comparison: thresholded appearance
//! distances (L2 / cosine), top-1 re-identification ranking, ground-plane
//! distance, and ground-plane distance combined with L2 appearance.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::featurize::{appearance_delta, descriptor, ground_positions, spatial_delta, Calibrations, DescriptorStore};
use crate::graph::{connected_components, Clustering, Edge, FrameGraph};
use crate::inference::{cluster_from_probs, PostProcessing, ProbGraph};
use crate::metrics::{evaluate_sequence, SequenceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    L2Threshold,
    CosineThreshold,
    Top1,
    Geometric,
    GeometricAppearance,
}

impl BaselineMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::L2Threshold => "l2_th",
            BaselineMethod::CosineThreshold => "cos_th",
            BaselineMethod::Top1 => "top1",
            BaselineMethod::Geometric => "geo",
            BaselineMethod::GeometricAppearance => "geo_app",
        }
    }

    fn uses_appearance_threshold(self) -> bool {
        matches!(self, Self::L2Threshold | Self::CosineThreshold | Self::GeometricAppearance)
    }

    fn uses_spatial_threshold(self) -> bool {
        matches!(self, Self::Geometric | Self::GeometricAppearance)
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l2_th" => Self::L2Threshold,
            "cos_th" => Self::CosineThreshold,
            "top1" => Self::Top1,
            "geo" => Self::Geometric,
            "geo_app" => Self::GeometricAppearance,
            other => {
                return Err(Error::Config(format!(
                    "unknown baseline method `{other}` (expected l2_th|cos_th|top1|geo|geo_app)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Appearance distance threshold; normalized units when `normalize` is set.
    pub appearance_threshold: f64,
    /// Ground-plane distance threshold in ground units.
    pub spatial_threshold: f64,
    /// Divide appearance distances by their maximum.
    pub normalize: bool,
    /// Take that maximum per frame instead of over the whole set.
    pub per_frame_normalization: bool,
    /// Optional pruning/splitting with `M` cameras, scoring edges by `1 - distance`.
    pub post: Option<(PostProcessing, usize)>,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            appearance_threshold: 0.5,
            spatial_threshold: 1.0,
            normalize: true,
            per_frame_normalization: false,
            post: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.uses_appearance_threshold() && !(self.appearance_threshold.is_finite() && self.appearance_threshold >= 0.0) {
            return Err(Error::Config(format!("invalid appearance threshold {}", self.appearance_threshold)));
        }
        if self.method.uses_spatial_threshold() && !(self.spatial_threshold.is_finite() && self.spatial_threshold >= 0.0) {
            return Err(Error::Config(format!("invalid spatial threshold {}", self.spatial_threshold)));
        }
        Ok(())
    }
}

/// Per-edge distances of one frame.
struct FrameDistances {
    appearance: Vec<f64>,
    spatial: Vec<f64>,
}

fn frame_distances(graph: &FrameGraph, store: &DescriptorStore, calibs: &Calibrations, cfg: &BaselineConfig) -> Result<FrameDistances> {
    let appearance = if cfg.method.uses_appearance_threshold() {
        graph
            .edges
            .iter()
            .map(|&(i, j)| {
                let [l2, cos] = appearance_delta(descriptor(graph, store, i)?, descriptor(graph, store, j)?)?;
                Ok(match cfg.method {
                    BaselineMethod::CosineThreshold => 1.0 - cos,
                    _ => l2,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let spatial = if cfg.method.uses_spatial_threshold() && !graph.edges.is_empty() {
        let ground = ground_positions(graph, calibs)?;
        graph.edges.iter().map(|&(i, j)| spatial_delta(ground[i], ground[j])[1]).collect()
    } else {
        Vec::new()
    };
    Ok(FrameDistances { appearance, spatial })
}

fn normalize_by_max(values: &mut [f64], max: f64) {
    for v in values {
        *v = if max > 0.0 { *v / max } else { 0.0 };
    }
}

fn below(d: f64, threshold: f64, normalized: bool) -> bool {
    // On the normalized scale a threshold of 1 admits the maximum itself.
    d < threshold || (normalized && threshold >= 1.0)
}

/// Connects cross-camera pairs whose distances fall under the configured
/// thresholds and returns the connected components of every frame.
pub fn threshold_assoc(frames: &[FrameGraph], store: &DescriptorStore, calibs: &Calibrations, cfg: &BaselineConfig) -> Result<Vec<Clustering>> {
    if cfg.method == BaselineMethod::Top1 {
        return Err(Error::Argument("top1 is not a threshold method; use top1_assoc".into()));
    }
    cfg.validate()?;
    let mut dists = frames
        .iter()
        .map(|g| frame_distances(g, store, calibs, cfg))
        .collect::<Result<Vec<_>>>()?;
    if cfg.normalize && cfg.method.uses_appearance_threshold() {
        let set_max = dists.iter().flat_map(|d| d.appearance.iter().copied()).fold(0.0, f64::max);
        for d in &mut dists {
            let max = if cfg.per_frame_normalization {
                d.appearance.iter().copied().fold(0.0, f64::max)
            } else {
                set_max
            };
            normalize_by_max(&mut d.appearance, max);
        }
    }
    Ok(frames
        .iter()
        .zip(&dists)
        .map(|(g, d)| {
            let keep = |e: usize| {
                let app_ok = !cfg.method.uses_appearance_threshold() || below(d.appearance[e], cfg.appearance_threshold, cfg.normalize);
                let geo_ok = !cfg.method.uses_spatial_threshold() || d.spatial[e] < cfg.spatial_threshold;
                app_ok && geo_ok
            };
            let score = |e: usize| {
                if cfg.method.uses_appearance_threshold() {
                    (1.0 - d.appearance[e]).clamp(0.0, 1.0)
                } else {
                    (1.0 - d.spatial[e] / cfg.spatial_threshold.max(f64::MIN_POSITIVE)).clamp(0.0, 1.0)
                }
            };
            components(g, (0..g.num_edges()).filter(|&e| keep(e)).collect(), score, cfg)
        })
        .collect())
}

fn components(graph: &FrameGraph, kept: Vec<usize>, score: impl Fn(usize) -> f64, cfg: &BaselineConfig) -> Clustering {
    match cfg.post {
        Some((post, cameras)) if cameras >= 2 => {
            let edges: Vec<Edge> = kept.iter().map(|&e| graph.edges[e]).collect();
            let probs = kept.iter().map(|&e| score(e)).collect();
            match ProbGraph::new(graph.num_nodes(), edges.clone(), probs, cameras) {
                // Edges are already selected; binarization must keep them all.
                Ok(pg) => cluster_from_probs(pg, &PostProcessing { threshold: 0.0, ..post }),
                Err(_) => connected_components(graph.num_nodes(), &edges),
            }
        }
        _ => {
            let edges: Vec<Edge> = kept.iter().map(|&e| graph.edges[e]).collect();
            connected_components(graph.num_nodes(), &edges)
        }
    }
}

/// Links every detection to its nearest other-camera detection (L2 on
/// descriptors, ties to the lower index) and returns the components.
pub fn top1_assoc(frames: &[FrameGraph], store: &DescriptorStore) -> Result<Vec<Clustering>> {
    frames
        .iter()
        .map(|g| {
            let mut edges = Vec::new();
            for i in 0..g.num_nodes() {
                let di = descriptor(g, store, i)?;
                let mut best: Option<(f64, usize)> = None;
                for j in 0..g.num_nodes() {
                    if g.nodes[j].camera == g.nodes[i].camera {
                        continue;
                    }
                    let d = appearance_delta(di, descriptor(g, store, j)?)?[0];
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, j));
                    }
                }
                if let Some((_, j)) = best {
                    edges.push((i.min(j), i.max(j)));
                }
            }
            edges.sort_unstable();
            edges.dedup();
            Ok(connected_components(g.num_nodes(), &edges))
        })
        .collect()
}

/// Thresholds swept by [`sweep_thresholds`]: `0.1 * k` for `k = 0..=10`.
pub fn sweep_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<(f64, SequenceReport)>,
    pub best_threshold: f64,
}

impl SweepReport {
    pub fn best(&self) -> &SequenceReport {
        &self
            .entries
            .iter()
            .find(|(t, _)| *t == self.best_threshold)
            .expect("best threshold comes from the grid")
            .1
    }
}

/// Evaluates the method at every grid threshold and keeps the best mean
/// V-measure (ties to the smaller threshold).
///
/// Appearance methods sweep the normalized appearance threshold. `geo`
/// sweeps the spatial threshold as a fraction of the largest ground-plane
/// distance in the set.
pub fn sweep_thresholds(frames: &[FrameGraph], store: &DescriptorStore, calibs: &Calibrations, base: &BaselineConfig) -> Result<SweepReport> {
    let truth = frames.iter().map(FrameGraph::truth_clustering).collect::<Result<Vec<_>>>()?;
    let spatial_scale = if base.method == BaselineMethod::Geometric {
        let mut max: f64 = 0.0;
        for g in frames {
            for d in frame_distances(g, store, calibs, base)?.spatial {
                max = max.max(d);
            }
        }
        max
    } else {
        0.0
    };
    let mut entries = Vec::new();
    for th in sweep_grid() {
        let mut cfg = base.clone();
        match base.method {
            BaselineMethod::Top1 => return Err(Error::Argument("top1 has no threshold to sweep".into())),
            BaselineMethod::Geometric => cfg.spatial_threshold = th * spatial_scale + if th >= 1.0 { f64::EPSILON * spatial_scale.max(1.0) } else { 0.0 },
            _ => cfg.appearance_threshold = th,
        }
        let pred = threshold_assoc(frames, store, calibs, &cfg)?;
        entries.push((th, evaluate_sequence(&truth, &pred)?));
    }
    let mut best = 0;
    for (k, (_, r)) in entries.iter().enumerate() {
        if r.mean.v_measure > entries[best].1.mean.v_measure {
            best = k;
        }
    }
    Ok(SweepReport {
        best_threshold: entries[best].0,
        entries,
    })
}
