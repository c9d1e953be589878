//! Cross-camera pedestrian association: per-frame detection graphs are
//! scored by a message passing network, constrained by camera count, and
//! split into identity clusters.

pub mod baselines;
pub mod error;
pub mod featurize;
pub mod graph;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod mpn;
pub mod numeric;
pub mod synth;

pub use error::{Error, Result};
pub use featurize::{CameraCalibration, Calibrations, DescriptorStore};
pub use graph::{build_frame_graph, BBox, CameraId, Clustering, Detection, Edge, FrameGraph};
pub use inference::{associate, PostProcessing, ProbGraph};
pub use io::{Checkpoint, Dataset};
pub use metrics::{evaluate, evaluate_sequence, MetricSet, SequenceReport};
pub use mpn::{MessageSource, ModelParams};
pub use synth::{generate_scene, SceneSpec};
