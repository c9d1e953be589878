//! On-disk formats: detections CSV, descriptor store, homographies,
//! checkpoints and clustering output, plus the dataset directory that
//! bundles the first three.

mod checkpoint;
mod clustering;
mod descriptors;
mod detections;
mod homography;

use std::collections::BTreeMap;
use std::path::Path;

pub use checkpoint::{format_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use clustering::{clusterings_for, format_clustering, load_clustering, parse_clustering, save_clustering, ClusterMap, CLUSTERING_HEADER};
pub use descriptors::{decode_store, encode_store, load_store, save_store, DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION};
pub use detections::{format_detections, load_detections, parse_detections, save_detections, DETECTIONS_HEADER};
pub use homography::{format_homographies, load_homographies, parse_homographies, save_homographies};

use crate::error::{Error, Result};
use crate::featurize::{Calibrations, DescriptorStore};
use crate::graph::{build_frame_graph, Detection, FrameGraph};
use crate::synth::SynthScene;

pub const DETECTIONS_FILE: &str = "detections.csv";
pub const DESCRIPTORS_FILE: &str = "descriptors.bin";
pub const HOMOGRAPHIES_FILE: &str = "homographies.txt";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Detections, their descriptors and the camera calibrations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub store: DescriptorStore,
    pub calibs: Calibrations,
}

impl Dataset {
    pub fn new(detections: Vec<Detection>, store: DescriptorStore, calibs: Calibrations) -> Result<Self> {
        if detections.len() != store.len() {
            return Err(Error::Data(format!(
                "{} detections but {} descriptor rows",
                detections.len(),
                store.len()
            )));
        }
        Ok(Self { detections, store, calibs })
    }

    /// Loads a dataset directory. With `expected_dim`, a descriptor store
    /// of another width is a configuration error.
    pub fn load(dir: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let det_path = dir.join(DETECTIONS_FILE);
        let desc_path = dir.join(DESCRIPTORS_FILE);
        let detections = load_detections(&det_path)?;
        let store = load_store(&desc_path)?;
        if let Some(dim) = expected_dim {
            if store.dim() != dim {
                return Err(Error::Config(format!(
                    "{}: descriptor dim {} but descriptor_dim = {dim}",
                    desc_path.display(),
                    store.dim()
                )));
            }
        }
        if detections.len() != store.len() {
            return Err(Error::Data(format!(
                "{}: {} descriptor rows but {} has {} detections",
                desc_path.display(),
                store.len(),
                det_path.display(),
                detections.len()
            )));
        }
        let calibs = load_homographies(&dir.join(HOMOGRAPHIES_FILE))?;
        Ok(Self { detections, store, calibs })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_detections(&dir.join(DETECTIONS_FILE), &self.detections)?;
        save_store(&dir.join(DESCRIPTORS_FILE), &self.store)?;
        save_homographies(&dir.join(HOMOGRAPHIES_FILE), &self.calibs)
    }

    /// One graph per distinct frame, ascending; file order within a frame.
    pub fn frames(&self) -> Vec<FrameGraph> {
        let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for d in &self.detections {
            by_frame.entry(d.frame).or_default().push(*d);
        }
        by_frame
            .into_values()
            .map(|dets| build_frame_graph(&dets).expect("grouped by frame"))
            .collect()
    }

    /// Frames with `start <= frame < end`.
    pub fn frames_in_range(&self, start: u32, end: u32) -> Vec<FrameGraph> {
        self.frames()
            .into_iter()
            .filter(|g| g.frame().is_some_and(|f| f >= start && f < end))
            .collect()
    }
}

impl From<SynthScene> for Dataset {
    fn from(scene: SynthScene) -> Self {
        Self {
            detections: scene.detections,
            store: scene.store,
            calibs: scene.calibs,
        }
    }
}
