//! Initial node and edge embeddings from appearance descriptors and
//! ground-plane positions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{BBox, CameraId, FrameGraph};
use crate::numeric::matrix::{dot, norm2, Matrix};
use crate::numeric::mlp::{mlp_eval, MlpParams};

/// Image-to-ground homography of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub camera: CameraId,
    homography: Matrix,
}

impl CameraCalibration {
    pub fn new(camera: CameraId, homography: Matrix) -> Result<Self> {
        if homography.rows() != 3 || homography.cols() != 3 {
            return Err(Error::Config(format!(
                "camera {camera}: homography must be 3x3, got {}x{}",
                homography.rows(),
                homography.cols()
            )));
        }
        let det = homography.det3();
        if det.abs() <= 1e-12 {
            return Err(Error::Config(format!("camera {camera}: homography is not invertible (det = {det:e})")));
        }
        Ok(Self { camera, homography })
    }

    pub fn homography(&self) -> &Matrix {
        &self.homography
    }

    /// Maps an image point to the ground plane.
    pub fn project_point(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        apply_homography(&self.homography, u, v)
    }
}

pub(crate) fn apply_homography(h: &Matrix, u: f64, v: f64) -> Result<(f64, f64)> {
    let p = [
        h.get(0, 0) * u + h.get(0, 1) * v + h.get(0, 2),
        h.get(1, 0) * u + h.get(1, 1) * v + h.get(1, 2),
        h.get(2, 0) * u + h.get(2, 1) * v + h.get(2, 2),
    ];
    if p[2].abs() < 1e-12 {
        return Err(Error::Projection(format!("point ({u}, {v}) maps to infinity")));
    }
    Ok((p[0] / p[2], p[1] / p[2]))
}

/// Calibrations keyed by camera id.
pub type Calibrations = BTreeMap<CameraId, CameraCalibration>;

/// Projects the base midpoint of `bbox` onto the ground plane.
pub fn project_to_ground(calib: &CameraCalibration, bbox: &BBox) -> Result<(f64, f64)> {
    let (u, v) = bbox.base_midpoint();
    calib.project_point(u, v)
}

/// Appearance descriptors, one row per detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStore {
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorStore {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("descriptor dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Data(format!(
                "{} descriptor values are not a multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite descriptor value".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, index: usize) -> Option<&[f64]> {
        (index < self.len()).then(|| &self.data[index * self.dim..(index + 1) * self.dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy with every row scaled to unit L2 norm (zero rows stay zero).
    pub fn unit_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            let n = norm2(row);
            if n >= 1e-12 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        Self { dim: self.dim, data }
    }
}

/// `[euclidean distance, cosine similarity]`; cosine is 0 for a zero-norm side.
pub fn appearance_delta(a: &[f64], b: &[f64]) -> Result<[f64; 2]> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("descriptor lengths differ: {} vs {}", a.len(), b.len())));
    }
    let dist = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (na, nb) = (norm2(a), norm2(b));
    let cos = if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    };
    Ok([dist, cos])
}

/// `[manhattan distance, euclidean distance]` between two ground points.
pub fn spatial_delta(p: (f64, f64), q: (f64, f64)) -> [f64; 2] {
    let dx = p.0 - q.0;
    let dy = p.1 - q.1;
    [dx.abs() + dy.abs(), (dx * dx + dy * dy).sqrt()]
}

pub(crate) fn descriptor<'a>(graph: &FrameGraph, store: &'a DescriptorStore, node: usize) -> Result<&'a [f64]> {
    let d = &graph.nodes[node];
    store.row(d.descriptor_index).ok_or_else(|| {
        Error::Data(format!(
            "detection (frame {}, camera {}, det {}) refers to descriptor row {} but the store has {} rows",
            d.frame,
            d.camera,
            d.det_id,
            d.descriptor_index,
            store.len()
        ))
    })
}

/// Ground-plane position of every node.
pub fn ground_positions(graph: &FrameGraph, calibs: &Calibrations) -> Result<Vec<(f64, f64)>> {
    graph
        .nodes
        .iter()
        .map(|d| {
            let calib = calibs
                .get(&d.camera)
                .ok_or_else(|| Error::Config(format!("no calibration for camera {}", d.camera)))?;
            project_to_ground(calib, &d.bbox)
        })
        .collect()
}

/// The 4-vector `[Δf, Δs]` fed to the edge encoder, one per edge.
pub fn edge_features(graph: &FrameGraph, store: &DescriptorStore, calibs: &Calibrations) -> Result<Vec<[f64; 4]>> {
    if graph.edges.is_empty() {
        return Ok(Vec::new());
    }
    let ground = ground_positions(graph, calibs)?;
    graph
        .edges
        .iter()
        .map(|&(i, j)| {
            let df = appearance_delta(descriptor(graph, store, i)?, descriptor(graph, store, j)?)?;
            let ds = spatial_delta(ground[i], ground[j]);
            Ok([df[0], df[1], ds[0], ds[1]])
        })
        .collect()
}

/// Step-0 node states: the node encoder applied to each descriptor.
pub fn init_node_embeddings(graph: &FrameGraph, store: &DescriptorStore, node_encoder: &MlpParams) -> Result<Vec<Vec<f64>>> {
    if node_encoder.input_dim() != store.dim() {
        return Err(Error::Config(format!(
            "node encoder expects {}-dim descriptors, store has {}",
            node_encoder.input_dim(),
            store.dim()
        )));
    }
    (0..graph.num_nodes())
        .map(|i| mlp_eval(node_encoder, descriptor(graph, store, i)?))
        .collect()
}

/// Step-0 edge states: the edge encoder applied to `[Δf, Δs]`.
pub fn init_edge_embeddings(
    graph: &FrameGraph,
    store: &DescriptorStore,
    calibs: &Calibrations,
    edge_encoder: &MlpParams,
) -> Result<Vec<Vec<f64>>> {
    edge_features(graph, store, calibs)?
        .iter()
        .map(|f| mlp_eval(edge_encoder, f))
        .collect()
}
