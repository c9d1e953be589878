use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::graph::{CameraId, Clustering, FrameGraph};

pub const CLUSTERING_HEADER: &str = "frame,camera,det_id,cluster_id";

/// `(frame, camera, det_id) -> cluster id`, ids local to each frame.
pub type ClusterMap = BTreeMap<(u32, CameraId, u32), usize>;

/// Writes one row per node of every frame, in frame and node order.
pub fn format_clustering(frames: &[FrameGraph], clusterings: &[Clustering]) -> Result<String> {
    if frames.len() != clusterings.len() {
        return Err(Error::Argument(format!("{} frames but {} clusterings", frames.len(), clusterings.len())));
    }
    let mut s = String::from(CLUSTERING_HEADER);
    s.push('\n');
    for (g, c) in frames.iter().zip(clusterings) {
        if g.num_nodes() != c.len() {
            return Err(Error::Argument(format!("frame {:?}: {} nodes but {} labels", g.frame(), g.num_nodes(), c.len())));
        }
        for (d, &k) in g.nodes.iter().zip(&c.assignment) {
            let _ = writeln!(s, "{},{},{},{}", d.frame, d.camera, d.det_id, k);
        }
    }
    Ok(s)
}

pub fn parse_clustering(text: &str, origin: &str) -> Result<ClusterMap> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CLUSTERING_HEADER => {}
        _ => return Err(Error::Data(format!("{origin}:1: expected header `{CLUSTERING_HEADER}`"))),
    }
    let mut out = ClusterMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 4)
            .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?)))
            .flatten();
        let Some((frame, cam, det, cluster)) = parsed else {
            return Err(Error::Data(format!("{origin}:{lineno}: expected `frame,camera,det_id,cluster_id`")));
        };
        if out.insert((frame, CameraId(cam), det), cluster).is_some() {
            return Err(Error::Data(format!("{origin}:{lineno}: duplicate detection (frame {frame}, camera {cam}, det {det})")));
        }
    }
    Ok(out)
}

/// Per-frame clusterings of `frames` looked up from `map`.
pub fn clusterings_for(frames: &[FrameGraph], map: &ClusterMap, origin: &str) -> Result<Vec<Clustering>> {
    let wanted: HashSet<(u32, CameraId, u32)> = frames
        .iter()
        .flat_map(|g| g.nodes.iter().map(|d| (d.frame, d.camera, d.det_id)))
        .collect();
    if let Some(k) = map.keys().find(|k| !wanted.contains(k)) {
        return Err(Error::Data(format!(
            "{origin}: detection (frame {}, camera {}, det {}) not in the dataset",
            k.0, k.1, k.2
        )));
    }
    frames
        .iter()
        .map(|g| {
            let labels = g
                .nodes
                .iter()
                .map(|d| {
                    map.get(&(d.frame, d.camera, d.det_id)).copied().ok_or_else(|| {
                        Error::Data(format!(
                            "{origin}: no cluster for detection (frame {}, camera {}, det {})",
                            d.frame, d.camera, d.det_id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Clustering::from_labels(&labels))
        })
        .collect()
}

pub fn load_clustering(path: &Path) -> Result<ClusterMap> {
    parse_clustering(&read_text(path)?, &path.display().to_string())
}

pub fn save_clustering(path: &Path, frames: &[FrameGraph], clusterings: &[Clustering]) -> Result<()> {
    write_atomic(path, format_clustering(frames, clusterings)?.as_bytes())
}
