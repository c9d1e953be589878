use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::graph::{BBox, CameraId, Detection};

pub const DETECTIONS_HEADER: &str = "frame,camera,det_id,x,y,w,h,identity";

/// Row `i` of the file becomes detection `i` with descriptor row `i`.
pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<Detection>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DETECTIONS_HEADER => {}
        _ => return Err(Error::Data(format!("{origin}:1: expected header `{DETECTIONS_HEADER}`"))),
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(Error::Data(format!("{origin}:{lineno}: expected 8 fields, got {}", fields.len())));
        }
        let bad = |what: &str| Error::Data(format!("{origin}:{lineno}: invalid {what}"));
        let frame: u32 = fields[0].parse().map_err(|_| bad("frame"))?;
        let camera: u32 = fields[1].parse().map_err(|_| bad("camera"))?;
        let det_id: u32 = fields[2].parse().map_err(|_| bad("det_id"))?;
        let mut nums = [0.0; 4];
        for (k, name) in ["x", "y", "w", "h"].iter().enumerate() {
            nums[k] = fields[3 + k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(name))?;
        }
        if nums[2] <= 0.0 || nums[3] <= 0.0 {
            return Err(Error::Data(format!("{origin}:{lineno}: box width and height must be positive")));
        }
        let identity: i64 = fields[7].parse().map_err(|_| bad("identity"))?;
        let identity = match identity {
            -1 => None,
            id if (0..=u32::MAX as i64).contains(&id) => Some(id as u32),
            _ => return Err(bad("identity")),
        };
        if !seen.insert((frame, camera, det_id)) {
            return Err(Error::Data(format!(
                "{origin}:{lineno}: duplicate detection (frame {frame}, camera {camera}, det {det_id})"
            )));
        }
        out.push(Detection {
            frame,
            camera: CameraId(camera),
            det_id,
            bbox: BBox { x: nums[0], y: nums[1], w: nums[2], h: nums[3] },
            descriptor_index: out.len(),
            identity,
        });
    }
    Ok(out)
}

pub fn format_detections(detections: &[Detection]) -> String {
    let mut s = String::from(DETECTIONS_HEADER);
    s.push('\n');
    for d in detections {
        let id = d.identity.map_or(-1, i64::from);
        let b = d.bbox;
        let _ = writeln!(s, "{},{},{},{},{},{},{},{}", d.frame, d.camera, d.det_id, b.x, b.y, b.w, b.h, id);
    }
    s
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(&read_text(path)?, &path.display().to_string())
}

/// Detections must be in descriptor-row order (`descriptor_index == row`).
pub fn save_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    if let Some((i, _)) = detections.iter().enumerate().find(|(i, d)| d.descriptor_index != *i) {
        return Err(Error::Argument(format!("detection {i} does not pair with descriptor row {i}")));
    }
    write_atomic(path, format_detections(detections).as_bytes())
}
