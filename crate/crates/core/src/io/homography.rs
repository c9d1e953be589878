use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::featurize::{CameraCalibration, Calibrations};
use crate::graph::CameraId;
use crate::numeric::Matrix;

/// One line per camera: `<camera> h00 h01 h02 h10 h11 h12 h20 h21 h22`.
/// Blank lines and `#` comments are ignored.
pub fn parse_homographies(text: &str, origin: &str) -> Result<Calibrations> {
    let mut out = Calibrations::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::Config(format!("{origin}:{lineno}: expected camera id and 9 values, got {} fields", fields.len())));
        }
        let cam = CameraId(
            fields[0]
                .parse()
                .map_err(|_| Error::Config(format!("{origin}:{lineno}: invalid camera id `{}`", fields[0])))?,
        );
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Config(format!("{origin}:{lineno}: invalid homography entry")))?;
        let h = Matrix::from_vec(3, 3, values)?;
        let calib = CameraCalibration::new(cam, h).map_err(|e| Error::Config(format!("{origin}:{lineno}: {e}")))?;
        if out.insert(cam, calib).is_some() {
            return Err(Error::Config(format!("{origin}:{lineno}: camera {cam} listed twice")));
        }
    }
    Ok(out)
}

pub fn format_homographies(calibs: &Calibrations) -> String {
    let mut s = String::new();
    for (cam, c) in calibs {
        let _ = write!(s, "{cam}");
        for v in c.homography().as_slice() {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn load_homographies(path: &Path) -> Result<Calibrations> {
    parse_homographies(&read_text(path)?, &path.display().to_string())
}

pub fn save_homographies(path: &Path, calibs: &Calibrations) -> Result<()> {
    write_atomic(path, format_homographies(calibs).as_bytes())
}
