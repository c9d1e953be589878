//! Seeded synthetic multi-camera scenes: pedestrians random-walk on a
//! square ground area and are observed by pinhole cameras placed around it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::featurize::{CameraCalibration, Calibrations, DescriptorStore};
use crate::graph::{BBox, CameraId, Detection};
use crate::numeric::Matrix;

const PERSON_HEIGHT: f64 = 1.7;
const BOX_ASPECT: f64 = 0.4;

/// One camera of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCamera {
    /// Image-to-ground homography.
    pub homography: Matrix,
    /// Ground position of the camera, used for box sizes.
    pub origin: (f64, f64),
    /// Focal length in pixels, used for box sizes.
    pub focal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub cameras: usize,
    pub identities: usize,
    pub frames: usize,
    pub descriptor_dim: usize,
    /// Norm-scale of per-detection noise (per component `sigma / sqrt(dim)`).
    pub appearance_noise_sigma: f64,
    /// Norm-scale of the per-camera descriptor offset.
    pub camera_bias_sigma: f64,
    pub miss_prob: f64,
    pub walk_step_sigma: f64,
    /// Side of the square walking area in ground units.
    pub area_size: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Explicit rigs; `None` places `cameras` cameras around the area.
    pub rigs: Option<Vec<SceneCamera>>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            cameras: 4,
            identities: 6,
            frames: 100,
            descriptor_dim: 512,
            appearance_noise_sigma: 0.5,
            camera_bias_sigma: 0.3,
            miss_prob: 0.1,
            walk_step_sigma: 0.25,
            area_size: 10.0,
            image_width: 360.0,
            image_height: 288.0,
            rigs: None,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cameras < 2 {
            return Err(Error::Config(format!("cameras must be >= 2, got {}", self.cameras)));
        }
        if self.identities == 0 || self.identities > 9 {
            return Err(Error::Config(format!("identities must be in 1..=9, got {}", self.identities)));
        }
        if self.descriptor_dim == 0 {
            return Err(Error::Config("descriptor_dim must be positive".into()));
        }
        for (name, v) in [
            ("appearance_noise_sigma", self.appearance_noise_sigma),
            ("camera_bias_sigma", self.camera_bias_sigma),
            ("walk_step_sigma", self.walk_step_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.miss_prob) {
            return Err(Error::Config(format!("miss_prob must be in [0, 1), got {}", self.miss_prob)));
        }
        if !(self.area_size > 0.0 && self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Config("area and image sizes must be positive".into()));
        }
        if let Some(rigs) = &self.rigs {
            if rigs.len() != self.cameras {
                return Err(Error::Config(format!("{} rigs for {} cameras", rigs.len(), self.cameras)));
            }
        }
        Ok(())
    }
}

/// Cameras on a circle around the area centre, 4 m up, looking at the centre.
pub fn default_rigs(cameras: usize, area_size: f64, image_width: f64, image_height: f64) -> Vec<SceneCamera> {
    let centre = [area_size / 2.0, area_size / 2.0, 0.0];
    let radius = area_size;
    let focal = 0.5 * image_width;
    (0..cameras)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / cameras as f64 + std::f64::consts::FRAC_PI_4;
            let pos = [centre[0] + radius * angle.cos(), centre[1] + radius * angle.sin(), 4.0];
            let forward = unit(sub(centre, pos));
            let right = unit(cross(forward, [0.0, 0.0, 1.0]));
            let down = cross(forward, right);
            let rows = [right, down, forward];
            // ground (X, Y, 1) -> camera coordinates
            let mut ext = Matrix::zeros(3, 3);
            for (r, axis) in rows.iter().enumerate() {
                ext.set(r, 0, axis[0]);
                ext.set(r, 1, axis[1]);
                ext.set(r, 2, -(axis[0] * pos[0] + axis[1] * pos[1] + axis[2] * pos[2]));
            }
            let mut to_image = Matrix::zeros(3, 3);
            for c in 0..3 {
                let (x, y, z) = (ext.get(0, c), ext.get(1, c), ext.get(2, c));
                to_image.set(0, c, focal * x + image_width / 2.0 * z);
                to_image.set(1, c, focal * y + image_height / 2.0 * z);
                to_image.set(2, c, z);
            }
            SceneCamera {
                homography: to_image.inverse3().expect("camera looks at the ground plane"),
                origin: (pos[0], pos[1]),
                focal,
            }
        })
        .collect()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Slot accounting: one slot per (frame, camera, identity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SceneStats {
    pub slots: usize,
    pub random_misses: usize,
    pub out_of_view: usize,
}

impl SceneStats {
    pub fn miss_fraction(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.random_misses as f64 / self.slots as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    /// Frame-major, then camera, then identity; `det_id` counts within a frame.
    pub detections: Vec<Detection>,
    pub store: DescriptorStore,
    pub calibs: Calibrations,
    pub stats: SceneStats,
}

/// Generates a scene. Descriptors are rounded to 32-bit precision so they
/// survive the on-disk format unchanged.
pub fn generate_scene(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let rigs = match &spec.rigs {
        Some(r) => r.clone(),
        None => default_rigs(spec.cameras, spec.area_size, spec.image_width, spec.image_height),
    };
    let mut calibs = Calibrations::new();
    let mut to_image = Vec::with_capacity(rigs.len());
    for (k, rig) in rigs.iter().enumerate() {
        let cam = CameraId(k as u32);
        let calib = CameraCalibration::new(cam, rig.homography.clone())?;
        to_image.push(rig.homography.inverse3().map_err(|e| Error::Config(format!("camera {cam}: {e}")))?);
        calibs.insert(cam, calib);
    }

    let dim = spec.descriptor_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_component = |sigma: f64| Normal::new(0.0, sigma / (dim as f64).sqrt()).expect("sigma validated");

    let prototypes: Vec<Vec<f64>> = (0..spec.identities)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let bias_dist = per_component(spec.camera_bias_sigma);
    let biases: Vec<Vec<f64>> = (0..spec.cameras)
        .map(|_| (0..dim).map(|_| bias_dist.sample(&mut rng)).collect())
        .collect();

    let margin = 0.05 * spec.area_size;
    let (lo, hi) = (margin, spec.area_size - margin);
    let mut positions: Vec<(f64, f64)> = (0..spec.identities)
        .map(|_| (rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
        .collect();
    let step = Normal::new(0.0, spec.walk_step_sigma).expect("sigma validated");
    let noise = per_component(spec.appearance_noise_sigma);

    let mut detections = Vec::new();
    let mut data = Vec::new();
    let mut stats = SceneStats::default();
    for frame in 0..spec.frames {
        if frame > 0 {
            for p in &mut positions {
                p.0 = reflect(p.0 + step.sample(&mut rng), lo, hi);
                p.1 = reflect(p.1 + step.sample(&mut rng), lo, hi);
            }
        }
        let mut det_id = 0u32;
        for (cam, rig) in rigs.iter().enumerate() {
            for (id, &pos) in positions.iter().enumerate() {
                stats.slots += 1;
                // Always consume the miss draw so the stream does not depend on visibility.
                if rng.gen::<f64>() < spec.miss_prob {
                    stats.random_misses += 1;
                    continue;
                }
                let Some((u, v)) = image_point(&to_image[cam], pos, spec) else {
                    stats.out_of_view += 1;
                    continue;
                };
                let dist = ((pos.0 - rig.origin.0).powi(2) + (pos.1 - rig.origin.1).powi(2)).sqrt().max(0.5);
                let h = rig.focal * PERSON_HEIGHT / dist;
                let w = BOX_ASPECT * h;
                detections.push(Detection {
                    frame: frame as u32,
                    camera: CameraId(cam as u32),
                    det_id,
                    // Emitted so that (x + w/2, y) is the foot point.
                    bbox: BBox { x: round32(u - w / 2.0), y: round32(v), w: round32(w), h: round32(h) },
                    descriptor_index: detections.len(),
                    identity: Some(id as u32),
                });
                det_id += 1;
                for c in 0..dim {
                    let value = prototypes[id][c] + biases[cam][c] + noise.sample(&mut rng);
                    data.push(round32(value));
                }
            }
        }
    }
    Ok(SynthScene {
        detections,
        store: DescriptorStore::new(dim, data)?,
        calibs,
        stats,
    })
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    for _ in 0..8 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    lo + (x - lo).rem_euclid(span)
}

/// Pixel of a ground point, or `None` behind the camera or outside the window.
fn image_point(to_image: &Matrix, pos: (f64, f64), spec: &SceneSpec) -> Option<(f64, f64)> {
    let p = to_image.matvec(&[pos.0, pos.1, 1.0]).ok()?;
    if p[2] <= 1e-9 {
        return None;
    }
    let (u, v) = (p[0] / p[2], p[1] / p[2]);
    ((0.0..spec.image_width).contains(&u) && (0.0..spec.image_height).contains(&v)).then_some((u, v))
}
