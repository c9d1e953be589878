//! Shared fixtures for the criterion benches in `benches/`.

use gnncca::{generate_scene, Dataset, FrameGraph, SceneSpec};

/// A labeled synthetic scene and its per-frame graphs.
pub fn fixture(cameras: usize, identities: usize, frames: usize, descriptor_dim: usize) -> (Dataset, Vec<FrameGraph>) {
    let spec = SceneSpec { cameras, identities, frames, descriptor_dim, seed: 7, ..SceneSpec::default() };
    let ds: Dataset = generate_scene(&spec).expect("valid scene spec").into();
    let graphs = ds.frames();
    (ds, graphs)
}
