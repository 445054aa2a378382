//! Shared fixtures for the benchmarks.

use cloudinspect::synth::{generate, preset, DefectScene, SceneSpec};

/// The tower preset scaled to roughly `points` samples per cloud.
pub fn tower_scene(points: usize, seed: u64) -> DefectScene {
    let mut spec: SceneSpec = preset("tower", seed).expect("bundled preset");
    // preset density targets ~20k points
    spec.density *= points as f64 / 20_000.0;
    spec.defects.clear();
    generate(&spec).expect("scene generation")
}
