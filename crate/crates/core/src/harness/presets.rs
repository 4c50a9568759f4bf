//! Built-in sweeps matching the published experiments.
//!
//! All presets use 4-QAM and `l_max = α_max = 3`. The OTFS comparison arm of
//! the path-count experiment is not simulated.

use std::path::PathBuf;

use super::{Detector, ExperimentConfig};

fn snr_grid() -> Vec<f64> {
    (0..=10).map(|k| 2.0 * k as f64).collect()
}

fn base(frames: usize, seed: u64, output: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        n: 64,
        p: 4,
        l_max: 3,
        alpha_max: 3,
        qam_order: 4,
        snr_db: snr_grid(),
        detectors: vec![Detector::Mp],
        frames,
        seed,
        output,
        ..ExperimentConfig::default()
    }
}

/// Damping sweep `Δ = 0.1 … 1.0` at 16, 18 and 20 dB.
pub fn fig4(frames: usize, seed: u64, output: PathBuf) -> Vec<ExperimentConfig> {
    (1..=10)
        .map(|k| {
            let mut cfg = base(frames, seed, output.clone());
            cfg.snr_db = vec![16.0, 18.0, 20.0];
            cfg.mp.damping = k as f64 / 10.0;
            cfg
        })
        .collect()
}

/// Four versus five paths with MP detection. The frame size follows the
/// figure caption (`N = 64`); the accompanying text mentions 128.
pub fn fig5(frames: usize, seed: u64, output: PathBuf) -> Vec<ExperimentConfig> {
    [4, 5]
        .into_iter()
        .map(|p| ExperimentConfig { p, ..base(frames, seed, output.clone()) })
        .collect()
}

/// MP, MMSE and MRC on four-path channels with `N = 64`.
pub fn fig6(frames: usize, seed: u64, output: PathBuf) -> Vec<ExperimentConfig> {
    vec![ExperimentConfig {
        detectors: vec![Detector::Mp, Detector::Mmse, Detector::Mrc],
        ..base(frames, seed, output)
    }]
}

/// MP with `N ∈ {32, 64, 128, 256}`.
pub fn fig7(frames: usize, seed: u64, output: PathBuf) -> Vec<ExperimentConfig> {
    [32, 64, 128, 256]
        .into_iter()
        .map(|n| ExperimentConfig { n, ..base(frames, seed, output.clone()) })
        .collect()
}

pub fn by_name(name: &str, frames: usize, seed: u64, output: PathBuf) -> Option<Vec<ExperimentConfig>> {
    match name {
        "fig4" => Some(fig4(frames, seed, output)),
        "fig5" => Some(fig5(frames, seed, output)),
        "fig6" => Some(fig6(frames, seed, output)),
        "fig7" => Some(fig7(frames, seed, output)),
        _ => None,
    }
}
