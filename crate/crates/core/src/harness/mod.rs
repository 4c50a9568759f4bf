//! Monte Carlo BER simulation.
//!
//! Each sweep point `(detector, SNR)` gets its own seed derived from the
//! master seed, and each frame within a point runs on its own ChaCha stream
//! of that seed. Results are integer sums over frames, so any worker count
//! and any scheduling order produce the same record.

mod config;
pub mod presets;
pub mod selftest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{build_effective_sparse, draw_channel, received_daft_frame, NoiseModel};
use crate::daft::{AfdmParams, DaftPlan};
use crate::detect::{map_oracle, mmse_detect, mp_detect, mrc_detect};
use crate::modem::{afdm_modulate_with, Constellation};
use crate::{Error, Result};

pub use config::{parse_config, Detector, ExperimentConfig};

/// Exact CSV header.
pub const CSV_HEADER: &str =
    "detector,snr_db,n,p,l_max,alpha_max,delta,frames,bit_errors,ber,avg_iterations,wall_seconds";

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub detector: Detector,
    pub snr_db: f64,
    pub n: usize,
    pub p: usize,
    pub l_max: usize,
    pub alpha_max: usize,
    pub delta: f64,
    pub frames: usize,
    pub bit_errors: u64,
    pub ber: f64,
    /// Mean MP iterations per frame; zero for the other detectors.
    pub avg_iterations: f64,
    pub wall_seconds: f64,
}

impl BerRecord {
    pub fn total_bits(&self, bits_per_symbol: usize) -> u64 {
        (self.frames * self.n * bits_per_symbol) as u64
    }

    /// CSV line without a trailing newline. Without `timing` the wall-clock
    /// column is written as `0`.
    pub fn csv_row(&self, timing: bool) -> String {
        let wall = if timing { format!("{:.3}", self.wall_seconds) } else { "0".to_string() };
        format!(
            "{},{},{},{},{},{},{},{},{},{:e},{},{}",
            self.detector,
            self.snr_db,
            self.n,
            self.p,
            self.l_max,
            self.alpha_max,
            self.delta,
            self.frames,
            self.bit_errors,
            self.ber,
            self.avg_iterations,
            wall
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Print per-frame diagnostics to stderr.
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, verbose: false }
    }
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self { workers, ..Self::default() }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed ⊕ hash(detector, snr index)`.
pub fn point_seed(seed: u64, detector: Detector, snr_index: usize) -> u64 {
    seed ^ splitmix64((detector.id() << 32) | snr_index as u64)
}

/// RNG for one frame of one sweep point.
pub fn frame_rng(point_seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
    rng.set_stream(frame);
    rng
}

struct LinkContext {
    cfg: ExperimentConfig,
    params: AfdmParams,
    plan: DaftPlan,
    constellation: Constellation,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    bit_errors: u64,
    iterations: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            bit_errors: self.bit_errors + other.bit_errors,
            iterations: self.iterations + other.iterations,
        }
    }
}

impl LinkContext {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.params()?;
        Ok(Self {
            cfg: cfg.clone(),
            params,
            plan: DaftPlan::new(&params),
            constellation: cfg.constellation()?,
        })
    }

    /// Bits, modulation, channel, noise, demodulation, detection, error count.
    fn simulate_frame(
        &self,
        detector: Detector,
        noise: &NoiseModel,
        seed: u64,
        frame: u64,
        verbose: bool,
    ) -> Result<Tally> {
        let mut rng = frame_rng(seed, frame);
        let c = &self.constellation;
        let n = self.params.n;
        let sent: Vec<usize> = (0..n).map(|_| rng.random_range(0..c.order())).collect();
        let x: Vec<Complex64> = sent.iter().map(|&i| c.point(i)).collect();
        let tx = afdm_modulate_with(&self.plan, &x)?;
        let ch = draw_channel(self.cfg.p, self.cfg.l_max, self.cfg.alpha_max, &mut rng)?;
        let (y, _) = received_daft_frame(&tx, &ch, noise, &mut rng, &self.plan)?;
        let sparse = build_effective_sparse(&ch, &self.params)?;

        let mut iterations = 0;
        let decided: Vec<usize> = match detector {
            Detector::Mp => {
                let res = mp_detect(&y, &sparse, noise, c, &self.cfg.mp)?;
                iterations = res.iterations_used as u64;
                if verbose {
                    let trace: Vec<String> = res.eta_trace.iter().map(|e| format!("{e:.4}")).collect();
                    eprintln!(
                        "frame={frame} detector=mp iterations={} eta={:.4} termination={} eta_trace={}",
                        res.iterations_used,
                        res.eta_final,
                        res.termination.as_str(),
                        trace.join(";")
                    );
                }
                res.symbols
            }
            Detector::Mmse => mmse_detect(&y, &sparse.to_dense(), noise, c)?,
            // A symbol with an empty column falls back to index 0.
            Detector::Mrc => mrc_detect(&y, &sparse, c)?.into_iter().map(|s| s.unwrap_or(0)).collect(),
            Detector::Map => map_oracle(&y, &sparse.to_dense(), c, noise)?,
        };
        let bit_errors: u64 =
            sent.iter().zip(&decided).map(|(a, b)| (a ^ b).count_ones() as u64).sum();
        if verbose && detector != Detector::Mp {
            eprintln!("frame={frame} detector={detector} bit_errors={bit_errors}");
        }
        Ok(Tally { bit_errors, iterations })
    }

    fn run(&self, detector: Detector, snr_db: f64, seed: u64, opts: RunOptions) -> Result<BerRecord> {
        let noise = NoiseModel::from_snr_db(snr_db);
        let frames = self.cfg.frames as u64;
        let start = Instant::now();
        let one = |f: u64| self.simulate_frame(detector, &noise, seed, f, opts.verbose);
        let tally = if opts.workers <= 1 {
            (0..frames).try_fold(Tally::default(), |acc, f| Ok::<_, Error>(acc.merge(one(f)?)))?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
            pool.install(|| {
                (0..frames)
                    .into_par_iter()
                    .map(one)
                    .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
            })?
        };
        let bits = frames * (self.params.n * self.constellation.bits_per_symbol()) as u64;
        Ok(BerRecord {
            detector,
            snr_db,
            n: self.cfg.n,
            p: self.cfg.p,
            l_max: self.cfg.l_max,
            alpha_max: self.cfg.alpha_max,
            delta: self.cfg.mp.damping,
            frames: self.cfg.frames,
            bit_errors: tally.bit_errors,
            ber: tally.bit_errors as f64 / bits as f64,
            avg_iterations: if detector == Detector::Mp {
                tally.iterations as f64 / frames as f64
            } else {
                0.0
            },
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Simulates `cfg.frames` frames of one `(detector, SNR)` point.
pub fn run_point(
    cfg: &ExperimentConfig,
    detector: Detector,
    snr_db: f64,
    seed: u64,
    opts: RunOptions,
) -> Result<BerRecord> {
    LinkContext::new(cfg)?.run(detector, snr_db, seed, opts)
}

/// Every `detectors × snr_db` point of `cfg`, detector-major.
pub fn simulate_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<BerRecord>> {
    let ctx = LinkContext::new(cfg)?;
    let mut out = Vec::with_capacity(cfg.detectors.len() * cfg.snr_db.len());
    for &det in &cfg.detectors {
        for (k, &snr) in cfg.snr_db.iter().enumerate() {
            out.push(ctx.run(det, snr, point_seed(cfg.seed, det, k), opts)?);
        }
    }
    Ok(out)
}

fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs several configurations into one CSV file. The file is created
/// before any simulation starts.
pub fn run_batch(cfgs: &[ExperimentConfig], out: &Path, opts: RunOptions) -> Result<Vec<BerRecord>> {
    for cfg in cfgs {
        cfg.validate()?;
    }
    let mut w = create_output(out)?;
    writeln!(w, "{CSV_HEADER}")?;
    w.flush()?;
    let mut all = Vec::new();
    for cfg in cfgs {
        for rec in simulate_sweep(cfg, opts)? {
            writeln!(w, "{}", rec.csv_row(cfg.timing))?;
            w.flush()?;
            all.push(rec);
        }
    }
    Ok(all)
}

/// Runs `cfg` and writes the CSV to `cfg.output`.
pub fn run_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<BerRecord>> {
    run_batch(std::slice::from_ref(cfg), &cfg.output, opts)
}

/// Two-sided 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(detectors: Vec<Detector>) -> ExperimentConfig {
        ExperimentConfig {
            n: 16,
            p: 3,
            l_max: 2,
            alpha_max: 1,
            snr_db: vec![0.0, 10.0],
            detectors,
            frames: 200,
            seed: 42,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn point_seeds_differ() {
        let a = point_seed(7, Detector::Mp, 0);
        assert_ne!(a, point_seed(7, Detector::Mp, 1));
        assert_ne!(a, point_seed(7, Detector::Mmse, 0));
        assert_eq!(a, point_seed(7, Detector::Mp, 0));
    }

    #[test]
    fn high_snr_single_path_is_error_free() {
        let cfg = ExperimentConfig { p: 1, frames: 1000, ..small(vec![Detector::Mp]) };
        for det in [Detector::Mp, Detector::Mmse, Detector::Mrc] {
            let rec = run_point(&cfg, det, 60.0, 3, RunOptions::with_workers(4)).unwrap();
            assert_eq!(rec.bit_errors, 0, "{det}");
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small(vec![Detector::Mp, Detector::Mmse, Detector::Mrc]);
        let serial = simulate_sweep(&cfg, RunOptions::with_workers(1)).unwrap();
        let parallel = simulate_sweep(&cfg, RunOptions::with_workers(8)).unwrap();
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.csv_row(false), b.csv_row(false));
        }
    }

    #[test]
    fn accounting_bounds() {
        let cfg = small(vec![Detector::Mp]);
        for rec in simulate_sweep(&cfg, RunOptions::with_workers(4)).unwrap() {
            assert!(rec.bit_errors <= rec.total_bits(2));
            assert_eq!(rec.ber, rec.bit_errors as f64 / rec.total_bits(2) as f64);
            assert!(rec.avg_iterations >= 1.0 && rec.avg_iterations <= 30.0);
        }
        let cfg = small(vec![Detector::Mmse]);
        let rec = run_point(&cfg, Detector::Mmse, 0.0, 1, RunOptions::default()).unwrap();
        assert_eq!(rec.avg_iterations, 0.0);
        assert!(rec.ber > 0.01 && rec.ber < 0.5, "{}", rec.ber);
    }

    #[test]
    fn map_detector_runs_on_tiny_frames() {
        let cfg = ExperimentConfig {
            n: 8,
            p: 2,
            l_max: 1,
            alpha_max: 1,
            frames: 20,
            ..small(vec![Detector::Map])
        };
        let rec = run_point(&cfg, Detector::Map, 30.0, 5, RunOptions::default()).unwrap();
        assert_eq!(rec.frames, 20);
    }

    #[test]
    fn csv_output() {
        let dir = std::env::temp_dir().join(format!("afdm-csv-{}", std::process::id()));
        let out = dir.join("nested/ber.csv");
        let cfg = ExperimentConfig { output: out.clone(), frames: 10, ..small(vec![Detector::Mrc]) };
        let recs = run_sweep(&cfg, RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + recs.len());
        assert!(lines[1].starts_with("mrc,0,16,3,2,1,0.6,10,"));
        assert!(lines[1].ends_with(",0,0"));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unwritable_output_fails_before_simulating() {
        let cfg = ExperimentConfig {
            output: "/proc/definitely/not/writable.csv".into(),
            frames: usize::MAX / 1024,
            ..small(vec![Detector::Mp])
        };
        let start = Instant::now();
        assert!(matches!(run_sweep(&cfg, RunOptions::default()), Err(Error::Io(_))));
        assert!(start.elapsed().as_secs() < 5);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && hi > 0.05);
        assert!((lo - 0.0381).abs() < 1e-3 && (hi - 0.0653).abs() < 1e-3);
        let (lo, hi) = wilson_interval(0, 1000);
        assert!(lo < 1e-15);
        assert!(hi > 0.0 && hi < 0.004);
    }
}
