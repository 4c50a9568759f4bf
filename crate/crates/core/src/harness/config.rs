//! `key=value` experiment configuration.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::daft::AfdmParams;
use crate::detect::{MpConfig, XiKernel, ORACLE_LIMIT};
use crate::modem::Constellation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    Mp,
    Mmse,
    Mrc,
    Map,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::Mp, Detector::Mmse, Detector::Mrc, Detector::Map];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Mp => "mp",
            Detector::Mmse => "mmse",
            Detector::Mrc => "mrc",
            Detector::Map => "map",
        }
    }

    /// Stable numeric id used in seed derivation.
    pub(crate) fn id(self) -> u64 {
        match self {
            Detector::Mp => 1,
            Detector::Mmse => 2,
            Detector::Mrc => 3,
            Detector::Map => 4,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown detector {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub l_max: usize,
    pub alpha_max: usize,
    pub qam_order: usize,
    pub snr_db: Vec<f64>,
    pub detectors: Vec<Detector>,
    pub mp: MpConfig,
    pub frames: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Prefix length; `None` means `l_max`.
    pub cpp_len: Option<usize>,
    /// Explicit chirp rates; `None` means the derived defaults.
    pub c1_override: Option<f64>,
    pub c2_override: Option<f64>,
    /// Write measured wall-clock time into the CSV. Off by default so that
    /// sweeps are byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 64,
            p: 4,
            l_max: 3,
            alpha_max: 3,
            qam_order: 4,
            snr_db: vec![10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
            detectors: vec![Detector::Mp],
            mp: MpConfig::default(),
            frames: 10_000,
            seed: 1,
            output: PathBuf::from("ber.csv"),
            cpp_len: None,
            c1_override: None,
            c2_override: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    /// `(2·α_max + 1)/N` unless overridden.
    pub fn c1(&self) -> f64 {
        self.c1_override.unwrap_or((2 * self.alpha_max + 1) as f64 / self.n as f64)
    }

    pub fn c2(&self) -> f64 {
        self.c2_override.unwrap_or(0.0)
    }

    pub fn cpp_len(&self) -> usize {
        self.cpp_len.unwrap_or(self.l_max)
    }

    pub fn params(&self) -> Result<AfdmParams> {
        AfdmParams::new(self.n, self.c1(), self.c2(), self.cpp_len())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::qam(self.qam_order)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        if self.l_max >= self.n {
            return bad(format!("l_max = {} must be below n = {}", self.l_max, self.n));
        }
        if self.cpp_len() < self.l_max {
            return bad(format!("cpp_len = {} shorter than l_max = {}", self.cpp_len(), self.l_max));
        }
        if self.cpp_len() >= self.n {
            return bad(format!("cpp_len = {} must be below n = {}", self.cpp_len(), self.n));
        }
        let available = (self.l_max + 1) * (2 * self.alpha_max + 1);
        if self.p == 0 || self.p > available {
            return bad(format!("p = {} outside 1..={available} distinct (delay, Doppler) pairs", self.p));
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must list at least one finite value".into());
        }
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        let constellation = self.constellation()?;
        self.mp.validate()?;
        let params = self.params()?;
        let step = 2.0 * params.n as f64 * params.c1;
        for l in 1..=self.l_max {
            let t = step * l as f64;
            if (t - t.round()).abs() > 1e-9 {
                return bad(format!("2·N·c1·l = {t} is not an integer for l = {l}"));
            }
        }
        if self.detectors.contains(&Detector::Map) {
            let hyp = (constellation.order() as f64).powi(self.n as i32);
            if hyp > ORACLE_LIMIT as f64 {
                return Err(Error::InstanceTooLarge { hypotheses: hyp, limit: ORACLE_LIMIT });
            }
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(value: &str) -> Option<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped,
/// unknown or repeated keys are rejected, and the result is validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        let invalid = || err(format!("invalid value {value:?} for {key}"));
        macro_rules! num {
            () => {
                value.parse().map_err(|_| invalid())?
            };
        }
        match key {
            "n" => cfg.n = num!(),
            "p" => cfg.p = num!(),
            "l_max" => cfg.l_max = num!(),
            "alpha_max" => cfg.alpha_max = num!(),
            "qam" => cfg.qam_order = num!(),
            "snr_db" => cfg.snr_db = parse_list(value).ok_or_else(invalid)?,
            "detectors" => cfg.detectors = parse_list(value).ok_or_else(invalid)?,
            "delta" => cfg.mp.damping = num!(),
            "max_iters" => cfg.mp.max_iters = num!(),
            "gamma" => cfg.mp.gamma = num!(),
            "epsilon" => cfg.mp.epsilon = num!(),
            "xi_kernel" => {
                cfg.mp.kernel = match value {
                    "complex" => XiKernel::ComplexGaussian,
                    "real" => XiKernel::RealGaussian,
                    _ => return Err(invalid()),
                }
            }
            "frames" => cfg.frames = num!(),
            "seed" => cfg.seed = num!(),
            "output" => cfg.output = PathBuf::from(value),
            "cpp_len" => cfg.cpp_len = Some(num!()),
            "c1" => cfg.c1_override = Some(num!()),
            "c2" => cfg.c2_override = Some(num!()),
            "timing" => cfg.timing = parse_bool(value).ok_or_else(invalid)?,
            _ => return Err(err(format!("unknown key {key:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
