//! Linear time-varying multipath channels with integer delays and Dopplers.
//!
//! Three views of the same channel are provided and must agree:
//!
//! 1. [`apply_channel_timedomain`] evaluates `r[n] = Σ h_i e^{−j2πα_i n/N} s[n − l_i]`
//!    directly, reading the chirp-periodic prefix for negative indices.
//! 2. [`build_channel_matrix`] materialises `H = Σ h_i Γ_i Δ_i Π^{l_i}`.
//! 3. [`build_effective_sparse`] gives the DAFT-domain `H_eff = A·H·A^H` in
//!    closed form: path `i` puts one nonzero per row at column
//!    `(p + loc_i) mod N`, `loc_i = α_i + 2N·c1·l_i`.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::daft::{cis_turns, daft_matrix, frac_product, AfdmParams, ComplexFrame, DaftPlan};
use crate::modem::TxFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub gain: Complex64,
    /// Delay in samples.
    pub delay: usize,
    /// Doppler index `α = N·f`.
    pub doppler: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
    pub l_max: usize,
    pub alpha_max: usize,
}

impl ChannelRealization {
    pub fn new(paths: Vec<ChannelPath>, l_max: usize, alpha_max: usize) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Validation("a channel needs at least one path".into()));
        }
        let mut seen = HashSet::new();
        for p in &paths {
            if p.delay > l_max || p.doppler.unsigned_abs() as usize > alpha_max {
                return Err(Error::Validation(format!(
                    "path (l={}, α={}) outside l_max={l_max}, α_max={alpha_max}",
                    p.delay, p.doppler
                )));
            }
            if !seen.insert((p.delay, p.doppler)) {
                return Err(Error::Validation(format!(
                    "duplicate path (l={}, α={})",
                    p.delay, p.doppler
                )));
            }
        }
        Ok(Self { paths, l_max, alpha_max })
    }

    /// Single unit-gain path with no delay or Doppler.
    pub fn identity() -> Self {
        Self {
            paths: vec![ChannelPath { gain: Complex64::new(1.0, 0.0), delay: 0, doppler: 0 }],
            l_max: 0,
            alpha_max: 0,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Plain-text record, one `h_re,h_im,l,alpha` line per path.
    pub fn to_record(&self) -> String {
        let mut out = format!("# l_max={} alpha_max={}\n", self.l_max, self.alpha_max);
        for p in &self.paths {
            let _ = writeln!(out, "{},{},{},{}", p.gain.re, p.gain.im, p.delay, p.doppler);
        }
        out
    }

    /// Parses [`to_record`](Self::to_record) output. Without the header
    /// comment, `l_max` and `alpha_max` are taken from the paths themselves.
    pub fn from_record(text: &str) -> Result<Self> {
        let mut bounds = None;
        let mut paths = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                let mut l = None;
                let mut a = None;
                for tok in comment.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("l_max=") {
                        l = v.parse::<usize>().ok();
                    } else if let Some(v) = tok.strip_prefix("alpha_max=") {
                        a = v.parse::<usize>().ok();
                    }
                }
                if let (Some(l), Some(a)) = (l, a) {
                    bounds = Some((l, a));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Record(format!("line {}: {raw:?}", no + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let re: f64 = fields[0].parse().map_err(|_| bad())?;
            let im: f64 = fields[1].parse().map_err(|_| bad())?;
            let delay: usize = fields[2].parse().map_err(|_| bad())?;
            let doppler: i64 = fields[3].parse().map_err(|_| bad())?;
            paths.push(ChannelPath { gain: Complex64::new(re, im), delay, doppler });
        }
        let (l_max, alpha_max) = bounds.unwrap_or_else(|| {
            (
                paths.iter().map(|p| p.delay).max().unwrap_or(0),
                paths.iter().map(|p| p.doppler.unsigned_abs() as usize).max().unwrap_or(0),
            )
        });
        Self::new(paths, l_max, alpha_max)
    }
}

/// Complex circular AWGN with total variance `n0` per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub n0: f64,
}

impl NoiseModel {
    pub fn new(n0: f64) -> Self {
        assert!(n0 >= 0.0, "noise variance must be nonnegative");
        Self { n0 }
    }

    pub fn noiseless() -> Self {
        Self { n0: 0.0 }
    }

    /// Unit symbol energy, so `N0 = 10^{−SNR/10}`.
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self::new(10f64.powf(-snr_db / 10.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        if self.n0 == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let sd = (self.n0 / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * sd, im * sd)
    }
}

/// Draws `p` paths with i.i.d. `CN(0, 1/p)` gains. The first path has zero
/// delay; every other delay is uniform on `0..=l_max`, every Doppler uniform
/// on `−α_max..=α_max`, with redraws until all `(l, α)` pairs are distinct.
pub fn draw_channel<R: Rng + ?Sized>(
    p: usize,
    l_max: usize,
    alpha_max: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let available = (l_max + 1) * (2 * alpha_max + 1);
    if p == 0 {
        return Err(Error::Validation("path count must be at least 1".into()));
    }
    if p > available {
        return Err(Error::InfeasibleChannel { paths: p, available });
    }
    let alpha_max_i = alpha_max as i64;
    let mut seen = HashSet::with_capacity(p);
    let mut paths = Vec::with_capacity(p);
    let gain_sd = (0.5 / p as f64).sqrt();
    for i in 0..p {
        let (delay, doppler) = loop {
            let delay = if i == 0 { 0 } else { rng.random_range(0..=l_max) };
            let doppler = rng.random_range(-alpha_max_i..=alpha_max_i);
            if seen.insert((delay, doppler)) {
                break (delay, doppler);
            }
        };
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        paths.push(ChannelPath { gain: Complex64::new(re, im) * gain_sd, delay, doppler });
    }
    Ok(ChannelRealization { paths, l_max, alpha_max })
}

/// `e^{−j2παn/N}` with the exponent reduced modulo `N` in integer arithmetic.
fn doppler_phase(doppler: i64, n: usize, len: usize) -> Complex64 {
    let k = (doppler * n as i64).rem_euclid(len as i64);
    cis_turns(-(k as f64) / len as f64)
}

/// Noiseless time-domain channel output for `n = 0 … N−1`.
pub fn channel_output(tx: &TxFrame, ch: &ChannelRealization) -> Result<ComplexFrame> {
    let len = tx.time_domain.len();
    if tx.cpp.len() < ch.l_max {
        return Err(Error::CppTooShort { cpp_len: tx.cpp.len(), l_max: ch.l_max });
    }
    let mut r = vec![Complex64::new(0.0, 0.0); len];
    for path in &ch.paths {
        if path.delay > tx.cpp.len() {
            return Err(Error::CppTooShort { cpp_len: tx.cpp.len(), l_max: path.delay });
        }
        for (n, out) in r.iter_mut().enumerate() {
            let s = tx.sample(n as isize - path.delay as isize);
            *out += path.gain * doppler_phase(path.doppler, n, len) * s;
        }
    }
    Ok(r.into())
}

/// Time-domain receive path: channel output plus `CN(0, N0)` noise.
pub fn apply_channel_timedomain<R: Rng + ?Sized>(
    tx: &TxFrame,
    ch: &ChannelRealization,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ComplexFrame> {
    let mut r = channel_output(tx, ch)?;
    if noise.n0 > 0.0 {
        for z in r.iter_mut() {
            *z += noise.sample(rng);
        }
    }
    Ok(r)
}

/// Diagonal of `Γ_CPP` for a path of delay `l`: `e^{−j2πc1(N² − 2N(l − n))}`
/// for `n < l`, one elsewhere.
pub fn cpp_gamma(delay: usize, params: &AfdmParams) -> Vec<Complex64> {
    let len = params.n as i128;
    (0..params.n)
        .map(|n| {
            if n < delay {
                let e = len * len - 2 * len * (delay as i128 - n as i128);
                cis_turns(-frac_product(params.c1, e as f64))
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// Dense `H = Σ h_i Γ_i Δ_{f_i} Π^{l_i}`.
pub fn build_channel_matrix(ch: &ChannelRealization, params: &AfdmParams) -> DMatrix<Complex64> {
    let len = params.n;
    let mut h = DMatrix::zeros(len, len);
    for path in &ch.paths {
        assert!(path.delay < len, "delay {} not below N = {len}", path.delay);
        let gamma = cpp_gamma(path.delay, params);
        for n in 0..len {
            let col = (n + len - path.delay) % len;
            h[(n, col)] += path.gain * gamma[n] * doppler_phase(path.doppler, n, len);
        }
    }
    h
}

/// `A·H·A^H` by dense multiplication.
pub fn build_effective_dense(ch: &ChannelRealization, params: &AfdmParams) -> DMatrix<Complex64> {
    let a = daft_matrix(params);
    let h = build_channel_matrix(ch, params);
    &a * h * a.adjoint()
}

/// Sparse DAFT-domain channel: `taps` diagonals with one coefficient per row.
///
/// Row `d` has its nonzeros at columns `(d + loc_t) mod N`; column `c` has
/// them at rows `(c − loc_t) mod N`. Paths with equal `loc` share a tap.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEffectiveChannel {
    n: usize,
    locs: Vec<usize>,
    /// Row-major `n × taps`.
    coeffs: Vec<Complex64>,
}

impl SparseEffectiveChannel {
    pub fn from_parts(n: usize, locs: Vec<usize>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != n * locs.len() {
            return Err(Error::Dimension { expected: n * locs.len(), got: coeffs.len() });
        }
        if locs.iter().any(|&l| l >= n) {
            return Err(Error::Validation("tap offset outside 0..N".into()));
        }
        Ok(Self { n, locs, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_taps(&self) -> usize {
        self.locs.len()
    }

    pub fn locs(&self) -> &[usize] {
        &self.locs
    }

    /// `H_eff[d, (d + loc_t) mod N]`.
    #[inline]
    pub fn coeff(&self, row: usize, tap: usize) -> Complex64 {
        self.coeffs[row * self.locs.len() + tap]
    }

    #[inline]
    pub fn col_of(&self, row: usize, tap: usize) -> usize {
        (row + self.locs[tap]) % self.n
    }

    #[inline]
    pub fn row_of(&self, col: usize, tap: usize) -> usize {
        (col + self.n - self.locs[tap]) % self.n
    }

    /// `I(d)`.
    pub fn row_index(&self, row: usize) -> Vec<usize> {
        (0..self.num_taps()).map(|t| self.col_of(row, t)).collect()
    }

    /// `J(c)`.
    pub fn col_index(&self, col: usize) -> Vec<usize> {
        (0..self.num_taps()).map(|t| self.row_of(col, t)).collect()
    }

    /// Squared norm of column `c`.
    pub fn col_energy(&self, col: usize) -> f64 {
        (0..self.num_taps()).map(|t| self.coeff(self.row_of(col, t), t).norm_sqr()).sum()
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: x.len() });
        }
        Ok((0..self.n)
            .map(|d| (0..self.num_taps()).map(|t| self.coeff(d, t) * x[self.col_of(d, t)]).sum())
            .collect())
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for d in 0..self.n {
            for t in 0..self.num_taps() {
                m[(d, self.col_of(d, t))] += self.coeff(d, t);
            }
        }
        m
    }
}

/// `loc = (α + 2N·c1·l) mod N`; fails unless the offset is an integer.
pub fn path_loc(path: &ChannelPath, params: &AfdmParams) -> Result<usize> {
    let raw = path.doppler as f64 + 2.0 * params.n as f64 * params.c1 * path.delay as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() > 1e-9 {
        return Err(Error::Unsupported(format!(
            "fractional tap offset {raw} for path (l={}, α={})",
            path.delay, path.doppler
        )));
    }
    Ok((rounded as i64).rem_euclid(params.n as i64) as usize)
}

/// Unit-modulus phase of path `i` at `(p, q)`:
/// `e^{j(2π/N)(N·c1·l² − q·l + N·c2·(q² − p²))}`.
pub fn path_phase(path: &ChannelPath, row: usize, col: usize, params: &AfdmParams) -> Complex64 {
    let (l, len) = (path.delay, params.n);
    let (p, q) = (row as f64, col as f64);
    let turns = frac_product(params.c1, (l * l) as f64) - ((col * l) % len) as f64 / len as f64
        + frac_product(params.c2, q * q - p * p);
    cis_turns(turns)
}

/// Closed-form sparse `H_eff`.
pub fn build_effective_sparse(
    ch: &ChannelRealization,
    params: &AfdmParams,
) -> Result<SparseEffectiveChannel> {
    let len = params.n;
    let mut locs: Vec<usize> = Vec::new();
    let mut coeffs: Vec<Vec<Complex64>> = Vec::new();
    for path in &ch.paths {
        if path.delay >= len {
            return Err(Error::Validation(format!("delay {} not below N = {len}", path.delay)));
        }
        let loc = path_loc(path, params)?;
        let tap = match locs.iter().position(|&l| l == loc) {
            Some(t) => t,
            None => {
                locs.push(loc);
                coeffs.push(vec![Complex64::new(0.0, 0.0); len]);
                locs.len() - 1
            }
        };
        for (p, c) in coeffs[tap].iter_mut().enumerate() {
            let q = (p + loc) % len;
            *c += path.gain * path_phase(path, p, q, params);
        }
    }
    let taps = locs.len();
    let mut flat = vec![Complex64::new(0.0, 0.0); len * taps];
    for (t, col) in coeffs.iter().enumerate() {
        for (p, c) in col.iter().enumerate() {
            flat[p * taps + t] = *c;
        }
    }
    SparseEffectiveChannel::from_parts(len, locs, flat)
}

/// What the receiver is told about a frame besides `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveTruth {
    pub channel: ChannelRealization,
    pub n0: f64,
}

/// Channel, noise and DAFT demodulation in one step.
pub fn received_daft_frame<R: Rng + ?Sized>(
    tx: &TxFrame,
    ch: &ChannelRealization,
    noise: &NoiseModel,
    rng: &mut R,
    plan: &DaftPlan,
) -> Result<(ComplexFrame, ReceiveTruth)> {
    let mut r = apply_channel_timedomain(tx, ch, noise, rng)?;
    r.check_len(plan.params().n)?;
    plan.forward_in_place(&mut r);
    Ok((r, ReceiveTruth { channel: ch.clone(), n0: noise.n0 }))
}
