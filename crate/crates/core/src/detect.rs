//! Symbol detectors for `y = H_eff·x + w̃`.
//!
//! [`mp_detect`] is the message passing detector on the sparse factor graph.
//! [`mmse_detect`] and [`mrc_detect`] are linear baselines, and
//! [`map_oracle`] / [`symbol_map_oracle`] enumerate every hypothesis and are
//! only usable on tiny frames.
//!
//! All detectors return constellation indices rather than points.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{NoiseModel, SparseEffectiveChannel};
use crate::modem::Constellation;
use crate::{Error, Result};

/// Variances are never allowed below this, so that noiseless fixtures keep
/// finite likelihoods.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Upper bound on `Q^N` for the exhaustive oracles.
pub const ORACLE_LIMIT: usize = 1 << 20;

/// Denominator used in the likelihood kernel `exp(−|e|²/κσ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiKernel {
    /// `κ = 1`: the circular complex Gaussian density.
    #[default]
    ComplexGaussian,
    /// `κ = 2`.
    RealGaussian,
}

impl XiKernel {
    fn scale(self) -> f64 {
        match self {
            XiKernel::ComplexGaussian => 1.0,
            XiKernel::RealGaussian => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpConfig {
    /// Damping `Δ ∈ (0, 1]`; weight on the fresh pmf.
    pub damping: f64,
    pub max_iters: usize,
    /// A symbol counts as settled once its largest probability is `≥ 1 − γ`.
    pub gamma: f64,
    /// Stop when `η` falls more than `ε` below its best value so far.
    pub epsilon: f64,
    pub kernel: XiKernel,
}

impl Default for MpConfig {
    fn default() -> Self {
        Self { damping: 0.6, max_iters: 30, gamma: 0.1, epsilon: 0.2, kernel: XiKernel::default() }
    }
}

impl MpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Validation(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Validation(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Every symbol settled (`η = 1`).
    Converged,
    /// `η` dropped more than `ε` below its best value.
    Diverged,
    MaxIters,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Diverged => "diverged",
            Termination::MaxIters => "max_iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Constellation index per symbol.
    pub symbols: Vec<usize>,
    pub iterations_used: usize,
    pub eta_final: f64,
    pub termination: Termination,
    pub eta_trace: Vec<f64>,
}

fn log_normalize(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `Δ·fresh + (1 − Δ)·old`, written into `old`.
pub fn damp(old: &mut [f64], fresh: &[f64], damping: f64) {
    for (o, f) in old.iter_mut().zip(fresh) {
        *o = damping * f + (1.0 - damping) * *o;
    }
}

/// Iteration state of the message passing detector.
///
/// Edges are indexed by `(observation d, tap t)`; the variable on the other
/// end is `c = (d + loc_t) mod N`. Per edge the state holds the pmf sent
/// from `x[c]` to `y[d]` and the interference mean and variance sent back.
#[derive(Debug, Clone)]
pub struct MpState<'a> {
    ch: &'a SparseEffectiveChannel,
    y: &'a [Complex64],
    points: &'a [Complex64],
    energies: Vec<f64>,
    n0: f64,
    cfg: MpConfig,
    pmf: Vec<f64>,
    mean: Vec<Complex64>,
    var: Vec<f64>,
    decisions: Vec<usize>,
    eta_trace: Vec<f64>,
    best_eta: f64,
    // scratch: per-tap log-likelihoods for one variable node, taps × Q
    loglik: Vec<f64>,
    fresh: Vec<f64>,
}

impl<'a> MpState<'a> {
    pub fn new(
        y: &'a [Complex64],
        ch: &'a SparseEffectiveChannel,
        noise: &NoiseModel,
        constellation: &'a Constellation,
        cfg: MpConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = ch.n();
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        if ch.num_taps() == 0 {
            return Err(Error::Validation("factor graph has no edges".into()));
        }
        let q = constellation.order();
        let taps = ch.num_taps();
        let points = constellation.points();
        Ok(Self {
            ch,
            y,
            points,
            energies: points.iter().map(|a| a.norm_sqr()).collect(),
            n0: noise.n0,
            cfg,
            pmf: vec![1.0 / q as f64; n * taps * q],
            mean: vec![Complex64::new(0.0, 0.0); n * taps],
            var: vec![noise.n0.max(VARIANCE_FLOOR); n * taps],
            decisions: vec![0; n],
            eta_trace: Vec::new(),
            best_eta: f64::NEG_INFINITY,
            loglik: vec![0.0; taps * q],
            fresh: vec![0.0; q],
        })
    }

    fn q(&self) -> usize {
        self.points.len()
    }

    pub fn pmf(&self, row: usize, tap: usize) -> &[f64] {
        let q = self.q();
        let e = row * self.ch.num_taps() + tap;
        &self.pmf[e * q..(e + 1) * q]
    }

    pub fn mean(&self, row: usize, tap: usize) -> Complex64 {
        self.mean[row * self.ch.num_taps() + tap]
    }

    pub fn variance(&self, row: usize, tap: usize) -> f64 {
        self.var[row * self.ch.num_taps() + tap]
    }

    pub fn decisions(&self) -> &[usize] {
        &self.decisions
    }

    pub fn eta_trace(&self) -> &[f64] {
        &self.eta_trace
    }

    pub fn iteration(&self) -> usize {
        self.eta_trace.len()
    }

    /// Observation to variable: Gaussian interference statistics per edge.
    fn update_interference(&mut self) {
        let taps = self.ch.num_taps();
        let q = self.q();
        let floor = self.n0.max(VARIANCE_FLOOR);
        let mut m = vec![Complex64::new(0.0, 0.0); taps];
        let mut v = vec![0.0; taps];
        for d in 0..self.ch.n() {
            for t in 0..taps {
                let h = self.ch.coeff(d, t);
                let p = &self.pmf[(d * taps + t) * q..(d * taps + t + 1) * q];
                let mut first = Complex64::new(0.0, 0.0);
                let mut second = 0.0;
                for j in 0..q {
                    first += self.points[j] * p[j];
                    second += self.energies[j] * p[j];
                }
                m[t] = first * h;
                v[t] = second * h.norm_sqr() - m[t].norm_sqr();
            }
            for t in 0..taps {
                let mut mu = Complex64::new(0.0, 0.0);
                let mut sigma2 = 0.0;
                for u in (0..taps).filter(|&u| u != t) {
                    mu += m[u];
                    sigma2 += v[u].max(0.0);
                }
                self.mean[d * taps + t] = mu;
                self.var[d * taps + t] = (sigma2 + self.n0).max(floor);
            }
        }
    }

    /// Variable to observation pmfs plus the settled-symbol count for `η`.
    fn update_beliefs(&mut self) -> (usize, Vec<usize>) {
        let n = self.ch.n();
        let taps = self.ch.num_taps();
        let q = self.q();
        let kappa = self.cfg.kernel.scale();
        let threshold = (1.0 - self.cfg.gamma).ln();
        let mut settled = 0;
        let mut candidates = vec![0; n];
        let mut total = vec![0.0; q];
        for c in 0..n {
            for t in 0..taps {
                let e = self.ch.row_of(c, t);
                let edge = e * taps + t;
                let h = self.ch.coeff(e, t);
                let resid = self.y[e] - self.mean[edge];
                let denom = kappa * self.var[edge];
                let ll = &mut self.loglik[t * q..(t + 1) * q];
                for (k, a) in self.points.iter().enumerate() {
                    ll[k] = -(resid - h * a).norm_sqr() / denom;
                }
                log_normalize(ll);
            }
            for t in 0..taps {
                let e = self.ch.row_of(c, t);
                let edge = e * taps + t;
                for k in 0..q {
                    self.fresh[k] = (0..taps)
                        .filter(|&u| u != t)
                        .map(|u| self.loglik[u * q + k])
                        .sum();
                }
                log_normalize(&mut self.fresh);
                for f in self.fresh.iter_mut() {
                    *f = f.exp();
                }
                let p = &mut self.pmf[edge * q..(edge + 1) * q];
                damp(p, &self.fresh, self.cfg.damping);
                let sum: f64 = p.iter().sum();
                debug_assert!((sum - 1.0).abs() < 1e-9, "pmf sums to {sum}");
                for x in p.iter_mut() {
                    *x /= sum;
                }
            }
            for (k, slot) in total.iter_mut().enumerate() {
                *slot = (0..taps).map(|u| self.loglik[u * q + k]).sum();
            }
            // Posterior over the full product, normalised across the alphabet;
            // the bare product of per-branch pmfs almost never clears 1 − γ
            // once a symbol has several branches, which would freeze η.
            log_normalize(&mut total);
            let best = argmax(&total);
            candidates[c] = best;
            if total[best] >= threshold {
                settled += 1;
            }
        }
        (settled, candidates)
    }

    /// Runs one iteration. Returns the stopping reason if this iteration
    /// ends the run.
    pub fn step(&mut self) -> Option<Termination> {
        self.update_interference();
        let (settled, candidates) = self.update_beliefs();
        let n = self.ch.n();
        let eta = settled as f64 / n as f64;
        let prev = self.eta_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        if eta > prev {
            self.decisions = candidates;
        }
        self.eta_trace.push(eta);
        let best_before = self.best_eta;
        self.best_eta = self.best_eta.max(eta);
        if settled == n {
            Some(Termination::Converged)
        } else if eta < best_before - self.cfg.epsilon {
            Some(Termination::Diverged)
        } else if self.iteration() >= self.cfg.max_iters {
            Some(Termination::MaxIters)
        } else {
            None
        }
    }

    pub fn run(mut self) -> DetectionResult {
        let termination = loop {
            if let Some(t) = self.step() {
                break t;
            }
        };
        DetectionResult {
            symbols: self.decisions,
            iterations_used: self.eta_trace.len(),
            eta_final: *self.eta_trace.last().expect("at least one iteration"),
            termination,
            eta_trace: self.eta_trace,
        }
    }
}

/// Message passing detection with uniform initial pmfs.
pub fn mp_detect(
    y: &[Complex64],
    ch: &SparseEffectiveChannel,
    noise: &NoiseModel,
    constellation: &Constellation,
    cfg: &MpConfig,
) -> Result<DetectionResult> {
    Ok(MpState::new(y, ch, noise, constellation, *cfg)?.run())
}

/// Linear MMSE estimate `(H^H H + N0 I)^{-1} H^H y`.
pub fn mmse_equalize(y: &[Complex64], h: &DMatrix<Complex64>, noise: &NoiseModel) -> Result<Vec<Complex64>> {
    let n = h.ncols();
    if y.len() != h.nrows() {
        return Err(Error::Dimension { expected: h.nrows(), got: y.len() });
    }
    let hh = h.adjoint();
    let gram = &hh * h + DMatrix::<Complex64>::identity(n, n) * Complex64::new(noise.n0, 0.0);
    let rhs = hh * DVector::from_column_slice(y);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("MMSE Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

pub fn mmse_detect(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    noise: &NoiseModel,
    constellation: &Constellation,
) -> Result<Vec<usize>> {
    Ok(mmse_equalize(y, h, noise)?.into_iter().map(|z| constellation.nearest(z)).collect())
}

/// Per-symbol maximal ratio combining over the branches in `J(c)`.
/// `None` marks a symbol whose column carries no energy.
pub fn mrc_equalize(y: &[Complex64], ch: &SparseEffectiveChannel) -> Result<Vec<Option<Complex64>>> {
    let n = ch.n();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    Ok((0..n)
        .map(|c| {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for t in 0..ch.num_taps() {
                let d = ch.row_of(c, t);
                let h = ch.coeff(d, t);
                num += h.conj() * y[d];
                den += h.norm_sqr();
            }
            (den > 0.0).then(|| num / den)
        })
        .collect())
}

pub fn mrc_detect(
    y: &[Complex64],
    ch: &SparseEffectiveChannel,
    constellation: &Constellation,
) -> Result<Vec<Option<usize>>> {
    Ok(mrc_equalize(y, ch)?
        .into_iter()
        .map(|z| z.map(|z| constellation.nearest(z)))
        .collect())
}

fn check_oracle(y: &[Complex64], h: &DMatrix<Complex64>, constellation: &Constellation) -> Result<usize> {
    let n = h.ncols();
    if y.len() != h.nrows() {
        return Err(Error::Dimension { expected: h.nrows(), got: y.len() });
    }
    let hyp = (constellation.order() as f64).powi(n as i32);
    if hyp > ORACLE_LIMIT as f64 {
        return Err(Error::InstanceTooLarge { hypotheses: hyp, limit: ORACLE_LIMIT });
    }
    Ok(hyp as usize)
}

/// Visits every `x ∈ 𝔸^N` in lexicographic index order (last symbol
/// fastest), passing the index vector and `‖y − H·x‖²`. The residual is
/// updated one column at a time.
fn enumerate_hypotheses(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    points: &[Complex64],
    mut visit: impl FnMut(&[usize], f64),
) {
    let n = h.ncols();
    let q = points.len();
    let mut idx = vec![0usize; n];
    let mut resid: Vec<Complex64> = y.to_vec();
    for c in 0..n {
        for (r, hv) in resid.iter_mut().zip(h.column(c).iter()) {
            *r -= hv * points[0];
        }
    }
    loop {
        visit(&idx, resid.iter().map(|z| z.norm_sqr()).sum());
        let mut c = n;
        loop {
            if c == 0 {
                return;
            }
            c -= 1;
            let old = idx[c];
            let new = (old + 1) % q;
            idx[c] = new;
            let delta = points[new] - points[old];
            for (r, hv) in resid.iter_mut().zip(h.column(c).iter()) {
                *r -= hv * delta;
            }
            if new != 0 {
                break;
            }
        }
    }
}

/// Exhaustive joint MAP, `argmin ‖y − H·x‖²`. Ties go to the
/// lexicographically smallest index vector.
pub fn map_oracle(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    constellation: &Constellation,
    _noise: &NoiseModel,
) -> Result<Vec<usize>> {
    check_oracle(y, h, constellation)?;
    let mut best = vec![0; h.ncols()];
    let mut best_metric = f64::INFINITY;
    enumerate_hypotheses(y, h, constellation.points(), |idx, metric| {
        if metric < best_metric {
            best_metric = metric;
            best.copy_from_slice(idx);
        }
    });
    Ok(best)
}

/// Exact per-symbol MAP under a uniform prior: each symbol's posterior is
/// marginalised over all other symbols.
pub fn symbol_map_oracle(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    constellation: &Constellation,
    noise: &NoiseModel,
) -> Result<Vec<usize>> {
    let hyp = check_oracle(y, h, constellation)?;
    let n = h.ncols();
    let q = constellation.order();
    let n0 = noise.n0.max(VARIANCE_FLOOR);
    let mut metrics = Vec::with_capacity(hyp);
    enumerate_hypotheses(y, h, constellation.points(), |_, m| metrics.push(-m / n0));
    let max = metrics.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut marginals = vec![0.0; n * q];
    for (k, m) in metrics.iter().enumerate() {
        let w = (m - max).exp();
        if w == 0.0 {
            continue;
        }
        let mut rest = k;
        for c in (0..n).rev() {
            marginals[c * q + rest % q] += w;
            rest /= q;
        }
    }
    Ok((0..n).map(|c| argmax(&marginals[c * q..(c + 1) * q])).collect())
}
