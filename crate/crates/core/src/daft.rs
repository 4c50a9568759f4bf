//! Discrete affine Fourier transform for square (`M = N`) frames.
//!
//! The forward transform is `A = Λc2 · F · Λc1` where `Λc = diag(e^{-j2πck²})`
//! and `F` is the unitary DFT. [`DaftPlan`] evaluates it as chirp, FFT, chirp;
//! [`daft_matrix`] materialises `A` entry by entry and is kept around as the
//! reference the fast path is tested against.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// `e^{j2πt}`, with `t` first reduced to `[-0.5, 0.5]` turns.
pub(crate) fn cis_turns(t: f64) -> Complex64 {
    let t = t - t.round();
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// Fractional part of `c·k` in turns, keeping the rounding error of the
/// product so large chirp phases stay accurate to ~1e-16.
pub(crate) fn frac_product(c: f64, k: f64) -> f64 {
    let p = c * k;
    let err = c.mul_add(k, -p);
    (p - p.round()) + err
}

/// Frame size and chirp rates shared by every transform in a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfdmParams {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    /// Chirp-periodic prefix length `L` in samples.
    pub cpp_len: usize,
}

impl AfdmParams {
    pub fn new(n: usize, c1: f64, c2: f64, cpp_len: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Params(format!("frame size must be at least 2, got {n}")));
        }
        if cpp_len >= n {
            return Err(Error::Params(format!(
                "prefix length {cpp_len} must be shorter than the frame ({n})"
            )));
        }
        if !c1.is_finite() || !c2.is_finite() {
            return Err(Error::Params("chirp rates must be finite".into()));
        }
        Ok(Self { n, c1, c2, cpp_len })
    }

    /// `c1 = (2·α_max + 1)/N`, `c2 = 0`: the choice that separates every
    /// integer delay/Doppler pair with `|α| ≤ α_max` onto its own diagonal.
    pub fn for_doppler(n: usize, alpha_max: usize, cpp_len: usize) -> Result<Self> {
        Self::new(n, (2 * alpha_max + 1) as f64 / n as f64, 0.0, cpp_len)
    }

    /// True when the chirp-periodic prefix degenerates to a cyclic prefix,
    /// i.e. `2·N·c1` is an integer and `N` is even.
    pub fn cpp_is_cyclic(&self) -> bool {
        let t = 2.0 * self.n as f64 * self.c1;
        self.n.is_multiple_of(2) && (t - t.round()).abs() < 1e-9
    }
}

/// One frame of `N` complex baseband samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexFrame {
    pub data: Vec<Complex64>,
}

impl ComplexFrame {
    pub fn new(data: Vec<Complex64>) -> Self {
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.data
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.data.len() == n {
            Ok(())
        } else {
            Err(Error::Dimension { expected: n, got: self.data.len() })
        }
    }
}

impl Deref for ComplexFrame {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.data
    }
}

impl DerefMut for ComplexFrame {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

impl From<Vec<Complex64>> for ComplexFrame {
    fn from(data: Vec<Complex64>) -> Self {
        Self { data }
    }
}

/// Diagonal of `Λc`: entry `k` is `e^{-j2πck²}`.
pub fn chirp_diagonal(c: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let k = k as f64;
            cis_turns(-frac_product(c, k * k))
        })
        .collect()
}

/// Unitary DFT matrix, `F[m, n] = e^{-j2πmn/N}/√N`.
pub fn dft_matrix(n: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |m, k| cis_turns(-(((m * k) % n) as f64) / n as f64) * scale)
}

/// Dense `A`, each entry evaluated from the DAFT kernel
/// `e^{-j2π(c2·m² + mn/N + c1·n²)}/√N`.
pub fn daft_matrix(params: &AfdmParams) -> DMatrix<Complex64> {
    let n = params.n;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |m, k| {
        let (mf, kf) = (m as f64, k as f64);
        let turns = frac_product(params.c2, mf * mf)
            + ((m * k) % n) as f64 / n as f64
            + frac_product(params.c1, kf * kf);
        cis_turns(-turns) * scale
    })
}

/// Largest entry modulus of a complex matrix.
pub fn max_abs_entry(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reusable factored transform: two chirp diagonals around a planned FFT.
#[derive(Clone)]
pub struct DaftPlan {
    params: AfdmParams,
    chirp1: Vec<Complex64>,
    chirp2: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for DaftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DaftPlan").field("params", &self.params).finish_non_exhaustive()
    }
}

impl DaftPlan {
    pub fn new(params: &AfdmParams) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            params: *params,
            chirp1: chirp_diagonal(params.c1, params.n),
            chirp2: chirp_diagonal(params.c2, params.n),
            fft: planner.plan_fft_forward(params.n),
            ifft: planner.plan_fft_inverse(params.n),
            scale: 1.0 / (params.n as f64).sqrt(),
        }
    }

    pub fn params(&self) -> &AfdmParams {
        &self.params
    }

    /// `A·x`.
    pub fn forward(&self, frame: &[Complex64]) -> Result<ComplexFrame> {
        let mut out = self.checked_copy(frame)?;
        self.forward_in_place(&mut out);
        Ok(out)
    }

    /// `A^H·x`.
    pub fn inverse(&self, frame: &[Complex64]) -> Result<ComplexFrame> {
        let mut out = self.checked_copy(frame)?;
        self.inverse_in_place(&mut out);
        Ok(out)
    }

    /// Panics if `buf.len() != N`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.params.n);
        for (z, w) in buf.iter_mut().zip(&self.chirp1) {
            *z *= w;
        }
        self.fft.process(buf);
        for (z, w) in buf.iter_mut().zip(&self.chirp2) {
            *z *= w * self.scale;
        }
    }

    /// Panics if `buf.len() != N`.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.params.n);
        for (z, w) in buf.iter_mut().zip(&self.chirp2) {
            *z *= w.conj();
        }
        self.ifft.process(buf);
        for (z, w) in buf.iter_mut().zip(&self.chirp1) {
            *z *= w.conj() * self.scale;
        }
    }

    fn checked_copy(&self, frame: &[Complex64]) -> Result<ComplexFrame> {
        if frame.len() != self.params.n {
            return Err(Error::Dimension { expected: self.params.n, got: frame.len() });
        }
        Ok(ComplexFrame::new(frame.to_vec()))
    }
}

/// Forward DAFT of a single frame. Build a [`DaftPlan`] when transforming
/// many frames with the same parameters.
pub fn daft(frame: &ComplexFrame, params: &AfdmParams) -> Result<ComplexFrame> {
    frame.check_len(params.n)?;
    DaftPlan::new(params).forward(frame)
}

/// Inverse DAFT of a single frame.
pub fn idaft(frame: &ComplexFrame, params: &AfdmParams) -> Result<ComplexFrame> {
    frame.check_len(params.n)?;
    DaftPlan::new(params).inverse(frame)
}

/// `s[n + kN] = e^{j2πc1(k²N² + 2kNn)} · s[n]` for `0 ≤ n < N`.
///
/// Panics if `n` is outside the frame.
pub fn chirp_periodic_extend(frame: &[Complex64], k: i64, n: usize, c1: f64) -> Complex64 {
    let len = frame.len() as i128;
    assert!((n as i128) < len, "offset {n} outside frame of {len}");
    if k == 0 {
        return frame[n];
    }
    let k = k as i128;
    let exponent = k * k * len * len + 2 * k * len * n as i128;
    frame[n] * cis_turns(frac_product(c1, exponent as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut impl Rng, n: usize) -> ComplexFrame {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect::<Vec<_>>()
            .into()
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    // Naive O(N^2) DFT, written independently of both transform paths.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|m| {
                x.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let ang = -2.0 * PI * (m * k) as f64 / n as f64;
                        v * Complex64::new(ang.cos(), ang.sin())
                    })
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn zero_chirp_is_identity() {
        let d = chirp_diagonal(0.0, 4);
        assert!(d.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn half_chirp_alternates() {
        let d = chirp_diagonal(0.5, 2);
        assert!((d[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((d[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chirp_entry_matches_direct_phase() {
        // 2π·(7/64)·9 evaluated without range reduction.
        let d = chirp_diagonal(7.0 / 64.0, 64);
        let phase = -2.0 * PI * 63.0 / 64.0;
        let want = Complex64::new(phase.cos(), phase.sin());
        assert!((d[3] - want).norm() < 1e-14);
        assert!(d.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn zero_chirps_reduce_to_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [4, 7, 16, 30] {
            let p = AfdmParams::new(n, 0.0, 0.0, 0).unwrap();
            let x = random_frame(&mut rng, n);
            let got = daft(&x, &p).unwrap();
            assert!(max_abs_diff(&got, &naive_dft(&x)) < 1e-12);
        }
    }

    #[test]
    fn factored_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = AfdmParams::new(16, 7.0 / 16.0, 0.0, 0).unwrap();
        let x = random_frame(&mut rng, 16);
        let a = daft_matrix(&p);
        let dense = &a * nalgebra::DVector::from_vec(x.data.clone());
        let fast = daft(&x, &p).unwrap();
        assert!(max_abs_diff(&fast, dense.as_slice()) < 1e-12);
    }

    #[test]
    fn dense_matrix_is_factored_product() {
        let p = AfdmParams::new(12, 0.31, -0.17, 0).unwrap();
        let l1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(chirp_diagonal(p.c1, 12)));
        let l2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(chirp_diagonal(p.c2, 12)));
        let prod = l2 * dft_matrix(12) * l1;
        assert!(max_abs_entry(&(prod - daft_matrix(&p))) < 1e-12);
    }

    #[test]
    fn impulse_inverse_is_flat() {
        let p = AfdmParams::new(8, 0.0, 0.0, 0).unwrap();
        let mut x = ComplexFrame::zeros(8);
        x[0] = Complex64::new(1.0, 0.0);
        let s = idaft(&x, &p).unwrap();
        let v = 1.0 / 8f64.sqrt();
        assert!(s.iter().all(|z| (z - Complex64::new(v, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = AfdmParams::new(8, 0.1, 0.0, 0).unwrap();
        let err = daft(&ComplexFrame::zeros(7), &p).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 8, got: 7 }));
        assert!(idaft(&ComplexFrame::zeros(9), &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(AfdmParams::new(1, 0.0, 0.0, 0).is_err());
        assert!(AfdmParams::new(8, 0.0, 0.0, 8).is_err());
        assert!(AfdmParams::new(8, f64::NAN, 0.0, 0).is_err());
        let p = AfdmParams::for_doppler(64, 3, 3).unwrap();
        assert_eq!(p.c1, 7.0 / 64.0);
        assert_eq!(p.c2, 0.0);
        assert!(p.cpp_is_cyclic());
    }

    #[test]
    fn extension_identity_and_zero_chirp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_frame(&mut rng, 4);
        for n in 0..4 {
            assert_eq!(chirp_periodic_extend(&s, 0, n, 0.37), s[n]);
            for k in [-2, -1, 1, 3] {
                assert!((chirp_periodic_extend(&s, k, n, 0.0) - s[n]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn extension_is_cyclic_when_2nc1_integer() {
        // N = 8, c1 = 7/8: 2Nc1 = 14. Direct phase evaluation of
        // c1·(N² − 2Nn) for k = −1 over every n.
        let n = 8usize;
        let c1 = 7.0 / 8.0;
        for idx in 0..n {
            let turns = c1 * (64.0 - 16.0 * idx as f64);
            let phase = Complex64::from_polar(1.0, 2.0 * PI * turns);
            assert!((phase - 1.0).norm() < 1e-12, "n={idx}");
        }
        let s: Vec<_> = (0..n).map(|k| Complex64::new(k as f64, 1.0)).collect();
        for idx in 0..n {
            assert!((chirp_periodic_extend(&s, -1, idx, c1) - s[idx]).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_domain_periodicity_identity() {
        // S[m + kN] = e^{-j2πc2(k²N² + 2kNm)} S[m], checked by evaluating the
        // DAFT kernel at an out-of-range output index.
        let p = AfdmParams::new(10, 0.13, 0.29, 0).unwrap();
        let x: Vec<_> = (0..10).map(|k| Complex64::new((k as f64).sin(), 0.5)).collect();
        let eval = |m: i64| -> Complex64 {
            x.iter()
                .enumerate()
                .map(|(k, v)| {
                    let (mf, kf) = (m as f64, k as f64);
                    let t = p.c2 * mf * mf + mf * kf / 10.0 + p.c1 * kf * kf;
                    v * Complex64::from_polar(1.0, -2.0 * PI * t)
                })
                .sum::<Complex64>()
                / 10f64.sqrt()
        };
        for m in 0..10i64 {
            for k in [-1i64, 2] {
                let lhs = eval(m + 10 * k);
                let turns = -p.c2 * (k * k * 100 + 2 * k * 10 * m) as f64;
                let rhs = eval(m) * Complex64::from_polar(1.0, 2.0 * PI * turns);
                assert!((lhs - rhs).norm() < 1e-9);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn dense_transform_is_unitary(n in 4usize..=256, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
                let p = AfdmParams::new(n, c1, c2, 0).unwrap();
                let a = daft_matrix(&p);
                let err = max_abs_entry(&(&a * a.adjoint() - DMatrix::identity(n, n)));
                prop_assert!(err < 1e-12, "err {err}");
            }

            #[test]
            fn round_trip_and_parseval(n in 2usize..=256, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = AfdmParams::new(n, c1, c2, 0).unwrap();
                let x = random_frame(&mut rng, n);
                let y = daft(&x, &p).unwrap();
                let back = idaft(&y, &p).unwrap();
                prop_assert!(max_abs_diff(&back, &x) < 1e-12);
                let e = x.norm_sqr();
                prop_assert!((y.norm_sqr() - e).abs() < 1e-10 * e);
            }
        }
    }
}
