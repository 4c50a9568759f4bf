//! QAM mapping and the AFDM transmitter/receiver front end.

use num_complex::Complex64;

use crate::daft::{cis_turns, frac_product, AfdmParams, ComplexFrame, DaftPlan};
use crate::{Error, Result};

/// Gray-coded square QAM with unit average symbol energy.
///
/// Symbol index `v` is the bit group read MSB first. The upper half of the
/// bits selects the imaginary level and the lower half the real level, each
/// Gray coded with bit value 0 on the positive side. For 4-QAM this gives
/// `00 → (+1+j)/√2`, `01 → (−1+j)/√2`, `11 → (−1−j)/√2`, `10 → (+1−j)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || !order.trailing_zeros().is_multiple_of(2) {
            return Err(Error::Constellation(order));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let half = bits_per_symbol / 2;
        let side = 1usize << half;
        let scale = (2.0 * ((side * side) as f64 - 1.0) / 3.0).sqrt().recip();
        let level = |g: usize| (side as f64 - 1.0) - 2.0 * gray_to_binary(g) as f64;
        let points = (0..order)
            .map(|v| {
                let im = level(v >> half);
                let re = level(v & (side - 1));
                Complex64::new(re, im) * scale
            })
            .collect();
        Ok(Self { order, bits_per_symbol, points })
    }

    pub fn qpsk() -> Self {
        Self::qam(4).expect("4-QAM is always valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn index_from_bits(&self, bits: &[bool]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn push_bits(&self, index: usize, out: &mut Vec<bool>) {
        for k in (0..self.bits_per_symbol).rev() {
            out.push((index >> k) & 1 == 1);
        }
    }
}

/// Symbol indices for a bit stream.
pub fn bits_to_indices(bits: &[bool], constellation: &Constellation) -> Result<Vec<usize>> {
    let bps = constellation.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::Framing { bits: bits.len(), bits_per_symbol: bps });
    }
    Ok(bits.chunks(bps).map(|c| constellation.index_from_bits(c)).collect())
}

pub fn map_bits(bits: &[bool], constellation: &Constellation) -> Result<Vec<Complex64>> {
    Ok(bits_to_indices(bits, constellation)?
        .into_iter()
        .map(|i| constellation.point(i))
        .collect())
}

pub fn indices_to_bits(indices: &[usize], constellation: &Constellation) -> Vec<bool> {
    let mut out = Vec::with_capacity(indices.len() * constellation.bits_per_symbol());
    for &i in indices {
        constellation.push_bits(i, &mut out);
    }
    out
}

/// Nearest-point slicing followed by Gray demapping.
pub fn hard_demap(symbols: &[Complex64], constellation: &Constellation) -> Vec<bool> {
    let idx: Vec<usize> = symbols.iter().map(|&z| constellation.nearest(z)).collect();
    indices_to_bits(&idx, constellation)
}

/// Output of the transmitter for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    /// `x`, the DAFT-domain symbols.
    pub daft_domain: ComplexFrame,
    /// `s = A^H x`.
    pub time_domain: ComplexFrame,
    /// Prefix samples for `n = −L … −1`; `cpp[0]` is `s[−L]`.
    pub cpp: Vec<Complex64>,
}

impl TxFrame {
    /// `s[n]` for `−L ≤ n < N`, reading the prefix for negative indices.
    pub fn sample(&self, n: isize) -> Complex64 {
        if n >= 0 {
            self.time_domain[n as usize]
        } else {
            let l = self.cpp.len() as isize;
            self.cpp[(l + n) as usize]
        }
    }

    /// Prefix followed by the body, as sent over the air.
    pub fn serialize(&self) -> Vec<Complex64> {
        let mut out = self.cpp.clone();
        out.extend_from_slice(&self.time_domain);
        out
    }
}

/// `s[n] = s[N+n]·e^{−j2πc1(N² + 2Nn)}` for `n = −L … −1`.
pub fn chirp_periodic_prefix(s: &[Complex64], params: &AfdmParams) -> Vec<Complex64> {
    let n = params.n as i128;
    let l = params.cpp_len as i128;
    let cyclic = params.cpp_is_cyclic();
    (-l..0)
        .map(|k| {
            let body = s[(n + k) as usize];
            if cyclic {
                body
            } else {
                body * cis_turns(-frac_product(params.c1, (n * n + 2 * n * k) as f64))
            }
        })
        .collect()
}

pub fn afdm_modulate_with(plan: &DaftPlan, x: &[Complex64]) -> Result<TxFrame> {
    let time_domain = plan.inverse(x)?;
    let cpp = chirp_periodic_prefix(&time_domain, plan.params());
    Ok(TxFrame { daft_domain: ComplexFrame::new(x.to_vec()), time_domain, cpp })
}

pub fn afdm_modulate(x: &ComplexFrame, params: &AfdmParams) -> Result<TxFrame> {
    x.check_len(params.n)?;
    afdm_modulate_with(&DaftPlan::new(params), x)
}

/// `y = A·r` on a prefix-stripped receive frame.
pub fn afdm_demodulate(r: &ComplexFrame, params: &AfdmParams) -> Result<ComplexFrame> {
    r.check_len(params.n)?;
    DaftPlan::new(params).forward(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daft::daft_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<bool> {
        (0..n).map(|_| rng.random()).collect()
    }

    fn random_frame(rng: &mut impl Rng, n: usize) -> ComplexFrame {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect::<Vec<_>>()
            .into()
    }

    #[test]
    fn qpsk_gray_table() {
        let c = Constellation::qpsk();
        let s = FRAC_1_SQRT_2;
        let table = [
            ([false, false], Complex64::new(s, s)),
            ([false, true], Complex64::new(-s, s)),
            ([true, true], Complex64::new(-s, -s)),
            ([true, false], Complex64::new(s, -s)),
        ];
        for (bits, want) in table {
            let got = map_bits(&bits, &c).unwrap();
            assert!((got[0] - want).norm() < 1e-15, "{bits:?}");
        }
    }

    #[test]
    fn unit_average_energy() {
        for q in [4, 16, 64, 256] {
            let c = Constellation::qam(q).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / q as f64;
            assert!((e - 1.0).abs() < 1e-12, "Q={q}");
        }
    }

    #[test]
    fn nearest_neighbours_differ_in_one_bit() {
        for q in [4, 16, 64] {
            let c = Constellation::qam(q).unwrap();
            let dmin = (0..q)
                .flat_map(|i| (0..q).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| (c.point(i) - c.point(j)).norm())
                .fold(f64::INFINITY, f64::min);
            for i in 0..q {
                for j in 0..q {
                    if i != j && (c.point(i) - c.point(j)).norm() < dmin * 1.0001 {
                        assert_eq!((i ^ j).count_ones(), 1, "Q={q} {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_non_square_orders() {
        for q in [0, 2, 8, 32, 12] {
            assert!(Constellation::qam(q).is_err(), "Q={q}");
        }
    }

    #[test]
    fn framing_error() {
        let c = Constellation::qam(16).unwrap();
        assert!(matches!(
            map_bits(&[true; 6], &c),
            Err(Error::Framing { bits: 6, bits_per_symbol: 4 })
        ));
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for q in [4, 16, 64] {
            let c = Constellation::qam(q).unwrap();
            let bits = random_bits(&mut rng, 10_000 / c.bits_per_symbol() * c.bits_per_symbol());
            let syms = map_bits(&bits, &c).unwrap();
            assert_eq!(hard_demap(&syms, &c), bits);
        }
    }

    #[test]
    fn origin_ties_to_lowest_index() {
        let c = Constellation::qpsk();
        assert_eq!(hard_demap(&[Complex64::new(0.0, 0.0)], &c), vec![false, false]);
    }

    #[test]
    fn awgn_ber_follows_q_function() {
        use statrs::function::erf::erfc;
        let c = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nsym = 100_000;
        let bits = random_bits(&mut rng, 2 * nsym);
        let tx = map_bits(&bits, &c).unwrap();
        for (snr_db, check) in [(30.0, None), (6.0, Some(0.1)), (0.0, Some(0.05))] {
            let n0: f64 = 10f64.powf(-snr_db / 10.0);
            let sd = (n0 / 2.0).sqrt();
            let rx: Vec<_> = tx
                .iter()
                .map(|s| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    s + Complex64::new(re, im) * sd
                })
                .collect();
            let errs = hard_demap(&rx, &c).iter().zip(&bits).filter(|(a, b)| a != b).count();
            let ber = errs as f64 / bits.len() as f64;
            // Gray 4-QAM: BER = Q(√(Es/N0)) = erfc(√(Es/2N0))/2.
            let theory = 0.5 * erfc((1.0 / (2.0 * n0)).sqrt());
            match check {
                None => assert!(ber < 1e-4, "ber {ber}"),
                Some(rel) => assert!((ber - theory).abs() < rel * theory, "{snr_db} dB: {ber} vs {theory}"),
            }
        }
    }

    #[test]
    fn cpp_reduces_to_cyclic_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = AfdmParams::for_doppler(16, 3, 5).unwrap();
        let tx = afdm_modulate(&random_frame(&mut rng, 16), &p).unwrap();
        for k in 0..5 {
            assert_eq!(tx.cpp[k], tx.time_domain[16 - 5 + k]);
        }
    }

    #[test]
    fn cpp_law_for_general_chirp() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = AfdmParams::new(15, 0.123, 0.05, 4).unwrap();
        assert!(!p.cpp_is_cyclic());
        let tx = afdm_modulate(&random_frame(&mut rng, 15), &p).unwrap();
        for (idx, n) in (-4i64..0).enumerate() {
            let phase = Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * p.c1 * (225 + 30 * n) as f64,
            );
            let lhs = tx.cpp[idx] * phase;
            assert!((lhs - tx.time_domain[(15 + n) as usize]).norm() < 1e-12);
            // The prefix is the chirp-periodic extension at k = −1.
            let ext = crate::daft::chirp_periodic_extend(&tx.time_domain, -1, (15 + n) as usize, p.c1);
            assert!((tx.sample(n as isize) - ext).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_prefix() {
        let p = AfdmParams::for_doppler(8, 1, 0).unwrap();
        let tx = afdm_modulate(&ComplexFrame::zeros(8), &p).unwrap();
        assert!(tx.cpp.is_empty());
        assert_eq!(tx.serialize().len(), 8);
    }

    #[test]
    fn modulation_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = AfdmParams::for_doppler(16, 2, 2).unwrap();
        let x = random_frame(&mut rng, 16);
        let tx = afdm_modulate(&x, &p).unwrap();
        assert!((tx.time_domain.norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn demodulate_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = AfdmParams::new(16, 0.2, 0.7, 0).unwrap();
        let r = random_frame(&mut rng, 16);
        let y = afdm_demodulate(&r, &p).unwrap();
        let dense = daft_matrix(&p) * nalgebra::DVector::from_vec(r.data.clone());
        let err = y.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn identity_link_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut n = 4;
        while n <= 256 {
            let p = AfdmParams::for_doppler(n, 1, 1).unwrap();
            let x = random_frame(&mut rng, n);
            let tx = afdm_modulate(&x, &p).unwrap();
            let y = afdm_demodulate(&tx.time_domain, &p).unwrap();
            let err = y.iter().zip(x.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "N={n}: {err}");
            n += 4;
        }
    }

    #[test]
    fn demodulated_noise_keeps_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = AfdmParams::for_doppler(64, 3, 3).unwrap();
        let n0 = 0.3;
        let sd = (n0 / 2.0f64).sqrt();
        let (mut power, mut pseudo, mut count) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        for _ in 0..400 {
            let w: Vec<Complex64> = (0..64)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * sd
                })
                .collect();
            let y = afdm_demodulate(&w.into(), &p).unwrap();
            for z in y.iter() {
                power += z.norm_sqr();
                pseudo += z * z;
                count += 1.0;
            }
        }
        assert!((power / count - n0).abs() < 0.02 * n0);
        // Circular symmetry: E[w̃²] ≈ 0.
        assert!((pseudo / count).norm() < 0.02 * n0);
    }
}
