//! Quick consistency checks between independent computation paths, run by
//! the `selftest` subcommand.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    build_channel_matrix, build_effective_sparse, channel_output, cpp_gamma, draw_channel, NoiseModel,
};
use crate::daft::{daft_matrix, max_abs_entry, AfdmParams, DaftPlan};
use crate::detect::{map_oracle, mmse_detect, mp_detect, mrc_detect, symbol_map_oracle, MpConfig};
use crate::modem::{afdm_modulate_with, Constellation};
use crate::Result;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn transform(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst_unitary = 0.0f64;
    let mut worst_round = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(4..=64);
        let p = AfdmParams::new(n, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0)?;
        let a = daft_matrix(&p);
        worst_unitary = worst_unitary.max(max_abs_entry(&(&a * a.adjoint() - DMatrix::identity(n, n))));
        let plan = DaftPlan::new(&p);
        let x = random_vec(rng, n);
        let back = plan.inverse(&plan.forward(&x)?)?;
        worst_round = worst_round.max(max_err(&back, &x));
    }
    Ok(CheckOutcome {
        name: "transform exactness",
        passed: worst_unitary < 1e-12 && worst_round < 1e-12,
        detail: format!("max |AA^H - I| = {worst_unitary:.2e}, max round trip = {worst_round:.2e}"),
    })
}

fn model_chain(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut gamma_ok = true;
    for _ in 0..30 {
        let n = [16, 32, 64][rng.random_range(0..3)];
        let (l_max, a_max) = (rng.random_range(0..=3), rng.random_range(0..=3));
        let p_max = (l_max + 1) * (2 * a_max + 1);
        let paths = rng.random_range(1..=p_max.min(5));
        let params = AfdmParams::for_doppler(n, a_max, l_max)?;
        let ch = draw_channel(paths, l_max, a_max, rng)?;
        let plan = DaftPlan::new(&params);
        let x = random_vec(rng, n);
        let tx = afdm_modulate_with(&plan, &x)?;
        let r = channel_output(&tx, &ch)?;
        let hs = build_channel_matrix(&ch, &params) * DVector::from_vec(tx.time_domain.data.clone());
        let y = plan.forward(&r)?;
        let sparse = build_effective_sparse(&ch, &params)?.apply(&x)?;
        worst = worst.max(max_err(&r, hs.as_slice())).max(max_err(&y, &sparse));
        gamma_ok &= ch
            .paths
            .iter()
            .all(|p| cpp_gamma(p.delay, &params).iter().all(|g| (g - 1.0).norm() < 1e-12));
    }
    Ok(CheckOutcome {
        name: "channel model equivalence",
        passed: worst < 1e-10 && gamma_ok,
        detail: format!("max path disagreement = {worst:.2e}, prefix phases trivial: {gamma_ok}"),
    })
}

fn oracle_agreement(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let c = Constellation::qpsk();
    let params = AfdmParams::for_doppler(8, 1, 1)?;
    let noise = NoiseModel::from_snr_db(25.0);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..100 {
        let ch = draw_channel(2, 1, 1, rng)?;
        let sp = build_effective_sparse(&ch, &params)?;
        let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
        let x: Vec<Complex64> = idx.iter().map(|&i| c.point(i)).collect();
        let y: Vec<Complex64> = sp.apply(&x)?.into_iter().map(|v| v + noise.sample(rng)).collect();
        let mp = mp_detect(&y, &sp, &noise, &c, &MpConfig::default())?;
        let oracle = symbol_map_oracle(&y, &sp.to_dense(), &c, &noise)?;
        agree += mp.symbols.iter().zip(&oracle).filter(|(a, b)| a == b).count();
        total += 8;
    }
    let rate = agree as f64 / total as f64;
    Ok(CheckOutcome {
        name: "MP vs exact symbol MAP",
        passed: rate >= 0.99,
        detail: format!("agreement {:.2}%", 100.0 * rate),
    })
}

fn single_path(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let c = Constellation::qpsk();
    let params = AfdmParams::for_doppler(8, 1, 1)?;
    let noise = NoiseModel::from_snr_db(20.0);
    let mut mismatches = 0;
    for _ in 0..100 {
        let ch = draw_channel(1, 1, 1, rng)?;
        let sp = build_effective_sparse(&ch, &params)?;
        let dense = sp.to_dense();
        let x: Vec<Complex64> = (0..8).map(|_| c.point(rng.random_range(0..4))).collect();
        let y: Vec<Complex64> = sp.apply(&x)?.into_iter().map(|v| v + noise.sample(rng)).collect();
        let slice: Vec<usize> = (0..8)
            .map(|col| {
                let d = sp.row_of(col, 0);
                c.nearest(y[d] / sp.coeff(d, 0))
            })
            .collect();
        let mrc: Vec<usize> = mrc_detect(&y, &sp, &c)?.into_iter().map(|s| s.unwrap_or(usize::MAX)).collect();
        let all = [
            mp_detect(&y, &sp, &noise, &c, &MpConfig::default())?.symbols,
            mmse_detect(&y, &dense, &noise, &c)?,
            mrc,
            map_oracle(&y, &dense, &c, &noise)?,
        ];
        mismatches += all.iter().filter(|d| **d != slice).count();
    }
    Ok(CheckOutcome {
        name: "single-path detector agreement",
        passed: mismatches == 0,
        detail: format!("{mismatches} detector/frame mismatches"),
    })
}

pub fn run_selftest(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        transform(&mut rng)?,
        model_chain(&mut rng)?,
        oracle_agreement(&mut rng)?,
        single_path(&mut rng)?,
    ])
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for check in super::run_selftest(7).unwrap() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
