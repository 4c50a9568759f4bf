//! Seeded fixtures shared by the benchmarks.

use afdm::channel::{build_effective_sparse, draw_channel, ChannelRealization, NoiseModel};
use afdm::{AfdmParams, Complex64, Constellation, SparseEffectiveChannel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One received frame on a random `P`-path channel with `l_max = α_max = 3`.
pub struct Fixture {
    pub params: AfdmParams,
    pub channel: ChannelRealization,
    pub sparse: SparseEffectiveChannel,
    pub constellation: Constellation,
    pub noise: NoiseModel,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl Fixture {
    pub fn new(n: usize, paths: usize, snr_db: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = AfdmParams::for_doppler(n, 3, 3).expect("valid frame size");
        let channel = draw_channel(paths, 3, 3, &mut rng).expect("feasible path count");
        let sparse = build_effective_sparse(&channel, &params).expect("integer loc");
        let constellation = Constellation::qpsk();
        let noise = NoiseModel::from_snr_db(snr_db);
        let x: Vec<Complex64> = (0..n).map(|_| constellation.point(rng.random_range(0..4))).collect();
        let y = sparse
            .apply(&x)
            .expect("matching length")
            .into_iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        Self { params, channel, sparse, constellation, noise, x, y }
    }
}
