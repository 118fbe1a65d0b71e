mod common;

use common::props::{det_gamma_deviation, flow_defect, lagrange, wronskian_drift};
use common::{c, random_problem};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> Config {
    Config {
        cases: 1000,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn data() -> impl Strategy<Value = [f64; 2]> {
    (0.0..std::f64::consts::PI).prop_map(|t| [t.cos(), t.sin()])
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn wronskian_is_constant(seed in any::<u64>(), zr in -6.0..6.0f64, zi in -3.0..3.0f64, u in data(), v in data()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_problem(&mut rng, 1.0, false);
        let d = wronskian_drift(&e, c(zr, zi), u, v, &[0.25, 0.5, 1.0]);
        prop_assert!(d < 1e-10, "drift {d:e}");
    }

    #[test]
    fn lagrange_identity(seed in any::<u64>(), a in (-4.0..4.0f64, -2.0..2.0f64), b in (-4.0..4.0f64, -2.0..2.0f64), alpha in 0.0..0.5f64, beta in 0.5..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_problem(&mut rng, 1.0, false);
        let r = lagrange(&e, c(a.0, a.1), c(b.0, b.1), alpha, beta);
        prop_assert!(r < 1e-9, "residual {r:e}");
    }

    #[test]
    fn kill_potential_keeps_det_one(seed in any::<u64>(), x in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_problem(&mut rng, 1.0, false);
        let d = det_gamma_deviation(&e, &[x, 1.0 - 0.5 * x]);
        prop_assert!(d < 1e-10, "det deviation {d:e}");
    }

    #[test]
    fn transfer_matrices_compose(seed in any::<u64>(), zr in -6.0..6.0f64, zi in -3.0..3.0f64, xs in prop::array::uniform3(0.0..1.0f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_problem(&mut rng, 1.0, false);
        let d = flow_defect(&e, c(zr, zi), xs[0], xs[1], xs[2]);
        prop_assert!(d < 1e-10, "flow defect {d:e}");
    }
}
