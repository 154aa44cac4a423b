//! Compare analytic BPTT gradients with central differences on random
//! sequences, for the recurrent network and the reset-every-step variant.

use fogduel::features::D;
use fogduel::net::{finite_diff_check, HiddenState, QNetParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for recurrent in [true, false] {
        let mut worst: f64 = 0.0;
        let start = std::time::Instant::now();
        for i in 0..10 {
            let params = QNetParams::init(i, recurrent);
            let len = rng.gen_range(1..8);
            let seq: Vec<[f64; D]> = (0..len).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))).collect();
            worst = worst.max(finite_diff_check(&params, &seq, &HiddenState::default(), i));
        }
        println!(
            "recurrent={recurrent}: max relative error {worst:.3e} over 10 instances ({:.2}s)",
            start.elapsed().as_secs_f64()
        );
    }
}
