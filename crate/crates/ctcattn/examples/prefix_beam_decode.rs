//! Pure CTC prefix beam search over a posterior lattice, compared with
//! the greedy best-path collapse it improves on.

use ctcattn::ctc::{greedy_decode, PosteriorGrid};
use ctcattn::decode::{input_sync_search, DecodeConfig, DecodeMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (t, v) = (20, 5);
    let mut logp = Vec::with_capacity(t * v);
    for _ in 0..t {
        let row: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0_f64)).collect();
        let z: f64 = row.iter().sum();
        logp.extend(row.iter().map(|p| (p / z).ln()));
    }
    let grid = PosteriorGrid::new(logp, t, v, v - 1).unwrap();

    let greedy = greedy_decode(&grid);
    println!("greedy collapse: {:?}", greedy.ids);

    for beam in [1, 2, 4, 8, 16] {
        let cfg = DecodeConfig {
            mode: DecodeMode::CtcOnly,
            beam_size: beam,
            ..DecodeConfig::default()
        };
        let result = input_sync_search(&grid, None, &cfg).unwrap();
        let best = result.best().unwrap();
        println!(
            "beam {beam:>2}: {:?} (log p = {:.4}, {} log-adds)",
            best.tokens, best.ctc_logp, result.log_adds
        );
    }
}
