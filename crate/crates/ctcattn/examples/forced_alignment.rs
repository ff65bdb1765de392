//! Forced alignment: the most probable frame-level path whose collapse
//! is a given label sequence, next to the greedy best path.

use ctcattn::ctc::{collapse, ctc_logprob, greedy_decode, viterbi_align, PosteriorGrid};
use ctcattn::TokenSeq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, v) = (10, 4);
    let blank = v - 1;
    let mut logp = Vec::with_capacity(t * v);
    for _ in 0..t {
        let row: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0_f64)).collect();
        let z: f64 = row.iter().sum();
        logp.extend(row.iter().map(|p| (p / z).ln()));
    }
    let grid = PosteriorGrid::new(logp, t, v, blank).unwrap();

    let y = TokenSeq::target(vec![0, 1, 1, 2]);
    let path = viterbi_align(&grid, &y).unwrap();
    println!("labels    {:?}", y.ids);
    println!("alignment {:?} (log p = {:.4})", path.z, path.logp);
    assert_eq!(collapse(&path.z, blank), y.ids);

    let total = ctc_logprob(&grid, &y).unwrap();
    println!("all paths log p = {:.4} (best path accounts for {:.1}%)",
        total, 100.0 * (path.logp - total).exp());

    let greedy = greedy_decode(&grid);
    println!("greedy best-path collapse: {:?}", greedy.ids);
}
