//! Verifies tape gradients against central finite differences, first on
//! a small MLP loss and then on the CTC loss itself.

use ctcattn::autodiff::{self, grad_check, NumericsError};
use ctcattn::ctc::ctc_loss;
use ctcattn::TokenSeq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let x0: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let report = grad_check(
        |_, x| {
            let w: Vec<f64> = (0..16).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
            let w = autodiff::Tensor::constant(w, &[4, 4])?;
            let h = x.reshape(&[3, 4])?.matmul(&w)?.relu()?;
            h.softmax()?.mul(&h)?.sum()
        },
        &x0,
        &[3, 4],
        1e-5,
        1e-6,
    )
    .unwrap();
    println!(
        "mlp: {} elements, max rel err {:.2e} -> {}",
        report.n_elements,
        report.max_rel_err,
        if report.passed { "ok" } else { "FAIL" }
    );

    let (t, v) = (6, 4);
    let scores: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = TokenSeq::target(vec![0, 2, 1]);
    let report = grad_check(
        move |_, x| {
            ctc_loss(x, &TokenSeq::target(y.ids.clone()), v - 1)
                .map_err(|e| NumericsError::Invalid(e.to_string()))
        },
        &scores,
        &[t, v],
        1e-5,
        1e-5,
    )
    .unwrap();
    println!(
        "ctc: {} elements, max rel err {:.2e} -> {}",
        report.n_elements,
        report.max_rel_err,
        if report.passed { "ok" } else { "FAIL" }
    );
}
