// SPDX-License-Identifier: Apache-2.0

// L-BFGS softmax readout on three Gaussian blobs.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use bsnn::readout::{evaluate, train, TrainConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, 0.7)?;
    let centers = [[0.0, 2.0], [2.0, -1.0], [-2.0, -1.0]];
    let n = 150;
    let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| centers[y[i]][j] + noise.sample(&mut rng));

    let out = train(&x, &y, 3, &TrainConfig { c: 1.0, ..Default::default() })?;
    let eval = evaluate(&out.model, &x, &y);
    println!("loss {:.4} in {} iterations, accuracy {:.3}", out.loss, out.iterations, eval.accuracy);
    print!("{}", eval.confusion_csv());
    assert!(eval.accuracy > 0.9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
