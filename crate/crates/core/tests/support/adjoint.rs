//! <conv(x), y> against <x, deconv(y)> for shared weights and zero biases.
#![allow(dead_code)]

use cae::init::seeded_rng;
use cae::layers::{conv_forward, deconv_forward, ParamBlock};
use cae::tensor::Tensor;
use rand::Rng;

/// Largest |<conv x, y> − <x, deconv y>| over `instances` random shapes.
pub fn worst_gap(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = seeded_rng(seed);
        let (n, ci, co, k) = (
            rng.random_range(1..=3),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=6),
        );
        let (h, w) = (k + rng.random_range(0..=6), k + rng.random_range(0..=6));
        let mut rand_t = |shape: [usize; 4]| {
            let len = shape.iter().product();
            Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let x = rand_t([n, ci, h, w]);
        let y = rand_t([n, co, h - k + 1, w - k + 1]);
        // (co, ci, k, k) is a conv weight and, read as (c_in, c_out, k, k),
        // the weight of the adjoint deconv.
        let weights = rand_t([co, ci, k, k]);
        let conv = ParamBlock::from_parts(weights.clone(), vec![0.0; co]).unwrap();
        let deconv = ParamBlock::from_parts(weights, vec![0.0; ci]).unwrap();

        let lhs = conv_forward(&x, &conv).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&deconv_forward(&y, &deconv).unwrap()).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}
