//! Finite-difference gradient suites shared by the gradient and acceptance
//! tests. Each suite returns the worst relative error it saw, with error
//! measured as |a − n| / max(1, |a| + |n|).
#![allow(dead_code)]

use cae::init::{seeded_rng, EngineRng};
use cae::layers::{self, ParamBlock};
use cae::loss::{self, LossKind, LossSpec};
use cae::netspec::parse_netspec;
use cae::network::Network;
use cae::tensor::Tensor;
use rand::Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-5;
pub const INSTANCES: u64 = 20;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1.0)
}

fn random_tensor(rng: &mut EngineRng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Worst error of `analytic[i]` against the central difference of `f` in
/// coordinate `i`, folded into `worst`.
fn check_fd(worst: &mut Worst, what: &str, point: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) {
    assert_eq!(point.len(), analytic.len(), "{what}: gradient length");
    let mut x = point.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(&x);
        x[i] = orig - H;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let err = rel_err(analytic[i], numeric);
        if err > worst.err {
            worst.err = err;
            worst.at = format!("{what}[{i}]: analytic {} numeric {numeric}", analytic[i]);
        }
    }
}

#[derive(Debug, Default)]
pub struct Worst {
    pub err: f64,
    /// Coordinate that produced `err`.
    pub at: String,
}

type Forward = fn(&Tensor, &ParamBlock) -> Result<Tensor, layers::LayerError>;
type Backward = fn(&Tensor, &mut ParamBlock, &Tensor) -> Result<Tensor, layers::LayerError>;

/// Checks dx, dW and db of a parametric layer under L = <forward(x), r>.
fn check_param_layer(worst: &mut Worst, what: &str, x: &Tensor, block: &ParamBlock, fwd: Forward, bwd: Backward) {
    let y = fwd(x, block).unwrap();
    let mut rng = seeded_rng(y.len() as u64);
    let r = random_tensor(&mut rng, y.shape().0, -1.0, 1.0);
    let mut b = block.clone();
    b.zero_grad();
    let dx = bwd(x, &mut b, &r).unwrap();

    let loss = |x: &Tensor, blk: &ParamBlock| fwd(x, blk).unwrap().dot(&r).unwrap();
    check_fd(worst, &format!("{what} dx"), x.data(), dx.data(), |v| {
        loss(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), block)
    });
    check_fd(worst, &format!("{what} dW"), block.weights.data(), b.weight_grad.data(), |v| {
        let mut blk = block.clone();
        blk.weights.data_mut().copy_from_slice(v);
        loss(x, &blk)
    });
    check_fd(worst, &format!("{what} db"), &block.biases, &b.bias_grad, |v| {
        let mut blk = block.clone();
        blk.biases.copy_from_slice(v);
        loss(x, &blk)
    });
}

fn random_block(rng: &mut EngineRng, shape: [usize; 4], bias_len: usize) -> ParamBlock {
    let w = random_tensor(rng, shape, -1.0, 1.0);
    let b = (0..bias_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    ParamBlock::from_parts(w, b).unwrap()
}

pub fn conv_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(1000 + seed);
        let (n, ci, co, k) = (
            rng.random_range(1..=2),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=4),
        );
        let (h, w) = (k + rng.random_range(0..=3), k + rng.random_range(0..=3));
        let x = random_tensor(&mut rng, [n, ci, h, w], -1.0, 1.0);
        let block = random_block(&mut rng, [co, ci, k, k], co);
        check_param_layer(&mut worst, &format!("conv#{seed}"), &x, &block, layers::conv_forward, layers::conv_backward);
    }
    worst
}

pub fn deconv_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(2000 + seed);
        let (n, ci, co, k) = (
            rng.random_range(1..=2),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=4),
        );
        let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let x = random_tensor(&mut rng, [n, ci, h, w], -1.0, 1.0);
        let block = random_block(&mut rng, [ci, co, k, k], co);
        check_param_layer(
            &mut worst,
            &format!("deconv#{seed}"),
            &x,
            &block,
            layers::deconv_forward,
            layers::deconv_backward,
        );
    }
    worst
}

pub fn fc_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(3000 + seed);
        let n = rng.random_range(1..=3);
        let dims = [n, rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let fan_in = dims[1] * dims[2] * dims[3];
        let out = rng.random_range(1..=5);
        let x = random_tensor(&mut rng, dims, -1.0, 1.0);
        let block = random_block(&mut rng, [out, fan_in, 1, 1], out);
        check_param_layer(&mut worst, &format!("fc#{seed}"), &x, &block, layers::fc_forward, layers::fc_backward);
    }
    worst
}

pub fn sigmoid_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(4000 + seed);
        let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = random_tensor(&mut rng, shape, -6.0, 6.0);
        let r = random_tensor(&mut rng, shape, -1.0, 1.0);
        let y = layers::sigmoid_forward(&x);
        let dx = layers::sigmoid_backward(&y, &r).unwrap();
        check_fd(&mut worst, &format!("sigmoid#{seed}"), x.data(), dx.data(), |v| {
            layers::sigmoid_forward(&Tensor::from_vec(shape, v.to_vec()).unwrap()).dot(&r).unwrap()
        });
    }
    worst
}

pub fn sce_loss_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(5000 + seed);
        let shape = [rng.random_range(1..=4), 1, rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = random_tensor(&mut rng, shape, -8.0, 8.0);
        let t = random_tensor(&mut rng, shape, 0.0, 1.0);
        let (_, g) = loss::sce_loss(&x, &t).unwrap();
        check_fd(&mut worst, &format!("sce#{seed}"), x.data(), g.data(), |v| {
            loss::sce_loss(&Tensor::from_vec(shape, v.to_vec()).unwrap(), &t).unwrap().0
        });
    }
    worst
}

pub fn euclidean_loss_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(6000 + seed);
        let shape = [rng.random_range(1..=4), 1, rng.random_range(1..=4), rng.random_range(1..=4)];
        let p = random_tensor(&mut rng, shape, -2.0, 2.0);
        let t = random_tensor(&mut rng, shape, 0.0, 1.0);
        let (_, g) = loss::euclidean_loss(&p, &t).unwrap();
        check_fd(&mut worst, &format!("euclidean#{seed}"), p.data(), g.data(), |v| {
            loss::euclidean_loss(&Tensor::from_vec(shape, v.to_vec()).unwrap(), &t).unwrap().0
        });
    }
    worst
}

pub fn combined_loss_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(7000 + seed);
        let shape = [rng.random_range(1..=3), 1, rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = random_tensor(&mut rng, shape, -5.0, 5.0);
        let t = random_tensor(&mut rng, shape, 0.0, 1.0);
        let specs = vec![
            LossSpec {
                name: "a".into(),
                kind: LossKind::SigmoidCrossEntropy,
                pred_layer: "out".into(),
                apply_sigmoid_to_pred: false,
                weight: rng.random_range(0.1..2.0),
            },
            LossSpec {
                name: "b".into(),
                kind: LossKind::Euclidean,
                pred_layer: "out".into(),
                apply_sigmoid_to_pred: true,
                weight: rng.random_range(0.1..2.0),
            },
        ];
        let c = loss::combined_loss(&x, &t, &specs).unwrap();
        check_fd(&mut worst, &format!("combined#{seed}"), x.data(), c.grad.data(), |v| {
            loss::combined_loss(&Tensor::from_vec(shape, v.to_vec()).unwrap(), &t, &specs)
                .unwrap()
                .total
        });
    }
    worst
}

/// Whole-network objective: every parameter of a small conv/fc/deconv
/// autoencoder against finite differences of the dual loss.
pub fn network_objective_suite() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = seeded_rng(8000 + seed);
        let (w_sce, w_l2) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let text = format!(
            "net tiny input [1,1,4,4]\n\
             layer c1 conv kernel=3 out=2 act=sigmoid\n\
             layer f1 fc out=3 act=sigmoid\n\
             layer code fc out=2\n\
             layer f3 fc out=8 act=sigmoid\n\
             layer r reshape dims=[0,2,2,2]\n\
             layer d1 deconv kernel=3 out=2 act=sigmoid\n\
             layer out deconv kernel=1 out=1\n\
             loss a sigmoid_cross_entropy pred=out target=input weight={w_sce}\n\
             loss b euclidean pred=out target=input sigmoid=true weight={w_l2}\n"
        );
        let mut net = Network::initialized(parse_netspec(&text).unwrap(), &mut rng).unwrap();
        for p in net.params_mut() {
            for b in &mut p.block.biases {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let n = rng.random_range(1..=3);
        let x = random_tensor(&mut rng, [n, 1, 4, 4], 0.0, 1.0);
        net.zero_grad();
        net.loss_and_backward(&x).unwrap();

        for bi in 0..net.params().len() {
            let block = net.params()[bi].block.clone();
            let name = net.params()[bi].name.clone();
            let probe = |mutate: &dyn Fn(&mut ParamBlock)| {
                let mut trial = net.clone();
                mutate(&mut trial.params_mut()[bi].block);
                trial.loss(&x).unwrap().total
            };
            check_fd(&mut worst, &format!("net#{seed} {name} dW"), block.weights.data(), block.weight_grad.data(), |v| {
                probe(&|b: &mut ParamBlock| b.weights.data_mut().copy_from_slice(v))
            });
            check_fd(&mut worst, &format!("net#{seed} {name} db"), &block.biases, &block.bias_grad, |v| {
                probe(&|b: &mut ParamBlock| b.biases.copy_from_slice(v))
            });
        }
    }
    worst
}
