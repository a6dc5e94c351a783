//! Sigmoid cross-entropy and Euclidean reconstruction losses.
//!
//! Both are normalized by the number of samples in the batch, not by the
//! number of elements, so values read as per-image sums over pixels.

use thiserror::Error;

use crate::layers::sigmoid;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("target value {value} at index {index} is outside [0, 1]")]
    TargetDomain { index: usize, value: f64 },
    #[error("prediction has {pred} elements over {pred_n} samples, target {target} over {target_n}")]
    Mismatch {
        pred: usize,
        pred_n: usize,
        target: usize,
        target_n: usize,
    },
    #[error("no loss is attached to the network")]
    NoLoss,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SigmoidCrossEntropy,
    Euclidean,
}

impl LossKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LossKind::SigmoidCrossEntropy => "sigmoid_cross_entropy",
            LossKind::Euclidean => "euclidean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub name: String,
    pub kind: LossKind,
    pub pred_layer: String,
    /// Euclidean only: compare σ(pred) rather than pred with the target.
    pub apply_sigmoid_to_pred: bool,
    pub weight: f64,
}

/// Elementwise comparison is over flattened samples; the prediction may be
/// (n, 784, 1, 1) while the target is (n, 1, 28, 28).
fn check_pair(pred: &Tensor, target: &Tensor) -> Result<usize, LossError> {
    let (ps, ts) = (pred.shape(), target.shape());
    if pred.len() != target.len() || ps.n() != ts.n() {
        return Err(LossError::Mismatch {
            pred: pred.len(),
            pred_n: ps.n(),
            target: target.len(),
            target_n: ts.n(),
        });
    }
    Ok(ps.n().max(1))
}

/// ln(1 + e^{-|x|}) + max(x, 0) − x·t, the overflow-safe form of
/// −t·ln σ(x) − (1−t)·ln(1−σ(x)).
pub fn sce_element(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

pub fn sce_loss(logits: &Tensor, target: &Tensor) -> Result<(f64, Tensor), LossError> {
    let n = check_pair(logits, target)? as f64;
    if let Some((index, &value)) = target
        .data()
        .iter()
        .enumerate()
        .find(|(_, &t)| !(0.0..=1.0).contains(&t))
    {
        return Err(LossError::TargetDomain { index, value });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &t) in logits.data().iter().zip(target.data()) {
        loss += sce_element(x, t);
        grad.push((sigmoid(x) - t) / n);
    }
    Ok((loss / n, Tensor::from_vec(logits.shape(), grad)?))
}

pub fn euclidean_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), LossError> {
    let n = check_pair(pred, target)? as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        loss += d * d;
        grad.push(d / n);
    }
    Ok((loss / (2.0 * n), Tensor::from_vec(pred.shape(), grad)?))
}

/// Weighted objective over the reconstruction output.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    /// Unweighted value of each attached loss, in spec order.
    pub parts: Vec<(LossKind, f64)>,
    /// ∂total/∂logits.
    pub grad: Tensor,
}

impl CombinedLoss {
    pub fn part(&self, kind: LossKind) -> Option<f64> {
        self.parts.iter().find(|(k, _)| *k == kind).map(|&(_, v)| v)
    }
}

/// Value of a single loss spec on raw network output.
fn eval_one(spec: &LossSpec, logits: &Tensor, target: &Tensor) -> Result<(f64, Tensor), LossError> {
    match spec.kind {
        LossKind::SigmoidCrossEntropy => sce_loss(logits, target),
        LossKind::Euclidean if spec.apply_sigmoid_to_pred => {
            let probs = logits.map(sigmoid);
            let (loss, mut grad) = euclidean_loss(&probs, target)?;
            for (g, &y) in grad.data_mut().iter_mut().zip(probs.data()) {
                *g *= y * (1.0 - y);
            }
            Ok((loss, grad))
        }
        LossKind::Euclidean => euclidean_loss(logits, target),
    }
}

pub fn combined_loss(logits: &Tensor, target: &Tensor, specs: &[LossSpec]) -> Result<CombinedLoss, LossError> {
    if specs.is_empty() {
        return Err(LossError::NoLoss);
    }
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(specs.len());
    let mut grad = Tensor::zeros(logits.shape())?;
    for spec in specs {
        let (value, g) = eval_one(spec, logits, target)?;
        total += spec.weight * value;
        parts.push((spec.kind, value));
        for (acc, gi) in grad.data_mut().iter_mut().zip(g.data()) {
            *acc += spec.weight * gi;
        }
    }
    Ok(CombinedLoss { total, parts, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(vals: &[f64]) -> Tensor {
        Tensor::from_vec([1, 1, 1, vals.len()], vals.to_vec()).unwrap()
    }

    fn specs(w_sce: f64, w_euc: f64) -> Vec<LossSpec> {
        vec![
            LossSpec {
                name: "sce".into(),
                kind: LossKind::SigmoidCrossEntropy,
                pred_layer: "out".into(),
                apply_sigmoid_to_pred: false,
                weight: w_sce,
            },
            LossSpec {
                name: "euc".into(),
                kind: LossKind::Euclidean,
                pred_layer: "out".into(),
                apply_sigmoid_to_pred: true,
                weight: w_euc,
            },
        ]
    }

    #[test]
    fn sce_examples() {
        let (l, g) = sce_loss(&t(&[0.0]), &t(&[0.5])).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(g.data(), &[0.0]);

        let (l, g) = sce_loss(&t(&[40.0]), &t(&[1.0])).unwrap();
        assert!(l < 1e-15 && l >= 0.0);
        assert!(g.all_finite());

        let x = 3f64.ln(); // σ(ln 3) = 0.75
        let (l, _) = sce_loss(&t(&[x]), &t(&[0.25])).unwrap();
        let expected = -0.25 * 0.75f64.ln() - 0.75 * 0.25f64.ln();
        assert_abs_diff_eq!(l, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 1.111641, epsilon = 1e-6);
    }

    #[test]
    fn sce_rejects_bad_target() {
        assert!(matches!(
            sce_loss(&t(&[0.0, 1.0]), &t(&[0.5, 1.5])),
            Err(LossError::TargetDomain { index: 1, .. })
        ));
    }

    #[test]
    fn euclidean_examples() {
        let (l, g) = euclidean_loss(&t(&[0.3, 0.4]), &t(&[0.3, 0.4])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let target = Tensor::full([1, 1, 28, 28], 0.25).unwrap();
        let pred = target.map(|v| v + 1.0);
        assert_eq!(euclidean_loss(&pred, &target).unwrap().0, 392.0);

        let (l, g) = euclidean_loss(&t(&[0.2, 0.8]), &t(&[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(l, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[1], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn mismatch_is_error() {
        assert!(matches!(
            euclidean_loss(&t(&[1.0]), &t(&[1.0, 2.0])),
            Err(LossError::Mismatch { .. })
        ));
    }

    #[test]
    fn combined_zero_logits_half_target() {
        let logits = Tensor::zeros([2, 1, 3, 3]).unwrap();
        let target = Tensor::full([2, 1, 3, 3], 0.5).unwrap();
        let c = combined_loss(&logits, &target, &specs(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(c.total, 9.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(c.part(LossKind::Euclidean), Some(0.0));
    }

    #[test]
    fn degenerate_weights() {
        let logits = t(&[0.3, -1.2, 2.0]);
        let target = t(&[0.0, 0.5, 1.0]);
        let pure_sce = combined_loss(&logits, &target, &specs(1.0, 0.0)).unwrap();
        let (sce, sce_grad) = sce_loss(&logits, &target).unwrap();
        assert_eq!(pure_sce.total, sce);
        assert_eq!(pure_sce.grad, sce_grad);

        let pure_euc = combined_loss(&logits, &target, &specs(0.0, 1.0)).unwrap();
        let (euc, _) = euclidean_loss(&logits.map(sigmoid), &target).unwrap();
        assert_eq!(pure_euc.total, euc);
    }

    #[test]
    fn no_loss_is_error() {
        assert_eq!(combined_loss(&t(&[0.0]), &t(&[0.0]), &[]).unwrap_err(), LossError::NoLoss);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = t(&[-1e3, 1e3, -1e3, 1e3]);
        let target = t(&[1.0, 0.0, 0.0, 1.0]);
        let c = combined_loss(&logits, &target, &specs(1.0, 1.0)).unwrap();
        assert!(c.total.is_finite());
        assert!(c.grad.all_finite());
    }

    #[test]
    fn batch_duplication_keeps_value() {
        let one = Tensor::from_vec([1, 1, 1, 3], vec![0.3, -0.7, 1.9]).unwrap();
        let tgt = Tensor::from_vec([1, 1, 1, 3], vec![0.1, 0.9, 0.4]).unwrap();
        let two = Tensor::from_vec([2, 1, 1, 3], [one.data(), one.data()].concat()).unwrap();
        let tgt2 = Tensor::from_vec([2, 1, 1, 3], [tgt.data(), tgt.data()].concat()).unwrap();
        let a = combined_loss(&one, &tgt, &specs(1.0, 1.0)).unwrap();
        let b = combined_loss(&two, &tgt2, &specs(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(a.total, b.total, epsilon = 1e-12);
    }

    #[test]
    fn sce_minimum_at_target() {
        // gradient changes sign where σ(x) crosses t
        let target = 0.3;
        let x_star = (target / (1.0 - target) as f64).ln();
        let grad_at = |x: f64| sce_loss(&t(&[x]), &t(&[target])).unwrap().1.data()[0];
        let mut prev = grad_at(-6.0);
        let mut crossing = None;
        for i in 1..=1200 {
            let x = -6.0 + i as f64 * 0.01;
            let g = grad_at(x);
            if prev < 0.0 && g >= 0.0 {
                crossing = Some(x);
            }
            prev = g;
        }
        let crossing = crossing.expect("gradient never changes sign");
        assert!((crossing - x_star).abs() <= 0.01);
    }
}
