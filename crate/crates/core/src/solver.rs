//! SGD with momentum and weight decay, learning-rate policies, the training
//! loop and evaluation.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::data::{self, DataError, Dataset};
use crate::loss::LossKind;
use crate::inspect::{saturation_report, sig9, trace_all, LayerTrace, SaturationLimits, SaturationWarning};
use crate::network::{LayerParams, LossPair, Network, NetworkError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrPolicy {
    Fixed,
    Step,
}

impl LrPolicy {
    pub fn keyword(self) -> &'static str {
        match self {
            LrPolicy::Fixed => "fixed",
            LrPolicy::Step => "step",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub base_lr: f64,
    pub lr_policy: LrPolicy,
    /// Only read by the step policy.
    pub gamma: f64,
    /// Only read by the step policy.
    pub stepsize: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: u64,
    pub batch_size: usize,
    pub test_interval: u64,
    pub snapshot_interval: u64,
    pub seed: u64,
}

impl SolverConfig {
    /// Fixed-rate configuration used for the convolutional models.
    /// Momentum is left at zero since no value is prescribed for them.
    pub fn cae() -> Self {
        SolverConfig {
            base_lr: 0.006,
            lr_policy: LrPolicy::Fixed,
            gamma: 0.1,
            stepsize: 1000,
            momentum: 0.0,
            weight_decay: 0.0005,
            max_iter: 20000,
            batch_size: 100,
            test_interval: 500,
            snapshot_interval: 5000,
            seed: 1,
        }
    }

    /// Step-rate configuration used for the fully-connected baselines.
    pub fn classic() -> Self {
        SolverConfig {
            base_lr: 0.01,
            lr_policy: LrPolicy::Step,
            gamma: 0.1,
            stepsize: 1000,
            momentum: 0.9,
            ..SolverConfig::cae()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, why: &str| Err(ConfigError::Invalid(format!("{key}: {why}")));
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return bad("base_lr", "must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be a finite non-negative number");
        }
        if self.lr_policy == LrPolicy::Step {
            if !(self.gamma.is_finite() && self.gamma > 0.0) {
                return bad("gamma", "step policy needs a positive gamma");
            }
            if self.stepsize == 0 {
                return bad("stepsize", "step policy needs a positive stepsize");
            }
        }
        for (key, v) in [
            ("batch_size", self.batch_size as u64),
            ("test_interval", self.test_interval),
            ("snapshot_interval", self.snapshot_interval),
        ] {
            if v == 0 {
                return bad(key, "must be positive");
            }
        }
        Ok(())
    }

    /// Flat `key: value` text, one key per line, readable by [`FromStr`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("base_lr: {}\n", self.base_lr));
        s.push_str(&format!("lr_policy: \"{}\"\n", self.lr_policy.keyword()));
        if self.lr_policy == LrPolicy::Step {
            s.push_str(&format!("gamma: {}\n", self.gamma));
            s.push_str(&format!("stepsize: {}\n", self.stepsize));
        }
        s.push_str(&format!("momentum: {}\n", self.momentum));
        s.push_str(&format!("weight_decay: {}\n", self.weight_decay));
        s.push_str(&format!("max_iter: {}\n", self.max_iter));
        s.push_str(&format!("batch_size: {}\n", self.batch_size));
        s.push_str(&format!("test_interval: {}\n", self.test_interval));
        s.push_str(&format!("snapshot_interval: {}\n", self.snapshot_interval));
        s.push_str(&format!("seed: {}\n", self.seed));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid solver config: {0}")]
    Invalid(String),
}

/// Parses `key: value` or `key = value` lines over the [`SolverConfig::cae`]
/// defaults. `#` starts a comment; string values may be quoted.
impl FromStr for SolverConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SolverConfig::cae();
        let (mut saw_gamma, mut saw_stepsize) = (false, false);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line
                .split_once(':')
                .or_else(|| line.split_once('='))
                .ok_or_else(|| syntax(format!("expected `key: value`, found `{line}`")))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
                value.parse().map_err(|_| format!("{key}: cannot parse `{value}`"))
            }
            match key {
                "base_lr" => cfg.base_lr = num(key, value).map_err(syntax)?,
                "lr_policy" => {
                    cfg.lr_policy = match value {
                        "fixed" => LrPolicy::Fixed,
                        "step" => LrPolicy::Step,
                        other => return Err(syntax(format!("unknown lr_policy `{other}`"))),
                    }
                }
                "gamma" => {
                    cfg.gamma = num(key, value).map_err(syntax)?;
                    saw_gamma = true;
                }
                "stepsize" => {
                    cfg.stepsize = num(key, value).map_err(syntax)?;
                    saw_stepsize = true;
                }
                "momentum" => cfg.momentum = num(key, value).map_err(syntax)?,
                "weight_decay" => cfg.weight_decay = num(key, value).map_err(syntax)?,
                "max_iter" => cfg.max_iter = num(key, value).map_err(syntax)?,
                "batch_size" => cfg.batch_size = num(key, value).map_err(syntax)?,
                "test_interval" => cfg.test_interval = num(key, value).map_err(syntax)?,
                "snapshot_interval" | "snapshot" => cfg.snapshot_interval = num(key, value).map_err(syntax)?,
                "seed" | "random_seed" => cfg.seed = num(key, value).map_err(syntax)?,
                "solver_type" | "type" => {
                    if !value.eq_ignore_ascii_case("sgd") {
                        return Err(syntax(format!("only SGD is supported, found `{value}`")));
                    }
                }
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        if cfg.lr_policy == LrPolicy::Step && !(saw_gamma && saw_stepsize) {
            return Err(ConfigError::Invalid("step policy requires gamma and stepsize".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn lr_at(cfg: &SolverConfig, iter: u64) -> f64 {
    match cfg.lr_policy {
        LrPolicy::Fixed => cfg.base_lr,
        LrPolicy::Step => {
            let k = iter / cfg.stepsize;
            cfg.base_lr * cfg.gamma.powi(k.min(i32::MAX as u64) as i32)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite gradient in layer `{layer}`")]
pub struct NonFiniteGradient {
    pub layer: String,
}

/// One momentum-SGD update over every block, then clears the gradients.
/// Nothing is modified when any gradient is non-finite.
pub fn sgd_step(params: &mut [LayerParams], lr: f64, momentum: f64, weight_decay: f64) -> Result<(), NonFiniteGradient> {
    if let Some(p) = params.iter().find(|p| {
        !(p.block.weight_grad.all_finite() && p.block.bias_grad.iter().all(|g| g.is_finite()))
    }) {
        return Err(NonFiniteGradient { layer: p.name.clone() });
    }
    for p in params.iter_mut() {
        let b = &mut p.block;
        update(b.weights.data_mut(), b.weight_grad.data(), b.weight_momentum.data_mut(), lr, momentum, weight_decay);
        update(&mut b.biases, &b.bias_grad, &mut b.bias_momentum, lr, momentum, weight_decay);
        b.zero_grad();
    }
    Ok(())
}

fn update(theta: &mut [f64], grad: &[f64], v: &mut [f64], lr: f64, momentum: f64, weight_decay: f64) {
    for ((t, &g), v) in theta.iter_mut().zip(grad).zip(v) {
        *v = momentum * *v + lr * (g + weight_decay * *t);
        *t -= *v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iter: u64,
    pub split: data::Split,
    pub sce: f64,
    pub euclidean: f64,
    /// Weighted objective; equals `sce + euclidean` for unit loss weights.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainState {
    /// Completed iterations.
    pub iter: u64,
    pub history: Vec<HistoryRecord>,
    pub snapshots: Vec<PathBuf>,
}

impl TrainState {
    pub fn records(&self, split: data::Split) -> impl Iterator<Item = &HistoryRecord> + '_ {
        self.history.iter().filter(move |r| r.split == split)
    }

    /// Mean train objective over the `window` iterations ending at `iter`
    /// (inclusive), or `None` when the window is not fully recorded.
    pub fn smoothed_train_total(&self, iter: u64, window: u64) -> Option<f64> {
        let lo = (iter + 1).checked_sub(window)?;
        let vals: Vec<f64> = self
            .records(data::Split::Train)
            .filter(|r| r.iter >= lo && r.iter <= iter)
            .map(|r| r.total)
            .collect();
        (vals.len() as u64 == window).then(|| vals.iter().sum::<f64>() / window as f64)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "iter,split,sce,euclidean")?;
        for r in &self.history {
            writeln!(out, "{},{},{},{}", r.iter, r.split, sig9(r.sce), sig9(r.euclidean))?;
        }
        Ok(())
    }
}

/// Periodic activation check during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Watchdog {
    /// Iterations between whole-batch checks; the first batch is always
    /// checked.
    pub interval: u64,
    pub limits: SaturationLimits,
}

impl Default for Watchdog {
    fn default() -> Self {
        Watchdog {
            interval: 100,
            limits: SaturationLimits::default(),
        }
    }
}

#[derive(Debug, Default)]
pub struct TrainOptions<'a> {
    pub test: Option<&'a Dataset>,
    /// Checkpoints go here every `snapshot_interval` iterations.
    pub snapshot_dir: Option<PathBuf>,
    pub watchdog: Option<Watchdog>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortCause {
    NonFiniteLoss,
    NonFiniteGradient,
    Saturation,
}

impl fmt::Display for AbortCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortCause::NonFiniteLoss => "non-finite loss",
            AbortCause::NonFiniteGradient => "non-finite gradient",
            AbortCause::Saturation => "saturated activations",
        })
    }
}

/// Diagnostic for a stopped run: per-stage extrema over the offending
/// batch and the layer blamed.
#[derive(Debug, Clone)]
pub struct AbortReport {
    pub iter: u64,
    pub cause: AbortCause,
    pub layer: String,
    pub stages: Vec<String>,
    pub warnings: Vec<SaturationWarning>,
}

impl fmt::Display for AbortReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "numeric abort at iteration {}: {}", self.iter, self.cause)?;
        writeln!(f, "offending layer: {}", self.layer)?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for s in &self.stages {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct NumericAbort {
    pub report: AbortReport,
    /// Parameters of the latest snapshot (or the initial ones).
    pub last_good: Checkpoint,
    pub state: TrainState,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{}", .0.report)]
    Abort(Box<NumericAbort>),
}

fn diagnose(net: &Network, batch: &Tensor, iter: u64, cause: AbortCause, limits: &SaturationLimits, blame: Option<String>) -> AbortReport {
    let traces: Vec<LayerTrace> = trace_all(net, batch).unwrap_or_default();
    let warnings = saturation_report(&traces, limits);
    let layer_of = |stage: &str| {
        traces
            .iter()
            .find(|t| t.name == stage)
            .map(|t| net.spec().layers[t.layer].name.clone())
            .unwrap_or_else(|| stage.to_string())
    };
    let layer = blame
        .or_else(|| warnings.first().map(|w| layer_of(w.layer())))
        .unwrap_or_else(|| "unknown".to_string());
    AbortReport {
        iter,
        cause,
        layer,
        stages: traces.iter().map(LayerTrace::summary_line).collect(),
        warnings,
    }
}

/// Per-sample average of both reconstruction losses over `data`, in
/// chunks of `batch_size` (the last chunk may be partial).
pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<LossPair, SolverError> {
    if data.is_empty() || batch_size == 0 {
        return Err(DataError::BatchSize {
            batch_size,
            len: data.len(),
        }
        .into());
    }
    let (mut sce, mut euclidean) = (0.0, 0.0);
    let mut start = 0;
    while start < data.len() {
        let end = (start + batch_size).min(data.len());
        let chunk = data.slice(start, end);
        let pair = net.loss_pair(&chunk.images)?;
        let n = (end - start) as f64;
        sce += pair.sce * n;
        euclidean += pair.euclidean * n;
        start = end;
    }
    let n = data.len() as f64;
    Ok(LossPair {
        sce: sce / n,
        euclidean: euclidean / n,
    })
}

/// Objective value of a measured pair under the net's loss weights.
pub fn weighted_total(net: &Network, pair: LossPair) -> f64 {
    net.spec()
        .losses
        .iter()
        .map(|l| {
            l.weight
                * match l.kind {
                    LossKind::SigmoidCrossEntropy => pair.sce,
                    LossKind::Euclidean => pair.euclidean,
                }
        })
        .sum()
}

pub fn snapshot_path(dir: &Path, net_name: &str, iter: u64) -> PathBuf {
    dir.join(format!("{net_name}_iter_{iter}.caef"))
}

/// Runs `cfg.max_iter` SGD iterations on shuffled full batches of `train`.
/// Train records carry the loss of the batch at iteration `i` before its
/// update; test records are taken after `i` completed iterations.
pub fn train(net: &mut Network, train: &Dataset, cfg: &SolverConfig, opts: &TrainOptions<'_>) -> Result<TrainState, SolverError> {
    cfg.validate()?;
    let mut state = TrainState::default();
    if cfg.max_iter == 0 {
        return Ok(state);
    }
    if let Some(dir) = &opts.snapshot_dir {
        fs::create_dir_all(dir)?;
    }
    let limits = opts.watchdog.map(|w| w.limits).unwrap_or_default();
    let mut last_good = Checkpoint::from_network(net, 0);
    net.zero_grad();

    let mut epoch = 0u64;
    let mut order = data::batches(train, cfg.batch_size, cfg.seed, epoch)?;
    while state.iter < cfg.max_iter {
        let batch = match order.next() {
            Some(b) => b,
            None => {
                epoch += 1;
                order = data::batches(train, cfg.batch_size, cfg.seed, epoch)?;
                continue;
            }
        };
        let it = state.iter;
        let abort = |net: &Network, cause, blame, state: &TrainState, last_good: &Checkpoint| {
            SolverError::Abort(Box::new(NumericAbort {
                report: diagnose(net, &batch.input, it, cause, &limits, blame),
                last_good: last_good.clone(),
                state: state.clone(),
            }))
        };

        if let Some(w) = &opts.watchdog {
            if it % w.interval == 0 {
                let traces = trace_all(net, &batch.input)?;
                if !saturation_report(&traces, &w.limits).is_empty() {
                    return Err(abort(net, AbortCause::Saturation, None, &state, &last_good));
                }
            }
        }

        let combined = net.loss_and_backward(&batch.input)?;
        if !combined.total.is_finite() {
            return Err(abort(net, AbortCause::NonFiniteLoss, None, &state, &last_good));
        }
        state.history.push(HistoryRecord {
            iter: it,
            split: data::Split::Train,
            sce: combined.part(LossKind::SigmoidCrossEntropy).unwrap_or(f64::NAN),
            euclidean: combined.part(LossKind::Euclidean).unwrap_or(f64::NAN),
            total: combined.total,
        });

        let lr = lr_at(cfg, it);
        if let Err(e) = sgd_step(net.params_mut(), lr, cfg.momentum, cfg.weight_decay) {
            return Err(abort(net, AbortCause::NonFiniteGradient, Some(e.layer), &state, &last_good));
        }
        state.iter += 1;

        if let Some(test) = opts.test {
            if state.iter % cfg.test_interval == 0 {
                let pair = evaluate(net, test, cfg.batch_size)?;
                state.history.push(HistoryRecord {
                    iter: state.iter,
                    split: data::Split::Test,
                    sce: pair.sce,
                    euclidean: pair.euclidean,
                    total: weighted_total(net, pair),
                });
            }
        }
        if state.iter % cfg.snapshot_interval == 0 || state.iter == cfg.max_iter {
            last_good = Checkpoint::from_network(net, state.iter);
            if let Some(dir) = &opts.snapshot_dir {
                let path = snapshot_path(dir, net.name(), state.iter);
                let mut f = io::BufWriter::new(fs::File::create(&path)?);
                last_good.write_to(&mut f)?;
                f.flush()?;
                state.snapshots.push(path);
            }
        }
    }
    Ok(state)
}
