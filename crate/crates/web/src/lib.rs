//! Browser bindings: audit a net file, reconstruct drawn digits, and run
//! short training sessions in the page.
//!
//! Every fallible call returns `Result<_, String>`, which wasm-bindgen
//! turns into a thrown JS string. The same functions are used natively by
//! the tests.

use cae::checkpoint::Checkpoint;
use cae::data::{dataset_from_idx_bytes, Dataset, Split};
use cae::init::seeded_rng;
use cae::inspect::{saturation_report, trace_all, SaturationLimits};
use cae::netspec::{count_params, data_ratio, parse_netspec, NetSpec};
use cae::network::Network;
use cae::solver::{self, SolverConfig, TrainOptions};
use cae::tensor::Tensor;
use wasm_bindgen::prelude::*;

const SIDE: usize = 28;
const PIXELS: usize = SIDE * SIDE;

fn spec(text: &str) -> Result<NetSpec, String> {
    parse_netspec(text)
        .and_then(NetSpec::infer_shapes)
        .map_err(|e| e.to_string())
}

/// Names of the bundled net files.
#[wasm_bindgen]
pub fn bundled_names() -> Vec<String> {
    cae::models::ALL.iter().map(|(n, _)| n.to_string()).collect()
}

/// Text of a bundled net file.
#[wasm_bindgen]
pub fn bundled_text(name: &str) -> Option<String> {
    cae::models::ALL
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t.to_string())
}

/// Parameter table, CAE size, symmetry verdict and, when a dataset size in
/// elements is given, the data ratio.
#[wasm_bindgen]
pub fn audit(netspec: &str, data_elements: Option<f64>) -> Result<String, String> {
    let net = spec(netspec)?;
    let report = count_params(&net).map_err(|e| e.to_string())?;
    let mut out = report.to_string();
    if let Some(n) = data_elements {
        if !(n.is_finite() && n >= 1.0) {
            return Err(format!("dataset size must be a positive count, got {n}"));
        }
        let ratio = data_ratio(n as u64, &report).map_err(|e| e.to_string())?;
        out.push_str(&format!("data ratio: {ratio}\n"));
    }
    Ok(out)
}

/// A network plus the samples the page has collected for training.
#[wasm_bindgen]
pub struct Demo {
    net: Network,
    samples: Vec<f64>,
    labels: Vec<u8>,
    iter: u64,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(netspec: &str, seed: u32) -> Result<Demo, String> {
        let spec = spec(netspec)?;
        let input = spec.input_shape;
        if input.c() != 1 || input.h() != SIDE || input.w() != SIDE {
            return Err(format!("the demo draws 1x{SIDE}x{SIDE} images; this net takes {input}"));
        }
        let seed = u64::from(seed);
        let net = Network::initialized(spec, &mut seeded_rng(seed)).map_err(|e| e.to_string())?;
        Ok(Demo {
            net,
            samples: Vec::new(),
            labels: Vec::new(),
            iter: 0,
            seed,
        })
    }

    pub fn name(&self) -> String {
        self.net.name().to_string()
    }

    /// Completed training iterations (a plain JS number).
    pub fn iterations(&self) -> f64 {
        self.iter as f64
    }

    /// Replaces the weights with those of a `.caef` checkpoint.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<(), String> {
        let ckpt = Checkpoint::from_bytes(bytes).map_err(|e| e.to_string())?;
        ckpt.apply_to(&mut self.net).map_err(|e| e.to_string())?;
        self.iter = ckpt.iter;
        Ok(())
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        Checkpoint::from_network(&self.net, self.iter).to_bytes()
    }

    /// Reconstruction of a 28x28 image with pixels in [0, 1], as
    /// probabilities (sigmoid of the output logits).
    pub fn reconstruct(&self, pixels: &[f64]) -> Result<Vec<f64>, String> {
        let x = image(pixels)?;
        let acts = self.net.forward(&x).map_err(|e| e.to_string())?;
        let logits = acts.output(self.net.output_layer());
        Ok(logits.data().iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect())
    }

    /// Latent code of one image.
    pub fn latent(&self, pixels: &[f64]) -> Result<Vec<f64>, String> {
        let x = image(pixels)?;
        let at = self.net.latent_layer().map_err(|e| e.to_string())?;
        let acts = self.net.forward_to(&x, at).map_err(|e| e.to_string())?;
        Ok(acts.output(at).data().to_vec())
    }

    /// One `name NxCxHxW [min, max]` line per stage, then any saturation
    /// warnings.
    pub fn trace(&self, pixels: &[f64]) -> Result<String, String> {
        let traces = trace_all(&self.net, &image(pixels)?).map_err(|e| e.to_string())?;
        let mut out: String = traces.iter().map(|t| t.summary_line() + "\n").collect();
        for w in saturation_report(&traces, &SaturationLimits::default()) {
            out.push_str(&format!("warning: {w}\n"));
        }
        Ok(out)
    }

    /// Adds a drawn digit to the training pool.
    pub fn add_sample(&mut self, pixels: &[f64], label: u8) -> Result<usize, String> {
        image(pixels)?;
        self.samples.extend_from_slice(pixels);
        self.labels.push(label);
        Ok(self.labels.len())
    }

    /// Adds the first `limit` images of an uploaded IDX image/label pair.
    pub fn add_idx(&mut self, images: &[u8], labels: &[u8], limit: usize) -> Result<usize, String> {
        let data = dataset_from_idx_bytes(images, labels, Split::Train).map_err(|e| e.to_string())?;
        let data = data.truncated(limit);
        if data.sample_shape().per_sample() != PIXELS {
            return Err(format!("expected {SIDE}x{SIDE} images, got {}", data.sample_shape()));
        }
        self.samples.extend_from_slice(data.images.data());
        self.labels.extend_from_slice(&data.labels);
        Ok(self.labels.len())
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn clear_samples(&mut self) {
        self.samples.clear();
        self.labels.clear();
    }

    /// Runs `iters` SGD iterations over the pool and returns the
    /// per-iteration training loss (cross-entropy plus Euclidean).
    pub fn train(&mut self, iters: u32, base_lr: f64, batch_size: usize) -> Result<Vec<f64>, String> {
        if self.labels.is_empty() {
            return Err("add some samples first".into());
        }
        let n = self.labels.len();
        let data = Dataset {
            images: Tensor::from_vec([n, 1, SIDE, SIDE], self.samples.clone()).map_err(|e| e.to_string())?,
            labels: self.labels.clone(),
            split: Split::Train,
        };
        let cfg = SolverConfig {
            base_lr,
            max_iter: u64::from(iters),
            batch_size: batch_size.clamp(1, n),
            // a different shuffle for each call
            seed: self.seed.wrapping_add(self.iter),
            ..SolverConfig::cae()
        };
        let state = solver::train(&mut self.net, &data, &cfg, &TrainOptions::default()).map_err(|e| e.to_string())?;
        self.iter += state.iter;
        Ok(state.history.iter().map(|r| r.total).collect())
    }
}

fn image(pixels: &[f64]) -> Result<Tensor, String> {
    if pixels.len() != PIXELS {
        return Err(format!("expected {PIXELS} pixels, got {}", pixels.len()));
    }
    Tensor::from_vec([1, 1, SIDE, SIDE], pixels.to_vec()).map_err(|e| e.to_string())
}
