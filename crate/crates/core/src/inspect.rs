//! Per-layer activation dumps, latent-code export, map rendering and the
//! saturation watchdog.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::network::{Network, NetworkError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Index of the producing layer in the net.
    pub layer: usize,
    pub name: String,
    pub post_activation: bool,
    pub output: Tensor,
    pub min: f64,
    pub max: f64,
}

impl LayerTrace {
    pub fn new(layer: usize, name: impl Into<String>, post_activation: bool, output: Tensor) -> Self {
        let (min, max) = output.min_max().unwrap_or((f64::NAN, f64::NAN));
        LayerTrace {
            layer,
            name: name.into(),
            post_activation,
            output,
            min,
            max,
        }
    }

    /// `<layer> <n>x<c>x<h>x<w> [<min>, <max>]`
    pub fn summary_line(&self) -> String {
        format!("{} {} [{}, {}]", self.name, self.output.shape(), sig9(self.min), sig9(self.max))
    }
}

/// One trace per layer output and per attached activation, in forward order.
pub fn trace_all(net: &Network, sample: &Tensor) -> Result<Vec<LayerTrace>, NetworkError> {
    Ok(net
        .stages(sample)?
        .into_iter()
        .map(|s| LayerTrace::new(s.layer, s.name, s.post_activation, s.output))
        .collect())
}

/// Thresholds for [`saturation_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationLimits {
    /// A post-activation map whose range is below this is flat.
    pub flatline_epsilon: f64,
    /// A sigmoid output within this distance of 0 or 1 counts as pinned.
    pub pinned_margin: f64,
    /// Fraction of pinned entries at which a post-activation trace is
    /// reported as saturated.
    pub pinned_fraction: f64,
}

impl Default for SaturationLimits {
    fn default() -> Self {
        SaturationLimits {
            flatline_epsilon: 1e-6,
            pinned_margin: 1e-6,
            pinned_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SaturationWarning {
    NonFinite { layer: String, count: usize },
    Flatline { layer: String, min: f64, max: f64 },
    Pinned { layer: String, fraction: f64 },
}

impl SaturationWarning {
    pub fn layer(&self) -> &str {
        match self {
            SaturationWarning::NonFinite { layer, .. }
            | SaturationWarning::Flatline { layer, .. }
            | SaturationWarning::Pinned { layer, .. } => layer,
        }
    }
}

impl fmt::Display for SaturationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SaturationWarning::NonFinite { layer, count } => {
                write!(f, "{layer}: {count} non-finite values")
            }
            SaturationWarning::Flatline { layer, min, max } => {
                write!(f, "{layer}: flat output [{}, {}]", sig9(*min), sig9(*max))
            }
            SaturationWarning::Pinned { layer, fraction } => {
                write!(f, "{layer}: {:.1}% of sigmoid outputs pinned at 0 or 1", fraction * 100.0)
            }
        }
    }
}

pub fn saturation_report(traces: &[LayerTrace], limits: &SaturationLimits) -> Vec<SaturationWarning> {
    let mut warnings = Vec::new();
    for t in traces {
        let bad = t.output.data().iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            warnings.push(SaturationWarning::NonFinite {
                layer: t.name.clone(),
                count: bad,
            });
            continue;
        }
        if !t.post_activation || t.output.is_empty() {
            continue;
        }
        if t.max - t.min < limits.flatline_epsilon {
            warnings.push(SaturationWarning::Flatline {
                layer: t.name.clone(),
                min: t.min,
                max: t.max,
            });
            continue;
        }
        let pinned = t
            .output
            .data()
            .iter()
            .filter(|&&v| v < limits.pinned_margin || v > 1.0 - limits.pinned_margin)
            .count();
        let fraction = pinned as f64 / t.output.len() as f64;
        if fraction >= limits.pinned_fraction {
            warnings.push(SaturationWarning::Pinned {
                layer: t.name.clone(),
                fraction,
            });
        }
    }
    warnings
}

/// Formats with 9 significant digits in plain decimal notation.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.99999999995 -> 10.00000000),
    // which only adds a trailing zero; trim it with the others.
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `label,c0,...,c{N-1}` rows of latent codes, one per sample in
/// dataset order.
pub fn export_latent(net: &Network, data: &Dataset, out: &mut impl Write) -> Result<usize, ExportError> {
    let latent = net.latent_layer()?;
    let width = net.spec().inferred_shapes[latent].per_sample();
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..width).map(|i| format!("c{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    const CHUNK: usize = 100;
    let mut start = 0;
    while start < data.len() {
        let end = (start + CHUNK).min(data.len());
        let chunk = data.slice(start, end);
        let acts = net.forward_to(&chunk.images, latent)?;
        let codes = acts.output(latent);
        for (i, &label) in chunk.labels.iter().enumerate() {
            let mut line = label.to_string();
            for &v in codes.sample(i) {
                line.push(',');
                line.push_str(&sig9(v));
            }
            writeln!(out, "{line}")?;
        }
        start = end;
    }
    Ok(data.len())
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Min–max normalizes one map to gray levels; a zero-range map is mid-gray.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// Renders each trace's maps as P5 PGM files plus one sidecar text line
/// per trace. Maps of fully-connected outputs (1×1 spatial) are laid out as
/// a single 1×C strip. Returns the written paths.
pub fn render_grid(traces: &[LayerTrace], dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (idx, t) in traces.iter().enumerate() {
        let stem = format!("{:02}_{}", idx + 1, file_stem(&t.name));
        let s = t.output.shape();
        if s.h() * s.w() == 1 {
            for n in 0..s.n() {
                let path = dir.join(format!("{stem}_{n}.pgm"));
                write_pgm(&path, s.c(), 1, &to_gray(t.output.sample(n)))?;
                written.push(path);
            }
        } else {
            for n in 0..s.n() {
                for c in 0..s.c() {
                    let suffix = if s.n() == 1 { format!("{c}") } else { format!("{n}_{c}") };
                    let path = dir.join(format!("{stem}_{suffix}.pgm"));
                    write_pgm(&path, s.w(), s.h(), &to_gray(t.output.plane(n, c)))?;
                    written.push(path);
                }
            }
        }
        let side = dir.join(format!("{stem}.txt"));
        fs::write(&side, format!("{}\n", t.summary_line()))?;
        written.push(side);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(name: &str, post: bool, vals: Vec<f64>) -> LayerTrace {
        let n = vals.len();
        LayerTrace::new(0, name, post, Tensor::from_vec([1, 1, 1, n], vals).unwrap())
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-0.5), "-0.5");
        assert_eq!(sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(1.0e-3 / 3.0), "0.000333333333");
        assert_eq!(sig9(1e12), "1000000000000");
    }

    #[test]
    fn flatline_and_nonfinite_warnings() {
        let limits = SaturationLimits::default();
        let ws = saturation_report(&[trace("ones", true, vec![1.0; 9])], &limits);
        assert_eq!(ws.len(), 1);
        assert!(matches!(ws[0], SaturationWarning::Flatline { .. }));

        let ws = saturation_report(&[trace("deconv1", false, vec![0.1, f64::NAN])], &limits);
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].layer(), "deconv1");
        assert!(matches!(ws[0], SaturationWarning::NonFinite { count: 1, .. }));

        // raw (pre-activation) outputs may legitimately be constant
        assert!(saturation_report(&[trace("fc", false, vec![2.0; 4])], &limits).is_empty());
        assert!(saturation_report(&[trace("ok", true, vec![0.2, 0.5, 0.7])], &limits).is_empty());
    }

    #[test]
    fn pinned_warning() {
        let mut vals = vec![1.0; 95];
        vals.extend([0.0; 4]);
        vals.push(0.5);
        let ws = saturation_report(&[trace("deconv2sig", true, vals)], &SaturationLimits::default());
        assert!(matches!(ws[..], [SaturationWarning::Pinned { .. }]));
    }

    #[test]
    fn gray_levels() {
        assert_eq!(to_gray(&[0.3; 5]), vec![128; 5]);
        assert_eq!(to_gray(&[0.0, 0.5, 1.0]), vec![0, 128, 255]);
        let g = to_gray(&[-3.0, 1.0, 0.0, 7.0, 6.9]);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| [-3.0, 1.0, 0.0, 7.0, 6.9][a].partial_cmp(&[-3.0, 1.0, 0.0, 7.0, 6.9][b]).unwrap());
        assert!(order.windows(2).all(|w| g[w[0]] <= g[w[1]]));
    }

    #[test]
    fn render_writes_pgm_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let maps = Tensor::from_vec([1, 2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let written = render_grid(&[LayerTrace::new(0, "conv1", false, maps)], dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        let pgm = fs::read(dir.path().join("01_conv1_0.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 6..], &[0, 51, 102, 153, 204, 255]);
        let side = fs::read_to_string(dir.path().join("01_conv1.txt")).unwrap();
        assert_eq!(side, "conv1 1x2x2x3 [0, 11]\n");
    }
}
