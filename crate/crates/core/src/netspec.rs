//! Line-oriented network description language, shape inference and
//! architecture auditing.
//!
//! ```text
//! # comments run to end of line
//! net model1 input [1,1,28,28]
//! layer conv1 conv kernel=9 out=4 weight=xavier bias=constant act=sigmoid
//! layer ip1encode fc out=125 weight=gaussian(std=1,sparse=25)
//! layer reshape reshape dims=[0,0,1,1]
//! loss sce sigmoid_cross_entropy pred=deconv1neur target=input
//! ```
//!
//! Layers form a single chain. `bottom=` may be given explicitly but must
//! name the previous layer (or `input` for the first one).

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::init::FillerSpec;
use crate::loss::{LossKind, LossSpec};
use crate::tensor::Shape;

/// Reserved name of the network input; also the reconstruction target.
pub const INPUT: &str = "input";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetSpecError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown layer kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: duplicate layer name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: `{name}` references undeclared bottom `{bottom}`")]
    DanglingBottom {
        line: usize,
        name: String,
        bottom: String,
    },
    #[error("layer `{layer}` is missing required field `{field}`")]
    MissingField { layer: String, field: &'static str },
    #[error("geometry error in `{layer}`: {message}")]
    Geometry { layer: String, message: String },
    #[error("audit error: {0}")]
    Audit(String),
    #[error("shapes have not been inferred for net `{0}`")]
    NotInferred(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv { kernel: usize, num_output: usize },
    Deconv { kernel: usize, num_output: usize },
    Fc { num_output: usize },
    /// Target dims; 0 copies the corresponding input extent.
    Reshape { dims: [usize; 4] },
    Sigmoid,
}

impl LayerKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Deconv { .. } => "deconv",
            LayerKind::Fc { .. } => "fc",
            LayerKind::Reshape { .. } => "reshape",
            LayerKind::Sigmoid => "sigmoid",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv { .. } | LayerKind::Deconv { .. } | LayerKind::Fc { .. }
        )
    }

    pub fn num_output(&self) -> Option<usize> {
        match *self {
            LayerKind::Conv { num_output, .. }
            | LayerKind::Deconv { num_output, .. }
            | LayerKind::Fc { num_output } => Some(num_output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub bottom: String,
    pub weight_filler: FillerSpec,
    pub bias_filler: FillerSpec,
    pub activation: Activation,
    /// Marks the code layer explicitly when widths alone are ambiguous.
    pub latent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub losses: Vec<LossSpec>,
    /// Output shape per layer; empty until [`NetSpec::infer_shapes`] runs.
    pub inferred_shapes: Vec<Shape>,
}

impl NetSpec {
    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn is_inferred(&self) -> bool {
        self.inferred_shapes.len() == self.layers.len()
    }

    pub fn shapes(&self) -> Result<&[Shape], NetSpecError> {
        if !self.is_inferred() {
            return Err(NetSpecError::NotInferred(self.name.clone()));
        }
        Ok(&self.inferred_shapes)
    }

    /// Annotates every layer with its output shape.
    pub fn infer_shapes(mut self) -> Result<Self, NetSpecError> {
        self.inferred_shapes = infer_chain(&self.layers, self.input_shape)?;
        Ok(self)
    }

    /// Shapes for an arbitrary batch size (the header's sample count is a default).
    pub fn shapes_for_batch(&self, n: usize) -> Result<Vec<Shape>, NetSpecError> {
        infer_chain(&self.layers, self.input_shape.with_batch(n))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let [n, c, h, w] = self.input_shape.0;
        let _ = writeln!(out, "net {} input [{n},{c},{h},{w}]", self.name);
        for layer in &self.layers {
            let _ = write!(out, "layer {} {}", layer.name, layer.kind.keyword());
            match &layer.kind {
                LayerKind::Conv { kernel, num_output } | LayerKind::Deconv { kernel, num_output } => {
                    let _ = write!(out, " kernel={kernel} out={num_output}");
                }
                LayerKind::Fc { num_output } => {
                    let _ = write!(out, " out={num_output}");
                }
                LayerKind::Reshape { dims } => {
                    let _ = write!(out, " dims=[{},{},{},{}]", dims[0], dims[1], dims[2], dims[3]);
                }
                LayerKind::Sigmoid => {}
            }
            let _ = write!(out, " bottom={}", layer.bottom);
            if layer.kind.has_params() {
                let _ = write!(out, " weight={} bias={}", layer.weight_filler, layer.bias_filler);
            }
            if layer.activation == Activation::Sigmoid {
                out.push_str(" act=sigmoid");
            }
            if layer.latent {
                out.push_str(" latent=true");
            }
            out.push('\n');
        }
        for loss in &self.losses {
            let _ = write!(
                out,
                "loss {} {} pred={} target={INPUT} weight={:?}",
                loss.name,
                loss.kind.keyword(),
                loss.pred_layer,
                loss.weight
            );
            if loss.kind == LossKind::Euclidean && loss.apply_sigmoid_to_pred {
                out.push_str(" sigmoid=true");
            }
            out.push('\n');
        }
        out
    }
}

fn infer_chain(layers: &[LayerSpec], input: Shape) -> Result<Vec<Shape>, NetSpecError> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut cur = input;
    for layer in layers {
        let geometry = |message: String| NetSpecError::Geometry {
            layer: layer.name.clone(),
            message,
        };
        let [n, _, h, w] = cur.0;
        cur = match layer.kind {
            LayerKind::Conv { kernel, num_output } => {
                if kernel > h || kernel > w {
                    return Err(geometry(format!(
                        "kernel {kernel} exceeds input spatial size {h}x{w}"
                    )));
                }
                Shape::new(n, num_output, h - kernel + 1, w - kernel + 1)
            }
            LayerKind::Deconv { kernel, num_output } => {
                Shape::new(n, num_output, h + kernel - 1, w + kernel - 1)
            }
            LayerKind::Fc { num_output } => Shape::new(n, num_output, 1, 1),
            LayerKind::Reshape { dims } => {
                let mut resolved = [0; 4];
                for (i, (&d, &src)) in dims.iter().zip(&cur.0).enumerate() {
                    resolved[i] = if d == 0 { src } else { d };
                }
                let next = Shape(resolved);
                if next.len() != cur.len() {
                    return Err(geometry(format!(
                        "cannot reshape {cur} ({} elements) into {next} ({} elements)",
                        cur.len(),
                        next.len()
                    )));
                }
                next
            }
            LayerKind::Sigmoid => cur,
        };
        if cur.checked_len().is_none() {
            return Err(geometry(format!("shape {cur} overflows")));
        }
        shapes.push(cur);
    }
    Ok(shapes)
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    tokens
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn syntax(&self, column: usize, message: impl Into<String>) -> NetSpecError {
        NetSpecError::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn ident(&self, tok: Option<&Token<'_>>, what: &str, eol_column: usize) -> Result<String, NetSpecError> {
        match tok {
            Some(t) if is_ident(t.text) => Ok(t.text.to_string()),
            Some(t) => Err(self.syntax(t.column, format!("expected {what}, found `{}`", t.text))),
            None => Err(self.syntax(eol_column, format!("expected {what}"))),
        }
    }

    fn usize_value(&self, value: &str, column: usize) -> Result<usize, NetSpecError> {
        value
            .parse::<usize>()
            .map_err(|_| self.syntax(column, format!("expected a non-negative integer, found `{value}`")))
    }

    fn f64_value(&self, value: &str, column: usize) -> Result<f64, NetSpecError> {
        value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.syntax(column, format!("expected a number, found `{value}`")))
    }

    fn bool_value(&self, value: &str, column: usize) -> Result<bool, NetSpecError> {
        match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.syntax(column, format!("expected true or false, found `{value}`"))),
        }
    }

    fn int_list(&self, value: &str, column: usize) -> Result<[usize; 4], NetSpecError> {
        let inner = value
            .strip_prefix('[')
            .and_then(|v| v.strip_suffix(']'))
            .ok_or_else(|| self.syntax(column, format!("expected [a,b,c,d], found `{value}`")))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(self.syntax(column, format!("expected 4 integers, found {}", parts.len())));
        }
        let mut dims = [0; 4];
        for (d, p) in dims.iter_mut().zip(parts) {
            *d = self.usize_value(p, column)?;
        }
        Ok(dims)
    }

    fn filler(&self, value: &str, column: usize) -> Result<FillerSpec, NetSpecError> {
        let (head, args) = match value.split_once('(') {
            Some((head, rest)) => {
                let args = rest
                    .strip_suffix(')')
                    .ok_or_else(|| self.syntax(column, "unterminated filler arguments"))?;
                (head, Some(args))
            }
            None => (value, None),
        };
        let mut kv = Vec::new();
        if let Some(args) = args {
            for part in args.split(',').filter(|p| !p.trim().is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| self.syntax(column, format!("expected key=value in `{part}`")))?;
                kv.push((k.trim(), v.trim()));
            }
        }
        let take = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let unknown = kv
            .iter()
            .find(|(k, _)| !matches!((head, *k), ("constant", "value") | ("gaussian", "std" | "sparse")));
        if let Some((k, _)) = unknown {
            return Err(self.syntax(column, format!("unknown argument `{k}` for filler `{head}`")));
        }
        match head {
            "xavier" if args.is_none() => Ok(FillerSpec::Xavier),
            "constant" => {
                let value = take("value").map(|v| self.f64_value(v, column)).transpose()?;
                Ok(FillerSpec::Constant {
                    value: value.unwrap_or(0.0),
                })
            }
            "gaussian" => {
                let std = take("std")
                    .ok_or_else(|| self.syntax(column, "gaussian filler needs std="))
                    .and_then(|v| self.f64_value(v, column))?;
                let sparse = take("sparse")
                    .ok_or_else(|| self.syntax(column, "gaussian filler needs sparse="))
                    .and_then(|v| self.usize_value(v, column))?;
                if std <= 0.0 || sparse == 0 {
                    return Err(self.syntax(column, "gaussian filler needs std > 0 and sparse >= 1"));
                }
                Ok(FillerSpec::GaussianSparse { std, sparse })
            }
            _ => Err(self.syntax(column, format!("unknown filler `{value}`"))),
        }
    }
}

/// Parses a network description. Shapes are left uninferred.
pub fn parse_netspec(text: &str) -> Result<NetSpec, NetSpecError> {
    let mut header: Option<(String, Shape)> = None;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut losses: Vec<LossSpec> = Vec::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(content);
        let Some(first) = tokens.first() else {
            continue;
        };
        let ctx = LineCtx { line: line_no };
        let eol = content.trim_end().len() + 1;

        match first.text {
            "net" => {
                if header.is_some() || !layers.is_empty() {
                    return Err(ctx.syntax(first.column, "`net` header must appear exactly once, first"));
                }
                let name = ctx.ident(tokens.get(1), "net name", eol)?;
                match tokens.get(2) {
                    Some(t) if t.text == "input" => {}
                    Some(t) => return Err(ctx.syntax(t.column, "expected `input`")),
                    None => return Err(ctx.syntax(eol, "expected `input`")),
                }
                let Some(dims_tok) = tokens.get(3) else {
                    return Err(ctx.syntax(eol, "expected input dimensions"));
                };
                let joined: String = tokens[3..].iter().map(|t| t.text).collect();
                let dims = ctx.int_list(&joined, dims_tok.column)?;
                if dims.contains(&0) {
                    return Err(ctx.syntax(dims_tok.column, "input dimensions must be positive"));
                }
                header = Some((name, Shape(dims)));
            }
            "layer" => {
                if header.is_none() {
                    return Err(ctx.syntax(first.column, "expected `net` header before layers"));
                }
                if !losses.is_empty() {
                    return Err(ctx.syntax(first.column, "layers must precede loss lines"));
                }
                let layer = parse_layer(&ctx, &tokens, eol, &layers, &names)?;
                names.insert(layer.name.clone());
                layers.push(layer);
            }
            "loss" => {
                if header.is_none() {
                    return Err(ctx.syntax(first.column, "expected `net` header before losses"));
                }
                let loss = parse_loss(&ctx, &tokens, eol, &layers, &names)?;
                names.insert(loss.name.clone());
                losses.push(loss);
            }
            other => {
                return Err(ctx.syntax(first.column, format!("expected `net`, `layer` or `loss`, found `{other}`")));
            }
        }
    }

    let Some((name, input_shape)) = header else {
        return Err(NetSpecError::Syntax {
            line: last_line.max(1),
            column: 1,
            message: "missing `net` header".into(),
        });
    };
    Ok(NetSpec {
        name,
        input_shape,
        layers,
        losses,
        inferred_shapes: Vec::new(),
    })
}

fn split_field<'a>(ctx: &LineCtx, tok: &Token<'a>) -> Result<(&'a str, &'a str), NetSpecError> {
    match tok.text.split_once('=') {
        Some((k, v)) if is_ident(k) && !v.is_empty() => Ok((k, v)),
        _ => Err(ctx.syntax(tok.column, format!("expected field `key=value`, found `{}`", tok.text))),
    }
}

fn parse_layer(
    ctx: &LineCtx,
    tokens: &[Token<'_>],
    eol: usize,
    previous: &[LayerSpec],
    names: &HashSet<String>,
) -> Result<LayerSpec, NetSpecError> {
    let name = ctx.ident(tokens.get(1), "layer name", eol)?;
    if name == INPUT || names.contains(&name) {
        return Err(NetSpecError::DuplicateName {
            line: ctx.line,
            name,
        });
    }
    let kind_tok = tokens
        .get(2)
        .ok_or_else(|| ctx.syntax(eol, "expected layer kind"))?;
    let kind_word = kind_tok.text;
    if !matches!(kind_word, "conv" | "deconv" | "fc" | "reshape" | "sigmoid") {
        return Err(NetSpecError::UnknownKind {
            line: ctx.line,
            kind: kind_word.to_string(),
        });
    }

    let mut kernel = None;
    let mut num_output = None;
    let mut dims = None;
    let mut bottom = None;
    let mut weight_filler = None;
    let mut bias_filler = None;
    let mut activation = Activation::None;
    let mut latent = false;
    let mut seen = HashSet::new();

    let parametric = matches!(kind_word, "conv" | "deconv" | "fc");
    let spatial = matches!(kind_word, "conv" | "deconv");

    for tok in &tokens[3..] {
        let (key, value) = split_field(ctx, tok)?;
        if !seen.insert(key) {
            return Err(ctx.syntax(tok.column, format!("field `{key}` given twice")));
        }
        let allowed = match key {
            "kernel" | "stride" | "pad" => spatial,
            "out" | "weight" | "bias" | "latent" => parametric,
            "dims" => kind_word == "reshape",
            "bottom" | "act" => true,
            _ => false,
        };
        if !allowed {
            return Err(ctx.syntax(
                tok.column,
                format!("field `{key}` is not valid for `{kind_word}` layers"),
            ));
        }
        let col = tok.column + key.len() + 1;
        match key {
            "kernel" => {
                let k = ctx.usize_value(value, col)?;
                if k == 0 {
                    return Err(ctx.syntax(col, "kernel must be positive"));
                }
                kernel = Some(k);
            }
            "out" => {
                let o = ctx.usize_value(value, col)?;
                if o == 0 {
                    return Err(ctx.syntax(col, "out must be positive"));
                }
                num_output = Some(o);
            }
            "stride" => {
                if ctx.usize_value(value, col)? != 1 {
                    return Err(ctx.syntax(col, "only stride=1 is supported"));
                }
            }
            "pad" => {
                if ctx.usize_value(value, col)? != 0 {
                    return Err(ctx.syntax(col, "only pad=0 is supported"));
                }
            }
            "dims" => dims = Some(ctx.int_list(value, col)?),
            "bottom" => {
                if !is_ident(value) {
                    return Err(ctx.syntax(col, format!("invalid bottom name `{value}`")));
                }
                bottom = Some(value.to_string());
            }
            "weight" => weight_filler = Some(ctx.filler(value, col)?),
            "bias" => bias_filler = Some(ctx.filler(value, col)?),
            "act" => {
                activation = match value {
                    "sigmoid" => Activation::Sigmoid,
                    "none" => Activation::None,
                    _ => return Err(ctx.syntax(col, format!("unknown activation `{value}`"))),
                }
            }
            "latent" => latent = ctx.bool_value(value, col)?,
            _ => unreachable!(),
        }
    }

    let expected_bottom = previous.last().map_or(INPUT, |l| l.name.as_str());
    let bottom = match bottom {
        None => expected_bottom.to_string(),
        Some(b) if b == expected_bottom => b,
        Some(b) if b == INPUT || names.contains(&b) => {
            return Err(ctx.syntax(
                1,
                format!("`{name}` must take `{expected_bottom}` as bottom; only single-chain nets are supported (got `{b}`)"),
            ));
        }
        Some(b) => {
            return Err(NetSpecError::DanglingBottom {
                line: ctx.line,
                name,
                bottom: b,
            })
        }
    };

    let missing = |field| NetSpecError::MissingField {
        layer: name.clone(),
        field,
    };
    let kind = match kind_word {
        "conv" | "deconv" => {
            let kernel = kernel.ok_or_else(|| missing("kernel"))?;
            let num_output = num_output.ok_or_else(|| missing("out"))?;
            if kind_word == "conv" {
                LayerKind::Conv { kernel, num_output }
            } else {
                LayerKind::Deconv { kernel, num_output }
            }
        }
        "fc" => LayerKind::Fc {
            num_output: num_output.ok_or_else(|| missing("out"))?,
        },
        "reshape" => LayerKind::Reshape {
            dims: dims.ok_or_else(|| missing("dims"))?,
        },
        _ => LayerKind::Sigmoid,
    };

    Ok(LayerSpec {
        name,
        kind,
        bottom,
        weight_filler: weight_filler.unwrap_or(if parametric {
            FillerSpec::Xavier
        } else {
            FillerSpec::default()
        }),
        bias_filler: bias_filler.unwrap_or_default(),
        activation,
        latent,
    })
}

fn parse_loss(
    ctx: &LineCtx,
    tokens: &[Token<'_>],
    eol: usize,
    layers: &[LayerSpec],
    names: &HashSet<String>,
) -> Result<LossSpec, NetSpecError> {
    let name = ctx.ident(tokens.get(1), "loss name", eol)?;
    if name == INPUT || names.contains(&name) {
        return Err(NetSpecError::DuplicateName {
            line: ctx.line,
            name,
        });
    }
    let kind_tok = tokens
        .get(2)
        .ok_or_else(|| ctx.syntax(eol, "expected loss kind"))?;
    let kind = match kind_tok.text {
        "sigmoid_cross_entropy" => LossKind::SigmoidCrossEntropy,
        "euclidean" => LossKind::Euclidean,
        other => {
            return Err(ctx.syntax(kind_tok.column, format!("unknown loss kind `{other}`")));
        }
    };
    let mut pred = None;
    let mut weight = 1.0;
    let mut sigmoid = false;
    for tok in &tokens[3..] {
        let (key, value) = split_field(ctx, tok)?;
        let col = tok.column + key.len() + 1;
        match key {
            "pred" => {
                if !layers.iter().any(|l| l.name == value) {
                    return Err(NetSpecError::DanglingBottom {
                        line: ctx.line,
                        name: name.clone(),
                        bottom: value.to_string(),
                    });
                }
                pred = Some(value.to_string());
            }
            "target" => {
                if value != INPUT {
                    return Err(ctx.syntax(col, "the only supported loss target is `input`"));
                }
            }
            "weight" => {
                weight = ctx.f64_value(value, col)?;
                if weight <= 0.0 {
                    return Err(ctx.syntax(col, "loss weight must be positive"));
                }
            }
            "sigmoid" if kind == LossKind::Euclidean => sigmoid = ctx.bool_value(value, col)?,
            _ => {
                return Err(ctx.syntax(tok.column, format!("field `{key}` is not valid for this loss")));
            }
        }
    }
    let pred_layer = pred.ok_or(NetSpecError::MissingField {
        layer: name.clone(),
        field: "pred",
    })?;
    Ok(LossSpec {
        name,
        kind,
        pred_layer,
        apply_sigmoid_to_pred: sigmoid,
        weight,
    })
}

// ---------------------------------------------------------------------------
// Auditing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub weights: usize,
    pub biases: usize,
}

impl LayerCount {
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub symmetric: bool,
    pub encoder_elements: usize,
    pub decoder_elements: usize,
    pub relative_gap: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub net_name: String,
    pub per_layer: Vec<LayerCount>,
    pub latent_layer: String,
    pub encoder_total: usize,
    pub decoder_total: usize,
    pub grand_total: usize,
    pub cae_size: usize,
    pub symmetric: bool,
    pub symmetry: SymmetryReport,
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "net {}", self.net_name)?;
        writeln!(f, "{:<16} {:>10} {:>8} {:>10}", "layer", "weights", "biases", "total")?;
        for l in &self.per_layer {
            writeln!(f, "{:<16} {:>10} {:>8} {:>10}", l.name, l.weights, l.biases, l.total())?;
        }
        writeln!(f, "latent layer: {}", self.latent_layer)?;
        writeln!(f, "encoder total: {}", self.encoder_total)?;
        writeln!(f, "decoder total: {}", self.decoder_total)?;
        writeln!(f, "grand total: {}", self.grand_total)?;
        writeln!(f, "CAE size: {}", self.cae_size)?;
        writeln!(
            f,
            "symmetric: {} (encoder {} / decoder {} elements, gap {:.2}%)",
            if self.symmetric { "yes" } else { "no" },
            self.symmetry.encoder_elements,
            self.symmetry.decoder_elements,
            self.symmetry.relative_gap * 100.0
        )?;
        for v in &self.symmetry.violations {
            writeln!(f, "  violation: {v}")?;
        }
        Ok(())
    }
}

/// Trainable weights and biases of one layer given its input shape.
pub fn layer_param_counts(kind: &LayerKind, input: Shape) -> (usize, usize) {
    match *kind {
        LayerKind::Conv { kernel, num_output } | LayerKind::Deconv { kernel, num_output } => {
            (kernel * kernel * input.c() * num_output, num_output)
        }
        LayerKind::Fc { num_output } => (input.per_sample() * num_output, num_output),
        LayerKind::Reshape { .. } | LayerKind::Sigmoid => (0, 0),
    }
}

/// Index of the code layer: an fc layer marked `latent=true`, else the
/// unique narrowest fc layer.
pub fn latent_index(net: &NetSpec) -> Result<usize, NetSpecError> {
    let marked: Vec<usize> = (0..net.layers.len()).filter(|&i| net.layers[i].latent).collect();
    match marked.as_slice() {
        [i] => return Ok(*i),
        [] => {}
        _ => return Err(NetSpecError::Audit("more than one layer is marked latent=true".into())),
    }
    let fcs: Vec<(usize, usize)> = net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l.kind {
            LayerKind::Fc { num_output } => Some((i, num_output)),
            _ => None,
        })
        .collect();
    let Some(min) = fcs.iter().map(|&(_, o)| o).min() else {
        return Err(NetSpecError::Audit(
            "no fully-connected layer to act as the latent code; mark one with latent=true".into(),
        ));
    };
    let narrowest: Vec<usize> = fcs.iter().filter(|&&(_, o)| o == min).map(|&(i, _)| i).collect();
    if narrowest.len() > 1 {
        let names: Vec<&str> = narrowest.iter().map(|&i| net.layers[i].name.as_str()).collect();
        return Err(NetSpecError::Audit(format!(
            "ambiguous latent layer: {} tie at width {min}; mark the code layer with latent=true",
            names.join(", ")
        )));
    }
    Ok(narrowest[0])
}

fn param_indices(net: &NetSpec) -> Vec<usize> {
    (0..net.layers.len()).filter(|&i| net.layers[i].kind.has_params()).collect()
}

/// Per-sample element counts of hidden parametric layers: everything with
/// weights except the final reconstruction layer.
fn hidden_elements(net: &NetSpec) -> Result<Vec<(usize, usize)>, NetSpecError> {
    let shapes = net.shapes()?;
    let params = param_indices(net);
    let Some((_, hidden)) = params.split_last() else {
        return Ok(Vec::new());
    };
    Ok(hidden.iter().map(|&i| (i, shapes[i].per_sample())).collect())
}

pub fn cae_size(net: &NetSpec) -> Result<usize, NetSpecError> {
    Ok(hidden_elements(net)?.iter().map(|&(_, e)| e).sum())
}

/// Relative encoder/decoder size gap accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 0.05;

pub fn check_symmetry(net: &NetSpec) -> Result<SymmetryReport, NetSpecError> {
    let latent = latent_index(net)?;
    let hidden = hidden_elements(net)?;
    let latent_elems = net.shapes()?[latent].per_sample();
    let encoder: Vec<(usize, usize)> = hidden.iter().copied().filter(|&(i, _)| i < latent).collect();
    let decoder: Vec<(usize, usize)> = hidden.iter().copied().filter(|&(i, _)| i > latent).collect();
    let encoder_elements: usize = encoder.iter().map(|&(_, e)| e).sum();
    let decoder_elements: usize = decoder.iter().map(|&(_, e)| e).sum();
    let denom = encoder_elements.max(decoder_elements).max(1) as f64;
    let relative_gap = encoder_elements.abs_diff(decoder_elements) as f64 / denom;

    let mut violations = Vec::new();
    if relative_gap > SYMMETRY_TOLERANCE {
        violations.push(format!(
            "encoder has {encoder_elements} hidden elements, decoder {decoder_elements} ({:.1}% apart, limit {:.0}%)",
            relative_gap * 100.0,
            SYMMETRY_TOLERANCE * 100.0
        ));
    }
    let name = |i: usize| net.layers[i].name.as_str();
    let mut enc_seq = encoder.clone();
    enc_seq.push((latent, latent_elems));
    for pair in enc_seq.windows(2) {
        let ((a, ea), (b, eb)) = (pair[0], pair[1]);
        if eb > ea {
            violations.push(format!(
                "encoder grows from {} ({ea}) to {} ({eb})",
                name(a),
                name(b)
            ));
        }
    }
    let mut dec_seq = vec![(latent, latent_elems)];
    dec_seq.extend(decoder.iter().copied());
    for pair in dec_seq.windows(2) {
        let ((a, ea), (b, eb)) = (pair[0], pair[1]);
        if eb < ea {
            violations.push(format!(
                "decoder shrinks from {} ({ea}) to {} ({eb})",
                name(a),
                name(b)
            ));
        }
    }
    Ok(SymmetryReport {
        symmetric: violations.is_empty(),
        encoder_elements,
        decoder_elements,
        relative_gap,
        violations,
    })
}

pub fn count_params(net: &NetSpec) -> Result<AuditReport, NetSpecError> {
    let shapes = net.shapes()?;
    let latent = latent_index(net)?;
    let mut per_layer = Vec::new();
    let mut encoder_total = 0;
    let mut decoder_total = 0;
    for (i, layer) in net.layers.iter().enumerate() {
        if !layer.kind.has_params() {
            continue;
        }
        let input = if i == 0 { net.input_shape } else { shapes[i - 1] };
        let (weights, biases) = layer_param_counts(&layer.kind, input);
        if i <= latent {
            encoder_total += weights + biases;
        } else {
            decoder_total += weights + biases;
        }
        per_layer.push(LayerCount {
            name: layer.name.clone(),
            weights,
            biases,
        });
    }
    let symmetry = check_symmetry(net)?;
    Ok(AuditReport {
        net_name: net.name.clone(),
        per_layer,
        latent_layer: net.layers[latent].name.clone(),
        encoder_total,
        decoder_total,
        grand_total: encoder_total + decoder_total,
        cae_size: cae_size(net)?,
        symmetric: symmetry.symmetric,
        symmetry,
    })
}

/// Dataset size over trainable parameters, rounded and rendered `R/1`.
pub fn data_ratio(dataset_elements: u64, report: &AuditReport) -> Result<String, NetSpecError> {
    ratio_line(dataset_elements, report.grand_total as u64)
}

/// [`data_ratio`] for a bare parameter count.
pub fn ratio_line(dataset_elements: u64, params: u64) -> Result<String, NetSpecError> {
    if params == 0 {
        return Err(NetSpecError::Audit("cannot form a data ratio for a net with no parameters".into()));
    }
    if dataset_elements == 0 {
        return Err(NetSpecError::Audit("dataset element count must be positive".into()));
    }
    let ratio = (dataset_elements as f64 / params as f64).round();
    Ok(format!("{ratio}/1"))
}
