//! The classifier under assurance and its accuracy oracle.
//!
//! The network is `input -> affine -> per-unit normalization -> ReLU ->
//! affine -> softmax`. At inference the normalization layer uses the running
//! mean and variance accumulated during training:
//!
//! ```text
//! h_j = scale_j * (z_j - running_mean_j) / sqrt(running_variance_j + eps) + shift_j
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::AssuranceSet;
use crate::distortion::{apply_distortion, DistortionParams, Image};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "maid-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// `input_dim x hidden_dim`, row-major.
    pub layer1_weight: Vec<f64>,
    pub layer1_bias: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_variance: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    /// `hidden_dim x class_count`, row-major.
    pub layer2_weight: Vec<f64>,
    pub layer2_bias: Vec<f64>,
}

impl Model {
    /// A model with every weight zero, unit running variance and unit scale.
    pub fn zeros(input_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Model {
            input_dim,
            hidden_dim,
            class_count,
            seed: 0,
            epsilon: 1e-5,
            layer1_weight: vec![0.0; input_dim * hidden_dim],
            layer1_bias: vec![0.0; hidden_dim],
            running_mean: vec![0.0; hidden_dim],
            running_variance: vec![1.0; hidden_dim],
            scale: vec![1.0; hidden_dim],
            shift: vec![0.0; hidden_dim],
            layer2_weight: vec![0.0; hidden_dim * class_count],
            layer2_bias: vec![0.0; class_count],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.class_count < 2 {
            return Err(Error::input(
                "model needs positive dimensions and at least two classes",
            ));
        }
        let h = self.hidden_dim;
        let checks: [(&str, &[f64], usize); 8] = [
            ("layer1.weight", &self.layer1_weight, self.input_dim * h),
            ("layer1.bias", &self.layer1_bias, h),
            ("norm.running_mean", &self.running_mean, h),
            ("norm.running_variance", &self.running_variance, h),
            ("norm.scale", &self.scale, h),
            ("norm.shift", &self.shift, h),
            ("layer2.weight", &self.layer2_weight, h * self.class_count),
            ("layer2.bias", &self.layer2_bias, self.class_count),
        ];
        for (name, values, len) in checks {
            if values.len() != len {
                return Err(Error::input(format!(
                    "{name} has {} values, expected {len}",
                    values.len()
                )));
            }
            if !values.iter().all(|v| v.is_finite()) {
                return Err(Error::input(format!("{name} has non-finite values")));
            }
        }
        if self.running_variance.iter().any(|v| *v < 0.0) {
            return Err(Error::input("negative running variance"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::input("normalization epsilon must be non-negative"));
        }
        Ok(())
    }

    /// Inputs of the normalization layer, `z = x W1 + b1`.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.preactivations(x))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::input(format!(
                "input of length {} for a model expecting {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden_dim;
        let mut z = self.layer1_bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.layer1_weight[i * h..(i + 1) * h];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        z
    }

    /// Class probabilities for a flattened input in inference mode.
    pub fn predict_proba_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x))
    }

    pub fn predict_proba(&self, img: &Image) -> Result<Vec<f64>> {
        self.predict_proba_vec(img.pixels())
    }

    pub fn predict_class(&self, img: &Image) -> Result<usize> {
        Ok(argmax(&self.predict_proba(img)?))
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = self.preactivations(x);
        let mut logits = self.layer2_bias.clone();
        let c = self.class_count;
        for (j, zj) in z.iter().enumerate() {
            let norm =
                (zj - self.running_mean[j]) / (self.running_variance[j] + self.epsilon).sqrt();
            let a = (self.scale[j] * norm + self.shift[j]).max(0.0);
            if a == 0.0 {
                continue;
            }
            for (l, w) in logits
                .iter_mut()
                .zip(&self.layer2_weight[j * c..(j + 1) * c])
            {
                *l += a * w;
            }
        }
        softmax(&logits)
    }

    /// Writes the model in its text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format {FORMAT_NAME}");
        let _ = writeln!(s, "version {FORMAT_VERSION}");
        let _ = writeln!(s, "input_dim {}", self.input_dim);
        let _ = writeln!(s, "hidden_dim {}", self.hidden_dim);
        let _ = writeln!(s, "class_count {}", self.class_count);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "norm.epsilon {:.16e}", self.epsilon);
        for (key, values) in self.arrays() {
            s.push_str(key);
            for v in values {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    fn arrays(&self) -> [(&'static str, &Vec<f64>); 8] {
        [
            ("layer1.weight", &self.layer1_weight),
            ("layer1.bias", &self.layer1_bias),
            ("norm.running_mean", &self.running_mean),
            ("norm.running_variance", &self.running_variance),
            ("norm.scale", &self.scale),
            ("norm.shift", &self.shift),
            ("layer2.weight", &self.layer2_weight),
            ("layer2.bias", &self.layer2_bias),
        ]
    }

    pub fn from_text(text: &str) -> Result<Self> {
        parse_model(text)
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn import(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(e.valid_up_to() as u64, "model file is not UTF-8"))?;
        parse_model(text)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `set` classified correctly after distorting every image.
pub fn evaluate_accuracy(
    model: &Model,
    set: &AssuranceSet,
    params: &DistortionParams,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::input("cannot evaluate accuracy on an empty set"));
    }
    Ok(count_correct(model, set, params)? as f64 / set.len() as f64)
}

pub(crate) fn count_correct(
    model: &Model,
    set: &AssuranceSet,
    params: &DistortionParams,
) -> Result<usize> {
    let mut correct = 0;
    for (img, label) in set.iter() {
        let distorted = apply_distortion(img, params)?;
        if model.predict_class(&distorted)? == label {
            correct += 1;
        }
    }
    Ok(correct)
}

const SCALAR_KEYS: [&str; 7] = [
    "format",
    "version",
    "input_dim",
    "hidden_dim",
    "class_count",
    "seed",
    "norm.epsilon",
];
const ARRAY_KEYS: [&str; 8] = [
    "layer1.weight",
    "layer1.bias",
    "norm.running_mean",
    "norm.running_variance",
    "norm.scale",
    "norm.shift",
    "layer2.weight",
    "layer2.bias",
];

struct Field<'a> {
    offset: usize,
    tokens: Vec<(usize, &'a str)>,
}

fn parse_model(text: &str) -> Result<Model> {
    let mut fields: std::collections::HashMap<&str, Field> = Default::default();
    let mut line_start = 0;
    let mut ended = false;
    for line in text.split_inclusive('\n') {
        let offset = line_start;
        line_start += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() || body.trim_start().starts_with('#') {
            continue;
        }
        if ended {
            return Err(Error::format(offset as u64, "content after `end`"));
        }
        if body.trim() == "end" {
            ended = true;
            continue;
        }
        let mut tokens = Vec::new();
        let mut pos = 0;
        for tok in body.split(' ') {
            if !tok.is_empty() {
                tokens.push((offset + pos, tok));
            }
            pos += tok.len() + 1;
        }
        let (_, key) = tokens.remove(0);
        if !SCALAR_KEYS.contains(&key) && !ARRAY_KEYS.contains(&key) {
            return Err(Error::format(offset as u64, format!("unknown key `{key}`")));
        }
        if fields.insert(key, Field { offset, tokens }).is_some() {
            return Err(Error::format(
                offset as u64,
                format!("duplicate key `{key}`"),
            ));
        }
    }
    let end = text.len() as u64;
    if !ended {
        return Err(Error::format(end, "missing `end` line; file truncated?"));
    }

    let scalar = |key: &str| -> Result<(usize, &str)> {
        let f = fields
            .get(key)
            .ok_or_else(|| Error::format(end, format!("missing key `{key}`")))?;
        match f.tokens.as_slice() {
            [one] => Ok(*one),
            _ => Err(Error::format(
                f.offset as u64,
                format!("`{key}` takes exactly one value"),
            )),
        }
    };
    let integer = |key: &str| -> Result<u64> {
        let (off, tok) = scalar(key)?;
        tok.parse()
            .map_err(|_| Error::format(off as u64, format!("`{key}`: `{tok}` is not an integer")))
    };

    let (off, name) = scalar("format")?;
    if name != FORMAT_NAME {
        return Err(Error::format(
            off as u64,
            format!("format `{name}`, expected `{FORMAT_NAME}`"),
        ));
    }
    let version = integer("version")?;
    if version != FORMAT_VERSION as u64 {
        let (off, _) = scalar("version")?;
        return Err(Error::format(
            off as u64,
            format!("unsupported version {version}"),
        ));
    }
    let input_dim = integer("input_dim")? as usize;
    let hidden_dim = integer("hidden_dim")? as usize;
    let class_count = integer("class_count")? as usize;
    let seed = integer("seed")?;
    let (off, eps) = scalar("norm.epsilon")?;
    let epsilon: f64 = eps
        .parse()
        .map_err(|_| Error::format(off as u64, format!("`{eps}` is not a number")))?;

    let array = |key: &str, len: usize| -> Result<Vec<f64>> {
        let f = fields
            .get(key)
            .ok_or_else(|| Error::format(end, format!("missing key `{key}`")))?;
        if f.tokens.len() != len {
            return Err(Error::format(
                f.offset as u64,
                format!("`{key}` has {} values, expected {len}", f.tokens.len()),
            ));
        }
        f.tokens
            .iter()
            .map(|(off, tok)| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::format(*off as u64, format!("`{tok}` is not a finite number"))
                    })
            })
            .collect()
    };

    let h = hidden_dim;
    let model = Model {
        input_dim,
        hidden_dim,
        class_count,
        seed,
        epsilon,
        layer1_weight: array("layer1.weight", input_dim * h)?,
        layer1_bias: array("layer1.bias", h)?,
        running_mean: array("norm.running_mean", h)?,
        running_variance: array("norm.running_variance", h)?,
        scale: array("norm.scale", h)?,
        shift: array("norm.shift", h)?,
        layer2_weight: array("layer2.weight", h * class_count)?,
        layer2_bias: array("layer2.bias", class_count)?,
    };
    model
        .validate()
        .map_err(|e| Error::format(0, e.to_string()))?;
    Ok(model)
}
