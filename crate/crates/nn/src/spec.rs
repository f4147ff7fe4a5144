//! Declarative layer tables with static shape inference.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::layers::{ActivationKind, ConvGeometry, Padding};
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    FullyConnected,
    BatchNorm,
    Activation,
    Reshape,
    MaxPool,
    Gru,
    Attention,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::ConvTranspose => "conv-transpose",
            LayerKind::FullyConnected => "fully-connected",
            LayerKind::BatchNorm => "batch-norm",
            LayerKind::Activation => "activation",
            LayerKind::Reshape => "reshape",
            LayerKind::MaxPool => "max-pool",
            LayerKind::Gru => "gru",
            LayerKind::Attention => "attention",
        }
    }

    /// Layers that run over `[S, T, F]` sequences rather than single frames.
    pub fn is_temporal(self) -> bool {
        matches!(self, LayerKind::Gru | LayerKind::Attention)
    }
}

/// One row of a layer table. Fields not meaningful for `kind` must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// `[kh, kw, in, out]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_shape: Option<[usize; 4]>,
    /// `[1, s, s, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<Padding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    /// Per-item target shape of a reshape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_shape: Option<Vec<usize>>,
    /// Attention window length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl LayerSpec {
    fn bare(kind: LayerKind) -> Self {
        Self {
            kind,
            filter_shape: None,
            stride: None,
            padding: None,
            units: None,
            activation: None,
            target_shape: None,
            window: None,
        }
    }

    pub fn conv(filter: [usize; 4], stride: usize, padding: Padding) -> Self {
        Self {
            filter_shape: Some(filter),
            stride: Some([1, stride, stride, 1]),
            padding: Some(padding),
            ..Self::bare(LayerKind::Conv)
        }
    }

    pub fn conv_transpose(filter: [usize; 4], stride: usize, padding: Padding) -> Self {
        Self {
            kind: LayerKind::ConvTranspose,
            ..Self::conv(filter, stride, padding)
        }
    }

    pub fn dense(units: usize) -> Self {
        Self {
            units: Some(units),
            ..Self::bare(LayerKind::FullyConnected)
        }
    }

    pub fn batch_norm() -> Self {
        Self::bare(LayerKind::BatchNorm)
    }

    pub fn activation(a: ActivationKind) -> Self {
        Self {
            activation: Some(a),
            ..Self::bare(LayerKind::Activation)
        }
    }

    pub fn reshape(target: &[usize]) -> Self {
        Self {
            target_shape: Some(target.to_vec()),
            ..Self::bare(LayerKind::Reshape)
        }
    }

    pub fn max_pool() -> Self {
        Self::bare(LayerKind::MaxPool)
    }

    pub fn gru(units: usize) -> Self {
        Self {
            units: Some(units),
            ..Self::bare(LayerKind::Gru)
        }
    }

    pub fn attention(score_units: usize, window: usize) -> Self {
        Self {
            units: Some(score_units),
            window: Some(window),
            ..Self::bare(LayerKind::Attention)
        }
    }

    /// Uniform stride from the `[1, s, s, 1]` tuple.
    pub fn stride_value(&self) -> usize {
        self.stride.map(|s| s[1]).unwrap_or(1)
    }

    fn check_fields(&self, i: usize) -> Result<(), NnError> {
        let has = [
            ("filter_shape", self.filter_shape.is_some()),
            ("stride", self.stride.is_some()),
            ("padding", self.padding.is_some()),
            ("units", self.units.is_some()),
            ("activation", self.activation.is_some()),
            ("target_shape", self.target_shape.is_some()),
            ("window", self.window.is_some()),
        ];
        let wanted: &[&str] = match self.kind {
            LayerKind::Conv | LayerKind::ConvTranspose => &["filter_shape", "stride", "padding"],
            LayerKind::FullyConnected | LayerKind::Gru => &["units"],
            LayerKind::BatchNorm | LayerKind::MaxPool => &[],
            LayerKind::Activation => &["activation"],
            LayerKind::Reshape => &["target_shape"],
            LayerKind::Attention => &["units", "window"],
        };
        for (name, present) in has {
            let want = wanted.contains(&name);
            if present != want {
                return Err(NnError::Spec(format!(
                    "layer {i} ({}): field {name} must be {}",
                    self.kind.name(),
                    if want { "set" } else { "absent" }
                )));
            }
        }
        if let Some(s) = self.stride {
            if s[0] != 1 || s[3] != 1 || s[1] != s[2] || s[1] == 0 {
                return Err(NnError::Spec(format!("layer {i}: unsupported stride {s:?}")));
            }
        }
        if self.filter_shape.is_some_and(|f| f.contains(&0))
            || self.units == Some(0)
            || self.window == Some(0)
        {
            return Err(NnError::Spec(format!("layer {i}: zero-sized dimension")));
        }
        Ok(())
    }
}

/// A named slice of the final layer's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub size: usize,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Per-item input shape (no batch axis).
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub output_heads: Vec<HeadSpec>,
}

fn dense_params(i: usize, u: usize) -> usize {
    i * u + u
}

impl ModelSpec {
    /// Per-item output shape after every layer. Fails on any shape that does
    /// not compose.
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shape = self.input_shape.clone();
        if shape.is_empty() || shape.contains(&0) {
            return Err(NnError::Spec(format!("bad input shape {shape:?}")));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut seen_temporal = false;
        for (i, l) in self.layers.iter().enumerate() {
            l.check_fields(i)?;
            let err = |msg: String| NnError::Spec(format!("layer {i} ({}): {msg}", l.kind.name()));
            if l.kind.is_temporal() {
                seen_temporal = true;
            } else if seen_temporal && !matches!(l.kind, LayerKind::FullyConnected | LayerKind::Activation) {
                return Err(err("only dense and activation layers may follow recurrent layers".into()));
            }
            shape = match l.kind {
                LayerKind::Conv | LayerKind::ConvTranspose => {
                    let [kh, kw, cin, cout] = l.filter_shape.unwrap();
                    let [h, w, c] = shape[..] else {
                        return Err(err(format!("needs [H, W, C] input, got {shape:?}")));
                    };
                    if c != cin {
                        return Err(err(format!("filter expects {cin} input channels, got {c}")));
                    }
                    let s = l.stride_value();
                    let p = l.padding.unwrap();
                    if l.kind == LayerKind::Conv {
                        let g = ConvGeometry::conv(h, w, kh, kw, s, p)
                            .ok_or_else(|| err(format!("{kh}x{kw} kernel does not fit {h}x{w}")))?;
                        vec![g.small_h, g.small_w, cout]
                    } else {
                        let g = ConvGeometry::transpose(h, w, kh, kw, s, p);
                        vec![g.large_h, g.large_w, cout]
                    }
                }
                LayerKind::FullyConnected | LayerKind::Gru => {
                    if shape.len() != 1 {
                        return Err(err(format!("needs a flat input, got {shape:?}")));
                    }
                    vec![l.units.unwrap()]
                }
                LayerKind::Attention => {
                    if shape.len() != 1 {
                        return Err(err(format!("needs a flat input, got {shape:?}")));
                    }
                    vec![2 * shape[0]]
                }
                LayerKind::BatchNorm | LayerKind::Activation => shape,
                LayerKind::Reshape => {
                    let t = l.target_shape.clone().unwrap();
                    if t.iter().product::<usize>() != shape.iter().product::<usize>() {
                        return Err(err(format!("cannot reshape {shape:?} to {t:?}")));
                    }
                    t
                }
                LayerKind::MaxPool => {
                    let [h, w, c] = shape[..] else {
                        return Err(err(format!("needs [H, W, C] input, got {shape:?}")));
                    };
                    if h < 2 || w < 2 {
                        return Err(err(format!("cannot pool {h}x{w}")));
                    }
                    vec![h / 2, w / 2, c]
                }
            };
            out.push(shape.clone());
        }
        let heads: usize = self.output_heads.iter().map(|h| h.size).sum();
        if shape.iter().product::<usize>() != heads {
            return Err(NnError::Spec(format!(
                "output shape {shape:?} does not match heads totalling {heads}"
            )));
        }
        Ok(out)
    }

    /// Trainable parameter count per layer.
    pub fn layer_parameter_counts(&self) -> Result<Vec<usize>, NnError> {
        let shapes = self.infer_shapes()?;
        let mut prev = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (l, s) in self.layers.iter().zip(&shapes) {
            out.push(match l.kind {
                LayerKind::Conv | LayerKind::ConvTranspose => {
                    let [kh, kw, cin, cout] = l.filter_shape.unwrap();
                    kh * kw * cin * cout + cout
                }
                LayerKind::FullyConnected => dense_params(prev[0], s[0]),
                LayerKind::BatchNorm => 2 * prev.last().unwrap(),
                LayerKind::Gru => {
                    let (f, h) = (prev[0], s[0]);
                    f * 3 * h + 3 * h * h + 3 * h
                }
                LayerKind::Attention => {
                    let (h, a) = (prev[0], l.units.unwrap());
                    h * a + 2 * a
                }
                LayerKind::Activation | LayerKind::Reshape | LayerKind::MaxPool => 0,
            });
            prev = s.clone();
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize, NnError> {
        Ok(self.layer_parameter_counts()?.iter().sum())
    }

    /// Index of the first recurrent layer, if any.
    pub fn first_temporal(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.kind.is_temporal())
    }

    /// Aligned text table of the layers with their output shapes.
    pub fn render(&self) -> Result<String, NnError> {
        let shapes = self.infer_shapes()?;
        let counts = self.layer_parameter_counts()?;
        let dims = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut rows = vec![[
            "#".to_string(),
            "layer".into(),
            "filter".into(),
            "stride".into(),
            "padding".into(),
            "detail".into(),
            "output".into(),
            "params".into(),
        ]];
        for (i, ((l, s), c)) in self.layers.iter().zip(&shapes).zip(&counts).enumerate() {
            let detail = match l.kind {
                LayerKind::Activation => l.activation.unwrap().name().to_string(),
                LayerKind::FullyConnected | LayerKind::Gru => format!("units={}", l.units.unwrap()),
                LayerKind::Attention => format!("units={} length={}", l.units.unwrap(), l.window.unwrap()),
                _ => String::new(),
            };
            rows.push([
                i.to_string(),
                l.kind.name().into(),
                l.filter_shape.map(|f| format!("[{}]", dims(&f))).unwrap_or_default(),
                l.stride.map(|f| format!("[{}]", dims(&f))).unwrap_or_default(),
                l.padding
                    .map(|p| match p {
                        Padding::Same => "SAME",
                        Padding::Valid => "VALID",
                    })
                    .unwrap_or_default()
                    .into(),
                detail,
                format!("[{}]", dims(s)),
                c.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..8).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap()).collect();
        let mut text = format!("{}  input [{}]\n", self.name, dims(&self.input_shape));
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            writeln!(text, "{}", line.join("  ").trim_end()).unwrap();
        }
        let heads: Vec<String> = self
            .output_heads
            .iter()
            .map(|h| format!("{}:{}({})", h.name, h.size, h.activation.name()))
            .collect();
        writeln!(text, "heads {}  total params {}", heads.join(" "), counts.iter().sum::<usize>()).unwrap();
        Ok(text)
    }
}

pub const LATENT_DIM: usize = 100;

fn bn_act(layers: &mut Vec<LayerSpec>, a: ActivationKind) {
    layers.push(LayerSpec::batch_norm());
    layers.push(LayerSpec::activation(a));
}

fn disc_heads() -> Vec<HeadSpec> {
    vec![
        HeadSpec { name: "va".into(), size: 2, activation: ActivationKind::Linear },
        HeadSpec { name: "aus".into(), size: 8, activation: ActivationKind::Sigmoid },
        HeadSpec { name: "fake".into(), size: 1, activation: ActivationKind::Sigmoid },
    ]
}

/// 100-d latent to a 32x32x3 image. The first stage projects 1x1 to 4x4 with
/// a VALID 4x4 transposed convolution so the stride-2 chain reaches 32.
pub fn generator_c1() -> ModelSpec {
    use ActivationKind::*;
    let mut layers = vec![
        LayerSpec::reshape(&[1, 1, LATENT_DIM]),
        LayerSpec::conv_transpose([4, 4, LATENT_DIM, 384], 1, Padding::Valid),
    ];
    bn_act(&mut layers, Relu);
    layers.push(LayerSpec::conv_transpose([4, 4, 384, 128], 2, Padding::Same));
    bn_act(&mut layers, Relu);
    layers.push(LayerSpec::conv_transpose([4, 4, 128, 64], 2, Padding::Same));
    bn_act(&mut layers, Relu);
    layers.push(LayerSpec::conv_transpose([6, 6, 64, 3], 2, Padding::Same));
    layers.push(LayerSpec::activation(Tanh));
    ModelSpec {
        name: "generator-c1".into(),
        input_shape: vec![LATENT_DIM],
        layers,
        output_heads: vec![HeadSpec { name: "image".into(), size: 32 * 32 * 3, activation: Tanh }],
    }
}

pub fn discriminator_c1() -> ModelSpec {
    use ActivationKind::*;
    let mut layers = Vec::new();
    for f in [[5, 5, 3, 64], [5, 5, 64, 128], [5, 5, 128, 256]] {
        layers.push(LayerSpec::conv(f, 2, Padding::Same));
        bn_act(&mut layers, LeakyRelu);
    }
    layers.push(LayerSpec::reshape(&[4 * 4 * 256]));
    layers.push(LayerSpec::dense(11));
    ModelSpec {
        name: "discriminator-c1".into(),
        input_shape: vec![32, 32, 3],
        layers,
        output_heads: disc_heads(),
    }
}

/// 100-d latent to a 96x96x3 image with `kernel x kernel` filters.
pub fn generator_c2(kernel: usize) -> ModelSpec {
    use ActivationKind::*;
    let mut layers = vec![LayerSpec::dense(6 * 6 * 1024), LayerSpec::reshape(&[6, 6, 1024])];
    bn_act(&mut layers, Relu);
    let chans = [1024, 512, 256, 128, 3];
    for (i, w) in chans.windows(2).enumerate() {
        layers.push(LayerSpec::conv_transpose([kernel, kernel, w[0], w[1]], 2, Padding::Same));
        if i < 3 {
            bn_act(&mut layers, Relu);
        }
    }
    layers.push(LayerSpec::activation(Tanh));
    ModelSpec {
        name: format!("generator-c2-k{kernel}"),
        input_shape: vec![LATENT_DIM],
        layers,
        output_heads: vec![HeadSpec { name: "image".into(), size: 96 * 96 * 3, activation: Tanh }],
    }
}

pub fn discriminator_c2(kernel: usize) -> ModelSpec {
    use ActivationKind::*;
    let mut layers = Vec::new();
    let chans = [3, 64, 128, 256, 512];
    for w in chans.windows(2) {
        layers.push(LayerSpec::conv([kernel, kernel, w[0], w[1]], 2, Padding::Same));
        bn_act(&mut layers, LeakyRelu);
    }
    layers.push(LayerSpec::reshape(&[6 * 6 * 512]));
    layers.push(LayerSpec::dense(11));
    ModelSpec {
        name: format!("discriminator-c2-k{kernel}"),
        input_shape: vec![96, 96, 3],
        layers,
        output_heads: disc_heads(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Tiny,
    VggStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultitaskArch {
    pub backbone: Backbone,
    /// Square input side.
    pub input_size: usize,
    pub feature_units: usize,
    pub gru_units: usize,
    pub attention_units: usize,
    pub attention_length: usize,
}

impl Default for MultitaskArch {
    fn default() -> Self {
        Self {
            backbone: Backbone::Tiny,
            input_size: 96,
            feature_units: 128,
            gru_units: 128,
            attention_units: 64,
            attention_length: 32,
        }
    }
}

/// Per-frame CNN features, a GRU over each sequence, windowed attention and a
/// 9-way head (2 linear VA outputs, 7 softmax expression scores).
pub fn multitask_cnn_rnn(arch: &MultitaskArch) -> ModelSpec {
    use ActivationKind::*;
    let mut layers = Vec::new();
    let mut side = arch.input_size;
    let mut chans = 3;
    match arch.backbone {
        Backbone::Tiny => {
            for c in [16, 32, 64] {
                layers.push(LayerSpec::conv([3, 3, chans, c], 2, Padding::Same));
                bn_act(&mut layers, Relu);
                chans = c;
                side = side.div_ceil(2);
            }
        }
        Backbone::VggStyle => {
            for (reps, c) in [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)] {
                for _ in 0..reps {
                    layers.push(LayerSpec::conv([3, 3, chans, c], 1, Padding::Same));
                    bn_act(&mut layers, Relu);
                    chans = c;
                }
                layers.push(LayerSpec::max_pool());
                side /= 2;
            }
        }
    }
    layers.push(LayerSpec::reshape(&[side * side * chans]));
    layers.push(LayerSpec::dense(arch.feature_units));
    layers.push(LayerSpec::activation(Relu));
    layers.push(LayerSpec::gru(arch.gru_units));
    layers.push(LayerSpec::attention(arch.attention_units, arch.attention_length));
    layers.push(LayerSpec::dense(9));
    let name = match arch.backbone {
        Backbone::Tiny => "multitask-tiny",
        Backbone::VggStyle => "multitask-vgg",
    };
    ModelSpec {
        name: name.into(),
        input_shape: vec![arch.input_size, arch.input_size, 3],
        layers,
        output_heads: vec![
            HeadSpec { name: "va".into(), size: 2, activation: Linear },
            HeadSpec { name: "expression".into(), size: 7, activation: Softmax },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_infer() {
        for s in [
            generator_c1(),
            discriminator_c1(),
            generator_c2(5),
            generator_c2(7),
            discriminator_c2(5),
            discriminator_c2(7),
            multitask_cnn_rnn(&MultitaskArch::default()),
        ] {
            s.infer_shapes().unwrap();
        }
    }

    #[test]
    fn generator_doubling_chain() {
        let shapes = generator_c2(7).infer_shapes().unwrap();
        let sides: Vec<usize> = shapes.iter().filter(|s| s.len() == 3).map(|s| s[0]).collect();
        assert!(sides.windows(2).all(|w| w[1] == w[0] || w[1] == 2 * w[0]));
        assert_eq!(sides.first(), Some(&6));
        assert_eq!(sides.last(), Some(&96));
    }

    #[test]
    fn kernel_variants_differ_only_in_filters() {
        let (a, b) = (generator_c2(5), generator_c2(7));
        for (x, y) in a.layers.iter().zip(&b.layers) {
            let mut y = y.clone();
            if let (Some(fx), Some(fy)) = (x.filter_shape, y.filter_shape.as_mut()) {
                assert_eq!(fx[2..], fy[2..]);
                fy[0] = fx[0];
                fy[1] = fx[1];
            }
            assert_eq!(x, &y);
        }
    }

    #[test]
    fn extra_field_rejected() {
        let mut s = discriminator_c1();
        s.layers[1].units = Some(3);
        assert!(s.infer_shapes().is_err());
    }
}
