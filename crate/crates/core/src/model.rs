//! Model configuration, parameter containers and checkpoints.
//!
//! Parameters live in [`Weights`], a structure generic over the parameter
//! handle: `Weights<Tensor>` holds values, `Weights<Var>` the same values
//! bound onto a [`Tape`]. Every traversal goes through [`Weights::visit`] so
//! naming and ordering are defined once.

use std::fs;
use std::path::Path;

use memvo_tensor::{votb, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, json_err, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "memvo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const ENCODER_LAYERS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayerSpec {
    const fn same(out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn output_extent(&self, extent: usize) -> usize {
        (extent + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// The nine-layer pairwise encoder and the image size it expects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: Vec<ConvLayerSpec>,
    pub height: usize,
    pub width: usize,
}

impl EncoderConfig {
    pub fn desk() -> Self {
        let channels = [8, 8, 16, 16, 32, 32, 64, 64, 64];
        let strides = [2, 2, 2, 1, 2, 1, 1, 1, 1];
        let kernels = [7, 5, 3, 3, 3, 3, 3, 3, 3];
        Self::from_columns(&channels, &kernels, &strides, 64, 64)
    }

    /// Full-width layer stack at 1280×384, for shape bookkeeping.
    pub fn kitti_shape() -> Self {
        let channels = [64, 128, 256, 256, 512, 512, 512, 512, 1024];
        let strides = [2, 2, 2, 1, 2, 1, 2, 1, 2];
        let kernels = [7, 5, 5, 3, 3, 3, 3, 3, 3];
        Self::from_columns(&channels, &kernels, &strides, 384, 1280)
    }

    fn from_columns(
        channels: &[usize],
        kernels: &[usize],
        strides: &[usize],
        height: usize,
        width: usize,
    ) -> Self {
        let layers = channels
            .iter()
            .zip(kernels)
            .zip(strides)
            .map(|((&c, &k), &s)| ConvLayerSpec::same(c, k, s))
            .collect();
        Self {
            layers,
            height,
            width,
        }
    }

    pub fn cumulative_stride(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != ENCODER_LAYERS {
            return Err(invalid(format!(
                "encoder needs exactly {ENCODER_LAYERS} layers, got {}",
                self.layers.len()
            )));
        }
        let s = self.cumulative_stride();
        if s == 0 || !self.height.is_multiple_of(s) || !self.width.is_multiple_of(s) {
            return Err(invalid(format!(
                "cumulative stride {s} must divide the input extents {}×{}",
                self.height, self.width
            )));
        }
        let (mut h, mut w) = (self.height, self.width);
        for (i, l) in self.layers.iter().enumerate() {
            if l.kernel == 0 || l.stride == 0 || l.out_channels == 0 {
                return Err(invalid(format!("encoder layer {} has a zero extent", i + 1)));
            }
            if l.kernel > h + 2 * l.padding || l.kernel > w + 2 * l.padding {
                return Err(invalid(format!(
                    "encoder layer {} kernel exceeds its input",
                    i + 1
                )));
            }
            h = l.output_extent(h);
            w = l.output_extent(w);
        }
        Ok(())
    }

    /// `(C, H', W')` of the encoded feature map.
    pub fn output_shape(&self) -> [usize; 3] {
        let (h, w) = self.layers.iter().fold((self.height, self.width), |(h, w), l| {
            (l.output_extent(h), l.output_extent(w))
        });
        [self.layers.last().map_or(6, |l| l.out_channels), h, w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    KittiShape,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::KittiShape => "kitti-shape",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "kitti-shape" => Ok(Preset::KittiShape),
            other => Err(invalid(format!(
                "unknown preset `{other}` (expected desk or kitti-shape)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub encoder: EncoderConfig,
    /// Channels of both recurrent units (and of the fusion output).
    pub hidden_channels: usize,
    /// Spatial kernel of the recurrent-unit convolutions.
    pub cell_kernel: usize,
}

impl ModelConfig {
    pub fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                preset,
                encoder: EncoderConfig::desk(),
                hidden_channels: 64,
                cell_kernel: 3,
            },
            Preset::KittiShape => Self {
                preset,
                encoder: EncoderConfig::kitti_shape(),
                hidden_channels: 1024,
                cell_kernel: 3,
            },
        }
    }

    pub fn feature_channels(&self) -> usize {
        self.encoder.output_shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.hidden_channels == 0 || self.cell_kernel.is_multiple_of(2) {
            return Err(invalid(
                "hidden channels must be positive and the cell kernel odd",
            ));
        }
        if self.hidden_channels != self.feature_channels() {
            // Attention compares refining outputs against both memory slots
            // and encoded observations, so all three must share a shape.
            return Err(invalid(format!(
                "hidden channels ({}) must equal encoder output channels ({})",
                self.hidden_channels,
                self.feature_channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<P> {
    pub weight: P,
    pub bias: P,
}

/// Gate layout along the output-channel axis: input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstm<P> {
    pub wx: P,
    pub wh: P,
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Se3Head<P> {
    pub weight: P,
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<P> {
    pub encoder: Vec<Conv<P>>,
    pub tracking_cell: ConvLstm<P>,
    pub tracking_head: Se3Head<P>,
    pub fusion: [Conv<P>; 2],
    pub refining_cell: ConvLstm<P>,
    pub refining_head: Se3Head<P>,
}

impl<P> Weights<P> {
    /// Visit every parameter in canonical order with its checkpoint name.
    pub fn visit(&self, mut f: impl FnMut(&str, &P)) {
        for (i, c) in self.encoder.iter().enumerate() {
            f(&format!("encoder.conv{}.weight", i + 1), &c.weight);
            f(&format!("encoder.conv{}.bias", i + 1), &c.bias);
        }
        visit_cell("tracking.cell", &self.tracking_cell, &mut f);
        f("tracking.head.weight", &self.tracking_head.weight);
        f("tracking.head.bias", &self.tracking_head.bias);
        for (i, c) in self.fusion.iter().enumerate() {
            f(&format!("refining.fuse{}.weight", i + 1), &c.weight);
            f(&format!("refining.fuse{}.bias", i + 1), &c.bias);
        }
        visit_cell("refining.cell", &self.refining_cell, &mut f);
        f("refining.head.weight", &self.refining_head.weight);
        f("refining.head.bias", &self.refining_head.bias);
    }

    /// Structure-preserving map, called in [`Weights::visit`] order.
    pub fn map<Q>(&self, mut f: impl FnMut(&str, &P) -> Q) -> Weights<Q> {
        let mut conv = |prefix: &str, c: &Conv<P>| Conv {
            weight: f(&format!("{prefix}.weight"), &c.weight),
            bias: f(&format!("{prefix}.bias"), &c.bias),
        };
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, c)| conv(&format!("encoder.conv{}", i + 1), c))
            .collect();
        let tracking_cell = ConvLstm {
            wx: f("tracking.cell.wx", &self.tracking_cell.wx),
            wh: f("tracking.cell.wh", &self.tracking_cell.wh),
            bias: f("tracking.cell.bias", &self.tracking_cell.bias),
        };
        let tracking_head = Se3Head {
            weight: f("tracking.head.weight", &self.tracking_head.weight),
            bias: f("tracking.head.bias", &self.tracking_head.bias),
        };
        let mut conv = |prefix: &str, c: &Conv<P>| Conv {
            weight: f(&format!("{prefix}.weight"), &c.weight),
            bias: f(&format!("{prefix}.bias"), &c.bias),
        };
        let fusion = [
            conv("refining.fuse1", &self.fusion[0]),
            conv("refining.fuse2", &self.fusion[1]),
        ];
        let refining_cell = ConvLstm {
            wx: f("refining.cell.wx", &self.refining_cell.wx),
            wh: f("refining.cell.wh", &self.refining_cell.wh),
            bias: f("refining.cell.bias", &self.refining_cell.bias),
        };
        let refining_head = Se3Head {
            weight: f("refining.head.weight", &self.refining_head.weight),
            bias: f("refining.head.bias", &self.refining_head.bias),
        };
        Weights {
            encoder,
            tracking_cell,
            tracking_head,
            fusion,
            refining_cell,
            refining_head,
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|name, _| out.push(name.to_string()));
        out
    }
}

fn visit_cell<P>(prefix: &str, cell: &ConvLstm<P>, f: &mut impl FnMut(&str, &P)) {
    f(&format!("{prefix}.wx"), &cell.wx);
    f(&format!("{prefix}.wh"), &cell.wh);
    f(&format!("{prefix}.bias"), &cell.bias);
}

impl<P: Clone> Weights<P> {
    pub fn flatten(&self) -> Vec<(String, P)> {
        let mut out = Vec::new();
        self.visit(|name, p| out.push((name.to_string(), p.clone())));
        out
    }

    /// Rebuild from values in [`Weights::visit`] order.
    pub fn unflatten<Q: Clone>(&self, values: Vec<Q>) -> Result<Weights<Q>> {
        let expected = self.names().len();
        if values.len() != expected {
            return Err(invalid(format!(
                "expected {expected} parameter values, got {}",
                values.len()
            )));
        }
        let mut it = values.into_iter();
        Ok(self.map(|_, _| it.next().expect("counted")))
    }
}

impl Weights<Tensor> {
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Weights<Var> {
        self.map(|_, t| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.numel());
        n
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_, t| Tensor::zeros(t.shape().to_vec()))
    }
}

impl Weights<Var> {
    /// Read back gradients after [`Tape::backward`]; parameters without a
    /// gradient (bound as constants) get zeros.
    pub fn gradients(&self, tape: &Tape) -> Weights<Tensor> {
        self.map(|_, v| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(*v).to_vec()))
        })
    }
}

fn glorot(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..=limit))
}

fn init_conv(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize) -> Conv<Tensor> {
    Conv {
        weight: glorot(rng, vec![cout, cin, k, k], cin * k * k, cout * k * k),
        bias: Tensor::zeros(vec![cout]),
    }
}

fn init_cell(rng: &mut ChaCha8Rng, input: usize, hidden: usize, k: usize) -> ConvLstm<Tensor> {
    ConvLstm {
        wx: glorot(
            rng,
            vec![4 * hidden, input, k, k],
            input * k * k,
            4 * hidden * k * k,
        ),
        wh: glorot(
            rng,
            vec![4 * hidden, hidden, k, k],
            hidden * k * k,
            4 * hidden * k * k,
        ),
        bias: Tensor::zeros(vec![4 * hidden]),
    }
}

fn init_head(rng: &mut ChaCha8Rng, channels: usize) -> Se3Head<Tensor> {
    Se3Head {
        weight: glorot(rng, vec![6, channels], channels, 6),
        bias: Tensor::zeros(vec![6]),
    }
}

/// A complete parameter set plus the configuration it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct VoModel {
    pub config: ModelConfig,
    pub weights: Weights<Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    params: Vec<ManifestEntry>,
}

impl VoModel {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 6;
        let mut encoder = Vec::with_capacity(ENCODER_LAYERS);
        for l in &config.encoder.layers {
            encoder.push(init_conv(&mut rng, cin, l.out_channels, l.kernel));
            cin = l.out_channels;
        }
        let (c, hid, k) = (cin, config.hidden_channels, config.cell_kernel);
        let weights = Weights {
            encoder,
            tracking_cell: init_cell(&mut rng, c, hid, k),
            tracking_head: init_head(&mut rng, hid),
            fusion: [
                init_conv(&mut rng, c + hid, hid, 3),
                init_conv(&mut rng, hid, hid, 3),
            ],
            refining_cell: init_cell(&mut rng, hid, hid, k),
            refining_head: init_head(&mut rng, hid),
        };
        Ok(Self { config, weights })
    }

    /// Write `manifest.json` plus one VOTB blob per parameter into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut params = Vec::new();
        let mut result = Ok(());
        self.weights.visit(|name, t| {
            if result.is_err() {
                return;
            }
            let file = format!("{name}.votb");
            let path = dir.join(&file);
            result = fs::write(&path, votb::encode(t)).map_err(io_err(&path));
            params.push(ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                file,
            });
        });
        result?;
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(json_err(&path))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
            return Err(invalid(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                manifest.format,
                manifest.version
            )));
        }
        manifest.config.validate()?;
        // Shapes come from a freshly initialized template.
        let template = Self::init(manifest.config.clone(), 0)?;
        let expected = template.weights.flatten();
        if expected.len() != manifest.params.len() {
            return Err(invalid(format!(
                "checkpoint lists {} parameters, model needs {}",
                manifest.params.len(),
                expected.len()
            )));
        }
        let mut values = Vec::with_capacity(expected.len());
        for ((name, t), entry) in expected.iter().zip(&manifest.params) {
            if &entry.name != name || entry.shape != t.shape() {
                return Err(invalid(format!(
                    "checkpoint entry `{}` {:?} does not match expected `{name}` {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            let p = dir.join(crate::io::container::plain_name(&entry.file)?);
            let value = votb::read_file(&p)?;
            if value.shape() != t.shape() {
                return Err(invalid(format!("{}: blob shape mismatch", p.display())));
            }
            values.push(value);
        }
        Ok(Self {
            weights: template.weights.unflatten(values)?,
            config: manifest.config,
        })
    }
}
