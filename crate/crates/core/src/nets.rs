//! Concrete network architectures: the convolutional encoder/decoder pair,
//! mirror- and resnet-mode GAN generators and discriminators, the
//! total-correlation discriminator, and the factor-prediction ConvNet used
//! for evaluation.

use ndarray::{Array2, ArrayD, Axis, Ix2};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    AvgPool2x2, Conv2d, ConvTranspose2d, Flatten, Layer, LeakyRelu, Linear, Network, Relu,
    ResBlock, Reshape, Scalar, Sigmoid, Tanh, UpsampleNearest2x,
};
use crate::{data::FactorSpace, Error, Result};

/// What a network is for; drives shape checks and checkpoint naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Encoder,
    Decoder,
    Generator,
    Discriminator,
    TcDiscriminator,
    FactorPredictor,
}

/// One entry of an architecture's layer list (metadata, not the layer itself).
#[derive(Debug, Clone)]
pub struct LayerDesc {
    pub kind: String,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: String,
}

/// Declarative description of a built network.
#[derive(Debug, Clone)]
pub struct ArchitectureSpec {
    pub role: Role,
    pub input_shape: Vec<usize>,
    pub c_dim: usize,
    pub s_dim: usize,
    pub layers: Vec<LayerDesc>,
}

/// A built network plus its declarative description.
#[derive(Clone)]
pub struct NetworkHandle<T: Scalar> {
    pub spec: ArchitectureSpec,
    pub net: Network<T>,
}

impl<T: Scalar> NetworkHandle<T> {
    /// Inference forward pass (running statistics frozen).
    pub fn forward(&mut self, x: &ArrayD<T>) -> Result<ArrayD<T>> {
        self.validate_input(x)?;
        self.net.forward(x, false)
    }

    /// Training forward pass retaining the tape for `self.net.backward`.
    pub fn forward_train(&mut self, x: &ArrayD<T>) -> Result<(ArrayD<T>, crate::nn::Tape<T>)> {
        self.validate_input(x)?;
        self.net.forward_train(x)
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::save_named_tensors(path, &self.net.named_tensors())
    }

    pub fn load(&mut self, path: &std::path::Path) -> Result<()> {
        let records = crate::nn::load_named_tensors::<T>(path)?;
        let mut by_name: std::collections::HashMap<String, ArrayD<T>> = records.into_iter().collect();
        let mut assign = |name: String, tensor: &mut ArrayD<T>| -> Result<()> {
            let loaded = by_name.remove(&name).ok_or_else(|| {
                Error::format("record name", format!("checkpoint is missing tensor '{name}'"))
            })?;
            if loaded.shape() != tensor.shape() {
                return Err(Error::format(
                    "record payload",
                    format!(
                        "tensor '{name}' has shape {:?}, expected {:?}",
                        loaded.shape(),
                        tensor.shape()
                    ),
                ));
            }
            *tensor = loaded;
            Ok(())
        };
        for (name, p) in self.net.named_params_mut() {
            assign(name, p)?;
        }
        for (name, b) in self.net.named_buffers_mut() {
            assign(name, b)?;
        }
        if let Some(name) = by_name.keys().next() {
            return Err(Error::format(
                "record name",
                format!("checkpoint contains unknown tensor '{name}'"),
            ));
        }
        Ok(())
    }

    fn validate_input(&self, x: &ArrayD<T>) -> Result<()> {
        let expected = &self.spec.input_shape;
        if x.ndim() != expected.len() + 1 || x.shape()[1..] != expected[..] {
            return Err(Error::Shape(format!(
                "{:?} expects per-sample shape {:?}, got batch {:?}",
                self.spec.role,
                expected,
                x.shape()
            )));
        }
        Ok(())
    }
}

/// Split an encoder's `[N, 2c]` output into per-sample mean and log-variance.
pub fn split_gaussian<T: Scalar>(out: &ArrayD<T>) -> Result<(Array2<T>, Array2<T>)> {
    let out2 = out
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::Shape(format!("expected [N, 2c] encoder output, got {:?}", out.shape())))?;
    let width = out2.ncols();
    if width % 2 != 0 {
        return Err(Error::Shape(format!("encoder output width {width} is odd")));
    }
    let c = width / 2;
    Ok((
        out2.slice(ndarray::s![.., ..c]).to_owned(),
        out2.slice(ndarray::s![.., c..]).to_owned(),
    ))
}

fn desc(kind: &str, width: usize, kernel: usize, stride: usize, activation: &str) -> LayerDesc {
    LayerDesc {
        kind: kind.into(),
        width,
        kernel,
        stride,
        activation: activation.into(),
    }
}

/// Convolutional trunk shared by the encoder, the mirror discriminator, and
/// the factor predictor: four stride-2 4x4 convolutions (32, 32, 64, 64) on
/// 64x64 input, then FC 256 with ReLU.
fn conv_trunk<T: Scalar>(
    channels: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Box<dyn Layer<T>>>, Vec<LayerDesc>) {
    let layers: Vec<Box<dyn Layer<T>>> = vec![
        Box::new(Conv2d::new(channels, 32, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(Conv2d::new(32, 32, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(Conv2d::new(32, 64, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(Conv2d::new(64, 64, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(Flatten),
        Box::new(Linear::new(64 * 4 * 4, 256, rng)),
        Box::new(Relu),
    ];
    let descs = vec![
        desc("conv", 32, 4, 2, "relu"),
        desc("conv", 32, 4, 2, "relu"),
        desc("conv", 64, 4, 2, "relu"),
        desc("conv", 64, 4, 2, "relu"),
        desc("fc", 256, 0, 0, "relu"),
    ];
    (layers, descs)
}

/// Encoder: conv trunk then a zero-initialized FC head of width `2*c_dim`
/// (mean and log-variance), so an untrained encoder reports the prior.
pub fn build_encoder<T: Scalar>(c_dim: usize, channels: usize, rng: &mut ChaCha8Rng) -> Result<NetworkHandle<T>> {
    if c_dim == 0 {
        return Err(Error::InvalidConfig("c_dim must be at least 1".into()));
    }
    let (mut layers, mut descs) = conv_trunk::<T>(channels, rng);
    layers.push(Box::new(Linear::zeros(256, 2 * c_dim)));
    descs.push(desc("fc", 2 * c_dim, 0, 0, "none"));
    Ok(NetworkHandle {
        spec: ArchitectureSpec {
            role: Role::Encoder,
            input_shape: vec![channels, 64, 64],
            c_dim,
            s_dim: 0,
            layers: descs,
        },
        net: Network::new(layers),
    })
}

fn decoder_layers<T: Scalar>(
    c_dim: usize,
    channels: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Box<dyn Layer<T>>>, Vec<LayerDesc>) {
    let layers: Vec<Box<dyn Layer<T>>> = vec![
        Box::new(Linear::new(c_dim, 256, rng)),
        Box::new(Relu),
        Box::new(Linear::new(256, 4 * 4 * 64, rng)),
        Box::new(Relu),
        Box::new(Reshape { c: 64, h: 4, w: 4 }),
        Box::new(ConvTranspose2d::new(64, 64, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(ConvTranspose2d::new(64, 32, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(ConvTranspose2d::new(32, 32, 4, 2, 1, rng)),
        Box::new(Relu),
        Box::new(ConvTranspose2d::new(32, channels, 4, 2, 1, rng)),
    ];
    let descs = vec![
        desc("fc", 256, 0, 0, "relu"),
        desc("fc", 4 * 4 * 64, 0, 0, "relu"),
        desc("upconv", 64, 4, 2, "relu"),
        desc("upconv", 32, 4, 2, "relu"),
        desc("upconv", 32, 4, 2, "relu"),
        desc("upconv", channels, 4, 2, "none"),
    ];
    (layers, descs)
}

/// Decoder: FC 256, FC 4*4*64, then four stride-2 4x4 upconvolutions
/// (64, 32, 32, channels). Outputs 64x64 logits for a Bernoulli likelihood.
pub fn build_decoder<T: Scalar>(c_dim: usize, channels: usize, rng: &mut ChaCha8Rng) -> Result<NetworkHandle<T>> {
    if c_dim == 0 {
        return Err(Error::InvalidConfig("c_dim must be at least 1".into()));
    }
    let (layers, descs) = decoder_layers::<T>(c_dim, channels, rng);
    Ok(NetworkHandle {
        spec: ArchitectureSpec {
            role: Role::Decoder,
            input_shape: vec![c_dim],
            c_dim,
            s_dim: 0,
            layers: descs,
        },
        net: Network::new(layers),
    })
}

/// GAN architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanMode {
    /// Generator mirrors the decoder, discriminator mirrors the encoder;
    /// sigmoid output in [0, 1]; 64x64 only.
    Mirror,
    /// Residual generator/discriminator; tanh output in [-1, 1];
    /// 64/128/256 resolutions, 3 channels.
    Resnet,
}

/// Build a generator/discriminator pair.
pub fn build_gan_pair<T: Scalar>(
    mode: GanMode,
    z_dim: usize,
    resolution: usize,
    channels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(NetworkHandle<T>, NetworkHandle<T>)> {
    if z_dim == 0 {
        return Err(Error::InvalidConfig("z_dim must be at least 1".into()));
    }
    match mode {
        GanMode::Mirror => {
            if resolution != 64 {
                return Err(Error::InvalidConfig(format!(
                    "mirror mode supports resolution 64 only, got {resolution}"
                )));
            }
            let (mut g_layers, mut g_descs) = decoder_layers::<T>(z_dim, channels, rng);
            g_layers.push(Box::new(Sigmoid));
            g_descs.push(desc("sigmoid", channels, 0, 0, "sigmoid"));
            let generator = NetworkHandle {
                spec: ArchitectureSpec {
                    role: Role::Generator,
                    input_shape: vec![z_dim],
                    c_dim: z_dim,
                    s_dim: 0,
                    layers: g_descs,
                },
                net: Network::new(g_layers),
            };

            let (mut d_layers, mut d_descs) = conv_trunk::<T>(channels, rng);
            d_layers.push(Box::new(Linear::new(256, 1, rng)));
            d_descs.push(desc("fc", 1, 0, 0, "none"));
            let discriminator = NetworkHandle {
                spec: ArchitectureSpec {
                    role: Role::Discriminator,
                    input_shape: vec![channels, 64, 64],
                    c_dim: 0,
                    s_dim: 0,
                    layers: d_descs,
                },
                net: Network::new(d_layers),
            };
            Ok((generator, discriminator))
        }
        GanMode::Resnet => {
            // Generator channel schedule after the initial 4x4x512 map; each
            // entry is one residual block followed by nearest upsampling.
            let g_channels: &[usize] = match resolution {
                64 => &[512, 256, 128, 64],
                128 => &[512, 512, 512, 256, 128],
                256 => &[512, 512, 512, 256, 128, 64],
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "resnet mode supports resolutions 64/128/256, got {resolution}"
                    )))
                }
            };
            let mut g_layers: Vec<Box<dyn Layer<T>>> = vec![
                Box::new(Linear::new(z_dim, 4 * 4 * 512, rng)),
                Box::new(Reshape { c: 512, h: 4, w: 4 }),
            ];
            let mut g_descs = vec![desc("fc", 4 * 4 * 512, 0, 0, "none")];
            let mut in_c = 512;
            for &out_c in g_channels {
                g_layers.push(Box::new(ResBlock::new(in_c, out_c, true, rng)));
                g_layers.push(Box::new(UpsampleNearest2x));
                g_descs.push(desc("resblock", out_c, 3, 1, "relu"));
                g_descs.push(desc("upsample_nn", out_c, 2, 2, "none"));
                in_c = out_c;
            }
            g_layers.push(Box::new(ResBlock::new(in_c, in_c, true, rng)));
            g_descs.push(desc("resblock", in_c, 3, 1, "relu"));
            g_layers.push(Box::new(Relu));
            g_layers.push(Box::new(Conv2d::new(in_c, channels, 3, 1, 1, rng)));
            g_layers.push(Box::new(Tanh));
            g_descs.push(desc("conv", channels, 3, 1, "tanh"));
            let generator = NetworkHandle {
                spec: ArchitectureSpec {
                    role: Role::Generator,
                    input_shape: vec![z_dim],
                    c_dim: z_dim,
                    s_dim: 0,
                    layers: g_descs,
                },
                net: Network::new(g_layers),
            };

            // Discriminator channel schedule; each entry is one residual
            // block followed by average pooling, ending at 4x4 spatial size.
            let d_channels: &[usize] = match resolution {
                64 => &[64, 128, 256, 512],
                128 => &[64, 128, 256, 512, 512],
                _ => &[64, 128, 256, 512, 512, 512],
            };
            let mut d_layers: Vec<Box<dyn Layer<T>>> =
                vec![Box::new(Conv2d::new(channels, 64, 3, 1, 1, rng))];
            let mut d_descs = vec![desc("conv", 64, 3, 1, "none")];
            let mut in_c = 64;
            for &out_c in d_channels {
                d_layers.push(Box::new(ResBlock::new(in_c, out_c, false, rng)));
                d_layers.push(Box::new(AvgPool2x2));
                d_descs.push(desc("resblock", out_c, 3, 1, "relu"));
                d_descs.push(desc("avg_pool", out_c, 2, 2, "none"));
                in_c = out_c;
            }
            d_layers.push(Box::new(Relu));
            d_layers.push(Box::new(Flatten));
            d_layers.push(Box::new(Linear::new(in_c * 4 * 4, 1, rng)));
            d_descs.push(desc("fc", 1, 0, 0, "none"));
            let discriminator = NetworkHandle {
                spec: ArchitectureSpec {
                    role: Role::Discriminator,
                    input_shape: vec![channels, resolution, resolution],
                    c_dim: 0,
                    s_dim: 0,
                    layers: d_descs,
                },
                net: Network::new(d_layers),
            };
            Ok((generator, discriminator))
        }
    }
}

/// Total-correlation discriminator: six FC-1000 layers with leaky ReLU
/// (slope 0.2), then two logits (joint vs permuted posterior).
pub fn build_tc_discriminator<T: Scalar>(c_dim: usize, rng: &mut ChaCha8Rng) -> Result<NetworkHandle<T>> {
    if c_dim == 0 {
        return Err(Error::InvalidConfig("c_dim must be at least 1".into()));
    }
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    let mut descs = Vec::new();
    let mut in_dim = c_dim;
    for _ in 0..6 {
        layers.push(Box::new(Linear::new(in_dim, 1000, rng)));
        layers.push(Box::new(LeakyRelu::new(0.2)));
        descs.push(desc("fc", 1000, 0, 0, "leaky_relu"));
        in_dim = 1000;
    }
    layers.push(Box::new(Linear::new(1000, 2, rng)));
    descs.push(desc("fc", 2, 0, 0, "none"));
    Ok(NetworkHandle {
        spec: ArchitectureSpec {
            role: Role::TcDiscriminator,
            input_shape: vec![c_dim],
            c_dim,
            s_dim: 0,
            layers: descs,
        },
        net: Network::new(layers),
    })
}

/// Factor predictor: a shared conv trunk ending in a 256-wide feature layer,
/// with one classification head per ground-truth factor.
#[derive(Clone)]
pub struct FactorPredictorHandle<T: Scalar> {
    pub trunk: Network<T>,
    pub heads: Vec<Network<T>>,
    pub cardinalities: Vec<usize>,
    pub channels: usize,
}

impl<T: Scalar> FactorPredictorHandle<T> {
    /// Penultimate features of shape `[N, 256]` (used for FID statistics).
    pub fn features(&mut self, x: &ArrayD<T>) -> Result<ArrayD<T>> {
        self.trunk.forward(x, false)
    }

    /// Per-factor class logits, each `[N, cardinality_k]`.
    pub fn forward(&mut self, x: &ArrayD<T>) -> Result<Vec<ArrayD<T>>> {
        let features = self.trunk.forward(x, false)?;
        self.heads
            .iter_mut()
            .map(|head| head.forward(&features, false))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.heads.iter().map(Network::param_count).sum::<usize>()
    }

    /// All tensors under `trunk.` / `head<k>.` prefixes for checkpointing.
    pub fn named_tensors(&self) -> Vec<(String, &ArrayD<T>)> {
        let mut out: Vec<(String, &ArrayD<T>)> = self
            .trunk
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("trunk.{n}"), t))
            .collect();
        for (k, head) in self.heads.iter().enumerate() {
            out.extend(
                head.named_tensors()
                    .into_iter()
                    .map(move |(n, t)| (format!("head{k}.{n}"), t)),
            );
        }
        out
    }
}

pub fn build_factor_predictor<T: Scalar>(
    space: &FactorSpace,
    channels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FactorPredictorHandle<T>> {
    let (trunk_layers, _) = conv_trunk::<T>(channels, rng);
    let heads = space
        .cardinalities()
        .iter()
        .map(|&card| Network::new(vec![Box::new(Linear::new(256, card, rng)) as Box<dyn Layer<T>>]))
        .collect();
    Ok(FactorPredictorHandle {
        trunk: Network::new(trunk_layers),
        heads,
        cardinalities: space.cardinalities().to_vec(),
        channels,
    })
}

/// Untrained-predictor accuracy helper: argmax over each head's logits.
pub fn predict_factors<T: Scalar>(
    predictor: &mut FactorPredictorHandle<T>,
    x: &ArrayD<T>,
) -> Result<Vec<Vec<usize>>> {
    let logits = predictor.forward(x)?;
    Ok(logits
        .iter()
        .map(|l| {
            let l2 = l.view().into_dimensionality::<Ix2>().unwrap();
            l2.axis_iter(Axis(0))
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(i, _)| i)
                        .unwrap()
                })
                .collect()
        })
        .collect())
}
