//! Parameter bundles, generic over the storage type so the same layout holds
//! plain tensors, tape variables, gradients or optimizer moments.
//!
//! Every array has a stable dotted name (`encoder.block2.conv1.kernels`,
//! `nam.query`, `head.4.bias`, ...) used by checkpoints.

use std::collections::BTreeMap;

use nesr_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NesrError, Result};
use crate::model::config::{ModelConfig, HEAD_DIMS, RESIDUAL_BLOCKS};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub kernels: T,
    pub bias: T,
}

/// `y = x·weight + bias` with `weight` stored `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub stem: Conv<T>,
    pub blocks: Vec<[Conv<T>; 2]>,
}

/// Lifts encoder features to `C×λ_out×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpiWeights<T> {
    /// Profile interpolation followed by two 3³ convolutions (2→C, C→C).
    Interpolate { fuse: Conv<T>, refine: Conv<T> },
    /// Band replication followed by a 1³ projection F→C.
    Replicate { project: Conv<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    pub query: T,
    pub key: T,
    pub value: T,
    pub output: Affine<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamWeights<T> {
    /// Token fusion `(C+1)→C`.
    pub token: Affine<T>,
    pub attention: Option<AttentionWeights<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T> {
    pub layers: Vec<Affine<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub encoder: EncoderWeights<T>,
    pub spi: SpiWeights<T>,
    pub nam: NamWeights<T>,
    pub head: HeadWeights<T>,
}

fn map_conv<'a, T, U>(c: &'a Conv<T>, name: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Conv<U> {
    Conv {
        kernels: f(&format!("{name}.kernels"), &c.kernels),
        bias: f(&format!("{name}.bias"), &c.bias),
    }
}

fn map_affine<'a, T, U>(a: &'a Affine<T>, name: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Affine<U> {
    Affine {
        weight: f(&format!("{name}.weight"), &a.weight),
        bias: f(&format!("{name}.bias"), &a.bias),
    }
}

impl<T> ModelWeights<T> {
    /// Applies `f` to every array in a fixed order, passing its name.
    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&str, &'a T) -> U) -> ModelWeights<U> {
        let f = &mut f;
        let encoder = EncoderWeights {
            stem: map_conv(&self.encoder.stem, "encoder.stem", f),
            blocks: self
                .encoder
                .blocks
                .iter()
                .enumerate()
                .map(|(i, [a, b])| {
                    [
                        map_conv(a, &format!("encoder.block{i}.conv1"), f),
                        map_conv(b, &format!("encoder.block{i}.conv2"), f),
                    ]
                })
                .collect(),
        };
        let spi = match &self.spi {
            SpiWeights::Interpolate { fuse, refine } => SpiWeights::Interpolate {
                fuse: map_conv(fuse, "spi.fuse", f),
                refine: map_conv(refine, "spi.refine", f),
            },
            SpiWeights::Replicate { project } => SpiWeights::Replicate {
                project: map_conv(project, "spi.project", f),
            },
        };
        let nam = NamWeights {
            token: map_affine(&self.nam.token, "nam.token", f),
            attention: self.nam.attention.as_ref().map(|a| AttentionWeights {
                query: f("nam.query", &a.query),
                key: f("nam.key", &a.key),
                value: f("nam.value", &a.value),
                output: map_affine(&a.output, "nam.output", f),
            }),
        };
        let head = HeadWeights {
            layers: self
                .head
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| map_affine(l, &format!("head.{i}"), f))
                .collect(),
        };
        ModelWeights { encoder, spi, nam, head }
    }

    /// Every array with its name, in the same order as [`ModelWeights::map`].
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(|name, t| out.push((name.to_string(), t)));
        out
    }

    pub fn into_vec(self) -> Vec<T>
    where
        T: Clone,
    {
        self.named().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.map(|_, _| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rebuilds a bundle with this layout from values in `map` order.
    pub fn with_values<U>(&self, values: Vec<U>) -> Result<ModelWeights<U>> {
        if values.len() != self.len() {
            return Err(NesrError::Config(format!(
                "weight layout has {} arrays, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut it = values.into_iter();
        Ok(self.map(|_, _| it.next().expect("length checked")))
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn init_conv(rng: &mut ChaCha8Rng, c_out: usize, c_in: usize, spatial: &[usize]) -> Conv<Tensor> {
    let mut shape = vec![c_out, c_in];
    shape.extend_from_slice(spatial);
    let fan_in = c_in * spatial.iter().product::<usize>();
    Conv {
        kernels: uniform(rng, &shape, fan_in),
        bias: uniform(rng, &[c_out], fan_in),
    }
}

fn init_affine(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Affine<Tensor> {
    Affine {
        weight: uniform(rng, &[fan_in, fan_out], fan_in),
        bias: uniform(rng, &[fan_out], fan_in),
    }
}

impl ModelWeights<Tensor> {
    /// Uniform `±√(1/fan_in)` initialization for weights and biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let (f, c) = (config.encoder_channels, config.embed_channels);
        let encoder = EncoderWeights {
            stem: init_conv(rng, f, config.in_channels, &[3, 3]),
            blocks: (0..RESIDUAL_BLOCKS)
                .map(|_| [init_conv(rng, f, f, &[3, 3]), init_conv(rng, f, f, &[3, 3])])
                .collect(),
        };
        let spi = if config.enable_spi {
            SpiWeights::Interpolate {
                fuse: init_conv(rng, c, 2, &[3, 3, 3]),
                refine: init_conv(rng, c, c, &[3, 3, 3]),
            }
        } else {
            SpiWeights::Replicate {
                project: init_conv(rng, c, f, &[1, 1, 1]),
            }
        };
        let token = init_affine(rng, config.token_width(), c);
        let attention = config.enable_nam.then(|| AttentionWeights {
            query: uniform(rng, &[c, c], c),
            key: uniform(rng, &[c, c], c),
            value: uniform(rng, &[c, c], c),
            output: init_affine(rng, c, c),
        });
        let mut dims = vec![c];
        dims.extend_from_slice(&HEAD_DIMS);
        dims.push(1);
        let head = HeadWeights {
            layers: dims.windows(2).map(|w| init_affine(rng, w[0], w[1])).collect(),
        };
        Ok(ModelWeights {
            encoder,
            spi,
            nam: NamWeights { token, attention },
            head,
        })
    }

    /// Fills the layout of `config` from named tensors, checking every shape.
    pub fn from_named(config: &ModelConfig, mut tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let template = ModelWeights::init(config, 0)?;
        let mut missing = Vec::new();
        let out = template.map(|name, t| match tensors.remove(name) {
            Some(v) if v.shape() == t.shape() => v,
            Some(v) => {
                missing.push(format!("{name} has shape {:?}, expected {:?}", v.shape(), t.shape()));
                t.clone()
            }
            None => {
                missing.push(format!("{name} is missing"));
                t.clone()
            }
        });
        if let Some(extra) = tensors.keys().next() {
            missing.push(format!("unexpected array {extra}"));
        }
        if !missing.is_empty() {
            return Err(NesrError::Config(format!("weights do not fit the model: {}", missing.join("; "))));
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_names() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::init(&cfg, 1).unwrap();
        let named = w.named();
        assert_eq!(named[0].0, "encoder.stem.kernels");
        assert_eq!(named[0].1.shape(), &[32, 3, 3, 3]);
        let find = |n: &str| named.iter().find(|(k, _)| k == n).unwrap().1.shape().to_vec();
        assert_eq!(find("spi.fuse.kernels"), vec![32, 2, 3, 3, 3]);
        assert_eq!(find("nam.token.weight"), vec![33, 32]);
        assert_eq!(find("nam.query"), vec![32, 32]);
        assert_eq!(find("head.0.weight"), vec![32, 128]);
        assert_eq!(find("head.3.weight"), vec![256, 256]);
        assert_eq!(find("head.4.weight"), vec![256, 1]);
        assert_eq!(w.len(), 2 + 16 + 4 + 2 + 5 + 10);
        assert!(w.all_finite());
    }

    #[test]
    fn init_respects_bounds_and_seed() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::init(&cfg, 5).unwrap();
        assert_eq!(w, ModelWeights::init(&cfg, 5).unwrap());
        assert_ne!(w, ModelWeights::init(&cfg, 6).unwrap());
        let bound = (1.0 / 27.0f64).sqrt();
        assert!(w.encoder.stem.kernels.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn ablation_layouts() {
        let cfg = ModelConfig {
            enable_spi: false,
            enable_nam: false,
            ..ModelConfig::default()
        };
        let w = ModelWeights::init(&cfg, 1).unwrap();
        let names: Vec<String> = w.named().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"spi.project.kernels".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("nam.query")));
    }

    #[test]
    fn named_round_trip() {
        let cfg = ModelConfig::default();
        let w = ModelWeights::init(&cfg, 3).unwrap();
        let map: BTreeMap<String, Tensor> = w.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
        assert_eq!(ModelWeights::from_named(&cfg, map.clone()).unwrap(), w);
        let mut broken = map;
        broken.remove("nam.key");
        assert!(matches!(ModelWeights::from_named(&cfg, broken), Err(NesrError::Config(_))));
    }
}
