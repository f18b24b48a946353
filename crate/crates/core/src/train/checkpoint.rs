//! Checkpoints: a tensor container whose JSON header carries the configs,
//! iteration, optimizer scalars, RNG position and loss trace. Arrays are
//! stored as `weights/<name>`, `adam.m/<name>` and `adam.v/<name>`.

use std::collections::BTreeMap;
use std::path::Path;

use nesr_tensor::{AdamState, Tensor};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::model::{ModelConfig, ModelWeights};
use crate::synth::io::{decode_container, encode_container, read_container, write_container, Dtype};
use crate::train::config::TrainConfig;

const FORMAT: &str = "nesr-checkpoint";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |what: &str| NesrError::Config(format!("checkpoint rng state: {what}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed is not hex"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed must be 32 bytes"))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad("word_pos is not an integer"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamScalars {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    model: ModelConfig,
    train: TrainConfig,
    iteration: u64,
    rng_state: RngState,
    adam: AdamScalars,
    losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Completed iterations.
    pub iteration: u64,
    pub weights: ModelWeights<Tensor>,
    pub adam: AdamState,
    pub rng: RngState,
    /// Mean batch loss of every completed iteration.
    pub losses: Vec<f64>,
}

impl Checkpoint {
    fn header(&self) -> Header {
        Header {
            format: FORMAT.into(),
            model: self.model.clone(),
            train: self.train.clone(),
            iteration: self.iteration,
            rng_state: self.rng.clone(),
            adam: AdamScalars {
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                eps: self.adam.eps,
                lr: self.adam.lr,
                step_count: self.adam.step_count,
            },
            losses: self.losses.clone(),
        }
    }

    fn arrays(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        let named = self.weights.named();
        for (n, t) in &named {
            out.push((format!("weights/{n}"), t));
        }
        for (i, (n, _)) in named.iter().enumerate() {
            out.push((format!("adam.m/{n}"), &self.adam.first_moment[i]));
            out.push((format!("adam.v/{n}"), &self.adam.second_moment[i]));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_string(&self.header())?;
        Ok(encode_container(&header, &self.arrays(), Dtype::F64))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, tensors) = decode_container(bytes)?;
        Self::assemble(&json, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = serde_json::to_string(&self.header())?;
        write_container(path, &header, &self.arrays(), Dtype::F64)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (json, tensors) = read_container(path)?;
        Self::assemble(&json, tensors)
    }

    fn assemble(json: &str, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let header: Header = serde_json::from_str(json)?;
        if header.format != FORMAT {
            return Err(NesrError::Config(format!("not a checkpoint (format '{}')", header.format)));
        }
        let mut groups: [BTreeMap<String, Tensor>; 3] = Default::default();
        for (name, t) in tensors {
            let (group, rest) = name
                .split_once('/')
                .ok_or_else(|| NesrError::Config(format!("unexpected checkpoint array {name}")))?;
            let slot = match group {
                "weights" => 0,
                "adam.m" => 1,
                "adam.v" => 2,
                _ => return Err(NesrError::Config(format!("unexpected checkpoint array {name}"))),
            };
            groups[slot].insert(rest.to_string(), t);
        }
        let [w, m, v] = groups;
        let weights = ModelWeights::from_named(&header.model, w)?;
        let first_moment = ModelWeights::from_named(&header.model, m)?.into_vec();
        let second_moment = ModelWeights::from_named(&header.model, v)?.into_vec();
        let a = header.adam;
        let adam = AdamState {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            lr: a.lr,
            step_count: a.step_count,
            first_moment,
            second_moment,
        };
        header.rng_state.restore()?;
        Ok(Checkpoint {
            model: header.model,
            train: header.train,
            iteration: header.iteration,
            weights,
            adam,
            rng: header.rng_state,
            losses: header.losses,
        })
    }
}
