//! NVCK checkpoint files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamMoments, Checkpoint, EpochStats, OptimizerState, TrainConfig};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::latent::{encode_dictionary, io::read_dictionary};
use crate::model::{init_params, ModelConfig, ModelParams, ParamSet};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NVCK";
const VERSION: u32 = 1;
const RNG_WORDS: usize = 7;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    history: Vec<EpochStats>,
    adam_steps: BTreeMap<String, u64>,
    tensors: Vec<TensorEntry>,
}

fn rng_words(rng: &ChaCha8Rng) -> [u64; RNG_WORDS] {
    let seed = rng.get_seed();
    let mut w = [0u64; RNG_WORDS];
    for (i, chunk) in seed.chunks_exact(8).enumerate() {
        w[i] = u64::from_le_bytes(chunk.try_into().unwrap());
    }
    w[4] = rng.get_stream();
    let pos = rng.get_word_pos();
    w[5] = pos as u64;
    w[6] = (pos >> 64) as u64;
    w
}

fn rng_from_words(w: &[u64; RNG_WORDS]) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for i in 0..4 {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&w[i].to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(w[4]);
    rng.set_word_pos(w[5] as u128 | ((w[6] as u128) << 64));
    rng
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for (id, t) in ckpt.model.generator.iter() {
        tensors.push((format!("gen/{id}"), t));
    }
    for (id, t) in ckpt.model.rnn.iter() {
        tensors.push((format!("rnn/{id}"), t));
    }
    let mut adam_steps = BTreeMap::new();
    for (name, m) in &ckpt.optimizer.adam {
        tensors.push((format!("adam.m/{name}"), &m.m));
        tensors.push((format!("adam.v/{name}"), &m.v));
        adam_steps.insert(name.clone(), m.step);
    }
    for (key, v) in &ckpt.optimizer.velocity {
        tensors.push((format!("velocity/{key}"), v));
    }
    let manifest = Manifest {
        model_config: ckpt.model.config.clone(),
        train_config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        history: ckpt.history.clone(),
        adam_steps,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    binio::put_u32(&mut out, VERSION);
    out.extend_from_slice(&encode_dictionary(&ckpt.dict)?);
    binio::put_json(&mut out, &serde_json::to_string(&manifest)?)?;
    for (_, t) in &tensors {
        binio::put_f32s(&mut out, t.data());
    }
    for w in rng_words(&ckpt.rng) {
        binio::put_u64(&mut out, w);
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let dict = read_dictionary(&mut r)?;
    let manifest: Manifest = r.json("checkpoint manifest")?;
    let mc = &manifest.model_config;
    if dict.dims.static_dim != mc.static_dim
        || dict.dims.transient_dim != mc.transient_dim
        || dict.dims.frames != mc.frames
    {
        return Err(r.fail(format!(
            "dictionary dims {:?} disagree with the model config",
            dict.dims
        )));
    }

    let mut generator = ParamSet::new();
    let mut rnn = ParamSet::new();
    let mut moments: BTreeMap<String, (Option<Tensor>, Option<Tensor>)> = BTreeMap::new();
    let mut velocity = BTreeMap::new();
    for entry in &manifest.tensors {
        let n = entry.shape.iter().product();
        let at = r.pos();
        let data = r.f32s(n, &entry.name)?;
        let t = Tensor::new(&entry.shape, data).map_err(|e| Error::format(at as u64, e.to_string()))?;
        let (kind, name) = entry
            .name
            .split_once('/')
            .ok_or_else(|| Error::format(at as u64, format!("bad tensor name `{}`", entry.name)))?;
        match kind {
            "gen" => generator.insert(name, t),
            "rnn" => rnn.insert(name, t),
            "adam.m" => moments.entry(name.to_string()).or_default().0 = Some(t),
            "adam.v" => moments.entry(name.to_string()).or_default().1 = Some(t),
            "velocity" => {
                velocity.insert(name.to_string(), t);
            }
            other => {
                return Err(Error::format(at as u64, format!("unknown tensor group `{other}`")));
            }
        }
    }
    let mut words = [0u64; RNG_WORDS];
    for w in words.iter_mut() {
        *w = r.u64("rng state")?;
    }
    r.finish("checkpoint")?;

    let mut adam = BTreeMap::new();
    for (name, (m, v)) in moments {
        let (Some(m), Some(v)) = (m, v) else {
            return Err(Error::format(0, format!("incomplete Adam moments for `{name}`")));
        };
        let step = *manifest
            .adam_steps
            .get(&name)
            .ok_or_else(|| Error::format(0, format!("missing Adam step for `{name}`")))?;
        adam.insert(name, AdamMoments { m, v, step });
    }

    let model = ModelParams {
        config: manifest.model_config,
        generator,
        rnn,
    };
    check_layout(&model)?;
    Ok(Checkpoint {
        model,
        dict,
        optimizer: OptimizerState { adam, velocity },
        config: manifest.train_config,
        epoch: manifest.epoch,
        rng: rng_from_words(&words),
        history: manifest.history,
    })
}

/// The stored parameters must have exactly the names and shapes the config
/// produces.
fn check_layout(model: &ModelParams) -> Result<()> {
    let fresh: ModelParams = init_params(&model.config)?;
    let layout = |p: &ParamSet| -> Vec<(String, Vec<usize>)> {
        p.iter().map(|(id, t)| (id.to_string(), t.shape().to_vec())).collect()
    };
    if layout(&fresh.generator) != layout(&model.generator) || layout(&fresh.rnn) != layout(&model.rnn) {
        return Err(Error::invalid(
            "checkpoint parameters do not match the layout of its model config",
        ));
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

/// Load a checkpoint, optionally requiring a specific model config.
pub fn load_checkpoint(path: impl AsRef<Path>, expect: Option<&ModelConfig>) -> Result<Checkpoint> {
    let ckpt = decode_checkpoint(&std::fs::read(path)?)?;
    if let Some(cfg) = expect {
        if cfg != &ckpt.model.config {
            return Err(Error::invalid(format!(
                "checkpoint model config {:?} does not match expected {:?}",
                ckpt.model.config, cfg
            )));
        }
    }
    Ok(ckpt)
}
