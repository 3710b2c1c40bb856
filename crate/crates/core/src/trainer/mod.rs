//! Alternating optimization of the generator, then the latents and GRU.
//!
//! Each epoch visits the training videos in a shuffled order. For every video
//! the generator takes `stage1_steps` Adam steps with everything else frozen,
//! then (after the warm-up epochs) the video's latent entries take momentum-SGD
//! steps and the GRU takes Adam steps with the generator frozen. Latents are
//! projected back into the unit ball after each update and, when a rank is
//! configured, the transient entry is replaced by its best low-rank
//! approximation.

mod checkpoint;
mod optim;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use optim::{adam_step, sgd_momentum_step, sgd_momentum_update, AdamConfig, AdamMoments, OptimizerState};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{init_latents, low_rank_project, LatentDictionary, LatentDims, SharingScheme, VideoLabels};
use crate::losses::{objective_graph, sample_triplets_with, LossBreakdown, LossConfig, TripletIndices};
use crate::model::{init_params, video_forward, ModelConfig, ModelParams};
use crate::tensor::{Graph, ParamId, Tensor};
use crate::video::VideoClip;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Alternating epochs after the warm-up.
    pub epochs: usize,
    /// Generator-only epochs run first.
    pub warmup_epochs: usize,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub lr_gen: f64,
    pub lr_rnn: f64,
    pub lr_latent: f64,
    pub adam: AdamConfig,
    pub momentum: f64,
    pub loss: LossConfig,
    /// Rank of every transient matrix; `None` disables the projection.
    pub rank: Option<usize>,
    pub scheme: SharingScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            warmup_epochs: 5,
            stage1_steps: 1,
            stage2_steps: 1,
            lr_gen: 1e-3,
            lr_rnn: 1e-3,
            lr_latent: 0.1,
            adam: AdamConfig::default(),
            momentum: 0.9,
            loss: LossConfig::default(),
            rank: None,
            scheme: SharingScheme::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs + self.warmup_epochs
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::invalid(msg)) };
        ok(self.epochs >= 1, "epochs must be >= 1")?;
        ok(
            self.stage1_steps >= 1 && self.stage2_steps >= 1,
            "stage step counts must be >= 1",
        )?;
        for (lr, name) in [
            (self.lr_gen, "lr_gen"),
            (self.lr_rnn, "lr_rnn"),
            (self.lr_latent, "lr_latent"),
        ] {
            ok(
                lr >= 0.0 && lr.is_finite(),
                &format!("{name} must be a finite value >= 0"),
            )?;
        }
        ok((0.0..1.0).contains(&self.momentum), "momentum must be in [0, 1)")?;
        let a = &self.adam;
        ok(
            (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0,
            "invalid Adam settings",
        )?;
        if let Some(r) = self.rank {
            let max = model.transient_dim.min(model.frames);
            ok(r >= 1 && r <= max, &format!("rank must be in 1..={max}"))?;
        }
        self.loss
            .validate_for(model.frames, model.frame.height, model.frame.width)
    }
}

/// Training clips and their labels, in matching order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub clips: Vec<VideoClip>,
    pub labels: Vec<VideoLabels>,
}

impl TrainingSet {
    pub fn new(clips: Vec<VideoClip>, labels: Vec<VideoLabels>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if clips.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} clips but {} labels",
                clips.len(),
                labels.len()
            )));
        }
        let shape = clips[0].tensor().shape().to_vec();
        if let Some(c) = clips.iter().find(|c| c.tensor().shape() != shape) {
            return Err(Error::ShapeMismatch {
                op: "TrainingSet",
                left: shape,
                right: c.tensor().shape().to_vec(),
            });
        }
        Ok(TrainingSet { clips, labels })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Mean unweighted loss terms over the videos of one epoch, measured before
/// each video's updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

/// Complete training state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub dict: LatentDictionary,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochStats>,
}

impl Checkpoint {
    /// Fresh state: model from `model_cfg.seed`, latents and the epoch
    /// stream from `cfg.seed`.
    pub fn initial(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &TrainingSet) -> Result<Self> {
        cfg.validate(model_cfg)?;
        let model = init_params(model_cfg)?;
        let dims = LatentDims {
            static_dim: model_cfg.static_dim,
            transient_dim: model_cfg.transient_dim,
            frames: model_cfg.frames,
        };
        let dict = init_latents(cfg.seed, dims, &data.labels, cfg.scheme)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let ckpt = Checkpoint {
            model,
            dict,
            optimizer: OptimizerState::default(),
            config: cfg.clone(),
            epoch: 0,
            rng,
            history: Vec::new(),
        };
        ckpt.check_data(data)?;
        Ok(ckpt)
    }

    fn check_data(&self, data: &TrainingSet) -> Result<()> {
        let cfg = &self.model.config;
        let expect = [cfg.frames, cfg.frame.channels, cfg.frame.height, cfg.frame.width];
        for (clip, labels) in data.clips.iter().zip(&data.labels) {
            if clip.tensor().shape() != expect {
                return Err(Error::ShapeMismatch {
                    op: "training clip",
                    left: clip.tensor().shape().to_vec(),
                    right: expect.to_vec(),
                });
            }
            let (s, t) = self.dict.scheme.resolve(labels);
            self.dict.get_static(&s)?;
            self.dict.get_transient(&t)?;
        }
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.total_epochs()
    }
}

fn velocity_key(kind: &str, name: &str) -> String {
    format!("{kind}/{name}")
}

fn non_finite(epoch: usize, what: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{what} at epoch {epoch}: {m}")),
        other => other,
    }
}

/// Runs epochs on a [`Checkpoint`].
pub struct Trainer<'a> {
    pub state: Checkpoint,
    data: &'a TrainingSet,
}

impl<'a> Trainer<'a> {
    pub fn new(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &'a TrainingSet) -> Result<Self> {
        Ok(Trainer {
            state: Checkpoint::initial(model_cfg, cfg, data)?,
            data,
        })
    }

    /// Continue from a saved state. The data must map onto its dictionary.
    pub fn resume(state: Checkpoint, data: &'a TrainingSet) -> Result<Self> {
        state.config.validate(&state.model.config)?;
        state.check_data(data)?;
        Ok(Trainer { state, data })
    }

    /// One epoch. On a non-finite loss or gradient the state is rolled back
    /// to the start of the epoch and returned inside [`Error::Diverged`].
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let snapshot = self.state.clone();
        match self.run_epoch() {
            Ok(stats) => Ok(stats),
            Err(e @ Error::NonFinite(_)) => {
                let epoch = snapshot.epoch;
                self.state = snapshot.clone();
                Err(Error::Diverged {
                    epoch,
                    reason: e.to_string(),
                    last_good: Box::new(snapshot),
                })
            }
            Err(e) => {
                self.state = snapshot;
                Err(e)
            }
        }
    }

    /// Train until the configured epoch count, calling `on_epoch` after each.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochStats, &Checkpoint) -> Result<()>) -> Result<()> {
        while !self.state.is_finished() {
            let stats = self.train_epoch()?;
            on_epoch(&stats, &self.state)?;
        }
        Ok(())
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.state
    }

    fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.state.epoch;
        let warm = epoch < self.state.config.warmup_epochs;
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut sum = [0.0f64; 4];
        for &vid in &order {
            let mut first = None;
            for _ in 0..self.state.config.stage1_steps {
                let b = self.stage1_step(vid)?;
                first.get_or_insert(b);
            }
            if !warm {
                for _ in 0..self.state.config.stage2_steps {
                    self.stage2_step(vid)?;
                }
            }
            let b = first.expect("stage1_steps >= 1");
            for (s, v) in sum.iter_mut().zip([b.rec, b.static_term, b.triplet, b.total]) {
                *s += v;
            }
        }
        let n = order.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: LossBreakdown {
                rec: sum[0] / n,
                static_term: sum[1] / n,
                triplet: sum[2] / n,
                total: sum[3] / n,
            },
        };
        self.state.epoch += 1;
        self.state.history.push(stats);
        Ok(stats)
    }

    fn sample_step(&mut self) -> Result<(usize, TripletIndices)> {
        let cfg = &self.state.config.loss;
        let frames = self.state.model.config.frames;
        let k = self.state.rng.random_range(1..=frames);
        if cfg.lambda_triplet == 0.0 {
            return Ok((k, TripletIndices::default()));
        }
        let triples = sample_triplets_with(&mut self.state.rng, frames, cfg.window, cfg.triplets)?;
        Ok((k, triples))
    }

    fn entry_names(&self, vid: usize) -> (String, String) {
        self.state.dict.scheme.resolve(&self.data.labels[vid])
    }

    fn check_loss(&self, b: &LossBreakdown) -> Result<()> {
        if !b.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at epoch {} (rec {}, static {}, triplet {})",
                self.state.epoch, b.rec, b.static_term, b.triplet
            )));
        }
        Ok(())
    }

    /// Generator update with latents and GRU frozen.
    fn stage1_step(&mut self, vid: usize) -> Result<LossBreakdown> {
        let (k, triples) = self.sample_step()?;
        let (sname, tname) = self.entry_names(vid);
        let st = &self.state;
        let cfg = &st.model.config;
        let mut g = Graph::new();
        let gen = st.model.generator.bind(&mut g, true)?;
        let rnn = st.model.rnn.bind(&mut g, false)?;
        let zs = g.constant(Tensor::new(&[cfg.static_dim], st.dict.get_static(&sname)?.to_vec())?);
        let zt = g.constant(st.dict.get_transient(&tname)?.clone());
        let video = video_forward(&mut g, cfg, &gen, &rnn, zs, zt)?;
        let target = g.constant(self.data.clips[vid].tensor().clone());
        let obj = objective_graph(&mut g, video, target, zt, k, &triples, &st.config.loss)?;
        let b = obj.breakdown(&g);
        self.check_loss(&b)?;
        let ids = st.model.generator.ids();
        let grads = g.gradient(obj.total, &ids)?;
        let epoch = st.epoch;
        let (lr, adam) = (st.config.lr_gen, st.config.adam);
        let state = &mut self.state;
        for id in &ids {
            let p = state.model.generator.get_mut(id).expect("bound parameter");
            let m = state.optimizer.adam_for(id.as_str(), p.shape());
            adam_step(p, grads.get(id).expect("requested gradient"), m, lr, &adam)
                .map_err(non_finite(epoch, id.as_str()))?;
        }
        Ok(b)
    }

    /// Latent and GRU update with the generator frozen.
    fn stage2_step(&mut self, vid: usize) -> Result<LossBreakdown> {
        const ZS: &str = "latent.static";
        const ZT: &str = "latent.transient";
        let (k, triples) = self.sample_step()?;
        let (sname, tname) = self.entry_names(vid);
        let st = &self.state;
        let cfg = &st.model.config;
        let mut g = Graph::new();
        let gen = st.model.generator.bind(&mut g, false)?;
        let rnn = st.model.rnn.bind(&mut g, true)?;
        let zs = g.param(
            ZS,
            Tensor::new(&[cfg.static_dim], st.dict.get_static(&sname)?.to_vec())?,
        )?;
        let zt = g.param(ZT, st.dict.get_transient(&tname)?.clone())?;
        let video = video_forward(&mut g, cfg, &gen, &rnn, zs, zt)?;
        let target = g.constant(self.data.clips[vid].tensor().clone());
        let obj = objective_graph(&mut g, video, target, zt, k, &triples, &st.config.loss)?;
        let b = obj.breakdown(&g);
        self.check_loss(&b)?;
        let mut ids = st.model.rnn.ids();
        ids.push(ParamId::new(ZS));
        ids.push(ParamId::new(ZT));
        let mut grads = g.gradient(obj.total, &ids)?;
        let epoch = st.epoch;
        let c = st.config.clone();
        let static_dim = cfg.static_dim;

        let state = &mut self.state;
        for id in &ids[..ids.len() - 2] {
            let p = state.model.rnn.get_mut(id).expect("bound parameter");
            let m = state.optimizer.adam_for(id.as_str(), p.shape());
            adam_step(p, grads.get(id).expect("requested gradient"), m, c.lr_rnn, &c.adam)
                .map_err(non_finite(epoch, id.as_str()))?;
        }

        let gs = grads.remove(&ParamId::new(ZS)).expect("requested gradient");
        let mut z = Tensor::new(&[static_dim], state.dict.get_static(&sname)?.to_vec())?;
        let v = state.optimizer.velocity_for(&velocity_key("static", &sname), z.shape());
        sgd_momentum_step(&mut z, &gs, v, c.lr_latent, c.momentum).map_err(non_finite(epoch, ZS))?;
        state.dict.static_mut(&sname)?.copy_from_slice(z.data());

        let gt = grads.remove(&ParamId::new(ZT)).expect("requested gradient");
        let mut z = state.dict.get_transient(&tname)?.clone();
        let v = state
            .optimizer
            .velocity_for(&velocity_key("transient", &tname), z.shape());
        sgd_momentum_step(&mut z, &gt, v, c.lr_latent, c.momentum).map_err(non_finite(epoch, ZT))?;
        if let Some(rank) = c.rank {
            z = low_rank_project(&z, rank)?;
            // Re-project rows to absorb rounding.
            optim::project_rows(&mut z);
        }
        *state.dict.transient_mut(&tname)? = z;
        Ok(b)
    }
}

/// Train from scratch for the configured number of epochs.
pub fn fit(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &TrainingSet) -> Result<Checkpoint> {
    let mut t = Trainer::new(model_cfg, cfg, data)?;
    t.run(|_, _| Ok(()))?;
    Ok(t.into_checkpoint())
}

/// Reconstruction of every training clip from its dictionary entries.
pub fn reconstruct(ckpt: &Checkpoint, labels: &[VideoLabels]) -> Result<Vec<VideoClip>> {
    labels
        .iter()
        .map(|l| {
            let (s, t) = ckpt.dict.scheme.resolve(l);
            let code = ckpt.dict.compose(&s, &t)?;
            crate::model::generate_video(&ckpt.model, &code)
        })
        .collect()
}
