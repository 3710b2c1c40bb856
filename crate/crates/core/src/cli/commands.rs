use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use latentvid::latent::{KeyMode, SharingScheme, VideoLabels};
use latentvid::losses::LossConfig;
use latentvid::metrics::{clip_ssim, evaluate};
use latentvid::model::{generate_video, interpolate_frames, ModelConfig};
use latentvid::synthdata::{
    default_matrix_dataset, export_gif, export_png, parse_holdout, read_navs, write_navs, DatasetManifest, Geometry,
};
use latentvid::trainer::{load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, Trainer, TrainingSet};
use latentvid::{Error, VideoClip};

use super::config::{record, resolve, sidecar_for};
use super::{CliError, EvalFlags, ExchangeFlags, GenerateFlags, InterpolateFlags, MakeDataFlags, TrainFlags};

const DEFAULT_FPS: u32 = 8;

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing required --{flag}")).into())
}

fn manifest_path_for(data: &Path) -> PathBuf {
    data.with_extension("manifest.json")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// File-system-safe clip name.
fn clip_name(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'), "_"))
        .collect::<Vec<_>>()
        .join("__")
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct MakeData {
    identities: usize,
    motions: usize,
    holdout: String,
    frames: usize,
    size: usize,
    channels: usize,
    out: Option<PathBuf>,
    seed: u64,
}

pub fn make_data(flags: MakeDataFlags) -> Result<()> {
    let g = Geometry::default();
    let defaults = MakeData {
        identities: 3,
        motions: 3,
        holdout: String::new(),
        frames: g.frames,
        size: g.height,
        channels: g.channels,
        out: None,
        seed: 0,
    };
    let c: MakeData = resolve(&defaults, flags.config.as_deref(), &flags)?;
    let out = required(&c.out, "out")?;
    let holdout = parse_holdout(&c.holdout)?;
    let geometry = Geometry {
        frames: c.frames,
        channels: c.channels,
        height: c.size,
        width: c.size,
    };
    let (manifest, clips) = default_matrix_dataset(c.identities, c.motions, &holdout, geometry, c.seed)?;
    record("make-data", &c, &sidecar_for(&out))?;
    write_navs(&clips, &out)?;
    manifest.save(manifest_path_for(&out))?;
    eprintln!(
        "wrote {} training clips to {} ({} held out)",
        clips.len(),
        out.display(),
        manifest.held_out_entries().count()
    );
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Train {
    data: Option<PathBuf>,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    resume: Option<PathBuf>,
    epochs: usize,
    warmup: usize,
    lr_gen: f64,
    lr_rnn: f64,
    lr_latent: f64,
    lambda_s: f64,
    lambda_t: f64,
    margin: f64,
    window: usize,
    triplets: usize,
    levels: usize,
    rank: Option<usize>,
    scheme: String,
    seed: u64,
    static_dim: usize,
    transient_dim: usize,
    base_channels: usize,
    hidden: usize,
    checkpoint_every: Option<usize>,
}

impl Train {
    fn defaults() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        Train {
            data: None,
            manifest: None,
            out: None,
            log: None,
            resume: None,
            epochs: t.epochs,
            warmup: t.warmup_epochs,
            lr_gen: t.lr_gen,
            lr_rnn: t.lr_rnn,
            lr_latent: t.lr_latent,
            lambda_s: t.loss.lambda_static,
            lambda_t: t.loss.lambda_triplet,
            margin: t.loss.margin,
            window: t.loss.window,
            triplets: t.loss.triplets,
            levels: t.loss.levels,
            rank: t.rank,
            scheme: t.scheme.to_string(),
            seed: t.seed,
            static_dim: m.static_dim,
            transient_dim: m.transient_dim,
            base_channels: m.base_channels,
            hidden: m.hidden,
            checkpoint_every: None,
        }
    }

    fn configs(&self, geometry: [usize; 4]) -> Result<(ModelConfig, TrainConfig)> {
        let [frames, channels, height, width] = geometry;
        let model = ModelConfig {
            static_dim: self.static_dim,
            transient_dim: self.transient_dim,
            frames,
            frame: latentvid::FrameShape::new(channels, height, width),
            base_channels: self.base_channels,
            hidden: self.hidden,
            seed: self.seed,
        };
        let scheme: SharingScheme = self.scheme.parse()?;
        let train = TrainConfig {
            epochs: self.epochs,
            warmup_epochs: self.warmup,
            lr_gen: self.lr_gen,
            lr_rnn: self.lr_rnn,
            lr_latent: self.lr_latent,
            loss: LossConfig {
                lambda_static: self.lambda_s,
                lambda_triplet: self.lambda_t,
                margin: self.margin,
                levels: self.levels,
                window: self.window,
                triplets: self.triplets,
            },
            rank: self.rank,
            scheme,
            seed: self.seed,
            ..TrainConfig::default()
        };
        model.validate()?;
        train.validate(&model)?;
        Ok((model, train))
    }
}

fn write_log_row(log: &mut impl Write, epoch: usize, row: [f64; 4]) -> Result<()> {
    writeln!(log, "{},{},{},{},{}", epoch, row[0], row[1], row[2], row[3])?;
    Ok(())
}

pub fn train(flags: TrainFlags) -> Result<()> {
    let c: Train = resolve(&Train::defaults(), flags.config.as_deref(), &flags)?;
    let data_path = required(&c.data, "data")?;
    let out = required(&c.out, "out")?;
    let manifest_path = c.manifest.clone().unwrap_or_else(|| manifest_path_for(&data_path));
    let clips = read_navs(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let manifest = DatasetManifest::load(&manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let labels: Vec<VideoLabels> = manifest.training_labels();
    let data = TrainingSet::new(clips, labels)?;
    let geometry: [usize; 4] = data.clips[0].tensor().shape().try_into().expect("rank 4");
    let (model_cfg, train_cfg) = c.configs(geometry)?;
    record("train", &c, &sidecar_for(&out))?;

    let mut trainer = match &c.resume {
        Some(path) => {
            let mut ckpt = load_checkpoint(path, Some(&model_cfg))?;
            ckpt.config.epochs = train_cfg.epochs;
            Trainer::resume(ckpt, &data)?
        }
        None => Trainer::new(&model_cfg, &train_cfg, &data)?,
    };
    let log_path = c.log.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".loss.csv");
        s.into()
    });
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "epoch,rec,static,triplet,total")?;
    let loss_cfg = train_cfg.loss.clone();
    for s in &trainer.state.history {
        write_log_row(&mut log, s.epoch, s.loss.weighted(&loss_cfg))?;
    }
    let every = c.checkpoint_every;
    let result = trainer.run(|stats, state| {
        write_log_row(&mut log, stats.epoch, stats.loss.weighted(&loss_cfg))
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        if every.is_some_and(|n| n > 0 && state.epoch % n == 0) {
            save_checkpoint(state, &out)?;
        }
        Ok(())
    });
    log.flush()?;
    match result {
        Ok(()) => {
            save_checkpoint(&trainer.state, &out)?;
            let last = trainer.state.history.last().map(|s| s.loss.total).unwrap_or(f64::NAN);
            eprintln!("trained {} epochs, final loss {last:.6}", trainer.state.epoch);
            Ok(())
        }
        Err(Error::Diverged {
            epoch,
            reason,
            last_good,
        }) => {
            save_checkpoint(&last_good, &out)?;
            Err(anyhow::Error::new(Error::Diverged {
                epoch,
                reason,
                last_good,
            })
            .context(format!("last good checkpoint written to {}", out.display())))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_ckpt(path: &Option<PathBuf>) -> Result<Checkpoint> {
    let p = required(path, "ckpt")?;
    load_checkpoint(&p, None).with_context(|| format!("loading checkpoint {}", p.display()))
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Generate {
    ckpt: Option<PathBuf>,
    static_name: Option<String>,
    transient_name: Option<String>,
    out: Option<PathBuf>,
    fps: u32,
}

pub fn generate(flags: GenerateFlags) -> Result<()> {
    let defaults = Generate {
        ckpt: None,
        static_name: None,
        transient_name: None,
        out: None,
        fps: DEFAULT_FPS,
    };
    let c: Generate = resolve(&defaults, flags.config.as_deref(), &flags)?;
    let ckpt = load_ckpt(&c.ckpt)?;
    let out = required(&c.out, "out")?;
    let pick = |sel: &str, names: Vec<String>| -> Vec<String> {
        if sel == "*" {
            names
        } else {
            vec![sel.to_string()]
        }
    };
    let statics = pick(&required(&c.static_name, "static")?, ckpt.dict.static_names());
    let transients = pick(&required(&c.transient_name, "transient")?, ckpt.dict.transient_names());
    let mut pairs = Vec::new();
    let mut clips = Vec::new();
    for s in &statics {
        for t in &transients {
            let code = ckpt.dict.compose(s, t)?;
            clips.push(generate_video(&ckpt.model, &code)?);
            pairs.push((s.clone(), t.clone()));
        }
    }
    create_dir(&out)?;
    record("generate", &c, &out.join("config.json"))?;
    write_navs(&clips, out.join("generated.navs"))?;
    for ((s, t), clip) in pairs.iter().zip(&clips) {
        export_gif(clip, out.join(format!("{}.gif", clip_name(&[s, t]))), c.fps)?;
    }
    std::fs::write(out.join("pairs.json"), serde_json::to_string_pretty(&pairs)?)?;
    eprintln!("generated {} clips in {}", clips.len(), out.display());
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Interpolate {
    ckpt: Option<PathBuf>,
    transient_name: Option<String>,
    static_name: Option<String>,
    from_frame: Option<usize>,
    to_frame: Option<usize>,
    steps: usize,
    out: Option<PathBuf>,
    fps: u32,
}

pub fn interpolate(flags: InterpolateFlags) -> Result<()> {
    let defaults = Interpolate {
        ckpt: None,
        transient_name: None,
        static_name: None,
        from_frame: None,
        to_frame: None,
        steps: 3,
        out: None,
        fps: DEFAULT_FPS,
    };
    let c: Interpolate = resolve(&defaults, flags.config.as_deref(), &flags)?;
    let a = required(&c.from_frame, "from-frame")?;
    let b = required(&c.to_frame, "to-frame")?;
    if a >= b || a == 0 {
        return Err(CliError::Usage(format!("need 1 <= --from-frame < --to-frame, got {a} and {b}")).into());
    }
    if c.steps == 0 {
        return Err(CliError::Usage("--steps must be >= 1".into()).into());
    }
    let ckpt = load_ckpt(&c.ckpt)?;
    let out = required(&c.out, "out")?;
    let z_s = ckpt.dict.get_static(&required(&c.static_name, "static")?)?.to_vec();
    let z_t = ckpt
        .dict
        .get_transient(&required(&c.transient_name, "transient")?)?
        .clone();
    if b > z_t.shape()[0] {
        return Err(CliError::Usage(format!("--to-frame {b} exceeds the {} stored frames", z_t.shape()[0])).into());
    }
    let frames = interpolate_frames(&ckpt.model, &z_s, &z_t, a, b, c.steps)?;
    create_dir(&out)?;
    record("interpolate", &c, &out.join("config.json"))?;
    for (n, f) in frames.frames().enumerate() {
        export_png(&f, out.join(format!("frame_{}.png", n + 1)))?;
    }
    export_gif(&frames, out.join("interpolation.gif"), c.fps)?;
    write_navs(std::slice::from_ref(&frames), out.join("interpolation.navs"))?;
    eprintln!("wrote {} interpolated frames to {}", frames.len(), out.display());
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Exchange {
    ckpt: Option<PathBuf>,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    fps: u32,
}

pub fn exchange(flags: ExchangeFlags) -> Result<()> {
    let defaults = Exchange {
        ckpt: None,
        manifest: None,
        out: None,
        fps: DEFAULT_FPS,
    };
    let c: Exchange = resolve(&defaults, flags.config.as_deref(), &flags)?;
    let ckpt = load_ckpt(&c.ckpt)?;
    let manifest_path = required(&c.manifest, "manifest")?;
    let manifest = DatasetManifest::load(&manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let out = required(&c.out, "out")?;
    let scheme = ckpt.dict.scheme;
    if scheme.static_key == KeyMode::PerVideo || scheme.transient_key == KeyMode::PerVideo {
        return Err(CliError::Usage(format!(
            "checkpoint uses scheme `{scheme}`; held-out cells need class-keyed entries such as `static=per-class,transient=per-class`"
        ))
        .into());
    }
    let mut names = Vec::new();
    let mut clips = Vec::new();
    for e in manifest.held_out_entries() {
        let labels = VideoLabels::new(&e.video, &e.identity, &e.motion);
        let (s, t) = ckpt.dict.scheme.resolve(&labels);
        clips.push(generate_video(&ckpt.model, &ckpt.dict.compose(&s, &t)?)?);
        names.push(e.clone());
    }
    create_dir(&out)?;
    record("exchange", &c, &out.join("config.json"))?;
    write_navs(&clips, out.join("exchange.navs"))?;
    for (e, clip) in names.iter().zip(&clips) {
        export_gif(clip, out.join(format!("{}.gif", clip_name(&[&e.video]))), c.fps)?;
    }
    if manifest.is_synthetic() {
        let mut scores = serde_json::Map::new();
        for (e, clip) in names.iter().zip(&clips) {
            let truth: VideoClip = manifest.render_cell(&e.identity, &e.motion)?;
            let s = clip_ssim(clip, &truth)?;
            println!("{}\tssim {s:.4}", e.video);
            scores.insert(e.video.clone(), s.into());
        }
        let doc = serde_json::json!({ "exchange_ssim": scores });
        std::fs::write(out.join("eval.json"), serde_json::to_string_pretty(&doc)?)?;
    } else {
        eprintln!("notice: manifest has no scene descriptions; ground truth SSIM omitted");
    }
    eprintln!("generated {} held-out clips in {}", clips.len(), out.display());
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Eval {
    real: Option<PathBuf>,
    gen: Option<PathBuf>,
    extractor_seed: u64,
    out: Option<PathBuf>,
}

pub fn eval(flags: EvalFlags) -> Result<()> {
    let defaults = Eval {
        real: None,
        gen: None,
        extractor_seed: 0,
        out: None,
    };
    let c: Eval = resolve(&defaults, flags.config.as_deref(), &flags)?;
    let real = read_navs(required(&c.real, "real")?)?;
    let gen = read_navs(required(&c.gen, "gen")?)?;
    let out = required(&c.out, "out")?;
    let report = evaluate(&real, &gen, c.extractor_seed)?;
    record("eval", &c, &sidecar_for(&out))?;
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&out, text.clone() + "\n")?;
    println!("{text}");
    Ok(())
}
