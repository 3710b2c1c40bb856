//! Python bindings: datasets, training, generation and metrics.

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use latentvid::losses::LossConfig;
use latentvid::metrics;
use latentvid::model::{generate_video, interpolate_frames};
use latentvid::synthdata::{self, DatasetManifest, Geometry};
use latentvid::trainer::{self, TrainConfig, TrainingSet};
use latentvid::{Error, FrameShape, ModelConfig, Tensor, VideoClip};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::UnknownName(n) => PyKeyError::new_err(n),
        Error::InvalidArgument(_) | Error::ShapeMismatch { .. } | Error::Format { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A clip of shape `(frames, channels, height, width)` with values in `[0, 1]`.
#[pyclass(module = "latentvid_py", frozen, from_py_object)]
#[derive(Clone)]
struct Video {
    inner: VideoClip,
}

#[pymethods]
impl Video {
    #[new]
    fn new(data: Vec<f32>, shape: (usize, usize, usize, usize)) -> PyResult<Self> {
        let (l, c, h, w) = shape;
        let t = Tensor::new(&[l, c, h, w], data).map_err(to_py)?;
        Ok(Video {
            inner: VideoClip::from_tensor(t).map_err(to_py)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.inner.tensor().shape();
        (s[0], s[1], s[2], s[3])
    }

    /// Flat row-major values.
    fn data(&self) -> Vec<f32> {
        self.inner.tensor().data().to_vec()
    }

    fn frame(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "frame {i} out of range for {} frames",
                self.inner.len()
            )));
        }
        Ok(self.inner.frame_data(i).to_vec())
    }

    fn mean_abs_diff(&self, other: &Video) -> PyResult<f64> {
        self.inner.mean_abs_diff(&other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Video(shape={:?})", self.shape())
    }
}

fn wrap(clips: Vec<VideoClip>) -> Vec<Video> {
    clips.into_iter().map(|inner| Video { inner }).collect()
}

fn unwrap(videos: &[Video]) -> Vec<VideoClip> {
    videos.iter().map(|v| v.inner.clone()).collect()
}

/// Training clips and their manifest.
#[pyclass(module = "latentvid_py", frozen)]
struct Dataset {
    manifest: DatasetManifest,
    clips: Vec<VideoClip>,
}

#[pymethods]
impl Dataset {
    /// Render a synthetic identity x motion grid. `holdout` lists
    /// `(identity, motion)` cells, 0-based.
    #[staticmethod]
    #[pyo3(signature = (identities=3, motions=3, holdout=Vec::new(), frames=8, size=16, channels=3, seed=0))]
    fn synthetic(
        identities: usize,
        motions: usize,
        holdout: Vec<(usize, usize)>,
        frames: usize,
        size: usize,
        channels: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let geometry = Geometry {
            frames,
            channels,
            height: size,
            width: size,
        };
        let (manifest, clips) =
            synthdata::default_matrix_dataset(identities, motions, &holdout, geometry, seed).map_err(to_py)?;
        Ok(Dataset { manifest, clips })
    }

    #[staticmethod]
    fn load(navs: &str, manifest: &str) -> PyResult<Self> {
        Ok(Dataset {
            clips: synthdata::read_navs(navs).map_err(to_py)?,
            manifest: DatasetManifest::load(manifest).map_err(to_py)?,
        })
    }

    fn save(&self, navs: &str, manifest: &str) -> PyResult<()> {
        synthdata::write_navs(&self.clips, navs).map_err(to_py)?;
        self.manifest.save(manifest).map_err(to_py)
    }

    fn clips(&self) -> Vec<Video> {
        wrap(self.clips.clone())
    }

    /// `(video, identity, motion)` of every training clip, in clip order.
    fn labels(&self) -> Vec<(String, String, String)> {
        self.manifest
            .training_entries()
            .map(|e| (e.video.clone(), e.identity.clone(), e.motion.clone()))
            .collect()
    }

    fn held_out(&self) -> Vec<(String, String)> {
        self.manifest
            .held_out_entries()
            .map(|e| (e.identity.clone(), e.motion.clone()))
            .collect()
    }

    /// Ground truth for any cell of a synthetic grid.
    fn render(&self, identity: &str, motion: &str) -> PyResult<Video> {
        Ok(Video {
            inner: self.manifest.render_cell(identity, motion).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.clips.len()
    }
}

/// Trained model and latent dictionary.
#[pyclass(module = "latentvid_py", frozen)]
struct Checkpoint {
    inner: trainer::Checkpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Checkpoint {
            inner: trainer::load_checkpoint(path, None).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        trainer::save_checkpoint(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    fn static_names(&self) -> Vec<String> {
        self.inner.dict.static_names()
    }

    fn transient_names(&self) -> Vec<String> {
        self.inner.dict.transient_names()
    }

    /// Per-epoch `(rec, static, triplet, total)`, unweighted terms.
    fn loss_history(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|s| (s.loss.rec, s.loss.static_term, s.loss.triplet, s.loss.total))
            .collect()
    }

    fn generate(&self, static_name: &str, transient_name: &str) -> PyResult<Video> {
        let code = self.inner.dict.compose(static_name, transient_name).map_err(to_py)?;
        Ok(Video {
            inner: generate_video(&self.inner.model, &code).map_err(to_py)?,
        })
    }

    /// `steps` frames from transient codes interpolated between 1-based
    /// frames `start` and `end` of the named entry.
    fn interpolate(
        &self,
        static_name: &str,
        transient_name: &str,
        start: usize,
        end: usize,
        steps: usize,
    ) -> PyResult<Video> {
        let dict = &self.inner.dict;
        let z_s = dict.get_static(static_name).map_err(to_py)?;
        let z_t = dict.get_transient(transient_name).map_err(to_py)?;
        Ok(Video {
            inner: interpolate_frames(&self.inner.model, z_s, z_t, start, end, steps).map_err(to_py)?,
        })
    }
}

/// Train on `dataset`. Unset options keep the library defaults.
#[pyfunction]
#[pyo3(signature = (
    dataset, *, epochs=None, warmup=None, lr_gen=None, lr_rnn=None, lr_latent=None,
    lambda_s=None, lambda_t=None, rank=None, scheme=None, seed=0,
    static_dim=None, transient_dim=None, base_channels=None, hidden=None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &Dataset,
    epochs: Option<usize>,
    warmup: Option<usize>,
    lr_gen: Option<f64>,
    lr_rnn: Option<f64>,
    lr_latent: Option<f64>,
    lambda_s: Option<f64>,
    lambda_t: Option<f64>,
    rank: Option<usize>,
    scheme: Option<&str>,
    seed: u64,
    static_dim: Option<usize>,
    transient_dim: Option<usize>,
    base_channels: Option<usize>,
    hidden: Option<usize>,
) -> PyResult<Checkpoint> {
    let m = ModelConfig::default();
    let t = TrainConfig::default();
    let [frames, channels, height, width]: [usize; 4] = dataset
        .clips
        .first()
        .ok_or_else(|| PyValueError::new_err("dataset has no training clips"))?
        .tensor()
        .shape()
        .try_into()
        .expect("clips are rank 4");
    let model = ModelConfig {
        static_dim: static_dim.unwrap_or(m.static_dim),
        transient_dim: transient_dim.unwrap_or(m.transient_dim),
        frames,
        frame: FrameShape::new(channels, height, width),
        base_channels: base_channels.unwrap_or(m.base_channels),
        hidden: hidden.unwrap_or(m.hidden),
        seed,
    };
    let cfg = TrainConfig {
        epochs: epochs.unwrap_or(t.epochs),
        warmup_epochs: warmup.unwrap_or(t.warmup_epochs),
        lr_gen: lr_gen.unwrap_or(t.lr_gen),
        lr_rnn: lr_rnn.unwrap_or(t.lr_rnn),
        lr_latent: lr_latent.unwrap_or(t.lr_latent),
        loss: LossConfig {
            lambda_static: lambda_s.unwrap_or(t.loss.lambda_static),
            lambda_triplet: lambda_t.unwrap_or(t.loss.lambda_triplet),
            ..t.loss.clone()
        },
        rank,
        scheme: match scheme {
            Some(s) => s.parse().map_err(to_py)?,
            None => t.scheme,
        },
        seed,
        ..t
    };
    let data = TrainingSet::new(dataset.clips.clone(), dataset.manifest.training_labels()).map_err(to_py)?;
    let inner = py.detach(|| trainer::fit(&model, &cfg, &data)).map_err(to_py)?;
    Ok(Checkpoint { inner })
}

/// MCS and FCS of `generated` against `real`, as a dict.
#[pyfunction]
#[pyo3(signature = (real, generated, extractor_seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    real: Vec<Video>,
    generated: Vec<Video>,
    extractor_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate(&unwrap(&real), &unwrap(&generated), extractor_seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mcs", r.mcs)?;
    d.set_item("fcs", r.fcs)?;
    d.set_item("n_real", r.n_real)?;
    d.set_item("n_gen", r.n_gen)?;
    d.set_item("extractor_seed", r.extractor_seed)?;
    Ok(d)
}

/// Mean SSIM over corresponding frames of two clips.
#[pyfunction]
fn clip_ssim(a: &Video, b: &Video) -> PyResult<f64> {
    metrics::clip_ssim(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
fn fcs(videos: Vec<Video>) -> PyResult<f64> {
    metrics::fcs(&unwrap(&videos)).map_err(to_py)
}

#[pyfunction]
fn read_navs(path: &str) -> PyResult<Vec<Video>> {
    Ok(wrap(synthdata::read_navs(path).map_err(to_py)?))
}

#[pyfunction]
fn write_navs(videos: Vec<Video>, path: &str) -> PyResult<()> {
    synthdata::write_navs(&unwrap(&videos), path).map_err(to_py)
}

#[pymodule]
fn latentvid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Video>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(clip_ssim, m)?)?;
    m.add_function(wrap_pyfunction!(fcs, m)?)?;
    m.add_function(wrap_pyfunction!(read_navs, m)?)?;
    m.add_function(wrap_pyfunction!(write_navs, m)?)?;
    Ok(())
}
