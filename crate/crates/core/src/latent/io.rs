//! NVLD dictionary files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatentDictionary, LatentDims, SharingScheme};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NVLD";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    d_s: usize,
    d_t: usize,
    l: usize,
    scheme: SharingScheme,
    static_names: Vec<String>,
    transient_names: Vec<String>,
}

pub fn encode_dictionary(dict: &LatentDictionary) -> Result<Vec<u8>> {
    let manifest = Manifest {
        d_s: dict.dims.static_dim,
        d_t: dict.dims.transient_dim,
        l: dict.dims.frames,
        scheme: dict.scheme,
        static_names: dict.static_names(),
        transient_names: dict.transient_names(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_json(&mut out, &serde_json::to_string(&manifest)?)?;
    for (_, v) in dict.statics() {
        binio::put_f32s(&mut out, v);
    }
    for (_, m) in dict.transients() {
        binio::put_f32s(&mut out, m.data());
    }
    Ok(out)
}

/// Parse a dictionary block from the front of `r`, leaving the cursor after it.
pub(crate) fn read_dictionary(r: &mut Reader<'_>) -> Result<LatentDictionary> {
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let m: Manifest = r.json("dictionary manifest")?;
    if m.d_s == 0 || m.d_t == 0 || m.l == 0 {
        return Err(r.fail(format!(
            "manifest dims must be positive, got d_s={} d_t={} l={}",
            m.d_s, m.d_t, m.l
        )));
    }
    let dims = LatentDims {
        static_dim: m.d_s,
        transient_dim: m.d_t,
        frames: m.l,
    };
    let mut dict = LatentDictionary::new(dims, m.scheme);
    for name in &m.static_names {
        let v = r.f32s(m.d_s, "static payload")?;
        dict.insert_static(name, v).map_err(|e| r.fail(e.to_string()))?;
    }
    for name in &m.transient_names {
        let v = r.f32s(m.d_t * m.l, "transient payload")?;
        let t = Tensor::new(&[m.l, m.d_t], v)?;
        dict.insert_transient(name, t).map_err(|e| r.fail(e.to_string()))?;
    }
    Ok(dict)
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<LatentDictionary> {
    let mut r = Reader::new(bytes);
    let dict = read_dictionary(&mut r)?;
    r.finish("dictionary payload")?;
    Ok(dict)
}

pub fn save_dictionary(dict: &LatentDictionary, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dictionary(dict)?)?;
    Ok(())
}

/// Load a dictionary, optionally checking it against the dims a model expects.
pub fn load_dictionary(path: impl AsRef<Path>, expect: Option<LatentDims>) -> Result<LatentDictionary> {
    let dict = decode_dictionary(&std::fs::read(path)?)?;
    if let Some(d) = expect {
        if d != dict.dims {
            return Err(Error::invalid(format!(
                "dictionary dims {:?} do not match expected {:?}",
                dict.dims, d
            )));
        }
    }
    Ok(dict)
}
