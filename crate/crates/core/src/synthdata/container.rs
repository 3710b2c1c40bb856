//! NAVS clip container.

use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoClip;

const MAGIC: &[u8; 4] = b"NAVS";
const VERSION: u32 = 1;

pub fn encode_navs(clips: &[VideoClip]) -> Result<Vec<u8>> {
    let dims: [usize; 4] = match clips.first() {
        Some(c) => c.tensor().shape().try_into().expect("clips are rank 4"),
        None => [0; 4],
    };
    if let Some(c) = clips.iter().find(|c| c.tensor().shape() != dims) {
        return Err(Error::ShapeMismatch {
            op: "write_navs",
            left: dims.to_vec(),
            right: c.tensor().shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(28 + clips.iter().map(|c| c.tensor().len() * 4).sum::<usize>());
    out.extend_from_slice(MAGIC);
    binio::put_u32(&mut out, VERSION);
    binio::put_u32(&mut out, binio::to_u32(clips.len(), "clip count")?);
    for d in dims {
        binio::put_u32(&mut out, binio::to_u32(d, "clip extent")?);
    }
    for c in clips {
        binio::put_f32s(&mut out, c.tensor().data());
    }
    Ok(out)
}

pub fn decode_navs(bytes: &[u8]) -> Result<Vec<VideoClip>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let n = r.u32("clip count")? as usize;
    let mut dims = [0usize; 4];
    for (d, what) in dims.iter_mut().zip(["L", "C", "H", "W"]) {
        *d = r.u32(what)? as usize;
    }
    if n == 0 {
        r.finish("empty clip set")?;
        return Ok(Vec::new());
    }
    if dims.contains(&0) {
        return Err(r.fail(format!("clip extents {dims:?} must be positive")));
    }
    let per_clip = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let expect = per_clip.and_then(|p| p.checked_mul(n)).and_then(|t| t.checked_mul(4));
    if expect != Some(r.remaining()) {
        return Err(r.fail(format!(
            "header says {n} clips of {dims:?} ({} payload bytes) but {} bytes follow",
            expect.map_or_else(|| "overflowing".to_string(), |e| e.to_string()),
            r.remaining()
        )));
    }
    let per_clip = per_clip.unwrap();
    (0..n)
        .map(|i| {
            let data = r.f32s(per_clip, &format!("clip {i}"))?;
            VideoClip::from_tensor(Tensor::new(&dims, data)?)
        })
        .collect()
}

pub fn write_navs(clips: &[VideoClip], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_navs(clips)?)?;
    Ok(())
}

pub fn read_navs(path: impl AsRef<Path>) -> Result<Vec<VideoClip>> {
    decode_navs(&std::fs::read(path)?)
}
