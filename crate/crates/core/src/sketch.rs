//! Mean sketches: single-pass computation, exact merging and the sketch file format.
//!
//! Partial sums are kept in a 128-bit fixed-point accumulator (resolution
//! 2^-80), so combining chunk partials is exact integer addition. The sketch of
//! a dataset therefore does not depend on the order in which chunks are
//! combined, and merging sketches of consecutive chunks reproduces the
//! monolithic sketch bit for bit.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMap, NystromMap, RffMap};
use crate::kernel::GaussianKernel;
use crate::landmarks::{LandmarkSet, SamplingMethod};
use crate::linalg::Matrix;

/// Rows per chunk; each chunk is summed sequentially in floating point.
pub const CHUNK_ROWS: usize = 1024;

const FIXED_SCALE: f64 = (1u128 << 80) as f64;
const MAGIC: &[u8; 4] = b"CLSK";
pub const SKETCH_VERSION: u32 = 1;

/// Per-coordinate bounding box of the sketched data.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    fn empty(d: usize) -> Self {
        Self { lo: vec![f64::INFINITY; d], hi: vec![f64::NEG_INFINITY; d] }
    }

    fn include(&mut self, x: &[f64]) {
        for ((lo, hi), &v) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(x) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }

    fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Largest absolute coordinate inside the box.
    pub fn radius(&self) -> f64 {
        self.lo.iter().chain(&self.hi).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Empirical mean of the feature map over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    values: Vec<f64>,
    n_samples: u64,
    fingerprint: u64,
    acc: Vec<i128>,
    bounds: Bounds,
}

fn to_fixed(v: f64) -> Result<i128> {
    let scaled = (v * FIXED_SCALE).round();
    if !scaled.is_finite() || scaled.abs() >= 2f64.powi(126) {
        return Err(Error::Numerical(format!("feature value {v} outside the accumulator range")));
    }
    Ok(scaled as i128)
}

fn values_from(acc: &[i128], n: u64) -> Vec<f64> {
    acc.iter().map(|&a| (a as f64 / FIXED_SCALE) / n as f64).collect()
}

impl Sketch {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Fails unless the sketch was produced with `map`.
    pub fn check_map(&self, map: &FeatureMap) -> Result<()> {
        let fp = map.fingerprint();
        if fp != self.fingerprint {
            return Err(Error::FingerprintMismatch { expected: fp, got: self.fingerprint });
        }
        Ok(())
    }

    /// Pooled sketch of the concatenated datasets.
    pub fn merge(&self, other: &Sketch) -> Result<Sketch> {
        if self.fingerprint != other.fingerprint {
            return Err(Error::FingerprintMismatch { expected: self.fingerprint, got: other.fingerprint });
        }
        let mut acc = Vec::with_capacity(self.acc.len());
        for (a, b) in self.acc.iter().zip(&other.acc) {
            acc.push(a.checked_add(*b).ok_or_else(|| Error::Numerical("sketch accumulator overflow".into()))?);
        }
        let n_samples = self.n_samples + other.n_samples;
        Ok(Sketch {
            values: values_from(&acc, n_samples),
            n_samples,
            fingerprint: self.fingerprint,
            acc,
            bounds: self.bounds.union(&other.bounds),
        })
    }
}

/// Streaming sketch computation, one row at a time.
pub struct SketchBuilder<'a> {
    map: &'a FeatureMap,
    raw: Vec<f64>,
    chunk_sum: Vec<f64>,
    // Neumaier compensation for chunk_sum
    chunk_comp: Vec<f64>,
    chunk_rows: usize,
    acc: Vec<i128>,
    n: u64,
    bounds: Bounds,
}

impl<'a> SketchBuilder<'a> {
    pub fn new(map: &'a FeatureMap) -> Self {
        let m = map.dim();
        Self {
            map,
            raw: vec![0.0; m],
            chunk_sum: vec![0.0; m],
            chunk_comp: vec![0.0; m],
            chunk_rows: 0,
            acc: vec![0; m],
            n: 0,
            bounds: Bounds::empty(map.input_dim()),
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.map.input_dim(), x.len())?;
        self.map.raw_embed_into(x, &mut self.raw);
        for ((s, c), &r) in self.chunk_sum.iter_mut().zip(&mut self.chunk_comp).zip(&self.raw) {
            let t = *s + r;
            *c += if s.abs() >= r.abs() { (*s - t) + r } else { (r - t) + *s };
            *s = t;
        }
        self.bounds.include(x);
        self.chunk_rows += 1;
        self.n += 1;
        if self.chunk_rows == CHUNK_ROWS {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.chunk_rows == 0 {
            return Ok(());
        }
        // the transform is linear, so it is applied once per chunk
        for (s, c) in self.chunk_sum.iter_mut().zip(&mut self.chunk_comp) {
            *s += *c;
            *c = 0.0;
        }
        let embedded = self.map.transform(&self.chunk_sum);
        for (a, v) in self.acc.iter_mut().zip(&embedded) {
            *a = a.checked_add(to_fixed(*v)?).ok_or_else(|| Error::Numerical("sketch accumulator overflow".into()))?;
        }
        self.chunk_sum.iter_mut().for_each(|v| *v = 0.0);
        self.chunk_rows = 0;
        Ok(())
    }

    pub fn finish(mut self) -> Result<Sketch> {
        self.flush()?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("cannot sketch an empty dataset".into()));
        }
        Ok(Sketch {
            values: values_from(&self.acc, self.n),
            n_samples: self.n,
            fingerprint: self.map.fingerprint(),
            acc: self.acc,
            bounds: self.bounds,
        })
    }
}

/// `s = (1/n) Σ Φ(x_i)` over the rows of `x`.
pub fn sketch_dataset(map: &FeatureMap, x: &Matrix) -> Result<Sketch> {
    sketch_rows(map, x.iter_rows())
}

pub fn sketch_rows<'r>(map: &FeatureMap, rows: impl IntoIterator<Item = &'r [f64]>) -> Result<Sketch> {
    let mut b = SketchBuilder::new(map);
    for r in rows {
        b.push(r)?;
    }
    b.finish()
}

fn encode_map(w: &mut Writer, map: &FeatureMap) {
    match map {
        FeatureMap::Nystrom(n) => {
            let lm = n.landmarks();
            w.u8(0);
            w.f64(n.kernel().bandwidth_sq());
            w.f64(n.rel_tol());
            w.u8(lm.method.tag());
            w.u64(lm.seed);
            w.f64(lm.als_lambda.unwrap_or(f64::NAN));
            w.u8(lm.rank_exhausted as u8);
            w.u64(lm.points.rows() as u64);
            w.u64(lm.points.cols() as u64);
            for &i in &lm.source_indices {
                w.u64(i as u64);
            }
            w.f64s(lm.points.as_slice());
        }
        FeatureMap::Rff(r) => {
            w.u8(1);
            w.f64(r.bandwidth_sq());
            w.u64(r.seed());
            w.u64(r.input_dim() as u64);
            w.u64(r.m_half() as u64);
        }
    }
}

fn decode_map(r: &mut Reader<'_>) -> Result<FeatureMap> {
    match r.u8()? {
        0 => {
            let kernel = GaussianKernel::new(r.f64()?).map_err(|e| Error::Corrupt(e.to_string()))?;
            let rel_tol = r.f64()?;
            let method = SamplingMethod::from_tag(r.u8()?).ok_or_else(|| Error::Corrupt("unknown sampling tag".into()))?;
            let seed = r.u64()?;
            let lam = r.f64()?;
            let rank_exhausted = r.u8()? != 0;
            let m = r.usize()?;
            let d = r.usize()?;
            let mut source_indices = Vec::with_capacity(m.min(r.remaining() / 8));
            for _ in 0..m {
                source_indices.push(r.usize()?);
            }
            let total = m.checked_mul(d).ok_or_else(|| Error::Corrupt("landmark size overflow".into()))?;
            let points = Matrix::from_vec(m, d, r.f64s(total)?)?;
            let landmarks = LandmarkSet {
                points,
                source_indices,
                method,
                seed,
                als_lambda: (!lam.is_nan()).then_some(lam),
                rank_exhausted,
            };
            Ok(NystromMap::new(landmarks, kernel, rel_tol)?.into())
        }
        1 => {
            let bw = r.f64()?;
            let seed = r.u64()?;
            let d = r.usize()?;
            let m_half = r.usize()?;
            Ok(RffMap::new(d, m_half, bw, seed).map_err(|e| Error::Corrupt(e.to_string()))?.into())
        }
        t => Err(Error::Corrupt(format!("unknown map family tag {t}"))),
    }
}

fn checksum(payload: &[u8]) -> [u8; 8] {
    Sha256::digest(payload)[..8].try_into().expect("digest has 32 bytes")
}

/// Serializes a sketch together with the parameters needed to rebuild its map.
pub fn encode_sketch(sketch: &Sketch, map: &FeatureMap) -> Result<Vec<u8>> {
    sketch.check_map(map)?;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(SKETCH_VERSION);
    encode_map(&mut w, map);
    w.u64(sketch.fingerprint);
    w.u64(sketch.n_samples);
    w.u64(sketch.values.len() as u64);
    w.f64s(&sketch.values);
    for &a in &sketch.acc {
        w.i128(a);
    }
    w.u64(sketch.bounds.lo.len() as u64);
    w.f64s(&sketch.bounds.lo);
    w.f64s(&sketch.bounds.hi);
    let sum = checksum(&w.buf);
    w.bytes(&sum);
    Ok(w.buf)
}

pub fn decode_sketch(bytes: &[u8]) -> Result<(Sketch, FeatureMap)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("not a sketch file (bad magic)".into()));
    }
    let mut r = Reader::new(bytes);
    r.take(4)?;
    let version = r.u32()?;
    if version != SKETCH_VERSION {
        return Err(Error::VersionMismatch { expected: SKETCH_VERSION, found: version });
    }
    if bytes.len() < 16 {
        return Err(Error::Corrupt("truncated sketch file".into()));
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 8);
    let map = decode_map(&mut r)?;
    let fingerprint = r.u64()?;
    let n_samples = r.u64()?;
    let m = r.usize()?;
    let values = r.f64s(m)?;
    let mut acc = Vec::with_capacity(m.min(r.remaining() / 16));
    for _ in 0..m {
        acc.push(r.i128()?);
    }
    let d = r.usize()?;
    let lo = r.f64s(d)?;
    let hi = r.f64s(d)?;
    if r.position() != payload.len() {
        return Err(Error::Corrupt("unexpected trailing bytes".into()));
    }
    if checksum(payload) != trailer {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    if n_samples == 0 {
        return Err(Error::Corrupt("sketch with zero samples".into()));
    }
    let sketch = Sketch { values, n_samples, fingerprint, acc, bounds: Bounds { lo, hi } };
    if map.dim() != m {
        return Err(Error::Corrupt(format!("sketch dimension {m} does not match map dimension {}", map.dim())));
    }
    sketch.check_map(&map)?;
    Ok((sketch, map))
}

pub fn save_sketch(path: impl AsRef<Path>, sketch: &Sketch, map: &FeatureMap) -> Result<()> {
    fs::write(path, encode_sketch(sketch, map)?)?;
    Ok(())
}

pub fn load_sketch(path: impl AsRef<Path>) -> Result<(Sketch, FeatureMap)> {
    decode_sketch(&fs::read(path)?)
}
