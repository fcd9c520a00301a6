//! Datasets: the CLDS binary format, CSV import and the synthetic mixture generator.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::codec::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, Purpose};

const MAGIC: &[u8; 4] = b"CLDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Matrix,
    pub labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(rows: Matrix, labels: Option<Vec<i64>>) -> Result<Self> {
        if rows.rows() == 0 || rows.cols() == 0 {
            return Err(Error::InvalidArgument("a dataset needs at least one row and one column".into()));
        }
        if let Some(l) = &labels {
            check_dim(rows.rows(), l.len())?;
        }
        Ok(Self { rows, labels })
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Layout: `CLDS`, version u32, n u64, d u32, n·d f64 row-major, a u8 label
/// flag and, when set, n i64 labels. All little-endian.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(DATASET_VERSION);
    w.u64(ds.n() as u64);
    w.u32(ds.dim() as u32);
    w.f64s(ds.rows.as_slice());
    match &ds.labels {
        Some(labels) => {
            w.u8(1);
            labels.iter().for_each(|&l| w.i64(l));
        }
        None => w.u8(0),
    }
    w.buf
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Corrupt("not a CLDS dataset (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch { expected: DATASET_VERSION, found: version });
    }
    let n = r.usize()?;
    let d = r.u32()? as usize;
    let count = n.checked_mul(d).filter(|c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()));
    let count = count.ok_or_else(|| Error::Corrupt(format!("truncated: header declares {n}×{d} values")))?;
    let data = r.f64s(count)?;
    let labels = match r.u8()? {
        0 => None,
        1 => Some((0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?),
        f => return Err(Error::Corrupt(format!("bad label flag {f}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
    }
    Dataset::new(Matrix::from_vec(n, d, data)?, labels)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

/// Reads a CLDS file, or a CSV file when the extension is `.csv`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return load_csv(path, false);
    }
    decode_dataset(&fs::read(path)?)
}

pub fn load_csv(path: impl AsRef<Path>, labeled: bool) -> Result<Dataset> {
    parse_csv(&fs::read_to_string(path)?, labeled)
}

/// Comma-separated rows; with `labeled` the last column holds integer labels.
/// Blank lines and `#` comments are skipped, as is a non-numeric first line.
pub fn parse_csv(text: &str, labeled: bool) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let mut vals = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && labels.is_empty() && lineno == first_content_line(text) => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
        };
        if labeled {
            let l = vals.pop().ok_or_else(|| Error::Parse(format!("line {}: empty row", lineno + 1)))?;
            if l.fract() != 0.0 || !l.is_finite() {
                return Err(Error::Parse(format!("line {}: label {l} is not an integer", lineno + 1)));
            }
            labels.push(l as i64);
        }
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(Error::Parse(format!("line {}: expected {} columns, got {}", lineno + 1, first.len(), vals.len())));
            }
        }
        rows.push(vals);
    }
    Dataset::new(Matrix::from_rows(&rows)?, labeled.then_some(labels))
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .unwrap_or(0)
}

/// Mixture of k unit-covariance Gaussians with means drawn from `N(0, σ² I)`,
/// `σ = s·k^{1/d}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn inter_std(&self) -> f64 {
        self.separation * (self.k as f64).powf(1.0 / self.d as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("k, d and n must be positive".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidArgument("separation must be positive".into()));
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    Ok(gen_synthetic_with_means(spec)?.0)
}

/// Also returns the drawn component means (k×d). Labels are component indices.
pub fn gen_synthetic_with_means(spec: &SyntheticSpec) -> Result<(Dataset, Matrix)> {
    spec.validate()?;
    let (k, d, n) = (spec.k, spec.d, spec.n);
    let scale = spec.inter_std();
    let mut means_rng = stream(spec.seed, Purpose::SyntheticMeans);
    let means = Matrix::from_fn(k, d, |_, _| scale * means_rng.sample::<f64, _>(StandardNormal));
    let mut assign_rng = stream(spec.seed, Purpose::SyntheticAssignments);
    let labels: Vec<i64> = (0..n).map(|_| assign_rng.gen_range(0..k) as i64).collect();
    let mut noise_rng = stream(spec.seed, Purpose::SyntheticNoise);
    let rows = Matrix::from_fn(n, d, |i, j| means.get(labels[i] as usize, j) + noise_rng.sample::<f64, _>(StandardNormal));
    Ok((Dataset::new(rows, Some(labels))?, means))
}
