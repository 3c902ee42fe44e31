//! Binary checkpoint files for trained models.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "CRAE" | version u32 | mode u64 | orientation u64 | n u64 | m u64
//! | d_p u64 | V | W | [T or U] | c | b | block_len u64 | block bytes
//! ```
//!
//! The float arrays are raw f64 values in row-major order. The trailing
//! block is UTF-8 `key=value` lines covering every hyperparameter; floats
//! are written with the shortest round-tripping decimal form, so a
//! save/load cycle is bitwise exact. `n` is the vector dimension (columns
//! of V), `m` the number of training vectors in the stored orientation.
//!
//! The checkpoint API is f64 only; training in another precision should
//! widen before saving.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::data::Orientation;
use crate::model::{
    DecayKind, ExtraParams, HyperParams, ModelError, ModelParams, Optimizer, ReflectionMode,
};
use crate::numerics::{DenseMatrix, DenseVector};
use crate::{HyperParams64, ModelParams64};

const MAGIC: &[u8; 4] = b"CRAE";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("model: {0}")]
    Model(#[from] ModelError),
}

pub type CheckpointResult<T> = Result<T, CheckpointError>;

/// Everything a checkpoint stores.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams64,
    pub hyper: HyperParams64,
    /// Number of training vectors (items for item-based, users otherwise).
    pub num_vectors: u64,
}

fn mode_tag(mode: ReflectionMode) -> u64 {
    match mode {
        ReflectionMode::TiedTranspose => 0,
        ReflectionMode::IndependentU => 1,
        ReflectionMode::ImplicitT => 2,
        ReflectionMode::Plain => 3,
    }
}

fn mode_from_tag(tag: u64) -> CheckpointResult<ReflectionMode> {
    match tag {
        0 => Ok(ReflectionMode::TiedTranspose),
        1 => Ok(ReflectionMode::IndependentU),
        2 => Ok(ReflectionMode::ImplicitT),
        3 => Ok(ReflectionMode::Plain),
        other => Err(CheckpointError::Corrupt(format!("unknown mode tag {other}"))),
    }
}

fn orientation_tag(o: Orientation) -> u64 {
    match o {
        Orientation::ItemBased => 0,
        Orientation::UserBased => 1,
    }
}

fn orientation_from_tag(tag: u64) -> CheckpointResult<Orientation> {
    match tag {
        0 => Ok(Orientation::ItemBased),
        1 => Ok(Orientation::UserBased),
        other => Err(CheckpointError::Corrupt(format!(
            "unknown orientation tag {other}"
        ))),
    }
}

fn hyper_block(hyper: &HyperParams64) -> String {
    let mut s = String::new();
    s.push_str(&format!("d_p={}\n", hyper.d_p));
    s.push_str(&format!("decay={}\n", hyper.decay.as_str()));
    s.push_str(&format!("alpha={}\n", hyper.alpha));
    s.push_str(&format!("lambda1={}\n", hyper.lambda1));
    s.push_str(&format!("lambda2={}\n", hyper.lambda2));
    s.push_str(&format!("lambda3={}\n", hyper.lambda3));
    s.push_str(&format!("lambda4={}\n", hyper.lambda4));
    s.push_str(&format!("learning_rate={}\n", hyper.learning_rate));
    s.push_str(&format!("batch_size={}\n", hyper.batch_size));
    s.push_str(&format!("max_epochs={}\n", hyper.max_epochs));
    s.push_str(&format!("patience={}\n", hyper.patience));
    s.push_str(&format!("residual={}\n", hyper.residual));
    s.push_str(&format!("orientation={}\n", hyper.orientation.as_str()));
    s.push_str(&format!("optimizer={}\n", hyper.optimizer.as_str()));
    s.push_str(&format!("clip_predictions={}\n", hyper.clip_predictions));
    s.push_str(&format!("seed={}\n", hyper.seed));
    s
}

fn parse_hyper_block(block: &str) -> CheckpointResult<HyperParams64> {
    fn bad(key: &str, value: &str) -> CheckpointError {
        CheckpointError::Corrupt(format!("bad value for {key}: {value:?}"))
    }
    let mut hyper: HyperParams64 = HyperParams::default();
    let mut seen = std::collections::BTreeSet::new();
    for line in block.lines() {
        let Some((key, value)) = line.split_once('=') else {
            return Err(CheckpointError::Corrupt(format!(
                "hyperparameter line without '=': {line:?}"
            )));
        };
        if !seen.insert(key.to_string()) {
            return Err(CheckpointError::Corrupt(format!("duplicate key {key}")));
        }
        match key {
            "d_p" => hyper.d_p = value.parse().map_err(|_| bad(key, value))?,
            "decay" => hyper.decay = DecayKind::parse(value).ok_or_else(|| bad(key, value))?,
            "alpha" => hyper.alpha = value.parse().map_err(|_| bad(key, value))?,
            "lambda1" => hyper.lambda1 = value.parse().map_err(|_| bad(key, value))?,
            "lambda2" => hyper.lambda2 = value.parse().map_err(|_| bad(key, value))?,
            "lambda3" => hyper.lambda3 = value.parse().map_err(|_| bad(key, value))?,
            "lambda4" => hyper.lambda4 = value.parse().map_err(|_| bad(key, value))?,
            "learning_rate" => hyper.learning_rate = value.parse().map_err(|_| bad(key, value))?,
            "batch_size" => hyper.batch_size = value.parse().map_err(|_| bad(key, value))?,
            "max_epochs" => hyper.max_epochs = value.parse().map_err(|_| bad(key, value))?,
            "patience" => hyper.patience = value.parse().map_err(|_| bad(key, value))?,
            "residual" => hyper.residual = value.parse().map_err(|_| bad(key, value))?,
            "orientation" => {
                hyper.orientation = Orientation::parse(value).ok_or_else(|| bad(key, value))?
            }
            "optimizer" => {
                hyper.optimizer = Optimizer::parse(value).ok_or_else(|| bad(key, value))?
            }
            "clip_predictions" => {
                hyper.clip_predictions = value.parse().map_err(|_| bad(key, value))?
            }
            "seed" => hyper.seed = value.parse().map_err(|_| bad(key, value))?,
            other => {
                return Err(CheckpointError::Corrupt(format!(
                    "unknown hyperparameter key {other}"
                )))
            }
        }
    }
    let expected = 16;
    if seen.len() != expected {
        return Err(CheckpointError::Corrupt(format!(
            "hyperparameter block has {} keys, expected {expected}",
            seen.len()
        )));
    }
    Ok(hyper)
}

fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save(
    path: &Path,
    params: &ModelParams64,
    hyper: &HyperParams64,
    num_vectors: u64,
) -> CheckpointResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&mode_tag(params.mode()).to_le_bytes())?;
    out.write_all(&orientation_tag(hyper.orientation).to_le_bytes())?;
    out.write_all(&(params.v.cols() as u64).to_le_bytes())?;
    out.write_all(&num_vectors.to_le_bytes())?;
    out.write_all(&(params.v.rows() as u64).to_le_bytes())?;
    write_f64s(&mut out, params.v.as_slice())?;
    write_f64s(&mut out, params.w.as_slice())?;
    match &params.extra {
        ExtraParams::None => {}
        ExtraParams::MapT(t) => write_f64s(&mut out, t.as_slice())?,
        ExtraParams::ReflectorU(u) => write_f64s(&mut out, u.as_slice())?,
    }
    write_f64s(&mut out, params.c.as_slice())?;
    write_f64s(&mut out, params.b.as_slice())?;
    let block = hyper_block(hyper);
    out.write_all(&(block.len() as u64).to_le_bytes())?;
    out.write_all(block.as_bytes())?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CheckpointResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!(
                "file truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> CheckpointResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CheckpointResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> CheckpointResult<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| {
            CheckpointError::Corrupt("array length overflows".to_string())
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load(path: &Path) -> CheckpointResult<Checkpoint> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mode = mode_from_tag(cur.u64()?)?;
    let orientation = orientation_from_tag(cur.u64()?)?;
    let n = cur.u64()? as usize;
    let num_vectors = cur.u64()?;
    let d_p = cur.u64()? as usize;
    if n == 0 || d_p == 0 {
        return Err(CheckpointError::Corrupt(format!(
            "degenerate dimensions n={n} d_p={d_p}"
        )));
    }
    let v = DenseMatrix::from_vec(d_p, n, cur.f64s(d_p * n)?)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let w = DenseMatrix::from_vec(n, d_p, cur.f64s(d_p * n)?)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let extra = match mode {
        ReflectionMode::TiedTranspose | ReflectionMode::Plain => ExtraParams::None,
        ReflectionMode::ImplicitT => ExtraParams::MapT(
            DenseMatrix::from_vec(d_p, d_p, cur.f64s(d_p * d_p)?)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
        ),
        ReflectionMode::IndependentU => ExtraParams::ReflectorU(
            DenseMatrix::from_vec(n, d_p, cur.f64s(d_p * n)?)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
        ),
    };
    let c = DenseVector::from_vec(cur.f64s(d_p)?);
    let b = DenseVector::from_vec(cur.f64s(n)?);
    let block_len = cur.u64()? as usize;
    let block = std::str::from_utf8(cur.take(block_len)?)
        .map_err(|_| CheckpointError::Corrupt("hyperparameter block is not UTF-8".to_string()))?;
    let hyper = parse_hyper_block(block)?;
    if cur.pos != buf.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after hyperparameter block",
            buf.len() - cur.pos
        )));
    }
    if hyper.orientation != orientation {
        return Err(CheckpointError::Corrupt(
            "orientation tag disagrees with hyperparameter block".to_string(),
        ));
    }
    if hyper.d_p != d_p {
        return Err(CheckpointError::Corrupt(format!(
            "d_p header {d_p} disagrees with hyperparameter block {}",
            hyper.d_p
        )));
    }
    let params = ModelParams::new(mode, v, w, c, b, extra)?;
    Ok(Checkpoint {
        params,
        hyper,
        num_vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use tempfile::tempdir;

    fn sample(mode: ReflectionMode) -> (ModelParams64, HyperParams64) {
        let hyper = HyperParams {
            d_p: 4,
            alpha: 2.5,
            lambda3: 0.0375,
            seed: 99,
            residual: false,
            orientation: Orientation::UserBased,
            ..HyperParams::default()
        };
        let params = init_params(mode, 7, hyper.d_p, hyper.seed).unwrap();
        (params, hyper)
    }

    #[test]
    fn round_trips_every_mode_bitwise() {
        let dir = tempdir().unwrap();
        for mode in [
            ReflectionMode::TiedTranspose,
            ReflectionMode::IndependentU,
            ReflectionMode::ImplicitT,
            ReflectionMode::Plain,
        ] {
            let (params, hyper) = sample(mode);
            let path = dir.path().join(format!("{}.ckpt", mode.as_str()));
            save(&path, &params, &hyper, 31).unwrap();
            let ckpt = load(&path).unwrap();
            assert_eq!(ckpt.params, params);
            assert_eq!(ckpt.hyper, hyper);
            assert_eq!(ckpt.num_vectors, 31);
        }
    }

    #[test]
    fn float_fields_survive_awkward_values() {
        let (params, mut hyper) = sample(ReflectionMode::TiedTranspose);
        hyper.alpha = 0.1 + 0.2;
        hyper.learning_rate = 1e-300;
        hyper.lambda1 = f64::MIN_POSITIVE;
        let dir = tempdir().unwrap();
        let path = dir.path().join("awkward.ckpt");
        save(&path, &params, &hyper, 1).unwrap();
        let ckpt = load(&path).unwrap();
        assert_eq!(ckpt.hyper.alpha.to_bits(), hyper.alpha.to_bits());
        assert_eq!(
            ckpt.hyper.learning_rate.to_bits(),
            hyper.learning_rate.to_bits()
        );
        assert_eq!(ckpt.hyper.lambda1.to_bits(), hyper.lambda1.to_bits());
    }

    #[test]
    fn rejects_damaged_files() {
        let (params, hyper) = sample(ReflectionMode::ImplicitT);
        let dir = tempdir().unwrap();
        let path = dir.path().join("good.ckpt");
        save(&path, &params, &hyper, 9).unwrap();
        let good = std::fs::read(&path).unwrap();

        let bad = dir.path().join("bad.ckpt");

        let mut magic = good.clone();
        magic[0] = b'X';
        std::fs::write(&bad, &magic).unwrap();
        assert!(matches!(load(&bad), Err(CheckpointError::BadMagic)));

        let mut version = good.clone();
        version[4] = 200;
        std::fs::write(&bad, &version).unwrap();
        assert!(matches!(load(&bad), Err(CheckpointError::Version(_))));

        std::fs::write(&bad, &good[..good.len() / 2]).unwrap();
        assert!(matches!(load(&bad), Err(CheckpointError::Corrupt(_))));

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&bad, &trailing).unwrap();
        assert!(matches!(load(&bad), Err(CheckpointError::Corrupt(_))));

        let mut mode = good;
        mode[8] = 77;
        std::fs::write(&bad, &mode).unwrap();
        assert!(matches!(load(&bad), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn rejects_tampered_hyper_block() {
        let (params, hyper) = sample(ReflectionMode::Plain);
        let dir = tempdir().unwrap();
        let path = dir.path().join("tamper.ckpt");
        save(&path, &params, &hyper, 9).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // The block sits at the tail; swapping a known key for an unknown
        // one of equal length keeps every offset valid.
        let pos = bytes
            .windows(b"patience=".len())
            .rposition(|w| w == b"patience=")
            .unwrap();
        let mut tampered = bytes;
        tampered[pos..pos + 8].copy_from_slice(b"patchnce");
        std::fs::write(&path, &tampered).unwrap();
        match load(&path) {
            Err(CheckpointError::Corrupt(msg)) => assert!(msg.contains("patchnce"), "{msg}"),
            other => panic!("expected corrupt error, got {other:?}"),
        }
    }
}
