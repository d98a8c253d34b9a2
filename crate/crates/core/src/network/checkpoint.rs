//! Little-endian binary checkpoint:
//!
//! ```text
//! magic        b"MSDC"
//! version      u32
//! config       u32 length + UTF-8 JSON ModelConfig
//! epoch        u32
//! best_metric  f64
//! params       u32 count + tensor records
//! buffers      u32 count + tensor records
//! optimizer    u8 flag; if 1: u64 step, u32 count + records (first
//!              moments), u32 count + records (second moments)
//!
//! record       u32 name length + UTF-8 name, u8 dtype tag (0 f32, 1 f64),
//!              u32 rank, u64 per dim, payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{build_msdcanet, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::params::Named;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MSDC";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSnapshot<T> {
    pub step: u64,
    pub first: Vec<Named<T>>,
    pub second: Vec<Named<T>>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub model: Model<T>,
    pub optimizer: Option<OptimizerSnapshot<T>>,
    pub epoch: u32,
    pub best_metric: f64,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_records<T: Scalar>(out: &mut Vec<u8>, items: &[Named<T>]) -> Result<()> {
    put_u32(out, items.len())?;
    for it in items {
        put_u32(out, it.name.len())?;
        out.extend_from_slice(it.name.as_bytes());
        out.push(T::DTYPE.tag());
        put_u32(out, it.value.shape().len())?;
        for &d in it.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in it.value.data() {
            v.write_le(out);
        }
    }
    Ok(())
}

pub fn encode<T: Scalar>(ck: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&ck.model.config)?;
    put_u32(&mut out, cfg.len())?;
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&ck.epoch.to_le_bytes());
    out.extend_from_slice(&ck.best_metric.to_le_bytes());
    put_records(&mut out, ck.model.store.params())?;
    put_records(&mut out, ck.model.store.buffers())?;
    match &ck.optimizer {
        None => out.push(0),
        Some(o) => {
            out.push(1);
            out.extend_from_slice(&o.step.to_le_bytes());
            put_records(&mut out, &o.first)?;
            put_records(&mut out, &o.second)?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated file while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn records<T: Scalar>(&mut self, what: &str) -> Result<Vec<Named<T>>> {
        let n = self.u32(what)? as usize;
        let mut out = Vec::new();
        for _ in 0..n {
            let len = self.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(self.take(len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let tag = self.u8("dtype tag")?;
            let dtype = DType::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown dtype tag {tag} for {name}")))?;
            let rank = self.u32("tensor rank")? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("implausible rank {rank} for {name}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = self.u64("tensor dims")?;
                shape.push(usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("element count overflow for {name}")))?;
            let bytes_len = numel.checked_mul(dtype.size()).ok_or_else(|| Error::Format(format!("payload size overflow for {name}")))?;
            let bytes = self.take(bytes_len, &format!("payload of {name}"))?;
            let data: Vec<T> = match dtype {
                DType::F32 => bytes.chunks_exact(4).map(|c| T::from_f64_lossy(f32::read_le(c) as f64)).collect(),
                DType::F64 => bytes.chunks_exact(8).map(|c| T::from_f64_lossy(f64::read_le(c))).collect(),
            };
            let value = Tensor::from_vec(&shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            out.push(Named { name, value });
        }
        Ok(out)
    }
}

fn fill<T: Scalar>(what: &str, dst: &mut [Named<T>], src: Vec<Named<T>>) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Format(format!("{what} table has {} entries but the config implies {}", src.len(), dst.len())));
    }
    for (d, s) in dst.iter_mut().zip(src) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return Err(Error::Format(format!(
                "{what} table inconsistent with config: expected {} {:?}, found {} {:?}",
                d.name,
                d.value.shape(),
                s.name,
                s.value.shape()
            )));
        }
        d.value = s.value;
    }
    Ok(())
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, not a checkpoint")));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    let len = r.u32("config length")? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(len, "config")?)?;
    let epoch = r.u32("epoch")?;
    let best_metric = r.f64("best metric")?;
    let mut model = build_msdcanet::<T>(cfg, 0)?;
    let params = r.records::<T>("parameter table")?;
    fill("parameter", model.store.params_mut(), params)?;
    let buffers = r.records::<T>("buffer table")?;
    fill("buffer", model.store.buffers_mut(), buffers)?;
    let optimizer = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let step = r.u64("optimizer step")?;
            let first = r.records("first moments")?;
            let second = r.records("second moments")?;
            let expect = model.store.params().len();
            if first.len() != expect || second.len() != expect {
                return Err(Error::Format("optimizer state does not match parameter table".into()));
            }
            Some(OptimizerSnapshot { step, first, second })
        }
        f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { model, optimizer, epoch, best_metric })
}

pub fn save_checkpoint<T: Scalar>(ck: &Checkpoint<T>, path: &Path) -> Result<()> {
    let bytes = encode(ck)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    decode(&fs::read(path)?)
}

/// Saves weights only (no optimizer state).
pub fn save<T: Scalar>(m: &Model<T>, path: &Path) -> Result<()> {
    save_checkpoint(&Checkpoint { model: m.clone(), optimizer: None, epoch: 0, best_metric: f64::NAN }, path)
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    Ok(load_checkpoint(path)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variant;
    use crate::tensor::Init;

    fn model() -> Model<f32> {
        let mut c = ModelConfig::msdcanet(Variant::Custom).with_channels([8, 8, 16, 16, 16]);
        c.dilation_rates = vec![1, 2];
        build_msdcanet(c, 11).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.msdc");
        save(&m, &p).unwrap();
        let back = load::<f32>(&p).unwrap();
        assert_eq!(back.store, m.store);
        let x = Tensor::create(&[2, 1, 32, 32], Init::Uniform { bound: 1.0, seed: 2 }).unwrap();
        let a = m.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn optimizer_round_trip() {
        let m = model();
        let zeros: Vec<Named<f32>> =
            m.store.params().iter().map(|p| Named { name: p.name.clone(), value: p.value.map(|v| v * 0.5) }).collect();
        let ck = Checkpoint {
            model: m,
            optimizer: Some(OptimizerSnapshot { step: 7, first: zeros.clone(), second: zeros }),
            epoch: 3,
            best_metric: 0.75,
        };
        let back = decode::<f32>(&encode(&ck).unwrap()).unwrap();
        assert_eq!(back.epoch, 3);
        assert_eq!(back.best_metric, 0.75);
        assert_eq!(back.optimizer, ck.optimizer);
    }

    #[test]
    fn corrupted_magic() {
        let mut b = encode(&Checkpoint { model: model(), optimizer: None, epoch: 0, best_metric: 0.0 }).unwrap();
        b[0] = b'X';
        assert!(matches!(decode::<f32>(&b), Err(Error::Format(_))));
    }

    #[test]
    fn future_version() {
        let mut b = encode(&Checkpoint { model: model(), optimizer: None, epoch: 0, best_metric: 0.0 }).unwrap();
        b[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(decode::<f32>(&b), Err(Error::UnsupportedVersion { found: 2, expected: 1 })));
    }

    #[test]
    fn truncation_detected() {
        let b = encode(&Checkpoint { model: model(), optimizer: None, epoch: 0, best_metric: 0.0 }).unwrap();
        for cut in [3, 10, b.len() / 2, b.len() - 1] {
            assert!(matches!(decode::<f32>(&b[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn inconsistent_shape_table() {
        let m = model();
        let mut other = m.clone();
        other.config.channels[4] = 32;
        let b = encode(&Checkpoint { model: other, optimizer: None, epoch: 0, best_metric: 0.0 }).unwrap();
        assert!(matches!(decode::<f32>(&b), Err(Error::Format(_))));
    }

    #[test]
    fn precision_cross_load() {
        let m = model();
        let b = encode(&Checkpoint { model: m.clone(), optimizer: None, epoch: 0, best_metric: 0.0 }).unwrap();
        let wide = decode::<f64>(&b).unwrap();
        assert_eq!(wide.model.store.params()[0].value.data()[0], m.store.params()[0].value.data()[0] as f64);
    }
}
