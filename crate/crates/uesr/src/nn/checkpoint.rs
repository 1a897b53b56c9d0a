//! Checkpoint container: named parameter sets in a flat binary file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "UESRCKP1"
//! meta    u32 length + UTF-8 bytes   (architecture fingerprint string)
//! nsets   u32
//! per set:
//!   name    u32 length + UTF-8
//!   step    u64                       (Adam step counter)
//!   nparams u32
//!   per parameter:
//!     name  u32 length + UTF-8
//!     ndim  u32, dims u32 each
//!     value, adam_m, adam_v   each len f64 (LE bit patterns)
//! ```
//!
//! f64 values are stored as raw bit patterns, so a save/load round trip is
//! bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::params::ParameterSet;
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"UESRCKP1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

pub fn save(
    path: &Path,
    meta: &str,
    sets: &[(&str, &ParameterSet)],
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_str(&mut buf, meta);
    buf.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for (set_name, set) in sets {
        write_str(&mut buf, set_name);
        buf.extend_from_slice(&set.adam_step_count().to_le_bytes());
        let entries: Vec<_> = set.entries().collect();
        buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, e) in entries {
            write_str(&mut buf, name);
            let shape = e.value.shape();
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for t in [&e.value, &e.adam_m, &e.adam_v] {
                for &x in t.data() {
                    buf.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// One parameter set as read back from a file.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub name: String,
    pub step: u64,
    pub entries: Vec<(String, Tensor, Tensor, Tensor)>,
}

impl LoadedSet {
    /// Restores values, moments and the step counter into an existing set.
    /// The set must already hold exactly the same tensor names and shapes,
    /// which is what ties a checkpoint to a compatible architecture.
    pub fn apply_to(&self, params: &mut ParameterSet) -> Result<(), CheckpointError> {
        let have: Vec<String> = params.names().map(|s| s.to_string()).collect();
        let loaded: Vec<&str> = self.entries.iter().map(|(n, ..)| n.as_str()).collect();
        if have.len() != loaded.len() || !loaded.iter().all(|n| params.contains(n)) {
            return Err(CheckpointError::Mismatch(format!(
                "set {}: parameter names differ (checkpoint {:?} vs current {:?})",
                self.name, loaded, have
            )));
        }
        for (name, value, m, v) in &self.entries {
            if params.value(name).shape() != value.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "set {}: shape of {} differs ({:?} vs {:?})",
                    self.name,
                    name,
                    value.shape(),
                    params.value(name).shape()
                )));
            }
            params.restore_entry(name, value.clone(), m.clone(), v.clone());
        }
        params.set_adam_step_count(self.step);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: String,
    pub sets: Vec<LoadedSet>,
}

impl Checkpoint {
    pub fn set(&self, name: &str) -> Result<&LoadedSet, CheckpointError> {
        self.sets
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("missing parameter set {name}")))
    }
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let buf = fs::read(path)?;
    let mut pos = 0usize;

    let magic = take(&buf, &mut pos, 8)?;
    if magic != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let meta = read_str(&buf, &mut pos)?;
    let nsets = read_u32(&buf, &mut pos)? as usize;
    let mut sets = Vec::with_capacity(nsets);
    for _ in 0..nsets {
        let name = read_str(&buf, &mut pos)?;
        let step = read_u64(&buf, &mut pos)?;
        let nparams = read_u32(&buf, &mut pos)? as usize;
        let mut entries = Vec::with_capacity(nparams);
        for _ in 0..nparams {
            let pname = read_str(&buf, &mut pos)?;
            let ndim = read_u32(&buf, &mut pos)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&buf, &mut pos)? as usize);
            }
            let len: usize = shape.iter().product();
            let mut tensors = Vec::with_capacity(3);
            for _ in 0..3 {
                let mut data = Vec::with_capacity(len);
                for _ in 0..len {
                    data.push(f64::from_bits(read_u64(&buf, &mut pos)?));
                }
                tensors.push(Tensor::from_vec(&shape, data));
            }
            let v = tensors.pop().unwrap();
            let m = tensors.pop().unwrap();
            let value = tensors.pop().unwrap();
            entries.push((pname, value, m, v));
        }
        sets.push(LoadedSet {
            name,
            step,
            entries,
        });
    }
    if pos != buf.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            buf.len() - pos
        )));
    }
    Ok(Checkpoint { meta, sets })
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], CheckpointError> {
    if *pos + n > buf.len() {
        return Err(CheckpointError::Corrupt("unexpected end of file".into()));
    }
    let out = &buf[*pos..*pos + n];
    *pos += n;
    Ok(out)
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32, CheckpointError> {
    let b = take(buf, pos, 4)?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()))
}

fn read_u64(buf: &[u8], pos: &mut usize) -> Result<u64, CheckpointError> {
    let b = take(buf, pos, 8)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}

fn read_str(buf: &[u8], pos: &mut usize) -> Result<String, CheckpointError> {
    let n = read_u32(buf, pos)? as usize;
    let b = take(buf, pos, n)?;
    String::from_utf8(b.to_vec()).map_err(|_| CheckpointError::Corrupt("bad utf8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::from_seed(77);
        let mut a = ParameterSet::new();
        a.add_uniform("w", &[3, 5], 5, &mut rng);
        a.add_uniform("b", &[3], 5, &mut rng);
        // Dirty the moments and step so they round-trip too.
        a.grad_mut("w").data_mut()[0] = 1.0;
        a.adam_step(&crate::nn::params::OptimizerConfig::with_lr(0.01));

        let dir = std::env::temp_dir().join("uesr_ckpt_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ckpt");
        save(&path, "meta=test", &[("setA", &a)]).unwrap();

        let ck = load(&path).unwrap();
        assert_eq!(ck.meta, "meta=test");
        let mut b = ParameterSet::new();
        b.add("w", Tensor::zeros(&[3, 5]));
        b.add("b", Tensor::zeros(&[3]));
        ck.set("setA").unwrap().apply_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_shape_is_rejected() {
        let mut a = ParameterSet::new();
        a.add("w", Tensor::zeros(&[2, 2]));
        let dir = std::env::temp_dir().join("uesr_ckpt_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mismatch.ckpt");
        save(&path, "", &[("s", &a)]).unwrap();

        let ck = load(&path).unwrap();
        let mut b = ParameterSet::new();
        b.add("w", Tensor::zeros(&[2, 3]));
        assert!(ck.set("s").unwrap().apply_to(&mut b).is_err());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let mut a = ParameterSet::new();
        a.add("w", Tensor::zeros(&[4]));
        let dir = std::env::temp_dir().join("uesr_ckpt_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.ckpt");
        save(&path, "", &[("s", &a)]).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::Corrupt(_))));
    }
}
