//! `PAEW` named-tensor checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PAEW"  u16 version
//! u64 n_meta   { u32 len, utf8 key, u32 len, utf8 value } * n_meta
//! u64 n_tensor { u32 len, utf8 name, u32 ndim, u64 dim * ndim, f64 * prod(dims) } * n_tensor
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PAEW";
pub const VERSION: u16 = 1;

/// Ordered metadata plus ordered named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| bad("name is not valid UTF-8"))
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            meta: Vec::new(),
            tensors: store
                .iter()
                .map(|(_, n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every tensor whose name is registered in `store`; all store
    /// entries must be present with matching shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = self
                .tensor(&name)
                .ok_or_else(|| bad(format!("missing parameter {name:?}")))?;
            store.set(id, t.clone())?;
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u64).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_string(w, k)?;
            write_string(w, v)?;
        }
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_string(w, name)?;
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(t.rows() as u64).to_le_bytes())?;
            w.write_all(&(t.cols() as u64).to_le_bytes())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 4] = read_exact(r)?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected \"PAEW\"")));
        }
        let version = u16::from_le_bytes(read_exact(r)?);
        if version != VERSION {
            return Err(bad(format!(
                "unsupported version {version}, this build reads {VERSION}"
            )));
        }
        let n_meta = read_u64(r)?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            let k = read_string(r)?;
            let v = read_string(r)?;
            meta.push((k, v));
        }
        let n_tensors = read_u64(r)?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = read_string(r)?;
            let ndim = read_u32(r)? as usize;
            if ndim == 0 || ndim > 2 {
                return Err(bad(format!("tensor {name:?} has unsupported rank {ndim}")));
            }
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u64(r)? as usize);
            }
            let (rows, cols) = if ndim == 1 { (dims[0], 1) } else { (dims[0], dims[1]) };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f64::from_le_bytes(read_exact(r)?));
            }
            tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut store = ParamStore::new();
        store
            .insert("enc.w", Tensor::from_vec(2, 3, vec![1.0, -2.5, 3e-300, 0.1, 7.0, -0.0]).unwrap())
            .unwrap();
        store.insert("token", Tensor::zeros(1, 4)).unwrap();
        let mut ck = Checkpoint::from_store(&store);
        ck.meta.push(("epoch".into(), "50".into()));
        ck
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.meta("epoch"), Some("50"));
        for ((n1, t1), (n2, t2)) in ck.tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            let b1: Vec<u64> = t1.data().iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        let err = Checkpoint::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf[4] = 9;
        let err = Checkpoint::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn restore_checks_shapes() {
        let ck = sample();
        let mut store = ParamStore::new();
        store.insert("enc.w", Tensor::zeros(3, 2)).unwrap();
        assert!(ck.restore_into(&mut store).is_err());
    }
}
