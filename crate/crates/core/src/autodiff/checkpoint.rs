//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PEICKPT\0"
//! version  u32      1
//! count    u32      number of parameters
//! repeated count times:
//!   name_len u32, name (UTF-8), rank u32, dims u64 x rank, values f32 x prod(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Params, Tensor, MAX_RANK};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PEICKPT\0";
const VERSION: u32 = 1;

fn io(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &Params<T>, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for v in t.data() {
            w.write_all(&(v.f64() as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Params<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut params = Params::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("rank {rank} of `{name}` exceeds {MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw).map_err(io)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::c(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        params.push(name, Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &Params<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io)?;
    write_checkpoint(params, BufWriter::new(f))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Params<T>> {
    let f = File::open(path).map_err(io)?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = Params::<f32>::new();
        p.push("conv0.w", Tensor::new(vec![2, 1, 3, 3], (0..18).map(|i| (i as f32).sin() * 1e-3).collect()).unwrap());
        p.push("conv0.b", Tensor::new(vec![2], vec![f32::MIN_POSITIVE, -0.0]).unwrap());
        p.push("s", Tensor::scalar(1.5));
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let q: Params<f32> = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p.len(), q.len());
        for ((n1, t1), (n2, t2)) in p.iter().zip(q.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(read_checkpoint::<f32, _>(&b"NOTACKPT"[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&Params::<f32>::new(), &mut buf).unwrap();
        buf.push(0);
        assert!(read_checkpoint::<f32, _>(buf.as_slice()).is_err());
    }
}
