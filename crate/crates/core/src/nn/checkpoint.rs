//! Binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "BNALNET\0"
//! version  u32      1
//! layers   u32
//! per layer:
//!   tag    u8       0 = variational, 1 = dense, 2 = dropout
//!   dense-like: n_in u64, n_out u64
//!   dropout:    rate f64
//! per parameter tensor, in `Network::parameters` order:
//!   len    u64
//!   values len × f64
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::layers::{Dense, Dropout, VariationalDense};
use crate::nn::network::{Layer, Network};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"BNALNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + net.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        match l {
            Layer::Variational(v) => {
                out.push(0);
                out.extend_from_slice(&(v.n_in as u64).to_le_bytes());
                out.extend_from_slice(&(v.n_out as u64).to_le_bytes());
            }
            Layer::Dense(d) => {
                out.push(1);
                out.extend_from_slice(&(d.n_in as u64).to_le_bytes());
                out.extend_from_slice(&(d.n_out as u64).to_le_bytes());
            }
            Layer::Dropout(d) => {
                out.push(2);
                out.extend_from_slice(&d.rate.to_le_bytes());
            }
        }
    }
    for t in net.parameters() {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Data(format!("checkpoint truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&d| d > 0 && d <= 1 << 28)
            .ok_or_else(|| Error::Data(format!("implausible layer dimension {v}")))
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let len = self.u64()? as usize;
        let expected: usize = shape.iter().product();
        if len != expected {
            return Err(Error::Data(format!("tensor length {len} does not match shape {shape:?}")));
        }
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| Error::Data("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

enum Header {
    Variational(usize, usize),
    Dense(usize, usize),
    Dropout(f64),
}

pub fn from_bytes(buf: &[u8]) -> Result<Network> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data("not a network checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut headers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        headers.push(match r.u8()? {
            0 => Header::Variational(r.dim()?, r.dim()?),
            1 => Header::Dense(r.dim()?, r.dim()?),
            2 => Header::Dropout(r.f64()?),
            t => return Err(Error::Data(format!("unknown layer tag {t}"))),
        });
    }
    let mut layers = Vec::with_capacity(headers.len());
    for h in headers {
        layers.push(match h {
            Header::Variational(n_in, n_out) => Layer::Variational(VariationalDense {
                n_in,
                n_out,
                mu_w: r.tensor(&[n_out, n_in])?,
                log_var_w: r.tensor(&[n_out, n_in])?,
                mu_z: r.tensor(&[n_in])?,
                log_var_z: r.tensor(&[n_in])?,
                bias: r.tensor(&[n_out])?,
            }),
            Header::Dense(n_in, n_out) => Layer::Dense(Dense {
                n_in,
                n_out,
                weight: r.tensor(&[n_out, n_in])?,
                bias: r.tensor(&[n_out])?,
            }),
            Header::Dropout(rate) => Layer::Dropout(Dropout { rate }),
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Data(format!("{} trailing bytes after checkpoint", buf.len() - r.pos)));
    }
    Network::from_layers(layers)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
