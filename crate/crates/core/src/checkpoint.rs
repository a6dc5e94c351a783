//! Binary checkpoints and loss-history CSV.
//!
//! Checkpoint layout, all little-endian:
//!
//! ```text
//! "CAEF"  u32 version  u32 name_len  name bytes  u64 iter
//! repeated until EOF:
//!   u32 block_name_len  block name bytes
//!   4 × u64 weight shape   f64 × product(shape) weights
//!   u64 bias_len           f64 × bias_len biases
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::layers::ParamBlock;
use crate::network::{LayerParams, Network, NetworkError};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"CAEF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint belongs to net `{found}`, not `{expected}`")]
    NetMismatch { expected: String, found: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredBlock {
    pub name: String,
    pub weights: Tensor,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net_name: String,
    pub iter: u64,
    pub blocks: Vec<StoredBlock>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, iter: u64) -> Self {
        Checkpoint {
            net_name: net.name().to_string(),
            iter,
            blocks: net
                .params()
                .iter()
                .map(|p| StoredBlock {
                    name: p.name.clone(),
                    weights: p.block.weights.clone(),
                    biases: p.block.biases.clone(),
                })
                .collect(),
        }
    }

    /// Loads the stored parameters into `net`, checking the net name and
    /// every block's name and shape. Momentum buffers are reset.
    pub fn apply_to(&self, net: &mut Network) -> Result<(), CheckpointError> {
        if self.net_name != net.name() {
            return Err(CheckpointError::NetMismatch {
                expected: net.name().to_string(),
                found: self.net_name.clone(),
            });
        }
        let layers: Vec<usize> = net.params().iter().map(|p| p.layer).collect();
        if layers.len() != self.blocks.len() {
            return Err(CheckpointError::Corrupt(format!(
                "net has {} parameter blocks, checkpoint has {}",
                layers.len(),
                self.blocks.len()
            )));
        }
        let params = self
            .blocks
            .iter()
            .zip(layers)
            .map(|(b, layer)| {
                Ok(LayerParams {
                    layer,
                    name: b.name.clone(),
                    block: ParamBlock::from_parts(b.weights.clone(), b.biases.clone())
                        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
                })
            })
            .collect::<Result<Vec<_>, CheckpointError>>()?;
        net.set_params(params)?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(w, &self.net_name)?;
        w.write_all(&self.iter.to_le_bytes())?;
        for b in &self.blocks {
            write_str(w, &b.name)?;
            for d in b.weights.shape().0 {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            write_f64s(w, b.weights.data())?;
            w.write_all(&(b.biases.len() as u64).to_le_bytes())?;
            write_f64s(w, &b.biases)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut rd = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = rd.take(4)?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(CheckpointError::Magic(magic));
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let net_name = rd.string()?;
        let iter = rd.u64()?;
        let mut blocks = Vec::new();
        while rd.pos < bytes.len() {
            let name = rd.string()?;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = usize::try_from(rd.u64()?).map_err(|_| CheckpointError::Corrupt("dimension overflow".into()))?;
            }
            let shape = Shape(dims);
            let len = shape
                .checked_len()
                .ok_or_else(|| CheckpointError::Corrupt(format!("block `{name}` shape {shape} overflows")))?;
            let weights = Tensor::from_vec(shape, rd.f64s(len)?).expect("length from shape");
            let bias_len = usize::try_from(rd.u64()?).map_err(|_| CheckpointError::Corrupt("bias length overflow".into()))?;
            let biases = rd.f64s(bias_len)?;
            blocks.push(StoredBlock { name, weights, biases });
        }
        Ok(Checkpoint { net_name, iter, blocks })
    }
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CheckpointError::Corrupt("name is not UTF-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
