//! The binary weight file.
//!
//! ```text
//! "VGGW"                     4 bytes
//! version = 1                u32 LE
//! layer_count                u32 LE
//! per layer:
//!   name_len                 u16 LE
//!   name                     UTF-8
//!   out, in, kh, kw          4 × u32 LE
//!   kernel                   out·in·kh·kw × f32 LE (out → in → kh → kw)
//!   bias                     out × f32 LE
//! crc32                      u32 LE over every preceding byte
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VGGW";
pub const VERSION: u32 = 1;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub name: String,
    /// `(out, in, 3, 3)`.
    pub kernel: Tensor,
    pub bias: Vec<f32>,
}

/// Frozen convolution weights for every conv layer of a [`LayerSpec`] list.
/// Immutable once built; share by reference across threads.
#[derive(Debug)]
pub struct NetworkWeights {
    spec: Vec<LayerSpec>,
    convs: Vec<ConvWeights>,
    checksum: u32,
    id: u64,
}

impl NetworkWeights {
    /// Validates `convs` against the conv layers of `spec`, in order.
    pub fn new(spec: &[LayerSpec], convs: Vec<ConvWeights>) -> Result<Self> {
        validate(spec, &convs)?;
        let mut weights = Self {
            spec: spec.to_vec(),
            convs,
            checksum: 0,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        };
        let bytes = weights.to_bytes();
        weights.checksum = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        Ok(weights)
    }

    /// Uniform He-scaled random kernels (`±√(6/fan_in)`) and zero biases.
    pub fn random(spec: &[LayerSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::new();
        let mut in_c = 3;
        for layer in spec {
            if let (LayerKind::Conv, Some(out_c)) = (layer.kind, layer.channels_out) {
                let fan_in = (in_c * 9) as f32;
                let limit = (6.0 / fan_in).sqrt();
                let kernel = (0..out_c * in_c * 9)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                convs.push(ConvWeights {
                    name: layer.name.clone(),
                    kernel: Tensor::new([out_c, in_c, 3, 3], kernel).unwrap(),
                    bias: vec![0.0; out_c],
                });
                in_c = out_c;
            }
        }
        Self::new(spec, convs).expect("generated weights match their own spec")
    }

    pub fn load(path: impl AsRef<Path>, expected: &[LayerSpec]) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes, expected)
    }

    pub fn from_bytes(bytes: &[u8], expected: &[LayerSpec]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported weight file version {version}"
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut convs = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
            let dims = [
                read_u32(&mut r)? as usize,
                read_u32(&mut r)? as usize,
                read_u32(&mut r)? as usize,
                read_u32(&mut r)? as usize,
            ];
            let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let len = match len {
                Some(len) if len <= bytes.len() / 4 => len,
                _ => {
                    return Err(Error::IncompatibleWeights {
                        layer: name,
                        detail: format!("implausible kernel dims {dims:?}"),
                    })
                }
            };
            let kernel = read_f32s(&mut r, len)?;
            let bias = read_f32s(&mut r, dims[0])?;
            convs.push(ConvWeights {
                kernel: Tensor::new(dims, kernel)?,
                bias,
                name,
            });
        }
        let body_end = r.position() as usize;
        let stored = read_u32(&mut r)?;
        if r.position() as usize != bytes.len() {
            return Err(Error::Format("trailing bytes after checksum".into()));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::Format(format!(
                "checksum mismatch: file says {stored:08x}, contents hash to {computed:08x}"
            )));
        }
        validate(expected, &convs)?;
        Ok(Self {
            spec: expected.to_vec(),
            convs,
            checksum: stored,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.convs.len() as u32).to_le_bytes());
        for conv in &self.convs {
            out.extend_from_slice(&(conv.name.len() as u16).to_le_bytes());
            out.extend_from_slice(conv.name.as_bytes());
            for &d in conv.kernel.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in conv.kernel.data().iter().chain(&conv.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn convs(&self) -> &[ConvWeights] {
        &self.convs
    }

    pub fn conv(&self, name: &str) -> Option<&ConvWeights> {
        self.convs.iter().find(|c| c.name == name)
    }

    /// CRC32 of the serialized file contents.
    pub fn checksum(&self) -> u32 {
        self.checksum
    }

    /// Process-unique identity, used to detect forward caches from other weights.
    pub(crate) fn id(&self) -> u64 {
        self.id
    }
}

/// Reads and validates a weight file against `expected`.
pub fn load_weights(path: impl AsRef<Path>, expected: &[LayerSpec]) -> Result<NetworkWeights> {
    NetworkWeights::load(path, expected)
}

fn validate(spec: &[LayerSpec], convs: &[ConvWeights]) -> Result<()> {
    let expected: Vec<&LayerSpec> = spec.iter().filter(|l| l.kind == LayerKind::Conv).collect();
    let mut in_c = 3;
    for (i, layer) in expected.iter().enumerate() {
        let out_c = layer.channels_out.unwrap_or(0);
        let Some(conv) = convs.get(i) else {
            return Err(Error::IncompatibleWeights {
                layer: layer.name.clone(),
                detail: "missing from weight file".into(),
            });
        };
        if conv.name != layer.name {
            return Err(Error::IncompatibleWeights {
                layer: layer.name.clone(),
                detail: format!("found {:?} in its position", conv.name),
            });
        }
        let want = [out_c, in_c, 3, 3];
        if conv.kernel.dims() != want {
            return Err(Error::IncompatibleWeights {
                layer: layer.name.clone(),
                detail: format!("kernel shape {:?}, expected {want:?}", conv.kernel.dims()),
            });
        }
        if conv.bias.len() != out_c {
            return Err(Error::IncompatibleWeights {
                layer: layer.name.clone(),
                detail: format!("{} biases, expected {out_c}", conv.bias.len()),
            });
        }
        if !conv.kernel.is_finite() || conv.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::IncompatibleWeights {
                layer: layer.name.clone(),
                detail: "non-finite values".into(),
            });
        }
        in_c = out_c;
    }
    if let Some(extra) = convs.get(expected.len()) {
        return Err(Error::IncompatibleWeights {
            layer: extra.name.clone(),
            detail: "not part of the expected architecture".into(),
        });
    }
    Ok(())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
