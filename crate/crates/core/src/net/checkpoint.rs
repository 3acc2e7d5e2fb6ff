//! Binary checkpoint format, little-endian:
//!
//! ```text
//! "SFNET1\n"
//! u32 layer count
//! per layer: u32 kind code, u32 kernel, u32 stride, u32 in, u32 out
//! per conv layer, in order: weights then biases as f32
//! ```
//!
//! Parameters are held as f64 in memory and stored as f32, so a checkpoint
//! loaded and saved again is byte-identical to the original file.

use std::path::Path;

use super::{ConvBlock, LayerKind, LayerSpec, NetworkParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"SFNET1\n";

pub fn to_bytes(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + params.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for l in params.layers() {
        for v in [l.kind.code(), l.kernel_size as u32, l.stride as u32, l.in_channels as u32, l.out_channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for b in params.blocks() {
        for &v in b.weight.iter().chain(&b.bias) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<NetworkParams> {
    let bad = |m: &str| Error::format(origin, m.to_string());
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a network checkpoint (bad magic)"));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let count = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    if count > 4096 {
        return Err(bad("implausible layer count"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = [0u32; 5];
        for v in &mut f {
            *v = r.u32().ok_or_else(|| bad("truncated layer table"))?;
        }
        let kind = LayerKind::from_code(f[0]).ok_or_else(|| bad("unknown layer kind"))?;
        layers.push(LayerSpec {
            kind,
            kernel_size: f[1] as usize,
            stride: f[2] as usize,
            in_channels: f[3] as usize,
            out_channels: f[4] as usize,
        });
    }
    let shape = NetworkParams::zeros(layers.clone())?;
    let mut blocks = Vec::with_capacity(shape.blocks().len());
    for b in shape.blocks() {
        let mut read = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| r.f32().map(f64::from).ok_or_else(|| bad("truncated parameters")))
                .collect()
        };
        let weight = read(b.weight.len())?;
        let bias = read(b.bias.len())?;
        blocks.push(ConvBlock { weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    NetworkParams::from_blocks(layers, blocks)
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::desk_architecture;

    #[test]
    fn bytes_round_trip_exactly() {
        let net = NetworkParams::init(desk_architecture(1), 5).unwrap();
        let bytes = to_bytes(&net);
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back.layers(), net.layers());
        for (a, b) in back.flatten().iter().zip(net.flatten()) {
            assert_eq!(*a, b as f32 as f64);
        }
        // A second round trip is lossless in memory as well.
        assert_eq!(from_bytes(&to_bytes(&back), Path::new("mem")).unwrap(), back);
    }

    #[test]
    fn header_layout() {
        let net = NetworkParams::init(desk_architecture(1), 5).unwrap();
        let bytes = to_bytes(&net);
        assert_eq!(&bytes[..7], b"SFNET1\n");
        assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 14);
        assert_eq!(bytes.len(), 7 + 4 + 14 * 20 + 4 * net.parameter_count());
    }

    #[test]
    fn rejects_corruption() {
        let net = NetworkParams::init(desk_architecture(1), 5).unwrap();
        let mut bytes = to_bytes(&net);
        assert!(from_bytes(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(from_bytes(&bytes, Path::new("x")).is_err());
    }
}
