//! `srnet.wts`: magic `LFNN`, version `u32`, `k` `u32`, layer count `u32`,
//! then per layer `out_ch`, `in_ch`, `kh`, `kw` as `u32`, the weights as
//! row-major `f32` and the biases as `f32`. Little-endian throughout.
//!
//! Version 1 stores a direct-output net, version 2 a residual one; the
//! layout is otherwise identical.

use std::io::{Read, Write};

use super::{ConvLayer, ConvNet, OutputMode, KSIZE};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFNN";
const VERSION_DIRECT: u32 = 1;
const VERSION_RESIDUAL: u32 = 2;
/// Upper bound on any header count, to reject garbage before allocating.
const MAX_DIM: u32 = 1 << 16;

pub fn write_weights(net: &ConvNet, mut w: impl Write) -> Result<()> {
    let version = match net.mode() {
        OutputMode::Direct => VERSION_DIRECT,
        OutputMode::Residual => VERSION_RESIDUAL,
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [version, net.k() as u32, net.depth() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in net.layers() {
        for v in [l.out_ch, l.in_ch, KSIZE, KSIZE] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &a in l.weights.iter().chain(&l.bias) {
            buf.extend_from_slice(&(a as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect())
}

pub fn read_weights(mut r: impl Read) -> Result<ConvNet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad weight magic {magic:?}")));
    }
    let mode = match read_u32(&mut r)? {
        VERSION_DIRECT => OutputMode::Direct,
        VERSION_RESIDUAL => OutputMode::Residual,
        v => return Err(Error::Format(format!("unsupported weight version {v}"))),
    };
    let k = read_u32(&mut r)?;
    let depth = read_u32(&mut r)?;
    if k == 0 || k > MAX_DIM || depth == 0 || depth > MAX_DIM {
        return Err(Error::Format(format!("implausible header k={k} layers={depth}")));
    }
    let mut layers = Vec::with_capacity(depth as usize);
    for _ in 0..depth {
        let out_ch = read_u32(&mut r)?;
        let in_ch = read_u32(&mut r)?;
        let kh = read_u32(&mut r)? as usize;
        let kw = read_u32(&mut r)? as usize;
        if (kh, kw) != (KSIZE, KSIZE) {
            return Err(Error::Format(format!("only 3x3 kernels are supported, got {kh}x{kw}")));
        }
        if out_ch == 0 || out_ch > MAX_DIM || in_ch == 0 || in_ch > MAX_DIM {
            return Err(Error::Format(format!("implausible layer {out_ch}x{in_ch}")));
        }
        let (out_ch, in_ch) = (out_ch as usize, in_ch as usize);
        let weights = read_f32s(&mut r, out_ch * in_ch * kh * kw)?;
        let bias = read_f32s(&mut r, out_ch)?;
        layers.push(ConvLayer {
            out_ch,
            in_ch,
            weights,
            bias,
        });
    }
    ConvNet::from_layers(k as usize, layers, mode)
        .map_err(|e| Error::Format(format!("weight file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        for mode in [OutputMode::Direct, OutputMode::Residual] {
            let net = ConvNet::with_architecture(2, 3, 5, mode, 4).unwrap();
            let mut bytes = Vec::new();
            write_weights(&net, &mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"LFNN");
            let n_params = net.param_count();
            assert_eq!(bytes.len(), 16 + 3 * 16 + 4 * n_params);
            let back = read_weights(bytes.as_slice()).unwrap();
            assert_eq!(back.mode(), mode);
            for (a, b) in net.layers().iter().zip(back.layers()) {
                for (x, y) in a.weights.iter().zip(&b.weights) {
                    assert_eq!(*y, *x as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn rejects_inconsistent_stack() {
        let net = ConvNet::with_architecture(2, 2, 5, OutputMode::Direct, 4).unwrap();
        let mut bytes = Vec::new();
        write_weights(&net, &mut bytes).unwrap();
        // claim k = 3
        bytes[8..12].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(read_weights(bytes.as_slice()), Err(Error::Format(_))));
        assert!(read_weights(&b"LFLR"[..]).is_err());
    }
}
