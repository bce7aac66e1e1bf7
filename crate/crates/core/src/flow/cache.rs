//! `flows.bin`: magic `LFFL`, version `u32`, then `P`, `Q`, `X`, `Y` as `u32`,
//! followed by row-major little-endian `f32` maps, `u` then `v` for each
//! view in linear-index order.

use std::io::{Read, Write};

use super::FlowField;
use crate::error::{Error, Result};
use crate::lightfield::{Dims, View};

const MAGIC: &[u8; 4] = b"LFFL";
const VERSION: u32 = 1;

pub fn write_flow(flow: &FlowField, mut w: impl Write) -> Result<()> {
    let d = flow.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [d.p, d.q, d.x, d.y] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(d.pixels() * 4);
    for (u, v) in flow.maps() {
        for map in [u, v] {
            buf.clear();
            for &a in map.as_slice() {
                buf.extend_from_slice(&(a as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_flow(mut r: impl Read) -> Result<FlowField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad flow magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported flow version {version}")));
    }
    let mut hdr = [0usize; 4];
    for h in &mut hdr {
        *h = read_u32(&mut r)? as usize;
    }
    let dims = Dims::new(hdr[0], hdr[1], hdr[2], hdr[3]);
    dims.validate()
        .map_err(|e| Error::Format(format!("flow header: {e}")))?;
    let mut buf = vec![0u8; dims.pixels() * 4];
    let mut read_map = |r: &mut dyn Read| -> Result<View> {
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect();
        View::new(dims.x, dims.y, data)
    };
    let mut us = Vec::with_capacity(dims.views());
    let mut vs = Vec::with_capacity(dims.views());
    for _ in 0..dims.views() {
        us.push(read_map(&mut r)?);
        vs.push(read_map(&mut r)?);
    }
    FlowField::new(dims, us, vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dims = Dims::new(3, 3, 5, 4);
        let flow = FlowField::uniform_disparity(dims, 0.75);
        let mut bytes = Vec::new();
        write_flow(&flow, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"LFFL");
        assert_eq!(bytes.len(), 24 + 9 * 2 * 20 * 4);
        // first sample of view 1 is u = −0.75
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), -0.75);
        assert_eq!(read_flow(bytes.as_slice()).unwrap(), flow);
    }

    #[test]
    fn truncated_input_fails() {
        let flow = FlowField::zeros(Dims::new(1, 1, 2, 2));
        let mut bytes = Vec::new();
        write_flow(&flow, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(read_flow(bytes.as_slice()).is_err());
    }
}
