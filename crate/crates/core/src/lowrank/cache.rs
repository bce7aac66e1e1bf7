//! `lra.bin`: magic `LFLR`, version `u32`, `m`, `n`, `k` as `u64`, `k`
//! independent indices as `u32`, then `B`, `C`, `E`, `W` as row-major
//! little-endian `f64` blocks. All integers are little-endian.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::RankKModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFLR";
const VERSION: u32 = 1;

pub fn write_model(model: &RankKModel, mut w: impl Write) -> Result<()> {
    let (m, n) = model.e.shape();
    let k = model.k;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [m as u64, n as u64, k as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &i in &model.indep_idx {
        w.write_all(&(i as u32).to_le_bytes())?;
    }
    for block in [&model.b, &model.c, &model.e, &model.w] {
        write_row_major(block, &mut w)?;
    }
    Ok(())
}

fn write_row_major(mat: &DMatrix<f64>, w: &mut impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(mat.len() * 8);
    for r in 0..mat.nrows() {
        for c in 0..mat.ncols() {
            buf.extend_from_slice(&mat[(r, c)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_row_major(rows: usize, cols: usize, r: &mut impl Read) -> Result<DMatrix<f64>> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn read_model(mut r: impl Read) -> Result<RankKModel> {
    let magic = read_array::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad lra magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported lra version {version}")));
    }
    let m = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let k = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if k == 0 || k > n {
        return Err(Error::Format(format!("rank {k} with {n} columns")));
    }
    let indep_idx = (0..k)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    if indep_idx.iter().any(|&i| i >= n) {
        return Err(Error::Format("independent index out of range".into()));
    }
    let b = read_row_major(m, k, &mut r)?;
    let c = read_row_major(k, n, &mut r)?;
    let e = read_row_major(m, n, &mut r)?;
    let w = read_row_major(k, n - k, &mut r)?;
    Ok(RankKModel {
        k,
        b,
        c,
        e,
        indep_idx,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::FieldMatrix;

    #[test]
    fn round_trip_and_header_layout() {
        let mat = FieldMatrix::new(DMatrix::from_fn(12, 5, |i, j| {
            ((i * 3 + j * 7) % 11) as f64 / 10.0
        }));
        let model = RankKModel::fit(&mat, 2).unwrap();
        let mut bytes = Vec::new();
        write_model(&model, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"LFLR");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 12);
        assert_eq!(bytes.len(), 4 + 4 + 24 + 2 * 4 + 8 * (12 * 2 + 2 * 5 + 12 * 5 + 2 * 3));
        // B starts right after the index table, row-major.
        let b00 = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        let b01 = f64::from_le_bytes(bytes[48..56].try_into().unwrap());
        assert_eq!((b00, b01), (model.b[(0, 0)], model.b[(0, 1)]));

        let back = read_model(bytes.as_slice()).unwrap();
        assert_eq!(back.indep_idx, model.indep_idx);
        assert_eq!(back.b, model.b);
        assert_eq!(back.c, model.c);
        assert_eq!(back.e, model.e);
        assert_eq!(back.w, model.w);
    }

    #[test]
    fn rejects_foreign_magic() {
        assert!(matches!(
            read_model(&b"LFNN\x01\0\0\0"[..]),
            Err(Error::Format(_))
        ));
    }
}
