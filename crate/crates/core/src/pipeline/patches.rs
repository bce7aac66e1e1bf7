use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{align, estimate_flow, FlowField, HornSchunckParams};
use crate::lightfield::{LightField, View};
use crate::lowrank::RankKModel;
use crate::srnet::{PatchPair, Tensor};

/// A ground-truth light field with its bicubic-matched degraded version.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub hr: LightField,
    pub lr: LightField,
    /// Known flow (e.g. from a synthetic scene); estimated from `lr` when
    /// absent.
    pub flow: Option<FlowField>,
}

/// Network input and target planes for one pair: `k` aligned views each.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    /// Independent columns of the rank-k approximation of the aligned LR
    /// field.
    pub input: Vec<View>,
    /// The same columns of the aligned HR field minus the LR residual `E`,
    /// so that recombination reproduces the HR views.
    pub target: Vec<View>,
    pub indep_idx: Vec<usize>,
}

/// Where a patch was cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSample {
    pub pair: usize,
    pub x: usize,
    pub y: usize,
}

fn columns_to_views(m: &DMatrix<f64>, width: usize, height: usize) -> Result<Vec<View>> {
    (0..m.ncols())
        .map(|j| View::from_vectorized(width, height, m.column(j).as_slice()))
        .collect()
}

/// Aligns both fields with the same flow and decomposes the LR one.
pub fn prepare_pair(pair: &TrainingPair, k: usize, flow_params: &HornSchunckParams) -> Result<PreparedPair> {
    let d = pair.hr.dims();
    if pair.lr.dims() != d {
        return Err(Error::Dimension(format!("LR {:?} vs HR {d:?}", pair.lr.dims())));
    }
    let flow = match &pair.flow {
        Some(f) => f.clone(),
        None => estimate_flow(&pair.lr, flow_params)?.flow,
    };
    let lr = align(&pair.lr, &flow)?.to_matrix();
    let hr = align(&pair.hr, &flow)?.to_matrix();
    let (model, _) = RankKModel::fit_lenient(&lr, k)?;
    let input = model.embedding();
    let target = DMatrix::from_fn(input.nrows(), k, |i, j| {
        let col = model.indep_idx[j];
        hr.data[(i, col)] - model.e[(i, col)]
    });
    Ok(PreparedPair {
        input: columns_to_views(&input, d.x, d.y)?,
        target: columns_to_views(&target, d.x, d.y)?,
        indep_idx: model.indep_idx,
    })
}

fn crop_stack(views: &[View], x: usize, y: usize, size: usize) -> Result<Tensor> {
    let crops = views.iter().map(|v| v.crop(x, y, size, size)).collect::<Result<Vec<_>>>()?;
    Tensor::from_views(&crops)
}

/// `count` co-located `size × size × k` crops, each from a uniformly drawn
/// pair at a uniformly drawn position. Deterministic per seed.
pub fn extract_patches(
    pairs: &[TrainingPair],
    k: usize,
    count: usize,
    size: usize,
    seed: u64,
    flow_params: &HornSchunckParams,
) -> Result<(Vec<PatchPair>, Vec<PatchSample>)> {
    if count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no light-field pairs to sample".into()));
    }
    for p in pairs {
        let d = p.hr.dims();
        if d.x < size || d.y < size {
            return Err(Error::Dimension(format!("views of {}x{} are smaller than {size} px patches", d.x, d.y)));
        }
    }
    let prepared = pairs
        .par_iter()
        .map(|p| prepare_pair(p, k, flow_params))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let pair = rng.random_range(0..pairs.len());
        let d = pairs[pair].hr.dims();
        let x = rng.random_range(0..=d.x - size);
        let y = rng.random_range(0..=d.y - size);
        samples.push(PatchSample { pair, x, y });
    }
    let patches = samples
        .iter()
        .map(|s| {
            let p = &prepared[s.pair];
            Ok(PatchPair {
                input: crop_stack(&p.input, s.x, s.y, size)?,
                target: crop_stack(&p.target, s.x, s.y, size)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((patches, samples))
}

const PATCH_MAGIC: &[u8; 4] = b"LFPT";
const PATCH_VERSION: u32 = 1;

/// `patches.bin`: magic `LFPT`, version, count, `k`, size as `u32`, then
/// for each patch the input and the target as `k × size × size` `f32`
/// blocks. Little-endian throughout. All patches must share one shape.
pub fn write_patches(patches: &[PatchPair], mut w: impl Write) -> Result<()> {
    let (k, size) = patches.first().map_or((0, 0), |p| (p.input.channels(), p.input.width()));
    for p in patches {
        for t in [&p.input, &p.target] {
            if (t.channels(), t.height(), t.width()) != (k, size, size) {
                return Err(Error::Dimension("patches differ in shape".into()));
            }
        }
    }
    w.write_all(PATCH_MAGIC)?;
    for v in [PATCH_VERSION, patches.len() as u32, k as u32, size as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(k * size * size * 4);
    for p in patches {
        for t in [&p.input, &p.target] {
            buf.clear();
            for &a in t.as_slice() {
                buf.extend_from_slice(&(a as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn read_patches(mut r: impl Read) -> Result<Vec<PatchPair>> {
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if &word != PATCH_MAGIC {
        return Err(Error::Format("not a patch file".into()));
    }
    let mut header = [0u32; 4];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    let [version, count, k, size] = header.map(|h| h as usize);
    if version != PATCH_VERSION as usize {
        return Err(Error::Format(format!("patch file version {version}")));
    }
    if count > 0 && (k == 0 || size == 0 || k > 1024 || size > 4096) {
        return Err(Error::Format(format!("patch shape {k}×{size}×{size}")));
    }
    let n = k * size * size;
    let mut bytes = vec![0u8; n * 4];
    let mut block = |r: &mut dyn Read| -> Result<Tensor> {
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Tensor::new(k, size, size, data)
    };
    (0..count)
        .map(|_| {
            let input = block(&mut r)?;
            let target = block(&mut r)?;
            Ok(PatchPair { input, target })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ibp::{degrade, DegradeParams};
    use crate::lightfield::Dims;
    use crate::synth::{synth, SyntheticScene};

    fn pair(seed: u64) -> TrainingPair {
        let out = synth(&SyntheticScene::random(Dims::new(3, 3, 24, 20), 1, (-1.0, 1.0), seed), 0).unwrap();
        TrainingPair {
            lr: degrade(&out.lf, &DegradeParams::new(2)).unwrap(),
            hr: out.lf,
            flow: Some(out.flow),
        }
    }

    #[test]
    fn zero_count_is_empty() {
        let (p, s) = extract_patches(&[], 4, 0, 16, 0, &HornSchunckParams::default()).unwrap();
        assert!(p.is_empty() && s.is_empty());
    }

    #[test]
    fn constant_pair_gives_constant_patches() {
        let lf = LightField::constant(Dims::new(3, 3, 20, 20), 0.3).unwrap();
        let pairs = [TrainingPair { hr: lf.clone(), lr: lf, flow: None }];
        let (p, _) = extract_patches(&pairs, 4, 5, 8, 1, &HornSchunckParams::default()).unwrap();
        for pp in &p {
            assert_eq!(pp.input.channels(), 4);
            for t in [&pp.input, &pp.target] {
                assert!(t.as_slice().iter().all(|&a| (a - 0.3).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn seeded_coordinates_repeat() {
        let pairs = [pair(1), pair(2)];
        let hs = HornSchunckParams::default();
        let (pa, sa) = extract_patches(&pairs, 3, 12, 16, 9, &hs).unwrap();
        let (pb, sb) = extract_patches(&pairs, 3, 12, 16, 9, &hs).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(pa, pb);
        assert!(sa.iter().all(|s| s.x <= 8 && s.y <= 4));
        let (_, sc) = extract_patches(&pairs, 3, 12, 16, 10, &hs).unwrap();
        assert_ne!(sa, sc);
    }

    #[test]
    fn target_recombines_to_truth() {
        // With the prepared target fed back, recombination reproduces the
        // aligned HR field on the independent columns.
        let p = pair(4);
        let prep = prepare_pair(&p, 9, &HornSchunckParams::default()).unwrap();
        let flow = p.flow.clone().unwrap();
        let hr = align(&p.hr, &flow).unwrap();
        let lr = align(&p.lr, &flow).unwrap().to_matrix();
        let (model, _) = RankKModel::fit_lenient(&lr, 9).unwrap();
        let cols = DMatrix::from_fn(lr.m(), 9, |i, j| prep.target[j].vectorize()[i]);
        let back = model.recombine(&cols).unwrap();
        let truth = hr.to_matrix();
        assert!((back.data - truth.data).amax() < 1e-9);
    }

    #[test]
    fn patch_file_round_trip() {
        let (p, _) = extract_patches(&[pair(3)], 2, 4, 8, 0, &HornSchunckParams::default()).unwrap();
        let mut buf = Vec::new();
        write_patches(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 4 * 2 * 2 * 64 * 4);
        let back = read_patches(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in back.iter().zip(&p) {
            for (x, y) in a.input.as_slice().iter().zip(b.input.as_slice()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert!(read_patches(&buf[..buf.len() - 1]).is_err());
        assert!(read_patches(&b"LFNN\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn small_views_rejected() {
        assert!(extract_patches(&[pair(1)], 4, 3, 64, 0, &HornSchunckParams::default()).is_err());
    }
}
