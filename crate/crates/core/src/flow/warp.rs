use rayon::prelude::*;

use super::FlowField;
use crate::error::{Error, Result};
use crate::lightfield::{Dims, LightField, View};
use crate::resample::bilinear;

/// Pixels left unassigned by de-alignment, per view.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackMask {
    dims: Dims,
    /// Index `i − 1` holds view `i`; `true` marks a crack, row-major.
    holes: Vec<Vec<bool>>,
}

impl CrackMask {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            holes: vec![vec![false; dims.pixels()]; dims.views()],
        }
    }

    pub fn from_views(dims: Dims, holes: Vec<Vec<bool>>) -> Result<Self> {
        if holes.len() != dims.views() || holes.iter().any(|h| h.len() != dims.pixels()) {
            return Err(Error::Dimension("crack mask does not match dims".into()));
        }
        Ok(Self { dims, holes })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Whether pixel `(x, y)` of view `i` (1-based) is a crack.
    pub fn is_hole(&self, i: usize, x: usize, y: usize) -> bool {
        self.holes[i - 1][y * self.dims.x + x]
    }

    pub fn set(&mut self, i: usize, x: usize, y: usize, hole: bool) {
        self.holes[i - 1][y * self.dims.x + x] = hole;
    }

    /// Row-major mask of view `i` (1-based).
    pub fn view(&self, i: usize) -> &[bool] {
        &self.holes[i - 1]
    }

    pub fn count(&self) -> usize {
        self.holes.iter().flatten().filter(|&&h| h).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / (self.dims.views() * self.dims.pixels()) as f64
    }

    /// Union of two masks over the same dims.
    pub fn union(&self, other: &CrackMask) -> Result<CrackMask> {
        if self.dims != other.dims {
            return Err(Error::Dimension("crack masks differ in dims".into()));
        }
        let holes = self
            .holes
            .iter()
            .zip(&other.holes)
            .map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| p || q).collect())
            .collect();
        Ok(CrackMask {
            dims: self.dims,
            holes,
        })
    }
}

/// Resamples every view onto the centre grid: `out_i(x, y) = view_i(x + u, y + v)`.
pub fn align(lf: &LightField, flow: &FlowField) -> Result<LightField> {
    flow.check_matches(lf)?;
    let dims = lf.dims();
    let centre = lf.centre_index();
    let views = lf
        .views()
        .par_iter()
        .zip(flow.maps().collect::<Vec<_>>())
        .enumerate()
        .map(|(k, (view, (u, v)))| {
            if k + 1 == centre {
                return view.clone();
            }
            View::from_fn(dims.x, dims.y, |x, y| {
                bilinear(view, x as f64 + u.get(x, y), y as f64 + v.get(x, y))
            })
        })
        .collect();
    LightField::new(dims.p, dims.q, views)
}

/// Forward-splats aligned views back to their own grids. Each aligned pixel
/// lands on the rounded target `(x + u, y + v)`; collisions average and
/// untouched pixels become cracks (value 0).
pub fn dealign(aligned: &LightField, flow: &FlowField) -> Result<(LightField, CrackMask)> {
    flow.check_matches(aligned)?;
    let dims = aligned.dims();
    let centre = aligned.centre_index();
    let (w, h) = (dims.x, dims.y);
    let results: Vec<(View, Vec<bool>)> = aligned
        .views()
        .par_iter()
        .zip(flow.maps().collect::<Vec<_>>())
        .enumerate()
        .map(|(k, (view, (u, v)))| {
            if k + 1 == centre {
                return (view.clone(), vec![false; w * h]);
            }
            let mut sum = vec![0.0; w * h];
            let mut hits = vec![0u32; w * h];
            for y in 0..h {
                for x in 0..w {
                    let tx = (x as f64 + u.get(x, y)).round();
                    let ty = (y as f64 + v.get(x, y)).round();
                    if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                        continue;
                    }
                    let p = ty as usize * w + tx as usize;
                    sum[p] += view.get(x, y);
                    hits[p] += 1;
                }
            }
            let holes = hits.iter().map(|&n| n == 0).collect();
            let data = sum
                .iter()
                .zip(&hits)
                .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
                .collect();
            (View::new(w, h, data).expect("sized from dims"), holes)
        })
        .collect();
    let (views, holes): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((
        LightField::new(dims.p, dims.q, views)?,
        CrackMask::from_views(dims, holes)?,
    ))
}
