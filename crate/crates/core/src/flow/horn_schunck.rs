use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowEstimate, FlowEstimator, FlowField, ViewFlowReport};
use crate::error::{Error, Result};
use crate::lightfield::{LightField, View};
use crate::resample::{bilinear, decimate, gaussian_blur};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HornSchunckParams {
    /// Pyramid levels including full resolution.
    pub levels: usize,
    /// Smoothness weight `α` (intensity units per pixel).
    pub smoothness: f64,
    /// Re-linearizations per level.
    pub warps: usize,
    /// Jacobi sweeps per warp.
    pub iterations: usize,
    /// Stop sweeping once no flow component moves more than this (px).
    pub tolerance: f64,
    /// Flow magnitude bound (px, per component).
    pub max_disp: f64,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        Self {
            levels: 4,
            smoothness: 0.1,
            warps: 3,
            iterations: 200,
            tolerance: 1e-4,
            max_disp: 16.0,
        }
    }
}

impl HornSchunckParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.warps == 0 || self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "levels, warps and iterations must be positive".into(),
            ));
        }
        if !(self.smoothness > 0.0 && self.tolerance > 0.0 && self.max_disp > 0.0) {
            return Err(Error::InvalidParameter(
                "smoothness, tolerance and max_disp must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Coarse-to-fine Horn–Schunck with bilinear warping between levels.
#[derive(Debug, Clone, Default)]
pub struct HornSchunck {
    pub params: HornSchunckParams,
}

impl HornSchunck {
    pub fn new(params: HornSchunckParams) -> Self {
        Self { params }
    }

    /// Flow taking `reference` onto `target`: `reference(x) ≈ target(x + w)`.
    pub fn pair(&self, reference: &View, target: &View) -> Result<(View, View, ViewFlowReport)> {
        self.params.validate()?;
        let ref_pyr = pyramid(reference, self.params.levels)?;
        let tgt_pyr = pyramid(target, self.params.levels)?;
        let levels = ref_pyr.len();

        let mut u = vec![0.0; ref_pyr[levels - 1].len()];
        let mut v = u.clone();
        let mut iterations = 0;
        let mut converged = false;
        let mut clamped = 0;

        for level in (0..levels).rev() {
            let r = &ref_pyr[level];
            let t = &tgt_pyr[level];
            if level + 1 < levels {
                let coarse = &ref_pyr[level + 1];
                u = upsample_flow(&u, coarse, r);
                v = upsample_flow(&v, coarse, r);
            }
            let bound = self.params.max_disp / (1 << level) as f64;
            for _ in 0..self.params.warps {
                let (sweeps, done) = self.refine(r, t, &mut u, &mut v);
                iterations += sweeps;
                converged = done;
                clamped = clamp_flow(&mut u, bound) + clamp_flow(&mut v, bound);
            }
        }
        let (w, h) = (reference.width(), reference.height());
        Ok((
            View::new(w, h, u)?,
            View::new(w, h, v)?,
            ViewFlowReport {
                view: 0,
                converged,
                iterations,
                clamped,
            },
        ))
    }

    /// One linearization around the current flow followed by Jacobi sweeps.
    fn refine(&self, r: &View, t: &View, u: &mut [f64], v: &mut [f64]) -> (usize, bool) {
        let (w, h) = (r.width(), r.height());
        let warped = View::from_fn(w, h, |x, y| {
            let i = y * w + x;
            bilinear(t, x as f64 + u[i], y as f64 + v[i])
        });
        let (rx, ry) = gradients(r);
        let (tx, ty) = gradients(&warped);
        let n = w * h;
        let alpha2 = self.params.smoothness * self.params.smoothness;
        let mut ix = vec![0.0; n];
        let mut iy = vec![0.0; n];
        let mut it = vec![0.0; n];
        let mut den = vec![0.0; n];
        for p in 0..n {
            let (x, y) = ((p % w) as f64 + u[p], (p / w) as f64 + v[p]);
            if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
                // No data term where the sample leaves the target.
                den[p] = alpha2;
                continue;
            }
            ix[p] = 0.5 * (rx[p] + tx[p]);
            iy[p] = 0.5 * (ry[p] + ty[p]);
            it[p] = warped.as_slice()[p] - r.as_slice()[p];
            den[p] = alpha2 + ix[p] * ix[p] + iy[p] * iy[p];
        }
        let u0 = u.to_vec();
        let v0 = v.to_vec();
        let mut ubar = vec![0.0; n];
        let mut vbar = vec![0.0; n];
        for sweep in 1..=self.params.iterations {
            neighbourhood_mean(u, w, h, &mut ubar);
            neighbourhood_mean(v, w, h, &mut vbar);
            let mut change = 0.0f64;
            for p in 0..n {
                let num = ix[p] * (ubar[p] - u0[p]) + iy[p] * (vbar[p] - v0[p]) + it[p];
                let k = num / den[p];
                let nu = ubar[p] - ix[p] * k;
                let nv = vbar[p] - iy[p] * k;
                change = change.max((nu - u[p]).abs()).max((nv - v[p]).abs());
                u[p] = nu;
                v[p] = nv;
            }
            if change < self.params.tolerance {
                return (sweep, true);
            }
        }
        (self.params.iterations, false)
    }
}

impl FlowEstimator for HornSchunck {
    fn estimate(&self, lf: &LightField) -> Result<FlowEstimate> {
        self.params.validate()?;
        let centre = lf.centre_index();
        let reference = lf.centre_view();
        let results = lf
            .views()
            .par_iter()
            .enumerate()
            .map(|(k, view)| {
                let i = k + 1;
                if i == centre {
                    let z = View::filled(view.width(), view.height(), 0.0);
                    return Ok((z.clone(), z, None));
                }
                let (u, v, mut report) = self.pair(reference, view)?;
                report.view = i;
                Ok((u, v, Some(report)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut us = Vec::with_capacity(results.len());
        let mut vs = Vec::with_capacity(results.len());
        let mut reports = Vec::new();
        for (u, v, rep) in results {
            us.push(u);
            vs.push(v);
            reports.extend(rep);
        }
        Ok(FlowEstimate {
            flow: FlowField::new(lf.dims(), us, vs)?,
            reports,
        })
    }
}

const MIN_LEVEL_SIZE: usize = 16;

fn pyramid(v: &View, levels: usize) -> Result<Vec<View>> {
    let mut out = vec![gaussian_blur(v, 3, 0.6)?];
    while out.len() < levels {
        let last = out.last().expect("non-empty");
        if last.width().div_ceil(2) < MIN_LEVEL_SIZE || last.height().div_ceil(2) < MIN_LEVEL_SIZE {
            break;
        }
        let next = decimate(&gaussian_blur(last, 7, 1.2)?, 2)?;
        out.push(next);
    }
    Ok(out)
}

fn upsample_flow(flow: &[f64], coarse: &View, fine: &View) -> Vec<f64> {
    let cv = View::new(coarse.width(), coarse.height(), flow.to_vec())
        .expect("flow sized from its level");
    let mut out = Vec::with_capacity(fine.len());
    for y in 0..fine.height() {
        for x in 0..fine.width() {
            out.push(2.0 * bilinear(&cv, x as f64 / 2.0, y as f64 / 2.0));
        }
    }
    out
}

fn clamp_flow(flow: &mut [f64], bound: f64) -> usize {
    let mut hits = 0;
    for f in flow {
        if f.abs() > bound {
            *f = f.clamp(-bound, bound);
            hits += 1;
        }
    }
    hits
}

/// Central differences with replicated borders.
fn gradients(img: &View) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            gx[y * w + x] = 0.5 * (img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi));
            gy[y * w + x] = 0.5 * (img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1));
        }
    }
    (gx, gy)
}

/// Horn–Schunck weighted mean: 1/6 for edge neighbours, 1/12 for corners.
fn neighbourhood_mean(f: &[f64], w: usize, h: usize, out: &mut [f64]) {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        f[y * w + x]
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let edge = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1);
            let corner =
                at(x - 1, y - 1) + at(x + 1, y - 1) + at(x - 1, y + 1) + at(x + 1, y + 1);
            out[y as usize * w + x as usize] = edge / 6.0 + corner / 12.0;
        }
    }
}
