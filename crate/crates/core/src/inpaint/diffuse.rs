use serde::{Deserialize, Serialize};

use super::OrientationField;
use crate::error::{Error, Result};
use crate::lightfield::View;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseParams {
    pub tau: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DiffuseParams {
    fn default() -> Self {
        Self {
            tau: 0.2,
            tolerance: 1e-4,
            max_iterations: 500,
        }
    }
}

impl DiffuseParams {
    pub fn validate(&self) -> Result<()> {
        // the operator's spectrum lies in [-4, 0]
        if !(self.tau > 0.0 && self.tau < 0.5) {
            return Err(Error::InvalidParameter(format!("diffusion step {} outside (0, 0.5)", self.tau)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diffused {
    pub image: View,
    pub iterations: usize,
    pub converged: bool,
    /// Largest update of the last iteration.
    pub last_update: f64,
}

/// Fills the masked pixels of an EPI by explicit diffusion along the column
/// orientations, `ε ← ε + τ·dᵀHd` with `d = (cos θ, sin θ)`. Rows beyond
/// the EPI edge replicate the pixel itself along the isophote. Known pixels
/// are never written. Filled values are clamped to the range of the known
/// pixels. Fails when every pixel is masked.
pub fn diffuse_epi(epi: &View, mask: &[bool], orient: &OrientationField, p: &DiffuseParams) -> Result<Diffused> {
    p.validate()?;
    let (w, h) = (epi.width(), epi.height());
    if mask.len() != w * h || orient.len() != w {
        return Err(Error::Dimension(format!(
            "EPI {w}x{h} with mask of {} and {} orientations",
            mask.len(),
            orient.len()
        )));
    }
    let holes: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    if holes.is_empty() {
        return Ok(Diffused {
            image: epi.clone(),
            iterations: 0,
            converged: true,
            last_update: 0.0,
        });
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &a) in epi.as_slice().iter().enumerate() {
        if !mask[i] {
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    if lo > hi {
        return Err(Error::InvalidParameter("EPI has no known pixels".into()));
    }

    let mut img = epi.clone();
    for &i in &holes {
        let v = initial_guess(epi, mask, orient, i % w, i / w);
        img.as_mut_slice()[i] = v.clamp(lo, hi);
    }

    // Tr(θθᵀH) is the second derivative along the isophote; it is taken as a
    // central difference between the two adjacent rows, reached by a step
    // (cot θ, ±1) of squared length 1/sin²θ.
    let steps: Vec<(f64, f64)> = (0..w)
        .map(|x| {
            let (c, s) = orient.direction(x);
            (c / s, s * s)
        })
        .collect();
    let mut updates = vec![0.0; holes.len()];
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;
    while iterations < p.max_iterations && last_update >= p.tolerance {
        last_update = 0.0;
        for (u, &i) in updates.iter_mut().zip(&holes) {
            let (x, s) = (i % w, i / w);
            let c = img.get(x, s);
            let (cot, weight) = steps[x];
            let along = |dir: f64| {
                let row = s as isize + dir as isize;
                if row < 0 || row >= h as isize {
                    c
                } else {
                    row_sample(&img, x as f64 + dir * cot, row as usize)
                }
            };
            let d2 = weight * (along(1.0) - 2.0 * c + along(-1.0));
            let next = (c + p.tau * d2).clamp(lo, hi);
            *u = next;
            last_update = last_update.max((next - c).abs());
        }
        for (&u, &i) in updates.iter().zip(&holes) {
            img.as_mut_slice()[i] = u;
        }
        iterations += 1;
    }
    Ok(Diffused {
        image: img,
        iterations,
        converged: last_update < p.tolerance,
        last_update,
    })
}

/// Linear interpolation along row `s`, clamped to the row ends.
fn row_sample(img: &View, x: f64, s: usize) -> f64 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let x0 = x.floor() as usize;
    let f = x - x0 as f64;
    if f == 0.0 {
        img.get(x0, s)
    } else {
        (1.0 - f) * img.get(x0, s) + f * img.get(x0 + 1, s)
    }
}

/// Walks row by row along the isophote through `(x, s)` in both directions
/// and interpolates between the first known samples found. Falls back to
/// the nearest known pixels in the same row, then to the known mean.
fn initial_guess(epi: &View, mask: &[bool], orient: &OrientationField, x: usize, s: usize) -> f64 {
    let (w, h) = (epi.width(), epi.height());
    let known = |x: usize, s: usize| !mask[s * w + x];
    let (c, sn) = orient.direction(x);
    let slope = c / sn;
    let sample = |xf: f64, row: usize| -> Option<f64> {
        if xf < -1e-9 || xf > (w - 1) as f64 + 1e-9 {
            return None;
        }
        let xf = xf.clamp(0.0, (w - 1) as f64);
        let x0 = xf.floor() as usize;
        let f = xf - x0 as f64;
        if f < 1e-9 {
            return known(x0, row).then(|| epi.get(x0, row));
        }
        let x1 = x0 + 1;
        (known(x0, row) && known(x1, row)).then(|| (1.0 - f) * epi.get(x0, row) + f * epi.get(x1, row))
    };
    let walk = |dir: isize| -> Option<(f64, f64)> {
        let mut j = 1isize;
        loop {
            let row = s as isize + dir * j;
            if row < 0 || row >= h as isize {
                return None;
            }
            let xf = x as f64 + (dir * j) as f64 * slope;
            if xf < -1e-9 || xf > (w - 1) as f64 + 1e-9 {
                return None;
            }
            if let Some(v) = sample(xf, row as usize) {
                return Some((v, j as f64));
            }
            j += 1;
        }
    };
    if let Some(v) = blend(walk(-1), walk(1)) {
        return v;
    }
    let left = (0..x).rev().find(|&xx| known(xx, s)).map(|xx| (epi.get(xx, s), (x - xx) as f64));
    let right = (x + 1..w).find(|&xx| known(xx, s)).map(|xx| (epi.get(xx, s), (xx - x) as f64));
    if let Some(v) = blend(left, right) {
        return v;
    }
    let (sum, n) = epi
        .as_slice()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .fold((0.0, 0usize), |(a, n), (&v, _)| (a + v, n + 1));
    sum / n as f64
}

/// Distance-weighted linear interpolation between two optional samples.
fn blend(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<f64> {
    match (a, b) {
        (Some((va, da)), Some((vb, db))) => Some((va * db + vb * da) / (da + db)),
        (Some((v, _)), None) | (None, Some((v, _))) => Some(v),
        (None, None) => None,
    }
}
