use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::View;
use crate::resample::gaussian_blur;

/// Per-pixel 2×2 structure tensor of an EPI, stored as three component
/// images: `xx`, `xs` and `ss` (x runs along columns, s along rows).
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    pub xx: View,
    pub xs: View,
    pub ss: View,
}

impl StructureTensor {
    pub fn width(&self) -> usize {
        self.xx.width()
    }

    pub fn height(&self) -> usize {
        self.xx.height()
    }

    pub fn trace(&self, x: usize, s: usize) -> f64 {
        self.xx.get(x, s) + self.ss.get(x, s)
    }

    /// Eigenvalues `(minor, major)` at one pixel.
    pub fn eigenvalues(&self, x: usize, s: usize) -> (f64, f64) {
        let (a, b, c) = (self.xx.get(x, s), self.xs.get(x, s), self.ss.get(x, s));
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mid - rad, mid + rad)
    }

    /// Angle of the minor eigenvector (the isophote), in `[0, π)`.
    pub fn minor_angle(&self, x: usize, s: usize) -> f64 {
        let (a, b, c) = (self.xx.get(x, s), self.xs.get(x, s), self.ss.get(x, s));
        let major = 0.5 * (2.0 * b).atan2(a - c);
        (major + FRAC_PI_2).rem_euclid(std::f64::consts::PI)
    }
}

/// Outer products of Sobel gradients, optionally smoothed by a 3-tap
/// Gaussian (σ = 0.8). The EPI is extended by one pixel of linear
/// extrapolation so border gradients keep their slope.
pub fn structure_tensor(epi: &View, smooth: bool) -> Result<StructureTensor> {
    let (w, h) = (epi.width(), epi.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!("EPI {w}x{h} is smaller than 3x3")));
    }
    let at = |x: usize, s: usize, dx: isize, ds: isize| extended(epi, x as isize + dx, s as isize + ds);
    let gx = View::from_fn(w, h, |x, s| {
        ((at(x, s, 1, -1) - at(x, s, -1, -1))
            + 2.0 * (at(x, s, 1, 0) - at(x, s, -1, 0))
            + (at(x, s, 1, 1) - at(x, s, -1, 1)))
            / 8.0
    });
    let gs = View::from_fn(w, h, |x, s| {
        ((at(x, s, -1, 1) - at(x, s, -1, -1))
            + 2.0 * (at(x, s, 0, 1) - at(x, s, 0, -1))
            + (at(x, s, 1, 1) - at(x, s, 1, -1)))
            / 8.0
    });
    let mut t = StructureTensor {
        xx: gx.map(|g| g * g),
        xs: gx.zip_map(&gs, |a, b| a * b)?,
        ss: gs.map(|g| g * g),
    };
    if smooth {
        t.xx = gaussian_blur(&t.xx, 3, 0.8)?;
        t.xs = gaussian_blur(&t.xs, 3, 0.8)?;
        t.ss = gaussian_blur(&t.ss, 3, 0.8)?;
    }
    Ok(t)
}

/// Sample at most one pixel outside the EPI, extrapolating linearly.
fn extended(epi: &View, x: isize, s: isize) -> f64 {
    let (w, h) = (epi.width() as isize, epi.height() as isize);
    if x < 0 {
        2.0 * extended(epi, 0, s) - extended(epi, 1, s)
    } else if x >= w {
        2.0 * extended(epi, w - 1, s) - extended(epi, w - 2, s)
    } else if s < 0 {
        2.0 * extended(epi, x, 0) - extended(epi, x, 1)
    } else if s >= h {
        2.0 * extended(epi, x, h - 1) - extended(epi, x, h - 2)
    } else {
        epi.get(x as usize, s as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationParams {
    /// Half-width of the admissible band around π/2.
    pub angle_band: f64,
    /// Data weight of the TV-L1 smoothing.
    pub tv_lambda: f64,
    pub tv_iterations: usize,
    /// Pixels whose tensor trace is at or below this carry no orientation.
    pub min_trace: f64,
}

impl Default for OrientationParams {
    fn default() -> Self {
        Self {
            angle_band: std::f64::consts::FRAC_PI_4,
            tv_lambda: 0.5,
            tv_iterations: 500,
            min_trace: 1e-10,
        }
    }
}

impl OrientationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_band > 0.0 && self.angle_band <= FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!("angle band {}", self.angle_band)));
        }
        if !(self.tv_lambda > 0.0 && self.tv_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("TV weight {}", self.tv_lambda)));
        }
        Ok(())
    }

    fn band(&self) -> (f64, f64) {
        (FRAC_PI_2 - self.angle_band, FRAC_PI_2 + self.angle_band)
    }
}

/// Dominant isophote angle per EPI column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationField {
    /// Smoothed angle per column, radians in the (x, s) plane.
    pub theta: Vec<f64>,
    /// Column medians before smoothing.
    pub median: Vec<f64>,
    /// Number of in-band pixels per column.
    pub support: Vec<usize>,
}

impl OrientationField {
    /// Zero-disparity orientation for `width` columns.
    pub fn flat(width: usize) -> Self {
        Self {
            theta: vec![FRAC_PI_2; width],
            median: vec![FRAC_PI_2; width],
            support: vec![0; width],
        }
    }

    pub fn direction(&self, x: usize) -> (f64, f64) {
        let t = self.theta[x];
        (t.cos(), t.sin())
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "x,theta,median,support")?;
        for x in 0..self.len() {
            writeln!(w, "{x},{},{},{}", self.theta[x], self.median[x], self.support[x])?;
        }
        Ok(())
    }
}

/// Per-column median of in-band minor-eigenvector angles, then TV-L1
/// smoothing along x. Pixels flagged in `mask` are ignored.
pub fn dominant_orientation(
    tensor: &StructureTensor,
    mask: Option<&[bool]>,
    p: &OrientationParams,
) -> Result<OrientationField> {
    p.validate()?;
    let (w, h) = (tensor.width(), tensor.height());
    if let Some(m) = mask {
        if m.len() != w * h {
            return Err(Error::Dimension(format!("mask of {} for a {w}x{h} EPI", m.len())));
        }
    }
    let (lo, hi) = p.band();
    let mut median = Vec::with_capacity(w);
    let mut support = Vec::with_capacity(w);
    let mut col = Vec::with_capacity(h);
    for x in 0..w {
        col.clear();
        for s in 0..h {
            if mask.is_some_and(|m| m[s * w + x]) || tensor.trace(x, s) <= p.min_trace {
                continue;
            }
            let a = tensor.minor_angle(x, s);
            if (lo..=hi).contains(&a) {
                col.push(a);
            }
        }
        support.push(col.len());
        median.push(if col.is_empty() { FRAC_PI_2 } else { median_of(&mut col) });
    }
    let theta = tv_l1(&median, p.tv_lambda, p.tv_iterations)
        .into_iter()
        .map(|t| t.clamp(lo, hi))
        .collect();
    Ok(OrientationField {
        theta,
        median,
        support,
    })
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Total variation `Σ |f[i+1] − f[i]|`.
pub fn total_variation(f: &[f64]) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `argmin_u TV(u) + λ‖u − f‖₁` by Chambolle–Pock primal-dual iterations.
pub fn tv_l1(f: &[f64], lambda: f64, iterations: usize) -> Vec<f64> {
    let n = f.len();
    if n < 2 {
        return f.to_vec();
    }
    // ‖D‖² ≤ 4 for the forward difference, so τσ‖D‖² = 1.
    let (tau, sigma) = (0.5, 0.5);
    let mut u = f.to_vec();
    let mut ubar = u.clone();
    let mut p = vec![0.0; n - 1];
    for _ in 0..iterations {
        let mut change: f64 = 0.0;
        for i in 0..n - 1 {
            let next = (p[i] + sigma * (ubar[i + 1] - ubar[i])).clamp(-1.0, 1.0);
            change = change.max((next - p[i]).abs());
            p[i] = next;
        }
        for i in 0..n {
            // Dᵀp at i
            let left = if i > 0 { p[i - 1] } else { 0.0 };
            let right = if i < n - 1 { p[i] } else { 0.0 };
            let v = u[i] - tau * (left - right);
            let d = v - f[i];
            let t = tau * lambda;
            let new = f[i] + d.signum() * (d.abs() - t).max(0.0);
            ubar[i] = 2.0 * new - u[i];
            change = change.max((new - u[i]).abs());
            u[i] = new;
        }
        if change < 1e-12 {
            break;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::{Dims, EpiKind};
    use crate::synth::{synth, SyntheticScene};
    use proptest::prelude::*;

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(std::f64::consts::PI);
        d.min(std::f64::consts::PI - d)
    }

    #[test]
    fn constant_epi_has_zero_tensor_and_falls_back() {
        let epi = View::filled(20, 9, 0.4);
        let t = structure_tensor(&epi, true).unwrap();
        for v in [&t.xx, &t.xs, &t.ss] {
            assert!(v.as_slice().iter().all(|&a| a == 0.0));
        }
        let o = dominant_orientation(&t, None, &OrientationParams::default()).unwrap();
        assert!(o.theta.iter().all(|&a| a == FRAC_PI_2));
        assert!(o.support.iter().all(|&n| n == 0));
    }

    #[test]
    fn vertical_stripes_have_no_s_gradient() {
        let epi = View::from_fn(16, 7, |x, _| (x as f64 * 0.9).sin() * 0.5 + 0.5);
        let t = structure_tensor(&epi, false).unwrap();
        assert!(t.ss.as_slice().iter().all(|&a| a == 0.0));
        assert!(t.xs.as_slice().iter().all(|&a| a == 0.0));
        for x in 1..15 {
            assert!(t.xx.get(x, 3) > 0.0);
        }
    }

    #[test]
    fn ramp_isophote_matches_slope() {
        for deg in [50.0f64, 70.0, 90.0, 105.0, 130.0] {
            let phi = deg.to_radians();
            // constant along (cos φ, sin φ)
            let epi = View::from_fn(24, 15, |x, s| 0.3 + 0.02 * (-(x as f64) * phi.sin() + s as f64 * phi.cos()));
            let t = structure_tensor(&epi, true).unwrap();
            for s in 2..13 {
                for x in 2..22 {
                    let a = t.minor_angle(x, s);
                    assert!(angle_diff(a, phi).to_degrees() < 2.0, "{deg}: got {}", a.to_degrees());
                }
            }
        }
    }

    #[test]
    fn synthetic_epi_orientation_matches_disparity() {
        for d in [-0.8, -0.3, 0.0, 0.5, 0.9] {
            let mut scene = SyntheticScene::planar(Dims::new(5, 9, 48, 8), d, 11);
            // finest octave at 4 px, well below Nyquist
            scene.layers[0].cell = 16.0;
            let lf = synth(&scene, 0).unwrap().lf;
            let epi = lf.extract_epi(EpiKind::Horizontal, 4, 3).unwrap().image;
            let t = structure_tensor(&epi, true).unwrap();
            let o = dominant_orientation(&t, None, &OrientationParams::default()).unwrap();
            let expect = 1.0f64.atan2(d);
            for x in 0..48 {
                assert!(
                    angle_diff(o.theta[x], expect).to_degrees() < 2.0,
                    "d={d} x={x}: {} vs {}",
                    o.theta[x].to_degrees(),
                    expect.to_degrees()
                );
            }
        }
    }

    #[test]
    fn masked_pixels_are_ignored() {
        let epi = View::from_fn(10, 5, |x, _| x as f64 * 0.1);
        let t = structure_tensor(&epi, false).unwrap();
        let mask = vec![true; 50];
        let o = dominant_orientation(&t, Some(&mask), &OrientationParams::default()).unwrap();
        assert!(o.support.iter().all(|&n| n == 0));
        assert!(dominant_orientation(&t, Some(&mask[..3]), &OrientationParams::default()).is_err());
    }

    #[test]
    fn impulse_is_smoothed() {
        let mut f = vec![1.2; 21];
        f[10] = 1.9;
        let u = tv_l1(&f, 0.5, 500);
        assert!(total_variation(&u) < total_variation(&f));
        assert!((u[10] - 1.2).abs() < 1e-6, "{}", u[10]);
        let jump = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(jump(&u) < jump(&f));
    }

    #[test]
    fn wide_step_survives_tv() {
        let f: Vec<f64> = (0..30).map(|i| if i < 15 { 1.0 } else { 2.0 }).collect();
        let u = tv_l1(&f, 0.5, 500);
        for (a, b) in u.iter().zip(&f) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_size_rejected() {
        assert!(structure_tensor(&View::filled(2, 5, 0.0), true).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn tensor_is_psd_and_angles_in_band(data in proptest::collection::vec(0.0f64..1.0, 8 * 6)) {
            let epi = View::new(8, 6, data).unwrap();
            let t = structure_tensor(&epi, true).unwrap();
            for s in 0..6 {
                for x in 0..8 {
                    let (lo, hi) = t.eigenvalues(x, s);
                    prop_assert!(lo >= -1e-12 && hi >= lo);
                }
            }
            let p = OrientationParams::default();
            let o = dominant_orientation(&t, None, &p).unwrap();
            for x in 0..8 {
                prop_assert!((o.theta[x] - FRAC_PI_2).abs() <= p.angle_band + 1e-12);
                let (c, s) = o.direction(x);
                prop_assert!(((c * c + s * s).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }
}
