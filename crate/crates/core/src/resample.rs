//! Resampling and filtering primitives on single views.
//!
//! Every resampler here uses the same phase convention: output sample `j`
//! of a grid scaled by `s` sits at input coordinate `j / s`. With integer
//! factors this makes [`decimate`] followed by [`bicubic_resize`] upward
//! land every low-resolution sample back on the high-resolution pixel it
//! was taken from.

use crate::error::{Error, Result};
use crate::lightfield::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

const CATMULL_ROM_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = −0.5`.
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic up- or down-scaling by `factor`. Downscaling widens the kernel by
/// the factor (area antialiasing). Borders replicate; output is clamped to
/// `[0, 1]`.
pub fn bicubic_resize(v: &View, factor: f64, direction: Direction) -> Result<View> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidParameter(format!("resize factor {factor}")));
    }
    let scale = match direction {
        Direction::Up => factor,
        Direction::Down => 1.0 / factor,
    };
    let w = (v.width() as f64 * scale).round() as usize;
    let h = (v.height() as f64 * scale).round() as usize;
    if w == 0 || h == 0 {
        return Err(Error::Dimension(format!(
            "resizing {}x{} by {scale} gives an empty view",
            v.width(),
            v.height()
        )));
    }
    Ok(resize_scaled(v, w, h, scale, scale).clamp01())
}

/// Bicubic resize to an explicit size, scaling each axis by
/// `new / old`. Output is clamped to `[0, 1]`.
pub fn bicubic_resize_to(v: &View, width: usize, height: usize) -> Result<View> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!("target size {width}x{height}")));
    }
    let sx = width as f64 / v.width() as f64;
    let sy = height as f64 / v.height() as f64;
    Ok(resize_scaled(v, width, height, sx, sy).clamp01())
}

/// Per-output-sample tap lists for one axis.
fn axis_taps(src_len: usize, dst_len: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..dst_len)
        .map(|j| {
            let centre = j as f64 / scale;
            let lo = (centre - support).floor() as isize;
            let hi = (centre + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            let mut total = 0.0;
            for k in lo..=hi {
                let wgt = cubic_kernel((k as f64 - centre) / stretch);
                if wgt == 0.0 {
                    continue;
                }
                let idx = k.clamp(0, src_len as isize - 1) as usize;
                total += wgt;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn resize_scaled(v: &View, w: usize, h: usize, sx: f64, sy: f64) -> View {
    let xt = axis_taps(v.width(), w, sx);
    let yt = axis_taps(v.height(), h, sy);
    // Horizontal pass into a w × src_h buffer, then vertical.
    let mut tmp = vec![0.0; w * v.height()];
    for y in 0..v.height() {
        for (x, taps) in xt.iter().enumerate() {
            tmp[y * w + x] = taps.iter().map(|&(i, c)| c * v.get(i, y)).sum();
        }
    }
    View::from_fn(w, h, |x, y| yt[y].iter().map(|&(i, c)| c * tmp[i * w + x]).sum())
}

/// Normalized sampled Gaussian of odd length `window`.
pub fn gaussian_kernel(window: usize, sigma: f64) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "blur window must be odd, got {window}"
        )));
    }
    if !(sigma > 1e-3) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must exceed 1e-3, got {sigma}"
        )));
    }
    let r = (window / 2) as f64;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|c| *c /= total);
    Ok(k)
}

/// Separable convolution with replicated borders.
pub fn convolve_separable(v: &View, kx: &[f64], ky: &[f64]) -> View {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let tmp = View::from_fn(v.width(), v.height(), |x, y| {
        kx.iter()
            .enumerate()
            .map(|(i, c)| c * v.get_clamped(x as isize + i as isize - rx, y as isize))
            .sum()
    });
    View::from_fn(v.width(), v.height(), |x, y| {
        ky.iter()
            .enumerate()
            .map(|(i, c)| c * tmp.get_clamped(x as isize, y as isize + i as isize - ry))
            .sum()
    })
}

pub fn gaussian_blur(v: &View, window: usize, sigma: f64) -> Result<View> {
    let k = gaussian_kernel(window, sigma)?;
    Ok(convolve_separable(v, &k, &k))
}

/// Keeps every `factor`-th sample starting at offset 0.
pub fn decimate(v: &View, factor: usize) -> Result<View> {
    if factor == 0 {
        return Err(Error::InvalidParameter("decimation factor 0".into()));
    }
    let w = v.width().div_ceil(factor);
    let h = v.height().div_ceil(factor);
    Ok(View::from_fn(w, h, |x, y| v.get(x * factor, y * factor)))
}

/// Bilinear sample at a fractional position; coordinates outside the view
/// clamp to the nearest edge.
#[inline]
pub fn bilinear(v: &View, x: f64, y: f64) -> f64 {
    let xm = (v.width() - 1) as f64;
    let ym = (v.height() - 1) as f64;
    let x = x.clamp(0.0, xm);
    let y = y.clamp(0.0, ym);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(v.width() - 1);
    let y1 = (y0 + 1).min(v.height() - 1);
    let top = v.get(x0, y0) * (1.0 - fx) + v.get(x1, y0) * fx;
    let bottom = v.get(x0, y1) * (1.0 - fx) + v.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> View {
        let mut s = seed | 1;
        View::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            lo + (hi - lo) * ((s >> 11) as f64 / (1u64 << 53) as f64)
        })
    }

    #[test]
    fn factor_one_is_identity() {
        let v = noise(9, 7, 3, 0.0, 1.0);
        for dir in [Direction::Up, Direction::Down] {
            let out = bicubic_resize(&v, 1.0, dir).unwrap();
            for (a, b) in out.as_slice().iter().zip(v.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let v = View::filled(10, 6, 0.37);
        for (f, dir) in [(2.0, Direction::Up), (3.0, Direction::Up), (2.0, Direction::Down), (1.5, Direction::Up)] {
            let out = bicubic_resize(&v, f, dir).unwrap();
            assert!(out.as_slice().iter().all(|&a| (a - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn linear_ramp_survives_upscaling() {
        let v = View::from_fn(16, 12, |x, y| 0.02 * x as f64 + 0.03 * y as f64);
        let up = bicubic_resize(&v, 2.0, Direction::Up).unwrap();
        assert_eq!((up.width(), up.height()), (32, 24));
        // Interior: the 4-tap stencil must not touch a replicated border.
        for y in 4..18 {
            for x in 4..26 {
                let expect = 0.02 * x as f64 / 2.0 + 0.03 * y as f64 / 2.0;
                assert!((up.get(x, y) - expect).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn degenerate_output_rejected() {
        let v = View::filled(2, 2, 0.5);
        assert!(bicubic_resize(&v, 8.0, Direction::Down).is_err());
        assert!(bicubic_resize(&v, 0.0, Direction::Up).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let v = View::filled(8, 8, 0.6);
        let out = gaussian_blur(&v, 7, 1.6).unwrap();
        assert!(out.as_slice().iter().all(|&a| (a - 0.6).abs() < 1e-15));
    }

    #[test]
    fn blurred_impulse_is_sampled_gaussian() {
        let mut v = View::filled(15, 15, 0.0);
        v.set(7, 7, 1.0);
        let out = gaussian_blur(&v, 7, 1.6).unwrap();
        let g = |d: f64| (-d * d / (2.0 * 1.6 * 1.6)).exp();
        let norm: f64 = (-3..=3).map(|d| g(d as f64)).sum();
        for y in 0..15 {
            for x in 0..15 {
                let dx = x as f64 - 7.0;
                let dy = y as f64 - 7.0;
                let expect = if dx.abs() <= 3.0 && dy.abs() <= 3.0 {
                    g(dx) * g(dy) / (norm * norm)
                } else {
                    0.0
                };
                assert!((out.get(x, y) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blur_guards() {
        let v = View::filled(4, 4, 0.0);
        assert!(gaussian_blur(&v, 6, 1.6).is_err());
        assert!(gaussian_blur(&v, 7, 1e-3).is_err());
        assert!(gaussian_blur(&v, 7, 0.0).is_err());
    }

    #[test]
    fn bilinear_clamps_and_interpolates() {
        let v = View::from_fn(4, 3, |x, y| x as f64 + 10.0 * y as f64);
        assert!((bilinear(&v, 1.5, 0.5) - 6.5).abs() < 1e-12);
        assert_eq!(bilinear(&v, -3.0, -1.0), 0.0);
        assert_eq!(bilinear(&v, 9.0, 9.0), 23.0);
    }

    #[test]
    fn decimation_keeps_phase_zero() {
        let v = View::from_fn(5, 4, |x, y| (x + 10 * y) as f64);
        let d = decimate(&v, 2).unwrap();
        assert_eq!((d.width(), d.height()), (3, 2));
        assert_eq!(d.as_slice(), &[0.0, 2.0, 4.0, 20.0, 22.0, 24.0]);
    }

    proptest! {
        #[test]
        fn filters_commute_with_offsets(seed in any::<u64>(), c in 0.0f64..0.3) {
            let v = noise(11, 9, seed, 0.1, 0.6);
            let shifted = v.map(|a| a + c);
            let a = gaussian_blur(&shifted, 7, 1.6).unwrap();
            let b = gaussian_blur(&v, 7, 1.6).unwrap().map(|a| a + c);
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
            let a = bicubic_resize(&shifted, 2.0, Direction::Up).unwrap();
            let b = bicubic_resize(&v, 2.0, Direction::Up).unwrap().map(|a| a + c);
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
