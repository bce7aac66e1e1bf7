use crate::error::Result;
use crate::lightfield::{check_same_shape, View};

/// Reported in place of +∞ when two views are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn mse(a: &View, b: &View) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &View, b: &View, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR restricted to pixels at least `border` away from every edge.
pub fn psnr_interior(a: &View, b: &View, peak: f64, border: usize) -> Result<f64> {
    check_same_shape(a, b)?;
    if 2 * border >= a.width() || 2 * border >= a.height() {
        return psnr(a, b, peak);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in border..a.height() - border {
        for x in border..a.width() - border {
            let d = a.get(x, y) - b.get(x, y);
            sum += d * d;
            count += 1;
        }
    }
    Ok(psnr_from_mse(sum / count as f64, peak))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_views_hit_the_cap() {
        let v = View::filled(3, 3, 0.4);
        assert_eq!(psnr(&v, &v, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn uniform_error_of_a_tenth_is_twenty_db() {
        let a = View::filled(5, 4, 0.5);
        let b = View::filled(5, 4, 0.6);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn black_vs_white_is_zero_db() {
        let a = View::filled(2, 2, 0.0);
        let b = View::filled(2, 2, 1.0);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn symmetric() {
        let a = View::from_fn(4, 4, |x, y| (x * y) as f64 / 9.0);
        let b = View::from_fn(4, 4, |x, y| (x + y) as f64 / 6.0);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        assert!(psnr(&View::filled(2, 2, 0.0), &View::filled(2, 3, 0.0), 1.0).is_err());
    }

    #[test]
    fn interior_ignores_border() {
        let a = View::filled(30, 30, 0.5);
        let mut b = a.clone();
        b.set(0, 0, 1.0);
        assert_eq!(psnr_interior(&a, &b, 1.0, 10).unwrap(), PSNR_CAP_DB);
        assert!(psnr(&a, &b, 1.0).unwrap() < PSNR_CAP_DB);
    }
}
