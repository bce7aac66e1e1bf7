//! Degradation model and iterative back-projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{LightField, View};
use crate::resample::{bicubic_resize_to, decimate, gaussian_blur};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    /// Integer magnification factor (2 or 3 in practice).
    pub mag_factor: usize,
    pub window: usize,
    pub sigma: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    /// Seeds the noise; unused when `noise == 0`.
    pub seed: u64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        Self {
            mag_factor: 2,
            window: 7,
            sigma: 1.6,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl DegradeParams {
    pub fn new(mag_factor: usize) -> Self {
        Self {
            mag_factor,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mag_factor < 2 {
            return Err(Error::InvalidParameter(format!(
                "magnification factor must be an integer ≥ 2, got {}",
                self.mag_factor
            )));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("blur window {} is even", self.window)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise σ {}", self.noise)));
        }
        Ok(())
    }
}

/// Blur, decimate (stride `α`, offset 0), then bicubic back to the input
/// size. Views whose size is not a multiple of `α` keep the partial last
/// sample row/column (`⌈X/α⌉` samples) and are resized back exactly.
pub fn degrade_view(v: &View, p: &DegradeParams) -> Result<View> {
    p.validate()?;
    let low = decimate(&gaussian_blur(v, p.window, p.sigma)?, p.mag_factor)?;
    bicubic_resize_to(&low, v.width(), v.height())
}

/// Applies [`degrade_view`] to every view and adds noise if requested. The
/// noise stream is drawn in linear view order from one seeded generator.
pub fn degrade(lf: &LightField, p: &DegradeParams) -> Result<LightField> {
    p.validate()?;
    let mut out = lf.map_views(|v| degrade_view(v, p))?;
    if p.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.noise)
            .map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;
        for view in out.views_mut() {
            for a in view.as_mut_slice() {
                *a = (*a + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Back-projection result with the residual `‖degrade(Ī_κ) − I^L‖_F` for
/// `κ = 0..=K`.
#[derive(Debug, Clone)]
pub struct IbpResult {
    pub lf: LightField,
    pub residuals: Vec<f64>,
}

impl IbpResult {
    pub fn is_non_increasing(&self) -> bool {
        self.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    }
}

/// `K` rounds of `Ī ← clamp(Ī + I^L − degrade(Ī))`. Noise in `p` is
/// ignored; the observation already carries it.
pub fn back_project(
    estimate: &LightField,
    observed: &LightField,
    p: &DegradeParams,
    iterations: usize,
) -> Result<IbpResult> {
    p.validate()?;
    if estimate.dims() != observed.dims() {
        return Err(Error::Dimension(format!(
            "estimate {:?} vs observation {:?}",
            estimate.dims(),
            observed.dims()
        )));
    }
    let clean = DegradeParams { noise: 0.0, ..p.clone() };
    let per_view: Vec<(View, Vec<f64>)> = {
        use rayon::prelude::*;
        estimate
            .views()
            .par_iter()
            .zip(observed.views())
            .map(|(est, obs)| back_project_view(est, obs, &clean, iterations))
            .collect::<Result<_>>()?
    };
    let mut residuals = vec![0.0; iterations + 1];
    let mut views = Vec::with_capacity(per_view.len());
    for (v, sq) in per_view {
        for (r, s) in residuals.iter_mut().zip(&sq) {
            *r += s;
        }
        views.push(v);
    }
    let dims = estimate.dims();
    Ok(IbpResult {
        lf: LightField::new(dims.p, dims.q, views)?,
        residuals: residuals.into_iter().map(f64::sqrt).collect(),
    })
}

/// Returns the refined view and its squared residual per iteration.
fn back_project_view(
    est: &View,
    obs: &View,
    p: &DegradeParams,
    iterations: usize,
) -> Result<(View, Vec<f64>)> {
    let mut cur = est.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    let mut diff = obs.zip_map(&degrade_view(&cur, p)?, |a, b| a - b)?;
    trace.push(sq_norm(&diff));
    for _ in 0..iterations {
        cur = cur.zip_map(&diff, |a, d| (a + d).clamp(0.0, 1.0))?;
        diff = obs.zip_map(&degrade_view(&cur, p)?, |a, b| a - b)?;
        trace.push(sq_norm(&diff));
    }
    Ok((cur, trace))
}

fn sq_norm(v: &View) -> f64 {
    v.as_slice().iter().map(|a| a * a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Dims;
    use crate::synth::{synth, SyntheticScene};
    use proptest::prelude::*;

    #[test]
    fn constants_survive() {
        let lf = LightField::constant(Dims::new(3, 3, 13, 10), 0.3).unwrap();
        for a in [2, 3] {
            let out = degrade(&lf, &DegradeParams::new(a)).unwrap();
            for v in out.views() {
                assert!(v.as_slice().iter().all(|&x| (x - 0.3).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn nyquist_checkerboard_flattens() {
        // 1-D response of the normalized Gaussian at the Nyquist frequency.
        let sigma: f64 = 1.6;
        let g: Vec<f64> = (-3i32..=3).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let total: f64 = g.iter().sum();
        let r: f64 = (-3i32..=3)
            .zip(&g)
            .map(|(k, &w)| if k % 2 == 0 { w } else { -w })
            .sum::<f64>()
            / total;
        let board = View::from_fn(32, 32, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 });
        let out = degrade_view(&board, &DegradeParams::new(2)).unwrap();
        // Decimating the even lattice keeps the in-phase samples only.
        let expect = 0.5 + 0.5 * r * r;
        // Replicated borders break the pattern within reach of the taps.
        for y in 8..24 {
            for x in 8..24 {
                assert!((out.get(x, y) - expect).abs() < 1e-9, "{} vs {expect}", out.get(x, y));
            }
        }
        assert!((expect - 0.5).abs() < 1e-3);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let lf = LightField::constant(Dims::new(1, 3, 8, 8), 0.5).unwrap();
        let p = DegradeParams { noise: 0.05, seed: 3, ..Default::default() };
        assert_eq!(degrade(&lf, &p).unwrap(), degrade(&lf, &p).unwrap());
        assert_ne!(degrade(&lf, &p).unwrap(), lf);
    }

    #[test]
    fn invalid_params() {
        assert!(DegradeParams::new(1).validate().is_err());
        assert!(DegradeParams { window: 6, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_iterations_is_identity() {
        let lf = synth(&SyntheticScene::planar(Dims::new(1, 3, 20, 20), 0.5, 1), 0).unwrap().lf;
        let obs = degrade(&lf, &DegradeParams::default()).unwrap();
        let res = back_project(&lf, &obs, &DegradeParams::default(), 0).unwrap();
        assert_eq!(res.lf, lf);
        assert_eq!(res.residuals.len(), 1);
    }

    #[test]
    fn consistent_estimate_is_fixed_point() {
        let lf = synth(&SyntheticScene::planar(Dims::new(1, 3, 20, 20), 0.5, 1), 0).unwrap().lf;
        let obs = degrade(&lf, &DegradeParams::default()).unwrap();
        let res = back_project(&lf, &obs, &DegradeParams::default(), 4).unwrap();
        assert_eq!(res.lf, lf);
        assert!(res.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn residual_halves_from_bicubic_start() {
        let p = DegradeParams::default();
        let hr = synth(&SyntheticScene::planar(Dims::new(3, 3, 32, 32), 1.0, 2), 0).unwrap().lf;
        let obs = degrade(&hr, &p).unwrap();
        let res = back_project(&obs, &obs, &p, 10).unwrap();
        assert!(res.is_non_increasing(), "{:?}", res.residuals);
        assert!(res.residuals[10] <= 0.5 * res.residuals[0], "{:?}", res.residuals);
    }

    #[test]
    fn views_are_independent() {
        let p = DegradeParams::default();
        let hr = synth(&SyntheticScene::planar(Dims::new(1, 3, 24, 24), 1.0, 2), 0).unwrap().lf;
        let obs = degrade(&hr, &p).unwrap();
        let base = back_project(&obs, &obs, &p, 3).unwrap().lf;
        let mut poked = obs.clone();
        poked.view_mut(1, 1).set(5, 5, 0.9);
        let other = back_project(&poked, &obs, &p, 3).unwrap().lf;
        assert_eq!(base.view(1, 2), other.view(1, 2));
        assert_eq!(base.view(1, 3), other.view(1, 3));
        assert_ne!(base.view(1, 1), other.view(1, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn degrade_is_sup_norm_nonexpansive(
            a in proptest::collection::vec(0.0f64..1.0, 144),
            b in proptest::collection::vec(0.0f64..1.0, 144),
        ) {
            let va = View::new(12, 12, a).unwrap();
            let vb = View::new(12, 12, b).unwrap();
            let p = DegradeParams::default();
            let da = degrade_view(&va, &p).unwrap();
            let db = degrade_view(&vb, &p).unwrap();
            let sup = |x: &View, y: &View| x.as_slice().iter().zip(y.as_slice()).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            prop_assert!(sup(&da, &db) <= sup(&va, &vb) + 1e-9);
        }
    }
}
