//! Crack filling by orientation-guided diffusion on epipolar-plane images.
//!
//! Orientations come from the low-resolution light field (resized to the
//! high-resolution grid), diffusion runs on the high-resolution EPIs.

mod diffuse;
mod orientation;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diffuse::{diffuse_epi, DiffuseParams, Diffused};
pub use orientation::{
    dominant_orientation, structure_tensor, total_variation, tv_l1, OrientationField, OrientationParams,
    StructureTensor,
};

use crate::error::{Error, Result};
use crate::flow::CrackMask;
use crate::lightfield::{Epi, EpiKind, LightField, View};
use crate::resample::bicubic_resize_to;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintParams {
    pub orientation: OrientationParams,
    pub diffusion: DiffuseParams,
    /// Gaussian smoothing of the tensor components before eigen-analysis.
    pub smooth_tensor: bool,
    /// When set, every processed EPI writes its orientation field as
    /// `epi_theta_{angular}_{spatial}.csv` (`epi_theta_v_…` for vertical
    /// EPIs).
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
}

impl Default for InpaintParams {
    fn default() -> Self {
        Self {
            orientation: OrientationParams::default(),
            diffusion: DiffuseParams::default(),
            smooth_tensor: true,
            dump_dir: None,
        }
    }
}

/// A diffusion run that hit the iteration cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unconverged {
    pub kind: EpiKind,
    pub spatial: usize,
    pub angular: usize,
    pub last_update: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InpaintReport {
    /// EPIs diffused in each of the three passes.
    pub epis_per_pass: [usize; 3],
    pub filled: usize,
    /// Pixels no pass could reach (their whole pass-3 EPI was masked); they
    /// take the guide value.
    pub guide_filled: usize,
    pub unconverged: Vec<Unconverged>,
}

#[derive(Debug, Clone)]
pub struct Inpainted {
    pub lf: LightField,
    pub report: InpaintReport,
}

/// Fills every crack of `lf_hr`. Pass 1 runs the horizontal EPIs of the
/// centre angular row, pass 2 the vertical EPIs of the centre angular
/// column, pass 3 the horizontal EPIs of every angular row. Pixels filled
/// in one pass are known in the next.
pub fn inpaint_lightfield(
    lf_hr: &LightField,
    cracks: &CrackMask,
    lf_lr: &LightField,
    p: &InpaintParams,
) -> Result<Inpainted> {
    p.orientation.validate()?;
    p.diffusion.validate()?;
    let d = lf_hr.dims();
    if cracks.dims() != d {
        return Err(Error::Dimension(format!("crack mask {:?} vs light field {d:?}", cracks.dims())));
    }
    let guide_dims = lf_lr.dims();
    if (guide_dims.p, guide_dims.q) != (d.p, d.q) {
        return Err(Error::Dimension(format!("guide {guide_dims:?} vs light field {d:?}")));
    }
    let guide = if (guide_dims.x, guide_dims.y) == (d.x, d.y) {
        lf_lr.clone()
    } else {
        lf_lr.map_views(|v| bicubic_resize_to(v, d.x, d.y))?
    };
    if let Some(dir) = &p.dump_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut lf = lf_hr.clone();
    let mut mask = cracks.clone();
    let mut report = InpaintReport::default();
    if mask.is_empty() {
        return Ok(Inpainted { lf, report });
    }
    let (sc, tc) = lf.centre();
    let passes: [Vec<(EpiKind, usize, usize)>; 3] = [
        (0..d.y).map(|y| (EpiKind::Horizontal, y, sc)).collect(),
        (0..d.x).map(|x| (EpiKind::Vertical, x, tc)).collect(),
        (1..=d.p)
            .flat_map(|s| (0..d.y).map(move |y| (EpiKind::Horizontal, y, s)))
            .collect(),
    ];
    for (pass, jobs) in passes.iter().enumerate() {
        let results: Vec<Option<(Epi, Vec<bool>, Diffused)>> = jobs
            .par_iter()
            .map(|&(kind, spatial, angular)| fill_one(&lf, &mask, &guide, kind, spatial, angular, p))
            .collect::<Result<_>>()?;
        for (epi, holes, out) in results.into_iter().flatten() {
            report.epis_per_pass[pass] += 1;
            if !out.converged {
                report.unconverged.push(Unconverged {
                    kind: epi.kind,
                    spatial: epi.spatial,
                    angular: epi.angular,
                    last_update: out.last_update,
                });
            }
            let w = epi.image.width();
            for (r, c) in (0..holes.len()).filter(|&i| holes[i]).map(|i| (i / w, i % w)) {
                let (i, x, y) = epi_pixel(&lf, epi.kind, epi.spatial, epi.angular, r, c);
                mask.set(i, x, y, false);
                report.filled += 1;
            }
            lf.insert_epi(&Epi { image: out.image, ..epi })?;
        }
    }

    for i in 1..=d.views() {
        for y in 0..d.y {
            for x in 0..d.x {
                if mask.is_hole(i, x, y) {
                    let (s, t) = lf.angular_index(i);
                    let g = guide.view(s, t).get(x, y);
                    lf.view_mut(s, t).set(x, y, g);
                    report.guide_filled += 1;
                }
            }
        }
    }
    Ok(Inpainted { lf, report })
}

/// Maps EPI row `r`, column `c` to `(view index, x, y)`.
fn epi_pixel(lf: &LightField, kind: EpiKind, spatial: usize, angular: usize, r: usize, c: usize) -> (usize, usize, usize) {
    match kind {
        EpiKind::Horizontal => (lf.linear_index(angular, r + 1), c, spatial),
        EpiKind::Vertical => (lf.linear_index(r + 1, angular), spatial, c),
    }
}

fn epi_mask(lf: &LightField, mask: &CrackMask, epi: &Epi) -> Vec<bool> {
    let (w, h) = (epi.image.width(), epi.image.height());
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (i, x, y) = epi_pixel(lf, epi.kind, epi.spatial, epi.angular, r, c);
            out.push(mask.is_hole(i, x, y));
        }
    }
    out
}

/// Diffuses one EPI; `None` when it has no cracks or no known pixels.
fn fill_one(
    lf: &LightField,
    mask: &CrackMask,
    guide: &LightField,
    kind: EpiKind,
    spatial: usize,
    angular: usize,
    p: &InpaintParams,
) -> Result<Option<(Epi, Vec<bool>, Diffused)>> {
    let epi = lf.extract_epi(kind, spatial, angular)?;
    let holes = epi_mask(lf, mask, &epi);
    if !holes.contains(&true) || !holes.contains(&false) {
        return Ok(None);
    }
    let guide_epi: View = guide.extract_epi(kind, spatial, angular)?.image;
    let orient = if guide_epi.width() < 3 || guide_epi.height() < 3 {
        OrientationField::flat(guide_epi.width())
    } else {
        dominant_orientation(&structure_tensor(&guide_epi, p.smooth_tensor)?, None, &p.orientation)?
    };
    if let Some(dir) = &p.dump_dir {
        let name = match kind {
            EpiKind::Horizontal => format!("epi_theta_{angular}_{spatial}.csv"),
            EpiKind::Vertical => format!("epi_theta_v_{angular}_{spatial}.csv"),
        };
        orient.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))?;
    }
    let out = diffuse_epi(&epi.image, &holes, &orient, &p.diffusion)?;
    Ok(Some((epi, holes, out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ibp::{degrade, DegradeParams};
    use crate::lightfield::Dims;
    use crate::synth::{synth, SyntheticScene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cracks(dims: Dims, fraction: f64, seed: u64) -> CrackMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centre = dims.views().div_ceil(2);
        let mut m = CrackMask::empty(dims);
        for i in 1..=dims.views() {
            if i == centre {
                continue;
            }
            for y in 0..dims.y {
                for x in 0..dims.x {
                    if rng.random_bool(fraction) {
                        m.set(i, x, y, true);
                    }
                }
            }
        }
        m
    }

    fn poke(lf: &LightField, mask: &CrackMask) -> LightField {
        let mut out = lf.clone();
        let d = lf.dims();
        for i in 1..=d.views() {
            let (s, t) = lf.angular_index(i);
            for y in 0..d.y {
                for x in 0..d.x {
                    if mask.is_hole(i, x, y) {
                        out.view_mut(s, t).set(x, y, 0.0);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn empty_mask_is_identity() {
        let lf = synth(&SyntheticScene::planar(Dims::new(3, 3, 16, 16), 0.5, 1), 0).unwrap().lf;
        let out = inpaint_lightfield(&lf, &CrackMask::empty(lf.dims()), &lf, &InpaintParams::default()).unwrap();
        assert_eq!(out.lf, lf);
        assert_eq!(out.report.filled, 0);
    }

    #[test]
    fn uniform_disparity_cracks_are_recovered() {
        let dims = Dims::new(5, 5, 40, 40);
        for (d, seed) in [(0.5, 1), (-0.75, 2), (1.0, 3), (-0.4, 5)] {
            let hr = synth(&SyntheticScene::planar(dims, d, seed), 0).unwrap().lf;
            let lr = degrade(&hr, &DegradeParams::new(2)).unwrap();
            let cracks = random_cracks(dims, 0.05, seed);
            let out = inpaint_lightfield(&poke(&hr, &cracks), &cracks, &lr, &InpaintParams::default()).unwrap();
            let (mut err, mut n) = (0.0, 0);
            for i in 1..=dims.views() {
                let (s, t) = hr.angular_index(i);
                for y in 0..dims.y {
                    for x in 0..dims.x {
                        let (a, b) = (out.lf.view(s, t).get(x, y), hr.view(s, t).get(x, y));
                        if cracks.is_hole(i, x, y) {
                            err += (a - b).abs();
                            n += 1;
                        } else {
                            assert_eq!(a.to_bits(), b.to_bits());
                        }
                    }
                }
            }
            let mae = err / n as f64;
            assert!(mae < 2.0 / 255.0, "d={d}: MAE {mae}");
            assert_eq!(out.report.guide_filled, 0);
        }
    }

    #[test]
    fn full_epi_column_is_filled() {
        let dims = Dims::new(3, 5, 24, 12);
        let hr = synth(&SyntheticScene::planar(dims, 0.5, 4), 0).unwrap().lf;
        let mut cracks = CrackMask::empty(dims);
        // pixel column 9 of row 5 in every view of the centre angular row
        for t in [1, 2, 4, 5] {
            cracks.set(hr.linear_index(2, t), 9, 5, true);
        }
        let out = inpaint_lightfield(&poke(&hr, &cracks), &cracks, &hr, &InpaintParams::default()).unwrap();
        for t in 1..=5 {
            let v = out.lf.view(2, t).get(9, 5);
            assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        }
        assert_eq!(out.report.filled, 4);
    }

    #[test]
    fn unreachable_pixels_take_guide() {
        // a single pixel row with every pixel masked leaves no EPI to diffuse
        let dims = Dims::new(1, 3, 8, 1);
        let hr = LightField::constant(dims, 0.2).unwrap();
        let guide = LightField::constant(dims, 0.7).unwrap();
        let mut cracks = CrackMask::empty(dims);
        for i in 1..=3 {
            for x in 0..8 {
                cracks.set(i, x, 0, true);
            }
        }
        let out = inpaint_lightfield(&hr, &cracks, &guide, &InpaintParams::default()).unwrap();
        assert_eq!(out.report.guide_filled, 24);
        assert!(out.lf.views().iter().all(|v| v.as_slice().iter().all(|&a| a == 0.7)));
    }

    #[test]
    fn dump_writes_orientation_csv() {
        let dims = Dims::new(1, 3, 10, 6);
        let hr = synth(&SyntheticScene::planar(dims, 0.5, 4), 0).unwrap().lf;
        let mut cracks = CrackMask::empty(dims);
        cracks.set(1, 4, 2, true);
        let dir = tempfile::tempdir().unwrap();
        let p = InpaintParams { dump_dir: Some(dir.path().to_path_buf()), ..Default::default() };
        inpaint_lightfield(&hr, &cracks, &hr, &p).unwrap();
        let text = std::fs::read_to_string(dir.path().join("epi_theta_1_2.csv")).unwrap();
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn dimension_mismatch() {
        let lf = LightField::constant(Dims::new(1, 3, 8, 8), 0.2).unwrap();
        let other = LightField::constant(Dims::new(3, 3, 8, 8), 0.2).unwrap();
        assert!(inpaint_lightfield(&lf, &CrackMask::empty(other.dims()), &lf, &InpaintParams::default()).is_err());
        assert!(inpaint_lightfield(&lf, &CrackMask::empty(lf.dims()), &other, &InpaintParams::default()).is_err());
    }
}
