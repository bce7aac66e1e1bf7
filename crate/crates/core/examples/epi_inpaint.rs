//! Punches random holes into a light field and fills them by diffusion
//! along the EPI isophotes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lfsr::flow::CrackMask;
use lfsr::ibp::{degrade, DegradeParams};
use lfsr::inpaint::{inpaint_lightfield, InpaintParams};
use lfsr::synth::{synth, SyntheticScene};
use lfsr::{Dims, Result};

fn main() -> Result<()> {
    let dims = Dims::new(7, 7, 64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for d in [-0.8, 0.3, 1.0] {
        let truth = synth(&SyntheticScene::planar(dims, d, 4), 0)?.lf;
        let guide = degrade(&truth, &DegradeParams::new(2))?;
        let mut cracks = CrackMask::empty(dims);
        let mut holed = truth.clone();
        let centre = dims.views().div_ceil(2);
        for i in (1..=dims.views()).filter(|&i| i != centre) {
            let (s, t) = truth.angular_index(i);
            for _ in 0..dims.x * dims.y / 20 {
                let (x, y) = (rng.random_range(0..dims.x), rng.random_range(0..dims.y));
                cracks.set(i, x, y, true);
                holed.view_mut(s, t).set(x, y, 0.0);
            }
        }
        let out = inpaint_lightfield(&holed, &cracks, &guide, &InpaintParams::default())?;
        let (mut err, mut guide_err) = (0.0, 0.0);
        for i in 1..=dims.views() {
            let (s, t) = truth.angular_index(i);
            for y in 0..dims.y {
                for x in 0..dims.x {
                    if cracks.is_hole(i, x, y) {
                        err += (out.lf.view(s, t).get(x, y) - truth.view(s, t).get(x, y)).abs();
                        guide_err += (guide.view(s, t).get(x, y) - truth.view(s, t).get(x, y)).abs();
                    }
                }
            }
        }
        let n = cracks.count() as f64;
        println!(
            "disparity {d:+.1}: {:.1}% holes, MAE {:.2}/255 (bicubic guide {:.2}/255), EPIs per pass {:?}",
            100.0 * cracks.fraction(),
            255.0 * err / n,
            255.0 * guide_err / n,
            out.report.epis_per_pass
        );
    }
    Ok(())
}
