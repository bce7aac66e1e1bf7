//! Property tests over randomly drawn inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;

use lfsr::flow::{align, dealign, estimate_flow, CrackMask, FlowField, HornSchunckParams};
use lfsr::inpaint::{inpaint_lightfield, InpaintParams};
use lfsr::lowrank::{lra, RankKModel};
use lfsr::metrics::psnr;
use lfsr::pipeline::{FlowMode, PipelineConfig};
use lfsr::srnet::{ConvNet, OutputMode, Padding, Tensor};
use lfsr::synth::{synth, SyntheticScene};
use lfsr::{Dims, FieldMatrix, LightField, View};

fn view(w: usize, h: usize) -> impl Strategy<Value = View> {
    prop::collection::vec(0.0..1.0f64, w * h).prop_map(move |d| View::new(w, h, d).unwrap())
}

fn light_field(p: usize, q: usize, w: usize, h: usize) -> impl Strategy<Value = LightField> {
    prop::collection::vec(view(w, h), p * q).prop_map(move |v| LightField::new(p, q, v).unwrap())
}

fn uniform_flow(dims: Dims, du: f64, dv: f64) -> FlowField {
    let (sc, tc) = (dims.p.div_ceil(2), dims.q.div_ceil(2));
    let mut u = Vec::new();
    let mut v = Vec::new();
    for s in 1..=dims.p {
        for t in 1..=dims.q {
            u.push(View::filled(dims.x, dims.y, du * (t as f64 - tc as f64)));
            v.push(View::filled(dims.x, dims.y, dv * (s as f64 - sc as f64)));
        }
    }
    FlowField::new(dims, u, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psnr_is_symmetric(a in view(9, 7), b in view(9, 7)) {
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn zero_flow_warps_are_identities(lf in light_field(3, 3, 8, 6)) {
        let flow = FlowField::zeros(lf.dims());
        prop_assert_eq!(&align(&lf, &flow).unwrap(), &lf);
        let (back, cracks) = dealign(&lf, &flow).unwrap();
        prop_assert_eq!(&back, &lf);
        prop_assert!(cracks.is_empty());
    }

    #[test]
    fn integer_flow_round_trips_on_unmasked_pixels(
        lf in light_field(3, 3, 12, 10),
        du in -2i32..=2,
        dv in -2i32..=2,
    ) {
        let flow = uniform_flow(lf.dims(), du as f64, dv as f64);
        let (back, cracks) = dealign(&align(&lf, &flow).unwrap(), &flow).unwrap();
        let d = lf.dims();
        for i in 1..=d.views() {
            let (s, t) = lf.angular_index(i);
            for y in 0..d.y {
                for x in 0..d.x {
                    if !cracks.is_hole(i, x, y) {
                        prop_assert_eq!(back.view(s, t).get(x, y).to_bits(), lf.view(s, t).get(x, y).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn rank_rmse_is_non_increasing(data in prop::collection::vec(-1.0..1.0f64, 30 * 9)) {
        let mat = FieldMatrix::new(DMatrix::from_vec(30, 9, data));
        let rmse: Vec<f64> = (1..=9).map(|k| lra(&mat, k).unwrap().rmse()).collect();
        for w in rmse.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", rmse);
        }
    }

    #[test]
    fn unrestored_recombination_is_identity(data in prop::collection::vec(0.0..1.0f64, 40 * 9), k in 1usize..=9) {
        let mat = FieldMatrix::new(DMatrix::from_vec(40, 9, data));
        let model = RankKModel::fit(&mat, k).unwrap();
        let back = model.recombine(&model.embedding()).unwrap();
        prop_assert!((back.data - mat.data).amax() < 1e-8);
    }

    #[test]
    fn replicate_forward_matches_valid_interior(x in prop::collection::vec(-1.0..1.0f64, 2 * 11 * 13), seed in 0u64..1000) {
        let net = ConvNet::with_architecture(2, 3, 4, OutputMode::Residual, seed).unwrap();
        let x = Tensor::new(2, 11, 13, x).unwrap();
        let valid = net.forward(&x, Padding::Valid).unwrap();
        let full = net.forward(&x, Padding::Replicate).unwrap();
        let m = net.margin();
        for c in 0..2 {
            for y in 0..valid.height() {
                for xx in 0..valid.width() {
                    prop_assert!((valid.get(c, y, xx) - full.get(c, y + m, xx + m)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn valid_forward_is_translation_equivariant(x in prop::collection::vec(-1.0..1.0f64, 12 * 12), seed in 0u64..1000) {
        let net = ConvNet::with_architecture(1, 3, 4, OutputMode::Direct, seed).unwrap();
        let full = Tensor::new(1, 12, 12, x).unwrap();
        let a = net.forward(&full.crop(0, 0, 11, 11).unwrap(), Padding::Valid).unwrap();
        let b = net.forward(&full.crop(1, 1, 11, 11).unwrap(), Padding::Valid).unwrap();
        for y in 0..a.height() - 1 {
            for xx in 0..a.width() - 1 {
                prop_assert!((a.get(0, y + 1, xx + 1) - b.get(0, y, xx)).abs() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Every pixel is filled by diffusion (no guide fallback) when the
    /// centre view is intact.
    #[test]
    fn inpainting_fills_every_hole(
        d in -1.0..1.0f64,
        holes in prop::collection::vec(any::<bool>(), 9 * 16 * 12),
    ) {
        let dims = Dims::new(3, 3, 16, 12);
        let truth = synth(&SyntheticScene::planar(dims, d, 3), 0).unwrap().lf;
        let per_view = dims.x * dims.y;
        let views = (0..dims.views())
            .map(|i| if i == dims.views() / 2 { vec![false; per_view] } else { holes[i * per_view..(i + 1) * per_view].to_vec() })
            .collect();
        let cracks = CrackMask::from_views(dims, views).unwrap();
        let out = inpaint_lightfield(&truth, &cracks, &truth, &InpaintParams::default()).unwrap();
        prop_assert_eq!(out.report.guide_filled, 0);
        prop_assert_eq!(out.report.filled, cracks.count());
        for v in out.lf.views() {
            prop_assert!(v.as_slice().iter().all(|a| a.is_finite()));
        }
    }

    #[test]
    fn config_echo_reproduces_the_config(
        k in 1usize..20,
        mag in 2usize..4,
        sigma in 0.5..3.0f64,
        levels in 1usize..6,
        ibp in any::<bool>(),
        iters in 0usize..30,
        seed in any::<u64>(),
        lr in 1e-5..1e-2f64,
        zero_flow in any::<bool>(),
    ) {
        let mut cfg = PipelineConfig { k, mag_factor: mag, blur_sigma: sigma, ibp, ibp_iterations: iters, seed, ..Default::default() };
        cfg.flow.levels = levels;
        cfg.train.lr = lr;
        if zero_flow {
            cfg.flow_mode = FlowMode::Zero;
        }
        prop_assert_eq!(PipelineConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}

#[test]
fn flow_estimation_is_deterministic() {
    let lf = synth(&SyntheticScene::random(Dims::new(3, 3, 32, 32), 1, (-1.0, 1.0), 4), 0).unwrap().lf;
    let p = HornSchunckParams::default();
    assert_eq!(estimate_flow(&lf, &p).unwrap().flow, estimate_flow(&lf, &p).unwrap().flow);
}
