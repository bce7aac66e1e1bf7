//! End-to-end super-resolution: bicubic match, flow, alignment, rank-k
//! compaction, restoration of the independent views, recombination,
//! de-alignment, crack inpainting and optional back-projection.

mod config;
mod eval;
mod patches;
mod training;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use config::{FlowMode, InputKind, NetShape, PipelineConfig};
pub use eval::{evaluate, EvalReport, ViewScore, EVAL_BORDER};
pub use patches::{
    extract_patches, prepare_pair, read_patches, write_patches, PatchSample, PreparedPair, TrainingPair,
};
pub use training::{train_restorer, Corpus};

use crate::error::{Error, Result};
use crate::flow::{align, dealign, FlowEstimator, FlowField, GroundTruthFlow, HornSchunck};
use crate::ibp::back_project;
use crate::inpaint::{inpaint_lightfield, InpaintReport};
use crate::lightfield::{LightField, View};
use crate::lowrank::RankKModel;
use crate::metrics::psnr;
use crate::resample::bicubic_resize_to;
use crate::srnet::{ConvNet, Padding, Tensor};

/// Stage names in execution order.
pub const STAGES: [&str; 9] = [
    "bicubic-match",
    "flow",
    "align",
    "lra",
    "srnet",
    "recombine",
    "dealign",
    "inpaint",
    "ibp",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage_times_ms: BTreeMap<String, f64>,
    pub flow_converged: bool,
    pub flow_clamped: usize,
    /// Numerical rank of the rank-k approximation (below `k` for flat input).
    pub rank: usize,
    pub indep_idx: Vec<usize>,
    pub crack_fraction: f64,
    pub inpaint: InpaintReport,
    pub ibp_residuals: Vec<f64>,
    /// Mean PSNR after selected stages, when ground truth was supplied.
    pub stage_psnr: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SuperResolved {
    /// Final estimate (after back-projection when enabled).
    pub lf: LightField,
    /// Bicubic-matched input, the baseline.
    pub bicubic: LightField,
    /// Estimate before back-projection.
    pub inpainted: LightField,
    pub diagnostics: Diagnostics,
}

/// Optional inputs to [`superres_with`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Overrides the configured flow source.
    pub flow: Option<&'a dyn FlowEstimator>,
    /// Enables per-stage PSNR diagnostics.
    pub truth: Option<&'a LightField>,
}

pub fn superres(lf_lr: &LightField, cfg: &PipelineConfig, net: &ConvNet) -> Result<SuperResolved> {
    superres_with(lf_lr, cfg, net, RunOptions::default())
}

fn mean_psnr(a: &LightField, b: &LightField) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in a.views().iter().zip(b.views()) {
        total += psnr(x, y, 1.0)?;
    }
    Ok(total / a.n_views() as f64)
}

struct Timer {
    times: BTreeMap<String, f64>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            times: BTreeMap::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.times.insert(stage.to_string(), (now - self.start).as_secs_f64() * 1e3);
        self.start = now;
    }
}

/// Upscales low-resolution input onto the high-resolution grid; matched
/// input passes through.
pub fn bicubic_match(lf: &LightField, cfg: &PipelineConfig) -> Result<LightField> {
    match cfg.input {
        InputKind::Matched => Ok(lf.clone()),
        InputKind::Low => {
            let d = lf.dims();
            let (w, h) = (d.x * cfg.mag_factor, d.y * cfg.mag_factor);
            lf.map_views(|v| bicubic_resize_to(v, w, h))
        }
    }
}

/// Runs the restoration net on the `k` columns of an `m × k` matrix, each a
/// vectorized `width × height` view.
pub fn restore_columns(net: &ConvNet, cols: &DMatrix<f64>, width: usize, height: usize) -> Result<DMatrix<f64>> {
    let views = (0..cols.ncols())
        .map(|j| View::from_vectorized(width, height, cols.column(j).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let out = net.forward(&Tensor::from_views(&views)?, Padding::Replicate)?;
    let restored: Vec<Vec<f64>> = out.to_views().iter().map(View::vectorize).collect();
    Ok(DMatrix::from_fn(cols.nrows(), cols.ncols(), |i, j| restored[j][i]))
}

pub fn superres_with(
    lf_lr: &LightField,
    cfg: &PipelineConfig,
    net: &ConvNet,
    opts: RunOptions<'_>,
) -> Result<SuperResolved> {
    cfg.validate()?;
    if net.k() != cfg.k {
        return Err(Error::InvalidParameter(format!(
            "net restores {} views but the config asks for k = {}",
            net.k(),
            cfg.k
        )));
    }
    let mut diag = Diagnostics::default();
    let mut timer = Timer::new();
    let stage = Error::in_stage;

    let bicubic = bicubic_match(lf_lr, cfg).map_err(stage("bicubic-match"))?;
    let d = bicubic.dims();
    if let Some(t) = opts.truth {
        if t.dims() != d {
            return Err(Error::Dimension(format!("truth {:?} vs estimate {d:?}", t.dims())));
        }
        diag.stage_psnr.insert("bicubic".into(), mean_psnr(&bicubic, t)?);
    }
    timer.lap("bicubic-match");

    let estimate = match (opts.flow, cfg.flow_mode) {
        (Some(est), _) => est.estimate(&bicubic),
        (None, FlowMode::HornSchunck) => HornSchunck::new(cfg.flow.clone()).estimate(&bicubic),
        (None, FlowMode::Zero) => GroundTruthFlow(FlowField::zeros(d)).estimate(&bicubic),
    }
    .map_err(stage("flow"))?;
    diag.flow_converged = estimate.converged();
    diag.flow_clamped = estimate.clamped();
    let flow = estimate.flow;
    timer.lap("flow");

    let aligned = align(&bicubic, &flow).map_err(stage("align"))?;
    timer.lap("align");

    let (model, rank) = RankKModel::fit_lenient(&aligned.to_matrix(), cfg.k).map_err(stage("lra"))?;
    diag.rank = rank;
    diag.indep_idx = model.indep_idx.clone();
    timer.lap("lra");

    let restored_cols = restore_columns(net, &model.embedding(), d.x, d.y).map_err(stage("srnet"))?;
    timer.lap("srnet");

    let restored = model
        .recombine(&restored_cols)
        .and_then(|m| LightField::from_matrix(&m, d))
        .map_err(stage("recombine"))?;
    if let Some(t) = opts.truth {
        let truth_aligned = align(t, &flow)?;
        diag.stage_psnr.insert("recombine".into(), mean_psnr(&restored, &truth_aligned)?);
    }
    timer.lap("recombine");

    let (dealigned, cracks) = dealign(&restored, &flow).map_err(stage("dealign"))?;
    diag.crack_fraction = cracks.fraction();
    timer.lap("dealign");

    let inpainted = inpaint_lightfield(&dealigned, &cracks, &bicubic, &cfg.inpaint).map_err(stage("inpaint"))?;
    diag.inpaint = inpainted.report;
    let inpainted = inpainted.lf;
    if let Some(t) = opts.truth {
        diag.stage_psnr.insert("inpaint".into(), mean_psnr(&inpainted, t)?);
    }
    timer.lap("inpaint");

    let lf = if cfg.ibp {
        let res = back_project(&inpainted, &bicubic, &cfg.degrade_params(), cfg.ibp_iterations)
            .map_err(stage("ibp"))?;
        diag.ibp_residuals = res.residuals;
        if let Some(t) = opts.truth {
            diag.stage_psnr.insert("ibp".into(), mean_psnr(&res.lf, t)?);
        }
        timer.lap("ibp");
        res.lf
    } else {
        inpainted.clone()
    };
    diag.stage_times_ms = timer.times;
    Ok(SuperResolved {
        lf,
        bicubic,
        inpainted,
        diagnostics: diag,
    })
}

/// A freshly initialised net of the configured shape.
pub fn init_net(cfg: &PipelineConfig) -> Result<ConvNet> {
    ConvNet::with_architecture(cfg.k, cfg.net.depth, cfg.net.width, cfg.net.mode, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::HornSchunckParams;
    use crate::ibp::degrade;
    use crate::lightfield::Dims;
    use crate::srnet::OutputMode;
    use crate::synth::{synth, SyntheticScene};

    /// Residual net whose last layer is zero: an exact identity.
    fn identity_net(k: usize) -> ConvNet {
        let mut net = ConvNet::with_architecture(k, 3, 4, OutputMode::Residual, 1).unwrap();
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias.fill(0.0);
        net
    }

    fn small_cfg(k: usize) -> PipelineConfig {
        PipelineConfig {
            k,
            flow: HornSchunckParams {
                iterations: 60,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn stage_skip_is_identity() {
        let dims = Dims::new(3, 3, 24, 24);
        let lf = synth(&SyntheticScene::random(dims, 2, (-1.0, 1.0), 3), 0).unwrap().lf;
        let cfg = PipelineConfig {
            flow_mode: FlowMode::Zero,
            ibp: false,
            ..small_cfg(9)
        };
        let out = superres(&lf, &cfg, &identity_net(9)).unwrap();
        assert_eq!(out.diagnostics.crack_fraction, 0.0);
        let worst = out
            .lf
            .views()
            .iter()
            .zip(lf.views())
            .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn constant_input_stays_constant() {
        let lf = LightField::constant(Dims::new(3, 3, 20, 20), 0.42).unwrap();
        let cfg = small_cfg(4);
        let out = superres(&lf, &cfg, &identity_net(4)).unwrap();
        assert!(out.lf.views().iter().all(|v| v.as_slice().iter().all(|&a| (a - 0.42).abs() < 1e-3)));
        assert_eq!(out.diagnostics.rank, 1);
        // a random net maps a constant to another constant
        let net = ConvNet::with_architecture(4, 3, 4, OutputMode::Residual, 7).unwrap();
        let out = superres(&lf, &cfg, &net).unwrap();
        let spread = out.lf.views().iter().flat_map(|v| v.as_slice()).fold((f64::MAX, f64::MIN), |(lo, hi), &a| (lo.min(a), hi.max(a)));
        assert!(spread.1 - spread.0 < 1e-3, "{spread:?}");
    }

    #[test]
    fn identity_stress() {
        let dims = Dims::new(3, 3, 32, 32);
        // Integer disparity: de-alignment rounding is exact, so the residual
        // comes from flow error and crack filling alone.
        for d in [1.0, -1.0] {
            let lf = synth(&SyntheticScene::planar(dims, d, 5), 0).unwrap().lf;
            let cfg = PipelineConfig { ibp: false, ..small_cfg(4) };
            let out = superres(&lf, &cfg, &identity_net(4)).unwrap();
            let score = evaluate(&out.lf, &lf).unwrap();
            assert!(score.mean_psnr >= 45.0, "d = {d}: {}", score.mean_psnr);
        }
    }

    #[test]
    fn k_mismatch_is_rejected() {
        let lf = LightField::constant(Dims::new(3, 3, 16, 16), 0.4).unwrap();
        assert!(superres(&lf, &small_cfg(4), &identity_net(3)).is_err());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let lf = LightField::constant(Dims::new(3, 3, 16, 16), 0.4).unwrap();
        // rank 10 cannot be taken from 9 views
        let err = superres(&lf, &small_cfg(10), &identity_net(10)).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "lra", .. }), "{err}");
    }

    #[test]
    fn low_resolution_input_is_upscaled() {
        let lf = LightField::constant(Dims::new(3, 3, 10, 12), 0.4).unwrap();
        let cfg = PipelineConfig { input: InputKind::Low, flow_mode: FlowMode::Zero, ..small_cfg(4) };
        let out = superres(&lf, &cfg, &identity_net(4)).unwrap();
        assert_eq!((out.lf.dims().x, out.lf.dims().y), (20, 24));
    }

    #[test]
    fn deterministic_with_truth_diagnostics() {
        let dims = Dims::new(3, 3, 24, 24);
        let hr = synth(&SyntheticScene::random(dims, 1, (-1.0, 1.0), 8), 0).unwrap().lf;
        let lr = degrade(&hr, &small_cfg(4).degrade_params()).unwrap();
        let net = ConvNet::with_architecture(4, 3, 4, OutputMode::Residual, 2).unwrap();
        let run = || {
            superres_with(&lr, &small_cfg(4), &net, RunOptions { truth: Some(&hr), ..Default::default() }).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.lf, b.lf);
        for key in ["bicubic", "recombine", "inpaint", "ibp"] {
            assert!(a.diagnostics.stage_psnr.contains_key(key), "{key}");
        }
        assert_eq!(a.diagnostics.stage_times_ms.len(), STAGES.len());
    }
}
