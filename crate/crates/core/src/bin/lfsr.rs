use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lfsr::flow::{align, estimate_flow, read_flow, write_flow};
use lfsr::ibp::{back_project, degrade, DegradeParams};
use lfsr::io::{read_lightfield, write_lightfield, ImageFormat};
use lfsr::lowrank::{write_model, RankKModel};
use lfsr::pipeline::{
    evaluate, extract_patches, init_net, read_patches, superres_with, write_patches, Corpus, PipelineConfig,
    RunOptions, TrainingPair,
};
use lfsr::srnet::{read_weights, train, write_weights};
use lfsr::synth::{synth, SyntheticScene};
use lfsr::{Dims, Error, LightField, Result};

#[derive(Parser)]
#[command(name = "lfsr", version, about = "Light-field spatial super-resolution")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seeds every random choice (scene textures, patch sampling, weight init).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Same as `--threads 1`.
    #[arg(long, global = true)]
    deterministic: bool,
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one configuration key, e.g. `--set flow.levels=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Bit depth of written views.
    #[arg(long, global = true, default_value_t = 16)]
    bitdepth: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic light field with its ground-truth flow.
    Synth {
        out: PathBuf,
        /// Scene description (JSON); overrides the shape options below.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        /// Foreground layers over the background.
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        min_disparity: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        max_disparity: f64,
    },
    /// Blur, decimate and bicubic-upscale every view.
    Degrade {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        factor: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Estimate the flow of every view toward the centre view.
    Flow { input: PathBuf, out: PathBuf },
    /// Rank-k decomposition of the (optionally aligned) view matrix.
    Lra {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        /// Align with this flow file first.
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Cut training patches from ground-truth light fields.
    ExtractPatches {
        out: PathBuf,
        /// Ground-truth light-field directories; each is degraded with the
        /// configured kernel.
        hr: Vec<PathBuf>,
        /// Add this many synthetic scenes to the corpus.
        #[arg(long, default_value_t = 0)]
        synth: usize,
        #[arg(long, default_value_t = 9)]
        views: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        patch_size: Option<usize>,
    },
    /// Train the restoration net on a patch file.
    Train {
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Run the full pipeline.
    Superres {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Ground truth for per-stage and final PSNR.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Reuse a flow file instead of estimating.
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Iterative back-projection of an estimate against an observation.
    Ibp {
        estimate: PathBuf,
        observed: PathBuf,
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        factor: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// PSNR of a light field against ground truth.
    Eval {
        estimate: PathBuf,
        truth: PathBuf,
        /// Bicubic baseline to report the gain over.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn write_lf(lf: &LightField, dir: &Path, c: &Common) -> Result<()> {
    write_lightfield(lf, dir, c.bitdepth, ImageFormat::Png)
}

fn emit(c: &Common, value: serde_json::Value, text: impl FnOnce() -> String) -> Result<()> {
    let body = if c.json { serde_json::to_string_pretty(&value)? } else { text() };
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{body}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn override_kernel(cfg: &mut PipelineConfig, factor: Option<usize>, sigma: Option<f64>, window: Option<usize>) {
    if let Some(f) = factor {
        cfg.mag_factor = f;
    }
    if let Some(s) = sigma {
        cfg.blur_sigma = s;
    }
    if let Some(w) = window {
        cfg.blur_window = w;
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut cfg = load_config(c)?;
    match cli.command {
        Command::Synth {
            out,
            scene,
            views,
            width,
            height,
            layers,
            min_disparity,
            max_disparity,
        } => {
            let scene = match scene {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                None => SyntheticScene::random(
                    Dims::new(views, views, width, height),
                    layers,
                    (min_disparity, max_disparity),
                    cfg.seed,
                ),
            };
            let rendered = synth(&scene, cfg.seed)?;
            write_lf(&rendered.lf, &out, c)?;
            write_flow(&rendered.flow, BufWriter::new(File::create(out.join("flows.bin"))?))?;
            fs::write(out.join("scene.json"), serde_json::to_string_pretty(&scene)?)?;
            emit(c, json!({ "dims": rendered.lf.dims(), "layers": scene.layers.len() }), || {
                format!("wrote {} views and flows.bin to {}", rendered.lf.n_views(), out.display())
            })
        }
        Command::Degrade {
            input,
            out,
            factor,
            sigma,
            window,
            noise,
        } => {
            override_kernel(&mut cfg, factor, sigma, window);
            let p = DegradeParams {
                noise,
                ..cfg.degrade_params()
            };
            let lf = degrade(&read_lightfield(&input)?, &p)?;
            write_lf(&lf, &out, c)?;
            emit(c, json!({ "degrade": p }), || format!("degraded ×{} into {}", p.mag_factor, out.display()))
        }
        Command::Flow { input, out } => {
            let est = estimate_flow(&read_lightfield(&input)?, &cfg.flow)?;
            write_flow(&est.flow, BufWriter::new(File::create(&out)?))?;
            emit(
                c,
                json!({ "converged": est.converged(), "clamped": est.clamped(), "max_abs": est.flow.max_abs(), "views": est.reports }),
                || {
                    format!(
                        "converged {}  clamped pixels {}  max |flow| {:.3} px",
                        est.converged(),
                        est.clamped(),
                        est.flow.max_abs()
                    )
                },
            )
        }
        Command::Lra { input, out, rank, flow } => {
            let k = rank.unwrap_or(cfg.k);
            let mut lf = read_lightfield(&input)?;
            if let Some(f) = flow {
                lf = align(&lf, &read_flow(BufReader::new(File::open(f)?))?)?;
            }
            let (model, achieved) = RankKModel::fit_lenient(&lf.to_matrix(), k)?;
            write_model(&model, BufWriter::new(File::create(&out)?))?;
            let rmse = {
                let diff = &model.e;
                (diff.norm_squared() / diff.len() as f64).sqrt()
            };
            emit(c, json!({ "k": k, "rank": achieved, "indep_idx": model.indep_idx, "rmse": rmse }), || {
                format!("rank {achieved}/{k}  independent views {:?}  rmse {rmse:.6}", model.indep_idx)
            })
        }
        Command::ExtractPatches {
            out,
            hr,
            synth: n_synth,
            views,
            size,
            rank,
            count,
            patch_size,
        } => {
            cfg.k = rank.unwrap_or(cfg.k);
            cfg.patch_count = count.unwrap_or(cfg.patch_count);
            cfg.patch_size = patch_size.unwrap_or(cfg.patch_size);
            let degrade_params = cfg.degrade_params();
            let mut pairs = hr
                .iter()
                .map(|dir| {
                    let hr = read_lightfield(dir)?;
                    Ok(TrainingPair {
                        lr: degrade(&hr, &degrade_params)?,
                        hr,
                        flow: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if n_synth > 0 {
                let corpus = Corpus::new(Dims::new(views, views, size, size), n_synth, vec![-1.0, -0.5, 0.0, 0.5, 1.0], cfg.seed);
                pairs.extend(corpus.training_pairs(&degrade_params)?);
            }
            let (patches, samples) = extract_patches(&pairs, cfg.k, cfg.patch_count, cfg.patch_size, cfg.seed, &cfg.flow)?;
            write_patches(&patches, BufWriter::new(File::create(&out)?))?;
            emit(c, json!({ "count": patches.len(), "k": cfg.k, "size": cfg.patch_size, "samples": samples }), || {
                let (n, k, size, lfs) = (patches.len(), cfg.k, cfg.patch_size, pairs.len());
                format!("{n} patches of {size}×{size}×{k} from {lfs} light fields")
            })
        }
        Command::Train {
            patches,
            out,
            rank,
            epochs,
            lr,
        } => {
            cfg.k = rank.unwrap_or(cfg.k);
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.lr = lr.unwrap_or(cfg.train.lr);
            let data = read_patches(BufReader::new(File::open(&patches)?))?;
            if let Some(p) = data.first() {
                if p.input.channels() != cfg.k {
                    return Err(Error::InvalidParameter(format!(
                        "patches have {} channels, rank is {}",
                        p.input.channels(),
                        cfg.k
                    )));
                }
            }
            let mut net = init_net(&cfg)?;
            let report = train(&mut net, &data, &cfg.train)?;
            write_weights(&net, BufWriter::new(File::create(&out)?))?;
            emit(c, json!({ "losses": report.losses, "steps": report.steps }), || {
                report
                    .losses
                    .iter()
                    .enumerate()
                    .map(|(e, l)| format!("epoch {:3}  loss {l:.6}", e + 1))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Superres {
            input,
            out,
            weights,
            truth,
            flow,
        } => {
            if weights.is_some() {
                cfg.weights = weights;
            }
            cfg.validate()?;
            let path = cfg
                .weights
                .clone()
                .ok_or_else(|| Error::InvalidParameter("superres needs --weights or a `weights` key".into()))?;
            let net = read_weights(BufReader::new(File::open(path)?))?;
            let lf = read_lightfield(&input)?;
            let truth = truth.map(|t| read_lightfield(&t)).transpose()?;
            let flow = flow
                .map(|f| read_flow(BufReader::new(File::open(f)?)).map(lfsr::flow::GroundTruthFlow))
                .transpose()?;
            let result = superres_with(
                &lf,
                &cfg,
                &net,
                RunOptions {
                    flow: flow.as_ref().map(|f| f as &dyn lfsr::flow::FlowEstimator),
                    truth: truth.as_ref(),
                },
            )?;
            write_lf(&result.lf, &out, c)?;
            fs::write(out.join("config.txt"), cfg.to_kv())?;
            fs::write(out.join("diagnostics.json"), serde_json::to_string_pretty(&result.diagnostics)?)?;
            match truth {
                Some(t) => {
                    let mut report = evaluate(&result.lf, &t)?.with_baseline(&result.bicubic, &t)?;
                    report.stage_times_ms = result.diagnostics.stage_times_ms.clone();
                    report.config = cfg.echo();
                    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
                    emit(c, serde_json::to_value(&report)?, || report.to_string())
                }
                None => emit(c, serde_json::to_value(&result.diagnostics)?, || {
                    let mut s = format!("wrote {} views to {}\n", result.lf.n_views(), out.display());
                    for (stage, ms) in &result.diagnostics.stage_times_ms {
                        s += &format!("time {stage:<14} {ms:9.1} ms\n");
                    }
                    s.trim_end().to_string()
                }),
            }
        }
        Command::Ibp {
            estimate,
            observed,
            out,
            iters,
            factor,
            sigma,
            window,
        } => {
            override_kernel(&mut cfg, factor, sigma, window);
            let k = iters.unwrap_or(cfg.ibp_iterations);
            let res = back_project(&read_lightfield(&estimate)?, &read_lightfield(&observed)?, &cfg.degrade_params(), k)?;
            write_lf(&res.lf, &out, c)?;
            emit(c, json!({ "residuals": res.residuals, "non_increasing": res.is_non_increasing() }), || {
                res.residuals
                    .iter()
                    .enumerate()
                    .map(|(i, r)| format!("iteration {i:2}  residual {r:.6}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Eval {
            estimate,
            truth,
            baseline,
        } => {
            let truth = read_lightfield(&truth)?;
            let mut report = evaluate(&read_lightfield(&estimate)?, &truth)?;
            if let Some(b) = baseline {
                report = report.with_baseline(&read_lightfield(&b)?, &truth)?;
            }
            emit(c, serde_json::to_value(&report)?, || report.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.common.deterministic { 1 } else { cli.common.threads };
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("lfsr: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lfsr: {e}");
            ExitCode::FAILURE
        }
    }
}
