//! Trains a small restorer on synthetic scenes, then super-resolves held-out
//! scenes whose disparities were not in the training set, with and without
//! back-projection.
//!
//!     cargo run --release --example end_to_end -- [views] [size] [scenes]

use std::time::Instant;

use lfsr::pipeline::{evaluate, superres_with, train_restorer, Corpus, PipelineConfig, RunOptions};
use lfsr::{Dims, Result};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn main() -> Result<()> {
    let (views, size, scenes) = (arg(1, 5), arg(2, 96), arg(3, 12));
    let dims = Dims::new(views, views, size, size);
    let cfg = PipelineConfig::default();

    let started = Instant::now();
    let train_set = Corpus::new(dims, scenes, vec![-1.0, -0.5, 0.0, 0.5, 1.0], 1);
    let pairs = train_set.training_pairs(&cfg.degrade_params())?;
    let (net, report) = train_restorer(&pairs, &cfg)?;
    println!("trained in {:.0?}: losses {:?}", started.elapsed(), report.losses);

    let test_set = Corpus::new(dims, 3, vec![-0.75, -0.25, 0.25, 0.75], 2);
    let (mut bic, mut plain, mut ibp) = (0.0, 0.0, 0.0);
    for scene in test_set.training_pairs(&cfg.degrade_params())? {
        let out = superres_with(&scene.lr, &cfg, &net, RunOptions { truth: Some(&scene.hr), ..Default::default() })?;
        let b = evaluate(&out.bicubic, &scene.hr)?.mean_psnr;
        let p = evaluate(&out.inpainted, &scene.hr)?.mean_psnr;
        let i = evaluate(&out.lf, &scene.hr)?.mean_psnr;
        println!("bicubic {b:.2}  pipeline {p:.2}  +ibp {i:.2}  stages {:?}", out.diagnostics.stage_psnr);
        bic += b;
        plain += p;
        ibp += i;
    }
    let n = test_set.scenes as f64;
    println!(
        "mean: bicubic {:.2}  pipeline {:+.2} dB  ibp {:+.2} dB more  ({:.0?} total)",
        bic / n,
        (plain - bic) / n,
        (ibp - plain) / n,
        started.elapsed()
    );
    Ok(())
}
