//! Cuts patches from a small synthetic corpus, trains a restoration net on
//! them and saves the weights.
//!
//!     cargo run --release --example train_srnet -- /tmp/net.wts

use std::fs::File;
use std::io::{BufReader, BufWriter};

use lfsr::pipeline::{extract_patches, init_net, Corpus, PipelineConfig};
use lfsr::srnet::{read_weights, train_with_progress, write_weights};
use lfsr::{Dims, Result};

fn main() -> Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "srnet.wts".into());
    let cfg = PipelineConfig {
        patch_count: 300,
        ..Default::default()
    };
    let corpus = Corpus::new(Dims::new(5, 5, 80, 80), 4, vec![-1.0, 0.0, 1.0], 5);
    let pairs = corpus.training_pairs(&cfg.degrade_params())?;
    let (patches, _) = extract_patches(&pairs, cfg.k, cfg.patch_count, cfg.patch_size, cfg.seed, &cfg.flow)?;
    println!("{} patches of {}×{}×{}", patches.len(), cfg.patch_size, cfg.patch_size, cfg.k);

    let mut net = init_net(&cfg)?;
    println!("{} parameters", net.param_count());
    let report = train_with_progress(&mut net, &patches, &cfg.train, |epoch, loss| {
        println!("epoch {epoch}  loss {loss:.5}");
    })?;
    println!("{} optimizer steps", report.steps);

    write_weights(&net, BufWriter::new(File::create(&path)?))?;
    let back = read_weights(BufReader::new(File::open(&path)?))?;
    println!("saved to {path} ({} layers, k = {})", back.depth(), back.k());
    Ok(())
}
