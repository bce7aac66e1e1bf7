use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_patches, init_net, PipelineConfig, TrainingPair};
use crate::error::{Error, Result};
use crate::ibp::{degrade, DegradeParams};
use crate::lightfield::Dims;
use crate::srnet::{train, ConvNet, TrainReport};
use crate::synth::{synth, SynthOutput, SyntheticScene};

/// A family of random layered scenes whose layer disparities are drawn
/// from a fixed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    #[serde(flatten)]
    pub dims: Dims,
    pub scenes: usize,
    /// Foreground layers per scene, over a full-frame background.
    pub foregrounds: usize,
    pub disparities: Vec<f64>,
    pub seed: u64,
}

impl Corpus {
    pub fn new(dims: Dims, scenes: usize, disparities: Vec<f64>, seed: u64) -> Self {
        Self {
            dims,
            scenes,
            foregrounds: 2,
            disparities,
            seed,
        }
    }

    pub fn scene(&self, index: usize) -> Result<SyntheticScene> {
        if self.disparities.is_empty() {
            return Err(Error::InvalidParameter("corpus has no disparities".into()));
        }
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
        let mut scene = SyntheticScene::random(self.dims, self.foregrounds, (0.0, 0.0), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for layer in &mut scene.layers {
            layer.disparity = self.disparities[rng.random_range(0..self.disparities.len())];
        }
        Ok(scene)
    }

    pub fn render(&self) -> Result<Vec<SynthOutput>> {
        (0..self.scenes)
            .into_par_iter()
            .map(|i| synth(&self.scene(i)?, self.seed.wrapping_add(i as u64)))
            .collect()
    }

    /// Ground truth paired with its degraded, bicubic-matched version. The
    /// flow is left for the pipeline to estimate, as at inference time.
    pub fn training_pairs(&self, degrade_params: &DegradeParams) -> Result<Vec<TrainingPair>> {
        self.render()?
            .into_par_iter()
            .map(|out| {
                Ok(TrainingPair {
                    lr: degrade(&out.lf, degrade_params)?,
                    hr: out.lf,
                    flow: None,
                })
            })
            .collect()
    }
}

/// Cuts `cfg.patch_count` patches from `pairs` and trains a fresh net of
/// the configured shape on them.
pub fn train_restorer(pairs: &[TrainingPair], cfg: &PipelineConfig) -> Result<(ConvNet, TrainReport)> {
    cfg.validate()?;
    let (patches, _) = extract_patches(pairs, cfg.k, cfg.patch_count, cfg.patch_size, cfg.seed, &cfg.flow)?;
    let mut net = init_net(cfg)?;
    let report = train(&mut net, &patches, &cfg.train)?;
    Ok((net, report))
}
