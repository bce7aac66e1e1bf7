use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::LightField;
use crate::metrics::{psnr, psnr_interior};

/// Pixels excluded from each side for the border-cropped PSNR.
pub const EVAL_BORDER: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub s: usize,
    pub t: usize,
    pub psnr: f64,
    /// PSNR with [`EVAL_BORDER`] pixels dropped on every side.
    pub psnr_border: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    /// Mean of the per-view PSNRs.
    pub mean_psnr: f64,
    pub centre_psnr: f64,
    pub mean_psnr_border: f64,
    /// Mean PSNR of the bicubic input, when it was supplied.
    #[serde(default)]
    pub bicubic_mean_psnr: Option<f64>,
    #[serde(default)]
    pub stage_times_ms: BTreeMap<String, f64>,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Per-view, mean and centre PSNR of `out` against `truth` (peak 1).
pub fn evaluate(out: &LightField, truth: &LightField) -> Result<EvalReport> {
    if out.dims() != truth.dims() {
        return Err(Error::Dimension(format!("output {:?} vs truth {:?}", out.dims(), truth.dims())));
    }
    let d = out.dims();
    let mut views = Vec::with_capacity(d.views());
    for s in 1..=d.p {
        for t in 1..=d.q {
            let (a, b) = (out.view(s, t), truth.view(s, t));
            views.push(ViewScore {
                s,
                t,
                psnr: psnr(a, b, 1.0)?,
                psnr_border: psnr_interior(a, b, 1.0, EVAL_BORDER)?,
            });
        }
    }
    let n = views.len() as f64;
    let (sc, tc) = out.centre();
    let centre = views.iter().find(|v| (v.s, v.t) == (sc, tc)).map_or(f64::NAN, |v| v.psnr);
    Ok(EvalReport {
        mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        mean_psnr_border: views.iter().map(|v| v.psnr_border).sum::<f64>() / n,
        centre_psnr: centre,
        views,
        bicubic_mean_psnr: None,
        stage_times_ms: BTreeMap::new(),
        config: BTreeMap::new(),
    })
}

impl EvalReport {
    /// Fills in the bicubic baseline score.
    pub fn with_baseline(mut self, bicubic: &LightField, truth: &LightField) -> Result<Self> {
        self.bicubic_mean_psnr = Some(evaluate(bicubic, truth)?.mean_psnr);
        Ok(self)
    }

    pub fn gain_over_bicubic(&self) -> Option<f64> {
        self.bicubic_mean_psnr.map(|b| self.mean_psnr - b)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "view      psnr   psnr(-{EVAL_BORDER}px)")?;
        for v in &self.views {
            writeln!(f, "({:2},{:2})  {:6.2}  {:6.2}", v.s, v.t, v.psnr, v.psnr_border)?;
        }
        writeln!(f, "mean      {:6.2}  {:6.2}", self.mean_psnr, self.mean_psnr_border)?;
        writeln!(f, "centre    {:6.2}", self.centre_psnr)?;
        if let (Some(b), Some(g)) = (self.bicubic_mean_psnr, self.gain_over_bicubic()) {
            writeln!(f, "bicubic   {b:6.2}  (gain {g:+.2} dB)")?;
        }
        for (stage, ms) in &self.stage_times_ms {
            writeln!(f, "time {stage:<14} {ms:9.1} ms")?;
        }
        Ok(())
    }
}
