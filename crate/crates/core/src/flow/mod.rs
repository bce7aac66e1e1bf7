//! Per-view displacement toward the centre view, alignment and de-alignment.
//!
//! A flow `(u, v)` for view `i` is defined on the centre-view grid and
//! satisfies `centre(x, y) ≈ view_i(x + u, y + v)`; `u` is horizontal and
//! `v` vertical, both in pixels.

mod cache;
mod horn_schunck;
mod warp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{Dims, LightField, View};

pub use cache::{read_flow, write_flow};
pub use horn_schunck::{HornSchunck, HornSchunckParams};
pub use warp::{align, dealign, CrackMask};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dims: Dims,
    /// Index `i − 1` holds view `i`.
    u: Vec<View>,
    v: Vec<View>,
}

impl FlowField {
    pub fn zeros(dims: Dims) -> Self {
        let z = View::filled(dims.x, dims.y, 0.0);
        Self {
            dims,
            u: vec![z.clone(); dims.views()],
            v: vec![z; dims.views()],
        }
    }

    /// Builds a flow from per-view `(u, v)` maps in linear-index order.
    pub fn new(dims: Dims, u: Vec<View>, v: Vec<View>) -> Result<Self> {
        if u.len() != dims.views() || v.len() != dims.views() {
            return Err(Error::Dimension(format!(
                "flow needs {} views, got {} / {}",
                dims.views(),
                u.len(),
                v.len()
            )));
        }
        if u
            .iter()
            .chain(&v)
            .any(|m| m.width() != dims.x || m.height() != dims.y)
        {
            return Err(Error::Dimension(format!(
                "flow maps must be {}x{}",
                dims.x, dims.y
            )));
        }
        Ok(Self { dims, u, v })
    }

    /// Flow of a scene with one constant disparity `d` (px per angular
    /// step): view `(s, t)` gets `u = (t − t_c)·d`, `v = (s − s_c)·d`.
    pub fn uniform_disparity(dims: Dims, d: f64) -> Self {
        let (sc, tc) = (dims.p.div_ceil(2), dims.q.div_ceil(2));
        let mut u = Vec::with_capacity(dims.views());
        let mut v = Vec::with_capacity(dims.views());
        for s in 1..=dims.p {
            for t in 1..=dims.q {
                u.push(View::filled(dims.x, dims.y, (t as f64 - tc as f64) * d));
                v.push(View::filled(dims.x, dims.y, (s as f64 - sc as f64) * d));
            }
        }
        Self { dims, u, v }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Horizontal map of view `i` (1-based).
    pub fn u(&self, i: usize) -> &View {
        &self.u[i - 1]
    }

    /// Vertical map of view `i` (1-based).
    pub fn v(&self, i: usize) -> &View {
        &self.v[i - 1]
    }

    pub(crate) fn maps(&self) -> impl Iterator<Item = (&View, &View)> {
        self.u.iter().zip(&self.v)
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .flat_map(|m| m.as_slice())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn check_matches(&self, lf: &LightField) -> Result<()> {
        if self.dims != lf.dims() {
            return Err(Error::Dimension(format!(
                "flow dims {:?} vs light field {:?}",
                self.dims,
                lf.dims()
            )));
        }
        Ok(())
    }
}

/// Per-view solver report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFlowReport {
    /// 1-based view index.
    pub view: usize,
    pub converged: bool,
    /// Jacobi sweeps spent, summed over levels and warps.
    pub iterations: usize,
    /// Pixels whose flow hit `max_disp`.
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct FlowEstimate {
    pub flow: FlowField,
    pub reports: Vec<ViewFlowReport>,
}

impl FlowEstimate {
    pub fn converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    pub fn clamped(&self) -> usize {
        self.reports.iter().map(|r| r.clamped).sum()
    }
}

/// Anything that can produce the flow of every view toward the centre.
pub trait FlowEstimator {
    fn estimate(&self, lf: &LightField) -> Result<FlowEstimate>;
}

/// Returns a fixed, externally known flow. Used with synthetic scenes.
#[derive(Debug, Clone)]
pub struct GroundTruthFlow(pub FlowField);

impl FlowEstimator for GroundTruthFlow {
    fn estimate(&self, lf: &LightField) -> Result<FlowEstimate> {
        self.0.check_matches(lf)?;
        Ok(FlowEstimate {
            flow: self.0.clone(),
            reports: Vec::new(),
        })
    }
}

/// Estimates flow with the default pyramidal Horn–Schunck solver.
pub fn estimate_flow(lf: &LightField, params: &HornSchunckParams) -> Result<FlowEstimate> {
    HornSchunck::new(params.clone()).estimate(lf)
}

/// Mean over pixels of the variance across views, the usual measure of how
/// well a light field is aligned.
pub fn cross_view_variance(lf: &LightField) -> f64 {
    let n = lf.n_views() as f64;
    let m = lf.dims().pixels();
    let mut total = 0.0;
    for p in 0..m {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for v in lf.views() {
            let a = v.as_slice()[p];
            sum += a;
            sum2 += a * a;
        }
        let mean = sum / n;
        total += (sum2 / n - mean * mean).max(0.0);
    }
    total / m as f64
}
