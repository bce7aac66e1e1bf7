//! Plain 3×3 convolutional restoration network with exact backprop.
//!
//! Tensors are channels-first `f64`. Convolutions are unpadded (each layer
//! trims one pixel per side); replicate mode pads the input once up front
//! so the output keeps the input size.

mod train;
mod weights;

use matrixmultiply::dgemm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::View;

pub use train::{train, train_with_progress, Optimizer, PatchPair, Schedule, TrainConfig, TrainReport};
pub use weights::{read_weights, write_weights};

/// Depth and width of the reference network.
pub const DEPTH: usize = 10;
pub const WIDTH: usize = 64;
const KSIZE: usize = 3;

/// `C × H × W` tensor, stored `data[(c·H + y)·W + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Stacks equally sized views as channels.
    pub fn from_views(views: &[View]) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::Dimension("no views to stack".into()))?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(views.len() * w * h);
        for v in views {
            if v.width() != w || v.height() != h {
                return Err(Error::Dimension("views differ in size".into()));
            }
            data.extend_from_slice(v.as_slice());
        }
        Self::new(views.len(), h, w, data)
    }

    pub fn to_views(&self) -> Vec<View> {
        self.data
            .chunks_exact(self.height * self.width)
            .map(|c| View::new(self.width, self.height, c.to_vec()).expect("plane size"))
            .collect()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Tensor> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::OutOfRange(format!(
                "crop {height}x{width}+{y0}+{x0} of {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Tensor::new(self.channels, height, width, data)
    }

    /// Replicate-pads every side by `pad`.
    pub fn pad_replicate(&self, pad: usize) -> Tensor {
        let (h, w) = (self.height + 2 * pad, self.width + 2 * pad);
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in 0..h {
                let sy = (y as isize - pad as isize).clamp(0, self.height as isize - 1) as usize;
                for x in 0..w {
                    let sx = (x as isize - pad as isize).clamp(0, self.width as isize - 1) as usize;
                    data.push(self.get(c, sy, sx));
                }
            }
        }
        Tensor {
            channels: self.channels,
            height: h,
            width: w,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output shrinks by twice the depth.
    Valid,
    /// Input replicate-padded by the depth; output keeps the input size.
    Replicate,
}

/// What the last layer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// `y = f(x)`.
    Direct,
    /// `y = x + f(x)`, with `x` cropped to the output window.
    Residual,
}

/// One 3×3 convolution; weights are `[out][in][ky][kx]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn xavier(out_ch: usize, in_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let area = (KSIZE * KSIZE) as f64;
        let a = (6.0 / (area * (in_ch + out_ch) as f64)).sqrt();
        let weights = (0..out_ch * in_ch * KSIZE * KSIZE)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Self {
            out_ch,
            in_ch,
            weights,
            bias: vec![0.0; out_ch],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    k: usize,
    layers: Vec<ConvLayer>,
    mode: OutputMode,
}

impl ConvNet {
    /// Reference network: ten layers, 64 features, direct output, Xavier
    /// uniform weights and zero biases.
    pub fn init(k: usize, seed: u64) -> Result<Self> {
        Self::with_architecture(k, DEPTH, WIDTH, OutputMode::Direct, seed)
    }

    /// Same construction with another depth, feature width or output mode.
    pub fn with_architecture(
        k: usize,
        depth: usize,
        width: usize,
        mode: OutputMode,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || depth == 0 || (depth > 1 && width == 0) {
            return Err(Error::InvalidParameter(format!(
                "network needs k ≥ 1, depth ≥ 1, width ≥ 1 (got {k}, {depth}, {width})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..depth)
            .map(|l| {
                let in_ch = if l == 0 { k } else { width };
                let out_ch = if l + 1 == depth { k } else { width };
                ConvLayer::xavier(out_ch, in_ch, &mut rng)
            })
            .collect();
        Ok(Self { k, layers, mode })
    }

    pub fn from_layers(k: usize, layers: Vec<ConvLayer>, mode: OutputMode) -> Result<Self> {
        let ok = !layers.is_empty()
            && layers[0].in_ch == k
            && layers.last().is_some_and(|l| l.out_ch == k)
            && layers.windows(2).all(|w| w[0].out_ch == w[1].in_ch)
            && layers.iter().all(|l| {
                l.weights.len() == l.out_ch * l.in_ch * KSIZE * KSIZE && l.bias.len() == l.out_ch
            });
        if !ok {
            return Err(Error::Dimension("inconsistent layer stack".into()));
        }
        Ok(Self { k, layers, mode })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    pub fn mode(&self) -> OutputMode {
        self.mode
    }
    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }
    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Pixels trimmed from each side in valid mode.
    pub fn margin(&self) -> usize {
        self.depth() * (KSIZE / 2)
    }

    pub fn forward(&self, x: &Tensor, padding: Padding) -> Result<Tensor> {
        match padding {
            Padding::Valid => self.forward_valid(x),
            Padding::Replicate => self.forward_valid(&x.pad_replicate(self.margin())),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.k {
            return Err(Error::Dimension(format!(
                "net expects {} channels, got {}",
                self.k, x.channels
            )));
        }
        let min = 2 * self.margin() + 1;
        if x.height < min || x.width < min {
            return Err(Error::Dimension(format!(
                "input {}x{} smaller than the {min}x{min} receptive field",
                x.height, x.width
            )));
        }
        Ok(())
    }

    fn forward_valid(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        let mut col = Vec::new();
        let last = self.depth() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = conv_forward(layer, &a, &mut col);
            if l != last {
                relu(&mut a.data);
            }
        }
        self.add_skip(x, &mut a)?;
        Ok(a)
    }

    fn add_skip(&self, x: &Tensor, out: &mut Tensor) -> Result<()> {
        if self.mode == OutputMode::Residual {
            let m = self.margin();
            let skip = x.crop(m, m, out.height, out.width)?;
            for (o, s) in out.data.iter_mut().zip(&skip.data) {
                *o += s;
            }
        }
        Ok(())
    }

    /// Crops `y` to the valid-mode output window of an input of the same
    /// size, or passes it through if it already has that size.
    fn match_target(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        let m = self.margin();
        let (oh, ow) = (x.height.saturating_sub(2 * m), x.width.saturating_sub(2 * m));
        if y.channels != self.k {
            return Err(Error::Dimension(format!(
                "target has {} channels, net has {}",
                y.channels, self.k
            )));
        }
        if y.height == oh && y.width == ow {
            Ok(y.clone())
        } else if y.height == x.height && y.width == x.width {
            y.crop(m, m, oh, ow)
        } else {
            Err(Error::Dimension(format!(
                "target {}x{} matches neither input {}x{} nor output {oh}x{ow}",
                y.height, y.width, x.height, x.width
            )))
        }
    }

    /// `½‖f(x) − y‖²` in valid mode.
    pub fn loss(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let y = self.match_target(x, y)?;
        let out = self.forward_valid(x)?;
        Ok(half_sq_err(&out.data, &y.data))
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn backward(&self, x: &Tensor, y: &Tensor) -> Result<(f64, Gradients)> {
        let y = self.match_target(x, y)?;
        self.check_input(x)?;
        let last = self.depth() - 1;
        let mut col = Vec::new();
        // inputs[l] is the input of layer l (post-activation).
        let mut inputs = Vec::with_capacity(self.depth());
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = conv_forward(layer, &a, &mut col);
            inputs.push(a);
            a = z;
            if l != last {
                relu(&mut a.data);
            }
        }
        self.add_skip(x, &mut a)?;
        let loss = half_sq_err(&a.data, &y.data);

        let mut grad: Vec<f64> = a.data.iter().zip(&y.data).map(|(o, t)| o - t).collect();
        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.depth()).rev() {
            let input = &inputs[l];
            let layer = &self.layers[l];
            let dx = conv_backward(layer, input, &grad, &mut grads.layers[l], &mut col, l > 0);
            if l > 0 {
                // ReLU of the previous layer: its output is this layer's input.
                grad = dx
                    .into_iter()
                    .zip(&input.data)
                    .map(|(g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
            }
        }
        Ok((loss, grads))
    }
}

fn half_sq_err(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
}

fn relu(v: &mut [f64]) {
    for a in v {
        if *a < 0.0 {
            *a = 0.0;
        }
    }
}

/// Unfolds 3×3 neighbourhoods: row `(c·3 + ky)·3 + kx`, column `y·Wo + x`.
fn im2col(x: &Tensor, col: &mut Vec<f64>) -> (usize, usize) {
    let (ho, wo) = (x.height - KSIZE + 1, x.width - KSIZE + 1);
    let n = ho * wo;
    col.clear();
    col.resize(x.channels * KSIZE * KSIZE * n, 0.0);
    let mut row = 0;
    for c in 0..x.channels {
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let dst = &mut col[row * n..(row + 1) * n];
                for y in 0..ho {
                    let src = (c * x.height + y + ky) * x.width + kx;
                    dst[y * wo..(y + 1) * wo].copy_from_slice(&x.data[src..src + wo]);
                }
                row += 1;
            }
        }
    }
    (ho, wo)
}

fn conv_forward(layer: &ConvLayer, x: &Tensor, col: &mut Vec<f64>) -> Tensor {
    let (ho, wo) = im2col(x, col);
    let n = ho * wo;
    let kk = layer.in_ch * KSIZE * KSIZE;
    let mut out = vec![0.0; layer.out_ch * n];
    for (o, b) in layer.bias.iter().enumerate() {
        out[o * n..(o + 1) * n].fill(*b);
    }
    // out (O×N) += W (O×K) · col (K×N)
    unsafe {
        dgemm(
            layer.out_ch,
            kk,
            n,
            1.0,
            layer.weights.as_ptr(),
            kk as isize,
            1,
            col.as_ptr(),
            n as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor {
        channels: layer.out_ch,
        height: ho,
        width: wo,
        data: out,
    }
}

/// Accumulates parameter gradients for one layer and, if `want_input`,
/// returns the gradient with respect to its input.
fn conv_backward(
    layer: &ConvLayer,
    input: &Tensor,
    grad_out: &[f64],
    acc: &mut LayerGrad,
    col: &mut Vec<f64>,
    want_input: bool,
) -> Vec<f64> {
    let (ho, wo) = im2col(input, col);
    let n = ho * wo;
    let kk = layer.in_ch * KSIZE * KSIZE;
    // dW (O×K) += g (O×N) · colᵀ (N×K)
    unsafe {
        dgemm(
            layer.out_ch,
            n,
            kk,
            1.0,
            grad_out.as_ptr(),
            n as isize,
            1,
            col.as_ptr(),
            1,
            n as isize,
            1.0,
            acc.weights.as_mut_ptr(),
            kk as isize,
            1,
        );
    }
    for (o, b) in acc.bias.iter_mut().enumerate() {
        *b += grad_out[o * n..(o + 1) * n].iter().sum::<f64>();
    }
    if !want_input {
        return Vec::new();
    }
    // dcol (K×N) = Wᵀ (K×O) · g (O×N)
    let mut dcol = vec![0.0; kk * n];
    unsafe {
        dgemm(
            kk,
            layer.out_ch,
            n,
            1.0,
            layer.weights.as_ptr(),
            1,
            kk as isize,
            grad_out.as_ptr(),
            n as isize,
            1,
            0.0,
            dcol.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    let mut dx = vec![0.0; input.data.len()];
    let mut row = 0;
    for c in 0..input.channels {
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let src = &dcol[row * n..(row + 1) * n];
                for y in 0..ho {
                    let dst = (c * input.height + y + ky) * input.width + kx;
                    for (d, s) in dx[dst..dst + wo].iter_mut().zip(&src[y * wo..(y + 1) * wo]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &ConvNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.values_mut() {
            *a *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|a| a * a).sum::<f64>().sqrt()
    }
}
