//! Light-field data model.
//!
//! Conventions used throughout the crate:
//!
//! * A [`View`] is a `width × height` grid (`X × Y`) stored row-major, so the
//!   sample at horizontal position `x` and vertical position `y` lives at
//!   `data[y * width + x]`.
//! * A [`LightField`] is a `P × Q` grid of views. Angular coordinates `(s, t)`
//!   are 1-based, `s` indexes angular rows (vertical parallax) and `t` angular
//!   columns (horizontal parallax). The linear view index is
//!   `i = (s − 1)·Q + t`, also 1-based.
//! * Spatial pixel coordinates are 0-based.
//! * Inside a [`FieldMatrix`] column, a view is vectorized column-major:
//!   `vec(view)[x * height + y] = view(x, y)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel image. Samples are intensities, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl View {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty view {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "view {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at offset {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty view");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty view");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &View) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> View {
        View {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &View, f: impl Fn(f64, f64) -> f64) -> Result<View> {
        check_same_shape(self, other)?;
        Ok(View {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn clamp01(mut self) -> View {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Sub-window copy; the window must lie inside the view.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<View> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::OutOfRange(format!(
                "crop {width}x{height}+{x0}+{y0} of {}x{}",
                self.width, self.height
            )));
        }
        Ok(View::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Column-major vectorization.
    pub fn vectorize(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                out.push(self.get(x, y));
            }
        }
        out
    }

    /// Inverse of [`View::vectorize`].
    pub fn from_vectorized(width: usize, height: usize, column: &[f64]) -> Result<View> {
        if column.len() != width * height {
            return Err(Error::Dimension(format!(
                "column of length {} cannot hold a {width}x{height} view",
                column.len()
            )));
        }
        let mut data = vec![0.0; width * height];
        for x in 0..width {
            for y in 0..height {
                data[y * width + x] = column[x * height + y];
            }
        }
        View::new(width, height, data)
    }
}

pub(crate) fn check_same_shape(a: &View, b: &View) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

/// Angular and spatial extent of a light field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Angular rows.
    #[serde(rename = "P")]
    pub p: usize,
    /// Angular columns.
    #[serde(rename = "Q")]
    pub q: usize,
    /// View width.
    #[serde(rename = "X")]
    pub x: usize,
    /// View height.
    #[serde(rename = "Y")]
    pub y: usize,
}

impl Dims {
    pub fn new(p: usize, q: usize, x: usize, y: usize) -> Self {
        Self { p, q, x, y }
    }

    pub fn views(&self) -> usize {
        self.p * self.q
    }

    pub fn pixels(&self) -> usize {
        self.x * self.y
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.x == 0 || self.y == 0 {
            return Err(Error::Dimension(format!("degenerate dims {self:?}")));
        }
        if self.p.is_multiple_of(2) || self.q.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "angular dims must be odd to have a centre view, got {}x{}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// A `P × Q` grid of equally sized views.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    dims: Dims,
    views: Vec<View>,
}

impl LightField {
    /// `views` are given in linear-index order.
    pub fn new(p: usize, q: usize, views: Vec<View>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::Dimension("light field without views".into()))?;
        let dims = Dims::new(p, q, first.width(), first.height());
        dims.validate()?;
        if views.len() != dims.views() {
            return Err(Error::Dimension(format!(
                "{p}x{q} light field needs {} views, got {}",
                dims.views(),
                views.len()
            )));
        }
        if let Some(i) = views.iter().position(|v| !v.same_shape(first)) {
            return Err(Error::Dimension(format!(
                "view {} is {}x{}, expected {}x{}",
                i + 1,
                views[i].width(),
                views[i].height(),
                dims.x,
                dims.y
            )));
        }
        Ok(Self { dims, views })
    }

    pub fn from_fn(p: usize, q: usize, mut f: impl FnMut(usize, usize) -> View) -> Result<Self> {
        let mut views = Vec::with_capacity(p * q);
        for s in 1..=p {
            for t in 1..=q {
                views.push(f(s, t));
            }
        }
        Self::new(p, q, views)
    }

    pub fn constant(dims: Dims, value: f64) -> Result<Self> {
        Self::new(
            dims.p,
            dims.q,
            vec![View::filled(dims.x, dims.y, value); dims.views()],
        )
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// 1-based linear index of `(s, t)`.
    #[inline]
    pub fn linear_index(&self, s: usize, t: usize) -> usize {
        (s - 1) * self.dims.q + t
    }

    /// Inverse of [`LightField::linear_index`].
    #[inline]
    pub fn angular_index(&self, i: usize) -> (usize, usize) {
        ((i - 1) / self.dims.q + 1, (i - 1) % self.dims.q + 1)
    }

    /// `(⌈P/2⌉, ⌈Q/2⌉)`.
    #[inline]
    pub fn centre(&self) -> (usize, usize) {
        (self.dims.p.div_ceil(2), self.dims.q.div_ceil(2))
    }

    /// 1-based linear index of the centre view.
    #[inline]
    pub fn centre_index(&self) -> usize {
        let (s, t) = self.centre();
        self.linear_index(s, t)
    }

    pub fn centre_view(&self) -> &View {
        &self.views[self.centre_index() - 1]
    }

    /// # Panics
    /// If `(s, t)` is outside the angular grid.
    pub fn view(&self, s: usize, t: usize) -> &View {
        assert!((1..=self.dims.p).contains(&s) && (1..=self.dims.q).contains(&t));
        &self.views[self.linear_index(s, t) - 1]
    }

    pub fn view_mut(&mut self, s: usize, t: usize) -> &mut View {
        assert!((1..=self.dims.p).contains(&s) && (1..=self.dims.q).contains(&t));
        let i = self.linear_index(s, t);
        &mut self.views[i - 1]
    }

    /// Views in linear-index order (slice position `i − 1`).
    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn views_mut(&mut self) -> &mut [View] {
        &mut self.views
    }

    pub fn into_views(self) -> Vec<View> {
        self.views
    }

    /// Applies `f` to every view, keeping the angular layout.
    pub fn map_views<F>(&self, f: F) -> Result<LightField>
    where
        F: Fn(&View) -> Result<View> + Sync + Send,
    {
        use rayon::prelude::*;
        let views = self.views.par_iter().map(f).collect::<Result<Vec<_>>>()?;
        LightField::new(self.dims.p, self.dims.q, views)
    }

    pub fn to_matrix(&self) -> FieldMatrix {
        let d = self.dims;
        let mut data = DMatrix::zeros(d.pixels(), d.views());
        for (i, v) in self.views.iter().enumerate() {
            let mut col = data.column_mut(i);
            for x in 0..d.x {
                for y in 0..d.y {
                    col[x * d.y + y] = v.get(x, y);
                }
            }
        }
        FieldMatrix { data }
    }

    pub fn from_matrix(mat: &FieldMatrix, dims: Dims) -> Result<LightField> {
        dims.validate()?;
        if mat.m() != dims.pixels() || mat.n() != dims.views() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix does not match dims {:?} (m={}, n={})",
                mat.m(),
                mat.n(),
                dims,
                dims.pixels(),
                dims.views()
            )));
        }
        let views = (0..dims.views())
            .map(|i| View::from_vectorized(dims.x, dims.y, mat.data.column(i).as_slice()))
            .collect::<Result<Vec<_>>>()?;
        LightField::new(dims.p, dims.q, views)
    }

    pub fn clamp01(self) -> LightField {
        LightField {
            dims: self.dims,
            views: self.views.into_iter().map(View::clamp01).collect(),
        }
    }

    pub fn extract_epi(&self, kind: EpiKind, spatial: usize, angular: usize) -> Result<Epi> {
        let d = self.dims;
        let (sp_len, ang_len, a_len, line_len) = match kind {
            EpiKind::Horizontal => (d.y, d.p, d.q, d.x),
            EpiKind::Vertical => (d.x, d.q, d.p, d.y),
        };
        if spatial >= sp_len || !(1..=ang_len).contains(&angular) {
            return Err(Error::OutOfRange(format!(
                "{kind:?} EPI at spatial {spatial} (< {sp_len}), angular {angular} (1..={ang_len})"
            )));
        }
        let image = View::from_fn(line_len, a_len, |c, r| match kind {
            EpiKind::Horizontal => self.view(angular, r + 1).get(c, spatial),
            EpiKind::Vertical => self.view(r + 1, angular).get(spatial, c),
        });
        Ok(Epi {
            kind,
            spatial,
            angular,
            image,
        })
    }

    /// Writes an EPI back; exact inverse of [`LightField::extract_epi`].
    pub fn insert_epi(&mut self, epi: &Epi) -> Result<()> {
        let d = self.dims;
        let expected = match epi.kind {
            EpiKind::Horizontal => (d.x, d.q),
            EpiKind::Vertical => (d.y, d.p),
        };
        if (epi.image.width(), epi.image.height()) != expected {
            return Err(Error::Dimension(format!(
                "EPI {}x{} does not fit, expected {}x{}",
                epi.image.width(),
                epi.image.height(),
                expected.0,
                expected.1
            )));
        }
        let probe = self.extract_epi(epi.kind, epi.spatial, epi.angular)?;
        debug_assert!(probe.image.same_shape(&epi.image));
        for r in 0..epi.image.height() {
            for c in 0..epi.image.width() {
                let v = epi.image.get(c, r);
                match epi.kind {
                    EpiKind::Horizontal => self.view_mut(epi.angular, r + 1).set(c, epi.spatial, v),
                    EpiKind::Vertical => self.view_mut(r + 1, epi.angular).set(epi.spatial, c, v),
                }
            }
        }
        Ok(())
    }
}

/// `m × n` matrix with one vectorized view per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMatrix {
    pub data: DMatrix<f64>,
}

impl FieldMatrix {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    /// Pixels per view.
    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    /// Number of views.
    pub fn n(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpiKind {
    /// Fixes the pixel row `y` and the angular row `s`; EPI rows are indexed
    /// by `t`, columns by `x`.
    Horizontal,
    /// Fixes the pixel column `x` and the angular column `t`; EPI rows are
    /// indexed by `s`, columns by `y`.
    Vertical,
}

/// An epipolar-plane image. `image` has one row per view along the
/// parallax direction and one column per pixel along the matching spatial
/// axis, so a scene point with disparity `d` traces a line whose column
/// moves by `d` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Epi {
    pub kind: EpiKind,
    /// Fixed spatial coordinate (0-based).
    pub spatial: usize,
    /// Fixed angular coordinate (1-based).
    pub angular: usize,
    pub image: View,
}
