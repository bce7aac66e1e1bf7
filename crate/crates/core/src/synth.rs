//! Procedural layered light fields with exact ground truth.
//!
//! Each layer is a value-noise texture living on the centre-view grid. View
//! `(s, t)` sees a layer of disparity `d` displaced by `((t − t_c)·d,
//! (s − s_c)·d)`, so `centre(x, y) = view(x + u, y + v)` wherever the same
//! layer is visible in both. Textures are continuous functions, so
//! fractional shifts are sampled exactly rather than interpolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{CrackMask, FlowField};
use crate::lightfield::{Dims, LightField, View};

/// Opaque support of a layer, in centre-view pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Region {
    Full,
    /// Half-open box `[x0, x1) × [y0, y1)`.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub texture_seed: u64,
    /// Pixels per angular step.
    pub disparity: f64,
    pub region: Region,
    /// Lattice spacing of the coarsest noise octave, in pixels.
    #[serde(default = "default_cell")]
    pub cell: f64,
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
}

fn default_cell() -> f64 {
    8.0
}
fn default_mean() -> f64 {
    0.5
}
fn default_contrast() -> f64 {
    0.8
}

impl Layer {
    pub fn new(texture_seed: u64, disparity: f64, region: Region) -> Self {
        Self {
            texture_seed,
            disparity,
            region,
            cell: default_cell(),
            mean: default_mean(),
            contrast: default_contrast(),
        }
    }

    /// Texture intensity at centre-grid coordinates, in `[0, 1]`.
    pub fn texture(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        let mut amp = 1.0;
        let mut norm = 0.0;
        let mut cell = self.cell;
        for octave in 0..3u64 {
            acc += amp * value_noise(self.texture_seed.wrapping_add(octave), x / cell, y / cell);
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        (self.mean + self.contrast * (acc / norm - 0.5)).clamp(0.0, 1.0)
    }
}

/// Layers listed back to front; the back layer must be [`Region::Full`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    #[serde(flatten)]
    pub dims: Dims,
    pub layers: Vec<Layer>,
}

impl SyntheticScene {
    pub fn new(dims: Dims, layers: Vec<Layer>) -> Self {
        Self { dims, layers }
    }

    /// One full-frame layer of constant disparity.
    pub fn planar(dims: Dims, disparity: f64, texture_seed: u64) -> Self {
        Self::new(dims, vec![Layer::new(texture_seed, disparity, Region::Full)])
    }

    /// A background plane plus `foregrounds` opaque rectangles or disks, with
    /// all disparities drawn from `range`.
    pub fn random(dims: Dims, foregrounds: usize, range: (f64, f64), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw_d = |rng: &mut ChaCha8Rng| {
            if range.0 == range.1 {
                range.0
            } else {
                rng.random_range(range.0..range.1)
            }
        };
        let mut layers = Vec::with_capacity(foregrounds + 1);
        let mut bg = Layer::new(rng.random(), draw_d(&mut rng), Region::Full);
        bg.cell = rng.random_range(6.0..12.0);
        layers.push(bg);
        let (w, h) = (dims.x as f64, dims.y as f64);
        for _ in 0..foregrounds {
            let region = if rng.random_bool(0.5) {
                let cx = rng.random_range(0.2..0.8) * w;
                let cy = rng.random_range(0.2..0.8) * h;
                let hw = rng.random_range(0.1..0.25) * w;
                let hh = rng.random_range(0.1..0.25) * h;
                Region::Rect {
                    x0: cx - hw,
                    y0: cy - hh,
                    x1: cx + hw,
                    y1: cy + hh,
                }
            } else {
                Region::Disk {
                    cx: rng.random_range(0.2..0.8) * w,
                    cy: rng.random_range(0.2..0.8) * h,
                    r: rng.random_range(0.1..0.25) * w.min(h),
                }
            };
            let mut layer = Layer::new(rng.random(), draw_d(&mut rng), region);
            layer.cell = rng.random_range(4.0..10.0);
            layer.mean = rng.random_range(0.3..0.7);
            layers.push(layer);
        }
        Self::new(dims, layers)
    }

    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("scene has no layers".into()));
        }
        if self.layers[0].region != Region::Full {
            return Err(Error::InvalidParameter(
                "the back layer must cover the full frame".into(),
            ));
        }
        for l in &self.layers {
            if !l.disparity.is_finite() || !(l.cell > 0.0) || !l.mean.is_finite() || !l.contrast.is_finite() {
                return Err(Error::InvalidParameter(format!("bad layer {l:?}")));
            }
        }
        Ok(())
    }

    /// Front-most layer whose support holds the scene point seen at
    /// view-frame position `(x, y)` with angular offset `(ds, dt)`.
    fn visible(&self, x: f64, y: f64, ds: f64, dt: f64) -> Option<usize> {
        self.layers.iter().enumerate().rev().find_map(|(i, l)| {
            let (cx, cy) = (x - dt * l.disparity, y - ds * l.disparity);
            l.region.contains(cx, cy).then_some(i)
        })
    }
}

/// Rendered light field with its analytic ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub lf: LightField,
    /// Flow of the layer visible in the centre view at each pixel.
    pub flow: FlowField,
    /// Centre-grid pixels whose scene point is hidden (or leaves the frame)
    /// in view `i`.
    pub occluded: CrackMask,
    /// View-grid pixels of view `i` showing a point that is not visible in
    /// the centre view.
    pub disoccluded: CrackMask,
}

/// Renders `scene`. The scene's layer seeds fix the textures; `seed` is
/// mixed in so one scene description can yield distinct texture draws.
pub fn synth(scene: &SyntheticScene, seed: u64) -> Result<SynthOutput> {
    scene.validate()?;
    let mut scene = scene.clone();
    for l in &mut scene.layers {
        l.texture_seed = hash64(l.texture_seed ^ hash64(seed));
    }
    let dims = scene.dims;
    let (sc, tc) = (dims.p.div_ceil(2), dims.q.div_ceil(2));
    let (w, h) = (dims.x, dims.y);

    let mut views = Vec::with_capacity(dims.views());
    let mut us = Vec::with_capacity(dims.views());
    let mut vs = Vec::with_capacity(dims.views());
    let mut occluded = Vec::with_capacity(dims.views());
    let mut disoccluded = Vec::with_capacity(dims.views());
    let centre_layer: Vec<usize> = (0..w * h)
        .map(|p| {
            scene
                .visible((p % w) as f64, (p / w) as f64, 0.0, 0.0)
                .expect("back layer covers everything")
        })
        .collect::<Vec<_>>();

    for s in 1..=dims.p {
        for t in 1..=dims.q {
            let ds = s as f64 - sc as f64;
            let dt = t as f64 - tc as f64;
            let mut img = vec![0.0; w * h];
            let mut dis = vec![false; w * h];
            for y in 0..h {
                for x in 0..w {
                    let (xf, yf) = (x as f64, y as f64);
                    let p = y * w + x;
                    if let Some(li) = scene.visible(xf, yf, ds, dt) {
                        let l = &scene.layers[li];
                        let (cx, cy) = (xf - dt * l.disparity, yf - ds * l.disparity);
                        img[p] = l.texture(cx, cy);
                        dis[p] = scene.visible(cx, cy, 0.0, 0.0) != Some(li);
                    }
                }
            }
            let mut u = vec![0.0; w * h];
            let mut v = vec![0.0; w * h];
            let mut occ = vec![false; w * h];
            for p in 0..w * h {
                let l = &scene.layers[centre_layer[p]];
                u[p] = dt * l.disparity;
                v[p] = ds * l.disparity;
                let (tx, ty) = ((p % w) as f64 + u[p], (p / w) as f64 + v[p]);
                let inside = tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64;
                occ[p] = !inside || scene.visible(tx, ty, ds, dt) != Some(centre_layer[p]);
            }
            views.push(View::new(w, h, img)?);
            us.push(View::new(w, h, u)?);
            vs.push(View::new(w, h, v)?);
            occluded.push(occ);
            disoccluded.push(dis);
        }
    }
    Ok(SynthOutput {
        lf: LightField::new(dims.p, dims.q, views)?,
        flow: FlowField::new(dims, us, vs)?,
        occluded: CrackMask::from_views(dims, occluded)?,
        disoccluded: CrackMask::from_views(dims, disoccluded)?,
    })
}

fn hash64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = hash64(seed ^ hash64((ix as u64).wrapping_mul(0x1f1f_1f1f) ^ hash64(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothstep-interpolated lattice noise in `[0, 1]`.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |a: f64| a * a * (3.0 - 2.0 * a);
    let (ax, ay) = (smooth(x - fx), smooth(y - fy));
    let top = lattice(seed, ix, iy) * (1.0 - ax) + lattice(seed, ix + 1, iy) * ax;
    let bottom = lattice(seed, ix, iy + 1) * (1.0 - ax) + lattice(seed, ix + 1, iy + 1) * ax;
    top * (1.0 - ay) + bottom * ay
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_disparity_views_are_identical() {
        let out = synth(&SyntheticScene::planar(Dims::new(3, 3, 20, 16), 0.0, 4), 1).unwrap();
        let c = out.lf.centre_view().clone();
        assert!(out.lf.views().iter().all(|v| *v == c));
        assert_eq!(out.flow.max_abs(), 0.0);
        assert!(out.occluded.is_empty() && out.disoccluded.is_empty());
    }

    #[test]
    fn unit_disparity_is_a_pure_shift() {
        let out = synth(&SyntheticScene::planar(Dims::new(3, 5, 24, 20), 1.0, 9), 3).unwrap();
        let c = out.lf.centre_view();
        // view (1, 5): u = 2, v = −1
        let v = out.lf.view(1, 5);
        for y in 0..19 {
            for x in 0..22 {
                assert_eq!(c.get(x, y + 1), v.get(x + 2, y));
            }
        }
        assert_eq!(out.flow.u(5).get(0, 0), 2.0);
        assert_eq!(out.flow.v(5).get(0, 0), -1.0);
    }

    #[test]
    fn occlusions_follow_the_silhouette() {
        let dims = Dims::new(1, 3, 32, 8);
        let scene = SyntheticScene::new(
            dims,
            vec![
                Layer::new(1, 0.0, Region::Full),
                Layer::new(2, 2.0, Region::Rect { x0: 10.0, y0: -1.0, x1: 20.0, y1: 9.0 }),
            ],
        );
        let out = synth(&scene, 0).unwrap();
        // view t = 3 sees the foreground moved right by 2: background pixels
        // x ∈ [20, 22) of the centre are hidden there.
        for x in 0..32 {
            let hidden = (20..22).contains(&x);
            assert_eq!(out.occluded.is_hole(3, x, 4), hidden, "x = {x}");
        }
        // and view t = 3 uncovers x ∈ [10, 12).
        for x in 0..32 {
            assert_eq!(out.disoccluded.is_hole(3, x, 4), (10..12).contains(&x), "x = {x}");
        }
        assert!(out.occluded.view(2).iter().all(|&h| !h));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let scene = SyntheticScene::random(Dims::new(3, 3, 24, 24), 2, (-1.0, 1.0), 5);
        let a = synth(&scene, 7).unwrap();
        let b = synth(&scene, 7).unwrap();
        let c = synth(&scene, 8).unwrap();
        assert_eq!(a.lf, b.lf);
        assert_ne!(a.lf, c.lf);
    }

    #[test]
    fn empty_scene_rejected() {
        let scene = SyntheticScene::new(Dims::new(3, 3, 8, 8), vec![]);
        assert!(synth(&scene, 0).is_err());
    }

    #[test]
    fn texture_in_unit_range() {
        let l = Layer::new(3, 0.0, Region::Full);
        for i in 0..200 {
            let v = l.texture(i as f64 * 0.37 - 20.0, i as f64 * 0.11);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = SyntheticScene::random(Dims::new(3, 3, 24, 24), 2, (-1.0, 1.0), 5);
        let text = serde_json::to_string(&scene).unwrap();
        let back: SyntheticScene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scene);
    }
}
