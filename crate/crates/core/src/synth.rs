//! Synthetic scenes with known trajectories and masks.
//!
//! Scenes are rendered analytically at feature-grid resolution: each cell
//! belongs to the topmost object whose shape contains the cell center, or
//! to the background. Per-cell keys are handcrafted from an appearance
//! field (object/background appearance vectors plus seeded noise), a
//! position term, and a local neighborhood mean, standing in for a learned
//! image encoder at desk scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matching::FeatureGrid;
use crate::rng::substream;
use crate::tracker::TrainBatch;

/// Per-cell object id, 0 = background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize) -> Self {
        LabelMap {
            h,
            w,
            data: vec![0; h * w],
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, id: u8) {
        self.data[row * self.w + col] = id;
    }

    pub fn count(&self, id: u8) -> usize {
        self.data.iter().filter(|&&v| v == id).count()
    }

    /// Highest object id present anywhere in the map.
    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn object_mask(&self, id: u8) -> Vec<bool> {
        self.data.iter().map(|&v| v == id).collect()
    }

    /// Tight normalized box around the cells labeled `id`, if any.
    pub fn tight_box(&self, id: u8) -> Option<BBox> {
        let mut r0 = usize::MAX;
        let mut c0 = usize::MAX;
        let mut r1 = 0usize;
        let mut c1 = 0usize;
        let mut seen = false;
        for row in 0..self.h {
            for col in 0..self.w {
                if self.cell(row, col) == id {
                    seen = true;
                    r0 = r0.min(row);
                    c0 = c0.min(col);
                    r1 = r1.max(row + 1);
                    c1 = c1.max(col + 1);
                }
            }
        }
        seen.then(|| BBox {
            x1: c0 as f64 / self.w as f64,
            y1: r0 as f64 / self.h as f64,
            x2: c1 as f64 / self.w as f64,
            y2: r1 as f64 / self.h as f64,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ellipse,
    Rect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    ConstantVelocity { vx: f64, vy: f64 },
    ConstantAcceleration { vx: f64, vy: f64, ax: f64, ay: f64 },
    Sinusoidal { amp_x: f64, amp_y: f64, frequency: f64, phase: f64 },
}

impl Trajectory {
    /// Closed-form center offset from the start position at frame `t`.
    pub fn offset(&self, t: f64) -> (f64, f64) {
        match *self {
            Trajectory::ConstantVelocity { vx, vy } => (vx * t, vy * t),
            Trajectory::ConstantAcceleration { vx, vy, ax, ay } => {
                (vx * t + 0.5 * ax * t * t, vy * t + 0.5 * ay * t * t)
            }
            Trajectory::Sinusoidal {
                amp_x,
                amp_y,
                frequency,
                phase,
            } => {
                let arg = std::f64::consts::TAU * frequency * t + phase;
                (amp_x * arg.sin(), amp_y * arg.sin())
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Normalized box width/height.
    pub width: f64,
    pub height: f64,
    /// Center at frame 0.
    pub start: (f64, f64),
    pub trajectory: Trajectory,
    /// Inclusive frame interval during which the object is not rendered.
    #[serde(default)]
    pub absent: Option<(usize, usize)>,
}

impl ObjectSpec {
    /// Analytic box at frame `t`: the closed-form center, clamped so the
    /// box stays inside the frame. `None` while scheduled absent.
    pub fn analytic_box(&self, t: usize) -> Option<BBox> {
        if let Some((a, b)) = self.absent {
            if t >= a && t <= b {
                return None;
            }
        }
        let (dx, dy) = self.trajectory.offset(t as f64);
        let cx = (self.start.0 + dx).clamp(self.width / 2.0, 1.0 - self.width / 2.0);
        let cy = (self.start.1 + dy).clamp(self.height / 2.0, 1.0 - self.height / 2.0);
        Some(BBox {
            x1: cx - self.width / 2.0,
            y1: cy - self.height / 2.0,
            x2: cx + self.width / 2.0,
            y2: cy + self.height / 2.0,
        })
    }

    fn contains(&self, bbox: &BBox, px: f64, py: f64) -> bool {
        let (cx, cy) = bbox.center();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        match self.shape {
            Shape::Rect => (px - cx).abs() <= hw && (py - cy).abs() <= hh,
            Shape::Ellipse => {
                let nx = (px - cx) / hw;
                let ny = (py - cy) / hh;
                nx * nx + ny * ny <= 1.0
            }
        }
    }
}

/// Handcrafted key parameters. A key is the concatenation of the cell's
/// (noisy) appearance vector, its normalized position scaled by
/// `position_weight`, and the 3x3 neighborhood appearance mean, for a
/// total of `2 * appearance_dim + 2` dims.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyParams {
    pub appearance_dim: usize,
    pub position_weight: f64,
    /// Minimum pairwise angle (radians) between sampled appearance
    /// vectors, background included.
    pub min_pairwise_angle: f64,
    /// Scale applied to appearance vectors before noise. Larger gains
    /// spread class distances apart, sharpening the affinity softmax.
    pub appearance_gain: f64,
    /// Amplitude of the deterministic per-cell background texture jitter.
    pub background_texture: f64,
    /// Additive gaussian noise on every appearance sample, per frame.
    pub noise_sigma: f64,
}

impl Default for KeyParams {
    fn default() -> Self {
        KeyParams {
            appearance_dim: 7,
            position_weight: 0.25,
            min_pairwise_angle: 60f64.to_radians(),
            appearance_gain: 1.0,
            background_texture: 0.0,
            noise_sigma: 0.0,
        }
    }
}

pub fn key_dim(appearance_dim: usize) -> usize {
    2 * appearance_dim + 2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frames: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "KeyParams::default_wrap")]
    pub keys: KeyParams,
}

fn default_stride() -> usize {
    4
}

impl KeyParams {
    fn default_wrap() -> KeyParams {
        KeyParams::default()
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidSpec("zero frames".into()));
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::InvalidSpec("empty grid".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::InvalidSpec("no objects".into()));
        }
        if self.objects.len() > 254 {
            return Err(Error::InvalidSpec("too many objects for 8-bit labels".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.width > 0.0 && o.height > 0.0) {
                return Err(Error::InvalidSpec(format!("object {i} has empty size")));
            }
            if o.width > 1.0 || o.height > 1.0 {
                return Err(Error::InvalidSpec(format!(
                    "object {i} ({} x {}) is larger than the frame",
                    o.width, o.height
                )));
            }
        }
        if self.keys.appearance_dim == 0 {
            return Err(Error::InvalidSpec("appearance_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-cell appearance vectors, the input to key extraction. Synthetic
/// scenes fill it from object appearance plus noise; raster input fills it
/// from patch statistics.
#[derive(Clone, Debug)]
pub struct AppearanceField {
    pub h: usize,
    pub w: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl AppearanceField {
    pub fn new(h: usize, w: usize, dim: usize) -> Self {
        AppearanceField {
            h,
            w,
            dim,
            data: vec![0.0; h * w * dim],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> &[f32] {
        let cell = row * self.w + col;
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let cell = row * self.w + col;
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    fn neighborhood_mean(&self, row: usize, col: usize, out: &mut [f32]) {
        out.fill(0.0);
        let r0 = row.saturating_sub(1);
        let r1 = (row + 2).min(self.h);
        let c0 = col.saturating_sub(1);
        let c1 = (col + 2).min(self.w);
        let count = ((r1 - r0) * (c1 - c0)) as f32;
        for r in r0..r1 {
            for c in c0..c1 {
                for (o, &v) in out.iter_mut().zip(self.at(r, c)) {
                    *o += v;
                }
            }
        }
        for o in out.iter_mut() {
            *o /= count;
        }
    }
}

/// Key vector for one cell: appearance, weighted position, neighborhood
/// mean.
pub fn extract_keys(field: &AppearanceField, row: usize, col: usize, position_weight: f64) -> Vec<f32> {
    let mut key = Vec::with_capacity(key_dim(field.dim));
    key.extend_from_slice(field.at(row, col));
    key.push((position_weight * (col as f64 + 0.5) / field.w as f64) as f32);
    key.push((position_weight * (row as f64 + 0.5) / field.h as f64) as f32);
    let mut nbhd = vec![0.0f32; field.dim];
    field.neighborhood_mean(row, col, &mut nbhd);
    key.extend_from_slice(&nbhd);
    key
}

/// Keys for the whole field as a [`FeatureGrid`].
pub fn build_key_grid(field: &AppearanceField, stride: usize, position_weight: f64) -> FeatureGrid {
    let mut grid = FeatureGrid::new(field.h, field.w, stride, key_dim(field.dim));
    for row in 0..field.h {
        for col in 0..field.w {
            let key = extract_keys(field, row, col, position_weight);
            grid.key_mut(row, col).copy_from_slice(&key);
        }
    }
    grid
}

/// One generated frame: keys, ground-truth labels, and both views of the
/// per-object boxes (tight over label cells, and the closed-form box the
/// trajectory prescribes).
#[derive(Clone, Debug)]
pub struct LabeledFrame {
    pub keys: FeatureGrid,
    pub labels: Option<LabelMap>,
    /// Tight boxes over label cells; `None` when the object has no cells.
    pub truth_boxes: Vec<Option<BBox>>,
    /// Closed-form trajectory boxes; `None` while scheduled absent.
    pub analytic_boxes: Vec<Option<BBox>>,
}

/// Unit vectors with a minimum pairwise angle, background first.
fn sample_appearances(
    count: usize,
    dim: usize,
    min_angle: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f32>>> {
    let max_cos = min_angle.cos();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidSpec(format!(
                "cannot place {count} appearance vectors with pairwise angle >= {:.1} deg in {dim} dims",
                min_angle.to_degrees()
            )));
        }
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let ok = out
            .iter()
            .all(|u| u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() <= max_cos);
        if ok {
            out.push(v);
        }
    }
    Ok(out
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect())
}

/// Box-Muller, consuming two uniforms per call for stream stability.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn render_labels(spec: &SceneSpec, t: usize) -> (LabelMap, Vec<Option<BBox>>) {
    let mut labels = LabelMap::new(spec.grid_h, spec.grid_w);
    let analytic: Vec<Option<BBox>> = spec.objects.iter().map(|o| o.analytic_box(t)).collect();
    for (i, obj) in spec.objects.iter().enumerate() {
        let Some(bbox) = analytic[i] else { continue };
        let id = (i + 1) as u8;
        let rect = bbox.to_grid(spec.grid_h, spec.grid_w);
        for (row, col) in rect.iter_cells() {
            let px = (col as f64 + 0.5) / spec.grid_w as f64;
            let py = (row as f64 + 0.5) / spec.grid_h as f64;
            if obj.contains(&bbox, px, py) {
                labels.set(row, col, id); // later objects draw on top
            }
        }
    }
    (labels, analytic)
}

/// Render the whole sequence. Deterministic given `(spec, seed)`.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Vec<LabeledFrame>> {
    spec.validate()?;
    let dim = spec.keys.appearance_dim;
    let mut app_rng = substream(seed, "appearance");
    let appearances = sample_appearances(
        spec.objects.len() + 1,
        dim,
        spec.keys.min_pairwise_angle,
        &mut app_rng,
    )?;

    // Static background texture: a per-cell jitter on top of the shared
    // background appearance.
    let mut bg_rng = substream(seed, "background");
    let mut texture = vec![0.0f32; spec.grid_h * spec.grid_w * dim];
    if spec.keys.background_texture > 0.0 {
        for v in texture.iter_mut() {
            *v = (spec.keys.background_texture * gaussian(&mut bg_rng)) as f32;
        }
    }

    let mut noise_rng = substream(seed, "noise");
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (labels, analytic) = render_labels(spec, t);
        let mut field = AppearanceField::new(spec.grid_h, spec.grid_w, dim);
        for row in 0..spec.grid_h {
            for col in 0..spec.grid_w {
                let id = labels.cell(row, col) as usize;
                let cell = row * spec.grid_w + col;
                let dst = field.at_mut(row, col);
                let gain = spec.keys.appearance_gain as f32;
                for (v, &a) in dst.iter_mut().zip(&appearances[id]) {
                    *v = gain * a;
                }
                if id == 0 {
                    for (d, v) in dst.iter_mut().enumerate() {
                        *v += texture[cell * dim + d];
                    }
                }
                if spec.keys.noise_sigma > 0.0 {
                    for v in dst.iter_mut() {
                        *v += (spec.keys.noise_sigma * gaussian(&mut noise_rng)) as f32;
                    }
                }
            }
        }
        let keys = build_key_grid(&field, spec.stride, spec.keys.position_weight);
        let truth_boxes = (1..=spec.objects.len())
            .map(|id| labels.tight_box(id as u8))
            .collect();
        frames.push(LabeledFrame {
            keys,
            labels: Some(labels),
            truth_boxes,
            analytic_boxes: analytic,
        });
    }
    Ok(frames)
}

/// Sliding windows of `history_len` consecutive analytic boxes as inputs,
/// the next box as target, over every object of every spec. Windows that
/// touch a scheduled absence are skipped; sequences shorter than
/// `history_len + 1` are skipped with a warning. Sample order is shuffled
/// deterministically from the seed.
pub fn make_tracking_dataset(specs: &[SceneSpec], seed: u64, history_len: usize) -> Result<TrainBatch> {
    assert!(!specs.is_empty(), "need at least one scene spec");
    let mut samples: Vec<(Vec<BBox>, BBox)> = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        spec.validate()?;
        if spec.frames < history_len + 1 {
            log::warn!(
                "spec {s}: {} frames is shorter than a {}-box window plus target; skipped",
                spec.frames,
                history_len
            );
            continue;
        }
        for obj in &spec.objects {
            let boxes: Vec<Option<BBox>> = (0..spec.frames).map(|t| obj.analytic_box(t)).collect();
            for start in 0..=(spec.frames - history_len - 1) {
                let window = &boxes[start..start + history_len + 1];
                if window.iter().any(|b| b.is_none()) {
                    continue;
                }
                let history: Vec<BBox> = window[..history_len].iter().map(|b| b.unwrap()).collect();
                samples.push((history, window[history_len].unwrap()));
            }
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = substream(seed, "dataset-shuffle");
    // Fisher-Yates.
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let mut batch = TrainBatch::new(history_len);
    for &i in &order {
        batch.push(&samples[i].0, &samples[i].1);
    }
    Ok(batch)
}
