//! Object motion tracker.
//!
//! A small fully connected estimator maps an object's box history (the
//! last `K` boxes, flattened) to the coefficients of one quadratic motion
//! function per corner coordinate. Evaluating those functions on the most
//! recent box predicts the next-frame ROI; segmentation then runs inside
//! that ROI and feeds the observed box back into the track.
//!
//! Everything here is `f64`: the estimator is tiny (microseconds per
//! track), and training plus gradient checks want the headroom.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Quadratic coefficients `alpha, beta, epsilon` for each of the four
/// corner coordinates, ordered `x1, y1, x2, y2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionParams {
    pub coeffs: [[f64; 3]; 4],
}

/// Signs applied to the box padding per coordinate: the top-left corner
/// moves out by `-phi`, the bottom-right by `+phi`.
const PHI_SIGNS: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

impl MotionParams {
    /// Coefficients that reproduce the previous box exactly (before
    /// padding): `alpha = 0, beta = 1, epsilon = 0` everywhere.
    pub const IDENTITY: MotionParams = MotionParams {
        coeffs: [[0.0, 1.0, 0.0]; 4],
    };

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), 12);
        let mut coeffs = [[0.0; 3]; 4];
        for (c, chunk) in flat.chunks_exact(3).enumerate() {
            coeffs[c] = [chunk[0], chunk[1], chunk[2]];
        }
        MotionParams { coeffs }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| v.is_finite())
    }
}

/// Evaluate the motion functions on the previous box, unclamped:
/// `alpha * c^2 + beta * c + epsilon -/+ phi` per coordinate. Used by the
/// training loss, where clamping would break gradients.
pub fn eval_motion_unclamped(params: &MotionParams, prev: &BBox, phi: f64) -> [f64; 4] {
    let coords = [prev.x1, prev.y1, prev.x2, prev.y2];
    let mut out = [0.0; 4];
    for c in 0..4 {
        let [alpha, beta, epsilon] = params.coeffs[c];
        let x = coords[c];
        out[c] = alpha * x * x + beta * x + epsilon + PHI_SIGNS[c] * phi;
    }
    out
}

/// Evaluate the motion functions and clamp to a valid box. A non-finite
/// coordinate signals estimator divergence and is an error; corners that
/// cross after clamping collapse to their midpoint.
pub fn eval_motion(params: &MotionParams, prev: &BBox, phi: f64) -> Result<BBox> {
    let raw = eval_motion_unclamped(params, prev, phi);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMotion);
    }
    Ok(BBox::clamped(raw[0], raw[1], raw[2], raw[3]))
}

/// Two-layer estimator: `4K -> hidden (tanh) -> 12`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionEstimator {
    history_len: usize,
    hidden: usize,
    /// `hidden x 4K`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `12 x hidden`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MotionEstimator {
    /// Xavier-uniform weights; output biases start at the identity motion
    /// coefficients so an untrained estimator roughly copies the last box.
    pub fn new(history_len: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        assert!(history_len >= 1 && hidden >= 1);
        let input = 4 * history_len;
        let a1 = (6.0 / (input + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 12) as f64).sqrt();
        let w1 = (0..hidden * input).map(|_| rng.gen_range(-a1..a1)).collect();
        let w2 = (0..12 * hidden).map(|_| rng.gen_range(-a2..a2)).collect();
        let mut b2 = vec![0.0; 12];
        for c in 0..4 {
            b2[3 * c + 1] = 1.0; // beta
        }
        MotionEstimator {
            history_len,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2,
        }
    }

    /// All-zero parameters (forward output equals the output biases).
    pub fn zeros(history_len: usize, hidden: usize) -> Self {
        assert!(history_len >= 1 && hidden >= 1);
        let input = 4 * history_len;
        MotionEstimator {
            history_len,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; 12 * hidden],
            b2: vec![0.0; 12],
        }
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_len(&self) -> usize {
        4 * self.history_len
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        &mut self.b2
    }

    /// Deterministic affine -> tanh -> affine evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<MotionParams> {
        let mut hidden = vec![0.0; self.hidden];
        let out = self.forward_raw(input, &mut hidden)?;
        Ok(MotionParams::from_flat(&out))
    }

    /// Forward pass that also exposes the hidden activations for backprop.
    fn forward_raw(&self, input: &[f64], hidden: &mut [f64]) -> Result<[f64; 12]> {
        if input.len() != self.input_len() {
            return Err(Error::EstimatorInputSize {
                got: input.len(),
                want: self.input_len(),
            });
        }
        debug_assert_eq!(hidden.len(), self.hidden);
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * input.len()..(j + 1) * input.len()];
            let mut z = self.b1[j];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            *h = z.tanh();
        }
        let mut out = [0.0; 12];
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let mut z = self.b2[o];
            for (w, h) in row.iter().zip(hidden.iter()) {
                z += w * h;
            }
            *out_v = z;
        }
        Ok(out)
    }

    fn apply_step(&mut self, velocity: &EstimatorGradients) {
        for (p, v) in self.w1.iter_mut().zip(&velocity.w1) {
            *p += v;
        }
        for (p, v) in self.b1.iter_mut().zip(&velocity.b1) {
            *p += v;
        }
        for (p, v) in self.w2.iter_mut().zip(&velocity.w2) {
            *p += v;
        }
        for (p, v) in self.b2.iter_mut().zip(&velocity.b2) {
            *p += v;
        }
    }

    /// Mutable views over every parameter, used by the gradient check.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .collect()
    }

    // --- checkpoint format -------------------------------------------------
    //
    // 4-byte magic "ROMT", version byte, then little-endian u32 history_len
    // and hidden, then all parameters as little-endian f64 in w1, b1, w2,
    // b2 order. Round-trips bit-exactly.

    const MAGIC: &'static [u8; 4] = b"ROMT";
    const VERSION: u8 = 1;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 8 * self.param_count());
        out.extend_from_slice(Self::MAGIC);
        out.push(Self::VERSION);
        out.extend_from_slice(&(self.history_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if &magic != Self::MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if version[0] != Self::VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", version[0])));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::Checkpoint("truncated dims".into()))?;
        let history_len = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::Checkpoint("truncated dims".into()))?;
        let hidden = u32::from_le_bytes(u32buf) as usize;
        if history_len == 0 || hidden == 0 {
            return Err(Error::Checkpoint("zero dimensions".into()));
        }
        let mut est = MotionEstimator::zeros(history_len, hidden);
        let mut f64buf = [0u8; 8];
        for slot in est
            .w1
            .iter_mut()
            .chain(est.b1.iter_mut())
            .chain(est.w2.iter_mut())
            .chain(est.b2.iter_mut())
        {
            r.read_exact(&mut f64buf)
                .map_err(|_| Error::Checkpoint("truncated parameters".into()))?;
            *slot = f64::from_le_bytes(f64buf);
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(est)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Flattened histories paired with ground-truth next boxes.
#[derive(Clone, Debug, Default)]
pub struct TrainBatch {
    pub history_len: usize,
    /// `n x 4K`, each history oldest to newest, each box `x1 y1 x2 y2`.
    pub inputs: Vec<f64>,
    /// `n x 4`.
    pub targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(history_len: usize) -> Self {
        TrainBatch {
            history_len,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, history: &[BBox], target: &BBox) {
        assert_eq!(history.len(), self.history_len);
        for b in history {
            debug_assert!(b.is_valid());
            self.inputs.extend_from_slice(&[b.x1, b.y1, b.x2, b.y2]);
        }
        debug_assert!(target.is_valid());
        self.targets
            .extend_from_slice(&[target.x1, target.y1, target.x2, target.y2]);
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = 4 * self.history_len;
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * 4..(i + 1) * 4]
    }

    /// The newest history box of sample `i` (the one the motion functions
    /// are evaluated on).
    pub fn last_box(&self, i: usize) -> BBox {
        let input = self.input(i);
        let tail = &input[input.len() - 4..];
        BBox {
            x1: tail[0],
            y1: tail[1],
            x2: tail[2],
            y2: tail[3],
        }
    }
}

/// Parameter gradients (or momentum velocity), same shapes as the
/// estimator.
#[derive(Clone, Debug)]
pub struct EstimatorGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl EstimatorGradients {
    fn zeros_like(est: &MotionEstimator) -> Self {
        EstimatorGradients {
            w1: vec![0.0; est.w1.len()],
            b1: vec![0.0; est.b1.len()],
            w2: vec![0.0; est.w2.len()],
            b2: vec![0.0; est.b2.len()],
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }
}

/// Mean squared error over all four coordinates of all samples, with the
/// prediction being the unclamped motion-function evaluation of the
/// estimator's output on the newest history box. Returns the analytic
/// gradient alongside.
pub fn loss_and_grad(
    estimator: &MotionEstimator,
    batch: &TrainBatch,
    phi: f64,
) -> Result<(f64, EstimatorGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    assert_eq!(batch.history_len, estimator.history_len);

    let n = batch.len();
    let input_len = estimator.input_len();
    let norm = 1.0 / (n as f64 * 4.0);
    let mut grads = EstimatorGradients::zeros_like(estimator);
    let mut hidden = vec![0.0; estimator.hidden];
    let mut loss = 0.0;

    for i in 0..n {
        let input = batch.input(i);
        let target = batch.target(i);
        let out = estimator.forward_raw(input, &mut hidden)?;
        let params = MotionParams::from_flat(&out);
        let prev = batch.last_box(i);
        let pred = eval_motion_unclamped(&params, &prev, phi);
        let coords = [prev.x1, prev.y1, prev.x2, prev.y2];

        // d(loss)/d(estimator output), through the motion functions.
        let mut d_out = [0.0; 12];
        for c in 0..4 {
            let err = pred[c] - target[c];
            loss += err * err * norm;
            let d_pred = 2.0 * err * norm;
            let x = coords[c];
            d_out[3 * c] = d_pred * x * x;
            d_out[3 * c + 1] = d_pred * x;
            d_out[3 * c + 2] = d_pred;
        }

        // Output layer.
        let mut d_hidden = vec![0.0; estimator.hidden];
        for (o, &d) in d_out.iter().enumerate() {
            grads.b2[o] += d;
            let w_row = &estimator.w2[o * estimator.hidden..(o + 1) * estimator.hidden];
            let g_row = &mut grads.w2[o * estimator.hidden..(o + 1) * estimator.hidden];
            for j in 0..estimator.hidden {
                g_row[j] += d * hidden[j];
                d_hidden[j] += d * w_row[j];
            }
        }

        // Hidden layer through tanh.
        for j in 0..estimator.hidden {
            let dz = d_hidden[j] * (1.0 - hidden[j] * hidden[j]);
            grads.b1[j] += dz;
            let g_row = &mut grads.w1[j * input_len..(j + 1) * input_len];
            for (g, x) in g_row.iter_mut().zip(input) {
                *g += dz * x;
            }
        }
    }

    Ok((loss, grads))
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub phi: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 2000,
            lr: 0.5,
            momentum: 0.9,
            phi: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub estimator: MotionEstimator,
    /// Loss before each step, plus the final loss (`steps + 1` entries).
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent with momentum. Deterministic given the
/// initial estimator. A non-finite loss aborts with the step index and the
/// last finite loss.
pub fn train(
    estimator: MotionEstimator,
    batch: &TrainBatch,
    opts: &TrainOptions,
) -> Result<TrainRun> {
    assert!(opts.steps >= 1, "training needs at least one step");
    let mut est = estimator;
    let mut velocity = EstimatorGradients::zeros_like(&est);
    let mut losses = Vec::with_capacity(opts.steps + 1);

    for step in 0..opts.steps {
        let (loss, grads) = loss_and_grad(&est, batch, opts.phi)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                last_loss: losses.last().copied().unwrap_or(f64::NAN),
            });
        }
        losses.push(loss);
        for (v, g) in velocity.w1.iter_mut().zip(&grads.w1) {
            *v = opts.momentum * *v - opts.lr * g;
        }
        for (v, g) in velocity.b1.iter_mut().zip(&grads.b1) {
            *v = opts.momentum * *v - opts.lr * g;
        }
        for (v, g) in velocity.w2.iter_mut().zip(&grads.w2) {
            *v = opts.momentum * *v - opts.lr * g;
        }
        for (v, g) in velocity.b2.iter_mut().zip(&grads.b2) {
            *v = opts.momentum * *v - opts.lr * g;
        }
        est.apply_step(&velocity);
    }

    let (final_loss, _) = loss_and_grad(&est, batch, opts.phi)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            step: opts.steps,
            last_loss: losses.last().copied().unwrap_or(f64::NAN),
        });
    }
    losses.push(final_loss);
    Ok(TrainRun {
        estimator: est,
        losses,
    })
}

/// Per-object box history plus liveness.
#[derive(Clone, Debug)]
pub struct TrackState {
    pub object_id: usize,
    history: VecDeque<(usize, BBox)>,
    capacity: usize,
    pub alive: bool,
}

impl TrackState {
    pub fn new(object_id: usize, capacity: usize, frame: usize, initial: BBox) -> Self {
        assert!(capacity >= 1);
        let mut history = VecDeque::with_capacity(capacity);
        history.push_back((frame, initial));
        TrackState {
            object_id,
            history,
            capacity,
            alive: true,
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn last(&self) -> Option<(usize, BBox)> {
        self.history.back().copied()
    }

    pub fn history(&self) -> impl Iterator<Item = (usize, BBox)> + '_ {
        self.history.iter().copied()
    }

    /// Append an observation (or record a disappearance). A segmented box
    /// keeps the track alive and evicts the oldest entry beyond the window;
    /// an empty mask marks the track dead while retaining history, so a
    /// later reappearance resumes from the old boxes.
    pub fn update(&mut self, observed: Option<BBox>, frame: usize) -> Result<()> {
        if let Some((last_frame, _)) = self.history.back() {
            if frame <= *last_frame {
                return Err(Error::OutOfOrderFrame {
                    frame,
                    last: *last_frame,
                });
            }
        }
        match observed {
            Some(bbox) => {
                self.history.push_back((frame, bbox));
                while self.history.len() > self.capacity {
                    self.history.pop_front();
                }
                self.alive = true;
            }
            None => {
                self.alive = false;
            }
        }
        Ok(())
    }

    /// Oldest-to-newest flattened history, only when the window is full.
    pub fn flattened(&self) -> Option<Vec<f64>> {
        if self.history.len() < self.capacity {
            return None;
        }
        let mut out = Vec::with_capacity(4 * self.capacity);
        for (_, b) in &self.history {
            out.extend_from_slice(&[b.x1, b.y1, b.x2, b.y2]);
        }
        Some(out)
    }
}

/// Motion-function prediction of the next-frame box (padded by `phi`,
/// clamped), before any minimum-area enforcement. A track whose history is
/// shorter than the estimator window falls back to the padded last box.
pub fn predict_motion_box(
    state: &TrackState,
    estimator: &MotionEstimator,
    phi: f64,
) -> Result<BBox> {
    if !state.alive {
        return Err(Error::DeadTrack {
            id: state.object_id,
        });
    }
    let (_, last) = state.last().expect("live track has history");
    match state.flattened() {
        None => Ok(last.pad(phi)),
        Some(input) => {
            let params = estimator.forward(&input)?;
            eval_motion(&params, &last, phi)
        }
    }
}

/// The ROI segmentation will run in: the predicted motion box grown to the
/// minimum ROI-to-frame area ratio.
pub fn predict_roi(
    state: &TrackState,
    estimator: &MotionEstimator,
    phi: f64,
    min_ratio: f64,
) -> Result<BBox> {
    Ok(predict_motion_box(state, estimator, phi)?.enforce_min_ratio(min_ratio))
}
