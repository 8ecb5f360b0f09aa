use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv_backward, conv_forward, max_pool_backward, max_pool_forward, ConvGeometry, PoolGeometry};
use super::NnError;
use crate::dataset::{SampleWindow, Standardization};
use crate::rasterize::CHANNELS;
use crate::WINDOW_MINUTES;

/// Probabilities below this are clamped before taking the log.
pub const PROB_EPSILON: f64 = 1e-12;

fn ones3() -> [usize; 3] {
    [1, 1, 1]
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dSpec {
    pub kernel: [usize; 3],
    pub channels: usize,
    #[serde(default = "ones3")]
    pub stride: [usize; 3],
    #[serde(default)]
    pub padding: [usize; 3],
    /// Max-pool window applied after the rectifier; `[1, 1, 1]` for none.
    #[serde(default = "ones3")]
    pub pool: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub kernel: usize,
    pub channels: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub pool: usize,
}

/// Architecture of the fused classifier. Input channels of every layer follow from
/// the previous layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub metadata_dim: usize,
    pub conv3d: Vec<Conv3dSpec>,
    pub conv1d: Vec<Conv1dSpec>,
    /// Dense widths; the first is the embedding layer and the last must be 2.
    pub dense: Vec<usize>,
}

impl ModelSpec {
    pub fn default_for(height: usize, width: usize, metadata_dim: usize) -> Self {
        let c3 = |channels| Conv3dSpec {
            kernel: [3, 3, 3],
            channels,
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            pool: [2, 2, 2],
        };
        let c1 = |channels| Conv1dSpec {
            kernel: 3,
            channels,
            stride: 1,
            padding: 0,
            pool: 2,
        };
        Self {
            frames: WINDOW_MINUTES,
            height,
            width,
            channels: CHANNELS,
            metadata_dim,
            conv3d: vec![c3(8), c3(16)],
            conv1d: vec![c1(16), c1(32)],
            dense: vec![64, 2],
        }
    }

    /// Grid 4×6, five frames, three metadata features, one layer per branch,
    /// dense 8 → 2. Small enough for finite-difference checks.
    pub fn micro() -> Self {
        Self {
            frames: 5,
            height: 4,
            width: 6,
            channels: CHANNELS,
            metadata_dim: 3,
            conv3d: vec![Conv3dSpec {
                kernel: [2, 2, 2],
                channels: 2,
                stride: [1, 1, 1],
                padding: [0, 0, 0],
                pool: [1, 1, 1],
            }],
            conv1d: vec![Conv1dSpec {
                kernel: 2,
                channels: 2,
                stride: 1,
                padding: 0,
                pool: 1,
            }],
            dense: vec![8, 2],
        }
    }

    pub fn video_len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn metadata_len(&self) -> usize {
        self.frames * self.metadata_dim
    }

    pub fn embedding_len(&self) -> usize {
        self.dense[0]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.plan().map(|_| ())
    }

    pub(crate) fn plan(&self) -> Result<Plan, NnError> {
        let bad = |m: String| Err(NnError::Spec(m));
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 || self.metadata_dim == 0 {
            return bad("input extents must be positive".into());
        }
        if self.conv3d.is_empty() || self.conv1d.is_empty() {
            return bad("both convolution branches need at least one layer".into());
        }
        if self.dense.len() < 2 || self.dense.last() != Some(&2) || self.dense.contains(&0) {
            return bad("dense widths need an embedding layer and must end in 2".into());
        }
        let mut conv3d = Vec::new();
        let (mut dims, mut ch) = ([self.frames, self.height, self.width], self.channels);
        for (i, l) in self.conv3d.iter().enumerate() {
            if l.channels == 0 {
                return bad(format!("conv3d layer {i} has zero channels"));
            }
            let conv = ConvGeometry {
                in_dims: dims,
                in_channels: ch,
                kernel: l.kernel,
                out_channels: l.channels,
                stride: l.stride,
                padding: l.padding,
            };
            let od = conv.out_dims().map_err(|e| NnError::Spec(format!("conv3d layer {i}: {e}")))?;
            let pool = PoolGeometry {
                in_dims: od,
                channels: l.channels,
                window: l.pool,
            };
            dims = pool.out_dims().map_err(|e| NnError::Spec(format!("conv3d layer {i}: {e}")))?;
            ch = l.channels;
            conv3d.push((conv, pool));
        }
        let video_flat = dims.iter().product::<usize>() * ch;
        let mut conv1d = Vec::new();
        let (mut t, mut ch) = (self.frames, self.metadata_dim);
        for (i, l) in self.conv1d.iter().enumerate() {
            if l.channels == 0 {
                return bad(format!("conv1d layer {i} has zero channels"));
            }
            let conv = ConvGeometry {
                in_dims: [t, 1, 1],
                in_channels: ch,
                kernel: [l.kernel, 1, 1],
                out_channels: l.channels,
                stride: [l.stride, 1, 1],
                padding: [l.padding, 0, 0],
            };
            let od = conv.out_dims().map_err(|e| NnError::Spec(format!("conv1d layer {i}: {e}")))?;
            let pool = PoolGeometry {
                in_dims: od,
                channels: l.channels,
                window: [l.pool, 1, 1],
            };
            t = pool.out_dims().map_err(|e| NnError::Spec(format!("conv1d layer {i}: {e}")))?[0];
            ch = l.channels;
            conv1d.push((conv, pool));
        }
        let meta_flat = t * ch;
        let mut dense = Vec::new();
        let mut width = video_flat + meta_flat;
        for &out in &self.dense {
            dense.push((width, out));
            width = out;
        }
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
            let len = shape.iter().product();
            slots.push(ParamSlot {
                name,
                shape,
                offset,
                len,
                fan_in,
            });
            offset += len;
        };
        for (i, (g, _)) in conv3d.iter().enumerate() {
            let [kt, kh, kw] = g.kernel;
            let fan_in = kt * kh * kw * g.in_channels;
            push(format!("conv3d.{i}.weight"), vec![kt, kh, kw, g.in_channels, g.out_channels], fan_in);
            push(format!("conv3d.{i}.bias"), vec![g.out_channels], 0);
        }
        for (i, (g, _)) in conv1d.iter().enumerate() {
            let fan_in = g.kernel[0] * g.in_channels;
            push(format!("conv1d.{i}.weight"), vec![g.kernel[0], g.in_channels, g.out_channels], fan_in);
            push(format!("conv1d.{i}.bias"), vec![g.out_channels], 0);
        }
        for (i, &(n_in, n_out)) in dense.iter().enumerate() {
            push(format!("dense.{i}.weight"), vec![n_out, n_in], n_in);
            push(format!("dense.{i}.bias"), vec![n_out], 0);
        }
        Ok(Plan {
            conv3d,
            conv1d,
            video_flat,
            meta_flat,
            dense,
            slots,
            total: offset,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    pub(crate) fan_in: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Plan {
    pub conv3d: Vec<(ConvGeometry, PoolGeometry)>,
    pub conv1d: Vec<(ConvGeometry, PoolGeometry)>,
    pub video_flat: usize,
    pub meta_flat: usize,
    pub dense: Vec<(usize, usize)>,
    pub slots: Vec<ParamSlot>,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitRecord {
    pub scheme: String,
    pub seed: u64,
}

/// All weights in one flat vector, laid out in declaration order: conv3d layers,
/// conv1d layers, dense layers, each as weight then bias.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub init: InitRecord,
    pub values: Vec<f64>,
    plan: Plan,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.init == other.init && self.values == other.values
    }
}

pub const INIT_SCHEME: &str = "fan_in_uniform";

impl ModelParams {
    /// Weights uniform in ±sqrt(6 / fan_in), biases zero.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let plan = spec.plan()?;
        let mut rng = crate::surface_sim::stream_rng(seed, INIT_STREAM);
        let mut values = vec![0.0; plan.total];
        for slot in &plan.slots {
            if slot.fan_in == 0 {
                continue;
            }
            let bound = (6.0 / slot.fan_in as f64).sqrt();
            for v in &mut values[slot.offset..slot.offset + slot.len] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            init: InitRecord {
                scheme: INIT_SCHEME.into(),
                seed,
            },
            values,
            plan,
        })
    }

    pub fn zeros(spec: &ModelSpec) -> Result<Self, NnError> {
        let plan = spec.plan()?;
        Ok(Self {
            spec: spec.clone(),
            init: InitRecord {
                scheme: "zeros".into(),
                seed: 0,
            },
            values: vec![0.0; plan.total],
            plan,
        })
    }

    pub fn from_values(spec: &ModelSpec, init: InitRecord, values: Vec<f64>) -> Result<Self, NnError> {
        let plan = spec.plan()?;
        if values.len() != plan.total {
            return Err(NnError::Shape(format!(
                "spec needs {} parameters, got {}",
                plan.total,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(format!("parameter {i}")));
        }
        Ok(Self {
            spec: spec.clone(),
            init,
            values,
            plan,
        })
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.plan.slots
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, index: usize) -> &[f64] {
        let s = &self.plan.slots[index];
        &self.values[s.offset..s.offset + s.len]
    }

    pub(crate) fn plan(&self) -> &Plan {
        &self.plan
    }

    /// Weight and bias slices of the n-th layer overall (conv3d, conv1d, dense order).
    fn layer(&self, n: usize) -> (&[f64], &[f64]) {
        (self.tensor(2 * n), self.tensor(2 * n + 1))
    }
}

const INIT_STREAM: u64 = 16;

/// A standardized model input: video `(T, H, W, C)` and metadata `(T, D)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub video: Vec<f64>,
    pub metadata: Vec<f64>,
}

impl ModelInput {
    pub fn from_window(window: &SampleWindow, standardization: &Standardization) -> Self {
        let cells = window.frames.first().map_or(0, |f| f.h() * f.w() * CHANNELS);
        let mut video = vec![0.0; cells * window.frames.len()];
        for (t, frame) in window.frames.iter().enumerate() {
            let base = t * cells;
            for &(off, v) in frame.entries() {
                video[base + off as usize] = f64::from(v);
            }
        }
        let metadata = window
            .metadata
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(k, &v)| standardization.apply(k, v)))
            .collect();
        Self { video, metadata }
    }

    fn check(&self, spec: &ModelSpec) -> Result<(), NnError> {
        if self.video.len() != spec.video_len() || self.metadata.len() != spec.metadata_len() {
            return Err(NnError::Shape(format!(
                "input has {} video and {} metadata values, spec needs {} and {}",
                self.video.len(),
                self.metadata.len(),
                spec.video_len(),
                spec.metadata_len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_no_alert: f64,
    pub p_alert: f64,
}

impl Prediction {
    pub fn from_logits(z: [f64; 2]) -> Self {
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        let s = e0 + e1;
        Self {
            p_no_alert: e0 / s,
            p_alert: e1 / s,
        }
    }

    pub fn prob(&self, label: u8) -> f64 {
        if label == 1 {
            self.p_alert
        } else {
            self.p_no_alert
        }
    }
}

/// The nominal decision rule.
pub fn is_alert(p: &Prediction) -> bool {
    p.p_alert > 0.5
}

/// Weighted cross-entropy of one prediction; `weights` is `(w_neg, w_pos)`.
pub fn loss(pred: &Prediction, label: u8, weights: (f64, f64)) -> f64 {
    let w = if label == 1 { weights.1 } else { weights.0 };
    -w * pred.prob(label).max(PROB_EPSILON).ln()
}

#[derive(Clone, Debug)]
struct BranchCache {
    /// Post-rectifier convolution output, before pooling.
    act: Vec<f64>,
    pooled: Vec<f64>,
    argmax: Vec<u32>,
}

/// Activations retained from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    conv3d: Vec<BranchCache>,
    conv1d: Vec<BranchCache>,
    concat: Vec<f64>,
    /// Post-activation output of every dense layer; the last entry holds the logits.
    dense: Vec<Vec<f64>>,
    pub prediction: Prediction,
}

impl ForwardCache {
    pub fn logits(&self) -> [f64; 2] {
        let z = self.dense.last().expect("dense stack is never empty");
        [z[0], z[1]]
    }

    pub fn embedding(&self) -> &[f64] {
        &self.dense[0]
    }

    /// Post-rectifier activation of the last conv3d layer, `(t', h', w', k)`.
    pub fn last_conv3d_activation(&self) -> &[f64] {
        &self.conv3d.last().expect("conv3d stack is never empty").act
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn run_branch(
    stack: &[(ConvGeometry, PoolGeometry)],
    first_layer: usize,
    params: &ModelParams,
    input: &[f64],
) -> Result<Vec<BranchCache>, NnError> {
    let mut out: Vec<BranchCache> = Vec::with_capacity(stack.len());
    for (i, (g, p)) in stack.iter().enumerate() {
        let x = out.last().map_or(input, |c| &c.pooled);
        let (w, b) = params.layer(first_layer + i);
        let mut act = conv_forward(g, x, w, b)?;
        relu_in_place(&mut act);
        let (pooled, argmax) = if p.is_identity() {
            (act.clone(), Vec::new())
        } else {
            max_pool_forward(p, &act)?
        };
        out.push(BranchCache { act, pooled, argmax });
    }
    Ok(out)
}

pub fn forward(params: &ModelParams, input: &ModelInput) -> Result<ForwardCache, NnError> {
    input.check(&params.spec)?;
    let plan = params.plan();
    let n3 = plan.conv3d.len();
    let n1 = plan.conv1d.len();
    let conv3d = run_branch(&plan.conv3d, 0, params, &input.video)?;
    let conv1d = run_branch(&plan.conv1d, n3, params, &input.metadata)?;
    let mut concat = Vec::with_capacity(plan.video_flat + plan.meta_flat);
    concat.extend_from_slice(&conv3d.last().expect("non-empty").pooled);
    concat.extend_from_slice(&conv1d.last().expect("non-empty").pooled);
    let mut dense: Vec<Vec<f64>> = Vec::with_capacity(plan.dense.len());
    for (i, &(n_in, n_out)) in plan.dense.iter().enumerate() {
        let x = dense.last().unwrap_or(&concat);
        let (w, b) = params.layer(n3 + n1 + i);
        let mut y = b.to_vec();
        for (o, yv) in y.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            *yv += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        if i + 1 < plan.dense.len() {
            relu_in_place(&mut y);
        }
        debug_assert_eq!(y.len(), n_out);
        dense.push(y);
    }
    let z = dense.last().expect("non-empty");
    let prediction = Prediction::from_logits([z[0], z[1]]);
    Ok(ForwardCache {
        conv3d,
        conv1d,
        concat,
        dense,
        prediction,
    })
}

pub fn predict(params: &ModelParams, input: &ModelInput) -> Result<Prediction, NnError> {
    Ok(forward(params, input)?.prediction)
}

/// Post-activation output of the first dense layer.
pub fn embed(params: &ModelParams, input: &ModelInput) -> Result<Vec<f64>, NnError> {
    Ok(forward(params, input)?.dense.swap_remove(0))
}

fn branch_backward(
    stack: &[(ConvGeometry, PoolGeometry)],
    first_layer: usize,
    params: &ModelParams,
    input: &[f64],
    cache: &[BranchCache],
    dpooled_last: Vec<f64>,
    grads: Option<&mut [f64]>,
    mut last_dact: Option<&mut Vec<f64>>,
) -> Result<(), NnError> {
    let mut grads = grads;
    let mut dpooled = dpooled_last;
    for i in (0..stack.len()).rev() {
        let (g, p) = &stack[i];
        let c = &cache[i];
        let mut dact = if p.is_identity() {
            dpooled
        } else {
            max_pool_backward(&c.argmax, &dpooled, c.act.len())
        };
        if i + 1 == stack.len() {
            if let Some(out) = last_dact.take() {
                *out = dact.clone();
                if grads.is_none() {
                    return Ok(());
                }
            }
        }
        for (d, a) in dact.iter_mut().zip(&c.act) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        let x = if i == 0 { input } else { &cache[i - 1].pooled };
        let want_dx = i > 0;
        let mut dx = if want_dx { vec![0.0; g.in_len()] } else { Vec::new() };
        let (w, _) = params.layer(first_layer + i);
        match grads.as_deref_mut() {
            Some(all) => {
                let ws = &params.plan.slots[2 * (first_layer + i)];
                let bs = &params.plan.slots[2 * (first_layer + i) + 1];
                let (head, tail) = all.split_at_mut(bs.offset);
                let dw = &mut head[ws.offset..ws.offset + ws.len];
                let db = &mut tail[..bs.len];
                conv_backward(g, x, w, &dact, dw, db, want_dx.then_some(&mut dx[..]))?;
            }
            None => return Ok(()),
        }
        dpooled = dx;
    }
    Ok(())
}

/// Reverse pass from `dlogits`. Parameter gradients are added into `grads` when
/// given. Returns the gradient with respect to the last conv3d activation.
pub fn backward(
    params: &ModelParams,
    input: &ModelInput,
    cache: &ForwardCache,
    dlogits: [f64; 2],
    mut grads: Option<&mut [f64]>,
) -> Result<Vec<f64>, NnError> {
    input.check(&params.spec)?;
    if let Some(g) = grads.as_deref() {
        if g.len() != params.len() {
            return Err(NnError::Shape("gradient buffer does not match parameters".into()));
        }
    }
    let plan = params.plan();
    let n3 = plan.conv3d.len();
    let n1 = plan.conv1d.len();
    let mut dy = dlogits.to_vec();
    for i in (0..plan.dense.len()).rev() {
        let (n_in, _) = plan.dense[i];
        let x = if i == 0 { &cache.concat } else { &cache.dense[i - 1] };
        if i + 1 < plan.dense.len() {
            for (d, y) in dy.iter_mut().zip(&cache.dense[i]) {
                if *y <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let layer = n3 + n1 + i;
        let (w, _) = params.layer(layer);
        if let Some(all) = grads.as_deref_mut() {
            let ws = &plan.slots[2 * layer];
            let bs = &plan.slots[2 * layer + 1];
            for (o, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                all[bs.offset + o] += d;
                let row = &mut all[ws.offset + o * n_in..ws.offset + (o + 1) * n_in];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += d * xv;
                }
            }
        }
        let mut dx = vec![0.0; n_in];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (dxv, wv) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *dxv += d * wv;
            }
        }
        dy = dx;
    }
    let dmeta = dy.split_off(plan.video_flat);
    let dvideo = dy;
    let mut last_dact = Vec::new();
    branch_backward(
        &plan.conv3d,
        0,
        params,
        &input.video,
        &cache.conv3d,
        dvideo,
        grads.as_deref_mut(),
        Some(&mut last_dact),
    )?;
    if grads.is_some() {
        branch_backward(&plan.conv1d, n3, params, &input.metadata, &cache.conv1d, dmeta, grads, None)?;
    }
    Ok(last_dact)
}

/// Weighted loss of one sample and its gradient with respect to every parameter,
/// scaled by `scale` (1 / batch size for a batch mean).
pub fn sample_gradient(
    params: &ModelParams,
    input: &ModelInput,
    label: u8,
    weights: (f64, f64),
    scale: f64,
) -> Result<(f64, Vec<f64>), NnError> {
    let cache = forward(params, input)?;
    let p = cache.prediction;
    let w = if label == 1 { weights.1 } else { weights.0 };
    let onehot = if label == 1 { [0.0, 1.0] } else { [1.0, 0.0] };
    let dlogits = [
        scale * w * (p.p_no_alert - onehot[0]),
        scale * w * (p.p_alert - onehot[1]),
    ];
    let mut grads = vec![0.0; params.len()];
    backward(params, input, &cache, dlogits, Some(&mut grads))?;
    Ok((loss(&p, label, weights), grads))
}

/// Mean weighted loss of a batch and its exact gradient. Per-sample gradients are
/// summed in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[(&ModelInput, u8)],
    weights: (f64, f64),
) -> Result<(f64, Vec<f64>), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = vec![0.0; params.len()];
    let mut loss_sum = 0.0;
    for (input, label) in batch {
        let (l, g) = sample_gradient(params, input, *label, weights, scale)?;
        loss_sum += l;
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
    }
    Ok((loss_sum * scale, total))
}
