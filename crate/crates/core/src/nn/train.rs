use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{forward, is_alert, loss, sample_gradient, ModelInput, ModelParams, ModelSpec, Prediction};
use super::NnError;
use crate::dataset::{SampleWindow, Standardization};

/// Random-access labeled inputs, materialized on demand so a whole split never has
/// to be held densely in memory.
pub trait Examples: Sync {
    fn len(&self) -> usize;
    fn input(&self, i: usize) -> ModelInput;
    fn label(&self, i: usize) -> u8;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sample windows with metadata standardized at batch assembly.
pub struct WindowSet<'a> {
    pub windows: &'a [SampleWindow],
    pub standardization: &'a Standardization,
}

impl Examples for WindowSet<'_> {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn input(&self, i: usize) -> ModelInput {
        ModelInput::from_window(&self.windows[i], self.standardization)
    }

    fn label(&self, i: usize) -> u8 {
        self.windows[i].label
    }
}

impl Examples for [(ModelInput, u8)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn input(&self, i: usize) -> ModelInput {
        self[i].0.clone()
    }

    fn label(&self, i: usize) -> u8 {
        self[i].1
    }
}

impl Examples for Vec<(ModelInput, u8)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn input(&self, i: usize) -> ModelInput {
        self[i].0.clone()
    }

    fn label(&self, i: usize) -> u8 {
        self[i].1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// `(w_neg, w_pos)`; `None` derives `(1, N_neg / N_pos)` from the training split.
    pub class_weights: Option<(f64, f64)>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Evaluate batch members one after another instead of on the thread pool.
    /// Results are identical either way.
    pub single_thread: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            class_weights: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            single_thread: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.into()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and max epochs must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience cannot exceed max epochs");
        }
        if let Some((a, b)) = self.class_weights {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return bad("class weights must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam parameters out of range");
        }
        Ok(())
    }
}

/// Inverse-frequency weights `(1, N_neg / N_pos)`.
pub fn balanced_class_weights(labels: impl IntoIterator<Item = u8>) -> Result<(f64, f64), NnError> {
    let (mut neg, mut pos) = (0usize, 0usize);
    for l in labels {
        if l == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(NnError::Config(format!(
            "training split needs both classes ({neg} negative, {pos} positive)"
        )));
    }
    Ok((1.0, neg as f64 / pos as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_tpr: f64,
    pub val_tnr: f64,
}

pub fn write_history_csv<W: Write>(w: W, history: &[EpochRecord]) -> Result<(), NnError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in history {
        wr.serialize(r).map_err(|e| NnError::Io(e.to_string()))?;
    }
    wr.flush().map_err(|e| NnError::Io(e.to_string()))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>, NnError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| NnError::Io(e.to_string()))?;
    rd.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| NnError::Format(format!("history csv: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the number of consecutive non-improving epochs exceeds `patience`.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

/// Adaptive-moment optimizer state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub class_weights: (f64, f64),
}

fn map_indices<T: Send>(
    indices: &[usize],
    single_thread: bool,
    f: impl Fn(usize) -> Result<T, NnError> + Sync + Send,
) -> Result<Vec<T>, NnError> {
    if single_thread {
        indices.iter().map(|&i| f(i)).collect()
    } else {
        indices.par_iter().map(|&i| f(i)).collect()
    }
}

pub fn predict_all(params: &ModelParams, data: &dyn Examples, single_thread: bool) -> Result<Vec<Prediction>, NnError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    map_indices(&idx, single_thread, |i| Ok(forward(params, &data.input(i))?.prediction))
}

/// Embeddings and alert probabilities in one pass.
pub fn embed_all(
    params: &ModelParams,
    data: &dyn Examples,
    single_thread: bool,
) -> Result<Vec<(Vec<f64>, Prediction)>, NnError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    map_indices(&idx, single_thread, |i| {
        let c = forward(params, &data.input(i))?;
        Ok((c.embedding().to_vec(), c.prediction))
    })
}

/// Mean weighted loss, TPR and TNR at the nominal 0.5 rule.
pub fn evaluate(
    params: &ModelParams,
    data: &dyn Examples,
    weights: (f64, f64),
    single_thread: bool,
) -> Result<(f64, f64, f64), NnError> {
    let preds = predict_all(params, data, single_thread)?;
    let (mut tp, mut fnn, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    let mut total = 0.0;
    for (i, p) in preds.iter().enumerate() {
        let y = data.label(i);
        total += loss(p, y, weights);
        match (y == 1, is_alert(p)) {
            (true, true) => tp += 1,
            (true, false) => fnn += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let rate = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    Ok((total / preds.len().max(1) as f64, rate(tp, fnn), rate(tn, fp)))
}

/// Mini-batch Adam with per-epoch shuffling, early stopping on validation loss and
/// best-epoch parameter restore. `on_epoch` sees each record as it is produced.
pub fn train(
    spec: &ModelSpec,
    train_set: &dyn Examples,
    val_set: &dyn Examples,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::Config("training and validation sets must be non-empty".into()));
    }
    let weights = match config.class_weights {
        Some(w) => w,
        None => balanced_class_weights((0..train_set.len()).map(|i| train_set.label(i)))?,
    };
    let mut params = ModelParams::init(spec, config.seed)?;
    let mut best = params.clone();
    let mut adam = Adam::new(params.len(), config);
    let mut rng = crate::surface_sim::stream_rng(config.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let per_sample = map_indices(batch, config.single_thread, |i| {
                sample_gradient(&params, &train_set.input(i), train_set.label(i), weights, scale)
            })?;
            let mut grad = vec![0.0; params.len()];
            for (l, g) in &per_sample {
                loss_sum += l;
                for (t, v) in grad.iter_mut().zip(g) {
                    *t += v;
                }
            }
            if !loss_sum.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::Divergence { epoch });
            }
            adam.step(&mut params.values, &grad);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_tpr, val_tnr) = evaluate(&params, val_set, weights, config.single_thread)?;
        if !val_loss.is_finite() || params.values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Divergence { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_tpr,
            val_tnr,
        };
        on_epoch(&record);
        history.push(record);
        match stopper.update(epoch, val_loss) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        class_weights: weights,
    })
}

const SHUFFLE_STREAM: u64 = 17;
