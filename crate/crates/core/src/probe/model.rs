use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::data::ProbeData;
use super::ProbeError;
use crate::embed::{CharCache, CharEncoder};
use crate::neural::{mse, relu, relu_backward, softmax_nll, Dense, Lstm, LstmCache, Mat, ParamStore};
use crate::seed::Rng;
use crate::taskgen::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Recurrent reader over the list with one logit per position.
    Lstm,
    Linear,
    /// Two hidden ReLU layers.
    Mlp3,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Lstm => "lstm",
            HeadKind::Linear => "linear",
            HeadKind::Mlp3 => "mlp3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub task: Task,
    pub head: HeadKind,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub bidirectional: bool,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec::for_task(Task::ListMax)
    }
}

impl ProbeSpec {
    /// Standard head for each task.
    pub fn for_task(task: Task) -> Self {
        ProbeSpec {
            task,
            head: match task {
                Task::ListMax => HeadKind::Lstm,
                Task::Decode | Task::Add => HeadKind::Mlp3,
            },
            lstm_hidden: 100,
            mlp_hidden: 100,
            bidirectional: false,
        }
    }

    pub fn with_head(mut self, head: HeadKind) -> Self {
        self.head = head;
        self
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let ok = match self.task {
            Task::ListMax => self.head == HeadKind::Lstm,
            Task::Decode | Task::Add => self.head != HeadKind::Lstm,
        };
        if !ok {
            return Err(ProbeError::InvalidSpec(format!(
                "{} head cannot be used for {}",
                self.head.name(),
                self.task
            )));
        }
        if self.lstm_hidden == 0 || self.mlp_hidden == 0 {
            return Err(ProbeError::InvalidSpec("hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn is_classifier(&self) -> bool {
        self.task == Task::ListMax
    }
}

#[derive(Debug, Clone)]
struct Classifier {
    fwd: Lstm,
    bwd: Option<Lstm>,
    proj: Dense,
}

#[derive(Debug, Clone)]
struct Mlp {
    l1: Dense,
    l2: Dense,
    l3: Dense,
}

#[derive(Debug, Clone)]
enum Head {
    Classifier(Classifier),
    Linear(Dense),
    Mlp(Mlp),
}

enum HeadCache {
    Classifier {
        fwd: LstmCache,
        bwd: Option<LstmCache>,
        feats: Mat,
    },
    Linear {
        x: Mat,
    },
    Mlp {
        x: Mat,
        pre1: Mat,
        h1: Mat,
        pre2: Mat,
        h2: Mat,
    },
}

/// Embedded inputs of one batch plus what the encoder needs to backpropagate.
pub(crate) struct Embedded {
    slots: Vec<Mat>,
    encoder: Option<EncoderBatch>,
}

struct EncoderBatch {
    cache: CharCache,
    // Batch-local row of each (example, slot).
    rows: Vec<usize>,
    unique: usize,
}

/// A probe head plus, for trainable encoders, the encoder copy trained with it.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    spec: ProbeSpec,
    input_dim: usize,
    head: Head,
    store: ParamStore,
    encoder: Option<CharEncoder>,
    target_shift: f64,
    target_scale: f64,
}

impl ProbeModel {
    pub fn new(spec: ProbeSpec, input_dim: usize, encoder: Option<CharEncoder>, rng: &mut Rng) -> Result<Self, ProbeError> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let arity = super::data::arity(spec.task);
        let head = match spec.head {
            HeadKind::Lstm => {
                let h = spec.lstm_hidden;
                let fwd = Lstm::new(&mut store, "lstm.fwd", input_dim, h, rng);
                let bwd = spec
                    .bidirectional
                    .then(|| Lstm::new(&mut store, "lstm.bwd", input_dim, h, rng));
                let width = if spec.bidirectional { 2 * h } else { h };
                let proj = Dense::new(&mut store, "proj", width, 1, rng);
                Head::Classifier(Classifier { fwd, bwd, proj })
            }
            HeadKind::Linear => Head::Linear(Dense::new(&mut store, "linear", arity * input_dim, 1, rng)),
            HeadKind::Mlp3 => {
                let h = spec.mlp_hidden;
                Head::Mlp(Mlp {
                    l1: Dense::new(&mut store, "mlp.l1", arity * input_dim, h, rng),
                    l2: Dense::new(&mut store, "mlp.l2", h, h, rng),
                    l3: Dense::new(&mut store, "mlp.l3", h, 1, rng),
                })
            }
        };
        Ok(ProbeModel {
            spec,
            input_dim,
            head,
            store,
            encoder,
            target_shift: 0.0,
            target_scale: 1.0,
        })
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// The jointly trained encoder, if the provider was trainable.
    pub fn encoder(&self) -> Option<&CharEncoder> {
        self.encoder.as_ref()
    }

    pub(crate) fn encoder_mut(&mut self) -> Option<&mut CharEncoder> {
        self.encoder.as_mut()
    }

    /// Regression targets are standardized internally; predictions are
    /// mapped back with `shift + scale * output`.
    pub fn target_transform(&self) -> (f64, f64) {
        (self.target_shift, self.target_scale)
    }

    pub(crate) fn set_target_transform(&mut self, shift: f64, scale: f64) {
        self.target_shift = shift;
        self.target_scale = scale;
    }

    /// Gathers frozen embedding rows (`table` has one row per data token).
    pub(crate) fn embed_frozen(&self, data: &ProbeData, batch: &[usize], table: &Mat) -> Embedded {
        let arity = data.arity();
        let slots = (0..arity)
            .map(|j| {
                let mut m = Array2::zeros((batch.len(), table.ncols()));
                for (r, &i) in batch.iter().enumerate() {
                    m.row_mut(r).assign(&table.row(data.example(i)[j]));
                }
                m
            })
            .collect();
        Embedded { slots, encoder: None }
    }

    /// Runs the owned encoder over the distinct tokens of the batch.
    /// `seqs` holds the character ids of every data token.
    pub(crate) fn embed_trainable(&self, data: &ProbeData, batch: &[usize], seqs: &[Vec<usize>]) -> Embedded {
        let enc = self.encoder.as_ref().expect("trainable path needs an encoder");
        let arity = data.arity();
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut uniq_seqs = Vec::new();
        let mut rows = Vec::with_capacity(batch.len() * arity);
        for &i in batch {
            for &t in data.example(i) {
                let next = local.len();
                let r = *local.entry(t).or_insert_with(|| {
                    uniq_seqs.push(seqs[t].clone());
                    next
                });
                rows.push(r);
            }
        }
        let (enc_out, cache) = enc.forward(&uniq_seqs);
        let slots = (0..arity)
            .map(|j| {
                let mut m = Array2::zeros((batch.len(), enc_out.ncols()));
                for r in 0..batch.len() {
                    m.row_mut(r).assign(&enc_out.row(rows[r * arity + j]));
                }
                m
            })
            .collect();
        Embedded {
            slots,
            encoder: Some(EncoderBatch {
                cache,
                rows,
                unique: uniq_seqs.len(),
            }),
        }
    }

    fn head_forward(&self, xs: &[Mat]) -> (Mat, HeadCache) {
        let st = &self.store;
        match &self.head {
            Head::Classifier(c) => {
                let n = xs[0].nrows();
                let steps = xs.len();
                let fwd = c.fwd.forward(st, xs);
                let bwd = c.bwd.as_ref().map(|l| {
                    let rev: Vec<Mat> = xs.iter().rev().cloned().collect();
                    l.forward(st, &rev)
                });
                let rows: Vec<Mat> = (0..steps)
                    .map(|t| match &bwd {
                        Some(b) => concatenate![Axis(1), *fwd.output(t), *b.output(steps - 1 - t)],
                        None => fwd.output(t).clone(),
                    })
                    .collect();
                let views: Vec<_> = rows.iter().map(|m| m.view()).collect();
                let feats = concatenate(Axis(0), &views).expect("uniform widths");
                let col = c.proj.forward(st, &feats);
                let mut logits = Array2::zeros((n, steps));
                for t in 0..steps {
                    for b in 0..n {
                        logits[[b, t]] = col[[t * n + b, 0]];
                    }
                }
                (logits, HeadCache::Classifier { fwd, bwd, feats })
            }
            Head::Linear(d) => {
                let x = concat_slots(xs);
                (d.forward(st, &x), HeadCache::Linear { x })
            }
            Head::Mlp(m) => {
                let x = concat_slots(xs);
                let pre1 = m.l1.forward(st, &x);
                let h1 = relu(&pre1);
                let pre2 = m.l2.forward(st, &h1);
                let h2 = relu(&pre2);
                let out = m.l3.forward(st, &h2);
                (out, HeadCache::Mlp { x, pre1, h1, pre2, h2 })
            }
        }
    }

    /// Returns the gradient for each input slot.
    fn head_backward(&mut self, cache: &HeadCache, d_out: &Mat, arity: usize) -> Vec<Mat> {
        let st = &mut self.store;
        match (&self.head, cache) {
            (Head::Classifier(c), HeadCache::Classifier { fwd, bwd, feats }) => {
                let (n, steps) = d_out.dim();
                let mut dcol = Array2::zeros((n * steps, 1));
                for t in 0..steps {
                    for b in 0..n {
                        dcol[[t * n + b, 0]] = d_out[[b, t]];
                    }
                }
                let dfeat = c.proj.backward(st, feats, &dcol);
                let h = c.fwd.hidden();
                let dh_f: Vec<Mat> = (0..steps)
                    .map(|t| dfeat.slice(s![t * n..(t + 1) * n, 0..h]).to_owned())
                    .collect();
                let mut dxs = c.fwd.backward(st, fwd, &dh_f);
                if let (Some(l), Some(bc)) = (&c.bwd, bwd) {
                    let dh_b: Vec<Mat> = (0..steps)
                        .map(|k| {
                            let t = steps - 1 - k;
                            dfeat.slice(s![t * n..(t + 1) * n, h..2 * h]).to_owned()
                        })
                        .collect();
                    let dxs_b = l.backward(st, bc, &dh_b);
                    for (k, d) in dxs_b.into_iter().enumerate() {
                        dxs[steps - 1 - k] += &d;
                    }
                }
                dxs
            }
            (Head::Linear(d), HeadCache::Linear { x }) => split_slots(&d.backward(st, x, d_out), arity),
            (Head::Mlp(m), HeadCache::Mlp { x, pre1, h1, pre2, h2 }) => {
                let dh2 = m.l3.backward(st, h2, d_out);
                let dh1 = m.l2.backward(st, h1, &relu_backward(pre2, &dh2));
                let dx = m.l1.backward(st, x, &relu_backward(pre1, &dh1));
                split_slots(&dx, arity)
            }
            _ => unreachable!("cache built by head_forward"),
        }
    }

    /// Mean loss over `batch`; accumulates gradients into the head and the
    /// owned encoder when `grad` is set.
    pub(crate) fn batch_loss(&mut self, data: &ProbeData, batch: &[usize], emb: Embedded, grad: bool) -> f64 {
        let (out, cache) = self.head_forward(&emb.slots);
        let (loss, d_out) = if self.spec.is_classifier() {
            let labels: Vec<usize> = batch.iter().map(|&i| data.label(i)).collect();
            softmax_nll(&out, &labels)
        } else {
            let targets: Vec<f64> = batch
                .iter()
                .map(|&i| (data.target(i) - self.target_shift) / self.target_scale)
                .collect();
            mse(&out, &targets)
        };
        if !grad {
            return loss;
        }
        let arity = data.arity();
        let d_slots = self.head_backward(&cache, &d_out, arity);
        if let Some(eb) = emb.encoder {
            let enc = self.encoder.as_mut().expect("encoder batch implies encoder");
            let mut d_enc = Array2::zeros((eb.unique, enc.dim()));
            for (j, d) in d_slots.iter().enumerate() {
                for r in 0..batch.len() {
                    let mut row = d_enc.row_mut(eb.rows[r * arity + j]);
                    row += &d.row(r);
                }
            }
            enc.backward(&eb.cache, &d_enc);
        }
        loss
    }

    /// Raw head outputs for `batch` from a frozen table: logits for list-max,
    /// de-standardized predictions otherwise.
    pub(crate) fn outputs(&self, data: &ProbeData, batch: &[usize], table: &Mat) -> Mat {
        let emb = self.embed_frozen(data, batch, table);
        let (out, _) = self.head_forward(&emb.slots);
        if self.spec.is_classifier() {
            out
        } else {
            out.mapv(|v| self.target_shift + self.target_scale * v)
        }
    }

    /// Pre-activations of the MLP hidden layers closest to the ReLU kink.
    pub(crate) fn relu_margin(&self, emb: &Embedded) -> f64 {
        match self.head_forward(&emb.slots).1 {
            HeadCache::Mlp { pre1, pre2, .. } => pre1
                .iter()
                .chain(pre2.iter())
                .fold(f64::INFINITY, |m, v| m.min(v.abs())),
            _ => f64::INFINITY,
        }
    }
}

fn concat_slots(xs: &[Mat]) -> Mat {
    if xs.len() == 1 {
        return xs[0].clone();
    }
    let views: Vec<_> = xs.iter().map(|m| m.view()).collect();
    concatenate(Axis(1), &views).expect("equal row counts")
}

fn split_slots(dx: &Mat, arity: usize) -> Vec<Mat> {
    let d = dx.ncols() / arity;
    (0..arity)
        .map(|j| dx.slice(s![.., j * d..(j + 1) * d]).to_owned())
        .collect()
}
