//! Probe models trained on top of an embedding provider, plus evaluation,
//! held-out sweeps and checkpoints.

mod check;
mod data;
mod model;

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{gradcheck_family, ModelFamily};
pub use data::ProbeData;
pub use model::{HeadKind, ProbeModel, ProbeSpec};

use crate::embed::{validate_coverage, EmbedError, Provider};
use crate::neural::{Adam, AdamConfig, Mat, NeuralError};
use crate::numeral::NumberToken;
use crate::seed::{self, stream};
use crate::taskgen::{IntRange, Task};

const EVAL_BATCH: usize = 1024;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("embedding does not cover {} token(s), first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    Coverage(Vec<String>),
    #[error("invalid probe: {0}")]
    InvalidSpec(String),
    #[error("dataset is empty")]
    EmptyData,
    #[error("probe for {probe} given {data} data")]
    TaskMismatch { probe: Task, data: Task },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    /// Lower bound on optimizer steps per epoch, so tiny datasets still train.
    pub min_batches_per_epoch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 32,
            patience: 5,
            val_fraction: 0.1,
            min_batches_per_epoch: 50,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub model: ProbeModel,
    pub summary: TrainSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Accuracy of picking the maximum among five.
    Accuracy5,
    Rmse,
}

impl Metric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::ListMax => Metric::Accuracy5,
            Task::Decode | Task::Add => Metric::Rmse,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy5 => "accuracy5",
            Metric::Rmse => "rmse",
        }
    }

    /// Scores probe outputs against `data`: one row of logits per list
    /// (first maximum wins), or one prediction per example in column 0.
    pub fn score(self, outputs: &Mat, data: &ProbeData) -> f64 {
        assert_eq!(outputs.nrows(), data.len(), "one output row per example");
        match self {
            Metric::Accuracy5 => {
                let hits = outputs
                    .rows()
                    .into_iter()
                    .enumerate()
                    .filter(|(i, row)| {
                        let mut best = 0;
                        for j in 1..row.len() {
                            if row[j] > row[best] {
                                best = j;
                            }
                        }
                        best == data.label(*i)
                    })
                    .count();
                hits as f64 / data.len() as f64
            }
            Metric::Rmse => {
                let se: f64 = outputs
                    .column(0)
                    .iter()
                    .zip(data.targets())
                    .map(|(p, t)| (p - t).powi(2))
                    .sum();
                (se / data.len() as f64).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

fn char_seqs(provider: &Provider, data: &ProbeData) -> Result<Vec<Vec<usize>>, ProbeError> {
    match provider {
        Provider::Char(c) => Ok(data
            .tokens()
            .iter()
            .map(|t| c.chars(t.surface()))
            .collect::<Result<_, _>>()?),
        _ => Ok(Vec::new()),
    }
}

/// Current embedding of every data token under `model`.
fn token_table(model: &ProbeModel, provider: &Provider, tokens: &[NumberToken]) -> Result<Mat, ProbeError> {
    match model.encoder() {
        Some(enc) => {
            let seqs = tokens
                .iter()
                .map(|t| enc.chars(t.surface()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(enc.encode_seqs(&seqs))
        }
        None => Ok(provider.embed_all(tokens)?),
    }
}

fn check_data(spec: &ProbeSpec, provider: &Provider, data: &ProbeData) -> Result<(), ProbeError> {
    if data.task() != spec.task {
        return Err(ProbeError::TaskMismatch {
            probe: spec.task,
            data: data.task(),
        });
    }
    if data.is_empty() {
        return Err(ProbeError::EmptyData);
    }
    validate_coverage(provider, data.tokens()).map_err(ProbeError::Coverage)
}

fn mean_loss(model: &mut ProbeModel, data: &ProbeData, idx: &[usize], table: &Mat) -> f64 {
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let emb = model.embed_frozen(data, chunk, table);
        total += model.batch_loss(data, chunk, emb, false) * chunk.len() as f64;
    }
    total / idx.len() as f64
}

/// Trains a probe with Adam and early stopping on a held-out slice of
/// `train`. A trainable provider is cloned and trained jointly; the
/// provider itself is never modified. The best-validation parameters are
/// restored before returning.
pub fn train_probe(
    spec: &ProbeSpec,
    provider: &Provider,
    train: &ProbeData,
    cfg: &TrainConfig,
) -> Result<TrainedProbe, ProbeError> {
    spec.validate()?;
    check_data(spec, provider, train)?;
    if cfg.batch_size == 0 {
        return Err(ProbeError::InvalidSpec("batch size must be positive".into()));
    }
    let encoder = match provider {
        Provider::Char(c) if c.is_trainable() => Some(c.clone()),
        _ => None,
    };
    let trainable = encoder.is_some();
    let mut init_rng = seed::rng(seed::derive(cfg.seed, &[stream::PROBE_INIT]));
    let mut model = ProbeModel::new(spec.clone(), provider.dim(), encoder, &mut init_rng)?;

    let mut order_rng = seed::rng(seed::derive(cfg.seed, &[stream::TRAIN_ORDER]));
    let mut all: Vec<usize> = (0..train.len()).collect();
    all.shuffle(&mut order_rng);
    let n_val = if train.len() >= 2 {
        ((cfg.val_fraction.clamp(0.0, 0.5) * train.len() as f64).round() as usize).min(train.len() - 1)
    } else {
        0
    };
    let val_idx = all[..n_val].to_vec();
    let mut fit_idx = all[n_val..].to_vec();

    if !spec.is_classifier() {
        let ts: Vec<f64> = fit_idx.iter().map(|&i| train.target(i)).collect();
        let mean = ts.iter().sum::<f64>() / ts.len() as f64;
        let var = ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / ts.len() as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        model.set_target_transform(mean, scale);
    }

    let frozen = if trainable { None } else { Some(provider.embed_all(train.tokens())?) };
    let seqs = if trainable { char_seqs(provider, train)? } else { Vec::new() };

    let mut head_opt = Adam::new(cfg.adam, model.store());
    let mut enc_opt = model.encoder().map(|e| Adam::new(cfg.adam, e.store()));

    let batches = fit_idx.len().div_ceil(cfg.batch_size).max(cfg.min_batches_per_epoch).max(1);
    let mut best: Option<(f64, ProbeModel, usize)> = None;
    let mut bad_epochs = 0;
    let mut steps = 0;
    let mut cursor = fit_idx.len();
    let mut epochs = 0;
    let mut final_train_loss = f64::NAN;

    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        let mut epoch_loss = 0.0;
        for _ in 0..batches {
            if cursor + cfg.batch_size > fit_idx.len() && cursor > 0 {
                fit_idx.shuffle(&mut order_rng);
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(fit_idx.len());
            let batch = &fit_idx[cursor..end];
            cursor = end;
            let emb = match &frozen {
                Some(t) => model.embed_frozen(train, batch, t),
                None => model.embed_trainable(train, batch, &seqs),
            };
            let loss = model.batch_loss(train, batch, emb, true);
            if !loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss { loss, epoch, step: steps }.into());
            }
            head_opt.step(model.store_mut());
            if let (Some(opt), Some(enc)) = (enc_opt.as_mut(), model.encoder_mut()) {
                opt.step(enc.store_mut());
            }
            epoch_loss += loss;
            steps += 1;
        }
        final_train_loss = epoch_loss / batches as f64;

        let score = if val_idx.is_empty() {
            final_train_loss
        } else {
            let table = match &frozen {
                Some(t) => t.clone(),
                None => token_table(&model, provider, train.tokens())?,
            };
            mean_loss(&mut model, train, &val_idx, &table)
        };
        if !score.is_finite() {
            return Err(NeuralError::NonFiniteLoss {
                loss: score,
                epoch,
                step: steps,
            }
            .into());
        }
        match &best {
            Some((b, _, _)) if score >= *b => {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((score, model.clone(), epoch));
                bad_epochs = 0;
            }
        }
    }
    let (best_val_loss, model, best_epoch) = match best {
        Some(b) => b,
        None => (f64::NAN, model, 0),
    };
    Ok(TrainedProbe {
        model,
        summary: TrainSummary {
            epochs,
            steps,
            best_epoch,
            best_val_loss,
            final_train_loss,
        },
    })
}

/// Outputs for every example, in order.
pub fn predict(model: &ProbeModel, provider: &Provider, data: &ProbeData) -> Result<Mat, ProbeError> {
    let table = token_table(model, provider, data.tokens())?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts: Vec<Mat> = idx.chunks(EVAL_BATCH).map(|c| model.outputs(data, c, &table)).collect();
    let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
    Ok(ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"))
}

/// Accuracy for list-max, RMSE for regression tasks.
pub fn evaluate(model: &ProbeModel, provider: &Provider, test: &ProbeData) -> Result<MetricResult, ProbeError> {
    check_data(model.spec(), provider, test)?;
    let out = predict(model, provider, test)?;
    let metric = Metric::for_task(test.task());
    let value = metric.score(&out, test);
    Ok(MetricResult {
        metric,
        value,
        n: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub prediction: f64,
    pub in_train_range: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Surfaces the provider could not embed.
    pub skipped: Vec<String>,
}

/// Predictions of a regression probe for each token. Addition probes are
/// queried with the pair `(v, v)` and predict `2v`. Tokens the provider
/// cannot embed are reported in `skipped` instead of failing the sweep.
pub fn predict_sweep(
    model: &ProbeModel,
    provider: &Provider,
    tokens: &[NumberToken],
    train_range: IntRange,
) -> Result<SweepOutput, ProbeError> {
    let task = model.spec().task;
    if task == Task::ListMax {
        return Err(ProbeError::InvalidSpec("sweeps need a decode or add probe".into()));
    }
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for t in tokens {
        if validate_coverage(provider, [t]).is_ok() {
            kept.push(t.clone());
        } else {
            skipped.push(t.surface().to_string());
        }
    }
    if kept.is_empty() {
        return Ok(SweepOutput { rows: Vec::new(), skipped });
    }
    let data = match task {
        Task::Decode => ProbeData::decode(
            &kept
                .iter()
                .map(|t| crate::taskgen::DecodeInstance {
                    token: t.clone(),
                    target: t.value(),
                })
                .collect::<Vec<_>>(),
        ),
        _ => ProbeData::add(
            &kept
                .iter()
                .map(|t| crate::taskgen::AddInstance {
                    token_a: t.clone(),
                    token_b: t.clone(),
                    target: 2.0 * t.value(),
                })
                .collect::<Vec<_>>(),
        ),
    };
    let out = predict(model, provider, &data)?;
    let rows = kept
        .iter()
        .zip(out.column(0))
        .map(|(t, &p)| SweepRow {
            value: t.value(),
            prediction: p,
            in_train_range: (train_range.lo() as f64..=train_range.hi() as f64).contains(&t.value()),
        })
        .collect();
    Ok(SweepOutput { rows, skipped })
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["value", "prediction", "in_train_range"])?;
    for r in rows {
        out.write_record([r.value.to_string(), r.prediction.to_string(), r.in_train_range.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ProbeSpec,
    input_dim: usize,
    target_shift: f64,
    target_scale: f64,
    encoder: bool,
}

const CHECKPOINT_TAG: &str = "numprobe-checkpoint";

/// Writes a text checkpoint: a JSON header line, then head and encoder
/// parameters.
pub fn save_checkpoint<W: Write>(model: &ProbeModel, mut w: W) -> Result<(), ProbeError> {
    let (target_shift, target_scale) = model.target_transform();
    let header = CheckpointHeader {
        spec: model.spec().clone(),
        input_dim: model.input_dim(),
        target_shift,
        target_scale,
        encoder: model.encoder().is_some(),
    };
    let json = serde_json::to_string(&header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    writeln!(w, "{CHECKPOINT_TAG} {json}").map_err(NeuralError::from)?;
    model.store().write_text("head.", &mut w).map_err(NeuralError::from)?;
    if let Some(enc) = model.encoder() {
        enc.store().write_text("encoder.", &mut w).map_err(NeuralError::from)?;
    }
    Ok(())
}

/// Restores a checkpoint. `provider` must be the one the probe was
/// trained against; a trainable encoder's weights come from the file.
pub fn load_checkpoint<R: BufRead>(mut r: R, provider: &Provider) -> Result<ProbeModel, ProbeError> {
    let bad = |m: String| ProbeError::Neural(NeuralError::Checkpoint(m));
    let mut first = String::new();
    r.read_line(&mut first).map_err(NeuralError::from)?;
    let json = first
        .trim_end()
        .strip_prefix(CHECKPOINT_TAG)
        .ok_or_else(|| bad("missing checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_str(json.trim()).map_err(|e| bad(e.to_string()))?;
    if header.input_dim != provider.dim() {
        return Err(EmbedError::DimMismatch {
            expected: header.input_dim,
            found: provider.dim(),
        }
        .into());
    }
    let encoder = match (header.encoder, provider) {
        (false, _) => None,
        (true, Provider::Char(c)) => Some(c.clone()),
        (true, _) => return Err(bad("checkpoint holds encoder weights but provider has no encoder".into())),
    };
    let mut model = ProbeModel::new(header.spec, header.input_dim, encoder, &mut seed::rng(0))?;
    model.set_target_transform(header.target_shift, header.target_scale);
    let mut body = String::new();
    r.read_to_string(&mut body).map_err(NeuralError::from)?;
    model.store_mut().read_text("head.", body.as_bytes())?;
    if let Some(enc) = model.encoder_mut() {
        enc.store_mut().read_text("encoder.", body.as_bytes())?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{random_table, CharCnnConfig, CharEncoder, ValueEmbedConfig, ValueEmbedding};
    use crate::numeral::NumberFormat;
    use crate::taskgen::{gen_decode, gen_listmax, Pool, Spread};

    fn value_provider() -> Provider {
        Provider::Value(ValueEmbedding::new(ValueEmbedConfig::default()))
    }

    fn decode_data(lo: i64, hi: i64) -> ProbeData {
        ProbeData::decode(&gen_decode(&Pool::new(lo..=hi), NumberFormat::Digits).unwrap())
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            min_batches_per_epoch: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn value_embedding_decodes_within_range() {
        let spec = ProbeSpec::for_task(Task::Decode);
        let data = decode_data(0, 99);
        let trained = train_probe(&spec, &value_provider(), &data, &quick()).unwrap();
        let m = evaluate(&trained.model, &value_provider(), &data).unwrap();
        assert_eq!(m.metric, Metric::Rmse);
        assert!(m.value < 10.0, "rmse {}", m.value);
    }

    #[test]
    fn value_embedding_learns_list_max() {
        let pool = Pool::new(0..100);
        let lists = gen_listmax(&pool, 4000, Spread::for_range(100), NumberFormat::Digits, 3).unwrap();
        let data = ProbeData::list_max(&lists);
        let spec = ProbeSpec {
            lstm_hidden: 32,
            ..ProbeSpec::for_task(Task::ListMax)
        };
        let trained = train_probe(&spec, &value_provider(), &data, &quick()).unwrap();
        let m = evaluate(&trained.model, &value_provider(), &data).unwrap();
        assert!(m.value > 0.6, "accuracy {}", m.value);
    }

    #[test]
    fn frozen_provider_is_untouched_and_trainable_copy_moves() {
        let data = decode_data(0, 30);
        let cfg = TrainConfig {
            max_epochs: 2,
            min_batches_per_epoch: 3,
            ..TrainConfig::default()
        };
        let small = CharCnnConfig {
            char_dim: 4,
            widths: vec![1, 2],
            filters: 3,
        };
        let spec = ProbeSpec::for_task(Task::Decode);
        for trainable in [false, true] {
            let provider = Provider::Char(CharEncoder::cnn(small.clone(), trainable, 5));
            let before = provider.embed_all(data.tokens()).unwrap();
            let trained = train_probe(&spec, &provider, &data, &cfg).unwrap();
            assert_eq!(provider.embed_all(data.tokens()).unwrap(), before);
            match trained.model.encoder() {
                Some(enc) => {
                    assert!(trainable);
                    let seqs: Vec<_> = data.tokens().iter().map(|t| enc.chars(t.surface()).unwrap()).collect();
                    assert_ne!(enc.encode_seqs(&seqs), before);
                }
                None => assert!(!trainable),
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = decode_data(0, 40);
        let spec = ProbeSpec::for_task(Task::Decode).with_head(HeadKind::Linear);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let a = train_probe(&spec, &value_provider(), &data, &cfg).unwrap();
        let b = train_probe(&spec, &value_provider(), &data, &cfg).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(
            evaluate(&a.model, &value_provider(), &data).unwrap(),
            evaluate(&b.model, &value_provider(), &data).unwrap()
        );
    }

    #[test]
    fn missing_tokens_are_reported() {
        let data = decode_data(0, 9);
        let table = random_table(["1", "2"], 3, 0).unwrap();
        let err = train_probe(
            &ProbeSpec::for_task(Task::Decode),
            &Provider::Table(table),
            &data,
            &quick(),
        )
        .unwrap_err();
        match err {
            ProbeError::Coverage(missing) => assert_eq!(missing.len(), 8),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mismatched_heads_and_tasks_are_rejected() {
        let data = decode_data(0, 9);
        assert!(ProbeSpec::for_task(Task::ListMax).with_head(HeadKind::Mlp3).validate().is_err());
        assert!(ProbeSpec::for_task(Task::Add).with_head(HeadKind::Lstm).validate().is_err());
        let err = train_probe(&ProbeSpec::for_task(Task::Add), &value_provider(), &data, &quick()).unwrap_err();
        assert!(matches!(err, ProbeError::TaskMismatch { .. }));
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let data = decode_data(0, 30);
        let cfg = TrainConfig {
            max_epochs: 2,
            min_batches_per_epoch: 2,
            ..TrainConfig::default()
        };
        let provider = Provider::Char(CharEncoder::cnn(
            CharCnnConfig {
                char_dim: 4,
                widths: vec![1, 2],
                filters: 3,
            },
            true,
            1,
        ));
        let trained = train_probe(&ProbeSpec::for_task(Task::Decode), &provider, &data, &cfg).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&trained.model, &mut buf).unwrap();
        let loaded = load_checkpoint(buf.as_slice(), &provider).unwrap();
        assert_eq!(
            evaluate(&trained.model, &provider, &data).unwrap(),
            evaluate(&loaded, &provider, &data).unwrap()
        );
        let mut bad = buf.clone();
        bad.truncate(buf.len() / 2);
        assert!(load_checkpoint(bad.as_slice(), &provider).is_err());
    }

    #[test]
    fn sweep_tags_train_range_and_skips_unknown_tokens() {
        let data = decode_data(0, 20);
        let table = random_table(data.tokens().iter().map(|t| t.surface()), 4, 2).unwrap();
        let provider = Provider::Table(table);
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let trained = train_probe(&ProbeSpec::for_task(Task::Decode), &provider, &data, &cfg).unwrap();
        let tokens: Vec<_> = (0..=30).map(|v| NumberToken::new(v, NumberFormat::Digits).unwrap()).collect();
        let out = predict_sweep(&trained.model, &provider, &tokens, IntRange::new(0, 10).unwrap()).unwrap();
        assert_eq!(out.rows.len(), 21);
        assert_eq!(out.skipped.len(), 10);
        assert_eq!(out.rows.iter().filter(|r| r.in_train_range).count(), 11);
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &out.rows).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("value,prediction,in_train_range\n"));
        assert_eq!(text.lines().count(), 22);
    }
}
