//! Experiment runner: builds datasets for each shuffle, trains and scores
//! probes, and writes reports.

mod config;
mod report;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use config::{probe_name, DataConfig, EmbeddingSpec, ExperimentConfig, Manifest, Mode};
pub use report::{
    aggregate, read_report, write_aggregate_json, write_report, write_reports, write_table_csv, AggregateRow,
    Provenance, RunRecord,
};

use crate::embed::{
    load_table_filtered, random_table, CharEncoder, EmbedError, EmbeddingTable, Provider, ValueEmbedConfig,
    ValueEmbedding,
};
use crate::numeral::{NumberFormat, NumberToken};
use crate::probe::{evaluate, predict_sweep, train_probe, MetricResult, SweepOutput, ProbeData, ProbeError, TrainConfig, TrainSummary};
use crate::seed::{self, stream};
use crate::taskgen::{
    gen_add, gen_decode, gen_listmax, gen_listmax_float, make_split, write_dump, AddInstance, DecodeInstance,
    ExtrapolationSpec, IntRange, ListMaxInstance, Pool, Spread, Task, TaskError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("io: {0}")]
    Io(String),
}

impl RunError {
    /// 2 for usage and configuration problems, 1 for failed experiments.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub enum Instances {
    ListMax(Vec<ListMaxInstance>),
    Decode(Vec<DecodeInstance>),
    Add(Vec<AddInstance>),
}

impl Instances {
    pub fn len(&self) -> usize {
        match self {
            Instances::ListMax(v) => v.len(),
            Instances::Decode(v) => v.len(),
            Instances::Add(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_probe_data(&self) -> ProbeData {
        match self {
            Instances::ListMax(v) => ProbeData::list_max(v),
            Instances::Decode(v) => ProbeData::decode(v),
            Instances::Add(v) => ProbeData::add(v),
        }
    }

    pub fn write_dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        match self {
            Instances::ListMax(v) => write_dump(w, v),
            Instances::Decode(v) => write_dump(w, v),
            Instances::Add(v) => write_dump(w, v),
        }
    }
}

/// Pools and instances for one shuffle of an experiment.
#[derive(Debug, Clone)]
pub struct Datasets {
    /// Seed of the 80/20 split; `None` when extrapolating.
    pub split_seed: Option<u64>,
    pub train_pool: Pool,
    pub test_pool: Pool,
    pub train: Instances,
    pub test: Instances,
}

fn range_parts(r: IntRange) -> [u64; 2] {
    [r.lo() as u64, r.hi() as u64]
}

fn task_code(t: Task) -> u64 {
    match t {
        Task::ListMax => 0,
        Task::Decode => 1,
        Task::Add => 2,
    }
}

fn format_code(f: NumberFormat) -> u64 {
    NumberFormat::ALL.iter().position(|&g| g == f).expect("listed") as u64
}

/// Split seed shared by every embedding and task for a range and shuffle.
pub fn split_seed(base: u64, range: IntRange, shuffle: u64) -> u64 {
    let [lo, hi] = range_parts(range);
    seed::derive(base, &[stream::SPLIT, lo, hi, shuffle])
}

fn instances(
    cfg: &ExperimentConfig,
    pool: &Pool,
    range: IntRange,
    n: usize,
    seed: u64,
) -> Result<Instances, TaskError> {
    let spread = Spread::with_variance_scale(range.size(), cfg.data.variance_scale);
    Ok(match cfg.task {
        Task::ListMax if cfg.format == NumberFormat::Float1 => {
            Instances::ListMax(gen_listmax_float(pool, n, spread, seed)?)
        }
        Task::ListMax => Instances::ListMax(gen_listmax(pool, n, spread, cfg.format, seed)?),
        Task::Decode => Instances::Decode(gen_decode(pool, cfg.format)?),
        Task::Add => Instances::Add(gen_add(
            pool,
            cfg.format,
            cfg.data.add_subsample.fraction_for(range.size()),
            seed,
        )?),
    })
}

pub fn datasets(cfg: &ExperimentConfig, shuffle: u64) -> Result<Datasets, RunError> {
    let (split_seed, train_pool, test_pool, train_range, test_range) = match cfg.mode {
        Mode::Interpolate { range } => {
            let s = split_seed(cfg.seed, range, shuffle);
            let split = make_split(range, s);
            split.ensure_usable()?;
            (Some(s), split.train, split.test, range, range)
        }
        Mode::Extrapolate { train_range, test_range } => {
            let spec = ExtrapolationSpec::new(train_range, test_range)?;
            (
                None,
                Pool::from_range(spec.train_range),
                Pool::from_range(spec.test_range),
                train_range,
                test_range,
            )
        }
    };
    let data_seed = |tag: u64, r: IntRange| {
        let [lo, hi] = range_parts(r);
        seed::derive(cfg.seed, &[tag, task_code(cfg.task), format_code(cfg.format), lo, hi, shuffle])
    };
    let train = instances(
        cfg,
        &train_pool,
        train_range,
        cfg.data.train_lists,
        data_seed(stream::TRAIN_DATA, train_range),
    )?;
    let test = instances(
        cfg,
        &test_pool,
        test_range,
        cfg.data.test_lists,
        data_seed(stream::TEST_DATA, test_range),
    )?;
    Ok(Datasets {
        split_seed,
        train_pool,
        test_pool,
        train,
        test,
    })
}

/// Vector files loaded once per path, restricted to the surfaces requested
/// so far.
#[derive(Debug, Default)]
pub struct TableCache {
    tables: HashMap<PathBuf, (HashSet<String>, EmbeddingTable)>,
}

impl TableCache {
    pub fn new() -> Self {
        TableCache::default()
    }

    pub fn get(&mut self, path: &Path, dim: Option<usize>, needed: &[String]) -> Result<&EmbeddingTable, EmbedError> {
        let stale = match self.tables.get(path) {
            Some((keep, _)) => needed.iter().any(|s| !keep.contains(s)),
            None => true,
        };
        if stale {
            let mut keep = self.tables.remove(path).map(|(k, _)| k).unwrap_or_default();
            keep.extend(needed.iter().cloned());
            let table = load_table_filtered(path, dim, Some(&keep))?;
            self.tables.insert(path.to_path_buf(), (keep, table));
        }
        Ok(&self.tables[path].1)
    }
}

pub fn build_provider(
    spec: &EmbeddingSpec,
    tokens: &[NumberToken],
    seed: u64,
    cache: &mut TableCache,
) -> Result<Provider, RunError> {
    let surfaces: Vec<String> = tokens.iter().map(|t| t.surface().to_string()).collect();
    Ok(match spec {
        EmbeddingSpec::Random { dim } => Provider::Table(random_table(surfaces.iter().map(String::as_str), *dim, seed)?),
        EmbeddingSpec::Value { log_scale } => Provider::Value(ValueEmbedding::new(ValueEmbedConfig {
            log_scale: *log_scale,
        })),
        EmbeddingSpec::VectorFile { path, dim } => Provider::Table(cache.get(path, *dim, &surfaces)?.clone()),
        EmbeddingSpec::CharCnn { trainable, config } => {
            Provider::Char(CharEncoder::cnn(config.clone(), *trainable, seed))
        }
        EmbeddingSpec::CharLstm { trainable, config } => Provider::Char(CharEncoder::lstm(*config, *trainable, seed)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShuffleResult {
    pub shuffle: u64,
    pub split_seed: Option<u64>,
    pub metric: MetricResult,
    pub epochs: usize,
    pub steps: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl ShuffleResult {
    fn new(shuffle: u64, split_seed: Option<u64>, metric: MetricResult, s: &TrainSummary) -> Self {
        ShuffleResult {
            shuffle,
            split_seed,
            metric,
            epochs: s.epochs,
            steps: s.steps,
            best_epoch: s.best_epoch,
            best_val_loss: s.best_val_loss,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<ShuffleResult>,
}

impl ExperimentResult {
    pub fn values(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.metric.value).collect()
    }

    pub fn mean(&self) -> f64 {
        let v = self.values();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Sample standard deviation; `None` for a single run.
    pub fn std(&self) -> Option<f64> {
        sample_std(&self.values())
    }

    pub fn records(&self) -> Vec<RunRecord> {
        let cfg = &self.config;
        let range = cfg.mode.report_range();
        self.runs
            .iter()
            .enumerate()
            .map(|(i, r)| RunRecord {
                task: cfg.task.name().to_string(),
                format: cfg.format.name().to_string(),
                range_lo: range.lo(),
                range_hi: range.hi(),
                mode: cfg.mode.name().to_string(),
                embedding: cfg.embedding_name.clone(),
                probe: probe_name(&cfg.probe),
                shuffle_index: i as u64 + 1,
                metric: r.metric.metric.name().to_string(),
                value: r.metric.value,
            })
            .collect()
    }
}

pub fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn token_union(a: &ProbeData, b: &ProbeData) -> Vec<NumberToken> {
    let mut seen = BTreeSet::new();
    a.tokens()
        .iter()
        .chain(b.tokens())
        .filter(|t| seen.insert(t.surface().to_string()))
        .cloned()
        .collect()
}

/// Runs every shuffle of one experiment. `log` receives one line per shuffle.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    cache: &mut TableCache,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentResult, RunError> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.shuffles.len());
    for &shuffle in &cfg.shuffles {
        let ds = datasets(cfg, shuffle)?;
        let train = ds.train.to_probe_data();
        let test = ds.test.to_probe_data();
        let provider = build_provider(
            &cfg.embedding,
            &token_union(&train, &test),
            seed::derive(cfg.seed, &[stream::EMBEDDING, shuffle]),
            cache,
        )?;
        let train_cfg = TrainConfig {
            seed: seed::derive(cfg.seed, &[stream::PROBE_INIT, shuffle]),
            ..cfg.train.clone()
        };
        let trained = train_probe(&cfg.probe, &provider, &train, &train_cfg)?;
        let metric = evaluate(&trained.model, &provider, &test)?;
        log(&format!(
            "{} shuffle {shuffle}: {} = {:.4} ({} epochs)",
            cfg.name,
            metric.metric.name(),
            metric.value,
            trained.summary.epochs
        ));
        runs.push(ShuffleResult::new(shuffle, ds.split_seed, metric, &trained.summary));
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub output: SweepOutput,
    pub summary: TrainSummary,
}

/// Trains a decode or add probe on the first shuffle of `cfg` (which must
/// interpolate) and predicts every value of `eval_range`.
pub fn run_sweep(cfg: &ExperimentConfig, eval_range: IntRange, cache: &mut TableCache) -> Result<SweepResult, RunError> {
    cfg.validate()?;
    if cfg.task == Task::ListMax {
        return Err(RunError::Config("sweeps need a decode or add task".into()));
    }
    let Mode::Interpolate { range } = cfg.mode else {
        return Err(RunError::Config("sweeps train on an interpolation split".into()));
    };
    let shuffle = cfg.shuffles[0];
    let train = datasets(cfg, shuffle)?.train.to_probe_data();
    let eval = eval_range
        .values()
        .map(|v| NumberToken::new(v, cfg.format))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let mut seen: HashSet<&str> = HashSet::new();
    let union: Vec<NumberToken> = train
        .tokens()
        .iter()
        .chain(&eval)
        .filter(|t| seen.insert(t.surface()))
        .cloned()
        .collect();
    let provider = build_provider(
        &cfg.embedding,
        &union,
        seed::derive(cfg.seed, &[stream::EMBEDDING, shuffle]),
        cache,
    )?;
    let train_cfg = TrainConfig {
        seed: seed::derive(cfg.seed, &[stream::PROBE_INIT, shuffle]),
        ..cfg.train.clone()
    };
    let trained = train_probe(&cfg.probe, &provider, &train, &train_cfg)?;
    let output = predict_sweep(&trained.model, &provider, &eval, range)?;
    Ok(SweepResult {
        output,
        summary: trained.summary,
    })
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<(String, RunError)>,
}

#[derive(Serialize)]
struct FailureRow<'a> {
    experiment: &'a str,
    error: String,
}

/// Runs all experiments, continuing past failures, and writes
/// `report.csv`, `aggregate.json`, `table.csv`, `experiments.json` and
/// `failures.csv` into `out_dir`.
pub fn run_suite(
    experiments: &[ExperimentConfig],
    out_dir: &Path,
    provenance: &Provenance,
    log: &mut dyn FnMut(&str),
) -> Result<SuiteOutcome, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let mut cache = TableCache::new();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for cfg in experiments {
        match run_experiment(cfg, &mut cache, log) {
            Ok(r) => results.push(r),
            Err(e) => {
                log(&format!("{} failed: {e}", cfg.name));
                failures.push((cfg.name.clone(), e));
            }
        }
    }
    let records: Vec<RunRecord> = results.iter().flat_map(|r| r.records()).collect();
    write_reports(out_dir, &records, provenance)?;

    let mut w = BufWriter::new(File::create(out_dir.join("experiments.json"))?);
    serde_json::to_writer_pretty(&mut w, &results).map_err(|e| RunError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;

    let mut fw = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join("failures.csv"))
        .map_err(|e| RunError::Io(e.to_string()))?;
    fw.write_record(["experiment", "error"]).map_err(|e| RunError::Io(e.to_string()))?;
    for (name, e) in &failures {
        fw.serialize(FailureRow {
            experiment: name,
            error: e.to_string(),
        })
        .map_err(|e| RunError::Io(e.to_string()))?;
    }
    fw.flush()?;
    Ok(SuiteOutcome { results, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: Task, embedding: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            task,
            NumberFormat::Digits,
            Mode::Interpolate {
                range: IntRange::new(0, 49).unwrap(),
            },
            embedding,
            EmbeddingSpec::preset(embedding).unwrap(),
        );
        cfg.shuffles = vec![1, 2];
        cfg.data.train_lists = 200;
        cfg.data.test_lists = 50;
        cfg.train.max_epochs = 2;
        cfg.train.min_batches_per_epoch = 2;
        cfg
    }

    #[test]
    fn splits_are_shared_across_embeddings_and_tasks() {
        let a = datasets(&tiny(Task::Decode, "random"), 3).unwrap();
        let b = datasets(&tiny(Task::ListMax, "value"), 3).unwrap();
        assert_eq!(a.split_seed, b.split_seed);
        assert_eq!(a.train_pool, b.train_pool);
        assert_ne!(a.split_seed, datasets(&tiny(Task::Decode, "random"), 4).unwrap().split_seed);
    }

    #[test]
    fn experiment_produces_one_record_per_shuffle() {
        let r = run_experiment(&tiny(Task::Decode, "value"), &mut TableCache::new(), &mut |_| {}).unwrap();
        let recs = r.records();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].shuffle_index, 2);
        assert_eq!(recs[0].metric, "rmse");
        assert!(r.std().is_some());
    }

    #[test]
    fn extrapolation_uses_whole_ranges() {
        let mut cfg = tiny(Task::ListMax, "value");
        cfg.mode = Mode::Extrapolate {
            train_range: IntRange::new(0, 150).unwrap(),
            test_range: IntRange::new(151, 160).unwrap(),
        };
        let ds = datasets(&cfg, 1).unwrap();
        assert_eq!(ds.train_pool.len(), 151);
        assert_eq!(ds.test_pool.len(), 10);
        assert!(ds.split_seed.is_none());
    }

    #[test]
    fn missing_vector_file_fails_the_experiment_only() {
        let mut bad = tiny(Task::Decode, "value");
        bad.embedding = EmbeddingSpec::VectorFile {
            path: PathBuf::from("/nonexistent/vectors.txt"),
            dim: None,
        };
        bad.name = "bad".into();
        let good = tiny(Task::Decode, "value");
        let dir = tempfile::tempdir().unwrap();
        let out = run_suite(&[bad, good], dir.path(), &Provenance::default(), &mut |_| {}).unwrap();
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].1.exit_code(), 1);
        let failures = std::fs::read_to_string(dir.path().join("failures.csv")).unwrap();
        assert!(failures.contains("bad"));
        assert_eq!(read_report(File::open(dir.path().join("report.csv")).unwrap()).unwrap().len(), 2);
    }
}
