//! Manifests: TOML files listing experiments, either as grids over tasks,
//! formats, ranges and embeddings, or as explicit entries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::embed::{CharCnnConfig, CharLstmConfig, DEFAULT_RANDOM_DIM};
use crate::numeral::NumberFormat;
use crate::probe::{HeadKind, ProbeSpec, TrainConfig};
use crate::taskgen::{AddSubsample, IntRange, Task, DEFAULT_LISTMAX_TEST, DEFAULT_LISTMAX_TRAIN, DEFAULT_VARIANCE_SCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Random {
        #[serde(default = "default_random_dim")]
        dim: usize,
    },
    Value {
        #[serde(default = "yes")]
        log_scale: bool,
    },
    /// Text vector file; relative paths resolve against the manifest.
    VectorFile {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
    },
    CharCnn {
        #[serde(default)]
        trainable: bool,
        #[serde(default)]
        config: CharCnnConfig,
    },
    CharLstm {
        #[serde(default)]
        trainable: bool,
        #[serde(default)]
        config: CharLstmConfig,
    },
}

fn default_random_dim() -> usize {
    DEFAULT_RANDOM_DIM
}

fn yes() -> bool {
    true
}

impl EmbeddingSpec {
    /// Built-in named embeddings.
    pub fn preset(name: &str) -> Option<EmbeddingSpec> {
        Some(match name {
            "random" => EmbeddingSpec::Random {
                dim: DEFAULT_RANDOM_DIM,
            },
            "value" => EmbeddingSpec::Value { log_scale: true },
            "value_raw" => EmbeddingSpec::Value { log_scale: false },
            "untrained_cnn" => EmbeddingSpec::CharCnn {
                trainable: false,
                config: CharCnnConfig::default(),
            },
            "untrained_lstm" => EmbeddingSpec::CharLstm {
                trainable: false,
                config: CharLstmConfig::default(),
            },
            "char_cnn" => EmbeddingSpec::CharCnn {
                trainable: true,
                config: CharCnnConfig::default(),
            },
            "char_lstm" => EmbeddingSpec::CharLstm {
                trainable: true,
                config: CharLstmConfig::default(),
            },
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 7] = [
        "random",
        "value",
        "value_raw",
        "untrained_cnn",
        "untrained_lstm",
        "char_cnn",
        "char_lstm",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// One range split 80/20 by a shuffle seed.
    Interpolate { range: IntRange },
    /// Train on all of one range, test on all of a disjoint one.
    Extrapolate { train_range: IntRange, test_range: IntRange },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Interpolate { .. } => "interpolate",
            Mode::Extrapolate { .. } => "extrapolate",
        }
    }

    /// The range results are reported against.
    pub fn report_range(&self) -> IntRange {
        match *self {
            Mode::Interpolate { range } => range,
            Mode::Extrapolate { test_range, .. } => test_range,
        }
    }

    pub fn train_range(&self) -> IntRange {
        match *self {
            Mode::Interpolate { range } => range,
            Mode::Extrapolate { train_range, .. } => train_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_lists: usize,
    pub test_lists: usize,
    pub variance_scale: f64,
    pub add_subsample: AddSubsample,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_lists: DEFAULT_LISTMAX_TRAIN,
            test_lists: DEFAULT_LISTMAX_TEST,
            variance_scale: DEFAULT_VARIANCE_SCALE,
            add_subsample: AddSubsample::default(),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub format: NumberFormat,
    #[serde(flatten)]
    pub mode: Mode,
    pub embedding_name: String,
    pub embedding: EmbeddingSpec,
    pub probe: ProbeSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub shuffles: Vec<u64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(task: Task, format: NumberFormat, mode: Mode, embedding_name: &str, embedding: EmbeddingSpec) -> Self {
        let mut cfg = ExperimentConfig {
            name: String::new(),
            task,
            format,
            mode,
            embedding_name: embedding_name.to_string(),
            embedding,
            probe: ProbeSpec::for_task(task),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            shuffles: (1..=5).collect(),
            seed: 0,
        };
        cfg.name = cfg.default_name();
        cfg
    }

    pub fn default_name(&self) -> String {
        let r = self.mode.report_range();
        let range = match self.mode {
            Mode::Interpolate { .. } => format!("{}:{}", r.lo(), r.hi()),
            Mode::Extrapolate { train_range: t, .. } => format!("{}:{}->{}:{}", t.lo(), t.hi(), r.lo(), r.hi()),
        };
        format!("{}/{}/{}/{}/{}", self.task, self.format, range, self.embedding_name, probe_name(&self.probe))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(format!("{}: {m}", self.name)));
        if self.probe.task != self.task {
            return bad("probe task differs from experiment task".into());
        }
        self.probe.validate().or_else(|e| bad(e.to_string()))?;
        if self.format == NumberFormat::Float1 && self.task != Task::ListMax {
            return bad("float numbers are only supported for list_max".into());
        }
        if self.shuffles.is_empty() {
            return bad("at least one shuffle is required".into());
        }
        if !(self.train.val_fraction > 0.0 && self.train.val_fraction <= 0.5) {
            return bad("val_fraction must be in (0, 0.5]".into());
        }
        if self.train.patience == 0 || self.train.batch_size == 0 {
            return bad("patience and batch_size must be at least 1".into());
        }
        if let Mode::Extrapolate { train_range, test_range } = self.mode {
            if train_range.overlaps(test_range) {
                return bad("train and test ranges overlap".into());
            }
        }
        for r in [self.mode.train_range(), self.mode.report_range()] {
            for v in [r.lo(), r.hi()] {
                let scaled = if self.format == NumberFormat::Float1 { v * 10 } else { v };
                if !self.format.accepts(scaled) {
                    return bad(format!("range [{}, {}] not representable as {}", r.lo(), r.hi(), self.format));
                }
            }
        }
        Ok(())
    }
}

pub fn probe_name(spec: &ProbeSpec) -> String {
    if spec.bidirectional && spec.head == HeadKind::Lstm {
        "bilstm".into()
    } else {
        spec.head.name().into()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProbeOverrides {
    head: Option<HeadKind>,
    lstm_hidden: Option<usize>,
    mlp_hidden: Option<usize>,
    bidirectional: Option<bool>,
}

impl ProbeOverrides {
    fn merged(&self, over: &ProbeOverrides) -> ProbeOverrides {
        ProbeOverrides {
            head: over.head.or(self.head),
            lstm_hidden: over.lstm_hidden.or(self.lstm_hidden),
            mlp_hidden: over.mlp_hidden.or(self.mlp_hidden),
            bidirectional: over.bidirectional.or(self.bidirectional),
        }
    }

    fn apply(&self, task: Task) -> ProbeSpec {
        let mut p = ProbeSpec::for_task(task);
        if let Some(h) = self.head {
            p.head = h;
        }
        if let Some(h) = self.lstm_hidden {
            p.lstm_hidden = h;
        }
        if let Some(h) = self.mlp_hidden {
            p.mlp_hidden = h;
        }
        if let Some(b) = self.bidirectional {
            p.bidirectional = b;
        }
        p
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Defaults {
    seed: u64,
    shuffles: Vec<u64>,
    train_lists: usize,
    test_lists: usize,
    variance_scale: f64,
    add_subsample: AddSubsample,
    train: TrainConfig,
    probe: ProbeOverrides,
}

impl Default for Defaults {
    fn default() -> Self {
        let data = DataConfig::default();
        Defaults {
            seed: 0,
            shuffles: (1..=5).collect(),
            train_lists: data.train_lists,
            test_lists: data.test_lists,
            variance_scale: data.variance_scale,
            add_subsample: data.add_subsample,
            train: TrainConfig::default(),
            probe: ProbeOverrides::default(),
        }
    }
}

impl Defaults {
    fn data(&self) -> DataConfig {
        DataConfig {
            train_lists: self.train_lists,
            test_lists: self.test_lists,
            variance_scale: self.variance_scale,
            add_subsample: self.add_subsample,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    tasks: Vec<Task>,
    #[serde(default = "digits_only")]
    formats: Vec<NumberFormat>,
    ranges: Vec<IntRange>,
    embeddings: Vec<String>,
    #[serde(default)]
    heads: Option<Vec<HeadKind>>,
    #[serde(default)]
    probe: ProbeOverrides,
}

fn digits_only() -> Vec<NumberFormat> {
    vec![NumberFormat::Digits]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default)]
    name: Option<String>,
    task: Task,
    #[serde(default = "digits")]
    format: NumberFormat,
    #[serde(default)]
    range: Option<IntRange>,
    #[serde(default)]
    train_range: Option<IntRange>,
    #[serde(default)]
    test_range: Option<IntRange>,
    embedding: String,
    #[serde(default)]
    probe: ProbeOverrides,
    #[serde(default)]
    train: Option<TrainConfig>,
    #[serde(default)]
    train_lists: Option<usize>,
    #[serde(default)]
    test_lists: Option<usize>,
    #[serde(default)]
    shuffles: Option<Vec<u64>>,
}

fn digits() -> NumberFormat {
    NumberFormat::Digits
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ManifestFile {
    defaults: Defaults,
    embeddings: BTreeMap<String, EmbeddingSpec>,
    grid: Vec<Grid>,
    experiment: Vec<Entry>,
}

/// Parsed manifest with every experiment resolved.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub experiments: Vec<ExperimentConfig>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Manifest::parse(&text, path.parent())
    }

    /// `base` anchors relative vector-file paths.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Manifest, RunError> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let resolve = |name: &str| -> Result<EmbeddingSpec, RunError> {
            let spec = match file.embeddings.get(name) {
                Some(s) => s.clone(),
                None => EmbeddingSpec::preset(name).ok_or_else(|| RunError::Config(format!("unknown embedding '{name}'")))?,
            };
            Ok(match (spec, base) {
                (EmbeddingSpec::VectorFile { path, dim }, Some(b)) if path.is_relative() => EmbeddingSpec::VectorFile {
                    path: b.join(path),
                    dim,
                },
                (s, _) => s,
            })
        };
        let d = &file.defaults;
        let make = |task, format, mode, emb: &str, probe: &ProbeOverrides| -> Result<ExperimentConfig, RunError> {
            let mut cfg = ExperimentConfig::new(task, format, mode, emb, resolve(emb)?);
            cfg.probe = d.probe.merged(probe).apply(task);
            cfg.train = d.train.clone();
            cfg.data = d.data();
            cfg.shuffles = d.shuffles.clone();
            cfg.seed = d.seed;
            cfg.name = cfg.default_name();
            Ok(cfg)
        };

        let mut experiments = Vec::new();
        for g in &file.grid {
            let heads: Vec<Option<HeadKind>> = match &g.heads {
                Some(h) => h.iter().copied().map(Some).collect(),
                None => vec![None],
            };
            for &task in &g.tasks {
                for &format in &g.formats {
                    for &range in &g.ranges {
                        for emb in &g.embeddings {
                            for head in &heads {
                                let mut probe = g.probe.clone();
                                if head.is_some() {
                                    probe.head = *head;
                                }
                                experiments.push(make(task, format, Mode::Interpolate { range }, emb, &probe)?);
                            }
                        }
                    }
                }
            }
        }
        for e in &file.experiment {
            let mode = match (e.range, e.train_range, e.test_range) {
                (Some(range), None, None) => Mode::Interpolate { range },
                (None, Some(train_range), Some(test_range)) => Mode::Extrapolate { train_range, test_range },
                _ => {
                    return Err(RunError::Config(
                        "an experiment needs either `range` or both `train_range` and `test_range`".into(),
                    ))
                }
            };
            let mut cfg = make(e.task, e.format, mode, &e.embedding, &e.probe)?;
            if let Some(t) = &e.train {
                cfg.train = t.clone();
            }
            if let Some(n) = e.train_lists {
                cfg.data.train_lists = n;
            }
            if let Some(n) = e.test_lists {
                cfg.data.test_lists = n;
            }
            if let Some(s) = &e.shuffles {
                cfg.shuffles = s.clone();
            }
            cfg.name = e.name.clone().unwrap_or_else(|| cfg.default_name());
            experiments.push(cfg);
        }
        for cfg in &experiments {
            cfg.validate()?;
        }
        Ok(Manifest { experiments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_as_a_product() {
        let m = Manifest::parse(
            r#"
            [[grid]]
            tasks = ["list_max", "decode", "add"]
            ranges = [[0, 99], [0, 999]]
            embeddings = ["random", "value"]
            "#,
            None,
        )
        .unwrap();
        assert_eq!(m.experiments.len(), 12);
        assert!(m.experiments.iter().all(|e| e.shuffles == vec![1, 2, 3, 4, 5]));
        let first = &m.experiments[0];
        assert_eq!(first.probe.head, HeadKind::Lstm);
        assert_eq!(first.name, "list_max/digits/0:99/random/lstm");
    }

    #[test]
    fn defaults_and_entries_override() {
        let m = Manifest::parse(
            r#"
            [defaults]
            seed = 9
            shuffles = [1]
            train_lists = 50
            [defaults.train]
            max_epochs = 3

            [embeddings.glove]
            kind = "vector_file"
            path = "vectors/glove.txt"
            dim = 300

            [[experiment]]
            task = "list_max"
            train_range = [0, 150]
            test_range = [151, 160]
            embedding = "char_lstm"
            probe = { bidirectional = true }

            [[experiment]]
            name = "g"
            task = "decode"
            range = [0, 99]
            embedding = "glove"
            probe = { head = "linear" }
            "#,
            Some(Path::new("/data")),
        )
        .unwrap();
        let [a, b] = &m.experiments[..] else { panic!() };
        assert_eq!(a.seed, 9);
        assert_eq!(a.data.train_lists, 50);
        assert_eq!(a.train.max_epochs, 3);
        assert!(a.probe.bidirectional);
        assert_eq!(a.mode.name(), "extrapolate");
        assert_eq!(b.name, "g");
        assert_eq!(b.probe.head, HeadKind::Linear);
        assert_eq!(
            b.embedding,
            EmbeddingSpec::VectorFile {
                path: PathBuf::from("/data/vectors/glove.txt"),
                dim: Some(300)
            }
        );
    }

    #[test]
    fn invalid_manifests_are_config_errors() {
        for text in [
            "[[grid]]\ntasks = [\"list_max\"]\nranges = [[0, 99]]\nembeddings = [\"nope\"]\n",
            "[[grid]]\ntasks = [\"decode\"]\nformats = [\"float1\"]\nranges = [[0, 99]]\nembeddings = [\"value\"]\n",
            "[[grid]]\ntasks = [\"decode\"]\nformats = [\"words\"]\nranges = [[0, 999]]\nembeddings = [\"value\"]\n",
            "[[experiment]]\ntask = \"decode\"\nrange = [0, 9]\nembedding = \"value\"\nprobe = { head = \"lstm\" }\n",
            "[[experiment]]\ntask = \"list_max\"\ntrain_range = [0, 150]\ntest_range = [100, 160]\nembedding = \"value\"\n",
            "[[experiment]]\ntask = \"list_max\"\nrange = [0, 9]\ntrain_range = [0, 9]\nembedding = \"value\"\n",
            "[defaults]\nbogus = 1\n",
            "[[grid]]\ntasks = [\"list_max\"]\nranges = [[9, 0]]\nembeddings = [\"value\"]\n",
        ] {
            assert!(matches!(Manifest::parse(text, None), Err(RunError::Config(_))), "{text}");
        }
    }
}
