use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use numprobe::numeral::{self, NumberFormat};
use numprobe::probe::{gradcheck_family, write_sweep_csv, HeadKind, ModelFamily};
use numprobe::runner::{
    aggregate, datasets, read_report, run_suite, run_sweep, write_aggregate_json, write_table_csv, EmbeddingSpec,
    ExperimentConfig, Manifest, Mode, Provenance, RunError, TableCache,
};
use numprobe::taskgen::{IntRange, Task};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "numprobe", version, about = "Probe token embeddings for numeracy")]
struct Cli {
    /// Base seed; overrides the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment manifest (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a manifest, or one built from flags.
    Run(RunArgs),
    /// Train a regression probe on one range and predict over another.
    Sweep(SweepArgs),
    /// Write generated train and test instances as TSV.
    GenData(GenArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        check_seed: u64,
    },
    /// Recompute aggregate.json and table.csv from report.csv.
    Report {
        /// Defaults to OUT_DIR/report.csv.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the canonical surface of every number in a range.
    Surfaces {
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range: IntRange,
        #[arg(long, value_parser = parse_format, default_value = "digits")]
        format: NumberFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "list-max")]
    task: TaskArg,
    /// Number format; negative ranges default to negative_digits.
    #[arg(long, value_parser = parse_format)]
    format: Option<NumberFormat>,
    /// Embedding preset, or a name for --vectors.
    #[arg(long, default_value = "value")]
    embedding: String,
    /// Text vector file to use as the embedding.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long)]
    bidirectional: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Comma-separated shuffle indices.
    #[arg(long, value_delimiter = ',')]
    shuffles: Option<Vec<u64>>,
    #[arg(long)]
    train_lists: Option<usize>,
    #[arg(long)]
    test_lists: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Recorded in aggregate.json; omitted when absent.
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "0:99")]
    range: IntRange,
    /// Train on --range and test on this disjoint range.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    test_range: Option<IntRange>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-500:500")]
    train_range: IntRange,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-2000:2000")]
    eval_range: IntRange,
    /// Defaults to OUT_DIR/sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "0:99")]
    range: IntRange,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    test_range: Option<IntRange>,
    #[arg(long, default_value_t = 1)]
    shuffle: u64,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    ListMax,
    Decode,
    Add,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::ListMax => Task::ListMax,
            TaskArg::Decode => Task::Decode,
            TaskArg::Add => Task::Add,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Lstm,
    Linear,
    Mlp3,
}

fn parse_range(s: &str) -> Result<IntRange, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    IntRange::new(lo, hi).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<NumberFormat, String> {
    s.parse()
}

fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, o: &Overrides) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = &o.shuffles {
        cfg.shuffles = s.clone();
    }
    if let Some(n) = o.train_lists {
        cfg.data.train_lists = n;
    }
    if let Some(n) = o.test_lists {
        cfg.data.test_lists = n;
    }
    if let Some(n) = o.max_epochs {
        cfg.train.max_epochs = n;
    }
}

fn experiment(args: &ExperimentArgs, mode: Mode, seed: Option<u64>) -> Result<ExperimentConfig, RunError> {
    let task = Task::from(args.task);
    let format = args.format.unwrap_or(if mode.train_range().lo() < 0 || mode.report_range().lo() < 0 {
        NumberFormat::NegativeDigits
    } else {
        NumberFormat::Digits
    });
    let embedding = match &args.vectors {
        Some(path) => EmbeddingSpec::VectorFile {
            path: path.clone(),
            dim: None,
        },
        None => EmbeddingSpec::preset(&args.embedding).ok_or_else(|| {
            RunError::Config(format!(
                "unknown embedding '{}'; presets are {}",
                args.embedding,
                EmbeddingSpec::PRESETS.join(", ")
            ))
        })?,
    };
    let mut cfg = ExperimentConfig::new(task, format, mode, &args.embedding, embedding);
    if let Some(h) = args.head {
        cfg.probe.head = match h {
            HeadArg::Lstm => HeadKind::Lstm,
            HeadArg::Linear => HeadKind::Linear,
            HeadArg::Mlp3 => HeadKind::Mlp3,
        };
    }
    cfg.probe.bidirectional = args.bidirectional;
    apply_overrides(&mut cfg, seed, &args.overrides);
    cfg.name = cfg.default_name();
    cfg.validate()?;
    Ok(cfg)
}

fn mode_of(range: IntRange, test_range: Option<IntRange>) -> Mode {
    match test_range {
        Some(test_range) => Mode::Extrapolate {
            train_range: range,
            test_range,
        },
        None => Mode::Interpolate { range },
    }
}

fn provenance(timestamp: Option<String>) -> Provenance {
    Provenance {
        timestamp,
        ..Provenance::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<ExitCode, RunError> {
    let experiments = match &cli.config {
        Some(path) => {
            let mut m = Manifest::load(path)?.experiments;
            for cfg in &mut m {
                apply_overrides(cfg, cli.seed, &args.exp.overrides);
                cfg.validate()?;
            }
            m
        }
        None => vec![experiment(&args.exp, mode_of(args.range, args.test_range), cli.seed)?],
    };
    if experiments.is_empty() {
        eprintln!("warning: manifest lists no experiments");
    }
    let outcome = run_suite(
        &experiments,
        &cli.out_dir,
        &provenance(args.exp.overrides.timestamp.clone()),
        &mut |l| log(l),
    )?;
    for r in &outcome.results {
        let std = r.std().map(|s| format!(" ± {s:.4}")).unwrap_or_default();
        println!("{}\t{:.4}{std}", r.config.name, r.mean());
    }
    if outcome.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} experiment(s) failed; see failures.csv", outcome.failures.len());
        Ok(ExitCode::from(1))
    }
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<ExitCode, RunError> {
    let mut exp = args.exp.clone();
    if matches!(exp.task, TaskArg::ListMax) {
        exp.task = TaskArg::Decode;
    }
    if args.eval_range.lo() < 0 && exp.format.is_none() {
        exp.format = Some(NumberFormat::NegativeDigits);
    }
    let mut cfg = experiment(
        &exp,
        Mode::Interpolate {
            range: args.train_range,
        },
        cli.seed,
    )?;
    if exp.overrides.shuffles.is_none() {
        cfg.shuffles = vec![1];
    }
    let result = run_sweep(&cfg, args.eval_range, &mut TableCache::new())?;
    if !result.output.skipped.is_empty() {
        eprintln!("skipped {} value(s) without vectors", result.output.skipped.len());
    }
    let path = args.out.clone().unwrap_or_else(|| cli.out_dir.join("sweep.csv"));
    write_sweep_csv(create(&path)?, &result.output.rows).map_err(|e| RunError::Io(e.to_string()))?;
    eprintln!("wrote {} rows to {}", result.output.rows.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_data(cli: &Cli, args: &GenArgs) -> Result<ExitCode, RunError> {
    let cfg = experiment(&args.exp, mode_of(args.range, args.test_range), cli.seed)?;
    let ds = datasets(&cfg, args.shuffle)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    for (split, inst) in [("train", &ds.train), ("test", &ds.test)] {
        let path = cli.out_dir.join(format!("{}_{split}.tsv", cfg.task));
        let mut w = create(&path)?;
        inst.write_dump(&mut w)?;
        w.flush()?;
        eprintln!("wrote {} {split} instances to {}", inst.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(check_seed: u64) -> ExitCode {
    let mut ok = true;
    for family in ModelFamily::ALL {
        let r = gradcheck_family(family, check_seed);
        let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
        ok &= pass;
        println!(
            "{:<18} {:.3e}  {} ({} partials, worst {})",
            family.name(),
            r.max_rel_error,
            if pass { "ok" } else { "FAIL" },
            r.checked,
            r.worst_param
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_report(cli: &Cli, input: Option<&Path>, timestamp: Option<String>) -> Result<ExitCode, RunError> {
    let path = input.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("report.csv"));
    let file = File::open(&path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let rows = aggregate(&read_report(file)?);
    std::fs::create_dir_all(&cli.out_dir)?;
    let mut w = create(&cli.out_dir.join("aggregate.json"))?;
    write_aggregate_json(&mut w, &rows, &provenance(timestamp))?;
    w.flush()?;
    let mut w = create(&cli.out_dir.join("table.csv"))?;
    write_table_csv(&mut w, &rows)?;
    w.flush()?;
    write_table_csv(io::stdout().lock(), &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_surfaces(range: IntRange, format: NumberFormat, out: Option<&Path>) -> Result<ExitCode, RunError> {
    let list = numeral::surfaces(range.lo(), range.hi(), format).map_err(|e| RunError::Config(e.to_string()))?;
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for s in &list {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&cli, a),
        Command::Sweep(a) => cmd_sweep(&cli, a),
        Command::GenData(a) => cmd_gen_data(&cli, a),
        Command::Gradcheck { check_seed } => Ok(cmd_gradcheck(*check_seed)),
        Command::Report { input } => cmd_report(&cli, input.as_deref(), None),
        Command::Surfaces { range, format, out } => cmd_surfaces(*range, *format, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
