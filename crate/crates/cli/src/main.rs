mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use andri::bench::{
    evaluate, generate_base, inject_anomalies, inject_drift, run_experiment, BaseKind, DriftSpec,
    DriftType, InjectionSpec, Manifest, Placement,
};
use andri::detect::Aggregation;
use andri::model::{deserialize_model, serialize_model, train};
use andri::{io, AndriError, DetectorConfig, DetectorState, TimeSeries};
use clap::{Parser, Subcommand, ValueEnum};

use config::ModelArgs;

/// Subsequence anomaly detection for drifting time series.
///
/// Exit codes: 0 success, 2 usage, 3 data or format error, 4 insufficient
/// data, 5 metric undefined (labels of a single class).
#[derive(Debug, Parser)]
#[command(name = "andri", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a normal model from a series.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Where to write the model document.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Score a series, offline or against a trained model.
    Detect {
        /// Series file, or `-` to stream points from standard input
        /// (online mode only).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Offline)]
        mode: Mode,
        /// Trained model; required in online mode.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        /// How the distances of the subsequences covering a point combine.
        #[arg(long, value_enum, default_value_t = AggregationArg::Min)]
        aggregation: AggregationArg,
        /// Never admit new patterns while streaming.
        #[arg(long)]
        no_admit: bool,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Splice series with drifts and inject scaled anomalies.
    Inject {
        /// Source series. Give several to splice them with drifts.
        #[arg(long)]
        input: Vec<PathBuf>,
        /// Synthetic source `kind:period`, kind one of sine, square,
        /// mixed-harmonic, sawtooth. May repeat; used after any --input.
        #[arg(long, value_parser = parse_generator)]
        generate: Vec<(BaseKind, usize)>,
        /// Length of generated sources.
        #[arg(long, default_value_t = 10_000)]
        length: usize,
        /// Gaussian noise std of generated sources.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, value_enum)]
        drift: Option<DriftArg>,
        #[arg(long, default_value_t = 1)]
        n_drifts: usize,
        /// Share of the series covered by each gradual transition.
        #[arg(long, default_value_t = 0.0)]
        transition_fraction: f64,
        /// Points that switch source together in a gradual transition.
        #[arg(long, default_value_t = 1)]
        block: usize,
        /// Share of points to turn anomalous; none when omitted.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long, default_value_t = 1.5)]
        scale_lo: f64,
        #[arg(long, default_value_t = 3.0)]
        scale_hi: f64,
        #[arg(long, default_value_t = 100)]
        anomaly_length: usize,
        #[arg(long, value_parser = parse_placement, default_value = "uniform")]
        placement: Placement,
        /// Rayleigh scale in points. [default: a quarter of the length]
        #[arg(long)]
        rayleigh_scale: Option<f64>,
        /// Random seed; falls back to `seed` in --config, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// TOML file; only its `seed` key is used here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Where to write the drift intervals.
        #[arg(long)]
        intervals: Option<PathBuf>,
    },
    /// Compare a score file with a labelled series.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// Labelled series (`value,label`).
        #[arg(long)]
        labels: PathBuf,
        /// Drift intervals for the per-window false positive table.
        #[arg(long)]
        intervals: Option<PathBuf>,
        /// Report path; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the clustering levels of a series' tiles.
    Dendrogram {
        #[arg(long)]
        input: PathBuf,
        /// Tile length, overriding ell times ell_m_factor.
        #[arg(long)]
        tile: Option<usize>,
        /// Plain constrained Ward clustering without reversion.
        #[arg(long)]
        no_reversion: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Run every point of an experiment manifest.
    Experiment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregationArg {
    Min,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriftArg {
    Abrupt,
    Gradual,
    Recurring,
}

fn parse_generator(s: &str) -> Result<(BaseKind, usize), String> {
    let (kind, period) = s
        .split_once(':')
        .ok_or_else(|| format!("expected kind:period, got `{s}`"))?;
    let kind = kind.parse().map_err(|e: AndriError| e.to_string())?;
    let period = period
        .parse()
        .map_err(|_| format!("bad period `{period}`"))?;
    Ok((kind, period))
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    s.parse().map_err(|e: AndriError| e.to_string())
}

enum Failure {
    Usage(String),
    Andri(AndriError),
}

impl From<AndriError> for Failure {
    fn from(e: AndriError) -> Self {
        Failure::Andri(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Andri(AndriError::BadParam(_)) => 2,
            Failure::Andri(AndriError::InsufficientData(_)) => 4,
            Failure::Andri(AndriError::UndefinedMetric(_)) => 5,
            Failure::Andri(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Andri(e) => e.fmt(f),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Write to stdout, giving up quietly when the reader has gone away.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn open(path: &Path) -> andri::Result<File> {
    File::open(path).map_err(|e| AndriError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> andri::Result<File> {
    File::create(path).map_err(|e| AndriError::Io(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> andri::Result<TimeSeries> {
    let name = path
        .file_stem()
        .map_or("series".into(), |s| s.to_string_lossy());
    io::read_series(open(path)?, &name)
}

fn cmd_train(input: &Path, model_path: &Path, params: &ModelArgs) -> Outcome {
    let config = params.resolve()?.model_config()?;
    let series = read_series(input)?;
    let model = train(&series, &config)?.model;
    std::fs::write(model_path, serialize_model(&model))
        .map_err(|e| AndriError::Io(format!("{}: {e}", model_path.display())))?;
    out!("patterns: {}\n", model.patterns.len());
    out!("window: {}\n", model.w);
    for p in &model.patterns {
        out!("pattern {}: tau={:.6} nu={:.6}\n", p.id, p.tau, p.nu);
    }
    Ok(())
}

/// Points from a headerless or headed single-column stream, one per line.
fn stream_points(
    r: impl BufRead,
    mut f: impl FnMut(f64) -> andri::Result<()>,
) -> andri::Result<()> {
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => f(v)?,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(AndriError::FormatError(format!(
                    "line {}: cannot parse value `{field}`",
                    i + 1
                )))
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect(
    input: &Path,
    mode: Mode,
    model_path: Option<&Path>,
    scores_path: &Path,
    events_path: Option<&Path>,
    aggregation: AggregationArg,
    no_admit: bool,
    params: &ModelArgs,
) -> Outcome {
    let det = DetectorConfig {
        aggregation: match aggregation {
            AggregationArg::Min => Aggregation::Min,
            AggregationArg::Mean => Aggregation::Mean,
        },
        admit: !no_admit,
        ..DetectorConfig::default()
    };
    let out = match mode {
        Mode::Offline => {
            if model_path.is_some() {
                return Err(Failure::Usage("--model is only used in online mode".into()));
            }
            if input == Path::new("-") {
                return Err(Failure::Usage("offline mode needs a file input".into()));
            }
            let config = params.resolve()?.model_config()?;
            andri::detect_offline(&read_series(input)?, &config, &det)?
        }
        Mode::Online => {
            let Some(model_path) = model_path else {
                return Err(Failure::Usage("online mode requires --model".into()));
            };
            let bytes = std::fs::read(model_path)
                .map_err(|e| AndriError::Io(format!("{}: {e}", model_path.display())))?;
            let model = deserialize_model(&bytes)?;
            let mut state = DetectorState::new(model, det)?;
            let feed = |x| state.step(x).map(|_| ());
            if input == Path::new("-") {
                stream_points(std::io::stdin().lock(), feed)?;
            } else {
                stream_points(BufReader::new(open(input)?), feed)?;
            }
            state.into_scores()
        }
    };
    io::write_scores(&mut create(scores_path)?, &out)?;
    if let Some(p) = events_path {
        io::write_events(&mut create(p)?, &out.events)?;
    }
    eprintln!("scored {} points, {} events", out.len(), out.events.len());
    Ok(())
}

struct InjectArgs {
    input: Vec<PathBuf>,
    generate: Vec<(BaseKind, usize)>,
    length: usize,
    noise: f64,
    drift: Option<DriftArg>,
    n_drifts: usize,
    transition_fraction: f64,
    block: usize,
    fraction: Option<f64>,
    scale: (f64, f64),
    anomaly_length: usize,
    placement: Placement,
    rayleigh_scale: Option<f64>,
    seed: u64,
    output: PathBuf,
    intervals: Option<PathBuf>,
}

fn cmd_inject(a: InjectArgs) -> Outcome {
    let mut sources = a
        .input
        .iter()
        .map(|p| read_series(p))
        .collect::<andri::Result<Vec<_>>>()?;
    for (i, &(kind, period)) in a.generate.iter().enumerate() {
        let seed = a.seed.wrapping_add(1 + i as u64);
        sources.push(generate_base(kind, period, a.length, a.noise, seed)?);
    }
    if sources.is_empty() {
        return Err(Failure::Usage(
            "give at least one --input or --generate".into(),
        ));
    }
    let kind = match (a.drift, sources.len()) {
        (Some(DriftArg::Abrupt), _) => DriftType::Abrupt,
        (Some(DriftArg::Gradual), _) => DriftType::Gradual,
        (Some(DriftArg::Recurring), _) => DriftType::Recurring,
        (None, 1) => DriftType::Abrupt,
        (None, _) => return Err(Failure::Usage("several sources need --drift".into())),
    };
    let sources = sources
        .into_iter()
        .map(|s| match s.labels() {
            Some(_) => Ok(s),
            None => {
                let n = s.len();
                s.relabel(vec![0; n])
            }
        })
        .collect::<andri::Result<Vec<_>>>()?;
    let spec = DriftSpec {
        kind,
        n_drifts: if a.drift.is_some() { a.n_drifts } else { 0 },
        transition_fraction: a.transition_fraction,
        block: a.block,
    };
    let drifted = inject_drift(&sources, &spec, a.seed)?;
    let series = match a.fraction {
        Some(f) => inject_anomalies(
            &drifted.series,
            &InjectionSpec {
                anomaly_fraction: f,
                scale_range: a.scale,
                placement: a.placement,
                anomaly_length: a.anomaly_length,
                seed: a.seed,
                rayleigh_scale: a.rayleigh_scale,
            },
        )?,
        None => drifted.series,
    };
    io::write_series(&mut create(&a.output)?, &series)?;
    if let Some(p) = &a.intervals {
        io::write_drift(&mut create(p)?, &drifted.intervals)?;
    }
    let anomalous = series
        .labels()
        .map_or(0, |l| l.iter().filter(|&&x| x == 1).count());
    eprintln!(
        "wrote {} points, {} anomalous, {} drift intervals",
        series.len(),
        anomalous,
        drifted.intervals.len()
    );
    Ok(())
}

fn cmd_eval(
    scores: &Path,
    labels: &Path,
    intervals: Option<&Path>,
    output: Option<&Path>,
) -> Outcome {
    let s = io::read_scores(open(scores)?)?;
    let series = read_series(labels)?;
    let l = series.labels().ok_or_else(|| {
        AndriError::FormatError(format!("{} has no label column", labels.display()))
    })?;
    if s.len() != l.len() {
        return Err(AndriError::LengthMismatch {
            left: s.len(),
            right: l.len(),
        }
        .into());
    }
    let windows = match intervals {
        Some(p) => io::read_drift(open(p)?)?,
        None => Vec::new(),
    };
    let report = evaluate(&s, l, &windows)?;
    let text = io::report_json(&report);
    match output {
        Some(p) => create(p)?
            .write_all(text.as_bytes())
            .map_err(AndriError::from)?,
        None => out!("{text}"),
    }
    Ok(())
}

fn cmd_dendrogram(
    input: &Path,
    tile: Option<usize>,
    no_reversion: bool,
    output: Option<&Path>,
    params: &ModelArgs,
) -> Outcome {
    let resolved = params.resolve()?;
    let (tile, mut ahc, kind) = match (tile, resolved.ell) {
        (Some(t), None) => {
            let mut c = andri::ModelConfig::new(t.max(2));
            if let Some(k) = resolved.k {
                c.ahc.k = k;
            }
            if let Some(r) = resolved.r_min_fraction {
                c.ahc.r_min = r;
            }
            (t, c.ahc, resolved.distance_kind.unwrap_or_default())
        }
        _ => {
            let c = resolved.model_config()?;
            (tile.unwrap_or(c.ell_m), c.ahc, c.distance_kind)
        }
    };
    ahc.reversion = !no_reversion;
    let series = read_series(input)?;
    let tiles = andri::extract_subsequences(&series, tile, tile)?;
    let (clusters, dendrogram) = andri::run_ahc(&tiles, &ahc, kind)?;
    let dump = dendrogram.dump();
    match output {
        Some(p) => create(p)?
            .write_all(dump.as_bytes())
            .map_err(AndriError::from)?,
        None => out!("{dump}"),
    }
    let spans: Vec<String> = clusters
        .iter()
        .map(|c| format!("{}-{}", c.members[0], c.members[c.members.len() - 1]))
        .collect();
    eprintln!("clusters: {}", spans.join(" "));
    Ok(())
}

fn cmd_experiment(manifest: &Path, out: &Path) -> Outcome {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| AndriError::Io(format!("{}: {e}", manifest.display())))?;
    let m = Manifest::parse(&text)?;
    let summary = run_experiment(&m, out)?;
    for (p, r) in &summary.points {
        out!(
            "fraction={} drifts={} transition={} seed={} auc={:.4} window_fp_share={:.3}\n",
            p.anomaly_fraction,
            p.n_drifts,
            p.transition_fraction,
            p.seed,
            r.auc,
            r.window_fp_share()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train {
            input,
            model,
            params,
        } => cmd_train(&input, &model, &params),
        Command::Detect {
            input,
            mode,
            model,
            scores,
            events,
            aggregation,
            no_admit,
            params,
        } => cmd_detect(
            &input,
            mode,
            model.as_deref(),
            &scores,
            events.as_deref(),
            aggregation,
            no_admit,
            &params,
        ),
        Command::Inject {
            input,
            generate,
            length,
            noise,
            drift,
            n_drifts,
            transition_fraction,
            block,
            fraction,
            scale_lo,
            scale_hi,
            anomaly_length,
            placement,
            rayleigh_scale,
            seed,
            config,
            output,
            intervals,
        } => cmd_inject(InjectArgs {
            input,
            generate,
            length,
            noise,
            drift,
            n_drifts,
            transition_fraction,
            block,
            fraction,
            scale: (scale_lo, scale_hi),
            anomaly_length,
            placement,
            rayleigh_scale,
            seed: match (seed, config) {
                (Some(s), _) => s,
                (None, Some(p)) => config::CliConfig::load(&p)?.seed(),
                (None, None) => 0,
            },
            output,
            intervals,
        }),
        Command::Eval {
            scores,
            labels,
            intervals,
            output,
        } => cmd_eval(&scores, &labels, intervals.as_deref(), output.as_deref()),
        Command::Dendrogram {
            input,
            tile,
            no_reversion,
            output,
            params,
        } => cmd_dendrogram(&input, tile, no_reversion, output.as_deref(), &params),
        Command::Experiment { manifest, out } => cmd_experiment(&manifest, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("andri: {e}");
            ExitCode::from(e.code())
        }
    }
}
