//! Command-line verbs.
//!
//! Exit codes: 0 success, 2 input or format error, 3 invalid configuration,
//! 4 insufficient data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::breathhold::{analyze_session, BreathHoldAnnotation, BreathHoldError, FeatureSet};
use crate::cohort::{
    aggregate_subjects, assign_groups, boxplot_summary, default_buckets, feature_values,
    subgroup_trend, table_report, ScoreBucket,
};
use crate::io::{
    open_scos, read_json, read_trace_csv, write_json, write_trace_csv, AnalysisConfig, IoError,
    KeyValues, ScosWriter, SimulationConfig,
};
use crate::synth::SessionSynth;
use crate::trace::{contrast_from_moments, HemodynamicTrace, NoiseModel};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "scos",
    version,
    about = "Speckle contrast breath-hold analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Suppress progress and throughput messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a breath-hold session as a frame file plus ground truth.
    Simulate {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Reduce a frame file to a trace CSV.
    Process {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Write per-frame indices without the temporal box filter.
        #[arg(long)]
        no_smooth: bool,
        /// Rest window for the volume baseline, as `start,end` in seconds.
        #[arg(long, value_parser = parse_window)]
        baseline_window: Option<(f64, f64)>,
        #[command(flatten)]
        common: Common,
    },
    /// Extract breath-hold features from a trace CSV and annotation JSON.
    Extract {
        trace: PathBuf,
        #[arg(long, short)]
        annotation: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Skip the temporal box filter before the breath-hold features.
        #[arg(long)]
        no_smooth: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Group comparison over a directory of feature JSON files.
    Cohort {
        features: PathBuf,
        /// Directory for the report files.
        #[arg(long, short)]
        output: PathBuf,
        /// Score buckets for the trend block, e.g. `1;4;5;6,7`.
        #[arg(long, value_parser = parse_buckets)]
        buckets: Option<Vec<ScoreBucket>>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected start,end")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    Ok((a, b))
}

fn parse_buckets(s: &str) -> Result<Vec<ScoreBucket>, String> {
    s.split(';')
        .map(|part| {
            let scores = part
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u8>()
                        .map_err(|_| format!("bad score {v:?}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let label = match scores.as_slice() {
                [one] => one.to_string(),
                [first, .., last] => format!("{first}-{last}"),
                [] => return Err("empty bucket".into()),
            };
            Ok(ScoreBucket { label, scores })
        })
        .collect()
}

/// A failed command: its exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Self::input(e)
    }
}

fn read_key_values(path: &Option<PathBuf>) -> Result<KeyValues, Failure> {
    let Some(p) = path else {
        return Ok(KeyValues::default());
    };
    let text =
        fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
    text.parse::<KeyValues>()
        .map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn analysis_config(common: &Common) -> Result<AnalysisConfig, Failure> {
    let c = AnalysisConfig::from_key_values(&read_key_values(&common.config)?)?;
    c.validate()
        .map_err(|e| Failure::config(format!("invalid configuration: {e}")))?;
    Ok(c)
}

/// `path` with its extension replaced by `suffix`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn simulate(output: &Path, seed: u64, common: &Common) -> Result<(), Failure> {
    let cfg = SimulationConfig::from_key_values(&read_key_values(&common.config)?)?;
    cfg.validate()
        .map_err(|e| Failure::config(format!("invalid configuration: {e}")))?;
    let synth = SessionSynth::with_options(
        &cfg.script,
        &cfg.physics,
        &cfg.acquisition,
        &cfg.options,
        seed,
    )
    .map_err(Failure::config)?;
    let n = synth.frame_count();
    let truth = synth.ground_truth().clone();
    let file =
        File::create(output).map_err(|e| Failure::input(format!("{}: {e}", output.display())))?;
    let mut w = ScosWriter::new(
        BufWriter::with_capacity(1 << 20, file),
        cfg.acquisition,
        n as u64,
    )?;
    let start = Instant::now();
    for (k, frame) in synth.enumerate() {
        w.write_frame(&frame)?;
        if !common.quiet && (k + 1) % 600 == 0 {
            eprintln!("simulate: {}/{} frames", k + 1, n);
        }
    }
    w.finish()?;
    write_json(&sibling(output, ".truth.json"), &truth)?;
    write_json(&sibling(output, ".annotation.json"), &cfg.annotation())?;
    if !common.quiet {
        eprintln!(
            "simulate: {n} frames in {:.1} s",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

/// Streams a frame file into a trace, one frame buffer at a time.
pub fn process_file(input: &Path) -> Result<HemodynamicTrace, IoError> {
    let mut reader = open_scos(input)?;
    let config = reader.header().config;
    let noise = NoiseModel::from_config(&config);
    let mut trace = HemodynamicTrace::new(config.fps, config.dark_offset);
    while let Some((t, m)) = reader.read_moments()? {
        trace.push_contrast(t, m.mean(), contrast_from_moments(t, &m, &noise));
    }
    Ok(trace)
}

fn process(
    input: &Path,
    output: &Path,
    no_smooth: bool,
    window: Option<(f64, f64)>,
    common: &Common,
) -> Result<(), Failure> {
    let mut cfg = analysis_config(common)?;
    if let Some(w) = window {
        cfg.baseline_window = w;
        cfg.validate()
            .map_err(|e| Failure::config(format!("invalid --baseline-window: {e}")))?;
    }
    let start = Instant::now();
    let mut trace = process_file(input)?;
    let secs = start.elapsed().as_secs_f64();
    if let Err(e) = trace.compute_baseline(cfg.baseline_window) {
        if !common.quiet {
            eprintln!("process: no volume baseline ({e}); bvi left empty");
        }
    }
    if !no_smooth {
        if let Some(s) = cfg.smooth_seconds {
            trace = trace.smoothed(s).map_err(Failure::config)?;
        }
    }
    let file =
        File::create(output).map_err(|e| Failure::input(format!("{}: {e}", output.display())))?;
    write_trace_csv(&trace, BufWriter::new(file))?;
    if !common.quiet {
        let invalid = trace.samples.iter().filter(|s| !s.is_valid()).count();
        eprintln!(
            "process: {} frames in {:.2} s ({:.1} frames/s), {} invalid",
            trace.len(),
            secs,
            trace.len() as f64 / secs.max(1e-9),
            invalid
        );
    }
    Ok(())
}

fn extract(
    trace_path: &Path,
    annotation_path: &Path,
    output: &Path,
    no_smooth: bool,
    common: &Common,
) -> Result<(), Failure> {
    let cfg = analysis_config(common)?;
    let file = File::open(trace_path)
        .map_err(|e| Failure::input(format!("{}: {e}", trace_path.display())))?;
    let trace = read_trace_csv(std::io::BufReader::new(file))?;
    let annotation: BreathHoldAnnotation = read_json(annotation_path)?;
    let smooth = if no_smooth { None } else { cfg.smooth_seconds };
    let features = analyze_session(&trace, &annotation, smooth, &cfg.cardiac, &cfg.breathhold)
        .map_err(|e| match e {
            BreathHoldError::AnnotationOutOfRange { .. } => {
                Failure::input(format!("{}: {e}", annotation_path.display()))
            }
            BreathHoldError::Trace(t) => Failure {
                code: EXIT_INSUFFICIENT,
                message: t.to_string(),
            },
            other => Failure::input(other),
        })?;
    write_json(output, &features)?;
    if !common.quiet {
        let invalid: Vec<&str> = FeatureSet::NAMES
            .iter()
            .copied()
            .filter(|n| features.feature(n).is_some_and(|f| !f.valid))
            .collect();
        if !invalid.is_empty() {
            eprintln!("extract: invalid features: {}", invalid.join(", "));
        }
    }
    Ok(())
}

fn load_features(dir: &Path) -> Result<Vec<FeatureSet>, Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| read_json::<FeatureSet>(p).map_err(Failure::from))
        .collect()
}

fn cohort(
    dir: &Path,
    output: &Path,
    buckets: Option<Vec<ScoreBucket>>,
    common: &Common,
) -> Result<(), Failure> {
    // Only checks that a given config parses; cohort has no settings of its own.
    read_key_values(&common.config)?;
    let sessions = load_features(dir)?;
    let records = aggregate_subjects(&sessions).map_err(Failure::input)?;
    let groups = assign_groups(&records);
    if groups.low_risk.is_empty() || groups.higher_risk.is_empty() {
        return Err(Failure {
            code: EXIT_INSUFFICIENT,
            message: format!(
                "need subjects in both groups: {} low risk, {} higher risk, {} excluded",
                groups.low_risk.len(),
                groups.higher_risk.len(),
                groups.excluded.len()
            ),
        });
    }
    fs::create_dir_all(output).map_err(|e| Failure::input(format!("{}: {e}", output.display())))?;
    let names: Vec<&str> = FeatureSet::NAMES.to_vec();
    let report = table_report(&records, &names);
    let buckets = buckets.unwrap_or_else(default_buckets);
    let trends: Vec<_> = names
        .iter()
        .map(|n| subgroup_trend(&records, n, &buckets))
        .collect();

    let write = |name: &str, text: &str| -> Result<(), Failure> {
        let p = output.join(name);
        fs::write(&p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
    };
    write("report.csv", &report.to_csv())?;
    let mut text = report.to_text();
    let _ = writeln!(text, "\nrank correlation with risk score");
    for t in &trends {
        let rho = t
            .spearman_rho
            .map_or("n/a".to_string(), |r| format!("{r:.3}"));
        let _ = writeln!(text, "  {:<24} {}", t.feature, rho);
    }
    write("report.txt", &text)?;
    write_json(&output.join("report.json"), &report)?;
    write_json(&output.join("trend.json"), &trends)?;

    // Long-format box-plot data: one row per group and feature.
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "feature",
        "group",
        "n",
        "q1",
        "median",
        "q3",
        "whisker_low",
        "whisker_high",
        "outliers",
    ]);
    let mut rows = Vec::new();
    for n in &names {
        for (g, recs) in [
            ("low_risk", &groups.low_risk),
            ("higher_risk", &groups.higher_risk),
        ] {
            if let Ok(b) = boxplot_summary(&feature_values(recs, n)) {
                rows.push((n.to_string(), g.to_string(), b));
            }
        }
        for bs in trends
            .iter()
            .find(|t| t.feature == *n)
            .map(|t| &t.buckets)
            .into_iter()
            .flatten()
        {
            if let Some(b) = &bs.summary {
                rows.push((
                    n.to_string(),
                    format!("score_{}", bs.bucket.label),
                    b.clone(),
                ));
            }
        }
    }
    for (n, g, b) in rows {
        let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
        let _ = w.write_record([
            n,
            g,
            b.n.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.whisker_low.to_string(),
            b.whisker_high.to_string(),
            outliers.join(";"),
        ]);
    }
    let data = w.into_inner().map_err(|e| Failure::input(e.to_string()))?;
    write("boxplots.csv", &String::from_utf8_lossy(&data))?;
    if !common.quiet {
        eprint!("{text}");
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            output,
            seed,
            common,
        } => simulate(&output, seed, &common),
        Command::Process {
            input,
            output,
            no_smooth,
            baseline_window,
            common,
        } => process(&input, &output, no_smooth, baseline_window, &common),
        Command::Extract {
            trace,
            annotation,
            output,
            no_smooth,
            common,
        } => extract(&trace, &annotation, &output, no_smooth, &common),
        Command::Cohort {
            features,
            output,
            buckets,
            common,
        } => cohort(&features, &output, buckets, &common),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "error: {}", f.message);
            f.code
        }
    }
}
