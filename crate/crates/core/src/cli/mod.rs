//! Command-line frontend.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid configuration,
//! 3 validation failure, 4 I/O error.

mod report;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use crate::engine::{Engine, EngineError, MonotonicTimer, Timer, Verdict};
use crate::metrics::summarize;
use crate::planner::{emit_json, parse_json, Backend, BackendArg, ConfigArgs, ConfigError, RunConfig};
use crate::suites::{self, SuiteParams};

pub use report::{emit_report, fmt_sig, render_report, Destination, Format, OutputSpec, CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Gather/scatter memory bandwidth benchmark.
///
/// Give one configuration with -k/-p/-d/-l, a JSON batch with -f, or a
/// built-in suite with --suite. Thread placement is left to the OS; pin
/// with taskset/numactl or OMP_PLACES-style launchers if needed.
#[derive(Debug, Parser)]
#[command(name = "gsbench", version)]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// JSON file holding an array of configurations
    #[arg(short = 'f', long = "file")]
    pub file: Option<PathBuf>,
    /// Built-in suite: ustride-gather, ustride-scatter, stream, apps, apps-gather, apps-scatter
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the report here instead of standard output
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    /// Check every config against a reference interpreter before timing
    #[arg(long)]
    pub validate: bool,
    /// Bytes each suite config should move per run
    #[arg(long = "target-bytes")]
    pub target_bytes: Option<u64>,
    /// Upper bound on a suite config's footprint; counts shrink to fit
    #[arg(long = "max-arena-bytes")]
    pub max_arena_bytes: Option<u64>,
    /// Reference values (one per config, comma separated) to correlate bandwidths against
    #[arg(long, value_delimiter = ',')]
    pub reference: Option<Vec<f64>>,
    /// Write the batch as a JSON config file and exit without running
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Leave percent-of-baseline data out of the report
    #[arg(long)]
    pub no_normalized: bool,
    /// Leave bandwidth-bandwidth plot data out of JSON reports
    #[arg(long)]
    pub no_bwbw: bool,
}

/// A batch plus the index of its stride-1 baseline, when it has one.
pub struct Batch {
    pub configs: Vec<RunConfig>,
    pub baseline: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Usage(m) => Failure::Usage(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn apply_overrides(config: &mut RunConfig, args: &ConfigArgs) -> Result<(), Failure> {
    if let Some(r) = args.runs {
        config.runs = r;
    }
    match (args.backend, args.threads) {
        (None, None) => {}
        (Some(BackendArg::Serial), Some(t)) if t != 1 => {
            return Err(Failure::Usage(format!(
                "-t/--threads {t} conflicts with -b serial"
            )))
        }
        (Some(BackendArg::Serial), _) => config.backend = Backend::Serial,
        (_, Some(0)) => return Err(Failure::Usage("-t/--threads must be at least 1".into())),
        (_, Some(t)) => config.backend = Backend::Parallel { threads: t },
        (Some(BackendArg::Parallel), None) => {
            if config.backend == Backend::Serial {
                config.backend = Backend::Parallel {
                    threads: crate::planner::default_threads(),
                }
            }
        }
    }
    config.check().map_err(Failure::from)
}

fn build_batch(cli: &Cli) -> Result<Batch, Failure> {
    let sources = [cli.config.any_set(), cli.file.is_some(), cli.suite.is_some()];
    match sources.iter().filter(|&&s| s).count() {
        0 => {
            return Err(Failure::Usage(
                "nothing to run: give -k/-p/-d/-l, -f <json> or --suite <name>".into(),
            ))
        }
        1 => {}
        _ => {
            return Err(Failure::Usage(
                "-k/-p/-d/-l, -f and --suite are mutually exclusive".into(),
            ))
        }
    }

    if cli.config.any_set() {
        let config = cli.config.clone().into_config()?;
        return Ok(Batch {
            configs: vec![config],
            baseline: None,
        });
    }

    if let Some(path) = &cli.file {
        let doc = fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut configs = parse_json(&doc)?;
        if configs.is_empty() {
            return Err(Failure::Config("JSON file contains no configurations".into()));
        }
        for c in &mut configs {
            apply_overrides(c, &cli.config)?;
        }
        return Ok(Batch {
            configs,
            baseline: None,
        });
    }

    let name = cli.suite.as_deref().unwrap_or_default();
    let mut params = SuiteParams::default();
    if let Some(t) = cli.target_bytes {
        if t == 0 {
            return Err(Failure::Usage("--target-bytes must be at least 1".into()));
        }
        params.target_bytes = t;
    }
    if let Some(m) = cli.max_arena_bytes {
        params.max_arena_bytes = m;
    }
    let suite = suites::by_name(name, &params).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut configs = suite.configs;
    for c in &mut configs {
        apply_overrides(c, &cli.config)?;
    }
    Ok(Batch {
        configs,
        baseline: Some(suite.baseline_index),
    })
}

fn execute<T: Timer>(cli: &Cli, timer: T, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let batch = build_batch(cli)?;

    if let Some(path) = &cli.export {
        fs::write(path, emit_json(&batch.configs) + "\n")
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        return Ok(());
    }
    if let Some(reference) = &cli.reference {
        if reference.len() != batch.configs.len() {
            return Err(Failure::Usage(format!(
                "--reference has {} values for {} configurations",
                reference.len(),
                batch.configs.len()
            )));
        }
    }

    let mut engine = Engine::for_batch(&batch.configs, timer)?;

    if cli.validate {
        for config in &batch.configs {
            match engine.validate(config)? {
                Verdict::Pass => {}
                Verdict::Fail(m) => {
                    return Err(Failure::Validation(format!(
                        "validation failed for {}: {m}",
                        config.display_name()
                    )))
                }
            }
        }
    }

    let results = engine.sweep(&batch.configs)?;
    let baseline = batch.baseline.map(|i| results[i].bandwidth_mb_s);
    let report = summarize(results, baseline, cli.reference.as_deref())
        .map_err(|e| Failure::Config(e.to_string()))?;

    let spec = OutputSpec {
        format: cli.format,
        destination: cli
            .output
            .clone()
            .map_or(Destination::Stdout, Destination::Path),
        include_normalized: !cli.no_normalized,
        include_bwbw: !cli.no_bwbw,
    };
    emit_report(&report, &spec, stdout).map_err(|e| Failure::Io(format!("cannot write report: {e}")))?;
    // kept off the report so reports stay byte-stable
    writeln!(stderr, "checksum: {}", engine.checksum()).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(())
}

/// Parses `args` (without the program name) and runs with `timer`.
pub fn run_with_timer<I, S, T>(args: I, timer: T, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
    T: Timer,
{
    let argv = std::iter::once(std::ffi::OsString::from("gsbench")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, timer, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "gsbench: {}", f.message());
            f.code()
        }
    }
}

/// Entry point used by the binary: real clock, process stdout/stderr.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_timer(args, MonotonicTimer, &mut stdout.lock(), &mut stderr.lock())
}
