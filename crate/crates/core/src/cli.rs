//! Command-line front end: `run`, `report`, `compare` and `synth`.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on I/O
//! errors. Diagnostics go to standard error; results go to `--out` files or
//! standard output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::detectors::{DetectorKind, DetectorSpec, HyperValue};
use crate::error::{Error, Result};
use crate::protocol::{self, AggregateReport, Mode, RunConfig};
use crate::report::{self, RenderOptions, SortKey};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "oodeval", version, about = "Post-hoc OOD detector evaluation over exported representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit, optionally tune, and evaluate detectors on a manifest.
    Run(RunArgs),
    /// Render a report JSON as a leaderboard.
    Report(ReportArgs),
    /// Per-detector metric deltas between two reports (B minus A).
    Compare(CompareArgs),
    /// Write a synthetic benchmark directory.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Detector kind, optionally with hyperparameters: `ash:p=90,variant=S`.
    /// Repeatable.
    #[arg(long = "detector", value_name = "KIND")]
    detectors: Vec<String>,
    #[arg(long)]
    all_detectors: bool,
    /// Tune hyperparameters on the validation splits.
    #[arg(long, overrides_with = "no_search")]
    search: bool,
    #[arg(long, overrides_with = "search")]
    no_search: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism). 1 runs serially.
    #[arg(long, env = "OODEVAL_THREADS")]
    threads: Option<usize>,
    /// Report JSON path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Fullspectrum,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Standard => Mode::Standard,
            ModeArg::Fullspectrum => Mode::FullSpectrum,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    /// Include AUPR with ID as the positive class.
    #[arg(long)]
    aupr_in: bool,
    /// near-auroc, far-auroc, near-fpr95, far-fpr95, id-acc or name.
    #[arg(long, default_value = "near-auroc")]
    sort_by: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Samples per split.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    delta_near: f64,
    #[arg(long, default_value_t = 4.0)]
    delta_far: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma_cov: f64,
    #[arg(long, default_value_t = 1.0)]
    direction_mix: f64,
    /// Omit the extra feature layer.
    #[arg(long)]
    no_extra_layer: bool,
}

/// Parses `kind` or `kind:name=value,name=value`.
pub fn parse_detector(arg: &str) -> Result<DetectorSpec> {
    let (kind, rest) = match arg.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (arg, None),
    };
    let mut spec = DetectorSpec::new(kind.trim().parse::<DetectorKind>()?);
    for pair in rest.into_iter().flat_map(|r| r.split(',')).filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::InvalidHyperparam {
            kind: spec.kind.name().to_string(),
            detail: format!("expected name=value, got `{pair}`"),
        })?;
        let value = match v.trim().parse::<f64>() {
            Ok(x) => HyperValue::Number(x),
            Err(_) => HyperValue::Text(v.trim().to_string()),
        };
        spec.hyperparams.insert(k.trim().to_string(), value);
    }
    spec.params()?;
    Ok(spec)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run_config(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.manifest) {
        (Some(c), _) => RunConfig::load(c)?,
        (None, Some(m)) => RunConfig::new(m),
        (None, None) => return Err(Error::ConfigInvalid("either --manifest or --config is required".into())),
    };
    if let Some(m) = args.manifest {
        cfg.manifest = m;
    }
    for d in &args.detectors {
        cfg.detectors.push(parse_detector(d)?.into());
    }
    cfg.all_detectors |= args.all_detectors;
    if args.search {
        cfg.search = true;
    }
    if args.no_search {
        cfg.search = false;
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    Ok(cfg)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => {
            let out = args.out.clone();
            let cfg = run_config(args)?;
            let report = protocol::run(&cfg)?;
            for d in &report.detectors {
                if let Some(reason) = &d.skip_reason {
                    eprintln!("skipped {}: {reason}", d.name);
                }
            }
            emit(out.as_deref(), &report.to_json())
        }
        Command::Report(args) => {
            let rep = AggregateReport::load(&args.report)?;
            let opts = RenderOptions {
                sort: args.sort_by.parse::<SortKey>()?,
                aupr_in: args.aupr_in,
            };
            let text = match args.format {
                Format::Md => report::to_markdown(&rep, &opts),
                Format::Csv => report::to_csv(&rep, &opts),
                Format::Json => report::to_json(&rep),
            };
            emit(args.out.as_deref(), &text)
        }
        Command::Compare(args) => {
            let a = AggregateReport::load(&args.a)?;
            let b = AggregateReport::load(&args.b)?;
            emit(args.out.as_deref(), &report::compare(&a, &b)?.to_markdown())
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                seed: args.seed,
                dim: args.d,
                num_classes: args.classes,
                n: args.n,
                delta_near: args.delta_near,
                delta_far: args.delta_far,
                sigma_cov: args.sigma_cov,
                direction_mix: args.direction_mix,
                extra_layer: !args.no_extra_layer,
            };
            let path = synth::generate(&spec, &args.out)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_argument_forms() {
        assert_eq!(parse_detector("msp").unwrap(), DetectorSpec::new(DetectorKind::Msp));
        let ash = parse_detector("ash:p=80,variant=B").unwrap();
        assert_eq!(ash, DetectorSpec::new(DetectorKind::Ash).with("p", 80.0).with("variant", "B"));
        match parse_detector("nosuch") {
            Err(Error::UnknownDetector { name, valid }) => {
                assert_eq!(name, "nosuch");
                assert!(valid.contains("msp") && valid.contains("openmax"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_detector("knn:k").is_err());
    }

    #[test]
    fn usage_and_io_errors() {
        assert_eq!(main(["oodeval", "run", "--detector", "msp"]), 1);
        assert_eq!(main(["oodeval", "run", "--manifest", "/nonexistent/m.json", "--detector", "msp"]), 2);
    }
}
