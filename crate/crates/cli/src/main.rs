use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use pixelplan::bench::{emit_report, load_recipes, run_bench, BenchMode, BenchOptions, ReportFormat};
use pixelplan::engine::{Engine, EngineError, RunConfig, WorkersManifest};
use pixelplan::imagecore::{load_image, save_image};
use pixelplan::metrics::{psnr_y, ssim_y, MetricKind};
use pixelplan::profiles::{catalog_json, load_profile, preset, preset_names};
use pixelplan::restoration::{Phase, SelectionPolicy, Trace, TraceEvent};

const EXIT_USAGE: u8 = 1;
const EXIT_PIPELINE: u8 = 2;
const EXIT_CONNECTIVITY: u8 = 3;

#[derive(Parser)]
#[command(name = "pixelplan", version, about = "Agentic image restoration and super-resolution")]
struct Cli {
    /// Workers manifest binding remote tools, metrics and agents.
    #[arg(long, global = true, env = "PIXELPLAN_WORKERS")]
    workers: Option<PathBuf>,
    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Restore an image.
    Run {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Preset name, preset-style name, or a JSON/TOML profile file.
        #[arg(long)]
        profile: String,
        /// Leave slow tools out when the input is large.
        #[arg(long)]
        fast4k: bool,
        /// Write the JSONL decision trace here (also on failure).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Selection::Qmoe)]
        selection: Selection,
    },
    /// Perception and planning only; prints the plan as JSON.
    Plan {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        profile: String,
    },
    /// Evaluate a corpus (`hq/`, optional `lq/` and `recipes.json`).
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        profile: String,
        /// Report path; format follows the extension unless --format is given.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value_t = Mode::Pipeline)]
        mode: Mode,
        /// Recipe file used when the corpus has neither `lq/` nor `recipes.json`.
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Leave runtimes out so reports are byte-reproducible.
        #[arg(long)]
        no_runtime: bool,
        #[arg(long)]
        fast4k: bool,
    },
    /// Profile catalog.
    Profiles {
        #[command(subcommand)]
        action: ProfilesAction,
    },
    /// List registered tools as manifest JSON.
    Tools,
    /// Score an image with the configured metrics.
    Metrics {
        #[arg(short, long)]
        input: PathBuf,
        /// Reference image; adds PSNR and SSIM.
        #[arg(short, long)]
        reference: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ProfilesAction {
    List {
        /// Full catalog rows instead of names.
        #[arg(long)]
        json: bool,
    },
    Show {
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    Qmoe,
    FirstAcceptable,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pipeline,
    BicubicOnly,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    fn pipeline(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_PIPELINE, message: message.to_string() }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            _ if e.is_connectivity() => EXIT_CONNECTIVITY,
            EngineError::Config(_) => EXIT_USAGE,
            _ => EXIT_PIPELINE,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => tracing_subscriber::filter::LevelFilter::WARN,
        1 => tracing_subscriber::filter::LevelFilter::INFO,
        _ => tracing_subscriber::filter::LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn engine(workers: Option<&Path>) -> Result<Engine, Failure> {
    match workers {
        None => Ok(Engine::native()),
        Some(p) => Ok(Engine::from_manifest(&WorkersManifest::load(p)?)?),
    }
}

fn run_config(profile: &str, fast4k: bool) -> Result<RunConfig, Failure> {
    let profile = load_profile(profile).map_err(Failure::usage)?;
    let mut cfg = RunConfig::new(profile);
    cfg.fast4k = fast4k;
    Ok(cfg)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(v: &impl serde::Serialize) {
    emit(&(serde_json::to_string_pretty(v).expect("serializes") + "\n"));
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let workers = cli.workers.as_deref();
    match cli.command {
        Command::Run { input, output, profile, fast4k, trace, selection } => {
            let log = Trace::new();
            let res = run(workers, &input, &output, &profile, fast4k, selection, &log);
            if let Err(f) = &res {
                if !log.events().iter().any(|e| e.phase == Phase::Error) {
                    log.push(TraceEvent::new(Phase::Error, "failed").detail(f.message.clone()));
                }
            }
            if let Some(path) = trace {
                if let Err(e) = log.write(&path) {
                    eprintln!("error: cannot write trace {}: {e}", path.display());
                }
            }
            res
        }
        Command::Plan { input, profile } => {
            let cfg = run_config(&profile, false)?;
            let engine = engine(workers)?;
            let img = load_image(&input).map_err(Failure::usage)?;
            let report = engine.perceive(&img, &cfg, &Trace::new())?;
            print_json(&report);
            Ok(())
        }
        Command::Bench { corpus, profile, out, format, mode, recipe, traces, no_runtime, fast4k } => {
            let cfg = run_config(&profile, fast4k)?;
            let engine = engine(workers)?;
            let format = match format {
                Some(Format::Csv) => ReportFormat::Csv,
                Some(Format::Json) => ReportFormat::Json,
                None if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => ReportFormat::Json,
                None => ReportFormat::Csv,
            };
            let default_recipe = match recipe {
                Some(p) => {
                    let mut map = load_recipes(&p).map_err(Failure::usage)?;
                    Some(map.remove("*").ok_or_else(|| Failure::usage(format!("{}: no \"*\" entry", p.display())))?)
                }
                None => None,
            };
            let opts = BenchOptions {
                mode: match mode {
                    Mode::Pipeline => BenchMode::Pipeline,
                    Mode::BicubicOnly => BenchMode::BicubicOnly,
                },
                default_recipe,
                traces_dir: traces,
                record_runtime: !no_runtime,
            };
            let report = run_bench(&corpus, &engine, &cfg, &opts).map_err(Failure::pipeline)?;
            emit_report(&report, format, &out).map_err(Failure::pipeline)?;
            print_json(&report.mean);
            Ok(())
        }
        Command::Profiles { action: ProfilesAction::List { json } } => {
            if json {
                emit(&catalog_json());
            } else {
                emit(&preset_names().iter().map(|n| format!("{n}\n")).collect::<String>());
            }
            Ok(())
        }
        Command::Profiles { action: ProfilesAction::Show { name } } => {
            let profile = preset(&name).or_else(|_| load_profile(&name)).map_err(Failure::usage)?;
            emit(&(profile.to_json() + "\n"));
            Ok(())
        }
        Command::Tools => {
            let engine = engine(workers)?;
            let text = engine.registry.to_manifest_json().map_err(Failure::pipeline)?;
            emit(&format!("{}\n", text.trim_end()));
            Ok(())
        }
        Command::Metrics { input, reference } => {
            let engine = engine(workers)?;
            let img = load_image(&input).map_err(Failure::usage)?;
            let kinds: Vec<MetricKind> = engine.suite.configured().into_iter().filter(|k| !k.is_full_reference()).collect();
            let mut report = engine.suite.report(&img, &kinds, None);
            if let Some(r) = reference {
                let reference = load_image(&r).map_err(Failure::usage)?;
                report.insert_score(MetricKind::Psnr, psnr_y(&reference, &img).map_err(Failure::usage)?);
                report.insert_score(MetricKind::Ssim, ssim_y(&reference, &img).map_err(Failure::usage)?);
            }
            print_json(&report);
            Ok(())
        }
    }
}

fn run(
    workers: Option<&Path>,
    input: &Path,
    output: &Path,
    profile: &str,
    fast4k: bool,
    selection: Selection,
    trace: &Trace,
) -> Result<(), Failure> {
    let mut cfg = run_config(profile, fast4k)?;
    cfg.policy = match selection {
        Selection::Qmoe => SelectionPolicy::QMoe,
        Selection::FirstAcceptable => SelectionPolicy::FirstAcceptable,
    };
    let engine = engine(workers)?;
    let img = load_image(input).map_err(Failure::usage)?;
    let report = engine.run(&img, Some(input), &cfg, trace)?;
    save_image(&report.image, output).map_err(Failure::pipeline)?;
    print_json(&json!({
        "output": output.display().to_string(),
        "size": [report.image.width(), report.image.height()],
        "degradations": report.perception.perception.degradations,
        "plan": report.perception.plan.steps,
        "executed": report.executed.iter().map(|s| json!({
            "task": s.item.task,
            "scale": s.item.scale,
            "tool_id": s.tool_id,
            "q_s": s.q_s,
            "compromise": s.compromise,
        })).collect::<Vec<_>>(),
        "rollbacks": report.rollbacks,
        "compromised": report.compromised,
        "sr_step_survived": report.sr_step_survived,
        "face": report.face,
    }));
    Ok(())
}
