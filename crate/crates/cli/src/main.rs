use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxmon_cli::artifacts::{read_file, Layout};
use ctxmon_cli::stages::*;
use ctxmon_cli::{CliError, CliResult, ContextSource, PipelineConfig};
use ctxmon_core::eval::{render_report, ReportFormat};

#[derive(Parser)]
#[command(name = "ctxmon", version, about = "Context-aware safety monitoring pipeline")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration JSON. Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "ctxmon-out")]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct Selection {
    /// Margin in standard deviations: 0, 1, both, or any non-negative number.
    #[arg(long)]
    margin: Option<String>,
    #[arg(long, value_enum)]
    context: Option<ContextArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContextArg {
    Predicted,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training corpus.
    Generate(Common),
    /// Fit the mixture model and segment the corpus.
    Segment(Common),
    /// Learn per-subtask envelopes.
    Learn(Common),
    /// Build the fault-injection campaigns.
    Inject(Common),
    /// Run the monitor over every campaign trial.
    Monitor {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
    },
    /// Physics and vision failure labels for every campaign trial.
    Oracle(Common),
    /// Score segmentation and detection and write the report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long, value_enum, default_value = "md")]
        format: FormatArg,
    },
    /// All stages in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long, value_enum, default_value = "md")]
        format: FormatArg,
    },
}

fn load_config(common: &Common, selection: &Selection) -> CliResult<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_json(&read_file(path)?, &path.display().to_string())?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(m) = &selection.margin {
        cfg.monitor.margins = match m.as_str() {
            "both" => vec![0.0, 1.0],
            v => vec![v
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("--margin: `{v}` is not a number or `both`")))?],
        };
    }
    if let Some(c) = selection.context {
        cfg.monitor.contexts = vec![match c {
            ContextArg::Predicted => ContextSource::Predicted,
            ContextArg::Oracle => ContextSource::Oracle,
        }];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &ctxmon_core::eval::EvalReport, format: FormatArg) -> CliResult<()> {
    let f = match format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Md => ReportFormat::Markdown,
    };
    print!("{}", render_report(report, f)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::validation("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::runtime(e.to_string()))?;
    }
    let none = Selection::default();
    match cli.command {
        Command::Generate(c) => cmd_generate(&load_config(&c, &none)?, &Layout::new(c.out)).map(drop),
        Command::Segment(c) => cmd_segment(&load_config(&c, &none)?, &Layout::new(c.out)).map(drop),
        Command::Learn(c) => cmd_learn(&load_config(&c, &none)?, &Layout::new(c.out)).map(drop),
        Command::Inject(c) => cmd_inject(&load_config(&c, &none)?, &Layout::new(c.out)),
        Command::Monitor { common, selection } => {
            cmd_monitor(&load_config(&common, &selection)?, &Layout::new(common.out))
        }
        Command::Oracle(c) => cmd_oracle(&load_config(&c, &none)?, &Layout::new(c.out)),
        Command::Evaluate { common, selection, format } => {
            let report = cmd_evaluate(&load_config(&common, &selection)?, &Layout::new(common.out))?;
            print_report(&report, format)
        }
        Command::Pipeline { common, selection, format } => {
            let report = cmd_pipeline(&load_config(&common, &selection)?, &Layout::new(common.out))?;
            print_report(&report, format)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CTXMON_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
