use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nstrace::ingest::{emit_canonical, InputFormat};
use nstrace::intensity::{gemm_intensity, GemmDims, MachineModel};
use nstrace::pipeline::{self, exit, PipelineError, RunConfig};
use nstrace::report::{self, OutputFormat, ReportError, SvgOptions};
use nstrace::taxonomy::{resolve_rules, RuleError, RuleSet};
use nstrace::units::{parse_duration, UnitError};
use nstrace::Execution;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const RULES_ENV: &str = "NSTRACE_RULES";

#[derive(Parser)]
#[command(name = "nstrace", version, about = "Characterize profiler traces by operation category")]
struct Cli {
    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Run on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a trace in the canonical JSON format.
    Convert {
        input: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
        /// Label stored in the output (defaults to the input's).
        #[arg(long)]
        label: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Per-category runtime breakdown of each input.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "table")]
        emit: String,
        /// Split CPU and GPU time into separate rows.
        #[arg(long)]
        per_device: bool,
        /// Multiply every row by a repetition count (frames, steps).
        #[arg(long, value_name = "N")]
        multiplier: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Category-proportion matrix, one row per input.
    Heatmap {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "csv")]
        emit: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-category difference between two runs (A − B).
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
        #[command(flatten)]
        rules: RulesArg,
        #[arg(long, value_parser = parse_wall)]
        baseline_wall: Option<i64>,
        #[arg(long, default_value = "table")]
        emit: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Operational intensity of one GEMM, or of every shaped op in traces.
    Intensity {
        #[arg(long, requires_all = ["k", "n"])]
        m: Option<u64>,
        #[arg(long, requires_all = ["m", "n"])]
        k: Option<u64>,
        #[arg(long, requires_all = ["m", "k"])]
        n: Option<u64>,
        /// Bytes per element: 1, 2, 4 or 8.
        #[arg(long, default_value_t = 4)]
        bytes: u64,
        /// Machine balance in FLOPs per byte.
        #[arg(long)]
        balance: Option<f64>,
        #[arg(long, default_value = "table")]
        emit: String,
        /// Traces to scan when no dimensions are given.
        #[arg(conflicts_with = "m")]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        parse: ParseArgs,
        #[command(flatten)]
        rules: RulesArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Rule file utilities.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Validate a rule file and optionally classify names with it.
    Check {
        /// Path or builtin:NAME.
        source: String,
        /// Names to classify (as CPU ops without shapes).
        #[arg(long = "name")]
        names: Vec<String>,
    },
}

#[derive(Args, Clone)]
struct ParseArgs {
    /// Input format; sniffed from content when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<InputFormat>,
    /// Reject unknown fields in canonical input.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Clone)]
struct RulesArg {
    /// Rule file path or builtin:ml8 / builtin:symbolic.
    #[arg(long, env = RULES_ENV, default_value = "builtin:ml8")]
    rules: String,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Trace files or directories of traces.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    parse: ParseArgs,
    #[command(flatten)]
    rules: RulesArg,
    /// Wall time of an unprofiled run ("90ms", "1.5s", integer ns).
    #[arg(long, value_parser = parse_wall)]
    baseline_wall: Option<i64>,
    /// Report unscaled times even with --baseline-wall.
    #[arg(long)]
    raw: bool,
    /// Truncate partially overlapping spans instead of failing.
    #[arg(long)]
    clip: bool,
}

#[derive(Args, Clone)]
struct OutArgs {
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Prefix table and SVG output with a generation timestamp.
    #[arg(long)]
    stamp: bool,
    #[arg(long, default_value_t = 900)]
    svg_width: u32,
    #[arg(long, default_value_t = 480)]
    svg_height: u32,
    /// Comma-separated segment colors.
    #[arg(long, value_delimiter = ',')]
    svg_palette: Vec<String>,
}

impl OutArgs {
    fn svg(&self) -> SvgOptions {
        let mut o = SvgOptions { width: self.svg_width, height: self.svg_height, ..SvgOptions::default() };
        if !self.svg_palette.is_empty() {
            o.palette = self.svg_palette.clone();
        }
        o
    }
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    s.parse()
}

fn parse_wall(s: &str) -> Result<i64, UnitError> {
    parse_duration(s)
}

fn emit_format(s: &str) -> Result<OutputFormat> {
    Ok(s.parse::<OutputFormat>()?)
}

fn exec_mode(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_rules(arg: &RulesArg) -> Result<RuleSet> {
    Ok(resolve_rules(&arg.rules)?)
}

fn run_config(run: &RunArgs, exec: Execution) -> RunConfig {
    RunConfig {
        inputs: run.inputs.clone(),
        format: run.parse.format,
        strict: run.parse.strict,
        clip: run.clip,
        baseline_wall_ns: run.baseline_wall,
        raw: run.raw,
        exec,
        ..RunConfig::default()
    }
}

fn write_output(out: &OutArgs, format: OutputFormat, body: Vec<u8>) -> Result<()> {
    let mut bytes = Vec::new();
    if out.stamp {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        match format {
            OutputFormat::Table => bytes.extend(format!("generated at unix time {secs}\n\n").into_bytes()),
            OutputFormat::Svg => bytes.extend(format!("<!-- generated at unix time {secs} -->\n").into_bytes()),
            OutputFormat::Csv | OutputFormat::Json => log::warn!("--stamp only applies to table and svg output"),
        }
    }
    bytes.extend(body);
    write_bytes(out.output.as_deref(), &bytes)
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn analyze(config: &RunConfig, rules: &RuleSet) -> Result<Vec<pipeline::Analysis>> {
    let analyses = pipeline::run(config, rules)?;
    for a in &analyses {
        eprintln!("{}", a.summary());
    }
    Ok(analyses)
}

fn run(cli: Cli) -> Result<()> {
    let exec = exec_mode(&cli);
    match cli.command {
        Command::Convert { input, parse, label, output } => {
            let mut set = pipeline::load_trace(&input, parse.format, parse.strict)?;
            if let Some(label) = label {
                set.label = label;
            }
            write_bytes(output.as_deref(), &emit_canonical(&set))
        }
        Command::Report { run, emit, per_device, multiplier, out } => {
            let format = emit_format(&emit)?;
            let rules = load_rules(&run.rules)?;
            let analyses = analyze(&run_config(&run, exec), &rules)?;
            let mut rows = pipeline::breakdowns(&analyses, &rules, per_device, exec)?;
            if let Some(n) = multiplier {
                if n == 0 {
                    return Err(PipelineError::Usage("--multiplier must be at least 1".into()).into());
                }
                rows = rows.iter().map(|b| report::scale_to_pipeline(b, n)).collect::<Result<_, _>>()?;
            }
            let body = report::emit_breakdowns(&rows, &rules.taxonomy(), format, &out.svg())?;
            write_output(&out, format, body)
        }
        Command::Heatmap { run, emit, out } => {
            let format = emit_format(&emit)?;
            let rules = load_rules(&run.rules)?;
            let analyses = analyze(&run_config(&run, exec), &rules)?;
            let rows = pipeline::breakdowns(&analyses, &rules, false, exec)?;
            let matrix = report::heatmap(&rows)?;
            let body = report::emit_matrix(&matrix, format, &out.svg())?;
            write_output(&out, format, body)
        }
        Command::Diff { a, b, parse, rules, baseline_wall, emit, out } => {
            let format = emit_format(&emit)?;
            let rules = load_rules(&rules)?;
            let config = RunConfig {
                inputs: vec![a, b],
                format: parse.format,
                strict: parse.strict,
                baseline_wall_ns: baseline_wall,
                exec,
                ..RunConfig::default()
            };
            let analyses = analyze(&config, &rules)?;
            if analyses.len() != 2 {
                return Err(PipelineError::Usage("diff takes two trace files, not directories".into()).into());
            }
            let rows = pipeline::breakdowns(&analyses, &rules, false, exec)?;
            let d = report::diff(&rows[0], &rows[1])?;
            write_output(&out, format, report::emit_diff(&d, format)?)
        }
        Command::Intensity { m, k, n, bytes, balance, emit, inputs, parse, rules, out } => {
            let format = emit_format(&emit)?;
            let machine = balance.map(MachineModel::from_balance).transpose().map_err(PipelineError::from)?;
            let rows = match (m, k, n) {
                (Some(m), Some(k), Some(n)) => {
                    let dims = GemmDims::new(m, k, n).map_err(|e| PipelineError::Usage(e.to_string()))?;
                    let est = gemm_intensity(dims, bytes).map_err(|e| PipelineError::Usage(e.to_string()))?;
                    vec![pipeline::intensity_row("gemm", "DenseMM", vec![vec![m, k], vec![k, n]], 1, &est, machine.as_ref())]
                }
                _ if !inputs.is_empty() => {
                    let rules = load_rules(&rules)?;
                    let config = RunConfig { inputs, format: parse.format, strict: parse.strict, exec, ..RunConfig::default() };
                    let analyses = analyze(&config, &rules)?;
                    pipeline::intensity_rows(&analyses, &rules, bytes, machine.as_ref())?
                }
                _ => return Err(PipelineError::Usage("give --m, --k and --n, or trace files".into()).into()),
            };
            write_output(&out, format, pipeline::emit_intensity(&rows, format)?)
        }
        Command::Rules { command: RulesCommand::Check { source, names } } => {
            let rules = resolve_rules(&source)?;
            eprintln!(
                "{}: taxonomy {} with {} categories and {} rules",
                source,
                rules.taxonomy_name,
                rules.categories.len(),
                rules.rules.len()
            );
            let mut text = String::new();
            for name in names {
                let category = rules.classify_name(&name, nstrace::Device::Cpu, false);
                text.push_str(&format!("{name}\t{}\n", category.category));
            }
            write_bytes(None, text.as_bytes())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let code = if let Some(e) = err.downcast_ref::<PipelineError>() {
        e.exit_code()
    } else if err.downcast_ref::<RuleError>().is_some() {
        exit::CONFIG
    } else if let Some(e) = err.downcast_ref::<ReportError>() {
        PipelineError::Report(e.clone()).exit_code()
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        exit::INPUT
    } else {
        1
    };
    code as u8
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::USAGE as u8),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes whose text a wrapper already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}
