//! `splitplan`: layer-wise size analysis, split planning, bandwidth sweeps,
//! bottleneck tradeoff reports and emulated tensor transfers.

mod commands;
mod config;
mod data;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::Config;

/// Exit codes: 0 success, 1 invalid input, 2 internal failure.
#[derive(Parser)]
#[command(name = "splitplan", version, about = "Split-computing planner for two-stage CNN object detectors")]
struct Cli {
    /// TOML file; its [command] tables supply defaults for that command's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a model graph as JSON.
    Graph(GraphArgs),
    /// Layer-wise payload ratios and cumulative parameters.
    Analyze(AnalyzeArgs),
    /// Rank every split cut for one channel.
    Plan(PlanArgs),
    /// Best cut across a bandwidth range.
    Sweep(SweepArgs),
    /// Bottleneck size ratios joined with supplied mAP data.
    Tradeoff(TradeoffArgs),
    /// Send one framed tensor over an emulated channel.
    Transfer(TransferArgs),
    /// List the built-in device running times.
    Devices,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Catalog name (e.g. faster_rcnn_r50, mask_rcnn_r50+bottleneck:C=3) or a graph JSON file.
    #[arg(long)]
    pub model: Option<String>,
    /// Model input as CxHxW [default: 3x800x800].
    #[arg(long)]
    pub input: Option<String>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GraphArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// csv or json [default: csv].
    #[arg(long)]
    pub format: Option<String>,
    /// Write profile, params and SVG plots here instead of printing the profile.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TimingArgs {
    /// Mobile device: built-in name (rpi4, jetson_tx2, desktop_gpu) or profile JSON file.
    #[arg(long)]
    pub mobile: Option<String>,
    /// Edge device: built-in name or profile JSON file.
    #[arg(long)]
    pub edge: Option<String>,
    /// Round-trip latency in seconds [default: 0].
    #[arg(long)]
    pub rtt: Option<f64>,
    /// Compression factor applied to payload bytes, in (0, 1] [default: 1].
    #[arg(long)]
    pub payload_scale: Option<f64>,
    /// f32, f16 or u8 [default: f32].
    #[arg(long)]
    pub dtype: Option<String>,
    /// How built-in totals spread over nodes: macs or params [default: macs].
    #[arg(long)]
    pub weight: Option<String>,
    /// Also charge sending detections back to the mobile device.
    #[arg(long)]
    #[serde(default)]
    pub include_return: bool,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub timing: TimingArgs,
    /// Link rate, e.g. 100Mbps, 5.5Mbps, 800Kbps; bare numbers are Mbps.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// json or csv [default: json].
    #[arg(long)]
    pub format: Option<String>,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub timing: TimingArgs,
    /// start:end:log|lin[:points], bounds as in --bandwidth [default: 0.1:1000:log:41].
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// csv or json [default: csv].
    #[arg(long)]
    pub format: Option<String>,
    /// Write the table and an SVG curve here instead of printing the table.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TradeoffArgs {
    /// CSV with columns detector,C,bbox_map,mask_map,source; C=original marks the baseline.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// faster_rcnn or mask_rcnn [default: mask_rcnn].
    #[arg(long)]
    pub detector: Option<String>,
    /// Comma-separated bottleneck channel counts [default: 3,6,9,12,15].
    #[arg(long)]
    pub channels: Option<String>,
    /// Bottleneck spatial divisor: 2, 4 or 8 [default: 4].
    #[arg(long)]
    pub divisor: Option<usize>,
    /// Average input as CxHxW [default: 3x874x1044].
    #[arg(long)]
    pub input: Option<String>,
    /// csv or json [default: csv].
    #[arg(long)]
    pub format: Option<String>,
    /// Write the table and an SVG plot here instead of printing the table.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TransferArgs {
    /// Tensor shape, e.g. 3x800x800 [default: 3x800x800].
    #[arg(long)]
    pub shape: Option<String>,
    /// f32, f16 or u8 [default: f32].
    #[arg(long)]
    pub dtype: Option<String>,
    /// random, smooth or zero [default: random].
    #[arg(long)]
    pub source: Option<String>,
    /// none or deflate [default: none].
    #[arg(long)]
    pub codec: Option<String>,
    /// Emulated link rate [default: 100Mbps].
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// One-way latency in seconds [default: 0].
    #[arg(long)]
    pub latency: Option<f64>,
    /// tcp or pipe [default: tcp].
    #[arg(long)]
    pub transport: Option<String>,
    /// Loopback TCP port, 0 for any free port [default: 45511].
    #[arg(long)]
    pub port: Option<u16>,
    /// Seed for the random source [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Marks an error as caused by user input (exit code 1).
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use splitplan_core::Error as E;
    for cause in err.chain() {
        if cause.is::<InvalidInput>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Framing(_) | E::Protocol(_) | E::Corruption { .. } | E::IncompleteFrame { .. } => 2,
                _ => 1,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref().map(Config::load).transpose()?;
    let config = config.as_ref();
    match cli.command {
        Command::Graph(a) => commands::graph(Config::apply(config, "graph", a)?),
        Command::Analyze(a) => commands::analyze(Config::apply(config, "analyze", a)?),
        Command::Plan(a) => commands::plan(Config::apply(config, "plan", a)?),
        Command::Sweep(a) => commands::sweep(Config::apply(config, "sweep", a)?),
        Command::Tradeoff(a) => commands::tradeoff(Config::apply(config, "tradeoff", a)?),
        Command::Transfer(a) => commands::transfer(Config::apply(config, "transfer", a)?),
        Command::Devices => commands::devices(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
