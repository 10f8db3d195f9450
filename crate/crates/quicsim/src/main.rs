use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use quicsim_core::harness::{
    run_batch, write_outputs, ExperimentConfig, ExperimentResult, HarnessError,
};
use quicsim_core::ConfigError;

#[derive(Parser)]
#[command(
    name = "quicsim",
    version,
    about = "QUIC congestion control experiments on a simulated dumb-bell network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its traces and summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Congestion control algorithm: newreno, vegas or quic.
        #[arg(long)]
        cc: Option<String>,
    },
    /// Run the same experiment once per algorithm, each into <out>/<cc>/.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms.
        #[arg(long, default_value = "newreno,vegas,quic", value_delimiter = ',')]
        ccs: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulated duration, e.g. 18s or 500ms.
    #[arg(long)]
    duration: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value settings applied after the file, in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.duration {
        cfg.set("duration", d)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn report(cfg: &ExperimentConfig, result: &ExperimentResult) {
    let s = &result.summary;
    println!(
        "{:<8} goodput {:>8.1} kbps  utilization {:>5.1}%  jain {:.3}",
        s.cc,
        s.total_goodput_bps / 1e3,
        s.bottleneck_utilization * 100.0,
        s.jain_index
    );
    for f in &s.flows {
        println!(
            "  flow {}: {:>8.1} kbps  mean rtt {:>7.1} ms  steady cwnd {:>7.0} B  lost {}  rto {}",
            f.flow,
            f.goodput_bps / 1e3,
            f.mean_rtt_ms,
            f.steady_cwnd_bytes,
            f.packets_lost,
            f.rto_count
        );
    }
    if let Some(dir) = &cfg.output_dir {
        println!("  results in {}", dir.display());
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfgs = match &cli.command {
        Command::Run { common, cc } => {
            let mut cfg = load(common)?;
            if let Some(cc) = cc {
                cfg.cc = cc.clone();
            }
            vec![cfg]
        }
        Command::Compare { common, ccs } => {
            let base = load(common)?;
            ccs.iter()
                .map(|cc| {
                    let mut cfg = base.clone();
                    cfg.cc = cc.trim().to_string();
                    cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(&cfg.cc));
                    cfg
                })
                .collect()
        }
    };
    for cfg in &cfgs {
        cfg.validate()?;
    }
    let started = Instant::now();
    let results = run_batch(&cfgs);
    let mut violations = Vec::new();
    for (cfg, result) in cfgs.iter().zip(results) {
        let result = result?;
        if let Some(dir) = &cfg.output_dir {
            write_outputs(&result, dir)?;
        }
        report(cfg, &result);
        violations.extend(
            result
                .summary
                .violations
                .iter()
                .map(|v| format!("{}: {v}", cfg.cc)),
        );
    }
    eprintln!(
        "{} run(s) in {:.2} s",
        cfgs.len(),
        started.elapsed().as_secs_f64()
    );
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(violations.join("\n")))
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("invariant violations:\n{msg}");
            ExitCode::from(2)
        }
    }
}
