use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qnmh::commands::{self, CommandError};
use qnmh::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "qnmh", version, about = "Quasi-Newton particle Metropolis-Hastings experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; keys not present take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications and grid cells.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set from the configured model at `theta`.
    Simulate(Common),
    /// Convert a `date,close` price file into percent log-returns.
    IngestBitcoin {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run replicated chains of one proposal.
    Run(Common),
    /// Run the (backend x proposal) grid and write a comparison report.
    Benchmark(Common),
    /// SV posterior and smoothed log-volatility.
    SvCasestudy(Common),
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CommandError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::from_toml_str("")?,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        Ok(cfg)
    }

    /// Writes the resolved config to the output directory.
    fn materialize(&self, cfg: &ExperimentConfig) -> Result<(), CommandError> {
        let path = cfg.output.join("config.toml");
        qnmh::io::write_with(&path, |w| w.write_all(cfg.to_toml().as_bytes()))
            .map_err(|e| CommandError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

fn execute(command: Command) -> Result<Value, CommandError> {
    match command {
        Command::Simulate(c) => {
            let cfg = c.config()?;
            c.materialize(&cfg)?;
            Ok(to_value(&commands::simulate(&cfg)?))
        }
        Command::IngestBitcoin { common, input } => {
            let cfg = common.config()?;
            common.materialize(&cfg)?;
            Ok(to_value(&commands::ingest_bitcoin(&cfg, &input)?))
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            c.materialize(&cfg)?;
            let out = commands::run(&cfg, c.jobs)?;
            Ok(json!({ "report": out.report, "posterior": out.posterior.iter().map(|p| json!({ "name": p.name, "mean": p.mean, "sd": p.sd })).collect::<Vec<_>>() }))
        }
        Command::Benchmark(c) => {
            let cfg = c.config()?;
            c.materialize(&cfg)?;
            Ok(to_value(&commands::benchmark(&cfg, c.jobs)?))
        }
        Command::SvCasestudy(c) => {
            let cfg = c.config()?;
            c.materialize(&cfg)?;
            Ok(to_value(&commands::sv_casestudy(&cfg, c.jobs)?))
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable output")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(v) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
