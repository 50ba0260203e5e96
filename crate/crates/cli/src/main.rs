//! `causal-mp`: run replicated experiments, emit figure data, check configs.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for failures
//! while running.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use causal_mp::harness::config::PAPER_SCALE_REPLICATIONS;
use causal_mp::harness::{run_experiment, write_figure, ExperimentConfig, WORKERS_ENV};
use causal_mp::Error;

#[derive(Parser, Debug)]
#[command(name = "causal-mp", version, about = "TTE estimation under network interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its reports.
    #[command(after_help = format!(
        "Any config field can be overridden with `--<field> <value>` (value parsed as JSON \
         when possible). Worker threads: set {WORKERS_ENV}."
    ))]
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        /// Use 5000 replications unless --replications is given.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Write figure_<id>.csv from a finished run directory.
    Figure {
        #[arg(long)]
        id: String,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Check a config and print its resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
}

/// Turns `--key value` and `--key=value` sequences into pairs.
/// `--paper-scale` takes no value.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("unexpected argument `{arg}`")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.replace('-', "_"), v.to_string())),
            None if key.replace('-', "_") == "paper_scale" => out.push(("paper_scale".into(), "true".into())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                out.push((key.replace('-', "_"), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Run-level flags given after the first override land in the trailing
/// list; pull them back out.
struct RunFlags {
    seed: Option<u64>,
    replications: Option<usize>,
    paper_scale: bool,
    out: Option<PathBuf>,
}

fn take_run_flags(pairs: Vec<(String, String)>, flags: &mut RunFlags) -> Result<Vec<(String, String)>, Error> {
    let number = |k: &str, v: &str| -> Result<u64, Error> {
        v.parse().map_err(|_| Error::Config(format!("--{k} expects an integer, got `{v}`")))
    };
    let mut rest = Vec::new();
    for (k, v) in pairs {
        match k.as_str() {
            "seed" => flags.seed = Some(number(&k, &v)?),
            "replications" => flags.replications = Some(number(&k, &v)? as usize),
            "out" => flags.out = Some(PathBuf::from(v)),
            "paper_scale" => {
                flags.paper_scale = v
                    .parse()
                    .map_err(|_| Error::Config(format!("--paper-scale does not take `{v}`")))?
            }
            _ => rest.push((k, v)),
        }
    }
    Ok(rest)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            replications,
            paper_scale,
            out,
            overrides,
        } => {
            let mut flags = RunFlags {
                seed,
                replications,
                paper_scale,
                out,
            };
            let overrides = take_run_flags(parse_overrides(&overrides)?, &mut flags)?;
            let mut cfg = ExperimentConfig::load(&config, &overrides)?;
            if let Some(s) = flags.seed {
                cfg.master_seed = s;
            }
            if flags.paper_scale {
                cfg.replications = PAPER_SCALE_REPLICATIONS;
            }
            if let Some(r) = flags.replications {
                cfg.replications = r;
            }
            if let Some(dir) = flags.out {
                cfg.output_dir = Some(dir);
            }
            let summary = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if summary.successes == 0 {
                return Err(Error::EmptyAggregate);
            }
        }
        Command::Figure { id, input } => {
            let path = write_figure(&input, &id)?;
            println!("{}", path.display());
        }
        Command::Validate { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &parse_overrides(&overrides)?)?;
            let exp = cfg.prepare()?;
            let resolved = serde_json::json!({
                "scenario": cfg.scenario,
                "n_units": exp.n_units,
                "design": exp.design,
                "burn_in": cfg.burn_in,
                "replications": cfg.replications,
                "clamp": exp.clamp,
                "resample": exp.resample,
            });
            println!("{}", serde_json::to_string_pretty(&resolved)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
