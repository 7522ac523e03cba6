use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_sensing::config::{Mode, RunConfig, DEFAULTS};
use adaptive_sensing::experiments::{self, render_csv, CsvFile};
use adaptive_sensing::sim::write_trace_csv;
use adaptive_sensing::{Error, Result};
use clap::{Parser, Subcommand};

/// Idle/sense/transmit policies with adaptive durations for an
/// opportunistic radio, and a Monte Carlo simulator to check them.
#[derive(Parser, Debug)]
#[command(name = "adaptive-sensing", version, arg_required_else_help = true)]
struct Cli {
    /// Print every config key with its default value and exit.
    #[arg(long)]
    print_defaults: bool,

    /// INI config, read on top of the defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for the CSV output.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Sweep over K evenly spaced collision knobs on [0, 1].
    #[arg(long, global = true, value_name = "K")]
    gamma_steps: Option<usize>,

    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one policy; write thresholds.csv and components.csv.
    Solve,
    /// Value at the start of an idle period across collision knobs; write sweep.csv.
    Sweep,
    /// Simulate the configured policies; write simulate.csv and trace.csv.
    Simulate,
    /// Compare occupancy from the renewal recursion, the closed form and
    /// Monte Carlo; write renewal_check.csv.
    RenewalCheck,
    /// Data behind figure N (2 to 8) from its preset.
    Fig {
        #[arg(value_parser = clap::value_parser!(u32).range(2..=8))]
        n: u32,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse()
}

fn load(cli: &Cli, preset: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match (preset, &cli.config) {
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                key: "--config".into(),
                message: "figures use their own preset".into(),
            })
        }
        (Some(name), None) => RunConfig::preset(name)?,
        (None, Some(path)) => RunConfig::from_path(path)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.gamma_steps {
        cfg.gamma_steps = k;
        cfg.gamma_list = None;
    }
    if let Some(m) = cli.mode {
        cfg.modes = vec![m];
    }
    cfg.validate()?;
    for w in cfg.scenario.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write_all(dir: &Path, files: &[CsvFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        let path = dir.join(&f.name);
        std::fs::write(&path, &f.contents)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn file(name: &str, contents: String) -> CsvFile {
    CsvFile {
        name: name.into(),
        contents,
    }
}

fn run(cli: &Cli, command: &Command) -> Result<()> {
    let files = match command {
        Command::Solve => {
            let out = experiments::solve(&load(cli, None)?)?;
            vec![
                file("thresholds.csv", render_csv(&out.thresholds)),
                file("components.csv", render_csv(&out.components)),
            ]
        }
        Command::Sweep => vec![file("sweep.csv", render_csv(&experiments::sweep(&load(cli, None)?)?))],
        Command::Simulate => {
            let out = experiments::simulate(&load(cli, None)?)?;
            let mut trace = Vec::new();
            write_trace_csv(&out.trace, &mut trace)?;
            vec![
                file("simulate.csv", render_csv(&out.rows)),
                file("trace.csv", String::from_utf8(trace).expect("CSV is UTF-8")),
            ]
        }
        Command::RenewalCheck => vec![file(
            "renewal_check.csv",
            render_csv(&experiments::renewal_check(&load(cli, None)?)?),
        )],
        Command::Fig { n } => experiments::figure(*n, &load(cli, Some(&format!("fig{n}")))?)?,
    };
    write_all(&cli.out, &files)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{DEFAULTS}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    match run(&cli, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
