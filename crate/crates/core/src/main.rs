use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use admot::experiment::checks::{self, Check};
use admot::experiment::{self as exp, ExperimentConfig, GeneralConfig, Lemma3Config, PlotKind, SweepConfig, Theorem2Config};

#[derive(Parser)]
#[command(name = "admot", version, about = "Differential channel monitoring experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-round monitoring at each configured stability.
    Monitor(Io),
    /// Smallest probe length per sparsity level.
    Sweep(Io),
    /// Monte Carlo checks of the noise and hold-out bounds.
    Validate {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        io: Io,
    },
    /// One network round over a relay topology, repeated over seeded trials.
    General(Io),
}

#[derive(clap::Args)]
struct Io {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory for CSV files.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Lemma3,
    Theorem2,
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn csv_rows<T: serde::Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn monitor(io: &Io) -> Result<Vec<Check>> {
    let config = ExperimentConfig::load(&io.config)?;
    let logs = exp::run_all_stabilities(&config)?;
    for log in &logs {
        let tag = format!("x{}", log.stability);
        exp::write_rounds_csv(log, create(&io.out, &format!("rounds_{tag}.csv"))?, create(&io.out, &format!("adaptation_{tag}.csv"))?)?;
        log::info!(
            "stability {}: {} slots over {} rounds (avg {:.1})",
            log.stability,
            log.total_slots(),
            log.records.len(),
            log.average_slots()
        );
    }
    let mut kinds = vec![PlotKind::Overhead, PlotKind::Slots, PlotKind::Error];
    if let Some(d) = &config.detail {
        kinds.push(PlotKind::Detail { start: d.start, end: d.end });
    }
    for kind in kinds {
        exp::emit_plot_data(&logs, kind, &io.out)?;
    }
    Ok(checks::monitor_checks(&config, &logs))
}

#[derive(serde::Deserialize)]
struct SweepFile {
    #[serde(flatten)]
    sweep: SweepConfig,
    #[serde(default = "default_spread")]
    spread: f64,
}

fn default_spread() -> f64 {
    3.0
}

fn sweep(io: &Io) -> Result<Vec<Check>> {
    let file: SweepFile = read(&io.config)?;
    let points = exp::sweep_scaling(&file.sweep)?;
    csv_rows(&io.out, "sweep.csv", &points)?;
    Ok(checks::sweep_checks(&points, file.sweep.n, file.spread))
}

fn validate(which: Which, io: &Io) -> Result<Vec<Check>> {
    match which {
        Which::Lemma3 => {
            let cfg: Lemma3Config = read(&io.config)?;
            let results = cfg
                .ms
                .iter()
                .map(|&m| exp::validate_lemma3(m, cfg.trials, cfg.seed))
                .collect::<admot::Result<Vec<_>>>()?;
            csv_rows(&io.out, "lemma3.csv", &results)?;
            Ok(checks::lemma3_checks(&results))
        }
        Which::Theorem2 => {
            let cfg: Theorem2Config = read(&io.config)?;
            let rows = exp::validate_theorem2(&cfg)?;
            csv_rows(&io.out, "theorem2.csv", &rows)?;
            Ok(checks::theorem2_checks(&rows))
        }
    }
}

fn general(io: &Io) -> Result<Vec<Check>> {
    let config = GeneralConfig::load(&io.config)?;
    let base = io.config.parent().unwrap_or(Path::new("."));
    let mut nodes = create(&io.out, "nodes_trial0.csv")?;
    let report = exp::run_general_experiment(&config, base, Some(&mut nodes))?;
    report.write_csv(create(&io.out, "general.csv")?)?;
    Ok(checks::general_checks(&report, config.m, config.min_recovery_rate))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Monitor(io) => monitor(io),
        Command::Sweep(io) => sweep(io),
        Command::Validate { which, io } => validate(*which, io),
        Command::General(io) => general(io),
    };
    match result {
        Ok(checks) => {
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
