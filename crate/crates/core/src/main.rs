use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualfair::config::{Config, ConfigError};
use dualfair::harness::{self, HarnessError};
use dualfair::tabular::TabularError;
use dualfair::{clean, encode_and_normalize, load_csv, Dataset};

#[derive(Parser)]
#[command(
    name = "dualfair",
    version,
    about = "Debias tabular data across sensitive worlds"
)]
struct Cli {
    /// Worker threads; 0 lets rayon decide. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop sparse columns and incomplete or out-of-domain rows.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a biased synthetic dataset matching the config schema.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Balance every world and drop rows that fail situation testing.
    Debias {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the before/after experiment and write runs.csv and summary.txt.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Input(String),
    Pipeline {
        stage: &'static str,
        message: String,
    },
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<TabularError> for Failure {
    fn from(e: TabularError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_) | HarnessError::InvalidSynthetic(_) => {
                Failure::Input(e.to_string())
            }
            e => Failure::Pipeline {
                stage: e.stage(),
                message: e.to_string(),
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Pipeline { stage, message }) => {
            eprintln!("error: stage {stage}: {message}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<Config, Failure> {
    let mut cfg = Config::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_dataset(cfg: &Config, input: &Path) -> Result<Dataset, Failure> {
    let raw = load_csv(input, &cfg.schema()?, &cfg.missing_markers)?;
    let cleaned = clean(&raw, cfg.missing_threshold)?;
    Ok(encode_and_normalize(&cleaned)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Prepare {
            config,
            input,
            output,
        } => {
            let cfg = load_config(&config, None)?;
            let raw = load_csv(&input, &cfg.schema()?, &cfg.missing_markers)?;
            let cleaned = clean(&raw, cfg.missing_threshold)?;
            cleaned.write_csv(create(&output)?)?;
            eprintln!("kept {} of {} rows", cleaned.n_rows(), raw.n_rows());
        }
        Command::Synth {
            config,
            rows,
            seed,
            output,
        } => {
            let cfg = load_config(&config, seed)?;
            let spec = cfg.synthetic_spec(rows)?;
            let data = harness::generate_synthetic(&spec, cfg.seed)?;
            data.write_csv(create(&output)?)?;
        }
        Command::Debias {
            config,
            input,
            output,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let data = load_dataset(&cfg, &input)?;
            let spec = cfg.sensitive_spec()?;
            let (repaired, removed) = harness::debias(&data, &spec, &cfg.smote_params(), &cfg.fit)?;
            repaired.write_csv(create(&output)?)?;
            eprintln!(
                "wrote {} rows; situation testing removed {removed}",
                repaired.n_rows()
            );
        }
        Command::Evaluate {
            config,
            input,
            report,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let data = load_dataset(&cfg, &input)?;
            let spec = cfg.sensitive_spec()?;
            let result = harness::run_dualfair(&data, &cfg.experiment_config(), &spec)?;
            std::fs::create_dir_all(&report)
                .map_err(|e| Failure::Input(format!("cannot create {}: {e}", report.display())))?;
            harness::write_report(&result, &report)?;
            let (b, a) = (&result.median_before, &result.median_after);
            println!("phase   awi    accuracy precision recall false_alarm f1");
            for (name, m) in [("before", b), ("after", a)] {
                println!(
                    "{name:<7} {:.3}  {:.3}    {:.3}     {:.3}  {:.3}       {:.3}",
                    m.awi_reported, m.accuracy, m.precision, m.recall, m.false_alarm, m.f1
                );
            }
        }
    }
    Ok(())
}
