//! `latent-align` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_align::data::{default_schema, generate_synthetic};
use latent_align::experiment::{
    self, read_json, DataSource, ExperimentConfig, GroupsArtifact, Manifest, MethodArtifact, SweepParam,
};
use latent_align::Error;
use serde_json::json;

const THREADS_ENV: &str = "LATENT_ALIGN_THREADS";

#[derive(Parser)]
#[command(name = "latent-align", version, about = "Sparse feasible group-level interventions on survey data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline once per seed and write all artifacts.
    Run(Common),
    /// Re-run the pipeline for each value of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of k, G, lambda, eta, q.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// Compare the full method with the baselines and ablations.
    Baselines(Common),
    /// Write a synthetic survey and its schema.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        k_true: usize,
    },
    /// Pretty-print an artifact.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// JSON config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run (repeat or comma-separate).
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Survey CSV; requires --schema.
    #[arg(long, requires = "schema")]
    dataset: Option<PathBuf>,
    #[arg(long, requires = "dataset")]
    schema: Option<PathBuf>,
}

impl Common {
    /// Flags override the config file, which overrides the defaults.
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.seeds.is_empty() {
            config.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let (Some(dataset), Some(schema)) = (&self.dataset, &self.schema) {
            config.data = DataSource::Files {
                dataset: dataset.clone(),
                schema: schema.clone(),
            };
        }
        config.validate()?;
        Ok(config)
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &serde_json::Value) {
    emit(&serde_json::to_string_pretty(value).expect("json value"));
}

fn inspect(path: &Path) -> Result<(), Error> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(".csv") {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = vec![header];
        for rec in reader.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..ncol)
            .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
            .collect();
        for r in rows {
            let line: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:>w$}", w = widths[c])).collect();
            emit(&line.join("  "));
        }
        return Ok(());
    }
    // typed artifacts are parsed with their own schema first
    let value: serde_json::Value = match name {
        "latent_model.json" => serde_json::to_value(read_json::<latent_align::latent::LatentModel>(path)?)?,
        "groups.json" => serde_json::to_value(read_json::<GroupsArtifact>(path)?)?,
        "priorities.json" => serde_json::to_value(read_json::<latent_align::attribution::PriorityWeights>(path)?)?,
        "surrogate.json" => serde_json::to_value(read_json::<latent_align::attribution::SurrogateModel>(path)?)?,
        "intervention.json" => serde_json::to_value(read_json::<latent_align::intervention::InterventionReport>(path)?)?,
        "metrics.json" => serde_json::to_value(read_json::<latent_align::evaluation::MetricsReport>(path)?)?,
        "manifest.json" => serde_json::to_value(read_json::<Manifest>(path)?)?,
        _ if path.parent().and_then(|p| p.file_name()).is_some_and(|p| p == "methods") => {
            serde_json::to_value(read_json::<MethodArtifact>(path)?)?
        }
        _ => read_json::<serde_json::Value>(path)?,
    };
    print_json(&value);
    Ok(())
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(common) => {
            let config = common.resolve()?;
            let outcome = experiment::cmd_run(&config)?;
            print_json(&json!({
                "output_dir": config.output_dir,
                "aggregate": outcome.aggregate,
            }));
        }
        Command::Sweep { common, param, values } => {
            let config = common.resolve()?;
            let rows = experiment::cmd_sweep(&config, param, &values)?;
            print_json(&json!({ "output_dir": config.output_dir, "rows": rows }));
        }
        Command::Baselines(common) => {
            let config = common.resolve()?;
            let rows = experiment::cmd_baselines(&config)?;
            print_json(&json!({ "output_dir": config.output_dir, "rows": rows }));
        }
        Command::Synth { out, seed, n, k_true } => {
            std::fs::create_dir_all(&out)?;
            let synth = generate_synthetic(n, &default_schema(), k_true, seed)?;
            let dataset = out.join("dataset.csv");
            let schema = out.join("schema.json");
            synth.dataset.write_csv(&dataset)?;
            synth.dataset.schema().write_json_file(&schema)?;
            print_json(&json!({ "dataset": dataset, "schema": schema, "n": n, "seed": seed }));
        }
        Command::Inspect { path } => inspect(&path)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
