use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use qfed_core::circuit::{build_layout, UStructure};
use qfed_core::complexity::assess;
use qfed_core::config::{Scenario, ScenarioData};
use qfed_core::data::Dataset;
use qfed_core::federation::{client_build, run_federation};
use qfed_core::model::Model;
use qfed_core::seeds::derive_seed;
use qfed_core::train::{train_model, TrainConfig};

#[derive(Parser)]
#[command(
    name = "qfed",
    version,
    about = "Quantum federated distillation scenarios"
)]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print each client's complexity and gate budget.
    Estimate,
    /// Search a structure for one client and save its model and trace.
    Search {
        #[arg(long)]
        client: usize,
    },
    /// Train a fixed structure on one client's data.
    Train {
        #[arg(long)]
        client: usize,
        /// Comma-separated gate indices, e.g. `6,13`.
        #[arg(long)]
        structure: String,
    },
    /// Run the full one-shot federation.
    Federate,
    /// Report a saved model's accuracy on a scenario split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// `test`, `public`, or `client:N`.
        #[arg(long, default_value = "test")]
        split: String,
    },
}

/// Usage and configuration problems exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage(anyhow!("--config is required")))?;
    let mut s = Scenario::load(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(usage)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn client_data(data: &ScenarioData, id: usize) -> Result<&Dataset, Failure> {
    id.checked_sub(1)
        .and_then(|i| data.clients.get(i))
        .ok_or_else(|| {
            usage(anyhow!(
                "unknown client id {id}; scenario has {}",
                data.clients.len()
            ))
        })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_table(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(
        w.into_inner().map_err(|e| anyhow!("{e}"))?,
    )?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let scenario = load_scenario(&cli)?;
    match &cli.command {
        Command::Estimate => estimate(&scenario),
        Command::Search { client } => search(&scenario, *client, &cli.out),
        Command::Train { client, structure } => train(&scenario, *client, structure, &cli.out),
        Command::Federate => federate(&scenario, &cli.out),
        Command::Evaluate { model, split } => evaluate(&scenario, model, split),
    }
}

fn estimate(s: &Scenario) -> Result<(), Failure> {
    let data = s.materialize()?;
    let mut rows = Vec::new();
    for (i, d) in data.clients.iter().enumerate() {
        let r = assess(&d.labels, d.dimension(), &s.complexity)?;
        rows.push(vec![
            (i + 1).to_string(),
            r.samples.to_string(),
            r.dimension.to_string(),
            format!("{:.6}", r.sparsity),
            format!("{:.6}", r.dispersion),
            format!("{:.6}", r.q_score),
            r.gate_count.to_string(),
        ]);
    }
    let table = csv_table(
        &[
            "client",
            "samples",
            "dimension",
            "sparsity",
            "dispersion",
            "q_score",
            "gates",
        ],
        rows,
    )?;
    print!("{table}");
    Ok(())
}

fn search(s: &Scenario, id: usize, out: &Path) -> Result<(), Failure> {
    let data = s.materialize()?;
    let d = client_data(&data, id)?;
    let spec = client_build(id, d, &s.client_settings())?;
    write(out, &format!("client-{id}.model"), &spec.model.to_record())?;
    write(
        out,
        &format!("client-{id}.trace.csv"),
        &spec.search.trace_table(),
    )?;
    println!(
        "client {id}: gates {} structure {} train accuracy {:.4}",
        spec.complexity.gate_count, spec.search.gbest_structure, spec.search.gbest_score
    );
    Ok(())
}

fn train(s: &Scenario, id: usize, structure: &str, out: &Path) -> Result<(), Failure> {
    let gates = structure
        .split(',')
        .map(|g| g.trim().parse::<u8>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(anyhow!("bad --structure {structure:?}: {e}")))?;
    let u = UStructure::new(gates).map_err(usage)?;
    let layout = build_layout(s.num_qubits, s.class_count, u).map_err(usage)?;
    let data = s.materialize()?;
    let samples = client_data(&data, id)?.encode()?;
    let cfg = TrainConfig {
        rng_seed: derive_seed(s.seed, &[id as u64]),
        ..s.pso.train.clone()
    };
    let (theta, history) = train_model(&layout, &samples, &cfg)?;
    let model = Model::new(layout, theta)?;
    write(out, &format!("client-{id}.model"), &model.to_record())?;
    write(
        out,
        &format!("client-{id}.history.csv"),
        &history.to_table(),
    )?;
    println!("client {id}: train accuracy {:.4}", history.final_accuracy);
    Ok(())
}

fn federate(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let data = s.materialize()?;
    let o = run_federation(
        &data.clients,
        &data.public,
        &data.test,
        &s.federation_settings(),
    )?;
    let m = &o.metrics;
    let metrics = csv_table(
        &["model_type", "labels", "train_size", "accuracy"],
        m.rows.iter().map(|r| {
            vec![
                r.model_type.clone(),
                r.labels.clone(),
                r.train_size.clone(),
                format!("{:.4}", r.accuracy),
            ]
        }),
    )?;
    let clients = csv_table(
        &[
            "client",
            "train_size",
            "gates",
            "structure",
            "train_accuracy",
            "public_accuracy",
            "test_accuracy",
        ],
        m.clients.iter().map(|c| {
            vec![
                c.client_id.to_string(),
                c.train_size.to_string(),
                c.gate_count.to_string(),
                c.structure
                    .iter()
                    .map(u8::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
                format!("{:.4}", c.train_accuracy),
                format!("{:.4}", c.public_accuracy),
                format!("{:.4}", c.test_accuracy),
            ]
        }),
    )?;
    write(out, "metrics.csv", &metrics)?;
    write(out, "clients.csv", &clients)?;
    write(out, "transcript.jsonl", &o.transcript.to_json_lines())?;
    write(out, "global.model", &o.global.to_record())?;
    for spec in &o.clients {
        write(
            out,
            &format!("client-{}.model", spec.client_id),
            &spec.model.to_record(),
        )?;
    }
    print!("{metrics}");
    Ok(())
}

fn evaluate(s: &Scenario, model_path: &Path, split: &str) -> Result<(), Failure> {
    let text = fs::read_to_string(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))
        .map_err(usage)?;
    let model = Model::from_record(&text).map_err(usage)?;
    let data = s.materialize()?;
    let set = match split {
        "test" => &data.test,
        "public" => &data.public,
        other => {
            let id = other
                .strip_prefix("client:")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| usage(anyhow!("unknown split {other:?}")))?;
            client_data(&data, id)?
        }
    };
    if set.is_empty() {
        return Err(anyhow!("split {split} is empty").into());
    }
    let samples = set.encode()?;
    println!("{:.4}", model.accuracy(&samples)?);
    Ok(())
}
