use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ivdr::config::{
    dataset_to_csv, error_document, parse_config, read_dataset, result_document, summary_table,
    write_atomically, RunConfig, SimulationConfig, SCHEMA_VERSION,
};
use ivdr::inference::estimate;
use ivdr::simulation::{run_scenario_with_samples, RunOptions, SimulationReport};
use ivdr::{Error, Result};

#[derive(Parser)]
#[command(name = "ivdr", version, about = "Outcome-mean estimation under nonignorable nonresponse with an instrument")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the requested estimators to a dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Result JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo study from a named profile or a config file.
    Simulate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        profile: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the replicate count.
        #[arg(long)]
        reps: Option<usize>,
        /// Output prefix; writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        /// Also write every simulated dataset into this directory.
        #[arg(long)]
        emit_data: Option<PathBuf>,
    },
}

fn read_config(path: &Path) -> Result<ivdr::config::ConfigDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn build(cmd: Cmd) -> Result<RunConfig> {
    match cmd {
        Cmd::Estimate { data, config, out } => read_config(&config)?.into_estimate(data, out),
        Cmd::Simulate {
            profile,
            config,
            seed,
            reps,
            out,
            emit_data,
        } => {
            let (mut plan, solver) = match (profile, config) {
                (Some(name), _) => (SimulationConfig::profile(&name)?, Default::default()),
                (None, Some(path)) => {
                    let doc = read_config(&path)?;
                    let plan = doc
                        .simulation
                        .ok_or_else(|| Error::Config("config has no `simulation` section".into()))?;
                    (plan, doc.solver.unwrap_or_default().apply()?)
                }
                (None, None) => return Err(Error::Config("give --profile or --config".into())),
            };
            if let Some(s) = seed {
                plan.base_seed = s;
            }
            if let Some(r) = reps {
                plan.replicates = r;
            }
            plan.validate()?;
            Ok(RunConfig::Simulate {
                plan,
                solver,
                out,
                emit_data,
            })
        }
    }
}

fn run(cfg: RunConfig) -> Result<()> {
    match cfg {
        RunConfig::Estimate {
            data,
            out,
            spec,
            estimators,
            solver,
        } => {
            let dataset = read_dataset(&data)?;
            if spec.required_covariates() > dataset.dim() {
                return Err(Error::Config(format!(
                    "model references u{} but {} has {} covariates",
                    spec.required_covariates(),
                    data.display(),
                    dataset.dim()
                )));
            }
            let mut results = Vec::new();
            let mut failures = Vec::new();
            for id in estimators {
                match estimate(id, &dataset, &spec, &solver) {
                    Ok(res) => results.push(res),
                    Err(e) => failures.push(json!({
                        "estimator_id": id,
                        "kind": e.kind(),
                        "message": e.to_string(),
                    })),
                }
            }
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "n": dataset.len(),
                "respondents": dataset.respondents(),
                "results": results.iter().map(result_document).collect::<Vec<_>>(),
                "failures": failures,
            });
            let bytes = serde_json::to_vec_pretty(&doc)?;
            write_atomically(&[(out, bytes)])?;
            print!("{}", summary_table(&results));
            for f in &failures {
                eprintln!("{} failed: {}", f["estimator_id"], f["message"]);
            }
            if results.is_empty() {
                return Err(Error::NotConverged {
                    estimator: "all".into(),
                    reason: "every requested estimator failed".into(),
                });
            }
            Ok(())
        }
        RunConfig::Simulate {
            plan,
            solver,
            out,
            emit_data,
        } => {
            let opts = RunOptions {
                solver,
                keep_samples: emit_data.is_some(),
            };
            let mut report: Option<SimulationReport> = None;
            let mut files = Vec::new();
            for &scenario in &plan.scenarios {
                for &n in &plan.n {
                    let (part, samples) = run_scenario_with_samples(
                        scenario,
                        n,
                        plan.replicates,
                        &plan.estimators,
                        plan.base_seed,
                        &opts,
                    )?;
                    if let Some(dir) = &emit_data {
                        for (rep, s) in samples.iter().enumerate() {
                            let name = format!("{}_n{n}_rep{rep:04}.csv", scenario.as_str());
                            files.push((dir.join(name), dataset_to_csv(&s.data)?.into_bytes()));
                        }
                    }
                    match &mut report {
                        Some(r) => r.extend(part),
                        None => report = Some(part),
                    }
                }
            }
            let report = report.expect("plan has at least one cell");
            let stem = match out.extension().and_then(|e| e.to_str()) {
                Some("csv") | Some("json") => out.with_extension(""),
                _ => out,
            };
            let csv = report.to_csv()?;
            files.push((stem.with_extension("csv"), csv.clone().into_bytes()));
            files.push((stem.with_extension("json"), report.to_json()?.into_bytes()));
            write_atomically(&files)?;
            print!("{csv}");
            if !report.failures.is_empty() {
                eprintln!("{} replicate fits failed and were excluded", report.failures.len());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match build(cli.command).and_then(run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = error_document(&e);
            eprintln!("{}", serde_json::to_string_pretty(&doc).unwrap_or_else(|_| e.to_string()));
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
