//! Subcommand implementations. All emitted numbers are pure functions of
//! (flags, config file, seeds); wall-clock time appears only in the
//! `runtime_s` summary fields.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use ofl_core::factorization::{
    build_binary_tree, build_identity, build_toeplitz, factorization_stats, load_factorization,
    toeplitz_norm_report, FactorKind, Factorization, INTERNAL_TOLERANCE,
};
use ofl_core::metrics::compute_round_optima;
use ofl_core::privacy::calibrate;
use ofl_core::{run_simulation, DataStream, SimConfig, SimOutput};

use crate::config::{load_experiment_config, load_sim_config, ConfigError};

/// Process exit codes: 0 success, 2 config error, 3 runtime numeric
/// failure, 4 diagnostics violation.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(ofl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(ofl_core::Error::DiagnosticsViolation { .. }) => 4,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<ofl_core::Error> for CliError {
    fn from(e: ofl_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn config_flag(flag: &'static str, reason: String) -> CliError {
    CliError::Config(ConfigError(vec![format!("{flag}: {reason}")]))
}

fn build_named(kind: FactorKind, steps: usize) -> Result<Factorization, CliError> {
    let f = match kind {
        FactorKind::BinaryTree => build_binary_tree(steps),
        FactorKind::Toeplitz => build_toeplitz(steps),
        FactorKind::Identity => build_identity(steps),
        FactorKind::External => {
            return Err(config_flag(
                "--mechanism",
                "`external` factors are consumed via a file path, not built".into(),
            ))
        }
    };
    Ok(f?)
}

pub fn cmd_factorize(
    mechanism: &str,
    steps: usize,
    tau: Option<usize>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    if steps == 0 {
        return Err(config_flag("--steps", "must be at least 1".into()));
    }
    let kind: FactorKind = mechanism
        .parse()
        .map_err(|_| config_flag("--mechanism", format!("unknown mechanism `{mechanism}`")))?;
    let f = build_named(kind, steps)?;
    f.validate(INTERNAL_TOLERANCE)?;

    let path = output.unwrap_or_else(|| PathBuf::from(format!("{kind}_{steps}.csv")));
    f.save(&path)?;

    let stats = factorization_stats(&f, 1)?;
    let mut out = json!({
        "kind": kind.to_string(),
        "steps": steps,
        "width": f.width(),
        "file": path.display().to_string(),
        "max_col_sq_norm": stats.max_col_sq_norm,
        "max_row_sq_norm": stats.max_row_sq_norm,
    });
    if let Some(tau) = tau {
        let per_round = factorization_stats(&f, tau)?;
        out["prefix_row_sq_norms"] = json!(per_round.prefix_row_sq_norms);
        out["tau"] = json!(tau);
    }
    if kind == FactorKind::Toeplitz {
        out["norm_report"] = serde_json::to_value(toeplitz_norm_report(steps)?)
            .expect("report serializes");
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("stats serialize"));
    Ok(())
}

pub fn cmd_calibrate(
    epsilon: f64,
    delta: f64,
    clip: f64,
    mechanism: Option<&str>,
    steps: Option<usize>,
    factor_file: Option<&Path>,
) -> Result<(), CliError> {
    let f = match (factor_file, mechanism) {
        (Some(path), _) => load_factorization(path)?,
        (None, Some(name)) => {
            let steps = steps
                .ok_or_else(|| config_flag("--steps", "required with --mechanism".into()))?;
            if steps == 0 {
                return Err(config_flag("--steps", "must be at least 1".into()));
            }
            let kind: FactorKind = name.parse().map_err(|_| {
                config_flag("--mechanism", format!("unknown mechanism `{name}`"))
            })?;
            build_named(kind, steps)?
        }
        (None, None) => {
            return Err(config_flag(
                "--mechanism",
                "either --mechanism/--steps or --factor-file is required".into(),
            ))
        }
    };
    let budget = calibrate(epsilon, delta, clip, &f).map_err(|e| match e {
        e @ ofl_core::Error::InvalidParameter { .. } => {
            CliError::Config(ConfigError(vec![e.to_string()]))
        }
        e => CliError::Runtime(e),
    })?;
    let stats = factorization_stats(&f, 1)?;
    let out = json!({
        "epsilon": budget.epsilon,
        "delta": budget.delta,
        "rho": budget.rho,
        "sensitivity": ofl_core::sensitivity(clip, &f)?,
        "noise_variance": budget.noise_variance,
        "max_col_sq_norm": stats.max_col_sq_norm,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("budget serialize"));
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(ofl_core::Error::Io)?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(ofl_core::Error::Io)?;
    f.write_all(bytes).map_err(ofl_core::Error::Io)?;
    Ok(())
}

fn trace_csv_bytes(out: &SimOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).expect("in-memory write");
    buf
}

fn run_summary(cfg: &SimConfig, out: &SimOutput, runtime_s: f64) -> serde_json::Value {
    let mut summary = json!({
        "mechanism": cfg.mechanism,
        "seed": cfg.master_seed,
        "n": cfg.n,
        "R": cfg.rounds,
        "tau": cfg.tau,
        "dim": cfg.dim,
        "noise_std": out.noise_std,
        "final_dyn_regret": out.trace.total_dynamic_regret(),
        "final_norm_dyn_regret": out.trace.normalized_dynamic_regret(),
        "diagnostics": serde_json::to_value(&out.diagnostics).expect("report serializes"),
        "runtime_s": runtime_s,
    });
    if let Some(static_total) = out.trace.total_static_regret() {
        summary["final_static_regret"] = json!(static_total);
    }
    if let Some(budget) = &out.privacy {
        summary["privacy"] = serde_json::to_value(budget).expect("budget serializes");
    }
    summary
}

pub fn cmd_simulate(
    config_path: &Path,
    output_dir: &Path,
    dump_samples: bool,
) -> Result<(), CliError> {
    let cfg = load_sim_config(config_path)?;
    std::fs::create_dir_all(output_dir).map_err(ofl_core::Error::Io)?;
    let started = Instant::now();
    let stream = cfg.build_stream()?;
    let out = run_simulation(&cfg, &stream, None)?;
    let runtime_s = started.elapsed().as_secs_f64();

    write_file(&output_dir.join("trace.csv"), &trace_csv_bytes(&out))?;
    let summary = run_summary(&cfg, &out, runtime_s);
    write_file(
        &output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes(),
    )?;
    if dump_samples {
        stream.dump_csv(&output_dir.join("samples.csv"))?;
    }
    println!(
        "simulate: mechanism={} seed={} rounds={} normalized_dyn_regret={} diagnostics_ok=true",
        cfg.mechanism,
        cfg.master_seed,
        cfg.rounds,
        out.trace.normalized_dynamic_regret()
    );
    Ok(())
}

struct CellResult {
    seed: u64,
    mechanism: String,
    output: SimOutput,
    runtime_s: f64,
}

pub fn cmd_compare(
    config_path: &Path,
    output_dir_flag: Option<&Path>,
    dump_samples: bool,
) -> Result<(), CliError> {
    let exp = load_experiment_config(config_path)?;
    let out_dir = output_dir_flag.unwrap_or(&exp.output_dir).to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(ofl_core::Error::Io)?;

    // One data stream and one set of round optima per seed, shared by every
    // mechanism (paired comparison).
    let budget = exp.base.optimizer_budget();
    let per_seed: Vec<(u64, Arc<DataStream>, Arc<Vec<ofl_core::RoundOptimum>>)> = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = exp.cell_config(seed, &exp.comparisons[0]);
            let stream = cfg.build_stream()?;
            let optima = compute_round_optima(&stream, &budget)?;
            Ok((seed, Arc::new(stream), Arc::new(optima)))
        })
        .collect::<Result<_, ofl_core::Error>>()?;

    if dump_samples {
        for (seed, stream, _) in &per_seed {
            stream.dump_csv(&out_dir.join(format!("samples_seed{seed}.csv")))?;
        }
    }

    let cells: Vec<(usize, usize)> = (0..exp.seeds.len())
        .flat_map(|s| (0..exp.comparisons.len()).map(move |m| (s, m)))
        .collect();
    let results: Vec<Result<CellResult, ofl_core::Error>> = cells
        .par_iter()
        .map(|&(si, mi)| {
            let (seed, stream, optima) = &per_seed[si];
            let mechanism = &exp.comparisons[mi];
            let cfg = exp.cell_config(*seed, mechanism);
            let started = Instant::now();
            let output = run_simulation(&cfg, stream, Some(optima))?;
            Ok(CellResult {
                seed: *seed,
                mechanism: mechanism.clone(),
                output,
                runtime_s: started.elapsed().as_secs_f64(),
            })
        })
        .collect();

    let mut completed: Vec<&CellResult> = Vec::new();
    let mut first_error: Option<&ofl_core::Error> = None;
    for r in &results {
        match r {
            Ok(cell) => completed.push(cell),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }

    // Long-format CSV over completed cells, seed-major then mechanism order.
    let mut long = Vec::new();
    writeln!(long, "seed,mechanism,round,avg_loss,cum_dyn_regret").expect("in-memory write");
    for cell in &completed {
        for row in &cell.output.trace.rows {
            writeln!(
                long,
                "{},{},{},{},{}",
                cell.seed, cell.mechanism, row.round, row.avg_round_loss, row.cum_dyn_regret
            )
            .expect("in-memory write");
        }
    }
    write_file(&out_dir.join("comparison.csv"), &long)?;

    if let Some(err) = first_error {
        let manifest = json!({
            "completed": completed
                .iter()
                .map(|c| json!({"seed": c.seed, "mechanism": c.mechanism}))
                .collect::<Vec<_>>(),
            "error": err.to_string(),
        });
        write_file(
            &out_dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes(),
        )?;
        eprintln!("compare: aborted after {} completed cells: {err}", completed.len());
        return Err(CliError::Runtime(clone_error(err)));
    }

    // Per-mechanism summary: mean +- sample std of final normalized dynamic
    // regret across seeds.
    let mut summary_rows = Vec::new();
    for mechanism in &exp.comparisons {
        let finals: Vec<f64> = completed
            .iter()
            .filter(|c| &c.mechanism == mechanism)
            .map(|c| c.output.trace.normalized_dynamic_regret())
            .collect();
        let runtime: f64 = completed
            .iter()
            .filter(|c| &c.mechanism == mechanism)
            .map(|c| c.runtime_s)
            .sum();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let std = if finals.len() > 1 {
            (finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (finals.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        summary_rows.push(json!({
            "mechanism": mechanism,
            "seeds": exp.seeds,
            "mean_final_norm_regret": mean,
            "std_final_norm_regret": std,
            "runtime_s": runtime,
        }));
    }
    write_file(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::Value::Array(summary_rows.clone()))
            .expect("summary serializes")
            .as_bytes(),
    )?;

    println!("mechanism,mean_final_norm_regret,std_final_norm_regret");
    for row in &summary_rows {
        println!(
            "{},{},{}",
            row["mechanism"].as_str().expect("mechanism is a string"),
            row["mean_final_norm_regret"],
            row["std_final_norm_regret"]
        );
    }
    Ok(())
}

// core::Error is not Clone (io::Error inside); summarize instead.
fn clone_error(e: &ofl_core::Error) -> ofl_core::Error {
    match e {
        ofl_core::Error::DiagnosticsViolation {
            check,
            round,
            residual,
            tolerance,
        } => ofl_core::Error::DiagnosticsViolation {
            check,
            round: *round,
            residual: *residual,
            tolerance: *tolerance,
        },
        other => ofl_core::Error::InvalidParameter {
            name: "compare",
            reason: other.to_string(),
        },
    }
}
