use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mpp_lab::harness::{
    fit_regret_exponent, martingale_bound, read_csv, run_experiment, ExperimentConfig, RunManifest,
};
use mpp_lab::io::{read_instance, Instance};
use mpp_lab::planner::backward_induction;
use mpp_lab::Tabular;

#[derive(Parser)]
#[command(name = "mpp-lab", version, about = "Markov persuasion process simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance exactly for a context sequence and print the policy.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        /// JSON array with one context index per step.
        #[arg(long)]
        contexts: PathBuf,
    },
    /// Check an instance file against the model invariants.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Summarize the regret decomposition of a finished run directory.
    Decompose {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seeds, out } => run(&config, seeds, out),
        Command::Plan { instance, contexts } => plan(&instance, &contexts),
        Command::Validate { instance } => validate(&instance),
        Command::Decompose { run } => decompose(&run),
    }
}

fn run(config: &Path, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if out.is_some() {
        cfg.output = out;
    }
    cfg.validate()?;
    let runs = run_experiment(&cfg)?;
    println!("seed\ttotal_regret\talpha\tdeviation_rate\toptimism\tmartingale_sum");
    for r in &runs {
        let cum = r.log.cumulative();
        let t_min = (cfg.episodes / 10).max(1);
        let alpha = fit_regret_exponent(&cum, t_min).map_or("n/a".to_string(), |f| format!("{:.3}", f.alpha));
        println!(
            "{}\t{:.6}\t{}\t{:.4}\t{:.4}\t{:.4}",
            r.log.seed,
            r.log.total_regret(),
            alpha,
            r.log.deviation_rate(),
            r.diagnostics.optimism_rate(),
            r.diagnostics.martingale_sum
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn load_tabular(path: &Path) -> Result<Tabular> {
    Ok(match read_instance::<f64>(path)? {
        Instance::Tabular(doc) => doc.into_model()?,
        Instance::Linear(m) => m.to_tabular()?,
    })
}

fn plan(instance: &Path, contexts: &Path) -> Result<ExitCode> {
    let model = load_tabular(instance)?;
    let text = std::fs::read_to_string(contexts).with_context(|| format!("reading {}", contexts.display()))?;
    let ctx: Vec<usize> = serde_json::from_str(&text).context("contexts must be a JSON array of indices")?;
    if ctx.len() != model.horizon() || ctx.iter().any(|&c| c >= model.dims.contexts) {
        bail!("contexts must list {} indices below {}", model.horizon(), model.dims.contexts);
    }
    let result = backward_induction(&model, &ctx);
    let doc = serde_json::json!({
        "v_star": result.v(0, model.initial_state),
        "policy": result.policy,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn validate(instance: &Path) -> Result<ExitCode> {
    let violations = match read_instance::<f64>(instance) {
        Ok(Instance::Tabular(doc)) => match doc.into_model() {
            Ok(_) => Vec::new(),
            Err(mpp_lab::MppError::InvalidModel(v)) => v,
            Err(e) => return Err(e.into()),
        },
        Ok(Instance::Linear(m)) => m.validate(),
        Err(mpp_lab::MppError::InvalidModel(v)) => v,
        Err(e) => return Err(e.into()),
    };
    if violations.is_empty() {
        println!("ok");
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        println!("{v}");
    }
    Ok(ExitCode::from(1))
}

fn decompose(dir: &Path) -> Result<ExitCode> {
    let manifest: Option<RunManifest> = std::fs::read_to_string(dir.join("run.json"))
        .ok()
        .map(|t| serde_json::from_str(&t))
        .transpose()
        .context("run.json is malformed")?;
    let rows = read_csv(&dir.join("regret.csv"))?;
    let mut by_seed: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for r in rows {
        by_seed.entry(r.seed).or_default().push(r);
    }
    println!("seed\tepisodes\tterm_i\tterm_ii\tterm_iii\tterm_iv\tmax_residual\tmartingale_ok");
    let mut all_ok = true;
    for (seed, rows) in &by_seed {
        let mut sums = [0.0; 4];
        let mut residual: f64 = 0.0;
        for r in rows {
            let t = r.terms();
            if t.iter().any(|x| x.is_nan()) {
                bail!("seed {seed}: run was recorded without decomposition terms");
            }
            for k in 0..4 {
                sums[k] += t[k];
            }
            residual = residual.max((r.regret() - t.iter().sum::<f64>()).abs());
        }
        let martingale = match &manifest {
            Some(m) => {
                let ok = sums[1].abs() <= martingale_bound(rows.len(), m.horizon, 0.02);
                all_ok &= ok;
                ok.to_string()
            }
            None => "n/a".to_string(),
        };
        all_ok &= residual <= 1e-6;
        println!(
            "{seed}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3e}\t{martingale}",
            rows.len(),
            sums[0],
            sums[1],
            sums[2],
            sums[3],
            residual
        );
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
