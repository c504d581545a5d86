//! Experiment orchestration: configuration, the episode loop with exact
//! regret against the planner, the regret decomposition, diagnostics and
//! CSV telemetry.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envsim::{gen_linear, gen_tabular, stream, LinearGen, Purpose, ReceiverModel, TabularGen};
use crate::error::{MppError, Result};
use crate::estimation::PotentialTrace;
use crate::io::{read_instance, Instance};
use crate::learners::{run_episode, Baseline, EpisodePlan, Learner, LearnerConfig, LinearOp4, TabularOp4, Variant};
use crate::model::{DecompositionTerms, EpisodeRecord, LinearMpp, RegretLog, TabularMpp};
use crate::persuasion::instance_p0;
use crate::planner::{backward_induction, evaluate_policy, forward_state_distribution, state_marginal, Evaluation, PlanResult};
use crate::scalar::{dot, Scalar};

pub const CSV_HEADER: &str =
    "seed,t,v_star,v_pi,regret,cum_regret,term_i,term_ii,term_iii,term_iv,deviations,eps_used,beta,rho";

/// Where the environment comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    File { path: PathBuf },
    /// Generated per run; `seed` defaults to the run seed.
    Tabular { generator: TabularGen, seed: Option<u64> },
    Linear { generator: LinearGen, seed: Option<u64> },
}

/// How contexts are assigned to `(episode, step)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// The same sequence of length `H` every episode.
    Fixed { contexts: Vec<usize> },
    #[default]
    RoundRobin,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub variant: Variant,
    #[serde(default)]
    pub constants: LearnerConfig,
    /// Fill a missing `p0` with the instance's measured regularity at `D`.
    #[serde(default = "yes")]
    pub measure_p0: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default = "yes")]
    pub decomposition: bool,
    #[serde(default = "yes")]
    pub optimism: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            decomposition: true,
            optimism: true,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub learner: LearnerSpec,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub receiver: ReceiverModel,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| MppError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(MppError::Config("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(MppError::Config("seeds must be non-empty".into()));
        }
        if let InstanceSpec::File { path } = &self.instance {
            if !path.exists() {
                return Err(MppError::Config(format!("instance file {} does not exist", path.display())));
            }
        }
        let linear_learner = matches!(self.learner.variant, Variant::Linear | Variant::Contextual);
        if linear_learner && matches!(self.instance, InstanceSpec::Tabular { .. }) {
            return Err(MppError::Config("linear learners need a linear instance".into()));
        }
        Ok(())
    }
}

/// Environment of one run.
#[derive(Clone, Debug)]
pub enum Env {
    Tabular(TabularMpp<f64>),
    Linear { model: Box<LinearMpp<f64>>, expanded: TabularMpp<f64> },
}

impl Env {
    pub fn tabular(&self) -> &TabularMpp<f64> {
        match self {
            Env::Tabular(m) => m,
            Env::Linear { expanded, .. } => expanded,
        }
    }
}

pub fn build_env(spec: &InstanceSpec, run_seed: u64) -> Result<Env> {
    match spec {
        InstanceSpec::File { path } => match read_instance::<f64>(path)? {
            Instance::Tabular(doc) => Ok(Env::Tabular(doc.into_model()?)),
            Instance::Linear(model) => {
                let violations = model.validate();
                if !violations.is_empty() {
                    return Err(MppError::InvalidModel(violations));
                }
                let expanded = model.to_tabular()?;
                Ok(Env::Linear {
                    model: Box::new(model),
                    expanded,
                })
            }
        },
        InstanceSpec::Tabular { generator, seed } => Ok(Env::Tabular(gen_tabular(seed.unwrap_or(run_seed), generator)?)),
        InstanceSpec::Linear { generator, seed } => {
            let model = gen_linear(seed.unwrap_or(run_seed), generator)?;
            let expanded = model.to_tabular()?;
            Ok(Env::Linear {
                model: Box::new(model),
                expanded,
            })
        }
    }
}

pub fn build_learner(spec: &LearnerSpec, env: &Env, episodes: usize) -> Result<Box<dyn Learner<f64> + Send>> {
    let mut cfg = spec.constants;
    if cfg.p0.is_none() && spec.measure_p0 {
        let p0 = instance_p0(env.tabular(), cfg.d);
        if p0 > 0.0 {
            cfg.p0 = Some(p0);
        }
    }
    Ok(match (spec.variant, env) {
        (Variant::Tabular, e) => Box::new(TabularOp4::new(e.tabular(), cfg, episodes)),
        (Variant::Linear | Variant::Contextual, Env::Linear { model, .. }) => {
            if spec.variant == Variant::Contextual && model.horizon != 1 {
                return Err(MppError::Config("the contextual learner needs H = 1".into()));
            }
            Box::new(LinearOp4::new(model, cfg, episodes))
        }
        (Variant::Linear | Variant::Contextual, Env::Tabular(_)) => {
            return Err(MppError::Config("linear learners need a linear instance".into()))
        }
        (Variant::Oracle, e) => Box::new(Baseline::oracle(e.tabular().clone())),
        (Variant::FullInfo, e) => Box::new(Baseline::full_info(e.tabular().clone())),
    })
}

pub fn context_sequence(schedule: &Schedule, seed: u64, episode: usize, horizon: usize, n_contexts: usize) -> Result<Vec<usize>> {
    match schedule {
        Schedule::Fixed { contexts } => {
            if contexts.len() != horizon || contexts.iter().any(|&c| c >= n_contexts) {
                return Err(MppError::Config("fixed schedule must list H valid contexts".into()));
            }
            Ok(contexts.clone())
        }
        Schedule::RoundRobin => Ok((0..horizon).map(|h| ((episode - 1) * horizon + h) % n_contexts).collect()),
        Schedule::Random => Ok((0..horizon)
            .map(|h| stream(seed, episode as u64, h as u64, Purpose::Context).gen_range(0..n_contexts))
            .collect()),
    }
}

/// Planner output with the optimal occupancy, cached per context sequence.
#[derive(Clone, Debug)]
pub struct StarPlan<T> {
    pub plan: PlanResult<T>,
    pub occupancy: Vec<Vec<T>>,
    pub state_dist: Vec<Vec<T>>,
}

impl<T: Scalar> StarPlan<T> {
    pub fn new(model: &TabularMpp<T>, contexts: &[usize]) -> Self {
        let plan = backward_induction(model, contexts);
        let occupancy = forward_state_distribution(model, &plan.policy, contexts, ReceiverModel::Obedient);
        let state_dist = occupancy.iter().map(|o| state_marginal(o, model.dims.states)).collect();
        Self {
            plan,
            occupancy,
            state_dist,
        }
    }
}

/// `δ_h(s, ω, a) = v_h + P_h V^t_{h+1} − Q^t_h`.
pub fn td_error<T: Scalar>(model: &TabularMpp<T>, plan: &EpisodePlan<T>, h: usize, s: usize, w: usize, a: usize) -> T {
    let future = if h + 1 < model.horizon() {
        model.expected_next(h, s, w, a, plan.v_row(h + 1))
    } else {
        T::zero()
    };
    model.v(h, s, w, a) + future - plan.q_slice(h, s)[w * model.dims.actions + a]
}

/// Splits `V*_1(s_1) − V^{π^t}_1(s_1)` into the optimism residual, the
/// martingale terms, the pessimism term under the optimal occupancy and the
/// prior-estimation term along the realized path. The four terms add up to
/// the regret exactly (up to rounding).
pub fn decompose_regret<T: Scalar>(
    model: &TabularMpp<T>,
    star: &StarPlan<T>,
    plan: &EpisodePlan<T>,
    eval: &Evaluation<T>,
    record: &EpisodeRecord<T>,
) -> Result<DecompositionTerms<T>> {
    let d = model.dims;
    if record.steps.len() != d.horizon {
        return Err(MppError::Shape("record length differs from the horizon".into()));
    }
    let block = d.outcomes * d.actions;
    let mut terms = DecompositionTerms::default();
    for h in 0..d.horizon {
        let mu_star = model.prior(h, plan.contexts[h]);
        // expected TD error and pessimism term under the optimal occupancy
        let occ = &star.occupancy[h];
        let mut expected_td = T::zero();
        let mut pess = T::zero();
        for s in 0..d.states {
            let ps = star.state_dist[h][s];
            if ps == T::zero() {
                continue;
            }
            for w in 0..d.outcomes {
                for a in 0..d.actions {
                    let o = occ[s * block + w * d.actions + a];
                    if o != T::zero() {
                        expected_td += o * td_error(model, plan, h, s, w, a);
                    }
                }
            }
            let q = plan.q_slice(h, s);
            let star_scheme = star.plan.policy.get(h, s).expect("planner defines every state");
            pess += ps * (star_scheme.expected(mu_star, q) - plan.v(h, s));
        }
        let st = &record.steps[h];
        let (s, w, a) = (st.state, st.outcome, st.taken);
        let q = plan.q_slice(h, s);
        let scheme = plan.scheme(h, s);
        let v_tilde = scheme.expected(mu_star, q);
        let q_pi = eval.q_slice(h, s, block)[w * d.actions + a];
        terms.term_i += expected_td - td_error(model, plan, h, s, w, a);
        terms.term_iii += pess;
        terms.term_iv += plan.v(h, s) - v_tilde;
        let zeta1 = (v_tilde - eval.v(h, s)) - (q[w * d.actions + a] - q_pi);
        let zeta2 = match st.next_state {
            Some(next) if h + 1 < d.horizon => {
                let diff: Vec<T> = plan
                    .v_row(h + 1)
                    .iter()
                    .zip(eval.v_row(h + 1))
                    .map(|(&x, &y)| x - y)
                    .collect();
                dot(model.transition_row(h, s, w, a), &diff) - diff[next]
            }
            _ => T::zero(),
        };
        terms.term_ii += zeta1 + zeta2;
    }
    Ok(terms)
}

/// `√(16 T H³ log(4/δ))`.
pub fn martingale_bound(episodes: usize, horizon: usize, delta: f64) -> f64 {
    (16.0 * episodes as f64 * (horizon as f64).powi(3) * (4.0 / delta).ln()).sqrt()
}

/// Least-squares slope of `log Reg(t)` against `log t` over `t ≥ t_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    /// `+1` was added because the series had nonpositive entries.
    pub offset: bool,
}

/// `series[i]` is the cumulative regret after episode `i + 1`.
pub fn fit_regret_exponent(series: &[f64], t_min: usize) -> Result<ExponentFit> {
    let t_min = t_min.max(1);
    if series.len() < 2 * t_min || series.len() < 2 {
        return Err(MppError::Config(format!(
            "series of length {} is shorter than 2·t_min = {}",
            series.len(),
            2 * t_min
        )));
    }
    let tail = &series[t_min - 1..];
    let offset = tail.iter().any(|&r| r <= 0.0);
    let shift = if offset { 1.0 } else { 0.0 };
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .map(|(i, &r)| (((t_min + i) as f64).ln(), (r + shift).max(f64::MIN_POSITIVE).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - alpha * p.0).powi(2)).sum();
    let stderr = if pts.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(ExponentFit {
        alpha,
        stderr,
        intercept,
        points: pts.len(),
        offset,
    })
}

/// Run-level diagnostics beyond the regret series.
#[derive(Clone, Debug, Default)]
pub struct RunDiagnostics {
    /// `(t, h)` pairs checked for optimism and how many satisfied the band.
    pub optimism_checked: usize,
    pub optimism_held: usize,
    /// `Σ_{t,h} (ζ¹ + ζ²)`.
    pub martingale_sum: f64,
    pub gram: Vec<PotentialTrace<f64>>,
    pub fallback_steps: usize,
    pub p0: Option<f64>,
    pub horizon: usize,
}

impl RunDiagnostics {
    pub fn optimism_rate(&self) -> f64 {
        if self.optimism_checked == 0 {
            1.0
        } else {
            self.optimism_held as f64 / self.optimism_checked as f64
        }
    }

    pub fn gram_bounds_hold(&self) -> bool {
        self.gram.iter().all(|g| g.elliptical_ok && g.det_trace_ok)
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub log: RegretLog<f64>,
    pub diagnostics: RunDiagnostics,
}

pub const OPTIMISM_TOL: f64 = 1e-6;

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "nan".to_string()
    }
}

/// CSV row for one regret entry.
pub fn csv_row(seed: u64, e: &crate::model::RegretEntry<f64>) -> String {
    let t = e.terms;
    let term = |f: fn(&DecompositionTerms<f64>) -> f64| t.as_ref().map_or("nan".to_string(), |x| fmt_float(f(x)));
    format!(
        "{seed},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        e.t,
        fmt_float(e.v_star),
        fmt_float(e.v_pi),
        fmt_float(e.regret),
        fmt_float(e.cum_regret),
        term(|x| x.term_i),
        term(|x| x.term_ii),
        term(|x| x.term_iii),
        term(|x| x.term_iv),
        e.deviations,
        fmt_float(e.eps_used),
        fmt_float(e.beta),
        fmt_float(e.rho),
    )
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MppError + '_ {
    move |source| MppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Complete rows already present in a seed file; a trailing partial line is cut off.
fn existing_rows(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        fs::write(path, complete).map_err(io_err(path))?;
    }
    let mut lines = complete.lines();
    match lines.next() {
        None => Ok(Vec::new()),
        Some(h) if h == CSV_HEADER => Ok(lines.map(str::to_string).collect()),
        Some(_) => Err(MppError::Config(format!("{} has an unexpected header", path.display()))),
    }
}

/// Runs one seed. With `out` set, rows are appended to `seed_<seed>.csv`
/// and flushed per episode; rows already on disk are replayed and checked
/// instead of rewritten.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<SeedRun> {
    let env = build_env(&cfg.instance, seed)?;
    let model = env.tabular();
    let d = model.dims;
    let mut learner = build_learner(&cfg.learner, &env, cfg.episodes)?;
    let p0 = if cfg.learner.measure_p0 || cfg.learner.constants.p0.is_some() {
        cfg.learner.constants.p0.or_else(|| Some(instance_p0(model, cfg.learner.constants.d)).filter(|&p| p > 0.0))
    } else {
        None
    };
    let mut writer = None;
    let mut previous = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(format!("seed_{seed}.csv"));
        previous = existing_rows(&path)?;
        if previous.len() > cfg.episodes {
            return Err(MppError::Config(format!("{} has more rows than episodes", path.display())));
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        if f.metadata().map_err(io_err(&path))?.len() == 0 {
            writeln!(f, "{CSV_HEADER}").map_err(io_err(&path))?;
        }
        writer = Some((f, path));
    }
    let mut log = RegretLog::new(seed);
    let mut diag = RunDiagnostics {
        p0,
        horizon: d.horizon,
        ..RunDiagnostics::default()
    };
    let mut stars: HashMap<Vec<usize>, StarPlan<f64>> = HashMap::new();
    for t in 1..=cfg.episodes {
        let ctx = context_sequence(&cfg.schedule, seed, t, d.horizon, d.contexts)?;
        let star = stars.entry(ctx.clone()).or_insert_with(|| StarPlan::new(model, &ctx));
        let plan = learner.plan_episode(&ctx)?;
        let record = run_episode(&plan, model, seed, cfg.receiver);
        let eval = evaluate_policy(model, &plan.policy, &ctx, cfg.receiver);
        let s1 = model.initial_state;
        let v_star = star.plan.v(0, s1);
        let v_pi = eval.v(0, s1);
        let terms = if cfg.diagnostics.decomposition {
            let terms = decompose_regret(model, star, &plan, &eval, &record)?;
            diag.martingale_sum += terms.term_ii;
            Some(terms)
        } else {
            None
        };
        if cfg.diagnostics.optimism {
            for (h, st) in record.steps.iter().enumerate() {
                let delta = td_error(model, &plan, h, st.state, st.outcome, st.taken);
                let b = plan.bonus_slice(h, st.state)[st.outcome * d.actions + st.taken];
                diag.optimism_checked += 1;
                if delta <= OPTIMISM_TOL && delta >= -2.0 * b - OPTIMISM_TOL {
                    diag.optimism_held += 1;
                }
            }
        }
        diag.fallback_steps += record.steps.iter().filter(|s| s.fallback).count();
        log.push(
            t,
            v_star,
            v_pi,
            terms,
            record.deviations(),
            record.realized_return(),
            plan.eps[0],
            plan.beta,
            plan.rho,
        );
        learner.update(&record)?;
        if let Some((f, path)) = writer.as_mut() {
            let row = csv_row(seed, log.entries.last().expect("just pushed"));
            match previous.get(t - 1) {
                Some(old) if *old == row => {}
                Some(_) => {
                    return Err(MppError::Config(format!(
                        "{}: episode {t} replays differently from the stored row",
                        path.display()
                    )))
                }
                None => {
                    writeln!(f, "{row}").map_err(io_err(path))?;
                    f.flush().map_err(io_err(path))?;
                }
            }
        }
    }
    diag.gram = learner.gram_diagnostics().traces;
    Ok(SeedRun { log, diagnostics: diag })
}

/// Worker count: `MPP_LAB_THREADS` if set and positive, else the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var("MPP_LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every seed on a bounded worker pool, then merges the per-seed CSVs
/// into `regret.csv` in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count().min(cfg.seeds.len()).max(1))
        .build()
        .map_err(|e| MppError::Config(format!("thread pool: {e}")))?;
    let out = cfg.output.as_deref();
    let runs: Vec<Result<SeedRun>> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, out)).collect());
    let runs: Vec<SeedRun> = runs.into_iter().collect::<Result<_>>()?;
    if let Some(dir) = out {
        merge_csvs(dir, &cfg.seeds)?;
        let manifest = RunManifest {
            horizon: runs[0].diagnostics.horizon,
            episodes: cfg.episodes,
            seeds: cfg.seeds.clone(),
            config: cfg.clone(),
        };
        let path = dir.join("run.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    }
    Ok(runs)
}

/// Written next to the CSVs so a run directory can be re-analysed alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub horizon: usize,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

pub fn merge_csvs(dir: &Path, seeds: &[u64]) -> Result<PathBuf> {
    let merged = dir.join("regret.csv");
    let mut f = File::create(&merged).map_err(io_err(&merged))?;
    writeln!(f, "{CSV_HEADER}").map_err(io_err(&merged))?;
    for seed in seeds {
        let path = dir.join(format!("seed_{seed}.csv"));
        let rd = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        for line in rd.lines().skip(1) {
            writeln!(f, "{}", line.map_err(io_err(&path))?).map_err(io_err(&merged))?;
        }
    }
    Ok(merged)
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub seed: u64,
    pub t: usize,
    pub values: [f64; 12],
}

impl CsvRow {
    pub fn regret(&self) -> f64 {
        self.values[2]
    }
    pub fn cum_regret(&self) -> f64 {
        self.values[3]
    }
    pub fn terms(&self) -> [f64; 4] {
        [self.values[4], self.values[5], self.values[6], self.values[7]]
    }
    pub fn deviations(&self) -> f64 {
        self.values[8]
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(MppError::Config(format!("{}: header does not match the schema", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 14 {
                return Err(MppError::Config(format!("{}: row {} has {} columns", path.display(), i + 1, cols.len())));
            }
            let bad = |c: &str| MppError::Config(format!("{}: row {}: bad value {c:?}", path.display(), i + 1));
            let mut values = [0.0; 12];
            for (k, c) in cols[2..].iter().enumerate() {
                values[k] = c.parse::<f64>().map_err(|_| bad(c))?;
            }
            Ok(CsvRow {
                seed: cols[0].parse().map_err(|_| bad(cols[0]))?,
                t: cols[1].parse().map_err(|_| bad(cols[1]))?,
                values,
            })
        })
        .collect()
}
