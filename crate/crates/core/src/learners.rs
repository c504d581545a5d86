//! Optimism–pessimism learners and reference baselines.
//!
//! Every learner plans an episode into an [`EpisodePlan`] that exposes its
//! optimistic Q tables, value tables, prior estimate and robust signaling
//! policy for the episode's context sequence. The harness executes the plan
//! in the true environment, evaluates it exactly, and feeds the trajectory
//! back through [`Learner::update`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::envsim::{simulate_episode, ReceiverModel};
use crate::error::{MppError, Result};
use crate::estimation::{
    bonus, confidence_beta, linear_rho, prior_ball_radius, tabular_radius, tabular_rho, CountState, GlmState,
    PotentialTrace, RidgeState,
};
use crate::model::{EpisodeRecord, LinearMpp, Link, SignalingPolicy, SignalingScheme, TabularMpp};
use crate::persuasion::{full_info_scheme, solve_robust_opt};
use crate::planner::{backward_induction, evaluate_policy, PlanResult};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Count smoothing for the tabular prior and Q estimates.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_c_rho")]
    pub c_rho: f64,
    #[serde(default = "default_c_eps")]
    pub c_eps: f64,
    /// Regularity level; when set, states whose radius reaches `p0·D` use full information.
    #[serde(default)]
    pub p0: Option<f64>,
    #[serde(default = "default_d")]
    pub d: f64,
    /// Overrides the model's parameter-norm bound for the GLM projection.
    #[serde(default)]
    pub l_theta: Option<f64>,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_c_beta() -> f64 {
    0.5
}
fn default_c_rho() -> f64 {
    0.1
}
fn default_c_eps() -> f64 {
    1.0
}
fn default_d() -> f64 {
    0.2
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            c_beta: default_c_beta(),
            c_rho: default_c_rho(),
            c_eps: default_c_eps(),
            p0: None,
            d: default_d(),
            l_theta: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Tabular,
    Contextual,
    Linear,
    FullInfo,
    Oracle,
}

/// Everything a learner committed to for one episode, on every state.
#[derive(Clone, Debug)]
pub struct EpisodePlan<T> {
    pub episode: usize,
    pub contexts: Vec<usize>,
    pub n_states: usize,
    pub n_outcomes: usize,
    pub n_actions: usize,
    /// `Q^t_h(s, ω, a)`, `[h][s][ω][a]`.
    pub q: Vec<T>,
    /// `V^t_h(s) = ⟨Q^t_h(s), μ^t_h ⊗ π^t_h(s)⟩`, `[h][s]` plus a zero row.
    pub v: Vec<T>,
    /// `μ^t_h(· | c_h)`, `[h][ω]`.
    pub mu: Vec<T>,
    /// Exploration bonus added before clipping, `[h][s][ω][a]`.
    pub bonus: Vec<T>,
    /// Prior-ball radius used at each step.
    pub eps: Vec<T>,
    pub policy: SignalingPolicy<T>,
    pub beta: T,
    pub rho: T,
}

impl<T: Scalar> EpisodePlan<T> {
    fn block(&self) -> usize {
        self.n_outcomes * self.n_actions
    }

    pub fn q_slice(&self, h: usize, s: usize) -> &[T] {
        let b = self.block();
        let start = (h * self.n_states + s) * b;
        &self.q[start..start + b]
    }

    pub fn bonus_slice(&self, h: usize, s: usize) -> &[T] {
        let b = self.block();
        let start = (h * self.n_states + s) * b;
        &self.bonus[start..start + b]
    }

    pub fn v(&self, h: usize, s: usize) -> T {
        self.v[h * self.n_states + s]
    }

    pub fn v_row(&self, h: usize) -> &[T] {
        &self.v[h * self.n_states..(h + 1) * self.n_states]
    }

    pub fn mu(&self, h: usize) -> &[T] {
        &self.mu[h * self.n_outcomes..(h + 1) * self.n_outcomes]
    }

    pub fn scheme(&self, h: usize, s: usize) -> &SignalingScheme<T> {
        self.policy.get(h, s).expect("plans define every state")
    }
}

/// Concentration bookkeeping of a learner's Gram sequences.
#[derive(Clone, Debug, Default)]
pub struct GramDiagnostics<T> {
    pub traces: Vec<PotentialTrace<T>>,
}

impl<T: Scalar> GramDiagnostics<T> {
    pub fn all_hold(&self) -> bool {
        self.traces.iter().all(|t| t.elliptical_ok && t.det_trace_ok)
    }
}

pub trait Learner<T: Scalar> {
    fn variant(&self) -> Variant;
    /// Completed episodes.
    fn episodes_done(&self) -> usize;
    /// Plans episode `episodes_done() + 1`.
    fn plan_episode(&mut self, contexts: &[usize]) -> Result<EpisodePlan<T>>;
    /// Incorporates the trajectory of the episode just planned.
    fn update(&mut self, record: &EpisodeRecord<T>) -> Result<()>;
    fn gram_diagnostics(&self) -> GramDiagnostics<T> {
        GramDiagnostics { traces: Vec::new() }
    }
}

/// Executes a plan in the true environment.
pub fn run_episode<T: Scalar>(
    plan: &EpisodePlan<T>,
    env: &TabularMpp<T>,
    seed: u64,
    receiver: ReceiverModel,
) -> EpisodeRecord<T> {
    simulate_episode(env, &plan.policy, &plan.contexts, seed, plan.episode, receiver)
}

fn check_index(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(MppError::EpisodeMismatch { expected, got });
    }
    Ok(())
}

/// Robust scheme for one state, or full information once the radius reaches `p0·D`.
fn robust_choice<T: Scalar>(mu: &[T], eps: T, u: &[T], q: &[T], clip: Option<T>) -> (SignalingScheme<T>, T) {
    if clip.is_some_and(|c| eps >= c) {
        let sch = full_info_scheme(u, mu.len());
        let v = sch.expected(mu, q);
        return (sch, v);
    }
    let sol = solve_robust_opt(mu, eps, u, q);
    (sol.scheme, sol.value)
}

fn clip_threshold<T: Scalar>(cfg: &LearnerConfig) -> Option<T> {
    cfg.p0.map(|p0| T::of(p0 * cfg.d))
}

// ---------------------------------------------------------------------------

/// Tabular learner: smoothed counts, `ρ/√N` bonuses, radius `c√(log(2HT)/t)`.
/// The prior estimate is shared across contexts.
#[derive(Clone, Debug)]
pub struct TabularOp4<T> {
    horizon: usize,
    n_states: usize,
    n_outcomes: usize,
    n_actions: usize,
    receiver_utility: Vec<T>,
    counts: Vec<CountState<T>>,
    cfg: LearnerConfig,
    total_episodes: usize,
    rho: T,
    done: usize,
}

impl<T: Scalar> TabularOp4<T> {
    /// Reads only sizes and receiver utilities from `model`.
    pub fn new(model: &TabularMpp<T>, cfg: LearnerConfig, total_episodes: usize) -> Self {
        let d = model.dims;
        let cells = d.states * d.outcomes * d.actions;
        Self {
            horizon: d.horizon,
            n_states: d.states,
            n_outcomes: d.outcomes,
            n_actions: d.actions,
            receiver_utility: model.receiver_utility_raw().to_vec(),
            counts: (0..d.horizon)
                .map(|_| CountState::new(d.states, d.outcomes, d.actions, T::of(cfg.lambda)))
                .collect(),
            cfg,
            total_episodes,
            rho: tabular_rho(T::of(cfg.c_rho), cells, d.horizon, total_episodes),
            done: 0,
        }
    }

    pub fn counts(&self, h: usize) -> &CountState<T> {
        &self.counts[h]
    }

    fn u_slice(&self, h: usize, s: usize) -> &[T] {
        let b = self.n_outcomes * self.n_actions;
        let start = (h * self.n_states + s) * b;
        &self.receiver_utility[start..start + b]
    }
}

impl<T: Scalar> Learner<T> for TabularOp4<T> {
    fn variant(&self) -> Variant {
        Variant::Tabular
    }

    fn episodes_done(&self) -> usize {
        self.done
    }

    fn plan_episode(&mut self, contexts: &[usize]) -> Result<EpisodePlan<T>> {
        let (hz, ns, no, na) = (self.horizon, self.n_states, self.n_outcomes, self.n_actions);
        let t = self.done + 1;
        let block = no * na;
        let mut q = vec![T::zero(); hz * ns * block];
        let mut bonus_tab = vec![T::zero(); hz * ns * block];
        let mut v = vec![T::zero(); (hz + 1) * ns];
        let mut mu_all = vec![T::zero(); hz * no];
        let mut policy = SignalingPolicy::empty(hz, ns);
        let eps = tabular_radius(T::of(self.cfg.c_eps), hz, self.total_episodes, t);
        let clip = clip_threshold::<T>(&self.cfg);
        for h in (0..hz).rev() {
            let cap = T::of_usize(hz - h);
            let counts = &self.counts[h];
            let mu = counts.prior();
            let next_v: Vec<T> = v[(h + 1) * ns..(h + 2) * ns].to_vec();
            for s in 0..ns {
                let base = (h * ns + s) * block;
                for w in 0..no {
                    for a in 0..na {
                        let k = counts.cell(s, w, a);
                        let n = counts.visits[k];
                        let (qv, b) = if n == 0 {
                            (cap, cap)
                        } else {
                            let b = self.rho / T::of(n as f64).sqrt();
                            ((counts.q_hat(s, w, a, &next_v) + b).min(cap).max(T::zero()), b)
                        };
                        q[base + w * na + a] = qv;
                        bonus_tab[base + w * na + a] = b;
                    }
                }
                let (sch, val) = robust_choice(&mu, eps, self.u_slice(h, s), &q[base..base + block], clip);
                v[h * ns + s] = val;
                policy.set(h, s, sch);
            }
            mu_all[h * no..(h + 1) * no].copy_from_slice(&mu);
        }
        Ok(EpisodePlan {
            episode: t,
            contexts: contexts.to_vec(),
            n_states: ns,
            n_outcomes: no,
            n_actions: na,
            q,
            v,
            mu: mu_all,
            bonus: bonus_tab,
            eps: vec![eps; hz],
            policy,
            beta: T::zero(),
            rho: self.rho,
        })
    }

    fn update(&mut self, record: &EpisodeRecord<T>) -> Result<()> {
        check_index(self.done + 1, record.episode)?;
        for (h, st) in record.steps.iter().enumerate() {
            self.counts[h].observe(st.state, st.outcome, st.taken, st.sender_utility, st.next_state);
        }
        self.done += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------

/// Public part of a linear model: what the sender is allowed to see.
#[derive(Clone, Debug)]
struct FeatureView<T> {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    contexts: Vec<Vec<T>>,
    grid: Vec<T>,
    psi: Vec<T>,
    dpsi: usize,
    receiver_utility: Vec<T>,
    link: Link,
    sigma: T,
    phi_bound: T,
    l_theta: T,
    l_mu: T,
    k_upper: T,
}

impl<T: Scalar> FeatureView<T> {
    fn psi_vec(&self, s: usize, g: usize, a: usize) -> &[T] {
        let start = ((s * self.grid.len() + g) * self.n_actions + a) * self.dpsi;
        &self.psi[start..start + self.dpsi]
    }

    fn u_slice(&self, h: usize, s: usize) -> &[T] {
        let n = self.grid.len() * self.n_actions;
        let start = (h * self.n_states + s) * n;
        &self.receiver_utility[start..start + n]
    }

    fn prior(&self, theta: &[T], c: usize) -> Vec<T> {
        crate::model::grid_prior(&self.grid, self.link.f(dot(&self.contexts[c], theta)), self.sigma)
    }
}

/// Linear learner: GLM prior estimation with an ellipsoidal confidence set
/// and ridge-regressed optimistic Q-functions. With `H = 1` it is the
/// contextual learner.
#[derive(Clone, Debug)]
pub struct LinearOp4<T> {
    view: FeatureView<T>,
    glm: Vec<GlmState<T>>,
    ridge: Vec<RidgeState<T>>,
    cfg: LearnerConfig,
    beta: T,
    rho: T,
    done: usize,
}

impl<T: Scalar> LinearOp4<T> {
    /// Copies features, grid, link data and receiver utilities; the true
    /// parameters and transition measures are not read.
    pub fn new(model: &LinearMpp<T>, cfg: LearnerConfig, total_episodes: usize) -> Self {
        let view = FeatureView {
            horizon: model.horizon,
            n_states: model.n_states,
            n_actions: model.n_actions,
            contexts: model.contexts.clone(),
            grid: model.grid.clone(),
            psi: model.psi.clone(),
            dpsi: model.dpsi,
            receiver_utility: model.receiver_utility.clone(),
            link: model.link,
            sigma: model.sigma,
            phi_bound: model.phi_bound,
            l_theta: cfg.l_theta.map_or(model.l_theta, T::of),
            l_mu: model.l_mu,
            k_upper: model.k_upper,
        };
        let n_keys = model.n_states * model.contexts.len();
        let beta = confidence_beta(
            model.dphi,
            model.sigma,
            model.kappa,
            model.k_upper,
            model.m_f,
            model.horizon,
            total_episodes,
            T::of(cfg.c_beta),
        );
        let rho = linear_rho(T::of(cfg.c_rho), model.dpsi, model.psi_bound, model.horizon, total_episodes);
        Self {
            glm: (0..model.horizon).map(|_| GlmState::new(&model.contexts, model.phi_bound)).collect(),
            ridge: (0..model.horizon)
                .map(|_| RidgeState::new(model.dpsi, model.psi_bound, n_keys))
                .collect(),
            view,
            cfg,
            beta,
            rho,
            done: 0,
        }
    }

    pub fn glm(&self, h: usize) -> &GlmState<T> {
        &self.glm[h]
    }

    pub fn ridge(&self, h: usize) -> &RidgeState<T> {
        &self.ridge[h]
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    fn key(&self, s: usize, c: usize) -> usize {
        s * self.view.contexts.len() + c
    }

    /// Prior-ball radius at step `h` for context `c`.
    pub fn radius(&self, h: usize, c: usize) -> T {
        prior_ball_radius(&self.view.contexts[c], &self.glm[h].chol, self.beta, self.view.l_mu, self.view.k_upper)
    }
}

impl<T: Scalar> Learner<T> for LinearOp4<T> {
    fn variant(&self) -> Variant {
        if self.view.horizon == 1 {
            Variant::Contextual
        } else {
            Variant::Linear
        }
    }

    fn episodes_done(&self) -> usize {
        self.done
    }

    fn plan_episode(&mut self, contexts: &[usize]) -> Result<EpisodePlan<T>> {
        let view = &self.view;
        let (hz, ns, na, ng, nc) = (view.horizon, view.n_states, view.n_actions, view.grid.len(), view.contexts.len());
        if contexts.len() != hz || contexts.iter().any(|&c| c >= nc) {
            return Err(MppError::Shape("context sequence does not match the model".into()));
        }
        let block = ng * na;
        let clip = clip_threshold::<T>(&self.cfg);
        let mut q = vec![T::zero(); hz * ns * block];
        let mut bonus_tab = vec![T::zero(); hz * ns * block];
        let mut v = vec![T::zero(); (hz + 1) * ns];
        let mut mu_all = vec![T::zero(); hz * ng];
        let mut eps_all = vec![T::zero(); hz];
        let mut policy = SignalingPolicy::empty(hz, ns);
        // V^t_{h+1} at every (state, context) key, filled backwards
        let mut next_values = vec![T::zero(); ns * nc];
        for h in (0..hz).rev() {
            let cap = T::of_usize(hz - h);
            let q_vec = self.ridge[h].fit(&next_values);
            let chol = &self.ridge[h].chol;
            for s in 0..ns {
                for g in 0..ng {
                    for a in 0..na {
                        let psi = view.psi_vec(s, g, a);
                        let b = bonus(psi, chol, self.rho);
                        let k = (h * ns + s) * block + g * na + a;
                        q[k] = (dot(psi, &q_vec) + b).min(cap).max(T::zero());
                        bonus_tab[k] = b;
                    }
                }
            }
            let mut needed: Vec<usize> = (0..ns).map(|s| self.key(s, contexts[h])).collect();
            if h > 0 {
                needed.extend((0..ns * nc).filter(|&k| self.ridge[h - 1].key_used(k)));
            }
            needed.sort_unstable();
            needed.dedup();
            let mut priors: HashMap<usize, (Vec<T>, T)> = HashMap::new();
            let mut values = vec![T::zero(); ns * nc];
            for key in needed {
                let (s, c) = (key / nc, key % nc);
                let (mu, eps) = priors
                    .entry(c)
                    .or_insert_with(|| (view.prior(&self.glm[h].theta_hat, c), self.radius(h, c)))
                    .clone();
                let qs = &q[(h * ns + s) * block..(h * ns + s + 1) * block];
                let (sch, val) = robust_choice(&mu, eps, view.u_slice(h, s), qs, clip);
                values[key] = val;
                if c == contexts[h] {
                    v[h * ns + s] = val;
                    policy.set(h, s, sch);
                    mu_all[h * ng..(h + 1) * ng].copy_from_slice(&mu);
                    eps_all[h] = eps;
                }
            }
            next_values = values;
        }
        Ok(EpisodePlan {
            episode: self.done + 1,
            contexts: contexts.to_vec(),
            n_states: ns,
            n_outcomes: ng,
            n_actions: na,
            q,
            v,
            mu: mu_all,
            bonus: bonus_tab,
            eps: eps_all,
            policy,
            beta: self.beta,
            rho: self.rho,
        })
    }

    fn update(&mut self, record: &EpisodeRecord<T>) -> Result<()> {
        check_index(self.done + 1, record.episode)?;
        let hz = self.view.horizon;
        for (h, st) in record.steps.iter().enumerate() {
            let omega = self.view.grid[st.outcome];
            self.glm[h].observe(st.context, omega)?;
            let next_key = match (st.next_state, record.steps.get(h + 1)) {
                (Some(n), Some(next)) if h + 1 < hz => Some(self.key(n, next.context)),
                _ => None,
            };
            let psi = self.view.psi_vec(st.state, st.outcome, st.taken).to_vec();
            self.ridge[h].observe(&psi, st.sender_utility, next_key)?;
        }
        let (link, l_theta, k_upper, phi_bound) = (self.view.link, self.view.l_theta, self.view.k_upper, self.view.phi_bound);
        for g in &mut self.glm {
            g.refit(link, l_theta, k_upper, phi_bound);
        }
        self.done += 1;
        Ok(())
    }

    fn gram_diagnostics(&self) -> GramDiagnostics<T> {
        GramDiagnostics {
            traces: self
                .glm
                .iter()
                .map(|g| g.potential.clone())
                .chain(self.ridge.iter().map(|r| r.potential.clone()))
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------

/// Plans with the true model, either optimally or by full revelation.
/// Used as the zero-regret reference and the static full-information baseline.
#[derive(Clone, Debug)]
pub struct Baseline<T> {
    model: TabularMpp<T>,
    variant: Variant,
    memo: HashMap<Vec<usize>, PlanResult<T>>,
    done: usize,
}

impl<T: Scalar> Baseline<T> {
    pub fn oracle(model: TabularMpp<T>) -> Self {
        Self {
            model,
            variant: Variant::Oracle,
            memo: HashMap::new(),
            done: 0,
        }
    }

    pub fn full_info(model: TabularMpp<T>) -> Self {
        Self {
            model,
            variant: Variant::FullInfo,
            memo: HashMap::new(),
            done: 0,
        }
    }
}

impl<T: Scalar> Learner<T> for Baseline<T> {
    fn variant(&self) -> Variant {
        self.variant
    }

    fn episodes_done(&self) -> usize {
        self.done
    }

    fn plan_episode(&mut self, contexts: &[usize]) -> Result<EpisodePlan<T>> {
        let m = &self.model;
        let d = m.dims;
        let (policy, q, v) = match self.variant {
            Variant::Oracle => {
                let plan = self.memo.entry(contexts.to_vec()).or_insert_with(|| backward_induction(m, contexts));
                (plan.policy.clone(), plan.q_star.clone(), plan.v_star.clone())
            }
            _ => {
                let mut policy = SignalingPolicy::empty(d.horizon, d.states);
                for h in 0..d.horizon {
                    for s in 0..d.states {
                        policy.set(h, s, full_info_scheme(m.u_slice(h, s), d.outcomes));
                    }
                }
                let ev = evaluate_policy(m, &policy, contexts, ReceiverModel::Obedient);
                (policy, ev.q, ev.v)
            }
        };
        let mu: Vec<T> = (0..d.horizon).flat_map(|h| m.prior(h, contexts[h]).to_vec()).collect();
        Ok(EpisodePlan {
            episode: self.done + 1,
            contexts: contexts.to_vec(),
            n_states: d.states,
            n_outcomes: d.outcomes,
            n_actions: d.actions,
            bonus: vec![T::zero(); q.len()],
            q,
            v,
            mu,
            eps: vec![T::zero(); d.horizon],
            policy,
            beta: T::zero(),
            rho: T::zero(),
        })
    }

    fn update(&mut self, record: &EpisodeRecord<T>) -> Result<()> {
        check_index(self.done + 1, record.episode)?;
        self.done += 1;
        Ok(())
    }
}
