//! Ground-truth simulation: seeded random streams, the Bayesian receiver,
//! trajectory sampling and generators for regular instances.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::model::{
    grid_prior_lipschitz, renormalize, Dims, EpisodeRecord, LinearMpp, Link, SignalingPolicy, SignalingScheme,
    StepRecord, TabularMpp,
};
use crate::persuasion::{best_response, full_info_scheme, instance_p0, persuasion_slack};
use crate::scalar::{dot, Scalar};

/// What a random stream is used for; part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Context = 0,
    Outcome = 1,
    Signal = 2,
    Transition = 3,
    Generator = 4,
    Noise = 5,
}

/// Independent ChaCha8 stream for `(seed, episode, step, purpose)`.
pub fn stream(seed: u64, episode: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
    debug_assert!(step < 1 << 12 && episode < 1 << 44);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((episode << 20) | (step << 8) | purpose as u64);
    rng
}

/// Categorical draw from nonnegative weights (need not be normalized).
pub fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let w: Vec<f64> = probs.iter().map(|p| p.to_f64_lossy().max(0.0)).collect();
    match WeightedIndex::new(&w) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0,
    }
}

/// How the simulated receiver reacts to a recommendation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverModel {
    /// Bayesian best response to the posterior induced by the signal.
    #[default]
    Rational,
    /// Always follows the recommendation.
    Obedient,
}

/// Action taken by a Bayesian receiver who knows `mu_true` and the committed
/// scheme and is told `signaled`.
///
/// A recommendation that is a best response within `obey_tol` is followed;
/// otherwise the receiver takes the lowest-index best response to the
/// posterior. Zero-probability signals are followed.
pub fn receiver_step<T: Scalar>(scheme: &SignalingScheme<T>, mu_true: &[T], u_slice: &[T], signaled: usize) -> usize {
    let na = scheme.n_actions;
    let posterior: Vec<T> = mu_true.iter().enumerate().map(|(w, &m)| m * scheme.prob(w, signaled)).collect();
    let mass: T = posterior.iter().copied().sum();
    if mass <= T::zero() {
        return signaled;
    }
    let obeys = (0..na).all(|alt| alt == signaled || persuasion_slack(scheme, mu_true, u_slice, signaled, alt) >= -T::obey_tol());
    if obeys {
        return signaled;
    }
    let post: Vec<T> = posterior.iter().map(|&p| p / mass).collect();
    best_response(u_slice, &post)
}

/// Taken action for every possible signal under the given receiver model.
pub fn response_table<T: Scalar>(
    scheme: &SignalingScheme<T>,
    mu_true: &[T],
    u_slice: &[T],
    receiver: ReceiverModel,
) -> Vec<usize> {
    (0..scheme.n_actions)
        .map(|a| match receiver {
            ReceiverModel::Obedient => a,
            ReceiverModel::Rational => receiver_step(scheme, mu_true, u_slice, a),
        })
        .collect()
}

pub fn sample_transition<T: Scalar, R: Rng + ?Sized>(
    model: &TabularMpp<T>,
    h: usize,
    s: usize,
    w: usize,
    a: usize,
    rng: &mut R,
) -> usize {
    sample_categorical(model.transition_row(h, s, w, a), rng)
}

/// Plays one episode of `policy` in the true environment. States without a
/// scheme use full information and are flagged.
pub fn simulate_episode<T: Scalar>(
    model: &TabularMpp<T>,
    policy: &SignalingPolicy<T>,
    contexts: &[usize],
    seed: u64,
    episode: usize,
    receiver: ReceiverModel,
) -> EpisodeRecord<T> {
    let horizon = model.horizon();
    let ep = episode as u64;
    let mut s = model.initial_state;
    let mut steps = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let c = contexts[h];
        let mu = model.prior(h, c);
        let u = model.u_slice(h, s);
        let w = sample_categorical(mu, &mut stream(seed, ep, h as u64, Purpose::Outcome));
        let fallback_scheme;
        let (scheme, fallback) = match policy.get(h, s) {
            Some(sch) => (sch, false),
            None => {
                fallback_scheme = full_info_scheme(u, model.dims.outcomes);
                (&fallback_scheme, true)
            }
        };
        let rec = sample_categorical(scheme.row(w), &mut stream(seed, ep, h as u64, Purpose::Signal));
        let taken = match receiver {
            ReceiverModel::Obedient => rec,
            ReceiverModel::Rational => receiver_step(scheme, mu, u, rec),
        };
        let next = (h + 1 < horizon)
            .then(|| sample_transition(model, h, s, w, taken, &mut stream(seed, ep, h as u64, Purpose::Transition)));
        steps.push(StepRecord {
            context: c,
            state: s,
            outcome: w,
            recommended: rec,
            taken,
            sender_utility: model.v(h, s, w, taken),
            deviated: rec != taken,
            fallback,
            next_state: next,
        });
        if let Some(n) = next {
            s = n;
        }
    }
    EpisodeRecord { episode, steps }
}

fn dirichlet_row<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let d = Dirichlet::new_with_size(alpha, n).expect("alpha > 0 and n >= 2");
    d.sample(rng)
}

/// Receiver utility for one `(h, s)` block: outcome `ω` belongs to action
/// `ω mod |A|`, which beats every other action there by at least `d`.
fn block_utilities<R: Rng + ?Sized>(n_outcomes: usize, n_actions: usize, d: f64, rng: &mut R) -> Vec<f64> {
    let mut u = vec![0.0; n_outcomes * n_actions];
    for w in 0..n_outcomes {
        let owner = w % n_actions;
        let top = rng.gen_range(d..=1.0);
        for a in 0..n_actions {
            u[w * n_actions + a] = if a == owner { top } else { rng.gen::<f64>() * (top - d) };
        }
    }
    u
}

/// Sizes and regularity targets for [`gen_tabular`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularGen {
    pub horizon: usize,
    pub states: usize,
    pub outcomes: usize,
    pub actions: usize,
    #[serde(default = "one")]
    pub contexts: usize,
    pub p0: f64,
    pub d: f64,
    /// Weight in `[0,1]` pulling sender utility toward the last action,
    /// which opens a gap between optimal signaling and full revelation.
    #[serde(default)]
    pub sender_bias: f64,
}

fn one() -> usize {
    1
}

/// Random tabular MPP satisfying `(p0, D)`-regularity by construction.
pub fn gen_tabular<T: Scalar>(seed: u64, cfg: &TabularGen) -> Result<TabularMpp<T>> {
    let TabularGen {
        horizon,
        states,
        outcomes,
        actions,
        contexts,
        p0,
        d,
        sender_bias,
    } = *cfg;
    if horizon == 0 || states == 0 || outcomes == 0 || actions == 0 || contexts == 0 {
        return Err(MppError::Generator("all sizes must be positive".into()));
    }
    if !(p0 > 0.0 && d > 0.0 && d <= 1.0) {
        return Err(MppError::Generator(format!("need p0 > 0 and D in (0,1], got p0={p0}, D={d}")));
    }
    if p0 * actions as f64 > 1.0 + 1e-12 {
        return Err(MppError::Generator(format!(
            "p0 = {p0} with {actions} actions needs total mass {} > 1",
            p0 * actions as f64
        )));
    }
    if outcomes < actions {
        return Err(MppError::Generator(format!(
            "{outcomes} outcomes cannot give each of {actions} actions a dominant block"
        )));
    }
    if !(0.0..=1.0).contains(&sender_bias) {
        return Err(MppError::Generator("sender_bias must lie in [0,1]".into()));
    }
    let mut rng = stream(seed, 0, 0, Purpose::Generator);
    let dims = Dims {
        horizon,
        states,
        outcomes,
        actions,
        contexts,
    };
    let mut u = Vec::with_capacity(dims.utility_len());
    let mut v = Vec::with_capacity(dims.utility_len());
    let mut p = Vec::with_capacity(dims.transition_len());
    for _h in 0..horizon {
        for _s in 0..states {
            u.extend(block_utilities(outcomes, actions, d, &mut rng));
            for _w in 0..outcomes {
                for a in 0..actions {
                    let favored = if a + 1 == actions { 1.0 } else { 0.0 };
                    v.push((1.0 - sender_bias) * rng.gen::<f64>() + sender_bias * favored);
                    p.extend(dirichlet_row(1.0, states, &mut rng));
                }
            }
        }
    }
    let mut mu = Vec::with_capacity(dims.prior_len());
    for _ in 0..horizon * contexts {
        let spare = (1.0 - p0 * actions as f64).max(0.0);
        let block_mass: Vec<f64> = dirichlet_row(1.0, actions, &mut rng).iter().map(|x| p0 + spare * x).collect();
        let mut row = vec![0.0; outcomes];
        for (a, &m) in block_mass.iter().enumerate() {
            let cells: Vec<usize> = (a..outcomes).step_by(actions).collect();
            let split = dirichlet_row(1.0, cells.len(), &mut rng);
            for (&w, x) in cells.iter().zip(split) {
                row[w] = m * x;
            }
        }
        mu.extend(row);
    }
    let conv = |x: Vec<f64>| x.into_iter().map(T::of).collect::<Vec<T>>();
    let model = TabularMpp::new_normalized(dims, 0, conv(u), conv(v), conv(p), conv(mu))?;
    let measured = instance_p0(&model, T::of(d)).to_f64_lossy();
    if measured < p0 - 1e-9 {
        return Err(MppError::Generator(format!("regularity {measured} below target {p0}")));
    }
    Ok(model)
}

/// Parameters for [`gen_linear`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGen {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    pub dphi: usize,
    pub dpsi: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub contexts: usize,
    pub sigma: f64,
    pub link: Link,
    /// Regularity target enforced by rejection; `None` skips the check.
    #[serde(default)]
    pub p0: Option<f64>,
    #[serde(default = "default_d")]
    pub d: f64,
    /// Dirichlet concentration of the state–outcome–action features.
    #[serde(default = "default_alpha")]
    pub feature_alpha: f64,
}

fn default_grid() -> usize {
    32
}
fn default_d() -> f64 {
    0.2
}
fn default_alpha() -> f64 {
    0.3
}

const LINEAR_RETRIES: u64 = 100;

fn unit_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R, nonneg: bool) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if nonneg {
            x.iter_mut().for_each(|v| *v = v.abs());
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return x.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Random linear MPP with unit-norm parameters and features, an outcome grid
/// covering `f(φᵀθ*) ± 4σ` over the context pool, and `(p0, D)`-regularity
/// on the grid when requested.
pub fn gen_linear<T: Scalar>(seed: u64, cfg: &LinearGen) -> Result<LinearMpp<T>> {
    if cfg.horizon == 0 || cfg.states == 0 || cfg.actions == 0 || cfg.dphi == 0 || cfg.dpsi == 0 || cfg.contexts == 0 {
        return Err(MppError::Generator("all sizes must be positive".into()));
    }
    if cfg.grid < cfg.actions.max(2) {
        return Err(MppError::Generator("grid must have at least max(2, |A|) points".into()));
    }
    if !(cfg.sigma >= 0.0 && cfg.d > 0.0 && cfg.d <= 1.0 && cfg.feature_alpha > 0.0) {
        return Err(MppError::Generator("need sigma >= 0, D in (0,1], feature_alpha > 0".into()));
    }
    let mut last = String::new();
    for attempt in 0..LINEAR_RETRIES {
        let model = linear_candidate::<T>(seed, attempt, cfg);
        let violations = model.validate();
        if !violations.is_empty() {
            return Err(MppError::InvalidModel(violations));
        }
        match cfg.p0 {
            None => return Ok(model),
            Some(p0) => {
                let measured = instance_p0(&model.to_tabular()?, T::of(cfg.d)).to_f64_lossy();
                if measured >= p0 - 1e-9 {
                    return Ok(model);
                }
                last = format!("best attempt reached p0 = {measured:.4} < {p0}");
            }
        }
    }
    Err(MppError::Generator(format!(
        "no regular instance in {LINEAR_RETRIES} attempts ({last})"
    )))
}

fn linear_candidate<T: Scalar>(seed: u64, attempt: u64, cfg: &LinearGen) -> LinearMpp<T> {
    let mut rng = stream(seed, attempt, 1, Purpose::Generator);
    let (hz, ns, na, dphi, dpsi) = (cfg.horizon, cfg.states, cfg.actions, cfg.dphi, cfg.dpsi);
    let contexts: Vec<Vec<f64>> = (0..cfg.contexts).map(|_| unit_gaussian(dphi, &mut rng, false)).collect();
    let theta: Vec<Vec<f64>> = (0..hz).map(|_| unit_gaussian(dphi, &mut rng, false)).collect();
    let gamma: Vec<Vec<f64>> = (0..hz).map(|_| unit_gaussian(dpsi, &mut rng, true)).collect();
    let means: Vec<f64> = theta
        .iter()
        .flat_map(|th| contexts.iter().map(|phi| cfg.link.f(dot(phi, th))))
        .collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * cfg.sigma;
    let mut hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * cfg.sigma;
    if hi - lo < 1e-6 {
        hi = lo + 1e-6;
    }
    let grid: Vec<f64> = (0..cfg.grid).map(|g| lo + (hi - lo) * g as f64 / (cfg.grid - 1) as f64).collect();
    let mut psi = Vec::with_capacity(ns * cfg.grid * na * dpsi);
    for _ in 0..ns * cfg.grid * na {
        psi.extend(dirichlet_row(cfg.feature_alpha, dpsi, &mut rng));
    }
    let mut measures = Vec::with_capacity(hz * dpsi * ns);
    for _ in 0..hz * dpsi {
        measures.extend(dirichlet_row(1.0, ns, &mut rng));
    }
    let mut u = Vec::with_capacity(hz * ns * cfg.grid * na);
    for _ in 0..hz * ns {
        u.extend(block_utilities(cfg.grid, na, cfg.d, &mut rng));
    }
    let z_max = 1.0;
    let (kappa, k_upper, m_f) = cfg.link.derivative_bounds(z_max);
    let l_mu = grid_prior_lipschitz(&grid, cfg.sigma, cfg.link.f(-z_max), cfg.link.f(z_max));
    let conv = |x: Vec<f64>| x.into_iter().map(T::of).collect::<Vec<T>>();
    let conv2 = |x: Vec<Vec<f64>>| x.into_iter().map(conv).collect::<Vec<Vec<T>>>();
    LinearMpp {
        horizon: hz,
        n_states: ns,
        n_actions: na,
        initial_state: 0,
        dphi,
        dpsi,
        contexts: conv2(contexts),
        grid: conv(grid),
        psi: conv(psi),
        theta_star: conv2(theta),
        gamma_star: conv2(gamma),
        measures: conv(measures),
        receiver_utility: conv(u),
        link: cfg.link,
        sigma: T::of(cfg.sigma),
        phi_bound: T::one(),
        psi_bound: T::one(),
        l_theta: T::one(),
        l_gamma: T::one(),
        l_mu: T::of(l_mu),
        kappa: T::of(kappa),
        k_upper: T::of(k_upper),
        m_f: T::of(m_f),
    }
}

/// Uniform prior helper for hand-built instances.
pub fn uniform<T: Scalar>(n: usize) -> Vec<T> {
    let mut v = vec![T::one(); n];
    renormalize(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persuasion::{regularity_check, solve_opt};

    const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

    #[test]
    fn persuasive_schemes_are_obeyed() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let mu = [0.7, 0.3];
        let sol = solve_opt(&mu, &IDENTITY, &w);
        for a in 0..2 {
            assert_eq!(receiver_step(&sol.scheme, &mu, &IDENTITY, a), a);
        }
        let fi = full_info_scheme(&IDENTITY, 2);
        for a in 0..2 {
            assert_eq!(receiver_step(&fi, &[0.9, 0.1], &IDENTITY, a), a);
        }
    }

    #[test]
    fn miscalibrated_scheme_triggers_deviation() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let tuned = solve_opt(&[0.5, 0.5], &IDENTITY, &w).scheme;
        assert_eq!(receiver_step(&tuned, &[0.9, 0.1], &IDENTITY, 1), 0);
        assert_eq!(receiver_step(&tuned, &[0.9, 0.1], &IDENTITY, 0), 0);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, 1, Purpose::Outcome), |r, _| Some(r.gen())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, 1, Purpose::Outcome), |r, _| Some(r.gen())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, 1, Purpose::Signal), |r, _| Some(r.gen())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_and_uniform_transitions() {
        let dims = Dims {
            horizon: 1,
            states: 3,
            outcomes: 1,
            actions: 2,
            contexts: 1,
        };
        let mut p = vec![1.0; 18];
        p[..3].copy_from_slice(&[0.0, 0.0, 1.0]);
        let m = TabularMpp::<f64>::new_normalized(dims, 0, vec![0.5; 6], vec![0.5; 6], p, vec![1.0]).unwrap();
        let mut rng = stream(1, 0, 0, Purpose::Transition);
        assert!((0..100).all(|_| sample_transition(&m, 0, 0, 0, 0, &mut rng) == 2));
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_transition(&m, 0, 0, 0, 1, &mut rng)] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&k| {
                let e = n as f64 / 3.0;
                (k as f64 - e).powi(2) / e
            })
            .sum();
        // 99.99% quantile of chi-square with 2 degrees of freedom
        assert!(chi2 < 18.42, "chi2 = {chi2}");
    }

    #[test]
    fn tabular_generator_meets_regularity() {
        let cfg = TabularGen {
            horizon: 2,
            states: 2,
            outcomes: 2,
            actions: 2,
            contexts: 1,
            p0: 0.3,
            d: 0.2,
            sender_bias: 0.0,
        };
        for seed in 0..20 {
            let m: TabularMpp<f64> = gen_tabular(seed, &cfg).unwrap();
            assert!(m.validate().is_empty());
            for h in 0..2 {
                assert!(regularity_check(&m, h, 0.2).iter().all(|&p| p >= 0.3 - 1e-9));
            }
        }
        let a: TabularMpp<f64> = gen_tabular(5, &cfg).unwrap();
        let b: TabularMpp<f64> = gen_tabular(5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(gen_tabular::<f64>(0, &TabularGen { p0: 0.6, ..cfg }).is_err());
        assert!(gen_tabular::<f64>(0, &TabularGen { p0: 0.4, ..cfg }).is_ok());
    }

    fn linear_cfg() -> LinearGen {
        LinearGen {
            horizon: 2,
            states: 3,
            actions: 2,
            dphi: 4,
            dpsi: 6,
            grid: 32,
            contexts: 5,
            sigma: 0.1,
            link: Link::Identity,
            p0: None,
            d: 0.2,
            feature_alpha: 0.3,
        }
    }

    #[test]
    fn linear_generator_validates() {
        let m: LinearMpp<f64> = gen_linear(3, &linear_cfg()).unwrap();
        assert!(m.validate().is_empty());
        assert!(m.to_tabular().unwrap().validate().is_empty());
        let logistic: LinearMpp<f64> = gen_linear(3, &LinearGen { link: Link::Logistic, ..linear_cfg() }).unwrap();
        assert!(logistic.validate().is_empty());
    }

    #[test]
    fn noiseless_linear_prior_is_point_mass_at_mean() {
        let m: LinearMpp<f64> = gen_linear(4, &LinearGen { sigma: 0.0, ..linear_cfg() }).unwrap();
        let prior = m.prior_for(&m.theta_star[0], 1);
        assert_eq!(prior.iter().filter(|&&p| p > 0.0).count(), 1);
        let peak = prior.iter().position(|&p| p == 1.0).unwrap();
        let mean = dot(&m.contexts[1], &m.theta_star[0]);
        let spacing = m.grid[1] - m.grid[0];
        assert!((m.grid[peak] - mean).abs() <= spacing / 2.0 + 1e-12);
    }

    #[test]
    fn linear_generator_enforces_regularity() {
        let cfg = LinearGen {
            sigma: 0.3,
            grid: 16,
            p0: Some(0.2),
            ..linear_cfg()
        };
        let m: LinearMpp<f64> = gen_linear(11, &cfg).unwrap();
        let t = m.to_tabular().unwrap();
        assert!(instance_p0(&t, 0.2) >= 0.2 - 1e-9);
    }
}
