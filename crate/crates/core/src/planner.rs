//! Ground-truth dynamic programming over a known tabular model: the
//! persuasive Bellman optimality recursion, exact policy evaluation, and
//! occupancy measures.
//!
//! Value tables are indexed `[h][s]` with an extra all-zero row at `h = H`;
//! Q tables are `[h][s][ω][a]`.

use crate::envsim::{response_table, ReceiverModel};
use crate::model::{SignalingPolicy, SignalingScheme, TabularMpp};
use crate::persuasion::{full_info_scheme, solve_opt, SolveStatus};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct PlanResult<T> {
    pub q_star: Vec<T>,
    pub v_star: Vec<T>,
    pub policy: SignalingPolicy<T>,
    /// LP status per `(h, s)`.
    pub status: Vec<SolveStatus>,
    n_states: usize,
    block: usize,
}

impl<T: Scalar> PlanResult<T> {
    pub fn v(&self, h: usize, s: usize) -> T {
        self.v_star[h * self.n_states + s]
    }

    /// `V*_{h}` for every state; `h` may equal the horizon.
    pub fn v_row(&self, h: usize) -> &[T] {
        &self.v_star[h * self.n_states..(h + 1) * self.n_states]
    }

    pub fn q_slice(&self, h: usize, s: usize) -> &[T] {
        let start = (h * self.n_states + s) * self.block;
        &self.q_star[start..start + self.block]
    }
}

/// `Q_h(s, ω, a) = v_h(s, ω, a) + Σ_{s'} P_h(s'|s, ω, a) V_{h+1}(s')` at one state.
pub fn q_backup<T: Scalar>(model: &TabularMpp<T>, h: usize, s: usize, next_v: &[T]) -> Vec<T> {
    let d = model.dims;
    let v = model.v_slice(h, s);
    let last = h + 1 == d.horizon;
    let mut q = Vec::with_capacity(d.outcomes * d.actions);
    for w in 0..d.outcomes {
        for a in 0..d.actions {
            let future = if last { T::zero() } else { model.expected_next(h, s, w, a, next_v) };
            q.push(v[w * d.actions + a] + future);
        }
    }
    q
}

/// `⟨Q, μ⊗π⟩` where each recommendation `a` is replaced by the action the
/// receiver actually takes.
pub fn scheme_value<T: Scalar>(
    scheme: &SignalingScheme<T>,
    mu: &[T],
    u_slice: &[T],
    q_slice: &[T],
    receiver: ReceiverModel,
) -> T {
    let na = scheme.n_actions;
    let taken = response_table(scheme, mu, u_slice, receiver);
    let mut total = T::zero();
    for (w, &m) in mu.iter().enumerate() {
        if m == T::zero() {
            continue;
        }
        for a in 0..na {
            let p = scheme.prob(w, a);
            if p != T::zero() {
                total += m * p * q_slice[w * na + taken[a]];
            }
        }
    }
    total
}

/// Solves the persuasive Bellman optimality equation for one context sequence.
pub fn backward_induction<T: Scalar>(model: &TabularMpp<T>, contexts: &[usize]) -> PlanResult<T> {
    let d = model.dims;
    assert_eq!(contexts.len(), d.horizon, "context sequence must have length H");
    let block = d.outcomes * d.actions;
    let mut q_star = vec![T::zero(); d.horizon * d.states * block];
    let mut v_star = vec![T::zero(); (d.horizon + 1) * d.states];
    let mut status = vec![SolveStatus::Optimal; d.horizon * d.states];
    let mut policy = SignalingPolicy::empty(d.horizon, d.states);
    for h in (0..d.horizon).rev() {
        let (head, tail) = v_star.split_at_mut((h + 1) * d.states);
        let next_v = &tail[..d.states];
        let mu = model.prior(h, contexts[h]);
        for s in 0..d.states {
            let q = q_backup(model, h, s, next_v);
            let sol = solve_opt(mu, model.u_slice(h, s), &q);
            head[h * d.states + s] = sol.value;
            status[h * d.states + s] = sol.status;
            let start = (h * d.states + s) * block;
            q_star[start..start + block].copy_from_slice(&q);
            policy.set(h, s, sol.scheme);
        }
    }
    PlanResult {
        q_star,
        v_star,
        policy,
        status,
        n_states: d.states,
        block,
    }
}

/// Exact value tables of a fixed policy.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    /// `[h][s]`, with an all-zero row at `h = H`.
    pub v: Vec<T>,
    /// `[h][s][ω][a]`.
    pub q: Vec<T>,
    /// `(h, s)` pairs where the policy had no scheme and full information was used.
    pub fallbacks: Vec<(usize, usize)>,
    n_states: usize,
}

impl<T: Scalar> Evaluation<T> {
    pub fn v(&self, h: usize, s: usize) -> T {
        self.v[h * self.n_states + s]
    }

    pub fn v_row(&self, h: usize) -> &[T] {
        &self.v[h * self.n_states..(h + 1) * self.n_states]
    }

    pub fn q_slice(&self, h: usize, s: usize, block: usize) -> &[T] {
        let start = (h * self.n_states + s) * block;
        &self.q[start..start + block]
    }
}

/// Scheme at `(h, s)`, or full information when the policy has none.
pub fn scheme_or_full_info<'a, T: Scalar>(
    model: &TabularMpp<T>,
    policy: &'a SignalingPolicy<T>,
    h: usize,
    s: usize,
) -> std::borrow::Cow<'a, SignalingScheme<T>> {
    match policy.get(h, s) {
        Some(sch) => std::borrow::Cow::Borrowed(sch),
        None => std::borrow::Cow::Owned(full_info_scheme(model.u_slice(h, s), model.dims.outcomes)),
    }
}

/// Policy evaluation by backward recursion under the true model and prior.
pub fn evaluate_policy<T: Scalar>(
    model: &TabularMpp<T>,
    policy: &SignalingPolicy<T>,
    contexts: &[usize],
    receiver: ReceiverModel,
) -> Evaluation<T> {
    let d = model.dims;
    assert_eq!(contexts.len(), d.horizon, "context sequence must have length H");
    let block = d.outcomes * d.actions;
    let mut q = vec![T::zero(); d.horizon * d.states * block];
    let mut v = vec![T::zero(); (d.horizon + 1) * d.states];
    let mut fallbacks = Vec::new();
    for h in (0..d.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * d.states);
        let next_v = &tail[..d.states];
        let mu = model.prior(h, contexts[h]);
        for s in 0..d.states {
            let qs = q_backup(model, h, s, next_v);
            if policy.get(h, s).is_none() {
                fallbacks.push((h, s));
            }
            let scheme = scheme_or_full_info(model, policy, h, s);
            head[h * d.states + s] = scheme_value(&scheme, mu, model.u_slice(h, s), &qs, receiver);
            let start = (h * d.states + s) * block;
            q[start..start + block].copy_from_slice(&qs);
        }
    }
    fallbacks.reverse();
    Evaluation {
        v,
        q,
        fallbacks,
        n_states: d.states,
    }
}

/// Per-step occupancy over `(s, ω, a)`, flattened `[s][ω][a]`, starting from
/// the initial state. The action coordinate is the action taken by the
/// receiver, which is the one driving the transition.
pub fn forward_state_distribution<T: Scalar>(
    model: &TabularMpp<T>,
    policy: &SignalingPolicy<T>,
    contexts: &[usize],
    receiver: ReceiverModel,
) -> Vec<Vec<T>> {
    let d = model.dims;
    let block = d.outcomes * d.actions;
    let mut state_dist = vec![T::zero(); d.states];
    state_dist[model.initial_state] = T::one();
    let mut out = Vec::with_capacity(d.horizon);
    for h in 0..d.horizon {
        let mu = model.prior(h, contexts[h]);
        let mut occ = vec![T::zero(); d.states * block];
        let mut next = vec![T::zero(); d.states];
        for s in 0..d.states {
            let ps = state_dist[s];
            if ps == T::zero() {
                continue;
            }
            let scheme = scheme_or_full_info(model, policy, h, s);
            let taken = response_table(&scheme, mu, model.u_slice(h, s), receiver);
            for (w, &m) in mu.iter().enumerate() {
                for a in 0..d.actions {
                    let mass = ps * m * scheme.prob(w, a);
                    if mass != T::zero() {
                        occ[s * block + w * d.actions + taken[a]] += mass;
                    }
                }
            }
            if h + 1 < d.horizon {
                for w in 0..d.outcomes {
                    for a in 0..d.actions {
                        let mass = occ[s * block + w * d.actions + a];
                        if mass != T::zero() {
                            for (n, &p) in next.iter_mut().zip(model.transition_row(h, s, w, a)) {
                                *n += mass * p;
                            }
                        }
                    }
                }
            }
        }
        out.push(occ);
        state_dist = next;
    }
    out
}

/// Marginal state distribution of a flattened `[s][ω][a]` occupancy.
pub fn state_marginal<T: Scalar>(occ: &[T], n_states: usize) -> Vec<T> {
    let block = occ.len() / n_states;
    occ.chunks(block).map(|c| c.iter().copied().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{gen_tabular, TabularGen};
    use crate::model::Dims;
    use approx::assert_abs_diff_eq;

    fn small(seed: u64) -> TabularMpp<f64> {
        gen_tabular(
            seed,
            &TabularGen {
                horizon: 3,
                states: 2,
                outcomes: 3,
                actions: 2,
                contexts: 1,
                p0: 0.2,
                d: 0.1,
                sender_bias: 0.3,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_step_reduces_to_lp() {
        let m: TabularMpp<f64> = gen_tabular(
            2,
            &TabularGen {
                horizon: 1,
                states: 2,
                outcomes: 2,
                actions: 2,
                contexts: 1,
                p0: 0.3,
                d: 0.2,
                sender_bias: 0.0,
            },
        )
        .unwrap();
        let plan = backward_induction(&m, &[0]);
        for s in 0..2 {
            let lp = solve_opt(m.prior(0, 0), m.u_slice(0, s), m.v_slice(0, s));
            assert_abs_diff_eq!(plan.v(0, s), lp.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn decoupled_steps_add_up() {
        let dims = Dims {
            horizon: 2,
            states: 2,
            outcomes: 2,
            actions: 2,
            contexts: 1,
        };
        let u_step = [1.0, 0.0, 0.0, 1.0];
        let v_step = [0.0, 1.0, 0.0, 1.0];
        let u: Vec<f64> = (0..4).flat_map(|_| u_step).collect();
        let v: Vec<f64> = (0..4).flat_map(|_| v_step).collect();
        let p = vec![0.5; dims.transition_len()];
        let mu = vec![0.7, 0.3, 0.6, 0.4];
        let m = TabularMpp::new_normalized(dims, 0, u, v, p, mu).unwrap();
        let plan = backward_induction(&m, &[0, 0]);
        assert_abs_diff_eq!(plan.v(0, 0), 0.6 + 0.8, epsilon = 1e-9);
    }

    #[test]
    fn planner_policy_is_a_fixed_point() {
        for seed in 0..5 {
            let m = small(seed);
            let ctx = [0, 0, 0];
            let plan = backward_induction(&m, &ctx);
            for receiver in [ReceiverModel::Obedient, ReceiverModel::Rational] {
                let ev = evaluate_policy(&m, &plan.policy, &ctx, receiver);
                for h in 0..3 {
                    for s in 0..2 {
                        assert_abs_diff_eq!(ev.v(h, s), plan.v(h, s), epsilon = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn full_information_is_dominated_and_reported() {
        let m = small(9);
        let ctx = [0, 0, 0];
        let plan = backward_induction(&m, &ctx);
        let empty = SignalingPolicy::empty(3, 2);
        let ev = evaluate_policy(&m, &empty, &ctx, ReceiverModel::Rational);
        assert_eq!(ev.fallbacks.len(), 6);
        assert!(ev.v(0, 0) <= plan.v(0, 0) + 1e-12);
        let mut fi = SignalingPolicy::empty(3, 2);
        for h in 0..3 {
            for s in 0..2 {
                fi.set(h, s, full_info_scheme(m.u_slice(h, s), 3));
            }
        }
        let ev2 = evaluate_policy(&m, &fi, &ctx, ReceiverModel::Rational);
        assert!(ev2.fallbacks.is_empty());
        assert_abs_diff_eq!(ev.v(0, 0), ev2.v(0, 0), epsilon = 1e-15);
    }

    #[test]
    fn occupancy_conserves_mass_and_reproduces_value() {
        let m = small(4);
        let ctx = [0, 0, 0];
        let plan = backward_induction(&m, &ctx);
        let occ = forward_state_distribution(&m, &plan.policy, &ctx, ReceiverModel::Obedient);
        let mut value = 0.0;
        for (h, o) in occ.iter().enumerate() {
            assert_abs_diff_eq!(o.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            for s in 0..2 {
                for k in 0..6 {
                    value += o[s * 6 + k] * m.v_slice(h, s)[k];
                }
            }
        }
        assert_abs_diff_eq!(value, plan.v(0, 0), epsilon = 1e-9);
    }

    #[test]
    fn single_step_occupancy_is_prior_times_scheme() {
        let m: TabularMpp<f64> = gen_tabular(
            1,
            &TabularGen {
                horizon: 1,
                states: 2,
                outcomes: 2,
                actions: 2,
                contexts: 1,
                p0: 0.3,
                d: 0.2,
                sender_bias: 0.0,
            },
        )
        .unwrap();
        let plan = backward_induction(&m, &[0]);
        let occ = forward_state_distribution(&m, &plan.policy, &[0], ReceiverModel::Obedient);
        let sch = plan.policy.get(0, 0).unwrap();
        for w in 0..2 {
            for a in 0..2 {
                assert_abs_diff_eq!(occ[0][w * 2 + a], m.prior(0, 0)[w] * sch.prob(w, a), epsilon = 1e-15);
            }
        }
        assert!(occ[0][4..].iter().all(|&x| x == 0.0));
    }
}
