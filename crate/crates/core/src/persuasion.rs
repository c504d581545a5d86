//! Single-shot persuasion: receiver best responses, persuasiveness checks,
//! the optimal-signaling LP, its robust counterpart over an L1 ball of
//! priors, the mixture construction and the robustness gap.
//!
//! Utilities and objectives are passed as `Ω×A` row-major slices at a fixed
//! state; priors are `Ω`-vectors.

use crate::lp::{LinearProgram, LpStatus, Relation};
use crate::model::{SignalingScheme, TabularMpp};
use crate::scalar::{argmax_lowest, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The LP could not be solved; the full-information scheme is returned instead.
    Infeasible,
    /// Optimal, but some outcomes have zero prior mass and carry full-information rows.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub scheme: SignalingScheme<T>,
    pub value: T,
    pub status: SolveStatus,
}

/// A violated persuasiveness constraint: recommending `recommended` loses
/// `slack` (< 0) against switching to `alternative`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersuasionViolation<T> {
    pub recommended: usize,
    pub alternative: usize,
    pub slack: T,
}

fn n_actions_of<T>(u_slice: &[T], n_outcomes: usize) -> usize {
    assert!(n_outcomes > 0 && u_slice.len().is_multiple_of(n_outcomes), "utility slice is not Ω×A");
    u_slice.len() / n_outcomes
}

/// Receiver action maximizing posterior expected utility; lowest index on ties.
pub fn best_response<T: Scalar>(u_slice: &[T], posterior: &[T]) -> usize {
    let n_actions = n_actions_of(u_slice, posterior.len());
    let expected: Vec<T> = (0..n_actions)
        .map(|a| {
            posterior
                .iter()
                .enumerate()
                .map(|(w, &p)| p * u_slice[w * n_actions + a])
                .sum()
        })
        .collect();
    argmax_lowest(&expected, T::dist_tol())
}

/// `Σ_ω μ(ω) π(a|ω) [u(ω,a) − u(ω,a')]`.
pub fn persuasion_slack<T: Scalar>(
    scheme: &SignalingScheme<T>,
    mu: &[T],
    u_slice: &[T],
    a: usize,
    alt: usize,
) -> T {
    let na = scheme.n_actions;
    mu.iter()
        .enumerate()
        .map(|(w, &m)| m * scheme.prob(w, a) * (u_slice[w * na + a] - u_slice[w * na + alt]))
        .sum()
}

/// All `(a, a')` pairs whose obedience constraint is below `-tol`.
pub fn check_persuasive<T: Scalar>(
    scheme: &SignalingScheme<T>,
    mu: &[T],
    u_slice: &[T],
    tol: T,
) -> Vec<PersuasionViolation<T>> {
    let na = scheme.n_actions;
    let mut out = Vec::new();
    for a in 0..na {
        for alt in 0..na {
            if alt == a {
                continue;
            }
            let slack = persuasion_slack(scheme, mu, u_slice, a, alt);
            if slack < -tol {
                out.push(PersuasionViolation {
                    recommended: a,
                    alternative: alt,
                    slack,
                });
            }
        }
    }
    out
}

/// Recommends the receiver's best response to each realized outcome.
pub fn full_info_scheme<T: Scalar>(u_slice: &[T], n_outcomes: usize) -> SignalingScheme<T> {
    let na = n_actions_of(u_slice, n_outcomes);
    let mut pi = vec![T::zero(); n_outcomes * na];
    for w in 0..n_outcomes {
        let a = argmax_lowest(&u_slice[w * na..(w + 1) * na], T::dist_tol());
        pi[w * na + a] = T::one();
    }
    SignalingScheme {
        n_outcomes,
        n_actions: na,
        pi,
    }
}

fn full_info_solution<T: Scalar>(mu: &[T], u_slice: &[T], w_slice: &[T], status: SolveStatus) -> LpSolution<T> {
    let scheme = full_info_scheme(u_slice, mu.len());
    let value = scheme.expected(mu, w_slice);
    LpSolution { scheme, value, status }
}

/// Reads an `Ω×A` scheme out of an LP solution, clipping roundoff and renormalizing rows.
fn scheme_from_x<T: Scalar>(x: &[T], rows: &[usize], n_outcomes: usize, na: usize, fill: &SignalingScheme<T>) -> SignalingScheme<T> {
    let mut pi = fill.pi.clone();
    for (k, &w) in rows.iter().enumerate() {
        let row = &mut pi[w * na..(w + 1) * na];
        for a in 0..na {
            row[a] = x[k * na + a].max(T::zero());
        }
        crate::model::renormalize(row);
    }
    SignalingScheme {
        n_outcomes,
        n_actions: na,
        pi,
    }
}

/// Optimal persuasive scheme for prior `mu`, receiver utility `u_slice` and
/// sender objective `w_slice`.
pub fn solve_opt<T: Scalar>(mu: &[T], u_slice: &[T], w_slice: &[T]) -> LpSolution<T> {
    let n_outcomes = mu.len();
    let na = n_actions_of(u_slice, n_outcomes);
    let support: Vec<usize> = (0..n_outcomes).filter(|&w| mu[w] > T::zero()).collect();
    let degenerate = support.len() < n_outcomes;
    let full = full_info_scheme(u_slice, n_outcomes);
    if na == 1 || support.is_empty() {
        let status = if degenerate { SolveStatus::Degenerate } else { SolveStatus::Optimal };
        let value = full.expected(mu, w_slice);
        return LpSolution { scheme: full, value, status };
    }
    let var = |k: usize, a: usize| k * na + a;
    let mut lp = LinearProgram::new(support.len() * na);
    for (k, &w) in support.iter().enumerate() {
        for a in 0..na {
            lp.set_objective(var(k, a), mu[w] * w_slice[w * na + a]);
        }
        lp.add_row((0..na).map(|a| (var(k, a), T::one())).collect(), Relation::Eq, T::one());
    }
    for a in 0..na {
        for alt in 0..na {
            if alt == a {
                continue;
            }
            let coeffs = support
                .iter()
                .enumerate()
                .map(|(k, &w)| (var(k, a), mu[w] * (u_slice[w * na + a] - u_slice[w * na + alt])))
                .collect();
            lp.add_row(coeffs, Relation::Ge, T::zero());
        }
    }
    let res = lp.solve();
    if res.status != LpStatus::Optimal {
        return full_info_solution(mu, u_slice, w_slice, SolveStatus::Infeasible);
    }
    let scheme = scheme_from_x(&res.x, &support, n_outcomes, na, &full);
    let value = scheme.expected(mu, w_slice);
    let status = if degenerate { SolveStatus::Degenerate } else { SolveStatus::Optimal };
    LpSolution { scheme, value, status }
}

/// `(1−δ)·scheme + δ·full_info` with `δ = min(1, ε/(p0·D))`.
pub fn robustify_mixture<T: Scalar>(
    scheme: &SignalingScheme<T>,
    u_slice: &[T],
    spec: &crate::model::RobustnessSpec<T>,
) -> SignalingScheme<T> {
    let delta = spec.mixture_weight();
    if delta == T::zero() {
        return scheme.clone();
    }
    let full = full_info_scheme(u_slice, scheme.n_outcomes);
    if delta >= T::one() {
        return full;
    }
    scheme.mix(&full, delta)
}

/// Best scheme that is persuasive for every prior within L1 distance `epsilon`
/// of `mu`, through the dualized constraint
/// `Σ_ω c_ω μ(ω) − (ε/2)(t⁺ − t⁻) ≥ 0`, `t⁺ ≥ c_ω ≥ t⁻`,
/// `c_ω = π(a|ω)[u(ω,a) − u(ω,a')]`.
///
/// The full-information scheme is persuasive under every prior, so it is
/// returned whenever it does at least as well as the LP (in particular when
/// the LP is infeasible for large `epsilon`).
pub fn solve_robust_opt<T: Scalar>(mu: &[T], epsilon: T, u_slice: &[T], w_slice: &[T]) -> LpSolution<T> {
    if epsilon <= T::zero() {
        return solve_opt(mu, u_slice, w_slice);
    }
    let n_outcomes = mu.len();
    let na = n_actions_of(u_slice, n_outcomes);
    let full = full_info_solution(mu, u_slice, w_slice, SolveStatus::Optimal);
    if na == 1 {
        return full;
    }
    let n_pairs = na * (na - 1);
    let n_pi = n_outcomes * na;
    let mut lp = LinearProgram::new(n_pi + 2 * n_pairs);
    for w in 0..n_outcomes {
        for a in 0..na {
            lp.set_objective(w * na + a, mu[w] * w_slice[w * na + a]);
        }
        lp.add_row((0..na).map(|a| (w * na + a, T::one())).collect(), Relation::Eq, T::one());
    }
    let half_eps = epsilon / T::of(2.0);
    let mut pair = 0;
    for a in 0..na {
        for alt in 0..na {
            if alt == a {
                continue;
            }
            let tp = n_pi + 2 * pair;
            let tm = tp + 1;
            lp.set_free(tp);
            lp.set_free(tm);
            let mut coeffs: Vec<(usize, T)> = (0..n_outcomes)
                .filter(|&w| mu[w] != T::zero())
                .map(|w| (w * na + a, mu[w] * (u_slice[w * na + a] - u_slice[w * na + alt])))
                .collect();
            coeffs.push((tp, -half_eps));
            coeffs.push((tm, half_eps));
            lp.add_row(coeffs, Relation::Ge, T::zero());
            for w in 0..n_outcomes {
                let delta_u = u_slice[w * na + a] - u_slice[w * na + alt];
                lp.add_row(vec![(tp, T::one()), (w * na + a, -delta_u)], Relation::Ge, T::zero());
                lp.add_row(vec![(w * na + a, delta_u), (tm, -T::one())], Relation::Ge, T::zero());
            }
            pair += 1;
        }
    }
    let res = lp.solve();
    if res.status != LpStatus::Optimal {
        return full;
    }
    let rows: Vec<usize> = (0..n_outcomes).collect();
    let scheme = scheme_from_x(&res.x, &rows, n_outcomes, na, &full.scheme);
    let value = scheme.expected(mu, w_slice);
    if value < full.value {
        return full;
    }
    LpSolution {
        scheme,
        value,
        status: SolveStatus::Optimal,
    }
}

/// `OPT(μ) − OPT_robust(μ, ε)`.
pub fn gap<T: Scalar>(mu: &[T], epsilon: T, u_slice: &[T], w_slice: &[T]) -> T {
    solve_opt(mu, u_slice, w_slice).value - solve_robust_opt(mu, epsilon, u_slice, w_slice).value
}

/// `P_{ω∼μ}[ω ∈ W_a(D)]` minimized over actions, for one prior and utility slice.
pub fn dominance_mass<T: Scalar>(mu: &[T], u_slice: &[T], d: T) -> T {
    let n_outcomes = mu.len();
    let na = n_actions_of(u_slice, n_outcomes);
    let slack = T::dist_tol();
    (0..na)
        .map(|a| {
            (0..n_outcomes)
                .filter(|&w| {
                    (0..na).all(|alt| alt == a || u_slice[w * na + a] - u_slice[w * na + alt] >= d - slack)
                })
                .map(|w| mu[w])
                .sum::<T>()
        })
        .fold(T::infinity(), T::min)
}

/// Regularity level `p0` at step `h` for each context: the smallest prior
/// mass, over states and actions, of the outcomes where that action is
/// `D`-dominant. Zero means the instance is not regular at this `D`.
pub fn regularity_check<T: Scalar>(model: &TabularMpp<T>, h: usize, d: T) -> Vec<T> {
    (0..model.dims.contexts)
        .map(|c| {
            let mu = model.prior(h, c);
            (0..model.dims.states)
                .map(|s| dominance_mass(mu, model.u_slice(h, s), d))
                .fold(T::infinity(), T::min)
        })
        .collect()
}

/// Smallest regularity level over every step and context.
pub fn instance_p0<T: Scalar>(model: &TabularMpp<T>, d: T) -> T {
    (0..model.horizon())
        .flat_map(|h| regularity_check(model, h, d))
        .fold(T::infinity(), T::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RobustnessSpec;
    use approx::assert_abs_diff_eq;

    const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

    #[test]
    fn best_response_examples() {
        assert_eq!(best_response(&IDENTITY, &[1.0, 0.0]), 0);
        assert_eq!(best_response(&IDENTITY, &[0.5, 0.5]), 0);
        let dominated = [0.4, 0.6, 0.4, 0.6];
        assert_eq!(best_response(&dominated, &[0.9, 0.1]), 1);
        assert_eq!(best_response(&dominated, &[0.0, 1.0]), 1);
    }

    #[test]
    fn always_convict_violates_by_point_four() {
        let scheme = SignalingScheme::constant(2, 2, 1);
        let v = check_persuasive(&scheme, &[0.7, 0.3], &IDENTITY, 1e-12);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].recommended, v[0].alternative), (1, 0));
        assert_abs_diff_eq!(v[0].slack, -0.4, epsilon = 1e-12);
    }

    #[test]
    fn full_info_is_persuasive_and_single_action_trivial() {
        let u = [0.2, 0.9, 0.8, 0.1];
        let fi = full_info_scheme(&u, 2);
        assert_eq!(fi.pi, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(check_persuasive(&fi, &[0.3, 0.7], &u, 1e-12).is_empty());
        assert_eq!(full_info_scheme(&IDENTITY, 2).pi, IDENTITY.to_vec());
        assert_eq!(full_info_scheme(&[0.5; 4], 2).pi, vec![1.0, 0.0, 1.0, 0.0]);
        let single = SignalingScheme::constant(3, 1, 0);
        assert!(check_persuasive(&single, &[0.2, 0.3, 0.5], &[0.1, 0.5, 0.9], 0.0).is_empty());
    }

    #[test]
    fn prosecutor_value() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let sol = solve_opt(&[0.7, 0.3], &IDENTITY, &w);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.value, 0.6, epsilon = 1e-9);
        assert!(check_persuasive(&sol.scheme, &[0.7, 0.3], &IDENTITY, 1e-8).is_empty());
    }

    #[test]
    fn aligned_interests_reveal_everything() {
        let u: [f64; 6] = [0.9, 0.3, 0.2, 0.6, 0.5, 0.5];
        let mu = [0.2, 0.5, 0.3];
        let sol = solve_opt(&mu, &u, &u);
        let direct: f64 = (0..3).map(|w| mu[w] * u[2 * w].max(u[2 * w + 1])).sum();
        assert_abs_diff_eq!(sol.value, direct, epsilon = 1e-9);
    }

    #[test]
    fn single_action_opt() {
        let sol = solve_opt(&[0.25, 0.75], &[0.3, 0.8], &[0.4, 1.0]);
        assert_abs_diff_eq!(sol.value, 0.25 * 0.4 + 0.75, epsilon = 1e-12);
        assert_eq!(sol.scheme.pi, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_mass_outcome_is_degenerate() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let sol = solve_opt(&[1.0, 0.0], &IDENTITY, &w);
        assert_eq!(sol.status, SolveStatus::Degenerate);
        assert_eq!(sol.scheme.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn mixture_weights() {
        let base = SignalingScheme::constant(2, 2, 1);
        let spec0 = RobustnessSpec::new(0.25, 0.2, 0.0).unwrap();
        assert_eq!(robustify_mixture(&base, &IDENTITY, &spec0), base);
        let spec = RobustnessSpec::new(0.25, 0.2, 0.01).unwrap();
        let mixed = robustify_mixture(&base, &IDENTITY, &spec);
        // δ = 0.01 / 0.05 = 0.2
        assert_abs_diff_eq!(mixed.prob(0, 0), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(mixed.prob(0, 1), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(mixed.prob(1, 1), 1.0, epsilon = 1e-12);
        let big = RobustnessSpec::new(0.25, 0.2, 0.06).unwrap();
        assert_eq!(robustify_mixture(&base, &IDENTITY, &big), full_info_scheme(&IDENTITY, 2));
    }

    #[test]
    fn robust_opt_limits() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let mu = [0.7, 0.3];
        let r0 = solve_robust_opt(&mu, 0.0, &IDENTITY, &w);
        assert_abs_diff_eq!(r0.value, 0.6, epsilon = 1e-9);
        let r2 = solve_robust_opt(&mu, 2.0, &IDENTITY, &w);
        assert_abs_diff_eq!(r2.value, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(gap(&mu, 0.0, &IDENTITY, &w), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prosecutor_robust_value_bracket() {
        let w = [0.0, 1.0, 0.0, 1.0];
        let mu = [0.7, 0.3];
        let p0 = dominance_mass(&mu, &IDENTITY, 1.0);
        assert_abs_diff_eq!(p0, 0.3, epsilon = 1e-12);
        let r = solve_robust_opt(&mu, 0.05, &IDENTITY, &w);
        // bracket from the mixture bound with H = 1, D = 1
        assert!(r.value <= 0.6 + 1e-9);
        assert!(r.value >= 0.6 - 0.05 / (p0 * 1.0) - 1e-9);
        // Ball of radius 0.05 moves at most 0.025 mass from guilty to innocent:
        // the convict signal must stay persuasive at μ' = (0.725, 0.275), which
        // the conservative dual enforces as 0.3 - x·0.7 - 0.025·(1 + x) ≥ 0.
        let x = (0.3 - 0.025) / (0.7 + 0.025);
        assert_abs_diff_eq!(r.value, 0.3 + 0.7 * x, epsilon = 1e-9);
    }

    #[test]
    fn regularity_examples() {
        assert_abs_diff_eq!(dominance_mass(&[0.5, 0.5], &IDENTITY, 0.5), 0.5);
        assert_eq!(dominance_mass(&[0.5, 0.5], &[0.3; 4], 0.1), 0.0);
    }
}
