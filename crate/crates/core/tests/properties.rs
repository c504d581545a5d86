use mpp_lab::envsim::{gen_tabular, stream, Purpose, ReceiverModel, TabularGen};
use mpp_lab::estimation::{det_trace_log_bound, Cholesky, Gram};
use mpp_lab::harness::{decompose_regret, fit_regret_exponent, StarPlan};
use mpp_lab::learners::{run_episode, Learner, LearnerConfig, TabularOp4};
use mpp_lab::model::{grid_prior, grid_prior_lipschitz, RobustnessSpec, SignalingPolicy, SignalingScheme};
use mpp_lab::persuasion::{check_persuasive, full_info_scheme, instance_p0, robustify_mixture, solve_opt, solve_robust_opt};
use mpp_lab::planner::{backward_induction, evaluate_policy};
use mpp_lab::Tabular;
use proptest::prelude::*;
use rand::Rng;

/// `(mu, u, w)` for a single persuasion problem with `n` outcomes and `a` actions.
fn problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    (2usize..=4, 2usize..=3).prop_flat_map(|(n, a)| {
        (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.0f64..1.0, n * a),
            prop::collection::vec(0.0f64..1.0, n * a),
            Just(a),
        )
            .prop_map(|(mut mu, u, w, a)| {
                let s: f64 = mu.iter().sum();
                mu.iter_mut().for_each(|x| *x /= s);
                (mu, u, w, a)
            })
    })
}

fn random_scheme(n: usize, a: usize, seed: u64) -> SignalingScheme<f64> {
    let mut rng = stream(seed, 0, 0, Purpose::Noise);
    let mut pi = Vec::with_capacity(n * a);
    for _ in 0..n {
        let row: Vec<f64> = (0..a).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let s: f64 = row.iter().sum();
        pi.extend(row.into_iter().map(|x| x / s));
    }
    SignalingScheme::new(n, a, pi).expect("stochastic rows")
}

fn small_gen(horizon: usize) -> TabularGen {
    TabularGen {
        horizon,
        states: 2,
        outcomes: 2,
        actions: 2,
        contexts: 1,
        p0: 0.3,
        d: 0.2,
        sender_bias: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_is_persuasive_and_dominates_persuasive_schemes((mu, u, w, a) in problem(), seed in any::<u64>(), lam in 0.0f64..1.0) {
        let n = mu.len();
        let opt = solve_opt(&mu, &u, &w);
        prop_assert!(check_persuasive(&opt.scheme, &mu, &u, 1e-8).is_empty());
        let full = full_info_scheme(&u, n);
        prop_assert!(opt.value >= full.expected(&mu, &w) - 1e-9);
        let candidate = random_scheme(n, a, seed).mix(&full, lam);
        if check_persuasive(&candidate, &mu, &u, 0.0).is_empty() {
            prop_assert!(opt.value >= candidate.expected(&mu, &w) - 1e-9);
        }
    }

    #[test]
    fn robust_value_is_monotone_in_radius((mu, u, w, _a) in problem(), e1 in 0.0f64..0.3, e2 in 0.0f64..0.3) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let v_lo = solve_robust_opt(&mu, lo, &u, &w).value;
        let v_hi = solve_robust_opt(&mu, hi, &u, &w).value;
        let opt = solve_opt(&mu, &u, &w).value;
        let full = full_info_scheme(&u, mu.len()).expected(&mu, &w);
        prop_assert!(v_hi <= v_lo + 1e-9);
        prop_assert!(v_lo <= opt + 1e-9);
        prop_assert!(v_hi >= full - 1e-9);
    }

    #[test]
    fn robust_scheme_survives_worst_transfers((mu, u, w, _a) in problem(), eps in 0.0f64..0.2) {
        let sol = solve_robust_opt(&mu, eps, &u, &w);
        let n = mu.len();
        for from in 0..n {
            for to in 0..n {
                if from == to {
                    continue;
                }
                let mut prior = mu.clone();
                let m = (eps / 2.0).min(prior[from]);
                prior[from] -= m;
                prior[to] += m;
                prop_assert!(check_persuasive(&sol.scheme, &prior, &u, 1e-8).is_empty());
            }
        }
    }

    #[test]
    fn robust_lp_beats_mixture_on_regular_instances(seed in 0u64..500, eps in 0.0f64..0.1) {
        let gen = TabularGen { horizon: 1, states: 1, outcomes: 4, actions: 2, contexts: 1, p0: 0.25, d: 0.3, sender_bias: 0.0 };
        let m: Tabular = gen_tabular(seed, &gen).unwrap();
        let (mu, u, w) = (m.prior(0, 0), m.u_slice(0, 0), m.v_slice(0, 0));
        let spec = RobustnessSpec::new(instance_p0(&m, 0.3), 0.3, eps).unwrap();
        let mixture = robustify_mixture(&solve_opt(mu, u, w).scheme, u, &spec);
        prop_assert!(solve_robust_opt(mu, eps, u, w).value >= mixture.expected(mu, w) - 1e-9);
    }

    #[test]
    fn grid_prior_is_lipschitz_in_the_mean(m1 in -0.8f64..0.8, m2 in -0.8f64..0.8, sigma in 0.2f64..0.6) {
        let grid: Vec<f64> = (0..32).map(|g| -2.0 + 4.0 * g as f64 / 31.0).collect();
        let l = grid_prior_lipschitz(&grid, sigma, -1.0, 1.0);
        let p1 = grid_prior(&grid, m1, sigma);
        let p2 = grid_prior(&grid, m2, sigma);
        let d: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(d <= l * (m1 - m2).abs() + 1e-9);
    }

    #[test]
    fn no_policy_beats_the_planner(seed in 0u64..1000, pseed in any::<u64>()) {
        let m: Tabular = gen_tabular(seed, &small_gen(3)).unwrap();
        let ctx = [0, 0, 0];
        let star = backward_induction(&m, &ctx);
        let mut policy = SignalingPolicy::empty(3, 2);
        for h in 0..3 {
            for s in 0..2 {
                policy.set(h, s, random_scheme(2, 2, pseed.wrapping_add((h * 2 + s) as u64)));
            }
        }
        let v = evaluate_policy(&m, &policy, &ctx, ReceiverModel::Rational).v(0, 0);
        prop_assert!(v <= star.v(0, 0) + 1e-9);
        let obedient = evaluate_policy(&m, &star.policy, &ctx, ReceiverModel::Obedient).v(0, 0);
        prop_assert!((obedient - star.v(0, 0)).abs() <= 1e-9);
    }

    #[test]
    fn decomposition_identity_on_short_runs(seed in 0u64..1000) {
        let m: Tabular = gen_tabular(seed, &small_gen(3)).unwrap();
        let ctx = vec![0; 3];
        let star = StarPlan::new(&m, &ctx);
        let mut learner = TabularOp4::new(&m, LearnerConfig::default(), 30);
        for _ in 0..30 {
            let plan = learner.plan_episode(&ctx).unwrap();
            let record = run_episode(&plan, &m, seed, ReceiverModel::Rational);
            let eval = evaluate_policy(&m, &plan.policy, &ctx, ReceiverModel::Rational);
            let terms = decompose_regret(&m, &star, &plan, &eval, &record).unwrap();
            let regret = star.plan.v(0, 0) - eval.v(0, 0);
            prop_assert!(regret >= -1e-9);
            prop_assert!((regret - terms.total()).abs() <= 1e-9);
            learner.update(&record).unwrap();
        }
    }

    #[test]
    fn cholesky_solves_and_logdet_respects_det_trace(xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..40)) {
        let mut g = Gram::new(3, 1.0);
        for x in &xs {
            let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            let unit: Vec<f64> = x.iter().map(|v| v / n).collect();
            g.add_outer(&unit);
        }
        let ch = g.cholesky().unwrap();
        let b = [0.3, -1.0, 2.0];
        let x = ch.solve(&b);
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| g.a[i * 3 + j] * x[j]).sum();
            prop_assert!((row - b[i]).abs() <= 1e-9);
        }
        prop_assert!(ch.logdet() <= det_trace_log_bound(3, xs.len(), 1.0, 1.0) + 1e-9);
    }

    #[test]
    fn exponent_fit_recovers_power_laws(alpha in 0.1f64..1.0, c in 0.5f64..20.0) {
        let series: Vec<f64> = (1..=400).map(|t| c * (t as f64).powf(alpha)).collect();
        let fit = fit_regret_exponent(&series, 50).unwrap();
        prop_assert!((fit.alpha - alpha).abs() <= 1e-9);
    }

    #[test]
    fn single_precision_agrees_with_double((mu, u, w, _a) in problem()) {
        let v64 = solve_opt(&mu, &u, &w).value;
        let f = |x: &Vec<f64>| x.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        let v32 = solve_opt(&f(&mu), &f(&u), &f(&w)).value;
        prop_assert!((v64 - v32 as f64).abs() <= 1e-3);
    }
}

#[test]
fn non_positive_definite_matrix_is_rejected() {
    assert!(Cholesky::factor(2, &[1.0f64, 2.0, 2.0, 1.0]).is_err());
}
