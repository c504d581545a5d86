use std::fs;

use mpp_lab::envsim::{gen_linear, gen_tabular, simulate_episode, ReceiverModel, TabularGen, LinearGen};
use mpp_lab::harness::{
    decompose_regret, read_csv, run_experiment, Diagnostics, ExperimentConfig, InstanceSpec, LearnerSpec, Schedule, StarPlan, CSV_HEADER,
};
use mpp_lab::io::{instance_from_json, instance_to_json, Instance, TabularDoc};
use mpp_lab::learners::{Baseline, EpisodePlan, Learner, LearnerConfig, Variant};
use mpp_lab::model::Link;
use mpp_lab::persuasion::check_persuasive;
use mpp_lab::planner::{backward_induction, evaluate_policy};
use mpp_lab::Tabular;

fn gen() -> TabularGen {
    TabularGen {
        horizon: 3,
        states: 2,
        outcomes: 2,
        actions: 2,
        contexts: 1,
        p0: 0.3,
        d: 0.2,
        sender_bias: 0.5,
    }
}

fn config(variant: Variant, episodes: usize, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        instance: InstanceSpec::Tabular { generator: gen(), seed: Some(4) },
        learner: LearnerSpec {
            variant,
            constants: LearnerConfig::default(),
            measure_p0: true,
        },
        episodes,
        seeds,
        schedule: Schedule::RoundRobin,
        receiver: ReceiverModel::Rational,
        diagnostics: Diagnostics::default(),
        output: None,
    }
}

#[test]
fn instances_round_trip_through_json() {
    let tab: Tabular = gen_tabular(9, &gen()).unwrap();
    let text = instance_to_json(&Instance::Tabular(TabularDoc::from_model(&tab))).unwrap();
    match instance_from_json::<f64>(&text).unwrap() {
        Instance::Tabular(doc) => assert_eq!(doc.into_model().unwrap(), tab),
        Instance::Linear(_) => panic!("kind changed"),
    }
    let lin_cfg = LinearGen {
        horizon: 2,
        states: 2,
        actions: 2,
        dphi: 3,
        dpsi: 4,
        grid: 8,
        contexts: 3,
        sigma: 0.3,
        link: Link::Logistic,
        p0: None,
        d: 0.2,
        feature_alpha: 0.3,
    };
    let lin = gen_linear::<f64>(2, &lin_cfg).unwrap();
    let text = instance_to_json(&Instance::Linear(lin.clone())).unwrap();
    match instance_from_json::<f64>(&text).unwrap() {
        Instance::Linear(back) => assert_eq!(back, lin),
        Instance::Tabular(_) => panic!("kind changed"),
    }
}

#[test]
fn oracle_learner_has_zero_regret() {
    let runs = run_experiment(&config(Variant::Oracle, 50, vec![1, 2])).unwrap();
    for r in &runs {
        assert!(r.log.entries.iter().all(|e| e.regret.abs() <= 1e-12));
        assert_eq!(r.log.deviation_rate(), 0.0);
    }
}

#[test]
fn static_full_information_regret_grows_at_the_planner_gap() {
    let model: Tabular = gen_tabular(4, &gen()).unwrap();
    let ctx = [0, 0, 0];
    let v_star = backward_induction(&model, &ctx).v(0, 0);
    let plan = Baseline::full_info(model.clone()).plan_episode(&ctx).unwrap();
    let v_fi = evaluate_policy(&model, &plan.policy, &ctx, ReceiverModel::Obedient).v(0, 0);
    assert!(v_star - v_fi > 0.0);
    let runs = run_experiment(&config(Variant::FullInfo, 40, vec![3])).unwrap();
    let cum = runs[0].log.cumulative();
    for (t, c) in cum.iter().enumerate() {
        assert!((c - (t + 1) as f64 * (v_star - v_fi)).abs() <= 1e-9);
    }
}

/// Zero-bonus greedy plan: exact planning on `model` with its prior replaced by `mu`.
fn greedy_plan(model: &Tabular, mu: Option<&[f64]>, episode: usize) -> EpisodePlan<f64> {
    let d = model.dims;
    let ctx = vec![0; d.horizon];
    let believed = match mu {
        Some(m) => {
            let prior: Vec<f64> = (0..d.horizon * d.contexts).flat_map(|_| m.to_vec()).collect();
            Tabular::from_parts(
                d,
                model.initial_state,
                model.receiver_utility_raw().to_vec(),
                model.sender_utility_raw().to_vec(),
                model.transition_raw().to_vec(),
                prior,
            )
            .unwrap()
        }
        None => model.clone(),
    };
    let plan = backward_induction(&believed, &ctx);
    EpisodePlan {
        episode,
        contexts: ctx,
        n_states: d.states,
        n_outcomes: d.outcomes,
        n_actions: d.actions,
        bonus: vec![0.0; plan.q_star.len()],
        q: plan.q_star,
        v: plan.v_star,
        mu: believed.prior_raw().to_vec(),
        eps: vec![0.0; d.horizon],
        policy: plan.policy,
        beta: f64::NAN,
        rho: 0.0,
    }
}

/// Summed decomposition terms and regret of a greedy plan over `n` episodes.
fn greedy_run(model: &Tabular, mu: Option<&[f64]>, n: usize) -> ([f64; 4], f64) {
    let ctx = vec![0; model.horizon()];
    let star = StarPlan::new(model, &ctx);
    let mut sums = [0.0; 4];
    let mut regret = 0.0;
    for t in 1..=n {
        let plan = greedy_plan(model, mu, t);
        let record = simulate_episode(model, &plan.policy, &ctx, 5, t, ReceiverModel::Rational);
        let eval = evaluate_policy(model, &plan.policy, &ctx, ReceiverModel::Rational);
        let terms = decompose_regret(model, &star, &plan, &eval, &record).unwrap();
        let r = star.plan.v(0, 0) - eval.v(0, 0);
        assert!((r - terms.total()).abs() <= 1e-9);
        regret += r;
        for (s, x) in sums.iter_mut().zip([terms.term_i, terms.term_ii, terms.term_iii, terms.term_iv]) {
            *s += x;
        }
    }
    (sums, regret)
}

#[test]
fn true_model_plan_has_zero_decomposition_terms() {
    let model: Tabular = gen_tabular(11, &gen()).unwrap();
    let (sums, regret) = greedy_run(&model, None, 50);
    assert!(regret.abs() <= 1e-9);
    for x in sums {
        assert!(x.abs() <= 1e-9, "{sums:?}");
    }
}

#[test]
fn wrong_prior_shows_up_in_the_prior_term() {
    let model: Tabular = gen_tabular(11, &gen()).unwrap();
    let truth = model.prior(0, 0)[0];
    // furthest believed prior whose greedy policy the receiver still obeys,
    // so the martingale terms stay centred
    let obeyed = |m0: f64| {
        let plan = greedy_plan(&model, Some(&[m0, 1.0 - m0]), 1);
        (0..3).all(|h| (0..2).all(|s| check_persuasive(plan.scheme(h, s), model.prior(h, 0), model.u_slice(h, s), 1e-12).is_empty()))
    };
    let m0 = (1..100)
        .map(|k| k as f64 / 100.0)
        .filter(|&m| obeyed(m))
        .max_by(|a, b| (a - truth).abs().partial_cmp(&(b - truth).abs()).unwrap())
        .unwrap();
    assert!((m0 - truth).abs() > 0.1);
    let (sums, regret) = greedy_run(&model, Some(&[m0, 1.0 - m0]), 500);
    // exact model: no TD error; the prior error lands in (iii) and (iv),
    // which between them carry the regret up to the martingale term
    assert!(sums[0].abs() <= 1e-9);
    assert!(regret > 1.0);
    assert!(sums[3].abs() > 10.0 * sums[1].abs(), "{sums:?}");
    assert!((sums[2] + sums[3] - regret).abs() <= sums[1].abs() + 1e-9);
}

#[test]
fn exact_evaluation_matches_monte_carlo() {
    let model: Tabular = gen_tabular(6, &gen()).unwrap();
    let ctx = [0, 0, 0];
    let star = backward_induction(&model, &ctx);
    let n = 20_000;
    let returns: Vec<f64> = (1..=n)
        .map(|t| simulate_episode(&model, &star.policy, &ctx, 99, t, ReceiverModel::Rational).realized_return())
        .collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - star.v(0, 0)).abs() <= 4.0 * se + 1e-9, "mean {mean}, exact {}, se {se}", star.v(0, 0));
}

#[test]
fn csv_output_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Variant::Tabular, 60, vec![1, 2]);
    cfg.output = Some(dir.path().join("a"));
    run_experiment(&cfg).unwrap();
    cfg.output = Some(dir.path().join("b"));
    run_experiment(&cfg).unwrap();
    let a = fs::read(dir.path().join("a/regret.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/regret.csv")).unwrap());

    let text = String::from_utf8(a.clone()).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 120);

    // interrupt seed 2 mid-row, then resume
    let seed2 = dir.path().join("b/seed_2.csv");
    let full = fs::read_to_string(&seed2).unwrap();
    let cut = full.len() * 2 / 3;
    fs::write(&seed2, &full[..cut]).unwrap();
    run_experiment(&cfg).unwrap();
    assert_eq!(fs::read_to_string(&seed2).unwrap(), full);
    assert_eq!(a, fs::read(dir.path().join("b/regret.csv")).unwrap());

    let rows = read_csv(&dir.path().join("b/regret.csv")).unwrap();
    for r in &rows {
        let t = r.terms();
        assert!((r.regret() - t.iter().sum::<f64>()).abs() <= 1e-6);
    }
}

#[test]
fn resume_rejects_foreign_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Variant::Tabular, 10, vec![1]);
    cfg.output = Some(dir.path().to_path_buf());
    run_experiment(&cfg).unwrap();
    let mut other = cfg.clone();
    other.learner.constants.c_rho = 0.7;
    other.episodes = 20;
    assert!(run_experiment(&other).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = config(Variant::Tabular, 0, vec![1]);
    assert!(cfg.validate().is_err());
    cfg.episodes = 5;
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    cfg.seeds = vec![1];
    cfg.instance = InstanceSpec::File { path: "/nonexistent/instance.json".into() };
    assert!(cfg.validate().is_err());
    let mut lin = config(Variant::Linear, 5, vec![1]);
    assert!(lin.validate().is_err());
    lin.learner.variant = Variant::Tabular;
    assert!(lin.validate().is_ok());
}
