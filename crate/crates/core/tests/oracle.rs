use natural_option_critic::features::FeatureMap;
use natural_option_critic::mdp::TabularMdp;
use natural_option_critic::options::{OptionParams, PolicyOverOptionsTable};
use natural_option_critic::oracle::{
    lemma_checks, mc_fim_estimate, random_instance, relative_error, run_battery, BatteryConfig, InstanceSpec,
    LemmaConfig, Manifold, Problem, StartDist, Weighting,
};
use natural_option_critic::rng::Rng;
use nalgebra::{DMatrix, DVector};

fn spec() -> InstanceSpec {
    InstanceSpec::default()
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

#[test]
fn policy_gradient_ignores_state_option_baseline() {
    let inst = random_instance(&spec(), 3);
    let p = inst.problem().unwrap();
    let mut sol = p.exact_values(&p.default_start()).unwrap();
    let base = p.exact_policy_gradient(&sol);
    for (i, q) in sol.q_u.iter_mut().enumerate() {
        *q += 10.0 * ((i / 2) as f64 + 1.0).sin();
    }
    assert!(relative_error(&p.exact_policy_gradient(&sol), &base) < 1e-10);
}

#[test]
fn identical_actions_give_zero_policy_gradient() {
    let mut inst = random_instance(&spec(), 5);
    for s in 0..3 {
        for s2 in 0..3 {
            let (prob, r) = (inst.mdp.p(s, 0, s2), inst.mdp.r(s, 0, s2));
            inst.mdp.set(s, 1, s2, prob, r);
        }
    }
    let p = inst.problem().unwrap();
    let sol = p.exact_values(&p.default_start()).unwrap();
    assert!(p.exact_policy_gradient(&sol).iter().all(|g| g.abs() < 1e-12));
    assert!(p.least_squares_eta(&sol).unwrap().iter().all(|e| e.abs() < 1e-10));
}

#[test]
fn single_option_has_no_termination_gradient() {
    let inst = random_instance(&InstanceSpec { num_options: 1, prob_range: (0.05, 1.0), ..spec() }, 1);
    let p = inst.problem().unwrap();
    let sol = p.exact_values(&p.default_start()).unwrap();
    assert!(p.exact_termination_gradient(&sol).iter().all(|g| g.abs() < 1e-12));
    assert!(p.least_squares_phi(&sol).is_err() || p.least_squares_phi(&sol).unwrap().iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn termination_gradient_matches_differences_for_both_starts() {
    for seed in 0..5 {
        let inst = random_instance(&spec(), seed);
        let p = inst.problem().unwrap();
        for start in [StartDist::arrival_at(6, 3), p.default_start()] {
            let sol = p.exact_values(&start).unwrap();
            let fd = p.finite_diff_gradient(Manifold::Vartheta, &start, 1e-5).unwrap();
            assert!(relative_error(&p.exact_termination_gradient(&sol), &fd) < 1e-6);
            let fd = p.finite_diff_gradient(Manifold::Theta, &start, 1e-5).unwrap();
            assert!(relative_error(&p.exact_policy_gradient(&sol), &fd) < 1e-6);
        }
    }
}

#[test]
fn unreachable_state_has_zero_gradient() {
    let mut m = TabularMdp::zeros(3, 2, 0.9);
    for a in 0..2 {
        m.set(0, a, 1, 0.5, 1.0);
        m.set(0, a, 0, 0.5, -1.0);
        m.set(1, a, 0, 1.0, a as f64);
        m.set(2, a, 2, 1.0, 3.0);
    }
    m.initial = vec![1.0, 0.0, 0.0];
    let mut params = OptionParams::new(2, 3, 2);
    params.theta.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.37).sin());
    params.vartheta.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64 * 0.71).cos());
    let f = FeatureMap::one_hot(3);
    let pi = PolicyOverOptionsTable::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5]]);
    let p = Problem::new(&m, &params, &f, &pi).unwrap();
    let start = p.default_start();
    let fd = p.finite_diff_gradient(Manifold::Theta, &start, 1e-5).unwrap();
    for o in 0..2 {
        for a in 0..2 {
            assert_eq!(fd[params.theta_index(o, 2, a)], 0.0);
        }
    }
}

#[test]
fn single_state_metric_is_categorical_fisher() {
    let mut m = TabularMdp::zeros(1, 3, 0.5);
    for a in 0..3 {
        m.set(0, a, 0, 1.0, a as f64);
    }
    m.initial[0] = 1.0;
    let mut params = OptionParams::new(1, 1, 3);
    params.theta = vec![0.2, -0.4, 1.1];
    let f = FeatureMap::one_hot(1);
    let pi = PolicyOverOptionsTable::uniform(1, 1);
    let p = Problem::new(&m, &params, &f, &pi).unwrap();
    let sol = p.exact_values(&p.default_start()).unwrap();
    let g = p.exact_fim_theta(&sol, Weighting::Normalized);
    let probs = params.intra_option_probs(&f, 0, 0);
    let pv = DVector::from_vec(probs.clone());
    let closed = DMatrix::from_diagonal(&pv) - &pv * pv.transpose();
    assert!((g - closed).abs().max() < 1e-12);
}

#[test]
fn always_reselected_options_have_zero_termination_metric() {
    let inst = random_instance(&spec(), 8);
    let pi = PolicyOverOptionsTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    let p = Problem::new(&inst.mdp, &inst.params, &inst.fmap, &pi).unwrap();
    let sol = p.exact_values(&p.default_start()).unwrap();
    let g = p.exact_fim_vartheta(&sol, Weighting::Unnormalized);
    for s in 0..3 {
        for o in 0..2 {
            if pi.get(s, o) == 1.0 {
                for f in 0..3 {
                    let i = inst.params.vartheta_index(o, f);
                    if f == s {
                        assert_eq!(g[(i, i)], 0.0);
                    }
                }
            }
        }
    }
    let all_one = PolicyOverOptionsTable::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
    let one = OptionParams { num_options: 1, theta: inst.params.theta[..6].to_vec(), vartheta: inst.params.vartheta[..3].to_vec(), ..inst.params.clone() };
    let p = Problem::new(&inst.mdp, &one, &inst.fmap, &all_one).unwrap();
    let sol = p.exact_values(&p.default_start()).unwrap();
    assert_eq!(p.exact_fim_vartheta(&sol, Weighting::Unnormalized).abs().max(), 0.0);
}

#[test]
fn normal_equation_residuals_vanish() {
    for seed in 0..10 {
        let inst = random_instance(&spec(), seed);
        let p = inst.problem().unwrap();
        let sol = p.exact_values(&p.default_start()).unwrap();
        let eta = p.least_squares_eta(&sol).unwrap();
        let g = p.exact_fim_theta(&sol, Weighting::Unnormalized);
        let grad = p.exact_policy_gradient(&sol);
        let residual: Vec<f64> = mat_vec(&g, &eta).iter().zip(&grad).map(|(a, b)| a - b).collect();
        assert!(residual.iter().all(|r| r.abs() < 1e-10));
    }
}

#[test]
fn natural_termination_direction_survives_feature_rescaling() {
    let inst = random_instance(&spec(), 11);
    let c = 3.5;
    let scaled_fmap = inst.fmap.scaled(c);
    let mut scaled = inst.params.clone();
    scaled.vartheta.iter_mut().for_each(|x| *x /= c);
    scaled.theta.iter_mut().for_each(|x| *x /= c);
    let base = inst.problem().unwrap();
    let other = Problem::new(&inst.mdp, &scaled, &scaled_fmap, &inst.pi_over).unwrap();
    let sol = base.exact_values(&base.default_start()).unwrap();
    let sol2 = other.exact_values(&other.default_start()).unwrap();
    assert!((sol.j_value - sol2.j_value).abs() < 1e-12);
    let phi = base.least_squares_phi(&sol).unwrap();
    let phi2 = other.least_squares_phi(&sol2).unwrap();
    // Natural directions transform like parameters: ϑ' = ϑ / c.
    let back: Vec<f64> = phi2.iter().map(|x| x * c).collect();
    let cos = phi.iter().zip(&back).map(|(a, b)| a * b).sum::<f64>()
        / (phi.iter().map(|a| a * a).sum::<f64>().sqrt() * back.iter().map(|b| b * b).sum::<f64>().sqrt());
    assert!((cos - 1.0).abs() < 1e-8, "cosine {cos}");
}

#[test]
fn one_step_sampled_metric_is_start_weighted() {
    let inst = random_instance(&spec(), 2);
    let p = inst.problem().unwrap();
    let StartDist::Acting(w) = p.default_start() else { unreachable!() };
    let mut rng = Rng::seed_from(1);
    let est = mc_fim_estimate(&p, Manifold::Theta, &w, 1, 100_000, &mut rng).unwrap();
    let zero_discount = p.with_gamma(0.0);
    let sol = zero_discount.exact_values(&StartDist::Acting(w.clone())).unwrap();
    let exact = zero_discount.exact_fim_theta(&sol, Weighting::Normalized);
    assert!((&est - &exact).norm() / exact.norm() < 0.03);
    assert!((&est - est.transpose()).abs().max() < 1e-12);
}

#[test]
fn sampled_metric_error_shrinks_with_paths() {
    let inst = random_instance(&spec(), 6);
    let p = inst.problem().unwrap();
    let StartDist::Acting(w) = p.default_start() else { unreachable!() };
    let sol = p.exact_values(&p.default_start()).unwrap();
    let exact = p.exact_fim_theta(&sol, Weighting::Normalized);
    let median_error = |paths: usize| {
        let mut errs: Vec<f64> = (0..10)
            .map(|seed| {
                let mut rng = Rng::seed_from(seed);
                let est = mc_fim_estimate(&p, Manifold::Theta, &w, 50, paths, &mut rng).unwrap();
                (&est - &exact).norm() / exact.norm()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[5]
    };
    let (e3, e4) = (median_error(1_000), median_error(10_000));
    assert!(e4 < e3, "{e3} {e4}");
}

#[test]
fn lemma_cells_are_reported() {
    let inst = random_instance(&spec(), 0);
    let p = inst.problem().unwrap();
    let StartDist::Acting(w) = p.default_start() else { unreachable!() };
    let cfg = LemmaConfig { samples_per_cell: 2_000, ..LemmaConfig::default() };
    let report = lemma_checks(&p, &w, &cfg, &mut Rng::seed_from(3)).unwrap();
    assert_eq!(report.delta_u.len(), 12);
    assert_eq!(report.delta_omega.len(), 6);
    assert!(report.delta_u.iter().all(|c| c.count >= 2_000));
    assert!(report.delta_u_passed());
    assert!(report.delta_omega_exact_mean_passed());
}

#[test]
fn delta_omega_targets_coincide_when_options_always_end() {
    let mut inst = random_instance(&spec(), 4);
    inst.params.vartheta.iter_mut().for_each(|x| *x = 100.0);
    inst.params.beta_clamp = 1e-300;
    let p = inst.problem().unwrap();
    let chain = p.build_chain();
    let sol = p.exact_values_on(&chain, &p.default_start()).unwrap();
    let exact = p.expected_delta_omega(&chain, &sol);
    assert!(relative_error(&exact, &sol.a_omega) < 1e-12);
}

#[test]
fn zero_tolerance_fails_every_check() {
    let inst = random_instance(&spec(), 0);
    let cfg = BatteryConfig {
        tolerance_override: Some(0.0),
        mc_paths: 200,
        lemma: LemmaConfig { samples_per_cell: 600, ..LemmaConfig::default() },
        ..BatteryConfig::default()
    };
    let report = run_battery(&[inst], &cfg).unwrap();
    assert!(!report.passed());
    let text = report.to_text();
    assert!(text.starts_with("oracle check: "));
    assert!(text.lines().skip(1).all(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")));
}

