use natural_option_critic::envs::{two_state_features, two_state_initialization, two_state_mdp};
use natural_option_critic::options::{explicit_policy_over_options, select_option, EpsilonGreedy};
use natural_option_critic::oracle::{random_instance, InstanceSpec, Problem};
use natural_option_critic::rng::Rng;

#[test]
fn initialization_favors_the_self_loop_option() {
    let (params, critic) = two_state_initialization();
    let (mdp, fmap) = (two_state_mdp(), two_state_features());
    let pi_over = explicit_policy_over_options(&critic.q_omega, 2, params.epsilon);
    let problem = Problem::new(&mdp, &params, &fmap, &pi_over).unwrap();
    let sol = problem.exact_values(&problem.default_start()).unwrap();
    assert!(sol.mu[0] > sol.mu[1], "mu(s1, o1) = {} vs mu(s1, o2) = {}", sol.mu[0], sol.mu[1]);

    // The termination gradient raises β_{o1}(s1): leaving the self loop pays.
    let grad = problem.exact_termination_gradient(&sol);
    assert!(grad[params.vartheta_index(0, 0)] > 0.0, "{grad:?}");
}

#[test]
fn critic_converges_to_oracle_option_values() {
    let (params, mut critic) = two_state_initialization();
    let (mdp, fmap) = (two_state_mdp(), two_state_features());
    let rule = EpsilonGreedy { epsilon: params.epsilon };
    let mut rng = Rng::seed_from(21);
    let mut probs = vec![0.0; 2];
    let (mut s, mut o, mut t) = (0, 0, 0usize);
    let mut updates = 0usize;
    let mut visits = [0usize; 4];
    while updates < 100_000 {
        if t == 0 {
            s = mdp.sample_initial(&mut rng);
            o = select_option(critic.row(s), params.epsilon, &mut rng);
        }
        params.intra_option_probs_into(&fmap, o, s, &mut probs);
        let a = rng.categorical(&probs);
        let (s2, r) = mdp.sample_transition(s, a, &mut rng).unwrap();
        visits[s * 2 + o] += 1;
        critic.learning_rate = 0.5 * 100.0 / (100.0 + visits[s * 2 + o] as f64);
        critic.q_learning_update(&params, &fmap, &rule, mdp.gamma, s, o, r, s2, false);
        updates += 1;
        t = (t + 1) % 30;
        if rng.bernoulli(params.termination_prob(&fmap, o, s2)) {
            o = select_option(critic.row(s2), params.epsilon, &mut rng);
        }
        s = s2;
    }
    // The learned values are those of the ε-greedy policy they induce.
    let pi_over = explicit_policy_over_options(&critic.q_omega, 2, params.epsilon);
    let problem = Problem::new(&mdp, &params, &fmap, &pi_over).unwrap();
    let exact = problem.exact_values(&problem.default_start()).unwrap().q_omega;
    for (x, (got, want)) in critic.q_omega.iter().zip(&exact).enumerate() {
        assert!((got - want).abs() < 0.05, "pair {x}: {got} vs {want}");
    }
    assert!(critic.q(0, 1) > critic.q(0, 0), "learned preference for leaving s1");
}

#[test]
fn chain_kernel_matches_simulation() {
    let inst = random_instance(&InstanceSpec::default(), 4);
    let problem = inst.problem().unwrap();
    let chain = problem.build_chain();
    let (n_s, n_o) = (inst.mdp.num_states, inst.params.num_options);
    let n = n_s * n_o;
    let mut rng = Rng::seed_from(22);
    let draws = 1_000_000 / n;
    for x in 0..n {
        let (s, o) = (x / n_o, x % n_o);
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            let a = rng.categorical(&inst.params.intra_option_probs(&inst.fmap, o, s));
            let s2 = rng.categorical(inst.mdp.row(s, a));
            let beta = inst.params.termination_prob(&inst.fmap, o, s2);
            let o2 = if rng.bernoulli(beta) { rng.categorical(inst.pi_over.row(s2)) } else { o };
            counts[s2 * n_o + o2] += 1;
        }
        for (y, c) in counts.iter().enumerate() {
            let p = chain.kernel[(x, y)];
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - draws as f64 * p).abs() <= 3.0 * sd.max(1.0), "K[{x},{y}] = {p}, count {c}");
        }
    }
}
