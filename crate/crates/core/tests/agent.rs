use natural_option_critic::agent::{
    inoc_step, on_option_termination, vanilla_oc_step, AgentMode, Hyperparams, NaturalGradientState, Transition,
};
use natural_option_critic::critic::CriticTables;
use natural_option_critic::envs::{two_state_features, two_state_initialization, two_state_mdp};
use natural_option_critic::features::FeatureMap;
use natural_option_critic::mdp::TabularMdp;
use natural_option_critic::options::{explicit_policy_over_options, OptionParams, PolicyOverOptionsTable};
use natural_option_critic::oracle::{random_instance, ExactSolution, InstanceSpec, Problem};
use natural_option_critic::rng::Rng;

struct Frozen {
    mdp: TabularMdp,
    params: OptionParams,
    fmap: FeatureMap,
    pi_over: PolicyOverOptionsTable,
}

impl Frozen {
    fn two_state() -> Self {
        let (params, critic) = two_state_initialization();
        let pi_over = explicit_policy_over_options(&critic.q_omega, 2, params.epsilon);
        Frozen { mdp: two_state_mdp(), params, fmap: two_state_features(), pi_over }
    }

    fn random(seed: u64) -> Self {
        let inst = random_instance(&InstanceSpec::default(), seed);
        Frozen { mdp: inst.mdp, params: inst.params, fmap: inst.fmap, pi_over: inst.pi_over }
    }

    fn problem(&self) -> Problem<'_> {
        Problem::new(&self.mdp, &self.params, &self.fmap, &self.pi_over).unwrap()
    }

    fn solution(&self) -> ExactSolution {
        let p = self.problem();
        p.exact_values(&p.default_start()).unwrap()
    }

    /// Critic holding the exact option values.
    fn exact_critic(&self, sol: &ExactSolution) -> CriticTables {
        let mut c = CriticTables::zeros(self.mdp.num_states, self.params.num_options, 0.5);
        c.q_omega.clone_from(&sol.q_omega);
        c
    }
}

fn hyper(alpha_eta: f64, alpha_phi: f64) -> Hyperparams {
    Hyperparams { alpha_theta: 0.0, alpha_vartheta: 0.0, alpha_eta, alpha_phi, lambda: 0.0, ..Hyperparams::default() }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_vec(len: usize, rng: &mut Rng) -> Vec<f64> {
    (0..len).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

/// Sum over `(a, s')` of the probability-weighted change that `update`
/// makes to a vector it returns.
fn expectation(f: &Frozen, s: usize, o: usize, mut update: impl FnMut(usize, usize) -> Vec<f64>) -> Vec<f64> {
    let probs = f.params.intra_option_probs(&f.fmap, o, s);
    let mut total: Vec<f64> = Vec::new();
    for (a, pa) in probs.iter().enumerate() {
        for s2 in 0..f.mdp.num_states {
            let w = pa * f.mdp.p(s, a, s2);
            if w == 0.0 {
                continue;
            }
            let d = update(a, s2);
            if total.is_empty() {
                total = vec![0.0; d.len()];
            }
            total.iter_mut().zip(&d).for_each(|(t, x)| *t += w * x);
        }
    }
    total
}

#[test]
fn eta_expected_update_is_squared_error_descent() {
    for f in [Frozen::two_state(), Frozen::random(3)] {
        let sol = f.solution();
        let critic = f.exact_critic(&sol);
        let mut rng = Rng::seed_from(11);
        let alpha = 0.1;
        for s in 0..f.mdp.num_states {
            for o in 0..f.params.num_options {
                let mut base = NaturalGradientState::new(&f.params, hyper(alpha, 0.1));
                base.eta = random_vec(f.params.theta_len(), &mut rng);
                let got = expectation(&f, s, o, |a, s2| {
                    let mut st = base.clone();
                    let mut params = f.params.clone();
                    let tr = Transition { s, o, a, r: f.mdp.r(s, a, s2), s_next: s2, terminal: false, o_prev: None };
                    inoc_step(AgentMode::Inoc, &mut st, &critic, &mut params, &f.fmap, &f.pi_over, f.mdp.gamma, &tr);
                    st.eta.iter().zip(&base.eta).map(|(x, y)| x - y).collect()
                });
                // -α ∂ε/∂η = -α Σ_a π (ψψᵀη - a_U ψ)
                let probs = f.params.intra_option_probs(&f.fmap, o, s);
                let mut want = vec![0.0; base.eta.len()];
                for (a, pa) in probs.iter().enumerate() {
                    let psi = f.params.grad_log_intra_option(&f.fmap, o, s, a);
                    let a_u = sol.a_u[(s * f.params.num_options + o) * f.mdp.num_actions + a];
                    let c = pa * (dot(&psi, &base.eta) - a_u);
                    want.iter_mut().zip(&psi).for_each(|(w, x)| *w -= alpha * c * x);
                }
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-9, "s={s} o={o}: {g} vs {w}");
                }
            }
        }
    }
}

#[test]
fn phi_expected_update_matches_implemented_rule() {
    let f = Frozen::two_state();
    let problem = f.problem();
    let sol = f.solution();
    let chain = problem.build_chain();
    let mean_delta = problem.expected_delta_omega(&chain, &sol);
    let critic = f.exact_critic(&sol);
    let mut rng = Rng::seed_from(12);
    let alpha = 0.2;
    for mode in [AgentMode::Inoc, AgentMode::InocDerived] {
        for s in 0..2 {
            for o in 0..2 {
                let mut base = NaturalGradientState::new(&f.params, hyper(0.1, alpha));
                base.phi = random_vec(f.params.vartheta_len(), &mut rng);
                let got = expectation(&f, s, o, |a, s2| {
                    let mut st = base.clone();
                    let mut params = f.params.clone();
                    let tr = Transition { s, o, a, r: f.mdp.r(s, a, s2), s_next: s2, terminal: false, o_prev: Some(o) };
                    inoc_step(mode, &mut st, &critic, &mut params, &f.fmap, &f.pi_over, f.mdp.gamma, &tr);
                    st.phi.iter().zip(&base.phi).map(|(x, y)| x - y).collect()
                });
                let h = f.params.grad_log_termination(&f.fmap, o, s);
                let beta = f.params.termination_prob(&f.fmap, o, s);
                let projection = match mode {
                    AgentMode::Inoc => dot(&h, &base.phi),
                    _ => {
                        // h' = -h / L, so the derived correction contracts φ.
                        let l = f.params.likelihood_ratio(&f.fmap, &f.pi_over, o, s).unwrap();
                        let h_cont = f.params.grad_log_continuation(&f.fmap, &f.pi_over, o, s);
                        let proj = dot(&h_cont, &base.phi);
                        assert!((proj + dot(&h, &base.phi) / l).abs() < 1e-12);
                        proj
                    }
                };
                let md = mean_delta[s * 2 + o];
                for (i, g) in got.iter().enumerate() {
                    let want = alpha * (beta * md * h[i] + h[i] * projection);
                    assert!((g - want).abs() < 1e-9, "{mode:?} s={s} o={o}: {g} vs {want}");
                }
            }
        }
    }
}

/// On-policy stream of the frozen process with `γ`-death restarts, so that
/// visits to `(s, o)` are proportional to the discounted weighting.
struct Stream<'a> {
    f: &'a Frozen,
    start: Vec<f64>,
    s: usize,
    o: usize,
}

impl<'a> Stream<'a> {
    fn new(f: &'a Frozen, rng: &mut Rng) -> Self {
        let n_o = f.params.num_options;
        let start: Vec<f64> = (0..f.mdp.num_states * n_o).map(|x| f.mdp.initial[x / n_o] * f.pi_over.get(x / n_o, x % n_o)).collect();
        let mut st = Stream { f, start, s: 0, o: 0 };
        st.restart(rng);
        st
    }

    fn restart(&mut self, rng: &mut Rng) {
        let x = rng.categorical(&self.start);
        let n_o = self.f.params.num_options;
        (self.s, self.o) = (x / n_o, x % n_o);
    }

    fn next(&mut self, rng: &mut Rng) -> Transition {
        let f = self.f;
        let (s, o) = (self.s, self.o);
        let a = rng.categorical(&f.params.intra_option_probs(&f.fmap, o, s));
        let s2 = rng.categorical(f.mdp.row(s, a));
        let tr = Transition { s, o, a, r: f.mdp.r(s, a, s2), s_next: s2, terminal: f.mdp.is_terminal(s2), o_prev: None };
        if tr.terminal || !rng.bernoulli(f.mdp.gamma) {
            self.restart(rng);
        } else {
            self.s = s2;
            if rng.bernoulli(f.params.termination_prob(&f.fmap, o, s2)) {
                self.o = rng.categorical(f.pi_over.row(s2));
            }
        }
        tr
    }
}

#[test]
fn eta_converges_to_least_squares_solution() {
    let f = Frozen::two_state();
    let problem = f.problem();
    let sol = f.solution();
    let target = problem.least_squares_eta(&sol).unwrap();
    let critic = f.exact_critic(&sol);
    let mut rng = Rng::seed_from(13);
    let mut stream = Stream::new(&f, &mut rng);
    let mut st = NaturalGradientState::new(&f.params, hyper(0.5, 0.1));
    let mut params = f.params.clone();
    for t in 0..1_000_000 {
        st.hyper.alpha_eta = 0.5 / (1.0 + t as f64 / 50_000.0);
        let tr = stream.next(&mut rng);
        inoc_step(AgentMode::Inoc, &mut st, &critic, &mut params, &f.fmap, &f.pi_over, f.mdp.gamma, &tr);
    }
    assert_eq!(params, f.params);
    let err: f64 = st.eta.iter().zip(&target).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-2, "‖η - η̃‖ = {err}, η = {:?}, η̃ = {target:?}", st.eta);
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()
}

#[test]
fn vanilla_mean_increment_follows_policy_gradient() {
    for (f, seed) in [(Frozen::two_state(), 14), (Frozen::random(0), 15)] {
        let problem = f.problem();
        let sol = f.solution();
        let exact = problem.exact_policy_gradient(&sol);
        let critic = f.exact_critic(&sol);
        let mut rng = Rng::seed_from(seed);
        let mut stream = Stream::new(&f, &mut rng);
        let hyper = Hyperparams { alpha_theta: 1.0, alpha_vartheta: 0.0, ..Hyperparams::default() };
        let mut scratch = NaturalGradientState::new(&f.params, hyper);
        let mut total = vec![0.0; f.params.theta_len()];
        for _ in 0..100_000 {
            let tr = stream.next(&mut rng);
            let mut params = f.params.clone();
            vanilla_oc_step(&hyper, &critic, &mut params, &f.fmap, &f.pi_over, f.mdp.gamma, &tr, &mut scratch);
            total.iter_mut().zip(params.theta.iter().zip(&f.params.theta)).for_each(|(t, (x, y))| *t += x - y);
        }
        let c = cosine(&total, &exact);
        assert!(c > 0.99, "cosine {c}");
    }
}

#[test]
fn termination_redraw_follows_policy_over_options() {
    let mut critic = CriticTables::zeros(3, 4, 0.5);
    critic.q_omega = vec![0.1, 0.7, 0.3, 0.2, 1.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
    let epsilon = 0.3;
    let table = explicit_policy_over_options(&critic.q_omega, 4, epsilon);
    let params = OptionParams::new(4, 3, 2);
    let mut st = NaturalGradientState::new(&params, Hyperparams::default());
    let mut rng = Rng::seed_from(16);
    let n = 10_000;
    for s in 0..3 {
        let mut counts = [0usize; 4];
        for _ in 0..n {
            st.eta.fill(1.0);
            st.trace_phi.fill(1.0);
            counts[on_option_termination(&mut st, &critic, epsilon, s, &mut rng)] += 1;
            assert!(st.eta.iter().chain(&st.trace_phi).all(|x| *x == 0.0));
        }
        for (o, c) in counts.iter().enumerate() {
            let p = table.get(s, o);
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sd, "s={s} o={o}: {c} vs {}", n as f64 * p);
        }
    }
}

/// A parameter vector far too long for any matrix over it to fit in memory:
/// the step must stay vector-only.
#[test]
fn step_cost_is_linear_in_parameters() {
    let (n_o, n_a) = (2000, 200);
    let fmap = FeatureMap::one_hot(2);
    let mut params = OptionParams::new(n_o, 2, n_a);
    assert_eq!(params.theta_len(), 800_000);
    let critic = CriticTables::zeros(2, n_o, 0.5);
    let pi = natural_option_critic::options::EpsilonGreedy { epsilon: 0.05 };
    let mut st = NaturalGradientState::new(&params, Hyperparams::default());
    let started = std::time::Instant::now();
    for t in 0..20 {
        let tr = Transition { s: t % 2, o: 7, a: t % n_a, r: 1.0, s_next: (t + 1) % 2, terminal: false, o_prev: Some(7) };
        inoc_step(AgentMode::InocDerived, &mut st, &critic, &mut params, &fmap, &pi, 0.9, &tr);
        inoc_step(AgentMode::Inoc, &mut st, &critic, &mut params, &fmap, &pi, 0.9, &tr);
    }
    assert!(st.eta.iter().chain(&st.phi).all(|x| x.is_finite()));
    assert!(started.elapsed().as_secs_f64() < 10.0);
}
