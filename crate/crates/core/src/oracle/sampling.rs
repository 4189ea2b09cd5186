//! Sampling-based checks: finite-horizon Fisher estimates and the
//! conditional means of the two TD errors.

use nalgebra::DMatrix;

use super::{AugmentedChain, ExactSolution, Manifold, Problem};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Walker over the acting-pair chain with death probability `1 - γ` after
/// every action. A death or a terminal arrival restarts from `start`.
struct Walker<'p, 'a> {
    problem: &'p Problem<'a>,
    start: &'p [f64],
    probs: Vec<f64>,
    state: usize,
    option: usize,
}

/// One sampled step: action, arrival state, reward, whether the path
/// restarted, and the option decided on arrival (if it did not).
struct Step {
    s: usize,
    o: usize,
    a: usize,
    s_next: usize,
    r: f64,
    terminal: bool,
    next_option: Option<usize>,
}

impl<'p, 'a> Walker<'p, 'a> {
    fn new(problem: &'p Problem<'a>, start: &'p [f64], rng: &mut Rng) -> Result<Self> {
        let live: f64 = start
            .iter()
            .enumerate()
            .filter(|(x, _)| !problem.mdp.is_terminal(x / problem.params.num_options))
            .map(|(_, w)| w)
            .sum();
        if live.is_nan() || live <= 0.0 {
            return Err(Error::Config("start distribution has no mass on non-terminal pairs".into()));
        }
        let mut w = Walker { problem, start, probs: vec![0.0; problem.params.num_actions], state: 0, option: 0 };
        w.restart(rng);
        Ok(w)
    }

    fn restart(&mut self, rng: &mut Rng) {
        let n_o = self.problem.params.num_options;
        loop {
            let x = rng.categorical(self.start);
            if !self.problem.mdp.is_terminal(x / n_o) {
                self.state = x / n_o;
                self.option = x % n_o;
                return;
            }
        }
    }

    fn step(&mut self, rng: &mut Rng) -> Step {
        let p = self.problem;
        let (s, o) = (self.state, self.option);
        p.params.intra_option_probs_into(p.fmap, o, s, &mut self.probs);
        let a = rng.categorical(&self.probs);
        let s_next = rng.categorical(p.mdp.row(s, a));
        let r = p.mdp.r(s, a, s_next);
        let terminal = p.mdp.is_terminal(s_next);
        let dies = !rng.bernoulli(p.gamma);
        let next_option = if terminal || dies {
            self.restart(rng);
            None
        } else {
            let beta = p.params.termination_prob(p.fmap, o, s_next);
            let o_next = if rng.bernoulli(beta) { rng.categorical(p.pi_over.row(s_next)) } else { o };
            self.state = s_next;
            self.option = o_next;
            Some(o_next)
        };
        Step { s, o, a, s_next, r, terminal, next_option }
    }
}

/// `(1/𝒯) · mean over paths of (Σ_t score_t)(Σ_t score_t)ᵀ`, where each path
/// holds `horizon` score terms of the chosen manifold.
///
/// For θ a term is `∂ ln π_o(a|s)` per action. For ϑ a term is the score of
/// each option decision on arrival: `∂ ln β'` when the option is kept,
/// `∂ ln β` when it is switched.
pub fn mc_fim_estimate(
    problem: &Problem<'_>,
    manifold: Manifold,
    start: &[f64],
    horizon: usize,
    num_paths: usize,
    rng: &mut Rng,
) -> Result<DMatrix<f64>> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let params = problem.params;
    let len = match manifold {
        Manifold::Theta => params.theta_len(),
        Manifold::Vartheta => params.vartheta_len(),
    };
    let mut acc = DMatrix::zeros(len, len);
    let mut total = vec![0.0; len];
    let mut score = vec![0.0; len];
    for _ in 0..num_paths {
        let mut walker = Walker::new(problem, start, rng)?;
        total.fill(0.0);
        let mut count = 0;
        while count < horizon {
            let step = walker.step(rng);
            match manifold {
                Manifold::Theta => {
                    params.grad_log_intra_option_into(problem.fmap, step.o, step.s, step.a, &mut score);
                }
                Manifold::Vartheta => {
                    let Some(o_next) = step.next_option else { continue };
                    if o_next == step.o {
                        let pi = problem.pi_over.get(step.s_next, step.o);
                        params.grad_log_continuation_at_into(problem.fmap, step.o, step.s_next, pi, &mut score);
                    } else {
                        params.grad_log_termination_into(problem.fmap, step.o, step.s_next, &mut score);
                    }
                }
            }
            total.iter_mut().zip(&score).for_each(|(t, sc)| *t += sc);
            count += 1;
        }
        for i in 0..len {
            if total[i] == 0.0 {
                continue;
            }
            for j in 0..len {
                acc[(i, j)] += total[i] * total[j];
            }
        }
    }
    Ok(acc / (num_paths as f64 * horizon as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConfig {
    /// Stop once every cell has this many samples.
    pub samples_per_cell: usize,
    /// Hard cap on simulated steps.
    pub max_steps: usize,
    /// Cells with fewer samples are reported but not judged.
    pub min_samples: usize,
    /// Allowed distance from the target, in standard errors.
    pub sigmas: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig { samples_per_cell: 10_000, max_steps: 2_000_000, min_samples: 500, sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCheck {
    pub state: usize,
    pub option: usize,
    pub action: Option<usize>,
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    pub target: f64,
    /// Whether the cell had enough samples to be judged.
    pub checked: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    /// `δ^U` by `(s, o, a)` against `a_U(s, o, a)`.
    pub delta_u: Vec<CellCheck>,
    /// `δ^𝒪` by `(s, o)` on continued steps against `a_𝒪(s, o)`.
    pub delta_omega: Vec<CellCheck>,
    /// The same samples against the exact conditional mean of `δ^𝒪`.
    pub delta_omega_exact_mean: Vec<CellCheck>,
}

impl LemmaReport {
    pub fn delta_u_passed(&self) -> bool {
        self.delta_u.iter().all(|c| c.passed)
    }

    pub fn delta_omega_passed(&self) -> bool {
        self.delta_omega.iter().all(|c| c.passed)
    }

    pub fn delta_omega_exact_mean_passed(&self) -> bool {
        self.delta_omega_exact_mean.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std_err(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }

    fn judge(&self, state: usize, option: usize, action: Option<usize>, target: f64, cfg: &LemmaConfig) -> CellCheck {
        let checked = self.n >= cfg.min_samples;
        let std_err = self.std_err();
        // A zero-variance cell must hit the target up to rounding.
        let tol = (cfg.sigmas * std_err).max(1e-9 * (1.0 + target.abs()));
        CellCheck {
            state,
            option,
            action,
            count: self.n,
            mean: self.mean,
            std_err,
            target,
            checked,
            passed: !checked || (self.mean - target).abs() <= tol,
        }
    }
}

impl Problem<'_> {
    /// `E[δ^𝒪 | s, o]` for the text form, exactly:
    /// `a_𝒪(s,o) - γ Σ_s' M(s,o,s') (1 - β_o(s')) a_𝒪(s',o)`.
    pub fn expected_delta_omega(&self, chain: &AugmentedChain, sol: &ExactSolution) -> Vec<f64> {
        let n_o = self.params.num_options;
        (0..self.num_pairs())
            .map(|x| {
                if chain.is_terminal_pair(x) {
                    return 0.0;
                }
                let o = x % n_o;
                let carried: f64 = (0..self.mdp.num_states)
                    .filter(|s2| !self.mdp.is_terminal(*s2))
                    .map(|s2| {
                        let beta = self.params.termination_prob(self.fmap, o, s2);
                        chain.state_kernel[(x, s2)] * (1.0 - beta) * sol.a_omega[self.pair(s2, o)]
                    })
                    .sum();
                sol.a_omega[x] - self.gamma * carried
            })
            .collect()
    }
}

/// Conditional means of `δ^U` and `δ^𝒪` with exact value tables as the critic,
/// from one long restarted run of the frozen process.
pub fn lemma_checks(problem: &Problem<'_>, start: &[f64], cfg: &LemmaConfig, rng: &mut Rng) -> Result<LemmaReport> {
    let (n_s, n_o, n_a) = (problem.mdp.num_states, problem.params.num_options, problem.params.num_actions);
    let chain = problem.build_chain();
    let sol = problem.exact_values_on(&chain, &super::StartDist::Acting(start.to_vec()))?;
    let exact_mean = problem.expected_delta_omega(&chain, &sol);
    let mut du = vec![Welford::default(); n_s * n_o * n_a];
    let mut dom = vec![Welford::default(); n_s * n_o];
    let live_pairs: Vec<usize> = (0..n_s * n_o).filter(|x| !problem.mdp.is_terminal(x / n_o)).collect();
    let mut walker = Walker::new(problem, start, rng)?;
    let mut previous: Option<usize> = None;
    for step_index in 0..cfg.max_steps {
        let step = walker.step(rng);
        let x = problem.pair(step.s, step.o);
        let x_next = problem.pair(step.s_next, step.o);
        let (u_next, v_next) = if step.terminal { (0.0, 0.0) } else { (sol.u[x_next], sol.v[step.s_next]) };
        du[x * n_a + step.a].push(step.r + problem.gamma * u_next - sol.q_omega[x]);
        if previous == Some(step.o) {
            dom[x].push(step.r + problem.gamma * v_next - sol.v[step.s]);
        }
        previous = step.next_option.map(|_| step.o);
        if step_index % 4096 == 0 {
            let full_u = live_pairs.iter().all(|x| (0..n_a).all(|a| du[x * n_a + a].n >= cfg.samples_per_cell));
            let full_o = live_pairs.iter().all(|x| dom[*x].n >= cfg.samples_per_cell);
            if full_u && full_o {
                break;
            }
        }
    }
    let mut report = LemmaReport { delta_u: Vec::new(), delta_omega: Vec::new(), delta_omega_exact_mean: Vec::new() };
    for &x in &live_pairs {
        let (s, o) = (x / n_o, x % n_o);
        for a in 0..n_a {
            report.delta_u.push(du[x * n_a + a].judge(s, o, Some(a), sol.a_u[x * n_a + a], cfg));
        }
        report.delta_omega.push(dom[x].judge(s, o, None, sol.a_omega[x], cfg));
        report.delta_omega_exact_mean.push(dom[x].judge(s, o, None, exact_mean[x], cfg));
    }
    Ok(report)
}
