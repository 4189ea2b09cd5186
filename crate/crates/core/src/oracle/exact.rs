//! The acting-pair chain, discounted weightings, and exact values and
//! gradients.

use nalgebra::{DMatrix, DVector};

use super::Problem;
use crate::error::{Error, Result};

/// Where the objective starts.
#[derive(Debug, Clone, PartialEq)]
pub enum StartDist {
    /// Weights on acting pairs `(s, o)`; the objective is `Σ w q(s, o)`.
    Acting(Vec<f64>),
    /// Weights on arrival pairs `(s', o)`, entering `s'` with `o` active;
    /// the objective is `Σ ν u(o, s')`.
    Arrival(Vec<f64>),
}

impl StartDist {
    /// Point mass on one acting pair.
    pub fn acting_at(num_pairs: usize, pair: usize) -> Self {
        let mut w = vec![0.0; num_pairs];
        w[pair] = 1.0;
        StartDist::Acting(w)
    }

    /// Point mass on one arrival pair.
    pub fn arrival_at(num_pairs: usize, pair: usize) -> Self {
        let mut w = vec![0.0; num_pairs];
        w[pair] = 1.0;
        StartDist::Arrival(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedChain {
    pub num_states: usize,
    pub num_options: usize,
    /// `K[(s,o), (s',o')]`; rows of terminal pairs are self-loops.
    pub kernel: DMatrix<f64>,
    /// `M[(s,o), s']`; rows of terminal pairs are zero.
    pub state_kernel: DMatrix<f64>,
    /// `C[(s',o), o']`, the option decision on arriving in `s'` with `o`.
    pub decision: DMatrix<f64>,
    pub terminal: Vec<bool>,
}

impl AugmentedChain {
    /// `K` with terminal rows zeroed: the kernel of the killed chain.
    pub fn transient_kernel(&self) -> DMatrix<f64> {
        let mut k = self.kernel.clone();
        for s in (0..self.num_states).filter(|s| self.terminal[*s]) {
            for o in 0..self.num_options {
                k.row_mut(s * self.num_options + o).fill(0.0);
            }
        }
        k
    }

    pub fn is_terminal_pair(&self, pair: usize) -> bool {
        self.terminal[pair / self.num_options]
    }
}

/// Exact values for one start distribution.
///
/// Tables over pairs are indexed `s * |O| + o`; `q_u` and `a_u` are indexed
/// `(s * |O| + o) * |A| + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    /// `Σ_t γᵗ Pr(S_t = s, O_t = o)`.
    pub mu: Vec<f64>,
    /// `Σ_t γᵗ Pr(S_{t+1} = s', O_t = o)`, counted from the start's arrival.
    pub mu_shifted: Vec<f64>,
    pub q_u: Vec<f64>,
    pub q_omega: Vec<f64>,
    pub v: Vec<f64>,
    /// `u(o, s')`, indexed by the arrival pair `(s', o)`.
    pub u: Vec<f64>,
    pub a_u: Vec<f64>,
    pub a_omega: Vec<f64>,
    pub a_omega_continued: Vec<f64>,
    pub j_value: f64,
}

impl Problem<'_> {
    pub fn build_chain(&self) -> AugmentedChain {
        let (n_s, n_o, n_a) = (self.mdp.num_states, self.params.num_options, self.params.num_actions);
        let n = n_s * n_o;
        let mut state_kernel = DMatrix::zeros(n, n_s);
        let mut decision = DMatrix::zeros(n, n_o);
        let mut probs = vec![0.0; n_a];
        for s in 0..n_s {
            for o in 0..n_o {
                let x = self.pair(s, o);
                let beta = self.params.termination_prob(self.fmap, o, s);
                for o2 in 0..n_o {
                    let stay = if o2 == o { 1.0 - beta } else { 0.0 };
                    decision[(x, o2)] = stay + beta * self.pi_over.get(s, o2);
                }
                if self.mdp.is_terminal(s) {
                    continue;
                }
                self.params.intra_option_probs_into(self.fmap, o, s, &mut probs);
                for (a, pa) in probs.iter().enumerate() {
                    for (s2, p) in self.mdp.row(s, a).iter().enumerate() {
                        state_kernel[(x, s2)] += pa * p;
                    }
                }
            }
        }
        let mut kernel = DMatrix::zeros(n, n);
        for s in 0..n_s {
            for o in 0..n_o {
                let x = self.pair(s, o);
                if self.mdp.is_terminal(s) {
                    kernel[(x, x)] = 1.0;
                    continue;
                }
                for s2 in 0..n_s {
                    let m = state_kernel[(x, s2)];
                    if m == 0.0 {
                        continue;
                    }
                    for o2 in 0..n_o {
                        kernel[(x, self.pair(s2, o2))] += m * decision[(self.pair(s2, o), o2)];
                    }
                }
            }
        }
        AugmentedChain {
            num_states: n_s,
            num_options: n_o,
            kernel,
            state_kernel,
            decision,
            terminal: self.mdp.terminal.clone(),
        }
    }

    /// The acting-pair distribution at time 0 implied by a start.
    pub fn acting_start(&self, chain: &AugmentedChain, start: &StartDist) -> Result<Vec<f64>> {
        let n = self.num_pairs();
        let weights = match start {
            StartDist::Acting(w) | StartDist::Arrival(w) => w,
        };
        if weights.len() != n {
            return Err(Error::Mismatch { message: format!("start has {} entries, expected {n}", weights.len()) });
        }
        Ok(match start {
            StartDist::Acting(w) => w.clone(),
            StartDist::Arrival(nu) => {
                let n_o = self.params.num_options;
                let mut w = vec![0.0; n];
                for (x, &mass) in nu.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    if chain.is_terminal_pair(x) {
                        w[x] += mass;
                        continue;
                    }
                    let s = x / n_o;
                    for o2 in 0..n_o {
                        w[s * n_o + o2] += mass * chain.decision[(x, o2)];
                    }
                }
                w
            }
        })
    }

    /// `I - γ K̃`.
    fn resolvent_system(&self, chain: &AugmentedChain) -> DMatrix<f64> {
        let n = self.num_pairs();
        DMatrix::identity(n, n) - chain.transient_kernel() * self.gamma
    }

    /// `(μ, μ_shifted)` for a start distribution.
    pub fn exact_mu(&self, chain: &AugmentedChain, start: &StartDist) -> Result<(Vec<f64>, Vec<f64>)> {
        self.mu_from_system(chain, &self.resolvent_system(chain), start)
    }

    fn mu_from_system(
        &self,
        chain: &AugmentedChain,
        system: &DMatrix<f64>,
        start: &StartDist,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = DVector::from_vec(self.acting_start(chain, start)?);
        let mu = system
            .transpose()
            .lu()
            .solve(&w)
            .ok_or_else(|| Error::SingularSystem("I - γK is not invertible".into()))?;
        let n_o = self.params.num_options;
        let mut shifted = vec![0.0; self.num_pairs()];
        if let StartDist::Arrival(nu) = start {
            shifted.copy_from_slice(nu);
        }
        for x in 0..self.num_pairs() {
            if mu[x] == 0.0 || chain.is_terminal_pair(x) {
                continue;
            }
            let o = x % n_o;
            for s2 in 0..self.mdp.num_states {
                shifted[s2 * n_o + o] += self.gamma * mu[x] * chain.state_kernel[(x, s2)];
            }
        }
        Ok((mu.as_slice().to_vec(), shifted))
    }

    pub fn exact_values(&self, start: &StartDist) -> Result<ExactSolution> {
        let chain = self.build_chain();
        self.exact_values_on(&chain, start)
    }

    pub fn exact_values_on(&self, chain: &AugmentedChain, start: &StartDist) -> Result<ExactSolution> {
        let (n_s, n_o, n_a) = (self.mdp.num_states, self.params.num_options, self.params.num_actions);
        let n = n_s * n_o;
        let system = self.resolvent_system(chain);
        let mut probs = vec![0.0; n_a];
        let mut r_bar = DVector::zeros(n);
        for s in (0..n_s).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..n_o {
                self.params.intra_option_probs_into(self.fmap, o, s, &mut probs);
                r_bar[self.pair(s, o)] =
                    probs.iter().enumerate().map(|(a, pa)| pa * self.mdp.expected_reward(s, a)).sum();
            }
        }
        let q = system.clone().lu().solve(&r_bar).ok_or_else(|| Error::SingularSystem("I - γK is not invertible".into()))?;
        let q_omega: Vec<f64> = q.as_slice().to_vec();
        let v: Vec<f64> = (0..n_s)
            .map(|s| (0..n_o).map(|o| self.pi_over.get(s, o) * q_omega[self.pair(s, o)]).sum())
            .collect();
        let mut u = vec![0.0; n];
        for s in (0..n_s).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..n_o {
                let beta = self.params.termination_prob(self.fmap, o, s);
                u[self.pair(s, o)] = (1.0 - beta) * q_omega[self.pair(s, o)] + beta * v[s];
            }
        }
        let mut q_u = vec![0.0; n * n_a];
        for s in (0..n_s).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..n_o {
                for a in 0..n_a {
                    q_u[self.pair(s, o) * n_a + a] = (0..n_s)
                        .map(|s2| {
                            self.mdp.p(s, a, s2) * (self.mdp.r(s, a, s2) + self.gamma * u[self.pair(s2, o)])
                        })
                        .sum();
                }
            }
        }
        let a_u: Vec<f64> = q_u.iter().enumerate().map(|(i, q)| q - q_omega[i / n_a]).collect();
        let a_omega: Vec<f64> = q_omega.iter().enumerate().map(|(x, q)| q - v[x / n_o]).collect();
        let a_omega_continued: Vec<f64> = u.iter().zip(&q_omega).map(|(u, q)| u - q).collect();
        let (mu, mu_shifted) = self.mu_from_system(chain, &system, start)?;
        let j_value = match start {
            StartDist::Acting(w) => w.iter().zip(&q_omega).map(|(w, q)| w * q).sum(),
            StartDist::Arrival(nu) => nu.iter().zip(&u).map(|(w, u)| w * u).sum(),
        };
        Ok(ExactSolution { mu, mu_shifted, q_u, q_omega, v, u, a_u, a_omega, a_omega_continued, j_value })
    }

    /// `Σ_{s,o} μ(s,o) Σ_a ∂π_o(a|s)/∂θ q_U(s,o,a)`.
    pub fn exact_policy_gradient(&self, sol: &ExactSolution) -> Vec<f64> {
        let n_a = self.params.num_actions;
        let mut grad = vec![0.0; self.params.theta_len()];
        let mut probs = vec![0.0; n_a];
        let mut score = vec![0.0; grad.len()];
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let x = self.pair(s, o);
                if sol.mu[x] == 0.0 {
                    continue;
                }
                self.params.intra_option_probs_into(self.fmap, o, s, &mut probs);
                for (a, pa) in probs.iter().enumerate() {
                    self.params.grad_log_intra_option_into(self.fmap, o, s, a, &mut score);
                    let w = sol.mu[x] * pa * sol.q_u[x * n_a + a];
                    grad.iter_mut().zip(&score).for_each(|(g, sc)| *g += w * sc);
                }
            }
        }
        grad
    }

    /// `-Σ_{s',o} μ_shifted(s',o) ∂β_o(s')/∂ϑ a_𝒪(s',o)`.
    pub fn exact_termination_gradient(&self, sol: &ExactSolution) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.vartheta_len()];
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let x = self.pair(s, o);
                let w = sol.mu_shifted[x] * sol.a_omega[x];
                if w == 0.0 {
                    continue;
                }
                let db = self.params.grad_termination(self.fmap, o, s);
                grad.iter_mut().zip(&db).for_each(|(g, d)| *g -= w * d);
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{two_state_features, two_state_initialization, two_state_mdp};
    use crate::features::FeatureMap;
    use crate::mdp::TabularMdp;
    use crate::options::{explicit_policy_over_options, OptionParams, PolicyOverOptionsTable};

    fn bandit(gamma: f64) -> (TabularMdp, OptionParams, FeatureMap, PolicyOverOptionsTable) {
        let mut m = TabularMdp::zeros(1, 1, gamma);
        m.set(0, 0, 0, 1.0, 1.0);
        m.initial[0] = 1.0;
        (m, OptionParams::new(1, 1, 1), FeatureMap::one_hot(1), PolicyOverOptionsTable::uniform(1, 1))
    }

    #[test]
    fn geometric_series() {
        let (m, p, f, pi) = bandit(0.9);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        let sol = prob.exact_values(&prob.default_start()).unwrap();
        assert!((sol.v[0] - 10.0).abs() < 1e-10);
        assert!((sol.mu.iter().sum::<f64>() - 10.0).abs() < 1e-10);
    }

    #[test]
    fn zero_discount() {
        let m = two_state_mdp();
        let (p, _) = two_state_initialization();
        let f = two_state_features();
        let pi = PolicyOverOptionsTable::uniform(2, 2);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap().with_gamma(0.0);
        let start = prob.default_start();
        let sol = prob.exact_values(&start).unwrap();
        let StartDist::Acting(w) = &start else { unreachable!() };
        assert_eq!(&sol.mu, w);
        for x in 0..4 {
            for a in 0..2 {
                assert!((sol.q_u[x * 2 + a] - m.expected_reward(x / 2, a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_rows_are_distributions() {
        let m = crate::envs::four_rooms();
        let p = OptionParams::new(4, m.num_states, 4);
        let f = FeatureMap::one_hot(m.num_states);
        let pi = PolicyOverOptionsTable::uniform(m.num_states, 4);
        let chain = Problem::new(&m, &p, &f, &pi).unwrap().build_chain();
        for r in 0..chain.kernel.nrows() {
            assert!((chain.kernel.row(r).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn never_terminating_options_are_block_diagonal() {
        let m = two_state_mdp();
        let (mut p, _) = two_state_initialization();
        p.vartheta.iter_mut().for_each(|x| *x = -100.0);
        p.beta_clamp = 1e-300;
        let f = two_state_features();
        let pi = PolicyOverOptionsTable::uniform(2, 2);
        let chain = Problem::new(&m, &p, &f, &pi).unwrap().build_chain();
        for x in 0..4 {
            for y in 0..4 {
                if x % 2 != y % 2 {
                    assert!(chain.kernel[(x, y)] < 1e-40);
                }
            }
        }
    }

    #[test]
    fn always_terminating_options_redraw() {
        let m = two_state_mdp();
        let (mut p, _) = two_state_initialization();
        p.vartheta.iter_mut().for_each(|x| *x = 100.0);
        p.beta_clamp = 1e-300;
        let f = two_state_features();
        let pi = PolicyOverOptionsTable::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4]]);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        let chain = prob.build_chain();
        for x in 0..4 {
            for s2 in 0..2 {
                for o2 in 0..2 {
                    let expect = chain.state_kernel[(x, s2)] * pi.get(s2, o2);
                    assert!((chain.kernel[(x, prob.pair(s2, o2))] - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn weighting_matches_power_series() {
        let m = two_state_mdp();
        let (p, c) = two_state_initialization();
        let f = two_state_features();
        let pi = explicit_policy_over_options(&c.q_omega, 2, 0.05);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        let chain = prob.build_chain();
        for start in [prob.default_start(), StartDist::arrival_at(4, 3)] {
            let (mu, shifted) = prob.exact_mu(&chain, &start).unwrap();
            let w = prob.acting_start(&chain, &start).unwrap();
            let mut dist = nalgebra::RowDVector::from_vec(w);
            let mut series = [0.0; 4];
            let mut series_shifted = match &start {
                StartDist::Arrival(nu) => nu.clone(),
                StartDist::Acting(_) => vec![0.0; 4],
            };
            let mut discount = 1.0;
            for _ in 0..1000 {
                for x in 0..4 {
                    series[x] += discount * dist[x];
                    for s2 in 0..2 {
                        series_shifted[s2 * 2 + x % 2] += discount * prob.gamma * dist[x] * chain.state_kernel[(x, s2)];
                    }
                }
                dist = &dist * &chain.kernel;
                discount *= prob.gamma;
            }
            for x in 0..4 {
                assert!((mu[x] - series[x]).abs() < 1e-8);
                assert!((shifted[x] - series_shifted[x]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn biased_initial_weighting() {
        let m = two_state_mdp();
        let (p, c) = two_state_initialization();
        let f = two_state_features();
        let pi = explicit_policy_over_options(&c.q_omega, 2, 0.05);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        let (mu, _) = prob.exact_mu(&prob.build_chain(), &prob.default_start()).unwrap();
        assert!(mu[prob.pair(0, 0)] > mu[prob.pair(0, 1)]);
    }

    #[test]
    fn bellman_residuals_and_identities() {
        let m = two_state_mdp();
        let (p, c) = two_state_initialization();
        let f = two_state_features();
        let pi = explicit_policy_over_options(&c.q_omega, 2, 0.2);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        let sol = prob.exact_values(&prob.default_start()).unwrap();
        for s in 0..2 {
            for o in 0..2 {
                let x = prob.pair(s, o);
                let probs = p.intra_option_probs(&f, o, s);
                let backup: f64 = (0..2).map(|a| probs[a] * sol.q_u[x * 2 + a]).sum();
                assert!((backup - sol.q_omega[x]).abs() < 1e-10);
                let beta = p.termination_prob(&f, o, s);
                assert!((sol.a_omega_continued[x] + beta * sol.a_omega[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_without_discount_or_terminal() {
        let (m, p, f, pi) = bandit(1.0);
        let prob = Problem::new(&m, &p, &f, &pi).unwrap();
        assert!(matches!(prob.exact_values(&prob.default_start()), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn size_cap() {
        let m = TabularMdp::zeros(251, 1, 0.9);
        let p = OptionParams::new(2, 1, 1);
        let f = FeatureMap::from_rows(vec![vec![1.0]; 251]);
        let pi = PolicyOverOptionsTable::uniform(251, 2);
        assert!(matches!(
            Problem::new(&m, &p, &f, &pi),
            Err(Error::InstanceTooLarge { pairs: 502, cap: 500 })
        ));
    }
}
