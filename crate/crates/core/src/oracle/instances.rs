//! Random small instances and the finite-horizon optimum of an option set.

use super::Problem;
use crate::error::Result;
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::options::{OptionParams, PolicyOverOptionsTable};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_options: usize,
    pub gamma: f64,
    /// Every transition, initial, and policy-over-options probability lies
    /// in this range.
    pub prob_range: (f64, f64),
    /// Half-widths of the uniform draws for θ and ϑ.
    pub theta_scale: f64,
    pub vartheta_scale: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            num_states: 3,
            num_actions: 2,
            num_options: 2,
            gamma: 0.9,
            prob_range: (0.05, 0.95),
            theta_scale: 1.0,
            vartheta_scale: 2.0,
        }
    }
}

/// An owned instance: MDP with rewards in `[-1, 1]`, one-hot features, random
/// options, and a random explicit policy over options.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mdp: TabularMdp,
    pub params: OptionParams,
    pub fmap: FeatureMap,
    pub pi_over: PolicyOverOptionsTable,
}

impl Instance {
    pub fn problem(&self) -> Result<Problem<'_>> {
        Problem::new(&self.mdp, &self.params, &self.fmap, &self.pi_over)
    }
}

fn bounded_simplex(n: usize, (lo, hi): (f64, f64), rng: &mut Rng) -> Vec<f64> {
    assert!(lo * n as f64 <= 1.0 && hi * n as f64 >= 1.0, "empty probability range");
    loop {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            continue;
        }
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        if p.iter().all(|x| (lo..=hi).contains(x)) {
            return p;
        }
    }
}

pub fn random_instance(spec: &InstanceSpec, seed: u64) -> Instance {
    let mut rng = Rng::seed_from(seed);
    let (n_s, n_a, n_o) = (spec.num_states, spec.num_actions, spec.num_options);
    let mut mdp = TabularMdp::zeros(n_s, n_a, spec.gamma);
    for s in 0..n_s {
        for a in 0..n_a {
            let row = bounded_simplex(n_s, spec.prob_range, &mut rng);
            for (s2, p) in row.into_iter().enumerate() {
                let r = rng.uniform_range(-1.0, 1.0);
                mdp.set(s, a, s2, p, r);
            }
        }
    }
    mdp.initial = bounded_simplex(n_s, spec.prob_range, &mut rng);
    let mut params = OptionParams::new(n_o, n_s, n_a);
    params.theta.iter_mut().for_each(|x| *x = rng.uniform_range(-spec.theta_scale, spec.theta_scale));
    params.vartheta.iter_mut().for_each(|x| *x = rng.uniform_range(-spec.vartheta_scale, spec.vartheta_scale));
    let rows: Vec<Vec<f64>> = (0..n_s).map(|_| bounded_simplex(n_o, spec.prob_range, &mut rng)).collect();
    Instance { mdp, params, fmap: FeatureMap::one_hot(n_s), pi_over: PolicyOverOptionsTable::from_rows(&rows) }
}

/// Best expected undiscounted return over `horizon` steps from `d0` when an
/// option may be chosen afresh at every step and each option acts with its
/// own (fixed) intra-option policy. Equivalently, the best return of any
/// deterministic, time-dependent choice of option.
pub fn two_state_optimum(mdp: &TabularMdp, params: &OptionParams, fmap: &FeatureMap, horizon: usize) -> f64 {
    let n_s = mdp.num_states;
    let mut value = vec![0.0; n_s];
    for _ in 0..horizon {
        let next: Vec<f64> = (0..n_s)
            .map(|s| {
                if mdp.is_terminal(s) {
                    return 0.0;
                }
                (0..params.num_options)
                    .map(|o| {
                        let probs = params.intra_option_probs(fmap, o, s);
                        (0..mdp.num_actions)
                            .map(|a| {
                                probs[a]
                                    * (0..n_s).map(|s2| mdp.p(s, a, s2) * (mdp.r(s, a, s2) + value[s2])).sum::<f64>()
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        value = next;
    }
    mdp.initial.iter().zip(&value).map(|(d, v)| d * v).sum()
}
