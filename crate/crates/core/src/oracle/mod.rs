//! Exact computations on small MDPs with frozen options and a frozen policy
//! over options.
//!
//! Everything is built on the chain of acting pairs `(S_t, O_t)`: the option
//! that picks the action at `S_t`. One step of that chain is the state move
//! `M(s, o → s') = Σ_a π_o(a|s) P(s'|s, a)` followed by the option decision
//! on arrival `C(s', o → o') = (1 - β_o(s')) 1[o' = o] + β_o(s') π_𝒪(s', o')`.
//!
//! Terminal states end the episode. Their pairs are absorbing in the stored
//! kernel, carry zero value, and are left out of every weighted sum.

mod exact;
mod fisher;
mod instances;
mod report;
mod sampling;

pub use exact::{AugmentedChain, ExactSolution, StartDist};
pub use fisher::{categorical_fim_alternate_forms, AlternateForm, Weighting};
pub use instances::{random_instance, two_state_optimum, Instance, InstanceSpec};
pub use report::{run_battery, BatteryConfig, CheckResult, Report};
pub use sampling::{lemma_checks, mc_fim_estimate, CellCheck, LemmaConfig, LemmaReport};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::options::{OptionParams, PolicyOverOptionsTable};

/// Largest number of state-option pairs the dense solvers accept.
pub const MAX_PAIRS: usize = 500;

/// Which parameter block a gradient or metric refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    /// Intra-option policy weights θ.
    Theta,
    /// Termination weights ϑ.
    Vartheta,
}

/// An MDP with frozen options and policy over options.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub mdp: &'a TabularMdp,
    pub params: &'a OptionParams,
    pub fmap: &'a FeatureMap,
    pub pi_over: &'a PolicyOverOptionsTable,
    pub gamma: f64,
}

impl<'a> Problem<'a> {
    /// Checks sizes and the pair cap. The discount is the MDP's.
    pub fn new(
        mdp: &'a TabularMdp,
        params: &'a OptionParams,
        fmap: &'a FeatureMap,
        pi_over: &'a PolicyOverOptionsTable,
    ) -> Result<Self> {
        let pairs = mdp.num_states * params.num_options;
        if pairs > MAX_PAIRS {
            return Err(Error::InstanceTooLarge { pairs, cap: MAX_PAIRS });
        }
        let shape = |what: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Mismatch { message: format!("{what}: expected {expected}, got {actual}") })
            }
        };
        shape("feature rows", mdp.num_states, fmap.num_states())?;
        shape("feature dimension", params.feature_dim, fmap.dimension())?;
        shape("actions", mdp.num_actions, params.num_actions)?;
        shape("policy-over-options states", mdp.num_states, pi_over.num_states)?;
        shape("policy-over-options options", params.num_options, pi_over.num_options)?;
        Ok(Problem { mdp, params, fmap, pi_over, gamma: mdp.gamma })
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Problem { gamma, ..self }
    }

    pub fn num_pairs(&self) -> usize {
        self.mdp.num_states * self.params.num_options
    }

    #[inline]
    pub fn pair(&self, s: usize, o: usize) -> usize {
        s * self.params.num_options + o
    }

    /// The default start: `d0(s) π_𝒪(s, o)` on acting pairs.
    pub fn default_start(&self) -> StartDist {
        let n_o = self.params.num_options;
        let mut w = vec![0.0; self.num_pairs()];
        for s in 0..self.mdp.num_states {
            for o in 0..n_o {
                w[s * n_o + o] = self.mdp.initial[s] * self.pi_over.get(s, o);
            }
        }
        StartDist::Acting(w)
    }

    /// Scalar objective for a start distribution, recomputed from scratch.
    pub fn j_value(&self, start: &StartDist) -> Result<f64> {
        Ok(self.exact_values(start)?.j_value)
    }

    /// Central differences of the objective in θ or ϑ.
    pub fn finite_diff_gradient(&self, wrt: Manifold, start: &StartDist, step: f64) -> Result<Vec<f64>> {
        assert!(step > 0.0, "finite-difference step must be positive");
        let mut perturbed = self.params.clone();
        let len = match wrt {
            Manifold::Theta => perturbed.theta.len(),
            Manifold::Vartheta => perturbed.vartheta.len(),
        };
        let mut grad = Vec::with_capacity(len);
        for i in 0..len {
            let mut eval = |delta: f64| -> Result<f64> {
                let slot = match wrt {
                    Manifold::Theta => &mut perturbed.theta[i],
                    Manifold::Vartheta => &mut perturbed.vartheta[i],
                };
                let original = *slot;
                *slot = original + delta;
                let value = Problem { params: &perturbed, ..*self }.j_value(start);
                let slot = match wrt {
                    Manifold::Theta => &mut perturbed.theta[i],
                    Manifold::Vartheta => &mut perturbed.vartheta[i],
                };
                *slot = original;
                value
            };
            let up = eval(step)?;
            let down = eval(-step)?;
            grad.push((up - down) / (2.0 * step));
        }
        Ok(grad)
    }
}

/// `‖a - b‖₂ / ‖b‖₂`, or `‖a‖₂` when `b` is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale == 0.0 { diff } else { diff / scale }
}
