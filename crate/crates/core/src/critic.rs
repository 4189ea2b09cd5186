//! Tabular critic: intra-option Q-learning of the option values, the derived
//! state and arrival values, and the two TD errors used by the actor.

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::options::{OptionParams, OptionPolicy};

/// How `v(s)` is read off the option-value row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueStyle {
    /// `Σ_o π_𝒪(s, o) q(s, o)`.
    #[default]
    EpsilonGreedyExpectation,
    /// `max_o q(s, o)`.
    Max,
}

/// Which termination TD error to form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaOmegaForm {
    /// `r + γ v(s') - v(s)`.
    #[default]
    Text,
    /// `r + γ v(s') - γ v(s)`.
    Line12,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticTables {
    pub num_states: usize,
    pub num_options: usize,
    /// `(s, o)` row-major.
    pub q_omega: Vec<f64>,
    pub learning_rate: f64,
    pub value_style: ValueStyle,
}

impl CriticTables {
    pub fn zeros(num_states: usize, num_options: usize, learning_rate: f64) -> Self {
        CriticTables {
            num_states,
            num_options,
            q_omega: vec![0.0; num_states * num_options],
            learning_rate,
            value_style: ValueStyle::default(),
        }
    }

    #[inline]
    pub fn q(&self, s: usize, o: usize) -> f64 {
        self.q_omega[s * self.num_options + o]
    }

    pub fn set_q(&mut self, s: usize, o: usize, value: f64) {
        self.q_omega[s * self.num_options + o] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q_omega[s * self.num_options..(s + 1) * self.num_options]
    }

    /// Entries finite, learning rate positive, terminal rows zero.
    pub fn check(&self, terminal: &[bool]) -> Result<()> {
        if self.q_omega.len() != self.num_states * self.num_options {
            return Err(Error::Config("critic table size does not match".into()));
        }
        if !self.q_omega.iter().all(|q| q.is_finite()) {
            return Err(Error::Config("non-finite option value".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("critic learning rate {} not positive", self.learning_rate)));
        }
        for (s, _) in terminal.iter().enumerate().filter(|(_, t)| **t) {
            if self.row(s).iter().any(|q| *q != 0.0) {
                return Err(Error::Config(format!("terminal state {s} has non-zero option values")));
            }
        }
        Ok(())
    }

    pub fn v_of(&self, pi_over: &impl OptionPolicy, s: usize) -> f64 {
        let row = self.row(s);
        match self.value_style {
            ValueStyle::EpsilonGreedyExpectation => {
                row.iter().enumerate().map(|(o, q)| pi_over.prob(row, s, o) * q).sum()
            }
            ValueStyle::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `u(o, s') = (1 - β_o(s')) q(s', o) + β_o(s') v(s')`.
    pub fn u_of(
        &self,
        params: &OptionParams,
        fmap: &FeatureMap,
        pi_over: &impl OptionPolicy,
        o: usize,
        s_next: usize,
    ) -> f64 {
        let beta = params.termination_prob(fmap, o, s_next);
        (1.0 - beta) * self.q(s_next, o) + beta * self.v_of(pi_over, s_next)
    }

    /// `δ^U = r + γ u(o, s') - q(s, o)`, with no bootstrap from a terminal `s'`.
    #[allow(clippy::too_many_arguments)]
    pub fn td_error_u(
        &self,
        params: &OptionParams,
        fmap: &FeatureMap,
        pi_over: &impl OptionPolicy,
        gamma: f64,
        s: usize,
        o: usize,
        r: f64,
        s_next: usize,
        terminal: bool,
    ) -> f64 {
        let bootstrap = if terminal { 0.0 } else { self.u_of(params, fmap, pi_over, o, s_next) };
        r + gamma * bootstrap - self.q(s, o)
    }

    /// The termination TD error in the chosen form.
    #[allow(clippy::too_many_arguments)]
    pub fn td_error_omega(
        &self,
        pi_over: &impl OptionPolicy,
        gamma: f64,
        form: DeltaOmegaForm,
        s: usize,
        r: f64,
        s_next: usize,
        terminal: bool,
    ) -> f64 {
        let bootstrap = if terminal { 0.0 } else { self.v_of(pi_over, s_next) };
        let current = match form {
            DeltaOmegaForm::Text => self.v_of(pi_over, s),
            DeltaOmegaForm::Line12 => gamma * self.v_of(pi_over, s),
        };
        r + gamma * bootstrap - current
    }

    /// One intra-option Q-learning step on the entry `(s, o)`.
    #[allow(clippy::too_many_arguments)]
    pub fn q_learning_update(
        &mut self,
        params: &OptionParams,
        fmap: &FeatureMap,
        pi_over: &impl OptionPolicy,
        gamma: f64,
        s: usize,
        o: usize,
        r: f64,
        s_next: usize,
        terminal: bool,
    ) {
        let delta = self.td_error_u(params, fmap, pi_over, gamma, s, o, r, s_next, terminal);
        self.q_omega[s * self.num_options + o] += self.learning_rate * delta;
    }
}
