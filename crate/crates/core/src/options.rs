//! Parameterized options: linear-softmax intra-option policies, linear-sigmoid
//! terminations, and the ε-greedy policy over options.
//!
//! Parameters are stacked per option. `theta` is laid out `(o, f, a)` and
//! `vartheta` is laid out `(o, f)`, so every gradient with respect to one
//! option's policy or termination is zero outside that option's block.

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::rng::Rng;

/// Gap below which the continuation likelihood ratio is treated as undefined.
pub const LIKELIHOOD_GAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OptionParams {
    pub num_options: usize,
    pub feature_dim: usize,
    pub num_actions: usize,
    /// Intra-option policy weights, `(o, f, a)` row-major.
    pub theta: Vec<f64>,
    /// Termination weights, `(o, f)` row-major.
    pub vartheta: Vec<f64>,
    pub epsilon: f64,
    /// Terminations are clamped to `[beta_clamp, 1 - beta_clamp]`.
    pub beta_clamp: f64,
}

impl OptionParams {
    /// All-zero weights: uniform intra-option policies, β = 0.5 everywhere.
    pub fn new(num_options: usize, feature_dim: usize, num_actions: usize) -> Self {
        assert!(num_options > 0 && feature_dim > 0 && num_actions > 0);
        OptionParams {
            num_options,
            feature_dim,
            num_actions,
            theta: vec![0.0; num_options * feature_dim * num_actions],
            vartheta: vec![0.0; num_options * feature_dim],
            epsilon: 0.05,
            beta_clamp: 1e-6,
        }
    }

    pub fn theta_len(&self) -> usize {
        self.theta.len()
    }

    pub fn vartheta_len(&self) -> usize {
        self.vartheta.len()
    }

    #[inline]
    pub fn theta_index(&self, o: usize, f: usize, a: usize) -> usize {
        (o * self.feature_dim + f) * self.num_actions + a
    }

    #[inline]
    pub fn vartheta_index(&self, o: usize, f: usize) -> usize {
        o * self.feature_dim + f
    }

    /// Entries finite, clamp in `(0, 0.5)`, ε in `[0, 1]`.
    pub fn check(&self) -> Result<()> {
        if self.theta.len() != self.num_options * self.feature_dim * self.num_actions
            || self.vartheta.len() != self.num_options * self.feature_dim
        {
            return Err(Error::Config("parameter vector lengths do not match sizes".into()));
        }
        if !self.theta.iter().chain(&self.vartheta).all(|x| x.is_finite()) {
            return Err(Error::Config("non-finite option parameter".into()));
        }
        if !(self.beta_clamp > 0.0 && self.beta_clamp < 0.5) {
            return Err(Error::Config(format!("beta_clamp {} not in (0, 0.5)", self.beta_clamp)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        Ok(())
    }

    /// Softmax probabilities of `π_o(s, ·)` written into `out`.
    pub fn intra_option_probs_into(&self, fmap: &FeatureMap, o: usize, s: usize, out: &mut [f64]) {
        debug_assert!(o < self.num_options);
        let x = fmap.evaluate(s);
        let na = self.num_actions;
        for (a, slot) in out.iter_mut().enumerate().take(na) {
            *slot = x
                .iter()
                .enumerate()
                .map(|(f, xf)| xf * self.theta[self.theta_index(o, f, a)])
                .sum();
        }
        let max = out[..na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut out[..na] {
            *l = (*l - max).exp();
            total += *l;
        }
        for p in &mut out[..na] {
            *p /= total;
        }
    }

    pub fn intra_option_probs(&self, fmap: &FeatureMap, o: usize, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.intra_option_probs_into(fmap, o, s, &mut out);
        out
    }

    /// `∂ ln π_o(s, a) / ∂θ` over the full stacked θ, written into `out`.
    pub fn grad_log_intra_option_into(
        &self,
        fmap: &FeatureMap,
        o: usize,
        s: usize,
        a: usize,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.theta.len());
        let mut probs = vec![0.0; self.num_actions];
        self.intra_option_probs_into(fmap, o, s, &mut probs);
        out.fill(0.0);
        let x = fmap.evaluate(s);
        for (f, &xf) in x.iter().enumerate() {
            if xf == 0.0 {
                continue;
            }
            for (b, &pb) in probs.iter().enumerate() {
                let indicator = if b == a { 1.0 } else { 0.0 };
                out[self.theta_index(o, f, b)] = xf * (indicator - pb);
            }
        }
    }

    pub fn grad_log_intra_option(&self, fmap: &FeatureMap, o: usize, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.theta.len()];
        self.grad_log_intra_option_into(fmap, o, s, a, &mut out);
        out
    }

    pub fn termination_logit(&self, fmap: &FeatureMap, o: usize, s: usize) -> f64 {
        debug_assert!(o < self.num_options);
        fmap.evaluate(s)
            .iter()
            .enumerate()
            .map(|(f, xf)| xf * self.vartheta[self.vartheta_index(o, f)])
            .sum()
    }

    /// The sigmoid before clamping; gradients are taken through this.
    pub fn termination_sigmoid(&self, fmap: &FeatureMap, o: usize, s: usize) -> f64 {
        sigmoid(self.termination_logit(fmap, o, s))
    }

    /// `β_o(s)`, clamped to `[beta_clamp, 1 - beta_clamp]`.
    pub fn termination_prob(&self, fmap: &FeatureMap, o: usize, s: usize) -> f64 {
        self.termination_sigmoid(fmap, o, s).clamp(self.beta_clamp, 1.0 - self.beta_clamp)
    }

    fn termination_grad_scaled(&self, fmap: &FeatureMap, o: usize, s: usize, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.vartheta.len());
        out.fill(0.0);
        for (f, &xf) in fmap.evaluate(s).iter().enumerate() {
            out[self.vartheta_index(o, f)] = scale * xf;
        }
    }

    /// `∂ ln β_o(s) / ∂ϑ = (1 - σ) x(s)`, written into `out`.
    pub fn grad_log_termination_into(&self, fmap: &FeatureMap, o: usize, s: usize, out: &mut [f64]) {
        let sig = self.termination_sigmoid(fmap, o, s);
        self.termination_grad_scaled(fmap, o, s, 1.0 - sig, out);
    }

    pub fn grad_log_termination(&self, fmap: &FeatureMap, o: usize, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.vartheta.len()];
        self.grad_log_termination_into(fmap, o, s, &mut out);
        out
    }

    /// `∂ β_o(s) / ∂ϑ = σ (1 - σ) x(s)`.
    pub fn grad_termination(&self, fmap: &FeatureMap, o: usize, s: usize) -> Vec<f64> {
        let sig = self.termination_sigmoid(fmap, o, s);
        let mut out = vec![0.0; self.vartheta.len()];
        self.termination_grad_scaled(fmap, o, s, sig * (1.0 - sig), &mut out);
        out
    }

    /// `β'_o(s) = 1 - β + β π_𝒪(s, o)` for a given `π_𝒪(s, o)`.
    pub fn continuation_prob_at(&self, fmap: &FeatureMap, o: usize, s: usize, pi_so: f64) -> f64 {
        let beta = self.termination_prob(fmap, o, s);
        1.0 - beta + beta * pi_so
    }

    pub fn continuation_prob(
        &self,
        fmap: &FeatureMap,
        pi_over: &PolicyOverOptionsTable,
        o: usize,
        s: usize,
    ) -> f64 {
        self.continuation_prob_at(fmap, o, s, pi_over.get(s, o))
    }

    /// `∂ ln β'_o(s) / ∂ϑ = (π_𝒪 - 1) ∂β / β'`, written into `out`.
    pub fn grad_log_continuation_at_into(
        &self,
        fmap: &FeatureMap,
        o: usize,
        s: usize,
        pi_so: f64,
        out: &mut [f64],
    ) {
        let sig = self.termination_sigmoid(fmap, o, s);
        let cont = self.continuation_prob_at(fmap, o, s, pi_so);
        self.termination_grad_scaled(fmap, o, s, (pi_so - 1.0) * sig * (1.0 - sig) / cont, out);
    }

    pub fn grad_log_continuation(
        &self,
        fmap: &FeatureMap,
        pi_over: &PolicyOverOptionsTable,
        o: usize,
        s: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.vartheta.len()];
        self.grad_log_continuation_at_into(fmap, o, s, pi_over.get(s, o), &mut out);
        out
    }

    /// `L = β' / (1 - β')`, the odds of the option continuing through `s`.
    pub fn likelihood_ratio(
        &self,
        fmap: &FeatureMap,
        pi_over: &PolicyOverOptionsTable,
        o: usize,
        s: usize,
    ) -> Result<f64> {
        let cont = self.continuation_prob(fmap, pi_over, o, s);
        let gap = 1.0 - cont;
        if gap < LIKELIHOOD_GAP {
            return Err(Error::DegenerateLikelihood { state: s, option: o, gap });
        }
        Ok(cont / gap)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`].
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Anything that assigns `π_𝒪(s, o)`. The critic's current option-value row
/// at `s` is passed in so that greedy policies need not own the critic.
pub trait OptionPolicy {
    fn prob(&self, q_row: &[f64], s: usize, o: usize) -> f64;
}

/// An explicit `π_𝒪` table, frozen for oracle computations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOverOptionsTable {
    pub num_states: usize,
    pub num_options: usize,
    /// `(s, o)` row-major.
    pub probs: Vec<f64>,
}

impl PolicyOverOptionsTable {
    pub fn uniform(num_states: usize, num_options: usize) -> Self {
        PolicyOverOptionsTable {
            num_states,
            num_options,
            probs: vec![1.0 / num_options as f64; num_states * num_options],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let num_options = rows.first().map_or(0, Vec::len);
        PolicyOverOptionsTable {
            num_states: rows.len(),
            num_options,
            probs: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, s: usize, o: usize) -> f64 {
        self.probs[s * self.num_options + o]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_options..(s + 1) * self.num_options]
    }
}

impl OptionPolicy for PolicyOverOptionsTable {
    fn prob(&self, _q_row: &[f64], s: usize, o: usize) -> f64 {
        self.get(s, o)
    }
}

/// ε-greedy over the critic's option values, ties to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonGreedy {
    pub epsilon: f64,
}

impl OptionPolicy for EpsilonGreedy {
    fn prob(&self, q_row: &[f64], _s: usize, o: usize) -> f64 {
        let n = q_row.len() as f64;
        let greedy = if argmax(q_row) == o { 1.0 } else { 0.0 };
        self.epsilon / n + (1.0 - self.epsilon) * greedy
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an option ε-greedily from one state's option values.
pub fn select_option(q_row: &[f64], epsilon: f64, rng: &mut Rng) -> usize {
    if rng.uniform() < epsilon {
        rng.below(q_row.len())
    } else {
        argmax(q_row)
    }
}

/// Freezes the ε-greedy policy over a `(s, o)` option-value table.
pub fn explicit_policy_over_options(
    q_omega: &[f64],
    num_options: usize,
    epsilon: f64,
) -> PolicyOverOptionsTable {
    let num_states = q_omega.len() / num_options;
    let rule = EpsilonGreedy { epsilon };
    let mut probs = Vec::with_capacity(q_omega.len());
    for s in 0..num_states {
        let row = &q_omega[s * num_options..(s + 1) * num_options];
        probs.extend((0..num_options).map(|o| rule.prob(row, s, o)));
    }
    PolicyOverOptionsTable { num_states, num_options, probs }
}
