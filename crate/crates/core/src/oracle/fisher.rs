//! Fisher information matrices and compatible least-squares coefficients.

use nalgebra::{DMatrix, DVector};

use super::{ExactSolution, Problem};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::options::{sigmoid, OptionParams, PolicyOverOptionsTable};

/// Gap below which `1 - β'` makes the likelihood ratio unusable.
const LIKELIHOOD_FLOOR: f64 = 1e-9;

/// Whether a metric uses the discounted weighting as is, or scaled to sum to 1
/// over non-terminal pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Normalized,
    Unnormalized,
}

fn add_outer(m: &mut DMatrix<f64>, w: f64, a: &[f64], b: &[f64]) {
    for (i, ai) in a.iter().enumerate() {
        if *ai == 0.0 {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            m[(i, j)] += w * ai * bj;
        }
    }
}

/// Minimum-norm solution of `X z ≈ y` through a thin SVD of `X`.
pub(crate) fn min_norm_least_squares(x: DMatrix<f64>, y: DVector<f64>) -> Result<Vec<f64>> {
    let svd = x.svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(vec![0.0; svd.v_t.as_ref().map_or(0, |v| v.ncols())]);
    }
    let z = svd
        .solve(&y, top * 1e-12)
        .map_err(|e| Error::SingularSystem(format!("least squares: {e}")))?;
    Ok(z.as_slice().to_vec())
}

impl Problem<'_> {
    fn non_terminal_mass(&self, weights: &[f64]) -> f64 {
        let n_o = self.params.num_options;
        weights.iter().enumerate().filter(|(x, _)| !self.mdp.is_terminal(x / n_o)).map(|(_, w)| w).sum()
    }

    /// `Σ μ(s,o) Σ_a π_o(a|s) ψ ψᵀ` with `ψ = ∂ ln π_o(a|s) / ∂θ`.
    pub fn exact_fim_theta(&self, sol: &ExactSolution, weighting: Weighting) -> DMatrix<f64> {
        let len = self.params.theta_len();
        let mut g = DMatrix::zeros(len, len);
        let mut probs = vec![0.0; self.params.num_actions];
        let mut score = vec![0.0; len];
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let mu = sol.mu[self.pair(s, o)];
                if mu == 0.0 {
                    continue;
                }
                self.params.intra_option_probs_into(self.fmap, o, s, &mut probs);
                for (a, pa) in probs.iter().enumerate() {
                    self.params.grad_log_intra_option_into(self.fmap, o, s, a, &mut score);
                    add_outer(&mut g, mu * pa, &score, &score);
                }
            }
        }
        match weighting {
            Weighting::Unnormalized => g,
            Weighting::Normalized => g / self.non_terminal_mass(&sol.mu),
        }
    }

    /// `Σ μ_shifted(s',o) (1 - π_𝒪(s',o)) / (β β') ∂β ∂βᵀ`, which equals
    /// `-Σ μ_shifted ∂ln β (∂ln β')ᵀ`.
    pub fn exact_fim_vartheta(&self, sol: &ExactSolution, weighting: Weighting) -> DMatrix<f64> {
        let len = self.params.vartheta_len();
        let mut g = DMatrix::zeros(len, len);
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let mu = sol.mu_shifted[self.pair(s, o)];
                let pi = self.pi_over.get(s, o);
                if mu == 0.0 || pi == 1.0 {
                    continue;
                }
                let beta = self.params.termination_prob(self.fmap, o, s);
                let cont = self.params.continuation_prob_at(self.fmap, o, s, pi);
                let db = self.params.grad_termination(self.fmap, o, s);
                add_outer(&mut g, mu * (1.0 - pi) / (beta * cont), &db, &db);
            }
        }
        match weighting {
            Weighting::Unnormalized => g,
            Weighting::Normalized => g / self.non_terminal_mass(&sol.mu_shifted),
        }
    }

    /// `-Σ μ_shifted ∂ln β (∂ln β')ᵀ`, the product form of the termination
    /// metric, without normalization.
    pub fn fim_vartheta_product_form(&self, sol: &ExactSolution) -> DMatrix<f64> {
        let len = self.params.vartheta_len();
        let mut g = DMatrix::zeros(len, len);
        let mut cont_score = vec![0.0; len];
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let mu = sol.mu_shifted[self.pair(s, o)];
                if mu == 0.0 {
                    continue;
                }
                let term_score = self.params.grad_log_termination(self.fmap, o, s);
                self.params.grad_log_continuation_at_into(self.fmap, o, s, self.pi_over.get(s, o), &mut cont_score);
                add_outer(&mut g, -mu, &term_score, &cont_score);
            }
        }
        g
    }

    /// Weighted least squares of `a_U` on the policy scores, weights `μ π`.
    pub fn least_squares_eta(&self, sol: &ExactSolution) -> Result<Vec<f64>> {
        let n_a = self.params.num_actions;
        let len = self.params.theta_len();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut probs = vec![0.0; n_a];
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let x = self.pair(s, o);
                if sol.mu[x] <= 0.0 {
                    continue;
                }
                self.params.intra_option_probs_into(self.fmap, o, s, &mut probs);
                for (a, pa) in probs.iter().enumerate() {
                    let root = (sol.mu[x] * pa).sqrt();
                    rows.extend(self.params.grad_log_intra_option(self.fmap, o, s, a).iter().map(|g| root * g));
                    targets.push(root * sol.a_u[x * n_a + a]);
                }
            }
        }
        let x = DMatrix::from_row_slice(targets.len(), len, &rows);
        min_norm_least_squares(x, DVector::from_vec(targets))
    }

    /// Weighted least squares of `a'_𝒪` on the continuation scores, weights
    /// `μ_shifted L`.
    pub fn least_squares_phi(&self, sol: &ExactSolution) -> Result<Vec<f64>> {
        let len = self.params.vartheta_len();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for s in (0..self.mdp.num_states).filter(|s| !self.mdp.is_terminal(*s)) {
            for o in 0..self.params.num_options {
                let x = self.pair(s, o);
                let mu = sol.mu_shifted[x];
                if mu <= 0.0 {
                    continue;
                }
                let pi = self.pi_over.get(s, o);
                let cont = self.params.continuation_prob_at(self.fmap, o, s, pi);
                let gap = 1.0 - cont;
                if gap < LIKELIHOOD_FLOOR {
                    return Err(Error::DegenerateLikelihood { state: s, option: o, gap });
                }
                let root = (mu * cont / gap).sqrt();
                let mut score = vec![0.0; len];
                self.params.grad_log_continuation_at_into(self.fmap, o, s, pi, &mut score);
                rows.extend(score.iter().map(|g| root * g));
                targets.push(root * sol.a_omega_continued[x]);
            }
        }
        let x = DMatrix::from_row_slice(targets.len(), len, &rows);
        min_norm_least_squares(x, DVector::from_vec(targets))
    }
}

/// Both sides of `E[ψ ψᵀ] = -E[∂² ln p]` for the one-step distributions at a
/// pair: the action choice of option `o` at `s`, and the option decision on
/// arriving in `s` with `o`. Terminations use the unclamped sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateForm {
    pub theta_outer: DMatrix<f64>,
    pub theta_neg_hessian: DMatrix<f64>,
    pub vartheta_outer: DMatrix<f64>,
    pub vartheta_neg_hessian: DMatrix<f64>,
}

pub fn categorical_fim_alternate_forms(
    params: &OptionParams,
    fmap: &FeatureMap,
    pi_over: &PolicyOverOptionsTable,
    s: usize,
    o: usize,
) -> AlternateForm {
    let x = fmap.evaluate(s);
    let (lt, lv) = (params.theta_len(), params.vartheta_len());

    let probs = params.intra_option_probs(fmap, o, s);
    let mut theta_outer = DMatrix::zeros(lt, lt);
    for (a, pa) in probs.iter().enumerate() {
        let score = params.grad_log_intra_option(fmap, o, s, a);
        add_outer(&mut theta_outer, *pa, &score, &score);
    }
    // ∂² ln π_o(a|s) does not depend on a: -(x xᵀ) ⊗ (diag π - π πᵀ).
    let mut theta_neg_hessian = DMatrix::zeros(lt, lt);
    for (f, xf) in x.iter().enumerate() {
        for (g, xg) in x.iter().enumerate() {
            for (b, pb) in probs.iter().enumerate() {
                for (c, pc) in probs.iter().enumerate() {
                    let cov = if b == c { pb - pb * pc } else { -pb * pc };
                    theta_neg_hessian[(params.theta_index(o, f, b), params.theta_index(o, g, c))] = xf * xg * cov;
                }
            }
        }
    }

    let sig = sigmoid(params.termination_logit(fmap, o, s));
    let pi = pi_over.get(s, o);
    let d1 = sig * (1.0 - sig);
    let cont = 1.0 - sig * (1.0 - pi);
    let cont_z = -(1.0 - pi) * d1;
    // Second derivatives in the logit z, lifted through x xᵀ.
    let cont_zz = -(1.0 - pi) * d1 * (1.0 - 2.0 * sig);
    let lift = |scale: f64| {
        let mut m = DMatrix::zeros(lv, lv);
        for (f, xf) in x.iter().enumerate() {
            for (g, xg) in x.iter().enumerate() {
                m[(params.vartheta_index(o, f), params.vartheta_index(o, g))] = scale * xf * xg;
            }
        }
        m
    };
    // Continue with probability β'; switch to o' ≠ o with probability β π_𝒪(o').
    let p_switch = sig * (1.0 - pi);
    let mut vartheta_outer = DMatrix::zeros(lv, lv);
    let mut cont_score = vec![0.0; lv];
    params.grad_log_continuation_at_into(fmap, o, s, pi, &mut cont_score);
    add_outer(&mut vartheta_outer, cont, &cont_score, &cont_score);
    let term_score = params.grad_log_termination(fmap, o, s);
    add_outer(&mut vartheta_outer, p_switch, &term_score, &term_score);
    let hess_cont = cont_zz / cont - (cont_z / cont).powi(2);
    let hess_switch = -d1;
    let vartheta_neg_hessian = lift(-(cont * hess_cont + p_switch * hess_switch));
    AlternateForm { theta_outer, theta_neg_hessian, vartheta_outer, vartheta_neg_hessian }
}
