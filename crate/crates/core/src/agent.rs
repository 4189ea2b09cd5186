//! The incremental natural option-critic actor, the vanilla option-critic
//! actor, and the episode loop that drives either with an intra-option
//! Q-learning critic.
//!
//! Every per-step update works on vectors of the parameter length; no
//! matrix over parameters is ever formed.

use crate::critic::{CriticTables, DeltaOmegaForm};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::options::{select_option, EpsilonGreedy, OptionParams, OptionPolicy};
use crate::rng::Rng;

/// Norm below which a normalized actor step is skipped.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentMode {
    /// Natural option-critic with the termination-coefficient update
    /// `φ += α β δ e + α h (hᵀ φ)`, `h = ∂ ln β`.
    #[default]
    Inoc,
    /// Natural option-critic with `φ += α β δ e + α h (h'ᵀ φ)`, where
    /// `h' = ∂ ln β'` is the continuation score; this is the descent
    /// direction of the weighted squared error that `φ` fits.
    InocDerived,
    /// Option-critic with plain stochastic gradients.
    VanillaOc,
}

impl AgentMode {
    pub fn name(self) -> &'static str {
        match self {
            AgentMode::Inoc => "inoc",
            AgentMode::InocDerived => "inoc-derived",
            AgentMode::VanillaOc => "oc",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.to_ascii_lowercase().as_str() {
            "inoc" => Ok(AgentMode::Inoc),
            "inoc-derived" | "inoc_derived" => Ok(AgentMode::InocDerived),
            "oc" | "vanilla" | "vanilla-oc" | "vanillaoc" => Ok(AgentMode::VanillaOc),
            other => Err(Error::Config(format!("unknown agent mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub alpha_theta: f64,
    pub alpha_vartheta: f64,
    pub alpha_eta: f64,
    pub alpha_phi: f64,
    pub lambda: f64,
    pub delta_omega_form: DeltaOmegaForm,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha_theta: 0.0025,
            alpha_vartheta: 0.0025,
            alpha_eta: 0.5,
            alpha_phi: 0.75,
            lambda: 0.5,
            delta_omega_form: DeltaOmegaForm::Text,
        }
    }
}

/// Compatible-approximation coefficients `η`, `φ` and their traces.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradientState {
    pub eta: Vec<f64>,
    pub phi: Vec<f64>,
    pub trace_eta: Vec<f64>,
    pub trace_phi: Vec<f64>,
    pub hyper: Hyperparams,
    score_theta: Vec<f64>,
    score_vartheta: Vec<f64>,
    score_continuation: Vec<f64>,
}

impl NaturalGradientState {
    pub fn new(params: &OptionParams, hyper: Hyperparams) -> Self {
        let (lt, lv) = (params.theta_len(), params.vartheta_len());
        NaturalGradientState {
            eta: vec![0.0; lt],
            phi: vec![0.0; lv],
            trace_eta: vec![0.0; lt],
            trace_phi: vec![0.0; lv],
            hyper,
            score_theta: vec![0.0; lt],
            score_vartheta: vec![0.0; lv],
            score_continuation: vec![0.0; lv],
        }
    }

    /// Zeroes `η`, `φ` and both traces. Called when an option terminates and
    /// at the end of an episode.
    pub fn reset(&mut self) {
        self.eta.fill(0.0);
        self.phi.fill(0.0);
        self.trace_eta.fill(0.0);
        self.trace_phi.fill(0.0);
    }
}

/// One step of experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub o: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub terminal: bool,
    /// The option active at the previous step of this episode.
    pub o_prev: Option<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `target += scale * direction / ‖direction‖`, skipped for a tiny direction.
fn normalized_step(target: &mut [f64], direction: &[f64], scale: f64) {
    let n = norm(direction);
    if n < MIN_DIRECTION_NORM {
        return;
    }
    target.iter_mut().zip(direction).for_each(|(t, d)| *t += scale * d / n);
}

/// One natural option-critic update. `mode` selects the `φ` rule; the
/// vanilla mode is not accepted here.
#[allow(clippy::too_many_arguments)]
pub fn inoc_step(
    mode: AgentMode,
    state: &mut NaturalGradientState,
    critic: &CriticTables,
    params: &mut OptionParams,
    fmap: &FeatureMap,
    pi_over: &impl OptionPolicy,
    gamma: f64,
    tr: &Transition,
) {
    debug_assert!(mode != AgentMode::VanillaOc);
    let h = state.hyper;

    params.grad_log_intra_option_into(fmap, tr.o, tr.s, tr.a, &mut state.score_theta);
    let g = &state.score_theta;
    state.trace_eta.iter_mut().zip(g).for_each(|(e, x)| *e = h.lambda * *e + x);
    let delta_u = critic.td_error_u(params, fmap, pi_over, gamma, tr.s, tr.o, tr.r, tr.s_next, tr.terminal);
    let g_eta = dot(g, &state.eta);
    for ((eta, e), x) in state.eta.iter_mut().zip(&state.trace_eta).zip(g) {
        *eta += h.alpha_eta * delta_u * e - h.alpha_eta * x * g_eta;
    }
    normalized_step(&mut params.theta, &state.eta, h.alpha_theta);

    if tr.o_prev != Some(tr.o) {
        return;
    }
    params.grad_log_termination_into(fmap, tr.o, tr.s, &mut state.score_vartheta);
    let hs = &state.score_vartheta;
    state.trace_phi.iter_mut().zip(hs).for_each(|(e, x)| *e = h.lambda * *e + x);
    let delta_omega = critic.td_error_omega(pi_over, gamma, h.delta_omega_form, tr.s, tr.r, tr.s_next, tr.terminal);
    let beta = params.termination_prob(fmap, tr.o, tr.s);
    let projection = match mode {
        AgentMode::InocDerived => {
            let pi = pi_over.prob(critic.row(tr.s), tr.s, tr.o);
            params.grad_log_continuation_at_into(fmap, tr.o, tr.s, pi, &mut state.score_continuation);
            dot(&state.score_continuation, &state.phi)
        }
        _ => dot(hs, &state.phi),
    };
    for ((phi, e), x) in state.phi.iter_mut().zip(&state.trace_phi).zip(hs) {
        *phi += h.alpha_phi * beta * delta_omega * e + h.alpha_phi * x * projection;
    }
    normalized_step(&mut params.vartheta, &state.phi, -h.alpha_vartheta);
}

/// One option-critic update: `θ += α δ^U ∂ln π`, and
/// `ϑ -= α ∂β_o(s') (q(s',o) - v(s'))` when `s'` is not terminal.
#[allow(clippy::too_many_arguments)]
pub fn vanilla_oc_step(
    hyper: &Hyperparams,
    critic: &CriticTables,
    params: &mut OptionParams,
    fmap: &FeatureMap,
    pi_over: &impl OptionPolicy,
    gamma: f64,
    tr: &Transition,
    scratch: &mut NaturalGradientState,
) {
    let delta_u = critic.td_error_u(params, fmap, pi_over, gamma, tr.s, tr.o, tr.r, tr.s_next, tr.terminal);
    params.grad_log_intra_option_into(fmap, tr.o, tr.s, tr.a, &mut scratch.score_theta);
    for (t, g) in params.theta.iter_mut().zip(&scratch.score_theta) {
        *t += hyper.alpha_theta * delta_u * g;
    }
    if tr.terminal {
        return;
    }
    let advantage = critic.q(tr.s_next, tr.o) - critic.v_of(pi_over, tr.s_next);
    if advantage == 0.0 {
        return;
    }
    let sig = params.termination_sigmoid(fmap, tr.o, tr.s_next);
    let scale = hyper.alpha_vartheta * advantage * sig * (1.0 - sig);
    for (f, x) in fmap.evaluate(tr.s_next).iter().enumerate() {
        let i = params.vartheta_index(tr.o, f);
        params.vartheta[i] -= scale * x;
    }
}

/// Clears the natural-gradient state after option termination on arrival
/// at `s` and draws the next option ε-greedily.
pub fn on_option_termination(
    state: &mut NaturalGradientState,
    critic: &CriticTables,
    epsilon: f64,
    s: usize,
    rng: &mut Rng,
) -> usize {
    state.reset();
    select_option(critic.row(s), epsilon, rng)
}

/// Outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    pub steps: usize,
    /// Fraction of steps whose option equals the previous step's option.
    pub termination_update_fraction: f64,
    /// The episode hit the step cap before reaching a terminal state.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Limits {
    /// Step cap, combined with the MDP's own cap (the smaller wins).
    pub max_steps: Option<usize>,
}

/// Everything one learning agent owns.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub mode: AgentMode,
    pub params: OptionParams,
    pub critic: CriticTables,
    pub natural: NaturalGradientState,
}

impl Agent {
    pub fn new(mode: AgentMode, params: OptionParams, critic: CriticTables, hyper: Hyperparams) -> Self {
        let natural = NaturalGradientState::new(&params, hyper);
        Agent { mode, params, critic, natural }
    }
}

/// Runs one episode, learning online.
pub fn run_episode(agent: &mut Agent, mdp: &TabularMdp, fmap: &FeatureMap, rng: &mut Rng, limits: Limits) -> EpisodeRecord {
    let cap = match (limits.max_steps, mdp.max_episode_steps) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b).unwrap_or(usize::MAX),
    };
    let mut record = EpisodeRecord {
        discounted_return: 0.0,
        undiscounted_return: 0.0,
        steps: 0,
        termination_update_fraction: 0.0,
        truncated: false,
    };
    let mut s = mdp.sample_initial(rng);
    if mdp.is_terminal(s) {
        return record;
    }
    let Agent { mode, params, critic, natural } = agent;
    natural.reset();
    let pi_over = EpsilonGreedy { epsilon: params.epsilon };
    let gamma = mdp.gamma;
    let mut o = select_option(critic.row(s), params.epsilon, rng);
    let mut o_prev = None;
    let mut discount = 1.0;
    let mut continued = 0usize;
    let mut probs = vec![0.0; params.num_actions];
    loop {
        if record.steps >= cap {
            record.truncated = true;
            break;
        }
        params.intra_option_probs_into(fmap, o, s, &mut probs);
        let a = rng.categorical(&probs);
        let (s_next, r) = mdp.sample_transition(s, a, rng).expect("acting state is never terminal");
        let terminal = mdp.is_terminal(s_next);
        let tr = Transition { s, o, a, r, s_next, terminal, o_prev };
        match *mode {
            AgentMode::Inoc | AgentMode::InocDerived => {
                inoc_step(*mode, natural, critic, params, fmap, &pi_over, gamma, &tr);
            }
            AgentMode::VanillaOc => {
                let hyper = natural.hyper;
                vanilla_oc_step(&hyper, critic, params, fmap, &pi_over, gamma, &tr, natural);
            }
        }
        critic.q_learning_update(params, fmap, &pi_over, gamma, s, o, r, s_next, terminal);
        record.discounted_return += discount * r;
        record.undiscounted_return += r;
        discount *= gamma;
        record.steps += 1;
        if o_prev == Some(o) {
            continued += 1;
        }
        if terminal {
            break;
        }
        o_prev = Some(o);
        if rng.bernoulli(params.termination_prob(fmap, o, s_next)) {
            o = on_option_termination(natural, critic, params.epsilon, s_next, rng);
        }
        s = s_next;
    }
    natural.reset();
    if record.steps > 0 {
        record.termination_update_fraction = continued as f64 / record.steps as f64;
    }
    record
}
