//! Finite tabular MDPs: representation, validation, sampling, and the text
//! description format.
//!
//! # Description format
//!
//! Line based, `#` starts a comment, blank lines are ignored. Keywords:
//!
//! ```text
//! states 2                 # number of states (required, first)
//! actions 2                # number of actions (required)
//! gamma 0.9                # discount in [0, 1] (required)
//! horizon 30               # optional episode step cap
//! initial 0 0.8            # initial mass of a state, one line per state
//! terminal 3 4             # terminal states (any number of lines)
//! t 0 1 1 1.0 0.0          # s a s' probability reward
//! ```
//!
//! Terminal states that have no `t` lines get absorbing zero-reward rows.
//! The parsed MDP must pass [`TabularMdp::validate`].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result, Violation};
use crate::rng::Rng;

const PROB_TOL: f64 = 1e-12;

/// A finite MDP with rewards on `(s, a, s')` triples.
///
/// Tensors are dense and row-major: `transition[(s * A + a) * S + s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub initial: Vec<f64>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub max_episode_steps: Option<usize>,
}

impl TabularMdp {
    /// An MDP with all-zero tensors, to be filled in by the caller.
    pub fn zeros(num_states: usize, num_actions: usize, gamma: f64) -> Self {
        let n = num_states * num_actions * num_states;
        TabularMdp {
            num_states,
            num_actions,
            transition: vec![0.0; n],
            reward: vec![0.0; n],
            initial: vec![0.0; num_states],
            gamma,
            terminal: vec![false; num_states],
            max_episode_steps: None,
        }
    }

    #[inline]
    pub fn idx(&self, s: usize, a: usize, s_next: usize) -> usize {
        (s * self.num_actions + a) * self.num_states + s_next
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[self.idx(s, a, s_next)]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.reward[self.idx(s, a, s_next)]
    }

    /// The row `P(s, a, ·)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.transition[start..start + self.num_states]
    }

    pub fn set(&mut self, s: usize, a: usize, s_next: usize, prob: f64, reward: f64) {
        let i = self.idx(s, a, s_next);
        self.transition[i] = prob;
        self.reward[i] = reward;
    }

    /// Makes `s` terminal: absorbing under every action, zero reward.
    pub fn make_terminal(&mut self, s: usize) {
        self.terminal[s] = true;
        for a in 0..self.num_actions {
            for s2 in 0..self.num_states {
                let i = self.idx(s, a, s2);
                self.transition[i] = if s2 == s { 1.0 } else { 0.0 };
                self.reward[i] = 0.0;
            }
        }
    }

    /// Expected immediate reward `R(s, a) = Σ_s' P(s,a,s') R(s,a,s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        (0..self.num_states).map(|s2| self.p(s, a, s2) * self.r(s, a, s2)).sum()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Checks every invariant and returns the full list of violations.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let (ns, na) = (self.num_states, self.num_actions);
        let n = ns * na * ns;
        for (what, len, expected) in [
            ("transition", self.transition.len(), n),
            ("reward", self.reward.len(), n),
            ("initial", self.initial.len(), ns),
            ("terminal", self.terminal.len(), ns),
        ] {
            if len != expected {
                v.push(Violation::Shape { what, expected, actual: len });
            }
        }
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            v.push(Violation::BadGamma { gamma: self.gamma });
        }
        for (i, &p) in self.transition.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                v.push(Violation::NegativeProbability { what: "transition", index: i, value: p });
            }
        }
        for s in 0..ns {
            for a in 0..na {
                let sum: f64 = self.row(s, a).iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    v.push(Violation::RowSumError { state: s, action: a, sum });
                }
            }
        }
        for s in (0..ns).filter(|&s| self.terminal[s]) {
            let absorbing = (0..na).all(|a| {
                (self.p(s, a, s) - 1.0).abs() <= PROB_TOL
                    && (0..ns).all(|s2| self.r(s, a, s2) == 0.0)
            });
            if !absorbing {
                v.push(Violation::TerminalNotAbsorbing { state: s });
            }
        }
        for (i, &p) in self.initial.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                v.push(Violation::NegativeProbability { what: "initial", index: i, value: p });
            }
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            v.push(Violation::BadInitialDist { reason: format!("sums to {total}") });
        }
        for s in (0..ns).filter(|&s| self.terminal[s] && self.initial[s] != 0.0) {
            v.push(Violation::BadInitialDist {
                reason: format!("mass {} on terminal state {s}", self.initial[s]),
            });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn sample_initial(&self, rng: &mut Rng) -> usize {
        rng.categorical(&self.initial)
    }

    /// Samples `s' ~ P(s, a, ·)` and returns it with `R(s, a, s')`.
    pub fn sample_transition(&self, s: usize, a: usize, rng: &mut Rng) -> Result<(usize, f64)> {
        if self.terminal[s] {
            return Err(Error::TerminalStateStep(s));
        }
        let s_next = rng.categorical(self.row(s, a));
        Ok((s_next, self.r(s, a, s_next)))
    }

    /// Parses the description format and validates the result.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut states = None;
        let mut actions = None;
        let mut gamma = None;
        let mut horizon = None;
        let mut initial = Vec::new();
        let mut terminal = Vec::new();
        let mut entries = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let key = words.next().unwrap_or_default();
            let rest: Vec<&str> = words.collect();
            let err = |m: String| Error::parse(origin, lineno, m);
            let int = |w: &str| w.parse::<usize>().map_err(|e| err(format!("bad integer {w:?}: {e}")));
            let real = |w: &str| w.parse::<f64>().map_err(|e| err(format!("bad number {w:?}: {e}")));
            let arity = |n: usize| {
                if rest.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{key}` takes {n} value(s), got {}", rest.len())))
                }
            };
            match key {
                "states" => {
                    arity(1)?;
                    states = Some(int(rest[0])?);
                }
                "actions" => {
                    arity(1)?;
                    actions = Some(int(rest[0])?);
                }
                "gamma" => {
                    arity(1)?;
                    gamma = Some(real(rest[0])?);
                }
                "horizon" => {
                    arity(1)?;
                    horizon = Some(int(rest[0])?);
                }
                "initial" => {
                    arity(2)?;
                    initial.push((lineno, int(rest[0])?, real(rest[1])?));
                }
                "terminal" => {
                    for w in &rest {
                        terminal.push((lineno, int(w)?));
                    }
                }
                "t" => {
                    arity(5)?;
                    entries.push((
                        lineno,
                        int(rest[0])?,
                        int(rest[1])?,
                        int(rest[2])?,
                        real(rest[3])?,
                        real(rest[4])?,
                    ));
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }

        let missing = |k: &str| Error::parse(origin, 0, format!("missing `{k}` line"));
        let ns = states.ok_or_else(|| missing("states"))?;
        let na = actions.ok_or_else(|| missing("actions"))?;
        let gamma = gamma.ok_or_else(|| missing("gamma"))?;
        if ns == 0 || na == 0 {
            return Err(Error::parse(origin, 0, "states and actions must be positive"));
        }
        let mut mdp = TabularMdp::zeros(ns, na, gamma);
        mdp.max_episode_steps = horizon;
        let check_state = |line: usize, s: usize| {
            if s < ns {
                Ok(())
            } else {
                Err(Error::parse(origin, line, format!("state {s} out of range")))
            }
        };
        for (line, s, p) in initial {
            check_state(line, s)?;
            mdp.initial[s] = p;
        }
        let mut seen = vec![false; mdp.transition.len()];
        let mut has_row = vec![false; ns];
        for (line, s, a, s2, p, r) in entries {
            check_state(line, s)?;
            check_state(line, s2)?;
            if a >= na {
                return Err(Error::parse(origin, line, format!("action {a} out of range")));
            }
            let i = mdp.idx(s, a, s2);
            if seen[i] {
                return Err(Error::parse(origin, line, format!("duplicate entry ({s}, {a}, {s2})")));
            }
            seen[i] = true;
            has_row[s] = true;
            mdp.transition[i] = p;
            mdp.reward[i] = r;
        }
        for (line, s) in terminal {
            check_state(line, s)?;
            if has_row[s] {
                mdp.terminal[s] = true;
            } else {
                mdp.make_terminal(s);
            }
        }
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Renders the description format. Round-trips through [`TabularMdp::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.num_states);
        let _ = writeln!(out, "actions {}", self.num_actions);
        let _ = writeln!(out, "gamma {:.16e}", self.gamma);
        if let Some(h) = self.max_episode_steps {
            let _ = writeln!(out, "horizon {h}");
        }
        for (s, &p) in self.initial.iter().enumerate().filter(|(_, p)| **p != 0.0) {
            let _ = writeln!(out, "initial {s} {p:.16e}");
        }
        let terminals: Vec<String> =
            (0..self.num_states).filter(|&s| self.terminal[s]).map(|s| s.to_string()).collect();
        if !terminals.is_empty() {
            let _ = writeln!(out, "terminal {}", terminals.join(" "));
        }
        for s in (0..self.num_states).filter(|&s| !self.terminal[s]) {
            for a in 0..self.num_actions {
                for s2 in 0..self.num_states {
                    let p = self.p(s, a, s2);
                    if p != 0.0 {
                        let _ = writeln!(out, "t {s} {a} {s2} {p:.16e} {:.16e}", self.r(s, a, s2));
                    }
                }
            }
        }
        out
    }
}
