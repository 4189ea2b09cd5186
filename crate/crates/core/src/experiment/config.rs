use std::path::{Path, PathBuf};

use crate::agent::{AgentMode, Hyperparams};
use crate::critic::{CriticTables, DeltaOmegaForm, ValueStyle};
use crate::envs::{four_rooms_with, parse_layout, two_state_features, two_state_initialization, two_state_mdp, GridOptions};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::options::OptionParams;

/// Every key accepted in a config file or by `--set`.
pub const KEYS: [&str; 19] = [
    "env",
    "mode",
    "num_episodes",
    "num_runs",
    "seed_base",
    "num_options",
    "alpha_theta",
    "alpha_vartheta",
    "alpha_eta",
    "alpha_phi",
    "lambda",
    "critic_lr",
    "epsilon",
    "gamma",
    "delta_omega_form",
    "value_style",
    "slip",
    "max_episode_steps",
    "output",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvName {
    TwoState,
    FourRooms,
    /// A file: `.mdp` files use the MDP text format, anything else is read
    /// as a grid layout.
    File(PathBuf),
}

impl EnvName {
    pub fn parse(text: &str) -> Self {
        match text {
            "two-state" | "two_state" => EnvName::TwoState,
            "four-rooms" | "four_rooms" => EnvName::FourRooms,
            path => EnvName::File(PathBuf::from(path)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvName::TwoState => "two-state".into(),
            EnvName::FourRooms => "four-rooms".into(),
            EnvName::File(p) => p.display().to_string(),
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    pub mode: AgentMode,
    pub num_episodes: usize,
    pub num_runs: usize,
    pub seed_base: u64,
    pub num_options: usize,
    pub hyper: Hyperparams,
    pub critic_lr: f64,
    pub epsilon: f64,
    /// Overrides the environment's discount when set.
    pub gamma: Option<f64>,
    pub value_style: ValueStyle,
    pub slip: f64,
    /// Overrides the environment's step cap when set.
    pub max_episode_steps: Option<usize>,
    pub output: PathBuf,
}

impl RunConfig {
    /// Defaults for the two-state chain: the intra-option policies are
    /// effectively frozen so that only terminations and the critic learn.
    pub fn two_state() -> Self {
        RunConfig {
            env: EnvName::TwoState,
            mode: AgentMode::Inoc,
            num_episodes: 2000,
            num_runs: 200,
            seed_base: 0,
            num_options: 2,
            hyper: Hyperparams { alpha_theta: 1e-9, alpha_vartheta: 0.0025, ..Hyperparams::default() },
            critic_lr: 0.5,
            epsilon: 0.05,
            gamma: None,
            value_style: ValueStyle::default(),
            slip: 0.0,
            max_episode_steps: None,
            output: PathBuf::from("runs/two-state"),
        }
    }

    pub fn four_rooms() -> Self {
        RunConfig {
            env: EnvName::FourRooms,
            mode: AgentMode::Inoc,
            num_episodes: 1000,
            num_runs: 50,
            seed_base: 0,
            num_options: 4,
            hyper: Hyperparams::default(),
            critic_lr: 0.5,
            epsilon: 0.05,
            gamma: None,
            value_style: ValueStyle::default(),
            slip: 0.0,
            max_episode_steps: None,
            output: PathBuf::from("runs/four-rooms"),
        }
    }

    pub fn for_env(env: EnvName) -> Self {
        match env {
            EnvName::TwoState => RunConfig::two_state(),
            EnvName::FourRooms => RunConfig::four_rooms(),
            file => RunConfig { env: file, output: PathBuf::from("runs/custom"), ..RunConfig::four_rooms() },
        }
    }

    /// Parses `key=value` lines (`#` starts a comment) and then applies
    /// `overrides`, also `key=value`. Defaults come from the `env` key,
    /// wherever it appears; later assignments win.
    pub fn from_text(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| Error::parse(origin, n + 1, "expected key=value"))?;
            pairs.push((k, v));
        }
        for o in overrides {
            let (k, v) = split_pair(o).ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            pairs.push((k, v));
        }
        let env = pairs.iter().rev().find(|(k, _)| k == "env").map(|(_, v)| EnvName::parse(v));
        let mut cfg = RunConfig::for_env(env.unwrap_or(EnvName::TwoState));
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text, &path.display().to_string(), overrides)
    }

    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: cannot parse {value:?} as {what}"));
        let real = || value.parse::<f64>().map_err(|_| bad("a number"));
        let count = || value.parse::<usize>().map_err(|_| bad("a count"));
        match key {
            "env" => self.env = EnvName::parse(value),
            "mode" => self.mode = AgentMode::parse(value)?,
            "num_episodes" => self.num_episodes = count()?,
            "num_runs" => self.num_runs = count()?,
            "seed_base" => self.seed_base = value.parse().map_err(|_| bad("a seed"))?,
            "num_options" => self.num_options = count()?,
            "alpha_theta" => self.hyper.alpha_theta = real()?,
            "alpha_vartheta" => self.hyper.alpha_vartheta = real()?,
            "alpha_eta" => self.hyper.alpha_eta = real()?,
            "alpha_phi" => self.hyper.alpha_phi = real()?,
            "lambda" => self.hyper.lambda = real()?,
            "critic_lr" => self.critic_lr = real()?,
            "epsilon" => self.epsilon = real()?,
            "gamma" => self.gamma = Some(real()?),
            "delta_omega_form" => {
                self.hyper.delta_omega_form = match value {
                    "text" => DeltaOmegaForm::Text,
                    "line12" | "line-12" => DeltaOmegaForm::Line12,
                    _ => return Err(bad("text or line12")),
                }
            }
            "value_style" => {
                self.value_style = match value {
                    "expectation" => ValueStyle::EpsilonGreedyExpectation,
                    "max" => ValueStyle::Max,
                    _ => return Err(bad("expectation or max")),
                }
            }
            "slip" => self.slip = real()?,
            "max_episode_steps" => self.max_episode_steps = Some(count()?),
            "output" => self.output = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}; known keys: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let rates = [
            ("alpha_theta", h.alpha_theta),
            ("alpha_vartheta", h.alpha_vartheta),
            ("alpha_eta", h.alpha_eta),
            ("alpha_phi", h.alpha_phi),
            ("critic_lr", self.critic_lr),
        ];
        for (name, r) in rates {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("{name} = {r} must be a positive number")));
            }
        }
        if !(0.0..=1.0).contains(&h.lambda) {
            return Err(Error::Config(format!("lambda = {} must lie in [0, 1]", h.lambda)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon = {} must lie in [0, 1]", self.epsilon)));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("gamma = {g} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::Config(format!("slip = {} must lie in [0, 1]", self.slip)));
        }
        if self.num_runs == 0 {
            return Err(Error::Config("num_runs must be at least 1".into()));
        }
        if self.num_options == 0 {
            return Err(Error::Config("num_options must be at least 1".into()));
        }
        if self.env == EnvName::TwoState && self.num_options != 2 {
            return Err(Error::Config("the two-state initialization has exactly 2 options".into()));
        }
        Ok(())
    }

    /// The resolved configuration as `key=value` lines, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let form = match h.delta_omega_form {
            DeltaOmegaForm::Text => "text",
            DeltaOmegaForm::Line12 => "line12",
        };
        let style = match self.value_style {
            ValueStyle::EpsilonGreedyExpectation => "expectation",
            ValueStyle::Max => "max",
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        put("env", self.env.name());
        put("mode", self.mode.name().into());
        put("num_episodes", self.num_episodes.to_string());
        put("num_runs", self.num_runs.to_string());
        put("seed_base", self.seed_base.to_string());
        put("num_options", self.num_options.to_string());
        put("alpha_theta", h.alpha_theta.to_string());
        put("alpha_vartheta", h.alpha_vartheta.to_string());
        put("alpha_eta", h.alpha_eta.to_string());
        put("alpha_phi", h.alpha_phi.to_string());
        put("lambda", h.lambda.to_string());
        put("critic_lr", self.critic_lr.to_string());
        put("epsilon", self.epsilon.to_string());
        if let Some(g) = self.gamma {
            put("gamma", g.to_string());
        }
        put("delta_omega_form", form.into());
        put("value_style", style.into());
        put("slip", self.slip.to_string());
        if let Some(m) = self.max_episode_steps {
            put("max_episode_steps", m.to_string());
        }
        put("output", self.output.display().to_string());
        out
    }

    /// Builds the environment and the initial learner state for one run.
    pub fn build(&self) -> Result<Setup> {
        let (mut mdp, fmap, mut params, mut critic) = match &self.env {
            EnvName::TwoState => {
                let (params, critic) = two_state_initialization();
                (two_state_mdp(), two_state_features(), params, critic)
            }
            EnvName::FourRooms => {
                let opts = GridOptions { slip: self.slip, ..GridOptions::default() };
                let mdp = four_rooms_with(&opts)?.mdp;
                self.blank(mdp)
            }
            EnvName::File(path) => {
                let origin = path.display().to_string();
                let mdp = if path.extension().is_some_and(|e| e == "mdp") {
                    TabularMdp::load(path)?
                } else {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    let opts = GridOptions { slip: self.slip, ..GridOptions::default() };
                    parse_layout(&text, &origin, &opts)?.mdp
                };
                self.blank(mdp)
            }
        };
        if let Some(g) = self.gamma {
            mdp.gamma = g;
        }
        if let Some(m) = self.max_episode_steps {
            mdp.max_episode_steps = Some(m);
        }
        mdp.validate()?;
        params.epsilon = self.epsilon;
        critic.learning_rate = self.critic_lr;
        critic.value_style = self.value_style;
        Ok(Setup { mdp, fmap, params, critic })
    }

    fn blank(&self, mdp: TabularMdp) -> (TabularMdp, FeatureMap, OptionParams, CriticTables) {
        let fmap = FeatureMap::one_hot(mdp.num_states);
        let params = OptionParams::new(self.num_options, fmap.dimension(), mdp.num_actions);
        let critic = CriticTables::zeros(mdp.num_states, self.num_options, self.critic_lr);
        (mdp, fmap, params, critic)
    }
}

fn split_pair(text: &str) -> Option<(String, String)> {
    let (k, v) = text.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty()).then(|| (k.to_string(), v.to_string()))
}

/// Environment and initial learner state.
#[derive(Debug, Clone)]
pub struct Setup {
    pub mdp: TabularMdp,
    pub fmap: FeatureMap,
    pub params: OptionParams,
    pub critic: CriticTables,
}
