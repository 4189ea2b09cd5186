//! The two-state chain and the four-rooms gridworld, with the documented
//! two-state initialization.

use crate::critic::CriticTables;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::options::{logit, OptionParams};

/// Description of the two-state chain in the MDP text format.
pub const TWO_STATE_DESCRIPTION: &str = include_str!("../layouts/two_state.mdp");

/// The standard four-rooms grid: `#` wall, `.` floor, `G` goal.
pub const FOUR_ROOMS_LAYOUT: &str = include_str!("../layouts/four_rooms.txt");

/// Two states, two deterministic actions; action `k` moves to state `k`.
/// Self loops pay 1 and 2, `d0 = (0.8, 0.2)`, episodes stop after 30 steps.
pub fn two_state_mdp() -> TabularMdp {
    TabularMdp::parse(TWO_STATE_DESCRIPTION, "two_state.mdp").expect("embedded description is valid")
}

/// Option 0 takes action 0 and option 1 takes action 1 with probability 0.9
/// in both states. Option 0 terminates with probability 0.1 everywhere,
/// option 1 with probability 0.5. The critic prefers option 0 in state 0.
pub fn two_state_initialization() -> (OptionParams, CriticTables) {
    let mut params = OptionParams::new(2, 2, 2);
    let favored = 9f64.ln();
    for s in 0..2 {
        let i = params.theta_index(0, s, 0);
        params.theta[i] = favored;
        let i = params.theta_index(1, s, 1);
        params.theta[i] = favored;
        let i = params.vartheta_index(0, s);
        params.vartheta[i] = logit(0.1);
    }
    let mut critic = CriticTables::zeros(2, 2, 0.5);
    critic.set_q(0, 0, 1.0);
    critic.set_q(1, 1, 2.0);
    (params, critic)
}

pub fn two_state_features() -> FeatureMap {
    FeatureMap::one_hot(2)
}

/// Movement actions of the gridworld, in action-index order.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    /// Probability that a move goes in a uniformly drawn other direction.
    pub slip: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { slip: 0.0, gamma: 0.99, max_episode_steps: 2000 }
    }
}

/// A gridworld parsed from a layout, with the cell coordinates of each state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub mdp: TabularMdp,
    /// `(row, column)` of each state.
    pub cells: Vec<(usize, usize)>,
}

/// Parses a layout into a gridworld MDP.
///
/// Every `.` or `G` cell is a state. Moving into a wall or off the grid leaves
/// the state unchanged. Entering a goal pays 1 and ends the episode; every
/// other transition pays 0. Episodes start uniformly over non-goal cells.
pub fn parse_layout(text: &str, origin: &str, opts: &GridOptions) -> Result<Gridworld> {
    let grid: Vec<Vec<char>> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .map(|l| l.chars().collect())
        .collect();
    let mut index = vec![vec![None; grid.iter().map(Vec::len).max().unwrap_or(0)]; grid.len()];
    let mut cells = Vec::new();
    let mut goals = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        for (c, ch) in row.iter().enumerate() {
            match ch {
                '#' => {}
                '.' | 'G' => {
                    if *ch == 'G' {
                        goals.push(cells.len());
                    }
                    index[r][c] = Some(cells.len());
                    cells.push((r, c));
                }
                other => {
                    return Err(Error::parse(origin, r + 1, format!("unexpected character {other:?}")));
                }
            }
        }
    }
    if goals.is_empty() {
        return Err(Error::parse(origin, 0, "layout has no goal cell"));
    }
    if !(0.0..=1.0).contains(&opts.slip) {
        return Err(Error::Config(format!("slip {} not in [0, 1]", opts.slip)));
    }
    let n = cells.len();
    let mut mdp = TabularMdp::zeros(n, MOVES.len(), opts.gamma);
    mdp.max_episode_steps = Some(opts.max_episode_steps);
    let target = |s: usize, m: usize| -> usize {
        let (r, c) = cells[s];
        let (dr, dc) = MOVES[m];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 {
            return s;
        }
        index
            .get(nr as usize)
            .and_then(|row| row.get(nc as usize))
            .copied()
            .flatten()
            .unwrap_or(s)
    };
    for s in 0..n {
        if goals.contains(&s) {
            continue;
        }
        for a in 0..MOVES.len() {
            for m in 0..MOVES.len() {
                let prob = if m == a { 1.0 - opts.slip } else { opts.slip / 3.0 };
                if prob == 0.0 {
                    continue;
                }
                let s2 = target(s, m);
                let i = mdp.idx(s, a, s2);
                mdp.transition[i] += prob;
                if goals.contains(&s2) {
                    mdp.reward[i] = 1.0;
                }
            }
        }
    }
    for &g in &goals {
        mdp.make_terminal(g);
    }
    let starts = n - goals.len();
    for s in 0..n {
        if !goals.contains(&s) {
            mdp.initial[s] = 1.0 / starts as f64;
        }
    }
    mdp.validate()?;
    Ok(Gridworld { mdp, cells })
}

/// The four-rooms gridworld with default options.
pub fn four_rooms() -> TabularMdp {
    four_rooms_with(&GridOptions::default()).expect("embedded layout is valid").mdp
}

pub fn four_rooms_with(opts: &GridOptions) -> Result<Gridworld> {
    parse_layout(FOUR_ROOMS_LAYOUT, "four_rooms.txt", opts)
}
