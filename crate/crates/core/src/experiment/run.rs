use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::agent::{run_episode, Agent, EpisodeRecord, Limits};
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::config::RunConfig;

pub const RUN_HEADER: &str = "episode,return_disc,return_undisc,steps,term_frac,truncated";
pub const AGGREGATE_HEADER: &str =
    "episode,mean_return_disc,se_return_disc,mean_return_undisc,se_return_undisc,mean_steps,se_steps,mean_term_frac";

/// Runs `index` of an experiment: a fresh learner, seeded by
/// `seed_base + index`, trained for `num_episodes` episodes.
pub fn run_single(cfg: &RunConfig, index: usize) -> Result<Vec<EpisodeRecord>> {
    let setup = cfg.build()?;
    let mut agent = Agent::new(cfg.mode, setup.params, setup.critic, cfg.hyper);
    let mut rng = Rng::seed_from(cfg.seed_base.wrapping_add(index as u64));
    Ok((0..cfg.num_episodes)
        .map(|_| run_episode(&mut agent, &setup.mdp, &setup.fmap, &mut rng, Limits::default()))
        .collect())
}

/// All runs, in run-index order. Runs execute in parallel.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<Vec<EpisodeRecord>>> {
    cfg.validate()?;
    (0..cfg.num_runs).into_par_iter().map(|i| run_single(cfg, i)).collect()
}

/// Per-episode statistics across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean_return_disc: f64,
    pub se_return_disc: f64,
    pub mean_return_undisc: f64,
    pub se_return_undisc: f64,
    pub mean_steps: f64,
    pub se_steps: f64,
    pub mean_term_frac: f64,
}

/// Mean and standard error of the mean; the error is 0 for a single value.
fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Episode numbers start at 1.
pub fn aggregate(runs: &[Vec<EpisodeRecord>]) -> Vec<AggregateRow> {
    let episodes = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let col = |f: fn(&EpisodeRecord) -> f64| runs.iter().map(move |r| f(&r[e]));
            let (mean_return_disc, se_return_disc) = mean_se(col(|r| r.discounted_return));
            let (mean_return_undisc, se_return_undisc) = mean_se(col(|r| r.undiscounted_return));
            let (mean_steps, se_steps) = mean_se(col(|r| r.steps as f64));
            let (mean_term_frac, _) = mean_se(col(|r| r.termination_update_fraction));
            AggregateRow {
                episode: e + 1,
                mean_return_disc,
                se_return_disc,
                mean_return_undisc,
                se_return_undisc,
                mean_steps,
                se_steps,
                mean_term_frac,
            }
        })
        .collect()
}

pub fn run_csv(records: &[EpisodeRecord]) -> String {
    let mut out = format!("{RUN_HEADER}\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i + 1,
            r.discounted_return,
            r.undiscounted_return,
            r.steps,
            r.termination_update_fraction,
            u8::from(r.truncated)
        );
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.episode,
            r.mean_return_disc,
            r.se_return_disc,
            r.mean_return_undisc,
            r.se_return_undisc,
            r.mean_steps,
            r.se_steps,
            r.mean_term_frac
        );
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub runs: Vec<Vec<EpisodeRecord>>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs the experiment and writes `config.txt`, `run_0000.csv`, ... and
/// `aggregate.csv` into `dir`. The echoed config omits the output key, so
/// the files do not depend on where they are written.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let runs = run_all(cfg)?;
    let aggregate = aggregate(&runs);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let echoed: String = cfg.to_text().lines().filter(|l| !l.starts_with("output=")).map(|l| format!("{l}\n")).collect();
    write(&dir.join("config.txt"), &echoed)?;
    for (i, records) in runs.iter().enumerate() {
        write(&dir.join(format!("run_{i:04}.csv")), &run_csv(records))?;
    }
    write(&dir.join("aggregate.csv"), &aggregate_csv(&aggregate))?;
    Ok(RunOutput { runs, aggregate })
}

/// Reads an aggregate file written by [`run`].
pub fn load_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_aggregate(&text, &path.display().to_string())
}

pub fn parse_aggregate(text: &str, origin: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == AGGREGATE_HEADER => {}
        _ => return Err(Error::parse(origin, 1, format!("expected header {AGGREGATE_HEADER}"))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(Error::parse(origin, n + 1, format!("expected 8 fields, found {}", fields.len())));
        }
        let real = |i: usize| fields[i].parse::<f64>().map_err(|_| Error::parse(origin, n + 1, format!("bad number {:?}", fields[i])));
        rows.push(AggregateRow {
            episode: fields[0].parse().map_err(|_| Error::parse(origin, n + 1, "bad episode index"))?,
            mean_return_disc: real(1)?,
            se_return_disc: real(2)?,
            mean_return_undisc: real(3)?,
            se_return_undisc: real(4)?,
            mean_steps: real(5)?,
            se_steps: real(6)?,
            mean_term_frac: real(7)?,
        });
    }
    Ok(rows)
}
