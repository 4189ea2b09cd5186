use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::run::AggregateRow;

/// Column of an aggregate file used by [`compare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    UndiscountedReturn,
    DiscountedReturn,
    /// Steps per episode; lower is better.
    Steps,
}

impl Metric {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "return_undisc" | "undiscounted" => Ok(Metric::UndiscountedReturn),
            "return_disc" | "discounted" => Ok(Metric::DiscountedReturn),
            "steps" => Ok(Metric::Steps),
            _ => Err(Error::Config(format!("unknown metric {text:?}; use return_undisc, return_disc or steps"))),
        }
    }

    pub fn value(self, row: &AggregateRow) -> f64 {
        match self {
            Metric::UndiscountedReturn => row.mean_return_undisc,
            Metric::DiscountedReturn => row.mean_return_disc,
            Metric::Steps => row.mean_steps,
        }
    }

    fn reached(self, value: f64, threshold: f64) -> bool {
        match self {
            Metric::Steps => value <= threshold,
            _ => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub metric: Metric,
    /// Episodes per row of the window table.
    pub window: usize,
    /// Length of the trailing moving average.
    pub moving_average: usize,
    /// Level for the episodes-to-threshold columns.
    pub threshold: Option<f64>,
    /// Best achievable value of the metric; the plateau escape is the first
    /// moving average within 95% of it.
    pub optimum: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { metric: Metric::default(), window: 100, moving_average: 50, threshold: None, optimum: None }
    }
}

/// Sentinel for a level that is never reached.
pub const NEVER: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub first: usize,
    pub last: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b - mean_a`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub options: CompareOptions,
    pub windows: Vec<WindowRow>,
    pub threshold_episode: Option<(i64, i64)>,
    pub escape_episode: Option<(i64, i64)>,
    pub mean_term_frac: (f64, f64),
}

/// Trailing moving averages; entry `i` averages episodes `i+1-len..=i`
/// and exists only once `len` episodes are available.
pub fn moving_average(values: &[f64], len: usize) -> Vec<f64> {
    if len == 0 || values.len() < len {
        return Vec::new();
    }
    values.windows(len).map(|w| w.iter().sum::<f64>() / len as f64).collect()
}

/// First episode (1-based) at which the trailing moving average reaches
/// `level`, or [`NEVER`].
pub fn first_reaching(rows: &[AggregateRow], metric: Metric, len: usize, level: f64) -> i64 {
    let values: Vec<f64> = rows.iter().map(|r| metric.value(r)).collect();
    moving_average(&values, len)
        .iter()
        .position(|m| metric.reached(*m, level))
        .map_or(NEVER, |i| rows[i + len - 1].episode as i64)
}

/// Level that counts as escaping the plateau for a given optimum.
pub fn escape_level(metric: Metric, optimum: f64) -> f64 {
    match metric {
        Metric::Steps => optimum / 0.95,
        _ => 0.95 * optimum,
    }
}

pub fn compare(a: &[AggregateRow], b: &[AggregateRow], options: &CompareOptions) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::Mismatch { message: format!("aggregate files have {} and {} episodes", a.len(), b.len()) });
    }
    if options.window == 0 || options.moving_average == 0 {
        return Err(Error::Config("window lengths must be positive".into()));
    }
    let m = options.metric;
    let windows = a
        .chunks(options.window)
        .zip(b.chunks(options.window))
        .map(|(wa, wb)| {
            let mean = |w: &[AggregateRow]| w.iter().map(|r| m.value(r)).sum::<f64>() / w.len() as f64;
            let (mean_a, mean_b) = (mean(wa), mean(wb));
            WindowRow { first: wa[0].episode, last: wa[wa.len() - 1].episode, mean_a, mean_b, difference: mean_b - mean_a }
        })
        .collect();
    let reach = |level: f64| (first_reaching(a, m, options.moving_average, level), first_reaching(b, m, options.moving_average, level));
    let term = |rows: &[AggregateRow]| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.mean_term_frac).sum::<f64>() / rows.len() as f64
        }
    };
    Ok(Comparison {
        options: options.clone(),
        windows,
        threshold_episode: options.threshold.map(reach),
        escape_episode: options.optimum.map(|o| reach(escape_level(m, o))),
        mean_term_frac: (term(a), term(b)),
    })
}

impl Comparison {
    pub fn to_text(&self, name_a: &str, name_b: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "a = {name_a}");
        let _ = writeln!(out, "b = {name_b}");
        let _ = writeln!(out, "first,last,mean_a,mean_b,difference");
        for w in &self.windows {
            let _ = writeln!(out, "{},{},{},{},{}", w.first, w.last, w.mean_a, w.mean_b, w.difference);
        }
        if let (Some((ea, eb)), Some(t)) = (self.threshold_episode, self.options.threshold) {
            let _ = writeln!(out, "episodes_to_threshold({t}): a={ea} b={eb}");
        }
        if let (Some((ea, eb)), Some(o)) = (self.escape_episode, self.options.optimum) {
            let _ = writeln!(out, "plateau_escape(optimum={o}): a={ea} b={eb}");
        }
        let _ = writeln!(out, "mean_term_frac: a={} b={}", self.mean_term_frac.0, self.mean_term_frac.1);
        out
    }
}
