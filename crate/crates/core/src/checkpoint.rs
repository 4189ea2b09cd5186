//! Labeled text checkpoints for option parameters and critic tables.
//!
//! One value per line, each labeled by its coordinates. Numbers are written
//! with 17 significant digits, which round-trips every `f64` exactly.
//!
//! ```text
//! option-critic-checkpoint v1
//! options 2
//! features 2
//! actions 2
//! epsilon 5.0000000000000003e-2
//! beta_clamp 9.9999999999999995e-7
//! theta 0 1 0 2.1972245773362196e0
//! vartheta 0 1 -2.1972245773362196e0
//! critic 2 5.0000000000000000e-1 expectation
//! q_omega 0 0 1.0000000000000000e0
//! ```
//!
//! Coordinates not listed are zero. The `critic` line (states, learning
//! rate, value style) and the `q_omega` lines are present only when a critic
//! was saved.

use std::fmt::Write as _;
use std::path::Path;

use crate::critic::{CriticTables, ValueStyle};
use crate::error::{Error, Result};
use crate::options::OptionParams;

const MAGIC: &str = "option-critic-checkpoint v1";

pub fn to_text(params: &OptionParams, critic: Option<&CriticTables>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "options {}", params.num_options);
    let _ = writeln!(out, "features {}", params.feature_dim);
    let _ = writeln!(out, "actions {}", params.num_actions);
    let _ = writeln!(out, "epsilon {:.16e}", params.epsilon);
    let _ = writeln!(out, "beta_clamp {:.16e}", params.beta_clamp);
    for o in 0..params.num_options {
        for f in 0..params.feature_dim {
            for a in 0..params.num_actions {
                let _ = writeln!(out, "theta {o} {f} {a} {:.16e}", params.theta[params.theta_index(o, f, a)]);
            }
        }
    }
    for o in 0..params.num_options {
        for f in 0..params.feature_dim {
            let _ = writeln!(out, "vartheta {o} {f} {:.16e}", params.vartheta[params.vartheta_index(o, f)]);
        }
    }
    if let Some(c) = critic {
        let style = match c.value_style {
            ValueStyle::EpsilonGreedyExpectation => "expectation",
            ValueStyle::Max => "max",
        };
        let _ = writeln!(out, "critic {} {:.16e} {style}", c.num_states, c.learning_rate);
        for s in 0..c.num_states {
            for o in 0..c.num_options {
                let _ = writeln!(out, "q_omega {s} {o} {:.16e}", c.q(s, o));
            }
        }
    }
    out
}

pub fn parse(text: &str, origin: &str) -> Result<(OptionParams, Option<CriticTables>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::parse(origin, 1, format!("expected header {MAGIC:?}"))),
    }
    let mut sizes = [None; 3];
    let mut params: Option<OptionParams> = None;
    let mut critic: Option<CriticTables> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        let err = |m: String| Error::parse(origin, lineno, m);
        let words: Vec<&str> = line.split_whitespace().collect();
        let uint = |k: usize| -> Result<usize> {
            words
                .get(k)
                .ok_or_else(|| err("missing field".into()))?
                .parse()
                .map_err(|e| err(format!("bad integer: {e}")))
        };
        let real = |k: usize| -> Result<f64> {
            let v: f64 = words
                .get(k)
                .ok_or_else(|| err("missing field".into()))?
                .parse()
                .map_err(|e| err(format!("bad number: {e}")))?;
            if v.is_finite() { Ok(v) } else { Err(err("non-finite value".into())) }
        };
        let key = words[0];
        let expect_len = |n: usize| {
            if words.len() == n { Ok(()) } else { Err(err(format!("{key} takes {} fields", n - 1))) }
        };
        if params.is_none() && matches!(key, "epsilon" | "beta_clamp" | "theta" | "vartheta" | "critic" | "q_omega") {
            match sizes {
                [Some(o), Some(f), Some(a)] => params = Some(OptionParams::new(o, f, a)),
                _ => return Err(err("sizes must precede values".into())),
            }
        }
        match key {
            "options" | "features" | "actions" => {
                expect_len(2)?;
                let n = uint(1)?;
                if n == 0 {
                    return Err(err(format!("{key} must be positive")));
                }
                if params.is_some() {
                    return Err(err("sizes must precede values".into()));
                }
                let slot = ["options", "features", "actions"].iter().position(|k| *k == key).unwrap();
                sizes[slot] = Some(n);
            }
            "epsilon" => {
                expect_len(2)?;
                params.as_mut().unwrap().epsilon = real(1)?;
            }
            "beta_clamp" => {
                expect_len(2)?;
                params.as_mut().unwrap().beta_clamp = real(1)?;
            }
            "theta" => {
                expect_len(5)?;
                let p = params.as_mut().unwrap();
                let (o, f, a) = (uint(1)?, uint(2)?, uint(3)?);
                if o >= p.num_options || f >= p.feature_dim || a >= p.num_actions {
                    return Err(err("theta coordinate out of range".into()));
                }
                let idx = p.theta_index(o, f, a);
                p.theta[idx] = real(4)?;
            }
            "vartheta" => {
                expect_len(4)?;
                let p = params.as_mut().unwrap();
                let (o, f) = (uint(1)?, uint(2)?);
                if o >= p.num_options || f >= p.feature_dim {
                    return Err(err("vartheta coordinate out of range".into()));
                }
                let idx = p.vartheta_index(o, f);
                p.vartheta[idx] = real(3)?;
            }
            "critic" => {
                expect_len(4)?;
                if critic.is_some() {
                    return Err(err("duplicate critic line".into()));
                }
                let style = match words[3] {
                    "expectation" => ValueStyle::EpsilonGreedyExpectation,
                    "max" => ValueStyle::Max,
                    other => return Err(err(format!("unknown value style {other:?}"))),
                };
                let mut c = CriticTables::zeros(uint(1)?, params.as_ref().unwrap().num_options, real(2)?);
                c.value_style = style;
                critic = Some(c);
            }
            "q_omega" => {
                expect_len(4)?;
                let c = critic.as_mut().ok_or_else(|| err("q_omega before critic line".into()))?;
                let (s, o) = (uint(1)?, uint(2)?);
                if s >= c.num_states || o >= c.num_options {
                    return Err(err("q_omega coordinate out of range".into()));
                }
                c.set_q(s, o, real(3)?);
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    let params = match (params, sizes) {
        (Some(p), _) => p,
        (None, [Some(o), Some(f), Some(a)]) => OptionParams::new(o, f, a),
        _ => return Err(Error::parse(origin, 0, "missing options/features/actions")),
    };
    params.check()?;
    Ok((params, critic))
}

pub fn save(path: &Path, params: &OptionParams, critic: Option<&CriticTables>) -> Result<()> {
    std::fs::write(path, to_text(params, critic)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(OptionParams, Option<CriticTables>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::two_state_initialization;
    use proptest::prelude::*;

    #[test]
    fn round_trip_initialization() {
        let (p, c) = two_state_initialization();
        let text = to_text(&p, Some(&c));
        let (p2, c2) = parse(&text, "mem").unwrap();
        assert_eq!(p, p2);
        assert_eq!(Some(c), c2);
        let (p3, none) = parse(&to_text(&p, None), "mem").unwrap();
        assert_eq!(p, p3);
        assert!(none.is_none());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        let (p, c) = two_state_initialization();
        save(&path, &p, Some(&c)).unwrap();
        assert_eq!(load(&path).unwrap(), (p, Some(c)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("nonsense", "x").is_err());
        let base = format!("{MAGIC}\noptions 1\nfeatures 1\nactions 2\n");
        assert!(parse(&format!("{base}theta 1 0 0 1.0\n"), "x").is_err());
        assert!(parse(&format!("{base}theta 0 0 0 NaN\n"), "x").is_err());
        assert!(parse(&format!("{base}q_omega 0 0 1.0\n"), "x").is_err());
        assert!(parse(&format!("{base}bogus 1\n"), "x").is_err());
        assert!(parse(&format!("{MAGIC}\noptions 1\ntheta 0 0 0 1\n"), "x").is_err());
        assert!(parse(&format!("{base}theta 0 0 0 1.5\n"), "x").is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            theta in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 12),
            vartheta in prop::collection::vec(-1e300f64..1e300, 4),
            q in prop::collection::vec(prop::num::f64::NORMAL, 6),
            eps in 0.0f64..=1.0,
        ) {
            let mut p = OptionParams::new(2, 2, 3);
            p.theta = theta;
            p.vartheta = vartheta;
            p.epsilon = eps;
            let mut c = CriticTables::zeros(3, 2, 0.25);
            c.q_omega = q;
            c.value_style = ValueStyle::Max;
            let (p2, c2) = parse(&to_text(&p, Some(&c)), "mem").unwrap();
            prop_assert_eq!(
                p.theta.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                p2.theta.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(p, p2);
            prop_assert_eq!(Some(c), c2);
        }
    }
}
