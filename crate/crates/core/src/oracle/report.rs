//! The full verification battery over a set of instances, and its text report.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{
    categorical_fim_alternate_forms, lemma_checks, mc_fim_estimate, relative_error, Instance, LemmaConfig,
    Manifold, StartDist, Weighting,
};
use crate::error::Result;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryConfig {
    pub seed: u64,
    pub fd_step: f64,
    pub fd_tol: f64,
    pub equivalence_tol: f64,
    pub symmetry_tol: f64,
    pub psd_tol: f64,
    pub alternate_form_tol: f64,
    pub mc_tol: f64,
    pub mc_horizon: usize,
    pub mc_paths: usize,
    pub lemma: LemmaConfig,
    /// When set, replaces every tolerance above.
    pub tolerance_override: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 0,
            fd_step: 1e-5,
            fd_tol: 1e-5,
            equivalence_tol: 1e-8,
            symmetry_tol: 1e-12,
            psd_tol: 1e-10,
            alternate_form_tol: 1e-10,
            mc_tol: 0.1,
            mc_horizon: 200,
            mc_paths: 20_000,
            lemma: LemmaConfig::default(),
            tolerance_override: None,
        }
    }
}

impl BatteryConfig {
    fn tol(&self, base: f64) -> f64 {
        self.tolerance_override.unwrap_or(base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Records a check that passes when `value < tolerance`.
    fn below(&mut self, name: String, value: f64, tolerance: f64, detail: String) {
        let passed = value < tolerance;
        self.checks.push(CheckResult { name, value, tolerance, passed, detail });
    }

    pub fn to_text(&self) -> String {
        let failed = self.failures().count();
        let mut out = format!(
            "oracle check: {} checks, {} passed, {} failed\n",
            self.checks.len(),
            self.checks.len() - failed,
            failed
        );
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = write!(out, "[{tag}] {}: value={:.3e} tolerance={:.3e}", c.name, c.value, c.tolerance);
            if !c.detail.is_empty() {
                let _ = write!(out, " ({})", c.detail);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn symmetry_gap(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn frobenius_relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Runs every oracle check on every instance.
pub fn run_battery(instances: &[Instance], cfg: &BatteryConfig) -> Result<Report> {
    let mut report = Report::default();
    let mut rng = Rng::seed_from(cfg.seed);
    for (k, inst) in instances.iter().enumerate() {
        let problem = inst.problem()?;
        let n = problem.num_pairs();
        let tag = |what: &str| format!("instance {k}: {what}");

        let acting = StartDist::acting_at(n, 0);
        let sol = problem.exact_values(&acting)?;
        let grad = problem.exact_policy_gradient(&sol);
        let fd = problem.finite_diff_gradient(Manifold::Theta, &acting, cfg.fd_step)?;
        report.below(tag("policy gradient vs finite differences"), relative_error(&grad, &fd), cfg.tol(cfg.fd_tol), String::new());

        let arrival = StartDist::arrival_at(n, problem.pair(inst.mdp.num_states.min(2) - 1, 0));
        let sol_arr = problem.exact_values(&arrival)?;
        let grad = problem.exact_termination_gradient(&sol_arr);
        let fd = problem.finite_diff_gradient(Manifold::Vartheta, &arrival, cfg.fd_step)?;
        report.below(tag("termination gradient vs finite differences"), relative_error(&grad, &fd), cfg.tol(cfg.fd_tol), String::new());

        let start = problem.default_start();
        let sol = problem.exact_values(&start)?;
        let g_theta = problem.exact_fim_theta(&sol, Weighting::Normalized);
        let g_vartheta = problem.exact_fim_vartheta(&sol, Weighting::Normalized);
        for (name, g) in [("theta", &g_theta), ("vartheta", &g_vartheta)] {
            report.below(tag(&format!("{name} metric symmetry")), symmetry_gap(g), cfg.tol(cfg.symmetry_tol), String::new());
            report.below(
                tag(&format!("{name} metric negative eigenvalue")),
                (-min_eigenvalue(g)).max(0.0),
                cfg.tol(cfg.psd_tol),
                String::new(),
            );
        }
        let product = problem.fim_vartheta_product_form(&sol);
        let sym_form = problem.exact_fim_vartheta(&sol, Weighting::Unnormalized);
        report.below(
            tag("vartheta metric product form"),
            frobenius_relative(&product, &sym_form),
            cfg.tol(cfg.equivalence_tol),
            String::new(),
        );

        let grad = problem.exact_policy_gradient(&sol);
        let eta = problem.least_squares_eta(&sol)?;
        let lhs = mat_vec(&problem.exact_fim_theta(&sol, Weighting::Unnormalized), &eta);
        report.below(tag("G_theta eta = policy gradient"), relative_error(&lhs, &grad), cfg.tol(cfg.equivalence_tol), String::new());

        let grad = problem.exact_termination_gradient(&sol);
        let phi = problem.least_squares_phi(&sol)?;
        let neg_phi: Vec<f64> = phi.iter().map(|x| -x).collect();
        let lhs = mat_vec(&sym_form, &neg_phi);
        report.below(
            tag("G_vartheta (-phi) = termination gradient"),
            relative_error(&lhs, &grad),
            cfg.tol(cfg.equivalence_tol),
            String::new(),
        );

        let mut worst_alt: f64 = 0.0;
        for s in 0..inst.mdp.num_states {
            for o in 0..inst.params.num_options {
                let alt = categorical_fim_alternate_forms(&inst.params, &inst.fmap, &inst.pi_over, s, o);
                worst_alt = worst_alt
                    .max((&alt.theta_outer - &alt.theta_neg_hessian).abs().max())
                    .max((&alt.vartheta_outer - &alt.vartheta_neg_hessian).abs().max());
            }
        }
        report.below(tag("score outer product = -expected Hessian"), worst_alt, cfg.tol(cfg.alternate_form_tol), String::new());

        let StartDist::Acting(w) = &start else { unreachable!("default start acts") };
        for (name, manifold, exact) in
            [("theta", Manifold::Theta, &g_theta), ("vartheta", Manifold::Vartheta, &g_vartheta)]
        {
            let est = mc_fim_estimate(&problem, manifold, w, cfg.mc_horizon, cfg.mc_paths, &mut rng)?;
            report.below(
                tag(&format!("{name} metric sampled at horizon {}", cfg.mc_horizon)),
                frobenius_relative(&est, exact),
                cfg.tol(cfg.mc_tol),
                format!("{} paths", cfg.mc_paths),
            );
        }

        let lemmas = lemma_checks(&problem, w, &cfg.lemma, &mut rng)?;
        let sigma = cfg.tolerance_override.unwrap_or(cfg.lemma.sigmas);
        for (name, cells) in [
            ("delta_U mean = a_U", &lemmas.delta_u),
            ("delta_Omega mean = a_Omega", &lemmas.delta_omega),
            ("delta_Omega mean = exact conditional mean", &lemmas.delta_omega_exact_mean),
        ] {
            let judged: Vec<_> = cells.iter().filter(|c| c.checked).collect();
            let worst = judged.iter().map(|c| (c.mean - c.target).abs() / c.std_err).fold(0.0, f64::max);
            let min_count = cells.iter().map(|c| c.count).min().unwrap_or(0);
            report.below(
                tag(name),
                worst,
                sigma,
                format!("largest gap in standard errors over {} cells, fewest samples {min_count}", judged.len()),
            );
        }
    }
    Ok(report)
}
