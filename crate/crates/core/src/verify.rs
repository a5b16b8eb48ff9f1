//! The acceptance checks, runnable from tests and the command line.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ball::{boggio_green, BallKernelQuery};
use crate::discretization::{assemble_operator, boundary_weight, torsion_function};
use crate::domain::{build_domain, distance, DomainSpec};
use crate::error::{Error, Result};
use crate::experiments::{run_estimate_experiment_with, trial_source, ExperimentConfig, ExperimentKind};
use crate::green::{green_matrix, riesz_constant};
use crate::pipeline::{GreenStorage, Pipeline, PipelineOptions};
use crate::signed::{RESIDUAL_TOL, SIGN_TOL};

pub const CHECK_COUNT: u32 = 13;
pub const SUITE_TIME_LIMIT: Duration = Duration::from_secs(300);
/// Pipelines up to this size keep a dense Green matrix.
const DENSE_PREFERRED: usize = 1500;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(id: u32, passed: bool, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            id,
            name: check_name(id),
            passed,
            measured,
            threshold,
            detail,
        }
    }

    fn failed(id: u32, err: &Error) -> Self {
        Self::new(id, false, f64::NAN, f64::NAN, format!("error: {err}"))
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} measured={:.6e} threshold={:.6e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

pub fn check_name(id: u32) -> &'static str {
    match id {
        1 => "torsion_convergence",
        2 => "square_torsion_maximum",
        3 => "weight_distance_ratio",
        4 => "green_symmetry_positivity",
        5 => "ball_positivity_m2",
        6 => "sign_change_detection",
        7 => "sandwich_stability",
        8 => "riesz_constant_and_ratio",
        9 => "decomposition_identity",
        10 => "theorem1_estimates",
        11 => "corollary_supremum",
        12 => "hls_lemma",
        13 => "determinism_and_runtime",
        _ => "unknown",
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Runs the decomposition check with the rank-one correction switched off.
    pub corrupt_c2_used: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20240101,
            corrupt_c2_used: false,
        }
    }
}

type Slot = Arc<OnceLock<std::result::Result<Arc<Pipeline>, String>>>;

/// Pipelines shared between checks, built once per domain and order.
#[derive(Default)]
pub struct PipelineCache {
    slots: Mutex<HashMap<String, Slot>>,
}

impl PipelineCache {
    pub fn get(&self, spec: &DomainSpec, m: usize) -> Result<Arc<Pipeline>> {
        let key = format!("{spec:?}/{m}");
        let slot = self.slots.lock().expect("cache lock").entry(key).or_default().clone();
        slot.get_or_init(|| {
            let n = build_domain(spec).map_err(|e| e.to_string())?.len();
            let storage = if n <= DENSE_PREFERRED { GreenStorage::Dense } else { GreenStorage::Streaming };
            let options = PipelineOptions {
                storage,
                ..Default::default()
            };
            Pipeline::build(spec, m, &options).map(Arc::new).map_err(|e| e.to_string())
        })
        .clone()
        .map_err(Error::Internal)
    }
}

/// Torsion function of the unit square from its double sine series.
pub fn square_torsion_fourier(x: f64, y: f64, modes: usize) -> f64 {
    let mut sum = 0.0;
    for j in (1..=modes).step_by(2) {
        let sj = (j as f64 * PI * x).sin();
        for k in (1..=modes).step_by(2) {
            let (jf, kf) = (j as f64, k as f64);
            sum += 16.0 / (PI.powi(4) * jf * kf * (jf * jf + kf * kf)) * sj * (kf * PI * y).sin();
        }
    }
    sum
}

pub struct Suite {
    options: VerifyOptions,
    cache: PipelineCache,
}

impl Suite {
    pub fn new(options: VerifyOptions) -> Self {
        Self {
            options,
            cache: PipelineCache::default(),
        }
    }

    pub fn cache(&self) -> &PipelineCache {
        &self.cache
    }

    /// Runs one of the checks `1..=12`.
    pub fn check(&self, id: u32) -> CheckResult {
        let outcome = match id {
            1 => self.torsion_convergence(),
            2 => self.square_torsion_maximum(),
            3 => self.weight_distance_ratio(),
            4 => self.green_symmetry_positivity(),
            5 => self.ball_positivity(),
            6 => self.sign_change_detection(),
            7 => self.sandwich_stability(),
            8 => self.riesz(),
            9 => self.decomposition(),
            10 => self.theorem1(),
            11 => self.corollary_supremum(),
            12 => self.hls_lemma(),
            _ => Err(Error::Configuration(format!("check {id} is not a standalone check"))),
        };
        outcome.unwrap_or_else(|e| CheckResult::failed(id, &e))
    }

    fn torsion_convergence(&self) -> Result<CheckResult> {
        let start = Instant::now();
        let mut errors = Vec::new();
        for cells in [32, 64] {
            let d = build_domain(&DomainSpec::disk(1.0, cells))?;
            let e1 = torsion_function(&d)?;
            let err = d
                .points()
                .iter()
                .zip(e1.values())
                .map(|(p, v)| (v - (1.0 - p[0] * p[0] - p[1] * p[1]) / 4.0).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        let order = (errors[0] / errors[1]).log2();
        let fast = start.elapsed() < Duration::from_secs(5);
        Ok(CheckResult::new(
            1,
            order >= 1.8 && errors[1] <= 5e-3 && fast,
            order,
            1.8,
            format!("err32={:.3e} err64={:.3e} (<= 5e-3) runtime<5s={fast}", errors[0], errors[1]),
        ))
    }

    fn square_torsion_maximum(&self) -> Result<CheckResult> {
        let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 64))?;
        let e1 = torsion_function(&d)?;
        let oracle = square_torsion_fourier(0.5, 0.5, 401);
        let rel = (e1.max() - oracle).abs() / oracle;
        Ok(CheckResult::new(
            2,
            rel <= 0.01,
            rel,
            0.01,
            format!("max e1={:.8e} fourier={:.8e}", e1.max(), oracle),
        ))
    }

    fn weight_distance_ratio(&self) -> Result<CheckResult> {
        let mut worst = 0.0f64;
        let mut detail = String::new();
        let mut positive = true;
        for spec in [DomainSpec::disk(1.0, 32), DomainSpec::rectangle(2.0, 1.0, 32)] {
            for m in [1, 2] {
                let coarse = boundary_weight(&build_domain(&spec)?, m)?;
                let fine = boundary_weight(&build_domain(&spec.with_cells(2 * spec.cells))?, m)?;
                let change_lo = (fine.c1 / coarse.c1 - 1.0).abs();
                let change_hi = (fine.c2 / coarse.c2 - 1.0).abs();
                positive &= coarse.c1 > 0.0 && fine.c1 > 0.0;
                worst = worst.max(change_lo).max(change_hi);
                let _ = write!(
                    detail,
                    "{} m={m}: [{:.4e},{:.4e}]->[{:.4e},{:.4e}]; ",
                    spec.label(),
                    coarse.c1,
                    coarse.c2,
                    fine.c1,
                    fine.c2
                );
            }
        }
        Ok(CheckResult::new(3, positive && worst < 0.25, worst, 0.25, detail.trim_end().to_string()))
    }

    fn green_symmetry_positivity(&self) -> Result<CheckResult> {
        let mut asym = 0.0f64;
        let mut min_entry = f64::INFINITY;
        for spec in [DomainSpec::disk(1.0, 32), DomainSpec::rectangle(2.0, 1.0, 32)] {
            let d = build_domain(&spec)?;
            let g = green_matrix(&assemble_operator(&d, 1)?)?;
            asym = asym.max(g.asymmetry_defect());
            min_entry = min_entry.min(g.min_entry());
        }
        Ok(CheckResult::new(
            4,
            asym <= 1e-10 && min_entry >= -1e-12,
            asym,
            1e-10,
            format!("min entry={min_entry:.3e} (>= -1e-12)"),
        ))
    }

    fn ball_positivity(&self) -> Result<CheckResult> {
        let p = self.cache.get(&DomainSpec::disk(1.0, 32), 2)?;
        let d = &p.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let candidates: Vec<usize> = (0..d.len()).filter(|&i| d.distances()[i] >= 0.1).collect();
        let mut worst = 0.0f64;
        let mut col = vec![0.0; d.len()];
        let mut found = 0;
        while found < 10 {
            let i = candidates[rng.random_range(0..candidates.len())];
            let j = candidates[rng.random_range(0..candidates.len())];
            let (x, y) = (d.point(i), d.point(j));
            if distance(&x, &y, 2) < 0.5 {
                continue;
            }
            p.green.column(j, &mut col);
            let exact = boggio_green(&BallKernelQuery::new(2, 2, &x[..2], &y[..2]))?;
            worst = worst.max((col[i] - exact).abs() / exact);
            found += 1;
        }
        let c2 = p.estimate.c2_star;
        Ok(CheckResult::new(
            5,
            c2 == 0.0 && worst <= 0.1,
            worst,
            0.1,
            format!("c2_star={c2:.3e} (= 0), worst relative mismatch over 10 pairs"),
        ))
    }

    fn sign_change_detection(&self) -> Result<CheckResult> {
        let p = self.cache.get(&DomainSpec::rectangle(5.0, 1.0, 80), 2)?;
        let e = &p.estimate;
        let pair = e.c2_pair.map_or(String::new(), |q| {
            format!(" pair=({:.3},{:.3})-({:.3},{:.3})", q.x[0], q.x[1], q.y[0], q.y[1])
        });
        Ok(CheckResult::new(
            6,
            e.c2_star > 0.0 && e.min_corrected_offdiag >= 0.0,
            e.c2_star,
            0.0,
            format!("c2_used={:.4e} min corrected off-diagonal={:.3e}{pair}", e.c2_used, e.min_corrected_offdiag),
        ))
    }

    fn sandwich_stability(&self) -> Result<CheckResult> {
        let mut worst = 1.0f64;
        let mut ok = true;
        let mut detail = String::new();
        for (spec, m) in [(DomainSpec::disk(1.0, 32), 1), (DomainSpec::disk(1.0, 32), 2), (DomainSpec::rectangle(5.0, 1.0, 80), 2)] {
            let coarse = self.cache.get(&spec, m)?;
            let fine = self.cache.get(&spec.with_cells(2 * spec.cells), m)?;
            let (a, b) = (&coarse.estimate, &fine.estimate);
            ok &= a.c1_hat > 0.0 && b.c1_hat > 0.0 && a.c3_hat.is_finite() && b.c3_hat.is_finite();
            let f1 = factor(a.c1_hat, b.c1_hat);
            let f3 = factor(a.c3_hat, b.c3_hat);
            worst = worst.max(f1).max(f3);
            let _ = write!(
                detail,
                "{} m={m}: c1 {:.4e}->{:.4e} c3 {:.4e}->{:.4e}; ",
                spec.label(),
                a.c1_hat,
                b.c1_hat,
                a.c3_hat,
                b.c3_hat
            );
        }
        Ok(CheckResult::new(7, ok && worst <= 1.5, worst, 1.5, detail.trim_end().to_string()))
    }

    fn riesz(&self) -> Result<CheckResult> {
        let start = Instant::now();
        let c = riesz_constant(3, 1)?;
        let const_err = (c - 1.0 / (4.0 * PI)).abs();
        let spec = DomainSpec::box3d(1.0, 1.0, 1.0, 16);
        let coarse = self.cache.get(&spec, 1)?;
        let fine = self.cache.get(&spec.with_cells(24), 1)?;
        let (a, b) = (
            coarse.estimate.riesz_ratio_max.unwrap_or(f64::NAN),
            fine.estimate.riesz_ratio_max.unwrap_or(f64::NAN),
        );
        let f = factor(a, b);
        let fast = start.elapsed() < Duration::from_secs(60);
        Ok(CheckResult::new(
            8,
            const_err <= 1e-12 && a.is_finite() && b.is_finite() && f <= 1.25 && fast,
            f,
            1.25,
            format!("|c-1/(4pi)|={const_err:.1e} ratio max {a:.5e}->{b:.5e} runtime<60s={fast}"),
        ))
    }

    fn decomposition(&self) -> Result<CheckResult> {
        let mut worst_sign = f64::INFINITY;
        let mut worst_residual = 0.0f64;
        let mut detail = String::new();
        for spec in [DomainSpec::rectangle(5.0, 1.0, 80), DomainSpec::disk(1.0, 32)] {
            let p = self.cache.get(&spec, 2)?;
            let corrupt = self.options.corrupt_c2_used && matches!(spec.shape, crate::domain::Shape::Rectangle { .. });
            let mut first_violation = None;
            for t in 0..50 {
                let f = trial_source(&p.domain, self.options.seed, t).sample(&p.domain);
                let sol = if corrupt { p.decompose_with_c2(&f, 0.0)? } else { crate::signed::decompose_unchecked(&p.operator, p.green.as_ref(), &p.estimate, &p.weight, &f)? };
                let r = sol.report();
                if r.scale == 0.0 {
                    continue;
                }
                worst_residual = worst_residual.max(r.residual / r.scale);
                worst_sign = worst_sign.min(r.min_oplus.min(r.min_ominus).min(r.chain_slack) / r.scale);
                if first_violation.is_none() {
                    if let Err(e) = sol.check() {
                        first_violation = Some(format!("trial {t}: {e}"));
                    }
                }
            }
            let _ = write!(
                detail,
                "{} c2_used={:.4e}{}; ",
                spec.label(),
                if corrupt { 0.0 } else { p.estimate.c2_used },
                first_violation.map_or(String::new(), |v| format!(" {v}"))
            );
        }
        let passed = worst_residual <= RESIDUAL_TOL && worst_sign >= -SIGN_TOL;
        let _ = write!(detail, "worst residual/scale={worst_residual:.3e}");
        Ok(CheckResult::new(9, passed, worst_sign, -SIGN_TOL, detail))
    }

    fn experiment(&self, kind: ExperimentKind, spec: DomainSpec, m: usize, p: f64) -> Result<(f64, f64, f64)> {
        let mut config = ExperimentConfig::new(kind, spec, m, self.options.seed);
        config.p_plus = p;
        config.p_minus = p;
        config.refine = true;
        let report = run_estimate_experiment_with(&config, &|s, m| self.cache.get(s, m))?;
        Ok((
            report.empirical_constant,
            report.refined_constant.unwrap_or(f64::NAN),
            report.refinement_ratio.unwrap_or(f64::NAN),
        ))
    }

    fn stability_result(&self, id: u32, runs: &[(&str, (f64, f64, f64))]) -> CheckResult {
        let mut worst = 1.0f64;
        let mut ok = true;
        let mut detail = String::new();
        for (name, (c, cf, ratio)) in runs {
            ok &= c.is_finite() && cf.is_finite() && (0.5..=2.0).contains(ratio);
            if (ratio.ln()).abs() >= worst.ln().abs() || !ratio.is_finite() {
                worst = *ratio;
            }
            let _ = write!(detail, "{name}: C={c:.5e} C_fine={cf:.5e} ratio={ratio:.4}; ");
        }
        CheckResult::new(id, ok, worst, 2.0, format!("{} (ratio in [0.5, 2])", detail.trim_end()))
    }

    fn theorem1(&self) -> Result<CheckResult> {
        let spec = DomainSpec::rectangle(5.0, 1.0, 80);
        let plus = self.experiment(ExperimentKind::Theorem1Plus, spec.clone(), 2, 2.0)?;
        let minus = self.experiment(ExperimentKind::Theorem1Minus, spec, 2, 2.0)?;
        Ok(self.stability_result(10, &[("theorem1_plus", plus), ("theorem1_minus", minus)]))
    }

    fn corollary_supremum(&self) -> Result<CheckResult> {
        let run = self.experiment(ExperimentKind::CorollarySupremum, DomainSpec::disk(1.0, 32), 2, 2.0)?;
        Ok(self.stability_result(11, &[("corollary_supremum", run)]))
    }

    fn hls_lemma(&self) -> Result<CheckResult> {
        let run = self.experiment(ExperimentKind::HlsLemma, DomainSpec::box3d(1.0, 1.0, 1.0, 12), 1, 1.2)?;
        Ok(self.stability_result(12, &[("hls_lemma q=6", run)]))
    }
}

/// `max(a/b, b/a)`, or infinity when either value is not positive and finite.
fn factor(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        (a / b).max(b / a)
    } else {
        f64::INFINITY
    }
}

pub const SUMMARY_HEADER: &str = "check,name,passed,measured,threshold,detail";

pub fn summary_csv(results: &[CheckResult]) -> String {
    let mut out = String::from("# polysign verify summary v1\n");
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},\"{}\"",
            r.id,
            r.name,
            r.passed,
            r.measured,
            r.threshold,
            r.detail.replace('"', "'")
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub results: Vec<CheckResult>,
    pub elapsed: Duration,
}

/// Checks `1..=12` with a fresh cache.
pub fn run_checks(options: VerifyOptions, mut progress: impl FnMut(&CheckResult)) -> SuiteRun {
    let start = Instant::now();
    let suite = Suite::new(options);
    let results = (1..CHECK_COUNT)
        .map(|id| {
            let r = suite.check(id);
            progress(&r);
            r
        })
        .collect();
    SuiteRun {
        results,
        elapsed: start.elapsed(),
    }
}

/// All thirteen checks: the suite runs twice and the two summaries must be
/// identical, and the first run must finish within the time limit.
pub fn run_full(options: VerifyOptions, mut progress: impl FnMut(&CheckResult)) -> SuiteRun {
    let start = Instant::now();
    let first = run_checks(options, &mut progress);
    let second = run_checks(options, |_| {});
    let identical = summary_csv(&first.results) == summary_csv(&second.results);
    let fast = first.elapsed < SUITE_TIME_LIMIT;
    let last = CheckResult::new(
        CHECK_COUNT,
        identical && fast,
        if identical { 1.0 } else { 0.0 },
        1.0,
        format!("identical summaries={identical} suite runtime<{}s={fast}", SUITE_TIME_LIMIT.as_secs()),
    );
    progress(&last);
    let mut results = first.results;
    results.push(last);
    SuiteRun {
        results,
        elapsed: start.elapsed(),
    }
}
