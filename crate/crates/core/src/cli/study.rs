//! Study orchestration: independent jobs on a worker pool, a single-writer
//! reduction in job order, acceptance gates and report files.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::CorrectorSet;
use crate::cli::cache::{CacheStatus, CellCache};
use crate::cli::config::{Functional, Study, StudyConfig};
use crate::error::{Error, Result};
use crate::fem::mesh::{mesh_macro, MacroMesh, Region};
use crate::geometry::{build_macro_domain, dist_to_unit_square_boundary, OuterDomain};
use crate::solve::{solve_eps_problem, solve_homogenized, MatrixData};
use crate::twoscale::{error_report, ErrorReport, FirstOrderCorrector, HomogenizedField, HoleExtension, SmoothingKernel};
use crate::verify::monitors::{extension_energies, lipschitz_ratios, quenched_cz_rows, random_corrector_field, QuenchedWeight};
use crate::verify::{estimate_korn_constant, muckenhoupt_levels, smoothing_row, MonitorEntry, MonitorReport, RateSample, RateStudy};

/// Slack on the explicit energy cap of the quenched monitor.
pub const ENERGY_CAP_SLACK: f64 = 1.05;
/// Largest admissible relative spread of the Korn constant.
pub const KORN_SPREAD: f64 = 0.25;
/// Largest admissible relative change of a functional under `h → h/2`.
pub const PLATEAU_CHANGE: f64 = 0.10;
/// Exactness of `S_ε` on constants.
pub const CONSTANT_TOL: f64 = 1e-12;

/// Cell-algebra tolerances.
pub const SYMMETRY_TOL: f64 = 1e-8;
pub const AREA_TOL: f64 = 1e-6;
pub const CHI_MEAN_TOL: f64 = 1e-10;
pub const B_MEAN_TOL: f64 = 1e-8;
pub const FLUX_RESIDUAL_TOL: f64 = 1e-6;

/// Reference points of the Lipschitz monitor: a flat boundary point and
/// the centre of the square.
/// Radius of the ball the Lipschitz ratios are normalized by.
pub const LIPSCHITZ_BASE_RADIUS: f64 = 0.5;
pub const LIPSCHITZ_POINTS: [(&str, [f64; 2]); 2] = [("boundary", [0.5, 0.0]), ("interior", [0.5, 0.5])];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    /// `>=`, `<=` or `<`.
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Gate { name: name.into(), value, relation: ">=", limit, pass: value >= limit }
    }

    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Gate { name: name.into(), value, relation: "<=", limit, pass: value <= limit }
    }

    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Gate { name: name.into(), value, relation: "<", limit, pass: value < limit }
    }
}

/// A study that could not produce its numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub study: String,
    pub epsilon: Option<f64>,
    pub message: String,
}

impl Gap {
    fn new(study: Study, epsilon: Option<f64>, err: impl std::fmt::Display) -> Self {
        Gap { study: study.name().into(), epsilon, message: err.to_string() }
    }

    pub fn to_error(&self) -> Error {
        Error::StudyFailed { study: self.study.clone(), epsilon: self.epsilon.unwrap_or(f64::NAN), message: self.message.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub functional: String,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub min_slope: f64,
    pub min_r2: f64,
    pub flagged: bool,
    pub degenerate: bool,
    pub pass: bool,
}

/// One row of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub study: String,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub studies: Vec<Study>,
    pub rates: Vec<RateRow>,
    pub fits: Vec<FitSummary>,
    pub monitors: Vec<MonitorReport>,
    pub gates: Vec<Gate>,
    pub gaps: Vec<Gap>,
    pub all_pass: bool,
}

impl RunSummary {
    /// `0` when every gate passes, `3` on a gap, `1` on a failed gate.
    pub fn exit_code(&self) -> i32 {
        if !self.gaps.is_empty() {
            3
        } else if self.all_pass {
            0
        } else {
            1
        }
    }
}

/// Results of one job, merged in job order.
#[derive(Default)]
struct Partial {
    rates: Vec<RateRow>,
    monitors: Vec<(String, MonitorEntry)>,
    gaps: Vec<Gap>,
}

impl Partial {
    fn entry(&mut self, monitor: impl Into<String>, epsilon: f64, label: impl Into<String>, value: f64) {
        self.monitors.push((monitor.into(), MonitorEntry { epsilon, label: label.into(), value }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Job {
    /// `u_ε` and everything derived from it at one `ε = 1/n`.
    Eps { n: usize, rates: bool, lipschitz: bool, extension: bool },
    Plateau,
    Smoothing(usize),
    Quenched(usize),
    Korn(usize),
    Muckenhoupt,
}

struct CellSets {
    pipeline: Option<CorrectorSet>,
    refined: Option<CorrectorSet>,
    validation: Option<CorrectorSet>,
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e6)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn domain(cfg: &StudyConfig, n: usize) -> Result<crate::geometry::MacroDomain> {
    build_macro_domain(OuterDomain::UnitSquare, n, cfg.perforation())
}

fn eps_problem(cfg: &StudyConfig, cs: &CorrectorSet, n: usize, h_per_eps: usize) -> Result<(MacroMesh, crate::fem::FieldOnMesh)> {
    let d = domain(cfg, n)?;
    let mm = mesh_macro(&d, d.epsilon / h_per_eps as f64)?;
    let u = solve_eps_problem(&mm, cs, &cfg.problem_data())?;
    Ok((mm, u))
}

fn rate_report(cfg: &StudyConfig, cs: &CorrectorSet, mm: &MacroMesh, u: &crate::fem::FieldOnMesh, kernel: &SmoothingKernel) -> Result<ErrorReport> {
    let data = cfg.problem_data();
    let u0 = HomogenizedField::new(solve_homogenized(&cs.a_hat, &data, mm.h())?)?;
    let corr = FirstOrderCorrector::new(mm, cs, &u0, kernel)?;
    let rep = error_report(&corr, u, &data, cfg.rates.tau)?;
    if !rep.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite error functional: {rep:?}")));
    }
    Ok(rep)
}

fn run_eps(cfg: &StudyConfig, cs: &CorrectorSet, kernel: &SmoothingKernel, n: usize, rates: bool, lipschitz: bool, extension: bool) -> Partial {
    let mut out = Partial::default();
    let eps = 1.0 / n as f64;
    let t = Instant::now();
    if rates || lipschitz {
        match eps_problem(cfg, cs, n, cfg.discretization.h_per_eps) {
            Ok((mm, u)) => {
                info!("ε = 1/{n}: solved {} nodes in {:.1?}", mm.perforated.num_nodes(), t.elapsed());
                if rates {
                    match rate_report(cfg, cs, &mm, &u, kernel) {
                        Ok(r) => out.rates.push(RateRow { study: "rates".into(), report: r }),
                        Err(e) => out.gaps.push(Gap::new(Study::Rates, Some(eps), e)),
                    }
                }
                if lipschitz {
                    for (name, x0) in LIPSCHITZ_POINTS {
                        match lipschitz_ratios(&u, x0, eps) {
                            Ok(rows) => {
                                // the normalizing radius gives 1 by construction
                                for (r, v) in rows.into_iter().filter(|(r, _)| *r < LIPSCHITZ_BASE_RADIUS) {
                                    out.entry(format!("lipschitz_{name}"), eps, format!("r={}", fmt_num(r)), v);
                                }
                            }
                            Err(e) => out.gaps.push(Gap::new(Study::Lipschitz, Some(eps), e)),
                        }
                    }
                }
            }
            Err(e) => {
                let study = if rates { Study::Rates } else { Study::Lipschitz };
                out.gaps.push(Gap::new(study, Some(eps), e));
            }
        }
    }
    if extension {
        let res = (|| -> Result<()> {
            let d = domain(cfg, n)?;
            let mm = mesh_macro(&d, d.epsilon / cfg.discretization.h_per_eps as f64)?;
            let ext = HoleExtension::new(&cs.full_mesh)?;
            let field = random_corrector_field(&mm, cs, cfg.run.seed);
            for (beta, en) in extension_energies(&mm, &ext, &[field], &cfg.monitors.extension_beta)? {
                out.entry(format!("extension_beta{}", fmt_num(beta)), eps, "random_corrector", en.weighted_ratio);
                out.entry(format!("extension_hole_annulus_beta{}", fmt_num(beta)), eps, "random_corrector", en.hole_to_annulus_max);
            }
            Ok(())
        })();
        if let Err(e) = res {
            out.gaps.push(Gap::new(Study::Extension, Some(eps), e));
        }
    }
    info!("ε = 1/{n}: job finished in {:.1?}", t.elapsed());
    out
}

fn run_plateau(cfg: &StudyConfig, coarse: &CorrectorSet, fine: &CorrectorSet, kernel: &SmoothingKernel) -> Partial {
    let mut out = Partial::default();
    let n = cfg.monitors.plateau_n;
    let eps = 1.0 / n as f64;
    let hpe = cfg.discretization.h_per_eps;
    let res = (|| -> Result<(ErrorReport, ErrorReport)> {
        let (mm, u) = eps_problem(cfg, coarse, n, hpe)?;
        let a = rate_report(cfg, coarse, &mm, &u, kernel)?;
        let (mm, u) = eps_problem(cfg, fine, n, 2 * hpe)?;
        let b = rate_report(cfg, fine, &mm, &u, kernel)?;
        Ok((a, b))
    })();
    match res {
        Ok((a, b)) => {
            for f in Functional::ALL {
                let (va, vb) = (functional_value(&a, f), functional_value(&b, f));
                let change = if vb == 0.0 && va == 0.0 { 0.0 } else { (va - vb).abs() / vb.abs().max(va.abs()) };
                out.entry("plateau", eps, f.name(), change);
            }
            out.rates.push(RateRow { study: "plateau_coarse".into(), report: a });
            out.rates.push(RateRow { study: "plateau_fine".into(), report: b });
        }
        Err(e) => out.gaps.push(Gap::new(Study::Plateau, Some(eps), e)),
    }
    out
}

pub fn functional_value(r: &ErrorReport, f: Functional) -> f64 {
    match f {
        Functional::H1W => r.h1_w,
        Functional::L2Err => r.l2_err,
        Functional::LpErrTau => r.lp_err_tau,
        Functional::L4Err => r.l4_err,
        Functional::Sqfn => r.sqfn,
    }
}

fn run_smoothing(kernel: &SmoothingKernel, n: usize) -> Partial {
    let mut out = Partial::default();
    let eps = 1.0 / n as f64;
    match smoothing_row(kernel, n) {
        Ok(r) => {
            out.entry("smoothing_constant_error", eps, "c=1", r.constant_error);
            out.entry("smoothing_oscillating", eps, "unweighted", r.oscillating_bound);
            out.entry("smoothing_approximation", eps, "unweighted", r.approximation);
            if let Some(v) = r.weighted_plus {
                out.entry("smoothing_weighted_plus", eps, "delta", v);
            }
            if let Some(v) = r.weighted_minus {
                out.entry("smoothing_weighted_minus", eps, "delta^-1", v);
            }
            if let Some(v) = r.weighted_approximation {
                out.entry("smoothing_weighted_approximation", eps, "delta", v);
            }
            out.entry("smoothing_young", eps, "p=2", r.young_l2);
            out.entry("smoothing_young", eps, "p=4", r.young_l4);
        }
        Err(e) => out.gaps.push(Gap::new(Study::Smoothing, Some(eps), e)),
    }
    out
}

fn weights(cfg: &StudyConfig) -> Vec<QuenchedWeight> {
    cfg.monitors
        .quenched_beta
        .iter()
        .map(|&b| if b == 0.0 { QuenchedWeight::One } else { QuenchedWeight::Delta(b) })
        .collect()
}

fn quenched_name(p: f64, w: QuenchedWeight) -> String {
    match w {
        QuenchedWeight::One => format!("quenched_p{}_rho1", fmt_num(p)),
        QuenchedWeight::Delta(b) => format!("quenched_p{}_delta{}", fmt_num(p), fmt_num(b)),
    }
}

fn run_quenched(cfg: &StudyConfig, cs: &CorrectorSet, family: &[MatrixData], n: usize) -> Partial {
    let mut out = Partial::default();
    let eps = 1.0 / n as f64;
    let t = Instant::now();
    let res = (|| -> Result<_> {
        let d = domain(cfg, n)?;
        let mm = mesh_macro(&d, d.epsilon / cfg.discretization.h_per_eps as f64)?;
        quenched_cz_rows(&mm, cs, family, &cfg.monitors.quenched_p, &weights(cfg))
    })();
    match res {
        Ok(rows) => {
            // grouped by (p, weight) so each monitor's entries are contiguous
            for &p in &cfg.monitors.quenched_p {
                for w in weights(cfg) {
                    for r in rows.iter().filter(|r| r.p == p && r.weight == w) {
                        if let Some(v) = r.ratio {
                            out.entry(quenched_name(p, w), eps, format!("f={}", r.preset), v);
                        }
                    }
                }
            }
        }
        Err(e) => out.gaps.push(Gap::new(Study::Quenched, Some(eps), e)),
    }
    info!("quenched ε = 1/{n} finished in {:.1?}", t.elapsed());
    out
}

fn run_korn(cfg: &StudyConfig, n: usize) -> Partial {
    let mut out = Partial::default();
    let eps = 1.0 / n as f64;
    let t = Instant::now();
    let res = domain(cfg, n).and_then(|d| estimate_korn_constant(&d, d.epsilon / cfg.discretization.h_per_eps as f64));
    match res {
        Ok(k) => {
            info!("Korn ε = 1/{n}: C = {} after {} iterations in {:.1?}", k.constant, k.iterations, t.elapsed());
            out.entry("korn", eps, "constant", k.constant);
        }
        Err(e) => out.gaps.push(Gap::new(Study::Korn, Some(eps), e)),
    }
    out
}

fn run_muckenhoupt(cfg: &StudyConfig) -> Partial {
    let mut out = Partial::default();
    for &beta in &cfg.monitors.muckenhoupt_beta {
        let rho = |x: [f64; 2]| dist_to_unit_square_boundary(x).powf(beta);
        match muckenhoupt_levels(rho, 2.0, cfg.monitors.muckenhoupt_max_level) {
            Ok(levels) => {
                for (k, v) in levels.iter().enumerate() {
                    out.entry("muckenhoupt", 0.5f64.powi(k as i32), format!("beta={},p=2", fmt_num(beta)), *v);
                }
            }
            Err(e) => out.gaps.push(Gap::new(Study::Muckenhoupt, None, e)),
        }
    }
    out
}

/// Cell-algebra checks on the validation cell, as monitor entries.
fn cell_checks(cs: &CorrectorSet) -> Vec<(&'static str, f64)> {
    let d = cs.diagnostics;
    let full = &cs.full_mesh;
    let hole_area = full.region_area(Region::Hole);
    let mut antisym = 0.0f64;
    for e in 0..full.num_elements() {
        for m in 0..32 {
            let (k, i, j, a, b) = (m / 16, (m / 8) % 2, (m / 4) % 2, (m / 2) % 2, m % 2);
            antisym = antisym.max((cs.flux_corrector(e, k, i, j, a, b) + cs.flux_corrector(e, i, k, j, a, b)).abs());
        }
    }
    vec![
        ("a_hat_symmetry_defect", cs.a_hat.symmetry_defect()),
        ("mu_hat_min", cs.a_hat.mu_min),
        ("theta_plus_hole_area_minus_one", (cs.theta + hole_area - 1.0).abs()),
        ("chi_mean", d.chi_mean),
        ("b_mean", d.b_mean),
        ("flux_antisymmetry", antisym),
        ("flux_weak_residual", d.flux_weak_residual),
        ("flux_dual_residual", d.flux_dual_residual),
        ("chi_residual", d.chi_residual),
        ("psi_mean", d.psi_mean),
    ]
}

fn cell_gates(entries: &[MonitorEntry]) -> Vec<Gate> {
    let mut gates = Vec::new();
    for e in entries {
        let g = match e.label.as_str() {
            "a_hat_symmetry_defect" => Gate::at_most("cell.a_hat_symmetry", e.value, SYMMETRY_TOL),
            "mu_hat_min" => Gate { name: "cell.mu_hat_min".into(), value: e.value, relation: ">", limit: 0.0, pass: e.value > 0.0 },
            "theta_plus_hole_area_minus_one" => Gate::at_most("cell.theta_plus_hole_area", e.value, AREA_TOL),
            "chi_mean" => Gate::at_most("cell.chi_mean", e.value, CHI_MEAN_TOL),
            "b_mean" => Gate::at_most("cell.b_mean", e.value, B_MEAN_TOL),
            "flux_antisymmetry" => Gate::at_most("cell.flux_antisymmetry", e.value, 0.0),
            "flux_weak_residual" => Gate::at_most("cell.flux_residual", e.value, FLUX_RESIDUAL_TOL),
            _ => continue,
        };
        gates.push(g);
    }
    gates
}

fn acquire(cache: &CellCache, cfg: &StudyConfig, h: f64, what: &str, gaps: &mut Vec<Gap>, study: Study) -> Option<CorrectorSet> {
    let t = Instant::now();
    match cache.get_or_build(&cfg.perforation(), &cfg.coefficient, h) {
        Ok((cs, status)) => {
            let s = match status {
                CacheStatus::Hit => "hit",
                CacheStatus::Miss => "miss",
                CacheStatus::Recomputed => "recomputed",
            };
            info!("{what} cell h = {h}: cache {s}, {:.1?}", t.elapsed());
            Some(cs)
        }
        Err(e) => {
            gaps.push(Gap::new(study, None, format!("{what} cell problem: {e}")));
            None
        }
    }
}

/// Runs the configured studies on a pool of `cfg.run.workers` threads.
pub fn run_studies(cfg: &StudyConfig, cache_dir: &Path) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::Config { field: "run.workers".into(), message: e.to_string() })?;
    pool.install(|| run_in_pool(cfg, cache_dir))
}

fn run_in_pool(cfg: &StudyConfig, cache_dir: &Path) -> Result<RunSummary> {
    let mut studies = cfg.run.studies.clone();
    studies.sort();
    studies.dedup();
    let has = |s: Study| studies.contains(&s);
    let cache = CellCache::new(cache_dir);
    let mut gaps = Vec::new();
    let needs_pipeline = [Study::Rates, Study::Lipschitz, Study::Extension, Study::Quenched, Study::Plateau].iter().any(|s| has(*s));
    let first = studies[0];
    let sets = CellSets {
        pipeline: needs_pipeline.then(|| acquire(&cache, cfg, cfg.pipeline_cell_h(), "pipeline", &mut gaps, first)).flatten(),
        refined: has(Study::Plateau)
            .then(|| acquire(&cache, cfg, 0.5 * cfg.pipeline_cell_h(), "refined", &mut gaps, Study::Plateau))
            .flatten(),
        validation: has(Study::Cell)
            .then(|| acquire(&cache, cfg, cfg.discretization.cell_h, "validation", &mut gaps, Study::Cell))
            .flatten(),
    };

    let mut jobs = Vec::new();
    let mut eps_n: Vec<usize> = Vec::new();
    if has(Study::Rates) || has(Study::Extension) {
        eps_n.extend(&cfg.geometry.n);
    }
    if has(Study::Lipschitz) {
        eps_n.extend(&cfg.monitors.lipschitz_n);
    }
    eps_n.sort_unstable();
    eps_n.dedup();
    for &n in &eps_n {
        let in_geom = cfg.geometry.n.contains(&n);
        jobs.push(Job::Eps {
            n,
            rates: has(Study::Rates) && in_geom,
            lipschitz: has(Study::Lipschitz) && cfg.monitors.lipschitz_n.contains(&n),
            extension: has(Study::Extension) && in_geom,
        });
    }
    if has(Study::Plateau) {
        jobs.push(Job::Plateau);
    }
    if has(Study::Smoothing) {
        jobs.extend(cfg.geometry.n.iter().map(|&n| Job::Smoothing(n)));
    }
    if has(Study::Quenched) {
        jobs.extend(cfg.monitors.quenched_n.iter().map(|&n| Job::Quenched(n)));
    }
    if has(Study::Korn) {
        jobs.extend(cfg.monitors.korn_n.iter().map(|&n| Job::Korn(n)));
    }
    if has(Study::Muckenhoupt) {
        jobs.push(Job::Muckenhoupt);
    }
    // the largest jobs first so the pool drains evenly; merge order is fixed below
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(job_weight(&jobs[i])));

    let kernel = SmoothingKernel::default();
    let family = MatrixData::family(cfg.run.seed, cfg.monitors.quenched_smooth_presets);
    let mut results: Vec<(usize, Partial)> = order
        .par_iter()
        .map(|&i| {
            let p = match (jobs[i], &sets.pipeline) {
                (Job::Eps { n, rates, lipschitz, extension }, Some(cs)) => run_eps(cfg, cs, &kernel, n, rates, lipschitz, extension),
                (Job::Plateau, Some(cs)) => match &sets.refined {
                    Some(fine) => run_plateau(cfg, cs, fine, &kernel),
                    None => Partial::default(),
                },
                (Job::Quenched(n), Some(cs)) => run_quenched(cfg, cs, &family, n),
                (Job::Smoothing(n), _) => run_smoothing(&kernel, n),
                (Job::Korn(n), _) => run_korn(cfg, n),
                (Job::Muckenhoupt, _) => run_muckenhoupt(cfg),
                // the missing cell set is already recorded as a gap
                (_, None) => Partial::default(),
            };
            (i, p)
        })
        .collect();
    results.sort_by_key(|(i, _)| *i);

    let mut merged = Partial::default();
    if let Some(cs) = &sets.validation {
        for (label, v) in cell_checks(cs) {
            merged.entry("cell", cs.h, label, v);
        }
    }
    for (_, p) in results {
        merged.rates.extend(p.rates);
        merged.monitors.extend(p.monitors);
        merged.gaps.extend(p.gaps);
    }
    gaps.extend(merged.gaps);
    let mut rates = merged.rates;
    // rows by study, then decreasing ε
    rates.sort_by(|a, b| a.study.cmp(&b.study).then(b.report.epsilon.total_cmp(&a.report.epsilon)));

    let mut grouped: Vec<(String, Vec<MonitorEntry>)> = Vec::new();
    for (name, e) in merged.monitors {
        match grouped.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push(e),
            None => grouped.push((name, vec![e])),
        }
    }

    let mut gates = Vec::new();
    let fits = fit_rates(cfg, &rates, &mut gates, &mut gaps);
    let mu0 = cfg.coefficient.ellipticity().0;
    let mut monitors = Vec::new();
    for (name, entries) in grouped {
        let distinct: std::collections::BTreeSet<u64> = entries.iter().map(|e| e.epsilon.to_bits()).collect();
        let sweep = distinct.len() >= 2;
        let trend_cap = cfg.monitors.trend_cap;
        let (tc, vc) = if name.starts_with("lipschitz_")
            || name.starts_with("extension_beta")
            || (name.starts_with("smoothing_") && name != "smoothing_constant_error")
        {
            (sweep.then_some(trend_cap), None)
        } else if name == "smoothing_constant_error" {
            (None, Some(CONSTANT_TOL))
        } else if name.starts_with("quenched_") {
            (sweep.then_some(trend_cap), name.ends_with("_rho1").then_some(ENERGY_CAP_SLACK / mu0).filter(|_| name.starts_with("quenched_p2_")))
        } else {
            (None, None)
        };
        let report = match MonitorReport::evaluate(&name, entries, tc, vc) {
            Ok(r) => r,
            Err(e) => {
                gaps.push(Gap { study: name.clone(), epsilon: None, message: e.to_string() });
                continue;
            }
        };
        if let (Some(cap), Some(t)) = (report.trend_cap, report.trend) {
            gates.push(Gate::at_most(format!("{name}.trend"), t, cap));
        } else if report.trend_cap.is_some() {
            gates.push(Gate { name: format!("{name}.trend"), value: f64::NAN, relation: "<=", limit: report.trend_cap.unwrap(), pass: false });
        }
        if let Some(cap) = report.value_cap {
            gates.push(Gate::at_most(format!("{name}.sup"), report.sup, cap));
        }
        match name.as_str() {
            "cell" => gates.extend(cell_gates(&report.entries)),
            "korn" if report.entries.len() >= 2 => {
                let lo = report.entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
                gates.push(Gate::below("korn.spread", (report.sup - lo) / lo, KORN_SPREAD));
            }
            "plateau" => {
                for e in &report.entries {
                    gates.push(Gate::below(format!("plateau.{}", e.label), e.value, PLATEAU_CHANGE));
                }
            }
            _ => {}
        }
        monitors.push(report);
    }
    for g in &gates {
        let mark = if g.pass { "PASS" } else { "FAIL" };
        info!("{mark} {} = {} (limit {} {})", g.name, fmt_num(g.value), g.relation, fmt_num(g.limit));
    }
    for g in &gaps {
        warn!("gap in `{}` at ε = {:?}: {}", g.study, g.epsilon, g.message);
    }
    let all_pass = gaps.is_empty() && gates.iter().all(|g| g.pass);
    Ok(RunSummary { studies, rates, fits, monitors, gates, gaps, all_pass })
}

fn job_weight(job: &Job) -> usize {
    match *job {
        Job::Eps { n, .. } => n * n * 4,
        Job::Quenched(n) => n * n * 8,
        Job::Korn(n) => n * n * 16,
        Job::Plateau => 1 << 10,
        Job::Smoothing(n) => n,
        Job::Muckenhoupt => 1,
    }
}

fn fit_rates(cfg: &StudyConfig, rates: &[RateRow], gates: &mut Vec<Gate>, gaps: &mut Vec<Gap>) -> Vec<FitSummary> {
    let rows: Vec<&ErrorReport> = rates.iter().filter(|r| r.study == "rates").map(|r| &r.report).collect();
    if rows.len() < 3 {
        if !rows.is_empty() {
            info!("{} rate sample(s): too few for a fit, no rate gates", rows.len());
        }
        return Vec::new();
    }
    let mut fits = Vec::new();
    for &f in &cfg.rates.functionals {
        let samples = rows
            .iter()
            .map(|r| RateSample { epsilon: r.epsilon, value: functional_value(r, f), normalizer: r.data_norm() })
            .collect();
        match RateStudy::fit(f.name(), samples) {
            Ok(study) => {
                let min_slope = cfg.min_slope(f);
                let min_r2 = f.default_gate().1;
                let pass = study.passes(min_slope, min_r2);
                gates.push(Gate::at_least(format!("rate.{}.slope", f.name()), study.slope.unwrap_or(f64::NAN), min_slope));
                if min_r2 > 0.0 {
                    gates.push(Gate::at_least(format!("rate.{}.r2", f.name()), study.r2.unwrap_or(f64::NAN), min_r2));
                }
                fits.push(FitSummary {
                    functional: f.name().into(),
                    slope: study.slope,
                    r2: study.r2,
                    min_slope,
                    min_r2,
                    flagged: study.flagged,
                    degenerate: study.degenerate,
                    pass,
                });
            }
            Err(e) => gaps.push(Gap { study: "rates".into(), epsilon: None, message: e.to_string() }),
        }
    }
    fits
}

const RATE_HEADER: [&str; 15] = [
    "study",
    "epsilon",
    "h",
    "h1_w",
    "l2_err",
    "lp_err_tau",
    "sqfn",
    "normalizer_g",
    "normalizer_F",
    "normalizer_gradF",
    "theta",
    "l4_err",
    "h1_u_minus_u0",
    "h1_w_layer",
    "h1_w_colayer",
];

/// Writes `rates.csv`, `monitors.csv` and `summary.json` into `out`.
pub fn write_outputs(summary: &RunSummary, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(out.join("rates.csv")).map_err(csv_err)?;
    w.write_record(RATE_HEADER).map_err(csv_err)?;
    for row in &summary.rates {
        let r = &row.report;
        let vals = [
            r.epsilon,
            r.h,
            r.h1_w,
            r.l2_err,
            r.lp_err_tau,
            r.sqfn,
            r.normalizer_g,
            r.normalizer_f,
            r.normalizer_grad_f,
            r.theta,
            r.l4_err,
            r.h1_u_minus_u0,
            r.h1_w_layer,
            r.h1_w_colayer,
        ];
        let mut rec = vec![row.study.clone()];
        rec.extend(vals.iter().map(|v| fmt_num(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("monitors.csv")).map_err(csv_err)?;
    w.write_record(["monitor", "epsilon", "label", "value"]).map_err(csv_err)?;
    for m in &summary.monitors {
        for e in &m.entries {
            w.write_record([m.name.as_str(), &fmt_num(e.epsilon), &e.label, &fmt_num(e.value)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&SummaryFile::from(summary))?)?;
    Ok(())
}

/// The JSON summary: fits, monitor verdicts, gates and gaps.
#[derive(Serialize)]
struct SummaryFile<'a> {
    studies: &'a [Study],
    fits: &'a [FitSummary],
    monitors: BTreeMap<&'a str, MonitorVerdict>,
    gates: &'a [Gate],
    gaps: &'a [Gap],
    all_pass: bool,
}

#[derive(Serialize)]
struct MonitorVerdict {
    sup: f64,
    trend: Option<f64>,
    trend_cap: Option<f64>,
    value_cap: Option<f64>,
    pass: bool,
}

impl<'a> From<&'a RunSummary> for SummaryFile<'a> {
    fn from(s: &'a RunSummary) -> Self {
        SummaryFile {
            studies: &s.studies,
            fits: &s.fits,
            monitors: s
                .monitors
                .iter()
                .map(|m| {
                    (m.name.as_str(), MonitorVerdict { sup: m.sup, trend: m.trend, trend_cap: m.trend_cap, value_cap: m.value_cap, pass: m.pass })
                })
                .collect(),
            gates: &s.gates,
            gaps: &s.gaps,
            all_pass: s.all_pass,
        }
    }
}
