//! The `solve` and `diagnose` commands.

use crate::config::{ConfigError, RunConfig};
use crate::report::{CheckRow, RunReport, SolutionSummary, Table};
use crate::row;
use aclab::diagnostics::{
    boundary_energy, density_fields, equipartition_report, fit_almost_monotonicity, fit_density_bounds,
    fit_xi_integral_constant, make_boundary_normal_field, make_radial_field, monotonicity_scan, phi, pohozaev_residual,
    radius_ladder, ratio_curve_from, xi_sup_bound, CurveInputs, RatioCurve, TestVectorField,
};
use aclab::io::{read_solution, write_atoms, write_interface, write_solution, IoError};
use aclab::solver::{epsilon_sweep, Solution, SolverError};
use aclab::varifold::{
    build_varifold, density_estimate, extract_interface, free_boundary_test, integrality_check, plateau,
};
use aclab::{Domain, DoubleWell};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: IoError },
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no solution files found in {0}")]
    NoSolutions(PathBuf),
}

impl RunError {
    /// Process exit status: 2 for configuration and input mismatches, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solver(_) => 3,
            _ => 2,
        }
    }
}

fn output_err(e: impl std::fmt::Display) -> RunError {
    RunError::Output(e.to_string())
}

pub fn solution_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("solution_{k:02}.txt"))
}

fn h0_of(w: &DoubleWell) -> Result<f64, RunError> {
    w.compute_h0().map(|c| c.h0).map_err(|e| RunError::Solver(e.into()))
}

/// Runs the configured sweep, writes `solution_NN.txt` per converged epsilon and `summary.csv`.
/// Failed epsilons appear in the summary with their error; the sweep continues past them.
pub fn cmd_solve(cfg: &RunConfig, out: &Path, parallel_cold: bool) -> Result<RunReport, RunError> {
    let domain = cfg.build_domain()?;
    let w = cfg.potential()?;
    let opts = cfg.sweep_options(&domain, parallel_cold)?;
    let entries = epsilon_sweep(domain, &w, &opts)?;
    std::fs::create_dir_all(out).map_err(output_err)?;
    let mut report = RunReport::default();
    for (k, e) in entries.iter().enumerate() {
        match &e.result {
            Ok(s) => {
                let path = solution_path(out, k);
                let file = File::create(&path).map_err(output_err)?;
                write_solution(BufWriter::new(file), s).map_err(|source| RunError::Io { path, source })?;
                report.summaries.push(SolutionSummary {
                    epsilon: e.epsilon,
                    lambda: s.lambda,
                    energy: s.energy(&w),
                    residual: s.residual_norm,
                    max_abs: s.field.max_abs(),
                    iterations: s.iterations,
                    converged: s.converged,
                    error: None,
                });
            }
            Err(err) => {
                log::error!("eps = {}: {err}", e.epsilon);
                report.summaries.push(SolutionSummary {
                    epsilon: e.epsilon,
                    lambda: f64::NAN,
                    energy: f64::NAN,
                    residual: f64::NAN,
                    max_abs: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(err.to_string()),
                });
            }
        }
    }
    report
        .summary_table()
        .write_csv(&out.join("summary.csv"))
        .map_err(output_err)?;
    Ok(report)
}

/// Solution files in `dir`, in sweep order.
pub fn find_solutions(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|_| RunError::NoSolutions(dir.into()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("solution_") && n.ends_with(".txt"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(RunError::NoSolutions(dir.into()));
    }
    Ok(files)
}

pub fn load_solutions(files: &[PathBuf], domain: &Arc<Domain>) -> Result<Vec<Solution>, RunError> {
    files
        .iter()
        .map(|path| {
            let f = File::open(path).map_err(|e| RunError::Io {
                path: path.clone(),
                source: e.into(),
            })?;
            read_solution(f, Some(domain.clone())).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })
        })
        .collect()
}

/// Everything one solution contributes to the report.
#[derive(Default)]
struct Part {
    tables: Vec<Table>,
    checks: Vec<CheckRow>,
    curves: Vec<RatioCurve>,
    errors: Vec<(String, String)>,
    atoms: Option<Vec<u8>>,
    interface: Option<Vec<u8>>,
}

impl Part {
    fn table(&mut self, name: &str, header: &[&str]) -> &mut Table {
        if let Some(k) = self.tables.iter().position(|t| t.name == name) {
            return &mut self.tables[k];
        }
        self.tables.push(Table::new(name, header));
        self.tables.last_mut().unwrap()
    }
}

fn interface_nodes(s: &Solution) -> Vec<usize> {
    let d = &s.field.domain;
    (0..d.len())
        .filter(|&i| d.interior_mask()[i] && s.field.values[i].abs() <= 0.5)
        .collect()
}

/// Sampled interior interface centers, deterministic in the seed.
fn sample_centers(s: &Solution, count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let nodes = interface_nodes(s);
    let count = count.min(nodes.len());
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, nodes.len(), count).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|k| s.field.domain.points()[nodes[k]]).collect()
}

/// A random field supported in a ball inside Ω, hence tangential on ∂Ω.
fn random_interior_field(dom: &Domain, center: [f64; 2], rng: &mut ChaCha8Rng) -> Option<TestVectorField> {
    let (dist, _, _) = dom.closest_boundary(center);
    let rho = (0.9 * dist).min(0.3);
    if rho < 4.0 * dom.h() {
        return None;
    }
    let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let dim = dom.dim();
    Some(TestVectorField::from_fn(dom, rho, move |p| {
        let v = [p[0] - center[0], if dim == 1 { 0.0 } else { p[1] - center[1] }];
        let s = phi((v[0] * v[0] + v[1] * v[1]).sqrt() / rho);
        let x = [c[0] + c[1] * v[0] + c[2] * v[1], c[3] + c[4] * v[0] + c[5] * v[1]];
        [s * x[0], if dim == 1 { 0.0 } else { s * x[1] }]
    }))
}

fn diagnose_one(cfg: &RunConfig, w: &DoubleWell, h0: f64, k: usize, s: &Solution) -> Part {
    let d = cfg.diagnostics.clone();
    let on = |name: &str| d.checks.iter().any(|c| c == name);
    let eps = s.epsilon();
    let dom = s.field.domain.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
    let centers = sample_centers(s, d.centers, &mut rng);
    let mut part = Part::default();
    let fail = |part: &mut Part, what: &str, e: &dyn std::fmt::Display| {
        log::warn!("eps = {eps}: {what}: {e}");
        part.errors.push((what.to_string(), e.to_string()));
    };

    if on("density") {
        let f = density_fields(&s.field, w);
        let wt = dom.weights();
        let integral = |v: &[f64]| v.iter().zip(wt).map(|(a, b)| a * b).sum::<f64>();
        let (xi_max, bound) = xi_sup_bound(&s.field, w);
        let xi_abs: Vec<f64> = f.xi.iter().map(|x| x.abs()).collect();
        part.table(
            "density",
            &[
                "epsilon", "energy", "xi_plus", "xi_minus", "xi_l1", "xi_max", "xi_bound",
            ],
        )
        .push(row![
            eps,
            integral(&f.e),
            integral(&f.xi_plus),
            integral(&f.xi_minus),
            integral(&xi_abs),
            xi_max,
            bound
        ]);
        part.checks
            .push(CheckRow::at_most(format!("xi sup bound eps={eps}"), xi_max, bound));
        part.checks.push(CheckRow::at_most(
            format!("C0 constant eps={eps}"),
            s.c0_constant(),
            10.0,
        ));
    }

    if on("ratio") {
        let inp = CurveInputs::new(&s.field, w, s.lambda);
        let mut list: Vec<[f64; 2]> = centers.clone();
        if dom.dim() == 2 {
            if let Ok(c) = extract_interface(&s.field) {
                list.extend(c.contact_points.iter().copied());
            }
        }
        let mut interior_violations = 0usize;
        for x in list {
            let radii = radius_ladder(&dom, eps, x);
            if radii.len() < 2 {
                continue;
            }
            match ratio_curve_from(&dom, &inp, x, &radii) {
                Ok(c) => {
                    let t = part.table(
                        "ratio",
                        &[
                            "diagnostic",
                            "epsilon",
                            "center_x",
                            "center_y",
                            "boundary",
                            "radius",
                            "value",
                        ],
                    );
                    for (r, (i, it)) in c.radii.iter().zip(c.i_values.iter().zip(&c.i_tilde_values)) {
                        t.push(row!["I", eps, c.center[0], c.center[1], c.boundary_centered, *r, *i]);
                        t.push(row![
                            "I_tilde",
                            eps,
                            c.center[0],
                            c.center[1],
                            c.boundary_centered,
                            *r,
                            *it
                        ]);
                    }
                    let rep = monotonicity_scan(&c, 0.0, d.monotonicity_tol);
                    if !c.boundary_centered {
                        interior_violations += rep.violations.len();
                    }
                    part.table(
                        "monotonicity",
                        &[
                            "epsilon",
                            "center_x",
                            "center_y",
                            "boundary",
                            "max_deficit",
                            "violations",
                            "fitted_c1",
                        ],
                    )
                    .push(row![
                        eps,
                        c.center[0],
                        c.center[1],
                        c.boundary_centered,
                        rep.max_deficit,
                        rep.violations.len(),
                        rep.fitted_c1.unwrap_or(f64::INFINITY)
                    ]);
                    let vt = part.table(
                        "violations",
                        &["epsilon", "center_x", "center_y", "rho_lo", "rho_hi", "deficit"],
                    );
                    for v in &rep.violations {
                        vt.push(row![eps, c.center[0], c.center[1], v.rho_lo, v.rho_hi, v.deficit]);
                    }
                    part.curves.push(c);
                }
                Err(e) => fail(&mut part, "ratio", &e),
            }
        }
        part.checks.push(CheckRow::at_most(
            format!("interior monotonicity violations eps={eps}"),
            interior_violations as f64,
            0.0,
        ));
    }

    if on("pohozaev") {
        let x = centers.first().copied().unwrap_or_else(|| dom.shrunk_box().center());
        let fields = [
            ("radial", make_radial_field(&dom, x, d.pohozaev_rho)),
            ("boundary-normal", make_boundary_normal_field(&dom, d.boundary_cutoff)),
        ];
        for (name, xf) in fields {
            match xf.and_then(|xf| pohozaev_residual(s, w, &xf)) {
                Ok(r) => part
                    .table("pohozaev", &["epsilon", "field", "lhs", "rhs", "residual"])
                    .push(row![eps, name, r.lhs, r.rhs, r.residual]),
                Err(e) => fail(&mut part, "pohozaev", &e),
            }
        }
    }

    if on("boundary-energy") {
        part.table("boundary_energy", &["epsilon", "value"])
            .push(row![eps, boundary_energy(s, w)]);
    }

    if on("varifold") {
        let v = build_varifold(&s.field, w, h0);
        let energy = s.energy(w);
        part.table(
            "varifold",
            &["epsilon", "mass", "mu_mass", "zero_normal_mass", "energy_over_h0"],
        )
        .push(row![eps, v.mass(), v.mu_mass(), v.zero_normal_mass(), energy / h0]);
        part.checks.push(CheckRow::at_most(
            format!("varifold mass eps={eps}"),
            v.mass(),
            energy / h0 + 0.01,
        ));
        let mut buf = Vec::new();
        match write_atoms(&mut buf, &v) {
            Ok(()) => part.atoms = Some(buf),
            Err(e) => fail(&mut part, "atoms", &e),
        }

        if dom.dim() == 2 {
            match extract_interface(&s.field) {
                Ok(c) => {
                    let mut buf = Vec::new();
                    if write_interface(&mut buf, &c).is_ok() {
                        part.interface = Some(buf);
                    }
                    let t = part.table("contacts", &["epsilon", "x", "y", "angle_deg"]);
                    for (p, a) in c.contact_points.iter().zip(&c.orthogonality_angles) {
                        t.push(row![eps, p[0], p[1], a.to_degrees()]);
                    }
                    part.table("interface", &["epsilon", "length", "chains", "contacts"])
                        .push(row![eps, c.length(), c.polylines.len(), c.contact_points.len()]);
                }
                Err(e) => fail(&mut part, "interface", &e),
            }
            for (j, x) in centers.iter().take(d.fields).enumerate() {
                let Some(xf) = random_interior_field(&dom, *x, &mut rng) else {
                    continue;
                };
                match free_boundary_test(&v, s, h0, &xf) {
                    Ok(r) => part
                        .table(
                            "free_boundary",
                            &["epsilon", "field", "lhs", "rhs", "deficit", "c1_norm"],
                        )
                        .push(row![eps, j, r.lhs, r.rhs, r.deficit, xf.c1_norm]),
                    Err(e) => fail(&mut part, "free_boundary", &e),
                }
            }
        }

        let mut max_dev: Option<f64> = None;
        for x in &centers {
            match integrality_check(&v, &s.field, &[*x], |p| radius_ladder(&dom, eps, p)) {
                Ok(rep) => {
                    let t = part.table(
                        "integrality",
                        &["epsilon", "x", "y", "plateau", "nearest_integer", "deviation"],
                    );
                    for r in &rep.rows {
                        t.push(row![
                            eps,
                            r.point[0],
                            r.point[1],
                            r.plateau,
                            r.nearest_integer,
                            r.deviation
                        ]);
                    }
                    max_dev = Some(max_dev.unwrap_or(0.0).max(rep.max_deviation));
                }
                Err(e) => fail(&mut part, "integrality", &e),
            }
        }
        if let Some(m) = max_dev {
            part.checks
                .push(CheckRow::at_most(format!("integrality deviation eps={eps}"), m, 0.15));
        }
        // Half density at the contact points.
        if dom.dim() == 2 {
            if let Ok(c) = extract_interface(&s.field) {
                for p in &c.contact_points {
                    let radii = radius_ladder(&dom, eps, *p);
                    if let Some(theta) = density_estimate(&v, &dom, *p, &radii).ok().as_ref().and_then(plateau) {
                        part.table("contact_density", &["epsilon", "x", "y", "plateau"])
                            .push(row![eps, p[0], p[1], theta]);
                    }
                }
            }
        }
    }
    part
}

/// Merges per-solution tables in order, so the output does not depend on scheduling.
fn merge(parts: &[Part]) -> Vec<Table> {
    let mut out: Vec<Table> = Vec::new();
    for p in parts {
        for t in &p.tables {
            match out.iter_mut().find(|o| o.name == t.name) {
                Some(o) => o.rows.extend(t.rows.iter().cloned()),
                None => out.push(t.clone()),
            }
        }
    }
    out
}

/// Runs the configured diagnostics on the given solutions (or those in `out`) and writes the tables to `out`.
pub fn cmd_diagnose(cfg: &RunConfig, files: &[PathBuf], out: &Path) -> Result<RunReport, RunError> {
    let domain = cfg.build_domain()?;
    let w = cfg.potential()?;
    let h0 = h0_of(&w)?;
    let files = if files.is_empty() {
        find_solutions(out)?
    } else {
        files.to_vec()
    };
    let sols = load_solutions(&files, &domain)?;
    let mut report = RunReport::default();
    for s in &sols {
        report.summaries.push(SolutionSummary {
            epsilon: s.epsilon(),
            lambda: s.lambda,
            energy: s.energy(&w),
            residual: s.residual_norm,
            max_abs: s.field.max_abs(),
            iterations: s.iterations,
            converged: s.converged,
            error: None,
        });
    }
    if cfg.diagnostics.checks.is_empty() {
        return Ok(report);
    }

    let parts: Vec<Part> = sols
        .par_iter()
        .enumerate()
        .map(|(k, s)| diagnose_one(cfg, &w, h0, k, s))
        .collect();
    report.tables = merge(&parts);

    if cfg.diagnostics.checks.iter().any(|c| c == "equipartition") {
        let rep = equipartition_report(&sols, &w);
        let mut t = Table::new("equipartition", &["epsilon", "kinetic", "potential", "ratio", "xi_l1"]);
        for r in &rep.rows {
            t.push(row![r.epsilon, r.kinetic, r.potential, r.ratio, r.xi_l1]);
        }
        report.tables.push(t);
        if let Some(last) = rep.rows.last() {
            report.checks.push(CheckRow::within(
                format!("equipartition ratio eps={}", last.epsilon),
                last.ratio,
                0.98,
                1.02,
            ));
        }
        let worst = rep.rows.windows(2).map(|p| p[1].xi_l1 / p[0].xi_l1).fold(0.0, f64::max);
        report.checks.push(CheckRow::new(
            "xi L1 strictly decreasing (max ratio of successive values)",
            worst,
            "< 1",
            rep.xi_strictly_decreasing,
        ));
    }

    let curves: Vec<RatioCurve> = parts.iter().flat_map(|p| p.curves.iter().cloned()).collect();
    if !curves.is_empty() {
        let (lo, hi) = fit_density_bounds(&curves);
        report.fitted.push(("density_lower".into(), lo));
        report.fitted.push(("density_upper".into(), hi));
        report
            .fitted
            .push(("xi_integral_constant".into(), fit_xi_integral_constant(&curves)));
        report
            .fitted
            .push(("almost_monotonicity_c1".into(), fit_almost_monotonicity(&curves)));
    }
    for s in &sols {
        report.checks.push(CheckRow::at_most(
            format!("residual eps={}", s.epsilon()),
            s.residual_norm,
            cfg.solver.tol,
        ));
    }
    for p in &parts {
        report.checks.extend(p.checks.iter().cloned());
    }

    let mut errors = Table::new("errors", &["epsilon", "diagnostic", "message"]);
    for (s, p) in sols.iter().zip(&parts) {
        for (what, msg) in &p.errors {
            errors.push(row![s.epsilon(), what.as_str(), msg.as_str()]);
        }
    }
    if !errors.rows.is_empty() {
        report.tables.push(errors);
    }

    std::fs::create_dir_all(out).map_err(output_err)?;
    for (k, p) in parts.iter().enumerate() {
        if let Some(b) = &p.atoms {
            std::fs::write(out.join(format!("atoms_{k:02}.csv")), b).map_err(output_err)?;
        }
        if let Some(b) = &p.interface {
            std::fs::write(out.join(format!("interface_{k:02}.csv")), b).map_err(output_err)?;
        }
    }
    report.write_tables(out).map_err(output_err)?;
    Ok(report)
}
