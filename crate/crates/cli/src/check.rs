//! The built-in acceptance suite run by `aclab check`.
//!
//! Expensive solves are computed once per [`Suite`] and shared between criteria.

use crate::report::CheckRow;
use aclab::diagnostics::{
    equipartition_report, make_radial_field, monotonicity_scan, phi, pohozaev_residual, radius_ladder,
    ratio_curve_from, xi_sup_bound, CurveInputs, TestVectorField,
};
use aclab::solver::{epsilon_sweep, solve_from, FlowOptions, InitRecipe, NewtonOptions, Solution, SweepOptions};
use aclab::varifold::{
    build_varifold, density_estimate, extract_interface, free_boundary_test, integrality_check, plateau, DensityCurve,
    InterfaceCurve,
};
use aclab::{Domain, DoubleWell, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

/// Seeded faults for exercising the failure paths of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Replace the quartic by a user polynomial (ascending coefficients).
    pub potential: Option<Vec<f64>>,
    /// Multiplies the argument of the heteroclinic oracle.
    pub heteroclinic_scale: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            potential: None,
            heteroclinic_scale: 1.0,
            seed: 0,
        }
    }
}

impl CheckOptions {
    /// `(1 - s²)²/4 + 0.025 (1 + s)²(2 - s)`: only `W(1) = 0.1` is broken.
    pub fn tampered_potential() -> Self {
        CheckOptions {
            potential: Some(vec![0.30, 0.075, -0.5, -0.025, 0.25]),
            ..Default::default()
        }
    }

    pub fn perturbed_heteroclinic() -> Self {
        CheckOptions {
            heteroclinic_scale: 1.0 + 1e-3,
            ..Default::default()
        }
    }
}

pub const CRITERIA: [(usize, &str, f64); 10] = [
    (1, "h0 oracle", 1.0),
    (2, "heteroclinic exactness", 1.0),
    (3, "1D Gamma-limit", 30.0),
    (4, "equipartition and vanishing discrepancy", 30.0),
    (5, "2D straight interface", 300.0),
    (6, "Pohozaev residual order", 300.0),
    (7, "density ratios and monotonicity", 180.0),
    (8, "free-boundary first variation", 300.0),
    (9, "integrality", 120.0),
    (10, "slack bounds", 1200.0),
];

/// Total budget of the whole suite, in seconds.
pub const SUITE_BUDGET: f64 = 1200.0;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    /// Gating sub-checks, including the runtime budget.
    pub rows: Vec<CheckRow>,
    /// Reported, non-gating rows.
    pub info: Vec<CheckRow>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        let failed = self.rows.iter().filter(|r| !r.passed).count();
        let mut out = vec![format!(
            "{} #{} {} ({} checks, {} failed, {:.1} s)",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.rows.len(),
            failed,
            self.seconds
        )];
        for r in &self.rows {
            out.push(format!("    {}", r.line()));
        }
        for r in &self.info {
            out.push(format!("    INFO {}", r.line().split_once(' ').map_or("", |x| x.1)));
        }
        out
    }
}

type Cached<T> = OnceLock<Result<T, String>>;

/// Lazily computed solves shared between criteria.
pub struct Suite {
    pub options: CheckOptions,
    potential: Cached<DoubleWell>,
    sweep_1d: Cached<Vec<Solution>>,
    rect: Cached<Vec<Solution>>,
    coarse: Cached<Vec<Solution>>,
    disk: Cached<Solution>,
    two_band: Cached<Solution>,
}

fn fetch<T>(cell: &Cached<T>, make: impl FnOnce() -> Result<T, String>) -> Result<&T, String> {
    cell.get_or_init(make).as_ref().map_err(|e| e.clone())
}

/// `2√2/3`, the closed form of `∫_{-1}^{1} (1 - s²)/√2 ds`.
pub fn h0_closed_form() -> f64 {
    2.0 * 2f64.sqrt() / 3.0
}

/// Radius of the circle orthogonal to the unit circle (center `(√(1+R²), 0)`) whose
/// lens with the unit disk has area `area`, by bisection on the lens area.
pub fn orthogonal_arc_radius(area: f64) -> f64 {
    let lens = |r: f64| {
        let d = (1.0 + r * r).sqrt();
        (1.0 / d).acos() + r * r * (r / d).acos() - r
    };
    let (mut lo, mut hi) = (1e-6f64, 1e6f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if lens(mid) < area {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fraction of the unit disk occupied by `{u < 0}` when the mean of `u` is `m`.
fn negative_area(m: f64) -> f64 {
    0.5 * (1.0 - m) * PI
}

pub const DISK_MEAN: f64 = 0.3;
pub const DISK_EPSILON: f64 = 0.02;
pub const DISK_CELLS: usize = 400;
pub const RECT_EPSILONS: [f64; 3] = [0.08, 0.04, 0.02];
pub const POHOZAEV_EPSILON: f64 = 0.04;

fn flow(m: f64) -> FlowOptions {
    FlowOptions {
        constraint: Some(m),
        stop_tol: 1e-3,
        max_steps: 2000,
        ..Default::default()
    }
}

fn unit_square(cells: usize) -> Result<Arc<Domain>, String> {
    Domain::build(
        Shape::Rectangle {
            width: 1.0,
            height: 1.0,
        },
        &[cells],
    )
    .map(Arc::new)
    .map_err(|e| e.to_string())
}

fn sweep(dom: Arc<Domain>, w: &DoubleWell, epsilons: &[f64], flow: FlowOptions) -> Result<Vec<Solution>, String> {
    let opts = SweepOptions {
        epsilons: epsilons.to_vec(),
        constraint: Some(0.0),
        init: InitRecipe::StepX { at: 0.5 },
        flow,
        newton: NewtonOptions::default(),
        warm_start: true,
    };
    epsilon_sweep(dom, w, &opts)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|e| e.result.map_err(|err| format!("eps = {}: {err}", e.epsilon)))
        .collect()
}

impl Suite {
    pub fn new(options: CheckOptions) -> Self {
        Suite {
            options,
            potential: OnceLock::new(),
            sweep_1d: OnceLock::new(),
            rect: OnceLock::new(),
            coarse: OnceLock::new(),
            disk: OnceLock::new(),
            two_band: OnceLock::new(),
        }
    }

    pub fn potential(&self) -> Result<&DoubleWell, String> {
        fetch(&self.potential, || {
            let w = match &self.options.potential {
                None => DoubleWell::standard_quartic(),
                Some(c) => DoubleWell::from_polynomial(c.clone()).map_err(|e| e.to_string())?,
            };
            w.check_invariants().map_err(|e| e.to_string())?;
            Ok(w)
        })
    }

    fn h0(&self) -> Result<f64, String> {
        self.potential()?.compute_h0().map(|c| c.h0).map_err(|e| e.to_string())
    }

    /// 2048 cells, m = 0, ε ∈ {0.1, 0.05, 0.025}.
    pub fn sweep_1d(&self) -> Result<&Vec<Solution>, String> {
        fetch(&self.sweep_1d, || {
            let w = self.potential()?;
            let d = Domain::build(Shape::Interval { length: 1.0 }, &[2048]).map_err(|e| e.to_string())?;
            let f = FlowOptions {
                stop_tol: 1e-6,
                ..Default::default()
            };
            sweep(Arc::new(d), w, &[0.1, 0.05, 0.025], f)
        })
    }

    /// Unit square, 256², m = 0, ε ∈ {0.08, 0.04, 0.02}.
    pub fn rect(&self) -> Result<&Vec<Solution>, String> {
        fetch(&self.rect, || {
            let w = self.potential()?;
            let f = FlowOptions {
                stop_tol: 1e-3,
                max_steps: 400,
                ..Default::default()
            };
            sweep(unit_square(256)?, w, &RECT_EPSILONS, f)
        })
    }

    pub fn rect_at(&self, eps: f64) -> Result<&Solution, String> {
        self.rect()?
            .iter()
            .find(|s| s.epsilon() == eps)
            .ok_or_else(|| format!("no rectangle solution at eps = {eps}"))
    }

    /// The straight-interface problem at ε = 0.04 on 64² and 128².
    pub fn coarse(&self) -> Result<&Vec<Solution>, String> {
        fetch(&self.coarse, || {
            let w = self.potential()?;
            [64, 128]
                .into_iter()
                .map(|n| {
                    let init = InitRecipe::StepX { at: 0.5 }
                        .build(unit_square(n)?, POHOZAEV_EPSILON, w, Some(0.0))
                        .map_err(|e| e.to_string())?;
                    solve_from(&init, w, &flow(0.0), &NewtonOptions::default()).map_err(|e| e.to_string())
                })
                .collect()
        })
    }

    /// Unit disk, 400 cells across, m = 0.3, ε = 0.02, started from the orthogonal arc.
    pub fn disk(&self) -> Result<&Solution, String> {
        fetch(&self.disk, || {
            let w = self.potential()?;
            let d = Domain::build(Shape::Disk { radius: 1.0 }, &[DISK_CELLS]).map_err(|e| e.to_string())?;
            let r = orthogonal_arc_radius(negative_area(DISK_MEAN));
            let init = InitRecipe::Radial {
                center: [(1.0 + r * r).sqrt(), 0.0],
                radius: r,
            }
            .build(Arc::new(d), DISK_EPSILON, w, Some(DISK_MEAN))
            .map_err(|e| e.to_string())?;
            solve_from(&init, w, &flow(DISK_MEAN), &NewtonOptions::default()).map_err(|e| e.to_string())
        })
    }

    /// A band `{0.4 < y < 0.6}` of the minus phase on 128², m = 0.6, ε = 0.02.
    pub fn two_band(&self) -> Result<&Solution, String> {
        fetch(&self.two_band, || {
            let w = self.potential()?;
            let init = InitRecipe::TwoLayer {
                lower: 0.4,
                upper: 0.6,
                axis: 1,
            }
            .build(unit_square(128)?, 0.02, w, Some(0.6))
            .map_err(|e| e.to_string())?;
            solve_from(&init, w, &flow(0.6), &NewtonOptions::default()).map_err(|e| e.to_string())
        })
    }

    pub fn run(&self, id: usize) -> CriterionResult {
        let (_, title, budget) = CRITERIA[id - 1];
        let start = Instant::now();
        let mut rows = Vec::new();
        let mut info = Vec::new();
        let body = match id {
            1 => self.c1_h0(&mut rows),
            2 => self.c2_heteroclinic(&mut rows),
            3 => self.c3_gamma_limit(&mut rows),
            4 => self.c4_equipartition(&mut rows),
            5 => self.c5_straight(&mut rows),
            6 => self.c6_pohozaev(&mut rows),
            7 => self.c7_density(&mut rows),
            8 => self.c8_free_boundary(&mut rows),
            9 => self.c9_integrality(&mut rows, &mut info),
            10 => self.c10_slack(&mut rows),
            _ => Err(format!("unknown criterion {id}")),
        };
        if let Err(e) = body {
            rows.push(CheckRow::new(e, f64::NAN, "completes", false));
        }
        let seconds = start.elapsed().as_secs_f64();
        rows.push(CheckRow::at_most(format!("#{id} runtime [s]"), seconds, budget));
        CriterionResult {
            id,
            title,
            rows,
            info,
            seconds,
        }
    }

    fn c1_h0(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential().map_err(|e| format!("DoubleWell invariants: {e}"))?;
        rows.push(CheckRow::new("DoubleWell invariants", 0.0, "hold", true));
        let h0 = w.compute_h0().map_err(|e| e.to_string())?.h0;
        rows.push(CheckRow::at_most("|h0 - 2√2/3|", (h0 - h0_closed_form()).abs(), 1e-8));
        Ok(())
    }

    fn c2_heteroclinic(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let s = self.options.heteroclinic_scale;
        let mut ode = 0.0f64;
        let mut disc = 0.0f64;
        for eps in [0.1, 0.05, 0.025, 0.01] {
            let q = w.heteroclinic_profile(eps).map_err(|e| e.to_string())?;
            for k in 0..=400 {
                let t = -10.0 * eps + 20.0 * eps * k as f64 / 400.0;
                let (u, du, d2u) = (
                    q.value(s * t),
                    s * q.derivative(s * t),
                    s * s * q.second_derivative(s * t),
                );
                ode = ode.max((eps * eps * d2u - w.derivative(u)).abs());
                disc = disc.max((0.5 * eps * du * du - w.value(u) / eps).abs());
            }
        }
        rows.push(CheckRow::at_most("ODE residual sup |ε²q'' - W'(q)|", ode, 1e-12));
        rows.push(CheckRow::at_most("discrepancy sup |εq'²/2 - W(q)/ε|", disc, 1e-12));
        Ok(())
    }

    fn c3_gamma_limit(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let sols = self.sweep_1d()?;
        let mut gaps = Vec::new();
        for s in sols {
            let e = s.energy(w);
            gaps.push((e - h0).abs());
            rows.push(CheckRow::at_most(
                format!("|E - h0|/h0 at eps={}", s.epsilon()),
                (e - h0).abs() / h0,
                0.03,
            ));
            rows.push(CheckRow::at_most(
                format!("residual at eps={}", s.epsilon()),
                s.residual_norm,
                1e-10,
            ));
        }
        let worst = gaps.windows(2).map(|p| p[1] / p[0]).fold(0.0, f64::max);
        rows.push(CheckRow::new(
            "energies monotone toward h0 (max ratio of successive |E - h0|)",
            worst,
            "< 1",
            worst < 1.0,
        ));
        Ok(())
    }

    fn c4_equipartition(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let rep = equipartition_report(self.sweep_1d()?, w);
        let last = rep.rows.last().ok_or("empty sweep")?;
        rows.push(CheckRow::within(
            format!("kinetic/potential at eps={}", last.epsilon),
            last.ratio,
            0.98,
            1.02,
        ));
        let worst = rep.rows.windows(2).map(|p| p[1].xi_l1 / p[0].xi_l1).fold(0.0, f64::max);
        rows.push(CheckRow::new(
            "xi L1 strictly decreasing (max ratio of successive ∫|ξ|)",
            worst,
            "< 1",
            rep.xi_strictly_decreasing,
        ));
        Ok(())
    }

    fn c5_straight(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let s = self.rect_at(0.02)?;
        let e = s.energy(w);
        rows.push(CheckRow::at_most("|E - h0|/h0", (e - h0).abs() / h0, 0.05));
        rows.push(CheckRow::at_most("residual", s.residual_norm, 1e-10));
        let c = extract_interface(&s.field).map_err(|e| e.to_string())?;
        rows.push(CheckRow::at_most("|length - 1|", (c.length() - 1.0).abs(), 0.05));
        rows.push(CheckRow::at_least("contact points", c.contact_points.len() as f64, 2.0));
        let dev = c
            .orthogonality_angles
            .iter()
            .map(|a| (a.to_degrees() - 90.0).abs())
            .fold(0.0, f64::max);
        rows.push(CheckRow::at_most("max |contact angle - 90°| [deg]", dev, 5.0));
        Ok(())
    }

    fn c6_pohozaev(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let mut sols: Vec<&Solution> = self.coarse()?.iter().collect();
        sols.push(self.rect_at(POHOZAEV_EPSILON)?);
        // Interior: support inside Ω. Boundary: the ball crosses y = 0.
        for (name, center, rho, min_order) in [
            ("interior", [0.47, 0.53], 0.3, 1.8),
            ("boundary-crossing", [0.5, 0.15], 0.3, 0.8),
        ] {
            let mut res = Vec::new();
            for s in &sols {
                let x = make_radial_field(&s.field.domain, center, rho).map_err(|e| e.to_string())?;
                res.push(pohozaev_residual(s, w, &x).map_err(|e| e.to_string())?.residual);
            }
            let order = res
                .windows(2)
                .map(|p| (p[0] / p[1]).log2())
                .fold(f64::INFINITY, f64::min);
            let listed: Vec<String> = res.iter().map(|r| format!("{r:.3e}")).collect();
            rows.push(CheckRow::at_least(
                format!("{name} observed order (residuals {})", listed.join(", ")),
                order,
                min_order,
            ));
        }
        Ok(())
    }

    /// Ten interface vertices at least 0.25 from ∂Ω, evenly spread along the curve.
    fn interior_samples(&self, c: &InterfaceCurve, dom: &Domain, count: usize) -> Vec<[f64; 2]> {
        let eligible: Vec<[f64; 2]> = c
            .polylines
            .iter()
            .flatten()
            .copied()
            .filter(|p| dom.closest_boundary(*p).0 >= 0.25)
            .collect();
        if eligible.len() <= count {
            return eligible;
        }
        (0..count)
            .map(|k| eligible[(2 * k + 1) * eligible.len() / (2 * count)])
            .collect()
    }

    fn c7_density(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let s = self.rect_at(0.02)?;
        let d = &s.field.domain;
        let inp = CurveInputs::new(&s.field, w, s.lambda);
        let c = extract_interface(&s.field).map_err(|e| e.to_string())?;
        let samples = self.interior_samples(&c, d, 10);
        rows.push(CheckRow::at_least("interior samples", samples.len() as f64, 10.0));
        let (mut lo, mut hi, mut violations) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for x in &samples {
            let curve = ratio_curve_from(d, &inp, *x, &radius_ladder(d, s.epsilon(), *x)).map_err(|e| e.to_string())?;
            let p = plateau(&DensityCurve {
                center: curve.center,
                boundary_flag: curve.boundary_centered,
                radii: curve.radii.clone(),
                theta: curve.i_values.clone(),
            })
            .unwrap_or(f64::NAN);
            lo = lo.min(p / h0);
            hi = hi.max(p / h0);
            violations += monotonicity_scan(&curve, 0.0, 1e-3).violations.len();
        }
        rows.push(CheckRow::at_least("min interior I plateau / h0", lo, 0.9));
        rows.push(CheckRow::at_most("max interior I plateau / h0", hi, 1.1));
        rows.push(CheckRow::at_most(
            "interior monotonicity violations at c1 = 0",
            violations as f64,
            0.0,
        ));

        let v = build_varifold(&s.field, w, h0);
        for p in &c.contact_points {
            let dc = density_estimate(&v, d, *p, &radius_ladder(d, s.epsilon(), *p)).map_err(|e| e.to_string())?;
            let theta = plateau(&dc).unwrap_or(f64::NAN);
            rows.push(CheckRow::within(
                format!("contact Θ plateau at ({:.3}, {:.3})", p[0], p[1]),
                theta,
                0.4,
                0.6,
            ));
        }

        let disk = self.disk()?;
        let dd = &disk.field.domain;
        let inp = CurveInputs::new(&disk.field, w, disk.lambda);
        let mut centers = extract_interface(&disk.field)
            .map_err(|e| e.to_string())?
            .contact_points;
        centers.extend((0..6).map(|k| {
            let t = 2.0 * PI * (k as f64 + 0.25) / 6.0;
            [t.cos(), t.sin()]
        }));
        let mut worst = 0.0f64;
        for x in centers {
            let curve =
                ratio_curve_from(dd, &inp, x, &radius_ladder(dd, disk.epsilon(), x)).map_err(|e| e.to_string())?;
            if !curve.boundary_centered {
                return Err(format!("disk ball at {x:?} is not boundary-centered"));
            }
            worst = worst.max(monotonicity_scan(&curve, 0.0, 1e-3).fitted_c1.unwrap_or(f64::INFINITY));
        }
        rows.push(CheckRow::at_most(
            "largest fitted c1 on disk boundary balls",
            worst,
            50.0,
        ));
        Ok(())
    }

    fn c8_free_boundary(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let s = self.disk()?;
        let d = &s.field.domain;
        let v = build_varifold(&s.field, w, h0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let x = random_disk_field(d, &mut rng);
            if !x.tangential_on_boundary {
                return Err(format!("random field not tangential ({:e})", x.max_normal_component(d)));
            }
            let r = free_boundary_test(&v, s, h0, &x).map_err(|e| e.to_string())?;
            worst = worst.max(r.deficit / x.c1_norm);
        }
        rows.push(CheckRow::at_most("max deficit / c1_norm over 5 fields", worst, 0.1));
        let kappa = 1.0 / orthogonal_arc_radius(negative_area(DISK_MEAN));
        let oracle = h0 * kappa / 2.0;
        rows.push(CheckRow::at_most(
            format!("||λ| - h0κ/2| / (h0κ/2), λ = {:.6}, h0κ/2 = {oracle:.6}", s.lambda),
            (s.lambda.abs() - oracle).abs() / oracle,
            0.15,
        ));
        Ok(())
    }

    fn c9_integrality(&self, rows: &mut Vec<CheckRow>, info: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let s = self.rect_at(0.02)?;
        let d = s.field.domain.clone();
        let v = build_varifold(&s.field, w, h0);
        let c = extract_interface(&s.field).map_err(|e| e.to_string())?;
        let samples = self.interior_samples(&c, &d, 20);
        let eps = s.epsilon();
        let rep =
            integrality_check(&v, &s.field, &samples, |p| radius_ladder(&d, eps, p)).map_err(|e| e.to_string())?;
        rows.push(CheckRow::at_least("samples", rep.rows.len() as f64, 20.0));
        let off = rep.rows.iter().filter(|r| r.nearest_integer != 1).count();
        rows.push(CheckRow::at_most("samples with nearest integer != 1", off as f64, 0.0));
        rows.push(CheckRow::at_most("max deviation", rep.max_deviation, 0.15));

        // Two sheets seen from the middle of the band at radii beyond its width.
        match self.two_band() {
            Ok(b) => {
                let vb = build_varifold(&b.field, w, h0);
                let bd = &b.field.domain;
                let x = [0.5, 0.5];
                let radii = [0.3, 0.35, 0.4, 0.45];
                let theta = density_estimate(&vb, bd, x, &radii)
                    .ok()
                    .as_ref()
                    .and_then(plateau)
                    .unwrap_or(f64::NAN);
                let parity = theta.round() as i64 % 2 == 0;
                info.push(CheckRow::new("two-band energy / h0", b.energy(w) / h0, "about 2", true));
                info.push(CheckRow::new(
                    format!("two-band plateau at band center (even parity {parity})"),
                    theta,
                    "nearest integer even",
                    parity,
                ));
            }
            Err(e) => info.push(CheckRow::new(
                format!("two-band solve: {e}"),
                f64::NAN,
                "completes",
                false,
            )),
        }
        Ok(())
    }

    fn c10_slack(&self, rows: &mut Vec<CheckRow>) -> Result<(), String> {
        let w = self.potential()?;
        let h0 = self.h0()?;
        let mut sols: Vec<&Solution> = Vec::new();
        sols.extend(self.sweep_1d()?.iter());
        sols.extend(self.rect()?.iter());
        sols.extend(self.coarse()?.iter());
        sols.push(self.disk()?);
        if let Ok(b) = self.two_band() {
            sols.push(b);
        }
        let (mut xi, mut c0, mut mass) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for s in &sols {
            let (m, bound) = xi_sup_bound(&s.field, w);
            xi = xi.max(m / bound);
            c0 = c0.max(s.c0_constant());
            let v = build_varifold(&s.field, w, h0);
            mass = mass.max(v.mass() - s.energy(w) / h0);
        }
        rows.push(CheckRow::at_most(
            format!("max ξ / ε^(-4/5) over {} solutions", sols.len()),
            xi,
            1.0,
        ));
        rows.push(CheckRow::at_most("max (max|u| - 1)/ε", c0, 10.0));
        rows.push(CheckRow::at_most("max (mass - E/h0)", mass, 0.01));
        Ok(())
    }
}

/// `a(p)(-y, x) + (1 - |p|²) b(p)` with random affine `a` and `b`: tangential on the unit circle.
fn random_disk_field(dom: &Domain, rng: &mut ChaCha8Rng) -> TestVectorField {
    let c: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let center = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
    TestVectorField::from_fn(dom, 1.0, move |p| {
        let a = c[0] + c[1] * p[0] + c[2] * p[1];
        let bump = 1.0 - p[0] * p[0] - p[1] * p[1];
        let s = phi(((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() / 1.5);
        let b = [c[3] + c[4] * p[0] + c[5] * p[1], c[6] + c[7] * p[0] + c[8] * p[1]];
        [a * -p[1] + bump * s * b[0], a * p[0] + bump * s * b[1]]
    })
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub criteria: Vec<CriterionResult>,
    pub seconds: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed()) && self.seconds <= SUITE_BUDGET
    }

    pub fn first_failure(&self) -> Option<&CheckRow> {
        self.criteria.iter().flat_map(|c| c.rows.iter()).find(|r| !r.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.criteria.iter().flat_map(|c| c.lines()).collect();
        let total = CheckRow::at_most("total runtime [s]", self.seconds, SUITE_BUDGET);
        out.push(total.line());
        let failed = self.criteria.iter().filter(|c| !c.passed()).count();
        out.push(format!(
            "{} of {} criteria passed",
            self.criteria.len() - failed,
            self.criteria.len()
        ));
        out
    }
}

/// Runs all criteria in order. With a broken potential the suite stops after #1;
/// with `fail_fast` it stops after the first failing criterion.
pub fn run_check(options: CheckOptions, fail_fast: bool) -> CheckReport {
    let start = Instant::now();
    let suite = Suite::new(options);
    let mut criteria = Vec::new();
    for (id, _, _) in CRITERIA {
        let r = suite.run(id);
        for l in r.lines() {
            log::info!("{l}");
        }
        let failed = !r.passed();
        criteria.push(r);
        if (id == 1 && suite.potential().is_err()) || (fail_fast && failed) {
            break;
        }
    }
    CheckReport {
        criteria,
        seconds: start.elapsed().as_secs_f64(),
    }
}
