use aclab::solver::*;
use aclab::{Domain, DoubleWell, Shape};
use proptest::prelude::*;
use std::sync::{Arc, OnceLock};

fn quartic() -> DoubleWell {
    DoubleWell::standard_quartic()
}

fn h0() -> f64 {
    2.0 * 2f64.sqrt() / 3.0
}

fn interval(cells: usize) -> Arc<Domain> {
    Arc::new(Domain::build(Shape::Interval { length: 1.0 }, &[cells]).unwrap())
}

fn sweep_1d() -> &'static Vec<Solution> {
    static SWEEP: OnceLock<Vec<Solution>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let opts = SweepOptions {
            epsilons: vec![0.1, 0.05, 0.025],
            constraint: Some(0.0),
            init: InitRecipe::StepX { at: 0.5 },
            flow: FlowOptions {
                stop_tol: 1e-6,
                ..Default::default()
            },
            newton: NewtonOptions::default(),
            warm_start: true,
        };
        epsilon_sweep(interval(2048), &quartic(), &opts)
            .unwrap()
            .into_iter()
            .map(|e| e.result.unwrap())
            .collect()
    })
}

#[test]
fn one_dimensional_sweep_approaches_h0() {
    let w = quartic();
    for s in sweep_1d() {
        let e = s.energy(&w);
        assert!((e - h0()).abs() <= 0.03 * h0(), "eps {}: {e}", s.epsilon());
        assert!(s.residual_norm <= 1e-10, "eps {}: {}", s.epsilon(), s.residual_norm);
        assert!((s.field.mean() - 0.0).abs() <= 1e-10);
        assert!(s.c0_constant() < 10.0);
        assert!(s.converged);
    }
}

#[test]
fn two_layers_carry_twice_the_energy() {
    let w = quartic();
    let d = interval(1024);
    let init = InitRecipe::TwoLayer {
        lower: 0.375,
        upper: 0.625,
        axis: 0,
    }
    .build(d, 0.05, &w, Some(0.5))
    .unwrap();
    let s = solve_from(
        &init,
        &w,
        &FlowOptions {
            constraint: Some(0.5),
            ..Default::default()
        },
        &NewtonOptions::default(),
    )
    .unwrap();
    assert!((s.energy(&w) - 2.0 * h0()).abs() <= 0.05, "{}", s.energy(&w));
    assert!((s.field.mean() - 0.5).abs() <= 1e-10);
}

#[test]
fn flow_descends_and_conserves_the_mean() {
    let w = quartic();
    let d = Arc::new(Domain::build(Shape::Disk { radius: 1.0 }, &[48]).unwrap());
    let init = InitRecipe::Radial {
        center: [0.3, 0.1],
        radius: 0.5,
    }
    .build(d, 0.1, &w, Some(0.2))
    .unwrap();
    let mut energies = Vec::new();
    let mut means = Vec::new();
    let opts = FlowOptions {
        constraint: Some(0.2),
        max_steps: 200,
        stop_tol: 1e-8,
        ..Default::default()
    };
    let _ = gradient_flow_observed(&init, &w, &opts, &mut |_: usize, f: &Field, _: f64| {
        energies.push(assemble_energy(f, &w));
        means.push(f.mean());
    });
    assert!(energies.len() > 10);
    for p in energies.windows(2) {
        assert!(p[1] <= p[0] + 1e-12, "{} -> {}", p[0], p[1]);
    }
    for m in means {
        assert!((m - 0.2).abs() <= 1e-10);
    }
}

#[test]
fn newton_is_quadratic_from_a_flow_iterate() {
    let w = quartic();
    let init = InitRecipe::StepX { at: 0.45 }
        .build(interval(512), 0.05, &w, Some(0.0))
        .unwrap();
    let pre = gradient_flow(
        &init,
        &w,
        &FlowOptions {
            stop_tol: 1e-6,
            constraint: Some(0.0),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(pre.residual_norm <= 1e-6);
    let s = newton_refine(
        &pre,
        &w,
        &NewtonOptions {
            tol: 1e-12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(s.residual_norm <= 1e-12);
    assert!(s.newton_history.len() - 1 <= 5, "{:?}", s.newton_history);
}

#[test]
fn newton_from_the_exact_profile() {
    let w = quartic();
    let eps = 0.05;
    let q = w.heteroclinic_profile(eps).unwrap();
    let f = Field::from_fn(interval(256), eps, |p| q.value(p[0] - 0.5));
    let lambda = constrained_lambda(&f, &w);
    let start = Solution {
        residual_norm: residual_norm(&f, &w, lambda),
        field: f,
        lambda,
        iterations: 0,
        constraint: Some(0.0),
        converged: false,
        newton_history: vec![],
    };
    let s = newton_refine(
        &start,
        &w,
        &NewtonOptions {
            tol: 1e-12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(s.newton_history.len() - 1 <= 2, "{:?}", s.newton_history);
    assert!(s.residual_norm <= 1e-12);
}

#[test]
fn outside_the_basin_is_rejected() {
    let w = quartic();
    let f = Field::constant(interval(64), 0.1, 0.3);
    let start = Solution {
        residual_norm: residual_norm(&f, &w, 0.0),
        field: f,
        lambda: 0.0,
        iterations: 0,
        constraint: None,
        converged: false,
        newton_history: vec![],
    };
    let err = newton_refine(
        &start,
        &w,
        &NewtonOptions {
            basin: 1e-3,
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, SolverError::OutsideNewtonBasin { .. }));
}

#[test]
fn sweep_gates() {
    let w = quartic();
    let opts = |eps: Vec<f64>| SweepOptions {
        epsilons: eps,
        constraint: None,
        init: InitRecipe::Constant { value: 0.5 },
        flow: FlowOptions::default(),
        newton: NewtonOptions::default(),
        warm_start: true,
    };
    assert!(matches!(
        epsilon_sweep(interval(64), &w, &opts(vec![0.01])),
        Err(SolverError::UnresolvedInterface { .. })
    ));
    assert!(matches!(
        epsilon_sweep(interval(64), &w, &opts(vec![0.05, 0.1])),
        Err(SolverError::InvalidParameter(_))
    ));
}

#[test]
fn cold_parallel_sweep_matches_warm_energies() {
    let w = quartic();
    let mk = |warm| SweepOptions {
        epsilons: vec![0.1, 0.05],
        constraint: Some(0.0),
        init: InitRecipe::StepX { at: 0.5 },
        flow: FlowOptions::default(),
        newton: NewtonOptions::default(),
        warm_start: warm,
    };
    let a = epsilon_sweep(interval(512), &w, &mk(true)).unwrap();
    let b = epsilon_sweep(interval(512), &w, &mk(false)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
        assert!((x.energy(&w) - y.energy(&w)).abs() < 1e-9);
    }
}

#[test]
fn rectangle_sweep_finds_a_straight_interface() {
    let w = quartic();
    let d = Arc::new(
        Domain::build(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            &[256],
        )
        .unwrap(),
    );
    let opts = SweepOptions {
        epsilons: vec![0.08, 0.04, 0.02],
        constraint: Some(0.0),
        init: InitRecipe::StepX { at: 0.5 },
        flow: FlowOptions {
            stop_tol: 1e-3,
            max_steps: 400,
            ..Default::default()
        },
        newton: NewtonOptions::default(),
        warm_start: true,
    };
    for e in epsilon_sweep(d, &w, &opts).unwrap() {
        let s = e.result.unwrap();
        assert!(
            (s.energy(&w) - h0()).abs() <= 0.05 * h0(),
            "eps {}: {}",
            e.epsilon,
            s.energy(&w)
        );
        assert!(s.residual_norm <= 1e-10);
    }
}

#[test]
fn neumann_normal_derivative_is_first_order() {
    // One-sided second-order normal derivative at x = 0 of converged 1D solutions.
    let w = quartic();
    let mut prev: Option<f64> = None;
    for cells in [256, 512, 1024] {
        let init = InitRecipe::StepX { at: 0.3 }
            .build(interval(cells), 0.1, &w, Some(-0.4))
            .unwrap();
        let s = solve_from(
            &init,
            &w,
            &FlowOptions {
                constraint: Some(-0.4),
                ..Default::default()
            },
            &NewtonOptions::default(),
        )
        .unwrap();
        let h = s.field.domain.h();
        let u = &s.field.values;
        let dn = ((-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)).abs();
        if let Some(p) = prev {
            assert!(dn <= 0.6 * p + 1e-12, "{p} -> {dn}");
        }
        prev = Some(dn);
    }
}

fn random_field(dom: Arc<Domain>, eps: f64, vals: &[f64]) -> Field {
    let n = dom.len();
    Field::new(dom, eps, (0..n).map(|i| vals[i % vals.len()]).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_is_the_energy_derivative(
        vals in prop::collection::vec(-1.3f64..1.3, 40..80),
        lambda in -0.5f64..0.5,
        shape in 0usize..3,
    ) {
        let w = quartic();
        let dom = Arc::new(match shape {
            0 => Domain::build(Shape::Interval { length: 1.0 }, &[24]).unwrap(),
            1 => Domain::build(Shape::Rectangle { width: 1.5, height: 1.0 }, &[24, 16]).unwrap(),
            _ => Domain::build(Shape::Disk { radius: 1.0 }, &[16]).unwrap(),
        });
        let f = random_field(dom.clone(), 0.2, &vals);
        let g = energy_gradient(&f, &w, lambda);
        let wt = dom.weights();
        for i in (0..dom.len()).step_by(3) {
            let step = 1e-4;
            let mut fp = f.clone();
            fp.values[i] += step;
            let mut fm = f.clone();
            fm.values[i] -= step;
            // d/du_i [E - λ Σ w u] = w_i g_i.
            let fd = (assemble_energy(&fp, &w) - assemble_energy(&fm, &w)) / (2.0 * step) - lambda * wt[i];
            let an = wt[i] * g[i];
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(wt[i]), "node {i}: {fd} vs {an}");
        }
    }
}
