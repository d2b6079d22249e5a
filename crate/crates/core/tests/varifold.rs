use aclab::diagnostics::{make_radial_field, phi, TestVectorField};
use aclab::solver::*;
use aclab::varifold::*;
use aclab::{Domain, DoubleWell, Shape};
use proptest::prelude::*;
use std::sync::{Arc, OnceLock};

fn h0() -> f64 {
    2.0 * 2f64.sqrt() / 3.0
}

fn square(n: usize) -> Arc<Domain> {
    Arc::new(
        Domain::build(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            &[n],
        )
        .unwrap(),
    )
}

/// Horizontal interface `y = 0.5` on a 128² square, ε = 0.02.
fn flat() -> &'static (Solution, DiscreteVarifold) {
    static S: OnceLock<(Solution, DiscreteVarifold)> = OnceLock::new();
    S.get_or_init(|| {
        let w = DoubleWell::standard_quartic();
        let f = InitRecipe::StepY { at: 0.5 }
            .build(square(128), 0.02, &w, Some(0.0))
            .unwrap();
        let flow = FlowOptions {
            constraint: Some(0.0),
            stop_tol: 1e-3,
            max_steps: 400,
            ..Default::default()
        };
        let s = solve_from(&f, &w, &flow, &NewtonOptions::default()).unwrap();
        let v = build_varifold(&s.field, &w, h0());
        (s, v)
    })
}

#[test]
fn one_dimensional_mass_is_one() {
    let w = DoubleWell::standard_quartic();
    let d = Arc::new(Domain::build(Shape::Interval { length: 1.0 }, &[2048]).unwrap());
    let q = w.heteroclinic_profile(0.025).unwrap();
    let f = Field::from_fn(d, 0.025, |p| q.value(p[0] - 0.5));
    let v = build_varifold(&f, &w, h0());
    assert!((v.mass() - 1.0).abs() <= 0.02, "{}", v.mass());
}

#[test]
fn straight_interface_mass_and_normalization() {
    let w = DoubleWell::standard_quartic();
    let (s, v) = flat();
    assert!((v.mass() - 1.0).abs() <= 0.05);
    let e = s.energy(&w) / h0();
    assert!((v.mu_mass() - e).abs() <= 1e-12 * e);
    assert!((v.mass() - (e - v.zero_normal_mass())).abs() <= 1e-12 * e);
    let xi_l1 = aclab::diagnostics::equipartition_row(&s.field, &w).xi_l1;
    assert!(v.zero_normal_mass() <= xi_l1 / (2.0 * h0()) + 1e-12);
}

#[test]
fn constant_field_has_zero_variation() {
    let (s, v) = flat();
    let x = TestVectorField::from_fn(&s.field.domain, 1.0, |_| [0.3, -1.7]);
    let mag = 0.3f64.hypot(1.7);
    assert!(v.first_variation(&x).abs() <= 1e-10 * v.mass() * mag);
}

#[test]
fn flat_interface_pairings() {
    let (s, v) = flat();
    let d = &s.field.domain;
    // X = (0, η(y)) with η' = 1 near the interface: the normal-normal entry is removed.
    let normal_stretch = TestVectorField::from_fn(d, 0.3, |p| [0.0, (p[1] - 0.5) * phi((p[1] - 0.5).abs() / 0.3)]);
    assert!(v.first_variation(&normal_stretch).abs() <= 1e-3);

    // X = (ξ(x), 0) with ξ' = 1: each atom contributes its weight.
    let tangential_stretch = TestVectorField::from_fn(d, 1.0, |p| [p[0] - 0.5, 0.0]);
    let dv = v.first_variation(&tangential_stretch);
    assert!((dv - v.mass()).abs() <= 1e-3 * v.mass(), "{dv} vs {}", v.mass());
}

#[test]
fn free_boundary_examples() {
    let w = DoubleWell::standard_quartic();
    let d = square(64);
    let ones = Solution {
        field: Field::constant(d.clone(), 0.05, 1.0),
        lambda: 0.0,
        residual_norm: 0.0,
        iterations: 0,
        constraint: None,
        converged: true,
        newton_history: vec![],
    };
    let v = build_varifold(&ones.field, &w, h0());
    let x = make_radial_field(&d, [0.5, 0.5], 0.3).unwrap();
    let r = free_boundary_test(&v, &ones, h0(), &x).unwrap();
    assert_eq!((r.lhs, r.rhs, r.deficit), (0.0, 0.0, 0.0));

    let (s, v) = flat();
    let x = make_radial_field(&s.field.domain, [0.4, 0.55], 0.3).unwrap();
    assert!(x.tangential_on_boundary);
    let r = free_boundary_test(v, s, h0(), &x).unwrap();
    assert!(r.deficit <= 0.05 * x.c1_norm, "{r:?}");

    let crossing = make_radial_field(&s.field.domain, [0.5, 0.1], 0.3).unwrap();
    assert!(matches!(
        free_boundary_test(v, s, h0(), &crossing),
        Err(VarifoldError::NotTangential(_))
    ));
    let c = extract_interface(&s.field).unwrap();
    assert!(first_variation_bound_constant(v, s, &c, &crossing).is_finite());
}

#[test]
fn flat_interface_geometry() {
    let (s, v) = flat();
    let c = extract_interface(&s.field).unwrap();
    assert!((c.length() - 1.0).abs() <= 0.05);
    assert_eq!(c.orthogonality_angles.len(), 2);
    for a in &c.orthogonality_angles {
        assert!((a.to_degrees() - 90.0).abs() <= 5.0);
    }
    let d = &s.field.domain;
    let samples: Vec<[f64; 2]> = (0..20).map(|k| [0.3 + 0.4 * k as f64 / 19.0, 0.5]).collect();
    let eps = s.epsilon();
    let rep = integrality_check(v, &s.field, &samples, |p| aclab::diagnostics::radius_ladder(d, eps, p)).unwrap();
    assert!(rep.rows.iter().all(|r| r.nearest_integer == 1));
    assert!(rep.max_deviation <= 0.15, "{rep:?}");

    let pure = integrality_check(v, &s.field, &[[0.5, 0.1]], |_| vec![0.05, 0.06]);
    assert!(matches!(pure, Err(VarifoldError::NotOnInterface { .. })));

    let contact = density_estimate(v, d, [0.0, 0.5], &[0.1, 0.15, 0.2, 0.3]).unwrap();
    let p = plateau(&contact).unwrap();
    assert!((0.4..=0.6).contains(&p), "{contact:?}");
}

#[test]
fn quarter_turn_invariance() {
    let w = DoubleWell::standard_quartic();
    let (s, v) = flat();
    let d = s.field.domain.clone();
    let n = d.grid_shape().0 - 1;
    // (x, y) -> (1 - y, x) maps grid node (i, j) to (n - j, i).
    let mut rotated = vec![0.0; d.len()];
    for k in 0..d.len() {
        let (i, j) = d.grid_coords(k);
        rotated[d.node_at_grid(n - j, i).unwrap()] = s.field.values[k];
    }
    let rf = Field::new(d.clone(), s.epsilon(), rotated).unwrap();
    let rv = build_varifold(&rf, &w, h0());
    assert!((rv.mass() - v.mass()).abs() <= 1e-10);

    let xf = |p: [f64; 2]| {
        let s = phi(((p[0] - 0.45).powi(2) + (p[1] - 0.52).powi(2)).sqrt() / 0.35);
        [s * (p[0] * p[1] + 0.2), s * (p[0] - p[1] * p[1])]
    };
    // X'(p) = R X(R⁻¹ p) with R(x, y) = (-y, x) about the center.
    let xr = move |p: [f64; 2]| {
        let q = [p[1], 1.0 - p[0]];
        let x = xf(q);
        [-x[1], x[0]]
    };
    let a = v.first_variation(&TestVectorField::from_fn(&d, 0.35, xf));
    let b = rv.first_variation(&TestVectorField::from_fn(&d, 0.35, xr));
    assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn first_variation_is_linear(
        a in prop::array::uniform4(-2.0f64..2.0),
        b in prop::array::uniform4(-2.0f64..2.0),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let (s, v) = flat();
        let d = &s.field.domain;
        let field = |c: [f64; 4]| move |p: [f64; 2]| {
            let s = phi(((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() / 0.4);
            [s * (c[0] * p[0] + c[1] * p[1] * p[1]), s * (c[2] * p[0] * p[1] + c[3] * p[1])]
        };
        let (fa, fb) = (field(a), field(b));
        let xa = TestVectorField::from_fn(d, 0.4, fa);
        let xb = TestVectorField::from_fn(d, 0.4, fb);
        let xab = TestVectorField::from_fn(d, 0.4, move |p| {
            let (u, w) = (fa(p), fb(p));
            [alpha * u[0] + beta * w[0], alpha * u[1] + beta * w[1]]
        });
        let lhs = v.first_variation(&xab);
        let rhs = alpha * v.first_variation(&xa) + beta * v.first_variation(&xb);
        let scale = (alpha.abs() * xa.c1_norm + beta.abs() * xb.c1_norm) * v.mass();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }
}
