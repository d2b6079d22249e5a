//! The discrete varifold of a solution, its first variation, density estimates and
//! the zero level set.

use crate::diagnostics::{density_fields, omega, TestVectorField};
use crate::geometry::{dot, norm, sub, Domain, GeometryError, Point};
use crate::potential::DoubleWell;
use crate::solver::{vector_gradient, Field, Solution};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

/// Slope threshold on `|dΘ̂/d log r|` for the plateau window.
const PLATEAU_SLOPE: f64 = 0.2;
/// Zero-normal floor is this constant divided by ε.
const GRADIENT_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarifoldError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("test field is not tangential on the boundary (max |X·ν| = {0:e})")]
    NotTangential(f64),
    #[error("density curve at {0:?} has no plateau")]
    NoPlateau(Point),
    #[error("u has no sign change")]
    NoInterface,
    #[error("sample point {point:?} is not on the interface (|u| = {value} > 0.5)")]
    NotOnInterface { point: Point, value: f64 },
    #[error("interface extraction needs a 2D domain")]
    NotTwoDimensional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub node: usize,
    pub point: Point,
    pub weight: f64,
    /// `∇u/|∇u|`, or `None` where `|∇u|` is below the floor.
    pub normal: Option<Point>,
}

#[derive(Debug, Clone)]
pub struct DiscreteVarifold {
    pub atoms: Vec<Atom>,
    pub epsilon: f64,
    pub h0: f64,
    node_weights: Vec<f64>,
    dim: usize,
}

/// One atom per node with positive energy density: weight `w_i e_i / h0`.
pub fn build_varifold(f: &Field, w: &DoubleWell, h0: f64) -> DiscreteVarifold {
    let dom = &f.domain;
    let e = density_fields(f, w).e;
    let grad = vector_gradient(dom, &f.values);
    let floor = GRADIENT_FLOOR / f.epsilon;
    let atoms = (0..dom.len())
        .filter(|&i| e[i] > 0.0)
        .map(|i| {
            let g = grad[i];
            let m = norm(g);
            Atom {
                node: i,
                point: dom.points()[i],
                weight: dom.weights()[i] * e[i] / h0,
                normal: (m > floor).then(|| [g[0] / m, g[1] / m]),
            }
        })
        .collect();
    DiscreteVarifold {
        atoms,
        epsilon: f.epsilon,
        h0,
        node_weights: dom.weights().to_vec(),
        dim: dom.dim(),
    }
}

impl DiscreteVarifold {
    /// `‖V‖(U)`: atoms with a normal only.
    pub fn mass(&self) -> f64 {
        self.atoms.iter().filter(|a| a.normal.is_some()).map(|a| a.weight).sum()
    }

    /// Total mass of the energy measure, zero-normal atoms included (`E/h0`).
    pub fn mu_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn zero_normal_mass(&self) -> f64 {
        self.atoms.iter().filter(|a| a.normal.is_none()).map(|a| a.weight).sum()
    }

    /// `‖V‖` inside a ball, with fractional weights at the sphere cut.
    pub fn ball_mass(&self, dom: &Domain, x: Point, r: f64) -> Result<f64, GeometryError> {
        let b = dom.ball_restriction(x, r)?;
        let mut frac = vec![0.0; self.node_weights.len()];
        for (&i, &bw) in b.nodes.iter().zip(&b.node_weights) {
            frac[i] = bw / self.node_weights[i];
        }
        Ok(self
            .atoms
            .iter()
            .filter(|a| a.normal.is_some())
            .map(|a| a.weight * frac[a.node])
            .sum())
    }

    /// `δV(X) = Σ weight ⟨∇X, I - ν⊗ν⟩` over atoms with a normal.
    pub fn first_variation(&self, x: &TestVectorField) -> f64 {
        self.atoms
            .iter()
            .filter_map(|a| {
                let nu = a.normal?;
                let j = &x.jacobian[a.node];
                let trace = j[0][0] + j[1][1];
                let mut nn = 0.0;
                for p in 0..2 {
                    for q in 0..2 {
                        nn += nu[p] * j[p][q] * nu[q];
                    }
                }
                Some(a.weight * (trace - nn))
            })
            .sum()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

pub fn first_variation(v: &DiscreteVarifold, x: &TestVectorField) -> f64 {
    v.first_variation(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub center: Point,
    pub boundary_flag: bool,
    pub radii: Vec<f64>,
    pub theta: Vec<f64>,
}

/// `Θ̂(r) = ‖V‖(B_r(x)) / (ω_{n-1} r^{n-1})`, with the full-ball normalization also at the boundary.
pub fn density_estimate(
    v: &DiscreteVarifold,
    dom: &Domain,
    x: Point,
    radii: &[f64],
) -> Result<DensityCurve, GeometryError> {
    let n = dom.dim();
    let mut theta = Vec::with_capacity(radii.len());
    let mut center = x;
    let mut boundary_flag = false;
    for &r in radii {
        let b = dom.ball_restriction(x, r)?;
        center = b.center;
        boundary_flag = b.boundary_flag;
        theta.push(v.ball_mass(dom, x, r)? / (omega(n - 1) * r.powi(n as i32 - 1)));
    }
    Ok(DensityCurve {
        center,
        boundary_flag,
        radii: radii.to_vec(),
        theta,
    })
}

/// Median of `Θ̂` over radii where `|dΘ̂/d log r| < 0.2`.
pub fn plateau(curve: &DensityCurve) -> Option<f64> {
    let r = &curve.radii;
    let t = &curve.theta;
    let m = r.len();
    if m < 2 {
        return None;
    }
    let slope = |k: usize| {
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k + 1 == m {
            (m - 2, m - 1)
        } else {
            (k - 1, k + 1)
        };
        (t[b] - t[a]) / (r[b].ln() - r[a].ln())
    };
    let mut window: Vec<f64> = (0..m)
        .filter(|&k| slope(k).abs() < PLATEAU_SLOPE)
        .map(|k| t[k])
        .collect();
    if window.is_empty() {
        return None;
    }
    window.sort_by(f64::total_cmp);
    let k = window.len();
    Some(if k % 2 == 1 {
        window[k / 2]
    } else {
        0.5 * (window[k / 2 - 1] + window[k / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralityRow {
    pub point: Point,
    pub plateau: f64,
    pub nearest_integer: i64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralityReport {
    pub rows: Vec<IntegralityRow>,
    pub max_deviation: f64,
}

/// Plateau density at interface points, its nearest integer and the deviation.
pub fn integrality_check(
    v: &DiscreteVarifold,
    f: &Field,
    samples: &[Point],
    radii: impl Fn(Point) -> Vec<f64>,
) -> Result<IntegralityReport, VarifoldError> {
    let dom = &f.domain;
    let mut rows = Vec::with_capacity(samples.len());
    for &p in samples {
        let value = f.values[dom.nearest_node(p)];
        if value.abs() > 0.5 {
            return Err(VarifoldError::NotOnInterface {
                point: p,
                value: value.abs(),
            });
        }
        let curve = density_estimate(v, dom, p, &radii(p))?;
        let pl = plateau(&curve).ok_or(VarifoldError::NoPlateau(p))?;
        let k = pl.round() as i64;
        rows.push(IntegralityRow {
            point: p,
            plateau: pl,
            nearest_integer: k,
            deviation: (pl - k as f64).abs(),
        });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(IntegralityReport { rows, max_deviation })
}

/// Zero level set as polylines, oriented so that `{u > 0}` lies to the left.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceCurve {
    pub polylines: Vec<Vec<Point>>,
    pub closed: Vec<bool>,
    pub contact_points: Vec<Point>,
    /// Angle between the curve and `∂Ω` at each contact point (radians, in `[0, π/2]`).
    pub orthogonality_angles: Vec<f64>,
}

impl InterfaceCurve {
    pub fn length(&self) -> f64 {
        self.polylines
            .iter()
            .map(|c| c.windows(2).map(|s| norm(sub(s[1], s[0]))).sum::<f64>())
            .sum()
    }

    /// `∫_M X·ν_M` with `ν_M` pointing into `{u > 0}`, by the midpoint rule.
    pub fn normal_flux(&self, x: impl Fn(Point) -> Point) -> f64 {
        let mut total = 0.0;
        for c in &self.polylines {
            for s in c.windows(2) {
                let t = sub(s[1], s[0]);
                let mid = [0.5 * (s[0][0] + s[1][0]), 0.5 * (s[0][1] + s[1][1])];
                // Left normal times length.
                total += dot(x(mid), [-t[1], t[0]]);
            }
        }
        total
    }
}

struct Segment {
    start: Point,
    end: Point,
    start_edge: usize,
    end_edge: usize,
}

/// Marching squares on cells whose four corners are active nodes.
pub fn extract_interface(f: &Field) -> Result<InterfaceCurve, VarifoldError> {
    let dom = &f.domain;
    if dom.dim() != 2 {
        return Err(VarifoldError::NotTwoDimensional);
    }
    let u = &f.values;
    let (nxn, nyn) = dom.grid_shape();
    let h = dom.h();
    let mut segments: Vec<Segment> = Vec::new();
    for j in 0..nyn - 1 {
        for i in 0..nxn - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let nodes: Option<Vec<usize>> = corners.iter().map(|&(a, b)| dom.node_at_grid(a, b)).collect();
            let Some(nodes) = nodes else { continue };
            let val: Vec<f64> = nodes.iter().map(|&k| u[k]).collect();
            let neg: Vec<bool> = val.iter().map(|&v| v < 0.0).collect();
            let mask = neg.iter().enumerate().fold(0u8, |m, (k, &n)| m | ((n as u8) << k));
            if mask == 0 || mask == 15 {
                continue;
            }
            // Edge k joins corner k and corner (k+1) % 4.
            let edge_id = |k: usize| -> usize {
                let base = |a: usize, b: usize| b * nxn + a;
                match k {
                    0 => 2 * base(i, j),
                    1 => 2 * base(i + 1, j) + 1,
                    2 => 2 * base(i, j + 1),
                    _ => 2 * base(i, j) + 1,
                }
            };
            let cross = |k: usize| -> Point {
                let (a, b) = (k, (k + 1) % 4);
                let (pa, pb) = (dom.points()[nodes[a]], dom.points()[nodes[b]]);
                let t = val[a] / (val[a] - val[b]);
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            };
            let crossing: Vec<usize> = (0..4).filter(|&k| neg[k] != neg[(k + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = if crossing.len() == 2 {
                vec![(crossing[0], crossing[1])]
            } else {
                let center_neg = val.iter().sum::<f64>() < 0.0;
                // Saddle: pair the edges around the corners that are cut off.
                if neg[0] == center_neg {
                    vec![(0, 1), (2, 3)]
                } else {
                    vec![(3, 0), (1, 2)]
                }
            };
            for (ea, eb) in pairs {
                let (pa, pb) = (cross(ea), cross(eb));
                // Going ea -> eb, the corner just after edge eb lies on the left.
                let seg = if !neg[(eb + 1) % 4] {
                    Segment {
                        start: pa,
                        end: pb,
                        start_edge: edge_id(ea),
                        end_edge: edge_id(eb),
                    }
                } else {
                    Segment {
                        start: pb,
                        end: pa,
                        start_edge: edge_id(eb),
                        end_edge: edge_id(ea),
                    }
                };
                segments.push(seg);
            }
        }
    }
    if segments.is_empty() {
        return Err(VarifoldError::NoInterface);
    }

    let mut by_start: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut end_edges: HashMap<usize, usize> = HashMap::new();
    for (k, s) in segments.iter().enumerate() {
        by_start.entry(s.start_edge).or_default().push(k);
        *end_edges.entry(s.end_edge).or_default() += 1;
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    let mut closed = Vec::new();
    let follow = |first: usize, used: &mut Vec<bool>| -> (Vec<Point>, bool) {
        let mut chain = vec![segments[first].start];
        let mut cur = first;
        loop {
            used[cur] = true;
            chain.push(segments[cur].end);
            let next = by_start
                .get(&segments[cur].end_edge)
                .and_then(|v| v.iter().copied().find(|&k| !used[k]));
            match next {
                Some(k) => cur = k,
                None => {
                    let is_closed = segments[cur].end_edge == segments[first].start_edge;
                    return (chain, is_closed);
                }
            }
        }
    };
    // Open chains first: segments whose start edge is nobody's end edge.
    let mut order: Vec<usize> = (0..segments.len())
        .filter(|&k| !end_edges.contains_key(&segments[k].start_edge))
        .collect();
    order.extend(0..segments.len());
    for k in order {
        if used[k] {
            continue;
        }
        let (c, cl) = follow(k, &mut used);
        polylines.push(c);
        closed.push(cl);
    }

    let mut contact_points = Vec::new();
    let mut orthogonality_angles = Vec::new();
    for (c, &cl) in polylines.iter().zip(&closed) {
        if cl {
            continue;
        }
        for at_start in [true, false] {
            let pts: Vec<Point> = if at_start {
                c.clone()
            } else {
                c.iter().rev().copied().collect()
            };
            let end = pts[0];
            let (d, q, piece) = dom.closest_boundary(end);
            if d.abs() > 2.0 * h {
                continue;
            }
            // Tangent from the end point to the first vertex at least 3h away.
            let far = pts
                .iter()
                .copied()
                .find(|p| norm(sub(*p, end)) >= 3.0 * h)
                .unwrap_or(*pts.last().unwrap_or(&end));
            let t = sub(far, end);
            let tn = norm(t);
            if tn == 0.0 {
                continue;
            }
            let nu = dom.pieces()[piece].normal_at(q);
            let tau = [-nu[1], nu[0]];
            let cosang = (dot(t, tau) / tn).abs().min(1.0);
            contact_points.push(q);
            orthogonality_angles.push(cosang.acos());
        }
    }
    Ok(InterfaceCurve {
        polylines,
        closed,
        contact_points,
        orthogonality_angles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeBoundaryResult {
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
}

/// `δV(X)` against `-(2λ/h0) ∫_M X·ν_M` for a boundary-tangential `X`.
pub fn free_boundary_test(
    v: &DiscreteVarifold,
    sol: &Solution,
    h0: f64,
    x: &TestVectorField,
) -> Result<FreeBoundaryResult, VarifoldError> {
    if !x.tangential_on_boundary {
        return Err(VarifoldError::NotTangential(x.max_normal_component(&sol.field.domain)));
    }
    let lhs = v.first_variation(x);
    let flux = match extract_interface(&sol.field) {
        Ok(c) => c.normal_flux(|p| x.eval(p)),
        Err(VarifoldError::NoInterface) => 0.0,
        Err(e) => return Err(e),
    };
    let rhs = -2.0 * sol.lambda / h0 * flux;
    Ok(FreeBoundaryResult {
        lhs,
        rhs,
        deficit: (lhs - rhs).abs(),
    })
}

/// `|h0 δV(X) + 2λ ∫_M X·ν_M| / sup_{∂Ω} |X·ν|` for a general field.
pub fn first_variation_bound_constant(
    v: &DiscreteVarifold,
    sol: &Solution,
    curve: &InterfaceCurve,
    x: &TestVectorField,
) -> f64 {
    let lhs = (v.h0 * v.first_variation(x) + 2.0 * sol.lambda * curve.normal_flux(|p| x.eval(p))).abs();
    let s = x.max_normal_component(&sol.field.domain);
    if s == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

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

    #[test]
    fn linear_field_interface() {
        let f = Field::from_fn(square(64), 0.05, |p| p[1] - 0.5 + 1e-9);
        let c = extract_interface(&f).unwrap();
        assert_eq!(c.polylines.len(), 1);
        assert!((c.length() - 1.0).abs() <= f.domain.h());
        for p in &c.polylines[0] {
            assert!((p[1] - 0.5).abs() < 1e-8);
        }
        for a in &c.orthogonality_angles {
            assert_abs_diff_eq!(*a, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        }
        // Orientation: u > 0 above, so ν_M = (0, 1) and ∫ X·ν for X = (0,1) is the length.
        assert_abs_diff_eq!(c.normal_flux(|_| [0.0, 1.0]), c.length(), epsilon = 1e-12);
    }

    #[test]
    fn vertices_are_on_the_zero_set() {
        let f = Field::from_fn(square(48), 0.05, |p| (p[0] - 0.3).hypot(p[1] - 0.6) - 0.25);
        let c = extract_interface(&f).unwrap();
        assert_eq!(c.polylines.len(), 1);
        assert!(c.closed[0]);
        assert!((c.length() - 2.0 * std::f64::consts::PI * 0.25).abs() < 0.01);
        // Interpolated u at the vertices vanishes along each grid edge.
        let lin = Field::from_fn(square(48), 0.05, |p| p[0] + 0.37 * p[1] - 0.61);
        for chain in extract_interface(&lin).unwrap().polylines {
            for p in chain {
                assert!((p[0] + 0.37 * p[1] - 0.61).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn no_interface() {
        let f = Field::constant(square(32), 0.05, 1.0);
        assert_eq!(extract_interface(&f).unwrap_err(), VarifoldError::NoInterface);
        let w = DoubleWell::standard_quartic();
        let v = build_varifold(&f, &w, 1.0);
        assert!(v.atoms.is_empty());
    }

    #[test]
    fn plateau_median() {
        let c = DensityCurve {
            center: [0.0, 0.0],
            boundary_flag: false,
            radii: vec![0.1, 0.2, 0.4, 0.8, 1.6],
            theta: vec![0.2, 0.98, 1.0, 1.01, 1.02],
        };
        let p = plateau(&c).unwrap();
        assert!((p - 1.0).abs() < 0.02, "{p}");
        let steep = DensityCurve {
            theta: vec![0.1, 1.0, 2.0, 3.0, 4.0],
            ..c
        };
        assert!(plateau(&steep).is_none());
    }
}
