//! Cut-cell Cartesian discretization of 1D and 2D domains.
//!
//! Nodes sit on a uniform grid over the bounding box of the shape. Each node owns
//! its dual cell `[x - h/2, x + h/2] x [y - h/2, y + h/2]`; the node weight is the
//! exact area of the dual cell inside the domain and the coupling between two
//! neighbours is the length of their shared dual face inside the domain divided by
//! `h`. Nodes whose dual cell barely touches the domain are dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

pub type Point = [f64; 2];

/// Dual cells with less than this fraction of a full cell inside the domain are dropped.
const MIN_CELL_FRACTION: f64 = 1e-4;
/// Boundary pieces are sampled at this many points per cell width.
const BOUNDARY_SAMPLES_PER_CELL: f64 = 8.0;
pub const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid shape parameters: {0}")]
    InvalidShapeParams(String),
    #[error("ball B_{radius}({center:?}) is not contained in the padding box U")]
    BallEscapesU { center: Point, radius: f64 },
    #[error("radius {radius} is not larger than 2h = {}", 2.0 * h)]
    RadiusTooSmall { radius: f64, h: f64 },
    #[error("ball center {0:?} lies outside the closed domain")]
    CenterOutsideDomain(Point),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    /// `[0, length]`.
    Interval { length: f64 },
    /// `[0, width] x [0, height]`.
    Rectangle { width: f64, height: f64 },
    /// Disk centered at the origin.
    Disk { radius: f64 },
    /// `inner <= |p| <= outer`.
    Annulus { inner: f64, outer: f64 },
    /// Upper half `{|p| <= radius, y >= 0}`.
    HalfDisk { radius: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let good = match *self {
            Shape::Interval { length } => ok(length),
            Shape::Rectangle { width, height } => ok(width) && ok(height),
            Shape::Disk { radius } | Shape::HalfDisk { radius } => ok(radius),
            Shape::Annulus { inner, outer } => {
                if ok(inner) && ok(outer) && inner >= outer {
                    return Err(GeometryError::InvalidShapeParams(format!(
                        "annulus inner radius {inner} must be smaller than outer radius {outer}"
                    )));
                }
                ok(inner) && ok(outer)
            }
        };
        if good {
            Ok(())
        } else {
            Err(GeometryError::InvalidShapeParams(format!(
                "dimensions must be positive and finite: {self:?}"
            )))
        }
    }

    /// Bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        match *self {
            Shape::Interval { length } => ([0.0, 0.0], [length, 0.0]),
            Shape::Rectangle { width, height } => ([0.0, 0.0], [width, height]),
            Shape::Disk { radius } => ([-radius, -radius], [radius, radius]),
            Shape::Annulus { outer, .. } => ([-outer, -outer], [outer, outer]),
            Shape::HalfDisk { radius } => ([-radius, 0.0], [radius, radius]),
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Point) -> bool {
        let [x, y] = p;
        match *self {
            Shape::Interval { length } => (0.0..=length).contains(&x),
            Shape::Rectangle { width, height } => (0.0..=width).contains(&x) && (0.0..=height).contains(&y),
            Shape::Disk { radius } => x * x + y * y <= radius * radius,
            Shape::Annulus { inner, outer } => {
                let r2 = x * x + y * y;
                r2 <= outer * outer && r2 >= inner * inner
            }
            Shape::HalfDisk { radius } => y >= 0.0 && x * x + y * y <= radius * radius,
        }
    }

    /// Intervals of `{y : (x, y) in shape}` (2D only).
    fn y_intervals(&self, x: f64) -> Intervals {
        match *self {
            Shape::Interval { .. } => Intervals::none(),
            Shape::Rectangle { width, height } => {
                if (0.0..=width).contains(&x) {
                    Intervals::one(0.0, height)
                } else {
                    Intervals::none()
                }
            }
            Shape::Disk { radius } => match half_chord(radius, x) {
                Some(s) => Intervals::one(-s, s),
                None => Intervals::none(),
            },
            Shape::Annulus { inner, outer } => match half_chord(outer, x) {
                None => Intervals::none(),
                Some(so) => match half_chord(inner, x) {
                    Some(si) if si > 0.0 => Intervals::two((-so, -si), (si, so)),
                    _ => Intervals::one(-so, so),
                },
            },
            Shape::HalfDisk { radius } => match half_chord(radius, x) {
                Some(s) => Intervals::one(0.0, s),
                None => Intervals::none(),
            },
        }
    }

    /// Intervals of `{x : (x, y) in shape}` (2D only).
    fn x_intervals(&self, y: f64) -> Intervals {
        match *self {
            Shape::Interval { .. } => Intervals::none(),
            Shape::Rectangle { width, height } => {
                if (0.0..=height).contains(&y) {
                    Intervals::one(0.0, width)
                } else {
                    Intervals::none()
                }
            }
            Shape::Disk { .. } | Shape::Annulus { .. } => self.y_intervals(y),
            Shape::HalfDisk { radius } => {
                if y < 0.0 {
                    Intervals::none()
                } else {
                    match half_chord(radius, y) {
                        Some(s) => Intervals::one(-s, s),
                        None => Intervals::none(),
                    }
                }
            }
        }
    }

    /// Exact area of `box ∩ shape` for an axis-aligned box (2D only).
    fn box_area(&self, b: &Box2) -> f64 {
        match *self {
            Shape::Interval { .. } => 0.0,
            Shape::Rectangle { width, height } => b.clip(&Box2::new(0.0, width, 0.0, height)).map_or(0.0, |c| c.area()),
            Shape::Disk { radius } => disk_box_area([0.0, 0.0], radius, b),
            Shape::Annulus { inner, outer } => {
                (disk_box_area([0.0, 0.0], outer, b) - disk_box_area([0.0, 0.0], inner, b)).max(0.0)
            }
            Shape::HalfDisk { radius } => {
                let upper = Box2::new(b.x0, b.x1, b.y0.max(0.0), b.y1);
                if upper.y1 <= upper.y0 {
                    0.0
                } else {
                    disk_box_area([0.0, 0.0], radius, &upper)
                }
            }
        }
    }

    fn kappa0(&self) -> f64 {
        match *self {
            Shape::Interval { .. } | Shape::Rectangle { .. } => 0.0,
            Shape::Disk { radius } | Shape::HalfDisk { radius } => 1.0 / radius,
            Shape::Annulus { inner, .. } => 1.0 / inner,
        }
    }

    fn pieces(&self) -> Vec<BoundaryPiece> {
        use BoundaryPiece::*;
        match *self {
            Shape::Interval { length } => vec![
                Endpoint {
                    at: [0.0, 0.0],
                    normal: [-1.0, 0.0],
                },
                Endpoint {
                    at: [length, 0.0],
                    normal: [1.0, 0.0],
                },
            ],
            Shape::Rectangle { width: w, height: h } => vec![
                Segment {
                    a: [0.0, 0.0],
                    b: [w, 0.0],
                    normal: [0.0, -1.0],
                },
                Segment {
                    a: [w, 0.0],
                    b: [w, h],
                    normal: [1.0, 0.0],
                },
                Segment {
                    a: [w, h],
                    b: [0.0, h],
                    normal: [0.0, 1.0],
                },
                Segment {
                    a: [0.0, h],
                    b: [0.0, 0.0],
                    normal: [-1.0, 0.0],
                },
            ],
            Shape::Disk { radius } => vec![Arc {
                center: [0.0, 0.0],
                radius,
                theta0: 0.0,
                sweep: 2.0 * PI,
                convex: true,
            }],
            Shape::Annulus { inner, outer } => vec![
                Arc {
                    center: [0.0, 0.0],
                    radius: outer,
                    theta0: 0.0,
                    sweep: 2.0 * PI,
                    convex: true,
                },
                Arc {
                    center: [0.0, 0.0],
                    radius: inner,
                    theta0: 0.0,
                    sweep: 2.0 * PI,
                    convex: false,
                },
            ],
            Shape::HalfDisk { radius } => vec![
                Arc {
                    center: [0.0, 0.0],
                    radius,
                    theta0: 0.0,
                    sweep: PI,
                    convex: true,
                },
                Segment {
                    a: [-radius, 0.0],
                    b: [radius, 0.0],
                    normal: [0.0, -1.0],
                },
            ],
        }
    }
}

/// One smooth piece of `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPiece {
    Endpoint {
        at: Point,
        normal: Point,
    },
    Segment {
        a: Point,
        b: Point,
        normal: Point,
    },
    /// Counter-clockwise arc; `convex` arcs have outward normal pointing away from the center.
    Arc {
        center: Point,
        radius: f64,
        theta0: f64,
        sweep: f64,
        convex: bool,
    },
}

impl BoundaryPiece {
    pub fn length(&self) -> f64 {
        match *self {
            BoundaryPiece::Endpoint { .. } => 0.0,
            BoundaryPiece::Segment { a, b, .. } => norm(sub(b, a)),
            BoundaryPiece::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn point_at(&self, t: f64) -> Point {
        match *self {
            BoundaryPiece::Endpoint { at, .. } => at,
            BoundaryPiece::Segment { a, b, .. } => [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            BoundaryPiece::Arc {
                center,
                radius,
                theta0,
                sweep,
                ..
            } => {
                let th = theta0 + t * sweep;
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }

    pub fn closest(&self, p: Point) -> Point {
        match *self {
            BoundaryPiece::Endpoint { at, .. } => at,
            BoundaryPiece::Segment { a, b, .. } => {
                let d = sub(b, a);
                let t = (dot(sub(p, a), d) / dot(d, d)).clamp(0.0, 1.0);
                [a[0] + t * d[0], a[1] + t * d[1]]
            }
            BoundaryPiece::Arc {
                center,
                radius,
                theta0,
                sweep,
                ..
            } => {
                let v = sub(p, center);
                let r = norm(v);
                if r == 0.0 {
                    return self.point_at(0.0);
                }
                let mut rel = v[1].atan2(v[0]) - theta0;
                rel = rel.rem_euclid(2.0 * PI);
                if rel <= sweep {
                    [center[0] + radius * v[0] / r, center[1] + radius * v[1] / r]
                } else {
                    let (s, e) = (self.point_at(0.0), self.point_at(1.0));
                    if norm(sub(p, s)) <= norm(sub(p, e)) {
                        s
                    } else {
                        e
                    }
                }
            }
        }
    }

    /// Outward unit normal at a point of the piece.
    pub fn normal_at(&self, q: Point) -> Point {
        match *self {
            BoundaryPiece::Endpoint { normal, .. } | BoundaryPiece::Segment { normal, .. } => normal,
            BoundaryPiece::Arc { center, convex, .. } => {
                let v = sub(q, center);
                let r = norm(v);
                let s = if convex { 1.0 } else { -1.0 };
                [s * v[0] / r, s * v[1] / r]
            }
        }
    }
}

/// One entry of the boundary quadrature: a node carrying a share of one boundary piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEntry {
    pub node: usize,
    pub piece: usize,
    /// Representative point on `∂Ω` (projected length-weighted centroid).
    pub point: Point,
    pub normal: Point,
    /// Arc length (2D) or counting weight 1 (1D).
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Box2 {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Box2 { x0, x1, y0, y1 }
    }
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
    fn clip(&self, o: &Box2) -> Option<Box2> {
        let b = Box2::new(
            self.x0.max(o.x0),
            self.x1.min(o.x1),
            self.y0.max(o.y0),
            self.y1.min(o.y1),
        );
        (b.x1 > b.x0 && b.y1 > b.y0).then_some(b)
    }
    pub fn contains_ball(&self, c: Point, r: f64, dim: usize) -> bool {
        let x_ok = c[0] - r >= self.x0 && c[0] + r <= self.x1;
        if dim == 1 {
            x_ok
        } else {
            x_ok && c[1] - r >= self.y0 && c[1] + r <= self.y1
        }
    }
    pub fn center(&self) -> Point {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }
    /// Box with the same center and half extents scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Box2 {
        let [cx, cy] = self.center();
        let hx = 0.5 * (self.x1 - self.x0) * factor;
        let hy = 0.5 * (self.y1 - self.y0) * factor;
        Box2::new(cx - hx, cx + hx, cy - hy, cy + hy)
    }
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// JSON-serializable description from which a `Domain` is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub shape: Shape,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    dim: usize,
    /// Cells per axis; `ny = 0` in 1D.
    nx: usize,
    ny: usize,
    h: f64,
    origin: Point,
    /// Active-node index per grid node, `NO_NODE` if dropped.
    grid_to_node: Vec<u32>,
    node_to_grid: Vec<usize>,
    points: Vec<Point>,
    weights: Vec<f64>,
    interior_mask: Vec<bool>,
    adj_ptr: Vec<usize>,
    adj_idx: Vec<u32>,
    adj_coef: Vec<f64>,
    /// East, west, north, south active neighbours.
    dir_nbr: Vec<[u32; 4]>,
    pieces: Vec<BoundaryPiece>,
    boundary: Vec<BoundaryEntry>,
    kappa0: f64,
    padding: Box2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistance {
    pub values: Vec<f64>,
    pub gradient: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallRestriction {
    pub center: Point,
    pub radius: f64,
    pub boundary_flag: bool,
    pub nodes: Vec<usize>,
    pub node_weights: Vec<f64>,
}

impl BallRestriction {
    pub fn total_weight(&self) -> f64 {
        self.node_weights.iter().sum()
    }

    /// `∫_{B_r(x) ∩ Ω} f` for a node-indexed `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.nodes.iter().zip(&self.node_weights).map(|(&i, &w)| w * f[i]).sum()
    }
}

pub fn build_domain(shape: Shape, cells: &[usize]) -> Result<Domain, GeometryError> {
    Domain::build(shape, cells)
}

impl Domain {
    /// Builds the discretization. `cells` gives cells per axis; a single entry for a
    /// 2D shape fixes the x count and derives the y count from the aspect ratio.
    pub fn build(shape: Shape, cells: &[usize]) -> Result<Domain, GeometryError> {
        shape.validate()?;
        let dim = shape.dim();
        let (lo, hi) = shape.bbox();
        let (ex, ey) = (hi[0] - lo[0], hi[1] - lo[1]);
        let (nx, ny) = match (dim, cells) {
            (1, [n]) => (*n, 0),
            (2, [n]) => (*n, ((*n as f64) * ey / ex).round() as usize),
            (2, [a, b]) => (*a, *b),
            _ => {
                return Err(GeometryError::InvalidShapeParams(format!(
                    "expected {dim} cell count(s), got {}",
                    cells.len()
                )))
            }
        };
        if nx < 16 || (dim == 2 && ny < 16) {
            return Err(GeometryError::InvalidShapeParams(format!(
                "need at least 16 cells per axis, got {nx} x {ny}"
            )));
        }
        let h = ex / nx as f64;
        if dim == 2 && ((ey / ny as f64) - h).abs() > 1e-9 * h {
            return Err(GeometryError::InvalidShapeParams(format!(
                "cells {nx} x {ny} do not give square cells on a {ex} x {ey} box"
            )));
        }
        let nxn = nx + 1;
        let nyn = ny + 1;
        let cell_area = if dim == 1 { h } else { h * h };

        let grid_weights: Vec<f64> = (0..nxn * nyn)
            .into_par_iter()
            .map(|g| {
                let (i, j) = (g % nxn, g / nxn);
                let x = lo[0] + i as f64 * h;
                if dim == 1 {
                    overlap(x - 0.5 * h, x + 0.5 * h, lo[0], hi[0])
                } else {
                    let y = lo[1] + j as f64 * h;
                    shape.box_area(&Box2::new(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h))
                }
            })
            .collect();

        let mut grid_to_node = vec![NO_NODE; nxn * nyn];
        let mut node_to_grid = Vec::new();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (g, &w) in grid_weights.iter().enumerate() {
            if w > MIN_CELL_FRACTION * cell_area {
                grid_to_node[g] = node_to_grid.len() as u32;
                node_to_grid.push(g);
                let (i, j) = (g % nxn, g / nxn);
                points.push([lo[0] + i as f64 * h, lo[1] + j as f64 * h]);
                weights.push(w);
            }
        }
        let n = node_to_grid.len();

        let lookup = |i: isize, j: isize| -> u32 {
            if i < 0 || j < 0 || i as usize >= nxn || j as usize >= nyn {
                NO_NODE
            } else {
                grid_to_node[j as usize * nxn + i as usize]
            }
        };
        let dir_nbr: Vec<[u32; 4]> = node_to_grid
            .iter()
            .map(|&g| {
                let (i, j) = ((g % nxn) as isize, (g / nxn) as isize);
                [lookup(i + 1, j), lookup(i - 1, j), lookup(i, j + 1), lookup(i, j - 1)]
            })
            .collect();

        // Face couplings, computed once per east/north pair and mirrored.
        let face = |a: usize, dir: usize| -> f64 {
            let [x, y] = points[a];
            if dim == 1 {
                return 1.0 / h;
            }
            let len = if dir == 0 {
                shape.y_intervals(x + 0.5 * h).overlap_len(y - 0.5 * h, y + 0.5 * h)
            } else {
                shape.x_intervals(y + 0.5 * h).overlap_len(x - 0.5 * h, x + 0.5 * h)
            };
            len / h
        };
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for a in 0..n {
            for (k, dir) in [(0usize, 0usize), (2, 1)] {
                let b = dir_nbr[a][k];
                if b == NO_NODE {
                    continue;
                }
                let c = face(a, dir);
                if c > 1e-14 {
                    lists[a].push((b, c));
                    lists[b as usize].push((a as u32, c));
                }
            }
        }
        let mut adj_ptr = Vec::with_capacity(n + 1);
        let mut adj_idx = Vec::new();
        let mut adj_coef = Vec::new();
        adj_ptr.push(0);
        for l in &mut lists {
            l.sort_by_key(|e| e.0);
            for &(b, c) in l.iter() {
                adj_idx.push(b);
                adj_coef.push(c);
            }
            adj_ptr.push(adj_idx.len());
        }

        let pieces = shape.pieces();
        let half = [0.5 * ex + 0.5 * ex.max(ey), 0.5 * ey + 0.5 * ex.max(ey)];
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let padding = Box2::new(c[0] - half[0], c[0] + half[0], c[1] - half[1], c[1] + half[1]);

        let mut dom = Domain {
            shape,
            dim,
            nx,
            ny,
            h,
            origin: lo,
            grid_to_node,
            node_to_grid,
            points,
            weights,
            interior_mask: Vec::new(),
            adj_ptr,
            adj_idx,
            adj_coef,
            dir_nbr,
            pieces,
            boundary: Vec::new(),
            kappa0: shape.kappa0(),
            padding,
        };
        dom.interior_mask = dom.points.iter().map(|&p| shape.contains(p)).collect();
        dom.boundary = dom.build_boundary_quadrature();
        Ok(dom)
    }

    fn build_boundary_quadrature(&self) -> Vec<BoundaryEntry> {
        let mut acc: BTreeMap<(usize, usize), (f64, Point)> = BTreeMap::new();
        for (pi, piece) in self.pieces.iter().enumerate() {
            if let BoundaryPiece::Endpoint { at, normal } = *piece {
                let node = self.nearest_node(at);
                acc.insert((node, pi), (1.0, at));
                let _ = normal;
                continue;
            }
            let len = piece.length();
            let m = ((len / self.h * BOUNDARY_SAMPLES_PER_CELL) - 1e-9).ceil().max(1.0) as usize;
            let ds = len / m as f64;
            for k in 0..m {
                let p = piece.point_at((k as f64 + 0.5) / m as f64);
                let node = self.nearest_node(p);
                let e = acc.entry((node, pi)).or_insert((0.0, [0.0, 0.0]));
                e.0 += ds;
                e.1[0] += ds * p[0];
                e.1[1] += ds * p[1];
            }
        }
        acc.into_iter()
            .map(|((node, piece), (w, s))| {
                let p = &self.pieces[piece];
                let point = match p {
                    BoundaryPiece::Endpoint { at, .. } => *at,
                    _ => p.closest([s[0] / w, s[1] / w]),
                };
                BoundaryEntry {
                    node,
                    piece,
                    point,
                    normal: p.normal_at(point),
                    weight: w,
                }
            })
            .collect()
    }

    /// Active node whose dual cell contains `p`, falling back to the nearest active node.
    pub fn nearest_node(&self, p: Point) -> usize {
        let fi = ((p[0] - self.origin[0]) / self.h).round() as isize;
        let fj = if self.dim == 1 {
            0
        } else {
            ((p[1] - self.origin[1]) / self.h).round() as isize
        };
        let mut best = (f64::INFINITY, usize::MAX);
        for radius in 0..4isize {
            for dj in -radius..=radius {
                for di in -radius..=radius {
                    if self.dim == 1 && dj != 0 {
                        continue;
                    }
                    if di.abs().max(dj.abs()) != radius {
                        continue;
                    }
                    if let Some(a) = self.node_at(fi + di, fj + dj) {
                        let d = norm(sub(self.points[a], p));
                        if d < best.0 {
                            best = (d, a);
                        }
                    }
                }
            }
            if best.1 != usize::MAX {
                return best.1;
            }
        }
        // Far from the grid: brute force.
        (0..self.len())
            .min_by(|&a, &b| norm(sub(self.points[a], p)).total_cmp(&norm(sub(self.points[b], p))))
            .unwrap_or(0)
    }

    fn node_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize > self.nx || j as usize > self.ny {
            return None;
        }
        let g = self.grid_to_node[j as usize * (self.nx + 1) + i as usize];
        (g != NO_NODE).then_some(g as usize)
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        let cells = if self.dim == 1 {
            vec![self.nx]
        } else {
            vec![self.nx, self.ny]
        };
        DomainDescriptor {
            shape: self.shape,
            cells,
        }
    }

    pub fn from_descriptor(d: &DomainDescriptor) -> Result<Domain, GeometryError> {
        Domain::build(d.shape, &d.cells)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Cells per axis (`[nx]` or `[nx, ny]`).
    pub fn n_cells(&self) -> Vec<usize> {
        self.descriptor().cells
    }
    /// Number of active nodes.
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn points(&self) -> &[Point] {
        &self.points
    }
    /// Volume quadrature weight per active node (`|dual cell ∩ Ω|`).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Whether the node itself lies in the closed domain.
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior_mask
    }
    pub fn boundary_nodes(&self) -> &[BoundaryEntry] {
        &self.boundary
    }
    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }
    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }
    /// The padding box `U`.
    pub fn padding_box(&self) -> Box2 {
        self.padding
    }
    /// `Ũ`, the padding box shrunk to 90%.
    pub fn shrunk_box(&self) -> Box2 {
        self.padding.scaled(0.9)
    }
    pub fn area(&self) -> f64 {
        crate::par::sum_by(self.len(), |i| self.weights[i])
    }
    /// Largest extent of the bounding box.
    pub fn size(&self) -> f64 {
        let (lo, hi) = self.shape.bbox();
        (hi[0] - lo[0]).max(hi[1] - lo[1])
    }
    /// Neighbours and couplings `c_ij` of node `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.adj_ptr[i]..self.adj_ptr[i + 1];
        self.adj_idx[r.clone()]
            .iter()
            .zip(&self.adj_coef[r])
            .map(|(&j, &c)| (j as usize, c))
    }
    /// Active neighbours east, west, north, south (`NO_NODE` when missing).
    #[inline]
    pub fn directional_neighbors(&self, i: usize) -> [u32; 4] {
        self.dir_nbr[i]
    }
    /// Grid coordinates `(i, j)` of an active node.
    pub fn grid_coords(&self, node: usize) -> (usize, usize) {
        let g = self.node_to_grid[node];
        (g % (self.nx + 1), g / (self.nx + 1))
    }
    /// Active node at grid coordinates.
    pub fn node_at_grid(&self, i: usize, j: usize) -> Option<usize> {
        self.node_at(i as isize, j as isize)
    }
    /// Node counts per axis of the full grid.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny + 1)
    }
    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Signed distance (positive inside), the closest boundary point and piece.
    pub fn closest_boundary(&self, p: Point) -> (f64, Point, usize) {
        let mut best = (f64::INFINITY, p, 0);
        for (k, piece) in self.pieces.iter().enumerate() {
            let q = piece.closest(p);
            let d = norm(sub(p, q));
            if d < best.0 {
                best = (d, q, k);
            }
        }
        let sign = if self.shape.contains(p) { 1.0 } else { -1.0 };
        (sign * best.0, best.1, best.2)
    }

    /// Analytic signed distance and its gradient at an arbitrary point.
    pub fn distance_at(&self, p: Point) -> (f64, Point) {
        let (d, q, k) = self.closest_boundary(p);
        let v = sub(p, q);
        let r = norm(v);
        let g = if r > 1e-14 {
            let s = d.signum();
            [s * v[0] / r, s * v[1] / r]
        } else {
            let nu = self.pieces[k].normal_at(q);
            [-nu[0], -nu[1]]
        };
        (d, g)
    }

    pub fn signed_distance(&self) -> SignedDistance {
        let (values, gradient) = self.points.par_iter().map(|&p| self.distance_at(p)).unzip();
        SignedDistance { values, gradient }
    }

    /// `Σ f(node) · surface weight` over the boundary quadrature.
    pub fn boundary_integral(&self, f: &[f64]) -> f64 {
        self.boundary.iter().map(|b| f[b.node] * b.weight).sum()
    }

    /// Quadrature weights for `∫_{B_r(x) ∩ Ω}`. Centers within `h/2` of `∂Ω` are
    /// snapped onto the boundary and flagged.
    pub fn ball_restriction(&self, x: Point, r: f64) -> Result<BallRestriction, GeometryError> {
        if r <= 2.0 * self.h {
            return Err(GeometryError::RadiusTooSmall { radius: r, h: self.h });
        }
        let (d, q, _) = self.closest_boundary(x);
        if d < -0.5 * self.h {
            return Err(GeometryError::CenterOutsideDomain(x));
        }
        let (center, boundary_flag) = if d.abs() < 0.5 * self.h { (q, true) } else { (x, false) };
        if !self.padding.contains_ball(center, r, self.dim) {
            return Err(GeometryError::BallEscapesU { center, radius: r });
        }
        let h = self.h;
        let i0 = (((center[0] - r - self.origin[0]) / h).floor() as isize - 1).max(0);
        let i1 = (((center[0] + r - self.origin[0]) / h).ceil() as isize + 1).min(self.nx as isize);
        let (j0, j1) = if self.dim == 1 {
            (0, 0)
        } else {
            (
                (((center[1] - r - self.origin[1]) / h).floor() as isize - 1).max(0),
                (((center[1] + r - self.origin[1]) / h).ceil() as isize + 1).min(self.ny as isize),
            )
        };
        let mut nodes = Vec::new();
        let mut node_weights = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let Some(a) = self.node_at(i, j) else { continue };
                let w = self.ball_cell_weight(a, center, r);
                if w > 0.0 {
                    nodes.push(a);
                    node_weights.push(w);
                }
            }
        }
        Ok(BallRestriction {
            center,
            radius: r,
            boundary_flag,
            nodes,
            node_weights,
        })
    }

    fn ball_cell_weight(&self, a: usize, c: Point, r: f64) -> f64 {
        let h = self.h;
        let [x, y] = self.points[a];
        let w = self.weights[a];
        if self.dim == 1 {
            let (lo, hi) = self.shape.bbox();
            let cell_lo = (x - 0.5 * h).max(lo[0]);
            let cell_hi = (x + 0.5 * h).min(hi[0]);
            return overlap(cell_lo, cell_hi, c[0] - r, c[0] + r);
        }
        let b = Box2::new(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h);
        let nx = (c[0] - c[0].clamp(b.x0, b.x1)).abs();
        let ny = (c[1] - c[1].clamp(b.y0, b.y1)).abs();
        if nx * nx + ny * ny >= r * r {
            return 0.0;
        }
        let fx = (c[0] - b.x0).abs().max((c[0] - b.x1).abs());
        let fy = (c[1] - b.y0).abs().max((c[1] - b.y1).abs());
        if fx * fx + fy * fy <= r * r {
            return w;
        }
        if w >= h * h * (1.0 - 1e-12) {
            return disk_box_area(c, r, &b);
        }
        // Cells cut only by straight axis-aligned boundary pieces are boxes.
        let (lo, hi) = self.shape.bbox();
        if let Some(cb) = b.clip(&Box2::new(lo[0], hi[0], lo[1], hi[1])) {
            if (cb.area() - w).abs() <= 1e-12 * h * h {
                return disk_box_area(c, r, &cb);
            }
        }
        self.cut_ball_cell_area(&b, c, r).min(w)
    }

    /// `|box ∩ Ω ∩ B_r(c)|` by composite Gauss-Legendre over x of chord lengths.
    fn cut_ball_cell_area(&self, b: &Box2, c: Point, r: f64) -> f64 {
        let xa = b.x0.max(c[0] - r);
        let xb = b.x1.min(c[0] + r);
        if xb <= xa {
            return 0.0;
        }
        const SUB: usize = 16;
        let step = (xb - xa) / SUB as f64;
        let mut total = 0.0;
        for s in 0..SUB {
            let a0 = xa + s as f64 * step;
            for (t, wt) in GL5 {
                let x = a0 + 0.5 * step * (1.0 + t);
                let dx = x - c[0];
                let half = (r * r - dx * dx).max(0.0).sqrt();
                let lo = b.y0.max(c[1] - half);
                let hi = b.y1.min(c[1] + half);
                if hi > lo {
                    total += 0.5 * step * wt * self.shape.y_intervals(x).overlap_len(lo, hi);
                }
            }
        }
        total
    }
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Up to two disjoint intervals.
#[derive(Debug, Clone, Copy)]
struct Intervals {
    items: [(f64, f64); 2],
    count: usize,
}

impl Intervals {
    fn none() -> Self {
        Intervals {
            items: [(0.0, 0.0); 2],
            count: 0,
        }
    }
    fn one(a: f64, b: f64) -> Self {
        Intervals {
            items: [(a, b), (0.0, 0.0)],
            count: 1,
        }
    }
    fn two(a: (f64, f64), b: (f64, f64)) -> Self {
        Intervals {
            items: [a, b],
            count: 2,
        }
    }
    fn overlap_len(&self, lo: f64, hi: f64) -> f64 {
        self.items[..self.count]
            .iter()
            .map(|&(a, b)| overlap(a, b, lo, hi))
            .sum()
    }
}

fn half_chord(r: f64, x: f64) -> Option<f64> {
    (x.abs() < r).then(|| (r * r - x * x).sqrt())
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Exact area of an axis-aligned box intersected with the disk `B_r(c)`.
pub fn disk_box_area(c: Point, r: f64, b: &Box2) -> f64 {
    let (x0, x1) = (b.x0 - c[0], b.x1 - c[0]);
    let (y0, y1) = (b.y0 - c[1], b.y1 - c[1]);
    let g = |x: f64, y: f64| clamp_integral(r, x, y);
    (g(x1, y1) - g(x1, y0) - g(x0, y1) + g(x0, y0)).max(0.0)
}

/// `∫_0^x clamp(y, -s(t), s(t)) dt` with `s(t) = sqrt(r^2 - t^2)` (zero beyond `r`).
fn clamp_integral(r: f64, x: f64, y: f64) -> f64 {
    let sign = x.signum() * y.signum();
    let (x, y) = (x.abs(), y.abs());
    let xr = x.min(r);
    let a = if y >= r { 0.0 } else { (r * r - y * y).sqrt() };
    let m = xr.min(a);
    let prim = |t: f64| 0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).clamp(-1.0, 1.0).asin());
    sign * (y * m + prim(xr) - prim(m))
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}
#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_disk(n: usize) -> Domain {
        Domain::build(Shape::Disk { radius: 1.0 }, &[n]).unwrap()
    }

    #[test]
    fn disk_box_area_matches_known_cases() {
        let full = Box2::new(-2.0, 2.0, -2.0, 2.0);
        assert_abs_diff_eq!(disk_box_area([0.0, 0.0], 1.0, &full), PI, epsilon = 1e-14);
        let quadrant = Box2::new(0.0, 2.0, 0.0, 2.0);
        assert_abs_diff_eq!(disk_box_area([0.0, 0.0], 1.0, &quadrant), PI / 4.0, epsilon = 1e-14);
        let inside = Box2::new(-0.1, 0.2, 0.0, 0.3);
        assert_abs_diff_eq!(disk_box_area([0.0, 0.0], 1.0, &inside), 0.09, epsilon = 1e-15);
        let half = Box2::new(0.5, 3.0, -3.0, 3.0);
        // Circular segment beyond x = 0.5 of the unit disk.
        let seg = (0.5f64).acos() - 0.5 * (0.75f64).sqrt();
        assert_abs_diff_eq!(disk_box_area([0.0, 0.0], 1.0, &half), seg, epsilon = 1e-14);
        assert_eq!(disk_box_area([5.0, 5.0], 1.0, &inside), 0.0);
    }

    #[test]
    fn disk_box_area_agrees_with_monte_carlo_grid() {
        let b = Box2::new(0.3, 0.9, -0.2, 0.55);
        let c = [0.35, 0.1];
        let r = 0.5;
        let m = 2000;
        let mut hits = 0usize;
        for i in 0..m {
            for j in 0..m {
                let x = b.x0 + (i as f64 + 0.5) / m as f64 * (b.x1 - b.x0);
                let y = b.y0 + (j as f64 + 0.5) / m as f64 * (b.y1 - b.y0);
                if (x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r {
                    hits += 1;
                }
            }
        }
        let est = hits as f64 / (m * m) as f64 * b.area();
        assert_abs_diff_eq!(disk_box_area(c, r, &b), est, epsilon = 2e-4);
    }

    #[test]
    fn areas() {
        let d = unit_disk(128);
        assert!((d.area() - PI).abs() < 0.05, "{}", d.area());
        let i = Domain::build(Shape::Interval { length: 1.0 }, &[256]).unwrap();
        assert_abs_diff_eq!(i.area(), 1.0, epsilon = 1e-12);
        let a = Domain::build(Shape::Annulus { inner: 0.5, outer: 1.0 }, &[128]).unwrap();
        assert!((a.area() - 0.75 * PI).abs() < 1e-3);
        let hd = Domain::build(Shape::HalfDisk { radius: 1.0 }, &[128]).unwrap();
        assert!((hd.area() - 0.5 * PI).abs() < 1e-3);
    }

    #[test]
    fn invalid_params() {
        assert!(matches!(
            Domain::build(Shape::Annulus { inner: 1.0, outer: 0.5 }, &[64]),
            Err(GeometryError::InvalidShapeParams(_))
        ));
        assert!(Domain::build(Shape::Disk { radius: -1.0 }, &[64]).is_err());
        assert!(Domain::build(Shape::Interval { length: 1.0 }, &[8]).is_err());
        assert!(Domain::build(
            Shape::Rectangle {
                width: 2.0,
                height: 1.0
            },
            &[128, 128]
        )
        .is_err());
    }

    #[test]
    fn rectangle_edge_normal() {
        let d = Domain::build(
            Shape::Rectangle {
                width: 2.0,
                height: 1.0,
            },
            &[128, 64],
        )
        .unwrap();
        let e = d
            .boundary_nodes()
            .iter()
            .find(|b| norm(sub(b.point, [2.0, 0.5])) < 1e-12)
            .unwrap();
        assert_eq!(e.normal, [1.0, 0.0]);
        assert_eq!(d.points()[e.node], [2.0, 0.5]);
    }

    #[test]
    fn boundary_integrals() {
        let d = unit_disk(128);
        let ones = vec![1.0; d.len()];
        assert!((d.boundary_integral(&ones) - 2.0 * PI).abs() < 0.05);
        let xs: Vec<f64> = d.points().iter().map(|p| p[0]).collect();
        assert!(d.boundary_integral(&xs).abs() < 0.02);
        let r = Domain::build(
            Shape::Rectangle {
                width: 2.0,
                height: 1.0,
            },
            &[128, 64],
        )
        .unwrap();
        assert!((r.boundary_integral(&vec![1.0; r.len()]) - 6.0).abs() < 0.02);
        for b in d.boundary_nodes() {
            assert_abs_diff_eq!(norm(b.normal), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn signed_distance_examples() {
        let d = unit_disk(64);
        assert_eq!(d.distance_at([0.0, 0.0]).0, 1.0);
        let r = Domain::build(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            &[64],
        )
        .unwrap();
        assert_abs_diff_eq!(r.distance_at([0.3, 0.5]).0, 0.3, epsilon = 1e-15);
        let a = Domain::build(Shape::Annulus { inner: 0.5, outer: 1.0 }, &[64]).unwrap();
        assert_abs_diff_eq!(a.distance_at([0.75, 0.0]).0, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(a.distance_at([0.0, 0.2]).0, -0.3, epsilon = 1e-15);
        let hd = Domain::build(Shape::HalfDisk { radius: 1.0 }, &[64]).unwrap();
        assert_abs_diff_eq!(hd.distance_at([0.2, 0.1]).0, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(hd.distance_at([1.5, -0.5]).0, -(0.5f64.hypot(0.5)), epsilon = 1e-15);
    }

    #[test]
    fn signed_distance_gradient_is_unit_and_nonnegative_inside() {
        for shape in [
            Shape::Disk { radius: 1.0 },
            Shape::Annulus { inner: 0.4, outer: 1.0 },
            Shape::HalfDisk { radius: 1.0 },
            Shape::Rectangle {
                width: 1.0,
                height: 0.5,
            },
        ] {
            let d = Domain::build(shape, &[64]).unwrap();
            let sd = d.signed_distance();
            for k in 0..d.len() {
                assert_abs_diff_eq!(norm(sd.gradient[k]), 1.0, epsilon = 1e-12);
                if d.interior_mask()[k] {
                    assert!(sd.values[k] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn normals_match_distance_gradient() {
        let d = unit_disk(128);
        for b in d.boundary_nodes() {
            let (_, g) = d.distance_at(d.points()[b.node]);
            let err = norm([b.normal[0] + g[0], b.normal[1] + g[1]]);
            assert!(err < 4.0 * d.h(), "{err}");
        }
    }

    #[test]
    fn ball_examples() {
        let d = unit_disk(128);
        let b = d.ball_restriction([0.0, 0.0], 0.5).unwrap();
        assert!(!b.boundary_flag);
        assert_abs_diff_eq!(b.total_weight(), PI / 4.0, epsilon = 1e-12);

        let hd = Domain::build(Shape::HalfDisk { radius: 1.0 }, &[128]).unwrap();
        let r = 0.2;
        let b = hd.ball_restriction([0.1, 0.0], r).unwrap();
        assert!(b.boundary_flag);
        assert_abs_diff_eq!(b.total_weight(), PI * r * r / 2.0, epsilon = 1e-12);

        let i = Domain::build(Shape::Interval { length: 1.0 }, &[64]).unwrap();
        let b = i.ball_restriction([0.0, 0.0], 0.25).unwrap();
        assert!(b.boundary_flag);
        assert_abs_diff_eq!(b.total_weight(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn ball_at_curved_boundary() {
        let d = unit_disk(256);
        let r = 0.3;
        let b = d.ball_restriction([1.0, 0.0], r).unwrap();
        assert!(b.boundary_flag);
        // Lens B_r((1,0)) ∩ B_1(0).
        let lens = r * r * (r / 2.0).acos() + (1.0 - r * r / 2.0).acos() - 0.5 * (r * r * (4.0 - r * r)).sqrt();
        assert!((b.total_weight() - lens).abs() < 4.0 * d.h() * 2.0 * PI * r);
        assert!((b.total_weight() - lens).abs() < 1e-4, "{} vs {lens}", b.total_weight());
    }

    #[test]
    fn ball_errors() {
        let d = unit_disk(64);
        assert!(matches!(
            d.ball_restriction([0.0, 0.0], 1.5 * d.h()),
            Err(GeometryError::RadiusTooSmall { .. })
        ));
        assert!(matches!(
            d.ball_restriction([0.0, 0.0], 5.0),
            Err(GeometryError::BallEscapesU { .. })
        ));
    }

    #[test]
    fn area_error_shrinks_with_h() {
        for shape in [Shape::Disk { radius: 1.0 }, Shape::Annulus { inner: 0.3, outer: 1.0 }] {
            let exact = match shape {
                Shape::Disk { radius } => PI * radius * radius,
                Shape::Annulus { inner, outer } => PI * (outer * outer - inner * inner),
                _ => unreachable!(),
            };
            let e1 = (Domain::build(shape, &[32]).unwrap().area() - exact).abs();
            let e2 = (Domain::build(shape, &[64]).unwrap().area() - exact).abs();
            assert!(e2 <= 0.5 * e1 + 1e-12, "{e1} {e2}");
        }
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = Domain::build(Shape::HalfDisk { radius: 1.0 }, &[64]).unwrap();
        let s = serde_json::to_string(&d.descriptor()).unwrap();
        let back: DomainDescriptor = serde_json::from_str(&s).unwrap();
        let e = Domain::from_descriptor(&back).unwrap();
        assert_eq!(e.len(), d.len());
        assert_eq!(e.weights(), d.weights());
    }

    #[test]
    fn rectangle_couplings_mirror_ghost_nodes() {
        let d = Domain::build(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            &[16],
        )
        .unwrap();
        let corner = d.node_at_grid(0, 0).unwrap();
        let mut cs: Vec<f64> = d.neighbors(corner).map(|(_, c)| c).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.5, 0.5]);
        assert_abs_diff_eq!(d.weights()[corner], d.h() * d.h() / 4.0, epsilon = 1e-18);
    }
}
