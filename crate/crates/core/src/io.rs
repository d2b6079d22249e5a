//! Plain-text solution files and CSV exports.
//!
//! A solution file is one line of JSON (the header) followed by a CSV table
//! `i,j,x,y,u` of nodal values in node order.

use crate::geometry::{Domain, DomainDescriptor, GeometryError};
use crate::solver::{Field, Solution};
use crate::varifold::{DiscreteVarifold, InterfaceCurve};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("solution has {found} nodes, domain has {expected}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("row {row}: {detail}")]
    BadRow { row: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionHeader {
    pub domain: DomainDescriptor,
    pub epsilon: f64,
    pub lambda: f64,
    pub residual_norm: f64,
    pub constraint: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_solution(mut out: impl Write, sol: &Solution) -> Result<(), IoError> {
    let dom = &sol.field.domain;
    let header = SolutionHeader {
        domain: dom.descriptor(),
        epsilon: sol.field.epsilon,
        lambda: sol.lambda,
        residual_norm: sol.residual_norm,
        constraint: sol.constraint,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    writeln!(out, "i,j,x,y,u")?;
    for (k, (p, u)) in dom.points().iter().zip(&sol.field.values).enumerate() {
        let (i, j) = dom.grid_coords(k);
        writeln!(out, "{i},{j},{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*u))?;
    }
    Ok(())
}

/// Reads a solution file. When `domain` is given the file must match it node for node;
/// otherwise the domain is rebuilt from the header.
pub fn read_solution(input: impl Read, domain: Option<Arc<Domain>>) -> Result<Solution, IoError> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: SolutionHeader = serde_json::from_str(line.trim())?;
    let domain = match domain {
        Some(d) => d,
        None => Arc::new(Domain::from_descriptor(&header.domain)?),
    };
    let mut values = Vec::with_capacity(domain.len());
    let mut rdr = csv::Reader::from_reader(reader);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let u: f64 = rec
            .get(4)
            .ok_or_else(|| IoError::BadRow {
                row,
                detail: "missing u column".into(),
            })?
            .parse()
            .map_err(|e| IoError::BadRow {
                row,
                detail: format!("{e}"),
            })?;
        values.push(u);
    }
    if values.len() != domain.len() || header.domain != domain.descriptor() {
        return Err(IoError::DomainMismatch {
            expected: domain.len(),
            found: values.len(),
        });
    }
    Ok(Solution {
        field: Field {
            domain,
            epsilon: header.epsilon,
            values,
        },
        lambda: header.lambda,
        residual_norm: header.residual_norm,
        iterations: header.iterations,
        constraint: header.constraint,
        converged: header.converged,
        newton_history: Vec::new(),
    })
}

/// Atoms as `x,y,weight,nx,ny,zero_flag`; zero-normal atoms carry `nx = ny = 0`.
pub fn write_atoms(out: impl Write, v: &DiscreteVarifold) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "weight", "nx", "ny", "zero_flag"])?;
    for a in &v.atoms {
        let n = a.normal.unwrap_or([0.0, 0.0]);
        w.write_record([
            fmt_f64(a.point[0]),
            fmt_f64(a.point[1]),
            fmt_f64(a.weight),
            fmt_f64(n[0]),
            fmt_f64(n[1]),
            (a.normal.is_none() as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Polyline vertices as `chain,closed,x,y`.
pub fn write_interface(out: impl Write, c: &InterfaceCurve) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["chain", "closed", "x", "y"])?;
    for (k, (chain, closed)) in c.polylines.iter().zip(&c.closed).enumerate() {
        for p in chain {
            w.write_record([k.to_string(), (*closed as u8).to_string(), fmt_f64(p[0]), fmt_f64(p[1])])?;
        }
    }
    w.flush()?;
    Ok(())
}
