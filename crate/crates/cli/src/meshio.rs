//! Plain-text mesh and matrix files.
//!
//! Mesh files start with `d=2 nv=<int> nt=<int>`, followed by `nv` vertex
//! lines `v x y [b]` (`b = 1` marks a boundary vertex) and `nt` triangle
//! lines `t i j k` with 0-based vertex indices. Blank lines and lines
//! starting with `#` are skipped.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use mfg_core::mesh::Mesh;
use mfg_core::sparse::CsrMatrix;

use crate::error::CliError;

fn syntax(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("line {line}: {msg}"))
}

fn header_field(token: Option<&str>, key: &str, line: usize) -> Result<usize, CliError> {
    let token = token.ok_or_else(|| syntax(line, format!("missing {key}=")))?;
    let value = token
        .strip_prefix(key)
        .and_then(|s| s.strip_prefix('='))
        .ok_or_else(|| syntax(line, format!("expected {key}=<int>, found `{token}`")))?;
    value.parse().map_err(|_| syntax(line, format!("bad integer in `{token}`")))
}

fn number<T: std::str::FromStr>(token: Option<&str>, line: usize) -> Result<T, CliError> {
    let token = token.ok_or_else(|| syntax(line, "too few fields"))?;
    token.parse().map_err(|_| syntax(line, format!("cannot parse `{token}`")))
}

/// Parses the text format. Syntax problems are reported as I/O errors,
/// geometric ones (bad indices, degenerate triangles) as validation errors.
pub fn parse_mesh(text: &str) -> Result<Mesh, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| CliError::Io("empty mesh file".into()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("d=2") {
        return Err(syntax(hl, "header must start with d=2"));
    }
    let nv = header_field(tokens.next(), "nv", hl)?;
    let nt = header_field(tokens.next(), "nt", hl)?;
    if let Some(extra) = tokens.next() {
        return Err(syntax(hl, format!("unexpected `{extra}` in header")));
    }

    let mut vertices = Vec::with_capacity(nv);
    let mut flags = Vec::with_capacity(nv);
    let mut any_flag = false;
    let mut triangles = Vec::with_capacity(nt);
    for (ln, line) in lines {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                if !triangles.is_empty() {
                    return Err(syntax(ln, "vertex after triangles"));
                }
                let x: f64 = number(tokens.next(), ln)?;
                let y: f64 = number(tokens.next(), ln)?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(syntax(ln, "non-finite coordinate"));
                }
                let b = match tokens.next() {
                    None => None,
                    Some("0") => Some(false),
                    Some("1") => Some(true),
                    Some(other) => return Err(syntax(ln, format!("boundary flag must be 0 or 1, found `{other}`"))),
                };
                any_flag |= b.is_some();
                flags.push(b == Some(true));
                vertices.push([x, y]);
            }
            Some("t") => {
                let tri = [number(tokens.next(), ln)?, number(tokens.next(), ln)?, number(tokens.next(), ln)?];
                triangles.push(tri);
            }
            Some(other) => return Err(syntax(ln, format!("unknown record `{other}`"))),
            None => unreachable!(),
        }
        if let Some(extra) = tokens.next() {
            return Err(syntax(ln, format!("unexpected `{extra}`")));
        }
    }
    if vertices.len() != nv || triangles.len() != nt {
        return Err(CliError::Io(format!(
            "header announces {nv} vertices and {nt} triangles, file has {} and {}",
            vertices.len(),
            triangles.len()
        )));
    }
    Ok(Mesh::new(vertices, triangles, any_flag.then_some(flags))?)
}

pub fn read_mesh(path: &Path) -> Result<Mesh, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_mesh(&text).map_err(|e| match e {
        CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_mesh(mesh: &Mesh, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "d=2 nv={} nt={}", mesh.n_vertices(), mesh.n_triangles())?;
    for (v, b) in mesh.vertices().iter().zip(mesh.boundary_flags()) {
        writeln!(out, "v {:e} {:e} {}", v[0], v[1], u8::from(*b))?;
    }
    for t in mesh.triangles() {
        writeln!(out, "t {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Coordinate format, one `i j value` line per stored entry.
pub fn write_matrix(a: &CsrMatrix, out: &mut impl Write) -> io::Result<()> {
    for (i, j, v) in a.triplets() {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    Ok(())
}
