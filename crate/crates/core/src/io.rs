//! Text formats: patch geometry files, legacy VTK structured grids and the
//! CSV tables written by the case runner.
//!
//! Geometry file (version 1), whitespace separated, `#` starts a comment:
//!
//! ```text
//! igadd-geometry 1
//! dim_param 2
//! dim_phys 2
//! degrees 2 2
//! knots 0 0 0 0.5 1 1 1
//! knots 0 0 0 1 1 1
//! controls 12
//! 0.0 0.0
//! ...
//! ```
//!
//! Controls are listed with the first parametric direction running fastest.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{Patch, Point};
use crate::schwarz::RunReport;
use crate::splines::{KnotVector, TensorSpace};

const GEOMETRY_MAGIC: &str = "igadd-geometry";
/// Upper bound on declared sizes, to keep malformed input from allocating.
const MAX_ENTRIES: usize = 1 << 22;

pub fn write_geometry(patch: &Patch) -> String {
    let space = patch.space();
    let mut s = String::new();
    let _ = writeln!(s, "{GEOMETRY_MAGIC} 1");
    let _ = writeln!(s, "dim_param {}", patch.dim_param());
    let _ = writeln!(s, "dim_phys {}", patch.dim_phys());
    let degrees: Vec<String> = space.degrees().iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "degrees {}", degrees.join(" "));
    for kv in space.dirs() {
        let knots: Vec<String> = kv.knots().iter().map(|k| format!("{k:?}")).collect();
        let _ = writeln!(s, "knots {}", knots.join(" "));
    }
    let _ = writeln!(s, "controls {}", patch.num_basis());
    for i in 0..patch.num_basis() {
        let row: Vec<String> = patch.control(i).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Meaningful lines with their 1-based numbers, comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_nums<T: std::str::FromStr>(line: usize, fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| parse_err(line, format!("bad number `{f}`"))))
        .collect()
}

fn keyed<'a>(item: Option<(usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (line, text) = item.ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
    let mut fields = text.split_whitespace();
    if fields.next() != Some(key) {
        return Err(parse_err(line, format!("expected `{key}`")));
    }
    Ok((line, fields.collect()))
}

fn single<T: std::str::FromStr>(item: Option<(usize, &str)>, key: &str) -> Result<(usize, T)> {
    let (line, fields) = keyed(item, key)?;
    if fields.len() != 1 {
        return Err(parse_err(line, format!("`{key}` takes one value")));
    }
    Ok((line, parse_nums(line, &fields)?.remove(0)))
}

pub fn read_geometry(text: &str) -> Result<Patch> {
    let mut lines = content_lines(text);
    let (line, version) = single::<u32>(lines.next(), GEOMETRY_MAGIC)?;
    if version != 1 {
        return Err(parse_err(line, format!("unsupported version {version}")));
    }
    let (line, dim_param) = single::<usize>(lines.next(), "dim_param")?;
    if !(1..=3).contains(&dim_param) {
        return Err(parse_err(line, "dim_param must be 1, 2 or 3"));
    }
    let (line, dim_phys) = single::<usize>(lines.next(), "dim_phys")?;
    if !(dim_param..=3).contains(&dim_phys) {
        return Err(parse_err(line, "dim_phys must be in dim_param..=3"));
    }
    let (line, fields) = keyed(lines.next(), "degrees")?;
    let degrees: Vec<usize> = parse_nums(line, &fields)?;
    if degrees.len() != dim_param || degrees.iter().any(|&p| p > 10) {
        return Err(parse_err(line, "one degree (≤ 10) per parametric direction"));
    }
    let mut dirs = Vec::with_capacity(dim_param);
    for &p in &degrees {
        let (line, fields) = keyed(lines.next(), "knots")?;
        if fields.len() > MAX_ENTRIES {
            return Err(parse_err(line, "knot vector too long"));
        }
        let knots: Vec<f64> = parse_nums(line, &fields)?;
        dirs.push(KnotVector::new(knots, p).map_err(|e| parse_err(line, e.to_string()))?);
    }
    let space = TensorSpace::new(dirs)?;
    let (line, count) = single::<usize>(lines.next(), "controls")?;
    if count != space.num_basis() {
        return Err(parse_err(
            line,
            format!("{count} controls declared, space has {}", space.num_basis()),
        ));
    }
    let mut controls = Vec::with_capacity(count.min(MAX_ENTRIES) * dim_phys);
    for _ in 0..count {
        let (line, text) = lines.next().ok_or_else(|| parse_err(0, "missing control rows"))?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != dim_phys {
            return Err(parse_err(line, format!("expected {dim_phys} coordinates")));
        }
        let row: Vec<f64> = parse_nums(line, &fields)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line, "non-finite coordinate"));
        }
        controls.extend(row);
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_err(line, "trailing content"));
    }
    Patch::new(space, controls, dim_phys)
}

/// Structured grid with one scalar per point.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkGrid {
    pub dims: [usize; 3],
    pub points: Vec<[f64; 3]>,
    pub values: Vec<f64>,
}

impl VtkGrid {
    pub fn new(dims: [usize; 3], points: &[Point], values: Vec<f64>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if points.len() != n || values.len() != n {
            return Err(Error::InvalidInput(format!(
                "grid {dims:?} needs {n} points and values, got {} and {}",
                points.len(),
                values.len()
            )));
        }
        let points = points
            .iter()
            .map(|p| {
                let mut q = [0.0; 3];
                q[..p.len()].copy_from_slice(p);
                q
            })
            .collect();
        Ok(Self { dims, points, values })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "igadd field")?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET STRUCTURED_GRID")?;
        writeln!(out, "DIMENSIONS {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(out, "POINTS {} double", self.points.len())?;
        for p in &self.points {
            writeln!(out, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
        }
        writeln!(out, "POINT_DATA {}", self.values.len())?;
        writeln!(out, "SCALARS u double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in &self.values {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let mut expect = |want: &str| -> Result<(usize, String)> {
            let (n, l) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{want}`")))?;
            if !l.starts_with(want) {
                return Err(parse_err(n, format!("expected `{want}`")));
            }
            Ok((n, l.to_string()))
        };
        expect("# vtk DataFile")?;
        expect("")?;
        expect("ASCII")?;
        expect("DATASET STRUCTURED_GRID")?;
        let (n, l) = expect("DIMENSIONS")?;
        let dims: Vec<usize> = parse_nums(n, &l.split_whitespace().skip(1).collect::<Vec<_>>())?;
        if dims.len() != 3 {
            return Err(parse_err(n, "three dimensions expected"));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&t| t <= MAX_ENTRIES)
            .ok_or_else(|| parse_err(n, "grid too large"))?;
        let (n, l) = expect("POINTS")?;
        let count: Vec<&str> = l.split_whitespace().collect();
        if count.len() != 3 || count[1].parse::<usize>().ok() != Some(total) {
            return Err(parse_err(n, "point count does not match dimensions"));
        }
        let mut points = Vec::with_capacity(total);
        for _ in 0..total {
            let (n, l) = expect("")?;
            let v: Vec<f64> = parse_nums(n, &l.split_whitespace().collect::<Vec<_>>())?;
            if v.len() != 3 {
                return Err(parse_err(n, "three coordinates expected"));
            }
            points.push([v[0], v[1], v[2]]);
        }
        let (n, l) = expect("POINT_DATA")?;
        if l.split_whitespace().nth(1).and_then(|c| c.parse::<usize>().ok()) != Some(total) {
            return Err(parse_err(n, "value count does not match dimensions"));
        }
        expect("SCALARS")?;
        expect("LOOKUP_TABLE")?;
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            let (n, l) = expect("")?;
            values.push(parse_nums::<f64>(n, &[l.as_str()])?[0]);
        }
        Ok(Self {
            dims: [dims[0], dims[1], dims[2]],
            points,
            values,
        })
    }
}

/// Iteration-by-column table: one column per labelled report, rows are
/// sweeps `1..=rows` holding the largest subdomain error (empty when the
/// report stopped earlier).
pub fn write_iteration_table<W: Write>(reports: &[(String, RunReport)], rows: usize, mut out: W) -> Result<()> {
    let mut header = vec!["iteration".to_string()];
    header.extend(reports.iter().map(|(label, _)| label.clone()));
    writeln!(out, "{}", header.join(","))?;
    if reports.is_empty() {
        return Ok(());
    }
    let columns: Vec<Vec<f64>> = reports.iter().map(|(_, r)| r.max_errors()).collect();
    for k in 0..rows {
        let mut row = vec![(k + 1).to_string()];
        row.extend(
            columns
                .iter()
                .map(|c| c.get(k).map(|e| format!("{e:e}")).unwrap_or_default()),
        );
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `partitions,degree,computed,reference` rows.
pub fn write_dof_table<W: Write>(rows: &[(usize, usize, usize, usize)], mut out: W) -> Result<()> {
    writeln!(out, "partitions,degree,computed,reference")?;
    for (k, p, c, reference) in rows {
        writeln!(out, "{k},{p},{c},{reference}")?;
    }
    Ok(())
}
