//! Plain-text file formats.
//!
//! Observations use a 1-indexed coordinate layout:
//!
//! ```text
//! %%observations m1 m2 count
//! i j value
//! ...
//! ```
//!
//! Values are written in scientific notation with 17 significant digits so
//! they parse back bit for bit. A sampling model file holds either the single
//! line `uniform p` or a coordinate listing of every probability.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::probe::PackingSet;
use crate::sampling::{ObservationSet, SamplingModel};
use crate::svt::IterationTrace;

const HEADER: &str = "%%observations";

/// 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn write_coordinates(
    rows: usize,
    cols: usize,
    entries: impl ExactSizeIterator<Item = (usize, usize, f64)>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER} {rows} {cols} {}", entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, format_value(v));
    }
    out
}

struct Coordinates {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

fn significant_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_coordinates(text: &str) -> Result<Coordinates> {
    let mut lines = significant_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != HEADER {
        return Err(parse_err(hline, format!("expected `{HEADER} m1 m2 count`")));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| parse_err(hline, format!("bad {what} `{s}`")))
    };
    let rows = num(fields[1], "m1")?;
    let cols = num(fields[2], "m2")?;
    let count = num(fields[3], "count")?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(hline, "dimensions must be positive"));
    }

    let mut entries = Vec::with_capacity(count);
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(ln, "expected `i j value`"));
        }
        let idx = |s: &str, max: usize| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| parse_err(ln, format!("bad index `{s}`")))?;
            if v == 0 || v > max {
                return Err(parse_err(ln, format!("index {v} outside 1..={max}")));
            }
            Ok(v - 1)
        };
        let i = idx(f[0], rows)?;
        let j = idx(f[1], cols)?;
        let v: f64 = f[2]
            .parse()
            .map_err(|_| parse_err(ln, format!("bad value `{}`", f[2])))?;
        if !v.is_finite() {
            return Err(parse_err(ln, "non-finite value"));
        }
        entries.push((i, j, v));
    }
    if entries.len() != count {
        return Err(parse_err(
            hline,
            format!("header declares {count} entries, found {}", entries.len()),
        ));
    }
    Ok(Coordinates {
        rows,
        cols,
        entries,
    })
}

pub fn observations_to_string(obs: &ObservationSet) -> String {
    let entries: Vec<_> = obs.triples().collect();
    write_coordinates(obs.rows(), obs.cols(), entries.into_iter())
}

pub fn parse_observations(text: &str) -> Result<ObservationSet> {
    let c = parse_coordinates(text)?;
    ObservationSet::from_triples(c.rows, c.cols, c.entries)
}

pub fn write_observations(obs: &ObservationSet, path: &Path) -> Result<()> {
    fs::write(path, observations_to_string(obs))?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    parse_observations(&fs::read_to_string(path)?)
}

pub fn sampling_model_to_string(model: &SamplingModel) -> String {
    match model {
        SamplingModel::Uniform { p, .. } => format!("uniform {}\n", format_value(*p)),
        SamplingModel::General { probs } => {
            let (rows, cols) = probs.shape();
            let entries: Vec<_> = (0..rows)
                .flat_map(|i| (0..cols).map(move |j| (i, j)))
                .map(|(i, j)| (i, j, probs.get(i, j)))
                .collect();
            write_coordinates(rows, cols, entries.into_iter())
        }
    }
}

/// `dims` supplies the shape for the `uniform p` form.
pub fn parse_sampling_model(text: &str, dims: Option<(usize, usize)>) -> Result<SamplingModel> {
    let first = significant_lines(text).next();
    if let Some((ln, line)) = first {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.first() == Some(&"uniform") {
            if f.len() != 2 {
                return Err(parse_err(ln, "expected `uniform p`"));
            }
            let p: f64 = f[1]
                .parse()
                .map_err(|_| parse_err(ln, format!("bad probability `{}`", f[1])))?;
            let (rows, cols) =
                dims.ok_or_else(|| invalid("a uniform sampling model needs matrix dimensions"))?;
            return SamplingModel::uniform(rows, cols, p);
        }
    }
    let c = parse_coordinates(text)?;
    if c.entries.len() != c.rows * c.cols {
        return Err(parse_err(1, "a probability matrix must list every entry"));
    }
    let mut data = vec![f64::NAN; c.rows * c.cols];
    for (i, j, v) in c.entries {
        let slot = &mut data[i * c.cols + j];
        if !slot.is_nan() {
            return Err(invalid(format!("probability ({}, {}) listed twice", i + 1, j + 1)));
        }
        *slot = v;
    }
    let model = SamplingModel::general(DenseMatrix::from_row_slice(c.rows, c.cols, &data)?)?;
    if let Some(d) = dims {
        crate::linalg::ensure_same_shape(d, model.shape())?;
    }
    Ok(model)
}

/// One row per line, comma separated, 17 significant digits.
pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format_value(m.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in significant_lines(text) {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| parse_err(ln, format!("bad value `{s}`")))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(ln, format!("expected {c} columns, got {}", row.len())))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    DenseMatrix::from_row_slice(rows, cols.unwrap_or(0), &data)
}

pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

/// Columns: iter, delta_opnorm_unobs, delta_sup, delta_fro, f_lambda, q_value, rank.
pub fn write_trace_csv(trace: &IterationTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in &trace.records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<IterationTrace> {
    let mut rdr = csv::Reader::from_path(path)?;
    let records = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(IterationTrace { records })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `member_000.csv`, `member_001.csv`, ... plus `manifest.json`.
pub fn write_packing_set(set: &PackingSet, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(set.members.len() + 1);
    for (k, member) in set.members.iter().enumerate() {
        let path = dir.join(format!("member_{k:03}.csv"));
        write_matrix_csv(member, &path)?;
        paths.push(path);
    }
    let manifest = dir.join("manifest.json");
    write_json(&set.manifest(), &manifest)?;
    paths.push(manifest);
    Ok(paths)
}
