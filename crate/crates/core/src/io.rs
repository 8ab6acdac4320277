//! Delimited-text readers and writers for datasets, graphs, embeddings,
//! trajectories and reports.
//!
//! Floating point values are written in scientific notation with enough
//! digits to round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::engine::{Snapshot, Trajectory};
use crate::evaluation::{EvaluationReport, SweepRow};
use crate::spectral_graph::{GraphKind, NeighborhoodGraph, PixelDataset};
use crate::{Error, Result, Scalar};

/// Formats `v` so that parsing it back yields the same value.
pub fn format_scalar<T: Scalar>(v: T) -> String {
    let digits = if std::mem::size_of::<T>() >= 8 { 16 } else { 8 };
    format!("{v:.digits$e}")
}

fn parse_scalar<T: Scalar>(s: &str, path: &Path, line: u64) -> Result<T> {
    let v = T::from_str_radix(s.trim(), 10).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("`{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("non-finite value `{s}`"),
        });
    }
    Ok(v)
}

fn parse_index(s: &str, path: &Path, line: u64) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("`{s}` is not a nonnegative integer"),
    })
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Header plus records of a csv body, with the file line of every record.
type Records = (Vec<String>, Vec<(u64, csv::StringRecord)>);

fn read_records(path: &Path, body: &str, first_line: u64) -> Result<Records> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, first_line, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(first_line, |p| p.line() + first_line - 1);
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(first_line, |p| p.line() + first_line - 1);
        rows.push((line, rec));
    }
    Ok((header, rows))
}

/// Reads `row,col,b0,…,b{d−1}[,label]`.
pub fn load_pixels_csv<T: Scalar>(path: &Path) -> Result<PixelDataset<T>> {
    let text = read_text(path)?;
    let (header, rows) = read_records(path, &text, 1)?;
    let has_label = header.last().is_some_and(|h| h == "label");
    let d = header.len().saturating_sub(2 + usize::from(has_label));
    if header.len() < 3 || header[0] != "row" || header[1] != "col" || d == 0 {
        return Err(parse_error(path, 1, "header must be `row,col,b0,...[,label]`"));
    }
    for (b, h) in header[2..2 + d].iter().enumerate() {
        if *h != format!("b{b}") {
            return Err(parse_error(path, 1, format!("expected column `b{b}`, found `{h}`")));
        }
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "no pixels"));
    }
    let mut coords = Vec::with_capacity(rows.len());
    let mut spectra = Array2::zeros((rows.len(), d));
    let mut labels = Vec::new();
    for (i, (line, rec)) in rows.iter().enumerate() {
        coords.push([parse_scalar(&rec[0], path, *line)?, parse_scalar(&rec[1], path, *line)?]);
        for b in 0..d {
            spectra[[i, b]] = parse_scalar(&rec[2 + b], path, *line)?;
        }
        if has_label {
            labels.push(parse_index(&rec[2 + d], path, *line)?);
        }
    }
    PixelDataset::new(coords, spectra, has_label.then_some(labels))
}

pub fn pixels_csv<T: Scalar>(data: &PixelDataset<T>) -> String {
    let d = data.n_bands();
    let mut out = String::from("row,col");
    for b in 0..d {
        write!(out, ",b{b}").unwrap();
    }
    if data.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..data.n_pixels() {
        let [r, c] = data.coords()[i];
        write!(out, "{},{}", format_scalar(r), format_scalar(c)).unwrap();
        for &v in data.spectrum(i) {
            write!(out, ",{}", format_scalar(v)).unwrap();
        }
        if let Some(labels) = data.labels() {
            write!(out, ",{}", labels[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_pixels_csv<T: Scalar>(path: &Path, data: &PixelDataset<T>) -> Result<()> {
    write_text(path, &pixels_csv(data))
}

/// `# n_vertices=N kind=K k=K` followed by `i,j,w` rows with `i < j`.
pub fn graph_csv<T: Scalar>(graph: &NeighborhoodGraph<T>) -> String {
    let mut out = format!(
        "# n_vertices={} kind={} k={}\ni,j,w\n",
        graph.n_vertices(),
        graph.kind,
        graph.k
    );
    for (i, j, w) in graph.edges() {
        writeln!(out, "{i},{j},{}", format_scalar(w)).unwrap();
    }
    out
}

pub fn save_graph_csv<T: Scalar>(path: &Path, graph: &NeighborhoodGraph<T>) -> Result<()> {
    write_text(path, &graph_csv(graph))
}

pub fn load_graph_csv<T: Scalar>(path: &Path) -> Result<NeighborhoodGraph<T>> {
    let text = read_text(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let meta = first
        .strip_prefix('#')
        .ok_or_else(|| parse_error(path, 1, "expected `# n_vertices=N` on the first line"))?;
    let (mut n, mut kind, mut k) = (None, GraphKind::Custom, 0usize);
    for pair in meta.split_whitespace() {
        match pair.split_once('=') {
            Some(("n_vertices", v)) => n = Some(parse_index(v, path, 1)?),
            Some(("kind", v)) => kind = v.parse().map_err(|_| parse_error(path, 1, format!("unknown graph kind `{v}`")))?,
            Some(("k", v)) => k = parse_index(v, path, 1)?,
            _ => return Err(parse_error(path, 1, format!("unrecognized metadata `{pair}`"))),
        }
    }
    let n = n.ok_or_else(|| parse_error(path, 1, "missing n_vertices"))?;
    let (header, rows) = read_records(path, body, 2)?;
    if header != ["i", "j", "w"] {
        return Err(parse_error(path, 2, "header must be `i,j,w`"));
    }
    let mut edges = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let i = parse_index(&rec[0], path, *line)?;
        let j = parse_index(&rec[1], path, *line)?;
        if i >= j {
            return Err(parse_error(path, *line, "edges must satisfy i < j"));
        }
        edges.push((i, j, parse_scalar(&rec[2], path, *line)?));
    }
    NeighborhoodGraph::from_edges(n, &edges, kind, k)
}

/// `id,z1,…,zm`.
pub fn embedding_csv<T: Scalar>(z: ArrayView2<'_, T>) -> String {
    let mut out = String::from("id");
    for k in 1..=z.ncols() {
        write!(out, ",z{k}").unwrap();
    }
    out.push('\n');
    for (i, row) in z.outer_iter().enumerate() {
        write!(out, "{i}").unwrap();
        for &v in row {
            write!(out, ",{}", format_scalar(v)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_embedding_csv<T: Scalar>(path: &Path, z: ArrayView2<'_, T>) -> Result<()> {
    write_text(path, &embedding_csv(z))
}

fn check_coordinate_header(path: &Path, cols: &[String], line: u64) -> Result<usize> {
    for (k, h) in cols.iter().enumerate() {
        if *h != format!("z{}", k + 1) {
            return Err(parse_error(path, line, format!("expected column `z{}`, found `{h}`", k + 1)));
        }
    }
    if cols.is_empty() {
        return Err(parse_error(path, line, "no coordinate columns"));
    }
    Ok(cols.len())
}

pub fn load_embedding_csv<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    let text = read_text(path)?;
    let (header, rows) = read_records(path, &text, 1)?;
    if header.first().map(String::as_str) != Some("id") {
        return Err(parse_error(path, 1, "header must be `id,z1,...,zm`"));
    }
    let m = check_coordinate_header(path, &header[1..], 1)?;
    let mut z = Array2::zeros((rows.len(), m));
    for (i, (line, rec)) in rows.iter().enumerate() {
        if parse_index(&rec[0], path, *line)? != i {
            return Err(parse_error(path, *line, format!("expected id {i}")));
        }
        for k in 0..m {
            z[[i, k]] = parse_scalar(&rec[1 + k], path, *line)?;
        }
    }
    Ok(z)
}

/// `t,id,z1,…,zm,energy,gradnorm,alpha`, one row per point per snapshot.
pub fn trajectory_csv<T: Scalar>(trajectory: &Trajectory<T>) -> String {
    let m = trajectory.snapshots.first().map_or(0, |s| s.z.ncols());
    let mut out = String::from("t,id");
    for k in 1..=m {
        write!(out, ",z{k}").unwrap();
    }
    out.push_str(",energy,gradnorm,alpha\n");
    for s in &trajectory.snapshots {
        let tail = format!(
            ",{},{},{}",
            format_scalar(s.energy),
            format_scalar(s.grad_norm),
            format_scalar(s.alpha)
        );
        for (i, row) in s.z.outer_iter().enumerate() {
            write!(out, "{},{i}", s.t).unwrap();
            for &v in row {
                write!(out, ",{}", format_scalar(v)).unwrap();
            }
            out.push_str(&tail);
            out.push('\n');
        }
    }
    out
}

pub fn save_trajectory_csv<T: Scalar>(path: &Path, trajectory: &Trajectory<T>) -> Result<()> {
    write_text(path, &trajectory_csv(trajectory))
}

pub fn load_trajectory_csv<T: Scalar>(path: &Path) -> Result<Trajectory<T>> {
    let text = read_text(path)?;
    let (header, rows) = read_records(path, &text, 1)?;
    let n_cols = header.len();
    if n_cols < 6 || header[0] != "t" || header[1] != "id" || header[n_cols - 3..] != ["energy", "gradnorm", "alpha"] {
        return Err(parse_error(path, 1, "header must be `t,id,z1,...,zm,energy,gradnorm,alpha`"));
    }
    let m = check_coordinate_header(path, &header[2..n_cols - 3], 1)?;

    let mut snapshots: Vec<Snapshot<T>> = Vec::new();
    let mut current: Vec<Vec<T>> = Vec::new();
    let mut meta: Option<(usize, T, T, T)> = None;
    let flush = |meta: Option<(usize, T, T, T)>, rows: &mut Vec<Vec<T>>, out: &mut Vec<Snapshot<T>>| {
        if let Some((t, energy, grad_norm, alpha)) = meta {
            let flat: Vec<T> = rows.drain(..).flatten().collect();
            let z = Array2::from_shape_vec((flat.len() / m, m), flat).expect("rectangular snapshot");
            out.push(Snapshot {
                t,
                z,
                energy,
                grad_norm,
                alpha,
            });
        }
    };
    for (line, rec) in &rows {
        let t = parse_index(&rec[0], path, *line)?;
        let id = parse_index(&rec[1], path, *line)?;
        if meta.is_some_and(|(t0, ..)| t0 != t) {
            flush(meta.take(), &mut current, &mut snapshots);
        }
        if id != current.len() {
            return Err(parse_error(path, *line, format!("expected id {} at t = {t}", current.len())));
        }
        if let Some(prev) = snapshots.last() {
            if t <= prev.t {
                return Err(parse_error(path, *line, "iterations must increase"));
            }
        }
        let coords = (0..m).map(|k| parse_scalar(&rec[2 + k], path, *line)).collect::<Result<Vec<T>>>()?;
        current.push(coords);
        meta = Some((
            t,
            parse_scalar(&rec[2 + m], path, *line)?,
            parse_scalar(&rec[3 + m], path, *line)?,
            parse_scalar(&rec[4 + m], path, *line)?,
        ));
    }
    flush(meta.take(), &mut current, &mut snapshots);
    let cadence = match snapshots.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 1,
    };
    Ok(Trajectory { cadence, snapshots })
}

fn fmt_mean_se(v: crate::evaluation::MeanSe) -> String {
    format!("{:.2} ± {:.2}", v.mean, v.se)
}

/// Human-readable report.
pub fn report_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    writeln!(out, "dimension        {}", report.dimension).unwrap();
    writeln!(out, "metric           {}", report.metric).unwrap();
    writeln!(out, "runs             {}", report.runs).unwrap();
    if let Some(f) = report.frobenius {
        writeln!(out, "frobenius        {f:.6e}").unwrap();
    }
    writeln!(out, "overall accuracy {}", fmt_mean_se(report.overall_accuracy)).unwrap();
    match report.kappa {
        Some(k) => writeln!(out, "kappa            {:.4} ± {:.4}", k.mean, k.se).unwrap(),
        None => writeln!(out, "kappa            undefined").unwrap(),
    }
    writeln!(out, "class  accuracy").unwrap();
    for (c, acc) in report.per_class_accuracy.iter().enumerate() {
        writeln!(out, "{:>5}  {}", c + 1, fmt_mean_se(*acc)).unwrap();
    }
    out
}

/// `metric,value,se` rows; class rows are named `class_<c>`.
pub fn report_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("metric,value,se\n");
    let f = |v: f64| format_scalar(v);
    writeln!(out, "dimension,{},0", report.dimension).unwrap();
    writeln!(out, "runs,{},0", report.runs).unwrap();
    if let Some(fr) = report.frobenius {
        writeln!(out, "frobenius,{},0", f(fr)).unwrap();
    }
    writeln!(out, "overall_accuracy,{},{}", f(report.overall_accuracy.mean), f(report.overall_accuracy.se)).unwrap();
    if let Some(k) = report.kappa {
        writeln!(out, "kappa,{},{}", f(k.mean), f(k.se)).unwrap();
    }
    for (c, acc) in report.per_class_accuracy.iter().enumerate() {
        writeln!(out, "class_{},{},{}", c + 1, f(acc.mean), f(acc.se)).unwrap();
    }
    out
}

/// `m,mean_error,std_error`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("m,mean_error,std_error\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.dim, format_scalar(r.error.mean), format_scalar(r.error.se)).unwrap();
    }
    out
}

/// `key=value` lines.
pub fn manifest_text(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
