//! Dataset files: CSV features, whitespace edge lists and one-label-per-line
//! label files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use swapgt_core::graph::class_count_for;
use swapgt_core::{generate_sbm, Graph};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, Result};

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Row-major features and their width.
pub fn load_features(path: &Path) -> Result<(Vec<f32>, usize)> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(f);
    let mut data = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let width = *dim.get_or_insert(record.len());
        if record.len() != width {
            return Err(CliError::parse(path, line, format!("{} values, expected {width}", record.len())));
        }
        for field in &record {
            let v: f32 = field.parse().map_err(|_| CliError::parse(path, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(CliError::parse(path, line, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
    }
    match dim {
        Some(d) if d > 0 => Ok((data, d)),
        _ => Err(CliError::Data(format!("{}: no feature rows", path.display()))),
    }
}

/// Undirected `u v` pairs; ids are checked against `n`.
pub fn load_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, text) in lines(path)? {
        let text = text.map_err(|e| CliError::io(path, e))?;
        let mut parts = text.split_whitespace();
        let (Some(u), Some(v)) = (parts.next(), parts.next()) else {
            if text.trim().is_empty() {
                continue;
            }
            return Err(CliError::parse(path, line, "expected two node ids"));
        };
        if parts.next().is_some() {
            return Err(CliError::parse(path, line, "expected two node ids"));
        }
        let id = |s: &str| -> Result<usize> {
            let i: usize = s.parse().map_err(|_| CliError::parse(path, line, format!("not a node id: {s:?}")))?;
            if i >= n {
                return Err(CliError::parse(path, line, format!("node id {i} out of range for {n} nodes")));
            }
            Ok(i)
        };
        edges.push((id(u)?, id(v)?));
    }
    Ok(edges)
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let mut labels = Vec::new();
    for (line, text) in lines(path)? {
        let text = text.map_err(|e| CliError::io(path, e))?;
        let t = text.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| CliError::parse(path, line, format!("not a label: {t:?}")))?);
    }
    Ok(labels)
}

/// Reads the three dataset files. Self-loops and repeated edges are dropped
/// with a warning.
pub fn load_graph(features: &Path, edges: &Path, labels: &Path, num_classes: Option<usize>) -> Result<Graph> {
    let (x, dim) = load_features(features)?;
    let y = load_labels(labels)?;
    let n = x.len() / dim;
    if y.len() != n {
        return Err(CliError::Data(format!("{n} feature rows but {} labels", y.len())));
    }
    let e = load_edges(edges, n)?;
    let classes = class_count_for(&y, num_classes)?;
    let (g, report) = Graph::from_edges(dim, x, y, classes, &e)?;
    if report.self_loops > 0 || report.duplicates > 0 {
        warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            edges.display(),
            report.self_loops,
            report.duplicates
        );
    }
    Ok(g)
}

/// Writes a graph in the three-file format read by [`load_graph`].
pub fn write_graph(g: &Graph, features: &Path, edges: &Path, labels: &Path) -> Result<()> {
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| CliError::io(p, e));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(features)?);
    for i in 0..g.node_count() {
        w.write_record(g.feature_row(i).iter().map(|v| v.to_string()))
            .map_err(|e| CliError::Data(format!("{}: {e}", features.display())))?;
    }
    w.flush().map_err(|e| CliError::io(features, e))?;
    let mut w = create(edges)?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}").map_err(|e| CliError::io(edges, e))?;
    }
    w.flush().map_err(|e| CliError::io(edges, e))?;
    let mut w = create(labels)?;
    for y in g.labels() {
        writeln!(w, "{y}").map_err(|e| CliError::io(labels, e))?;
    }
    w.flush().map_err(|e| CliError::io(labels, e))
}

/// The graph a config points at: files on disk or a generated SBM.
pub fn load_dataset(config: &RunConfig) -> Result<Graph> {
    match &config.source {
        DataSource::Files { features, edges, labels, num_classes } => load_graph(features, edges, labels, *num_classes),
        DataSource::Sbm(s) => Ok(generate_sbm(&s.spec(), s.seed)?),
    }
}
