//! File formats: TSV for bulk data, CSV for plot series, JSON for documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::edge_gen::{Edge, EdgeKind, LabelledMultigraph};
use crate::error::{HagError, Result};
use crate::fitting::CurvePoint;
use crate::latent_tree::{ColorAssignment, LatentTree};

pub const EDGE_HEADER: &str = "u\tv\tweight\tkind";
pub const LEAF_HEADER: &str = "leaf_id\tmark\twild";
pub const LABEL_HEADER: &str = "leaf_id\tcolor";
pub const TREE_HEADER: &str = "node_id\tdepth\tparent_id\tcolor";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(|f| BufWriter::with_capacity(1 << 20, f))
        .map_err(|e| HagError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| HagError::io(path, e))
}

/// Writes through `f`, flushing at the end and tagging errors with `path`.
fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| HagError::io(path, e))
}

/// Calls `f(line_no, fields)` for every data line, skipping a header line
/// equal to `header`, blank lines and `#` comments.
fn read_tsv<F>(path: &Path, header: &str, mut f: F) -> Result<()>
where
    F: FnMut(usize, &[&str]) -> Result<()>,
{
    let reader = open(path)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HagError::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == header) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        f(i + 1, &fields)?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| HagError::Parse(format!("{}:{line}: invalid {what} {field:?}", path.display())))
}

fn expect_fields(path: &Path, line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(HagError::Parse(format!(
            "{}:{line}: expected {n} tab-separated fields, found {}",
            path.display(),
            fields.len()
        )));
    }
    Ok(())
}

/// Edge list `u<TAB>v<TAB>weight<TAB>A|C`.
pub fn write_edges(path: &Path, edges: &[Edge]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{EDGE_HEADER}")?;
        for e in edges {
            writeln!(w, "{}\t{}\t{}\t{}", e.u, e.v, e.weight, e.kind.code())?;
        }
        Ok(())
    })
}

pub fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    read_tsv(path, EDGE_HEADER, |line, f| {
        expect_fields(path, line, f, 4)?;
        let kind = match f[3].trim() {
            "A" => EdgeKind::Agreement,
            "C" => EdgeKind::Conflict,
            other => {
                return Err(HagError::Parse(format!(
                    "{}:{line}: unknown edge kind {other:?}",
                    path.display()
                )))
            }
        };
        edges.push(Edge {
            u: parse(path, line, f[0], "vertex id")?,
            v: parse(path, line, f[1], "vertex id")?,
            weight: parse(path, line, f[2], "weight")?,
            kind,
        });
        Ok(())
    })?;
    Ok(edges)
}

/// Leaf attributes `leaf_id<TAB>mark<TAB>wild(0/1)`.
pub fn write_leaves(path: &Path, marks: &[f64], wild: &[bool]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{LEAF_HEADER}")?;
        for (x, (m, &z)) in marks.iter().zip(wild).enumerate() {
            writeln!(w, "{x}\t{m}\t{}", z as u8)?;
        }
        Ok(())
    })
}

pub fn read_leaves(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut marks = Vec::new();
    let mut wild = Vec::new();
    read_tsv(path, LEAF_HEADER, |line, f| {
        expect_fields(path, line, f, 3)?;
        let id: usize = parse(path, line, f[0], "leaf id")?;
        if id != marks.len() {
            return Err(HagError::Parse(format!(
                "{}:{line}: leaf ids must be 0, 1, 2, ...",
                path.display()
            )));
        }
        marks.push(parse(path, line, f[1], "mark")?);
        wild.push(match f[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(HagError::Parse(format!(
                    "{}:{line}: wild flag {other:?}",
                    path.display()
                )))
            }
        });
        Ok(())
    })?;
    Ok((marks, wild))
}

/// Leaf colours `leaf_id<TAB>color`.
pub fn write_labels(path: &Path, colors: &[u32]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{LABEL_HEADER}")?;
        for (x, c) in colors.iter().enumerate() {
            writeln!(w, "{x}\t{c}")?;
        }
        Ok(())
    })
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut colors = Vec::new();
    read_tsv(path, LABEL_HEADER, |line, f| {
        expect_fields(path, line, f, 2)?;
        let id: usize = parse(path, line, f[0], "leaf id")?;
        if id != colors.len() {
            return Err(HagError::Parse(format!(
                "{}:{line}: leaf ids must be 0, 1, 2, ...",
                path.display()
            )));
        }
        colors.push(parse(path, line, f[1], "color")?);
        Ok(())
    })?;
    Ok(colors)
}

/// Tree dump `node_id<TAB>depth<TAB>parent_id<TAB>color` with global
/// breadth-first ids; the root's parent is -1.
pub fn write_tree(path: &Path, tree: &LatentTree, colors: &ColorAssignment) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{TREE_HEADER}")?;
        let mut offset = 0usize;
        let mut parent_offset = 0usize;
        for d in 0..=tree.depth() {
            for j in 0..tree.level_size(d) {
                let parent = if d == 0 {
                    -1
                } else {
                    (parent_offset + tree.parent(d, j)) as i64
                };
                writeln!(w, "{}\t{d}\t{parent}\t{}", offset + j, colors.color(d, j))?;
            }
            parent_offset = offset;
            offset += tree.level_size(d);
        }
        Ok(())
    })
}

/// Loads a graph from its edge, leaf and label files.
pub fn load_graph(edges: &Path, leaves: &Path, labels: &Path) -> Result<LabelledMultigraph> {
    let (_, wild) = read_leaves(leaves)?;
    let colors = read_labels(labels)?;
    if colors.len() != wild.len() {
        return Err(HagError::Parse(format!(
            "{} lists {} leaves but {} lists {}",
            leaves.display(),
            wild.len(),
            labels.display(),
            colors.len()
        )));
    }
    let list = read_edges(edges)?;
    LabelledMultigraph::new(colors, wild, list).map_err(|e| HagError::Parse(format!("{}: {e}", edges.display())))
}

/// One number per line (blank lines and `#` comments skipped).
pub fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    read_tsv(path, "", |line, f| {
        out.push(parse(path, line, f[0], "number")?);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = open(path)?;
    serde_json::from_reader(reader).map_err(|e| HagError::Parse(format!("{}: {e}", path.display())))
}

/// Fit curve CSV `q1,nu,pi1_prime`.
pub fn write_fit_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "q1,nu,pi1_prime")?;
        for p in curve {
            writeln!(w, "{},{},{}", p.q1, p.nu, p.pi1_prime)?;
        }
        Ok(())
    })
}

/// Label frequency CSV `rank,count,log_count`, ranks from 1.
pub fn write_label_freq(path: &Path, freqs: &[u64]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "rank,count,log_count")?;
        for (i, &c) in freqs.iter().enumerate() {
            writeln!(w, "{},{c},{}", i + 1, (c as f64).ln())?;
        }
        Ok(())
    })
}

/// Component size CSV `rank,size,fraction`.
pub fn write_component_sizes(path: &Path, sizes: &[u64]) -> Result<()> {
    let total: u64 = sizes.iter().sum();
    write_with(path, |w| {
        writeln!(w, "rank,size,fraction")?;
        for (i, &s) in sizes.iter().enumerate() {
            writeln!(w, "{},{s},{}", i + 1, s as f64 / total.max(1) as f64)?;
        }
        Ok(())
    })
}
