//! Canonical on-disk dataset format.
//!
//! A dataset directory holds three files:
//! - `nodes.tsv`: `node_id<TAB>label<TAB>f0<TAB>f1...`, node ids ascending from 0.
//! - `edges.tsv`: `src<TAB>dst` with `src < dst`, one undirected edge per line.
//! - `splits.json`: `{"train": [...], "val": [...], "test": [...]}`, plus an
//!   optional `n_classes` (inferred as `max label + 1` when absent).
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `save_graph` followed by `load_graph` reproduces the graph bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Graph, Splits};
use crate::{Error, Result};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_classes: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(file: &str, line: usize, what: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(file, line, format!("{what} is not a valid number: {s:?}")))
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let nodes_text = read(&dir.join(NODES_FILE))?;
    let edges_text = read(&dir.join(EDGES_FILE))?;
    let splits_text = read(&dir.join(SPLITS_FILE))?;

    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in nodes_text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut cols = raw.split('\t');
        let id: usize = parse_field(NODES_FILE, line, "node id", cols.next().unwrap_or(""))?;
        if id != rows.len() {
            return Err(Error::parse(
                NODES_FILE,
                line,
                format!("expected node id {} but found {id}", rows.len()),
            ));
        }
        let label_text = cols
            .next()
            .ok_or_else(|| Error::parse(NODES_FILE, line, "missing label column"))?;
        labels.push(parse_field::<usize>(NODES_FILE, line, "label", label_text)?);
        let mut feats = Vec::new();
        for (k, col) in cols.enumerate() {
            let v: f64 = parse_field(NODES_FILE, line, &format!("feature f{k}"), col)?;
            if !v.is_finite() {
                return Err(Error::parse(NODES_FILE, line, format!("feature f{k} is not finite")));
            }
            feats.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(Error::parse(
                    NODES_FILE,
                    line,
                    format!("expected {} features but found {}", first.len(), feats.len()),
                ));
            }
        }
        rows.push(feats);
    }
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((n, d), flat)
        .map_err(|e| Error::InvalidGraph(format!("feature matrix: {e}")))?;

    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in edges_text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut cols = raw.split('\t');
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(EDGES_FILE, line, "expected exactly two columns"));
        };
        let u: usize = parse_field(EDGES_FILE, line, "src", a)?;
        let v: usize = parse_field(EDGES_FILE, line, "dst", b)?;
        if u == v {
            return Err(Error::parse(EDGES_FILE, line, format!("self-loop at line {line}")));
        }
        if u >= n || v >= n {
            return Err(Error::parse(
                EDGES_FILE,
                line,
                format!("edge endpoint out of range ({u}, {v}) for {n} nodes"),
            ));
        }
        if !seen.insert(super::canonical(u, v)) {
            return Err(Error::parse(EDGES_FILE, line, format!("duplicate edge ({u}, {v})")));
        }
        edges.push((u, v));
    }

    let splits: SplitsFile = serde_json::from_str(&splits_text).map_err(|e| {
        Error::parse(SPLITS_FILE, e.line(), e.to_string())
    })?;
    let n_classes = match splits.n_classes {
        Some(c) => {
            if let Some((node, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
                return Err(Error::parse(
                    NODES_FILE,
                    node + 1,
                    format!("label {l} >= n_classes {c}"),
                ));
            }
            c
        }
        None => labels.iter().max().map_or(1, |m| m + 1),
    };
    Graph::new(
        features,
        labels,
        n_classes,
        edges,
        Splits {
            train: splits.train,
            val: splits.val,
            test: splits.test,
        },
    )
}

/// Renders the three dataset files as strings.
pub(crate) fn render(g: &Graph) -> Result<(String, String, String)> {
    let mut nodes = String::new();
    for (i, row) in g.features().rows().into_iter().enumerate() {
        write!(nodes, "{i}\t{}", g.labels()[i]).unwrap();
        for v in row {
            write!(nodes, "\t{v}").unwrap();
        }
        nodes.push('\n');
    }
    let mut edges = String::new();
    for &(u, v) in g.edges() {
        writeln!(edges, "{u}\t{v}").unwrap();
    }
    let splits = SplitsFile {
        train: g.splits().train.clone(),
        val: g.splits().val.clone(),
        test: g.splits().test.clone(),
        n_classes: Some(g.n_classes()),
    };
    let mut splits_json = serde_json::to_string(&splits)?;
    splits_json.push('\n');
    Ok((nodes, edges, splits_json))
}

/// Writes `g` to `dir`, replacing any existing directory as a unit.
///
/// Files are first written to a sibling staging directory which is then
/// renamed into place.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let (nodes, edges, splits) = render(g)?;
    let staging = sibling(dir, "staging")?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    for (name, body) in [(NODES_FILE, nodes), (EDGES_FILE, edges), (SPLITS_FILE, splits)] {
        let path = staging.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    replace_dir(&staging, dir)
}

fn sibling(dir: &Path, tag: &str) -> Result<PathBuf> {
    let name = dir
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a directory path: {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty());
    let sib = format!(".{name}.{tag}-{}", std::process::id());
    Ok(match parent {
        Some(p) => p.join(sib),
        None => PathBuf::from(sib),
    })
}

/// Moves a fully written `staging` directory to `target`, replacing it.
pub(crate) fn replace_dir(staging: &Path, target: &Path) -> Result<()> {
    if target.exists() {
        let old = sibling(target, "old")?;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        fs::rename(target, &old).map_err(|e| Error::io(target, e))?;
        fs::rename(staging, target).map_err(|e| Error::io(target, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::rename(staging, target).map_err(|e| Error::io(target, e))?;
    }
    Ok(())
}
