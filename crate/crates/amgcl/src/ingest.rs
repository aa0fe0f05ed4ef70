//! Dataset loading from a plain TSV layout, seeded missingness masks, and
//! split generation.
//!
//! A dataset directory contains:
//!
//! - `meta`: `key=value` lines with keys `name`, `feature_mode` (`dense` or
//!   `sparse`), `feature_dim`, `binary` (`true`/`false`).
//! - `edges.tsv`: one `src<TAB>dst` pair per line; ids may be arbitrary
//!   strings and are remapped to dense internal ids.
//! - `features.tsv`: dense rows `node<TAB>v1<TAB>...<TAB>vd`, or sparse
//!   triples `node<TAB>col<TAB>val`.
//! - `labels.tsv` (optional): `node<TAB>class` covering every node.
//!
//! Internal ids are assigned by first appearance in `features.tsv`, then in
//! `edges.tsv` (sparse mode only; dense mode requires every node to have a
//! feature row). The mapping is emitted back to `id_map.tsv` in the dataset
//! directory.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, SparseGraph, Split};

/// A loaded attribute graph with fully observed features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: Option<Vec<usize>>,
    pub num_classes: usize,
    pub name: String,
}

/// Missingness specification: fraction of nodes whose attributes are hidden,
/// the RNG seed, and the validation:test ratio among hidden nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskSpec {
    pub missing_rate: f64,
    pub seed: u64,
    pub val_test_ratio: (usize, usize),
}

impl MaskSpec {
    pub fn new(missing_rate: f64, seed: u64) -> Self {
        MaskSpec {
            missing_rate,
            seed,
            val_test_ratio: (1, 5),
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[derive(Debug)]
struct Meta {
    name: String,
    dense: bool,
    feature_dim: usize,
    binary: bool,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let mut name = None;
    let mut dense = None;
    let mut feature_dim = None;
    let mut binary = None;
    for (idx, raw) in read_lines(path)?.iter().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno, "expected key=value"))?;
        match key.trim() {
            "name" => name = Some(value.trim().to_string()),
            "feature_mode" => match value.trim() {
                "dense" => dense = Some(true),
                "sparse" => dense = Some(false),
                other => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("feature_mode must be dense or sparse, got {other:?}"),
                    ))
                }
            },
            "feature_dim" => {
                feature_dim = Some(value.trim().parse().map_err(|e| {
                    parse_err(path, lineno, format!("bad feature_dim: {e}"))
                })?)
            }
            "binary" => {
                binary = Some(value.trim().parse().map_err(|e| {
                    parse_err(path, lineno, format!("bad binary flag: {e}"))
                })?)
            }
            other => {
                return Err(parse_err(path, lineno, format!("unknown meta key {other:?}")));
            }
        }
    }
    let feature_dim: usize =
        feature_dim.ok_or_else(|| parse_err(path, 0, "missing feature_dim"))?;
    if feature_dim == 0 {
        return Err(parse_err(path, 0, "feature_dim must be at least 1"));
    }
    Ok(Meta {
        name: name.ok_or_else(|| parse_err(path, 0, "missing name"))?,
        dense: dense.ok_or_else(|| parse_err(path, 0, "missing feature_mode"))?,
        feature_dim,
        binary: binary.ok_or_else(|| parse_err(path, 0, "missing binary"))?,
    })
}

#[derive(Default)]
struct IdMap {
    ids: HashMap<String, usize>,
    order: Vec<String>,
}

impl IdMap {
    fn get_or_insert(&mut self, external: &str) -> usize {
        if let Some(&id) = self.ids.get(external) {
            return id;
        }
        let id = self.order.len();
        self.ids.insert(external.to_string(), id);
        self.order.push(external.to_string());
        id
    }

    fn get(&self, external: &str) -> Option<usize> {
        self.ids.get(external).copied()
    }
}

/// Loads a dataset directory, remapping external node ids densely and
/// writing the mapping to `id_map.tsv` inside the directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta = read_meta(&dir.join("meta"))?;

    let features_path = dir.join("features.tsv");
    let feature_lines = read_lines(&features_path)?;
    let mut ids = IdMap::default();

    // First pass over features registers node ids and collects entries.
    enum Row {
        Dense(usize, Vec<f64>),
        SparseEntry(usize, usize, f64),
    }
    let mut rows = Vec::with_capacity(feature_lines.len());
    for (idx, raw) in feature_lines.iter().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let external = fields
            .next()
            .ok_or_else(|| parse_err(&features_path, lineno, "empty line"))?;
        if meta.dense && ids.get(external).is_some() {
            return Err(parse_err(
                &features_path,
                lineno,
                format!("duplicate feature row for node {external:?}"),
            ));
        }
        let node = ids.get_or_insert(external);
        if meta.dense {
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        parse_err(&features_path, lineno, format!("bad value {f:?}: {e}"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != meta.feature_dim {
                return Err(parse_err(
                    &features_path,
                    lineno,
                    format!(
                        "ragged feature row: expected {} values, found {}",
                        meta.feature_dim,
                        values.len()
                    ),
                ));
            }
            rows.push(Row::Dense(node, values));
        } else {
            let col: usize = fields
                .next()
                .ok_or_else(|| parse_err(&features_path, lineno, "missing column index"))?
                .parse()
                .map_err(|e| parse_err(&features_path, lineno, format!("bad column: {e}")))?;
            let val: f64 = fields
                .next()
                .ok_or_else(|| parse_err(&features_path, lineno, "missing value"))?
                .parse()
                .map_err(|e| parse_err(&features_path, lineno, format!("bad value: {e}")))?;
            if col >= meta.feature_dim {
                return Err(parse_err(
                    &features_path,
                    lineno,
                    format!("column {col} outside feature_dim {}", meta.feature_dim),
                ));
            }
            rows.push(Row::SparseEntry(node, col, val));
        }
    }

    let edges_path = dir.join("edges.tsv");
    let edge_lines = read_lines(&edges_path)?;
    let mut edges = Vec::with_capacity(edge_lines.len());
    for (idx, raw) in edge_lines.iter().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let (src, dst) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&edges_path, lineno, "expected src<TAB>dst"))?;
        let (src, dst) = (src.trim(), dst.trim());
        let resolve = |ids: &mut IdMap, ext: &str| -> Result<usize> {
            if meta.dense {
                ids.get(ext).ok_or_else(|| {
                    parse_err(
                        &edges_path,
                        lineno,
                        format!("node {ext:?} has no feature row"),
                    )
                })
            } else {
                Ok(ids.get_or_insert(ext))
            }
        };
        let s = resolve(&mut ids, src)?;
        let d = resolve(&mut ids, dst)?;
        edges.push((s, d));
    }

    let num_nodes = ids.order.len();
    let mut values = Array2::<f64>::zeros((num_nodes, meta.feature_dim));
    for row in rows {
        match row {
            Row::Dense(node, vals) => {
                for (col, v) in vals.into_iter().enumerate() {
                    values[[node, col]] = v;
                }
            }
            Row::SparseEntry(node, col, val) => values[[node, col]] = val,
        }
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(parse_err(
            &features_path,
            0,
            format!("non-finite feature value {bad}"),
        ));
    }
    if meta.binary {
        if let Some(bad) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(parse_err(
                &features_path,
                0,
                format!("binary dataset contains value {bad}"),
            ));
        }
    }

    let graph = SparseGraph::build(&edges, num_nodes)?;

    let labels_path = dir.join("labels.tsv");
    let (labels, num_classes) = if labels_path.exists() {
        let mut labels = vec![usize::MAX; num_nodes];
        for (idx, raw) in read_lines(&labels_path)?.iter().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let (ext, class) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(&labels_path, lineno, "expected node<TAB>class"))?;
            let node = ids.get(ext.trim()).ok_or_else(|| {
                parse_err(&labels_path, lineno, format!("unknown node {ext:?}"))
            })?;
            labels[node] = class
                .trim()
                .parse()
                .map_err(|e| parse_err(&labels_path, lineno, format!("bad class: {e}")))?;
        }
        if let Some(unlabeled) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(parse_err(
                &labels_path,
                0,
                format!("node with internal id {unlabeled} has no label"),
            ));
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        (Some(labels), num_classes)
    } else {
        (None, 0)
    };

    let id_map_path = dir.join("id_map.tsv");
    let file =
        File::create(&id_map_path).map_err(|e| Error::io(id_map_path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for (internal, external) in ids.order.iter().enumerate() {
        writeln!(out, "{external}\t{internal}")
            .map_err(|e| Error::io(id_map_path.display().to_string(), e))?;
    }

    Ok(Dataset {
        graph,
        features: FeatureMatrix::fully_observed(values),
        labels,
        num_classes,
        name: meta.name,
    })
}

/// Draws a uniformly random node partition: `round(missing_rate * N)` nodes
/// become missing and are divided val:test by `spec.val_test_ratio`;
/// deterministic given the seed.
pub fn make_split(dataset: &Dataset, spec: &MaskSpec) -> Result<Split> {
    if !(0.0..=1.0).contains(&spec.missing_rate) {
        return Err(Error::Config(format!(
            "missing_rate = {} outside [0, 1]",
            spec.missing_rate
        )));
    }
    let n = dataset.graph.num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let n_missing = (spec.missing_rate * n as f64).round() as usize;
    let (a, b) = spec.val_test_ratio;
    let n_val = (n_missing as f64 * a as f64 / (a + b) as f64).round() as usize;
    let missing = &order[..n_missing];
    Split::new(
        order[n_missing..].to_vec(),
        missing[..n_val].to_vec(),
        missing[n_val..].to_vec(),
        spec.seed,
        n,
        spec.val_test_ratio,
    )
}

/// Zeroes the rows of all missing nodes and flags them unobserved. The
/// dataset itself is untouched.
pub fn apply_mask(dataset: &Dataset, split: &Split) -> Result<FeatureMatrix> {
    if split.num_nodes() != dataset.graph.num_nodes() {
        return Err(Error::Invalid(format!(
            "split covers {} nodes but dataset has {}",
            split.num_nodes(),
            dataset.graph.num_nodes()
        )));
    }
    FeatureMatrix::new(dataset.features.values().clone(), split.observed_flags())
}

/// Writes a dense matrix as `node<TAB>v1<TAB>...<TAB>vd` rows with internal
/// node ids. Values use the shortest round-trippable decimal form.
pub fn write_matrix_tsv(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let path: PathBuf = path.as_ref().into();
    let file = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for (node, row) in matrix.rows().into_iter().enumerate() {
        write!(out, "{node}").map_err(|e| Error::io(path.display().to_string(), e))?;
        for v in row {
            write!(out, "\t{v}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        writeln!(out).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_tsv`]. Rows may appear in any
/// order; node ids must be dense in `[0, rows)`.
pub fn read_matrix_tsv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let mut parsed: Vec<(usize, Vec<f64>)> = Vec::with_capacity(lines.len());
    let mut dim = None;
    for (idx, raw) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let node: usize = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "empty line"))?
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id: {e}")))?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| parse_err(path, lineno, format!("bad value {f:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("ragged row: expected {d} values, found {}", values.len()),
                ));
            }
            _ => {}
        }
        parsed.push((node, values));
    }
    let n = parsed.len();
    let d = dim.unwrap_or(0);
    let mut matrix = Array2::<f64>::zeros((n, d));
    let mut seen = vec![false; n];
    for (node, values) in parsed {
        if node >= n || seen[node] {
            return Err(parse_err(
                path,
                0,
                format!("node ids are not dense in [0, {n}): offending id {node}"),
            ));
        }
        seen[node] = true;
        for (col, v) in values.into_iter().enumerate() {
            matrix[[node, col]] = v;
        }
    }
    Ok(matrix)
}
