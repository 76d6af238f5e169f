//! Datasets on disk and reproducible node splits.
//!
//! File formats:
//! - edges: UTF-8, one `i<TAB>j` pair per line, 0-based; blank lines and `#` comments ignored.
//! - features: CSV without header, one row of decimal floats per node.
//! - labels: one integer per line; the class count is `max + 1`.
//! - splits: JSON, see [`Split`].

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::graph::Graph;
use crate::rng::{shuffle, SplitMix64};
use crate::Matrix;

pub const EDGE_FILE: &str = "edges.tsv";
pub const FEATURE_FILE: &str = "features.csv";
pub const LABEL_FILE: &str = "labels.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graph: Graph, features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n = graph.node_count();
        if features.nrows() != n || labels.len() != n {
            return input(format!(
                "row-count mismatch: graph has {n} nodes, features {} rows, labels {}",
                features.nrows(),
                labels.len()
            ));
        }
        if class_count < 2 {
            return input(format!("need at least 2 classes, got {class_count}"));
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
            return input(format!("label {y} of node {v} is not below class count {class_count}"));
        }
        Ok(Self { name: name.into(), graph, features, labels, class_count })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Same features and labels on a different graph over the same node set.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Self::new(self.name.clone(), graph, self.features.clone(), self.labels.clone(), self.class_count)
    }

    /// Writes the three text files into `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut edges = String::new();
        for (i, j) in self.graph.edges() {
            edges.push_str(&format!("{i}\t{j}\n"));
        }
        fs::write(dir.join(EDGE_FILE), edges)?;
        let mut feats = String::new();
        for row in self.features.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            feats.push_str(&cells.join(","));
            feats.push('\n');
        }
        fs::write(dir.join(FEATURE_FILE), feats)?;
        let labels: String = self.labels.iter().map(|y| format!("{y}\n")).collect();
        fs::write(dir.join(LABEL_FILE), labels)?;
        Ok(())
    }
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, column, message: message.into() }
}

/// Splits a line into `(1-based column, token)` using `sep` or whitespace.
fn tokens(line: &str, sep: Option<char>) -> Vec<(usize, &str)> {
    let mut out = vec![];
    let mut start = None;
    let is_sep = |c: char| match sep {
        Some(s) => c == s,
        None => c.is_whitespace(),
    };
    for (idx, c) in line.char_indices() {
        if is_sep(c) {
            if let Some(s) = start.take() {
                out.push((s + 1, line[s..idx].trim()));
            } else if sep.is_some() {
                out.push((idx + 1, ""));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, line[s..].trim()));
    } else if sep.is_some() && line.ends_with(|c| is_sep(c)) {
        out.push((line.len() + 1, ""));
    }
    out
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = vec![];
    for (lineno, line) in content_lines(&text) {
        let toks = tokens(line, None);
        if toks.len() != 2 {
            return Err(parse_error(path, lineno, 1, format!("expected two node ids, found {} fields", toks.len())));
        }
        let mut ids = [0usize; 2];
        for (slot, (col, tok)) in ids.iter_mut().zip(toks) {
            *slot = tok
                .parse()
                .map_err(|_| parse_error(path, lineno, col, format!("invalid node id {tok:?}")))?;
        }
        edges.push((ids[0], ids[1]));
    }
    Ok(edges)
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = vec![];
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))) {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = vec![];
        for (col, tok) in tokens(line, Some(',')) {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_error(path, lineno, col, format!("invalid float {tok:?}")))?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(path, lineno, 1, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    let f = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Matrix::from_shape_vec((rows.len(), f), flat).map_err(|e| Error::Shape(e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut labels = vec![];
    for (lineno, line) in content_lines(&text) {
        let tok = line.trim();
        let col = line.find(tok).unwrap_or(0) + 1;
        labels.push(
            tok.parse()
                .map_err(|_| parse_error(path, lineno, col, format!("invalid label {tok:?}")))?,
        );
    }
    Ok(labels)
}

/// Loads a dataset from the three text files. The node count is the label count; the
/// class count is inferred as `max(label) + 1`.
pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<Dataset> {
    let labels = read_labels(label_path)?;
    let features = read_features(feature_path)?;
    let edges = read_edges(edge_path)?;
    let n = labels.len();
    if features.nrows() != n {
        return input(format!("row-count mismatch: {} feature rows vs {n} labels", features.nrows()));
    }
    let graph = Graph::from_edges(&edges, n)?;
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let name = label_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(name, graph, features, labels, class_count)
}

/// Loads `<dir>/edges.tsv`, `<dir>/features.csv`, `<dir>/labels.txt`.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    load_dataset(&dir.join(EDGE_FILE), &dir.join(FEATURE_FILE), &dir.join(LABEL_FILE))
}

/// Root directory holding named datasets: `$NODESPEC_DATA_DIR`, else `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("NODESPEC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Directory of a named dataset under [`data_root`], if all three files exist.
pub fn find_named(name: &str) -> Option<PathBuf> {
    let dir = data_root().join(name.to_ascii_lowercase());
    [EDGE_FILE, FEATURE_FILE, LABEL_FILE]
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// 2.5% / 2.5% / 95%.
    Sparse,
    /// 60% / 20% / 20%.
    Dense,
    /// Caller-chosen ratios.
    Custom,
    /// Sparse ratios, test further split 8:2 into observed and unobserved nodes.
    Inductive,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Sparse => "sparse",
            SplitMode::Dense => "dense",
            SplitMode::Custom => "custom",
            SplitMode::Inductive => "inductive",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(SplitMode::Sparse),
            "dense" => Ok(SplitMode::Dense),
            "custom" => Ok(SplitMode::Custom),
            "inductive" => Ok(SplitMode::Inductive),
            other => input(format!("unknown split mode {other:?}")),
        }
    }
}

/// Train/validation/test partition. All index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub seed: u64,
    pub mode: SplitMode,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_test: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unobserved_test: Option<Vec<usize>>,
}

/// Ratio as an exact fraction so that counts are `floor(n * num / den)` in integers.
#[derive(Debug, Clone, Copy)]
struct Ratio(u64, u64);

impl Ratio {
    fn of(self, n: usize) -> usize {
        (n as u64 * self.0 / self.1) as usize
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn ratios(mode: SplitMode) -> Result<(Ratio, Ratio)> {
    match mode {
        SplitMode::Sparse | SplitMode::Inductive => Ok((Ratio(25, 1000), Ratio(25, 1000))),
        SplitMode::Dense => Ok((Ratio(60, 100), Ratio(20, 100))),
        SplitMode::Custom => input("custom splits need explicit ratios; use make_custom_split"),
    }
}

impl Split {
    /// Uniform split of `0..n`: a SplitMix64-seeded Fisher–Yates permutation, then
    /// `floor(n * ratio)` nodes for train and validation and the remainder for test.
    pub fn make(n: usize, mode: SplitMode, seed: u64) -> Result<Self> {
        let (tr, va) = ratios(mode)?;
        Self::from_counts(n, |m| (tr.of(m), va.of(m)), mode, seed, None)
    }

    /// Uniform split with arbitrary ratios in `[0, 1]`, floored.
    pub fn make_custom(n: usize, train_ratio: f64, validation_ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_ratio) || !(0.0..=1.0).contains(&validation_ratio) || train_ratio + validation_ratio > 1.0 {
            return input("custom ratios must lie in [0, 1] and sum to at most 1");
        }
        Self::from_counts(
            n,
            |m| ((m as f64 * train_ratio).floor() as usize, (m as f64 * validation_ratio).floor() as usize),
            SplitMode::Custom,
            seed,
            None,
        )
    }

    /// Per-class variant of [`Split::make`]: each class is permuted and floored separately.
    pub fn make_stratified(labels: &[usize], mode: SplitMode, seed: u64) -> Result<Self> {
        let (tr, va) = ratios(mode)?;
        Self::from_counts(labels.len(), |m| (tr.of(m), va.of(m)), mode, seed, Some(labels))
    }

    fn from_counts(
        n: usize,
        counts: impl Fn(usize) -> (usize, usize),
        mode: SplitMode,
        seed: u64,
        strata: Option<&[usize]>,
    ) -> Result<Self> {
        if n < 10 {
            return input(format!("splits need at least 10 nodes, got {n}"));
        }
        let mut rng = SplitMix64::new(seed);
        let groups: Vec<Vec<usize>> = match strata {
            None => vec![(0..n).collect()],
            Some(labels) => {
                let classes = labels.iter().max().map_or(0, |m| m + 1);
                (0..classes)
                    .map(|c| (0..n).filter(|&v| labels[v] == c).collect())
                    .collect()
            }
        };
        let (mut train, mut validation, mut test) = (vec![], vec![], vec![]);
        for mut group in groups {
            shuffle(&mut group, &mut rng);
            let (nt, nv) = counts(group.len());
            train.extend_from_slice(&group[..nt]);
            validation.extend_from_slice(&group[nt..nt + nv]);
            test.extend_from_slice(&group[nt + nv..]);
        }
        let (observed_test, unobserved_test) = if mode == SplitMode::Inductive {
            let observed = Ratio(8, 10).of(test.len());
            (Some(sorted(test[..observed].to_vec())), Some(sorted(test[observed..].to_vec())))
        } else {
            (None, None)
        };
        let split = Split {
            seed,
            mode,
            train: sorted(train),
            validation: sorted(validation),
            test: sorted(test),
            observed_test,
            unobserved_test,
        };
        split.validate(Some(n))?;
        Ok(split)
    }

    /// Checks disjointness, range (when `n` is given), and the inductive partition.
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            for &v in set {
                if !seen.insert(v) {
                    return Err(Error::Schema(format!("node {v} appears twice (in {name})")));
                }
                if let Some(n) = n {
                    if v >= n {
                        return Err(Error::Schema(format!("node {v} in {name} out of range for {n} nodes")));
                    }
                }
            }
        }
        match (&self.observed_test, &self.unobserved_test) {
            (None, None) => Ok(()),
            (Some(o), Some(u)) => {
                let o: BTreeSet<_> = o.iter().copied().collect();
                let u: BTreeSet<_> = u.iter().copied().collect();
                let t: BTreeSet<_> = self.test.iter().copied().collect();
                if !o.is_disjoint(&u) || o.union(&u).copied().collect::<BTreeSet<_>>() != t {
                    return Err(Error::Schema("observed/unobserved test sets must partition test".into()));
                }
                Ok(())
            }
            _ => Err(Error::Schema("observed_test and unobserved_test must appear together".into())),
        }
    }

    /// Nodes visible during training: everything except the unobserved test nodes.
    pub fn observed_nodes(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![true; n];
        if let Some(u) = &self.unobserved_test {
            for &v in u {
                mask[v] = false;
            }
        }
        mask
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut split: Split = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        for set in [&mut split.train, &mut split.validation, &mut split.test] {
            set.sort_unstable();
        }
        for set in [&mut split.observed_test, &mut split.unobserved_test].into_iter().flatten() {
            set.sort_unstable();
        }
        split.validate(None)?;
        Ok(split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Graph with every edge touching an unobserved test node removed.
pub fn observed_graph(g: &Graph, split: &Split) -> Result<Graph> {
    let mask = split.observed_nodes(g.node_count());
    let edges: Vec<_> = g.edges().into_iter().filter(|&(i, j)| mask[i] && mask[j]).collect();
    Graph::from_edges(&edges, g.node_count())
}
