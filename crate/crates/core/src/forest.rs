//! Random forest of CART trees (Gini impurity, bootstrap, random feature
//! subsets per split).
//!
//! Splits send `x <= threshold` left, where the threshold is a training value,
//! so predictions depend on each column only through its ordering. Feature
//! subsets are drawn by ranking candidate columns with a hash of
//! (tree, node, column rank among non-constant columns); constant columns never
//! take part, so adding one leaves the forest unchanged.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{par, rng, FORMAT_VERSION};

/// Row-major feature matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, n_rows: usize, data: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if data.len() != n_rows * d {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n_rows} rows x {d} columns",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: i / d.max(1), col: i % d.max(1) });
        }
        Ok(FeatureMatrix { names, n_rows, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::ShapeMismatch(format!("row {r} has {} values, expected {d}", rows[r].len())));
        }
        Self::new(names, rows.len(), rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { names: self.names.clone(), n_rows: idx.len(), data }
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn hstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let n = parts.first().map_or(0, |p| p.n_rows);
        if parts.iter().any(|p| p.n_rows != n) {
            return Err(Error::LengthMismatch("feature blocks have different row counts".into()));
        }
        let names = parts.iter().flat_map(|p| p.names.iter().cloned()).collect();
        let mut data = Vec::with_capacity(n * parts.iter().map(|p| p.n_cols()).sum::<usize>());
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(FeatureMatrix { names, n_rows: n, data })
    }

    /// Vertical concatenation of matrices with identical columns.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let names = parts.first().map(|p| p.names.clone()).unwrap_or_default();
        if parts.iter().any(|p| p.names != names) {
            return Err(Error::ShapeMismatch("feature blocks have different columns".into()));
        }
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(FeatureMatrix { names, n_rows: parts.iter().map(|p| p.n_rows).sum(), data })
    }

    /// Applies `f` to every value of column `j`.
    pub fn map_column(&mut self, j: usize, f: impl Fn(f64) -> f64) {
        let d = self.n_cols();
        for i in 0..self.n_rows {
            self.data[i * d + j] = f(self.data[i * d + j]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Columns tried per split; `None` uses ceil(sqrt(d)) over non-constant columns.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Weight classes inversely to their frequency.
    pub balanced: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 5,
            max_features: None,
            bootstrap: true,
            balanced: false,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("n_trees and min_samples_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) || self.max_depth == Some(0) {
            return Err(Error::Config("max_features and max_depth must be positive when set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split column, or -1 for a leaf.
    pub feature: i64,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Weighted class counts of the training samples reaching a leaf.
    pub leaf_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while n.feature >= 0 {
            n = &self.nodes[if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize];
        }
        n
    }

    /// The tree's vote: the heaviest class at the leaf, lowest index on ties.
    pub fn vote(&self, x: &[f64]) -> usize {
        argmax(&self.leaf(x).leaf_counts)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: String,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub n_classes: usize,
    pub config: ForestConfig,
    /// Out-of-bag accuracy, when any sample was out of bag.
    pub oob_accuracy: Option<f64>,
    pub trees: Vec<Tree>,
}

struct Grower<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [usize],
    class_w: &'a [f64],
    n_classes: usize,
    candidates: &'a [usize],
    mtry: usize,
    min_leaf: usize,
    max_depth: usize,
    key_seed: u64,
}

struct Split {
    feature: usize,
    threshold: f64,
    n_left: usize,
}

impl Grower<'_> {
    fn counts(&self, rows: &[(u32, u32)]) -> (Vec<f64>, usize) {
        let mut c = vec![0.0; self.n_classes];
        let mut n = 0;
        for &(r, m) in rows {
            c[self.y[r as usize]] += m as f64 * self.class_w[self.y[r as usize]];
            n += m as usize;
        }
        (c, n)
    }

    fn gini(c: &[f64]) -> f64 {
        let t: f64 = c.iter().sum();
        if t <= 0.0 {
            return 0.0;
        }
        1.0 - c.iter().map(|v| (v / t) * (v / t)).sum::<f64>()
    }

    /// Best split of `rows`; `None` if no admissible split lowers the impurity.
    fn best_split(&self, rows: &[(u32, u32)], parent: &[f64], node_id: u64) -> Option<Split> {
        let total_w: f64 = parent.iter().sum();
        let parent_imp = Self::gini(parent);
        let n_total: usize = rows.iter().map(|r| r.1 as usize).sum();
        let node_key = rng::derive_index(self.key_seed, node_id);
        let mut order: Vec<(u64, usize)> = self
            .candidates
            .iter()
            .enumerate()
            .map(|(rank, &col)| (rng::derive_index(node_key, rank as u64), col))
            .collect();
        order.sort_unstable();
        let mut best: Option<(f64, Split)> = None;
        let mut tried = 0;
        // (value, row, multiplicity)
        let mut sorted: Vec<(f64, u32, u32)> = Vec::with_capacity(rows.len());
        let mut left = vec![0.0; self.n_classes];
        for (_, j) in order {
            if tried == self.mtry {
                break;
            }
            let col = &self.cols[j];
            sorted.clear();
            sorted.extend(rows.iter().map(|&(r, m)| (col[r as usize], r, m)));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            tried += 1;
            left.fill(0.0);
            let mut n_left = 0usize;
            for i in 0..sorted.len() - 1 {
                let (v, r, m) = sorted[i];
                let c = self.y[r as usize];
                left[c] += m as f64 * self.class_w[c];
                n_left += m as usize;
                if v == sorted[i + 1].0 || n_left < self.min_leaf || n_total - n_left < self.min_leaf {
                    continue;
                }
                let (mut wl, mut sl, mut sr) = (0.0, 0.0, 0.0);
                for (l, p) in left.iter().zip(parent) {
                    wl += l;
                    sl += l * l;
                    sr += (p - l) * (p - l);
                }
                let wr = total_w - wl;
                // Weighted child impurity: sum over sides of w * (1 - sum p_c^2).
                let imp = (wl - sl / wl + wr - sr / wr) / total_w;
                let gain = parent_imp - imp;
                if gain > 1e-12 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    best = Some((gain, Split { feature: j, threshold: v, n_left: i + 1 }));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn grow(&self, rows: Vec<(u32, u32)>) -> Tree {
        let mut nodes: Vec<Node> = Vec::new();
        // (rows, depth, slot in `nodes`)
        let mut stack = vec![(rows, 0usize, 0usize)];
        nodes.push(Node { feature: -1, threshold: 0.0, left: 0, right: 0, leaf_counts: Vec::new() });
        while let Some((rows, depth, id)) = stack.pop() {
            let (counts, n) = self.counts(&rows);
            let pure = counts.iter().filter(|c| **c > 0.0).count() <= 1;
            let split = if pure || n < 2 * self.min_leaf || depth >= self.max_depth {
                None
            } else {
                self.best_split(&rows, &counts, id as u64)
            };
            match split {
                None => nodes[id].leaf_counts = counts,
                Some(s) => {
                    let col = &self.cols[s.feature];
                    let mut sorted = rows;
                    sorted.sort_by(|a, b| col[a.0 as usize].total_cmp(&col[b.0 as usize]).then(a.0.cmp(&b.0)));
                    let right_rows = sorted.split_off(s.n_left);
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    for _ in 0..2 {
                        nodes.push(Node { feature: -1, threshold: 0.0, left: 0, right: 0, leaf_counts: Vec::new() });
                    }
                    nodes[id] = Node {
                        feature: s.feature as i64,
                        threshold: s.threshold,
                        left: l as u32,
                        right: r as u32,
                        leaf_counts: Vec::new(),
                    };
                    stack.push((right_rows, depth + 1, r));
                    stack.push((sorted, depth + 1, l));
                }
            }
        }
        Tree { nodes }
    }
}

/// Grows a forest on `x` with integer class labels `y < n_classes`.
pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if y.len() != n {
        return Err(Error::LengthMismatch(format!("{n} rows but {} labels", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::ShapeMismatch(format!("label {bad} outside {n_classes} classes")));
    }
    let d = x.n_cols();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).collect()).collect();
    let candidates: Vec<usize> = (0..d)
        .filter(|&j| cols[j].iter().any(|&v| v != cols[j][0]))
        .collect();
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (candidates.len() as f64).sqrt().ceil() as usize)
        .clamp(1, candidates.len().max(1));
    let mut class_w = vec![1.0; n_classes];
    if cfg.balanced {
        let mut freq = vec![0usize; n_classes];
        y.iter().for_each(|&c| freq[c] += 1);
        let present = freq.iter().filter(|f| **f > 0).count() as f64;
        for (w, f) in class_w.iter_mut().zip(&freq) {
            if *f > 0 {
                *w = n as f64 / (present * *f as f64);
            }
        }
    }
    let tree_seed = rng::derive(cfg.seed, "forest/bootstrap");
    let key_seed = rng::derive(cfg.seed, "forest/features");
    let grown: Vec<(Tree, Vec<bool>)> = par::map_range(cfg.n_trees, |t| {
        let mut multiplicity = vec![0u32; n];
        if cfg.bootstrap {
            let mut r = rng::stream_index(tree_seed, t as u64);
            for _ in 0..n {
                multiplicity[r.random_range(0..n)] += 1;
            }
        } else {
            multiplicity.fill(1);
        }
        let rows: Vec<(u32, u32)> = multiplicity
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0)
            .map(|(i, m)| (i as u32, *m))
            .collect();
        let g = Grower {
            cols: &cols,
            y,
            class_w: &class_w,
            n_classes,
            candidates: &candidates,
            mtry,
            min_leaf: cfg.min_samples_leaf,
            max_depth: cfg.max_depth.unwrap_or(usize::MAX),
            key_seed: rng::derive_index(key_seed, t as u64),
        };
        (g.grow(rows), multiplicity.iter().map(|m| *m == 0).collect())
    });

    let mut oob_votes = vec![vec![0u32; n_classes]; n];
    for (tree, oob) in &grown {
        for i in (0..n).filter(|&i| oob[i]) {
            oob_votes[i][tree.vote(x.row(i))] += 1;
        }
    }
    let scored: Vec<usize> = (0..n).filter(|&i| oob_votes[i].iter().any(|v| *v > 0)).collect();
    let oob_accuracy = (!scored.is_empty()).then(|| {
        let votes_f = |i: usize| oob_votes[i].iter().map(|&v| v as f64).collect::<Vec<_>>();
        scored.iter().filter(|&&i| argmax(&votes_f(i)) == y[i]).count() as f64 / scored.len() as f64
    });

    Ok(Forest {
        format_version: FORMAT_VERSION.into(),
        n_features: d,
        feature_names: x.names().to_vec(),
        n_classes,
        config: cfg.clone(),
        oob_accuracy,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
    })
}

impl Forest {
    fn check(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimMismatch(format!(
                "forest expects {} features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok(())
    }

    /// Vote counts per class for each row.
    pub fn votes(&self, x: &FeatureMatrix) -> Result<Vec<Vec<u32>>> {
        self.check(x)?;
        Ok(par::map_range(x.n_rows(), |i| {
            let mut v = vec![0u32; self.n_classes];
            for t in &self.trees {
                v[t.vote(x.row(i))] += 1;
            }
            v
        }))
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let n = self.trees.len() as f64;
        Ok(self
            .votes(x)?
            .into_iter()
            .map(|v| v.into_iter().map(|c| c as f64 / n).collect())
            .collect())
    }

    /// Most-voted class, lowest index on ties.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self
            .votes(x)?
            .into_iter()
            .map(|v| argmax(&v.iter().map(|&c| c as f64).collect::<Vec<_>>()))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Forest = serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid forest JSON: {e}")))?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "forest format_version {} is not supported (expected {FORMAT_VERSION})",
                f.format_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| match e {
            Error::Config(msg) => Error::parse(path, 1, msg),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn rejects_non_finite() {
        let e = FeatureMatrix::new(names(2), 2, vec![0.0, 1.0, f64::NAN, 2.0]);
        assert!(matches!(e, Err(Error::NonFiniteFeature { row: 1, col: 0 })));
    }

    #[test]
    fn single_class() {
        let x = FeatureMatrix::new(names(1), 10, (0..10).map(|v| v as f64).collect()).unwrap();
        let f = fit(&x, &[2; 10], 3, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(f.predict(&x).unwrap(), vec![2; 10]);
    }

    #[test]
    fn separable_threshold() {
        let x = FeatureMatrix::new(names(1), 40, (0..40).map(|v| v as f64).collect()).unwrap();
        let y: Vec<usize> = (0..40).map(|v| usize::from(v >= 20)).collect();
        let f = fit(&x, &y, 2, &ForestConfig { n_trees: 20, ..Default::default() }).unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
        let p = f.predict_proba(&x).unwrap();
        assert!(p.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dim_mismatch() {
        let x = FeatureMatrix::new(names(1), 10, vec![0.0; 10]).unwrap();
        let f = fit(&x, &[0; 10], 2, &ForestConfig { n_trees: 2, ..Default::default() }).unwrap();
        let bad = FeatureMatrix::new(names(2), 1, vec![0.0; 2]).unwrap();
        assert!(matches!(f.predict(&bad), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn json_roundtrip() {
        let x = FeatureMatrix::new(names(2), 30, (0..60).map(|v| (v * 7 % 13) as f64).collect()).unwrap();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let f = fit(&x, &y, 3, &ForestConfig { n_trees: 4, min_samples_leaf: 1, ..Default::default() }).unwrap();
        let g = Forest::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn empty_input() {
        let x = FeatureMatrix::new(names(1), 0, vec![]).unwrap();
        assert!(matches!(fit(&x, &[], 2, &ForestConfig::default()), Err(Error::EmptyInput(_))));
    }
}
