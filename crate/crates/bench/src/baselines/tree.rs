//! CART classification tree with Gini impurity.

use std::cmp::Ordering;

use pfn_core::numeric::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_split < 2 || self.min_samples_leaf == 0 {
            return Err(Error::Parameter(format!("invalid tree parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: usize,
        counts: Vec<usize>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        counts: Vec<usize>,
        left: usize,
        right: usize,
    },
}

impl Node {
    pub fn counts(&self) -> &[usize] {
        match self {
            Node::Leaf { counts, .. } | Node::Split { counts, .. } => counts,
        }
    }
}

/// Nodes in pre-order; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Sum of squared class counts over the node size, as an exact fraction.
/// Larger is purer; comparing `a.0 * b.1` with `b.0 * a.1` avoids rounding.
#[derive(Clone, Copy, Debug)]
struct Purity(u128, u128);

impl Purity {
    fn of_split(left: &[usize], right: &[usize]) -> Self {
        let sq = |c: &[usize]| c.iter().map(|&v| (v * v) as u128).sum::<u128>();
        let nl: u128 = left.iter().map(|&v| v as u128).sum();
        let nr: u128 = right.iter().map(|&v| v as u128).sum();
        Purity(sq(left) * nr + sq(right) * nl, nl * nr)
    }

    fn cmp(self, other: Purity) -> Ordering {
        (self.0 * other.1).cmp(&(other.0 * self.1))
    }
}

/// Gini impurity of a class histogram.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a> {
    x: &'a Matrix<f64>,
    y: &'a [usize],
    p: TreeParams,
    n_classes: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        rows.iter().for_each(|&r| c[self.y[r]] += 1);
        c
    }

    /// Best `(feature, threshold)` by weighted Gini; ties keep the earlier
    /// feature and the lower threshold.
    fn best_split(&self, rows: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let leaf = self.p.min_samples_leaf;
        let mut best: Option<(Purity, usize, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            for i in 1..n {
                let moved = self.y[order[i - 1]];
                left[moved] += 1;
                right[moved] -= 1;
                if i < leaf || n - i < leaf {
                    continue;
                }
                let (lo, hi) = (self.x.get(order[i - 1], f), self.x.get(order[i], f));
                if lo >= hi {
                    continue;
                }
                let score = Purity::of_split(&left, &right);
                if best.as_ref().is_none_or(|b| score.cmp(b.0) == Ordering::Greater) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Result<usize> {
        if rows.is_empty() {
            return Err(Error::Structural("empty tree node".into()));
        }
        let counts = self.counts(&rows);
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || depth >= self.p.max_depth || rows.len() < self.p.min_samples_split {
            None
        } else {
            self.best_split(&rows, &counts)
        };
        let Some((feature, threshold)) = split else {
            self.nodes.push(Node::Leaf {
                class: majority(&counts),
                counts,
            });
            return Ok(id);
        };
        self.nodes.push(Node::Leaf {
            class: 0,
            counts: Vec::new(),
        });
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1)?;
        let right = self.grow(r, depth + 1)?;
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            counts,
            left,
            right,
        };
        Ok(id)
    }
}

/// Greedy top-down fit. The root has depth 0; a node splits only while its
/// depth is below `max_depth`, it holds at least `min_samples_split` rows and
/// is impure, and both children keep `min_samples_leaf` rows.
pub fn tree_fit(x: &Matrix<f64>, y: &[usize], p: TreeParams) -> Result<Tree> {
    p.validate()?;
    if x.rows() == 0 || y.len() != x.rows() {
        return Err(Error::Parameter(format!(
            "{} training rows with {} labels",
            x.rows(),
            y.len()
        )));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut b = Builder {
        x,
        y,
        p,
        n_classes,
        nodes: Vec::new(),
    };
    b.grow((0..x.rows()).collect(), 0)?;
    Ok(Tree {
        nodes: b.nodes,
        n_features: x.cols(),
        n_classes,
    })
}

impl Tree {
    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub fn tree_predict(tree: &Tree, x_query: &Matrix<f64>) -> Result<Vec<usize>> {
    if x_query.cols() != tree.n_features {
        return Err(Error::Parameter(format!(
            "query has {} features, tree {}",
            x_query.cols(),
            tree.n_features
        )));
    }
    Ok((0..x_query.rows())
        .map(|r| match &tree.nodes[tree.leaf_of(x_query.row(r))] {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!("leaf_of stops at leaves"),
        })
        .collect())
}
