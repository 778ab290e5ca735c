//! CART regression trees and the two tree ensembles built on them.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) {
            return slot;
        }
        let Some((feature, threshold)) = self.best_split(idx, sum) else {
            return slot;
        };
        // partition in place: left rows first
        let mut cut = 0;
        for k in 0..n {
            if self.x[[idx[k], feature]] <= threshold {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, idx: &[usize], total: f64) -> Option<(usize, f64)> {
        let p = self.x.ncols();
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < p => {
                let mut f = sample(self.rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (self.x[[order[k], f]], self.x[[order[k + 1], f]]);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                let gain = score - base;
                if gain > 1e-12 * base.abs().max(1.0) && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (a + b)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl RegressionTree {
    pub fn fit<R: Rng>(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        rows: &[usize],
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut idx = rows.to_vec();
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.build(&mut idx, 0);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict(&self, q: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if q[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Bagged trees: bootstrap rows per tree, average of tree predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        n_trees: usize,
        params: TreeParams,
        seed: u64,
    ) -> Self {
        let n = y.len();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(seed, t as u64));
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, &rows, params, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, q: ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.predict(q)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Least-squares gradient boosting with depth-1 trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumps {
    base: f64,
    shrinkage: f64,
    stumps: Vec<RegressionTree>,
}

impl BoostedStumps {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, rounds: usize, shrinkage: f64) -> Self {
        let n = y.len();
        let base = y.sum() / n as f64;
        let mut fitted = vec![base; n];
        let rows: Vec<usize> = (0..n).collect();
        let params = TreeParams {
            max_depth: 1,
            min_leaf: 1,
            max_features: None,
        };
        // stumps see every feature, so the rng is never consumed
        let mut rng = seed::rng(0);
        let mut stumps = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let resid = ndarray::Array1::from_iter((0..n).map(|i| y[i] - fitted[i]));
            let stump = RegressionTree::fit(x, resid.view(), &rows, params, &mut rng);
            for (i, f) in fitted.iter_mut().enumerate() {
                *f += shrinkage * stump.predict(x.row(i));
            }
            stumps.push(stump);
        }
        BoostedStumps {
            base,
            shrinkage,
            stumps,
        }
    }

    pub fn predict(&self, q: ArrayView1<f64>) -> f64 {
        self.base + self.shrinkage * self.stumps.iter().map(|s| s.predict(q)).sum::<f64>()
    }
}
