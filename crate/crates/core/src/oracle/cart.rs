//! Greedy Gini CART classifier used as the forest's base learner.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::schema::Matrix;
use crate::splitstat::{gini_from_sums, gini_gain_distribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    /// Maximum number of layers including the root; `None` grows until pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub features_per_split: Option<usize>,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
enum CartNode<T> {
    Split {
        column: u32,
        threshold: T,
        left: u32,
        right: u32,
    },
    Leaf {
        probs: Vec<T>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassificationTree<T> {
    nodes: Vec<CartNode<T>>,
}

struct Fit<'a, T> {
    rows: &'a Matrix<T>,
    labels: &'a [usize],
    k: usize,
    cfg: CartConfig,
    nodes: Vec<CartNode<T>>,
}

struct BestSplit<T> {
    gini: T,
    column: usize,
    threshold: T,
    left_len: usize,
}

impl<T: Scalar> ClassificationTree<T> {
    /// Fits on the row indices in `sample` (repeats allowed, as in a
    /// bootstrap). `rng` drives feature subsampling and is only consulted when
    /// fewer than all features are examined per split.
    pub fn fit(
        rows: &Matrix<T>,
        labels: &[usize],
        k: usize,
        sample: &[usize],
        cfg: CartConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut fit = Fit {
            rows,
            labels,
            k,
            cfg,
            nodes: Vec::new(),
        };
        let mut idx = sample.to_vec();
        fit.grow(&mut idx, 1, rng);
        ClassificationTree { nodes: fit.nodes }
    }

    /// Leaf class-frequency vector reached by `x`.
    pub fn leaf_probs(&self, x: &[T]) -> &[T] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                CartNode::Leaf { probs } => return probs,
                CartNode::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*column as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, CartNode::Leaf { .. }))
            .count()
    }
}

impl<T: Scalar> Fit<'_, T> {
    fn counts(&self, idx: &[usize]) -> Vec<T> {
        let mut c = vec![T::zero(); self.k];
        for &i in idx {
            c[self.labels[i]] = c[self.labels[i]] + T::one();
        }
        c
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let counts = self.counts(idx);
        let n = T::from_count(idx.len());
        let probs: Vec<T> = counts.iter().map(|c| *c / n).collect();
        self.nodes.push(CartNode::Leaf {
            probs: probs.clone(),
        });

        let impurity = gini_gain_distribution(&probs).unwrap_or(T::zero());
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        if impurity <= T::zero() || !depth_ok || idx.len() < 2 * self.cfg.min_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(idx, rng) else {
            return id;
        };

        // stable partition keeps the remaining recursion deterministic
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows.row(i)[best.column] <= best.threshold);
        debug_assert_eq!(left.len(), best.left_len);
        let l = self.grow(&mut left, depth + 1, rng);
        let r = self.grow(&mut right, depth + 1, rng);
        self.nodes[id as usize] = CartNode::Split {
            column: best.column as u32,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit<T>> {
        let m = self.rows.ncols();
        let want = self.cfg.features_per_split.unwrap_or(m).clamp(1, m);
        let mut features: Vec<usize> = (0..m).collect();
        if want < m {
            features.shuffle(rng);
        }
        let min_leaf = self.cfg.min_leaf.max(1);
        let total = self.counts(idx);

        let mut best: Option<BestSplit<T>> = None;
        let mut visited = 0;
        let mut sorted = idx.to_vec();
        for &col in &features {
            if visited == want {
                break;
            }
            sorted.sort_by(|&a, &b| {
                self.rows.row(a)[col]
                    .partial_cmp(&self.rows.row(b)[col])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let first = self.rows.row(sorted[0])[col];
            let last = self.rows.row(sorted[sorted.len() - 1])[col];
            if first == last {
                // constant features do not count toward the budget
                continue;
            }
            visited += 1;
            let mut left = vec![T::zero(); self.k];
            for pos in 1..sorted.len() {
                let prev = sorted[pos - 1];
                left[self.labels[prev]] = left[self.labels[prev]] + T::one();
                let a = self.rows.row(prev)[col];
                let b = self.rows.row(sorted[pos])[col];
                if a == b || pos < min_leaf || sorted.len() - pos < min_leaf {
                    continue;
                }
                let right: Vec<T> = total.iter().zip(&left).map(|(t, l)| *t - *l).collect();
                let gini = gini_from_sums(&left, pos, &right, sorted.len() - pos);
                let mut threshold = (a + b) / T::lit(2.0);
                if threshold >= b {
                    threshold = a;
                }
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        gini < cur.gini
                            || (gini == cur.gini
                                && (col, threshold.to_f64_lossy())
                                    < (cur.column, cur.threshold.to_f64_lossy()))
                    }
                };
                if better {
                    best = Some(BestSplit {
                        gini,
                        column: col,
                        threshold,
                        left_len: pos,
                    });
                }
            }
        }
        best
    }
}
