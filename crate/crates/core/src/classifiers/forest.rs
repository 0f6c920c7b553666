//! Bootstrap-aggregated CART trees with Gini splits.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::CLASSES;
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng as ChaRng};

/// Marks a leaf in [`Tree::feature`].
pub const LEAF: u32 = u32::MAX;

/// One tree as parallel node arrays. Node 0 is the root; a sample goes
/// left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Training-sample class counts reaching each node.
    pub votes: Vec<[u32; CLASSES]>,
}

impl Tree {
    pub fn len(&self) -> usize {
        self.feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature.is_empty()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, n: usize) -> usize {
            if t.feature[n] == LEAF {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        if self.is_empty() {
            0
        } else {
            go(self, 0)
        }
    }

    pub fn leaf_for(&self, row: &[f64]) -> usize {
        let mut n = 0;
        while self.feature[n] != LEAF {
            n = if row[self.feature[n] as usize] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        n
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        majority(&self.votes[self.leaf_for(row)])
    }

    fn push(&mut self, votes: [u32; CLASSES]) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.votes.push(votes);
        self.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Per-row tree vote counts, `rows × 8`.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() % self.n_features != 0 {
            return Err(Error::domain(format!("forest expects feature width {}", self.n_features)));
        }
        let mut out = Vec::with_capacity(x.len() / self.n_features * CLASSES);
        for row in x.chunks_exact(self.n_features) {
            let mut v = [0.0; CLASSES];
            for t in &self.trees {
                v[t.predict_row(row) as usize] += 1.0;
            }
            out.extend_from_slice(&v);
        }
        Ok(out)
    }
}

/// Most frequent class, lowest index on ties.
pub fn majority(counts: &[u32; CLASSES]) -> u8 {
    let mut best = 0;
    for c in 1..CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best as u8
}

/// `1 − Σ p_c²`; zero for an empty node.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Impurity decrease `G(parent) − (n_l G(left) + n_r G(right)) / n`.
pub fn split_gain(left: &[u32], right: &[u32]) -> f64 {
    let parent: Vec<u32> = left.iter().zip(right).map(|(a, b)| a + b).collect();
    let (nl, nr) = (left.iter().sum::<u32>() as f64, right.iter().sum::<u32>() as f64);
    let n = nl + nr;
    if n == 0.0 {
        return 0.0;
    }
    gini(&parent) - (nl * gini(left) + nr * gini(right)) / n
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [u8],
    width: usize,
    max_depth: usize,
    mtry: usize,
    tree: Tree,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; CLASSES] {
        let mut c = [0u32; CLASSES];
        for &i in idx {
            c[self.y[i] as usize] += 1;
        }
        c
    }

    fn best_split(&self, idx: &mut [usize], parent: &[u32; CLASSES], rng: &mut ChaRng) -> Option<Split> {
        let n = idx.len() as f64;
        let parent_gini = gini(parent);
        let mut best: Option<Split> = None;
        for f in sample(rng, self.width, self.mtry).into_iter() {
            let val = |i: usize| self.x[i * self.width + f];
            idx.sort_by(|&a, &b| val(a).total_cmp(&val(b)));
            let mut left = [0u32; CLASSES];
            let mut right = *parent;
            for p in 0..idx.len() - 1 {
                let c = self.y[idx[p]] as usize;
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (val(idx[p]), val(idx[p + 1]));
                if lo >= hi {
                    continue;
                }
                let nl = (p + 1) as f64;
                let gain = parent_gini - (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Split { feature: f, threshold, gain });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12)
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaRng) -> usize {
        let counts = self.counts(idx);
        let node = self.tree.push(counts);
        if depth >= self.max_depth || idx.len() < 2 || gini(&counts) == 0.0 {
            return node;
        }
        let Some(split) = self.best_split(idx, &counts, rng) else {
            return node;
        };
        let (f, t) = (split.feature, split.threshold);
        let mut cut = 0;
        for k in 0..idx.len() {
            if self.x[idx[k] * self.width + f] <= t {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.tree.feature[node] = f as u32;
        self.tree.threshold[node] = t;
        self.tree.left[node] = left as u32;
        self.tree.right[node] = right as u32;
        node
    }
}

/// Grows one tree on the given sample indices.
pub fn grow_tree(x: &[f64], y: &[u8], width: usize, idx: &mut [usize], max_depth: usize, rng: &mut ChaRng) -> Tree {
    let mtry = ((width as f64).sqrt().floor() as usize).clamp(1, width);
    let mut b = Builder { x, y, width, max_depth, mtry, tree: Tree::default() };
    b.grow(idx, 0, rng);
    b.tree
}

/// Bootstrap sample of size n per tree; tree `t` draws from `(seed, t)`.
pub fn fit(x: &[f64], y: &[u8], width: usize, trees: usize, max_depth: usize, seed: u64) -> Result<Forest> {
    if trees == 0 || max_depth == 0 {
        return Err(Error::domain("random forest needs trees >= 1 and max_depth >= 1"));
    }
    let n = y.len();
    if n == 0 || x.len() != n * width {
        return Err(Error::domain("forest training matrix does not match labels"));
    }
    let trees = (0..trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(&[seed, t as u64]);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(x, y, width, &mut idx, max_depth, &mut rng)
        })
        .collect();
    Ok(Forest { n_features: width, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn gini_gain_matches_hand_enumeration() {
        // x = 1..6, labels 0 0 1 0 1 1. Thresholds between consecutive points:
        // split after k points; hand-computed gains below.
        let y = [0u8, 0, 1, 0, 1, 1];
        let hand = [
            // k=1: L{0} R{0,1,0,1,1}: 0.5 − (5/6)(1 − (2/5)² − (3/5)²) = 0.5 − 0.4
            0.1,
            // k=2: L{0,0} R{1,0,1,1}: 0.5 − (4/6)(0.375)
            0.25,
            // k=3: L{0,0,1} R{0,1,1}: 0.5 − 2·(3/6)(4/9)
            0.5 - 4.0 / 9.0,
            // k=4: mirror of k=2 with a mixed left side: L{0,0,1,0} R{1,1}
            0.25,
            // k=5: L{0,0,1,0,1} R{1}
            0.1,
        ];
        for (k, want) in hand.iter().enumerate() {
            let mut l = [0u32; CLASSES];
            let mut r = [0u32; CLASSES];
            for (i, &c) in y.iter().enumerate() {
                if i <= k {
                    l[c as usize] += 1;
                } else {
                    r[c as usize] += 1;
                }
            }
            assert!((split_gain(&l, &r) - want).abs() < 1e-12, "k={}", k + 1);
        }
        // The builder picks the best of them.
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let mut idx: Vec<usize> = (0..6).collect();
        let t = grow_tree(&x, &y, 1, &mut idx, 1, &mut rng_from_seed(0));
        assert_eq!(t.threshold[0], 2.5);
    }

    #[test]
    fn single_stump_separates_threshold_data() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<u8> = x.iter().map(|&v| if v < 1.75 { 2 } else { 5 }).collect();
        let f = fit(&x, &y, 1, 1, 1, 3).unwrap();
        let mut idx: Vec<usize> = (0..40).collect();
        let stump = grow_tree(&x, &y, 1, &mut idx, 1, &mut rng_from_seed(1));
        let pred: Vec<u8> = x.chunks(1).map(|r| stump.predict_row(r)).collect();
        assert_eq!(pred, y);
        assert!(f.trees[0].depth() <= 1);
    }

    #[test]
    fn pure_node_never_splits() {
        let x = vec![1.0, 5.0, 2.0, 7.0];
        let y = vec![3u8; 4];
        let mut idx: Vec<usize> = (0..4).collect();
        let t = grow_tree(&x, &y, 1, &mut idx, 5, &mut rng_from_seed(0));
        assert_eq!(t.len(), 1);
        assert_eq!(t.feature[0], LEAF);
    }

    #[test]
    fn depth_is_capped() {
        let mut rng = rng_from_seed(2);
        let x: Vec<f64> = (0..500 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<u8> = (0..500).map(|_| rng.random_range(0..8)).collect();
        let f = fit(&x, &y, 9, 5, 3, 1).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
        assert_eq!(f, fit(&x, &y, 9, 5, 3, 1).unwrap());
    }

    #[test]
    fn majority_ties_go_low() {
        let mut c = [0u32; CLASSES];
        c[4] = 2;
        c[6] = 2;
        assert_eq!(majority(&c), 4);
    }
}
