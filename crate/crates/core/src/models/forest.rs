//! Random forest of Gini-split CART trees over numeric features.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        score: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

pub fn predict(trees: &[DecisionTree], x: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
}

/// Fit `params.n_trees` trees on bootstrap resamples; tree `t` draws from its own seeded stream.
pub fn fit(x: &[Vec<f64>], y: &[u8], params: &ForestParams, seed: u64) -> Vec<DecisionTree> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    let mtry = ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1));
    (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = Builder {
                x,
                y,
                mtry,
                max_depth: params.max_depth,
                rng,
                nodes: Vec::new(),
            };
            builder.grow(rows, 0);
            DecisionTree { nodes: builder.nodes }
        })
        .collect()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    mtry: usize,
    max_depth: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&i| self.y[i] == 1).count();
        let score = pos as f64 / rows.len().max(1) as f64;
        self.nodes.push(TreeNode::Leaf { score });
        if depth >= self.max_depth || rows.len() < 2 || pos == 0 || pos == rows.len() {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, pos) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<(usize, f64)> {
        let p = self.x[0].len();
        let n = rows.len();
        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let features = sample(&mut self.rng, p, self.mtry.min(p)).into_vec();
        for feature in features {
            let mut sorted: Vec<(f64, u8)> = rows.iter().map(|&i| (self.x[i][feature], self.y[i])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += usize::from(sorted[k - 1].1);
                if sorted[k].0 == sorted[k - 1].0 {
                    continue;
                }
                let right_pos = pos - left_pos;
                let impurity = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(right_pos, n - k)) / n as f64;
                let decrease = parent - impurity;
                if decrease > 1e-12 && best.is_none_or(|(b, _, _)| decrease > b) {
                    best = Some((decrease, feature, 0.5 * (sorted[k - 1].0 + sorted[k].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_threshold_data() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let trees = fit(&x, &y, &ForestParams { n_trees: 25, max_depth: 4 }, 5);
        let correct = x.iter().zip(&y).filter(|(r, &l)| (predict(&trees, r) >= 0.5) == (l == 1)).count();
        assert!(correct >= 38);
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 2 == 0)).collect();
        let params = ForestParams { n_trees: 10, max_depth: 3 };
        assert_eq!(fit(&x, &y, &params, 1), fit(&x, &y, &params, 1));
    }
}
