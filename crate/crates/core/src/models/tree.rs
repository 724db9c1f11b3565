//! CART decision trees over weighted samples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Column-major copy of a feature matrix.
#[derive(Debug, Clone)]
pub struct Columns {
    cols: Vec<Vec<f64>>,
    rows: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let mut cols = vec![Vec::with_capacity(rows.len()); width];
        for r in rows {
            for (c, &v) in cols.iter_mut().zip(r) {
                c.push(v);
            }
        }
        Columns { cols, rows: rows.len() }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize) -> f64 {
        self.cols[feature][row]
    }
}

/// What a tree is fit against.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Class indices in `0..n_classes`; impurity is Gini.
    Classes { y: &'a [usize], n_classes: usize },
    /// Real values; impurity is weighted variance.
    Values(&'a [f64]),
}

impl Targets<'_> {
    fn stats_len(&self) -> usize {
        match self {
            Targets::Classes { n_classes, .. } => *n_classes,
            Targets::Values(_) => 3,
        }
    }

    #[inline]
    fn add(&self, stats: &mut [f64], row: usize, w: f64) {
        match self {
            Targets::Classes { y, .. } => stats[y[row]] += w,
            Targets::Values(y) => {
                let v = y[row];
                stats[0] += w;
                stats[1] += w * v;
                stats[2] += w * v * v;
            }
        }
    }

    fn total_weight(&self, stats: &[f64]) -> f64 {
        match self {
            Targets::Classes { .. } => stats.iter().sum(),
            Targets::Values(_) => stats[0],
        }
    }

    fn impurity(&self, stats: &[f64]) -> f64 {
        let w = self.total_weight(stats);
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            Targets::Classes { .. } => 1.0 - stats.iter().map(|s| (s / w) * (s / w)).sum::<f64>(),
            Targets::Values(_) => {
                let mean = stats[1] / w;
                (stats[2] / w - mean * mean).max(0.0)
            }
        }
    }

    fn leaf_value(&self, stats: &[f64]) -> Vec<f64> {
        let w = self.total_weight(stats);
        match self {
            Targets::Classes { .. } => stats.iter().map(|s| s / w).collect(),
            Targets::Values(_) => vec![stats[1] / w],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features evaluated per split.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution (classifier) or a single mean (regressor).
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// A weighted training sample: row index and weight.
pub type Sample = (usize, f64);

/// Impurity decrease per feature, weighted by the node's share of the root
/// weight; unnormalised.
pub type RawImportances = Vec<f64>;

impl DecisionTree {
    /// Grows a tree. Rows go left when `x[feature] <= threshold`.
    pub fn fit(
        x: &Columns,
        targets: Targets<'_>,
        samples: &[Sample],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> (DecisionTree, RawImportances) {
        let n_features = x.n_features();
        let mut importances = vec![0.0; n_features];
        let mut root_stats = vec![0.0; targets.stats_len()];
        for &(r, w) in samples {
            targets.add(&mut root_stats, r, w);
        }
        let root_weight = targets.total_weight(&root_stats);

        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, samples, depth, stats)
        let mut stack: Vec<(usize, Vec<Sample>, usize, Vec<f64>)> = Vec::new();
        nodes.push(Node::Leaf { value: Vec::new() });
        stack.push((0, samples.to_vec(), 0, root_stats));

        while let Some((slot, node_samples, depth, stats)) = stack.pop() {
            let impurity = targets.impurity(&stats);
            let weight = targets.total_weight(&stats);
            let can_split = params.max_depth.is_none_or(|d| depth < d)
                && node_samples.len() >= params.min_samples_split.max(2)
                && node_samples.len() >= 2 * params.min_samples_leaf.max(1)
                && impurity > 1e-12;
            let best = if can_split {
                best_split(x, targets, &node_samples, params, rng)
            } else {
                None
            };
            let Some(split) = best else {
                nodes[slot] = Node::Leaf {
                    value: targets.leaf_value(&stats),
                };
                continue;
            };
            let decrease = (weight * impurity - split.child_cost).max(0.0);
            if root_weight > 0.0 {
                importances[split.feature] += decrease / root_weight;
            }
            let (left, right): (Vec<Sample>, Vec<Sample>) = node_samples
                .iter()
                .partition(|&&(r, _)| x.get(r, split.feature) <= split.threshold);
            let left_slot = nodes.len();
            nodes.push(Node::Leaf { value: Vec::new() });
            let right_slot = nodes.len();
            nodes.push(Node::Leaf { value: Vec::new() });
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: left_slot,
                right: right_slot,
            };
            stack.push((right_slot, right, depth + 1, split.right_stats));
            stack.push((left_slot, left, depth + 1, split.left_stats));
        }
        (DecisionTree { nodes }, importances)
    }

    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn is_leaf_only(&self) -> bool {
        self.nodes.len() == 1
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    /// `w_left * imp_left + w_right * imp_right`.
    child_cost: f64,
    left_stats: Vec<f64>,
    right_stats: Vec<f64>,
}

/// Visits features in random order until `max_features` non-constant
/// ones have been examined, keeping the split of lowest weighted child
/// impurity. Ties keep the earlier candidate.
fn best_split(
    x: &Columns,
    targets: Targets<'_>,
    samples: &[Sample],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<Split> {
    let n_features = x.n_features();
    let mut order: Vec<usize> = (0..n_features).collect();
    let mut best: Option<Split> = None;
    let mut visited = 0;
    let min_leaf = params.min_samples_leaf.max(1);
    let k = params.max_features.clamp(1, n_features.max(1));
    let mut sorted: Vec<Sample> = samples.to_vec();
    let stats_len = targets.stats_len();
    let mut total = vec![0.0; stats_len];
    for &(r, w) in samples {
        targets.add(&mut total, r, w);
    }

    for i in 0..n_features {
        if visited >= k {
            break;
        }
        let j = rng.gen_range(i..n_features);
        order.swap(i, j);
        let f = order[i];

        sorted.sort_by(|a, b| x.get(a.0, f).total_cmp(&x.get(b.0, f)).then(a.0.cmp(&b.0)));
        let lo = x.get(sorted[0].0, f);
        let hi = x.get(sorted[sorted.len() - 1].0, f);
        if lo == hi {
            continue;
        }
        visited += 1;

        let mut left = vec![0.0; stats_len];
        let n = sorted.len();
        for pos in 0..n - 1 {
            let (r, w) = sorted[pos];
            targets.add(&mut left, r, w);
            let v = x.get(r, f);
            let next = x.get(sorted[pos + 1].0, f);
            if v == next {
                continue;
            }
            let n_left = pos + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let cost = targets.total_weight(&left) * targets.impurity(&left)
                + targets.total_weight(&right) * targets.impurity(&right);
            if best.as_ref().is_none_or(|b| cost < b.child_cost) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    child_cost: cost,
                    left_stats: left.clone(),
                    right_stats: right,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(depth: Option<usize>, f: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: f,
        }
    }

    fn unit(n: usize) -> Vec<Sample> {
        (0..n).map(|i| (i, 1.0)).collect()
    }

    #[test]
    fn stump_on_four_points() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = [0, 0, 1, 1];
        let x = Columns::from_rows(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, imp) = DecisionTree::fit(
            &x,
            Targets::Classes { y: &y, n_classes: 2 },
            &unit(4),
            &params(Some(1), 1),
            &mut rng,
        );
        assert_eq!(t.nodes.len(), 3);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 1.5)),
            _ => panic!("expected split"),
        }
        // root gini 0.5, children pure: decrease 4 * 0.5 / 4
        assert!((imp[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regression_leaves_are_means() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = [1.0, 2.0, 3.0, 6.0, 7.0];
        let x = Columns::from_rows(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, _) = DecisionTree::fit(&x, Targets::Values(&y), &unit(5), &params(Some(1), 1), &mut rng);
        // best variance split is between 2 and 3: means 2 and 6.5
        assert_eq!(t.leaf(&[0.0]), &[2.0]);
        assert_eq!(t.leaf(&[4.0]), &[6.5]);
    }

    #[test]
    fn weights_shift_leaf_distribution() {
        let rows = vec![vec![0.0], vec![0.0]];
        let y = [0, 1];
        let x = Columns::from_rows(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, _) = DecisionTree::fit(
            &x,
            Targets::Classes { y: &y, n_classes: 2 },
            &[(0, 3.0), (1, 1.0)],
            &params(None, 1),
            &mut rng,
        );
        assert_eq!(t.leaf(&[0.0]), &[0.75, 0.25]);
    }

    #[test]
    fn min_samples_leaf_respected() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = [0, 1, 1, 1, 1, 1];
        let x = Columns::from_rows(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TreeParams {
            min_samples_leaf: 2,
            ..params(Some(1), 1)
        };
        let (t, _) = DecisionTree::fit(&x, Targets::Classes { y: &y, n_classes: 2 }, &unit(6), &p, &mut rng);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 1.5),
            _ => panic!("expected split"),
        }
    }
}
