use serde::{Deserialize, Serialize};

use super::CalibrateError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        let ok = self.max_depth >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.lambda > 0.0
            && self.min_child_weight > 0.0
            && self.min_child_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CalibrateError::Config(
                "depth must be >= 1 and learning rate, lambda, min child weight positive".into(),
            ))
        }
    }
}

/// A regression tree node. Samples with `x[feature] < threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { weight } => vec![*weight],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    fn check(&self, n_features: usize, depth: usize) -> Result<(), String> {
        if depth > MAX_TREE_DEPTH {
            return Err("tree too deep".into());
        }
        match self {
            TreeNode::Leaf { weight } if weight.is_finite() => Ok(()),
            TreeNode::Leaf { .. } => Err("non-finite leaf weight".into()),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(format!("feature {feature} out of range for {n_features} features"));
                }
                if !threshold.is_finite() {
                    return Err("non-finite split threshold".into());
                }
                left.check(n_features, depth + 1)?;
                right.check(n_features, depth + 1)
            }
        }
    }
}

const MAX_TREE_DEPTH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    /// Initial margin (log-odds) before any tree.
    pub base_score: f64,
    pub n_features: usize,
    pub config: BoostConfig,
    pub trees: Vec<TreeNode>,
}

impl BoostModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64, CalibrateError> {
        if x.len() != self.n_features {
            return Err(CalibrateError::Length {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.eval(x)).sum::<f64>())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("boost model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrateError> {
        let m: Self = serde_json::from_str(text).map_err(|e| CalibrateError::Json(e.to_string()))?;
        if !m.base_score.is_finite() {
            return Err(CalibrateError::Json("non-finite base score".into()));
        }
        for (i, t) in m.trees.iter().enumerate() {
            t.check(m.n_features, 0)
                .map_err(|e| CalibrateError::Json(format!("tree {i}: {e}")))?;
        }
        Ok(m)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_proba(model: &BoostModel, x: &[f64]) -> Result<f64, CalibrateError> {
    Ok(sigmoid(model.margin(x)?))
}

/// Mean logistic loss of probabilities against labels.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-15;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / probs.len().max(1) as f64
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

enum Arena {
    Leaf(f64),
    Split(usize, f64, usize, usize),
}

fn to_tree(arena: &[Arena], i: usize) -> TreeNode {
    match arena[i] {
        Arena::Leaf(weight) => TreeNode::Leaf { weight },
        Arena::Split(feature, threshold, l, r) => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(to_tree(arena, l)),
            right: Box::new(to_tree(arena, r)),
        },
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a {
        m
    } else {
        b
    }
}

/// Grows one tree level by level. `sorted[f]` lists sample indices by ascending
/// feature `f`.
fn grow_tree(x: &[Vec<f64>], sorted: &[Vec<usize>], g: &[f64], h: &[f64], config: &BoostConfig) -> TreeNode {
    const NONE: usize = usize::MAX;
    let n = g.len();
    let lambda = config.lambda;
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let mut arena: Vec<Arena> = vec![Arena::Leaf(0.0)];
    // Open nodes of the current level: arena index, G, H.
    let mut open: Vec<(usize, f64, f64)> = vec![(0, g.iter().sum(), h.iter().sum())];
    let mut node_of = vec![0usize; n];
    for _depth in 0..config.max_depth {
        let k = open.len();
        let mut best: Vec<Option<Candidate>> = (0..k).map(|_| None).collect();
        for (f, order) in sorted.iter().enumerate() {
            let mut gl = vec![0.0; k];
            let mut hl = vec![0.0; k];
            let mut last: Vec<Option<f64>> = vec![None; k];
            for &s in order {
                let node = node_of[s];
                if node == NONE {
                    continue;
                }
                let v = x[s][f];
                if let Some(prev) = last[node] {
                    if v > prev {
                        let (_, gt, ht) = open[node];
                        let (gr, hr) = (gt - gl[node], ht - hl[node]);
                        if hl[node] >= config.min_child_weight && hr >= config.min_child_weight {
                            let gain = 0.5 * (score(gl[node], hl[node]) + score(gr, hr) - score(gt, ht));
                            if gain > 0.0 && best[node].as_ref().map_or(true, |b| gain > b.gain) {
                                best[node] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: midpoint(prev, v),
                                });
                            }
                        }
                    }
                }
                gl[node] += g[s];
                hl[node] += h[s];
                last[node] = Some(v);
            }
        }
        let mut next = Vec::new();
        let mut child_of: Vec<Option<(usize, usize)>> = vec![None; k];
        for (node, cand) in best.into_iter().enumerate() {
            let Some(c) = cand else { continue };
            let l = arena.len();
            arena.push(Arena::Leaf(0.0));
            arena.push(Arena::Leaf(0.0));
            arena[open[node].0] = Arena::Split(c.feature, c.threshold, l, l + 1);
            child_of[node] = Some((next.len(), c.feature));
            next.push((l, 0.0, 0.0));
            next.push((l + 1, 0.0, 0.0));
        }
        let leaf_stats: Vec<(f64, f64)> = open.iter().map(|o| (o.1, o.2)).collect();
        for s in 0..n {
            let node = node_of[s];
            if node == NONE {
                continue;
            }
            match child_of[node] {
                Some((first, feature)) => {
                    let Arena::Split(_, threshold, _, _) = arena[open[node].0] else {
                        unreachable!()
                    };
                    let child = if x[s][feature] < threshold { first } else { first + 1 };
                    next[child].1 += g[s];
                    next[child].2 += h[s];
                    node_of[s] = child;
                }
                None => node_of[s] = NONE,
            }
        }
        for (node, &(idx, _, _)) in open.iter().enumerate() {
            if child_of[node].is_none() {
                let (gs, hs) = leaf_stats[node];
                arena[idx] = Arena::Leaf(-gs / (hs + lambda) * config.learning_rate);
            }
        }
        open = next;
        if open.is_empty() {
            break;
        }
    }
    for &(idx, gs, hs) in &open {
        arena[idx] = Arena::Leaf(-gs / (hs + lambda) * config.learning_rate);
    }
    to_tree(&arena, 0)
}

/// Second-order logistic boosting with exact greedy splits.
pub fn fit_gbt(embeddings: &[Vec<f64>], labels: &[u8], config: &BoostConfig) -> Result<BoostModel, CalibrateError> {
    config.validate()?;
    if embeddings.len() != labels.len() {
        return Err(CalibrateError::Length {
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if n < 2 || pos == 0 || pos == n {
        return Err(CalibrateError::SingleClass);
    }
    let e = embeddings[0].len();
    for row in embeddings {
        if row.len() != e {
            return Err(CalibrateError::Length {
                expected: e,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CalibrateError::NonFinite);
        }
    }
    let prior = pos as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let sorted: Vec<Vec<usize>> = (0..e)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| embeddings[a][f].total_cmp(&embeddings[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut margin = vec![base_score; n];
    let mut trees = Vec::with_capacity(config.trees);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..config.trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - f64::from(labels[i]);
            h[i] = (p * (1.0 - p)).max(1e-16);
        }
        let tree = grow_tree(embeddings, &sorted, &g, &h, config);
        for (m, row) in margin.iter_mut().zip(embeddings) {
            *m += tree.eval(row);
        }
        trees.push(tree);
    }
    Ok(BoostModel {
        base_score,
        n_features: e,
        config: config.clone(),
        trees,
    })
}
