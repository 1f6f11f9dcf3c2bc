//! Honest causal trees for stage contrasts, and backward fitting with them.
//!
//! Rows are shuffled and split into a training part, which chooses the
//! splits, and an estimation part, which fills the leaf contrasts. A split
//! is accepted when it raises
//!
//! ```text
//! (1/n_tr) Σ_ℓ n_ℓ Ĉ_ℓ² − (1/n_tr + 1/n_est) Σ_ℓ (S²_1ℓ / p̂_ℓ + S²_0ℓ / (1 − p̂_ℓ))
//! ```
//!
//! evaluated on the training part.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::fit::{FitResult, MethodTag, StageFit};
use crate::propensity::PropensityModel;
use crate::regime::{Regime, Rule};
use crate::stats::LogisticOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeHyperparams {
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Share of rows reserved for leaf estimation.
    pub honest_fraction: f64,
    pub use_iptw: bool,
    pub seed: u64,
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        Self {
            min_leaf: 10,
            max_depth: 4,
            honest_fraction: 0.5,
            use_iptw: true,
            seed: 0,
        }
    }
}

impl TreeHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 2 {
            return Err(DtrError::Config("min_leaf must be at least 2".into()));
        }
        if !(self.honest_fraction > 0.0 && self.honest_fraction < 1.0) {
            return Err(DtrError::Config("honest_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        contrast: f64,
        treated: usize,
        control: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTree {
    dim: usize,
    root: Node,
}

impl CausalTree {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    fn leaf(&self, x: &[f64]) -> &Node {
        let mut node = &self.root;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    /// Leaf contrast of the region containing `x`.
    pub fn contrast(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            Node::Leaf { contrast, .. } => *contrast,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Index of the leaf containing `x`, counting leaves left to right.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        fn walk(node: &Node, x: &[f64], offset: usize) -> usize {
            match node {
                Node::Leaf { .. } => offset,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] <= *threshold {
                        walk(left, x, offset)
                    } else {
                        walk(right, x, offset + count(left))
                    }
                }
            }
        }
        walk(&self.root, x, 0)
    }

    pub fn leaf_count(&self) -> usize {
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn d(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Leaf contrasts left to right.
    pub fn leaf_contrasts(&self) -> Vec<f64> {
        fn collect(node: &Node, out: &mut Vec<f64>) {
            match node {
                Node::Leaf { contrast, .. } => out.push(*contrast),
                Node::Split { left, right, .. } => {
                    collect(left, out);
                    collect(right, out);
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        fn max_feature(node: &Node) -> Option<usize> {
            match node {
                Node::Leaf { .. } => None,
                Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } => [Some(*feature), max_feature(left), max_feature(right)]
                    .into_iter()
                    .flatten()
                    .max(),
            }
        }
        if self.dim != dim || max_feature(&self.root).is_some_and(|f| f >= dim) {
            return Err(DtrError::Shape(format!(
                "tree expects {} features, feature map has {dim}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Indented outline, one node per line.
    pub fn to_text(&self, labels: &[String]) -> String {
        fn walk(node: &Node, labels: &[String], depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match node {
                Node::Leaf {
                    contrast,
                    treated,
                    control,
                } => out.push_str(&format!(
                    "{pad}leaf contrast={contrast:.4} treated={treated} control={control}\n"
                )),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let name = labels
                        .get(*feature)
                        .cloned()
                        .unwrap_or_else(|| format!("x{feature}"));
                    out.push_str(&format!("{pad}{name} <= {threshold:.4}\n"));
                    walk(left, labels, depth + 1, out);
                    out.push_str(&format!("{pad}{name} > {threshold:.4}\n"));
                    walk(right, labels, depth + 1, out);
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, labels, 0, &mut out);
        out
    }
}

fn count(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => count(left) + count(right),
    }
}

/// Stage rows for tree building.
#[derive(Debug, Clone, Default)]
pub struct TreeRows {
    pub x: Vec<Vec<f64>>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
}

impl TreeRows {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn weight(&self, i: usize, iptw: bool) -> f64 {
        if !iptw {
            1.0
        } else if self.a[i] == 1 {
            1.0 / self.pi[i]
        } else {
            1.0 / (1.0 - self.pi[i])
        }
    }
}

/// `(training, estimation)` row indices of the honest split.
pub fn honest_split(n: usize, hyper: &TreeHyperparams) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(hyper.seed);
    idx.shuffle(&mut rng);
    let n_est = ((n as f64) * hyper.honest_fraction).round() as usize;
    let est = idx[..n_est].to_vec();
    let train = idx[n_est..].to_vec();
    (train, est)
}

/// Weighted sufficient statistics of one arm.
#[derive(Debug, Clone, Copy, Default)]
struct Arm {
    n: usize,
    w: f64,
    wy: f64,
    wyy: f64,
}

impl Arm {
    fn add(&mut self, w: f64, y: f64) {
        self.n += 1;
        self.w += w;
        self.wy += w * y;
        self.wyy += w * y * y;
    }

    fn sub(self, o: Arm) -> Arm {
        Arm {
            n: self.n - o.n,
            w: self.w - o.w,
            wy: self.wy - o.wy,
            wyy: self.wyy - o.wyy,
        }
    }

    fn mean(&self) -> f64 {
        self.wy / self.w
    }

    fn var(&self) -> f64 {
        (self.wyy / self.w - self.mean().powi(2)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    t: Arm,
    c: Arm,
}

impl Cell {
    fn add(&mut self, a: u8, w: f64, y: f64) {
        if a == 1 {
            self.t.add(w, y)
        } else {
            self.c.add(w, y)
        }
    }

    fn sub(self, o: Cell) -> Cell {
        Cell {
            t: self.t.sub(o.t),
            c: self.c.sub(o.c),
        }
    }

    fn n(&self) -> usize {
        self.t.n + self.c.n
    }

    fn contrast(&self) -> f64 {
        self.t.mean() - self.c.mean()
    }

    /// Contribution of this leaf to the honest criterion.
    fn score(&self, n_tr: f64, n_est: f64) -> f64 {
        let p = self.t.n as f64 / self.n() as f64;
        let penalty = self.t.var() / p + self.c.var() / (1.0 - p);
        self.n() as f64 * self.contrast().powi(2) / n_tr - (1.0 / n_tr + 1.0 / n_est) * penalty
    }
}

struct Builder<'a> {
    rows: &'a TreeRows,
    hyper: TreeHyperparams,
    n_tr: f64,
    n_est: f64,
}

impl Builder<'_> {
    fn cell(&self, idx: &[usize]) -> Cell {
        let mut c = Cell::default();
        for &i in idx {
            c.add(self.rows.a[i], self.rows.weight(i, self.hyper.use_iptw), self.rows.y[i]);
        }
        c
    }

    fn arm_counts(&self, idx: &[usize]) -> (usize, usize) {
        let t = idx.iter().filter(|&&i| self.rows.a[i] == 1).count();
        (t, idx.len() - t)
    }

    fn leaf(&self, est: &[usize]) -> Node {
        let c = self.cell(est);
        Node::Leaf {
            contrast: c.contrast(),
            treated: c.t.n,
            control: c.c.n,
        }
    }

    fn best_split(&self, train: &[usize], est: &[usize]) -> Option<(usize, f64, f64)> {
        let m = self.hyper.min_leaf;
        let parent = self.cell(train);
        let parent_score = parent.score(self.n_tr, self.n_est);
        let tol = 1e-10 * (1.0 + parent_score.abs());
        let dim = self.rows.x.first().map_or(0, Vec::len);
        let mut best: Option<(usize, f64, f64)> = None;
        let (est_t, est_c) = self.arm_counts(est);
        for f in 0..dim {
            let key = |i: &usize| self.rows.x[*i][f];
            let mut tr = train.to_vec();
            tr.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
            let mut es = est.to_vec();
            es.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
            let mut left = Cell::default();
            let (mut el_t, mut el_c) = (0usize, 0usize);
            let mut ep = 0;
            for s in 0..tr.len().saturating_sub(1) {
                let i = tr[s];
                left.add(self.rows.a[i], self.rows.weight(i, self.hyper.use_iptw), self.rows.y[i]);
                let (xl, xr) = (key(&tr[s]), key(&tr[s + 1]));
                if xl == xr {
                    continue;
                }
                let threshold = 0.5 * (xl + xr);
                while ep < es.len() && key(&es[ep]) <= threshold {
                    if self.rows.a[es[ep]] == 1 {
                        el_t += 1;
                    } else {
                        el_c += 1;
                    }
                    ep += 1;
                }
                let right = parent.sub(left);
                if left.t.n < m || left.c.n < m || right.t.n < m || right.c.n < m {
                    continue;
                }
                if el_t < m || el_c < m || est_t - el_t < m || est_c - el_c < m {
                    continue;
                }
                let gain = left.score(self.n_tr, self.n_est) + right.score(self.n_tr, self.n_est)
                    - parent_score;
                if gain > tol && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    fn grow(&self, train: Vec<usize>, est: Vec<usize>, depth: usize) -> Node {
        if depth >= self.hyper.max_depth {
            return self.leaf(&est);
        }
        match self.best_split(&train, &est) {
            None => self.leaf(&est),
            Some((feature, threshold, _)) => {
                let (tl, tr): (Vec<usize>, Vec<usize>) =
                    train.iter().partition(|&&i| self.rows.x[i][feature] <= threshold);
                let (el, er): (Vec<usize>, Vec<usize>) =
                    est.iter().partition(|&&i| self.rows.x[i][feature] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(tl, el, depth + 1)),
                    right: Box::new(self.grow(tr, er, depth + 1)),
                }
            }
        }
    }
}

pub fn build_causal_tree(rows: &TreeRows, hyper: &TreeHyperparams) -> Result<CausalTree> {
    hyper.validate()?;
    let n = rows.len();
    if rows.x.len() != n || rows.a.len() != n || rows.pi.len() != n {
        return Err(DtrError::Shape("tree rows disagree in length".into()));
    }
    let dim = rows.x.first().map_or(0, Vec::len);
    if rows.x.iter().any(|x| x.len() != dim) {
        return Err(DtrError::Shape("tree feature vectors differ in length".into()));
    }
    if rows.pi.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(DtrError::Data("tree propensities must lie in (0, 1)".into()));
    }
    if n < 2 * hyper.min_leaf {
        return Err(DtrError::Degenerate(format!(
            "{n} rows cannot hold two leaves of size {}",
            hyper.min_leaf
        )));
    }
    let (train, est) = honest_split(n, hyper);
    let builder = Builder {
        rows,
        hyper: *hyper,
        n_tr: train.len() as f64,
        n_est: est.len() as f64,
    };
    for (part, idx) in [("training", &train), ("estimation", &est)] {
        let (t, c) = builder.arm_counts(idx);
        if t == 0 || c == 0 {
            return Err(DtrError::Degenerate(format!(
                "the {part} rows contain a single action ({t} treated, {c} control)"
            )));
        }
    }
    let root = builder.grow(train, est, 0);
    Ok(CausalTree { dim, root })
}

/// Stage specification for causal-tree fitting.
#[derive(Debug, Clone)]
pub struct CtreeStageSpec {
    /// Splitting features; an intercept column, if present, is harmless.
    pub features: FeatureMap,
    pub propensity: FeatureMap,
    pub hyper: TreeHyperparams,
}

/// Backward causal-tree fitting with value update
/// `V̂_j = V̂_{j+1} + (I{Ĉ_j > 0} − A_j) Ĉ_j`.
pub fn causal_tree_fit(data: &Dataset, specs: &[CtreeStageSpec]) -> Result<FitResult> {
    let k = data.stage_count();
    if specs.len() != k {
        return Err(DtrError::Shape(format!(
            "{} tree specifications for {k} stages",
            specs.len()
        )));
    }
    let mut v = data.outcomes();
    let mut columns = vec![Vec::new(); k];
    let mut stages = Vec::with_capacity(k);
    let mut rules = Vec::with_capacity(k);
    for j in (1..=k).rev() {
        let spec = &specs[j - 1];
        if spec.features.stage() != j || spec.propensity.stage() != j {
            return Err(DtrError::Shape(format!(
                "tree specification {j} contains maps built for another stage"
            )));
        }
        let idx = data.reaching(j);
        let prop = PropensityModel::fit(data, &spec.propensity, &idx, LogisticOptions::default())?;
        let mut rows = TreeRows::default();
        for &i in &idx {
            let t = data.get(i);
            let h = t.history(j)?;
            rows.x.push(spec.features.eval(&h));
            rows.a.push(t.action(j));
            rows.y.push(v[i]);
            rows.pi.push(prop.predict(&h));
        }
        let tree = build_causal_tree(&rows, &spec.hyper).map_err(|e| e.at_stage(j))?;
        for (r, &i) in idx.iter().enumerate() {
            let c = tree.contrast(&rows.x[r]);
            let opt = if c > 0.0 { 1.0 } else { 0.0 };
            v[i] += (opt - f64::from(rows.a[r])) * c;
        }
        columns[j - 1] = v.clone();
        let rule = Rule::Tree {
            features: spec.features.clone(),
            tree: tree.clone(),
        };
        stages.push(StageFit {
            stage: j,
            rows: idx.len(),
            psi_labels: Vec::new(),
            psi: Vec::new(),
            xi_labels: Vec::new(),
            xi: Vec::new(),
            propensity: Some(prop),
            condition: None,
            rule: tree.to_text(&spec.features.labels()),
            hinge: None,
            q_model: None,
        });
        rules.push(rule);
    }
    stages.reverse();
    rules.reverse();
    Ok(FitResult::assemble(
        MethodTag::Ctree,
        Regime::new(rules)?,
        stages,
        columns,
        data,
        Vec::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy40() -> TreeRows {
        let mut rows = TreeRows::default();
        for i in 0..40 {
            let x = i as f64 - 19.5;
            let a = u8::from(i % 2 == 0);
            rows.x.push(vec![x]);
            rows.a.push(a);
            rows.y.push(if a == 1 && x > 0.0 { 10.0 } else { 0.0 });
            rows.pi.push(0.5);
        }
        rows
    }

    fn hyper() -> TreeHyperparams {
        TreeHyperparams {
            min_leaf: 2,
            seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn step_contrast_splits_near_zero() {
        let rows = toy40();
        let h = hyper();
        let tree = build_causal_tree(&rows, &h).unwrap();
        let threshold = match tree.root() {
            Node::Split { threshold, .. } => *threshold,
            Node::Leaf { .. } => panic!("expected a split"),
        };
        // Every cut between the nearest treated training rows either side
        // of zero has the same training score.
        assert!(threshold.abs() < 5.0, "{threshold}");
        let (_, est) = honest_split(rows.len(), &h);
        let by_hand = |left: bool| {
            let (mut t, mut nt, mut c, mut nc) = (0.0, 0.0, 0.0, 0.0);
            for &i in &est {
                if (rows.x[i][0] <= threshold) != left {
                    continue;
                }
                if rows.a[i] == 1 {
                    t += rows.y[i];
                    nt += 1.0;
                } else {
                    c += rows.y[i];
                    nc += 1.0;
                }
            }
            t / nt - c / nc
        };
        let cs = tree.leaf_contrasts();
        assert_eq!(cs.len(), 2);
        assert!((cs[0] - by_hand(true)).abs() < 1e-10);
        assert!((cs[1] - by_hand(false)).abs() < 1e-10);
        assert!(cs[0].abs() < 1e-12 && cs[1] > 5.0, "{cs:?}");
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let mut rows = toy40();
        rows.y.iter_mut().for_each(|y| *y = 3.0);
        let tree = build_causal_tree(&rows, &hyper()).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.leaf_contrasts(), vec![0.0]);
    }

    #[test]
    fn single_action_root_is_an_error() {
        let mut rows = toy40();
        rows.a.iter_mut().for_each(|a| *a = 1);
        assert!(matches!(
            build_causal_tree(&rows, &hyper()),
            Err(DtrError::Degenerate(_))
        ));
    }

    #[test]
    fn leaves_respect_min_leaf_and_depth() {
        let mut rows = toy40();
        for (i, y) in rows.y.iter_mut().enumerate() {
            *y += (i as f64 * 0.37).sin() * 4.0 + if rows.a[i] == 1 { i as f64 * 0.3 } else { 0.0 };
        }
        let h = TreeHyperparams {
            min_leaf: 3,
            max_depth: 2,
            seed: 9,
            ..Default::default()
        };
        let tree = build_causal_tree(&rows, &h).unwrap();
        assert!(tree.depth() <= 2);
        fn check(node: &Node, m: usize) {
            match node {
                Node::Leaf { treated, control, .. } => assert!(*treated >= m && *control >= m),
                Node::Split { left, right, .. } => {
                    check(left, m);
                    check(right, m);
                }
            }
        }
        check(tree.root(), 3);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = build_causal_tree(&toy40(), &hyper()).unwrap();
        let b = build_causal_tree(&toy40(), &hyper()).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: CausalTree = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn text_export_lists_splits() {
        let tree = build_causal_tree(&toy40(), &hyper()).unwrap();
        let text = tree.to_text(&["L2".into()]);
        assert!(text.starts_with("L2 <= "));
        assert!(text.contains("leaf contrast="));
    }
}
