//! Regression trees over the effect modifiers: structure prior, Metropolis–
//! Hastings structure moves, conjugate leaf draws and Bayesian backfitting of
//! sums of trees.
//!
//! Splitting rules send `z_j <= c` to the left child. Candidate thresholds at
//! a node are the distinct observed values of `z_j` inside the node's cell
//! that leave at least `n_min` rows on each side, and the prior is uniform
//! over available variables and their candidates.

mod json;
mod moves;

pub use json::NodeRecord;
pub use moves::{propose_and_accept, Move, MoveProbs, MoveStats};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability that a node at `depth` is split: `alpha^nu (1 + depth)^(-zeta^nu)`.
pub fn node_split_prob(depth: usize, nu: u32, alpha: f64, zeta: f64) -> f64 {
    let base = alpha.powi(nu as i32);
    let exponent = zeta.powi(nu as i32);
    base * (1.0 + depth as f64).powf(-exponent)
}

/// Hyperparameters of the tree-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub alpha: f64,
    pub zeta: f64,
    /// Factor index entering the split probability; `1` is the standard prior.
    pub nu: u32,
    pub n_min: usize,
}

impl TreePrior {
    pub fn split_prob(&self, depth: usize) -> f64 {
        node_split_prob(depth, self.nu, self.alpha, self.zeta)
    }
}

/// Column-major view of the modifier matrix used for routing and for the
/// candidate-threshold computation.
#[derive(Debug, Clone)]
pub struct SplitData {
    cols: Vec<Vec<f64>>,
    rows: usize,
}

impl SplitData {
    pub fn new(z: &DMatrix<f64>) -> Self {
        SplitData {
            cols: (0..z.ncols()).map(|j| z.column(j).iter().copied().collect()).collect(),
            rows: z.nrows(),
        }
    }

    pub fn from_columns(cols: Vec<Vec<f64>>) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        SplitData { cols, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn vars(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn value(&self, row: usize, var: usize) -> f64 {
        self.cols[var][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[row]).collect()
    }

    /// Valid thresholds per variable for the cell made of `rows`.
    pub fn split_options(&self, rows: &[usize], n_min: usize) -> SplitOptions {
        let n = rows.len();
        let mut per_var = Vec::with_capacity(self.cols.len());
        let mut scratch: Vec<f64> = Vec::with_capacity(n);
        for col in &self.cols {
            let mut cands = Vec::new();
            if n >= 2 * n_min {
                scratch.clear();
                scratch.extend(rows.iter().map(|&r| col[r]));
                scratch.sort_unstable_by(|a, b| a.total_cmp(b));
                let mut i = 0;
                while i < n {
                    let v = scratch[i];
                    let mut j = i + 1;
                    while j < n && scratch[j] == v {
                        j += 1;
                    }
                    // j = number of rows with value <= v
                    if j >= n_min && n - j >= n_min {
                        cands.push(v);
                    }
                    i = j;
                }
            }
            per_var.push(cands);
        }
        SplitOptions { per_var }
    }
}

/// Candidate thresholds of every variable at one node.
#[derive(Debug, Clone)]
pub struct SplitOptions {
    pub per_var: Vec<Vec<f64>>,
}

impl SplitOptions {
    pub fn available(&self) -> usize {
        self.per_var.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn splittable(&self) -> bool {
        self.per_var.iter().any(|c| !c.is_empty())
    }

    pub fn contains(&self, var: usize, threshold: f64) -> bool {
        self.per_var
            .get(var)
            .is_some_and(|c| c.binary_search_by(|v| v.total_cmp(&threshold)).is_ok())
    }

    /// Uniform draw of (variable, threshold) among the available options.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(usize, f64)> {
        let avail: Vec<usize> = (0..self.per_var.len())
            .filter(|&j| !self.per_var[j].is_empty())
            .collect();
        if avail.is_empty() {
            return None;
        }
        let var = avail[rng.random_range(0..avail.len())];
        let c = &self.per_var[var];
        Some((var, c[rng.random_range(0..c.len())]))
    }

    /// Log-probability of choosing `(var, .)` uniformly: `-log(n_avail) - log(n_cand)`.
    pub fn log_choice_prob(&self, var: usize) -> f64 {
        -(self.available() as f64).ln() - (self.per_var[var].len() as f64).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Leaf {
        value: f64,
    },
    Split {
        var: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub kind: NodeKind,
}

/// Binary regression tree stored as an arena in preorder; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<NodeRecord>", try_from = "Vec<NodeRecord>")]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Default for Tree {
    fn default() -> Self {
        Tree::constant(0.0)
    }
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Tree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                kind: NodeKind::Leaf { value },
            }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Leaf { .. })
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    /// Internal nodes whose two children are both leaves.
    pub fn nog_nodes(&self) -> Vec<usize> {
        self.internal_nodes()
            .into_iter()
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                NodeKind::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Variables used by the splitting rules, one entry per internal node.
    pub fn split_vars(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Split { var, .. } => Some(var),
                NodeKind::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn leaf_value(&self, id: usize) -> Option<f64> {
        match self.nodes[id].kind {
            NodeKind::Leaf { value } => Some(value),
            NodeKind::Split { .. } => None,
        }
    }

    pub fn set_leaf_value(&mut self, id: usize, v: f64) {
        if let NodeKind::Leaf { value } = &mut self.nodes[id].kind {
            *value = v;
        }
    }

    /// Leaf reached by a modifier row given as a closure over the variable index.
    #[inline]
    pub fn route_with(&self, z: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Split {
                    var,
                    threshold,
                    left,
                    right,
                } => id = if z(var) <= threshold { left } else { right },
            }
        }
    }

    #[inline]
    pub fn route(&self, data: &SplitData, row: usize) -> usize {
        self.route_with(|j| data.value(row, j))
    }

    /// Terminal parameter of the leaf whose rules `z` satisfies.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let id = self.route_with(|j| z[j]);
        self.leaf_value(id).unwrap_or(0.0)
    }

    pub fn evaluate_row(&self, data: &SplitData, row: usize) -> f64 {
        let id = self.route(data, row);
        self.leaf_value(id).unwrap_or(0.0)
    }

    pub fn fit(&self, data: &SplitData) -> Vec<f64> {
        (0..data.rows()).map(|r| self.evaluate_row(data, r)).collect()
    }

    /// Rows of `data` falling in each node's cell, indexed by node id.
    pub fn cells(&self, data: &SplitData) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.nodes.len()];
        for row in 0..data.rows() {
            let mut id = 0;
            loop {
                cells[id].push(row);
                match self.nodes[id].kind {
                    NodeKind::Leaf { .. } => break,
                    NodeKind::Split {
                        var,
                        threshold,
                        left,
                        right,
                    } => {
                        id = if data.value(row, var) <= threshold { left } else { right };
                    }
                }
            }
        }
        cells
    }

    /// Rows of `data` inside the cell of node `id`.
    pub fn cell(&self, data: &SplitData, id: usize) -> Vec<usize> {
        let path = self.path_to(id);
        (0..data.rows())
            .filter(|&row| {
                path.iter().all(|&(node, go_left)| match self.nodes[node].kind {
                    NodeKind::Split { var, threshold, .. } => {
                        (data.value(row, var) <= threshold) == go_left
                    }
                    NodeKind::Leaf { .. } => true,
                })
            })
            .collect()
    }

    /// Ancestors of `id` (root first) with the branch taken toward `id`.
    pub fn path_to(&self, id: usize) -> Vec<(usize, bool)> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let go_left = matches!(self.nodes[p].kind, NodeKind::Split { left, .. } if left == cur);
            path.push((p, go_left));
            cur = p;
        }
        path.reverse();
        path
    }

    /// Turns leaf `id` into a split with two zero-valued leaves.
    pub fn grow(&mut self, id: usize, var: usize, threshold: f64) {
        let depth = self.nodes[id].depth + 1;
        let left = self.nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            self.nodes.push(Node {
                parent: Some(id),
                depth,
                kind: NodeKind::Leaf { value: 0.0 },
            });
        }
        self.nodes[id].kind = NodeKind::Split {
            var,
            threshold,
            left,
            right,
        };
        self.reindex();
    }

    /// Collapses the subtree below `id` into a single leaf.
    pub fn prune(&mut self, id: usize) {
        self.nodes[id].kind = NodeKind::Leaf { value: 0.0 };
        self.reindex();
    }

    pub fn set_rule(&mut self, id: usize, new_var: usize, new_threshold: f64) {
        if let NodeKind::Split { var, threshold, .. } = &mut self.nodes[id].kind {
            *var = new_var;
            *threshold = new_threshold;
        }
    }

    pub fn rule(&self, id: usize) -> Option<(usize, f64)> {
        match self.nodes[id].kind {
            NodeKind::Split { var, threshold, .. } => Some((var, threshold)),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Rebuilds the arena in preorder, dropping unreachable nodes.
    fn reindex(&mut self) {
        let mut out: Vec<Node> = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(0usize, None::<usize>, 0usize)];
        let mut fixups: Vec<(usize, usize)> = Vec::new();
        while let Some((old, parent, depth)) = stack.pop() {
            let new_id = out.len();
            if let Some(p) = parent {
                fixups.push((p, new_id));
            }
            let kind = self.nodes[old].kind;
            out.push(Node {
                parent,
                depth,
                kind,
            });
            if let NodeKind::Split { left, right, .. } = kind {
                stack.push((right, Some(new_id), depth + 1));
                stack.push((left, Some(new_id), depth + 1));
            }
        }
        // fixups arrive as (parent, child) in preorder; the first child seen
        // for each parent is its left child.
        let mut seen = vec![0u8; out.len()];
        for (p, child) in fixups {
            if let NodeKind::Split { left, right, .. } = &mut out[p].kind {
                if seen[p] == 0 {
                    *left = child;
                } else {
                    *right = child;
                }
            }
            seen[p] += 1;
        }
        self.nodes = out;
    }

    /// Structure prior of the subtree rooted at `id` given its cell rows.
    pub fn subtree_log_prior(
        &self,
        id: usize,
        rows: &[usize],
        data: &SplitData,
        prior: &TreePrior,
    ) -> f64 {
        let node = &self.nodes[id];
        let opts = data.split_options(rows, prior.n_min);
        let p = prior.split_prob(node.depth);
        match node.kind {
            NodeKind::Leaf { .. } => {
                if opts.splittable() {
                    (1.0 - p).ln()
                } else {
                    0.0
                }
            }
            NodeKind::Split {
                var,
                threshold,
                left,
                right,
            } => {
                if !opts.contains(var, threshold) {
                    return f64::NEG_INFINITY;
                }
                let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| data.value(r, var) <= threshold);
                let own = p.ln() + opts.log_choice_prob(var);
                if own == f64::NEG_INFINITY {
                    return own;
                }
                own + self.subtree_log_prior(left, &l_rows, data, prior)
                    + self.subtree_log_prior(right, &r_rows, data, prior)
            }
        }
    }

    /// Log-probability of the structure under the tree-generating prior.
    pub fn log_prior(&self, data: &SplitData, prior: &TreePrior) -> f64 {
        let all: Vec<usize> = (0..data.rows()).collect();
        self.subtree_log_prior(0, &all, data, prior)
    }

    pub fn is_valid(&self, data: &SplitData, prior: &TreePrior) -> bool {
        self.log_prior(data, prior) > f64::NEG_INFINITY
    }

    /// Draws a tree from the generating process with `N(0, prior_var)` leaves.
    pub fn draw_from_prior<R: Rng + ?Sized>(
        data: &SplitData,
        prior: &TreePrior,
        prior_var: f64,
        rng: &mut R,
    ) -> Tree {
        let mut tree = Tree::constant(0.0);
        let all: Vec<usize> = (0..data.rows()).collect();
        let mut frontier = vec![(0usize, all)];
        while let Some((id, rows)) = frontier.pop() {
            let opts = data.split_options(&rows, prior.n_min);
            let depth = tree.nodes[id].depth;
            if opts.splittable() && rng.random::<f64>() < prior.split_prob(depth) {
                let (var, thr) = opts.draw(rng).expect("splittable cell has options");
                let left = tree.nodes.len();
                for _ in 0..2 {
                    tree.nodes.push(Node {
                        parent: Some(id),
                        depth: depth + 1,
                        kind: NodeKind::Leaf { value: 0.0 },
                    });
                }
                tree.nodes[id].kind = NodeKind::Split {
                    var,
                    threshold: thr,
                    left,
                    right: left + 1,
                };
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&row| data.value(row, var) <= thr);
                frontier.push((left, l));
                frontier.push((left + 1, r));
            }
        }
        tree.reindex();
        let sd = prior_var.sqrt();
        for id in tree.leaves() {
            let z: f64 = StandardNormal.sample(rng);
            tree.set_leaf_value(id, sd * z);
        }
        tree
    }

    /// Structure signature (splits only, leaf values ignored) in preorder.
    pub fn structure_key(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            match n.kind {
                NodeKind::Leaf { .. } => s.push('L'),
                NodeKind::Split { var, threshold, .. } => {
                    s.push_str(&format!("S{var}:{threshold:e};"));
                }
            }
        }
        s
    }
}

/// Per-observation responses and noise variances fed to the tree moves.
/// `rows` maps each observation to its row of the modifier matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTarget {
    pub rows: Vec<usize>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightedTarget {
    pub fn new(rows: Vec<usize>, u: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if rows.len() != u.len() || u.len() != w.len() {
            return Err(Error::Dimension("target rows, u and w differ in length".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Tree(format!("noise variance must be finite and positive, got {bad}")));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Tree("target contains non-finite responses".into()));
        }
        Ok(WeightedTarget { rows, u, w })
    }

    /// Target covering every row `0..u.len()`.
    pub fn dense(u: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let rows = (0..u.len()).collect();
        WeightedTarget::new(rows, u, w)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Sufficient statistics of one leaf: precision sum and weighted response sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeafStats {
    pub precision: f64,
    pub weighted_sum: f64,
    pub count: usize,
}

/// Per-node `(sum 1/w, sum u/w)` over the target observations routed to each leaf.
/// Internal nodes keep zero statistics.
pub fn leaf_suff_stats(tree: &Tree, target: &WeightedTarget, data: &SplitData) -> Vec<LeafStats> {
    let mut stats = vec![LeafStats::default(); tree.len()];
    for i in 0..target.len() {
        let leaf = tree.route(data, target.rows[i]);
        let s = &mut stats[leaf];
        s.precision += 1.0 / target.w[i];
        s.weighted_sum += target.u[i] / target.w[i];
        s.count += 1;
    }
    stats
}

/// Log marginal likelihood of a leaf with `mu ~ N(0, prior_var)` integrated
/// out, dropping the data-only constant shared by every tree structure.
pub fn leaf_marginal_loglik(stats: &LeafStats, prior_var: f64) -> f64 {
    let prior_prec = 1.0 / prior_var;
    let post_prec = prior_prec + stats.precision;
    0.5 * (prior_prec / post_prec).ln() + 0.5 * stats.weighted_sum * stats.weighted_sum / post_prec
}

pub fn tree_marginal_loglik(
    tree: &Tree,
    target: &WeightedTarget,
    data: &SplitData,
    prior_var: f64,
) -> f64 {
    let stats = leaf_suff_stats(tree, target, data);
    tree.leaves()
        .into_iter()
        .map(|id| leaf_marginal_loglik(&stats[id], prior_var))
        .sum()
}

/// Draws every leaf from `N(S / (1/prior_var + P), 1 / (1/prior_var + P))`.
pub fn sample_terminal_params<R: Rng + ?Sized>(
    tree: &mut Tree,
    target: &WeightedTarget,
    data: &SplitData,
    prior_var: f64,
    rng: &mut R,
) {
    let stats = leaf_suff_stats(tree, target, data);
    for id in tree.leaves() {
        let post_prec = 1.0 / prior_var + stats[id].precision;
        let mean = stats[id].weighted_sum / post_prec;
        let z: f64 = StandardNormal.sample(rng);
        tree.set_leaf_value(id, mean + z / post_prec.sqrt());
    }
}

/// Sum of `S` trees sharing one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub nu: u32,
    /// Terminal-node prior variance, `1 / (2 kappa S)`.
    pub prior_var: f64,
}

impl Ensemble {
    pub fn new(size: usize, nu: u32, prior_var: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Tree("ensemble needs at least one tree".into()));
        }
        if !(prior_var > 0.0) {
            return Err(Error::Tree("terminal-node prior variance must be positive".into()));
        }
        Ok(Ensemble {
            trees: vec![Tree::constant(0.0); size],
            nu,
            prior_var,
        })
    }

    pub fn size(&self) -> usize {
        self.trees.len()
    }

    /// `g(z)`: sum of the tree evaluations.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(z)).sum()
    }

    pub fn evaluate_row(&self, data: &SplitData, row: usize) -> f64 {
        self.trees.iter().map(|t| t.evaluate_row(data, row)).sum()
    }

    pub fn fit(&self, data: &SplitData) -> Vec<f64> {
        let mut out = vec![0.0; data.rows()];
        for t in &self.trees {
            for (row, o) in out.iter_mut().enumerate() {
                *o += t.evaluate_row(data, row);
            }
        }
        out
    }

    pub fn prior(&self, alpha: f64, zeta: f64, n_min: usize) -> TreePrior {
        TreePrior {
            alpha,
            zeta,
            nu: self.nu,
            n_min,
        }
    }

    pub fn draw_from_prior<R: Rng + ?Sized>(&mut self, data: &SplitData, prior: &TreePrior, rng: &mut R) {
        for t in self.trees.iter_mut() {
            *t = Tree::draw_from_prior(data, prior, self.prior_var, rng);
        }
    }
}

/// One backfitting pass: each tree is updated against the target minus the
/// fit of all other trees, first its structure then its leaves.
pub fn bart_sweep<R: Rng + ?Sized>(
    ensemble: &mut Ensemble,
    target: &WeightedTarget,
    data: &SplitData,
    prior: &TreePrior,
    probs: &MoveProbs,
    rng: &mut R,
) -> MoveStats {
    let n = target.len();
    let mut stats = MoveStats::default();
    let mut tree_fits: Vec<Vec<f64>> = ensemble
        .trees
        .iter()
        .map(|t| target.rows.iter().map(|&r| t.evaluate_row(data, r)).collect())
        .collect();
    let mut total = vec![0.0; n];
    for f in &tree_fits {
        for (t, v) in total.iter_mut().zip(f) {
            *t += v;
        }
    }
    let mut partial = WeightedTarget {
        rows: target.rows.clone(),
        u: vec![0.0; n],
        w: target.w.clone(),
    };
    for s in 0..ensemble.trees.len() {
        for i in 0..n {
            partial.u[i] = target.u[i] - (total[i] - tree_fits[s][i]);
        }
        let (next, outcome) = propose_and_accept(
            &ensemble.trees[s],
            &partial,
            data,
            prior,
            ensemble.prior_var,
            probs,
            rng,
        );
        stats.record(outcome);
        ensemble.trees[s] = next;
        sample_terminal_params(&mut ensemble.trees[s], &partial, data, ensemble.prior_var, rng);
        for i in 0..n {
            let v = ensemble.trees[s].evaluate_row(data, partial.rows[i]);
            total[i] += v - tree_fits[s][i];
            tree_fits[s][i] = v;
        }
    }
    stats
}
