use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tree_marginal_loglik, SplitData, Tree, TreePrior, WeightedTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Grow,
    Prune,
    Change,
    Swap,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Grow, Move::Prune, Move::Change, Move::Swap];

    fn index(self) -> usize {
        match self {
            Move::Grow => 0,
            Move::Prune => 1,
            Move::Change => 2,
            Move::Swap => 3,
        }
    }
}

/// Selection probabilities of the four structure moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            grow: 0.25,
            prune: 0.25,
            change: 0.40,
            swap: 0.10,
        }
    }
}

impl MoveProbs {
    pub fn prob(&self, mv: Move) -> f64 {
        match mv {
            Move::Grow => self.grow,
            Move::Prune => self.prune,
            Move::Change => self.change,
            Move::Swap => self.swap,
        }
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Move {
        let total = self.grow + self.prune + self.change + self.swap;
        let mut u = rng.random::<f64>() * total;
        for mv in Move::ALL {
            let p = self.prob(mv);
            if u < p {
                return mv;
            }
            u -= p;
        }
        Move::Change
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub kind: Move,
    /// False when no admissible proposal of this kind existed.
    pub proposed: bool,
    pub accepted: bool,
}

/// Proposal and acceptance counts per move kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl MoveStats {
    pub fn record(&mut self, outcome: MoveOutcome) {
        let i = outcome.kind.index();
        self.proposed[i] += 1;
        if outcome.accepted {
            self.accepted[i] += 1;
        }
    }

    pub fn merge(&mut self, other: &MoveStats) {
        for i in 0..4 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
    }

    pub fn acceptance_rate(&self, mv: Move) -> f64 {
        let i = mv.index();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }

    pub fn overall_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        let a: u64 = self.accepted.iter().sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

struct Proposal {
    tree: Tree,
    /// Node whose subtree prior changes.
    node: usize,
    log_q_forward: f64,
    log_q_reverse: f64,
}

fn growable(tree: &Tree, cells: &[Vec<usize>], data: &SplitData, n_min: usize) -> Vec<usize> {
    tree.leaves()
        .into_iter()
        .filter(|&id| data.split_options(&cells[id], n_min).splittable())
        .collect()
}

fn propose_grow<R: Rng + ?Sized>(
    tree: &Tree,
    cells: &[Vec<usize>],
    data: &SplitData,
    prior: &TreePrior,
    probs: &MoveProbs,
    rng: &mut R,
) -> Option<Proposal> {
    let candidates = growable(tree, cells, data, prior.n_min);
    if candidates.is_empty() {
        return None;
    }
    let leaf = candidates[rng.random_range(0..candidates.len())];
    let opts = data.split_options(&cells[leaf], prior.n_min);
    let (var, thr) = opts.draw(rng)?;
    let mut next = tree.clone();
    next.grow(leaf, var, thr);
    let log_q_forward =
        probs.grow.ln() - (candidates.len() as f64).ln() + opts.log_choice_prob(var);
    let log_q_reverse = probs.prune.ln() - (next.nog_nodes().len() as f64).ln();
    Some(Proposal {
        tree: next,
        node: leaf,
        log_q_forward,
        log_q_reverse,
    })
}

fn propose_prune<R: Rng + ?Sized>(
    tree: &Tree,
    cells: &[Vec<usize>],
    data: &SplitData,
    prior: &TreePrior,
    probs: &MoveProbs,
    rng: &mut R,
) -> Option<Proposal> {
    let nogs = tree.nog_nodes();
    if nogs.is_empty() {
        return None;
    }
    let node = nogs[rng.random_range(0..nogs.len())];
    let (var, _) = tree.rule(node)?;
    let mut next = tree.clone();
    next.prune(node);
    let next_cells = next.cells(data);
    let n_growable = growable(&next, &next_cells, data, prior.n_min).len();
    let opts = data.split_options(&cells[node], prior.n_min);
    let log_q_forward = probs.prune.ln() - (nogs.len() as f64).ln();
    let log_q_reverse =
        probs.grow.ln() - (n_growable as f64).ln() + opts.log_choice_prob(var);
    Some(Proposal {
        tree: next,
        node,
        log_q_forward,
        log_q_reverse,
    })
}

fn propose_change<R: Rng + ?Sized>(
    tree: &Tree,
    cells: &[Vec<usize>],
    data: &SplitData,
    prior: &TreePrior,
    rng: &mut R,
) -> Option<Proposal> {
    let internal = tree.internal_nodes();
    if internal.is_empty() {
        return None;
    }
    let node = internal[rng.random_range(0..internal.len())];
    let (old_var, _) = tree.rule(node)?;
    let opts = data.split_options(&cells[node], prior.n_min);
    let (var, thr) = opts.draw(rng)?;
    let mut next = tree.clone();
    next.set_rule(node, var, thr);
    Some(Proposal {
        tree: next,
        node,
        log_q_forward: opts.log_choice_prob(var),
        log_q_reverse: opts.log_choice_prob(old_var),
    })
}

fn propose_swap<R: Rng + ?Sized>(tree: &Tree, rng: &mut R) -> Option<Proposal> {
    let pairs: Vec<(usize, usize)> = tree
        .internal_nodes()
        .into_iter()
        .filter_map(|id| tree.node(id).parent.map(|p| (p, id)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let (parent, child) = pairs[rng.random_range(0..pairs.len())];
    let (pv, pt) = tree.rule(parent)?;
    let (cv, ct) = tree.rule(child)?;
    let mut next = tree.clone();
    next.set_rule(parent, cv, ct);
    next.set_rule(child, pv, pt);
    Some(Proposal {
        tree: next,
        node: parent,
        log_q_forward: 0.0,
        log_q_reverse: 0.0,
    })
}

/// One Metropolis–Hastings structure step. Returns the new (or unchanged)
/// tree; leaf values of a changed tree are placeholders until the next
/// terminal-node draw.
pub fn propose_and_accept<R: Rng + ?Sized>(
    tree: &Tree,
    target: &WeightedTarget,
    data: &SplitData,
    prior: &TreePrior,
    prior_var: f64,
    probs: &MoveProbs,
    rng: &mut R,
) -> (Tree, MoveOutcome) {
    let kind = probs.pick(rng);
    let cells = tree.cells(data);
    let proposal = match kind {
        Move::Grow => propose_grow(tree, &cells, data, prior, probs, rng),
        Move::Prune => propose_prune(tree, &cells, data, prior, probs, rng),
        Move::Change => propose_change(tree, &cells, data, prior, rng),
        Move::Swap => propose_swap(tree, rng),
    };
    let Some(p) = proposal else {
        return (
            tree.clone(),
            MoveOutcome {
                kind,
                proposed: false,
                accepted: false,
            },
        );
    };
    let rows = &cells[p.node];
    let new_prior = p.tree.subtree_log_prior(p.node, rows, data, prior);
    let accepted = if new_prior == f64::NEG_INFINITY {
        false
    } else {
        let old_prior = tree.subtree_log_prior(p.node, rows, data, prior);
        let old_lik = tree_marginal_loglik(tree, target, data, prior_var);
        let new_lik = tree_marginal_loglik(&p.tree, target, data, prior_var);
        let log_ratio =
            new_lik - old_lik + new_prior - old_prior + p.log_q_reverse - p.log_q_forward;
        rng.random::<f64>().ln() < log_ratio
    };
    let outcome = MoveOutcome {
        kind,
        proposed: true,
        accepted,
    };
    if accepted {
        (p.tree, outcome)
    } else {
        (tree.clone(), outcome)
    }
}
