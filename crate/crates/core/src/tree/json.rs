use serde::{Deserialize, Serialize};

use super::{Node, NodeKind, Tree};

/// Flat node-list form of a tree: internal nodes carry `split_var`,
/// `threshold`, `left` and `right`; leaves carry `leaf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_var: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<f64>,
}

impl From<Tree> for Vec<NodeRecord> {
    fn from(tree: Tree) -> Self {
        tree.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| match n.kind {
                NodeKind::Leaf { value } => NodeRecord {
                    id,
                    parent: n.parent,
                    split_var: None,
                    threshold: None,
                    left: None,
                    right: None,
                    leaf: Some(value),
                },
                NodeKind::Split {
                    var,
                    threshold,
                    left,
                    right,
                } => NodeRecord {
                    id,
                    parent: n.parent,
                    split_var: Some(var),
                    threshold: Some(threshold),
                    left: Some(left),
                    right: Some(right),
                    leaf: None,
                },
            })
            .collect()
    }
}

impl TryFrom<Vec<NodeRecord>> for Tree {
    type Error = String;

    fn try_from(records: Vec<NodeRecord>) -> Result<Self, Self::Error> {
        let n = records.len();
        if n == 0 {
            return Err("empty node list".into());
        }
        let mut slots: Vec<Option<&NodeRecord>> = vec![None; n];
        for r in &records {
            if r.id >= n || slots[r.id].is_some() {
                return Err(format!("node id {} is out of range or repeated", r.id));
            }
            slots[r.id] = Some(r);
        }
        let mut nodes = Vec::with_capacity(n);
        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        for id in 0..n {
            let r = slots[id].expect("every id filled");
            let kind = match (r.split_var, r.threshold, r.left, r.right, r.leaf) {
                (None, None, None, None, Some(value)) => NodeKind::Leaf { value },
                (Some(var), Some(threshold), Some(left), Some(right), None) => {
                    if left >= n || right >= n || left <= id || right <= id || left == right {
                        return Err(format!("node {id} has invalid children"));
                    }
                    NodeKind::Split {
                        var,
                        threshold,
                        left,
                        right,
                    }
                }
                _ => return Err(format!("node {id} is neither a leaf nor a split")),
            };
            nodes.push(Node {
                parent: r.parent,
                depth: 0,
                kind,
            });
        }
        if nodes[0].parent.is_some() {
            return Err("root must not have a parent".into());
        }
        let mut stack = vec![0usize];
        let mut seen = 0;
        while let Some(id) = stack.pop() {
            seen += 1;
            if let NodeKind::Split { left, right, .. } = nodes[id].kind {
                for c in [left, right] {
                    if depth[c] != usize::MAX || nodes[c].parent != Some(id) {
                        return Err(format!("node {c} has inconsistent parent links"));
                    }
                    depth[c] = depth[id] + 1;
                    stack.push(c);
                }
            }
        }
        if seen != n {
            return Err("node list contains unreachable nodes".into());
        }
        for (node, d) in nodes.iter_mut().zip(depth) {
            node.depth = d;
        }
        let mut tree = Tree { nodes };
        tree.reindex();
        Ok(tree)
    }
}
