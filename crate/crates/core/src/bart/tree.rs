//! Binary regression trees with axis-aligned splits `x[var] < cut`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};

/// Pre-order serialized node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRepr {
    Split { var: usize, cut: f64 },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum NodeKind {
    Leaf { value: f64 },
    Split { var: usize, cut: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeRepr>", into = "Vec<NodeRepr>")]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn stump(value: f64) -> Self {
        Tree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                kind: NodeKind::Leaf { value },
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        matches!(self.nodes[i].kind, NodeKind::Leaf { .. })
    }

    pub fn depth(&self, i: usize) -> usize {
        self.nodes[i].depth
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    /// Internal nodes whose children are both leaves.
    pub fn nogs(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                _ => false,
            })
            .collect()
    }

    pub fn children(&self, i: usize) -> Option<(usize, usize)> {
        match self.nodes[i].kind {
            NodeKind::Split { left, right, .. } => Some((left, right)),
            _ => None,
        }
    }

    pub fn rule(&self, i: usize) -> Option<(usize, f64)> {
        match self.nodes[i].kind {
            NodeKind::Split { var, cut, .. } => Some((var, cut)),
            _ => None,
        }
    }

    pub fn leaf_value(&self, i: usize) -> Option<f64> {
        match self.nodes[i].kind {
            NodeKind::Leaf { value } => Some(value),
            _ => None,
        }
    }

    pub fn set_leaf_value(&mut self, i: usize, v: f64) {
        if let NodeKind::Leaf { value } = &mut self.nodes[i].kind {
            *value = v;
        }
    }

    /// Leaf reached by the observation whose predictor `j` is `x(j)`.
    pub fn route(&self, x: impl Fn(usize) -> f64) -> usize {
        let mut i = 0;
        while let NodeKind::Split { var, cut, left, right } = self.nodes[i].kind {
            i = if x(var) < cut { left } else { right };
        }
        i
    }

    pub fn predict(&self, x: impl Fn(usize) -> f64) -> f64 {
        let leaf = self.route(x);
        self.leaf_value(leaf).expect("routing ends at a leaf")
    }

    /// Leaf index of every row of the column-major design.
    pub fn assign(&self, columns: &[Vec<f64>], n: usize) -> Vec<usize> {
        (0..n).map(|i| self.route(|j| columns[j][i])).collect()
    }

    /// Splits leaf `i`; the children start with the leaf's value.
    pub fn grow(&mut self, i: usize, var: usize, cut: f64) {
        let value = self.leaf_value(i).expect("grow at a leaf");
        let depth = self.nodes[i].depth + 1;
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                parent: Some(i),
                depth,
                kind: NodeKind::Leaf { value },
            });
        }
        self.nodes[i].kind = NodeKind::Split {
            var,
            cut,
            left,
            right: left + 1,
        };
    }

    /// Collapses a nog node into a leaf.
    pub fn prune(&mut self, i: usize, value: f64) {
        self.nodes[i].kind = NodeKind::Leaf { value };
        let repr = self.to_preorder();
        *self = Tree::from_preorder(repr).expect("pruned tree stays well formed");
    }

    pub fn set_rule(&mut self, i: usize, new_var: usize, new_cut: f64) {
        if let NodeKind::Split { var, cut, .. } = &mut self.nodes[i].kind {
            *var = new_var;
            *cut = new_cut;
        }
    }

    pub fn to_preorder(&self) -> Vec<NodeRepr> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            match self.nodes[i].kind {
                NodeKind::Leaf { value } => out.push(NodeRepr::Leaf { value }),
                NodeKind::Split { var, cut, left, right } => {
                    out.push(NodeRepr::Split { var, cut });
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn from_preorder(repr: Vec<NodeRepr>) -> Result<Self> {
        fn build(
            repr: &[NodeRepr],
            pos: &mut usize,
            parent: Option<usize>,
            depth: usize,
            nodes: &mut Vec<Node>,
        ) -> Result<usize> {
            let r = repr
                .get(*pos)
                .ok_or_else(|| StarError::Input("truncated tree encoding".into()))?;
            *pos += 1;
            let me = nodes.len();
            nodes.push(Node {
                parent,
                depth,
                kind: NodeKind::Leaf { value: 0.0 },
            });
            match *r {
                NodeRepr::Leaf { value } => nodes[me].kind = NodeKind::Leaf { value },
                NodeRepr::Split { var, cut } => {
                    let left = build(repr, pos, Some(me), depth + 1, nodes)?;
                    let right = build(repr, pos, Some(me), depth + 1, nodes)?;
                    nodes[me].kind = NodeKind::Split { var, cut, left, right };
                }
            }
            Ok(me)
        }
        let mut nodes = Vec::with_capacity(repr.len());
        let mut pos = 0;
        build(&repr, &mut pos, None, 0, &mut nodes)?;
        if pos != repr.len() {
            return Err(StarError::Input("trailing nodes in tree encoding".into()));
        }
        Ok(Tree { nodes })
    }
}

impl TryFrom<Vec<NodeRepr>> for Tree {
    type Error = StarError;

    fn try_from(r: Vec<NodeRepr>) -> Result<Self> {
        Tree::from_preorder(r)
    }
}

impl From<Tree> for Vec<NodeRepr> {
    fn from(t: Tree) -> Self {
        t.to_preorder()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> Tree {
        let mut t = Tree::stump(0.0);
        t.grow(0, 0, 0.5);
        let (l, r) = t.children(0).unwrap();
        t.grow(r, 1, 2.0);
        t.set_leaf_value(l, -1.0);
        let (rl, rr) = t.children(r).unwrap();
        t.set_leaf_value(rl, 1.0);
        t.set_leaf_value(rr, 3.0);
        t
    }

    #[test]
    fn routing_and_prediction() {
        let t = sample_tree();
        assert_eq!(t.predict(|j| [0.2, 9.0][j]), -1.0);
        assert_eq!(t.predict(|j| [0.7, 1.0][j]), 1.0);
        assert_eq!(t.predict(|j| [0.5, 2.0][j]), 3.0);
        assert_eq!(t.leaves().len(), 3);
        assert_eq!(t.nogs().len(), 1);
        assert_eq!(t.max_depth(), 2);
    }

    #[test]
    fn preorder_round_trip_and_prune() {
        let t = sample_tree();
        let json = serde_json::to_string(&t).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let mut p = t.clone();
        let nog = p.nogs()[0];
        p.prune(nog, 2.0);
        assert_eq!(p.len(), 3);
        assert_eq!(p.predict(|j| [0.9, 0.0][j]), 2.0);
        assert!(Tree::from_preorder(vec![NodeRepr::Split { var: 0, cut: 1.0 }]).is_err());
    }
}
