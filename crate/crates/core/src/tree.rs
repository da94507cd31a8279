//! The distilled tree, its prediction path and its export formats.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::{Side, SplitRule};
use crate::scalar::{argmax, Scalar};
use crate::schema::{check_probs, Matrix, Schema};

/// Audit trail of the split selection at one internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub pseudo_samples_used: usize,
    pub final_aggregate_pvalue: f64,
    /// The sample cutoff or round limit ended the testing before significance.
    pub cutoff_reached: bool,
    pub candidates_considered: usize,
    pub candidates_surviving: usize,
    pub rounds: usize,
    /// Gini index of the chosen rule on the final pseudo sample.
    pub gini_index: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    Internal {
        rule: SplitRule<T>,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
        diagnostics: Option<NodeDiagnostics>,
    },
    Leaf {
        class_probs: Vec<T>,
        predicted_class: usize,
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn leaf(class_probs: Vec<T>) -> Self {
        let predicted_class = argmax(&class_probs);
        TreeNode::Leaf {
            class_probs,
            predicted_class,
        }
    }

    pub fn internal(
        rule: SplitRule<T>,
        left: TreeNode<T>,
        right: TreeNode<T>,
        diagnostics: Option<NodeDiagnostics>,
    ) -> Self {
        TreeNode::Internal {
            rule,
            left: Box::new(left),
            right: Box::new(right),
            diagnostics,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Number of layers below and including this node.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                1 + left.internal_count() + right.internal_count()
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
enum NodeWire<T> {
    Internal {
        rule: SplitRule<T>,
        left: Box<NodeWire<T>>,
        right: Box<NodeWire<T>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostics: Option<NodeDiagnostics>,
    },
    Leaf {
        probs: Vec<T>,
    },
}

impl<T: Scalar> From<&TreeNode<T>> for NodeWire<T> {
    fn from(n: &TreeNode<T>) -> Self {
        match n {
            TreeNode::Internal {
                rule,
                left,
                right,
                diagnostics,
            } => NodeWire::Internal {
                rule: *rule,
                left: Box::new(left.as_ref().into()),
                right: Box::new(right.as_ref().into()),
                diagnostics: diagnostics.clone(),
            },
            TreeNode::Leaf { class_probs, .. } => NodeWire::Leaf {
                probs: class_probs.clone(),
            },
        }
    }
}

impl<T: Scalar> From<NodeWire<T>> for TreeNode<T> {
    fn from(w: NodeWire<T>) -> Self {
        match w {
            NodeWire::Internal {
                rule,
                left,
                right,
                diagnostics,
            } => TreeNode::internal(rule, (*left).into(), (*right).into(), diagnostics),
            NodeWire::Leaf { probs } => TreeNode::leaf(probs),
        }
    }
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct TreeWireOut<'a, T> {
    schema: &'a Schema,
    schema_digest: &'a str,
    root: NodeWire<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct TreeWireIn<T> {
    schema: Schema,
    schema_digest: String,
    root: NodeWire<T>,
}

/// A single classification tree bound to the schema it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    schema: Schema,
    schema_digest: String,
    root: TreeNode<T>,
}

/// Rules and sides from the root down to one leaf.
pub type LeafPath<T> = Vec<(SplitRule<T>, Side)>;

/// Result of routing one row through a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<'a, T> {
    pub class_probs: &'a [T],
    pub predicted_class: usize,
    pub path: Vec<(SplitRule<T>, Side)>,
}

impl<T: Scalar> Tree<T> {
    pub fn new(schema: Schema, root: TreeNode<T>) -> Result<Self> {
        let schema_digest = schema.digest();
        let tree = Tree {
            schema,
            schema_digest,
            root,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        let k = self.schema.class_count();
        let m = self.schema.dim();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf { class_probs, .. } => {
                    if class_probs.len() != k {
                        return Err(Error::Schema(format!(
                            "leaf carries {} probabilities for {k} classes",
                            class_probs.len()
                        )));
                    }
                    check_probs(class_probs)?;
                }
                TreeNode::Internal {
                    rule, left, right, ..
                } => {
                    if rule.column >= m {
                        return Err(Error::Schema(format!(
                            "rule column {} out of range for {m} columns",
                            rule.column
                        )));
                    }
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_digest(&self) -> &str {
        &self.schema_digest
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn class_count(&self) -> usize {
        self.schema.class_count()
    }

    pub fn internal_count(&self) -> usize {
        self.root.internal_count()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Fails unless `schema` is the one this tree was built for.
    pub fn ensure_compatible(&self, schema: &Schema) -> Result<()> {
        let found = schema.digest();
        if found != self.schema_digest {
            return Err(Error::IncompatibleTree {
                expected: self.schema_digest.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[T]) -> Result<Prediction<'_, T>> {
        self.schema.check_row(x)?;
        let mut node = &self.root;
        let mut path = Vec::new();
        loop {
            match node {
                TreeNode::Leaf {
                    class_probs,
                    predicted_class,
                } => {
                    return Ok(Prediction {
                        class_probs,
                        predicted_class: *predicted_class,
                        path,
                    })
                }
                TreeNode::Internal {
                    rule, left, right, ..
                } => {
                    if rule.goes_left(x) {
                        path.push((*rule, Side::Left));
                        node = left;
                    } else {
                        path.push((*rule, Side::Right));
                        node = right;
                    }
                }
            }
        }
    }

    /// Leaf probability vectors for every row, in order.
    pub fn predict_batch(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::with_capacity(self.class_count(), rows.nrows());
        for r in rows.rows() {
            out.push_row(self.predict(r)?.class_probs)?;
        }
        Ok(out)
    }

    /// Every leaf with the rule/side conjunction that reaches it.
    pub fn leaves(&self) -> Vec<(LeafPath<T>, &[T])> {
        fn walk<'a, T: Scalar>(
            node: &'a TreeNode<T>,
            path: &mut Vec<(SplitRule<T>, Side)>,
            out: &mut Vec<(LeafPath<T>, &'a [T])>,
        ) {
            match node {
                TreeNode::Leaf { class_probs, .. } => out.push((path.clone(), class_probs)),
                TreeNode::Internal {
                    rule, left, right, ..
                } => {
                    path.push((*rule, Side::Left));
                    walk(left, path, out);
                    path.pop();
                    path.push((*rule, Side::Right));
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = TreeWireOut {
            schema: &self.schema,
            schema_digest: &self.schema_digest,
            root: (&self.root).into(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    /// Parses an export and verifies the embedded digest against the schema.
    pub fn from_json(s: &str) -> Result<Self> {
        let wire: TreeWireIn<T> = serde_json::from_str(s)?;
        let found = wire.schema.digest();
        if found != wire.schema_digest {
            return Err(Error::IncompatibleTree {
                expected: wire.schema_digest,
                found,
            });
        }
        let tree = Tree {
            schema: wire.schema,
            schema_digest: wire.schema_digest,
            root: wire.root.into(),
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Graphviz rendering with column names on internal nodes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph stabletree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        let mut next_id = 0usize;
        self.dot_node(&self.root, &mut next_id, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, node: &TreeNode<T>, next_id: &mut usize, out: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        match node {
            TreeNode::Leaf {
                class_probs,
                predicted_class,
            } => {
                let probs: Vec<String> = class_probs
                    .iter()
                    .map(|p| format!("{:.3}", p.to_f64_lossy()))
                    .collect();
                let _ = writeln!(
                    out,
                    "  n{id} [label=\"{}\\n[{}]\", style=rounded];",
                    escape(&self.schema.class_labels()[*predicted_class]),
                    probs.join(", ")
                );
            }
            TreeNode::Internal {
                rule, left, right, ..
            } => {
                let name = &self.schema.columns()[rule.column].name;
                let _ = writeln!(
                    out,
                    "  n{id} [label=\"{} <= {}\"];",
                    escape(name),
                    rule.threshold
                );
                let l = self.dot_node(left, next_id, out);
                let r = self.dot_node(right, next_id, out);
                let _ = writeln!(out, "  n{id} -> n{l} [label=\"yes\"];");
                let _ = writeln!(out, "  n{id} -> n{r} [label=\"no\"];");
            }
        }
        id
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth2() -> Tree<f64> {
        let schema = Schema::continuous(2, 2).unwrap();
        let root = TreeNode::internal(
            SplitRule::new(0, 0.5),
            TreeNode::internal(
                SplitRule::new(1, 0.25),
                TreeNode::leaf(vec![0.9, 0.1]),
                TreeNode::leaf(vec![0.6, 0.4]),
                None,
            ),
            TreeNode::leaf(vec![0.2, 0.8]),
            Some(NodeDiagnostics {
                pseudo_samples_used: 4000,
                final_aggregate_pvalue: 0.01,
                cutoff_reached: false,
                candidates_considered: 12,
                candidates_surviving: 2,
                rounds: 2,
                gini_index: 0.3,
            }),
        );
        Tree::new(schema, root).unwrap()
    }

    #[test]
    fn single_leaf_prediction_has_empty_path() {
        let t = Tree::new(Schema::continuous(3, 2).unwrap(), TreeNode::leaf(vec![0.3, 0.7])).unwrap();
        let p = t.predict(&[9.0, -1.0, 0.0]).unwrap();
        assert_eq!(p.class_probs, &[0.3, 0.7]);
        assert_eq!(p.predicted_class, 1);
        assert!(p.path.is_empty());
    }

    #[test]
    fn depth_two_lookup() {
        let t = depth2();
        let p = t.predict(&[0.1, 0.1]).unwrap();
        assert_eq!(p.class_probs, &[0.9, 0.1]);
        assert_eq!(p.path.len(), 2);
        assert_eq!(t.predict(&[0.5, 0.3]).unwrap().class_probs, &[0.6, 0.4]);
        assert_eq!(t.predict(&[0.51, 0.0]).unwrap().class_probs, &[0.2, 0.8]);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.internal_count(), 2);
    }

    #[test]
    fn tied_leaf_predicts_lowest_class() {
        let t = Tree::new(Schema::continuous(1, 3).unwrap(), TreeNode::leaf(vec![0.4, 0.4, 0.2])).unwrap();
        assert_eq!(t.predict(&[0.0]).unwrap().predicted_class, 0);
    }

    #[test]
    fn json_shape_matches_export_contract() {
        let t = depth2();
        let json = t.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["root"]["rule"]["column"], 0);
        assert_eq!(v["root"]["rule"]["threshold"], 0.5);
        assert_eq!(v["root"]["right"]["probs"][1], 0.8);
        assert_eq!(v["schema"]["columns"][0]["name"], "x1");
        assert_eq!(v["root"]["diagnostics"]["pseudo_samples_used"], 4000);
        let back = Tree::<f64>::from_json(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn tampered_digest_is_rejected() {
        let json = depth2().to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["schema"]["columns"][0]["name"] = "renamed".into();
        let err = Tree::<f64>::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleTree { .. }));
        let other = Schema::continuous(3, 2).unwrap();
        assert!(depth2().ensure_compatible(&other).is_err());
    }

    #[test]
    fn leaf_probs_must_sum_to_one() {
        let bad = Tree::new(Schema::continuous(1, 2).unwrap(), TreeNode::leaf(vec![0.5, 0.6]));
        assert!(bad.is_err());
    }

    #[test]
    fn dot_export_names_columns() {
        let dot = depth2().to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("x1 <= 0.5"));
        assert!(dot.contains("n0 -> n1"));
    }
}
