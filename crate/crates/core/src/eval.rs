//! Agreement with the oracle, predictive accuracy and structural stability.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{build_tree, BuildConfig};
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::scalar::{argmax, Scalar};
use crate::schema::{Dataset, Matrix};
use crate::tree::{Tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicReport {
    /// Mean over rows of `Σⱼ |p_tree,j − p_oracle,j|`.
    pub l1_prob_diff: f64,
    /// Share of rows whose most likely class agrees.
    pub class_agreement: f64,
    pub n_test: usize,
}

pub fn mimic_accuracy<T: Scalar, O: Oracle<T> + ?Sized>(
    tree: &Tree<T>,
    oracle: &O,
    rows: &Matrix<T>,
) -> Result<MimicReport> {
    if rows.is_empty() {
        return Err(Error::Data("no test rows".into()));
    }
    if rows.ncols() != tree.schema().dim() {
        return Err(Error::Schema(format!(
            "test rows have {} columns, the tree expects {}",
            rows.ncols(),
            tree.schema().dim()
        )));
    }
    if oracle.class_count() != tree.class_count() {
        return Err(Error::Schema(format!(
            "oracle predicts {} classes, the tree {}",
            oracle.class_count(),
            tree.class_count()
        )));
    }
    let p_tree = tree.predict_batch(rows)?;
    let p_oracle = oracle.predict_proba(rows)?;
    let mut l1 = 0.0;
    let mut agree = 0usize;
    for (a, b) in p_tree.rows().zip(p_oracle.rows()) {
        l1 += a
            .iter()
            .zip(b)
            .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
            .sum::<f64>();
        if argmax(a) == argmax(b) {
            agree += 1;
        }
    }
    let n = rows.nrows();
    Ok(MimicReport {
        l1_prob_diff: l1 / n as f64,
        class_agreement: agree as f64 / n as f64,
        n_test: n,
    })
}

/// Share of labeled rows whose predicted class equals the label.
pub fn predictive_accuracy<T: Scalar, M: Oracle<T> + ?Sized>(model: &M, data: &Dataset<T>) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data("predictive accuracy needs labeled rows".into()))?;
    if data.is_empty() {
        return Err(Error::Data("no test rows".into()));
    }
    if model.class_count() != data.schema().class_count() {
        return Err(Error::Schema(format!(
            "model predicts {} classes, data has {}",
            model.class_count(),
            data.schema().class_count()
        )));
    }
    let p = model.predict_proba(data.rows())?;
    let hits = p.rows().zip(labels).filter(|(r, l)| argmax(r) == **l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Rounding grid for thresholds when comparing tree structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Tolerance {
    /// The same step for every column.
    Absolute(f64),
    /// This fraction of each column's range in the reference data.
    RelativeToRange(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::RelativeToRange(1e-3)
    }
}

impl Tolerance {
    /// Per-column rounding step. Columns with zero range fall back to the
    /// relative fraction itself.
    pub fn resolve<T: Scalar>(&self, data: &Matrix<T>) -> Result<Vec<f64>> {
        let steps = match *self {
            Tolerance::Absolute(t) => vec![t; data.ncols()],
            Tolerance::RelativeToRange(f) => (0..data.ncols())
                .map(|c| {
                    let (lo, hi) = data.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        let v = r[c].to_f64_lossy();
                        (lo.min(v), hi.max(v))
                    });
                    let range = hi - lo;
                    if range > 0.0 && range.is_finite() {
                        f * range
                    } else {
                        f
                    }
                })
                .collect(),
        };
        if steps.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(format!("tolerance must be positive, got {self:?}")));
        }
        Ok(steps)
    }
}

/// Canonical text of the top `depth` layers.
///
/// Each internal node within the window is written as
/// `c<column>@<round(threshold / step)>` followed by its two children in
/// brackets; leaves are `L`; nodes at the window's last layer are written
/// without children. `steps` gives the rounding step per column.
pub fn structure_key<T: Scalar>(tree: &Tree<T>, depth: usize, steps: &[f64]) -> String {
    let mut out = String::new();
    key_into(tree.root(), depth.max(1), steps, &mut out);
    out
}

/// [`structure_key`] with one step for every column.
pub fn structure_key_uniform<T: Scalar>(tree: &Tree<T>, depth: usize, tolerance: f64) -> String {
    structure_key(tree, depth, &vec![tolerance; tree.schema().dim()])
}

fn key_into<T: Scalar>(node: &TreeNode<T>, remaining: usize, steps: &[f64], out: &mut String) {
    match node {
        TreeNode::Leaf { .. } => out.push('L'),
        TreeNode::Internal { rule, left, right, .. } => {
            let step = steps.get(rule.column).copied().unwrap_or(1e-3);
            let cell = (rule.threshold.to_f64_lossy() / step).round() as i64;
            let _ = write!(out, "c{}@{}", rule.column, cell);
            if remaining > 1 {
                out.push('(');
                key_into(left, remaining - 1, steps, out);
                out.push(',');
                key_into(right, remaining - 1, steps, out);
                out.push(')');
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthHistogram {
    pub depth: usize,
    /// Structure key → number of replicates sharing it.
    pub counts: BTreeMap<String, usize>,
}

impl DepthHistogram {
    pub fn unique(&self) -> usize {
        self.counts.len()
    }

    /// Most frequent key and its count; ties go to the smallest key.
    pub fn modal(&self) -> Option<(&str, usize)> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, c)| (k.as_str(), *c))
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// One key per requested depth; empty when the build failed.
    pub keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub replicates: usize,
    pub threshold_tolerance: Vec<f64>,
    pub depths: Vec<usize>,
    pub histograms: Vec<DepthHistogram>,
    pub records: Vec<ReplicateRecord>,
}

impl StabilityReport {
    /// Histograms over already-built trees, in the given order.
    pub fn from_trees<T: Scalar>(trees: &[(u64, Result<Tree<T>>)], depths: &[usize], steps: &[f64]) -> Self {
        let records: Vec<ReplicateRecord> = trees
            .iter()
            .enumerate()
            .map(|(i, (seed, t))| match t {
                Ok(t) => ReplicateRecord {
                    replicate: i + 1,
                    seed: *seed,
                    keys: depths.iter().map(|&d| structure_key(t, d, steps)).collect(),
                    error: None,
                },
                Err(e) => ReplicateRecord {
                    replicate: i + 1,
                    seed: *seed,
                    keys: Vec::new(),
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let histograms = depths
            .iter()
            .enumerate()
            .map(|(j, &depth)| {
                let mut counts = BTreeMap::new();
                for r in records.iter().filter(|r| r.error.is_none()) {
                    *counts.entry(r.keys[j].clone()).or_insert(0) += 1;
                }
                DepthHistogram { depth, counts }
            })
            .collect();
        StabilityReport {
            replicates: trees.len(),
            threshold_tolerance: steps.to_vec(),
            depths: depths.to_vec(),
            histograms,
            records,
        }
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn histogram(&self, depth: usize) -> Option<&DepthHistogram> {
        self.histograms.iter().find(|h| h.depth == depth)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary table, one line per depth.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "replicates: {} ({} failed)",
            self.replicates,
            self.failures()
        );
        let _ = writeln!(s, "{:>5}  {:>6}  {:>5}  {:>10}", "depth", "unique", "modal", "modal_share");
        let ok = (self.replicates - self.failures()).max(1);
        for h in &self.histograms {
            let modal = h.modal().map_or(0, |m| m.1);
            let _ = writeln!(
                s,
                "{:>5}  {:>6}  {:>5}  {:>10.3}",
                h.depth,
                h.unique(),
                modal,
                modal as f64 / ok as f64
            );
        }
        s
    }

    /// `replicate,seed,depth,key` rows for external plotting.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replicate", "seed", "depth", "key"])?;
        for r in &self.records {
            if r.error.is_some() {
                continue;
            }
            for (d, k) in self.depths.iter().zip(&r.keys) {
                out.write_record([r.replicate.to_string(), r.seed.to_string(), d.to_string(), k.clone()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds `replicates` trees from one oracle with seeds `cfg.seed + 1 ..=
/// cfg.seed + replicates` and tallies their structures per depth. Failed
/// builds are recorded, not fatal.
pub fn stability_experiment<T: Scalar, O: Oracle<T> + ?Sized>(
    data: &Dataset<T>,
    oracle: &O,
    cfg: &BuildConfig,
    replicates: usize,
    depths: &[usize],
    tolerance: Tolerance,
) -> Result<StabilityReport> {
    if replicates < 2 {
        return Err(Error::Config(format!("replicates must be at least 2, got {replicates}")));
    }
    if depths.is_empty() || depths.contains(&0) {
        return Err(Error::Config("depths must be a non-empty list of positive integers".into()));
    }
    cfg.validate()?;
    let steps = tolerance.resolve(data.rows())?;
    let trees: Vec<(u64, Result<Tree<T>>)> = (1..=replicates as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r);
            let c = BuildConfig { seed, ..cfg.clone() };
            (seed, build_tree(data, oracle, &c))
        })
        .collect();
    Ok(StabilityReport::from_trees(&trees, depths, &steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ConstantOracle;
    use crate::region::SplitRule;
    use crate::schema::Schema;

    fn stump(col: usize, thr: f64) -> Tree<f64> {
        Tree::new(
            Schema::continuous(2, 2).unwrap(),
            TreeNode::internal(
                SplitRule::new(col, thr),
                TreeNode::leaf(vec![0.8, 0.2]),
                TreeNode::internal(
                    SplitRule::new(1, 0.25),
                    TreeNode::leaf(vec![0.4, 0.6]),
                    TreeNode::leaf(vec![0.1, 0.9]),
                    None,
                ),
                None,
            ),
        )
        .unwrap()
    }

    #[test]
    fn keys_round_and_truncate() {
        let a = structure_key_uniform(&stump(0, 0.5), 3, 1e-3);
        let b = structure_key_uniform(&stump(0, 0.5004), 3, 1e-3);
        let c = structure_key_uniform(&stump(1, 0.5), 3, 1e-3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, "c0@500(L,c1@250(L,L))");
        assert_eq!(structure_key_uniform(&stump(0, 0.5), 1, 1e-3), "c0@500");
        assert_eq!(structure_key_uniform(&stump(0, 0.5), 2, 1e-3), "c0@500(L,c1@250)");
        let t = stump(0, 0.5);
        let back = Tree::<f64>::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(structure_key_uniform(&back, 3, 1e-3), a);
    }

    #[test]
    fn mimic_extremes() {
        let schema = Schema::continuous(2, 2).unwrap();
        let rows = Matrix::from_rows(2, &[[0.1, 0.2], [0.9, 0.4]]).unwrap();
        let oracle = ConstantOracle::new(vec![0.3, 0.7]).unwrap();
        let same = Tree::new(schema.clone(), TreeNode::leaf(vec![0.3, 0.7])).unwrap();
        let r = mimic_accuracy(&same, &oracle, &rows).unwrap();
        assert_eq!(r.class_agreement, 1.0);
        assert_eq!(r.l1_prob_diff, 0.0);
        assert_eq!(r.n_test, 2);
        let opposite = Tree::new(schema, TreeNode::leaf(vec![0.9, 0.1])).unwrap();
        let r = mimic_accuracy(&opposite, &oracle, &rows).unwrap();
        assert_eq!(r.class_agreement, 0.0);
        assert!((r.l1_prob_diff - 1.2).abs() < 1e-12);
        assert!(mimic_accuracy(&same, &oracle, &Matrix::new(2)).is_err());
    }

    #[test]
    fn predictive_accuracy_cases() {
        let schema = Schema::continuous(1, 2).unwrap();
        let rows = Matrix::from_rows(1, &[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let data = Dataset::new(schema.clone(), rows, Some(vec![0, 1, 0, 1])).unwrap();
        let perfect = Tree::new(
            schema.clone(),
            TreeNode::internal(
                SplitRule::new(0, 0.5),
                TreeNode::leaf(vec![1.0, 0.0]),
                TreeNode::internal(
                    SplitRule::new(0, 1.5),
                    TreeNode::leaf(vec![0.0, 1.0]),
                    TreeNode::internal(
                        SplitRule::new(0, 2.5),
                        TreeNode::leaf(vec![1.0, 0.0]),
                        TreeNode::leaf(vec![0.0, 1.0]),
                        None,
                    ),
                    None,
                ),
                None,
            ),
        )
        .unwrap();
        assert_eq!(predictive_accuracy(&perfect, &data).unwrap(), 1.0);
        let constant = ConstantOracle::new(vec![0.6, 0.4]).unwrap();
        assert_eq!(predictive_accuracy(&constant, &data).unwrap(), 0.5);
        let unlabeled = Dataset::new(schema, data.rows().clone(), None).unwrap();
        assert!(predictive_accuracy(&constant, &unlabeled).is_err());
    }

    #[test]
    fn tolerance_resolution() {
        let m = Matrix::from_rows(2, &[[0.0, 5.0], [2.0, 5.0]]).unwrap();
        assert_eq!(Tolerance::RelativeToRange(1e-3).resolve(&m).unwrap(), vec![2e-3, 1e-3]);
        assert_eq!(Tolerance::Absolute(0.1).resolve(&m).unwrap(), vec![0.1, 0.1]);
        assert!(Tolerance::Absolute(0.0).resolve(&m).is_err());
    }

    #[test]
    fn identical_trees_share_one_structure() {
        let trees = vec![(1, Ok(stump(0, 0.5))), (1, Ok(stump(0, 0.5)))];
        let r = StabilityReport::from_trees(&trees, &[1, 2, 3], &[1e-3, 1e-3]);
        assert!(r.histograms.iter().all(|h| h.unique() == 1 && h.total() == 2));
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
        assert!(r.to_text().contains("modal_share"));
    }

    #[test]
    fn constant_oracle_is_perfectly_stable() {
        let data = crate::synth::sample_synthetic::<f64>(100, 2).unwrap();
        let oracle = ConstantOracle::new(vec![0.5, 0.5]).unwrap();
        let cfg = BuildConfig {
            n_initial: 200,
            ..Default::default()
        };
        let r = stability_experiment(&data, &oracle, &cfg, 3, &[1, 2, 3], Tolerance::default()).unwrap();
        for h in &r.histograms {
            assert_eq!(h.unique(), 1);
            assert_eq!(h.modal().unwrap(), ("L", 3));
        }
        assert!(stability_experiment(&data, &oracle, &cfg, 1, &[1], Tolerance::default()).is_err());
    }
}
