//! Recursive construction of the stabilized tree.
//!
//! Each node draws pseudo samples inside its region, ranks every candidate
//! rule by Gini index, and tests the current best against the remaining
//! rivals. While the aggregated p-value stays above `alpha` the pseudo sample
//! grows, up to the per-node cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::region::{Region, Side, SplitRule};
use crate::rng::derive_seed;
use crate::sampler::{draw_batch, DrawStream, NodeContext, SamplerConfig};
use crate::scalar::{argmax, Scalar};
use crate::schema::{Dataset, SampleBatch};
use crate::splitstat::{
    aggregate_pvalue, gini_gain_distribution, prune_candidates, required_sample_size, reversal_pvalue,
    CandidateScan,
};
use crate::tree::{NodeDiagnostics, Tree, TreeNode};

/// Labels used for split statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Oracle class probabilities.
    #[default]
    Soft,
    /// One-hot vector of the oracle's most likely class.
    Hard,
}

/// How leaf class probabilities are formed from the node's pseudo sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafRule {
    /// Mean label.
    #[default]
    SoftMean,
    /// One-hot majority class of the labels' argmaxes.
    HardVote,
}

/// Where each node's pseudo sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplePolicy {
    /// Every node draws its own sample inside its region and may escalate.
    #[default]
    PerNode,
    /// The root draws `n_initial` rows once; children receive their share of
    /// the parent's sample and never draw again. With `alpha >= 1` this is
    /// greedy CART on a single pseudo sample.
    RootOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Significance level of the aggregated better-split test. Values of 1 or
    /// more disable testing: the minimal-Gini candidate is taken at once.
    pub alpha: f64,
    pub n_initial: usize,
    /// Per-node cap on pseudo samples.
    pub n_ps_max: usize,
    /// Largest multiplier on the sample size in one escalation round.
    pub growth_cap: f64,
    pub max_rounds: usize,
    /// Number of layers including the root.
    pub max_depth: usize,
    pub min_node_anchors: usize,
    /// A node becomes a leaf when its impurity, or the impurity reduction of
    /// its best candidate, is below this.
    pub purity_epsilon: f64,
    /// Step-up level for discarding rivals that are significantly worse.
    pub prune_q: f64,
    pub label_mode: LabelMode,
    pub leaf_rule: LeafRule,
    pub sample_policy: SamplePolicy,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            alpha: 0.1,
            n_initial: 1_000,
            n_ps_max: 100_000,
            growth_cap: 4.0,
            max_rounds: 20,
            max_depth: 5,
            min_node_anchors: 5,
            purity_epsilon: 1e-3,
            prune_q: 0.05,
            label_mode: LabelMode::Soft,
            leaf_rule: LeafRule::SoftMean,
            sample_policy: SamplePolicy::PerNode,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.n_initial < 2 {
            return fail(format!("n_initial must be at least 2, got {}", self.n_initial));
        }
        if self.n_initial > self.n_ps_max {
            return fail(format!(
                "n_initial ({}) exceeds n_ps_max ({})",
                self.n_initial, self.n_ps_max
            ));
        }
        if !(self.growth_cap > 1.0) {
            return fail(format!("growth_cap must exceed 1, got {}", self.growth_cap));
        }
        if self.max_rounds == 0 {
            return fail("max_rounds must be at least 1".into());
        }
        if self.max_depth == 0 {
            return fail("max_depth must be at least 1".into());
        }
        if !(self.purity_epsilon >= 0.0) {
            return fail(format!("purity_epsilon must be non-negative, got {}", self.purity_epsilon));
        }
        if !(self.prune_q > 0.0 && self.prune_q <= 1.0) {
            return fail(format!("prune_q must lie in (0, 1], got {}", self.prune_q));
        }
        self.sampler.validate()
    }

    pub fn testing_enabled(&self) -> bool {
        self.alpha < 1.0
    }
}

/// Candidate rules of a node, sorted by `(column, threshold)`, with the
/// rivals still in contention and their latest p-values against the best.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T> {
    pub rules: Vec<SplitRule<T>>,
    pub live: Vec<bool>,
    pub pvalues: Vec<Option<f64>>,
}

impl<T: Scalar> CandidateSet<T> {
    pub fn new(rules: Vec<SplitRule<T>>) -> Self {
        let n = rules.len();
        CandidateSet {
            rules,
            live: vec![true; n],
            pvalues: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn live_count(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }
}

/// Midpoints between adjacent distinct anchor values of every column,
/// restricted to thresholds strictly inside the node's interval.
pub fn enumerate_candidates<T: Scalar>(ctx: &NodeContext<'_, T>) -> CandidateSet<T> {
    let region = ctx.region();
    let mut rules = Vec::new();
    for c in 0..ctx.schema().dim() {
        let iv = region.interval(c);
        let mut vals: Vec<T> = ctx
            .anchors()
            .rows()
            .map(|r| r[c])
            .filter(|v| iv.contains(*v))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        vals.dedup();
        for w in vals.windows(2) {
            let mut thr = (w[0] + w[1]) / T::lit(2.0);
            if thr >= w[1] {
                // adjacent floats: the lower value still separates them
                thr = w[0];
            }
            if thr > iv.lower && thr < iv.upper {
                rules.push(SplitRule::new(c, thr));
            }
        }
    }
    CandidateSet::new(rules)
}

/// Result of split selection at one node.
#[derive(Debug, Clone)]
pub enum NodeDecision<T> {
    Split {
        rule: SplitRule<T>,
        diagnostics: NodeDiagnostics,
        pool: SampleBatch<T>,
    },
    Leaf {
        reason: LeafReason,
        pool: SampleBatch<T>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafReason {
    MaxDepth,
    FewAnchors,
    NoCandidates,
    Pure,
    NoGain,
    Degenerate,
}

/// Hooks into the build for auditing. All methods default to no-ops.
pub trait BuildObserver<T: Scalar>: Sync {
    /// Every pseudo-sample batch, right after it is drawn and labeled.
    fn on_draw(&self, _path: &str, _region: &Region<T>, _batch: &SampleBatch<T>) {}

    /// The final pool of a node together with the chosen rule, if any.
    fn on_node(&self, _path: &str, _region: &Region<T>, _pool: &SampleBatch<T>, _rule: Option<&SplitRule<T>>) {}
}

struct NoObserver;

impl<T: Scalar> BuildObserver<T> for NoObserver {}

fn display_path(path: &[u8]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        format!("root/{}", String::from_utf8_lossy(path))
    }
}

struct Builder<'a, T: Scalar, O: ?Sized> {
    oracle: &'a O,
    cfg: &'a BuildConfig,
    observer: &'a dyn BuildObserver<T>,
}

impl<'a, T: Scalar, O: Oracle<T> + ?Sized> Builder<'a, T, O> {
    fn draw(
        &self,
        ctx: &NodeContext<'_, T>,
        count: usize,
        stream: DrawStream,
        path: &str,
    ) -> Result<SampleBatch<T>> {
        let mut batch = draw_batch(ctx, &self.cfg.sampler, count, self.oracle, stream)?;
        if self.cfg.label_mode == LabelMode::Hard {
            batch.harden();
        }
        self.observer.on_draw(path, ctx.region(), &batch);
        Ok(batch)
    }

    fn leaf_probs(&self, pool: &SampleBatch<T>) -> Vec<T> {
        match self.cfg.leaf_rule {
            LeafRule::SoftMean => pool.mean_label(),
            LeafRule::HardVote => {
                let k = pool.y.ncols();
                let mut votes = vec![0usize; k];
                for row in pool.y.rows() {
                    votes[argmax(row)] += 1;
                }
                let winner = votes
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map_or(0, |(j, _)| j);
                (0..k).map(|j| if j == winner { T::one() } else { T::zero() }).collect()
            }
        }
    }

    /// Escalating selection loop. `inherited` is the fixed sample under the
    /// root-only policy.
    fn select(
        &self,
        ctx: &NodeContext<'_, T>,
        candidates: &mut CandidateSet<T>,
        seed: u64,
        path: &str,
        inherited: Option<SampleBatch<T>>,
    ) -> Result<NodeDecision<T>> {
        let cfg = self.cfg;
        let fixed = inherited.is_some();
        let mut pool = match inherited {
            Some(p) => p,
            None => SampleBatch::empty(ctx.schema().dim(), self.oracle.class_count()),
        };
        let mut stream = DrawStream::new(seed);
        let mut target = cfg.n_initial;
        let considered = candidates.len();

        for round in 1..=cfg.max_rounds {
            if !fixed && pool.x.nrows() < target {
                let extra = target - pool.x.nrows();
                let batch = self.draw(ctx, extra, stream, path)?;
                stream = stream.advanced(extra);
                pool.append(&batch)?;
            }
            let n = pool.x.nrows();

            if round == 1 {
                let impurity = gini_gain_distribution(&pool.mean_label())
                    .unwrap_or(T::zero())
                    .to_f64_lossy();
                if impurity < cfg.purity_epsilon {
                    return Ok(NodeDecision::Leaf {
                        reason: LeafReason::Pure,
                        pool,
                    });
                }
            }

            let scan = CandidateScan::new(&pool, &candidates.rules, &candidates.live);
            let Some(best) = scan.best() else {
                return Ok(NodeDecision::Leaf {
                    reason: LeafReason::Degenerate,
                    pool,
                });
            };
            let best_gini = scan.gini(best).expect("best is evaluable").to_f64_lossy();

            if round == 1 {
                let impurity = gini_gain_distribution(&pool.mean_label())
                    .unwrap_or(T::zero())
                    .to_f64_lossy();
                if impurity - best_gini < cfg.purity_epsilon {
                    return Ok(NodeDecision::Leaf {
                        reason: LeafReason::NoGain,
                        pool,
                    });
                }
            }

            let rivals: Vec<usize> = (0..candidates.len())
                .filter(|&i| i != best && candidates.live[i] && scan.is_evaluable(i))
                .collect();
            let comparisons = scan.compare_against(best, &rivals);
            let mut pvalues = Vec::with_capacity(comparisons.len());
            for c in &comparisons {
                let p = reversal_pvalue(
                    c.delta_hat.to_f64_lossy().min(0.0),
                    c.comparison_variance.to_f64_lossy(),
                    n,
                )?;
                candidates.pvalues[c.rival] = Some(p);
                pvalues.push(p);
            }
            candidates.pvalues[best] = None;

            let aggregate = if cfg.testing_enabled() {
                let keep = prune_candidates(&pvalues, cfg.prune_q);
                let mut kept = vec![false; comparisons.len()];
                for &j in &keep {
                    kept[j] = true;
                }
                for (j, c) in comparisons.iter().enumerate() {
                    if !kept[j] {
                        candidates.live[c.rival] = false;
                    }
                }
                let surviving: Vec<f64> = keep.iter().map(|&j| pvalues[j]).collect();
                aggregate_pvalue(&surviving)
            } else {
                aggregate_pvalue(&pvalues)
            };

            let significant = aggregate < cfg.alpha;
            let exhausted = fixed || n >= cfg.n_ps_max || round == cfg.max_rounds;
            if significant || !cfg.testing_enabled() || exhausted {
                log::debug!(
                    "{path}: column {} at {} after {round} round(s), n = {n}, p = {aggregate:.4}",
                    candidates.rules[best].column,
                    candidates.rules[best].threshold
                );
                let diagnostics = NodeDiagnostics {
                    pseudo_samples_used: n,
                    final_aggregate_pvalue: aggregate,
                    cutoff_reached: cfg.testing_enabled() && !significant,
                    candidates_considered: considered,
                    candidates_surviving: candidates.live_count(),
                    rounds: round,
                    gini_index: best_gini,
                };
                return Ok(NodeDecision::Split {
                    rule: candidates.rules[best],
                    diagnostics,
                    pool,
                });
            }

            let capped = ((n as f64) * cfg.growth_cap).ceil() as usize;
            let planned = if aggregate < 0.5 {
                required_sample_size(n, aggregate, cfg.alpha)?.min(capped)
            } else {
                capped
            };
            target = planned.min(cfg.n_ps_max).max(n + 1);
        }
        unreachable!("the final round always returns")
    }

    fn node(
        &self,
        ctx: NodeContext<'_, T>,
        has_own_anchors: bool,
        depth: usize,
        path: &mut Vec<u8>,
        inherited: Option<SampleBatch<T>>,
    ) -> Result<TreeNode<T>> {
        let label = display_path(path);
        self.node_inner(ctx, has_own_anchors, depth, path, inherited)
            .map_err(|e| match e {
                Error::Build { .. } => e,
                other => Error::Build {
                    path: label,
                    source: Box::new(other),
                },
            })
    }

    fn node_inner(
        &self,
        ctx: NodeContext<'_, T>,
        has_own_anchors: bool,
        depth: usize,
        path: &mut Vec<u8>,
        inherited: Option<SampleBatch<T>>,
    ) -> Result<TreeNode<T>> {
        let cfg = self.cfg;
        let label = display_path(path);
        let node_seed = derive_seed(cfg.seed, "node", path);

        let early = if depth >= cfg.max_depth {
            Some(LeafReason::MaxDepth)
        } else if !has_own_anchors || ctx.anchors().nrows() < cfg.min_node_anchors {
            Some(LeafReason::FewAnchors)
        } else {
            None
        };
        let mut candidates = enumerate_candidates(&ctx);
        let early = early.or(candidates.is_empty().then_some(LeafReason::NoCandidates));

        let decision = match early {
            Some(reason) => {
                let pool = match inherited {
                    Some(p) => p,
                    None => {
                        let leaf_seed = derive_seed(cfg.seed, "leaf", path);
                        self.draw(&ctx, cfg.n_initial, DrawStream::new(leaf_seed), &label)?
                    }
                };
                NodeDecision::Leaf { reason, pool }
            }
            None => self.select(&ctx, &mut candidates, node_seed, &label, inherited)?,
        };

        match decision {
            NodeDecision::Leaf { reason, pool } => {
                log::trace!("{label}: leaf ({reason:?}) from {} pseudo samples", pool.x.nrows());
                self.observer.on_node(&label, ctx.region(), &pool, None);
                Ok(TreeNode::leaf(self.leaf_probs(&pool)))
            }
            NodeDecision::Split {
                rule,
                diagnostics,
                pool,
            } => {
                self.observer.on_node(&label, ctx.region(), &pool, Some(&rule));
                let schema = ctx.schema();
                let mut children = Vec::with_capacity(2);
                for side in [Side::Left, Side::Right] {
                    let region = ctx.region().refine(&rule, side)?;
                    let keep = |x: &[T]| rule.goes_left(x) == (side == Side::Left);
                    let idx: Vec<usize> = (0..ctx.anchors().nrows())
                        .filter(|&i| keep(ctx.anchors().row(i)) && region.contains(ctx.anchors().row(i)))
                        .collect();
                    let child_pool = match cfg.sample_policy {
                        SamplePolicy::PerNode => None,
                        SamplePolicy::RootOnly => {
                            let rows: Vec<usize> = (0..pool.x.nrows()).filter(|&i| keep(pool.x.row(i))).collect();
                            Some(SampleBatch::new(pool.x.select(&rows), pool.y.select(&rows))?)
                        }
                    };
                    let (child_ctx, own) = if idx.is_empty() {
                        (
                            NodeContext::with_fallback_anchors(schema, region, ctx.anchors().clone())?,
                            false,
                        )
                    } else {
                        (NodeContext::new(schema, region, ctx.anchors().select(&idx))?, true)
                    };
                    path.push(side.tag());
                    let child = self.node(child_ctx, own, depth + 1, path, child_pool);
                    path.pop();
                    children.push(child?);
                }
                let right = children.pop().expect("two children");
                let left = children.pop().expect("two children");
                Ok(TreeNode::internal(rule, left, right, Some(diagnostics)))
            }
        }
    }
}

/// Runs the escalating split selection for one node on its own.
pub fn select_split<T: Scalar, O: Oracle<T> + ?Sized>(
    ctx: &NodeContext<'_, T>,
    candidates: &mut CandidateSet<T>,
    oracle: &O,
    cfg: &BuildConfig,
    seed: u64,
) -> Result<NodeDecision<T>> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::Contract("select_split needs at least one candidate".into()));
    }
    let b = Builder {
        oracle,
        cfg,
        observer: &NoObserver,
    };
    b.select(ctx, candidates, seed, "node", None)
}

pub fn build_tree<T: Scalar, O: Oracle<T> + ?Sized>(
    data: &Dataset<T>,
    oracle: &O,
    cfg: &BuildConfig,
) -> Result<Tree<T>> {
    build_tree_observed(data, oracle, cfg, &NoObserver)
}

/// [`build_tree`] with auditing hooks.
pub fn build_tree_observed<T: Scalar, O: Oracle<T> + ?Sized>(
    data: &Dataset<T>,
    oracle: &O,
    cfg: &BuildConfig,
    observer: &dyn BuildObserver<T>,
) -> Result<Tree<T>> {
    cfg.validate()?;
    let schema = data.schema();
    if oracle.class_count() != schema.class_count() {
        return Err(Error::Schema(format!(
            "oracle predicts {} classes, schema declares {}",
            oracle.class_count(),
            schema.class_count()
        )));
    }
    if data.is_empty() {
        return Err(Error::Data("cannot build a tree from an empty dataset".into()));
    }
    let b = Builder { oracle, cfg, observer };
    let ctx = NodeContext::new(schema, Region::root(schema), data.rows().clone())?;
    let inherited = match cfg.sample_policy {
        SamplePolicy::PerNode => None,
        SamplePolicy::RootOnly => Some(b.draw(
            &ctx,
            cfg.n_initial,
            DrawStream::new(derive_seed(cfg.seed, "root-sample", b"")),
            "root",
        )?),
    };
    let root = b.node(ctx, true, 1, &mut Vec::new(), inherited)?;
    Tree::new(schema.clone(), root)
}
