//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Set `ACCEPTANCE_ONLY=3,7` to run a subset.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stabletree::eval::{mimic_accuracy, stability_experiment, structure_key_uniform, Tolerance};
use stabletree::splitstat::{
    better_split_pvalue, compare_splits, compare_splits_with, required_sample_size, split_gini_index, GradientForm,
};
use stabletree::synth::sample_covariates;
use stabletree::{
    build_tree_observed, BuildConfig, BuildObserver, Matrix, Region, SampleBatch, SamplePolicy, Schema, SoftLabeledSample,
    SplitRule, Tree,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

// 1 ---------------------------------------------------------------------

/// `ĝ = 1 − Σ_q (1/(n·n_q)) Σ_{i,i'∈q} ⟨Yᵢ, Yᵢ'⟩`, a double sum over pairs.
fn gini_double_sum(samples: &[SoftLabeledSample], rule: &SplitRule) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for side in [true, false] {
        let members: Vec<&SoftLabeledSample> = samples.iter().filter(|s| rule.goes_left(&s.x) == side).collect();
        if members.is_empty() {
            continue;
        }
        let mut pair = 0.0;
        for a in &members {
            for b in &members {
                pair += a.y.iter().zip(&b.y).map(|(u, v)| u * v).sum::<f64>();
            }
        }
        total += pair / (n * members.len() as f64);
    }
    1.0 - total
}

fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let n = rng.random_range(1..=200);
        let k = rng.random_range(2..=4);
        let m = rng.random_range(1..=3);
        let samples: Vec<SoftLabeledSample> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..m).map(|_| rng.random()).collect();
                SoftLabeledSample::new(x, random_probs(&mut rng, k)).unwrap()
            })
            .collect();
        let rule = SplitRule::new(rng.random_range(0..m), rng.random());
        let got = split_gini_index(&samples, &rule).unwrap().gini_index;
        worst = worst.max((got - gini_double_sum(&samples, &rule)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 1.0,
        format!("max |error| = {worst:.2e} over 1000 fixtures in {secs:.2} s (limits 1e-12, 1 s)"),
    )
}

// 2 ---------------------------------------------------------------------

/// Two-class law on `[0,1]²` with `P(Y=1|x) = 0.2 + 0.5·x₀ + 0.2·x₁` and
/// one-hot labels.
fn labeled_draw(rng: &mut ChaCha8Rng, n: usize, p: impl Fn(&[f64]) -> f64) -> SampleBatch {
    let mut x = Matrix::with_capacity(2, n);
    let mut y = Matrix::with_capacity(2, n);
    for _ in 0..n {
        let row = [rng.random::<f64>(), rng.random::<f64>()];
        let one = rng.random::<f64>() < p(&row);
        x.push_row(&row).unwrap();
        y.push_row(if one { &[0.0, 1.0] } else { &[1.0, 0.0] }).unwrap();
    }
    SampleBatch::new(x, y).unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let law = |x: &[f64]| 0.2 + 0.5 * x[0] + 0.2 * x[1];
    let g1 = SplitRule::new(0, 0.5);
    let g2 = SplitRule::new(1, 0.4);
    let n = 2_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut deltas = Vec::with_capacity(2_000);
    let mut plain = Vec::new();
    let mut pi = Vec::new();
    for _ in 0..2_000 {
        let b = labeled_draw(&mut rng, n, law);
        let s = compare_splits(&b, &g1, &g2).unwrap();
        deltas.push(s.delta_hat());
        if plain.len() < 200 {
            plain.push(s.comparison_variance / n as f64);
            pi.push(compare_splits_with(&b, &g1, &g2, GradientForm::PiWeighted).unwrap().comparison_variance / n as f64);
        }
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let empirical = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64;
    let ratio_plain = median(plain) / empirical;
    let ratio_pi = median(pi) / empirical;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (ratio_plain - 1.0).abs() <= 0.2 && secs < 60.0,
        format!(
            "plug-in/empirical variance = {ratio_plain:.3} (π-weighted gradient, for comparison: {ratio_pi:.3}) in {secs:.1} s"
        ),
    )
}

// 3 ---------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let start = Instant::now();
    // exchangeable in (x₀, x₁), so the two splits have equal Gini gain
    let law = |x: &[f64]| 0.15 + 0.35 * x[0] + 0.35 * x[1];
    let g1 = SplitRule::new(0, 0.5);
    let g2 = SplitRule::new(1, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rejections = 0;
    for _ in 0..500 {
        let b = labeled_draw(&mut rng, 5_000, law);
        let s = compare_splits(&b, &g1, &g2).unwrap();
        let s = if s.delta_hat() > 0.0 { s.swapped() } else { s };
        if better_split_pvalue(&s).unwrap().p_value < 0.1 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 500.0;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rate <= 0.15 && secs < 120.0,
        format!("rejection rate at α = 0.1: {rate:.3} ({rejections}/500) in {secs:.1} s (limit 0.15)"),
    )
}

// 4 ---------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let n = required_sample_size(1_000, 0.3, 0.1).unwrap();
    let exact = (5_972..=5_974).contains(&n);
    let grid: Vec<f64> = (0..=35).map(|i| 0.11 + 0.01 * i as f64).collect();
    let sizes: Vec<usize> = grid.iter().map(|&p| required_sample_size(1_000, p, 0.1).unwrap()).collect();
    let decreasing = sizes.windows(2).all(|w| w[1] < w[0]);
    let increasing = sizes.windows(2).all(|w| w[1] > w[0]);
    outcome(
        exact && decreasing,
        format!(
            "n'(1000, 0.3, 0.1) = {n} (target 5973 ± 1: {}); on p_n ∈ [0.11, 0.46] n' goes {} → {} and is strictly {} (required: strictly decreasing)",
            if exact { "ok" } else { "off" },
            sizes[0],
            sizes[sizes.len() - 1],
            if increasing { "increasing" } else if decreasing { "decreasing" } else { "non-monotone" },
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn sta_config(seed: u64, depth: usize) -> BuildConfig {
    BuildConfig {
        alpha: 0.1,
        n_ps_max: 100_000,
        max_depth: depth,
        seed,
        ..Default::default()
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut agreement = Vec::new();
    let mut l1 = Vec::new();
    for seed in 1..=5u64 {
        let (data, forest) = common::benchmark_oracle(seed);
        let tree = common::distill(&data, &forest, &sta_config(seed, 5));
        let test: Matrix = sample_covariates(10_000, 10_000 + seed);
        let r = mimic_accuracy(&tree, &forest, &test).unwrap();
        agreement.push(r.class_agreement);
        l1.push(r.l1_prob_diff);
    }
    let secs = start.elapsed().as_secs_f64();
    let (a, d) = (median(agreement.clone()), median(l1.clone()));
    outcome(
        a >= 0.90 && d <= 0.25 && secs <= 600.0,
        format!(
            "median agreement {a:.3} (≥ 0.90), median L1 {d:.3} (≤ 0.25); per seed agreement {:?} in {secs:.0} s",
            agreement.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

// 6 ---------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (data, forest) = common::benchmark_oracle(6);
    let depth = 4;
    let sta = sta_config(600, depth);
    let cart = BuildConfig {
        alpha: 1.0,
        n_initial: 100_000,
        n_ps_max: 100_000,
        sample_policy: SamplePolicy::RootOnly,
        ..sta.clone()
    };
    let depths = [1, 2, 3, 4];
    let a = stability_experiment(&data, &forest, &sta, 20, &depths, Tolerance::default()).unwrap();
    let b = stability_experiment(&data, &forest, &cart, 20, &depths, Tolerance::default()).unwrap();
    let ha = a.histogram(depth).unwrap();
    let hb = b.histogram(depth).unwrap();
    let modal = ha.modal().map_or(0, |m| m.1);
    let secs = start.elapsed().as_secs_f64();
    let per_depth: Vec<String> = depths
        .iter()
        .map(|&d| {
            format!(
                "d{d}: {}/{}",
                a.histogram(d).unwrap().unique(),
                b.histogram(d).unwrap().unique()
            )
        })
        .collect();
    outcome(
        a.failures() == 0 && ha.unique() <= hb.unique() && modal * 2 >= 20 && secs <= 1800.0,
        format!(
            "depth 4 unique structures STA {} vs CART {}; STA modal structure in {modal}/20; unique STA/CART per depth [{}] in {secs:.0} s",
            ha.unique(),
            hb.unique(),
            per_depth.join(", ")
        ),
    )
}

// 7 ---------------------------------------------------------------------

fn pipeline_json(threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let (data, forest) = common::benchmark_oracle(7);
        common::distill(&data, &forest, &sta_config(7, 5)).to_json().unwrap()
    })
}

fn criterion_7() -> Outcome {
    let a = pipeline_json(1);
    let b = pipeline_json(1);
    let c = pipeline_json(4);
    outcome(
        a == b && a == c,
        format!(
            "repeat run identical: {}; 1 vs 4 threads identical: {} ({} bytes of tree JSON)",
            a == b,
            a == c,
            a.len()
        ),
    )
}

// 8 ---------------------------------------------------------------------

/// Captures the root pseudo sample of a root-only build.
#[derive(Default)]
struct RootSample(Mutex<Option<SampleBatch>>);

impl BuildObserver<f64> for RootSample {
    fn on_draw(&self, path: &str, _region: &Region, batch: &SampleBatch) {
        if path == "root" {
            *self.0.lock().unwrap() = Some(batch.clone());
        }
    }
}

/// Plain greedy CART over a fixed pseudo sample, candidates at midpoints of
/// the anchors, with the builder's stopping rules.
fn reference_cart(
    schema: &Schema,
    sample: &[SoftLabeledSample],
    anchors: &[Vec<f64>],
    region: Region,
    depth: usize,
    cfg: &BuildConfig,
) -> stabletree::TreeNode {
    let k = schema.class_count();
    let mean: Vec<f64> = (0..k)
        .map(|j| sample.iter().map(|s| s.y[j]).sum::<f64>() / sample.len().max(1) as f64)
        .collect();
    let leaf = stabletree::TreeNode::leaf(mean.clone());
    let impurity = 1.0 - mean.iter().map(|v| v * v).sum::<f64>();
    if depth >= cfg.max_depth || anchors.len() < cfg.min_node_anchors {
        return leaf;
    }
    let mut rules = Vec::new();
    for c in 0..schema.dim() {
        let iv = region.interval(c);
        let mut vals: Vec<f64> = anchors.iter().map(|a| a[c]).filter(|v| iv.contains(*v)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            if t > iv.lower && t < iv.upper {
                rules.push(SplitRule::new(c, t));
            }
        }
    }
    if rules.is_empty() || impurity < cfg.purity_epsilon {
        return leaf;
    }
    let mut best: Option<(f64, SplitRule)> = None;
    for r in &rules {
        let s = split_gini_index(sample, r).unwrap();
        if s.n_left == 0 || s.n_right == 0 {
            continue;
        }
        if best.as_ref().is_none_or(|(g, _)| s.gini_index < *g) {
            best = Some((s.gini_index, *r));
        }
    }
    let Some((g, rule)) = best else { return leaf };
    if impurity - g < cfg.purity_epsilon {
        return leaf;
    }
    let part = |left: bool| -> (Vec<SoftLabeledSample>, Vec<Vec<f64>>) {
        (
            sample.iter().filter(|s| rule.goes_left(&s.x) == left).cloned().collect(),
            anchors.iter().filter(|a| rule.goes_left(a) == left).cloned().collect(),
        )
    };
    let (ls, la) = part(true);
    let (rs, ra) = part(false);
    let lreg = region.refine(&rule, stabletree::Side::Left).unwrap();
    let rreg = region.refine(&rule, stabletree::Side::Right).unwrap();
    stabletree::TreeNode::internal(
        rule,
        reference_cart(schema, &ls, &la, lreg, depth + 1, cfg),
        reference_cart(schema, &rs, &ra, rreg, depth + 1, cfg),
        None,
    )
}

fn criterion_8() -> Outcome {
    let (data, forest) = common::benchmark_oracle(8);
    let mut all_equal = true;
    let mut details = Vec::new();
    for seed in [81u64, 82, 83] {
        let cfg = BuildConfig {
            alpha: 1.0,
            n_initial: 5_000,
            n_ps_max: 5_000,
            max_depth: 5,
            sample_policy: SamplePolicy::RootOnly,
            seed,
            ..Default::default()
        };
        let observer = RootSample::default();
        let tree = build_tree_observed(&data, &forest, &cfg, &observer).unwrap();
        let sample = observer.0.lock().unwrap().take().unwrap().to_samples();
        let anchors = data.rows().to_rows();
        let root = reference_cart(data.schema(), &sample, &anchors, Region::root(data.schema()), 1, &cfg);
        let reference = Tree::new(data.schema().clone(), root).unwrap();
        let equal = (1..=5).all(|d| structure_key_uniform(&tree, d, 1e-12) == structure_key_uniform(&reference, d, 1e-12));
        all_equal &= equal;
        details.push(format!("seed {seed}: {} internal nodes, {}", tree.internal_count(), if equal { "identical" } else { "DIFFERENT" }));
    }
    outcome(all_equal, details.join("; "))
}

// 9 ---------------------------------------------------------------------

#[derive(Default)]
struct RegionAudit {
    rows: AtomicUsize,
    violations: AtomicUsize,
}

impl BuildObserver<f64> for RegionAudit {
    fn on_draw(&self, _path: &str, region: &Region, batch: &SampleBatch) {
        let bad = batch.x.rows().filter(|r| !region.contains(r)).count();
        self.rows.fetch_add(batch.x.nrows(), Ordering::Relaxed);
        self.violations.fetch_add(bad, Ordering::Relaxed);
    }
}

fn criterion_9() -> Outcome {
    let (data, forest) = common::benchmark_oracle(9);
    let audit = RegionAudit::default();
    let tree = build_tree_observed(&data, &forest, &sta_config(9, 5), &audit).unwrap();
    let rows = audit.rows.load(Ordering::Relaxed);
    let bad = audit.violations.load(Ordering::Relaxed);
    outcome(
        bad == 0 && rows > 0,
        format!("{rows} pseudo samples over {} nodes, {bad} outside their node region", tree.internal_count() + tree.leaf_count()),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 9] = [
        (1, "Gini correctness", criterion_1),
        (2, "CLT variance calibration", criterion_2),
        (3, "test calibration", criterion_3),
        (4, "sequential sample-size formula", criterion_4),
        (5, "simulation mimicking", criterion_5),
        (6, "stability ordering", criterion_6),
        (7, "determinism", criterion_7),
        (8, "CART degeneracy", criterion_8),
        (9, "region safety", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let r = run();
        let took = start.elapsed();
        println!(
            "[{}] criterion {id} ({name}): {} [{}]",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            fmt_duration(took)
        );
        if !r.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

fn fmt_duration(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}
