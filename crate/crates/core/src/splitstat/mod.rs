//! Gini estimators and the statistics behind the better-split test.
//!
//! Two splits `G1`, `G2` evaluated on the same pseudo sample are compared
//! through the stacked `4k` vector
//! `(Y·1{G1=L}, Y·1{G1=R}, Y·1{G2=L}, Y·1{G2=R})`. Its plug-in covariance
//! `Σ̂` and the gradient of the Gini difference give the asymptotic variance
//! `Θ̂ᵀΣ̂Θ̂ / n` of `ĝ1 − ĝ2`, from which the test p-value, the sequential
//! sample-size update and the multiple-comparison aggregate follow.
//!
//! Lower Gini index means a better split throughout.

mod scan;

pub use scan::{CandidateScan, PairwiseComparison};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::region::SplitRule;
use crate::scalar::Scalar;
use crate::schema::SampleView;

/// Minimum pseudo-sample size accepted by [`compare_splits`].
pub const MIN_COMPARISON_SAMPLES: usize = 10;

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    // far tails can come back as -0.0 or a hair outside [0, 1]
    let p = std_normal().cdf(z);
    if p > 0.0 {
        p.min(1.0)
    } else {
        0.0
    }
}

/// Upper-tail standard normal quantile `Z_p`, i.e. `P(Z > Z_p) = p`.
pub fn upper_quantile(p: f64) -> f64 {
    -std_normal().inverse_cdf(p)
}

/// Population Gini impurity `1 − Σ pᵢ²` of a class distribution.
pub fn gini_gain_distribution<T: Scalar>(class_probs: &[T]) -> Result<T> {
    let mut sq = T::zero();
    for p in class_probs {
        if !(*p >= T::zero()) {
            return Err(Error::Domain(format!("class probability {p} is negative")));
        }
        sq = sq + *p * *p;
    }
    Ok(T::one() - sq)
}

/// Weighted child impurity from per-child label sums:
/// `1 − (‖S_L‖²/n_L + ‖S_R‖²/n_R) / n`. Empty children contribute nothing.
pub fn gini_from_sums<T: Scalar>(left_sum: &[T], n_left: usize, right_sum: &[T], n_right: usize) -> T {
    let n = n_left + n_right;
    if n == 0 {
        return T::zero();
    }
    let part = |s: &[T], m: usize| {
        if m == 0 {
            T::zero()
        } else {
            s.iter().map(|v| *v * *v).sum::<T>() / T::from_count(m)
        }
    };
    T::one() - (part(left_sum, n_left) + part(right_sum, n_right)) / T::from_count(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GiniSummary<T> {
    pub n: usize,
    pub n_left: usize,
    pub n_right: usize,
    /// Mean soft label of the left child; zeros when the child is empty.
    pub theta_left: Vec<T>,
    pub theta_right: Vec<T>,
    pub gini_index: T,
}

impl<T: Scalar> GiniSummary<T> {
    pub fn has_empty_child(&self) -> bool {
        self.n_left == 0 || self.n_right == 0
    }

    pub fn pi_left(&self) -> T {
        T::from_count(self.n_left) / T::from_count(self.n)
    }

    pub fn pi_right(&self) -> T {
        T::from_count(self.n_right) / T::from_count(self.n)
    }
}

/// Empirical Gini index of `rule` on soft-labeled samples.
pub fn split_gini_index<T, S>(samples: &S, rule: &SplitRule<T>) -> Result<GiniSummary<T>>
where
    T: Scalar,
    S: SampleView<T> + ?Sized,
{
    let n = samples.len();
    if n == 0 {
        return Err(Error::Contract("Gini index of an empty sample".into()));
    }
    let k = samples.class_count();
    let mut sum_l = vec![T::zero(); k];
    let mut sum_r = vec![T::zero(); k];
    let mut n_left = 0;
    for i in 0..n {
        let x = samples.x(i);
        if rule.column >= x.len() {
            return Err(Error::Schema(format!("rule column {} out of range", rule.column)));
        }
        let acc = if rule.goes_left(x) {
            n_left += 1;
            &mut sum_l
        } else {
            &mut sum_r
        };
        for (a, y) in acc.iter_mut().zip(samples.y(i)) {
            *a = *a + *y;
        }
    }
    let n_right = n - n_left;
    let mean = |s: Vec<T>, m: usize| -> Vec<T> {
        if m == 0 {
            s
        } else {
            let m = T::from_count(m);
            s.into_iter().map(|v| v / m).collect()
        }
    };
    let theta_left = mean(sum_l, n_left);
    let theta_right = mean(sum_r, n_right);
    let nf = T::from_count(n);
    let sq = |t: &[T]| t.iter().map(|v| *v * *v).sum::<T>();
    let gini_index = T::one()
        - T::from_count(n_left) / nf * sq(&theta_left)
        - T::from_count(n_right) / nf * sq(&theta_right);
    Ok(GiniSummary {
        n,
        n_left,
        n_right,
        theta_left,
        theta_right,
        gini_index,
    })
}

/// Which gradient of the Gini-difference map enters the delta method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientForm {
    /// `2·(−θ̂₁ₗ, −θ̂₁ᵣ, θ̂₂ₗ, θ̂₂ᵣ)`, the derivative of the difference map at
    /// the child-mass-weighted point.
    #[default]
    Plain,
    /// The same vector with every block additionally scaled by its child
    /// mass `π̂`. Kept only for comparison in calibration runs.
    PiWeighted,
}

/// Plug-in CLT statistics for comparing two splits on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitComparisonStats<T> {
    pub summary_1: GiniSummary<T>,
    pub summary_2: GiniSummary<T>,
    /// Row-major `4k × 4k` covariance (denominator `n`).
    pub sigma_hat: Vec<T>,
    pub gradient: Vec<T>,
    /// `Θ̂ᵀ Σ̂ Θ̂`, the asymptotic variance of `√n (ĝ₁ − ĝ₂)`.
    pub comparison_variance: T,
}

impl<T: Scalar> SplitComparisonStats<T> {
    pub fn delta_hat(&self) -> T {
        self.summary_1.gini_index - self.summary_2.gini_index
    }

    pub fn n(&self) -> usize {
        self.summary_1.n
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn sigma(&self, i: usize, j: usize) -> T {
        self.sigma_hat[i * self.dim() + j]
    }

    /// The same comparison with the roles of the two splits exchanged.
    pub fn swapped(&self) -> Self {
        let d = self.dim();
        let k = d / 4;
        // block permutation (1L,1R,2L,2R) -> (2L,2R,1L,1R)
        let perm = |i: usize| (i + 2 * k) % d;
        let mut sigma_hat = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                sigma_hat[i * d + j] = self.sigma(perm(i), perm(j));
            }
        }
        let gradient = (0..d).map(|i| -self.gradient[perm(i)]).collect();
        SplitComparisonStats {
            summary_1: self.summary_2.clone(),
            summary_2: self.summary_1.clone(),
            sigma_hat,
            gradient,
            comparison_variance: self.comparison_variance,
        }
    }
}

pub fn compare_splits<T, S>(
    samples: &S,
    rule_1: &SplitRule<T>,
    rule_2: &SplitRule<T>,
) -> Result<SplitComparisonStats<T>>
where
    T: Scalar,
    S: SampleView<T> + ?Sized,
{
    compare_splits_with(samples, rule_1, rule_2, GradientForm::Plain)
}

/// Full plug-in route: explicit `Σ̂`, explicit gradient, quadratic form.
pub fn compare_splits_with<T, S>(
    samples: &S,
    rule_1: &SplitRule<T>,
    rule_2: &SplitRule<T>,
    form: GradientForm,
) -> Result<SplitComparisonStats<T>>
where
    T: Scalar,
    S: SampleView<T> + ?Sized,
{
    let n = samples.len();
    if n < MIN_COMPARISON_SAMPLES {
        return Err(Error::Contract(format!(
            "split comparison needs at least {MIN_COMPARISON_SAMPLES} samples, got {n}"
        )));
    }
    let summary_1 = split_gini_index(samples, rule_1)?;
    let summary_2 = split_gini_index(samples, rule_2)?;
    for (s, r) in [(&summary_1, rule_1), (&summary_2, rule_2)] {
        if s.has_empty_child() {
            return Err(Error::DegenerateSplit(format!(
                "column {} at {} leaves a child without samples",
                r.column, r.threshold
            )));
        }
    }
    let k = samples.class_count();
    let d = 4 * k;

    let stacked = |i: usize, v: &mut [T]| {
        v.iter_mut().for_each(|e| *e = T::zero());
        let x = samples.x(i);
        let y = samples.y(i);
        let b1 = if rule_1.goes_left(x) { 0 } else { k };
        let b2 = if rule_2.goes_left(x) { 2 * k } else { 3 * k };
        v[b1..b1 + k].copy_from_slice(y);
        v[b2..b2 + k].copy_from_slice(y);
    };

    let nf = T::from_count(n);
    let mut v = vec![T::zero(); d];
    let mut mean = vec![T::zero(); d];
    for i in 0..n {
        stacked(i, &mut v);
        for (m, e) in mean.iter_mut().zip(&v) {
            *m = *m + *e;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / nf);

    let mut sigma_hat = vec![T::zero(); d * d];
    for i in 0..n {
        stacked(i, &mut v);
        for (e, m) in v.iter_mut().zip(&mean) {
            *e = *e - *m;
        }
        for a in 0..d {
            if v[a] == T::zero() {
                continue;
            }
            let row = &mut sigma_hat[a * d..(a + 1) * d];
            for (s, vb) in row.iter_mut().zip(&v) {
                *s = *s + v[a] * *vb;
            }
        }
    }
    sigma_hat.iter_mut().for_each(|s| *s = *s / nf);

    let two = T::lit(2.0);
    let mut gradient = Vec::with_capacity(d);
    let blocks = [
        (&summary_1.theta_left, summary_1.pi_left(), -T::one()),
        (&summary_1.theta_right, summary_1.pi_right(), -T::one()),
        (&summary_2.theta_left, summary_2.pi_left(), T::one()),
        (&summary_2.theta_right, summary_2.pi_right(), T::one()),
    ];
    for (theta, pi, sign) in blocks {
        let scale = match form {
            GradientForm::Plain => two * sign,
            GradientForm::PiWeighted => two * sign * pi,
        };
        gradient.extend(theta.iter().map(|t| scale * *t));
    }

    let mut q = T::zero();
    for a in 0..d {
        let mut row = T::zero();
        for b in 0..d {
            row = row + sigma_hat[a * d + b] * gradient[b];
        }
        q = q + gradient[a] * row;
    }
    Ok(SplitComparisonStats {
        summary_1,
        summary_2,
        sigma_hat,
        gradient,
        comparison_variance: q.max(T::zero()),
    })
}

/// Outcome of one better-split test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub delta_hat: f64,
    pub p_value: f64,
    pub n_used: usize,
}

/// Probability that an independent pseudo sample of the same size reverses
/// the ranking of the two splits. `stats` must be ordered so that split 1 is
/// the current best (`Δ̂ ≤ 0`).
pub fn better_split_pvalue<T: Scalar>(stats: &SplitComparisonStats<T>) -> Result<TestOutcome> {
    let delta_hat = stats.delta_hat().to_f64_lossy();
    let n = stats.n();
    let p_value = reversal_pvalue(delta_hat, stats.comparison_variance.to_f64_lossy(), n)?;
    Ok(TestOutcome {
        delta_hat,
        p_value,
        n_used: n,
    })
}

/// `Φ(Δ̂ / √(2·variance/n))` for `Δ̂ ≤ 0`, with the degenerate zero-variance
/// cases pinned: `p = 0` for a strict gap and `p = ½` for an exact tie.
pub fn reversal_pvalue(delta_hat: f64, comparison_variance: f64, n: usize) -> Result<f64> {
    if delta_hat > 0.0 {
        return Err(Error::Contract(format!(
            "better-split test expects the current best first (Δ̂ = {delta_hat} > 0)"
        )));
    }
    if !(comparison_variance >= 0.0) {
        return Err(Error::Domain(format!(
            "comparison variance {comparison_variance} is negative"
        )));
    }
    if n == 0 {
        return Err(Error::Contract("better-split test on zero samples".into()));
    }
    if comparison_variance == 0.0 {
        return Ok(if delta_hat < 0.0 { 0.0 } else { 0.5 });
    }
    let sd = (2.0 * comparison_variance / n as f64).sqrt();
    Ok(normal_cdf(delta_hat / sd))
}

/// Pseudo-sample size at which the observed standardized gap would reach
/// significance: `⌈n · (Z_α / Z_{p_n})²⌉`.
pub fn required_sample_size(current_n: usize, p_n: f64, alpha: f64) -> Result<usize> {
    if current_n == 0 {
        return Err(Error::Contract("current sample size must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < p_n) {
        return Err(Error::Contract(format!(
            "sample-size update needs 0 < α < p_n (α = {alpha}, p_n = {p_n})"
        )));
    }
    if p_n >= 0.5 {
        return Err(Error::Contract(format!(
            "p_n = {p_n} ≥ 0.5 has no positive quantile; use the growth cap"
        )));
    }
    let ratio = upper_quantile(alpha) / upper_quantile(p_n);
    let target = (current_n as f64 * ratio * ratio).ceil();
    // saturating float-to-int cast
    Ok((target as usize).max(current_n + 1))
}

/// Bonferroni-style aggregate `min(1, Σ pᵢ)`; zero for an empty family.
pub fn aggregate_pvalue(pairwise_pvalues: &[f64]) -> f64 {
    debug_assert!(pairwise_pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
    pairwise_pvalues.iter().sum::<f64>().min(1.0)
}

/// Step-up screening of rivals against the current best.
///
/// With the p-values sorted ascending, the largest rank `i` satisfying
/// `p₍ᵢ₎ ≤ (i/t)·q` marks the rivals at ranks `1..=i` as significantly worse
/// than the best; those are discarded. Returns the indices of the rivals that
/// remain, in input order. The current best is not part of `pairwise_pvalues`
/// and always stays.
pub fn prune_candidates(pairwise_pvalues: &[f64], q: f64) -> Vec<usize> {
    let t = pairwise_pvalues.len();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        pairwise_pvalues[a]
            .partial_cmp(&pairwise_pvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let cut = (1..=t)
        .rev()
        .find(|&i| pairwise_pvalues[order[i - 1]] <= i as f64 / t as f64 * q)
        .unwrap_or(0);
    let mut survivors: Vec<usize> = order[cut..].to_vec();
    survivors.sort_unstable();
    survivors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Matrix, SampleBatch, SoftLabeledSample};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cdf_stays_in_unit_interval() {
        for z in [-1e3, -40.0, -8.0, 0.0, 8.0, 40.0, 1e3] {
            let p = normal_cdf(z);
            assert!((0.0..=1.0).contains(&p) && p.is_sign_positive(), "{z} -> {p}");
        }
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(x: &[f64], y: &[f64]) -> SoftLabeledSample<f64> {
        SoftLabeledSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn random_batch(n: usize, k: usize, seed: u64) -> SampleBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::new(2);
        let mut y = Matrix::new(k);
        for _ in 0..n {
            x.push_row(&[rng.random::<f64>(), rng.random::<f64>()]).unwrap();
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            y.push_row(&w.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap();
        }
        SampleBatch::new(x, y).unwrap()
    }

    #[test]
    fn population_gini_examples() {
        assert_eq!(gini_gain_distribution(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini_gain_distribution(&[0.5, 0.5]).unwrap(), 0.5);
        assert_abs_diff_eq!(gini_gain_distribution(&[0.3, 0.7]).unwrap(), 0.42, epsilon = 1e-15);
        assert!(matches!(gini_gain_distribution(&[-0.1, 1.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn split_gini_examples() {
        let rule = SplitRule::new(0, 0.5);
        let all_left = vec![sample(&[0.1], &[1.0, 0.0]), sample(&[0.2], &[1.0, 0.0])];
        let s = split_gini_index(&all_left, &rule).unwrap();
        assert_eq!(s.gini_index, 0.0);
        assert_eq!((s.n_left, s.n_right), (2, 0));

        let separated = vec![sample(&[0.1], &[1.0, 0.0]), sample(&[0.9], &[0.0, 1.0])];
        assert_eq!(split_gini_index(&separated, &rule).unwrap().gini_index, 0.0);

        let empty: Vec<SoftLabeledSample<f64>> = Vec::new();
        assert!(split_gini_index(&empty, &rule).is_err());
    }

    #[test]
    fn sum_form_agrees_with_theta_form() {
        let b = random_batch(300, 3, 5);
        let rule = SplitRule::new(1, 0.4);
        let s = split_gini_index(&b, &rule).unwrap();
        let scale = |t: &[f64], m: usize| t.iter().map(|v| v * m as f64).collect::<Vec<_>>();
        let g = gini_from_sums(
            &scale(&s.theta_left, s.n_left),
            s.n_left,
            &scale(&s.theta_right, s.n_right),
            s.n_right,
        );
        assert_abs_diff_eq!(g, s.gini_index, epsilon = 1e-12);
    }

    #[test]
    fn identical_rules_have_zero_gap_and_variance() {
        let b = random_batch(500, 2, 9);
        let r = SplitRule::new(0, 0.3);
        let st = compare_splits(&b, &r, &r).unwrap();
        assert_eq!(st.delta_hat(), 0.0);
        assert!(st.comparison_variance.abs() < 1e-12);
    }

    #[test]
    fn constant_labels_have_zero_variance() {
        let mut b = random_batch(200, 2, 3);
        let ones = Matrix::from_rows(2, &vec![[1.0, 0.0]; 200]).unwrap();
        b.y = ones;
        let st = compare_splits(&b, &SplitRule::new(0, 0.3), &SplitRule::new(1, 0.6)).unwrap();
        assert!(st.comparison_variance.abs() < 1e-12);
    }

    #[test]
    fn comparison_rejects_degenerate_inputs() {
        let b = random_batch(50, 2, 1);
        let outside = SplitRule::new(0, 2.0);
        let ok = SplitRule::new(0, 0.5);
        assert!(matches!(compare_splits(&b, &ok, &outside), Err(Error::DegenerateSplit(_))));
        let tiny = random_batch(5, 2, 1);
        assert!(matches!(compare_splits(&tiny, &ok, &ok), Err(Error::Contract(_))));
    }

    #[test]
    fn sigma_hat_is_symmetric_psd() {
        let b = random_batch(400, 3, 21);
        let st = compare_splits(&b, &SplitRule::new(0, 0.5), &SplitRule::new(1, 0.35)).unwrap();
        let d = st.dim();
        for i in 0..d {
            for j in 0..d {
                assert_abs_diff_eq!(st.sigma(i, j), st.sigma(j, i), epsilon = 1e-15);
            }
        }
        // quadratic forms along random directions stay non-negative
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += v[i] * st.sigma(i, j) * v[j];
                }
            }
            assert!(q >= -1e-9);
        }
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(reversal_pvalue(0.0, 0.3, 100).unwrap(), 0.5);
        let var = 0.2;
        let n = 1000;
        let delta = -3.0 * (2.0 * var / n as f64).sqrt();
        assert_abs_diff_eq!(reversal_pvalue(delta, var, n).unwrap(), 0.001_349_898, epsilon = 1e-8);
        assert_eq!(reversal_pvalue(-0.01, 0.0, 10).unwrap(), 0.0);
        assert_eq!(reversal_pvalue(0.0, 0.0, 10).unwrap(), 0.5);
        assert!(matches!(reversal_pvalue(0.01, 0.1, 10), Err(Error::Contract(_))));
    }

    #[test]
    fn better_split_pvalue_orders_contract() {
        let b = random_batch(1000, 2, 4);
        let r1 = SplitRule::new(0, 0.5);
        let r2 = SplitRule::new(1, 0.5);
        let st = compare_splits(&b, &r1, &r2).unwrap();
        let ordered = if st.delta_hat() <= 0.0 { st } else { st.swapped() };
        let out = better_split_pvalue(&ordered).unwrap();
        assert!(out.delta_hat <= 0.0);
        assert!((0.0..=0.5).contains(&out.p_value));
        assert_eq!(out.n_used, 1000);
        assert!(better_split_pvalue(&ordered.swapped()).is_err() || ordered.delta_hat() == 0.0);
    }

    #[test]
    fn sample_size_examples() {
        // quantile-table arithmetic: 1000 · (1.28155 / 0.52440)² = 5972.4
        let n = required_sample_size(1000, 0.3, 0.1).unwrap();
        assert!((5972..=5974).contains(&n), "{n}");
        let near = required_sample_size(1000, 0.11, 0.1).unwrap();
        let expected = 1000.0 * (1.281_551_6_f64 / 1.226_528_1).powi(2);
        assert!((near as f64 - expected).abs() <= 1.0, "{near} vs {expected}");
        assert!(required_sample_size(1000, 0.4999999, 0.1).unwrap() > 1_000_000_000);
        assert!(required_sample_size(1000, 0.5, 0.1).is_err());
        assert!(required_sample_size(1000, 0.05, 0.1).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_abs_diff_eq!(aggregate_pvalue(&[0.02, 0.03, 0.04]), 0.09, epsilon = 1e-15);
        assert_eq!(aggregate_pvalue(&[]), 0.0);
        assert_eq!(aggregate_pvalue(&[0.7, 0.8]), 1.0);
    }

    #[test]
    fn prune_examples() {
        // hopeless rivals are all significantly worse and leave
        assert!(prune_candidates(&[0.0, 0.0, 0.0], 0.5).is_empty());
        // indistinguishable rivals all stay
        assert_eq!(prune_candidates(&[1.0, 1.0], 0.5), vec![0, 1]);
        // 0.01 ≤ 1/3·0.5, 0.2 ≤ 2/3·0.5, 0.9 > 0.5: ranks 1..2 are discarded
        assert_eq!(prune_candidates(&[0.2, 0.9, 0.01], 0.5), vec![1]);
        assert!(prune_candidates(&[], 0.5).is_empty());
    }

    proptest! {
        #[test]
        fn comparison_variance_is_swap_invariant(seed in 0u64..1000, c1 in 0usize..2, c2 in 0usize..2,
                                                 t1 in 0.2f64..0.8, t2 in 0.2f64..0.8) {
            let b = random_batch(120, 2, seed);
            let r1 = SplitRule::new(c1, t1);
            let r2 = SplitRule::new(c2, t2);
            let a = compare_splits(&b, &r1, &r2).unwrap();
            let z = compare_splits(&b, &r2, &r1).unwrap();
            prop_assert!((a.comparison_variance - z.comparison_variance).abs() <= 1e-12 * (1.0 + a.comparison_variance));
            prop_assert!((a.swapped().comparison_variance - a.comparison_variance).abs() <= 1e-15);
        }

        #[test]
        fn aggregate_dominates_inputs(ps in proptest::collection::vec(0.0f64..=1.0, 0..20)) {
            let agg = aggregate_pvalue(&ps);
            for p in &ps {
                prop_assert!(agg >= *p);
            }
        }

        #[test]
        fn sample_size_decreases_in_pn(n in 1usize..100_000, a in 0.01f64..0.2, d in 0.001f64..0.1) {
            let p1 = (a + d).min(0.49);
            let p2 = (p1 + 0.005).min(0.495);
            prop_assume!(p2 > p1 && p1 > a);
            let n1 = required_sample_size(n, p1, a).unwrap();
            let n2 = required_sample_size(n, p2, a).unwrap();
            prop_assert!(n1 <= n2);
            prop_assert!(n1 > n);
        }

        #[test]
        fn pvalue_monotone_in_gap(var in 1e-6f64..1.0, g1 in 0.0f64..0.1, g2 in 0.0f64..0.1, n in 10usize..10_000) {
            let (small, large) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let p_small = reversal_pvalue(-small, var, n).unwrap();
            let p_large = reversal_pvalue(-large, var, n).unwrap();
            prop_assert!(p_large <= p_small);
        }
    }
}
