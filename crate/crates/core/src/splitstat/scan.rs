//! Sweep-based evaluation of many candidate rules on one pseudo sample.
//!
//! For every column the sample is sorted once; candidate thresholds on that
//! column are visited in ascending order while label sums, second moments
//! and cross terms accumulate. Each candidate's Gini index and its comparison
//! variance against a fixed best rule then cost `O(k²)` instead of `O(n)`.
//!
//! The comparison variance is the variance of the per-sample linear term
//! `Lᵢ = cᵢ − aᵢ` with `aᵢ = 2·θ̂_best(side)·Yᵢ` and `cᵢ = 2·θ̂_rival(side)·Yᵢ`,
//! which equals `Θ̂ᵀΣ̂Θ̂` for the plain gradient.

use rayon::prelude::*;

use crate::region::SplitRule;
use crate::scalar::Scalar;
use crate::schema::SampleBatch;

use super::gini_from_sums;

#[derive(Debug, Clone)]
struct Snapshot<T> {
    n_left: usize,
    left_sum: Vec<T>,
    /// Row-major `k × k` left second moment `Σ YᵢYᵢᵀ`.
    left_moment: Vec<T>,
    gini: T,
}

/// Gap and comparison variance of the best rule against one rival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseComparison<T> {
    pub rival: usize,
    /// `ĝ_best − ĝ_rival`, never positive.
    pub delta_hat: T,
    pub comparison_variance: T,
}

/// Per-candidate statistics for one pseudo sample.
pub struct CandidateScan<'a, T> {
    batch: &'a SampleBatch<T>,
    rules: &'a [SplitRule<T>],
    /// `(column, candidate index range)` groups, thresholds ascending within.
    groups: Vec<(usize, std::ops::Range<usize>)>,
    orders: Vec<Vec<u32>>,
    snapshots: Vec<Option<Snapshot<T>>>,
    duplicate: Vec<bool>,
    total_sum: Vec<T>,
    total_moment: Vec<T>,
}

impl<'a, T: Scalar> CandidateScan<'a, T> {
    /// `rules` must be sorted by `(column, threshold)`. Inactive candidates
    /// are skipped and reported as not evaluable.
    pub fn new(batch: &'a SampleBatch<T>, rules: &'a [SplitRule<T>], active: &[bool]) -> Self {
        debug_assert!(rules
            .windows(2)
            .all(|w| w[0].lex_cmp(&w[1]) != std::cmp::Ordering::Greater));
        let k = batch.y.ncols();
        let n = batch.x.nrows();

        let mut groups = Vec::new();
        let mut start = 0;
        while start < rules.len() {
            let col = rules[start].column;
            let mut end = start;
            while end < rules.len() && rules[end].column == col {
                end += 1;
            }
            if (start..end).any(|i| active[i]) {
                groups.push((col, start..end));
            }
            start = end;
        }

        let mut total_sum = vec![T::zero(); k];
        let mut total_moment = vec![T::zero(); k * k];
        for i in 0..n {
            accumulate(batch.y.row(i), &mut total_sum, &mut total_moment);
        }

        let orders: Vec<Vec<u32>> = groups
            .par_iter()
            .map(|(col, _)| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    let va = batch.x.row(a as usize)[*col];
                    let vb = batch.x.row(b as usize)[*col];
                    va.partial_cmp(&vb).unwrap_or(std::cmp::Ordering::Equal)
                });
                idx
            })
            .collect();

        let per_group: Vec<Vec<Option<Snapshot<T>>>> = groups
            .par_iter()
            .zip(&orders)
            .map(|((col, range), order)| {
                let mut out = Vec::with_capacity(range.len());
                let mut sum = vec![T::zero(); k];
                let mut moment = vec![T::zero(); k * k];
                let mut pos = 0usize;
                for c in range.clone() {
                    if !active[c] {
                        out.push(None);
                        continue;
                    }
                    let thr = rules[c].threshold;
                    while pos < n && batch.x.row(order[pos] as usize)[*col] <= thr {
                        accumulate(batch.y.row(order[pos] as usize), &mut sum, &mut moment);
                        pos += 1;
                    }
                    if pos == 0 || pos == n {
                        out.push(None);
                        continue;
                    }
                    let right: Vec<T> = total_sum.iter().zip(&sum).map(|(t, l)| *t - *l).collect();
                    let gini = gini_from_sums(&sum, pos, &right, n - pos);
                    out.push(Some(Snapshot {
                        n_left: pos,
                        left_sum: sum.clone(),
                        left_moment: moment.clone(),
                        gini,
                    }));
                }
                out
            })
            .collect();

        let mut snapshots = vec![None; rules.len()];
        let mut duplicate = vec![false; rules.len()];
        for ((_, range), snaps) in groups.iter().zip(per_group) {
            let mut last_n_left = None;
            for (c, s) in range.clone().zip(snaps) {
                if let Some(s) = &s {
                    // same column, same left count: identical partition
                    if last_n_left == Some(s.n_left) {
                        duplicate[c] = true;
                    }
                    last_n_left = Some(s.n_left);
                }
                snapshots[c] = s;
            }
        }

        CandidateScan {
            batch,
            rules,
            groups,
            orders,
            snapshots,
            duplicate,
            total_sum,
            total_moment,
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.batch.x.nrows()
    }

    /// Both children non-empty on this sample and the partition is not a
    /// repeat of a lower threshold on the same column.
    pub fn is_evaluable(&self, i: usize) -> bool {
        self.snapshots[i].is_some() && !self.duplicate[i]
    }

    pub fn is_duplicate(&self, i: usize) -> bool {
        self.duplicate[i]
    }

    pub fn gini(&self, i: usize) -> Option<T> {
        self.snapshots[i].as_ref().map(|s| s.gini)
    }

    pub fn n_left(&self, i: usize) -> Option<usize> {
        self.snapshots[i].as_ref().map(|s| s.n_left)
    }

    /// Evaluable candidate with the smallest Gini index; ties go to the
    /// lowest `(column, threshold)`.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.rules.len() {
            if !self.is_evaluable(i) {
                continue;
            }
            let g = self.snapshots[i].as_ref().map(|s| s.gini);
            match best {
                Some(b) if self.snapshots[b].as_ref().map(|s| s.gini) <= g => {}
                _ => best = Some(i),
            }
        }
        best
    }

    fn thetas(&self, s: &Snapshot<T>) -> (Vec<T>, Vec<T>) {
        let n = self.sample_size();
        let nl = T::from_count(s.n_left);
        let nr = T::from_count(n - s.n_left);
        let left = s.left_sum.iter().map(|v| *v / nl).collect();
        let right = self
            .total_sum
            .iter()
            .zip(&s.left_sum)
            .map(|(t, l)| (*t - *l) / nr)
            .collect();
        (left, right)
    }

    /// Gap and comparison variance of `best` against every evaluable rival
    /// in `rivals`. Non-evaluable rivals are skipped.
    pub fn compare_against(&self, best: usize, rivals: &[usize]) -> Vec<PairwiseComparison<T>> {
        let Some(best_snap) = self.snapshots[best].as_ref() else {
            return Vec::new();
        };
        let k = self.batch.y.ncols();
        let n = self.sample_size();
        let nf = T::from_count(n);
        let two = T::lit(2.0);
        let best_rule = self.rules[best];
        let (bl, br) = self.thetas(best_snap);

        // a_i = 2 θ_best(side)·Y_i
        let a: Vec<T> = (0..n)
            .map(|i| {
                let x = self.batch.x.row(i);
                let y = self.batch.y.row(i);
                let th = if best_rule.goes_left(x) { &bl } else { &br };
                two * dot(th, y)
            })
            .collect();
        let mean_a = a.iter().copied().sum::<T>() / nf;
        let mean_a2 = a.iter().map(|v| *v * *v).sum::<T>() / nf;
        let mut total_ay = vec![T::zero(); k];
        for (i, ai) in a.iter().enumerate() {
            for (t, y) in total_ay.iter_mut().zip(self.batch.y.row(i)) {
                *t = *t + *ai * *y;
            }
        }

        let mut wanted = vec![false; self.rules.len()];
        for &r in rivals {
            if r != best && self.is_evaluable(r) {
                wanted[r] = true;
            }
        }

        // left sums of a_i·Y_i at each wanted candidate, column by column
        let per_group: Vec<Vec<(usize, Vec<T>)>> = self
            .groups
            .par_iter()
            .zip(&self.orders)
            .map(|((col, range), order)| {
                let mut out = Vec::new();
                if !range.clone().any(|c| wanted[c]) {
                    return out;
                }
                let mut ay = vec![T::zero(); k];
                let mut pos = 0usize;
                for c in range.clone() {
                    if !wanted[c] {
                        continue;
                    }
                    let thr = self.rules[c].threshold;
                    while pos < n && self.batch.x.row(order[pos] as usize)[*col] <= thr {
                        let i = order[pos] as usize;
                        for (acc, y) in ay.iter_mut().zip(self.batch.y.row(i)) {
                            *acc = *acc + a[i] * *y;
                        }
                        pos += 1;
                    }
                    out.push((c, ay.clone()));
                }
                out
            })
            .collect();

        let mut result = Vec::new();
        for (c, left_ay) in per_group.into_iter().flatten() {
            let s = self.snapshots[c].as_ref().expect("wanted rivals are evaluable");
            let (tl, tr) = self.thetas(s);
            let right_sum: Vec<T> = self
                .total_sum
                .iter()
                .zip(&s.left_sum)
                .map(|(t, l)| *t - *l)
                .collect();
            let right_moment: Vec<T> = self
                .total_moment
                .iter()
                .zip(&s.left_moment)
                .map(|(t, l)| *t - *l)
                .collect();
            let right_ay: Vec<T> = total_ay.iter().zip(&left_ay).map(|(t, l)| *t - *l).collect();

            let mean_c = two * (dot(&tl, &s.left_sum) + dot(&tr, &right_sum)) / nf;
            let mean_c2 = two
                * two
                * (quad(&tl, &s.left_moment, k) + quad(&tr, &right_moment, k))
                / nf;
            let mean_ac = two * (dot(&tl, &left_ay) + dot(&tr, &right_ay)) / nf;

            let var_a = mean_a2 - mean_a * mean_a;
            let var_c = mean_c2 - mean_c * mean_c;
            let cov = mean_ac - mean_a * mean_c;
            let variance = (var_a + var_c - two * cov).max(T::zero());
            let delta = (best_snap.gini - s.gini).min(T::zero());
            result.push(PairwiseComparison {
                rival: c,
                delta_hat: delta,
                comparison_variance: variance,
            });
        }
        result.sort_by_key(|c| c.rival);
        result
    }
}

#[inline]
fn accumulate<T: Scalar>(y: &[T], sum: &mut [T], moment: &mut [T]) {
    let k = y.len();
    for a in 0..k {
        sum[a] = sum[a] + y[a];
        if y[a] == T::zero() {
            continue;
        }
        for b in 0..k {
            moment[a * k + b] = moment[a * k + b] + y[a] * y[b];
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[inline]
fn quad<T: Scalar>(v: &[T], m: &[T], k: usize) -> T {
    let mut q = T::zero();
    for a in 0..k {
        for b in 0..k {
            q = q + v[a] * m[a * k + b] * v[b];
        }
    }
    q
}
