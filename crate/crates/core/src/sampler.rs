//! Pseudo covariates from the node-conditional smoothed empirical
//! distribution, labeled by the oracle.
//!
//! A draw picks an anchor (an original row that reached the node) uniformly,
//! perturbs continuous columns with Gaussian noise and ordinal columns with a
//! small probability of moving one level, and keeps the row only if it lies
//! in the node's region. Row `i` of a draw always uses substream
//! `start + i`, so output does not depend on the number of workers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::region::Region;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::schema::{Matrix, SampleBatch, Schema, SoftLabeledSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Multiplier on each column's rule-of-thumb bandwidth.
    pub bandwidth_factor: f64,
    /// Probability that an ordinal cell moves to a neighbouring level.
    pub ordinal_jump_prob: f64,
    /// Give up after `max_rejection_factor × count` rejections of one row.
    pub max_rejection_factor: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            bandwidth_factor: 1.0,
            ordinal_jump_prob: 0.1,
            max_rejection_factor: 100,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_factor > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth_factor must be positive, got {}",
                self.bandwidth_factor
            )));
        }
        if !(0.0..=0.5).contains(&self.ordinal_jump_prob) {
            return Err(Error::Config(format!(
                "ordinal_jump_prob must lie in [0, 0.5], got {}",
                self.ordinal_jump_prob
            )));
        }
        if self.max_rejection_factor == 0 {
            return Err(Error::Config("max_rejection_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Silverman's rule of thumb `0.9 · min(σ̂, IQR/1.34) · n^(−1/5)`.
///
/// Falls back to whichever spread is non-zero; a constant column gets 0.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let robust = iqr / 1.34;
    let spread = match (sd > 0.0, robust > 0.0) {
        (true, true) => sd.min(robust),
        (true, false) => sd,
        (false, true) => robust,
        (false, false) => return 0.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Where a node's pseudo covariates come from.
#[derive(Debug, Clone)]
pub struct NodeContext<'s, T> {
    schema: &'s Schema,
    region: Region<T>,
    anchors: Matrix<T>,
    /// Per-column Silverman bandwidth of the anchors (0 for ordinal columns).
    bandwidths: Vec<f64>,
}

impl<'s, T: Scalar> NodeContext<'s, T> {
    /// Anchors must be non-empty and lie inside `region`.
    pub fn new(schema: &'s Schema, region: Region<T>, anchors: Matrix<T>) -> Result<Self> {
        if let Some(i) = anchors.rows().position(|a| !region.contains(a)) {
            return Err(Error::Contract(format!("anchor {i} lies outside the node region")));
        }
        Self::with_fallback_anchors(schema, region, anchors)
    }

    /// Anchors taken from an ancestor node; they may fall outside `region`
    /// and are then only reachable through rejection.
    pub fn with_fallback_anchors(schema: &'s Schema, region: Region<T>, anchors: Matrix<T>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Contract("a node context needs at least one anchor".into()));
        }
        if anchors.ncols() != schema.dim() || region.dim() != schema.dim() {
            return Err(Error::Schema("anchor or region width differs from the schema".into()));
        }
        let bandwidths = schema
            .columns()
            .iter()
            .enumerate()
            .map(|(c, spec)| {
                if spec.is_ordinal() {
                    0.0
                } else {
                    let col: Vec<f64> = anchors.rows().map(|r| r[c].to_f64_lossy()).collect();
                    silverman_bandwidth(&col)
                }
            })
            .collect();
        Ok(NodeContext {
            schema,
            region,
            anchors,
            bandwidths,
        })
    }

    pub fn schema(&self) -> &Schema {
        self.schema
    }

    pub fn region(&self) -> &Region<T> {
        &self.region
    }

    pub fn anchors(&self) -> &Matrix<T> {
        &self.anchors
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    fn draw_row(&self, cfg: &SamplerConfig, seed: u64, index: u64, cap: usize) -> Result<Vec<T>> {
        let mut rng = stream(seed, index);
        let m = self.schema.dim();
        let a = self.anchors.nrows();
        let mut row = vec![T::zero(); m];
        for _ in 0..=cap {
            let anchor = self.anchors.row(rng.random_range(0..a));
            for (c, spec) in self.schema.columns().iter().enumerate() {
                row[c] = match spec.levels() {
                    None => {
                        let h = self.bandwidths[c] * cfg.bandwidth_factor;
                        let z: f64 = rng.sample(StandardNormal);
                        if h > 0.0 {
                            anchor[c] + T::lit(h * z)
                        } else {
                            anchor[c]
                        }
                    }
                    Some(levels) => {
                        let level = anchor[c].to_f64_lossy() as i64;
                        let u: f64 = rng.random();
                        let up: bool = rng.random();
                        let moved = if u < cfg.ordinal_jump_prob {
                            (level + if up { 1 } else { -1 }).clamp(0, levels as i64 - 1)
                        } else {
                            level
                        };
                        T::from_i64(moved).expect("level fits")
                    }
                };
            }
            if self.region.contains(&row) {
                return Ok(row);
            }
        }
        Err(Error::SamplerStarvation {
            requested: cap / cfg.max_rejection_factor.max(1),
            rejections: cap + 1,
        })
    }
}

/// Substream addressing for one draw: rows use indices `start..start+count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawStream {
    pub seed: u64,
    pub start: u64,
}

impl DrawStream {
    pub fn new(seed: u64) -> Self {
        DrawStream { seed, start: 0 }
    }

    /// The stream continuing after `count` rows.
    pub fn advanced(self, count: usize) -> Self {
        DrawStream {
            seed: self.seed,
            start: self.start + count as u64,
        }
    }
}

pub fn draw_covariates<T: Scalar>(
    ctx: &NodeContext<'_, T>,
    cfg: &SamplerConfig,
    count: usize,
    stream: DrawStream,
) -> Result<Matrix<T>> {
    cfg.validate()?;
    let m = ctx.schema.dim();
    if count == 0 {
        return Ok(Matrix::new(m));
    }
    let cap = cfg.max_rejection_factor.saturating_mul(count);
    let rows: Vec<Vec<T>> = (0..count)
        .into_par_iter()
        .map(|i| ctx.draw_row(cfg, stream.seed, stream.start + i as u64, cap))
        .collect::<Result<_>>()?;
    let mut out = Matrix::with_capacity(m, count);
    for r in &rows {
        out.push_row(r)?;
    }
    Ok(out)
}

/// Pseudo covariates with oracle soft labels, as a column batch.
pub fn draw_batch<T: Scalar, O: Oracle<T> + ?Sized>(
    ctx: &NodeContext<'_, T>,
    cfg: &SamplerConfig,
    count: usize,
    oracle: &O,
    stream: DrawStream,
) -> Result<SampleBatch<T>> {
    let x = draw_covariates(ctx, cfg, count, stream)?;
    let y = if x.is_empty() {
        Matrix::new(oracle.class_count())
    } else {
        oracle.predict_proba(&x)?
    };
    if y.nrows() != x.nrows() {
        return Err(Error::OracleIo(format!(
            "oracle returned {} rows for {} queries",
            y.nrows(),
            x.nrows()
        )));
    }
    SampleBatch::new(x, y)
}

pub fn draw_labeled<T: Scalar, O: Oracle<T> + ?Sized>(
    ctx: &NodeContext<'_, T>,
    cfg: &SamplerConfig,
    count: usize,
    oracle: &O,
    stream: DrawStream,
) -> Result<Vec<SoftLabeledSample<T>>> {
    Ok(draw_batch(ctx, cfg, count, oracle, stream)?.to_samples())
}
