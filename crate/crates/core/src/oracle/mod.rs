//! The black-box model the tree is distilled from.

pub mod cart;
pub mod external;
pub mod forest;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{check_probs, Matrix, Schema};
use crate::tree::Tree;

pub use external::{serve, ExternalOracle};
pub use forest::{fit_forest, Forest, ForestConfig};

/// Anything that maps covariate rows to class-probability rows.
///
/// Implementations must be pure: repeated calls on the same rows return
/// bit-identical output, and batch order is preserved.
pub trait Oracle<T: Scalar>: Send + Sync {
    fn class_count(&self) -> usize;

    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>>;
}

impl<T: Scalar, O: Oracle<T> + ?Sized> Oracle<T> for &O {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        (**self).predict_proba(rows)
    }
}

impl<T: Scalar, O: Oracle<T> + ?Sized> Oracle<T> for Box<O> {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        (**self).predict_proba(rows)
    }
}

impl<T: Scalar> Oracle<T> for Tree<T> {
    fn class_count(&self) -> usize {
        Tree::class_count(self)
    }
    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        self.predict_batch(rows)
    }
}

/// Returns the same distribution everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantOracle<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ConstantOracle<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Domain("an oracle needs at least 2 classes".into()));
        }
        check_probs(&probs)?;
        Ok(ConstantOracle { probs })
    }
}

impl<T: Scalar> Oracle<T> for ConstantOracle<T> {
    fn class_count(&self) -> usize {
        self.probs.len()
    }
    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::with_capacity(self.probs.len(), rows.nrows());
        for _ in 0..rows.nrows() {
            out.push_row(&self.probs)?;
        }
        Ok(out)
    }
}

/// The oracle used by the pipeline: the built-in forest or an external
/// process speaking the line protocol.
pub enum OracleHandle<T: Scalar> {
    Builtin(Forest<T>),
    External(ExternalOracle),
}

impl<T: Scalar> OracleHandle<T> {
    /// Schema of a built-in forest; external oracles carry none.
    pub fn schema(&self) -> Option<&Schema> {
        match self {
            OracleHandle::Builtin(f) => Some(f.schema()),
            OracleHandle::External(_) => None,
        }
    }
}

impl<T: Scalar> Oracle<T> for OracleHandle<T> {
    fn class_count(&self) -> usize {
        match self {
            OracleHandle::Builtin(f) => f.class_count(),
            OracleHandle::External(e) => Oracle::<T>::class_count(e),
        }
    }
    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        match self {
            OracleHandle::Builtin(f) => f.predict_proba(rows),
            OracleHandle::External(e) => e.predict_proba(rows),
        }
    }
}

/// Checks an oracle reply: shape and per-row probability simplex.
pub(crate) fn validate_reply<T: Scalar>(rows: usize, k: usize, probs: &Matrix<T>) -> Result<()> {
    if probs.nrows() != rows || (rows > 0 && probs.ncols() != k) {
        return Err(Error::OracleIo(format!(
            "expected {rows} rows of {k} probabilities, got {} rows of {}",
            probs.nrows(),
            probs.ncols()
        )));
    }
    for (i, r) in probs.rows().enumerate() {
        check_probs(r).map_err(|e| Error::OracleIo(format!("reply row {i}: {e}")))?;
    }
    Ok(())
}
