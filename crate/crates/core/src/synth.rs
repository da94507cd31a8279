//! Piecewise-logit binary benchmark on `Uniform[0,1]⁵`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;
use crate::schema::{Dataset, Matrix, Schema};

/// One case of the piecewise logit.
#[derive(Debug, Clone, Copy)]
pub struct LogitCase {
    pub logit: f64,
    pub description: &'static str,
    predicate: fn(&[f64]) -> bool,
}

impl LogitCase {
    pub fn matches(&self, x: &[f64]) -> bool {
        (self.predicate)(x)
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

fn s(x: &[f64]) -> f64 {
    x[2] + x[3] * x[3]
}

/// The seven cases; they partition the unit cube.
pub const CASES: [LogitCase; 7] = [
    LogitCase {
        logit: 2.0,
        description: "x1 > 0.5, x2 > 0.7",
        predicate: |x| x[0] > 0.5 && x[1] > 0.7,
    },
    LogitCase {
        logit: -3.0,
        description: "x1 > 0.5, 0.7 >= x2 > 0.2",
        predicate: |x| x[0] > 0.5 && x[1] <= 0.7 && x[1] > 0.2,
    },
    LogitCase {
        logit: -4.0,
        description: "x1 > 0.5, x2 <= 0.2",
        predicate: |x| x[0] > 0.5 && x[1] <= 0.2,
    },
    LogitCase {
        logit: 3.0,
        description: "x1 <= 0.5, x5 <= 0.5, x3 + x4^2 >= 1.4",
        predicate: |x| x[0] <= 0.5 && x[4] <= 0.5 && s(x) >= 1.4,
    },
    LogitCase {
        logit: 2.0,
        description: "x1 <= 0.5, x5 <= 0.5, 1.4 > x3 + x4^2 >= 0.5",
        predicate: |x| x[0] <= 0.5 && x[4] <= 0.5 && s(x) < 1.4 && s(x) >= 0.5,
    },
    LogitCase {
        logit: -2.0,
        description: "x1 <= 0.5, x5 <= 0.5, x3 + x4^2 < 0.5",
        predicate: |x| x[0] <= 0.5 && x[4] <= 0.5 && s(x) < 0.5,
    },
    LogitCase {
        logit: 2.0,
        description: "x1 <= 0.5, x5 > 0.5",
        predicate: |x| x[0] <= 0.5 && x[4] > 0.5,
    },
];

pub const DIM: usize = 5;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Index into [`CASES`] of the case containing `x`.
pub fn case_index(x: &[f64]) -> Result<usize> {
    if x.len() != DIM {
        return Err(Error::Schema(format!("expected {DIM} covariates, got {}", x.len())));
    }
    CASES
        .iter()
        .position(|c| c.matches(x))
        .ok_or_else(|| Error::Domain(format!("no case covers {x:?}")))
}

/// `P(Y = 1 | x)`.
pub fn true_probability(x: &[f64]) -> Result<f64> {
    Ok(CASES[case_index(x)?].probability())
}

/// Five continuous columns `x1..x5`, classes `"0"` and `"1"`.
pub fn synthetic_schema() -> Schema {
    Schema::continuous(DIM, 2).expect("valid schema")
}

/// Covariates only, `n` rows of `Uniform[0,1]⁵`.
pub fn sample_covariates<T: Scalar>(n: usize, seed: u64) -> Matrix<T> {
    draw(n, seed, "synth-x").0
}

/// `n` labeled rows. Row `i` depends only on `(seed, i)`.
pub fn sample_synthetic<T: Scalar>(n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let (rows, labels) = draw(n, seed, "synth");
    Dataset::new(synthetic_schema(), rows, Some(labels))
}

fn draw<T: Scalar>(n: usize, seed: u64, phase: &str) -> (Matrix<T>, Vec<usize>) {
    let base = derive_seed(seed, phase, b"");
    let drawn: Vec<([f64; DIM], usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(base, i as u64);
            let mut x = [0.0; DIM];
            for v in x.iter_mut() {
                *v = rng.random::<f64>();
            }
            let p = CASES[case_index(&x).expect("cases are exhaustive")].probability();
            let y = usize::from(rng.random::<f64>() < p);
            (x, y)
        })
        .collect();
    let mut rows = Matrix::with_capacity(DIM, n);
    let mut labels = Vec::with_capacity(n);
    for (x, y) in drawn {
        let row: Vec<T> = x.iter().map(|v| T::lit(*v)).collect();
        rows.push_row(&row).expect("fixed width");
        labels.push(y);
    }
    (rows, labels)
}
