//! Bagged Gini CART ensemble.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::scalar::{argmax, Scalar};
use crate::schema::{Dataset, Matrix, Schema};

use super::cart::{CartConfig, ClassificationTree};
use super::Oracle;

const MAGIC: &[u8; 8] = b"STFOREST";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means `⌈√m⌉`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    /// Return a constant forest instead of failing on single-class labels.
    pub allow_constant: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
            allow_constant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    // bincode cannot encode the schema's flattened fields, so it travels as JSON text
    #[serde(with = "schema_text")]
    schema: Schema,
    trees: Vec<ClassificationTree<T>>,
    config: ForestConfig,
    oob_accuracy: Option<f64>,
}

pub fn fit_forest<T: Scalar>(data: &Dataset<T>, config: &ForestConfig) -> Result<Forest<T>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data("forest fitting needs labels".into()))?;
    let n = data.len();
    if n < 2 {
        return Err(Error::Data(format!("forest fitting needs at least 2 rows, got {n}")));
    }
    if config.tree_count == 0 {
        return Err(Error::Config("tree_count must be at least 1".into()));
    }
    let m = data.schema().dim();
    let features = config
        .features_per_split
        .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize);
    if features == 0 || features > m {
        return Err(Error::Config(format!("features_per_split must lie in 1..={m}, got {features}")));
    }
    let k = data.schema().class_count();
    let mut seen = vec![false; k];
    for &y in labels {
        seen[y] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 && !config.allow_constant {
        return Err(Error::DegenerateOracle(
            "labels contain a single class; set allow_constant to accept a constant oracle".into(),
        ));
    }

    let cart = CartConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        features_per_split: Some(features),
    };
    let base = derive_seed(config.seed, "forest", b"");
    let rows = data.rows();
    let fitted: Vec<(ClassificationTree<T>, Vec<bool>)> = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(base, t as u64);
            let (sample, in_bag) = if config.bootstrap {
                let mut in_bag = vec![false; n];
                let sample: Vec<usize> = (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect();
                (sample, in_bag)
            } else {
                ((0..n).collect(), vec![true; n])
            };
            let tree = ClassificationTree::fit(rows, labels, k, &sample, cart, &mut rng);
            (tree, in_bag)
        })
        .collect();

    let oob_accuracy = if config.bootstrap {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for (i, &label) in labels.iter().enumerate() {
            let mut acc = vec![T::zero(); k];
            let mut votes = 0;
            for (tree, in_bag) in &fitted {
                if !in_bag[i] {
                    for (a, p) in acc.iter_mut().zip(tree.leaf_probs(rows.row(i))) {
                        *a = *a + *p;
                    }
                    votes += 1;
                }
            }
            if votes > 0 {
                scored += 1;
                if argmax(&acc) == label {
                    correct += 1;
                }
            }
        }
        (scored > 0).then(|| correct as f64 / scored as f64)
    } else {
        None
    };

    Ok(Forest {
        schema: data.schema().clone(),
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        config: config.clone(),
        oob_accuracy,
    })
}

impl<T: Scalar> Forest<T> {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[ClassificationTree<T>] {
        &self.trees
    }

    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub fn oob_accuracy(&self) -> Option<f64> {
        self.oob_accuracy
    }

    /// Average of the trees' leaf class-frequency vectors.
    pub fn predict_row(&self, x: &[T]) -> Vec<T> {
        let k = self.schema.class_count();
        let mut acc = vec![T::zero(); k];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_probs(x)) {
                *a = *a + *p;
            }
        }
        let count = T::from_count(self.trees.len());
        acc.into_iter().map(|a| a / count).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(std::mem::size_of::<T>() as u32).to_le_bytes())?;
        bincode::serialize_into(&mut w, self)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data("not a stabletree forest file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported forest format version {version}")));
        }
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        if width != std::mem::size_of::<T>() {
            return Err(Error::Data(format!(
                "forest stores {width}-byte scalars, expected {}",
                std::mem::size_of::<T>()
            )));
        }
        Ok(bincode::deserialize_from(r)?)
    }
}

mod schema_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use crate::schema::Schema;

    pub fn serialize<S: Serializer>(schema: &Schema, s: S) -> Result<S::Ok, S::Error> {
        let text = serde_json::to_string(schema).map_err(serde::ser::Error::custom)?;
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Schema, D::Error> {
        let text = String::deserialize(d)?;
        serde_json::from_str(&text).map_err(D::Error::custom)
    }
}

/// Rows per parallel work unit; chunking does not affect the result.
const PREDICT_CHUNK: usize = 256;

impl<T: Scalar> Oracle<T> for Forest<T> {
    fn class_count(&self) -> usize {
        self.schema.class_count()
    }

    fn predict_proba(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        if rows.ncols() != self.schema.dim() {
            return Err(Error::Schema(format!(
                "oracle expects {} columns, got {}",
                self.schema.dim(),
                rows.ncols()
            )));
        }
        let k = self.class_count();
        let flat: Vec<T> = rows
            .as_flat()
            .par_chunks(PREDICT_CHUNK * rows.ncols().max(1))
            .flat_map_iter(|chunk| {
                chunk
                    .chunks_exact(rows.ncols())
                    .flat_map(|x| self.predict_row(x))
                    .collect::<Vec<T>>()
            })
            .collect();
        Matrix::from_flat(k, flat)
    }
}
