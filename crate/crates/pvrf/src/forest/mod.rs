//! Random forests on pseudo-values.
//!
//! Trees are grown on subsamples drawn *without* replacement (default
//! fraction 0.632) and aggregated by averaging leaf predictions.  Two node
//! splitters are available: classical CART least-squares search
//! ([`SplitAlgorithm::Cart`]) and conditional-inference splitting
//! ([`SplitAlgorithm::Conditional`]), which first picks the split variable
//! by permutation tests and only then searches for a rule, avoiding CART's
//! bias towards covariates with many possible splits.

mod cart;
mod cond;
mod tree;

pub use cart::{cart_best_split, cart_split_score, CartSplitter, MAX_EXHAUSTIVE_LEVELS};
pub use cond::{cond_best_split, cond_select_variable, CondSplitter, VAR_FLOOR};
pub use tree::{goes_left, SplitRule, TreeNode, WorkingColumn};

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateData, CovariateFrame};
use crate::error::{Error, Result};
use crate::pseudo::PseudoValueVector;
use crate::rng::{derive_seed, stream, stream_rng};

/// Node-splitting algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitAlgorithm {
    Cart,
    Conditional,
}

impl std::fmt::Display for SplitAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitAlgorithm::Cart => "cart",
            SplitAlgorithm::Conditional => "conditional",
        })
    }
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of trees in the ensemble.
    pub n_trees: usize,
    /// Fraction of rows subsampled (without replacement) per tree.
    pub subsample_fraction: f64,
    /// Candidate variables per node; `None` uses ⌊√p⌋.
    pub mtry: Option<usize>,
    /// Minimum node size for CART to attempt a split.
    pub cart_min_split: usize,
    /// Minimum node size for conditional splitting to attempt a split.
    pub cond_min_split: usize,
    /// Minimum daughter size for conditional splits.
    pub cond_min_leaf: usize,
    /// Monte-Carlo permutations per node for variable selection.
    pub n_permutations: usize,
    /// Which splitter grows the trees.
    pub algorithm: SplitAlgorithm,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            subsample_fraction: 0.632,
            mtry: None,
            cart_min_split: 5,
            cond_min_split: 20,
            cond_min_leaf: 7,
            n_permutations: 1000,
            algorithm: SplitAlgorithm::Conditional,
        }
    }
}

impl ForestConfig {
    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidRequest(String::from("n_trees must be ≥ 1")));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidRequest(format!(
                "subsample fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        if let Some(mtry) = self.mtry {
            if mtry == 0 || mtry > p {
                return Err(Error::InvalidRequest(format!(
                    "mtry {mtry} outside [1, {p}]"
                )));
            }
        }
        if self.cart_min_split == 0
            || self.cond_min_split == 0
            || self.cond_min_leaf == 0
            || self.n_permutations == 0
        {
            return Err(Error::InvalidRequest(String::from(
                "tree size parameters and permutation count must be positive",
            )));
        }
        Ok(())
    }
}

/// Column identity recorded at training time so predictions can verify the
/// incoming frame matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

fn column_meta(frame: &CovariateFrame) -> Vec<ColumnMeta> {
    frame
        .columns()
        .iter()
        .map(|c| match &c.data {
            CovariateData::Continuous(_) => ColumnMeta {
                name: c.name.clone(),
                kind: "continuous".into(),
                levels: None,
            },
            CovariateData::Binary(_) => ColumnMeta {
                name: c.name.clone(),
                kind: "binary".into(),
                levels: None,
            },
            CovariateData::Categorical { levels, .. } => ColumnMeta {
                name: c.name.clone(),
                kind: "categorical".into(),
                levels: Some(levels.clone()),
            },
        })
        .collect()
}

/// Dense per-column working form used by tree growth and prediction.
pub fn working_columns(frame: &CovariateFrame) -> Vec<WorkingColumn> {
    frame
        .columns()
        .iter()
        .map(|c| match &c.data {
            CovariateData::Continuous(v) => WorkingColumn::Numeric(v.clone()),
            CovariateData::Binary(v) => {
                WorkingColumn::Numeric(v.iter().map(|&b| f64::from(b)).collect())
            }
            CovariateData::Categorical { levels, codes } => WorkingColumn::Coded {
                n_levels: levels.len() as u32,
                codes: codes.clone(),
            },
        })
        .collect()
}

/// One fitted tree with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTree {
    pub seed: u64,
    /// Training rows (ascending indices into the fitting frame).
    pub subsample: Vec<u32>,
    pub root: TreeNode,
}

/// A fitted pseudo-value random forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub tau: f64,
    pub seed: u64,
    /// The mtry actually used (resolved from config or tuning).
    pub mtry_used: usize,
    pub config: ForestConfig,
    pub columns: Vec<ColumnMeta>,
    pub trees: Vec<FittedTree>,
}

/// Current model file format version.
pub const FOREST_FORMAT_VERSION: u32 = 1;

/// Fit a forest of `config.n_trees` trees regressing `pseudo` on the
/// covariates.  Every random choice derives from `seed`, so the result is
/// identical across runs and thread counts.
pub fn fit_forest(
    x: &CovariateFrame,
    pseudo: &PseudoValueVector,
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    let n = x.n_rows();
    let p = x.n_cols();
    if p == 0 {
        return Err(Error::InvalidRequest(String::from(
            "cannot fit a forest without covariates",
        )));
    }
    if pseudo.values.len() != n {
        return Err(Error::DimensionMismatch {
            context: "pseudo-value length",
            expected: n,
            got: pseudo.values.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyData(String::from(" (forest fit)")));
    }
    config.validate(p)?;

    let mtry = config.mtry.unwrap_or_else(|| default_mtry(p));
    let columns = working_columns(x);
    let theta = &pseudo.values;
    let subsample_size = ((config.subsample_fraction * n as f64).floor() as usize)
        .max(1)
        .min(n);

    let trees: Vec<FittedTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, &[stream::TREE, t as u64]);
            let mut sub_rng = stream_rng(tree_seed, &[stream::SUBSAMPLE]);
            let mut all: Vec<u32> = (0..n as u32).collect();
            let (chosen, _) = all.partial_shuffle(&mut sub_rng, subsample_size);
            let mut subsample = chosen.to_vec();
            subsample.sort_unstable();

            let root = match config.algorithm {
                SplitAlgorithm::Cart => {
                    let splitter = CartSplitter {
                        columns: &columns,
                        theta,
                        mtry,
                        min_split: config.cart_min_split,
                    };
                    tree::grow_tree(&splitter, &columns, theta, subsample.clone(), tree_seed)
                }
                SplitAlgorithm::Conditional => {
                    let splitter = CondSplitter {
                        columns: &columns,
                        theta,
                        mtry,
                        min_split: config.cond_min_split,
                        min_leaf: config.cond_min_leaf,
                        n_permutations: config.n_permutations,
                    };
                    tree::grow_tree(&splitter, &columns, theta, subsample.clone(), tree_seed)
                }
            };
            FittedTree {
                seed: tree_seed,
                subsample,
                root,
            }
        })
        .collect();

    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        tau: pseudo.tau,
        seed,
        mtry_used: mtry,
        config: config.clone(),
        columns: column_meta(x),
        trees,
    })
}

/// ⌊√p⌋ fallback when mtry is not set or tuned.
pub fn default_mtry(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).clamp(1, p)
}

/// Candidate grid for mtry tuning: {⌊√p⌋, ⌊p/4⌋, ⌊p/2⌋, p}, clamped to
/// [1, p], deduplicated, ascending.
pub fn default_mtry_grid(p: usize) -> Vec<usize> {
    let mut grid = vec![default_mtry(p), p / 4, p / 2, p];
    for g in &mut grid {
        *g = (*g).clamp(1, p);
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

impl ForestModel {
    /// Predict the restricted mean for each row of `frame` by averaging the
    /// per-tree leaf predictions.
    pub fn predict(&self, frame: &CovariateFrame) -> Result<Vec<f64>> {
        self.check_frame(frame)?;
        let columns = working_columns(frame);
        let n = frame.n_rows();
        Ok((0..n)
            .into_par_iter()
            .map(|row| {
                let mut sum = 0.0;
                for tree in &self.trees {
                    sum += tree.root.predict_row(&columns, row);
                }
                sum / self.trees.len() as f64
            })
            .collect())
    }

    /// Verify that a frame matches the training schema (names, kinds, and
    /// categorical level sets, in order).
    pub fn check_frame(&self, frame: &CovariateFrame) -> Result<()> {
        let incoming = column_meta(frame);
        if incoming != self.columns {
            return Err(Error::InvalidRequest(format!(
                "covariate frame does not match the model's training schema \
                 (expected columns {:?})",
                self.columns.iter().map(|c| &c.name).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<ForestModel> {
        // Look at the version first so old/foreign files fail cleanly.
        #[derive(Deserialize)]
        struct Versioned {
            format_version: u32,
        }
        let v: Versioned = serde_json::from_str(json)?;
        if v.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: v.format_version,
                supported: FOREST_FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ForestModel> {
        ForestModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Choose mtry by k-fold cross-validation over `grid`: for each candidate,
/// forests are fitted on k−1 folds and scored by squared error against the
/// held-out pseudo-values; the candidate with the smallest mean squared
/// error wins, ties going to the smaller mtry.
pub fn tune_mtry(
    x: &CovariateFrame,
    pseudo: &PseudoValueVector,
    config: &ForestConfig,
    grid: &[usize],
    k: usize,
    seed: u64,
) -> Result<usize> {
    let n = x.n_rows();
    let p = x.n_cols();
    if grid.is_empty() {
        return Err(Error::InvalidRequest(String::from("empty mtry grid")));
    }
    let mut grid: Vec<usize> = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    for &g in &grid {
        if g == 0 || g > p {
            return Err(Error::InvalidRequest(format!("mtry {g} outside [1, {p}]")));
        }
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    if k < 2 || k > n {
        return Err(Error::InvalidRequest(format!(
            "fold count {k} outside [2, {n}]"
        )));
    }

    // Same folds for every candidate.
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut stream_rng(seed, &[stream::TUNE, stream::FOLD]));
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; n];
        for (pos, &row) in rows.iter().enumerate() {
            f[row] = pos % k;
        }
        f
    };

    let mut best: Option<(usize, f64)> = None;
    for &mtry in &grid {
        let mut sq_err = 0.0;
        for fold in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            if train.is_empty() || test.is_empty() {
                continue;
            }
            let x_train = x.select_rows(&train);
            let pseudo_train = PseudoValueVector {
                tau: pseudo.tau,
                values: train.iter().map(|&i| pseudo.values[i]).collect(),
            };
            let fold_config = ForestConfig {
                mtry: Some(mtry),
                ..config.clone()
            };
            let fold_seed = derive_seed(seed, &[stream::TUNE, mtry as u64, stream::FOLD, fold as u64]);
            let model = fit_forest(&x_train, &pseudo_train, &fold_config, fold_seed)?;
            let x_test = x.select_rows(&test);
            let pred = model.predict(&x_test)?;
            for (pos, &i) in test.iter().enumerate() {
                let d = pred[pos] - pseudo.values[i];
                sq_err += d * d;
            }
        }
        let mse = sq_err / n as f64;
        if best.map_or(true, |(_, b)| mse < b) {
            best = Some((mtry, mse));
        }
    }
    Ok(best.expect("grid nonempty").0)
}
