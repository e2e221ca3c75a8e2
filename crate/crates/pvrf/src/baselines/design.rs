//! Design matrices for the parametric comparison models.
//!
//! A design is described by a list of [`Term`]s referring to covariate
//! columns by name.  Continuous and binary columns contribute one numeric
//! column each; a categorical column with L levels contributes L−1 dummy
//! columns (first level = reference).  Product terms expand both factors and
//! take all pairwise products, so interactions involving categorical columns
//! work the same way as main effects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateData, CovariateFrame};
use crate::error::{Error, Result};

/// One additive term of a linear predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// Main effect of the named column.
    Main(String),
    /// Product (interaction) of two named columns.
    Product(String, String),
}

/// An expanded design: named numeric columns, row count = frame rows.
#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    /// n × q, columns in `names` order.
    pub matrix: DMatrix<f64>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Linear predictor Xβ.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<DVector<f64>> {
        if beta.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                context: "coefficient length",
                expected: self.n_cols(),
                got: beta.len(),
            });
        }
        Ok(&self.matrix * DVector::from_column_slice(beta))
    }
}

/// Expand a main effect into one or more named numeric columns.
fn expand_main(frame: &CovariateFrame, name: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let column = &frame.columns()[frame.index_of(name)?];
    Ok(match &column.data {
        CovariateData::Continuous(v) => vec![(name.to_string(), v.clone())],
        CovariateData::Binary(v) => {
            vec![(name.to_string(), v.iter().map(|&b| f64::from(b)).collect())]
        }
        CovariateData::Categorical { levels, codes } => levels
            .iter()
            .enumerate()
            .skip(1) // first level is the reference
            .map(|(code, level)| {
                let dummy = codes
                    .iter()
                    .map(|&c| if c as usize == code { 1.0 } else { 0.0 })
                    .collect();
                (format!("{name}={level}"), dummy)
            })
            .collect(),
    })
}

/// Build the design matrix for `terms` over `frame`.
pub fn build_design(frame: &CovariateFrame, terms: &[Term]) -> Result<Design> {
    let n = frame.n_rows();
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for term in terms {
        match term {
            Term::Intercept => {
                names.push(String::from("(intercept)"));
                columns.push(vec![1.0; n]);
            }
            Term::Main(name) => {
                for (cname, values) in expand_main(frame, name)? {
                    names.push(cname);
                    columns.push(values);
                }
            }
            Term::Product(a, b) => {
                for (aname, avals) in expand_main(frame, a)? {
                    for (bname, bvals) in expand_main(frame, b)? {
                        names.push(format!("{aname}:{bname}"));
                        columns.push(
                            avals.iter().zip(&bvals).map(|(&x, &y)| x * y).collect(),
                        );
                    }
                }
            }
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidRequest(String::from(
            "design has no columns; give at least one term",
        )));
    }
    let matrix = DMatrix::from_fn(n, names.len(), |i, j| columns[j][i]);
    Ok(Design {
        terms: terms.to_vec(),
        names,
        matrix,
    })
}

/// Main-effect terms for every column of the frame, optionally preceded by
/// an intercept — the standard specification of the comparison models.
pub fn main_effect_terms(frame: &CovariateFrame, intercept: bool) -> Vec<Term> {
    let mut terms = Vec::new();
    if intercept {
        terms.push(Term::Intercept);
    }
    for column in frame.columns() {
        terms.push(Term::Main(column.name.clone()));
    }
    terms
}

/// Least squares of `y` on the design via thin QR, with rank-deficiency
/// detection through the diagonal of R.
pub fn least_squares(design: &Design, y: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let q = design.n_cols();
    if y.len() != design.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "response length",
            expected: design.n_rows(),
            got: y.len(),
        });
    }
    if design.n_rows() < q {
        return Err(Error::RankDeficient {
            context: format!("{context}: fewer rows than columns"),
        });
    }
    let qr = design.matrix.clone().qr();
    let r = qr.r();
    let max_diag = (0..q).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    for j in 0..q {
        if r[(j, j)].abs() <= 1e-10 * max_diag.max(1e-300) {
            return Err(Error::RankDeficient {
                context: format!("{context}: column {:?} is collinear", design.names[j]),
            });
        }
    }
    let rhs = qr.q().transpose() * y;
    r.solve_upper_triangular(&rhs).ok_or_else(|| Error::RankDeficient {
        context: context.to_string(),
    })
}
