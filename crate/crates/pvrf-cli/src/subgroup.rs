//! Group summaries of per-row predictions.
//!
//! A grouping rule is a labeled predicate over the covariate frame, written
//! on the command line as `label:clause&clause&…`, where each clause is
//! `column OP value` with `OP` one of `<= >= < > == !=`.  Continuous and
//! dichotomous columns compare numerically; categorical columns support
//! `==`/`!=` against a level name.  The special rule body `all` matches
//! every row.  Rules may overlap or leave rows uncovered — each is reported
//! independently with its count, mean, and standard deviation.

use pvrf::data::{CovariateData, CovariateFrame};
use pvrf::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
    Ne,
}

#[derive(Debug, Clone)]
struct Clause {
    column: String,
    op: Op,
    /// Right-hand side as written; parsed numerically where the column kind
    /// demands it.
    value: String,
}

/// One labeled predicate.
#[derive(Debug, Clone)]
pub struct GroupRule {
    pub label: String,
    clauses: Vec<Clause>,
}

/// Count, mean, and standard deviation of one group's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub count: usize,
    /// Absent when the group is empty.
    pub mean: Option<f64>,
    /// Sample standard deviation; absent below two members.
    pub sd: Option<f64>,
}

impl GroupRule {
    /// Parse `label:clause&clause&…` (or `label:all`).
    pub fn parse(text: &str) -> Result<GroupRule> {
        let (label, body) = text.split_once(':').ok_or_else(|| {
            Error::InvalidRequest(format!(
                "group rule {text:?} must look like \"label:column<=value\""
            ))
        })?;
        if label.is_empty() {
            return Err(Error::InvalidRequest(format!(
                "group rule {text:?} has an empty label"
            )));
        }
        let clauses = if body.trim() == "all" {
            Vec::new()
        } else {
            body.split('&').map(parse_clause).collect::<Result<_>>()?
        };
        Ok(GroupRule {
            label: label.to_string(),
            clauses,
        })
    }

    fn matches(&self, frame: &CovariateFrame, row: usize) -> Result<bool> {
        for clause in &self.clauses {
            if !clause_holds(clause, frame, row)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn parse_clause(text: &str) -> Result<Clause> {
    // Two-character operators first so "<=" is not read as "<" then "=".
    for (token, op) in [
        ("<=", Op::Le),
        (">=", Op::Ge),
        ("==", Op::Eq),
        ("!=", Op::Ne),
        ("<", Op::Lt),
        (">", Op::Gt),
    ] {
        if let Some(pos) = text.find(token) {
            let column = text[..pos].trim();
            let value = text[pos + token.len()..].trim();
            if column.is_empty() || value.is_empty() {
                break;
            }
            return Ok(Clause {
                column: column.to_string(),
                op,
                value: value.to_string(),
            });
        }
    }
    Err(Error::InvalidRequest(format!(
        "cannot parse group clause {text:?} (expected column OP value)"
    )))
}

fn clause_holds(clause: &Clause, frame: &CovariateFrame, row: usize) -> Result<bool> {
    let column = frame.by_name(&clause.column)?;
    match &column.data {
        CovariateData::Categorical { levels, codes } => {
            let level = &levels[codes[row] as usize];
            match clause.op {
                Op::Eq => Ok(level == &clause.value),
                Op::Ne => Ok(level != &clause.value),
                _ => Err(Error::InvalidRequest(format!(
                    "column {:?} is categorical; only == and != apply",
                    clause.column
                ))),
            }
        }
        _ => {
            let rhs: f64 = clause.value.parse().map_err(|_| {
                Error::InvalidRequest(format!(
                    "clause value {:?} is not numeric for column {:?}",
                    clause.value, clause.column
                ))
            })?;
            let lhs = column.numeric(row);
            Ok(match clause.op {
                Op::Le => lhs <= rhs,
                Op::Ge => lhs >= rhs,
                Op::Lt => lhs < rhs,
                Op::Gt => lhs > rhs,
                Op::Eq => lhs == rhs,
                Op::Ne => lhs != rhs,
            })
        }
    }
}

/// Summarize `values` within each rule's group.
///
/// Empty groups are reported with count 0 and no mean; a one-row group has
/// a mean but no standard deviation.
pub fn subgroup_summary(
    values: &[f64],
    frame: &CovariateFrame,
    rules: &[GroupRule],
) -> Result<Vec<GroupSummary>> {
    if values.len() != frame.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs covariate rows",
            expected: frame.n_rows(),
            got: values.len(),
        });
    }
    rules
        .iter()
        .map(|rule| {
            let mut members = Vec::new();
            for (row, &v) in values.iter().enumerate() {
                if rule.matches(frame, row)? {
                    members.push(v);
                }
            }
            let count = members.len();
            let mean = (count > 0).then(|| members.iter().sum::<f64>() / count as f64);
            let sd = (count > 1).then(|| {
                let m = mean.unwrap();
                (members.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (count - 1) as f64)
                    .sqrt()
            });
            Ok(GroupSummary {
                label: rule.label.clone(),
                count,
                mean,
                sd,
            })
        })
        .collect()
}
