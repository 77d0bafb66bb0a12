//! Realization of a term list into a numeric design matrix.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::design::spline::{knots_at_quantiles, rcs_basis};
use crate::design::terms::Term;
use crate::error::{Error, Result};

/// Term list with all data-dependent choices (knots, levels) frozen, so
/// that the same encoding can be applied to counterfactual copies of the
/// data.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    terms: Vec<Resolved>,
    exposure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Resolved {
    Intercept,
    Main(String),
    Spline { column: String, knots: Vec<f64> },
    Interaction(Box<Resolved>, Box<Resolved>),
    Categorical { column: String, levels: Vec<f64> },
}

impl Resolved {
    fn resolve(term: &Term, data: &Dataset) -> Result<Self> {
        term.validate()?;
        Ok(match term {
            Term::Intercept => Resolved::Intercept,
            Term::Main(c) => {
                data.column(c)?;
                Resolved::Main(c.clone())
            }
            Term::Spline(c, spec) => {
                let knots = knots_at_quantiles(c, data.column(c)?, &spec.quantiles()?)?;
                Resolved::Spline {
                    column: c.clone(),
                    knots,
                }
            }
            Term::Interaction(a, b) => {
                Resolved::Interaction(Box::new(Self::resolve(a, data)?), Box::new(Self::resolve(b, data)?))
            }
            Term::Categorical(c, reference) => {
                let mut levels: Vec<f64> = data.column(c)?.to_vec();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                if levels.len() < 2 {
                    return Err(Error::DegenerateColumn(c.clone()));
                }
                let reference = reference.unwrap_or(levels[0]);
                let before = levels.len();
                levels.retain(|&l| l != reference);
                if levels.len() == before {
                    return Err(Error::InvalidTerm(format!(
                        "reference level {reference} does not occur in `{c}`"
                    )));
                }
                Resolved::Categorical {
                    column: c.clone(),
                    levels,
                }
            }
        })
    }

    fn uses(&self, col: &str) -> bool {
        match self {
            Resolved::Intercept => false,
            Resolved::Main(c) => c == col,
            Resolved::Spline { column, .. } | Resolved::Categorical { column, .. } => column == col,
            Resolved::Interaction(a, b) => a.uses(col) || b.uses(col),
        }
    }

    fn realize(&self, data: &Dataset, out: &mut Vec<(String, Vec<f64>)>) -> Result<()> {
        match self {
            Resolved::Intercept => out.push(("(Intercept)".into(), vec![1.0; data.n()])),
            Resolved::Main(c) => out.push((c.clone(), data.column(c)?.to_vec())),
            Resolved::Spline { column, knots } => {
                let cols = rcs_basis(data.column(column)?, knots)?;
                let k = knots.len();
                for (j, col) in cols.into_iter().enumerate() {
                    out.push((format!("rcs({column},{k})[{}]", j + 1), col));
                }
            }
            Resolved::Categorical { column, levels } => {
                let x = data.column(column)?;
                for &l in levels {
                    let col = x.iter().map(|&v| if v == l { 1.0 } else { 0.0 }).collect();
                    out.push((format!("{column}={l}"), col));
                }
            }
            Resolved::Interaction(a, b) => {
                let (mut left, mut right) = (Vec::new(), Vec::new());
                a.realize(data, &mut left)?;
                b.realize(data, &mut right)?;
                for (la, ca) in &left {
                    for (lb, cb) in &right {
                        let prod = ca.iter().zip(cb).map(|(u, v)| u * v).collect();
                        out.push((format!("{la}:{lb}"), prod));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Realized `n x p` design matrix.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Columns whose values depend on the exposure column.
    pub exposure_cols: Vec<usize>,
    pub intercept: Option<usize>,
    /// Numerical rank of `x`.
    pub rank: usize,
    pub design: Design,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn rank_warning(&self) -> bool {
        self.rank < self.p()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl Design {
    pub fn resolve(terms: &[Term], data: &Dataset, exposure: Option<&str>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidTerm("empty term list".into()));
        }
        if let Some(e) = exposure {
            data.column(e)?;
        }
        let terms = terms
            .iter()
            .map(|t| Resolved::resolve(t, data))
            .collect::<Result<Vec<_>>>()?;
        Ok(Design {
            terms,
            exposure: exposure.map(str::to_string),
        })
    }

    pub fn exposure(&self) -> Option<&str> {
        self.exposure.as_deref()
    }

    /// Builds the matrix for `data` using the frozen encoding, without the
    /// degeneracy checks applied to the estimation sample.
    pub fn realize(&self, data: &Dataset) -> Result<(DMatrix<f64>, Vec<String>, Vec<usize>)> {
        let mut cols = Vec::new();
        let mut exposure_cols = Vec::new();
        for t in &self.terms {
            let before = cols.len();
            t.realize(data, &mut cols)?;
            if self.exposure.as_deref().is_some_and(|e| t.uses(e)) {
                exposure_cols.extend(before..cols.len());
            }
        }
        let mut seen = BTreeSet::new();
        for (l, _) in &cols {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateColumn(l.clone()));
            }
        }
        let n = data.n();
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
        let labels = cols.into_iter().map(|(l, _)| l).collect();
        Ok((x, labels, exposure_cols))
    }
}

fn numerical_rank(x: &DMatrix<f64>) -> usize {
    if x.ncols() == 0 {
        return 0;
    }
    // Rank from the eigenvalues of the Gram matrix, which is p x p.
    let gram = x.transpose() * x;
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 1e2;
    eig.eigenvalues.iter().filter(|&&v| v > tol).count()
}

/// Builds the design matrix for `terms` on `data`. `exposure` names the
/// column whose derived columns are reported in `exposure_cols`.
pub fn build_design_matrix(data: &Dataset, terms: &[Term], exposure: Option<&str>) -> Result<DesignMatrix> {
    let design = Design::resolve(terms, data, exposure)?;
    let (x, labels, exposure_cols) = design.realize(data)?;
    let intercept = labels.iter().position(|l| l == "(Intercept)");
    for (j, label) in labels.iter().enumerate() {
        if Some(j) == intercept {
            continue;
        }
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::DegenerateColumn(label.clone()));
        }
    }
    let rank = numerical_rank(&x);
    Ok(DesignMatrix {
        x,
        labels,
        exposure_cols,
        intercept,
        rank,
        design,
    })
}
