//! Expansion of a parsed formula against a dataset.

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::formula::{FormulaSpec, Term};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("formula response `{found}` does not match the dataset's {role} column `{expected}`")]
    ResponseMismatch {
        role: &'static str,
        found: String,
        expected: String,
    },
    #[error("treatment column `{0}` does not appear in the formula")]
    TreatmentNotInFormula(String),
}

/// Row-major n×p regression design plus the responses it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub terms: Vec<Term>,
    pub treat_col: String,
    pub n: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
    /// Raw values of every formula variable, needed to recompute
    /// interaction columns under intervention.
    vars: Vec<String>,
    var_values: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.x[i * self.p + j]).collect()
    }

    /// Linear predictors x_i'β for every subject.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.p, "coefficient length");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    /// Copy of the design with the treatment set to `a` for every subject:
    /// the treatment column and all interactions involving it are rewritten,
    /// purely covariate columns are untouched.
    pub fn intervene(&self, a: f64) -> DesignMatrix {
        let mut out = self.clone();
        let t = self
            .vars
            .iter()
            .position(|v| v == &self.treat_col)
            .expect("treatment is a formula variable");
        out.var_values[t] = vec![a; self.n];
        out.x = assemble(&out.terms, &out.vars, &out.var_values, self.n);
        out
    }

    /// Design with no covariates; used for prior-only and baseline-only fits.
    pub fn empty(y: Vec<f64>, delta: Vec<f64>) -> DesignMatrix {
        let n = y.len();
        DesignMatrix {
            names: vec![],
            terms: vec![],
            treat_col: String::new(),
            n,
            p: 0,
            x: vec![],
            y,
            delta,
            vars: vec![],
            var_values: vec![],
        }
    }

    /// Design from an explicit row-major matrix of main effects; the first
    /// column is taken as the treatment.
    pub fn from_matrix(names: Vec<String>, x: Vec<f64>, y: Vec<f64>, delta: Vec<f64>) -> DesignMatrix {
        let n = y.len();
        let p = names.len();
        assert_eq!(x.len(), n * p, "matrix shape");
        assert_eq!(delta.len(), n, "event vector length");
        let var_values: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| x[i * p + j]).collect()).collect();
        DesignMatrix {
            terms: names.iter().cloned().map(Term::MainEffect).collect(),
            treat_col: names.first().cloned().unwrap_or_default(),
            vars: names.clone(),
            names,
            n,
            p,
            x,
            y,
            delta,
            var_values,
        }
    }
}

fn assemble(terms: &[Term], vars: &[String], values: &[Vec<f64>], n: usize) -> Vec<f64> {
    let idx = |v: &str| vars.iter().position(|w| w == v).expect("known variable");
    let p = terms.len();
    let mut x = vec![0.0; n * p];
    for (j, t) in terms.iter().enumerate() {
        match t {
            Term::MainEffect(v) => {
                let col = &values[idx(v)];
                for i in 0..n {
                    x[i * p + j] = col[i];
                }
            }
            Term::Interaction(a, b) => {
                let (ca, cb) = (&values[idx(a)], &values[idx(b)]);
                for i in 0..n {
                    x[i * p + j] = ca[i] * cb[i];
                }
            }
        }
    }
    x
}

/// Expands `spec` against `d`. Columns follow `spec.terms` order.
pub fn build_design(d: &Dataset, spec: &FormulaSpec) -> Result<DesignMatrix, DesignError> {
    if spec.time_var != d.time_col {
        return Err(DesignError::ResponseMismatch {
            role: "time",
            found: spec.time_var.clone(),
            expected: d.time_col.clone(),
        });
    }
    if spec.event_var != d.event_col {
        return Err(DesignError::ResponseMismatch {
            role: "event",
            found: spec.event_var.clone(),
            expected: d.event_col.clone(),
        });
    }
    let vars: Vec<String> = spec.variables().into_iter().map(String::from).collect();
    if !vars.contains(&d.treat_col) {
        return Err(DesignError::TreatmentNotInFormula(d.treat_col.clone()));
    }
    let var_values = vars
        .iter()
        .map(|v| d.numeric(v).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>, _>>()?;
    let n = d.n();
    Ok(DesignMatrix {
        names: spec.term_names(),
        terms: spec.terms.clone(),
        treat_col: d.treat_col.clone(),
        n,
        p: spec.terms.len(),
        x: assemble(&spec.terms, &vars, &var_values, n),
        y: d.times().to_vec(),
        delta: d.events().to_vec(),
        vars,
        var_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv;
    use crate::formula::parse_formula;

    fn data() -> Dataset {
        read_csv(
            "y,delta,A,x,z\n1,1,0,1.0,3\n2,0,1,2.5,4\n3,1,1,-1,5\n".as_bytes(),
            "y",
            "delta",
            "A",
        )
        .unwrap()
    }

    #[test]
    fn passthrough_column() {
        let d = build_design(&data(), &parse_formula("Surv(y,delta) ~ A").unwrap()).unwrap();
        assert_eq!((d.n, d.p), (3, 1));
        assert_eq!(d.x, vec![0.0, 1.0, 1.0]);
        assert_eq!(d.y, vec![1.0, 2.0, 3.0]);
        assert_eq!(d.delta, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn interaction_is_product() {
        let d = build_design(&data(), &parse_formula("Surv(y,delta) ~ A*x").unwrap()).unwrap();
        assert_eq!(d.names, vec!["A", "x", "A:x"]);
        assert_eq!(d.row(1), &[1.0, 2.5, 2.5]);
    }

    #[test]
    fn intervention_rewrites_treatment_and_interactions_only() {
        let d = build_design(&data(), &parse_formula("Surv(y,delta) ~ A*x + z").unwrap()).unwrap();
        let d0 = d.intervene(0.0);
        let d1 = d.intervene(1.0);
        for i in 0..3 {
            let (r, r0, r1) = (d.row(i), d0.row(i), d1.row(i));
            assert_eq!(r0[0], 0.0);
            assert_eq!(r1[0], 1.0);
            assert_eq!(r0[3], 0.0);
            assert_eq!(r1[3], r[1]);
            assert_eq!(&r0[1..3], &r[1..3]);
            assert_eq!(&r1[1..3], &r[1..3]);
        }
    }

    #[test]
    fn column_errors() {
        let d = data();
        assert!(matches!(
            build_design(&d, &parse_formula("Surv(y,delta) ~ A + w").unwrap()),
            Err(DesignError::Dataset(DatasetError::UnknownColumn(_)))
        ));
        assert!(matches!(
            build_design(&d, &parse_formula("Surv(y,delta) ~ x").unwrap()),
            Err(DesignError::TreatmentNotInFormula(_))
        ));
        assert!(matches!(
            build_design(&d, &parse_formula("Surv(t,delta) ~ A").unwrap()),
            Err(DesignError::ResponseMismatch { .. })
        ));
    }
}
