//! Stage feature maps written in a small formula language.
//!
//! A formula is a comma-separated list of terms. A term is a column name,
//! `1` (intercept), or an interaction of names joined by `:` such as
//! `L1:A1`. An intercept is added unless the formula lists `0` or `-1`.
//! `"0"` alone is the empty (null) map.

use crate::data::{History, Schema, VarRef};
use crate::error::{DtrError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    label: String,
    factors: Vec<VarRef>,
}

impl Term {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[VarRef] {
        &self.factors
    }

    fn eval(&self, h: &History<'_>) -> f64 {
        self.factors.iter().map(|v| h.value(v)).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    stage: usize,
    terms: Vec<Term>,
}

impl FeatureMap {
    pub fn parse(formula: &str, stage: usize, schema: &Schema) -> Result<Self> {
        let err = |reason: String| DtrError::Formula {
            formula: formula.to_string(),
            reason,
        };
        if stage == 0 || stage > schema.stage_count() {
            return Err(err(format!(
                "stage {stage} outside 1..={}",
                schema.stage_count()
            )));
        }
        let tokens: Vec<&str> = formula
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        let no_intercept = tokens.iter().any(|t| *t == "0" || *t == "-1");
        let mut terms = Vec::new();
        if !no_intercept {
            terms.push(Term {
                label: "1".into(),
                factors: Vec::new(),
            });
        }
        for tok in tokens {
            if tok == "0" || tok == "-1" || tok == "1" {
                continue;
            }
            let mut factors = Vec::new();
            for name in tok.split(':').map(str::trim) {
                let var = schema
                    .lookup(name)
                    .ok_or_else(|| err(format!("unknown column `{name}`")))?;
                if var.available_from() > stage {
                    return Err(err(format!(
                        "`{name}` is not part of the stage-{stage} history"
                    )));
                }
                factors.push(var);
            }
            let label = factors
                .iter()
                .map(|v| schema.name(v))
                .collect::<Vec<_>>()
                .join(":");
            if terms.iter().any(|t| t.label == label) {
                return Err(err(format!("duplicate term `{label}`")));
            }
            terms.push(Term { label, factors });
        }
        Ok(Self { stage, terms })
    }

    /// The map with no terms.
    pub fn empty(stage: usize) -> Self {
        Self {
            stage,
            terms: Vec::new(),
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label.clone()).collect()
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.iter().any(Term::is_intercept)
    }

    /// Formula that parses back to this map.
    pub fn formula(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if !self.has_intercept() {
            parts.push("0".into());
        }
        parts.extend(self.terms.iter().map(|t| t.label.clone()));
        parts.join(",")
    }

    pub fn eval_into(&self, h: &History<'_>, out: &mut [f64]) {
        debug_assert!(h.stage() >= self.stage);
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(h);
        }
    }

    pub fn eval(&self, h: &History<'_>) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(h)).collect()
    }

    /// `coefficientsᵀ r(h)` without allocating.
    pub fn dot(&self, h: &History<'_>, coefficients: &[f64]) -> f64 {
        debug_assert_eq!(coefficients.len(), self.terms.len());
        self.terms
            .iter()
            .zip(coefficients)
            .map(|(t, c)| c * t.eval(h))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{StageRecord, Trajectory};

    fn schema() -> Schema {
        Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap()
    }

    #[test]
    fn parses_interactions_and_intercept() {
        let m = FeatureMap::parse("1,L1,A1,L1:A1,L2", 2, &schema()).unwrap();
        assert_eq!(m.labels(), vec!["1", "L1", "A1", "L1:A1", "L2"]);
        let t = Trajectory::new(
            vec![StageRecord::new(vec![3.0], 1), StageRecord::new(vec![5.0], 0)],
            0.0,
        )
        .unwrap();
        let h = t.history(2).unwrap();
        assert_eq!(m.eval(&h), vec![1.0, 3.0, 1.0, 3.0, 5.0]);
        assert_eq!(m.dot(&h, &[1.0, 1.0, 1.0, 1.0, 1.0]), 13.0);
    }

    #[test]
    fn implicit_intercept_and_null_map() {
        let m = FeatureMap::parse("L1", 1, &schema()).unwrap();
        assert_eq!(m.labels(), vec!["1", "L1"]);
        let null = FeatureMap::parse("0", 1, &schema()).unwrap();
        assert!(null.is_empty());
        let no_int = FeatureMap::parse("-1, L1", 1, &schema()).unwrap();
        assert_eq!(no_int.labels(), vec!["L1"]);
        assert_eq!(no_int.formula(), "0,L1");
        assert_eq!(
            FeatureMap::parse(&no_int.formula(), 1, &schema()).unwrap(),
            no_int
        );
    }

    #[test]
    fn rejects_future_variables() {
        assert!(FeatureMap::parse("1,L2", 1, &schema()).is_err());
        assert!(FeatureMap::parse("1,A2", 2, &schema()).is_err());
        assert!(FeatureMap::parse("1,A1", 1, &schema()).is_err());
        assert!(FeatureMap::parse("1,BOGUS", 2, &schema()).is_err());
    }
}
