//! Longitudinal sequential-treatment records.
//!
//! A [`Trajectory`] holds one individual's ordered stages `(L_j, A_j)` and
//! the final outcome `Y`. Trajectories shorter than the dataset's stage count
//! are early-terminated: the stages they did not reach are absent and their
//! outcome was realized after their last observed stage.

use serde::{Deserialize, Serialize};

use crate::error::{DtrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub covariates: Vec<f64>,
    pub action: u8,
}

impl StageRecord {
    pub fn new(covariates: Vec<f64>, action: u8) -> Self {
        Self { covariates, action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    stages: Vec<StageRecord>,
    outcome: f64,
}

impl Trajectory {
    pub fn new(stages: Vec<StageRecord>, outcome: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(DtrError::Data("trajectory has no stages".into()));
        }
        if !outcome.is_finite() {
            return Err(DtrError::Data(format!("non-finite outcome {outcome}")));
        }
        for (j, s) in stages.iter().enumerate() {
            if s.action > 1 {
                return Err(DtrError::Data(format!(
                    "stage {} action {} is not binary",
                    j + 1,
                    s.action
                )));
            }
            if let Some(x) = s.covariates.iter().find(|x| !x.is_finite()) {
                return Err(DtrError::Data(format!(
                    "stage {} has non-finite covariate {x}",
                    j + 1
                )));
            }
        }
        Ok(Self { stages, outcome })
    }

    /// Number of stages this individual reached.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn outcome(&self) -> f64 {
        self.outcome
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    /// Observed action at stage `j` (1-based).
    pub fn action(&self, j: usize) -> u8 {
        self.stages[j - 1].action
    }

    pub fn covariates(&self, j: usize) -> &[f64] {
        &self.stages[j - 1].covariates
    }

    pub fn reaches(&self, j: usize) -> bool {
        j <= self.stages.len()
    }

    /// History available before the stage-`j` decision: `(L_1..L_j, A_1..A_{j-1})`.
    pub fn history(&self, j: usize) -> Result<History<'_>> {
        if j == 0 || j > self.stages.len() {
            return Err(DtrError::StageIndex {
                stage: j,
                max: self.stages.len(),
            });
        }
        Ok(History {
            records: &self.stages[..j],
        })
    }
}

/// Prefix view `(L̄_j, Ā_{j-1})` of a trajectory. The stage-`j` action is
/// never exposed.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    records: &'a [StageRecord],
}

impl<'a> History<'a> {
    /// Builds a history from the first `j` records; the action stored in the
    /// last record is ignored.
    pub fn from_records(records: &'a [StageRecord]) -> Self {
        assert!(!records.is_empty(), "history needs at least one stage");
        Self { records }
    }

    pub fn stage(&self) -> usize {
        self.records.len()
    }

    /// Covariates `L_k` for `k <= j`.
    pub fn covariates(&self, k: usize) -> &'a [f64] {
        &self.records[k - 1].covariates
    }

    /// Action `A_k`, available only for `k < j`.
    pub fn action(&self, k: usize) -> Option<u8> {
        (k >= 1 && k < self.records.len()).then(|| self.records[k - 1].action)
    }

    pub fn covariate_history(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.records.iter().map(|r| r.covariates.as_slice())
    }

    pub fn action_history(&self) -> Vec<u8> {
        self.records[..self.records.len() - 1]
            .iter()
            .map(|r| r.action)
            .collect()
    }

    pub fn value(&self, var: &VarRef) -> f64 {
        match var.kind {
            VarKind::Covariate(i) => self.records[var.stage - 1].covariates[i],
            VarKind::Action => {
                debug_assert!(var.stage < self.records.len());
                f64::from(self.records[var.stage - 1].action)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Covariate(usize),
    Action,
}

/// A history variable: covariate `i` of stage `stage`, or the action `A_stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub stage: usize,
    pub kind: VarKind,
}

impl VarRef {
    /// Earliest decision stage whose history contains this variable.
    pub fn available_from(&self) -> usize {
        match self.kind {
            VarKind::Covariate(_) => self.stage,
            VarKind::Action => self.stage + 1,
        }
    }
}

/// Per-stage covariate labels. Actions are always named `A1..AK`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    stage_columns: Vec<Vec<String>>,
}

impl Schema {
    pub fn new(stage_columns: Vec<Vec<String>>) -> Result<Self> {
        if stage_columns.is_empty() {
            return Err(DtrError::Data("schema needs at least one stage".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (j, cols) in stage_columns.iter().enumerate() {
            for c in cols {
                if c == "Y" || action_stage(c).is_some() || c == "1" || c.is_empty() {
                    return Err(DtrError::Data(format!(
                        "stage {} covariate name `{c}` is reserved",
                        j + 1
                    )));
                }
                if !seen.insert(c.clone()) {
                    return Err(DtrError::Data(format!("duplicate covariate name `{c}`")));
                }
            }
        }
        Ok(Self { stage_columns })
    }

    pub fn stage_count(&self) -> usize {
        self.stage_columns.len()
    }

    pub fn stage_dims(&self) -> Vec<usize> {
        self.stage_columns.iter().map(Vec::len).collect()
    }

    pub fn columns(&self, j: usize) -> &[String] {
        &self.stage_columns[j - 1]
    }

    pub fn lookup(&self, name: &str) -> Option<VarRef> {
        if let Some(j) = action_stage(name) {
            return (j <= self.stage_count()).then_some(VarRef {
                stage: j,
                kind: VarKind::Action,
            });
        }
        self.stage_columns.iter().enumerate().find_map(|(j, cols)| {
            cols.iter().position(|c| c == name).map(|i| VarRef {
                stage: j + 1,
                kind: VarKind::Covariate(i),
            })
        })
    }

    pub fn name(&self, var: &VarRef) -> String {
        match var.kind {
            VarKind::Covariate(i) => self.stage_columns[var.stage - 1][i].clone(),
            VarKind::Action => format!("A{}", var.stage),
        }
    }

    /// Wide CSV header: stage covariates, then `A_j`, per stage, then `Y`.
    pub fn wide_header(&self) -> Vec<String> {
        let mut h = Vec::new();
        for (j, cols) in self.stage_columns.iter().enumerate() {
            h.extend(cols.iter().cloned());
            h.push(format!("A{}", j + 1));
        }
        h.push("Y".into());
        h
    }
}

/// Parses `A<j>` into `j`.
fn action_stage(name: &str) -> Option<usize> {
    name.strip_prefix('A')
        .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|rest| rest.parse().ok())
        .filter(|&j| j >= 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(schema: Schema, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(DtrError::Data("dataset has no trajectories".into()));
        }
        let dims = schema.stage_dims();
        for (i, t) in trajectories.iter().enumerate() {
            if t.stage_count() > dims.len() {
                return Err(DtrError::Data(format!(
                    "trajectory {i} has {} stages, schema has {}",
                    t.stage_count(),
                    dims.len()
                )));
            }
            for (j, s) in t.stages().iter().enumerate() {
                if s.covariates.len() != dims[j] {
                    return Err(DtrError::Data(format!(
                        "trajectory {i} stage {} has {} covariates, expected {}",
                        j + 1,
                        s.covariates.len(),
                        dims[j]
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            trajectories,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn stage_count(&self) -> usize {
        self.schema.stage_count()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::outcome).collect()
    }

    /// Indices of trajectories that reached stage `j`.
    pub fn reaching(&self, j: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.trajectories[i].reaches(j))
            .collect()
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Dataset::new(
            self.schema.clone(),
            rows.iter().map(|&i| self.trajectories[i].clone()).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_individual1() -> Trajectory {
        Trajectory::new(
            vec![
                StageRecord::new(vec![356.03], 0),
                StageRecord::new(vec![357.76], 0),
            ],
            1016.17,
        )
        .unwrap()
    }

    #[test]
    fn history_prefix() {
        let t = table1_individual1();
        let h = t.history(2).unwrap();
        assert_eq!(h.stage(), 2);
        let covs: Vec<_> = h.covariate_history().map(|c| c.to_vec()).collect();
        assert_eq!(covs, vec![vec![356.03], vec![357.76]]);
        assert_eq!(h.action_history(), vec![0]);
        assert_eq!(h.action(2), None);
    }

    #[test]
    fn history_base_case() {
        let t = table1_individual1();
        let h = t.history(1).unwrap();
        assert_eq!(h.covariates(1), &[356.03]);
        assert!(h.action_history().is_empty());
    }

    #[test]
    fn history_out_of_range() {
        let t = table1_individual1();
        assert!(matches!(
            t.history(3),
            Err(DtrError::StageIndex { stage: 3, max: 2 })
        ));
        assert!(t.history(0).is_err());
    }

    #[test]
    fn rejects_multilevel_action() {
        let r = Trajectory::new(vec![StageRecord::new(vec![1.0], 2)], 0.0);
        assert!(matches!(r, Err(DtrError::Data(_))));
    }

    #[test]
    fn rejects_non_finite_outcome() {
        assert!(Trajectory::new(vec![StageRecord::new(vec![1.0], 0)], f64::NAN).is_err());
    }

    #[test]
    fn schema_lookup() {
        let s = Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap();
        assert_eq!(
            s.lookup("L2"),
            Some(VarRef {
                stage: 2,
                kind: VarKind::Covariate(0)
            })
        );
        assert_eq!(
            s.lookup("A1"),
            Some(VarRef {
                stage: 1,
                kind: VarKind::Action
            })
        );
        assert_eq!(s.lookup("A3"), None);
        assert_eq!(s.lookup("L9"), None);
        assert_eq!(s.wide_header(), vec!["L1", "A1", "L2", "A2", "Y"]);
        assert!(Schema::new(vec![vec!["A1".into()]]).is_err());
    }

    #[test]
    fn dataset_accepts_prefixes_only() {
        let s = Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap();
        let short = Trajectory::new(vec![StageRecord::new(vec![1.0], 1)], 3.0).unwrap();
        let d = Dataset::new(s.clone(), vec![table1_individual1(), short]).unwrap();
        assert_eq!(d.reaching(2), vec![0]);
        let bad = Trajectory::new(vec![StageRecord::new(vec![1.0, 2.0], 1)], 3.0).unwrap();
        assert!(Dataset::new(s, vec![bad]).is_err());
    }
}
