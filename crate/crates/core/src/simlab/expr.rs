//! Arithmetic and boolean expressions over history variables.
//!
//! Expressions use the `evalexpr` grammar (`+ - * / ^`, comparisons, `&&`,
//! `||`, `!`, `if(c, a, b)`), with every history variable bound as a float.
//! Extra functions: `expit(x)`, `ind(b)` (1.0 if true), `abs`, `log`, `exp`,
//! `sqrt`, `min(a, b)`, `max(a, b)`. Integer literals divide as integers, so
//! write `1.0/2` rather than `1/2`.

use evalexpr::error::EvalexprResultValue;
use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult,
    Node, Value,
};

use crate::data::{History, Schema, VarRef};
use crate::error::{DtrError, Result};
use crate::stats::expit;

type V = Value<DefaultNumericTypes>;

struct RowContext<'a> {
    names: &'a [String],
    values: Vec<V>,
}

fn float_arg(v: &V) -> EvalexprResult<f64, DefaultNumericTypes> {
    match v {
        Value::Boolean(b) => Ok(if *b { 1.0 } else { 0.0 }),
        other => other.as_number(),
    }
}

fn pair_arg(v: &V) -> EvalexprResult<(f64, f64), DefaultNumericTypes> {
    let t = v.as_fixed_len_tuple(2)?;
    Ok((float_arg(&t[0])?, float_arg(&t[1])?))
}

impl Context for RowContext<'_> {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&V> {
        self.names.iter().position(|n| n == identifier).map(|i| &self.values[i])
    }

    fn call_function(&self, identifier: &str, argument: &V) -> EvalexprResultValue<DefaultNumericTypes> {
        let x = || float_arg(argument);
        let out = match identifier {
            "expit" => expit(x()?),
            "ind" => x()?,
            "abs" => x()?.abs(),
            "log" => x()?.ln(),
            "exp" => x()?.exp(),
            "sqrt" => x()?.sqrt(),
            "min" => {
                let (a, b) = pair_arg(argument)?;
                a.min(b)
            }
            "max" => {
                let (a, b) = pair_arg(argument)?;
                a.max(b)
            }
            _ => return Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        };
        Ok(Value::Float(out))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Err(EvalexprError::CustomMessage("builtin functions cannot be toggled".into()))
    }
}

/// A compiled expression with its free variables resolved against a schema.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    node: Node<DefaultNumericTypes>,
    names: Vec<String>,
    vars: Vec<VarRef>,
}

impl Expr {
    /// Compiles `source`; `allowed` decides which variables may appear.
    pub fn compile(source: &str, schema: &Schema, allowed: impl Fn(&VarRef) -> bool) -> Result<Self> {
        let err = |reason: String| DtrError::Formula {
            formula: source.to_string(),
            reason,
        };
        let node = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| err(e.to_string()))?;
        let mut names: Vec<String> = Vec::new();
        let mut vars = Vec::new();
        for id in node.iter_variable_identifiers() {
            if names.iter().any(|n| n == id) {
                continue;
            }
            let var = schema
                .lookup(id)
                .ok_or_else(|| err(format!("unknown variable `{id}`")))?;
            if !allowed(&var) {
                return Err(err(format!("variable `{id}` is not available here")));
            }
            names.push(id.to_string());
            vars.push(var);
        }
        Ok(Self {
            source: source.to_string(),
            node,
            names,
            vars,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[VarRef] {
        &self.vars
    }

    fn eval_value(&self, lookup: &dyn Fn(&VarRef) -> f64) -> Result<V> {
        let ctx = RowContext {
            names: &self.names,
            values: self.vars.iter().map(|v| Value::Float(lookup(v))).collect(),
        };
        self.node.eval_with_context(&ctx).map_err(|e| DtrError::Formula {
            formula: self.source.clone(),
            reason: e.to_string(),
        })
    }

    /// Numeric value; booleans map to 1 and 0.
    pub fn eval_f64(&self, lookup: &dyn Fn(&VarRef) -> f64) -> Result<f64> {
        match self.eval_value(lookup)? {
            Value::Boolean(b) => Ok(if b { 1.0 } else { 0.0 }),
            Value::Float(x) => Ok(x),
            Value::Int(i) => Ok(i as f64),
            other => Err(DtrError::Formula {
                formula: self.source.clone(),
                reason: format!("expected a number, got {other}"),
            }),
        }
    }

    pub fn eval_bool(&self, lookup: &dyn Fn(&VarRef) -> f64) -> Result<bool> {
        match self.eval_value(lookup)? {
            Value::Boolean(b) => Ok(b),
            other => Err(DtrError::Formula {
                formula: self.source.clone(),
                reason: format!("expected a boolean, got {other}"),
            }),
        }
    }
}

/// Boolean decision rule over the stage-`j` history.
#[derive(Debug, Clone)]
pub struct RuleExpr {
    stage: usize,
    expr: Expr,
}

impl RuleExpr {
    pub fn compile(source: &str, stage: usize, schema: &Schema) -> Result<Self> {
        if stage == 0 || stage > schema.stage_count() {
            return Err(DtrError::StageIndex {
                stage,
                max: schema.stage_count(),
            });
        }
        let expr = Expr::compile(source, schema, |v| v.available_from() <= stage)?;
        // reject non-boolean expressions up front
        let probe = expr.eval_value(&|_| 0.0)?;
        if !matches!(probe, Value::Boolean(_)) {
            return Err(DtrError::Formula {
                formula: source.to_string(),
                reason: "rule expressions must be boolean".into(),
            });
        }
        Ok(Self { stage, expr })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn source(&self) -> &str {
        self.expr.source()
    }

    /// Evaluation errors (for instance a domain error) count as "do not treat".
    pub fn eval(&self, h: &History<'_>) -> bool {
        self.expr.eval_bool(&|v| h.value(v)).unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{StageRecord, Trajectory, VarKind};

    fn schema() -> Schema {
        Schema::new(vec![
            vec!["W".into(), "L11".into()],
            vec!["L21".into()],
            vec!["L31".into(), "L32".into()],
        ])
        .unwrap()
    }

    #[test]
    fn stage_three_sum_rule() {
        let s = schema();
        let r = RuleExpr::compile("L31 + L32 > 35", 3, &s).unwrap();
        let t = Trajectory::new(
            vec![
                StageRecord::new(vec![40.0, 1.0], 0),
                StageRecord::new(vec![2.0], 1),
                StageRecord::new(vec![20.0, 20.0], 0),
            ],
            0.0,
        )
        .unwrap();
        assert!(r.eval(&t.history(3).unwrap()));
    }

    #[test]
    fn future_variables_are_rejected() {
        let s = schema();
        assert!(RuleExpr::compile("L21 > 3", 1, &s).is_err());
        assert!(RuleExpr::compile("A1 > 0", 1, &s).is_err());
        assert!(RuleExpr::compile("A1 > 0", 2, &s).is_ok());
        assert!(RuleExpr::compile("L11 + 1", 1, &s).is_err());
        assert!(RuleExpr::compile("Z > 1", 1, &s).is_err());
    }

    #[test]
    fn custom_functions() {
        let s = schema();
        let e = Expr::compile("expit(W) + ind(L11 > 0) + 2 * log(exp(1.5)) + max(W, L11)", &s, |_| true).unwrap();
        let v = e
            .eval_f64(&|var| if var.kind == VarKind::Covariate(0) { 0.0 } else { 3.0 })
            .unwrap();
        assert!((v - (0.5 + 1.0 + 3.0 + 3.0)).abs() < 1e-12);
    }
}
