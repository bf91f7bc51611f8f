//! Formula evaluation and regime selection.
//!
//! Name resolution, outermost first: the caller's bindings, then any
//! caller-supplied constants, then the blueprint's own constants. Every
//! parameter of the scheme must be bound to a feasible value before
//! anything is computed; guards and bodies then evaluate in plain f64
//! with division by zero and non-finite intermediates reported as
//! errors rather than propagated as infinities.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Blueprint, Comparison, Expr, Formula, Guard, Scheme};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("blueprint has no scheme `{0}`")]
    UnknownScheme(String),
    #[error("scheme `{scheme}` has no formula `{formula}`")]
    UnknownFormula { scheme: String, formula: String },
    #[error("parameter `{0}` is not bound")]
    UnboundParam(String),
    #[error("value {value} for parameter `{param}` is outside its feasible set")]
    OutOfFeasibleSet { param: String, value: f64 },
    #[error("guard of formula `{0}` does not hold under these bindings")]
    GuardFailed(String),
    #[error("division by zero while evaluating formula `{0}`")]
    DivisionByZero(String),
    #[error("non-finite value while evaluating formula `{0}`")]
    NonFiniteResult(String),
    #[error("ambiguous regime: formulas `{0}` and `{1}` both match")]
    AmbiguousRegime(String, String),
    #[error("no formula matches these bindings")]
    NoRegimeMatches,
}

/// The result of evaluating one formula.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub formula: String,
    pub outcome: String,
    pub value: f64,
}

struct Scope<'a> {
    bindings: &'a BTreeMap<String, f64>,
    caller_consts: &'a BTreeMap<String, f64>,
    blueprint: &'a Blueprint,
}

impl Scope<'_> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.bindings
            .get(name)
            .or_else(|| self.caller_consts.get(name))
            .copied()
            .or_else(|| self.blueprint.const_value(name))
    }
}

impl Blueprint {
    /// Evaluates one named formula. The formula's guard, if any, must
    /// hold under the bindings.
    pub fn evaluate(
        &self,
        scheme: &str,
        formula: &str,
        bindings: &BTreeMap<String, f64>,
    ) -> Result<Evaluation, EvalError> {
        self.evaluate_with_consts(scheme, formula, bindings, &BTreeMap::new())
    }

    /// [`Blueprint::evaluate`] with an extra constant tier that shadows
    /// the blueprint's own constants (but never the bindings).
    pub fn evaluate_with_consts(
        &self,
        scheme_name: &str,
        formula_name: &str,
        bindings: &BTreeMap<String, f64>,
        caller_consts: &BTreeMap<String, f64>,
    ) -> Result<Evaluation, EvalError> {
        let scheme = self
            .scheme(scheme_name)
            .ok_or_else(|| EvalError::UnknownScheme(scheme_name.to_string()))?;
        let formula = scheme
            .formula(formula_name)
            .ok_or_else(|| EvalError::UnknownFormula {
                scheme: scheme_name.to_string(),
                formula: formula_name.to_string(),
            })?;
        check_bindings(scheme, bindings)?;
        let scope = Scope {
            bindings,
            caller_consts,
            blueprint: self,
        };
        if let Some(guard) = &formula.guard {
            if !eval_guard(guard, &scope, &formula.name)? {
                return Err(EvalError::GuardFailed(formula.name.clone()));
            }
        }
        finish(formula, &scope)
    }

    /// Picks the formula whose guard holds under the bindings and
    /// evaluates it. Exactly one guarded formula may match; a formula
    /// without a guard is the fallback when no guarded one does.
    pub fn select_regime(
        &self,
        scheme: &str,
        bindings: &BTreeMap<String, f64>,
    ) -> Result<Evaluation, EvalError> {
        self.select_regime_with_consts(scheme, bindings, &BTreeMap::new())
    }

    pub fn select_regime_with_consts(
        &self,
        scheme_name: &str,
        bindings: &BTreeMap<String, f64>,
        caller_consts: &BTreeMap<String, f64>,
    ) -> Result<Evaluation, EvalError> {
        let scheme = self
            .scheme(scheme_name)
            .ok_or_else(|| EvalError::UnknownScheme(scheme_name.to_string()))?;
        check_bindings(scheme, bindings)?;
        let scope = Scope {
            bindings,
            caller_consts,
            blueprint: self,
        };

        let mut matched: Option<&Formula> = None;
        for formula in scheme.formulas.iter().filter(|f| f.guard.is_some()) {
            let guard = formula.guard.as_ref().unwrap();
            if eval_guard(guard, &scope, &formula.name)? {
                if let Some(first) = matched {
                    return Err(EvalError::AmbiguousRegime(
                        first.name.clone(),
                        formula.name.clone(),
                    ));
                }
                matched = Some(formula);
            }
        }
        if matched.is_none() {
            for formula in scheme.formulas.iter().filter(|f| f.guard.is_none()) {
                if let Some(first) = matched {
                    return Err(EvalError::AmbiguousRegime(
                        first.name.clone(),
                        formula.name.clone(),
                    ));
                }
                matched = Some(formula);
            }
        }
        match matched {
            Some(formula) => finish(formula, &scope),
            None => Err(EvalError::NoRegimeMatches),
        }
    }
}

fn check_bindings(scheme: &Scheme, bindings: &BTreeMap<String, f64>) -> Result<(), EvalError> {
    for param in &scheme.params {
        let value = *bindings
            .get(&param.name)
            .ok_or_else(|| EvalError::UnboundParam(param.name.clone()))?;
        if !param.feasible.contains(value) {
            return Err(EvalError::OutOfFeasibleSet {
                param: param.name.clone(),
                value,
            });
        }
    }
    Ok(())
}

fn finish(formula: &Formula, scope: &Scope<'_>) -> Result<Evaluation, EvalError> {
    let value = eval_expr(&formula.expr, scope, &formula.name)?;
    Ok(Evaluation {
        formula: formula.name.clone(),
        outcome: formula.outcome.clone(),
        value,
    })
}

fn eval_guard(guard: &Guard, scope: &Scope<'_>, formula: &str) -> Result<bool, EvalError> {
    for Comparison { lhs, op, rhs } in &guard.clauses {
        let l = eval_expr(lhs, scope, formula)?;
        let r = eval_expr(rhs, scope, formula)?;
        if !op.holds(l, r) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn eval_expr(expr: &Expr, scope: &Scope<'_>, formula: &str) -> Result<f64, EvalError> {
    use super::BinOp::*;
    let value = match expr {
        Expr::Num(v) => *v,
        Expr::Ident(name) => scope
            .lookup(name)
            .ok_or_else(|| EvalError::UnboundParam(name.clone()))?,
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_expr(lhs, scope, formula)?;
            let r = eval_expr(rhs, scope, formula)?;
            match op {
                Add => l + r,
                Sub => l - r,
                Mul => l * r,
                Div => {
                    if r == 0.0 {
                        return Err(EvalError::DivisionByZero(formula.to_string()));
                    }
                    l / r
                }
                Pow => l.powf(r),
            }
        }
    };
    if !value.is_finite() {
        return Err(EvalError::NonFiniteResult(formula.to_string()));
    }
    Ok(value)
}
