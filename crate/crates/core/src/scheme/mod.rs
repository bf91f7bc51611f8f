//! The blueprint language: a small declarative notation in which a
//! component describes its tunable behaviour.
//!
//! A blueprint names a tag and revision, declares shared constants, and
//! groups parameters, outcomes, and formulas into schemes. A northbound
//! reader picks a scheme, checks the feasible sets, and sends back a
//! tweak: a formula name plus one value per parameter. Formulas may
//! carry `when` guards so one scheme can describe several operating
//! regimes.
//!
//! Text is the interchange form. [`Blueprint::parse`] accepts it,
//! [`Blueprint::to_canonical_text`] renders it back in a normal form
//! (stable indentation, minimal parentheses), and parsing the canonical
//! text reproduces the same structure.

mod eval;
mod parse;
mod print;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{EvalError, Evaluation};
pub use parse::ParseError;

/// A parsed blueprint: tag, revision, constants, and schemes, all in
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Blueprint {
    pub tag: String,
    pub revision: u64,
    pub consts: Vec<ConstDecl>,
    pub schemes: Vec<Scheme>,
}

/// A named constant shared by every scheme in the blueprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub value: f64,
}

/// A named group of parameters, outcomes, and formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub outcomes: Vec<String>,
    pub formulas: Vec<Formula>,
}

/// One tunable input: a name, the set of values the component accepts
/// for it, and an optional free-text unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub feasible: FeasibleSet,
    pub unit: Option<String>,
}

/// The values a parameter may take: an explicit list or a closed
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Discrete(Vec<f64>),
    Interval { lo: f64, hi: f64 },
}

impl FeasibleSet {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            FeasibleSet::Discrete(values) => values.contains(&v),
            FeasibleSet::Interval { lo, hi } => *lo <= v && v <= *hi,
        }
    }

    /// Whether `self` admits every value `other` does.
    pub fn is_superset_of(&self, other: &FeasibleSet) -> bool {
        match (self, other) {
            (_, FeasibleSet::Discrete(values)) => values.iter().all(|v| self.contains(*v)),
            (FeasibleSet::Interval { lo, hi }, FeasibleSet::Interval { lo: olo, hi: ohi }) => {
                lo <= olo && ohi <= hi
            }
            // A discrete set covers an interval only when the interval
            // is a single point.
            (FeasibleSet::Discrete(_), FeasibleSet::Interval { lo, hi }) => {
                lo == hi && self.contains(*lo)
            }
        }
    }
}

/// `name (when guard)? : expr -> outcome`
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub name: String,
    pub guard: Option<Guard>,
    pub expr: Expr,
    pub outcome: String,
}

/// Conjunction of comparisons; the formula applies only while all hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub clauses: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn holds(self, l: f64, r: f64) -> bool {
        match self {
            CmpOp::Le => l <= r,
            CmpOp::Lt => l < r,
            CmpOp::Ge => l >= r,
            CmpOp::Gt => l > r,
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// Arithmetic over parameters and constants. Negative literals are part
/// of the number; there is no general unary minus.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

impl Blueprint {
    /// Parses blueprint text. Identifier use is checked during the
    /// parse: every name in a formula body must be a parameter of the
    /// enclosing scheme or a blueprint constant.
    pub fn parse(text: &str) -> Result<Blueprint, ParseError> {
        parse::parse_blueprint(text)
    }

    pub fn scheme(&self, name: &str) -> Option<&Scheme> {
        self.schemes.iter().find(|s| s.name == name)
    }

    pub fn const_value(&self, name: &str) -> Option<f64> {
        self.consts.iter().find(|c| c.name == name).map(|c| c.value)
    }

    /// Whether this blueprint offers everything `base` does: same
    /// constants, and for every scheme of `base` a scheme here with at
    /// least the same parameters (no narrower feasible sets, same
    /// units), outcomes, and formulas (same bodies). A component
    /// publishing `self` can stand in wherever `base` was promised.
    pub fn extends(&self, base: &Blueprint) -> bool {
        base.consts
            .iter()
            .all(|c| self.const_value(&c.name) == Some(c.value))
            && base.schemes.iter().all(|s| {
                self.scheme(&s.name)
                    .is_some_and(|sup| scheme_extends(sup, s))
            })
    }

    /// Structural and feasibility checks for a tweak addressed at this
    /// blueprint. Guards are not consulted here; they are evaluated when
    /// the tweak is applied.
    pub fn validate_tweak(&self, tweak: &Tweak) -> Result<ValidatedTweak, TweakError> {
        let scheme = self
            .scheme(&tweak.scheme)
            .ok_or_else(|| TweakError::UnknownScheme(tweak.scheme.clone()))?;
        if scheme.formula(&tweak.formula).is_none() {
            return Err(TweakError::UnknownFormula {
                scheme: tweak.scheme.clone(),
                formula: tweak.formula.clone(),
            });
        }
        for name in tweak.bindings.keys() {
            if scheme.param(name).is_none() {
                return Err(TweakError::UnknownParam {
                    scheme: tweak.scheme.clone(),
                    param: name.clone(),
                });
            }
        }
        for param in &scheme.params {
            let value =
                *tweak
                    .bindings
                    .get(&param.name)
                    .ok_or_else(|| TweakError::MissingBinding {
                        scheme: tweak.scheme.clone(),
                        param: param.name.clone(),
                    })?;
            if !param.feasible.contains(value) {
                return Err(TweakError::OutOfFeasibleSet {
                    param: param.name.clone(),
                    value,
                });
            }
        }
        Ok(ValidatedTweak {
            tweak: tweak.clone(),
        })
    }
}

fn scheme_extends(sup: &Scheme, sub: &Scheme) -> bool {
    sub.params.iter().all(|p| {
        sup.param(&p.name)
            .is_some_and(|q| q.unit == p.unit && q.feasible.is_superset_of(&p.feasible))
    }) && sub.outcomes.iter().all(|o| sup.outcomes.contains(o))
        && sub.formulas.iter().all(|f| {
            sup.formula(&f.name)
                .is_some_and(|g| g.guard == f.guard && g.expr == f.expr && g.outcome == f.outcome)
        })
}

impl Scheme {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn formula(&self, name: &str) -> Option<&Formula> {
        self.formulas.iter().find(|f| f.name == name)
    }
}

/// A populated request: which formula of which scheme to apply, with one
/// value per parameter. The canonical JSON rendering (fields in this
/// order, bindings key-sorted) is what travels in a capsule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweak {
    pub scheme: String,
    pub formula: String,
    pub bindings: BTreeMap<String, f64>,
}

impl Tweak {
    pub fn new(scheme: impl Into<String>, formula: impl Into<String>) -> Self {
        Tweak {
            scheme: scheme.into(),
            formula: formula.into(),
            bindings: BTreeMap::new(),
        }
    }

    pub fn bind(mut self, param: impl Into<String>, value: f64) -> Self {
        self.bindings.insert(param.into(), value);
        self
    }

    pub fn to_canonical_json(&self) -> Result<String, TweakError> {
        for (name, value) in &self.bindings {
            if !value.is_finite() {
                return Err(TweakError::BadEncoding(format!(
                    "non-finite binding for `{name}`"
                )));
            }
        }
        serde_json::to_string(self).map_err(|e| TweakError::BadEncoding(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, TweakError> {
        serde_json::from_str(text).map_err(|e| TweakError::BadEncoding(e.to_string()))
    }
}

/// Proof that a tweak passed [`Blueprint::validate_tweak`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedTweak {
    tweak: Tweak,
}

impl ValidatedTweak {
    pub fn tweak(&self) -> &Tweak {
        &self.tweak
    }

    pub fn into_inner(self) -> Tweak {
        self.tweak
    }

    /// Evaluates the tweak's formula under its bindings.
    pub fn apply(&self, blueprint: &Blueprint) -> Result<Evaluation, EvalError> {
        blueprint.evaluate(
            &self.tweak.scheme,
            &self.tweak.formula,
            &self.tweak.bindings,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TweakError {
    #[error("blueprint has no scheme `{0}`")]
    UnknownScheme(String),
    #[error("scheme `{scheme}` has no formula `{formula}`")]
    UnknownFormula { scheme: String, formula: String },
    #[error("scheme `{scheme}` has no parameter `{param}`")]
    UnknownParam { scheme: String, param: String },
    #[error("no binding for parameter `{param}` of scheme `{scheme}`")]
    MissingBinding { scheme: String, param: String },
    #[error("value {value} for parameter `{param}` is outside its feasible set")]
    OutOfFeasibleSet { param: String, value: f64 },
    #[error("tweak payload malformed: {0}")]
    BadEncoding(String),
}
