//! Canonical rendering of a blueprint: 2-space indent, declaration
//! order preserved, numbers in plain decimal, and only the parentheses
//! the structure requires. Parsing the output reproduces the same
//! blueprint, and printing is idempotent.

use std::fmt;

use super::{BinOp, Blueprint, Expr, FeasibleSet, Formula, Guard, ParamSpec, Scheme};

impl Blueprint {
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        let _ = fmt::Write::write_fmt(&mut out, format_args!("{self}"));
        out
    }
}

impl fmt::Display for Blueprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "blueprint \"{}\" revision {};", self.tag, self.revision)?;
        if !self.consts.is_empty() {
            writeln!(f)?;
            for c in &self.consts {
                writeln!(f, "const {} = {};", c.name, c.value)?;
            }
        }
        for scheme in &self.schemes {
            writeln!(f)?;
            write!(f, "{scheme}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheme {} {{", self.name)?;
        for p in &self.params {
            writeln!(f, "  {p}")?;
        }
        for o in &self.outcomes {
            writeln!(f, "  outcome {o};")?;
        }
        for formula in &self.formulas {
            writeln!(f, "  {formula}")?;
        }
        writeln!(f, "}}")
    }
}

impl fmt::Display for ParamSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "param {} : {}", self.name, self.feasible)?;
        if let Some(unit) = &self.unit {
            write!(f, " [{unit}]")?;
        }
        write!(f, ";")
    }
}

impl fmt::Display for FeasibleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeasibleSet::Discrete(values) => {
                write!(f, "{{")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
            FeasibleSet::Interval { lo, hi } => write!(f, "[{lo}, {hi}]"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "formula {}", self.name)?;
        if let Some(guard) = &self.guard {
            write!(f, " when {guard}")?;
        }
        write!(f, " : ")?;
        write_expr(f, &self.expr)?;
        write!(f, " -> {};", self.outcome)
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write_expr(f, &c.lhs)?;
            write!(f, " {} ", c.op.symbol())?;
            write_expr(f, &c.rhs)?;
        }
        Ok(())
    }
}

fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::Add | BinOp::Sub => 1,
        BinOp::Mul | BinOp::Div => 2,
        BinOp::Pow => 3,
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, expr: &Expr) -> fmt::Result {
    match expr {
        Expr::Num(v) => write!(f, "{v}"),
        Expr::Ident(name) => write!(f, "{name}"),
        Expr::Binary { op, lhs, rhs } => {
            let p = prec(*op);
            // `^` groups rightward, everything else leftward; a child is
            // parenthesized exactly when reparsing would otherwise bind
            // it differently.
            let left_needs = matches!(lhs.as_ref(), Expr::Binary { op: lop, .. }
                if prec(*lop) < p || (*op == BinOp::Pow && prec(*lop) <= p));
            let right_needs = matches!(rhs.as_ref(), Expr::Binary { op: rop, .. }
                if prec(*rop) < p || (*op != BinOp::Pow && prec(*rop) <= p));
            if left_needs {
                write!(f, "(")?;
                write_expr(f, lhs)?;
                write!(f, ")")?;
            } else {
                write_expr(f, lhs)?;
            }
            write!(f, " {} ", op.symbol())?;
            if right_needs {
                write!(f, "(")?;
                write_expr(f, rhs)?;
                write!(f, ")")?;
            } else {
                write_expr(f, rhs)?;
            }
            Ok(())
        }
    }
}
