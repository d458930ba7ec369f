//! The nonlinearity `f`: parsing, exact jets `(f, f', f'')`, and the
//! classification of `f` (sigma, critical abscissas, appropriate, tame).

mod analyze;
pub mod expr;
pub mod jet;

pub use analyze::{analyze, critical_abscissa, Abscissa, AbscissaSet, TamenessReport};
pub use expr::{parse_expr, Expr};
pub use jet::Jet2;

use crate::error::Result;

/// A parsed nonlinearity `f: R -> R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    ast: Expr,
    source: String,
}

impl Nonlinearity {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self {
            ast: parse_expr(text)?,
            source: text.to_string(),
        })
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// `(f(x), f'(x), f''(x))`.
    pub fn eval_jet2(&self, x: f64) -> Result<Jet2> {
        self.ast.eval(Jet2::variable(x))
    }

    pub fn f1(&self, x: f64) -> Result<f64> {
        Ok(self.eval_jet2(x)?.d1)
    }

    pub fn f2(&self, x: f64) -> Result<f64> {
        Ok(self.eval_jet2(x)?.d2)
    }
}

/// Free-function form of [`Nonlinearity::parse`].
pub fn parse(text: &str) -> Result<Nonlinearity> {
    Nonlinearity::parse(text)
}

/// Free-function form of [`Nonlinearity::eval_jet2`].
pub fn eval_jet2(f: &Nonlinearity, x: f64) -> Result<Jet2> {
    f.eval_jet2(x)
}
