//! Property specifications: reachability, constrained until and expected
//! accumulated reward, each either bounded by a threshold or posed as a query.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::num::format_real;

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `!"avoid" U "target"`
    Until { avoid: String, target: String },
    /// `F "target"`
    Eventually { target: String },
    /// Expected accumulated reward until `target` is reached.
    Reward { target: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Less,
    LessEq,
    GreaterEq,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Threshold(Comparison, f64),
    Query(Direction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    pub objective: Objective,
    pub bound: Bound,
}

impl Comparison {
    /// `value ∼ bound`, with +∞ compared in the extended reals.
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Comparison::Less => value < bound,
            Comparison::LessEq => value <= bound,
            Comparison::GreaterEq => value >= bound,
            Comparison::Greater => value > bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Less => "<",
            Comparison::LessEq => "<=",
            Comparison::GreaterEq => ">=",
            Comparison::Greater => ">",
        }
    }
}

impl Objective {
    pub fn target(&self) -> &str {
        match self {
            Objective::Until { target, .. } | Objective::Eventually { target } | Objective::Reward { target } => target,
        }
    }

    pub fn avoid(&self) -> Option<&str> {
        match self {
            Objective::Until { avoid, .. } => Some(avoid),
            _ => None,
        }
    }

    pub fn is_reward(&self) -> bool {
        matches!(self, Objective::Reward { .. })
    }
}

impl Spec {
    pub fn eventually(target: &str, bound: Bound) -> Result<Self> {
        Spec::new(Objective::Eventually { target: target.into() }, bound)
    }

    pub fn new(objective: Objective, bound: Bound) -> Result<Self> {
        if let Bound::Threshold(_, lambda) = bound {
            if objective.is_reward() {
                if !(lambda >= 0.0) || lambda.is_infinite() {
                    return Err(Error::Spec(format!("reward bound {lambda} must be a nonnegative real")));
                }
            } else if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Spec(format!("probability bound {lambda} outside [0,1]")));
            }
        }
        Ok(Spec { objective, bound })
    }

    /// The direction a policy should optimise to satisfy (or answer) the specification:
    /// lower bounds ask for maximisation, upper bounds for minimisation.
    pub fn direction(&self) -> Direction {
        match self.bound {
            Bound::Query(d) => d,
            Bound::Threshold(Comparison::Less | Comparison::LessEq, _) => Direction::Min,
            Bound::Threshold(Comparison::Greater | Comparison::GreaterEq, _) => Direction::Max,
        }
    }

    /// Whether a value satisfies the bound; `None` for queries.
    pub fn satisfied_by(&self, value: f64) -> Option<bool> {
        match self.bound {
            Bound::Threshold(cmp, lambda) => Some(cmp.holds(value, lambda)),
            Bound::Query(_) => None,
        }
    }
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.objective.is_reward() { "R" } else { "P" };
        match self.bound {
            Bound::Threshold(cmp, lambda) => write!(f, "{op}{}{}", cmp.symbol(), format_real(lambda))?,
            Bound::Query(Direction::Min) => write!(f, "{op}min=?")?,
            Bound::Query(Direction::Max) => write!(f, "{op}max=?")?,
        }
        match &self.objective {
            Objective::Until { avoid, target } => write!(f, " [ !\"{avoid}\" U \"{target}\" ]"),
            Objective::Eventually { target } | Objective::Reward { target } => write!(f, " [ F \"{target}\" ]"),
        }
    }
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        match self.rest.strip_prefix(tok) {
            Some(r) => {
                self.rest = r;
                true
            }
            None => false,
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{tok}`")))
        }
    }

    fn error(&self, msg: &str) -> Error {
        let near: String = self.rest.chars().take(12).collect();
        Error::Spec(if near.is_empty() {
            format!("{msg} at end of input")
        } else {
            format!("{msg} near `{near}`")
        })
    }

    fn label(&mut self) -> Result<String> {
        self.expect("\"")?;
        let end = self.rest.find('"').ok_or_else(|| self.error("unterminated label"))?;
        let name = &self.rest[..end];
        if name.is_empty() {
            return Err(self.error("empty label"));
        }
        self.rest = &self.rest[end + 1..];
        Ok(name.to_string())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let end = self
            .rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')))
            .unwrap_or(self.rest.len());
        let tok = &self.rest[..end];
        let v = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error("expected a number"))?;
        self.rest = &self.rest[end..];
        Ok(v)
    }
}

impl FromStr for Spec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut c = Cursor { rest: text };
        let reward = if c.eat("P") {
            false
        } else if c.eat("R") {
            true
        } else {
            return Err(c.error("expected `P` or `R`"));
        };
        let bound = if c.eat("min") {
            c.expect("=?")?;
            Bound::Query(Direction::Min)
        } else if c.eat("max") {
            c.expect("=?")?;
            Bound::Query(Direction::Max)
        } else {
            let cmp = if c.eat(">=") {
                Comparison::GreaterEq
            } else if c.eat("<=") {
                Comparison::LessEq
            } else if c.eat(">") {
                Comparison::Greater
            } else if c.eat("<") {
                Comparison::Less
            } else {
                return Err(c.error("expected a comparison or `min=?`/`max=?`"));
            };
            Bound::Threshold(cmp, c.number()?)
        };
        c.expect("[")?;
        let objective = if c.eat("F") {
            let target = c.label()?;
            if reward {
                Objective::Reward { target }
            } else {
                Objective::Eventually { target }
            }
        } else if c.eat("!") {
            if reward {
                return Err(c.error("reward properties only support `F`"));
            }
            let avoid = c.label()?;
            c.expect("U")?;
            let target = c.label()?;
            Objective::Until { avoid, target }
        } else {
            return Err(c.error("expected `F` or `!`"));
        };
        c.expect("]")?;
        c.skip_ws();
        if !c.rest.is_empty() {
            return Err(c.error("trailing input"));
        }
        Spec::new(objective, bound)
    }
}

/// Parses a specification string such as `P>=0.9 [ F "goal" ]`.
pub fn parse_spec(text: &str) -> Result<Spec> {
    text.parse()
}
