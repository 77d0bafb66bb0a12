//! Model terms and the small formula language used on the command line.
//!
//! ```text
//! formula := term ('+' term)*
//! term    := '1' | factor (':' factor)?
//! factor  := NAME
//!          | 'rcs' '(' NAME [',' INT | ',' '[' NUM (',' NUM)* ']'] ')'
//!          | 'cat' '(' NAME [',' 'ref' '=' NUM] ')'
//! ```
//!
//! The intercept is only included when `1` is written. `cat(...)` cannot
//! appear inside an interaction.

use std::fmt;

use crate::design::spline::{default_knot_quantiles, validate_quantiles};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum KnotSpec {
    /// Number of knots, placed at the default quantiles for that count.
    Count(usize),
    /// Explicit knot quantiles in (0,1).
    Quantiles(Vec<f64>),
}

impl KnotSpec {
    pub fn quantiles(&self) -> Result<Vec<f64>> {
        match self {
            KnotSpec::Count(k) => default_knot_quantiles(*k)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::InvalidTerm(format!("no default knot placement for {k} knots"))),
            KnotSpec::Quantiles(q) => {
                validate_quantiles(q)?;
                Ok(q.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Intercept,
    Main(String),
    Spline(String, KnotSpec),
    Interaction(Box<Term>, Box<Term>),
    /// Dummy coding against `reference`; `None` picks the smallest level.
    Categorical(String, Option<f64>),
}

impl Term {
    pub fn main(col: &str) -> Self {
        Term::Main(col.to_string())
    }

    pub fn rcs(col: &str, knots: usize) -> Self {
        Term::Spline(col.to_string(), KnotSpec::Count(knots))
    }

    pub fn interaction(a: Term, b: Term) -> Self {
        Term::Interaction(Box::new(a), Box::new(b))
    }

    pub fn categorical(col: &str, reference: f64) -> Self {
        Term::Categorical(col.to_string(), Some(reference))
    }

    /// Columns this term reads from the dataset.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Main(c) | Term::Spline(c, _) | Term::Categorical(c, _) => vec![c.as_str()],
            Term::Interaction(a, b) => {
                let mut v = a.columns();
                v.extend(b.columns());
                v
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Term::Spline(_, k) => k.quantiles().map(|_| ()),
            Term::Interaction(a, b) => {
                for t in [a, b] {
                    match t.as_ref() {
                        Term::Main(_) => {}
                        Term::Spline(..) => t.validate()?,
                        other => {
                            return Err(Error::InvalidTerm(format!(
                                "interaction operand `{other}` must be a main or spline term"
                            )))
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Main(c) => write!(f, "{c}"),
            Term::Spline(c, KnotSpec::Count(k)) => write!(f, "rcs({c},{k})"),
            Term::Spline(c, KnotSpec::Quantiles(q)) => {
                let q: Vec<String> = q.iter().map(|v| v.to_string()).collect();
                write!(f, "rcs({c},[{}])", q.join(","))
            }
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
            Term::Categorical(c, None) => write!(f, "cat({c})"),
            Term::Categorical(c, Some(r)) => write!(f, "cat({c},ref={r})"),
        }
    }
}

/// Renders a term list back into formula syntax.
pub fn format_terms(terms: &[Term]) -> String {
    terms.iter().map(Term::to_string).collect::<Vec<_>>().join(" + ")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push((pos, Tok::Ident(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || matches!(chars[i], '.' | 'e' | 'E')
                    || (matches!(chars[i], '-' | '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            out.push((pos, Tok::Num(chars[start..i].iter().collect())));
        } else if "+:(),[]=".contains(c) {
            out.push((pos, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse {
                position: pos,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.at += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{c}`")),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => self.err("expected a column name"),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Num(s)) => s.parse().map_err(|_| Error::Parse {
                position: pos,
                message: format!("invalid number `{s}`"),
            }),
            _ => {
                self.at -= 1;
                self.err("expected a number")
            }
        }
    }

    fn formula(&mut self) -> Result<Vec<Term>> {
        let mut terms = vec![self.term()?];
        while self.peek().is_some() {
            self.expect('+')?;
            terms.push(self.term()?);
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term> {
        if let Some(Tok::Num(s)) = self.peek() {
            if s == "1" {
                self.at += 1;
                return Ok(Term::Intercept);
            }
            return self.err(format!("unexpected number `{s}`; only `1` is allowed as a term"));
        }
        let start = self.pos();
        let left = self.factor()?;
        if let Some(Tok::Sym(':')) = self.peek() {
            self.at += 1;
            let right = self.factor()?;
            let t = Term::interaction(left, right);
            t.validate().map_err(|e| Error::Parse {
                position: start,
                message: e.to_string(),
            })?;
            return Ok(t);
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<Term> {
        let name = self.ident()?;
        if !matches!(self.peek(), Some(Tok::Sym('('))) {
            return Ok(Term::Main(name));
        }
        let call_pos = self.pos();
        self.at += 1;
        match name.as_str() {
            "rcs" => {
                let col = self.ident()?;
                let knots = if matches!(self.peek(), Some(Tok::Sym(','))) {
                    self.at += 1;
                    if matches!(self.peek(), Some(Tok::Sym('['))) {
                        self.at += 1;
                        let mut q = vec![self.number()?];
                        while matches!(self.peek(), Some(Tok::Sym(','))) {
                            self.at += 1;
                            q.push(self.number()?);
                        }
                        self.expect(']')?;
                        KnotSpec::Quantiles(q)
                    } else {
                        let k = self.number()?;
                        if k.fract() != 0.0 || k < 0.0 {
                            return self.err("knot count must be a whole number");
                        }
                        KnotSpec::Count(k as usize)
                    }
                } else {
                    KnotSpec::Count(4)
                };
                self.expect(')')?;
                let t = Term::Spline(col, knots);
                t.validate().map_err(|e| Error::Parse {
                    position: call_pos,
                    message: e.to_string(),
                })?;
                Ok(t)
            }
            "cat" => {
                let col = self.ident()?;
                let mut reference = None;
                if matches!(self.peek(), Some(Tok::Sym(','))) {
                    self.at += 1;
                    let key = self.ident()?;
                    if key != "ref" {
                        return self.err(format!("unknown cat() option `{key}`"));
                    }
                    self.expect('=')?;
                    reference = Some(self.number()?);
                }
                self.expect(')')?;
                Ok(Term::Categorical(col, reference))
            }
            other => Err(Error::Parse {
                position: call_pos,
                message: format!("unknown function `{other}`"),
            }),
        }
    }
}

/// Parses a formula such as `1 + A + rcs(L1,4) + L1:L2 + cat(G,ref=1)`.
pub fn parse_terms(src: &str) -> Result<Vec<Term>> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(Error::Parse {
            position: 1,
            message: "empty formula".into(),
        });
    }
    let mut p = Parser {
        toks,
        at: 0,
        end: src.chars().count() + 1,
    };
    p.formula()
}
