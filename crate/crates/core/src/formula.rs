//! Design formulas: ordered lists of terms evaluated on `(z, u)`.
//!
//! The textual form is a `+`-separated list of terms. Tokens are `1`
//! (intercept), `u<k>` (1-based covariate), `z` (instrument), `:` for a
//! product of two factors and `^2` for a square, e.g. `"1 + u1 + u2 + u1:u2"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One column of a design vector. Covariate indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Covariate(usize),
    Instrument,
    /// `u_j * u_k` with `j < k`.
    Product(usize, usize),
    Square(usize),
    /// `z * u_j`.
    InstrumentProduct(usize),
}

impl Term {
    pub fn involves_instrument(&self) -> bool {
        matches!(self, Term::Instrument | Term::InstrumentProduct(_))
    }

    /// Largest covariate index referenced, if any.
    fn max_covariate(&self) -> Option<usize> {
        match *self {
            Term::Intercept | Term::Instrument => None,
            Term::Covariate(j) | Term::Square(j) | Term::InstrumentProduct(j) => Some(j),
            Term::Product(j, k) => Some(j.max(k)),
        }
    }

    #[inline]
    fn eval(&self, z: f64, u: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Covariate(j) => u[j],
            Term::Instrument => z,
            Term::Product(j, k) => u[j] * u[k],
            Term::Square(j) => u[j] * u[j],
            Term::InstrumentProduct(j) => z * u[j],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Intercept => write!(f, "1"),
            Term::Covariate(j) => write!(f, "u{}", j + 1),
            Term::Instrument => write!(f, "z"),
            Term::Product(j, k) => write!(f, "u{}:u{}", j + 1, k + 1),
            Term::Square(j) => write!(f, "u{}^2", j + 1),
            Term::InstrumentProduct(j) => write!(f, "z:u{}", j + 1),
        }
    }
}

/// An ordered set of distinct design terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignFormula {
    terms: Vec<Term>,
}

impl DesignFormula {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("design formula has no terms".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if let Term::Product(j, k) = *t {
                if j >= k {
                    return Err(Error::Config(format!(
                        "product term {t} must list distinct covariates in increasing order"
                    )));
                }
            }
            if terms[..i].contains(t) {
                return Err(Error::Config(format!("duplicate term {t}")));
            }
        }
        Ok(Self { terms })
    }

    pub fn intercept() -> Self {
        Self {
            terms: vec![Term::Intercept],
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn involves_instrument(&self) -> bool {
        self.terms.iter().any(Term::involves_instrument)
    }

    /// Number of covariates the formula needs to be evaluable.
    pub fn required_covariates(&self) -> usize {
        self.terms
            .iter()
            .filter_map(Term::max_covariate)
            .max()
            .map_or(0, |j| j + 1)
    }

    /// Evaluates the design vector at `(z, u)`.
    pub fn evaluate(&self, z: f64, u: &[f64]) -> Result<Vec<f64>> {
        let need = self.required_covariates();
        if need > u.len() {
            return Err(Error::Config(format!(
                "formula `{self}` references u{need} but only {} covariates are present",
                u.len()
            )));
        }
        Ok(self.evaluate_unchecked(z, u))
    }

    pub(crate) fn evaluate_unchecked(&self, z: f64, u: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(z, u)).collect()
    }

    /// Parses a formula that must not reference the instrument.
    pub fn parse_covariate_only(text: &str) -> Result<Self> {
        let parsed = parse_terms(text)?;
        if let Some((pos, t)) = parsed.iter().find(|(_, t)| t.involves_instrument()) {
            return Err(Error::Parse {
                position: *pos,
                message: format!(
                    "term `{t}` uses the instrument; this model must depend on covariates only (exclusion restriction)"
                ),
            });
        }
        Self::new(parsed.into_iter().map(|(_, t)| t).collect())
    }

    /// Term labels, e.g. `["1", "u1", "z"]`.
    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(Term::to_string).collect()
    }
}

impl fmt::Display for DesignFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for DesignFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = parse_terms(s)?;
        Self::new(parsed.into_iter().map(|(_, t)| t).collect())
    }
}

impl Serialize for DesignFormula {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DesignFormula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    One,
    Z,
    U(usize),
}

fn parse_factor(tok: &str, position: usize) -> Result<Factor> {
    let err = |message: String| Error::Parse { position, message };
    match tok {
        "1" => Ok(Factor::One),
        "z" => Ok(Factor::Z),
        _ => {
            let idx = tok
                .strip_prefix('u')
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .ok_or_else(|| err(format!("unknown token `{tok}`")))?;
            let k: usize = idx
                .parse()
                .map_err(|_| err(format!("covariate index out of range in `{tok}`")))?;
            if k == 0 {
                return Err(err("covariates are numbered from u1".into()));
            }
            Ok(Factor::U(k - 1))
        }
    }
}

/// Parses into `(byte offset, term)` pairs, rejecting duplicates.
fn parse_terms(text: &str) -> Result<Vec<(usize, Term)>> {
    let mut out: Vec<(usize, Term)> = Vec::new();
    let mut offset = 0;
    for raw in text.split('+') {
        let lead = raw.len() - raw.trim_start().len();
        let position = offset + lead;
        offset += raw.len() + 1;
        let piece: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        if piece.is_empty() {
            return Err(Error::Parse {
                position,
                message: "empty term".into(),
            });
        }
        let term = parse_term(&piece, position)?;
        if out.iter().any(|(_, t)| *t == term) {
            return Err(Error::Parse {
                position,
                message: format!("duplicate term `{term}`"),
            });
        }
        out.push((position, term));
    }
    Ok(out)
}

fn parse_term(piece: &str, position: usize) -> Result<Term> {
    let err = |message: String| Error::Parse { position, message };
    if let Some(base) = piece.strip_suffix("^2") {
        return match parse_factor(base, position)? {
            Factor::U(j) => Ok(Term::Square(j)),
            _ => Err(err(format!("only covariates may be squared, got `{piece}`"))),
        };
    }
    if piece.contains('^') {
        return Err(err(format!("unsupported power in `{piece}`; only ^2 is allowed")));
    }
    let factors: Vec<&str> = piece.split(':').collect();
    match factors.as_slice() {
        [single] => Ok(match parse_factor(single, position)? {
            Factor::One => Term::Intercept,
            Factor::Z => Term::Instrument,
            Factor::U(j) => Term::Covariate(j),
        }),
        [a, b] => {
            let fa = parse_factor(a, position)?;
            let fb = parse_factor(b, position)?;
            match (fa, fb) {
                (Factor::U(j), Factor::U(k)) if j == k => Ok(Term::Square(j)),
                (Factor::U(j), Factor::U(k)) => Ok(Term::Product(j.min(k), j.max(k))),
                (Factor::Z, Factor::U(j)) | (Factor::U(j), Factor::Z) => {
                    Ok(Term::InstrumentProduct(j))
                }
                _ => Err(err(format!("unsupported product `{piece}`"))),
            }
        }
        _ => Err(err(format!("at most two factors per product, got `{piece}`"))),
    }
}
