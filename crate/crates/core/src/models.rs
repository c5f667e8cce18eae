//! Working parametric models: the tilted response propensity and the
//! instrument and outcome nuisance laws.

use serde::{Deserialize, Serialize};

use crate::data::ParamLayout;
use crate::error::{Error, Result};
use crate::formula::DesignFormula;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Logistic model `P(Y=1|u) = expit(h3(u)' psi)`.
    Binary,
    /// Linear mean `E(Y|u) = h3(u)' psi` with a least-squares score.
    Continuous,
}

/// Law of the instrument given covariates; same two families as the outcome.
pub type InstrumentKind = OutcomeKind;

/// The index function `c(W)` of the first estimating equation. Only the zero
/// function is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexC {
    #[default]
    Zero,
}

/// Model specification shared by every estimator.
///
/// * `eta`: baseline response index `eta(z, u; xi)`, may use the instrument.
/// * `z_model`, `y_model`: designs for `p(z|u; beta)` and `p(y|u; psi)`,
///   covariates only.
/// * `tilt`: `s(x)` in the selection-bias function `h = gamma' (y * s(x))`.
/// * `index_d`: `d_yz(u)` in the index function `d(W) = d_yz(u) * y * z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub eta: DesignFormula,
    pub z_model: DesignFormula,
    pub y_model: DesignFormula,
    pub tilt: DesignFormula,
    pub index_d: DesignFormula,
    pub index_c: IndexC,
    pub outcome: OutcomeKind,
    pub instrument: InstrumentKind,
}

impl ModelSpec {
    /// Binary outcome and instrument with `h = gamma * y` and `d(W) = y z`.
    pub fn new(eta: DesignFormula, z_model: DesignFormula, y_model: DesignFormula) -> Result<Self> {
        let spec = Self {
            eta,
            z_model,
            y_model,
            tilt: DesignFormula::intercept(),
            index_d: DesignFormula::intercept(),
            index_c: IndexC::Zero,
            outcome: OutcomeKind::Binary,
            instrument: OutcomeKind::Binary,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces the tilt and index designs (they must have equal length).
    pub fn with_tilt(mut self, tilt: DesignFormula, index_d: DesignFormula) -> Result<Self> {
        self.tilt = tilt;
        self.index_d = index_d;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kinds(mut self, outcome: OutcomeKind, instrument: InstrumentKind) -> Self {
        self.outcome = outcome;
        self.instrument = instrument;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("z_model", &self.z_model),
            ("y_model", &self.y_model),
            ("index_d", &self.index_d),
        ] {
            if f.involves_instrument() {
                return Err(Error::Config(format!(
                    "{name} formula `{f}` uses the instrument; it must depend on covariates only (exclusion restriction)"
                )));
            }
        }
        if self.tilt.len() != self.index_d.len() {
            return Err(Error::Config(format!(
                "tilt has {} terms but index_d has {}; the tilting parameter must be just-identified",
                self.tilt.len(),
                self.index_d.len()
            )));
        }
        Ok(())
    }

    /// Number of covariates needed to evaluate every formula.
    pub fn required_covariates(&self) -> usize {
        [&self.eta, &self.z_model, &self.y_model, &self.tilt, &self.index_d]
            .iter()
            .map(|f| f.required_covariates())
            .max()
            .unwrap_or(0)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            gamma: self.tilt.len(),
            xi: self.eta.len(),
            beta: self.z_model.len(),
            psi: self.y_model.len(),
        }
    }

    /// Parameter labels in flattened order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["mu".to_string()];
        let block = |prefix: &str, f: &DesignFormula| -> Vec<String> {
            f.labels()
                .into_iter()
                .map(|l| format!("{prefix}[{l}]"))
                .collect()
        };
        if self.tilt.len() == 1 && self.tilt.terms()[0] == crate::formula::Term::Intercept {
            names.push("gamma".into());
        } else {
            names.extend(block("gamma", &self.tilt));
        }
        names.extend(block("xi", &self.eta));
        names.extend(block("beta", &self.z_model));
        names.extend(block("psi", &self.y_model));
        names
    }
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean of a logistic or linear nuisance model at a design vector.
#[inline]
pub(crate) fn nuisance_mean(kind: OutcomeKind, design: &[f64], coef: &[f64]) -> f64 {
    let lp = dot(design, coef);
    match kind {
        OutcomeKind::Binary => expit(lp),
        OutcomeKind::Continuous => lp,
    }
}

/// Selection-bias function `h(y, x; gamma) = gamma' (y * s(x))`.
pub fn selection_bias(y: f64, z: f64, u: &[f64], gamma: &[f64], spec: &ModelSpec) -> Result<f64> {
    let s = spec.tilt.evaluate(z, u)?;
    check_len("gamma", gamma.len(), s.len())?;
    Ok(y * dot(&s, gamma))
}

/// Extended propensity `pi(w) = expit{eta(x; xi) + h(y, x; gamma)}`.
pub fn propensity(
    y: f64,
    z: f64,
    u: &[f64],
    xi: &[f64],
    gamma: &[f64],
    spec: &ModelSpec,
) -> Result<f64> {
    let h1 = spec.eta.evaluate(z, u)?;
    check_len("xi", xi.len(), h1.len())?;
    Ok(expit(dot(&h1, xi) + selection_bias(y, z, u, gamma, spec)?))
}

/// `p(Z = z | u; beta)` for a binary instrument.
///
/// Panics if `z` is not 0 or 1 or the instrument model is not binary.
pub fn prob_z(z: f64, u: &[f64], beta: &[f64], spec: &ModelSpec) -> Result<f64> {
    assert!(
        spec.instrument == OutcomeKind::Binary,
        "contract violation: prob_z requires a binary instrument model"
    );
    assert!(
        z == 0.0 || z == 1.0,
        "contract violation: instrument value {z} is not binary"
    );
    let p1 = instrument_mean(u, beta, spec)?;
    Ok(if z == 1.0 { p1 } else { 1.0 - p1 })
}

/// `E(Z | u; beta)`: `P(Z=1|u)` for a binary instrument, linear mean otherwise.
pub fn instrument_mean(u: &[f64], beta: &[f64], spec: &ModelSpec) -> Result<f64> {
    let h2 = spec.z_model.evaluate(0.0, u)?;
    check_len("beta", beta.len(), h2.len())?;
    Ok(nuisance_mean(spec.instrument, &h2, beta))
}

/// Outcome law at fixed covariates: its mean and the score in `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeLaw {
    pub kind: OutcomeKind,
    /// `P(Y=1|u)` for a binary outcome, `E(Y|u)` otherwise.
    pub mean: f64,
    design: Vec<f64>,
}

impl OutcomeLaw {
    /// Score `(y - mean) * h3(u)`; the logistic and least-squares scores share
    /// this form.
    pub fn score(&self, y: f64) -> Vec<f64> {
        let resid = y - self.mean;
        self.design.iter().map(|h| resid * h).collect()
    }
}

pub fn outcome_model(u: &[f64], psi: &[f64], spec: &ModelSpec) -> Result<OutcomeLaw> {
    let design = spec.y_model.evaluate(0.0, u)?;
    check_len("psi", psi.len(), design.len())?;
    Ok(OutcomeLaw {
        kind: spec.outcome,
        mean: nuisance_mean(spec.outcome, &design, psi),
        design,
    })
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!(
            "{name} has length {got}, model requires {want}"
        )));
    }
    Ok(())
}
