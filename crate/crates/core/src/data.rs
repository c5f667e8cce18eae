//! Observed records, samples and stacked parameter vectors.

use crate::error::{Error, Result};

/// One subject's observed data `(R, R*Y, Z, U)`.
///
/// The outcome is stored only for respondents, so `r = 1` exactly when an
/// outcome is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRecord {
    outcome: Option<f64>,
    z: f64,
    u: Vec<f64>,
}

impl ObservedRecord {
    pub fn respondent(y: f64, z: f64, u: Vec<f64>) -> Self {
        Self {
            outcome: Some(y),
            z,
            u,
        }
    }

    pub fn nonrespondent(z: f64, u: Vec<f64>) -> Self {
        Self {
            outcome: None,
            z,
            u,
        }
    }

    pub fn responded(&self) -> bool {
        self.outcome.is_some()
    }

    /// Response indicator as a number.
    pub fn r(&self) -> f64 {
        if self.responded() {
            1.0
        } else {
            0.0
        }
    }

    pub fn outcome(&self) -> Option<f64> {
        self.outcome
    }

    /// The observed outcome.
    ///
    /// Panics for a nonrespondent: reading a missing outcome is a caller bug.
    pub fn y(&self) -> f64 {
        self.outcome
            .expect("contract violation: outcome accessed for a nonrespondent (r = 0)")
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }
}

/// An ordered sample of observed records with a common covariate dimension.
///
/// Optional frequency weights turn the sample into a pseudo-population (used
/// to feed exact discrete laws through the estimators). Empirical averages
/// are weighted means; variance formulas use the number of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    dim: usize,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(records: Vec<ObservedRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Data("dataset has no records".into()))?;
        let dim = first.u.len();
        if let Some((i, rec)) = records.iter().enumerate().find(|(_, r)| r.u.len() != dim) {
            return Err(Error::Data(format!(
                "record {i} has {} covariates, expected {dim}",
                rec.u.len()
            )));
        }
        Ok(Self {
            records,
            dim,
            weights: None,
        })
    }

    pub fn with_weights(records: Vec<ObservedRecord>, weights: Vec<f64>) -> Result<Self> {
        let mut ds = Self::new(records)?;
        if weights.len() != ds.records.len() {
            return Err(Error::Data(format!(
                "{} weights for {} records",
                weights.len(),
                ds.records.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Data("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Data("weights sum to zero".into()));
        }
        ds.weights = Some(weights);
        Ok(ds)
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn respondents(&self) -> usize {
        self.records.iter().filter(|r| r.responded()).count()
    }

    /// Requires both respondents and nonrespondents.
    pub fn check_has_nonresponse(&self) -> Result<()> {
        let resp = self.respondents();
        if resp == 0 {
            return Err(Error::Data("no respondents in dataset".into()));
        }
        if resp == self.len() {
            return Err(Error::Data(
                "no nonrespondents in dataset; the tilting parameter is not estimable".into(),
            ));
        }
        Ok(())
    }

    /// Requires every instrument value to be 0 or 1.
    pub fn check_binary_instrument(&self) -> Result<()> {
        match self
            .records
            .iter()
            .position(|r| r.z != 0.0 && r.z != 1.0)
        {
            Some(i) => Err(Error::Data(format!(
                "record {i}: instrument value {} is not binary",
                self.records[i].z
            ))),
            None => Ok(()),
        }
    }

    /// Requires every observed outcome to be 0 or 1.
    pub fn check_binary_outcome(&self) -> Result<()> {
        match self
            .records
            .iter()
            .position(|r| matches!(r.outcome, Some(y) if y != 0.0 && y != 1.0))
        {
            Some(i) => Err(Error::Data(format!(
                "record {i}: outcome value {} is not binary",
                self.records[i].y()
            ))),
            None => Ok(()),
        }
    }
}

/// Block lengths of a stacked parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub gamma: usize,
    pub xi: usize,
    pub beta: usize,
    pub psi: usize,
}

impl ParamLayout {
    pub fn total(&self) -> usize {
        1 + self.gamma + self.xi + self.beta + self.psi
    }

    /// Length of `(mu, gamma)`.
    pub fn phi_len(&self) -> usize {
        1 + self.gamma
    }

    pub fn gamma_range(&self) -> std::ops::Range<usize> {
        1..1 + self.gamma
    }

    pub fn xi_range(&self) -> std::ops::Range<usize> {
        let s = 1 + self.gamma;
        s..s + self.xi
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        let s = 1 + self.gamma + self.xi;
        s..s + self.beta
    }

    pub fn psi_range(&self) -> std::ops::Range<usize> {
        let s = 1 + self.gamma + self.xi + self.beta;
        s..s + self.psi
    }
}

/// The stacked parameter `(mu, gamma, xi, beta, psi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub mu: f64,
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            mu: 0.0,
            gamma: vec![0.0; layout.gamma],
            xi: vec![0.0; layout.xi],
            beta: vec![0.0; layout.beta],
            psi: vec![0.0; layout.psi],
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            gamma: self.gamma.len(),
            xi: self.xi.len(),
            beta: self.beta.len(),
            psi: self.psi.len(),
        }
    }

    /// Concatenates blocks in the order mu, gamma, xi, beta, psi.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().total());
        v.push(self.mu);
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.xi);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn unflatten(v: &[f64], layout: ParamLayout) -> Result<Self> {
        if v.len() != layout.total() {
            return Err(Error::Config(format!(
                "parameter vector has length {}, layout requires {}",
                v.len(),
                layout.total()
            )));
        }
        Ok(Self {
            mu: v[0],
            gamma: v[layout.gamma_range()].to_vec(),
            xi: v[layout.xi_range()].to_vec(),
            beta: v[layout.beta_range()].to_vec(),
            psi: v[layout.psi_range()].to_vec(),
        })
    }
}
