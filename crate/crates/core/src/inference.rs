//! Estimators of the outcome mean and tilting parameter, with sandwich
//! variances and Wald intervals, plus complete-case, MAR-weighted and
//! full-data baselines.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ParamVector};
use crate::error::{Error, Result};
use crate::models::{expit, nuisance_mean, ModelSpec, OutcomeKind};
use crate::moments::{weight_pair, PhiMoment, PreparedData, StackedSystem, WEIGHT_FLOOR};
use crate::solver::{condition_number, numerical_jacobian, solve_system, SolveOutcome, SolverConfig};

/// Standard normal 0.975 quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    /// IPW doubly robust estimator.
    PhiTilde,
    /// Augmented doubly robust estimator.
    PhiHat,
    /// Respondent mean.
    Cc,
    /// Hajek mean under the ignorable (gamma = 0) propensity.
    Mar,
    /// Mean of the complete outcomes (simulation only).
    Full,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 5] = [
        EstimatorId::PhiTilde,
        EstimatorId::PhiHat,
        EstimatorId::Cc,
        EstimatorId::Mar,
        EstimatorId::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::PhiTilde => "phi_tilde",
            EstimatorId::PhiHat => "phi_hat",
            EstimatorId::Cc => "cc",
            EstimatorId::Mar => "mar",
            EstimatorId::Full => "full",
        }
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub condition: f64,
    /// Extremes of the fitted propensity over respondents.
    pub min_propensity: Option<f64>,
    pub max_propensity: Option<f64>,
    /// Records that did not enter the estimate (nonrespondents for `cc`).
    pub excluded_records: usize,
    pub n: usize,
    pub respondents: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub estimator: EstimatorId,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// Sandwich covariance over `estimates`.
    pub covariance: DMatrix<f64>,
    pub se: Vec<f64>,
    /// 95% Wald intervals.
    pub ci: Vec<(f64, f64)>,
    /// Full stacked parameter for the doubly robust estimators.
    pub params: Option<ParamVector>,
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    fn assemble(
        estimator: EstimatorId,
        names: Vec<String>,
        estimates: Vec<f64>,
        covariance: DMatrix<f64>,
        params: Option<ParamVector>,
        diagnostics: Diagnostics,
    ) -> Self {
        let se: Vec<f64> = (0..estimates.len())
            .map(|i| covariance[(i, i)].max(0.0).sqrt())
            .collect();
        let ci = estimates
            .iter()
            .zip(&se)
            .map(|(&e, &s)| wald_interval(e, s))
            .collect();
        Self {
            estimator,
            names,
            estimates,
            covariance,
            se,
            ci,
            params,
            diagnostics,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn mu(&self) -> f64 {
        self.estimates[0]
    }

    pub fn mu_se(&self) -> f64 {
        self.se[0]
    }

    /// Tilting parameter estimates, when the estimator solves for them.
    pub fn gamma(&self) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.names.len())
            .filter(|&i| self.names[i] == "gamma" || self.names[i].starts_with("gamma["))
            .collect();
        (!idx.is_empty()).then(|| idx.iter().map(|&i| self.estimates[i]).collect())
    }
}

/// `estimate -/+ Z95 * se`.
pub fn wald_interval(estimate: f64, se: f64) -> (f64, f64) {
    (estimate - Z95 * se, estimate + Z95 * se)
}

/// Joint Z-estimator sandwich `M^-1 Omega M^-T / n`, with `M` the Jacobian
/// of the averaged system and `Omega` the (weighted) mean outer product of
/// the per-record contributions.
pub fn sandwich(
    jacobian: &DMatrix<f64>,
    contributions: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let k = jacobian.nrows();
    if jacobian.ncols() != k {
        return Err(Error::Config("sandwich requires a square jacobian".into()));
    }
    let n = contributions.len();
    let mut omega = DMatrix::<f64>::zeros(k, k);
    let mut total = 0.0;
    for (i, rho) in contributions.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        total += w;
        for a in 0..k {
            let ra = w * rho[a];
            if ra == 0.0 {
                continue;
            }
            for b in 0..k {
                omega[(a, b)] += ra * rho[b];
            }
        }
    }
    omega /= total;
    let inv = jacobian.clone().try_inverse().ok_or_else(|| Error::Singular {
        context: "sandwich bread".into(),
        condition: condition_number(jacobian),
    })?;
    let v = &inv * omega * inv.transpose() / n as f64;
    Ok((&v + v.transpose()) * 0.5)
}

/// Ratio estimator `sum w y / sum w` over respondents.
pub fn hajek_mean(data: &Dataset, weights: &[f64]) -> Result<f64> {
    if weights.len() != data.len() {
        return Err(Error::Data(format!(
            "{} weights for {} records",
            weights.len(),
            data.len()
        )));
    }
    let (mut num, mut den) = (Vec::new(), Vec::new());
    for (i, rec) in data.records().iter().enumerate() {
        if let Some(y) = rec.outcome() {
            let w = weights[i] * data.weight(i);
            num.push(w * y);
            den.push(w);
        }
    }
    let den = crate::summation::compensated_sum(den);
    if den == 0.0 {
        return Err(Error::Data("Hajek denominator is zero".into()));
    }
    Ok(crate::summation::compensated_sum(num) / den)
}

fn not_converged(stage: &str, out: &SolveOutcome) -> Error {
    Error::NotConverged {
        estimator: stage.to_string(),
        reason: format!(
            "residual {:e} after {} iterations; {}",
            out.residual_norm,
            out.iterations,
            out.warnings.join("; ")
        ),
    }
}

fn solve_stage<F>(stage: &str, f: F, x0: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let out = solve_system(f, x0, cfg)?;
    if !out.converged {
        return Err(not_converged(stage, &out));
    }
    Ok(out.root)
}

fn guarded_inverse(p: f64, record: usize) -> Result<f64> {
    if !(p >= WEIGHT_FLOOR) {
        return Err(Error::WeightExplosion {
            record,
            value: p,
            floor: WEIGHT_FLOOR,
        });
    }
    Ok(1.0 / p)
}

/// Instrument-model fit from its own score.
fn fit_instrument(spec: &ModelSpec, data: &PreparedData, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let k = spec.z_model.len();
    solve_stage(
        "instrument model",
        |b: &[f64]| {
            data.mean(k, |_, rec| {
                let resid = rec.z() - nuisance_mean(spec.instrument, rec.h_z(), b);
                Ok(rec.h_z().iter().map(|h| resid * h).collect())
            })
        },
        &vec![0.0; k],
        cfg,
    )
}

/// Ignorable response index: logistic fit of R on h1(x), then the
/// calibration equations `mean (R/pi - 1) h1 = 0` at gamma = 0.
///
/// The logistic fit only supplies a starting value, so its last iterate is
/// used even when it has no finite root (e.g. everyone responded).
fn fit_calibrated_index(spec: &ModelSpec, data: &PreparedData, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let k = spec.eta.len();
    let logit = solve_system(
        |x: &[f64]| {
            data.mean(k, |_, rec| {
                let r = if rec.responded() { 1.0 } else { 0.0 };
                let resid = r - expit(crate::models::dot(rec.h_eta(), x));
                Ok(rec.h_eta().iter().map(|h| resid * h).collect())
            })
        },
        &vec![0.0; k],
        cfg,
    )?
    .root;
    solve_stage(
        "calibration at gamma = 0",
        |x: &[f64]| calibration_residual(data, x),
        &logit,
        cfg,
    )
}

fn calibration_residual(data: &PreparedData, xi: &[f64]) -> Result<Vec<f64>> {
    let k = xi.len();
    data.mean(k, |i, rec| {
        let logit = rec.responded().then(|| crate::models::dot(rec.h_eta(), xi));
        let (_, excess) = weight_pair(logit, i)?;
        Ok(rec.h_eta().iter().map(|h| excess * h).collect())
    })
}

/// Outcome model from the inverse-weighted score at an ignorable index.
fn fit_outcome(spec: &ModelSpec, data: &PreparedData, xi: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let k = spec.y_model.len();
    let weights: Vec<f64> = data
        .records()
        .iter()
        .enumerate()
        .map(|(i, rec)| match rec.outcome() {
            Some(_) => guarded_inverse(expit(crate::models::dot(rec.h_eta(), xi)), i),
            None => Ok(0.0),
        })
        .collect::<Result<_>>()?;
    solve_stage(
        "outcome model",
        |p: &[f64]| {
            data.mean(k, |i, rec| match rec.outcome() {
                Some(y) => {
                    let s = weights[i] * (y - nuisance_mean(spec.outcome, rec.h_y(), p));
                    Ok(rec.h_y().iter().map(|h| s * h).collect())
                }
                None => Ok(vec![0.0; k]),
            })
        },
        &vec![0.0; k],
        cfg,
    )
}

fn weighted_respondent_mean(data: &PreparedData, xi: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (Vec::new(), Vec::new());
    for (i, rec) in data.records().iter().enumerate() {
        if let Some(y) = rec.outcome() {
            let w = data.weight(i) * guarded_inverse(expit(crate::models::dot(rec.h_eta(), xi)), i)?;
            num.push(w * y);
            den.push(w);
        }
    }
    let den = crate::summation::compensated_sum(den);
    if den == 0.0 {
        return Err(Error::Data("no respondents".into()));
    }
    Ok(crate::summation::compensated_sum(num) / den)
}

/// Staged starting value for the joint system: instrument model, calibrated
/// ignorable index, weighted outcome model, gamma = 0 and the Hajek mean.
pub fn warm_start(spec: &ModelSpec, data: &PreparedData, cfg: &SolverConfig) -> Result<ParamVector> {
    let beta = fit_instrument(spec, data, cfg)?;
    let xi = fit_calibrated_index(spec, data, cfg)?;
    let psi = fit_outcome(spec, data, &xi, cfg)?;
    let mu = weighted_respondent_mean(data, &xi)?;
    Ok(ParamVector {
        mu,
        gamma: vec![0.0; spec.tilt.len()],
        xi,
        beta,
        psi,
    })
}

fn propensity_range(spec: &ModelSpec, data: &PreparedData, params: &ParamVector) -> (Option<f64>, Option<f64>) {
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for (i, rec) in data.records().iter().enumerate() {
        if let Some(y) = rec.outcome() {
            let p = crate::moments::MomentContext::new(spec, params, rec, i).propensity(y);
            lo = Some(lo.map_or(p, |v| v.min(p)));
            hi = Some(hi.map_or(p, |v| v.max(p)));
        }
    }
    (lo, hi)
}

fn check_kinds(data: &Dataset, spec: &ModelSpec, head: PhiMoment) -> Result<()> {
    if head == PhiMoment::Augmented
        && (spec.outcome != OutcomeKind::Binary || spec.instrument != OutcomeKind::Binary)
    {
        return Err(Error::Config(
            "the augmented estimator requires a binary outcome and a binary instrument".into(),
        ));
    }
    if spec.instrument == OutcomeKind::Binary {
        data.check_binary_instrument()?;
    }
    if spec.outcome == OutcomeKind::Binary {
        data.check_binary_outcome()?;
    }
    Ok(())
}

/// Joint fit of `[g or g~; m]`, optionally with gamma held fixed (its
/// equations are then dropped).
fn fit_joint(
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &SolverConfig,
    head: PhiMoment,
    pinned_gamma: Option<&[f64]>,
) -> Result<EstimationResult> {
    let estimator = match head {
        PhiMoment::Ipw => EstimatorId::PhiTilde,
        PhiMoment::Augmented => EstimatorId::PhiHat,
    };
    check_kinds(data, spec, head)?;
    let layout = spec.layout();
    match pinned_gamma {
        None => data.check_has_nonresponse()?,
        Some(g) => {
            if g.len() != layout.gamma {
                return Err(Error::Config(format!(
                    "pinned gamma has length {}, model requires {}",
                    g.len(),
                    layout.gamma
                )));
            }
            if data.respondents() == 0 {
                return Err(Error::Data("no respondents in dataset".into()));
            }
        }
    }
    let prepared = PreparedData::new(data, spec)?;
    let system = StackedSystem::new(spec, &prepared, head);

    let mut start = warm_start(spec, &prepared, cfg)?;
    if let Some(g) = pinned_gamma {
        start.gamma = g.to_vec();
    }
    let full_start = start.flatten();
    let free: Vec<usize> = (0..layout.total())
        .filter(|i| pinned_gamma.is_none() || !layout.gamma_range().contains(i))
        .collect();
    let expand = |x: &[f64]| -> Vec<f64> {
        let mut full = full_start.clone();
        for (k, &i) in free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    };
    let reduced = |x: &[f64]| -> Result<Vec<f64>> {
        let r = system.residual(&expand(x))?;
        Ok(free.iter().map(|&i| r[i]).collect())
    };
    let x0: Vec<f64> = free.iter().map(|&i| full_start[i]).collect();
    let outcome = solve_system(reduced, &x0, cfg)?;
    if !outcome.converged {
        return Err(not_converged(estimator.as_str(), &outcome));
    }

    let full_root = expand(&outcome.root);
    let params = ParamVector::unflatten(&full_root, layout)?;
    let contributions: Vec<Vec<f64>> = system
        .contributions(&full_root)?
        .into_iter()
        .map(|c| free.iter().map(|&i| c[i]).collect())
        .collect();
    let covariance = sandwich(&outcome.jacobian_at_root, &contributions, data.weights())?;
    let all_names = spec.param_names();
    let names = free.iter().map(|&i| all_names[i].clone()).collect();
    let (min_p, max_p) = propensity_range(spec, &prepared, &params);
    let diagnostics = Diagnostics {
        converged: true,
        iterations: outcome.iterations,
        residual_norm: outcome.residual_norm,
        condition: outcome.condition,
        min_propensity: min_p,
        max_propensity: max_p,
        excluded_records: 0,
        n: data.len(),
        respondents: data.respondents(),
        warnings: outcome.warnings.clone(),
    };
    Ok(EstimationResult::assemble(
        estimator,
        names,
        outcome.root,
        covariance,
        Some(params),
        diagnostics,
    ))
}

/// IPW doubly robust estimator: joint root of `P_n [g~; m] = 0`.
pub fn estimate_phi_tilde(data: &Dataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<EstimationResult> {
    fit_joint(data, spec, cfg, PhiMoment::Ipw, None)
}

/// Augmented doubly robust estimator: joint root of `P_n [g; m] = 0`.
/// Binary outcome and instrument only.
pub fn estimate_phi_hat(data: &Dataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<EstimationResult> {
    fit_joint(data, spec, cfg, PhiMoment::Augmented, None)
}

/// [`estimate_phi_tilde`] with the tilting parameter fixed at `gamma`.
pub fn estimate_phi_tilde_with_gamma(
    data: &Dataset,
    spec: &ModelSpec,
    gamma: &[f64],
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    fit_joint(data, spec, cfg, PhiMoment::Ipw, Some(gamma))
}

/// [`estimate_phi_hat`] with the tilting parameter fixed at `gamma`.
pub fn estimate_phi_hat_with_gamma(
    data: &Dataset,
    spec: &ModelSpec,
    gamma: &[f64],
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    fit_joint(data, spec, cfg, PhiMoment::Augmented, Some(gamma))
}

/// Mean-only system `rho_i = a_i (y_i - mu)` over records with `a_i = 1`.
fn mean_only(
    estimator: EstimatorId,
    data: &Dataset,
    include: impl Fn(usize) -> bool,
) -> Result<EstimationResult> {
    let ys: Vec<Option<f64>> = data
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| if include(i) { r.outcome() } else { None })
        .collect();
    let ones: Vec<f64> = ys.iter().map(|y| if y.is_some() { 1.0 } else { 0.0 }).collect();
    let mu = hajek_mean(data, &ones)?;
    let weights = data.weights();
    let total: f64 = (0..data.len()).map(|i| data.weight(i)).sum();
    let share: f64 = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_some())
        .map(|(i, _)| data.weight(i))
        .sum::<f64>()
        / total;
    let jac = DMatrix::from_element(1, 1, -share);
    let contributions: Vec<Vec<f64>> = ys.iter().map(|y| vec![y.map_or(0.0, |y| y - mu)]).collect();
    let covariance = sandwich(&jac, &contributions, weights)?;
    let used = ys.iter().filter(|y| y.is_some()).count();
    let diagnostics = Diagnostics {
        converged: true,
        n: data.len(),
        respondents: data.respondents(),
        excluded_records: data.len() - used,
        condition: 1.0,
        ..Diagnostics::default()
    };
    Ok(EstimationResult::assemble(
        estimator,
        vec!["mu".into()],
        vec![mu],
        covariance,
        None,
        diagnostics,
    ))
}

/// Complete-case estimator: the respondent mean.
pub fn estimate_cc(data: &Dataset) -> Result<EstimationResult> {
    mean_only(EstimatorId::Cc, data, |_| true)
}

/// Full-data estimator; every record must carry its outcome.
pub fn estimate_full(data: &Dataset) -> Result<EstimationResult> {
    if data.respondents() != data.len() {
        return Err(Error::Data(
            "the full-data estimator needs the outcome of every record".into(),
        ));
    }
    mean_only(EstimatorId::Full, data, |_| true)
}

/// Hajek mean under the ignorable propensity `expit{eta(x; xi)}`, with `xi`
/// from the calibration equations. Joint sandwich over `(mu, xi)`.
pub fn estimate_mar(data: &Dataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<EstimationResult> {
    if data.respondents() == 0 {
        return Err(Error::Data("no respondents in dataset".into()));
    }
    let prepared = PreparedData::new(data, spec)?;
    let xi0 = fit_calibrated_index(spec, &prepared, cfg)?;
    let mu0 = weighted_respondent_mean(&prepared, &xi0)?;
    let k = spec.eta.len();
    let record_value = |x: &[f64], i: usize, rec: &crate::moments::PreparedRecord| -> Result<Vec<f64>> {
        let (mu, xi) = (x[0], &x[1..]);
        let logit = rec.responded().then(|| crate::models::dot(rec.h_eta(), xi));
        let (w, excess) = weight_pair(logit, i)?;
        let mut v = Vec::with_capacity(1 + k);
        v.push(rec.outcome().map_or(0.0, |y| w * (y - mu)));
        v.extend(rec.h_eta().iter().map(|h| excess * h));
        Ok(v)
    };
    let system = |x: &[f64]| prepared.mean(1 + k, |i, rec| record_value(x, i, rec));
    let mut x0 = vec![mu0];
    x0.extend_from_slice(&xi0);
    let outcome = solve_system(system, &x0, cfg)?;
    if !outcome.converged {
        return Err(not_converged("mar", &outcome));
    }
    let contributions = prepared.contributions(|i, rec| record_value(&outcome.root, i, rec))?;
    let covariance = sandwich(&outcome.jacobian_at_root, &contributions, data.weights())?;
    let mut names = vec!["mu".to_string()];
    names.extend(spec.eta.labels().into_iter().map(|l| format!("xi[{l}]")));
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for rec in prepared.records().iter().filter(|r| r.responded()) {
        let p = expit(crate::models::dot(rec.h_eta(), &outcome.root[1..]));
        lo = Some(lo.map_or(p, |v| v.min(p)));
        hi = Some(hi.map_or(p, |v| v.max(p)));
    }
    let diagnostics = Diagnostics {
        converged: true,
        iterations: outcome.iterations,
        residual_norm: outcome.residual_norm,
        condition: outcome.condition,
        min_propensity: lo,
        max_propensity: hi,
        excluded_records: 0,
        n: data.len(),
        respondents: data.respondents(),
        warnings: outcome.warnings.clone(),
    };
    Ok(EstimationResult::assemble(
        EstimatorId::Mar,
        names,
        outcome.root,
        covariance,
        None,
        diagnostics,
    ))
}

/// Runs one estimator by id.
pub fn estimate(
    id: EstimatorId,
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    match id {
        EstimatorId::PhiTilde => estimate_phi_tilde(data, spec, cfg),
        EstimatorId::PhiHat => estimate_phi_hat(data, spec, cfg),
        EstimatorId::Cc => estimate_cc(data),
        EstimatorId::Mar => estimate_mar(data, spec, cfg),
        EstimatorId::Full => estimate_full(data),
    }
}

/// Two-stage plug-in variance of `(mu, gamma)` for the IPW estimator: the
/// influence term `g~ - A B^-1 m` with `A = dP_n g~/d theta`,
/// `B = dP_n m/d theta`, normalized by `dP_n g~/d phi - A B^-1 dP_n m/d phi`.
///
/// `root` is a fitted stacked parameter (e.g. from [`estimate_phi_tilde`]).
pub fn ipw_expansion_variance(
    data: &Dataset,
    spec: &ModelSpec,
    root: &ParamVector,
    cfg: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let prepared = PreparedData::new(data, spec)?;
    let system = StackedSystem::new(spec, &prepared, PhiMoment::Ipw);
    let layout = spec.layout();
    let p = layout.phi_len();
    let t = layout.total() - p;
    let x = root.flatten();
    let g_mean = |v: &[f64]| system.residual(v).map(|r| r[..p].to_vec());
    let m_mean = |v: &[f64]| system.residual(v).map(|r| r[p..].to_vec());
    let jg = numerical_jacobian(&g_mean, &x, cfg)?;
    let jm = numerical_jacobian(&m_mean, &x, cfg)?;
    let g_phi = jg.columns(0, p).into_owned();
    let a = jg.columns(p, t).into_owned();
    let m_phi = jm.columns(0, p).into_owned();
    let b = jm.columns(p, t).into_owned();
    let b_inv = b.clone().try_inverse().ok_or_else(|| Error::Singular {
        context: "nuisance jacobian".into(),
        condition: condition_number(&b),
    })?;
    let correction = &a * &b_inv;
    let bread = &g_phi - &correction * &m_phi;
    let influence: Vec<Vec<f64>> = system
        .contributions(&x)?
        .into_iter()
        .map(|c| {
            let g = nalgebra::DVector::from_column_slice(&c[..p]);
            let m = nalgebra::DVector::from_column_slice(&c[p..]);
            (g - &correction * m).iter().copied().collect()
        })
        .collect();
    sandwich(&bread, &influence, data.weights())
}
