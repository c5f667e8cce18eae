//! Seeded Monte Carlo harness.
//!
//! Data-generating process for the misspecification study: `U ~ N(0, Sigma)`
//! with unit variances and covariance `sigma12`, and
//!
//! ```text
//! Z | U    ~ Bernoulli{expit(1 + 2 U1 - U2 - 0.8 U1 U2)}
//! Y | Z, U ~ Bernoulli{expit(0.5 - 2 U1 + U2)}
//! R | Y, X ~ Bernoulli{expit(2 - 3 Z + 0.8 U1 + U2 + gamma Y)}
//! ```
//!
//! Randomness comes from `ChaCha8Rng`. A sample uses the stream
//! `(seed, stream)`; replicate `i` of a batch uses stream `i` of the base
//! seed, so replicates can be drawn in any order or in parallel with
//! identical results. Per subject the draw order is: two standard normals
//! (ziggurat), then uniforms for `Z`, `Y` and `R`.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::formula::DesignFormula;
use crate::inference::{estimate, EstimatorId, Z95};
use crate::models::{expit, ModelSpec};
use crate::solver::SolverConfig;
use crate::summation::compensated_sum;

/// Draws used to integrate the true outcome mean.
pub const TRUTH_DRAWS: usize = 10_000_000;
/// Seed for the outcome-mean integration.
pub const TRUTH_SEED: u64 = 0x5eed_7a61_e000_0001;

/// Law of the baseline covariates `U = (U1, U2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Bivariate normal, unit variances, covariance `sigma12`.
    CorrelatedNormal { sigma12: f64 },
    /// `U1 ~ Bernoulli(0.55)` (an encoded binary covariate) and
    /// `U2 = (A - 40) / 12` with `A ~ Uniform(16, 64)` (a standardized age).
    SurveyAnalog,
}

impl CovariateLaw {
    fn draw<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        match *self {
            CovariateLaw::CorrelatedNormal { sigma12 } => {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                // Cholesky factor of [[1, s], [s, 1]]
                [e1, sigma12 * e1 + (1.0 - sigma12 * sigma12).sqrt() * e2]
            }
            CovariateLaw::SurveyAnalog => {
                let g = if rng.random::<f64>() < 0.55 { 1.0 } else { 0.0 };
                let age = 16.0 + 48.0 * rng.random::<f64>();
                [g, (age - 40.0) / 12.0]
            }
        }
    }
}

/// Generalized linear DGP with designs `(1, u1, u2, u1 u2)` for `Z`,
/// `(1, u1, u2)` for `Y` and `(1, z, u1, u2)` plus `gamma y` for `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub gamma_true: f64,
    pub covariates: CovariateLaw,
    pub z_coef: [f64; 4],
    pub y_coef: [f64; 3],
    pub r_coef: [f64; 4],
    pub seed: u64,
    pub stream: u64,
}

impl DgpConfig {
    /// The misspecification-study process.
    pub fn paper(n: usize, seed: u64) -> Self {
        Self {
            n,
            gamma_true: 2.0,
            covariates: CovariateLaw::CorrelatedNormal { sigma12: 0.2 },
            z_coef: [1.0, 2.0, -1.0, -0.8],
            y_coef: [0.5, -2.0, 1.0],
            r_coef: [2.0, -3.0, 0.8, 1.0],
            seed,
            stream: 0,
        }
    }

    /// Synthetic household-survey analog: binary and continuous covariates,
    /// about 81% response, prevalence near 0.27, negative tilt.
    pub fn survey_analog(n: usize, seed: u64) -> Self {
        Self {
            n,
            gamma_true: -1.5,
            covariates: CovariateLaw::SurveyAnalog,
            z_coef: [-1.2, 0.1, 0.2, 0.0],
            y_coef: [-1.3, 0.5, 0.3],
            r_coef: [2.08, -1.0, 0.4, 0.3],
            seed,
            stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        if let CovariateLaw::CorrelatedNormal { sigma12 } = self.covariates {
            if !(sigma12.abs() < 1.0) {
                return Err(Error::Config(format!(
                    "covariance {sigma12} does not give a positive definite covariate law"
                )));
            }
        }
        Ok(())
    }

    pub fn z_prob(&self, u: &[f64; 2]) -> f64 {
        let b = &self.z_coef;
        expit(b[0] + b[1] * u[0] + b[2] * u[1] + b[3] * u[0] * u[1])
    }

    pub fn y_prob(&self, u: &[f64; 2]) -> f64 {
        let b = &self.y_coef;
        expit(b[0] + b[1] * u[0] + b[2] * u[1])
    }

    pub fn response_prob(&self, y: f64, z: f64, u: &[f64; 2]) -> f64 {
        let b = &self.r_coef;
        expit(b[0] + b[1] * z + b[2] * u[0] + b[3] * u[1] + self.gamma_true * y)
    }
}

/// A drawn sample: the observed data and the complete outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub data: Dataset,
    pub outcomes: Vec<f64>,
}

impl SimulatedSample {
    /// The same subjects with every outcome observed.
    pub fn complete(&self) -> Dataset {
        let records = self
            .data
            .records()
            .iter()
            .zip(&self.outcomes)
            .map(|(r, &y)| ObservedRecord::respondent(y, r.z(), r.u().to_vec()))
            .collect();
        Dataset::new(records).expect("complete data mirrors a valid dataset")
    }
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn draw_sample(cfg: &DgpConfig) -> Result<SimulatedSample> {
    cfg.validate()?;
    let mut rng = sample_rng(cfg.seed, cfg.stream);
    let mut records = Vec::with_capacity(cfg.n);
    let mut outcomes = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let u = cfg.covariates.draw(&mut rng);
        let z = if rng.random::<f64>() < cfg.z_prob(&u) { 1.0 } else { 0.0 };
        let y = if rng.random::<f64>() < cfg.y_prob(&u) { 1.0 } else { 0.0 };
        let responded = rng.random::<f64>() < cfg.response_prob(y, z, &u);
        records.push(if responded {
            ObservedRecord::respondent(y, z, u.to_vec())
        } else {
            ObservedRecord::nonrespondent(z, u.to_vec())
        });
        outcomes.push(y);
    }
    Ok(SimulatedSample {
        data: Dataset::new(records)?,
        outcomes,
    })
}

static TRUTH_CACHE: Mutex<Vec<(String, f64)>> = Mutex::new(Vec::new());

/// `E(Y)` by Monte Carlo integration of `P(Y=1|U)` over [`TRUTH_DRAWS`]
/// covariate draws with a fixed seed. Cached per covariate law and outcome
/// coefficients.
pub fn true_mean(cfg: &DgpConfig) -> f64 {
    let key = format!("{:?}|{:?}", cfg.covariates, cfg.y_coef.map(f64::to_bits));
    if let Some((_, v)) = TRUTH_CACHE.lock().unwrap().iter().find(|(k, _)| *k == key) {
        return *v;
    }
    const CHUNK: usize = 250_000;
    let chunks = TRUTH_DRAWS / CHUNK;
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sample_rng(TRUTH_SEED, c as u64);
            compensated_sum((0..CHUNK).map(|_| cfg.y_prob(&cfg.covariates.draw(&mut rng))))
        })
        .collect();
    let value = compensated_sum(sums) / (chunks * CHUNK) as f64;
    TRUTH_CACHE.lock().unwrap().push((key, value));
    value
}

/// Misspecification scenarios plus the survey-analog design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// All working models correct.
    C1,
    /// Instrument model misspecified.
    C2,
    /// Outcome model misspecified.
    C3,
    /// Baseline response index misspecified.
    C4,
    /// All misspecified.
    C5,
    /// Survey-analog process fitted with main-effects models.
    #[serde(rename = "survey_analog")]
    SurveyAnalog,
}

const MISSPECIFIED: &str = "1 + u1 + u1^2";

impl Scenario {
    pub const TABLE: [Scenario; 5] = [
        Scenario::C1,
        Scenario::C2,
        Scenario::C3,
        Scenario::C4,
        Scenario::C5,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::C1 => "C1",
            Scenario::C2 => "C2",
            Scenario::C3 => "C3",
            Scenario::C4 => "C4",
            Scenario::C5 => "C5",
            Scenario::SurveyAnalog => "survey_analog",
        }
    }

    /// Which of (eta, instrument, outcome) models use the wrong design.
    fn misspecified(&self) -> (bool, bool, bool) {
        match self {
            Scenario::C1 | Scenario::SurveyAnalog => (false, false, false),
            Scenario::C2 => (false, true, false),
            Scenario::C3 => (false, false, true),
            Scenario::C4 => (true, false, false),
            Scenario::C5 => (true, true, true),
        }
    }

    /// Working models fitted under this scenario.
    pub fn spec(&self) -> ModelSpec {
        let f = |s: &str| -> DesignFormula { s.parse().expect("static formula") };
        if *self == Scenario::SurveyAnalog {
            return ModelSpec::new(f("1 + z + u1 + u2"), f("1 + u1 + u2"), f("1 + u1 + u2"))
                .expect("static spec");
        }
        let (eta_bad, z_bad, y_bad) = self.misspecified();
        let eta = if eta_bad { "1 + u1 + u1^2 + z" } else { "1 + u1 + u2 + z" };
        let z = if z_bad { MISSPECIFIED } else { "1 + u1 + u2 + u1:u2" };
        let y = if y_bad { MISSPECIFIED } else { "1 + u1 + u2" };
        ModelSpec::new(f(eta), f(z), f(y)).expect("static spec")
    }

    pub fn dgp(&self, n: usize, seed: u64) -> DgpConfig {
        match self {
            Scenario::SurveyAnalog => DgpConfig::survey_analog(n, seed),
            _ => DgpConfig::paper(n, seed),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::TABLE
            .into_iter()
            .chain([Scenario::SurveyAnalog])
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// One replicate's estimate of a scalar target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateEstimate {
    pub point: f64,
    pub se: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub abs_bias: f64,
    pub mc_sd: f64,
    /// Square root of the mean estimated variance.
    pub mean_se: f64,
    pub cov95: f64,
    pub replicates_used: usize,
    pub replicates_excluded: usize,
}

/// Monte Carlo summaries over converged replicates; `None` when none
/// converged.
pub fn metrics(estimates: &[ReplicateEstimate], truth: f64) -> Option<MetricRow> {
    let used: Vec<&ReplicateEstimate> = estimates.iter().filter(|e| e.converged).collect();
    let k = used.len();
    if k == 0 {
        return None;
    }
    let kf = k as f64;
    let mean = compensated_sum(used.iter().map(|e| e.point)) / kf;
    let mc_sd = if k > 1 {
        (compensated_sum(used.iter().map(|e| (e.point - mean).powi(2))) / (kf - 1.0)).sqrt()
    } else {
        0.0
    };
    let mean_se = (compensated_sum(used.iter().map(|e| e.se * e.se)) / kf).sqrt();
    let covered = used
        .iter()
        .filter(|e| (e.point - truth).abs() <= Z95 * e.se)
        .count();
    Some(MetricRow {
        abs_bias: (mean - truth).abs(),
        mc_sd,
        mean_se,
        cov95: covered as f64 / kf,
        replicates_used: k,
        replicates_excluded: estimates.len() - k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub estimator: EstimatorId,
    /// `mu` or `gamma`.
    pub target: String,
    pub n: usize,
    pub truth: f64,
    pub abs_bias: Option<f64>,
    pub mc_sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub cov95: Option<f64>,
    pub replicates_used: usize,
    pub replicates_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub scenario: String,
    pub estimator: EstimatorId,
    pub n: usize,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub base_seed: u64,
    pub replicates: usize,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<ReplicateFailure>,
}

impl SimulationReport {
    pub fn row(&self, scenario: Scenario, estimator: EstimatorId, target: &str, n: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario.as_str() && r.estimator == estimator && r.target == target && r.n == n
        })
    }

    pub fn extend(&mut self, other: SimulationReport) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    /// Flat table, one line per row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Options shared by every replicate of a batch.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub solver: SolverConfig,
    /// Return every drawn sample alongside the report.
    pub keep_samples: bool,
}

/// Replicate outputs: per estimator `(mu, gamma)` estimates or an error.
type ReplicateOutput = (Vec<(EstimatorId, std::result::Result<(ReplicateEstimate, Option<ReplicateEstimate>), String>)>, Option<SimulatedSample>);

fn run_replicate(
    spec: &ModelSpec,
    dgp: &DgpConfig,
    estimators: &[EstimatorId],
    opts: &RunOptions,
) -> Result<ReplicateOutput> {
    let sample = draw_sample(dgp)?;
    let mut out = Vec::with_capacity(estimators.len());
    for &id in estimators {
        let fitted = if id == EstimatorId::Full {
            estimate(id, &sample.complete(), spec, &opts.solver)
        } else {
            estimate(id, &sample.data, spec, &opts.solver)
        };
        let entry = fitted
            .map(|res| {
                let mu = ReplicateEstimate {
                    point: res.mu(),
                    se: res.mu_se(),
                    converged: true,
                };
                let gamma = res.gamma().and_then(|g| {
                    let i = res.index_of(if g.len() == 1 { "gamma" } else { "gamma[1]" })?;
                    Some(ReplicateEstimate {
                        point: res.estimates[i],
                        se: res.se[i],
                        converged: true,
                    })
                });
                (mu, gamma)
            })
            .map_err(|e| e.to_string());
        out.push((id, entry));
    }
    Ok((out, opts.keep_samples.then_some(sample)))
}

/// Runs `replicates` seeded replicates of one scenario at sample size `n`.
///
/// Replicates run in parallel; aggregation is ordered by replicate index.
/// Estimator failures are recorded and excluded, never fatal.
pub fn run_scenario(
    scenario: Scenario,
    n: usize,
    replicates: usize,
    estimators: &[EstimatorId],
    base_seed: u64,
    opts: &RunOptions,
) -> Result<SimulationReport> {
    run_scenario_with_samples(scenario, n, replicates, estimators, base_seed, opts).map(|(r, _)| r)
}

/// [`run_scenario`], also returning the drawn samples when
/// `opts.keep_samples` is set.
pub fn run_scenario_with_samples(
    scenario: Scenario,
    n: usize,
    replicates: usize,
    estimators: &[EstimatorId],
    base_seed: u64,
    opts: &RunOptions,
) -> Result<(SimulationReport, Vec<SimulatedSample>)> {
    if replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let spec = scenario.spec();
    let base = scenario.dgp(n, base_seed);
    base.validate()?;
    let outputs: Vec<ReplicateOutput> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let dgp = DgpConfig {
                stream: i as u64,
                ..base.clone()
            };
            run_replicate(&spec, &dgp, estimators, opts)
        })
        .collect::<Result<_>>()?;

    let truth_mu = true_mean(&base);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, &id) in estimators.iter().enumerate() {
        let mut mu_est = Vec::with_capacity(replicates);
        let mut gamma_est = Vec::new();
        for (rep, (fits, _)) in outputs.iter().enumerate() {
            match &fits[k].1 {
                Ok((mu, gamma)) => {
                    mu_est.push(*mu);
                    if let Some(g) = gamma {
                        gamma_est.push(*g);
                    }
                }
                Err(msg) => {
                    let failed = ReplicateEstimate {
                        point: f64::NAN,
                        se: f64::NAN,
                        converged: false,
                    };
                    mu_est.push(failed);
                    if matches!(id, EstimatorId::PhiTilde | EstimatorId::PhiHat) {
                        gamma_est.push(failed);
                    }
                    failures.push(ReplicateFailure {
                        scenario: scenario.as_str().into(),
                        estimator: id,
                        n,
                        replicate: rep,
                        error: msg.clone(),
                    });
                }
            }
        }
        rows.push(make_row(scenario, id, "mu", n, truth_mu, &mu_est));
        if !gamma_est.is_empty() {
            rows.push(make_row(scenario, id, "gamma", n, base.gamma_true, &gamma_est));
        }
    }
    let samples = outputs.into_iter().filter_map(|(_, s)| s).collect();
    Ok((
        SimulationReport {
            schema_version: crate::config::SCHEMA_VERSION,
            base_seed,
            replicates,
            rows,
            failures,
        },
        samples,
    ))
}

fn make_row(
    scenario: Scenario,
    estimator: EstimatorId,
    target: &str,
    n: usize,
    truth: f64,
    estimates: &[ReplicateEstimate],
) -> ReportRow {
    let m = metrics(estimates, truth);
    ReportRow {
        scenario: scenario.as_str().into(),
        estimator,
        target: target.into(),
        n,
        truth,
        abs_bias: m.map(|m| m.abs_bias),
        mc_sd: m.map(|m| m.mc_sd),
        mean_se: m.map(|m| m.mean_se),
        cov95: m.map(|m| m.cov95),
        replicates_used: m.map_or(0, |m| m.replicates_used),
        replicates_excluded: m.map_or(estimates.len(), |m| m.replicates_excluded),
    }
}
