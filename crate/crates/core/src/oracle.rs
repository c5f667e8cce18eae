//! Exact population oracle on a finite toy support.
//!
//! A [`ToyPopulation`] is a finite joint law of `(U, Z, Y, R)`. Expectations
//! are exact weighted sums over its atoms, so population moment identities can
//! be checked to roundoff rather than to Monte Carlo error.
//!
//! Atoms are enumerated lexicographically over `(u, z, y, r)` with `u` in the
//! order of the supplied support; on the default `{-1, 0, 1}^2` grid this
//! gives 9 x 2 x 2 x 2 = 72 atoms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, ObservedRecord, ParamVector};
use crate::error::{Error, Result};
use crate::formula::DesignFormula;
use crate::models::{self, ModelSpec};
use crate::moments::{PhiMoment, PreparedData, StackedSystem};
use crate::solver::{condition_number, numerical_jacobian, solve_system, SolverConfig};
use crate::summation::VecAccumulator;

/// Tolerance on the total mass of a probability table.
const PMF_TOL: f64 = 1e-12;

/// One support point of the joint law.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub u: Vec<f64>,
    pub z: f64,
    pub y: f64,
    pub r: f64,
    pub prob: f64,
}

impl Atom {
    /// The record an analyst would see for this atom.
    pub fn observed(&self) -> ObservedRecord {
        if self.r == 1.0 {
            ObservedRecord::respondent(self.y, self.z, self.u.clone())
        } else {
            ObservedRecord::nonrespondent(self.z, self.u.clone())
        }
    }
}

/// Conditional tables defining a toy population.
#[derive(Debug, Clone)]
pub struct ToyTables {
    pub u_support: Vec<Vec<f64>>,
    pub u_pmf: Vec<f64>,
    /// `P(Z = 1 | u)` per support point.
    pub p_z1: Vec<f64>,
    /// `P(Y = 1 | u)` per support point.
    pub p_y1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyPopulation {
    atoms: Vec<Atom>,
    warnings: Vec<String>,
}

/// The `{-1, 0, 1}^2` grid in lexicographic order.
pub fn default_grid() -> Vec<Vec<f64>> {
    let pts = [-1.0, 0.0, 1.0];
    pts.iter()
        .flat_map(|&a| pts.iter().map(move |&b| vec![a, b]))
        .collect()
}

impl ToyPopulation {
    /// Builds the joint law from conditional tables and a response mechanism
    /// `pi(y, z, u)`. Every response probability must be at least `sigma`.
    pub fn from_tables<F>(tables: &ToyTables, response: F, sigma: f64) -> Result<Self>
    where
        F: Fn(f64, f64, &[f64]) -> f64,
    {
        let k = tables.u_support.len();
        if k == 0 || tables.u_pmf.len() != k || tables.p_z1.len() != k || tables.p_y1.len() != k {
            return Err(Error::Config("toy tables must be nonempty and of equal length".into()));
        }
        let dim = tables.u_support[0].len();
        if tables.u_support.iter().any(|u| u.len() != dim) {
            return Err(Error::Config("toy support points differ in dimension".into()));
        }
        let unit = |p: &f64| (0.0..=1.0).contains(p);
        if !tables.u_pmf.iter().all(unit) || !tables.p_z1.iter().all(unit) || !tables.p_y1.iter().all(unit) {
            return Err(Error::Config("toy probabilities must lie in [0, 1]".into()));
        }
        let mass: f64 = crate::summation::compensated_sum(tables.u_pmf.iter().copied());
        if (mass - 1.0).abs() > PMF_TOL {
            return Err(Error::Config(format!("covariate pmf sums to {mass}, not 1")));
        }

        let mut warnings = Vec::new();
        let mut atoms = Vec::with_capacity(8 * k);
        for (j, u) in tables.u_support.iter().enumerate() {
            for p in [tables.p_z1[j], tables.p_y1[j]] {
                if p == 0.0 || p == 1.0 {
                    warnings.push(format!("degenerate conditional probability {p} at support point {j}"));
                }
            }
            for z in [0.0, 1.0] {
                let pz = if z == 1.0 { tables.p_z1[j] } else { 1.0 - tables.p_z1[j] };
                for y in [0.0, 1.0] {
                    let py = if y == 1.0 { tables.p_y1[j] } else { 1.0 - tables.p_y1[j] };
                    let pi = response(y, z, u);
                    if !(pi >= sigma && pi <= 1.0) {
                        return Err(Error::Config(format!(
                            "response probability {pi} at u = {u:?}, z = {z}, y = {y} is below the positivity bound {sigma}"
                        )));
                    }
                    for r in [0.0, 1.0] {
                        let pr = if r == 1.0 { pi } else { 1.0 - pi };
                        atoms.push(Atom {
                            u: u.clone(),
                            z,
                            y,
                            r,
                            prob: tables.u_pmf[j] * pz * py * pr,
                        });
                    }
                }
            }
        }
        Ok(Self { atoms, warnings })
    }

    /// Builds the joint law implied by a model specification at `params`
    /// (`params.mu` is ignored). The instrument and outcome must be binary.
    pub fn from_models(
        spec: &ModelSpec,
        params: &ParamVector,
        u_support: Vec<Vec<f64>>,
        u_pmf: Vec<f64>,
        sigma: f64,
    ) -> Result<Self> {
        spec.validate()?;
        if params.layout() != spec.layout() {
            return Err(Error::Config("parameter blocks do not match the model".into()));
        }
        let p_z1 = u_support
            .iter()
            .map(|u| models::instrument_mean(u, &params.beta, spec))
            .collect::<Result<Vec<_>>>()?;
        let p_y1 = u_support
            .iter()
            .map(|u| models::outcome_model(u, &params.psi, spec).map(|l| l.mean))
            .collect::<Result<Vec<_>>>()?;
        // Evaluate once up front so formula errors surface as errors.
        for u in &u_support {
            models::propensity(1.0, 1.0, u, &params.xi, &params.gamma, spec)?;
        }
        let tables = ToyTables {
            u_support,
            u_pmf,
            p_z1,
            p_y1,
        };
        Self::from_tables(
            &tables,
            |y, z, u| models::propensity(y, z, u, &params.xi, &params.gamma, spec).unwrap_or(f64::NAN),
            sigma,
        )
    }

    /// Uniform pmf on [`default_grid`].
    pub fn on_default_grid(spec: &ModelSpec, params: &ParamVector, sigma: f64) -> Result<Self> {
        let grid = default_grid();
        let pmf = vec![1.0 / grid.len() as f64; grid.len()];
        Self::from_models(spec, params, grid, pmf, sigma)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Exact `E f(atom)` by compensated summation in atom order.
    pub fn exact_expectation<F>(&self, dim: usize, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&Atom) -> Result<Vec<f64>>,
    {
        let mut acc = VecAccumulator::new(dim);
        for atom in &self.atoms {
            if atom.prob == 0.0 {
                continue;
            }
            let v = f(atom)?;
            if v.len() != dim {
                return Err(Error::Config(format!("expected {dim} values, got {}", v.len())));
            }
            acc.add_scaled(&v, atom.prob);
        }
        Ok(acc.finish())
    }

    /// Population mean of `Y`.
    pub fn mean_y(&self) -> f64 {
        self.exact_expectation(1, |a| Ok(vec![a.y])).expect("scalar expectation")[0]
    }

    /// Observed-data law as a frequency-weighted dataset. Sample moments of
    /// this dataset equal population moments of the observed data.
    pub fn pseudo_sample(&self) -> Result<Dataset> {
        // Complete-data atoms differing only in the hidden y of a
        // nonrespondent map to the same observed record; keep them separate,
        // which leaves every weighted mean unchanged.
        let (records, weights): (Vec<_>, Vec<_>) = self
            .atoms
            .iter()
            .filter(|a| a.prob > 0.0)
            .map(|a| (a.observed(), a.prob))
            .unzip();
        Dataset::with_weights(records, weights)
    }

    /// Population value of the stacked moments `[g or g~; m]` at `theta`.
    pub fn expected_moments(&self, spec: &ModelSpec, head: PhiMoment, theta: &[f64]) -> Result<Vec<f64>> {
        let data = self.pseudo_sample()?;
        let prepared = PreparedData::new(&data, spec)?;
        StackedSystem::new(spec, &prepared, head).residual(theta)
    }
}

/// Default toy model: main-effects models on two covariates, logistic
/// response depending on the instrument, and a nonzero tilt.
pub fn default_toy_model() -> (ModelSpec, ParamVector) {
    let f = |s: &str| s.parse::<DesignFormula>().expect("static formula");
    let spec = ModelSpec::new(f("1 + u1 + u2 + z"), f("1 + u1 + u2"), f("1 + u1 + u2"))
        .expect("static model");
    let mut params = ParamVector::zeros(spec.layout());
    params.gamma = vec![1.0];
    params.xi = vec![0.5, 0.4, -0.3, -0.8];
    params.beta = vec![0.2, 0.6, -0.4];
    params.psi = vec![0.1, -0.7, 0.5];
    (spec, params)
}

/// Outcome of a multi-start identification probe.
#[derive(Debug, Clone)]
pub struct IdentificationReport {
    /// Population parameter, with `mu = E(Y)`.
    pub truth: Vec<f64>,
    /// Roots reached from each start; `None` where the solve failed.
    pub roots: Vec<Option<Vec<f64>>>,
    /// Largest max-norm distance between any two roots that were reached.
    pub max_pairwise_distance: f64,
    /// Largest max-norm distance between a reached root and the truth.
    pub max_distance_to_truth: f64,
    /// Condition number of the population Jacobian at the truth.
    pub condition: f64,
    /// The population Jacobian is numerically singular at the truth.
    pub flat_direction: bool,
    pub warnings: Vec<String>,
}

impl IdentificationReport {
    pub fn unique(&self, tol: f64) -> bool {
        !self.flat_direction
            && self.roots.iter().all(Option::is_some)
            && self.max_pairwise_distance <= tol
            && self.max_distance_to_truth <= tol
    }
}

/// Condition number above which a direction is reported as flat.
pub const FLAT_CONDITION: f64 = 1e12;

/// Probes identification of the population IPW system: solves it exactly
/// from `starts` seeded perturbations of the truth (uniform within `spread`
/// per coordinate) and measures the Jacobian at the truth.
///
/// The Jacobian for the condition number uses a step of `1e-4`, coarse
/// enough that a flat direction is not masked by differencing roundoff.
pub fn verify_identification(
    pop: &ToyPopulation,
    spec: &ModelSpec,
    truth: &ParamVector,
    starts: usize,
    spread: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<IdentificationReport> {
    let data = pop.pseudo_sample()?;
    let prepared = PreparedData::new(&data, spec)?;
    let system = StackedSystem::new(spec, &prepared, PhiMoment::Ipw);
    let f = |x: &[f64]| system.residual(x);

    let mut truth = truth.clone();
    truth.mu = pop.mean_y();
    let theta0 = truth.flatten();

    let probe = SolverConfig {
        jacobian_step: 1e-4,
        ..*cfg
    };
    let jac = numerical_jacobian(&f, &theta0, &probe)?;
    let condition = condition_number(&jac);
    let flat_direction = !(condition <= FLAT_CONDITION);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots = Vec::with_capacity(starts);
    let mut warnings: Vec<String> = pop.warnings().to_vec();
    for s in 0..starts {
        let x0: Vec<f64> = theta0
            .iter()
            .map(|t| t + rng.random_range(-spread..=spread))
            .collect();
        match solve_system(f, &x0, cfg) {
            Ok(out) if out.converged => roots.push(Some(out.root)),
            Ok(out) => {
                warnings.push(format!("start {s} did not converge: {}", out.warnings.join("; ")));
                roots.push(None);
            }
            Err(e) => {
                warnings.push(format!("start {s} failed: {e}"));
                roots.push(None);
            }
        }
    }
    let found: Vec<&Vec<f64>> = roots.iter().flatten().collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut max_pairwise_distance = 0.0f64;
    for (i, a) in found.iter().enumerate() {
        for b in &found[i + 1..] {
            max_pairwise_distance = max_pairwise_distance.max(dist(a, b));
        }
    }
    let max_distance_to_truth = found.iter().map(|r| dist(r, &theta0)).fold(0.0, f64::max);
    Ok(IdentificationReport {
        truth: theta0,
        roots,
        max_pairwise_distance,
        max_distance_to_truth,
        condition,
        flat_direction,
        warnings,
    })
}
