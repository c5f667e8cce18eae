//! Estimating functions.
//!
//! Per record, with `pi = pi(w; xi, gamma)`:
//!
//! * nuisance system `m`: `(R/pi - 1) h1(x)`, `(z - pZ(u)) h2(u)` and
//!   `(R/pi) (y - pY(u)) h3(u)`;
//! * core vector `q = (y - mu, d_yz(u) (y - pY(u)) (z - pZ(u)))`;
//! * IPW moment `g~ = R q / pi`;
//! * augmented moment `g = R q / pi + (1 - R/pi) E{q | R=0, x}`, where the
//!   nonrespondent outcome law is `{1 - pi(y, x)} p(y|u)` normalized over
//!   `y in {0, 1}`.

use crate::data::{Dataset, ObservedRecord, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::models::{dot, expit, nuisance_mean, ModelSpec, OutcomeKind};
use crate::summation::VecAccumulator;

/// Smallest respondent propensity accepted before inverse weighting.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Smallest admissible normalizer of the nonrespondent outcome law.
pub const MIXTURE_FLOOR: f64 = 1e-300;

/// A record with every design vector evaluated once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    outcome: Option<f64>,
    z: f64,
    h_eta: Vec<f64>,
    h_z: Vec<f64>,
    h_y: Vec<f64>,
    tilt: Vec<f64>,
    d_yz: Vec<f64>,
}

impl PreparedRecord {
    pub fn new(rec: &ObservedRecord, spec: &ModelSpec) -> Result<Self> {
        let (z, u) = (rec.z(), rec.u());
        Ok(Self {
            outcome: rec.outcome(),
            z,
            h_eta: spec.eta.evaluate(z, u)?,
            h_z: spec.z_model.evaluate(z, u)?,
            h_y: spec.y_model.evaluate(z, u)?,
            tilt: spec.tilt.evaluate(z, u)?,
            d_yz: spec.index_d.evaluate(z, u)?,
        })
    }

    pub fn responded(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub(crate) fn outcome(&self) -> Option<f64> {
        self.outcome
    }

    pub(crate) fn h_eta(&self) -> &[f64] {
        &self.h_eta
    }

    pub(crate) fn h_z(&self) -> &[f64] {
        &self.h_z
    }

    pub(crate) fn h_y(&self) -> &[f64] {
        &self.h_y
    }
}

/// Everything needed to evaluate a moment function at one record.
#[derive(Debug, Clone, Copy)]
pub struct MomentContext<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ParamVector,
    pub record: &'a PreparedRecord,
    /// Position of the record in its dataset, reported in errors.
    pub index: usize,
}

impl<'a> MomentContext<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        params: &'a ParamVector,
        record: &'a PreparedRecord,
        index: usize,
    ) -> Self {
        Self {
            spec,
            params,
            record,
            index,
        }
    }

    /// Linear predictor of `pi` at outcome value `y`.
    #[inline]
    fn propensity_logit(&self, y: f64) -> f64 {
        dot(&self.record.h_eta, &self.params.xi) + y * dot(&self.record.tilt, &self.params.gamma)
    }

    pub fn propensity(&self, y: f64) -> f64 {
        expit(self.propensity_logit(y))
    }

    /// Model-based `P(Z=1|u)` (or `E(Z|u)` for a continuous instrument).
    pub fn instrument_mean(&self) -> f64 {
        nuisance_mean(self.spec.instrument, &self.record.h_z, &self.params.beta)
    }

    /// Model-based `P(Y=1|u)` (or `E(Y|u)` for a continuous outcome).
    pub fn outcome_mean(&self) -> f64 {
        nuisance_mean(self.spec.outcome, &self.record.h_y, &self.params.psi)
    }

    /// `(R / pi, R / pi - 1)` at the observed outcome; see [`weight_pair`].
    pub fn weight_pair(&self) -> Result<(f64, f64)> {
        weight_pair(self.record.outcome.map(|y| self.propensity_logit(y)), self.index)
    }

    /// `R / pi(w)` at the observed outcome, guarded by [`WEIGHT_FLOOR`].
    pub fn inverse_weight(&self) -> Result<f64> {
        match self.record.outcome {
            None => Ok(0.0),
            Some(y) => {
                let p = self.propensity(y);
                if !(p >= WEIGHT_FLOOR) {
                    return Err(Error::WeightExplosion {
                        record: self.index,
                        value: p,
                        floor: WEIGHT_FLOOR,
                    });
                }
                Ok(1.0 / p)
            }
        }
    }
}

/// `(R / pi, R / pi - 1)` from the response logit (`None` for a
/// nonrespondent). The excess is computed as `exp(-logit)`, which stays
/// accurate when `pi` rounds to 1.
pub fn weight_pair(logit: Option<f64>, record: usize) -> Result<(f64, f64)> {
    match logit {
        None => Ok((0.0, -1.0)),
        Some(t) => {
            let p = expit(t);
            if !(p >= WEIGHT_FLOOR) {
                return Err(Error::WeightExplosion {
                    record,
                    value: p,
                    floor: WEIGHT_FLOOR,
                });
            }
            Ok((1.0 / p, (-t).exp()))
        }
    }
}

/// Per-record value of the stacked nuisance system, blocks `(xi, beta, psi)`.
pub fn moment_m(ctx: &MomentContext<'_>) -> Result<Vec<f64>> {
    let (w, excess) = ctx.weight_pair()?;
    let rec = ctx.record;
    let mut out = Vec::with_capacity(rec.h_eta.len() + rec.h_z.len() + rec.h_y.len());
    out.extend(rec.h_eta.iter().map(|h| excess * h));
    let z_resid = rec.z - ctx.instrument_mean();
    out.extend(rec.h_z.iter().map(|h| z_resid * h));
    match rec.outcome {
        Some(y) => {
            let scale = w * (y - ctx.outcome_mean());
            out.extend(rec.h_y.iter().map(|h| scale * h));
        }
        None => out.extend(std::iter::repeat_n(0.0, rec.h_y.len())),
    }
    Ok(out)
}

/// Realized `d(W) - d†(W)` for `d(W) = d_yz(u) y z`:
/// `d_yz(u) (y - pY) (z - pZ)`.
pub fn center_fdag(d_yz: &[f64], y: f64, z: f64, p_y: f64, p_z: f64) -> Vec<f64> {
    let f = (y - p_y) * (z - p_z);
    d_yz.iter().map(|d| d * f).collect()
}

/// `q(W; mu)` at outcome value `y` (observed or hypothetical).
pub fn q_vector(ctx: &MomentContext<'_>, y: f64) -> Vec<f64> {
    let rec = ctx.record;
    let mut q = Vec::with_capacity(1 + rec.d_yz.len());
    q.push(y - ctx.params.mu);
    let f = (y - ctx.outcome_mean()) * (rec.z - ctx.instrument_mean());
    q.extend(rec.d_yz.iter().map(|d| d * f));
    q
}

/// Inverse probability weighted moment `R q / pi`.
pub fn g_tilde(ctx: &MomentContext<'_>) -> Result<Vec<f64>> {
    let w = ctx.inverse_weight()?;
    Ok(match ctx.record.outcome {
        Some(y) => q_vector(ctx, y).into_iter().map(|v| w * v).collect(),
        None => vec![0.0; 1 + ctx.record.d_yz.len()],
    })
}

/// `P(Y=1 | R=0, x)` for a binary outcome.
pub fn nonrespondent_law(ctx: &MomentContext<'_>) -> Result<f64> {
    if ctx.spec.outcome != OutcomeKind::Binary {
        return Err(Error::Config(
            "the nonrespondent outcome law is available for binary outcomes only".into(),
        ));
    }
    let p1 = ctx.outcome_mean();
    // 1 - expit(t) == expit(-t), exact in the upper tail
    let miss1 = expit(-ctx.propensity_logit(1.0));
    let miss0 = expit(-ctx.propensity_logit(0.0));
    let a = miss1 * p1;
    let b = miss0 * (1.0 - p1);
    let den = a + b;
    if !(den >= MIXTURE_FLOOR) {
        return Err(Error::DegenerateMixture { record: ctx.index });
    }
    Ok(a / den)
}

/// `E{q | R=0, x}` under [`nonrespondent_law`].
pub fn nonrespondent_q(ctx: &MomentContext<'_>) -> Result<Vec<f64>> {
    let p1 = nonrespondent_law(ctx)?;
    let q1 = q_vector(ctx, 1.0);
    let q0 = q_vector(ctx, 0.0);
    Ok(q1
        .iter()
        .zip(&q0)
        .map(|(a, b)| p1 * a + (1.0 - p1) * b)
        .collect())
}

/// Augmented moment `R q / pi + (1 - R/pi) E{q | R=0, x}`.
pub fn g_augmented(ctx: &MomentContext<'_>) -> Result<Vec<f64>> {
    if ctx.spec.instrument != OutcomeKind::Binary {
        return Err(Error::Config(
            "the augmented moment requires a binary instrument".into(),
        ));
    }
    let w = ctx.inverse_weight()?;
    let aug = nonrespondent_q(ctx)?;
    Ok(match ctx.record.outcome {
        Some(y) => q_vector(ctx, y)
            .iter()
            .zip(&aug)
            .map(|(q, e)| w * q + (1.0 - w) * e)
            .collect(),
        None => aug,
    })
}

/// Which `(mu, gamma)` moment heads the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMoment {
    Ipw,
    Augmented,
}

/// A dataset prepared against a model specification.
#[derive(Debug, Clone)]
pub struct PreparedData {
    records: Vec<PreparedRecord>,
    weights: Option<Vec<f64>>,
}

impl PreparedData {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if spec.required_covariates() > data.dim() {
            return Err(Error::Config(format!(
                "model references u{} but the data has {} covariates",
                spec.required_covariates(),
                data.dim()
            )));
        }
        let records = data
            .records()
            .iter()
            .map(|r| PreparedRecord::new(r, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            weights: data.weights().map(|w| w.to_vec()),
        })
    }

    pub fn records(&self) -> &[PreparedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => crate::summation::compensated_sum(w.iter().copied()),
            None => self.records.len() as f64,
        }
    }

    /// Weighted empirical mean of a vector-valued per-record function.
    pub fn mean<F>(&self, dim: usize, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &PreparedRecord) -> Result<Vec<f64>>,
    {
        let mut acc = VecAccumulator::new(dim);
        for (i, rec) in self.records.iter().enumerate() {
            let v = f(i, rec)?;
            acc.add_scaled(&v, self.weight(i));
        }
        let total = self.total_weight();
        Ok(acc.finish().into_iter().map(|s| s / total).collect())
    }

    /// Per-record values of a vector-valued function, in record order.
    pub fn contributions<F>(&self, mut f: F) -> Result<Vec<Vec<f64>>>
    where
        F: FnMut(usize, &PreparedRecord) -> Result<Vec<f64>>,
    {
        self.records
            .iter()
            .enumerate()
            .map(|(i, rec)| f(i, rec))
            .collect()
    }
}

/// The joint system `[g or g~; m]` in the parameter order of [`ParamVector`].
#[derive(Debug, Clone)]
pub struct StackedSystem<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a PreparedData,
    pub head: PhiMoment,
}

impl<'a> StackedSystem<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a PreparedData, head: PhiMoment) -> Self {
        Self { spec, data, head }
    }

    pub fn layout(&self) -> ParamLayout {
        self.spec.layout()
    }

    pub fn dim(&self) -> usize {
        self.layout().total()
    }

    /// Writes the stacked moments of record `i` into `out` without
    /// allocating; algebraically identical to concatenating
    /// [`g_tilde`]/[`g_augmented`] and [`moment_m`].
    fn write_record(&self, params: &ParamVector, i: usize, rec: &PreparedRecord, out: &mut [f64]) -> Result<()> {
        let ctx = MomentContext::new(self.spec, params, rec, i);
        let (w, excess) = ctx.weight_pair()?;
        let p_z = ctx.instrument_mean();
        let p_y = ctx.outcome_mean();
        let z_resid = rec.z - p_z;
        let k = 1 + rec.d_yz.len();
        let (head, rest) = out.split_at_mut(k);
        match (self.head, rec.outcome) {
            (PhiMoment::Ipw, Some(y)) => {
                head[0] = w * (y - params.mu);
                let f = w * (y - p_y) * z_resid;
                for (o, d) in head[1..].iter_mut().zip(&rec.d_yz) {
                    *o = d * f;
                }
            }
            (PhiMoment::Ipw, None) => head.fill(0.0),
            (PhiMoment::Augmented, outcome) => {
                if self.spec.instrument != OutcomeKind::Binary {
                    return Err(Error::Config(
                        "the augmented moment requires a binary instrument".into(),
                    ));
                }
                // E{q | R=0, x} is linear in the nonrespondent law p1.
                let p1 = nonrespondent_law(&ctx)?;
                let e_f = (p1 - p_y) * z_resid;
                head[0] = p1 - params.mu;
                for (o, d) in head[1..].iter_mut().zip(&rec.d_yz) {
                    *o = d * e_f;
                }
                if let Some(y) = outcome {
                    head[0] = w * (y - params.mu) + (1.0 - w) * head[0];
                    let f = (y - p_y) * z_resid;
                    for (o, d) in head[1..].iter_mut().zip(&rec.d_yz) {
                        *o = w * d * f + (1.0 - w) * *o;
                    }
                }
            }
        }
        let (m_eta, rest) = rest.split_at_mut(rec.h_eta.len());
        let (m_z, m_y) = rest.split_at_mut(rec.h_z.len());
        for (o, h) in m_eta.iter_mut().zip(&rec.h_eta) {
            *o = excess * h;
        }
        for (o, h) in m_z.iter_mut().zip(&rec.h_z) {
            *o = z_resid * h;
        }
        let scale = rec.outcome.map_or(0.0, |y| w * (y - p_y));
        for (o, h) in m_y.iter_mut().zip(&rec.h_y) {
            *o = scale * h;
        }
        Ok(())
    }

    /// Empirical mean of the stacked moments at a flattened parameter.
    pub fn residual(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let params = ParamVector::unflatten(theta, self.layout())?;
        let dim = self.dim();
        let mut acc = VecAccumulator::new(dim);
        let mut buf = vec![0.0; dim];
        for (i, rec) in self.data.records.iter().enumerate() {
            self.write_record(&params, i, rec, &mut buf)?;
            acc.add_scaled(&buf, self.data.weight(i));
        }
        let total = self.data.total_weight();
        Ok(acc.finish().into_iter().map(|s| s / total).collect())
    }

    /// Per-record stacked moments at a flattened parameter.
    pub fn contributions(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let params = ParamVector::unflatten(theta, self.layout())?;
        let dim = self.dim();
        self.data.contributions(|i, rec| {
            let mut v = vec![0.0; dim];
            self.write_record(&params, i, rec, &mut v)?;
            Ok(v)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::DesignFormula;
    use approx::assert_abs_diff_eq;

    fn f(s: &str) -> DesignFormula {
        s.parse().unwrap()
    }

    fn sim_spec() -> ModelSpec {
        ModelSpec::new(f("1 + z + u1 + u2"), f("1 + u1 + u2 + u1:u2"), f("1 + u1 + u2")).unwrap()
    }

    fn truth() -> ParamVector {
        ParamVector {
            mu: 0.5,
            gamma: vec![2.0],
            xi: vec![2.0, -3.0, 0.8, 1.0],
            beta: vec![1.0, 2.0, -1.0, -0.8],
            psi: vec![0.5, -2.0, 1.0],
        }
    }

    fn prep(rec: ObservedRecord, spec: &ModelSpec) -> PreparedRecord {
        PreparedRecord::new(&rec, spec).unwrap()
    }

    #[test]
    fn stacked_contributions_match_per_record_functions() {
        let spec = sim_spec();
        let params = truth();
        let data = Dataset::new(vec![
            ObservedRecord::respondent(1.0, 1.0, vec![0.3, -0.2]),
            ObservedRecord::respondent(0.0, 0.0, vec![-1.1, 0.4]),
            ObservedRecord::nonrespondent(1.0, vec![0.7, 1.5]),
            ObservedRecord::nonrespondent(0.0, vec![-0.2, -0.9]),
        ])
        .unwrap();
        let prepared = PreparedData::new(&data, &spec).unwrap();
        for head in [PhiMoment::Ipw, PhiMoment::Augmented] {
            let sys = StackedSystem::new(&spec, &prepared, head);
            let rows = sys.contributions(&params.flatten()).unwrap();
            for (i, rec) in prepared.records().iter().enumerate() {
                let ctx = MomentContext::new(&spec, &params, rec, i);
                let mut want = match head {
                    PhiMoment::Ipw => g_tilde(&ctx).unwrap(),
                    PhiMoment::Augmented => g_augmented(&ctx).unwrap(),
                };
                want.extend(moment_m(&ctx).unwrap());
                for (a, b) in rows[i].iter().zip(&want) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn nonrespondent_has_zero_outcome_block() {
        let spec = sim_spec();
        let p = truth();
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.3, -0.2]), &spec);
        let m = moment_m(&MomentContext::new(&spec, &p, &rec, 0)).unwrap();
        assert_eq!(m.len(), 11);
        assert_eq!(&m[8..], &[0.0, 0.0, 0.0]);
        // R/pi - 1 = -1 multiplies h1
        assert_eq!(&m[..4], &[-1.0, -1.0, -0.3, 0.2]);
    }

    #[test]
    fn instrument_score_block() {
        let spec = sim_spec();
        let mut p = truth();
        p.beta = vec![0.0; 4];
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.5, 2.0]), &spec);
        let m = moment_m(&MomentContext::new(&spec, &p, &rec, 0)).unwrap();
        assert_eq!(&m[4..8], &[0.5, 0.25, 1.0, 0.5]);
    }

    #[test]
    fn centering_examples() {
        assert_eq!(center_fdag(&[1.0, 2.0], 0.3, 1.0, 0.3, 0.5), vec![0.0, 0.0]);
        assert_eq!(center_fdag(&[1.0], 1.0, 1.0, 0.5, 0.5), vec![0.25]);
    }

    #[test]
    fn centering_annihilates_conditional_means() {
        // Y and Z independent given U: enumerate the four (y, z) cells
        for &(py, pz) in &[(0.3, 0.6), (0.9, 0.15), (0.5, 0.5)] {
            let d = [1.7, -0.4];
            let cell = |y: f64, z: f64| {
                let p = (if y == 1.0 { py } else { 1.0 - py }) * (if z == 1.0 { pz } else { 1.0 - pz });
                (p, center_fdag(&d, y, z, py, pz))
            };
            for k in 0..2 {
                let total: f64 = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
                    .iter()
                    .map(|&(y, z)| {
                        let (p, v) = cell(y, z);
                        p * v[k]
                    })
                    .sum();
                assert_abs_diff_eq!(total, 0.0, epsilon = 1e-15);
                for fixed in [0.0, 1.0] {
                    // E[. | Y = fixed] and E[. | Z = fixed]
                    let given_y: f64 = [0.0, 1.0]
                        .iter()
                        .map(|&z| {
                            let pzc = if z == 1.0 { pz } else { 1.0 - pz };
                            pzc * center_fdag(&d, fixed, z, py, pz)[k]
                        })
                        .sum();
                    let given_z: f64 = [0.0, 1.0]
                        .iter()
                        .map(|&y| {
                            let pyc = if y == 1.0 { py } else { 1.0 - py };
                            pyc * center_fdag(&d, y, fixed, py, pz)[k]
                        })
                        .sum();
                    assert_abs_diff_eq!(given_y, 0.0, epsilon = 1e-15);
                    assert_abs_diff_eq!(given_z, 0.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn q_vector_examples() {
        let spec = sim_spec();
        let mut p = truth();
        p.mu = 0.0;
        p.beta = vec![0.0; 4];
        p.psi = vec![0.0; 3];
        let rec = prep(ObservedRecord::respondent(1.0, 1.0, vec![0.1, 0.2]), &spec);
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        assert_eq!(q_vector(&ctx, 1.0), vec![1.0, 0.25]);
        p.mu = 0.5;
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        assert_eq!(q_vector(&ctx, 0.5), vec![0.0, 0.0]);

        let two = sim_spec().with_tilt(f("1 + u1"), f("1 + u2")).unwrap();
        let mut p2 = truth();
        p2.gamma = vec![1.0, 0.0];
        let rec2 = prep(ObservedRecord::respondent(1.0, 1.0, vec![0.1, 0.2]), &two);
        assert_eq!(q_vector(&MomentContext::new(&two, &p2, &rec2, 0), 1.0).len(), 3);
    }

    #[test]
    fn g_tilde_examples() {
        let spec = sim_spec();
        let mut p = truth();
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.1, 0.2]), &spec);
        assert_eq!(g_tilde(&MomentContext::new(&spec, &p, &rec, 0)).unwrap(), vec![0.0, 0.0]);

        // pi = 0.5 via xi = 0, gamma = 0; q = (1, 0.25)
        p.mu = 0.0;
        p.gamma = vec![0.0];
        p.xi = vec![0.0; 4];
        p.beta = vec![0.0; 4];
        p.psi = vec![0.0; 3];
        let rec = prep(ObservedRecord::respondent(1.0, 1.0, vec![0.1, 0.2]), &spec);
        assert_eq!(g_tilde(&MomentContext::new(&spec, &p, &rec, 0)).unwrap(), vec![2.0, 0.5]);
    }

    #[test]
    fn weight_floor_reports_record() {
        let spec = sim_spec();
        let mut p = truth();
        p.xi = vec![-30.0, 0.0, 0.0, 0.0];
        p.gamma = vec![0.0];
        let rec = prep(ObservedRecord::respondent(1.0, 1.0, vec![0.1, 0.2]), &spec);
        let err = g_tilde(&MomentContext::new(&spec, &p, &rec, 17)).unwrap_err();
        assert!(matches!(err, Error::WeightExplosion { record: 17, .. }));
        assert!(moment_m(&MomentContext::new(&spec, &p, &rec, 17)).is_err());
    }

    #[test]
    fn nonrespondent_law_examples() {
        let spec = sim_spec();
        let mut p = truth();
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.0, 0.0]), &spec);
        let law = nonrespondent_law(&MomentContext::new(&spec, &p, &rec, 0)).unwrap();
        let (pi1, pi0, p1) = (expit(1.0), expit(-1.0), expit(0.5));
        let expected = (1.0 - pi1) * p1 / ((1.0 - pi1) * p1 + (1.0 - pi0) * (1.0 - p1));
        assert_abs_diff_eq!(law, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(law, 0.37754, epsilon = 1e-5);

        p.gamma = vec![0.0];
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        assert_abs_diff_eq!(nonrespondent_law(&ctx).unwrap(), ctx.outcome_mean(), epsilon = 1e-15);

        p.psi = vec![800.0, 0.0, 0.0];
        p.gamma = vec![2.0];
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        assert_eq!(nonrespondent_law(&ctx).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_mixture() {
        let spec = sim_spec();
        let mut p = truth();
        p.xi = vec![800.0, 0.0, 0.0, 0.0];
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.0, 0.0]), &spec);
        let err = nonrespondent_law(&MomentContext::new(&spec, &p, &rec, 4)).unwrap_err();
        assert!(matches!(err, Error::DegenerateMixture { record: 4 }));
    }

    #[test]
    fn augmented_examples() {
        let spec = sim_spec();
        let mut p = truth();
        let rec = prep(ObservedRecord::nonrespondent(1.0, vec![0.2, -0.1]), &spec);
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        assert_eq!(g_augmented(&ctx).unwrap(), nonrespondent_q(&ctx).unwrap());

        p.gamma = vec![0.0];
        let ctx = MomentContext::new(&spec, &p, &rec, 0);
        let g = g_augmented(&ctx).unwrap();
        assert_abs_diff_eq!(g[0], ctx.outcome_mean() - p.mu, epsilon = 1e-15);
    }
}
