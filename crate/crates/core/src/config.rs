//! Run configuration, dataset CSV I/O and result documents.
//!
//! Dataset CSV: header `r,y,z,u1,...,uL`; `y` is empty exactly when `r = 0`.
//!
//! Config JSON (unknown keys are rejected):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": {
//!     "eta": "1 + z + u1 + u2",
//!     "z_model": "1 + u1 + u2",
//!     "y_model": "1 + u1 + u2",
//!     "tilt": "1",
//!     "index_d": "1",
//!     "outcome": "binary",
//!     "instrument": "binary"
//!   },
//!   "estimators": ["phi_tilde", "phi_hat", "cc", "mar"],
//!   "solver": { "tol": 1e-9 },
//!   "simulation": {
//!     "scenarios": ["C1"], "n": [1000], "replicates": 500,
//!     "base_seed": 20240101, "estimators": ["phi_tilde", "cc", "full"]
//!   }
//! }
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::formula::DesignFormula;
use crate::inference::{EstimationResult, EstimatorId};
use crate::models::{IndexC, ModelSpec, OutcomeKind};
use crate::simulation::Scenario;
use crate::solver::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_intercept() -> String {
    "1".into()
}

fn default_binary() -> OutcomeKind {
    OutcomeKind::Binary
}

/// Serialized form of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub eta: String,
    pub z_model: String,
    pub y_model: String,
    #[serde(default = "default_intercept")]
    pub tilt: String,
    #[serde(default = "default_intercept")]
    pub index_d: String,
    #[serde(default)]
    pub index_c: IndexC,
    #[serde(default = "default_binary")]
    pub outcome: OutcomeKind,
    #[serde(default = "default_binary")]
    pub instrument: OutcomeKind,
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            eta: self.eta.parse()?,
            z_model: DesignFormula::parse_covariate_only(&self.z_model)?,
            y_model: DesignFormula::parse_covariate_only(&self.y_model)?,
            tilt: self.tilt.parse()?,
            index_d: DesignFormula::parse_covariate_only(&self.index_d)?,
            index_c: self.index_c,
            outcome: self.outcome,
            instrument: self.instrument,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical form: every field explicit, formulas normalized.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            eta: spec.eta.to_string(),
            z_model: spec.z_model.to_string(),
            y_model: spec.y_model.to_string(),
            tilt: spec.tilt.to_string(),
            index_d: spec.index_d.to_string(),
            index_c: spec.index_c,
            outcome: spec.outcome,
            instrument: spec.instrument,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_halvings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_warn: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            step_halvings: self.step_halvings.unwrap_or(d.step_halvings),
            jacobian_step: self.jacobian_step.unwrap_or(d.jacobian_step),
            condition_warn: self.condition_warn.unwrap_or(d.condition_warn),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenarios: Vec<Scenario>,
    pub n: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorId>,
}

impl SimulationConfig {
    /// Named simulation profiles.
    ///
    /// * `desk`: all five scenarios, n = 1000, 500 replicates.
    /// * `table1`: all five scenarios, n in {500, 1000, 5000}, 1000 replicates.
    /// * `table1-c1-n1000-reps500`: scenario C1 only.
    /// * `survey-analog`: one draw of the synthetic survey (n = 4997), fitted
    ///   with main-effects models; use with `--emit-data` to get a dataset.
    pub fn profile(name: &str) -> Result<Self> {
        let dr = vec![EstimatorId::PhiTilde, EstimatorId::Cc, EstimatorId::Full];
        Ok(match name {
            "desk" => Self {
                scenarios: Scenario::TABLE.to_vec(),
                n: vec![1000],
                replicates: 500,
                base_seed: 20240101,
                estimators: dr,
            },
            "table1" => Self {
                scenarios: Scenario::TABLE.to_vec(),
                n: vec![500, 1000, 5000],
                replicates: 1000,
                base_seed: 20240101,
                estimators: dr,
            },
            "table1-c1-n1000-reps500" => Self {
                scenarios: vec![Scenario::C1],
                n: vec![1000],
                replicates: 500,
                base_seed: 20240101,
                estimators: dr,
            },
            "survey-analog" => Self {
                scenarios: vec![Scenario::SurveyAnalog],
                n: vec![4997],
                replicates: 1,
                base_seed: 4997,
                estimators: vec![
                    EstimatorId::PhiTilde,
                    EstimatorId::PhiHat,
                    EstimatorId::Cc,
                    EstimatorId::Mar,
                ],
            },
            other => return Err(Error::Config(format!("unknown simulation profile `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.n.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config(
                "simulation needs at least one scenario, sample size and estimator".into(),
            ));
        }
        if self.replicates == 0 || self.n.contains(&0) {
            return Err(Error::Config("replicates and sample sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Simulate,
}

/// Parsed contents of a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Estimate {
        data: PathBuf,
        out: PathBuf,
        spec: ModelSpec,
        estimators: Vec<EstimatorId>,
        solver: SolverConfig,
    },
    Simulate {
        plan: SimulationConfig,
        solver: SolverConfig,
        out: PathBuf,
        emit_data: Option<PathBuf>,
    },
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    let doc: ConfigDocument = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("invalid config document: {e}")))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    if let Some(m) = &doc.model {
        m.to_spec()?;
    }
    if let Some(s) = &doc.solver {
        s.apply()?;
    }
    if let Some(sim) = &doc.simulation {
        sim.validate()?;
    }
    Ok(doc)
}

/// Canonical JSON for a config document.
pub fn serialize_config(doc: &ConfigDocument) -> Result<String> {
    let mut canonical = doc.clone();
    if let Some(m) = &doc.model {
        canonical.model = Some(ModelConfig::from_spec(&m.to_spec()?));
    }
    Ok(serde_json::to_string_pretty(&canonical)?)
}

impl ConfigDocument {
    pub fn into_estimate(self, data: PathBuf, out: PathBuf) -> Result<RunConfig> {
        let model = self
            .model
            .ok_or_else(|| Error::Config("estimate needs a `model` section".into()))?;
        let estimators = self.estimators.unwrap_or_else(|| {
            vec![
                EstimatorId::PhiTilde,
                EstimatorId::PhiHat,
                EstimatorId::Cc,
                EstimatorId::Mar,
            ]
        });
        if estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if estimators.contains(&EstimatorId::Full) {
            return Err(Error::Config(
                "the full-data estimator needs complete outcomes and is available in simulations only".into(),
            ));
        }
        Ok(RunConfig::Estimate {
            data,
            out,
            spec: model.to_spec()?,
            estimators,
            solver: self.solver.unwrap_or_default().apply()?,
        })
    }
}

/// Reads a dataset with header `r,y,z,u1,...,uL`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file)
}

pub fn parse_dataset<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let dim = cols.len().saturating_sub(3);
    let expected: Vec<String> = ["r", "y", "z"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=dim).map(|k| format!("u{k}")))
        .collect();
    if cols.len() < 3 || cols != expected {
        return Err(Error::Row {
            line: 1,
            message: format!("header must be `{}`, got `{}`", expected.join(","), cols.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Row { line, message };
        let num = |k: usize| -> Result<f64> {
            let cell = &row[k];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("column `{}`: `{cell}` is not a finite number", cols[k])))
        };
        let r = match &row[0] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("r must be 0 or 1, got `{other}`"))),
        };
        let z = num(2)?;
        let u = (3..3 + dim).map(num).collect::<Result<Vec<_>>>()?;
        let y_cell = &row[1];
        records.push(match (r, y_cell.is_empty()) {
            (true, false) => ObservedRecord::respondent(num(1)?, z, u),
            (false, true) => ObservedRecord::nonrespondent(z, u),
            (true, true) => return Err(err("y is missing for a respondent (r = 1)".into())),
            (false, false) => return Err(err("y is present for a nonrespondent (r = 0)".into())),
        });
    }
    if records.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }
    Dataset::new(records)
}

/// Writes the dataset CSV; numbers use shortest round-trip formatting.
pub fn dataset_to_csv(data: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["r".to_string(), "y".into(), "z".into()];
    header.extend((1..=data.dim()).map(|k| format!("u{k}")));
    w.write_record(&header)?;
    for rec in data.records() {
        let mut row = vec![
            if rec.responded() { "1".to_string() } else { "0".to_string() },
            rec.outcome().map_or_else(String::new, |y| format!("{y:?}")),
            format!("{:?}", rec.z()),
        ];
        row.extend(rec.u().iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Result document for one estimator.
pub fn result_document(res: &EstimationResult) -> Value {
    let mut estimates = Map::new();
    let mut se = Map::new();
    let mut ci = Map::new();
    for (i, name) in res.names.iter().enumerate() {
        estimates.insert(name.clone(), json!(res.estimates[i]));
        se.insert(name.clone(), json!(res.se[i]));
        ci.insert(name.clone(), json!([res.ci[i].0, res.ci[i].1]));
    }
    json!({
        "schema_version": SCHEMA_VERSION,
        "estimator_id": res.estimator,
        "estimates": estimates,
        "se": se,
        "ci95": ci,
        "diagnostics": res.diagnostics,
    })
}

/// Machine-readable error document.
pub fn error_document(err: &Error) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": err.kind(), "message": err.to_string() },
    })
}

/// Human-readable summary: point estimate and 95% interval for `mu` and,
/// when estimated, `gamma`.
pub fn summary_table(results: &[EstimationResult]) -> String {
    let mut out = format!(
        "{:<10} {:>8} {:>20} {:>8} {:>20}\n",
        "estimator", "mu", "95% CI", "gamma", "95% CI"
    );
    for res in results {
        let mu_ci = format!("({:.3}, {:.3})", res.ci[0].0, res.ci[0].1);
        let (g, g_ci) = match res.index_of("gamma") {
            Some(i) => (
                format!("{:.3}", res.estimates[i]),
                format!("({:.3}, {:.3})", res.ci[i].0, res.ci[i].1),
            ),
            None => (String::from("-"), String::from("-")),
        };
        out.push_str(&format!(
            "{:<10} {:>8.3} {:>20} {:>8} {:>20}\n",
            res.estimator.as_str(),
            res.mu(),
            mu_ci,
            g,
            g_ci
        ));
    }
    out
}

/// Writes all files or none: each is staged to a temporary sibling and
/// renamed once every write has succeeded.
pub fn write_atomically(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("out")
        ));
        let res = fs::File::create(&tmp).and_then(|mut f| f.write_all(bytes));
        if let Err(e) = res {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        staged.push((tmp, path.clone()));
    }
    for (tmp, path) in staged {
        fs::rename(tmp, path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{
        "schema_version": 1,
        "model": {"eta": "1 + z + u1 + u2", "z_model": "1+u1+u2", "y_model": "1 + u1 + u2"},
        "estimators": ["phi_tilde", "cc"]
    }"#;

    #[test]
    fn parses_model_with_defaults() {
        let doc = parse_config(MODEL).unwrap();
        let spec = doc.model.as_ref().unwrap().to_spec().unwrap();
        assert_eq!(spec.eta.to_string(), "1 + z + u1 + u2");
        assert_eq!(spec.z_model.to_string(), "1 + u1 + u2");
        assert_eq!(spec.tilt.to_string(), "1");
        assert_eq!(spec.outcome, OutcomeKind::Binary);
    }

    #[test]
    fn canonical_serialization_is_idempotent() {
        let doc = parse_config(MODEL).unwrap();
        let once = serialize_config(&doc).unwrap();
        let twice = serialize_config(&parse_config(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
        let spec = doc.model.unwrap().to_spec().unwrap();
        let back = ModelConfig::from_spec(&spec).to_spec().unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn rejects_unknown_keys_and_exclusion_violations() {
        let unknown = MODEL.replace("\"estimators\"", "\"estimatorz\"");
        assert!(matches!(parse_config(&unknown), Err(Error::Config(_))));
        let bad = MODEL.replace("1+u1+u2", "1 + u1:u2 + z");
        match parse_config(&bad) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("exclusion")),
            other => panic!("unexpected {other:?}"),
        }
        let version = MODEL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(parse_config(&version).is_err());
    }

    #[test]
    fn profiles() {
        assert_eq!(SimulationConfig::profile("table1").unwrap().n, vec![500, 1000, 5000]);
        let c1 = SimulationConfig::profile("table1-c1-n1000-reps500").unwrap();
        assert_eq!((c1.scenarios.len(), c1.replicates), (1, 500));
        assert!(SimulationConfig::profile("nope").is_err());
    }

    #[test]
    fn reads_small_dataset() {
        let text = "r,y,z,u1,u2\n1,1,0,0.5,-1\n0,,1,0.25,2\n1,0,1,-0.5,0\n";
        let ds = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.respondents(), 2);
        assert_eq!(ds.records()[1].outcome(), None);
    }

    #[test]
    fn dataset_row_errors_carry_line_numbers() {
        let cases = [
            ("r,y,z,u1\n1,1,0,0.5\n0,1,1,0.2\n", 3, "present"),
            ("r,y,z,u1\n1,,0,0.5\n", 2, "missing"),
            ("r,y,z,u1\n1,1,0,abc\n", 2, "not a finite number"),
            ("r,y,z,u1\n2,1,0,0.1\n", 2, "0 or 1"),
            ("r,y,z,x1\n1,1,0,0.1\n", 1, "header"),
        ];
        for (text, want_line, needle) in cases {
            match parse_dataset(text.as_bytes()) {
                Err(Error::Row { line, message }) => {
                    assert_eq!(line, want_line, "{text}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("unexpected {other:?} for {text}"),
            }
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let text = "r,y,z,u1,u2\n1,1.0,0.0,0.1,-0.30000000000000004\n0,,1.0,2.5,1e-7\n";
        let ds = parse_dataset(text.as_bytes()).unwrap();
        let again = parse_dataset(dataset_to_csv(&ds).unwrap().as_bytes()).unwrap();
        assert_eq!(ds, again);
    }
}
