//! Helpers shared by the integration and acceptance tests: the exact oracle
//! identity suite and independent reference computations (Gauss-Hermite
//! quadrature, iteratively reweighted least squares).

#![allow(dead_code)]

use ivdr::models::expit;
use ivdr::moments::{
    g_augmented, g_tilde, moment_m, nonrespondent_law, MomentContext, PreparedRecord,
};
use ivdr::oracle::{default_toy_model, Atom, ToyPopulation};
use ivdr::{Dataset, ModelSpec, ParamVector};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// One named numerical check with its pinned tolerance.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    /// `true`: pass when `value <= tol`; `false`: pass when `value >= tol`.
    pub at_most: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, at_most: true }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, at_most: false }
    }

    pub fn pass(&self) -> bool {
        if self.at_most {
            self.value <= self.tol
        } else {
            self.value >= self.tol
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = if self.at_most { "<=" } else { ">=" };
        write!(
            f,
            "{} {}: {:.3e} {op} {:.0e}",
            if self.pass() { "ok  " } else { "FAIL" },
            self.name,
            self.value,
            self.tol
        )
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// The toy population with its true parameter (`mu = E(Y)`).
pub fn toy() -> (ModelSpec, ParamVector, ToyPopulation) {
    let (spec, mut truth) = default_toy_model();
    let pop = ToyPopulation::on_default_grid(&spec, &truth, 1e-3).expect("valid toy population");
    truth.mu = pop.mean_y();
    (spec, truth, pop)
}

pub enum Block {
    Ipw,
    Augmented,
    Nuisance,
}

/// Exact expectation of a moment block at `params`.
pub fn expected_block(pop: &ToyPopulation, spec: &ModelSpec, params: &ParamVector, block: Block) -> Vec<f64> {
    let dim = match block {
        Block::Ipw | Block::Augmented => params.layout().phi_len(),
        Block::Nuisance => params.layout().total() - params.layout().phi_len(),
    };
    pop.exact_expectation(dim, |atom| {
        let rec = PreparedRecord::new(&atom.observed(), spec)?;
        let ctx = MomentContext::new(spec, params, &rec, 0);
        match block {
            Block::Ipw => g_tilde(&ctx),
            Block::Augmented => g_augmented(&ctx),
            Block::Nuisance => moment_m(&ctx),
        }
    })
    .expect("moments evaluate on the toy support")
}

/// `P(R = 1 | y, z, u)` read off the joint law, independent of the model code.
pub fn enumerated_propensity(pop: &ToyPopulation, atom: &Atom) -> f64 {
    let same = |a: &&Atom| a.u == atom.u && a.z == atom.z && a.y == atom.y;
    let cell: Vec<&Atom> = pop.atoms().iter().filter(same).collect();
    let total: f64 = cell.iter().map(|a| a.prob).sum();
    cell.iter().filter(|a| a.r == 1.0).map(|a| a.prob).sum::<f64>() / total
}

/// The exact identity suite on the 72-atom toy population.
pub fn oracle_identity_suite() -> Vec<Check> {
    let (spec, truth, pop) = toy();
    let mut checks = Vec::new();

    let mass = pop.exact_expectation(1, |_| Ok(vec![1.0])).unwrap()[0];
    checks.push(Check::at_most("pmf normalization", (mass - 1.0).abs(), 1e-14));

    let m = expected_block(&pop, &spec, &truth, Block::Nuisance);
    let layout = truth.layout();
    let (k_xi, k_beta) = (layout.xi, layout.beta);
    checks.push(Check::at_most("E m_xi at truth", max_abs(&m[..k_xi]), 1e-12));
    checks.push(Check::at_most("E m_beta at truth", max_abs(&m[k_xi..k_xi + k_beta]), 1e-12));
    checks.push(Check::at_most("E m_psi at truth", max_abs(&m[k_xi + k_beta..]), 1e-12));
    checks.push(Check::at_most(
        "E g~ at truth",
        max_abs(&expected_block(&pop, &spec, &truth, Block::Ipw)),
        1e-12,
    ));
    checks.push(Check::at_most(
        "E g at truth",
        max_abs(&expected_block(&pop, &spec, &truth, Block::Augmented)),
        1e-12,
    ));

    let wrong_beta = ParamVector { beta: vec![-0.7, 1.1, 0.9], ..truth.clone() };
    let wrong_psi = ParamVector { psi: vec![0.8, 0.3, -1.2], ..truth.clone() };
    let wrong_both = ParamVector { psi: wrong_psi.psi.clone(), ..wrong_beta.clone() };
    for (label, params) in [("wrong beta", &wrong_beta), ("wrong psi", &wrong_psi)] {
        for (head, block) in [("g~", Block::Ipw), ("g", Block::Augmented)] {
            let v = expected_block(&pop, &spec, params, block);
            checks.push(Check::at_most(format!("double robustness: E {head}, {label}"), max_abs(&v), 1e-10));
        }
    }
    // Without either correct nuisance model the identity must break.
    let v = expected_block(&pop, &spec, &wrong_both, Block::Ipw);
    checks.push(Check::at_least("negative control: E g~, both wrong", max_abs(&v), 1e-4));

    let mut worst: f64 = 0.0;
    for atom in pop.atoms().iter().filter(|a| a.r == 0.0 && a.y == 0.0) {
        let cell = |y: f64| -> f64 {
            pop.atoms()
                .iter()
                .filter(|a| a.u == atom.u && a.z == atom.z && a.r == 0.0 && a.y == y)
                .map(|a| a.prob)
                .sum()
        };
        let enumerated = cell(1.0) / (cell(0.0) + cell(1.0));
        let rec = PreparedRecord::new(&atom.observed(), &spec).unwrap();
        let ctx = MomentContext::new(&spec, &truth, &rec, 0);
        worst = worst.max((nonrespondent_law(&ctx).unwrap() - enumerated).abs());
    }
    checks.push(Check::at_most("nonrespondent law vs enumeration", worst, 1e-12));

    let hajek = pop
        .exact_expectation(2, |a| {
            let w = a.r / enumerated_propensity(&pop, a);
            Ok(vec![w * a.y, w])
        })
        .unwrap();
    checks.push(Check::at_most(
        "Hajek identity",
        (hajek[0] / hajek[1] - pop.mean_y()).abs(),
        1e-13,
    ));
    checks
}

/// Nodes and weights of `n`-point Gauss-Hermite quadrature for the standard
/// normal density (Golub-Welsch).
pub fn gauss_hermite_normal(n: usize) -> Vec<(f64, f64)> {
    // Probabilists' Hermite recurrence: off-diagonal sqrt(k).
    let jm = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jm);
    (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], v0 * v0)
        })
        .collect()
}

/// `E f(U1, U2)` for a standard bivariate normal with correlation `rho`.
pub fn bivariate_normal_expectation(rho: f64, nodes: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let gh = gauss_hermite_normal(nodes);
    let s = (1.0 - rho * rho).sqrt();
    let mut total = 0.0;
    for &(x1, w1) in &gh {
        for &(x2, w2) in &gh {
            total += w1 * w2 * f(x1, rho * x1 + s * x2);
        }
    }
    total
}

/// Logistic regression by iteratively reweighted least squares.
pub fn irls_logistic(x: &DMatrix<f64>, y: &DVector<f64>, tol: f64) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let eta = x * &beta;
        let p = eta.map(expit);
        let w = p.map(|v| v * (1.0 - v));
        let xtw = DMatrix::from_fn(x.ncols(), x.nrows(), |j, i| x[(i, j)] * w[i]);
        let hessian = &xtw * x;
        let grad = x.transpose() * (y - &p);
        let step = hessian.cholesky().expect("positive definite information").solve(&grad);
        beta += &step;
        if step.amax() < tol {
            break;
        }
    }
    beta
}

/// Response rate of a dataset.
pub fn response_rate(data: &Dataset) -> f64 {
    data.respondents() as f64 / data.len() as f64
}
