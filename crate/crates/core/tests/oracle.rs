mod common;

use common::{max_abs, oracle_identity_suite, toy};
use ivdr::formula::DesignFormula;
use ivdr::inference::{estimate_phi_hat, estimate_phi_tilde};
use ivdr::moments::PhiMoment;
use ivdr::oracle::{default_grid, verify_identification, ToyPopulation, ToyTables};
use ivdr::{ModelSpec, ParamVector, SolverConfig};

#[test]
fn identity_suite_holds() {
    let checks = oracle_identity_suite();
    for c in &checks {
        println!("{c}");
    }
    assert!(checks.iter().all(|c| c.pass()));
}

#[test]
fn population_residual_vanishes_at_truth() {
    let (spec, truth, pop) = toy();
    for head in [PhiMoment::Ipw, PhiMoment::Augmented] {
        let r = pop.expected_moments(&spec, head, &truth.flatten()).unwrap();
        assert!(max_abs(&r) < 1e-12, "{r:?}");
    }
}

fn tight() -> SolverConfig {
    SolverConfig { tol: 1e-13, ..SolverConfig::default() }
}

#[test]
fn pseudo_sample_root_is_the_truth() {
    let (spec, truth, pop) = toy();
    let data = pop.pseudo_sample().unwrap();
    let want = truth.flatten();
    for fit in [estimate_phi_tilde, estimate_phi_hat] {
        let res = fit(&data, &spec, &tight()).unwrap();
        let got = res.params.unwrap().flatten();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn identification_from_several_starts() {
    let (spec, truth, pop) = toy();
    let report = verify_identification(&pop, &spec, &truth, 5, 0.5, 11, &tight()).unwrap();
    println!("condition {:e}, spread {:e}", report.condition, report.max_pairwise_distance);
    assert!(!report.flat_direction);
    assert!(report.roots.iter().all(Option::is_some), "{:?}", report.warnings);
    assert!(report.max_pairwise_distance < 1e-8);
    assert!(report.unique(1e-8));
}

#[test]
fn irrelevant_instrument_is_flagged() {
    // Z is a fair coin independent of everything and the response does not
    // depend on it, so the instrument carries no identifying information.
    let f = |s: &str| s.parse::<DesignFormula>().unwrap();
    let spec = ModelSpec::new(f("1 + u1 + u2 + z"), f("1"), f("1 + u1 + u2")).unwrap();
    let mut params = ParamVector::zeros(spec.layout());
    params.gamma = vec![1.0];
    params.xi = vec![0.5, 0.4, -0.3, 0.0];
    params.beta = vec![0.0];
    params.psi = vec![0.1, -0.7, 0.5];
    let pop = ToyPopulation::on_default_grid(&spec, &params, 1e-3).unwrap();
    let report = verify_identification(&pop, &spec, &params, 5, 0.5, 11, &tight()).unwrap();
    println!("degenerate condition {:e}", report.condition);
    assert!(report.condition > 1e12);
    assert!(report.flat_direction);
    assert!(!report.unique(1e-8));
}

#[test]
fn boundary_outcome_probability_warns() {
    let grid = default_grid();
    let k = grid.len();
    let mut p_y1 = vec![0.4; k];
    p_y1[3] = 0.0;
    let tables = ToyTables { u_support: grid, u_pmf: vec![1.0 / k as f64; k], p_z1: vec![0.5; k], p_y1 };
    let pop = ToyPopulation::from_tables(&tables, |y, z, _| 0.3 + 0.2 * y + 0.3 * z, 0.1).unwrap();
    assert_eq!(pop.warnings().len(), 1);
    assert!(pop.warnings()[0].contains("support point 3"));
}
