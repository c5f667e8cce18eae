mod common;

use common::{irls_logistic, max_abs};
use ivdr::inference::{
    estimate_cc, estimate_mar, estimate_phi_hat, estimate_phi_hat_with_gamma, estimate_phi_tilde,
    estimate_phi_tilde_with_gamma, ipw_expansion_variance, wald_interval, Z95,
};
use ivdr::models::instrument_mean;
use ivdr::simulation::{draw_sample, true_mean, DgpConfig, Scenario};
use ivdr::solver::solve_system;
use ivdr::{Dataset, ObservedRecord, SolverConfig};
use nalgebra::{DMatrix, DVector};

fn c1_sample(n: usize, seed: u64) -> Dataset {
    draw_sample(&DgpConfig::paper(n, seed)).unwrap().data
}

#[test]
fn c1_sample_recovers_mean_and_tilt() {
    let data = c1_sample(5000, 101);
    let spec = Scenario::C1.spec();
    let cfg = SolverConfig::default();
    let truth = true_mean(&DgpConfig::paper(5000, 101));
    let tilde = estimate_phi_tilde(&data, &spec, &cfg).unwrap();
    println!("mu~ {} ({}), gamma~ {:?}, truth {truth}", tilde.mu(), tilde.mu_se(), tilde.gamma());
    assert!((tilde.mu() - truth).abs() <= 3.0 * tilde.mu_se());
    let g = tilde.index_of("gamma").unwrap();
    assert!((tilde.estimates[g] - 2.0).abs() <= 3.0 * tilde.se[g]);

    let hat = estimate_phi_hat(&data, &spec, &cfg).unwrap();
    assert!((hat.mu() - tilde.mu()).abs() <= 2.0 * tilde.mu_se());

    for res in [&tilde, &hat] {
        for (i, &(lo, hi)) in res.ci.iter().enumerate() {
            assert_eq!((lo, hi), wald_interval(res.estimates[i], res.se[i]));
            assert_eq!(lo, res.estimates[i] - Z95 * res.se[i]);
        }
    }
}

#[test]
fn joint_sandwich_matches_two_stage_expansion() {
    let data = c1_sample(1000, 7);
    let spec = Scenario::C1.spec();
    let cfg = SolverConfig::default();
    let res = estimate_phi_tilde(&data, &spec, &cfg).unwrap();
    let expansion = ipw_expansion_variance(&data, &spec, res.params.as_ref().unwrap(), &cfg).unwrap();
    let p = expansion.nrows();
    let joint = res.covariance.view((0, 0), (p, p));
    let scale = expansion.amax();
    let diff = (joint - &expansion).amax() / scale;
    println!("relative difference {diff:e}");
    assert!(diff < 1e-6);
}

/// Fully observed records on a small covariate grid.
fn all_respondents() -> Dataset {
    let mut records = Vec::new();
    for i in 0..40 {
        let u1 = (i % 5) as f64 / 2.0 - 1.0;
        let u2 = ((i * 7) % 11) as f64 / 5.0 - 1.0;
        let z = ((i * 3) % 4 < 2) as u8 as f64;
        let y = ((i * 5 + 1) % 3 == 0) as u8 as f64;
        records.push(ObservedRecord::respondent(y, z, vec![u1, u2]));
    }
    Dataset::new(records).unwrap()
}

#[test]
fn fully_observed_data_give_the_sample_mean() {
    let data = all_respondents();
    let spec = Scenario::C1.spec();
    // Calibration sends the response index to +inf; a tight tolerance makes
    // the remaining weight variation negligible.
    let cfg = SolverConfig { tol: 1e-12, ..SolverConfig::default() };
    let mean = data.records().iter().map(|r| r.y()).sum::<f64>() / data.len() as f64;
    let tilde = estimate_phi_tilde_with_gamma(&data, &spec, &[0.0], &cfg).unwrap();
    assert!((tilde.mu() - mean).abs() < 1e-10, "{} vs {mean}", tilde.mu());
    let hat = estimate_phi_hat_with_gamma(&data, &spec, &[0.0], &cfg).unwrap();
    assert!((hat.mu() - tilde.mu()).abs() < 1e-6);
}

#[test]
fn solver_matches_reference_logistic_fit() {
    let data = c1_sample(1000, 3);
    let spec = Scenario::C1.spec();
    let designs: Vec<Vec<f64>> = data
        .records()
        .iter()
        .map(|r| spec.z_model.evaluate(0.0, r.u()).unwrap())
        .collect();
    let score = |beta: &[f64]| {
        let mut s = vec![0.0; beta.len()];
        for (rec, h) in data.records().iter().zip(&designs) {
            let resid = rec.z() - instrument_mean(rec.u(), beta, &spec)?;
            for (acc, hj) in s.iter_mut().zip(h) {
                *acc += resid * hj / data.len() as f64;
            }
        }
        Ok(s)
    };
    let out = solve_system(score, &[0.0; 4], &SolverConfig::default()).unwrap();
    assert!(out.converged);

    let x = DMatrix::from_fn(data.len(), 4, |i, j| designs[i][j]);
    let z = DVector::from_iterator(data.len(), data.records().iter().map(|r| r.z()));
    let reference = irls_logistic(&x, &z, 1e-14);
    println!("solver {:?}\nirls   {:?}", out.root, reference.as_slice());
    for (a, b) in out.root.iter().zip(reference.iter()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn instrument_block_of_the_sandwich_is_the_logistic_sandwich() {
    let data = c1_sample(1000, 5);
    let spec = Scenario::C1.spec();
    let res = estimate_phi_tilde_with_gamma(&data, &spec, &[2.0], &SolverConfig::default()).unwrap();
    let idx: Vec<usize> = (0..res.names.len()).filter(|&i| res.names[i].starts_with("beta[")).collect();
    assert_eq!(idx.len(), 4);
    let block = DMatrix::from_fn(4, 4, |a, b| res.covariance[(idx[a], idx[b])]);

    let n = data.len() as f64;
    let x = DMatrix::from_fn(data.len(), 4, |i, j| {
        spec.z_model.evaluate(0.0, data.records()[i].u()).unwrap()[j]
    });
    let z = DVector::from_iterator(data.len(), data.records().iter().map(|r| r.z()));
    let beta = irls_logistic(&x, &z, 1e-14);
    let fitted: Vec<f64> = idx.iter().map(|&i| res.estimates[i]).collect();
    assert!(max_abs((DVector::from_vec(fitted) - &beta).as_slice()) < 1e-6);

    let mut info = DMatrix::zeros(4, 4);
    let mut meat = DMatrix::zeros(4, 4);
    for i in 0..data.len() {
        let h = x.row(i).transpose();
        let p = ivdr::models::expit(h.dot(&beta));
        info += &h * h.transpose() * (p * (1.0 - p) / n);
        meat += &h * h.transpose() * ((z[i] - p).powi(2) / n);
    }
    let inv = info.try_inverse().unwrap();
    let reference = &inv * meat * &inv / n;
    let rel = (&block - &reference).amax() / reference.amax();
    println!("relative difference {rel:e}");
    assert!(rel < 1e-6);
}

#[test]
fn record_order_does_not_matter() {
    let data = c1_sample(1000, 9);
    let spec = Scenario::C1.spec();
    let cfg = SolverConfig::default();
    let mut reversed = data.records().to_vec();
    reversed.reverse();
    let reversed = Dataset::new(reversed).unwrap();
    let a = estimate_phi_tilde(&data, &spec, &cfg).unwrap();
    let b = estimate_phi_tilde(&reversed, &spec, &cfg).unwrap();
    let worst = a
        .estimates
        .iter()
        .zip(&b.estimates)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("max difference {worst:e}");
    assert!(worst <= 1e-12);
}

#[test]
fn mar_agrees_with_phi_tilde_under_ignorable_response() {
    let dgp = DgpConfig { gamma_true: 0.0, ..DgpConfig::paper(5000, 21) };
    let data = draw_sample(&dgp).unwrap().data;
    let spec = Scenario::C1.spec();
    let cfg = SolverConfig::default();
    let mar = estimate_mar(&data, &spec, &cfg).unwrap();
    let tilde = estimate_phi_tilde(&data, &spec, &cfg).unwrap();
    println!("mar {} tilde {} se {}", mar.mu(), tilde.mu(), tilde.mu_se());
    assert!((mar.mu() - tilde.mu()).abs() <= 2.0 * tilde.mu_se());
    assert!(mar.index_of("gamma").is_none());
}

#[test]
fn complete_case_is_biased_under_the_design() {
    let data = c1_sample(5000, 13);
    let truth = true_mean(&DgpConfig::paper(5000, 13));
    let cc = estimate_cc(&data).unwrap();
    let bias = cc.mu() - truth;
    println!("cc bias {bias}");
    assert!((0.10..0.17).contains(&bias));
}
