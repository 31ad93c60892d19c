//! Simulation designs: determinism, latent-rank laws, the moment-restriction
//! validator and recovery of known structural effects.

use ivqr_core::dgp::{
    validate_moment_condition, BinaryTreatmentDgp, DemandDgp, LocationScaleDgp, OutcomeModel, RankMode, SupplyNoise, ZBinning,
};
use ivqr_core::ivqr::{build_profile, estimate, AlphaGrid, LinearIvqrSpec};
use ivqr_core::qr::{fit_qr, qr_covariance, Bandwidth, RegressionProblem};
use nalgebra::{DMatrix, DVector};

/// One-sample Kolmogorov–Smirnov distance to the uniform law.
fn ks_uniform(u: &[f64]) -> f64 {
    let mut s = u.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn generators_are_seed_deterministic() {
    let a = LocationScaleDgp::default().simulate(500, 8).unwrap();
    let b = LocationScaleDgp::default().simulate(500, 8).unwrap();
    assert_eq!(a.data.columns(), b.data.columns());
    let c = LocationScaleDgp::default().simulate(500, 9).unwrap();
    assert_ne!(a.data.columns(), c.data.columns());

    let a = DemandDgp::calibrated().simulate(300, 8).unwrap();
    let b = DemandDgp::calibrated().simulate(300, 8).unwrap();
    assert_eq!(a.data.columns(), b.data.columns());

    let a = BinaryTreatmentDgp::default().simulate(300, 8).unwrap();
    let b = BinaryTreatmentDgp::default().simulate(300, 8).unwrap();
    assert_eq!(a.data.columns(), b.data.columns());
}

#[test]
fn latent_ranks_are_uniform_and_independent_of_the_instrument() {
    let n = 20_000;
    let bound_ks = 1.63 / (n as f64).sqrt();
    let bound_corr = 3.0 / (n as f64).sqrt();

    let ls = LocationScaleDgp::default().simulate(n, 1).unwrap();
    assert!(ks_uniform(&ls.latent.u) <= bound_ks);
    let z = ls.data.column(ls.data.column_index("z").unwrap());
    assert!(correlation(&ls.latent.u, z).abs() < bound_corr);

    for mode in [RankMode::Invariant { eta_sd: 1.0 }, RankMode::SimilarSlippage { eta_sd: 1.0 }] {
        let dgp = BinaryTreatmentDgp {
            mode,
            ..Default::default()
        };
        let sim = dgp.simulate(n, 2).unwrap();
        let (u0, u1) = sim.latent.u_arms.as_ref().unwrap();
        assert!(ks_uniform(u0) <= bound_ks && ks_uniform(u1) <= bound_ks, "{mode:?}");
        let z = sim.data.column(sim.data.column_index("z").unwrap());
        assert!(correlation(u0, z).abs() < bound_corr, "{mode:?}");
        assert!(correlation(&sim.latent.u, z).abs() < bound_corr, "{mode:?}");
    }

    let demand = DemandDgp::calibrated().simulate(n, 3).unwrap();
    assert!(ks_uniform(&demand.latent.u) <= bound_ks);
}

#[test]
fn rank_invariance_is_exact() {
    let sim = BinaryTreatmentDgp::default().simulate(5000, 4).unwrap();
    let (u0, u1) = sim.latent.u_arms.as_ref().unwrap();
    assert_eq!(u0, u1);
}

#[test]
fn similar_slippage_arms_agree_within_selection_strata() {
    let dgp = BinaryTreatmentDgp {
        mode: RankMode::SimilarSlippage { eta_sd: 0.5 },
        ..Default::default()
    };
    let sim = dgp.simulate(40_000, 5).unwrap();
    let (u0, u1) = sim.latent.u_arms.as_ref().unwrap();
    let v = sim.latent.v.as_ref().unwrap();
    let z = sim.data.column(sim.data.column_index("z").unwrap());

    // ten strata: five V bins times two instrument values, Bonferroni at overall size 0.01
    let cuts = [-0.84, -0.25, 0.25, 0.84];
    let strata = 10;
    let alpha = 0.01 / strata as f64;
    let c_alpha = (-(alpha / 2.0).ln() / 2.0).sqrt();
    for s in 0..strata {
        let rows: Vec<usize> = (0..v.len())
            .filter(|&i| cuts.partition_point(|c| *c < v[i]) == s / 2 && (z[i] > 0.5) == (s % 2 == 1))
            .collect();
        let a: Vec<f64> = rows.iter().map(|&i| u0[i]).collect();
        let b: Vec<f64> = rows.iter().map(|&i| u1[i]).collect();
        let m = rows.len() as f64;
        let crit = c_alpha * (2.0 / m).sqrt();
        let d = ks_two_sample(&a, &b);
        assert!(d <= crit, "stratum {s}: KS {d} > {crit} (n = {m})");
    }
}

#[test]
fn demand_restriction_holds_in_instrument_bins() {
    let sim = DemandDgp::calibrated().simulate(50_000, 6).unwrap();
    let report = validate_moment_condition(&sim, &[0.25, 0.5, 0.75], ZBinning::Quantile(5)).unwrap();
    assert_eq!(report.cells.len(), 15);
    for c in &report.cells {
        assert!(c.deviation <= 2.0 / (c.count as f64).sqrt(), "{c:?}");
    }
    assert!(report.pass);
}

#[test]
fn demand_truth_echoes_the_elasticity_curve() {
    let sim = DemandDgp::calibrated().simulate(100, 1).unwrap();
    let alpha = &sim.truth.curves["alpha"];
    for (t, a) in sim.truth.tau_grid.iter().zip(alpha) {
        assert!((a - (-2.0 + 1.5 * t)).abs() <= 1e-12);
    }
    assert!((alpha[0] + 1.925).abs() < 1e-12 && (alpha[18] + 0.575).abs() < 1e-12);
}

#[test]
fn degenerate_demand_recovers_unit_elasticity() {
    let mut dgp = DemandDgp::linear(-1.0, 0.0, 0.0, 0.0);
    dgp.noise = SupplyNoise::None;
    // keeps equilibrium log prices inside the default range
    dgp.supply.s0 = -2.0;
    let sim = dgp.simulate(500, 7).unwrap();
    let y = sim.data.y();
    let p = sim.data.column(sim.data.roles().d[0]);
    assert!(y.iter().zip(p).all(|(a, b)| (a + b).abs() < 1e-9));

    let spec = LinearIvqrSpec::from_roles(sim.data.roles(), 0.5);
    let grid = AlphaGrid::uniform(&[-2.0], &[0.0], &[0.01]).unwrap();
    let est = estimate(&build_profile(&sim.data, &spec, &grid).unwrap()).unwrap();
    assert!((est.alpha_hat[0] + 1.0).abs() <= 0.01 + 1e-12, "{:?}", est.alpha_hat);
}

#[test]
fn binary_rank_invariant_effect_is_recovered() {
    let sim = BinaryTreatmentDgp::default().simulate(5000, 12).unwrap();
    let spec0 = LinearIvqrSpec::from_roles(sim.data.roles(), 0.5);
    let grid = AlphaGrid::uniform(&[-1.0], &[3.0], &[0.01]).unwrap();
    for tau in [0.25, 0.5, 0.75] {
        let spec = LinearIvqrSpec { tau, ..spec0.clone() };
        let est = estimate(&build_profile(&sim.data, &spec, &grid).unwrap()).unwrap();
        assert!((est.alpha_hat[0] - 1.0).abs() < 0.1, "tau {tau}: {:?}", est.alpha_hat);
    }
}

#[test]
fn validator_separates_conforming_and_violated_designs() {
    let taus: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let similar = BinaryTreatmentDgp {
        mode: RankMode::SimilarSlippage { eta_sd: 1.0 },
        ..Default::default()
    };
    let report = validate_moment_condition(&similar.simulate(50_000, 13).unwrap(), &taus, ZBinning::Discrete).unwrap();
    assert!(report.pass, "max deviation {}", report.max_abs_deviation);

    // match scale twice the outcome noise
    let violated = BinaryTreatmentDgp {
        mode: RankMode::ViolatedMatch { match_sd: 2.0 },
        ..Default::default()
    };
    let report = validate_moment_condition(&violated.simulate(50_000, 13).unwrap(), &taus, ZBinning::Discrete).unwrap();
    assert!(!report.pass);
    assert!(report.cells.iter().any(|c| c.deviation > 3.0 / (50_000f64).sqrt()));
}

#[test]
fn symmetric_cells_have_negligible_median_deviation() {
    // treatment fixed by the instrument: each cell is an untruncated Gaussian around q(d, 0.5)
    let dgp = BinaryTreatmentDgp {
        cv: 0.0,
        c0: -0.5,
        cz: 1.0,
        ..Default::default()
    };
    let sim = dgp.simulate(20_000, 14).unwrap();
    let report = validate_moment_condition(&sim, &[0.5], ZBinning::Discrete).unwrap();
    for c in &report.cells {
        assert!(c.deviation <= 1.0 / (c.count as f64).sqrt(), "{c:?}");
    }
}

#[test]
fn bernoulli_outcome_takes_two_values() {
    let dgp = BinaryTreatmentDgp {
        outcome: OutcomeModel::Bernoulli { theta: [0.3, 0.6] },
        ..Default::default()
    };
    let sim = dgp.simulate(2000, 15).unwrap();
    assert!(sim.data.y().iter().all(|&y| y == 0.0 || y == 1.0));
    for row in 0..10 {
        let q = sim.structural_quantile(row, 0.5);
        assert!(q == 0.0 || q == 1.0);
    }
}

fn qr_slope_and_se(sim: &ivqr_core::dgp::SimulatedDataset) -> (f64, f64) {
    let d = sim.data.column(sim.data.roles().d[0]);
    let x = DMatrix::from_fn(sim.data.n(), 2, |i, j| if j == 0 { 1.0 } else { d[i] });
    let prob = RegressionProblem::new(x, DVector::from_column_slice(sim.data.y()), 0.5).unwrap();
    let fit = fit_qr(&prob).unwrap();
    let cov = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();
    (fit.coefficients[1], cov[(1, 1)].sqrt())
}

#[test]
fn exogenous_treatment_makes_qr_and_iqr_agree() {
    let dgp = LocationScaleDgp {
        rho: 0.0,
        ..Default::default()
    };
    let sim = dgp.simulate(2000, 16).unwrap();
    let (qr, se) = qr_slope_and_se(&sim);
    let spec = LinearIvqrSpec::from_roles(sim.data.roles(), 0.5);
    let grid = AlphaGrid::uniform(&[0.0], &[2.0], &[0.01]).unwrap();
    let iqr = estimate(&build_profile(&sim.data, &spec, &grid).unwrap()).unwrap().alpha_hat[0];
    assert!((qr - iqr).abs() <= 2.0 * se, "qr {qr} iqr {iqr} se {se}");
}

#[test]
fn strong_endogeneity_biases_qr_but_not_iqr() {
    let dgp = LocationScaleDgp {
        rho: 0.8,
        ..Default::default()
    };
    let truth = dgp.alpha(0.5);
    let grid = AlphaGrid::uniform(&[0.0], &[2.0], &[0.01]).unwrap();
    let reps = 50;
    let (mut qr, mut iqr) = (Vec::new(), Vec::new());
    for r in 0..reps {
        let sim = dgp.simulate(1000, 2000 + r).unwrap();
        qr.push(qr_slope_and_se(&sim).0);
        let spec = LinearIvqrSpec::from_roles(sim.data.roles(), 0.5);
        iqr.push(estimate(&build_profile(&sim.data, &spec, &grid).unwrap()).unwrap().alpha_hat[0]);
    }
    let summary = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m - truth, sd / (v.len() as f64).sqrt())
    };
    let (qr_bias, qr_se) = summary(&qr);
    let (iqr_bias, iqr_se) = summary(&iqr);
    assert!(qr_bias.abs() > 3.0 * qr_se, "QR bias {qr_bias} (MC se {qr_se})");
    assert!(iqr_bias.abs() <= 3.0 * iqr_se, "IQR bias {iqr_bias} (MC se {iqr_se})");
}

#[test]
fn invalid_designs_are_rejected() {
    let steep = LocationScaleDgp {
        a1: 1.0,
        d_range: (-3.0, 3.0),
        ..Default::default()
    };
    assert!(steep.validate().is_err());
    let bad = BinaryTreatmentDgp {
        z_probs: vec![0.3, 0.3],
        ..Default::default()
    };
    assert!(bad.simulate(10, 1).is_err());
}
