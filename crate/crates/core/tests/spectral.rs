use mehta_core::exec::{Exec, Seed};
use mehta_core::linalg::sym_eigen;
use mehta_core::spectral::{
    eigenvalues, one_point_correlation, spectral_measure, weyl_expectation_mc, weyl_rhs_quadrature,
    CorrelationEstimator,
};
use mehta_core::special::normal_pdf;
use mehta_core::stats::{paired_z, z_score};
use mehta_core::symspace::{sample_goe, EnsembleParams};
use nalgebra::DMatrix;

#[test]
fn reconstruction_residual_m5() {
    let params = EnsembleParams::goe(5, 1.0).unwrap();
    let mut rng = Seed(1).stream(0);
    for _ in 0..50 {
        let a = sample_goe(&params, &mut rng).unwrap();
        let e = sym_eigen(&a.to_dense());
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let resid = e.vectors.transpose() * a.to_dense() * &e.vectors - lam;
        assert!(resid.amax() < 1e-9);
    }
}

#[test]
fn trace_and_determinant_consistency() {
    let mut rng = Seed(2).stream(0);
    for k in 0..1000 {
        let m = 1 + k % 4;
        let params = EnsembleParams::goe(m, 1.0).unwrap();
        let a = sample_goe(&params, &mut rng).unwrap();
        let ev = eigenvalues(&a);
        let tr = a.trace();
        assert!((ev.iter().sum::<f64>() - tr).abs() <= 1e-9 * (1.0 + tr.abs()));
        let det = a.to_dense().determinant();
        let prod: f64 = ev.iter().product();
        assert!((prod - det).abs() <= 1e-9 * det.abs().max(1e-3), "m={m}: {prod} vs {det}");
    }
}

#[test]
fn goe_samples_are_simple_at_zero_tolerance() {
    let params = EnsembleParams::goe(4, 1.0).unwrap();
    let mut rng = Seed(3).stream(0);
    for _ in 0..200 {
        let s = spectral_measure(&sample_goe(&params, &mut rng).unwrap(), 0.0);
        assert_eq!(s.atoms().len(), 4);
        assert!(s.atoms().iter().all(|&(_, w)| w == 1.0));
        assert_eq!(s.total_mass(), 4.0);
    }
}

#[test]
fn weyl_mean_square_mc() {
    let params = EnsembleParams::goe(2, 0.5).unwrap();
    let r = weyl_expectation_mc(|l| l.iter().map(|x| x * x).sum::<f64>() / 2.0, &params, 200_000, Seed(4), Exec::Parallel)
        .unwrap()
        .with_reference(1.5);
    assert!(r.pass(), "{r:?}");
}

#[test]
fn weyl_mc_agrees_with_quadrature() {
    type F = fn(&[f64]) -> f64;
    let fs: [(&str, F); 3] = [
        ("one", |_| 1.0),
        ("mean square", |l| l.iter().map(|x| x * x).sum::<f64>() / l.len() as f64),
        ("mean abs", |l| l.iter().map(|x| x.abs()).sum::<f64>() / l.len() as f64),
    ];
    for m in 1..=2 {
        for v in [0.5, 1.0] {
            let params = EnsembleParams::goe(m, v).unwrap();
            for (k, (name, f)) in fs.iter().enumerate() {
                let q = weyl_rhs_quadrature(f, m, v).unwrap();
                let mc = weyl_expectation_mc(f, &params, 100_000, Seed(50 + k as u64), Exec::Parallel).unwrap();
                let z = z_score(mc.estimate, q.value, mc.std_error).unwrap();
                assert!(z.abs() <= 4.0, "m={m} v={v} f={name}: mc {} quad {}", mc.estimate, q.value);
            }
        }
    }
}

#[test]
fn kde_recovers_gaussian_for_n1() {
    let d = one_point_correlation(1, 0.5, 500_000, CorrelationEstimator::Kernel { bandwidth: 0.05 }, Seed(6), Exec::Parallel)
        .unwrap();
    let sup = d
        .grid
        .iter()
        .zip(&d.values)
        .map(|(&x, &r)| (r - normal_pdf(x, 1.0)).abs())
        .fold(0.0, f64::max);
    assert!(sup < 0.01, "sup-norm error {sup}");
    assert!(d.is_normalized());
}

#[test]
fn density_is_sign_symmetric() {
    for (n, v) in [(2, 0.5), (3, 1.0)] {
        let d = one_point_correlation(n, v, 100_000, CorrelationEstimator::default_for(n, v), Seed(7), Exec::Parallel)
            .unwrap();
        let k = d.grid.len();
        for i in 0..k {
            let j = k - 1 - i;
            assert!((d.grid[i] + d.grid[j]).abs() < 1e-9);
            let z = paired_z(d.values[i], d.stderr[i], d.values[j], d.stderr[j]);
            // bins that are empty on both sides give z = 0
            assert!(z.is_some_and(|z| z.abs() <= 4.0), "n={n} x={} z={z:?}", d.grid[i]);
        }
    }
}

#[test]
fn second_moment_of_density() {
    let d = one_point_correlation(2, 0.5, 200_000, CorrelationEstimator::Kernel { bandwidth: 0.05 }, Seed(8), Exec::Parallel)
        .unwrap();
    // Gaussian smoothing adds h² to the second moment
    let m2 = d.integrate_against(|x| x * x) - 0.05 * 0.05;
    // (1/2)tr A² has variance 3/2 here
    assert!((m2 - 1.5).abs() <= 4.0 * (1.5_f64 / 200_000.0).sqrt(), "{m2}");
    for estimator in [CorrelationEstimator::default_for(2, 0.5), CorrelationEstimator::Kernel { bandwidth: 0.1 }] {
        let d = one_point_correlation(2, 0.5, 100_000, estimator, Seed(9), Exec::Parallel).unwrap();
        assert!(d.is_normalized(), "{estimator:?}: {}", d.trapezoid_integral());
    }
}

#[test]
fn csv_header() {
    let d = one_point_correlation(1, 1.0, 1000, CorrelationEstimator::default_for(1, 1.0), Seed(1), Exec::Sequential)
        .unwrap();
    assert!(d.to_csv().starts_with("x,rho,stderr\n"));
}
