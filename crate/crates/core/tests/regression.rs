use mehta_core::exec::{Exec, Seed};
use mehta_core::regression::{
    conditional_sample, conditioned_hessian_audit, empirical_correlator, ell_to_omega, hessian_regression_pair, regress,
    ConditionalSampler, GaussianVector, JointGaussian,
};
use mehta_core::spherefield::north_pole_pair;
use mehta_core::stats::{z_score, Moments};
use mehta_core::symspace::{coord_pairs, sample_goe, EnsembleParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn ok(est: f64, reference: f64, se: f64) -> bool {
    z_score(est, reference, se).is_some_and(|z| z.abs() <= 4.0)
}

fn normal_pairs(n: usize, seed: u64, coupled: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = Seed(seed).stream(0);
    (0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = if coupled { x } else { rng.sample(StandardNormal) };
            (vec![x], vec![y])
        })
        .collect()
}

#[test]
fn correlator_of_identical_and_independent_variables() {
    let e = empirical_correlator(&normal_pairs(100_000, 1, true)).unwrap();
    assert!(ok(e.joint.cross_yx()[(0, 0)], 1.0, e.cross_stderr[(0, 0)]));
    let e = empirical_correlator(&normal_pairs(100_000, 2, false)).unwrap();
    assert!(ok(e.joint.cross_yx()[(0, 0)], 0.0, e.cross_stderr[(0, 0)]));
}

fn pair_samples(m: usize, v: f64, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let params = EnsembleParams::goe(m + 1, v).unwrap();
    Exec::Parallel
        .map_chunks(n, Seed(seed), |len, rng| {
            (0..len).map(|_| north_pole_pair(&sample_goe(&params, rng).unwrap())).collect::<Vec<_>>()
        })
        .concat()
}

#[test]
fn paper_pair_correlator_v1_m2() {
    let e = empirical_correlator(&pair_samples(2, 1.0, 200_000, 3)).unwrap();
    let pairs = coord_pairs(2);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            assert!(ok(e.joint.cross_yx()[(row, 0)], -1.0, e.cross_stderr[(row, 0)]));
        }
    }
}

/// Every entry of the empirical joint law on GOE_3^1 matches the analytic one.
#[test]
fn paper_pair_matches_analytic_law() {
    let (m, v) = (2, 1.0);
    let analytic = hessian_regression_pair(m, v).unwrap();
    let e = empirical_correlator(&pair_samples(m, v, 200_000, 4)).unwrap();
    let check = |emp: &DMatrix<f64>, se: &DMatrix<f64>, exact: &DMatrix<f64>, what: &str| {
        for i in 0..exact.nrows() {
            for j in 0..exact.ncols() {
                assert!(
                    ok(emp[(i, j)], exact[(i, j)], se[(i, j)]),
                    "{what}[{i},{j}]: {} vs {}",
                    emp[(i, j)],
                    exact[(i, j)]
                );
            }
        }
    };
    check(e.joint.cross_yx(), &e.cross_stderr, analytic.cross_yx(), "C_YX");
    check(e.joint.x().cov(), &e.x_cov_stderr, analytic.x().cov(), "Var W");
    check(e.joint.y().cov(), &e.y_cov_stderr, analytic.y().cov(), "Var Hess");
}

#[test]
fn paper_regression_operator_is_minus_two_w0() {
    for m in 1..=4 {
        for v in [0.25, 0.5, 1.0, 3.0] {
            let j = hessian_regression_pair(m, v).unwrap();
            let r = regress(&j).unwrap();
            for (row, (i, k)) in coord_pairs(m).into_iter().enumerate() {
                for col in 0..=m {
                    let expect = if i == k && col == 0 { -2.0 } else { 0.0 };
                    assert!((r.operator[(row, col)] - expect).abs() < 1e-12);
                }
            }
            // residual is GOE_m^v in ℓ-coordinates: diagonal 2v, off-diagonal v
            for (row, (i, k)) in coord_pairs(m).into_iter().enumerate() {
                let expect = if i == k { 2.0 * v } else { v };
                assert!((r.residual_cov[(row, row)] - expect).abs() < 1e-12);
            }
            assert!(r.total_variance_defect(&j) <= 1e-10);

            // same regression seen in ω-coordinates
            let t = ell_to_omega(m);
            let jo = j.transform_y(&t).unwrap();
            let ro = regress(&jo).unwrap();
            assert!((&ro.operator - &t * &r.operator).amax() < 1e-12);
            assert!((&ro.residual_cov - DMatrix::from_diagonal_element(t.nrows(), t.nrows(), 2.0 * v)).amax() < 1e-12);
            assert!(ro.total_variance_defect(&jo) <= 1e-10);
        }
    }
}

#[test]
fn conditional_sampling_scalar_example() {
    let j = JointGaussian::new(
        GaussianVector::centered(DMatrix::from_element(1, 1, 2.0)).unwrap(),
        GaussianVector::centered(DMatrix::from_element(1, 1, 3.0)).unwrap(),
        DMatrix::from_element(1, 1, 2.0),
    )
    .unwrap();
    let r = regress(&j).unwrap();
    let x = DVector::from_element(1, 2.0);
    let mut rng = Seed(5).stream(0);
    let draws: Vec<f64> = (0..100_000).map(|_| conditional_sample(&r, &x, &mut rng).unwrap()[0]).collect();
    let mean = Moments::from_slice(&draws);
    assert!(ok(mean.mean, 2.0, mean.std_error()));
    let sq = Moments::from_slice(&draws.iter().map(|d| (d - 2.0) * (d - 2.0)).collect::<Vec<_>>());
    assert!(ok(sq.mean, 1.0, sq.std_error()));
}

/// Conditioning the north-pole Hessian on W = (t/2, 0, 0) at t = 1 gives
/// GOE_2^1 shifted by −1.
#[test]
fn conditioned_paper_pair_at_t1() {
    let r = regress(&hessian_regression_pair(2, 1.0).unwrap()).unwrap();
    let sampler = ConditionalSampler::new(&r).unwrap();
    let x = DVector::from_vec(vec![0.5, 0.0, 0.0]);
    let mut rng = Seed(6).stream(0);
    let (mut d0, mut d1, mut off, mut off2) = (Moments::default(), Moments::default(), Moments::default(), Moments::default());
    for _ in 0..100_000 {
        let y = sampler.sample(&x, &mut rng);
        // ℓ order: (0,0), (0,1), (1,1)
        d0.push(y[0]);
        d1.push(y[2]);
        off.push(y[1]);
        off2.push(y[1] * y[1]);
    }
    assert!(ok(d0.mean, -1.0, d0.std_error()));
    assert!(ok(d1.mean, -1.0, d1.std_error()));
    assert!(ok(off.mean, 0.0, off.std_error()));
    assert!(ok(off2.mean, 1.0, off2.std_error()));
}

/// Residuals of a regression fitted on samples are uncorrelated with X.
#[test]
fn residual_independence() {
    let samples = pair_samples(2, 0.5, 100_000, 7);
    let fit = regress(&empirical_correlator(&samples).unwrap().joint).unwrap();
    let resid: Vec<(Vec<f64>, Vec<f64>)> = samples
        .iter()
        .map(|(x, y)| {
            let z = DVector::from_column_slice(y) - &fit.operator * DVector::from_column_slice(x);
            (x.clone(), z.iter().copied().collect())
        })
        .collect();
    let e = empirical_correlator(&resid).unwrap();
    let c = e.joint.cross_yx();
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            assert!(ok(c[(i, j)], 0.0, e.cross_stderr[(i, j)].max(1e-15)), "[{i},{j}] {}", c[(i, j)]);
        }
    }
}

#[test]
fn conditioned_hessian_reproduces_goe() {
    for (k, (m, v)) in [(2, 1.0), (3, 0.5)].into_iter().enumerate() {
        let audit = conditioned_hessian_audit(m, v, 200_000, Seed(40 + k as u64), Exec::Parallel).unwrap();
        assert!(audit.pass(), "max |z| {}", audit.max_abs_z());
        assert!(audit.total_variance_defect <= 1e-10);
    }
}

#[test]
fn total_variance_identity_for_random_laws() {
    let mut rng = Seed(9).stream(0);
    for _ in 0..200 {
        let (dx, dy) = (1 + rng.random_range(0..4), 1 + rng.random_range(0..4));
        let g = DMatrix::from_fn(dx + dy, dx + dy + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = &g * g.transpose();
        let j = JointGaussian::new(
            GaussianVector::centered(s.view((0, 0), (dx, dx)).into_owned()).unwrap(),
            GaussianVector::centered(s.view((dx, dx), (dy, dy)).into_owned()).unwrap(),
            s.view((dx, 0), (dy, dx)).into_owned(),
        )
        .unwrap();
        let r = regress(&j).unwrap();
        assert!(r.total_variance_defect(&j) <= 1e-10);
        assert_eq!(j.cross_xy(), j.cross_yx().transpose());
    }
}
