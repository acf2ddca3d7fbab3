use mehta_core::exec::{Exec, Seed};
use mehta_core::spectral::{eigenvalues, spectral_measure};
use mehta_core::spherefield::{
    discriminant_measure, find_critical_points, grad_phi, hess_phi, min_eigen_gap, morse_index_spectrum, phi,
    tangent_basis, DiscriminantMethod, FinderOptions, SpherePoint,
};
use mehta_core::symspace::{sample_goe, EnsembleParams, SymMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn goe(m: usize, v: f64, seed: u64) -> impl FnMut() -> SymMatrix {
    let params = EnsembleParams::goe(m, v).unwrap();
    let mut rng = Seed(seed).stream(0);
    move || sample_goe(&params, &mut rng).unwrap()
}

/// Φ along the normal-coordinate chart y ↦ cos|y| x + sin|y| (By)/|y|.
fn phi_chart(a: &SymMatrix, x: &SpherePoint, b: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let r = y.norm();
    let x0 = DVector::from_column_slice(x.coords());
    let p = if r == 0.0 { x0 } else { r.cos() * x0 + (r.sin() / r) * (b * y) };
    phi(a, &SpherePoint::new(p.iter().copied().collect()))
}

#[test]
fn hessian_matches_finite_differences() {
    let mut draw = goe(4, 1.0, 1);
    let mut rng = Seed(2).stream(0);
    let h = 1e-4;
    for _ in 0..50 {
        let a = draw();
        let x = SpherePoint::random(3, &mut rng);
        let b = tangent_basis(&x);
        let hess = hess_phi(&a, &x);
        let m = 3;
        let e = |i: usize| DVector::from_fn(m, |k, _| if k == i { 1.0 } else { 0.0 });
        let mut max_err = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                let (ei, ej) = (e(i) * h, e(j) * h);
                let fd = (phi_chart(&a, &x, &b, &(&ei + &ej)) - phi_chart(&a, &x, &b, &(&ei - &ej))
                    - phi_chart(&a, &x, &b, &(&ej - &ei))
                    + phi_chart(&a, &x, &b, &(-&ei - &ej)))
                    / (4.0 * h * h);
                max_err = max_err.max((fd - hess.get(i, j)).abs());
            }
        }
        assert!(max_err < 1e-5, "max error {max_err}");
    }
}

#[test]
fn gradient_is_projection_of_ax() {
    let mut draw = goe(3, 1.0, 3);
    let mut rng = Seed(4).stream(0);
    for _ in 0..1000 {
        let a = draw();
        let x = SpherePoint::random(2, &mut rng);
        let g = grad_phi(&a, &x);
        let xv = DVector::from_column_slice(x.coords());
        let ax = a.to_dense() * &xv;
        let expect = &ax - ax.dot(&xv) * &xv;
        assert!((g - expect).amax() < 1e-12);
    }
}

#[test]
fn random_goe3_critical_values_are_doubled_eigenvalues() {
    let mut draw = goe(3, 1.0, 5);
    for k in 0..20 {
        let a = draw();
        let pts = find_critical_points(&a, &FinderOptions::for_sphere(2), Seed(k), Exec::Parallel).unwrap();
        assert_eq!(pts.len(), 6);
        let ev = eigenvalues(&a);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.value - ev[i / 2]).abs() < 1e-8);
            assert!(p.gradient_norm < 1e-10);
        }
    }
}

#[test]
fn antipodal_symmetry() {
    let mut draw = goe(4, 1.0, 6);
    let a = draw();
    let pts = find_critical_points(&a, &FinderOptions::for_sphere(3), Seed(1), Exec::Parallel).unwrap();
    for p in &pts {
        let q = pts
            .iter()
            .find(|q| q.point.iter().zip(&p.point).all(|(a, b)| (a + b).abs() < 1e-6))
            .expect("antipode is critical");
        assert!((q.value - p.value).abs() < 1e-10);
        assert_eq!(q.morse_index, p.morse_index);
    }
}

#[test]
fn critical_values_are_orthogonally_equivariant() {
    let mut draw = goe(3, 1.0, 7);
    let mut rng = Seed(8).stream(0);
    for k in 0..20 {
        let a = draw();
        let q = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let opts = FinderOptions::for_sphere(2);
        let v1: Vec<f64> = find_critical_points(&a, &opts, Seed(k), Exec::Sequential).unwrap().iter().map(|p| p.value).collect();
        let v2: Vec<f64> = find_critical_points(&a.conjugate(&q), &opts, Seed(k), Exec::Sequential)
            .unwrap()
            .iter()
            .map(|p| p.value)
            .collect();
        for (x, y) in v1.iter().zip(&v2) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn analytic_and_search_discriminants_agree() {
    let mut draw = goe(3, 1.0, 9);
    for k in 0..1000 {
        let a = draw();
        let an = discriminant_measure(&a, DiscriminantMethod::Analytic, Seed(k)).unwrap();
        let se = discriminant_measure(&a, DiscriminantMethod::Search, Seed(k)).unwrap();
        assert_eq!(an.total_mass(), 6.0);
        assert!(an.approx_eq(&se, 1e-8), "sample {k}");
        // D_A = 2σ_A
        assert!(an.approx_eq(&spectral_measure(&a, 0.0).scaled(2.0), 0.0));
    }
}

#[test]
fn morse_spectrum_of_random_goe4() {
    let mut draw = goe(4, 1.0, 10);
    for _ in 0..50 {
        let mut idx: Vec<usize> = morse_index_spectrum(&draw()).unwrap().into_iter().map(|(_, i)| i).collect();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }
}

/// Statistical witness that Φ_A is a.s. Morse: no tiny eigenvalue gaps.
#[test]
fn no_near_degenerate_samples() {
    for m in 1..=3 {
        for v in [0.5, 1.0] {
            let params = EnsembleParams::goe(m + 1, v).unwrap();
            let bad: usize = Exec::Parallel
                .map_chunks(100_000, Seed(m as u64 * 10), |len, rng| {
                    (0..len)
                        .filter(|_| min_eigen_gap(&eigenvalues(&sample_goe(&params, rng).unwrap())) < 1e-12)
                        .count()
                })
                .into_iter()
                .sum();
            assert_eq!(bad, 0, "m={m} v={v}");
        }
    }
}
