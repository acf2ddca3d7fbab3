//! The quadratic field Φ_A(x) = ½(Ax, x) on the unit sphere S^m ⊂ R^{m+1}:
//! gradient, Riemannian Hessian, a Newton search for critical points and the
//! discriminant measure D_A = Σ_{∇Φ_A(x)=0} δ_{2Φ_A(x)}.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Exec, Seed};
use crate::linalg::sym_eigen;
use crate::spectral::{default_degeneracy_tol, eigen, spectral_measure, PointMeasure};
use crate::symspace::SymMatrix;

/// A unit vector in R^{m+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Renormalizes; panics on the zero vector.
    pub fn new(coords: Vec<f64>) -> Self {
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 0.0, "cannot project the zero vector onto the sphere");
        SpherePoint(coords.into_iter().map(|x| x / norm).collect())
    }

    /// n = (1, 0, …, 0) on S^m.
    pub fn north_pole(m: usize) -> Self {
        let mut c = vec![0.0; m + 1];
        c[0] = 1.0;
        SpherePoint(c)
    }

    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        loop {
            let c: Vec<f64> = (0..=m).map(|_| rng.sample(StandardNormal)).collect();
            if c.iter().any(|&x| x != 0.0) {
                return SpherePoint::new(c);
            }
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn antipode(&self) -> Self {
        SpherePoint(self.0.iter().map(|x| -x).collect())
    }

    fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

fn check_dims(a: &SymMatrix, x: &SpherePoint) {
    assert_eq!(a.dim(), x.0.len(), "matrix and sphere point dimensions differ");
}

/// Φ_A(x) = ½(Ax, x).
pub fn phi(a: &SymMatrix, x: &SpherePoint) -> f64 {
    check_dims(a, x);
    let v = x.vector();
    0.5 * v.dot(&(a.to_dense() * &v))
}

/// ∇Φ_A(x) = Ax − (Ax, x)x, an ambient vector tangent at x.
pub fn grad_phi(a: &SymMatrix, x: &SpherePoint) -> DVector<f64> {
    check_dims(a, x);
    let v = x.vector();
    let ax = a.to_dense() * &v;
    let rho = ax.dot(&v);
    ax - rho * v
}

/// Orthonormal basis of T_x S^m: columns 2..m+1 of the Householder
/// reflection that sends e_1 to x. At the north pole this is e_2, …, e_{m+1}.
pub fn tangent_basis(x: &SpherePoint) -> DMatrix<f64> {
    let n = x.0.len();
    let mut w = x.vector();
    w[0] -= 1.0;
    w.neg_mut(); // w = e_1 − x
    let ww = w.norm_squared();
    let mut b = DMatrix::zeros(n, n - 1);
    for c in 1..n {
        for r in 0..n {
            let id = if r == c { 1.0 } else { 0.0 };
            b[(r, c - 1)] = if ww == 0.0 { id } else { id - 2.0 * w[r] * w[c] / ww };
        }
    }
    b
}

/// Riemannian Hessian of Φ_A at x in the basis `tangent_basis(x)`:
/// Bᵀ A B − (Ax, x)·1_m. At the north pole this is A_* − a_00·1_m.
pub fn hess_phi(a: &SymMatrix, x: &SpherePoint) -> SymMatrix {
    check_dims(a, x);
    let dense = a.to_dense();
    let v = x.vector();
    let rho = v.dot(&(&dense * &v));
    let b = tangent_basis(x);
    let h = b.transpose() * dense * &b;
    SymMatrix::from_dense_symmetrized(&h).shifted(rho)
}

/// (W, Y) at the north pole: W = (Φ_A(n), ∇Φ_A(n) in tangent coordinates),
/// Y = ℓ-coordinates of Hess_A(n).
pub fn north_pole_pair(a: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = SpherePoint::north_pole(a.dim() - 1);
    let g = tangent_basis(&n).transpose() * grad_phi(a, &n);
    let mut w = Vec::with_capacity(a.dim());
    w.push(phi(a, &n));
    w.extend(g.iter());
    (w, hess_phi(a, &n).ell_coords())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    /// Critical value of 2Φ_A.
    pub value: f64,
    pub gradient_norm: f64,
    pub morse_index: usize,
}

pub fn critical_points_json(points: &[CriticalPoint]) -> serde_json::Value {
    serde_json::to_value(points).expect("critical points serialize")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinderOptions {
    /// Gradient-norm tolerance; points within √tol are merged.
    pub tol: f64,
    pub n_starts: usize,
    pub max_iter: usize,
    /// Cap on the tangent Newton step length.
    pub max_step: f64,
}

impl FinderOptions {
    /// tol = 1e−11, n_starts = 20(m+1)(m+2) for S^m.
    pub fn for_sphere(m: usize) -> Self {
        FinderOptions {
            tol: 1e-11,
            n_starts: 20 * (m + 1) * (m + 2),
            max_iter: 100,
            max_step: 4.0,
        }
    }
}

/// Smallest gap between consecutive eigenvalues.
pub fn min_eigen_gap(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn require_simple(a: &SymMatrix) -> Result<Vec<f64>> {
    let values = eigen(a).values;
    let gap = min_eigen_gap(&values);
    let tol = default_degeneracy_tol(a);
    if gap <= tol {
        return Err(Error::DegenerateInput { gap, tol });
    }
    Ok(values)
}

/// Newton iteration from one start. Returns the converged point or None.
fn newton(dense: &DMatrix<f64>, start: DVector<f64>, opts: &FinderOptions) -> Option<CriticalPoint> {
    let n = start.len();
    let scale = 1.0 + dense.amax();
    let mut x = start;
    for _ in 0..opts.max_iter {
        let ax = dense * &x;
        let rho = ax.dot(&x);
        let g = &ax - rho * &x;
        let sp = SpherePoint(x.iter().copied().collect());
        let b = tangent_basis(&sp);
        let gt = b.transpose() * &g;
        let h = b.transpose() * dense * &b - DMatrix::from_diagonal_element(n - 1, n - 1, rho);
        let e = sym_eigen(&h);
        let gnorm = g.norm();
        if gnorm < opts.tol {
            let morse_index = e.values.iter().filter(|&&l| l < 0.0).count();
            return Some(CriticalPoint {
                point: x.iter().copied().collect(),
                value: rho,
                gradient_norm: gnorm,
                morse_index,
            });
        }
        let min_abs = e.values.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        let mut s = if min_abs > 1e-14 * scale {
            // s = −H⁻¹ g in the eigenbasis of H
            let coeffs = e.vectors.transpose() * &gt;
            let scaled = DVector::from_fn(n - 1, |k, _| -coeffs[k] / e.values[k]);
            &e.vectors * scaled
        } else {
            -&gt / scale
        };
        let len = s.norm();
        if len > opts.max_step {
            s *= opts.max_step / len;
        }
        let y = &x + &b * s;
        x = &y / y.norm();
    }
    None
}

/// Finds all critical points of Φ_A on S^m by Newton's method from
/// antipodal pairs of random starts. Starts run in blocks; the search stops
/// as soon as the 2(m+1) critical points of a simple A are all found, and
/// fails with `IncompleteSearch` if the start budget runs out first.
pub fn find_critical_points(a: &SymMatrix, opts: &FinderOptions, seed: Seed, exec: Exec) -> Result<Vec<CriticalPoint>> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {}", opts.tol)));
    }
    require_simple(a)?;
    let dim = a.dim();
    let expected = 2 * dim;
    let dense = a.to_dense();
    let merge_radius = opts.tol.sqrt();
    let block = 2 * expected;
    let mut found: Vec<CriticalPoint> = Vec::with_capacity(expected);
    let mut next = 0;
    while next < opts.n_starts && found.len() < expected {
        let count = block.min(opts.n_starts - next);
        let base = next;
        let results = exec.map_range(count, |k| {
            let idx = base + k;
            let mut rng = seed.stream((idx / 2) as u64);
            let p = SpherePoint::random(dim - 1, &mut rng);
            let p = if idx % 2 == 0 { p } else { p.antipode() };
            newton(&dense, p.vector(), opts)
        });
        for cp in results.into_iter().flatten() {
            let dup = found.iter().any(|f| {
                f.point.iter().zip(&cp.point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < merge_radius
            });
            if !dup {
                found.push(cp);
            }
        }
        next += count;
    }
    if found.len() != expected {
        return Err(Error::IncompleteSearch {
            found: found.len(),
            expected,
        });
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.point[..].partial_cmp(&b.point[..]).unwrap()));
    Ok(found)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscriminantMethod {
    Analytic,
    Search,
}

/// D_A. Analytic: 2σ_A (multiplicities included for non-simple A). Search:
/// one unit atom per critical point found by Newton, merged at 1e−8·(1+‖A‖).
pub fn discriminant_measure(a: &SymMatrix, method: DiscriminantMethod, seed: Seed) -> Result<PointMeasure> {
    let tol = default_degeneracy_tol(a);
    match method {
        DiscriminantMethod::Analytic => Ok(spectral_measure(a, tol).scaled(2.0)),
        DiscriminantMethod::Search => {
            let opts = FinderOptions::for_sphere(a.dim() - 1);
            let pts = find_critical_points(a, &opts, seed, Exec::Sequential)?;
            Ok(PointMeasure::new(pts.into_iter().map(|p| (p.value, 1.0)).collect())?.merged(tol))
        }
    }
}

/// (critical value, Morse index) at both unit eigenvectors of every
/// eigenvalue, indices read off the Riemannian Hessian there.
pub fn morse_index_spectrum(a: &SymMatrix) -> Result<Vec<(f64, usize)>> {
    require_simple(a)?;
    let e = eigen(a);
    let mut out = Vec::with_capacity(2 * a.dim());
    for k in 0..a.dim() {
        let x = SpherePoint::new(e.vectors.column(k).iter().copied().collect());
        for p in [x.antipode(), x] {
            let h = hess_phi(a, &p);
            let index = crate::spectral::eigenvalues(&h).iter().filter(|&&l| l < 0.0).count();
            out.push((2.0 * phi(a, &p), index));
        }
    }
    Ok(out)
}
