//! Finite-dimensional Gaussian regression: correlators, the regression
//! operator R_{Y,X} = C_{Y,X} Var[X]^{-1}, the residual covariance
//! Δ_{Y,X} = Var[Y] − C_{Y,X} Var[X]^{-1} C_{X,Y}, and conditional sampling.
//!
//! All vectors are expressed in orthonormal coordinates, so covariance
//! operators are plain symmetric matrices and adjoints are transposes.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Exec, Seed};
use crate::linalg::sym_eigen;
use crate::spherefield::north_pole_pair;
use crate::stats::{z_score, MomentsVec};
use crate::symspace::{coord_pairs, goe_unchecked, sym_dim, AuditEntry, EnsembleParams};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigen(a).values[0]
}

fn check_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidParams(format!("{what} is not symmetric")));
    }
    Ok(())
}

fn check_psd(a: &DMatrix<f64>) -> Result<()> {
    let lo = smallest_eigenvalue(a);
    if lo < -PSD_TOL * a.amax().max(1.0) {
        return Err(Error::NotPsd(lo));
    }
    Ok(())
}

/// A Gaussian vector given by its mean and covariance operator.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianVector {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianVector {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidParams(format!(
                "covariance is {}×{}, mean has length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        check_symmetric(&cov, "covariance")?;
        check_psd(&cov)?;
        Ok(GaussianVector { mean, cov })
    }

    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Threshold below which the covariance counts as singular:
    /// 1e−10 · trace / dim.
    pub fn degeneracy_threshold(&self) -> f64 {
        1e-10 * self.cov.trace() / self.dim().max(1) as f64
    }

    pub fn is_nondegenerate(&self) -> bool {
        smallest_eigenvalue(&self.cov) > self.degeneracy_threshold()
    }
}

/// A jointly Gaussian pair (X, Y) with correlator C_{Y,X} (dim_y × dim_x).
#[derive(Clone, Debug, PartialEq)]
pub struct JointGaussian {
    x: GaussianVector,
    y: GaussianVector,
    cross: DMatrix<f64>,
}

impl JointGaussian {
    /// Checks that the block operator [[Var X, C_{X,Y}], [C_{Y,X}, Var Y]] is PSD.
    pub fn new(x: GaussianVector, y: GaussianVector, cross: DMatrix<f64>) -> Result<Self> {
        if cross.nrows() != y.dim() || cross.ncols() != x.dim() {
            return Err(Error::InvalidParams(format!(
                "correlator is {}×{}, expected {}×{}",
                cross.nrows(),
                cross.ncols(),
                y.dim(),
                x.dim()
            )));
        }
        let j = JointGaussian { x, y, cross };
        check_psd(&j.block_covariance())?;
        Ok(j)
    }

    pub fn x(&self) -> &GaussianVector {
        &self.x
    }
    pub fn y(&self) -> &GaussianVector {
        &self.y
    }

    /// C_{Y,X}.
    pub fn cross_yx(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// C_{X,Y}, the adjoint of C_{Y,X}.
    pub fn cross_xy(&self) -> DMatrix<f64> {
        self.cross.transpose()
    }

    pub fn block_covariance(&self) -> DMatrix<f64> {
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let mut b = DMatrix::zeros(dx + dy, dx + dy);
        b.view_mut((0, 0), (dx, dx)).copy_from(&self.x.cov);
        b.view_mut((dx, dx), (dy, dy)).copy_from(&self.y.cov);
        b.view_mut((dx, 0), (dy, dx)).copy_from(&self.cross);
        b.view_mut((0, dx), (dx, dy)).copy_from(&self.cross.transpose());
        b
    }

    /// Applies a linear change of coordinates Y ↦ T·Y.
    pub fn transform_y(&self, t: &DMatrix<f64>) -> Result<JointGaussian> {
        let y = GaussianVector::new(t * &self.y.mean, t * &self.y.cov * t.transpose())?;
        JointGaussian::new(self.x.clone(), y, t * &self.cross)
    }
}

/// Regression operator, residual covariance and affine offset of E[Y | X].
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionResult {
    pub operator: DMatrix<f64>,
    pub residual_cov: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl RegressionResult {
    /// E[Y | X = x] = m(Y) − R·m(X) + R·x.
    pub fn conditional_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.operator * x
    }

    /// max |Var[Y] − Δ − R·Var[X]·Rᵀ|, which vanishes in exact arithmetic.
    pub fn total_variance_defect(&self, joint: &JointGaussian) -> f64 {
        let explained = &self.operator * joint.x.cov() * self.operator.transpose();
        (joint.y.cov() - &self.residual_cov - explained).amax()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "R": MatrixJson::from(&self.operator),
            "Delta": MatrixJson::from(&self.residual_cov),
            "offset": self.offset.iter().copied().collect::<Vec<f64>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(rename = "R")]
            r: MatrixJson,
            #[serde(rename = "Delta")]
            delta: MatrixJson,
            offset: Vec<f64>,
        }
        let raw: Raw = serde_json::from_value(value.clone())?;
        Ok(RegressionResult {
            operator: raw.r.to_matrix()?,
            residual_cov: raw.delta.to_matrix()?,
            offset: DVector::from_vec(raw.offset),
        })
    }
}

/// Row-major matrix with explicit dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Parse(format!(
                "matrix data has {} entries, expected {}×{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Gaussian regression of Y on X. Var[X]^{-1} is applied by a Cholesky
/// solve, never formed.
pub fn regress(joint: &JointGaussian) -> Result<RegressionResult> {
    let x = &joint.x;
    let threshold = x.degeneracy_threshold();
    let lo = smallest_eigenvalue(x.cov());
    if lo.partial_cmp(&threshold) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateCovariance {
            smallest_eigenvalue: lo,
            threshold,
        });
    }
    let chol = Cholesky::new(x.cov().clone()).ok_or(Error::DegenerateCovariance {
        smallest_eigenvalue: lo,
        threshold,
    })?;
    // R = C_{Y,X} Var[X]^{-1}  ⇔  Rᵀ = Var[X]^{-1} C_{X,Y}
    let operator = chol.solve(&joint.cross_xy()).transpose();
    let explained = &operator * joint.cross_xy();
    let mut residual_cov = joint.y.cov() - explained;
    residual_cov = 0.5 * (&residual_cov + residual_cov.transpose());
    let offset = joint.y.mean() - &operator * x.mean();
    Ok(RegressionResult {
        operator,
        residual_cov,
        offset,
    })
}

/// Draws Z + E[Y | X = x] with Z ~ N(0, Δ), using a precomputed square root.
#[derive(Clone, Debug)]
pub struct ConditionalSampler {
    result: RegressionResult,
    sqrt: DMatrix<f64>,
}

impl ConditionalSampler {
    /// Square root of Δ by eigendecomposition. Negative eigenvalues down to
    /// −1e−10 (relative to ‖Δ‖) are clipped to zero; anything lower is an error.
    pub fn new(result: &RegressionResult) -> Result<Self> {
        let delta = &result.residual_cov;
        let d = delta.nrows();
        let e = sym_eigen(delta);
        let floor = -PSD_TOL * delta.amax().max(1.0);
        let mut sqrt = e.vectors.clone();
        for (k, &lam) in e.values.iter().enumerate() {
            if lam < floor {
                return Err(Error::NotPsd(lam));
            }
            let s = lam.max(0.0).sqrt();
            for r in 0..d {
                sqrt[(r, k)] *= s;
            }
        }
        Ok(ConditionalSampler {
            result: result.clone(),
            sqrt,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.sqrt.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.result.conditional_mean(x) + &self.sqrt * z
    }

    /// Residual draw Z ~ N(0, Δ) alone.
    pub fn residual<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.sqrt.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.sqrt * z
    }
}

/// One draw from the conditional law of Y given X = x.
pub fn conditional_sample<R: Rng + ?Sized>(r: &RegressionResult, x: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    Ok(ConditionalSampler::new(r)?.sample(x, rng))
}

/// Empirical joint law with standard errors of the second moments.
#[derive(Clone, Debug)]
pub struct EmpiricalCorrelation {
    pub joint: JointGaussian,
    pub cross_stderr: DMatrix<f64>,
    pub y_cov_stderr: DMatrix<f64>,
    pub x_cov_stderr: DMatrix<f64>,
    pub n: usize,
}

type Coord<'a> = dyn Fn(&(Vec<f64>, Vec<f64>), usize) -> f64 + 'a;

/// Assembles empirical means, covariances and the cross-covariance
/// c_ji = cov[Y_j, X_i] from paired samples.
pub fn empirical_correlator(samples: &[(Vec<f64>, Vec<f64>)]) -> Result<EmpiricalCorrelation> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let (dx, dy) = (samples[0].0.len(), samples[0].1.len());
    if samples.iter().any(|(x, y)| x.len() != dx || y.len() != dy) {
        return Err(Error::InvalidParams("samples have inconsistent dimensions".into()));
    }
    let nf = n as f64;
    let mut mx = DVector::zeros(dx);
    let mut my = DVector::zeros(dy);
    for (x, y) in samples {
        mx += DVector::from_column_slice(x);
        my += DVector::from_column_slice(y);
    }
    mx /= nf;
    my /= nf;

    // second pass: centered products and their squares
    let cov_and_se = |a: &Coord<'_>, b: &Coord<'_>,
                      da: usize,
                      db: usize| {
        let mut s1 = DMatrix::<f64>::zeros(da, db);
        let mut s2 = DMatrix::<f64>::zeros(da, db);
        for s in samples {
            for i in 0..da {
                let ai = a(s, i);
                for j in 0..db {
                    let p = ai * b(s, j);
                    s1[(i, j)] += p;
                    s2[(i, j)] += p * p;
                }
            }
        }
        let cov = &s1 / (nf - 1.0);
        let se = DMatrix::from_fn(da, db, |i, j| {
            let mean = s1[(i, j)] / nf;
            (((s2[(i, j)] / nf - mean * mean).max(0.0)) / nf).sqrt()
        });
        (cov, se)
    };
    let xc = |s: &(Vec<f64>, Vec<f64>), i: usize| s.0[i] - mx[i];
    let yc = |s: &(Vec<f64>, Vec<f64>), j: usize| s.1[j] - my[j];
    let (cxx, sxx) = cov_and_se(&xc, &xc, dx, dx);
    let (cyy, syy) = cov_and_se(&yc, &yc, dy, dy);
    let (cyx, syx) = cov_and_se(&yc, &xc, dy, dx);
    let sym = |a: DMatrix<f64>| 0.5 * (&a + a.transpose());
    let joint = JointGaussian::new(GaussianVector::new(mx, sym(cxx))?, GaussianVector::new(my, sym(cyy))?, cyx)?;
    Ok(EmpiricalCorrelation {
        joint,
        cross_stderr: syx,
        y_cov_stderr: syy,
        x_cov_stderr: sxx,
        n,
    })
}

/// Analytic joint law of X = W = (Φ_A(n), ∇Φ_A(n)) and Y = ℓ-coordinates of
/// Hess_A(n) = A_* − a_00·1_m for A ∈ GOE_{m+1}^v, at the north pole n.
///
/// Var W = diag(v/2, v, …, v); cov(L_ii, W_0) = −v; every other
/// cross-covariance is zero; Y ∈ S_m^{2v,v}.
pub fn hessian_regression_pair(m: usize, v: f64) -> Result<JointGaussian> {
    let hess_law = EnsembleParams::new(m, 2.0 * v, v)?;
    let pairs = coord_pairs(m);
    let d = sym_dim(m);
    let mut var_w = DMatrix::from_diagonal_element(m + 1, m + 1, v);
    var_w[(0, 0)] = v / 2.0;
    let var_y = DMatrix::from_fn(d, d, |a, b| hess_law.ell_covariance(pairs[a], pairs[b]));
    let cross = DMatrix::from_fn(d, m + 1, |a, k| {
        let (i, j) = pairs[a];
        if i == j && k == 0 {
            -v
        } else {
            0.0
        }
    });
    JointGaussian::new(GaussianVector::centered(var_w)?, GaussianVector::centered(var_y)?, cross)
}

/// Second moments of the conditioned Hessian against GOE_m^v, plus the
/// operator-level law-of-total-variance defect of the analytic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedAudit {
    pub m: usize,
    pub v: f64,
    pub n_samples: usize,
    /// E[Ω̄_ab Ω̄_cd] in ω-coordinates; reference 2v on the diagonal, 0 off it.
    pub entries: Vec<AuditEntry>,
    pub total_variance_defect: f64,
}

impl ConditionedAudit {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(AuditEntry::pass) && self.total_variance_defect <= 1e-10
    }

    pub fn max_abs_z(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.z_score.map_or(f64::INFINITY, f64::abs))
            .fold(0.0, f64::max)
    }
}

/// Samples A ∈ GOE_{m+1}^v, forms the north-pole pair (W, Hess_A(n)), removes
/// the regression R·W computed from the analytic joint law, and audits the
/// residual Hess̄ = Hess − R·W in ω-coordinates against GOE_m^v.
pub fn conditioned_hessian_audit(m: usize, v: f64, n: usize, seed: Seed, exec: Exec) -> Result<ConditionedAudit> {
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let joint = hessian_regression_pair(m, v)?;
    let reg = regress(&joint)?;
    let defect = reg.total_variance_defect(&joint);
    let pairs = coord_pairs(m);
    let d = pairs.len();
    let to_omega = ell_to_omega(m);
    let stats = d * (d + 1) / 2;
    let parts = exec.map_chunks(n, seed, |len, rng| {
        let mut acc = MomentsVec::new(stats);
        let mut prods = vec![0.0; stats];
        for _ in 0..len {
            let a = goe_unchecked(m + 1, v, rng);
            let (w, hess) = north_pole_pair(&a);
            let residual = DVector::from_vec(hess) - &reg.operator * DVector::from_vec(w);
            let omega = &to_omega * residual;
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    prods[k] = omega[i] * omega[j];
                    k += 1;
                }
            }
            acc.push(&prods);
        }
        acc
    });
    let acc = MomentsVec::reduce(parts, stats);
    let mut entries = Vec::with_capacity(stats);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let mo = &acc.0[k];
            let reference = if i == j { 2.0 * v } else { 0.0 };
            entries.push(AuditEntry {
                first: pairs[i],
                second: pairs[j],
                empirical: mo.mean,
                std_error: mo.std_error(),
                reference,
                z_score: z_score(mo.mean, reference, mo.std_error()),
            });
            k += 1;
        }
    }
    Ok(ConditionedAudit {
        m,
        v,
        n_samples: n,
        entries,
        total_variance_defect: defect,
    })
}

/// Diagonal map from ℓ- to ω-coordinates on Sym(R^m).
pub fn ell_to_omega(m: usize) -> DMatrix<f64> {
    let diag: Vec<f64> = coord_pairs(m)
        .into_iter()
        .map(|(i, j)| if i == j { 1.0 } else { std::f64::consts::SQRT_2 })
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Seed;

    fn scalar_joint(var_x: f64, cyx: f64, var_y: f64) -> JointGaussian {
        JointGaussian::new(
            GaussianVector::centered(DMatrix::from_element(1, 1, var_x)).unwrap(),
            GaussianVector::centered(DMatrix::from_element(1, 1, var_y)).unwrap(),
            DMatrix::from_element(1, 1, cyx),
        )
        .unwrap()
    }

    #[test]
    fn scalar_regression() {
        let j = scalar_joint(2.0, 2.0, 3.0);
        let r = regress(&j).unwrap();
        assert!((r.operator[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((r.residual_cov[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(r.total_variance_defect(&j) < 1e-10);
    }

    #[test]
    fn independent_y() {
        let j = scalar_joint(2.0, 0.0, 3.0);
        let r = regress(&j).unwrap();
        assert_eq!(r.operator[(0, 0)], 0.0);
        assert_eq!(r.residual_cov[(0, 0)], 3.0);
    }

    #[test]
    fn degenerate_x_is_named() {
        let x = GaussianVector::centered(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(!x.is_nondegenerate());
        let y = GaussianVector::centered(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let j = JointGaussian::new(x, y, DMatrix::zeros(1, 2)).unwrap();
        match regress(&j) {
            Err(Error::DegenerateCovariance { smallest_eigenvalue, .. }) => assert!(smallest_eigenvalue.abs() < 1e-12),
            other => panic!("expected degeneracy error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(GaussianVector::centered(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(GaussianVector::centered(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let x = GaussianVector::centered(DMatrix::from_element(1, 1, 1.0)).unwrap();
        // |cov| > sd·sd makes the block indefinite
        assert!(JointGaussian::new(x.clone(), x.clone(), DMatrix::from_element(1, 1, 2.0)).is_err());
        assert!(JointGaussian::new(x.clone(), x, DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn zero_residual_is_deterministic() {
        let j = scalar_joint(1.0, 1.0, 1.0);
        let r = regress(&j).unwrap();
        let mut rng = Seed(1).stream(0);
        for x in [-1.5, 0.0, 2.0] {
            let y = conditional_sample(&r, &DVector::from_element(1, x), &mut rng).unwrap();
            assert!((y[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_pair_structure() {
        for (m, v) in [(1, 1.0), (2, 1.0), (3, 0.5)] {
            let j = hessian_regression_pair(m, v).unwrap();
            let pairs = coord_pairs(m);
            for (a, &(i, k)) in pairs.iter().enumerate() {
                let c0 = j.cross_yx()[(a, 0)];
                assert_eq!(c0, if i == k { -v } else { 0.0 });
                for w in 1..=m {
                    assert_eq!(j.cross_yx()[(a, w)], 0.0);
                }
            }
            assert_eq!(j.x().cov()[(0, 0)], v / 2.0);
            assert!((1..=m).all(|k| j.x().cov()[(k, k)] == v));
            assert_eq!(j.cross_xy(), j.cross_yx().transpose());

            let r = regress(&j).unwrap();
            // R(w) = −2 w_0 · 1_m
            for (a, &(i, k)) in pairs.iter().enumerate() {
                for w in 0..=m {
                    let expect = if i == k && w == 0 { -2.0 } else { 0.0 };
                    assert!((r.operator[(a, w)] - expect).abs() < 1e-14);
                }
            }
            assert!(r.total_variance_defect(&j) < 1e-10);

            // residual law is GOE_m^v, checked in both coordinate systems
            let goe = EnsembleParams::goe(m, v).unwrap();
            for (a, &pa) in pairs.iter().enumerate() {
                for (b, &pb) in pairs.iter().enumerate() {
                    assert!((r.residual_cov[(a, b)] - goe.ell_covariance(pa, pb)).abs() < 1e-12);
                }
            }
            let jo = j.transform_y(&ell_to_omega(m)).unwrap();
            let ro = regress(&jo).unwrap();
            for (a, &(i, k)) in pairs.iter().enumerate() {
                for (b, _) in pairs.iter().enumerate() {
                    let expect = if a == b { 2.0 * v } else { 0.0 };
                    assert!((ro.residual_cov[(a, b)] - expect).abs() < 1e-12, "{i}{k}");
                }
            }
            assert!(ro.total_variance_defect(&jo) < 1e-10);
        }
    }

    #[test]
    fn json_round_trip() {
        let r = regress(&hessian_regression_pair(2, 1.0).unwrap()).unwrap();
        let json = r.to_json();
        assert_eq!(json["R"]["rows"], 3);
        assert_eq!(json["R"]["cols"], 3);
        assert_eq!(RegressionResult::from_json(&json).unwrap(), r);
    }

    #[test]
    fn too_few_samples() {
        assert!(empirical_correlator(&[(vec![1.0], vec![1.0])]).is_err());
    }
}
