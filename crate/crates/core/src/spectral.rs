//! Eigenvalues, spectral measures, Weyl-formula expectations and estimators
//! of the normalized one-point correlation function ρ_{n,v}.
//!
//! ρ_{n,v} is normalized to total mass 1: (1/n)·E[tr f(A)] = ∫ f ρ_{n,v}.
//! Mehta's R_n is n·ρ_{n,v} and is not used anywhere in this crate.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{tree_reduce, Exec, Seed};
use crate::linalg::{sym_eigen, SymEigen};
use crate::mehta::mehta_closed_form_scaled;
use crate::quadrature::{integrate_ordered, Quad};
use crate::stats::{EstimatorResult, Moments};
use crate::symspace::{goe_unchecked, EnsembleParams, SymMatrix};

/// Ascending eigenvalues of A.
pub fn eigenvalues(a: &SymMatrix) -> Vec<f64> {
    sym_eigen(&a.to_dense()).values
}

/// Eigenvalues with an orthonormal eigenbasis (columns).
pub fn eigen(a: &SymMatrix) -> SymEigen {
    sym_eigen(&a.to_dense())
}

/// Finite sum of weighted Dirac masses on R, atoms sorted by location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<(f64, f64)>,
}

impl PointMeasure {
    /// Sorts atoms by location; rejects non-positive or non-finite weights.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(x, w)) = atoms.iter().find(|(x, w)| *w <= 0.0 || !w.is_finite() || !x.is_finite()) {
            return Err(Error::InvalidParams(format!("bad atom ({x}, {w})")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(PointMeasure { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Mass of the closed interval [a, b].
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        self.atoms.iter().filter(|(x, _)| *x >= a && *x <= b).map(|a| a.1).sum()
    }

    /// Merges maximal runs of atoms whose consecutive gaps are below `tol`.
    /// Each merged atom sits at the weighted mean of its run.
    pub fn merged(&self, tol: f64) -> PointMeasure {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, out: &mut Vec<(f64, f64)>| {
            if run.is_empty() {
                return;
            }
            let w: f64 = run.iter().map(|a| a.1).sum();
            let x = run.iter().map(|a| a.0 * a.1).sum::<f64>() / w;
            out.push((x, w));
            run.clear();
        };
        for &atom in &self.atoms {
            if let Some(&(last, _)) = run.last() {
                if atom.0 - last >= tol {
                    flush(&mut run, &mut out);
                }
            }
            run.push(atom);
        }
        flush(&mut run, &mut out);
        PointMeasure { atoms: out }
    }

    pub fn scaled(&self, k: f64) -> PointMeasure {
        PointMeasure {
            atoms: self.atoms.iter().map(|&(x, w)| (x, k * w)).collect(),
        }
    }

    /// Same number of atoms, locations within `loc_tol`, weights equal.
    pub fn approx_eq(&self, other: &PointMeasure, loc_tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self
                .atoms
                .iter()
                .zip(&other.atoms)
                .all(|(a, b)| (a.0 - b.0).abs() <= loc_tol && a.1 == b.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("location,weight\n");
        for (x, w) in &self.atoms {
            let _ = writeln!(s, "{x:e},{w}");
        }
        s
    }
}

/// Default cluster tolerance 1e−8·(1 + ‖A‖_F).
pub fn default_degeneracy_tol(a: &SymMatrix) -> f64 {
    1e-8 * (1.0 + a.frobenius())
}

/// σ_A = Σ mult(λ) δ_λ with eigenvalues closer than `degeneracy_tol` counted
/// as one multiple eigenvalue.
pub fn spectral_measure(a: &SymMatrix, degeneracy_tol: f64) -> PointMeasure {
    let atoms = eigenvalues(a).into_iter().map(|x| (x, 1.0)).collect();
    PointMeasure { atoms }.merged(degeneracy_tol)
}

/// Monte Carlo E_{GOE_m^v}[f(λ(A))] for f a symmetric function of the
/// (ascending) eigenvalues.
pub fn weyl_expectation_mc<F>(f: F, params: &EnsembleParams, n: usize, seed: Seed, exec: Exec) -> Result<EstimatorResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if params.u() != 0.0 {
        return Err(Error::InvalidParams("Weyl expectations are for the GOE (u = 0)".into()));
    }
    if n == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let (m, v) = (params.m(), params.v());
    let parts = exec.map_chunks(n, seed, |len, rng| {
        let mut acc = Moments::default();
        for _ in 0..len {
            acc.push(f(&eigenvalues(&goe_unchecked(m, v, rng))));
        }
        acc
    });
    Ok(EstimatorResult::from_moments(&Moments::reduce(parts), seed.0))
}

/// Q_{m,v}(λ) = ∏_{i<j}|λ_i − λ_j| · ∏ e^{−λ_i²/(4v)}.
pub fn weyl_weight(lambda: &[f64], v: f64) -> f64 {
    let mut vdm = 1.0;
    for i in 0..lambda.len() {
        for j in (i + 1)..lambda.len() {
            vdm *= (lambda[i] - lambda[j]).abs();
        }
    }
    vdm * (-lambda.iter().map(|x| x * x).sum::<f64>() / (4.0 * v)).exp()
}

/// Integration half-width 8√(2v) + |c| used for eigenvalue quadratures.
pub fn quadrature_half_width(v: f64, c: f64) -> f64 {
    8.0 * (2.0 * v).sqrt() + c.abs()
}

/// (1/Z_m(v)) ∫ f·Q_{m,v} over R^m by nested adaptive Gauss–Kronrod on the
/// ordered chamber λ_1 < … < λ_m (f must be symmetric). The normalizer is
/// itself a quadrature, so nothing here depends on the closed form of Z_m.
pub fn weyl_rhs_quadrature<F: Fn(&[f64]) -> f64>(f: F, m: usize, v: f64) -> Result<Quad> {
    if !(1..=3).contains(&m) {
        return Err(Error::Unsupported(format!("Weyl quadrature is limited to m ≤ 3, got {m}")));
    }
    if v.is_nan() || v <= 0.0 {
        return Err(Error::InvalidParams(format!("v must be positive, got {v}")));
    }
    let l = quadrature_half_width(v, 0.0);
    let tol = 1e-9;
    let z = integrate_ordered(m, -l, l, |x| weyl_weight(x, v), tol)?;
    let num = integrate_ordered(m, -l, l, |x| f(x) * weyl_weight(x, v), tol)?;
    let value = num.value / z.value;
    let error = num.error / z.value + value.abs() * z.error / z.value;
    Ok(Quad { value, error })
}

/// Z_m(v) from the closed form, exposed for callers who want the normalizer
/// directly.
pub fn weyl_normalizer(m: usize, v: f64) -> f64 {
    mehta_closed_form_scaled(m, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CorrelationEstimator {
    Histogram { bin_width: f64 },
    Kernel { bandwidth: f64 },
}

impl CorrelationEstimator {
    /// Histogram with bin width 0.05·√(2v)·√n clipped to [0.01, 0.2].
    pub fn default_for(n: usize, v: f64) -> Self {
        let w = (0.05 * (2.0 * v).sqrt() * (n as f64).sqrt()).clamp(0.01, 0.2);
        CorrelationEstimator::Histogram { bin_width: w }
    }

    fn width(&self) -> f64 {
        match *self {
            CorrelationEstimator::Histogram { bin_width } => bin_width,
            CorrelationEstimator::Kernel { bandwidth } => bandwidth,
        }
    }
}

/// Estimate of ρ_{n,v} on a grid with pointwise standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub estimator: CorrelationEstimator,
    pub n_samples: usize,
    /// Declared normalization tolerance on the trapezoid integral.
    pub normalization_eps: f64,
}

impl DensityEstimate {
    pub fn trapezoid_integral(&self) -> f64 {
        self.integrate_against(|_| 1.0)
    }

    /// Trapezoid rule for ∫ f ρ̂ over the grid.
    pub fn integrate_against(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (f(x[0]) * y[0] + f(x[1]) * y[1]))
            .sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.trapezoid_integral() - 1.0).abs() <= self.normalization_eps
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,rho,stderr\n");
        for ((x, r), e) in self.grid.iter().zip(&self.values).zip(&self.stderr) {
            let _ = writeln!(s, "{x:e},{r:e},{e:e}");
        }
        s
    }
}

/// Per-grid-point Σy and Σy² over samples, y being one sample's contribution.
#[derive(Clone)]
struct GridSums {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl GridSums {
    fn new(k: usize) -> Self {
        GridSums {
            s1: vec![0.0; k],
            s2: vec![0.0; k],
        }
    }
    fn merge(mut self, o: GridSums) -> GridSums {
        for (a, b) in self.s1.iter_mut().zip(o.s1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(o.s2) {
            *a += b;
        }
        self
    }
}

/// Estimates ρ_{n,v} from `n_samples` draws of GOE_n^v. Each sample's
/// normalized eigenvalue histogram (or kernel smoothing) is one observation,
/// so the standard errors account for eigenvalue repulsion within a sample.
pub fn one_point_correlation(
    n: usize,
    v: f64,
    n_samples: usize,
    estimator: CorrelationEstimator,
    seed: Seed,
    exec: Exec,
) -> Result<DensityEstimate> {
    EnsembleParams::goe(n, v)?;
    if n_samples < 1000 {
        return Err(Error::TooFewSamples { got: n_samples, need: 1000 });
    }
    let width = estimator.width();
    if width <= 0.0 || !width.is_finite() {
        return Err(Error::InvalidParams(format!("bin width / bandwidth must be positive, got {width}")));
    }
    let half = 2.0 * (n as f64 * v).sqrt() + 8.0 * (2.0 * v).sqrt();
    let nf = n as f64;

    let (grid, sums) = match estimator {
        CorrelationEstimator::Histogram { bin_width } => {
            let bins = (2.0 * half / bin_width).ceil() as usize;
            let lo = -(bins as f64) * bin_width / 2.0;
            let grid: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * bin_width).collect();
            let parts = exec.map_chunks(n_samples, seed, |len, rng| {
                let mut acc = GridSums::new(bins);
                let mut counts: Vec<(usize, f64)> = Vec::with_capacity(n);
                for _ in 0..len {
                    counts.clear();
                    for x in eigenvalues(&goe_unchecked(n, v, rng)) {
                        let k = ((x - lo) / bin_width).floor();
                        if k >= 0.0 && (k as usize) < bins {
                            let k = k as usize;
                            match counts.iter_mut().find(|c| c.0 == k) {
                                Some(c) => c.1 += 1.0,
                                None => counts.push((k, 1.0)),
                            }
                        }
                    }
                    for &(k, c) in &counts {
                        let y = c / (nf * bin_width);
                        acc.s1[k] += y;
                        acc.s2[k] += y * y;
                    }
                }
                acc
            });
            (grid, parts)
        }
        CorrelationEstimator::Kernel { bandwidth } => {
            let dx = (bandwidth / 2.0).min(0.05);
            let k_half = (half / dx).ceil() as usize;
            let grid: Vec<f64> = (0..=2 * k_half).map(|k| (k as f64 - k_half as f64) * dx).collect();
            let gl = grid.len();
            let reach = 8.0 * bandwidth;
            let norm = 1.0 / (nf * bandwidth * (2.0 * PI).sqrt());
            let parts = exec.map_chunks(n_samples, seed, |len, rng| {
                let mut acc = GridSums::new(gl);
                let mut y = vec![0.0; gl];
                let mut touched: Vec<usize> = Vec::new();
                for _ in 0..len {
                    for x in eigenvalues(&goe_unchecked(n, v, rng)) {
                        let lo = (((x - reach) / dx).ceil() + k_half as f64).max(0.0) as usize;
                        let hi = (((x + reach) / dx).floor() + k_half as f64).min((gl - 1) as f64);
                        if hi < 0.0 {
                            continue;
                        }
                        for g in lo..=hi as usize {
                            let u = (grid[g] - x) / bandwidth;
                            if y[g] == 0.0 {
                                touched.push(g);
                            }
                            y[g] += norm * (-0.5 * u * u).exp();
                        }
                    }
                    for &g in &touched {
                        acc.s1[g] += y[g];
                        acc.s2[g] += y[g] * y[g];
                        y[g] = 0.0;
                    }
                    touched.clear();
                }
                acc
            });
            (grid, parts)
        }
    };

    let k = grid.len();
    let total = tree_reduce(sums, GridSums::merge).unwrap_or_else(|| GridSums::new(k));
    let ns = n_samples as f64;
    let values: Vec<f64> = total.s1.iter().map(|s| s / ns).collect();
    let stderr = total
        .s2
        .iter()
        .zip(&values)
        .map(|(s2, mean)| (((s2 - ns * mean * mean) / (ns - 1.0)).max(0.0) / ns).sqrt())
        .collect();
    Ok(DensityEstimate {
        grid,
        values,
        stderr,
        estimator,
        n_samples,
        normalization_eps: 0.01,
    })
}

/// Eigenvalues of many GOE_n^v samples kept in memory, for pointwise kernel
/// estimates of ρ_{n,v} at a few locations.
#[derive(Clone, Debug)]
pub struct EigenSample {
    pub n: usize,
    pub v: f64,
    eigs: Vec<f64>,
}

impl EigenSample {
    pub fn draw(n: usize, v: f64, n_samples: usize, seed: Seed, exec: Exec) -> Result<Self> {
        EnsembleParams::goe(n, v)?;
        let parts = exec.map_chunks(n_samples, seed, |len, rng| {
            let mut out = Vec::with_capacity(len * n);
            for _ in 0..len {
                out.extend(eigenvalues(&goe_unchecked(n, v, rng)));
            }
            out
        });
        Ok(EigenSample {
            n,
            v,
            eigs: parts.concat(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.eigs.len() / self.n
    }

    fn per_sample(&self, f: impl Fn(f64) -> f64) -> Moments {
        let nf = self.n as f64;
        let parts: Vec<Moments> = self
            .eigs
            .chunks(self.n * crate::exec::CHUNK)
            .map(|chunk| {
                let mut m = Moments::default();
                for s in chunk.chunks(self.n) {
                    m.push(s.iter().map(|&x| f(x)).sum::<f64>() / nf);
                }
                m
            })
            .collect();
        Moments::reduce(parts)
    }

    /// Gaussian-kernel estimate of ρ_{n,v}(c) with bandwidth h.
    pub fn kde(&self, c: f64, h: f64) -> Moments {
        let norm = 1.0 / (h * (2.0 * PI).sqrt());
        self.per_sample(|x| {
            let u = (c - x) / h;
            norm * (-0.5 * u * u).exp()
        })
    }

    /// Kernel estimate of ρ''_{n,v}(c).
    pub fn kde_second_derivative(&self, c: f64, h: f64) -> Moments {
        let norm = 1.0 / (h * h * h * (2.0 * PI).sqrt());
        self.per_sample(|x| {
            let u = (c - x) / h;
            norm * (u * u - 1.0) * (-0.5 * u * u).exp()
        })
    }

    /// Empirical ∫_a^b ρ_{n,v}: mean fraction of eigenvalues in [a, b].
    pub fn mass_in(&self, a: f64, b: f64) -> Moments {
        self.per_sample(|x| if x >= a && x <= b { 1.0 } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_exchange_eigenvalues() {
        assert_eq!(eigenvalues(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])), vec![1.0, 2.0, 3.0]);
        let x = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], 0.0).unwrap();
        let ev = eigenvalues(&x);
        assert!((ev[0] + 1.0).abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_measure_multiplicities() {
        let s = spectral_measure(&SymMatrix::from_diagonal(&[1.0, 1.0, 2.0]), 1e-8);
        assert_eq!(s.atoms(), &[(1.0, 2.0), (2.0, 1.0)]);
        let s = spectral_measure(&SymMatrix::identity(3), 1e-8);
        assert_eq!(s.atoms(), &[(1.0, 3.0)]);
        let mut rng = Seed(5).stream(0);
        let a = goe_unchecked(6, 1.0, &mut rng);
        let s = spectral_measure(&a, 0.0);
        assert_eq!(s.atoms().len(), 6);
        assert!(s.atoms().iter().all(|a| a.1 == 1.0));
        assert_eq!(s.total_mass(), 6.0);
    }

    #[test]
    fn merging_preserves_mass() {
        let p = PointMeasure::new(vec![(0.0, 1.0), (1e-9, 2.0), (0.5, 0.5), (0.5 + 5e-10, 0.25), (3.0, 1.0)]).unwrap();
        let q = p.merged(1e-8);
        assert_eq!(q.atoms().len(), 3);
        assert_eq!(q.total_mass(), p.total_mass());
        assert!(PointMeasure::new(vec![(0.0, 0.0)]).is_err());
        assert!(PointMeasure::new(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn point_measure_csv() {
        let p = PointMeasure::new(vec![(2.0, 1.0), (1.0, 2.0)]).unwrap();
        assert_eq!(p.to_csv(), "location,weight\n1e0,2\n2e0,1\n");
    }

    #[test]
    fn constant_function_is_exact() {
        let p = EnsembleParams::goe(3, 1.0).unwrap();
        let r = weyl_expectation_mc(|_| 1.0, &p, 10_000, Seed(1), Exec::Parallel).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        assert!(weyl_expectation_mc(|_| 1.0, &p, 0, Seed(1), Exec::Parallel).is_err());
        let q = EnsembleParams::new(3, 1.0, 1.0).unwrap();
        assert!(weyl_expectation_mc(|_| 1.0, &q, 10, Seed(1), Exec::Parallel).is_err());
    }

    #[test]
    fn weyl_quadrature_values() {
        for (m, v) in [(1, 0.5), (2, 0.5), (2, 2.0), (3, 1.0)] {
            let q = weyl_rhs_quadrature(|_| 1.0, m, v).unwrap();
            assert!((q.value - 1.0).abs() < 1e-6, "m={m} v={v}");
        }
        // second moment of N(0, 2v) at v = 1/2
        let q = weyl_rhs_quadrature(|x| x[0] * x[0], 1, 0.5).unwrap();
        assert!((q.value - 1.0).abs() < 1e-6);
        // (1/m) E tr A² = (m·2v + m(m−1)·v)/m = 1.5 at m = 2, v = 1/2
        let q = weyl_rhs_quadrature(|x| (x[0] * x[0] + x[1] * x[1]) / 2.0, 2, 0.5).unwrap();
        assert!((q.value - 1.5).abs() < 1e-6, "{}", q.value);
        assert!(matches!(weyl_rhs_quadrature(|_| 1.0, 4, 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn correlation_rejects_bad_inputs() {
        let e = CorrelationEstimator::Histogram { bin_width: 0.0 };
        assert!(one_point_correlation(2, 0.5, 1000, e, Seed(0), Exec::Parallel).is_err());
        let e = CorrelationEstimator::default_for(2, 0.5);
        assert!(one_point_correlation(2, 0.5, 999, e, Seed(0), Exec::Parallel).is_err());
    }

    #[test]
    fn default_bin_width_is_clipped() {
        assert_eq!(CorrelationEstimator::default_for(1, 0.001), CorrelationEstimator::Histogram { bin_width: 0.01 });
        assert_eq!(CorrelationEstimator::default_for(100, 1.0), CorrelationEstimator::Histogram { bin_width: 0.2 });
    }
}
