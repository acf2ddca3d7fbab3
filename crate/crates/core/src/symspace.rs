//! The Euclidean space Sym(R^m) of real symmetric matrices with inner product
//! tr(AB), its ℓ- and ω-coordinates, and the invariant Gaussian ensembles
//! S_m^{u,v} (GOE_m^v when u = 0).

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Exec, Seed};
use crate::stats::{z_score, Moments, MomentsVec};

/// Real symmetric m×m matrix in packed upper-triangle storage (row-major).
/// Reading `(i, j)` and `(j, i)` hits the same slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    m: usize,
    upper: Vec<f64>,
}

#[inline]
fn packed_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * m - i + 1) / 2 + (j - i)
}

/// Number of independent entries, m(m+1)/2.
pub fn sym_dim(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Index pairs (i, j), i ≤ j, in the storage order of the coordinate vectors.
pub fn coord_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
}

impl SymMatrix {
    pub fn zeros(m: usize) -> Self {
        SymMatrix {
            m,
            upper: vec![0.0; sym_dim(m)],
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::from_diagonal(&vec![1.0; m])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut a = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            a.set(i, i, x);
        }
        a
    }

    /// Builds from a function evaluated on the upper triangle only.
    pub fn from_upper_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let upper = coord_pairs(m).into_iter().map(|(i, j)| f(i, j)).collect();
        SymMatrix { m, upper }
    }

    /// Builds from row-major entries, checking symmetry to `tol`.
    #[allow(clippy::needless_range_loop)]
    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Parse("empty matrix".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Parse(format!("row {} has {} entries, expected {m}", bad + 1, rows[bad].len())));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(Error::Parse(format!(
                        "matrix not symmetric at ({}, {}): {} vs {}",
                        i + 1,
                        j + 1,
                        rows[i][j],
                        rows[j][i]
                    )));
                }
            }
        }
        Ok(Self::from_upper_fn(m, |i, j| rows[i][j]))
    }

    /// Symmetric part of a dense matrix.
    pub fn from_dense_symmetrized(a: &DMatrix<f64>) -> Self {
        Self::from_upper_fn(a.nrows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.m, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.upper[packed_index(self.m, i, j)] = x;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.get(i, i)).sum()
    }

    /// tr(AB).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.m, other.m);
        let mut s = 0.0;
        for (k, (i, j)) in coord_pairs(self.m).into_iter().enumerate() {
            let w = if i == j { 1.0 } else { 2.0 };
            s += w * self.upper[k] * other.upper[k];
        }
        s
    }

    /// tr(A²) summed over the full square of entries.
    pub fn trace_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                s += self.get(i, j) * self.get(i, j);
            }
        }
        s
    }

    /// ℓ_ij(A) = a_ij, i ≤ j, in `coord_pairs` order.
    pub fn ell_coords(&self) -> Vec<f64> {
        self.upper.clone()
    }

    /// ω_ii = a_ii, ω_ij = √2·a_ij (i < j): orthonormal coordinates for tr(AB).
    pub fn omega_coords(&self) -> Vec<f64> {
        coord_pairs(self.m)
            .into_iter()
            .zip(&self.upper)
            .map(|((i, j), &a)| if i == j { a } else { SQRT_2 * a })
            .collect()
    }

    pub fn from_ell(m: usize, ell: &[f64]) -> Self {
        assert_eq!(ell.len(), sym_dim(m));
        SymMatrix { m, upper: ell.to_vec() }
    }

    pub fn from_omega(m: usize, omega: &[f64]) -> Self {
        assert_eq!(omega.len(), sym_dim(m));
        let upper = coord_pairs(m)
            .into_iter()
            .zip(omega)
            .map(|((i, j), &w)| if i == j { w } else { w / SQRT_2 })
            .collect();
        SymMatrix { m, upper }
    }

    /// A − c·1.
    pub fn shifted(&self, c: f64) -> Self {
        let mut a = self.clone();
        for i in 0..self.m {
            a.set(i, i, a.get(i, i) - c);
        }
        a
    }

    /// Qᵀ A Q for a square (orthogonal) Q.
    pub fn conjugate(&self, q: &DMatrix<f64>) -> Self {
        Self::from_dense_symmetrized(&(q.transpose() * self.to_dense() * q))
    }

    pub fn frobenius(&self) -> f64 {
        self.trace_sq().sqrt()
    }

    /// The lower-right block (a_ij)_{1 ≤ i,j ≤ m-1}, dropping row/column 0.
    pub fn lower_block(&self) -> Self {
        Self::from_upper_fn(self.m - 1, |i, j| self.get(i + 1, j + 1))
    }
}

/// Parameters (m, u, v) of the invariant Gaussian measure Γ_{u,v} on Sym(R^m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    m: usize,
    u: f64,
    v: f64,
}

impl EnsembleParams {
    /// Requires m ≥ 1, v > 0 and m·u + 2v > 0.
    pub fn new(m: usize, u: f64, v: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("dimension m must be positive".into()));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParams(format!("v must be positive, got {v}")));
        }
        if m as f64 * u + 2.0 * v <= 0.0 || !u.is_finite() {
            return Err(Error::InvalidParams(format!("need m·u + 2v > 0, got m={m}, u={u}, v={v}")));
        }
        Ok(EnsembleParams { m, u, v })
    }

    pub fn goe(m: usize, v: f64) -> Result<Self> {
        Self::new(m, 0.0, v)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn u(&self) -> f64 {
        self.u
    }
    pub fn v(&self) -> f64 {
        self.v
    }

    /// E[ℓ_ij ℓ_kl] = u δ_ij δ_kl + v (δ_ik δ_jl + δ_il δ_jk).
    pub fn ell_covariance(&self, (i, j): (usize, usize), (k, l): (usize, usize)) -> f64 {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        self.u * d(i, j) * d(k, l) + self.v * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// A ∈ GOE_m^v: independent entries, Var a_ii = 2v, Var a_ij = v (i < j).
pub fn sample_goe<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R) -> Result<SymMatrix> {
    if params.u != 0.0 {
        return Err(Error::InvalidParams(format!("sample_goe needs u = 0, got {}", params.u)));
    }
    Ok(goe_unchecked(params.m, params.v, rng))
}

pub(crate) fn goe_unchecked<R: Rng + ?Sized>(m: usize, v: f64, rng: &mut R) -> SymMatrix {
    let sd_diag = (2.0 * v).sqrt();
    let sd_off = v.sqrt();
    SymMatrix::from_upper_fn(m, |i, j| {
        let sd = if i == j { sd_diag } else { sd_off };
        sd * normal(rng)
    })
}

/// A ∈ S_m^{u,v}. For u ≥ 0 this is B + X·1 with B ∈ GOE_m^v and X ~ N(0, u)
/// independent. For u < 0 the diagonal is drawn from N(0, uJ + 2vI) through the
/// square root √(mu+2v)·P + √(2v)·(I − P), P the projector onto constants.
pub fn sample_suv<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R) -> SymMatrix {
    let (m, u, v) = (params.m, params.u, params.v);
    let mut a = goe_unchecked(m, v, rng);
    if u > 0.0 {
        let x = u.sqrt() * normal(rng);
        for i in 0..m {
            a.set(i, i, a.get(i, i) + x);
        }
    } else if u < 0.0 {
        // a_ii currently equals √(2v) z_i; add (√(mu+2v) − √(2v)) · mean(z).
        let sd = (2.0 * v).sqrt();
        let mean_z = (0..m).map(|i| a.get(i, i)).sum::<f64>() / (m as f64 * sd);
        let k = (m as f64 * u + 2.0 * v).sqrt() - sd;
        for i in 0..m {
            a.set(i, i, a.get(i, i) + k * mean_z);
        }
    }
    a
}

/// log of the GOE_m^v density with respect to ∏_{i≤j} dω_ij:
/// −(m(m+1)/4)·log(4πv) − tr(A²)/(4v).
pub fn goe_log_density(a: &SymMatrix, v: f64) -> Result<f64> {
    if v.is_nan() || v <= 0.0 {
        return Err(Error::InvalidParams(format!("v must be positive, got {v}")));
    }
    let m = a.dim() as f64;
    Ok(-(m * (m + 1.0) / 4.0) * (4.0 * PI * v).ln() - a.trace_sq() / (4.0 * v))
}

/// One entry of the second-moment audit of the ℓ-coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub first: (usize, usize),
    pub second: (usize, usize),
    pub empirical: f64,
    pub std_error: f64,
    pub reference: f64,
    pub z_score: Option<f64>,
}

impl AuditEntry {
    pub fn pass(&self) -> bool {
        self.z_score.is_some_and(|z| z.abs() <= crate::stats::Z_THRESHOLD)
    }
}

/// Empirical E[ℓ_ab ℓ_cd] for every unordered pair of coordinates versus the
/// analytic covariance, each with its own standard error.
pub fn covariance_audit(params: &EnsembleParams, n: usize, seed: Seed, exec: Exec) -> Vec<AuditEntry> {
    let pairs = coord_pairs(params.m);
    let d = pairs.len();
    let stats = d * (d + 1) / 2;
    let parts = exec.map_chunks(n, seed, |len, rng| {
        let mut acc = MomentsVec::new(stats);
        let mut prods = vec![0.0; stats];
        for _ in 0..len {
            let ell = sample_suv(params, rng).ell_coords();
            let mut k = 0;
            for a in 0..d {
                for b in a..d {
                    prods[k] = ell[a] * ell[b];
                    k += 1;
                }
            }
            acc.push(&prods);
        }
        acc
    });
    let acc = MomentsVec::reduce(parts, stats);
    let mut out = Vec::with_capacity(stats);
    let mut k = 0;
    for a in 0..d {
        for b in a..d {
            let m: &Moments = &acc.0[k];
            let reference = params.ell_covariance(pairs[a], pairs[b]);
            out.push(AuditEntry {
                first: pairs[a],
                second: pairs[b],
                empirical: m.mean,
                std_error: m.std_error(),
                reference,
                z_score: z_score(m.mean, reference, m.std_error()),
            });
            k += 1;
        }
    }
    out
}

/// Parses the plain-text matrix format: first line `m`, then m rows of m
/// whitespace-separated numbers. Symmetry is checked to 1e−9.
pub fn parse_matrix(text: &str) -> Result<SymMatrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("missing dimension line".into()))?;
    let m: usize = header
        .parse()
        .map_err(|_| Error::Parse(format!("bad dimension line `{header}`")))?;
    let rows = lines
        .take(m)
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad entry `{t}`"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.len() != m {
        return Err(Error::Parse(format!("expected {m} rows, found {}", rows.len())));
    }
    SymMatrix::from_rows(&rows, 1e-9)
}

pub fn format_matrix(a: &SymMatrix) -> String {
    let mut s = format!("{}\n", a.dim());
    for i in 0..a.dim() {
        let row: Vec<String> = (0..a.dim()).map(|j| format!("{:e}", a.get(i, j))).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}
