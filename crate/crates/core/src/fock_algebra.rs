//! Truncated multi-mode Fock space: ladder operators, tensor embedding,
//! density matrices and expectation values.
//!
//! Basis ordering: modes appear in declaration order and the Fock index of
//! the *last* mode varies fastest, so the global index of `|n_0, n_1, ..⟩` is
//! `Σ_k n_k · stride_k` with `stride_last = 1`. This is the ordering produced
//! by `kron(A_0, kron(A_1, ..))`.
//!
//! Operators are stored sparse (CSR); density matrices are dense.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

pub const DIPOLE: &str = "dipole";
pub const MOTION: &str = "motion";
pub const CAV1: &str = "cav1";
pub const CAV2: &str = "cav2";

/// Top-level Fock population above which a run is flagged truncation-unsafe.
pub const TRUNCATION_WARN: f64 = 1e-4;

const STATE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of truncated bosonic modes (plus an optional two-level dipole).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpace {
    modes: Vec<Mode>,
}

impl ModeSpace {
    pub fn new<S: Into<String>>(modes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut out: Vec<Mode> = Vec::new();
        for (label, dim) in modes {
            let label = label.into();
            if out.iter().any(|m| m.label == label) {
                return Err(Error::DuplicateMode(label));
            }
            if dim < 2 {
                return Err(invalid("dims", format!("mode `{label}` has dim {dim} < 2")));
            }
            if label == DIPOLE && dim != 2 {
                return Err(invalid("dims", format!("dipole mode must have dim 2, got {dim}")));
            }
            out.push(Mode { label, dim });
        }
        if out.is_empty() {
            return Err(invalid("dims", "mode space needs at least one mode"));
        }
        Ok(Self { modes: out })
    }

    pub fn single(label: &str, dim: usize) -> Result<Self> {
        Self::new([(label, dim)])
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.dim).collect()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.modes.iter().map(|m| m.label.as_str())
    }

    pub fn total_dim(&self) -> usize {
        self.modes.iter().map(|m| m.dim).product()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.modes.iter().any(|m| m.label == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.modes[self.position(label)?].dim)
    }

    /// Stride of each mode in the global index.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.modes.len()];
        for k in (0..self.modes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.modes[k + 1].dim;
        }
        strides
    }

    pub fn basis_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: occupations.len(),
            });
        }
        let mut idx = 0;
        for ((n, m), s) in occupations.iter().zip(&self.modes).zip(self.strides()) {
            if *n >= m.dim {
                return Err(invalid("occupation", format!("{n} >= dim {} of `{}`", m.dim, m.label)));
            }
            idx += n * s;
        }
        Ok(idx)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes.len()];
        for k in (0..self.modes.len()).rev() {
            occ[k] = index % self.modes[k].dim;
            index /= self.modes[k].dim;
        }
        occ
    }

    /// Occupation of mode `k` for every basis index.
    fn mode_occupation_table(&self, k: usize) -> Vec<usize> {
        let stride = self.strides()[k];
        let dim = self.modes[k].dim;
        (0..self.total_dim()).map(|i| (i / stride) % dim).collect()
    }

    /// Subspace made of the given labels, in this space's order.
    pub fn subspace(&self, keep: &[&str]) -> Result<Self> {
        for label in keep {
            self.position(label)?;
        }
        Ok(Self {
            modes: self
                .modes
                .iter()
                .filter(|m| keep.contains(&m.label.as_str()))
                .cloned()
                .collect(),
        })
    }
}

fn csr_from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> CsrMatrix<C64> {
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in triplets {
        if v != C64::new(0.0, 0.0) {
            coo.push(i, j, v);
        }
    }
    CsrMatrix::from(&coo)
}

fn csr_triplets(m: &CsrMatrix<C64>) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
    m.triplet_iter().map(|(i, j, v)| (i, j, *v))
}

/// Operator on a [`ModeSpace`], stored as a sparse matrix.
#[derive(Clone, Debug)]
pub struct Operator {
    space: ModeSpace,
    matrix: CsrMatrix<C64>,
}

impl Operator {
    pub fn from_csr(space: ModeSpace, matrix: CsrMatrix<C64>) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn from_dense(space: ModeSpace, m: &DMatrix<C64>) -> Result<Self> {
        let n = space.total_dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.nrows(),
            });
        }
        let triplets = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, m[(i, j)]));
        Ok(Self {
            matrix: csr_from_triplets(n, triplets),
            space,
        })
    }

    pub fn zero(space: &ModeSpace) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CsrMatrix::zeros(n, n),
        }
    }

    pub fn identity(space: &ModeSpace) -> Self {
        Self {
            space: space.clone(),
            matrix: CsrMatrix::identity(space.total_dim()),
        }
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn csr(&self) -> &CsrMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in csr_triplets(&self.matrix) {
            out[(i, j)] += v;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut t = self.matrix.transpose();
        t.values_mut().iter_mut().for_each(|v| *v = v.conj());
        Self {
            space: self.space.clone(),
            matrix: t,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut m = self.matrix.clone();
        m.values_mut().iter_mut().for_each(|v| *v *= c);
        Self {
            space: self.space.clone(),
            matrix: m,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `A - A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).norm()
    }

    pub fn trace(&self) -> C64 {
        csr_triplets(&self.matrix).filter(|(i, j, _)| i == j).map(|(_, _, v)| v).sum()
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix
            .get_entry(row, col)
            .map(|e| e.into_value())
            .unwrap_or_default()
    }

    /// `out = self · v`, allocation free.
    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        let offsets = self.matrix.row_offsets();
        let cols = self.matrix.col_indices();
        let vals = self.matrix.values();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * v[cols[k]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(v.as_slice(), out.as_mut_slice());
        out
    }

    /// `self · m` for a dense matrix.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim();
        let cols = m.ncols();
        let mut out = DMatrix::zeros(n, cols);
        let offsets = self.matrix.row_offsets();
        let idx = self.matrix.col_indices();
        let vals = self.matrix.values();
        for c in 0..cols {
            let src = m.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in offsets[i]..offsets[i + 1] {
                    acc += vals[k] * src[idx[k]];
                }
                dst[i] = acc;
            }
        }
        out
    }

    fn assert_same_space(&self, other: &Operator) {
        assert_eq!(self.space, other.space, "operator spaces differ");
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Kronecker embedding of a single-mode matrix (given as triplets) into `space`.
fn embed_triplets(
    space: &ModeSpace,
    mode: usize,
    single: impl Iterator<Item = (usize, usize, C64)> + Clone,
) -> CsrMatrix<C64> {
    let dims = space.dims();
    let stride = space.strides()[mode];
    let d = dims[mode];
    let left: usize = dims[..mode].iter().product();
    let n = space.total_dim();
    let mut triplets = Vec::new();
    for l in 0..left {
        for r in 0..stride {
            let base = l * d * stride + r;
            for (i, j, v) in single.clone() {
                triplets.push((base + i * stride, base + j * stride, v));
            }
        }
    }
    csr_from_triplets(n, triplets)
}

fn ladder_triplets(dim: usize) -> impl Iterator<Item = (usize, usize, C64)> + Clone {
    (1..dim).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0)))
}

/// Annihilation operator of `mode`, identity on every other mode.
pub fn annihilation(space: &ModeSpace, mode: &str) -> Result<Operator> {
    let k = space.position(mode)?;
    let d = space.modes()[k].dim;
    Ok(Operator {
        space: space.clone(),
        matrix: embed_triplets(space, k, ladder_triplets(d)),
    })
}

pub fn creation(space: &ModeSpace, mode: &str) -> Result<Operator> {
    Ok(annihilation(space, mode)?.adjoint())
}

pub fn number(space: &ModeSpace, mode: &str) -> Result<Operator> {
    let k = space.position(mode)?;
    let d = space.modes()[k].dim;
    let diag = (0..d).map(|n| (n, n, C64::new(n as f64, 0.0)));
    Ok(Operator {
        space: space.clone(),
        matrix: embed_triplets(space, k, diag),
    })
}

/// Embeds a single-mode operator into `space` at `mode`.
pub fn tensor_embed(op: &Operator, space: &ModeSpace, mode: &str) -> Result<Operator> {
    let k = space.position(mode)?;
    let d = space.modes()[k].dim;
    if op.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: op.dim(),
        });
    }
    let trip: Vec<_> = csr_triplets(&op.matrix).collect();
    Ok(Operator {
        space: space.clone(),
        matrix: embed_triplets(space, k, trip.into_iter()),
    })
}

/// Embeds a dense single-mode matrix into `space` at `mode`.
pub fn embed_dense(m: &DMatrix<C64>, space: &ModeSpace, mode: &str) -> Result<Operator> {
    let k = space.position(mode)?;
    let d = space.modes()[k].dim;
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.nrows(),
        });
    }
    let trip: Vec<_> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, m[(i, j)]))
        .filter(|(_, _, v)| v.norm() > 0.0)
        .collect();
    Ok(Operator {
        space: space.clone(),
        matrix: embed_triplets(space, k, trip.into_iter()),
    })
}

/// Population of the highest retained Fock level, per bosonic mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub max_top_population: Vec<(String, f64)>,
}

impl TruncationReport {
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.max_top_population
            .iter()
            .map(|(l, p)| (l.as_str(), *p))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn is_unsafe(&self) -> bool {
        self.worst().is_some_and(|(_, p)| p > TRUNCATION_WARN)
    }

    pub fn merge(&mut self, populations: &[(String, f64)]) {
        for (label, p) in populations {
            match self.max_top_population.iter_mut().find(|(l, _)| l == label) {
                Some((_, old)) => *old = old.max(*p),
                None => self.max_top_population.push((label.clone(), *p)),
            }
        }
    }
}

/// Top-level populations from a vector of basis-state populations.
fn top_populations(space: &ModeSpace, diag: impl Fn(usize) -> f64) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (k, m) in space.modes().iter().enumerate() {
        if m.label == DIPOLE {
            continue;
        }
        let table = space.mode_occupation_table(k);
        let p: f64 = table
            .iter()
            .enumerate()
            .filter(|(_, n)| **n == m.dim - 1)
            .map(|(i, _)| diag(i))
            .sum();
        out.push((m.label.clone(), p));
    }
    out
}

/// Normalized state vector.
#[derive(Clone, Debug)]
pub struct PureState {
    space: ModeSpace,
    amplitudes: DVector<C64>,
}

impl PureState {
    pub fn new(space: ModeSpace, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("norm {norm}")));
        }
        Ok(Self { space, amplitudes })
    }

    pub(crate) fn from_raw(space: ModeSpace, amplitudes: DVector<C64>) -> Self {
        Self { space, amplitudes }
    }

    pub fn basis(space: &ModeSpace, occupations: &[usize]) -> Result<Self> {
        let mut v = DVector::zeros(space.total_dim());
        v[space.basis_index(occupations)?] = C64::new(1.0, 0.0);
        Ok(Self {
            space: space.clone(),
            amplitudes: v,
        })
    }

    pub fn vacuum(space: &ModeSpace) -> Self {
        let mut v = DVector::zeros(space.total_dim());
        v[0] = C64::new(1.0, 0.0);
        Self {
            space: space.clone(),
            amplitudes: v,
        }
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.amplitudes.dotc(&op.apply(&self.amplitudes)))
    }

    pub fn top_level_populations(&self) -> Vec<(String, f64)> {
        top_populations(&self.space, |i| self.amplitudes[i].norm_sqr())
    }

    pub fn to_density(&self) -> DensityState {
        DensityState {
            space: self.space.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    /// Reduced density matrix on `keep`.
    pub fn reduced(&self, keep: &[&str]) -> Result<DensityState> {
        let (sub, table) = trace_table(&self.space, keep)?;
        let k = sub.total_dim();
        let mut m = DMatrix::zeros(k, k);
        for rows in &table {
            for i in 0..k {
                let a = self.amplitudes[rows[i]];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..k {
                    m[(i, j)] += a * self.amplitudes[rows[j]].conj();
                }
            }
        }
        Ok(DensityState { space: sub, matrix: m })
    }
}

/// For each traced-out configuration, the global indices of the kept basis.
fn trace_table(space: &ModeSpace, keep: &[&str]) -> Result<(ModeSpace, Vec<Vec<usize>>)> {
    let sub = space.subspace(keep)?;
    let kept: Vec<usize> = (0..space.modes().len())
        .filter(|k| keep.contains(&space.modes()[*k].label.as_str()))
        .collect();
    let traced: Vec<usize> = (0..space.modes().len()).filter(|k| !kept.contains(k)).collect();
    let traced_space_dims: Vec<usize> = traced.iter().map(|k| space.modes()[*k].dim).collect();
    let n_traced: usize = traced_space_dims.iter().product();
    let mut table = Vec::with_capacity(n_traced);
    let mut occ = vec![0usize; space.modes().len()];
    for t in 0..n_traced {
        let mut rem = t;
        for (pos, k) in traced.iter().enumerate().rev() {
            occ[*k] = rem % traced_space_dims[pos];
            rem /= traced_space_dims[pos];
        }
        let mut rows = Vec::with_capacity(sub.total_dim());
        for s in 0..sub.total_dim() {
            let sub_occ = sub.occupations(s);
            for (pos, k) in kept.iter().enumerate() {
                occ[*k] = sub_occ[pos];
            }
            rows.push(space.basis_index(&occ)?);
        }
        table.push(rows);
    }
    Ok((sub, table))
}

/// Density matrix on a [`ModeSpace`].
#[derive(Clone, Debug)]
pub struct DensityState {
    space: ModeSpace,
    matrix: DMatrix<C64>,
}

impl DensityState {
    /// Validates trace, Hermiticity and positivity.
    pub fn new(space: ModeSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        let state = Self { space, matrix };
        state.check()?;
        Ok(state)
    }

    pub(crate) fn from_raw(space: ModeSpace, matrix: DMatrix<C64>) -> Self {
        Self { space, matrix }
    }

    pub fn check(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let herm = (&self.matrix - self.matrix.adjoint()).norm();
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!("hermiticity defect {herm:e}")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn vacuum(space: &ModeSpace) -> Self {
        PureState::vacuum(space).to_density()
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }

    pub fn top_level_populations(&self) -> Vec<(String, f64)> {
        top_populations(&self.space, |i| self.matrix[(i, i)].re)
    }

    pub fn reduced(&self, keep: &[&str]) -> Result<DensityState> {
        let (sub, table) = trace_table(&self.space, keep)?;
        let k = sub.total_dim();
        let mut m = DMatrix::zeros(k, k);
        for rows in &table {
            for i in 0..k {
                for j in 0..k {
                    m[(i, j)] += self.matrix[(rows[i], rows[j])];
                }
            }
        }
        Ok(DensityState { space: sub, matrix: m })
    }

    /// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
    pub fn fidelity(&self, other: &DensityState) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        let sqrt_rho = hermitian_sqrt(&self.matrix);
        let inner = &sqrt_rho * &other.matrix * &sqrt_rho;
        let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
        let s: f64 = inner
            .symmetric_eigenvalues()
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .sum();
        Ok(s * s)
    }

    pub fn fidelity_with_pure(&self, psi: &PureState) -> Result<f64> {
        if self.space != psi.space {
            return Err(Error::SpaceMismatch);
        }
        let v = psi.amplitudes();
        Ok(v.dotc(&(&self.matrix * v)).re)
    }
}

fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// `tr(ρ O)`.
pub fn expectation(state: &DensityState, op: &Operator) -> Result<C64> {
    if state.space() != op.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(csr_triplets(op.csr())
        .map(|(i, j, v)| v * state.matrix[(j, i)])
        .sum())
}

/// Truncated Gibbs state of `mode` with mean occupation `nbar`, all other
/// modes in vacuum. Populations are renormalized on the retained levels.
pub fn thermal_state(space: &ModeSpace, mode: &str, nbar: f64) -> Result<DensityState> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(invalid("nbar", format!("must be finite and >= 0, got {nbar}")));
    }
    let k = space.position(mode)?;
    let d = space.modes()[k].dim;
    let ratio = nbar / (1.0 + nbar);
    let mut pops: Vec<f64> = (0..d).map(|n| ratio.powi(n as i32)).collect();
    let z: f64 = pops.iter().sum();
    pops.iter_mut().for_each(|p| *p /= z);
    let n = space.total_dim();
    let mut m = DMatrix::zeros(n, n);
    let mut occ = vec![0; space.modes().len()];
    for (level, p) in pops.iter().enumerate() {
        occ[k] = level;
        let i = space.basis_index(&occ)?;
        m[(i, i)] = C64::new(*p, 0.0);
    }
    Ok(DensityState {
        space: space.clone(),
        matrix: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one(dim: usize) -> ModeSpace {
        ModeSpace::single("a", dim).unwrap()
    }

    #[test]
    fn ladder_on_fock_states() {
        let s = one(3);
        let a = annihilation(&s, "a").unwrap();
        let out = a.apply(PureState::basis(&s, &[1]).unwrap().amplitudes());
        assert_abs_diff_eq!(out[0].re, 1.0, epsilon = 1e-15);
        let out = a.apply(PureState::basis(&s, &[2]).unwrap().amplitudes());
        assert_abs_diff_eq!(out[1].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(out[2].norm(), 0.0);
    }

    #[test]
    fn truncated_commutator() {
        let s = one(20);
        let a = annihilation(&s, "a").unwrap();
        let c = a.commutator(&a.adjoint()).to_dense();
        for n in 0..19 {
            assert_abs_diff_eq!(c[(n, n)].re, 1.0, epsilon = 1e-12);
        }
        // top level carries the truncation defect -(dim - 1)
        assert_abs_diff_eq!(c[(19, 19)].re, -19.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert!(matches!(annihilation(&one(3), "b"), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn dipole_must_be_two_level() {
        assert!(ModeSpace::new([(DIPOLE, 3)]).is_err());
        assert!(ModeSpace::new([("x", 2), ("x", 3)]).is_err());
        assert!(ModeSpace::new([("x", 1)]).is_err());
    }

    #[test]
    fn basis_ordering_last_mode_fastest() {
        let s = ModeSpace::new([("a", 2), ("b", 3)]).unwrap();
        assert_eq!(s.basis_index(&[0, 1]).unwrap(), 1);
        assert_eq!(s.basis_index(&[1, 0]).unwrap(), 3);
        assert_eq!(s.occupations(5), vec![1, 2]);
        // matches kron(A, I) for an operator on the first mode
        let a = annihilation(&s, "a").unwrap().to_dense();
        let single = annihilation(&one(2), "a").unwrap().to_dense();
        let kron = single.kronecker(&DMatrix::<C64>::identity(3, 3));
        assert_abs_diff_eq!((a - kron).norm(), 0.0);
    }

    #[test]
    fn embed_identity_and_trace() {
        let s = ModeSpace::new([("a", 3), ("b", 4), ("c", 2)]).unwrap();
        let id = tensor_embed(&Operator::identity(&one(4)), &s, "b").unwrap();
        assert_abs_diff_eq!((&id - &Operator::identity(&s)).norm(), 0.0);

        let n = number(&one(4), "a").unwrap();
        let embedded = tensor_embed(&n, &s, "b").unwrap();
        assert_abs_diff_eq!(embedded.trace().re, n.trace().re * 6.0, epsilon = 1e-12);

        let wrong = Operator::identity(&one(3));
        assert!(matches!(
            tensor_embed(&wrong, &s, "b"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn disjoint_modes_commute() {
        let s = ModeSpace::new([("a", 4), ("b", 5)]).unwrap();
        let a = annihilation(&s, "a").unwrap();
        let b = annihilation(&s, "b").unwrap();
        assert!(a.commutator(&b).norm() < 1e-12);
        assert!(a.commutator(&b.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn number_expectations() {
        let s = one(5);
        let n = number(&s, "a").unwrap();
        assert_abs_diff_eq!(expectation(&DensityState::vacuum(&s), &n).unwrap().re, 0.0);
        let one_photon = PureState::basis(&s, &[1]).unwrap().to_density();
        assert_abs_diff_eq!(expectation(&one_photon, &n).unwrap().re, 1.0);
    }

    #[test]
    fn thermal_state_moments() {
        // truncated geometric series: Σ n p_n with p_n ∝ (1/3)^n
        let s = one(30);
        let rho = thermal_state(&s, "a", 0.5).unwrap();
        rho.check().unwrap();
        let n = expectation(&rho, &number(&s, "a").unwrap()).unwrap().re;
        assert!((n - 0.5).abs() < 1e-6);

        let s = one(40);
        let rho = thermal_state(&s, "a", 1.0).unwrap();
        assert_abs_diff_eq!(rho.populations()[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(rho.purity(), 1.0 / 3.0, epsilon = 1e-10);

        let vac = thermal_state(&s, "a", 0.0).unwrap();
        assert_abs_diff_eq!(vac.populations()[0], 1.0);
        assert!(thermal_state(&s, "a", -0.1).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let s = ModeSpace::new([("a", 3), ("b", 4)]).unwrap();
        let psi = PureState::basis(&s, &[2, 1]).unwrap();
        let red = psi.reduced(&["b"]).unwrap();
        assert_abs_diff_eq!(red.populations()[1], 1.0);
        let red2 = psi.to_density().reduced(&["a"]).unwrap();
        assert_abs_diff_eq!(red2.populations()[2], 1.0);
        assert_abs_diff_eq!(red2.purity(), 1.0);
    }

    #[test]
    fn fidelity_of_identical_thermal_states() {
        let s = one(12);
        let rho = thermal_state(&s, "a", 0.7).unwrap();
        assert_abs_diff_eq!(rho.fidelity(&rho).unwrap(), 1.0, epsilon = 1e-9);
        let vac = DensityState::vacuum(&s);
        assert_abs_diff_eq!(rho.fidelity(&vac).unwrap(), rho.populations()[0], epsilon = 1e-9);
    }

    #[test]
    fn invalid_density_is_rejected() {
        let s = one(2);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.5, 0.0), C64::new(-0.5, 0.0)]));
        assert!(DensityState::new(s, m).is_err());
    }
}
