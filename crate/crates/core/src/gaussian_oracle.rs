//! Exact Gaussian-state engine for bilinear dynamics.
//!
//! Quadratures are `x_k = a_k + a_k†` and `p_k = −i(a_k − a_k†)`, stored in
//! the order `(x₀, p₀, x₁, p₁, ..)`. The vacuum has unit variance in every
//! quadrature, so the covariance of a pure state has unit determinant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::effective_dynamics::BogoliubovMap;
use crate::error::{invalid, Error, Result};
use crate::fock_algebra::C64;

const UNCERTAINTY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Coefficients of `q_k(θ) = x_k cos θ − p_k sin θ` in the quadrature basis.
fn quadrature_row(n: usize, k: usize, theta: f64) -> DVector<f64> {
    let mut u = DVector::zeros(2 * n);
    u[2 * k] = theta.cos();
    u[2 * k + 1] = -theta.sin();
    u
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(invalid("mean", "length must be a positive even number"));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cov.nrows(),
            });
        }
        if (&cov - cov.transpose()).amax() > 1e-10 * cov.amax().max(1.0) {
            return Err(Error::InvalidState("covariance is not symmetric".into()));
        }
        let state = Self { mean, cov };
        let defect = state.uncertainty_defect();
        if defect < -UNCERTAINTY_TOL {
            return Err(Error::InvalidState(format!(
                "uncertainty relation violated (min eigenvalue {defect:e})"
            )));
        }
        Ok(state)
    }

    pub fn vacuum(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("modes", "need at least one mode"));
        }
        Ok(Self {
            mean: DVector::zeros(2 * modes),
            cov: DMatrix::identity(2 * modes, 2 * modes),
        })
    }

    /// Product of thermal states with the given mean occupations.
    pub fn thermal(nbars: &[f64]) -> Result<Self> {
        let mut state = Self::vacuum(nbars.len())?;
        for (k, &nbar) in nbars.iter().enumerate() {
            if !(nbar >= 0.0) || !nbar.is_finite() {
                return Err(invalid("nbar", format!("must be finite and >= 0, got {nbar}")));
            }
            state.cov[(2 * k, 2 * k)] = 2.0 * nbar + 1.0;
            state.cov[(2 * k + 1, 2 * k + 1)] = 2.0 * nbar + 1.0;
        }
        Ok(state)
    }

    /// Coherent state of every mode, `α_k`.
    pub fn coherent(alphas: &[C64]) -> Result<Self> {
        let mut state = Self::vacuum(alphas.len())?;
        for (k, a) in alphas.iter().enumerate() {
            state.mean[2 * k] = 2.0 * a.re;
            state.mean[2 * k + 1] = 2.0 * a.im;
        }
        Ok(state)
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest eigenvalue of `cov + iΩ`; non-negative for physical states.
    pub fn uncertainty_defect(&self) -> f64 {
        let n = self.cov.nrows();
        let mut m = self.cov.map(|v| C64::new(v, 0.0));
        for k in 0..n / 2 {
            m[(2 * k, 2 * k + 1)] += C64::new(0.0, 1.0);
            m[(2 * k + 1, 2 * k)] -= C64::new(0.0, 1.0);
        }
        SymmetricEigen::new(m).eigenvalues.min()
    }

    /// `1/√det(cov)`; one for pure states.
    pub fn purity(&self) -> f64 {
        1.0 / self.cov.determinant().sqrt()
    }

    pub fn apply_bogoliubov(&self, map: &BogoliubovMap) -> Result<Self> {
        if map.modes() != self.modes() {
            return Err(Error::DimensionMismatch {
                expected: self.modes(),
                found: map.modes(),
            });
        }
        map.check_symplectic()?;
        let s = map.quadrature_matrix();
        Ok(Self {
            mean: &s * &self.mean,
            cov: &s * &self.cov * s.transpose(),
        })
    }

    /// Damping of every mode toward vacuum at amplitude rate `κ_k`.
    pub fn cavity_decay(&self, rates: &[f64], t: f64) -> Result<Self> {
        if rates.len() != self.modes() {
            return Err(Error::DimensionMismatch {
                expected: self.modes(),
                found: rates.len(),
            });
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid("t", "must be finite and >= 0"));
        }
        if let Some(k) = rates.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
            return Err(invalid("kappa", format!("must be finite and >= 0, got {k}")));
        }
        let d = DVector::from_iterator(
            2 * rates.len(),
            rates.iter().flat_map(|k| {
                let e = (-k * t).exp();
                [e, e]
            }),
        );
        let dm = DMatrix::from_diagonal(&d);
        let mut cov = &dm * &self.cov * &dm;
        for i in 0..d.len() {
            cov[(i, i)] += 1.0 - d[i] * d[i];
        }
        Ok(Self {
            mean: self.mean.component_mul(&d),
            cov,
        })
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.modes() {
            return Err(invalid("mode", format!("index {k} out of range")));
        }
        Ok(())
    }

    /// Symmetrized second moment `½⟨{q_j(θ_j), q_k(θ_k)}⟩`.
    pub fn second_moment(&self, j: usize, theta_j: f64, k: usize, theta_k: f64) -> Result<f64> {
        self.check_mode(j)?;
        self.check_mode(k)?;
        let u = quadrature_row(self.modes(), j, theta_j);
        let v = quadrature_row(self.modes(), k, theta_k);
        Ok((u.transpose() * &self.cov * &v)[0] + u.dot(&self.mean) * v.dot(&self.mean))
    }

    /// `⟨a_k† a_k⟩`.
    pub fn occupation(&self, k: usize) -> Result<f64> {
        self.check_mode(k)?;
        let (x, p) = (2 * k, 2 * k + 1);
        let m2 = self.mean[x].powi(2) + self.mean[p].powi(2);
        Ok((self.cov[(x, x)] + self.cov[(p, p)] + m2 - 2.0) / 4.0)
    }

    /// `⟨a_j a_k⟩` for distinct modes.
    pub fn pair_amplitude(&self, j: usize, k: usize) -> Result<C64> {
        self.check_mode(j)?;
        self.check_mode(k)?;
        if j == k {
            return Err(invalid("mode", "pair amplitude needs two distinct modes"));
        }
        let second = |a: usize, b: usize| self.cov[(a, b)] + self.mean[a] * self.mean[b];
        let (xj, pj, xk, pk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        Ok(C64::new(
            second(xj, xk) - second(pj, pk),
            second(xj, pk) + second(pj, xk),
        ) / 4.0)
    }

    /// Variances of `q_j(θ_j) − q_k(θ_k)` and of the conjugate sum
    /// `q_j(θ_j + π/2) + q_k(θ_k + π/2)`.
    pub fn epr_variance_between(
        &self,
        j: usize,
        k: usize,
        theta_j: f64,
        theta_k: f64,
    ) -> Result<(f64, f64)> {
        self.check_mode(j)?;
        self.check_mode(k)?;
        let n = self.modes();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let var = |w: DVector<f64>| (w.transpose() * &self.cov * &w)[0];
        let minus = quadrature_row(n, j, theta_j) - quadrature_row(n, k, theta_k);
        let plus = quadrature_row(n, j, theta_j + half_pi) + quadrature_row(n, k, theta_k + half_pi);
        Ok((var(minus), var(plus)))
    }

    /// EPR variances of modes 0 and 1.
    pub fn epr_variance(&self, theta1: f64, theta2: f64) -> Result<(f64, f64)> {
        if self.modes() < 2 {
            return Err(invalid("modes", "EPR variance needs two modes"));
        }
        self.epr_variance_between(0, 1, theta1, theta2)
    }

    /// Marginal state of the listed modes, in the listed order.
    pub fn reduced(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(invalid("keep", "must list at least one mode"));
        }
        let mut idx = Vec::with_capacity(2 * keep.len());
        for &k in keep {
            self.check_mode(k)?;
            if idx.contains(&(2 * k)) {
                return Err(invalid("keep", format!("mode {k} listed twice")));
            }
            idx.extend([2 * k, 2 * k + 1]);
        }
        Ok(Self {
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]),
        })
    }

    /// Uhlmann fidelity between two single-mode Gaussian states.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        if self.modes() != 1 || other.modes() != 1 {
            return Err(invalid("modes", "fidelity is implemented for single modes"));
        }
        let sum = &self.cov + &other.cov;
        let big = sum.determinant();
        let small = ((self.cov.determinant() - 1.0) * (other.cov.determinant() - 1.0)).max(0.0);
        let d = &self.mean - &other.mean;
        let inv = sum
            .try_inverse()
            .ok_or_else(|| Error::InvalidState("singular covariance sum".into()))?;
        let exponent = -0.5 * (d.transpose() * inv * &d)[0];
        Ok(2.0 / ((big + small).sqrt() - small.sqrt()) * exponent.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective_dynamics::{half_period_map, scheme2_squeeze, Couplings};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn vacuum_moments() {
        let v = GaussianState::vacuum(2).unwrap();
        assert_eq!(v.covariance(), &DMatrix::identity(4, 4));
        for th in [0.0, 0.3, 1.7, -2.0] {
            assert_abs_diff_eq!(v.second_moment(0, th, 0, th).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(v.covariance().determinant(), 1.0, epsilon = 1e-15);
        assert_eq!(v.epr_variance(0.0, 0.0).unwrap(), (2.0, 2.0));
        assert!(GaussianState::vacuum(0).is_err());
    }

    #[test]
    fn half_period_moments() {
        let r: f64 = 1.1;
        let (_, map) = half_period_map(&Couplings::from_ratio(r)).unwrap();
        let s = GaussianState::vacuum(3).unwrap().apply_bogoliubov(&map).unwrap();
        let q11 = s.second_moment(0, 0.0, 0, 0.0).unwrap();
        let q12 = s.second_moment(0, 0.0, 1, 0.0).unwrap();
        let d = (r * r - 1.0).powi(2);
        assert_abs_diff_eq!(q11, ((1.0 + r * r).powi(2) + 4.0 * r * r) / d, epsilon = 1e-9);
        assert_abs_diff_eq!(q12, 4.0 * r * (1.0 + r * r) / d, epsilon = 1e-9);
        assert!((q11 - 220.50).abs() < 0.005);
        // 220.4989, quoted to two decimals by truncation
        assert!((q12 - 220.49).abs() < 0.01);
        assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-8);
        let (vx, vp) = s.epr_variance(0.0, 0.0).unwrap();
        let want = 2.0 * (r - 1.0).powi(2) / (r + 1.0).powi(2);
        assert_abs_diff_eq!(vx, want, epsilon = 1e-9);
        assert_abs_diff_eq!(vp, want, epsilon = 1e-9);
        let (wx, _) = s.epr_variance(FRAC_PI_2, -FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(wx, want, epsilon = 1e-9);
        // motion returns to vacuum
        let m = s.reduced(&[2]).unwrap();
        assert!((m.covariance() - DMatrix::identity(2, 2)).amax() < 1e-9);
    }

    #[test]
    fn decay() {
        let s = GaussianState::thermal(&[110.25]).unwrap();
        assert_abs_diff_eq!(s.second_moment(0, 0.0, 0, 0.0).unwrap(), 221.5, epsilon = 1e-12);
        let d = s.cavity_decay(&[1.0], 1.0).unwrap();
        let q = d.second_moment(0, 0.0, 0, 0.0).unwrap();
        assert_abs_diff_eq!(q, 220.5 * (-2.0f64).exp() + 1.0, epsilon = 1e-12);
        assert!((q - 30.84).abs() < 0.005);
        assert_eq!(s.cavity_decay(&[1.0], 0.0).unwrap(), s);
        let inf = s.cavity_decay(&[1.0], 100.0).unwrap();
        assert!((inf.covariance() - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(s.cavity_decay(&[1.0], -1.0).is_err());
        assert!(s.cavity_decay(&[-1.0], 1.0).is_err());
    }

    #[test]
    fn decay_composes() {
        let (_, map) = half_period_map(&Couplings::from_ratio(1.3)).unwrap();
        let s = GaussianState::vacuum(3).unwrap().apply_bogoliubov(&map).unwrap();
        let k = [0.7, 1.3, 0.0];
        let a = s.cavity_decay(&k, 0.4).unwrap().cavity_decay(&k, 0.9).unwrap();
        let b = s.cavity_decay(&k, 1.3).unwrap();
        assert!((a.covariance() - b.covariance()).amax() < 1e-12 * b.covariance().amax());
    }

    #[test]
    fn occupation_and_pair_amplitude() {
        let map = scheme2_squeeze(C64::from_polar(1.0, 0.4), 10f64.asinh()).unwrap();
        let s = GaussianState::vacuum(2).unwrap().apply_bogoliubov(&map).unwrap();
        assert_abs_diff_eq!(s.occupation(0).unwrap(), 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.occupation(1).unwrap(), 100.0, epsilon = 1e-9);
        // ⟨ab⟩ = cosh·sinh·e^{iφ}
        let want = C64::from_polar(101f64.sqrt() * 10.0, 0.4);
        assert_abs_diff_eq!((s.pair_amplitude(0, 1).unwrap() - want).norm(), 0.0, epsilon = 1e-8);
        let coh = GaussianState::coherent(&[C64::new(1.5, -0.5)]).unwrap();
        assert_abs_diff_eq!(coh.occupation(0).unwrap(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn single_mode_fidelity() {
        let a = GaussianState::thermal(&[0.5]).unwrap();
        assert_abs_diff_eq!(a.fidelity(&a).unwrap(), 1.0, epsilon = 1e-12);
        let v = GaussianState::vacuum(1).unwrap();
        // ⟨0|ρ_th|0⟩ = 1/(n̄+1)
        assert_abs_diff_eq!(v.fidelity(&a).unwrap(), 1.0 / 1.5, epsilon = 1e-12);
        let c1 = GaussianState::coherent(&[C64::new(0.3, 0.2)]).unwrap();
        let c2 = GaussianState::coherent(&[C64::new(-0.1, 0.5)]).unwrap();
        assert_abs_diff_eq!(c1.fidelity(&c2).unwrap(), (-0.25f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_unphysical() {
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5]));
        assert!(GaussianState::new(DVector::zeros(2), bad).is_err());
        let sq = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]));
        assert!(GaussianState::new(DVector::zeros(2), sq).is_ok());
        let _ = PI;
    }
}
