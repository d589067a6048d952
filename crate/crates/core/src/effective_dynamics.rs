//! Adiabatically eliminated dynamics: coupling constants, Heisenberg
//! propagators (Bogoliubov maps) for the bichromatic scheme, the two-mode
//! squeezed output state, and the squeeze / swap pulses of the
//! temporally-separated scheme.
//!
//! Maps act on the operator vector `(a₁, a₁†, a₂, a₂†, b, b†)` for the
//! bichromatic scheme and `(a, a†, b, b†)` for the single-mode scheme:
//! `v(t) = M v(0)` in the Heisenberg picture.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock_algebra::{annihilation, ModeSpace, Operator, C64, CAV1, CAV2, MOTION};
use crate::physical_model::SystemParams;

const SYMPLECTIC_TOL: f64 = 1e-10;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Effective two-mode-squeezing (χ₁) and beam-splitter (χ₂) couplings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub chi1: C64,
    pub chi2: C64,
}

impl Couplings {
    pub fn new(chi1: C64, chi2: C64) -> Self {
        Self { chi1, chi2 }
    }

    /// Real couplings `χ₁ = 1`, `χ₂ = r`.
    pub fn from_ratio(r: f64) -> Self {
        Self::new(c(1.0), c(r))
    }

    /// `r = |χ₂/χ₁|`, undefined when χ₁ vanishes.
    pub fn ratio(&self) -> Option<f64> {
        (self.chi1.norm() > 0.0).then(|| self.chi2.norm() / self.chi1.norm())
    }

    /// `Θ = √(|χ₂|² − |χ₁|²)` in the periodic regime.
    pub fn theta(&self) -> Option<f64> {
        let d = self.chi2.norm_sqr() - self.chi1.norm_sqr();
        (d > 0.0).then(|| d.sqrt())
    }

    /// `φ = arg χ₁ + arg χ₂`, wrapped to `(−π, π]`.
    pub fn phase(&self) -> f64 {
        wrap_phase(self.chi1.arg() + self.chi2.arg())
    }

    pub fn is_periodic(&self) -> bool {
        self.theta().is_some() && self.chi1.norm() > 0.0
    }

    fn periodic_theta(&self) -> Result<f64> {
        match (self.theta(), self.ratio()) {
            (Some(theta), Some(_)) => Ok(theta),
            (_, r) => Err(Error::NotPeriodic {
                r: r.unwrap_or(f64::NAN),
            }),
        }
    }

    /// Half period `T_π = π/Θ`.
    pub fn half_period(&self) -> Result<f64> {
        Ok(PI / self.periodic_theta()?)
    }

    /// Mean photon number per cavity mode at `T_π`, from vacuum.
    pub fn mean_photon_number(&self) -> Result<f64> {
        let theta = self.periodic_theta()?;
        Ok(4.0 * self.chi1.norm_sqr() * self.chi2.norm_sqr() / theta.powi(4))
    }
}

/// χ₁ and χ₂ for the full parameter set, including the γ/2 widths.
pub fn coupling_constants(params: &SystemParams) -> Result<Couplings> {
    params.validate()?;
    let guard = 1e-9 * params.nu;
    let half_gamma = C64::new(0.0, params.gamma / 2.0);
    let d_minus = c(params.delta - params.nu) + half_gamma;
    let d_plus = c(params.delta + params.nu) + half_gamma;
    let d_zero = c(params.delta) + half_gamma;
    for (which, d) in [("Δ−ν", d_minus), ("Δ+ν", d_plus), ("Δ", d_zero)] {
        if d.norm() < guard {
            return Err(Error::SingularDenominator {
                which,
                value: d.norm(),
            });
        }
    }
    let chi = |j: usize, d_side: C64| {
        // cos φ tan φ written as sin φ so the antinode case stays finite
        params.g[j].conj()
            * (params.eta * params.omega)
            * (c(params.phi[j].cos() * params.theta_l.cos()) / d_side
                + C64::new(0.0, params.phi[j].sin() * params.theta_c.cos()) / d_zero)
    };
    Ok(Couplings::new(chi(0, d_minus), chi(1, d_plus)))
}

/// Heisenberg-picture linear map on mode operators.
#[derive(Clone, Debug, PartialEq)]
pub struct BogoliubovMap {
    labels: Vec<String>,
    matrix: DMatrix<C64>,
    time: f64,
}

impl BogoliubovMap {
    pub fn identity(labels: &[&str]) -> Self {
        let n = 2 * labels.len();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            matrix: DMatrix::identity(n, n),
            time: 0.0,
        }
    }

    /// Builds a map from the annihilation rows only; the creation rows are
    /// filled in by conjugation.
    fn from_annihilation_rows(labels: &[&str], rows: Vec<Vec<C64>>, time: f64) -> Self {
        let n = 2 * labels.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, row) in rows.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                m[(2 * k, col)] = *v;
                m[(2 * k + 1, col ^ 1)] = v.conj();
            }
        }
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            matrix: m,
            time,
        }
    }

    /// Wraps an explicit matrix on `(v_0, v_0†, v_1, v_1†, ..)`; use
    /// [`BogoliubovMap::check_symplectic`] before trusting it.
    pub fn from_matrix(labels: &[&str], matrix: DMatrix<C64>, time: f64) -> Result<Self> {
        let n = 2 * labels.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        Ok(Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            matrix,
            time,
        })
    }

    /// Phase rotation `v_k → e^{iφ} v_k` of one mode.
    pub fn phase_rotation(labels: &[&str], mode: usize, phi: f64) -> Result<Self> {
        if mode >= labels.len() {
            return Err(invalid("mode", format!("index {mode} out of range")));
        }
        let mut m = DMatrix::identity(2 * labels.len(), 2 * labels.len());
        m[(2 * mode, 2 * mode)] = C64::from_polar(1.0, phi);
        m[(2 * mode + 1, 2 * mode + 1)] = C64::from_polar(1.0, -phi);
        Self::from_matrix(labels, m, 0.0)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn modes(&self) -> usize {
        self.labels.len()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Coefficient of `v_col(0)` in `v_row(t)`.
    pub fn coefficient(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// `diag(+1, −1, +1, −1, ..)`.
    pub fn metric(modes: usize) -> DMatrix<C64> {
        DMatrix::from_fn(2 * modes, 2 * modes, |i, j| {
            if i != j {
                c(0.0)
            } else if i % 2 == 0 {
                c(1.0)
            } else {
                c(-1.0)
            }
        })
    }

    /// `‖M J M† − J‖` (max-abs entry).
    pub fn symplectic_defect(&self) -> f64 {
        let j = Self::metric(self.modes());
        (&self.matrix * &j * self.matrix.adjoint() - j).map(|v| v.norm()).max()
    }

    /// Deviation of the creation rows from the conjugated annihilation rows.
    pub fn conjugation_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for k in 0..n / 2 {
            for col in 0..n {
                let d = self.matrix[(2 * k + 1, col ^ 1)] - self.matrix[(2 * k, col)].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn check_symplectic(&self) -> Result<()> {
        let deviation = self.symplectic_defect().max(self.conjugation_defect());
        if deviation > SYMPLECTIC_TOL {
            return Err(Error::NotSymplectic { deviation });
        }
        Ok(())
    }

    /// The map for `self` followed by `next`.
    pub fn then(&self, next: &BogoliubovMap) -> Result<BogoliubovMap> {
        if self.labels != next.labels {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            labels: self.labels.clone(),
            matrix: &next.matrix * &self.matrix,
            time: self.time + next.time,
        })
    }

    /// Deviation of `M† G M` from `G` for a quadratic form `½ v† G v`.
    pub fn quadratic_form_defect(&self, form: &DMatrix<C64>) -> f64 {
        (self.matrix.adjoint() * form * &self.matrix - form).map(|v| v.norm()).max()
    }

    /// Real representation on quadratures `x_k = a_k + a_k†`,
    /// `p_k = −i(a_k − a_k†)`.
    pub fn quadrature_matrix(&self) -> DMatrix<f64> {
        let n = self.modes();
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        let mut t_inv = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            let (x, p) = (2 * k, 2 * k + 1);
            t[(x, x)] = c(1.0);
            t[(x, p)] = c(1.0);
            t[(p, x)] = C64::new(0.0, -1.0);
            t[(p, p)] = C64::new(0.0, 1.0);
            t_inv[(x, x)] = c(0.5);
            t_inv[(x, p)] = C64::new(0.0, 0.5);
            t_inv[(p, x)] = c(0.5);
            t_inv[(p, p)] = C64::new(0.0, -0.5);
        }
        (t * &self.matrix * t_inv).map(|v| v.re)
    }
}

/// Mode labels of the bichromatic scheme, in map order.
pub const SCHEME1_LABELS: [&str; 3] = [CAV1, CAV2, MOTION];
/// Mode labels of the single-mode scheme, in map order.
pub const SCHEME2_LABELS: [&str; 2] = ["cav", MOTION];

/// Coefficient matrix of `C = b†b − a₁†a₁ + a₂†a₂` as `½ v† G v + const`.
pub fn constant_of_motion_form() -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        [-1.0, -1.0, 1.0, 1.0, 1.0, 1.0].map(c).to_vec(),
    ))
}

/// Heisenberg solution of the effective bichromatic dynamics at time `t`.
pub fn scheme1_propagator(couplings: &Couplings, t: f64) -> Result<BogoliubovMap> {
    let theta = couplings.periodic_theta()?;
    let (x1, x2) = (couplings.chi1, couplings.chi2);
    let (s, co) = ((theta * t).sin(), (theta * t).cos());
    let th2 = theta * theta;
    let zero = c(0.0);
    // columns: a1, a1†, a2, a2†, b, b†
    let row_a1 = vec![
        c((x2.norm_sqr() - x1.norm_sqr() * co) / th2),
        zero,
        zero,
        -x1 * x2 * (1.0 - co) / th2,
        zero,
        x1 * (s / theta),
    ];
    let row_a2 = vec![
        zero,
        x1 * x2 * (1.0 - co) / th2,
        c(-(x1.norm_sqr() - x2.norm_sqr() * co) / th2),
        zero,
        x2 * (s / theta),
        zero,
    ];
    let row_b = vec![
        zero,
        x1 * (s / theta),
        -x2.conj() * (s / theta),
        zero,
        c(co),
        zero,
    ];
    Ok(BogoliubovMap::from_annihilation_rows(
        &SCHEME1_LABELS,
        vec![row_a1, row_a2, row_b],
        t,
    ))
}

/// `T_π = π/Θ` and the map at that time.
pub fn half_period_map(couplings: &Couplings) -> Result<(f64, BogoliubovMap)> {
    let t = couplings.half_period()?;
    Ok((t, scheme1_propagator(couplings, t)?))
}

/// Fock amplitudes `c_n` on `|n, n⟩` of the two-mode squeezed state.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoModeState {
    pub amplitudes: Vec<C64>,
    /// `Σ |c_n|²` over the retained terms.
    pub truncated_norm: f64,
}

/// `c_n = ((1 − r²)/(1 + r²)) · (−2r e^{iφ}/(1 + r²))^n` for `n ≤ n_max`.
pub fn two_mode_state(r: f64, phi: f64, n_max: usize) -> Result<TwoModeState> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    if (r - 1.0).abs() < 1e-12 {
        return Err(invalid("r", "r = 1 is singular"));
    }
    if n_max < 1 {
        return Err(invalid("n_max", "must be >= 1"));
    }
    let q = 1.0 + r * r;
    let lead = c((1.0 - r * r) / q);
    let ratio = C64::from_polar(-2.0 * r / q, phi);
    let mut amplitudes = Vec::with_capacity(n_max + 1);
    let mut term = lead;
    for _ in 0..=n_max {
        amplitudes.push(term);
        term *= ratio;
    }
    let truncated_norm = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    Ok(TwoModeState {
        amplitudes,
        truncated_norm,
    })
}

/// `⟨n⟩ = 4r²/(1 − r²)²`.
pub fn mean_photon_number(r: f64) -> f64 {
    4.0 * r * r / (1.0 - r * r).powi(2)
}

/// Smallest `n_max` with `Σ_{n ≤ n_max} |c_n|² ≥ target`.
pub fn n_max_for_norm(r: f64, target: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&target) {
        return Err(invalid("target", "must lie in [0, 1)"));
    }
    if (r - 1.0).abs() < 1e-12 || !(r > 0.0) {
        return Err(invalid("r", "must be positive and != 1"));
    }
    // partial sum is 1 − λ^{2(n+1)}
    let lam2 = (2.0 * r / (1.0 + r * r)).powi(2);
    let n = ((1.0 - target).ln() / lam2.ln()).ceil() as usize;
    Ok(n.saturating_sub(1))
}

/// Two-mode squeezing pulse `H = iχ a†b† + h.c.` of duration `t1`.
pub fn scheme2_squeeze(chi: C64, t1: f64) -> Result<BogoliubovMap> {
    if !(t1 >= 0.0) || !t1.is_finite() {
        return Err(invalid("t1", "must be finite and >= 0"));
    }
    let (ch, sh) = ((chi.norm() * t1).cosh(), (chi.norm() * t1).sinh());
    let ph = C64::from_polar(1.0, chi.arg());
    let zero = c(0.0);
    // columns: a, a†, b, b†
    let row_a = vec![c(ch), zero, zero, ph * sh];
    let row_b = vec![zero, ph * sh, c(ch), zero];
    Ok(BogoliubovMap::from_annihilation_rows(
        &SCHEME2_LABELS,
        vec![row_a, row_b],
        t1,
    ))
}

/// Beam-splitter pulse `H = iχ a†b + h.c.` of duration `t`.
pub fn beam_splitter(chi: C64, t: f64) -> Result<BogoliubovMap> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    let (co, s) = ((chi.norm() * t).cos(), (chi.norm() * t).sin());
    let ph = C64::from_polar(1.0, chi.arg());
    let zero = c(0.0);
    let row_a = vec![c(co), zero, ph * s, zero];
    let row_b = vec![-ph.conj() * s, zero, c(co), zero];
    Ok(BogoliubovMap::from_annihilation_rows(
        &SCHEME2_LABELS,
        vec![row_a, row_b],
        t,
    ))
}

/// `T₂ = π/2|χ|` and the swap map `a → b e^{iφ_χ}`.
pub fn scheme2_beamsplitter(chi: C64) -> Result<(f64, BogoliubovMap)> {
    if chi.norm() == 0.0 {
        return Err(invalid("chi", "swap pulse needs a non-zero coupling"));
    }
    let t2 = PI / (2.0 * chi.norm());
    Ok((t2, beam_splitter(chi, t2)?))
}

/// Single-mode coupling `χ = η g* Ω/Δ (cos φ cosθ_L + i sin φ cosθ_c)`,
/// valid for `|Δ| ≫ ν, γ`. Uses the first cavity's `g` and `φ`.
pub fn scheme2_coupling(params: &SystemParams) -> Result<C64> {
    params.validate()?;
    if params.delta == 0.0 {
        return Err(Error::SingularDenominator {
            which: "Δ",
            value: 0.0,
        });
    }
    let geom = C64::new(
        params.phi[0].cos() * params.theta_l.cos(),
        params.phi[0].sin() * params.theta_c.cos(),
    );
    Ok(params.g[0].conj() * (params.eta * params.omega / params.delta) * geom)
}

/// Root `r > 1` of `tanh|χ|T₁ = 2r/(1 + r²)`.
pub fn effective_ratio_from_tanh(tanh: f64) -> Result<f64> {
    if !(tanh > 0.0 && tanh < 1.0) {
        return Err(Error::NoEntangledRoot { tanh });
    }
    Ok((1.0 + (1.0 - tanh * tanh).sqrt()) / tanh)
}

/// Interaction-picture effective Hamiltonian
/// `iχ₁ a₁†b† + iχ₂ a₂†b + h.c.` on a Fock space holding `cav1`, `cav2`
/// and `motion`.
pub fn effective_hamiltonian(couplings: &Couplings, space: &ModeSpace) -> Result<Operator> {
    let a1 = annihilation(space, CAV1)?;
    let a2 = annihilation(space, CAV2)?;
    let b = annihilation(space, MOTION)?;
    let i = C64::new(0.0, 1.0);
    let h1 = &(&a1.adjoint() * &b.adjoint()) * (i * couplings.chi1);
    let h2 = &(&a2.adjoint() * &b) * (i * couplings.chi2);
    let h = &h1 + &h2;
    Ok(&h + &h.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn red_detuned_ratio() {
        let g = C64::new(1.3, 0.0);
        let p = SystemParams::scheme1(1.0, -20.0, 2.0, [g, g], 0.1);
        let cpl = coupling_constants(&p).unwrap();
        let ratio = cpl.chi2 / cpl.chi1;
        assert_abs_diff_eq!(ratio.re, 21.0 / 19.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ratio.im, 0.0, epsilon = 1e-12);
        let r = cpl.ratio().unwrap();
        assert!((r - 1.1).abs() < 0.006);
        assert!(cpl.is_periodic());
    }

    #[test]
    fn no_drive_no_coupling() {
        let g = C64::new(1.0, 0.0);
        let p = SystemParams::scheme1(1.0, -20.0, 0.0, [g, g], 0.1);
        let cpl = coupling_constants(&p).unwrap();
        assert_eq!(cpl.chi1, c(0.0));
        assert_eq!(cpl.chi2, c(0.0));
        assert!(cpl.ratio().is_none());
        assert!(matches!(cpl.half_period(), Err(Error::NotPeriodic { .. })));
    }

    #[test]
    fn phase_for_red_detuning() {
        let g = C64::from_polar(0.7, 0.4);
        let p = SystemParams::scheme1(1.0, -20.0, 2.0, [g, g], 0.1);
        let cpl = coupling_constants(&p).unwrap();
        // both denominators negative: φ = 2 arg(g* Ω) + 2π
        assert_abs_diff_eq!(cpl.phase(), wrap_phase(2.0 * (-0.4)), epsilon = 1e-12);
    }

    #[test]
    fn singular_denominator() {
        let g = C64::new(1.0, 0.0);
        let p = SystemParams::scheme1(1.0, 1.0, 2.0, [g, g], 0.1);
        assert!(matches!(
            coupling_constants(&p),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn blue_detuning_is_not_periodic() {
        let g = C64::new(1.0, 0.0);
        let p = SystemParams::scheme1(1.0, 20.0, 2.0, [g, g], 0.1);
        let cpl = coupling_constants(&p).unwrap();
        assert!(cpl.ratio().unwrap() < 1.0);
        assert!(scheme1_propagator(&cpl, 1.0).is_err());
    }

    #[test]
    fn propagator_at_zero_is_identity() {
        let m = scheme1_propagator(&Couplings::from_ratio(1.4), 0.0).unwrap();
        assert!((m.matrix() - DMatrix::identity(6, 6)).map(|v| v.norm()).max() < 1e-15);
    }

    #[test]
    fn half_period_entries() {
        let cpl = Couplings::new(c(1.0), c(1.1));
        let (t, m) = half_period_map(&cpl).unwrap();
        assert_abs_diff_eq!(t, PI / 0.21f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.coefficient(0, 0).re, 2.21 / 0.21, epsilon = 1e-9);
        assert_abs_diff_eq!(m.coefficient(0, 3).re, -2.2 / 0.21, epsilon = 1e-9);
        assert_abs_diff_eq!(m.coefficient(2, 1).re, 2.2 / 0.21, epsilon = 1e-9);
        assert_abs_diff_eq!(m.coefficient(2, 2).re, -2.21 / 0.21, epsilon = 1e-9);
        for k in 4..6 {
            for col in 0..6 {
                let want = if col == k { -1.0 } else { 0.0 };
                assert_abs_diff_eq!((m.coefficient(k, col) - c(want)).norm(), 0.0, epsilon = 1e-12);
            }
        }
        let d = m.coefficient(0, 0).re;
        let o = m.coefficient(0, 3).re;
        assert!((d * d - o * o - 1.0).abs() < 1e-10);
        m.check_symplectic().unwrap();
    }

    #[test]
    fn two_mode_state_normalization() {
        let s = two_mode_state(1.1, 0.3, 5000).unwrap();
        assert_abs_diff_eq!(s.truncated_norm, 1.0, epsilon = 1e-12);
        assert!(two_mode_state(1.0, 0.0, 10).is_err());
        assert!(two_mode_state(1.5, 0.0, 0).is_err());
        let r: f64 = 1.1;
        let ident = (1.0 - r * r).powi(2) / ((1.0 + r * r).powi(2) - 4.0 * r * r);
        assert_abs_diff_eq!(ident, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn photon_number_and_cutoff() {
        assert_abs_diff_eq!(mean_photon_number(1.1), 4.84 / 0.0441, epsilon = 1e-9);
        let n = n_max_for_norm(1.1, 0.999).unwrap();
        // 1 − λ^{2(n+1)} ≥ 0.999 with λ² = (2.2/2.21)²
        let lam2 = (2.2f64 / 2.21).powi(2);
        assert!(1.0 - lam2.powi(n as i32 + 1) >= 0.999);
        assert!(1.0 - lam2.powi(n as i32) < 0.999);
        assert!((755..=765).contains(&n));
    }

    #[test]
    fn squeeze_pulse() {
        let chi = C64::from_polar(0.7, 0.5);
        let id = scheme2_squeeze(chi, 0.0).unwrap();
        assert!((id.matrix() - DMatrix::identity(4, 4)).map(|v| v.norm()).max() < 1e-15);
        let t1 = 10f64.asinh() / chi.norm();
        assert_abs_diff_eq!(t1 * chi.norm(), 2.998, epsilon = 5e-4);
        let m = scheme2_squeeze(chi, t1).unwrap();
        assert_abs_diff_eq!(m.coefficient(0, 3).norm(), 10.0, epsilon = 1e-9);
        m.check_symplectic().unwrap();
        assert!(scheme2_squeeze(chi, -1.0).is_err());
    }

    #[test]
    fn swap_pulse() {
        let chi = C64::from_polar(0.3, -1.1);
        let (t2, m) = scheme2_beamsplitter(chi).unwrap();
        assert_abs_diff_eq!(t2, PI / 0.6, epsilon = 1e-12);
        assert!(m.coefficient(0, 0).norm() < 1e-15);
        assert_abs_diff_eq!(m.coefficient(0, 2).norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((m.coefficient(0, 2) - C64::from_polar(1.0, -1.1)).norm(), 0.0, epsilon = 1e-12);
        let twice = m.then(&m).unwrap();
        assert!((twice.matrix() + DMatrix::identity(4, 4)).map(|v| v.norm()).max() < 1e-12);
        m.check_symplectic().unwrap();
        assert!(scheme2_beamsplitter(c(0.0)).is_err());
    }

    #[test]
    fn single_mode_coupling() {
        let mut p = SystemParams::scheme1(1.0, -20.0, 6.0, [c(2.0), c(2.0)], 0.03);
        p.theta_c = PI / 2.0;
        let chi = scheme2_coupling(&p).unwrap();
        assert_abs_diff_eq!(chi.norm(), 0.03 * 0.3 * 2.0, epsilon = 1e-12);
        p.omega = 0.0;
        assert_eq!(scheme2_coupling(&p).unwrap().norm(), 0.0);
        p.delta = 0.0;
        assert!(scheme2_coupling(&p).is_err());
    }

    #[test]
    fn tanh_root() {
        let r = effective_ratio_from_tanh(10.0 / 101f64.sqrt()).unwrap();
        assert!((r - 1.1050).abs() < 1e-4);
        assert!(effective_ratio_from_tanh(0.0).is_err());
    }
}
