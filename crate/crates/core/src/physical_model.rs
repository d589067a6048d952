//! Full atom + motion + cavity model in the frame rotating at the laser
//! frequency, with the light-matter couplings expanded to second order in
//! the Lamb-Dicke parameter.
//!
//! Units: ħ = 1, all frequencies and rates in rad/s.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock_algebra::{
    annihilation, embed_dense, number, DensityState, ModeSpace, Operator, C64, CAV1, CAV2, DIPOLE,
    MOTION,
};

/// Real pulse envelope multiplying the peak Rabi frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Constant,
    Rectangular { start: f64, stop: f64 },
    /// `sin²` ramp over `duration` starting at `start`.
    SineSquared { start: f64, duration: f64 },
    /// Piecewise-constant: `values[k]` holds on `[times[k], times[k+1])`.
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant => 1.0,
            Envelope::Rectangular { start, stop } => {
                if t >= *start && t < *stop {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::SineSquared { start, duration } => {
                if t < *start || t > start + duration {
                    0.0
                } else {
                    (PI * (t - start) / duration).sin().powi(2)
                }
            }
            Envelope::Piecewise { times, values } => {
                match times.iter().rposition(|s| *s <= t) {
                    Some(k) if k < values.len() => values[k],
                    _ => 0.0,
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Envelope::Piecewise { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(invalid("envelope", "piecewise times/values length mismatch"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("envelope", "piecewise times must increase"));
                }
            }
            Envelope::SineSquared { duration, .. } if *duration <= 0.0 => {
                return Err(invalid("envelope", "duration must be positive"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// How `cos(k x cosθ + φ)` and `exp(i k x cosθ)` are represented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambDickeOrder {
    /// Expansion through η².
    #[default]
    Second,
    /// Matrix functions of the truncated position operator. Only meant for
    /// truncation-error studies.
    Exact,
}

/// Angular distribution `N(u)` of spontaneous-emission recoil along the trap
/// axis, `u ∈ [-1, 1]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecoilPattern {
    #[default]
    Flat,
    /// Linear interpolation between tabulated points covering `[-1, 1]`.
    Tabulated { u: Vec<f64>, density: Vec<f64> },
}

impl RecoilPattern {
    pub fn density(&self, u: f64) -> f64 {
        match self {
            RecoilPattern::Flat => 0.5,
            RecoilPattern::Tabulated { u: xs, density } => {
                if u <= xs[0] {
                    return density[0];
                }
                for k in 1..xs.len() {
                    if u <= xs[k] {
                        let w = (u - xs[k - 1]) / (xs[k] - xs[k - 1]);
                        return density[k - 1] * (1.0 - w) + density[k] * w;
                    }
                }
                density[density.len() - 1]
            }
        }
    }

    /// Exact integral of the interpolant over `[-1, 1]`.
    pub fn integral(&self) -> f64 {
        match self {
            RecoilPattern::Flat => 1.0,
            RecoilPattern::Tabulated { u, density } => u
                .windows(2)
                .zip(density.windows(2))
                .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
                .sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let RecoilPattern::Tabulated { u, density } = self {
            if u.len() != density.len() || u.len() < 2 {
                return Err(invalid("recoil", "table needs matching u/density of length >= 2"));
            }
            if (u[0] + 1.0).abs() > 1e-12 || (u[u.len() - 1] - 1.0).abs() > 1e-12 {
                return Err(invalid("recoil", "table must span [-1, 1]"));
            }
            if u.windows(2).any(|w| w[1] <= w[0]) || density.iter().any(|d| *d < 0.0) {
                return Err(invalid("recoil", "u must increase and density be non-negative"));
            }
        }
        let integral = self.integral();
        if (integral - 1.0).abs() > 1e-8 {
            return Err(Error::RecoilNormalization { integral });
        }
        Ok(())
    }

    /// Quadrature nodes `u_i` with weights `w_i N(u_i)` summing to one.
    pub fn nodes(&self, order: usize) -> Result<Vec<(f64, f64)>> {
        if order < 2 {
            return Err(invalid("quadrature_order", format!("must be >= 2, got {order}")));
        }
        self.validate()?;
        let mut nodes: Vec<(f64, f64)> = gauss_legendre(order)
            .into_iter()
            .map(|(u, w)| (u, w * self.density(u)))
            .collect();
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        nodes.iter_mut().for_each(|(_, w)| *w /= total);
        Ok(nodes)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Every physical symbol of the model. Frequencies and rates in rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Trap frequency ν.
    pub nu: f64,
    /// Laser-atom detuning Δ = ω_L − ω₀ (signed).
    pub delta: f64,
    /// Laser-cavity detunings δ_j = ω_L − ω_j.
    pub cavity_detuning: [f64; 2],
    /// Peak Rabi frequency Ω.
    pub omega: f64,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
    /// Atom-cavity couplings g_j.
    pub g: [C64; 2],
    /// Trap-position phases φ_j.
    pub phi: [f64; 2],
    /// Angle between the cavity axis and the motional axis.
    pub theta_c: f64,
    /// Angle between the laser wave vector and the motional axis.
    pub theta_l: f64,
    /// Lamb-Dicke parameter η.
    pub eta: f64,
    /// Spontaneous emission rate γ.
    pub gamma: f64,
    /// Cavity field decay rates κ_j.
    pub kappa: [f64; 2],
    #[serde(default)]
    pub recoil: RecoilPattern,
    #[serde(default = "default_recoil_nodes")]
    pub recoil_nodes: usize,
    #[serde(default)]
    pub lamb_dicke: LambDickeOrder,
}

fn default_envelope() -> Envelope {
    Envelope::Constant
}

fn default_recoil_nodes() -> usize {
    8
}

impl SystemParams {
    /// Bichromatic configuration with `δ₁ = ν`, `δ₂ = −ν`, laser along the
    /// trap axis, cavity axis orthogonal to it, trap centred on an antinode,
    /// no dissipation.
    pub fn scheme1(nu: f64, delta: f64, omega: f64, g: [C64; 2], eta: f64) -> Self {
        Self {
            nu,
            delta,
            cavity_detuning: [nu, -nu],
            omega,
            envelope: Envelope::Constant,
            g,
            phi: [0.0, 0.0],
            theta_c: PI / 2.0,
            theta_l: 0.0,
            eta,
            gamma: 0.0,
            kappa: [0.0, 0.0],
            recoil: RecoilPattern::Flat,
            recoil_nodes: default_recoil_nodes(),
            lamb_dicke: LambDickeOrder::Second,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("nu", self.nu),
            ("delta", self.delta),
            ("cavity_detuning", self.cavity_detuning[0]),
            ("cavity_detuning", self.cavity_detuning[1]),
            ("omega", self.omega),
            ("g", self.g[0].re + self.g[0].im),
            ("g", self.g[1].re + self.g[1].im),
            ("phi", self.phi[0] + self.phi[1]),
            ("theta_c", self.theta_c),
            ("theta_l", self.theta_l),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("kappa", self.kappa[0] + self.kappa[1]),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.nu <= 0.0 {
            return Err(invalid("nu", "trap frequency must be positive"));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", "must be >= 0"));
        }
        if self.kappa.iter().any(|k| *k < 0.0) {
            return Err(invalid("kappa", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(invalid("eta", "Lamb-Dicke parameter must lie in [0, 1)"));
        }
        self.envelope.validate()?;
        self.recoil.validate()
    }

    /// True when the cavity detunings equal (ν, −ν).
    pub fn is_scheme1_tuned(&self) -> bool {
        (self.cavity_detuning[0] - self.nu).abs() <= 1e-12 * self.nu
            && (self.cavity_detuning[1] + self.nu).abs() <= 1e-12 * self.nu
    }
}

fn cavity_labels(space: &ModeSpace) -> Result<Vec<(usize, &'static str)>> {
    let labels: Vec<_> = [(0, CAV1), (1, CAV2)]
        .into_iter()
        .filter(|(_, l)| space.contains(l))
        .collect();
    if labels.is_empty() {
        return Err(invalid("space", "needs at least one cavity mode (`cav1`)"));
    }
    Ok(labels)
}

fn require_model_space(space: &ModeSpace) -> Result<()> {
    if !space.contains(DIPOLE) {
        return Err(Error::UnknownMode(DIPOLE.into()));
    }
    if !space.contains(MOTION) {
        return Err(Error::UnknownMode(MOTION.into()));
    }
    cavity_labels(space).map(|_| ())
}

/// Position operator `b + b†` on the motional mode alone.
fn motion_position(dim: usize) -> DMatrix<C64> {
    let mut x = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        let v = C64::new((n as f64).sqrt(), 0.0);
        x[(n - 1, n)] = v;
        x[(n, n - 1)] = v;
    }
    x
}

/// `f(s·X)` for the Hermitian position operator `X`, via its eigenbasis.
fn position_function(dim: usize, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
    let eig = motion_position(dim).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Motional factor of the cavity coupling: `cos(η cosθ_c X + φ)`.
fn cavity_mode_function(p: &SystemParams, phi: f64, dim: usize) -> DMatrix<C64> {
    let s = p.eta * p.theta_c.cos();
    match p.lamb_dicke {
        LambDickeOrder::Second => {
            let x = motion_position(dim);
            let x2 = &x * &x;
            // cos φ − η cosθ_c sin φ X − ½ η² cos²θ_c cos φ X²
            DMatrix::identity(dim, dim) * C64::new(phi.cos(), 0.0) - x * C64::new(s * phi.sin(), 0.0)
                - x2 * C64::new(0.5 * s * s * phi.cos(), 0.0)
        }
        LambDickeOrder::Exact => position_function(dim, |x| C64::new((s * x + phi).cos(), 0.0)),
    }
}

/// Motional factor of the laser coupling: `exp(i η cosθ_L X)`.
fn laser_mode_function(p: &SystemParams, dim: usize) -> DMatrix<C64> {
    let s = p.eta * p.theta_l.cos();
    match p.lamb_dicke {
        LambDickeOrder::Second => {
            let x = motion_position(dim);
            let x2 = &x * &x;
            DMatrix::identity(dim, dim) + x * C64::new(0.0, s) - x2 * C64::new(0.5 * s * s, 0.0)
        }
        LambDickeOrder::Exact => position_function(dim, |x| C64::from_polar(1.0, s * x)),
    }
}

/// Static part and laser part of the Hamiltonian: `H(t) = H_0 + f(t) H_L`
/// with `f` the pulse envelope.
#[derive(Clone, Debug)]
pub struct HamiltonianParts {
    pub static_part: Operator,
    pub drive: Operator,
    pub envelope: Envelope,
}

impl HamiltonianParts {
    pub fn at(&self, t: f64) -> Operator {
        let f = self.envelope.value(t);
        if f == 0.0 {
            self.static_part.clone()
        } else {
            &self.static_part + &(&self.drive * f)
        }
    }
}

pub fn hamiltonian_parts(params: &SystemParams, space: &ModeSpace) -> Result<HamiltonianParts> {
    params.validate()?;
    require_model_space(space)?;
    let sigma = annihilation(space, DIPOLE)?;
    let sigma_dag = sigma.adjoint();
    let motion_dim = space.dim_of(MOTION)?;

    // free part: cavity frame energies (ω_j − ω_L) = −δ_j, trap, atom at −Δ
    let mut h0 = &number(space, MOTION)? * params.nu;
    h0 = &h0 + &(&number(space, DIPOLE)? * (-params.delta));
    for (j, label) in cavity_labels(space)? {
        h0 = &h0 + &(&number(space, label)? * (-params.cavity_detuning[j]));
        let a = annihilation(space, label)?;
        let f = embed_dense(&cavity_mode_function(params, params.phi[j], motion_dim), space, MOTION)?;
        let term = &(&(&a * &sigma_dag) * &f) * params.g[j];
        h0 = &(&h0 + &term) + &term.adjoint();
    }

    let fl = embed_dense(&laser_mode_function(params, motion_dim), space, MOTION)?;
    let laser = &(&sigma_dag * &fl) * params.omega;
    let drive = &laser + &laser.adjoint();

    Ok(HamiltonianParts {
        static_part: h0,
        drive,
        envelope: params.envelope.clone(),
    })
}

/// Full Hamiltonian at time `t` in the laser frame.
pub fn build_hamiltonian(params: &SystemParams, space: &ModeSpace, t: f64) -> Result<Operator> {
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    Ok(hamiltonian_parts(params, space)?.at(t))
}

/// One Lindblad channel contributing `rate (L ρ L† − ½{L†L, ρ})`.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub label: String,
    pub operator: Operator,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct DissipatorSet {
    pub channels: Vec<JumpChannel>,
    /// Recoil pattern applied inside the spontaneous-emission sandwich term,
    /// `None` when the kernel is trivial (η = 0 or γ = 0).
    pub recoil: Option<RecoilPattern>,
}

impl DissipatorSet {
    pub fn empty() -> Self {
        Self {
            channels: Vec::new(),
            recoil: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.channels.iter().all(|c| c.rate == 0.0)
    }

    /// Jump operators `√rate · L`.
    pub fn jump_operators(&self) -> Vec<Operator> {
        self.channels
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| &c.operator * c.rate.sqrt())
            .collect()
    }
}

/// Cavity decay `√(2κ_j) a_j` plus spontaneous emission at rate γ. The
/// recoil average over emission directions enters only the sandwich term
/// `σ ρ̃ σ†`; it is expanded into one channel `σ e^{−iηuX}` per quadrature
/// node, which leaves the anticommutator `γ σ†σ` unchanged.
pub fn build_dissipators(params: &SystemParams, space: &ModeSpace) -> Result<DissipatorSet> {
    params.validate()?;
    require_model_space(space)?;
    let mut channels = Vec::new();
    for (j, label) in cavity_labels(space)? {
        if params.kappa[j] > 0.0 {
            channels.push(JumpChannel {
                label: format!("{label}_decay"),
                operator: annihilation(space, label)?,
                rate: 2.0 * params.kappa[j],
            });
        }
    }
    let mut recoil = None;
    if params.gamma > 0.0 {
        let sigma = annihilation(space, DIPOLE)?;
        if params.eta == 0.0 {
            channels.push(JumpChannel {
                label: "spontaneous".into(),
                operator: sigma,
                rate: params.gamma,
            });
        } else {
            let dim = space.dim_of(MOTION)?;
            for (k, (u, w)) in params.recoil.nodes(params.recoil_nodes)?.into_iter().enumerate() {
                let kick = position_function(dim, |x| C64::from_polar(1.0, -params.eta * u * x));
                let kick = embed_dense(&kick, space, MOTION)?;
                channels.push(JumpChannel {
                    label: format!("spontaneous_{k}"),
                    operator: &sigma * &kick,
                    rate: params.gamma * w,
                });
            }
            recoil = Some(params.recoil.clone());
        }
    }
    Ok(DissipatorSet { channels, recoil })
}

/// `ρ̃ = ∫ du N(u) e^{−iηuX} ρ e^{iηuX}` by fixed-node Gauss-Legendre
/// quadrature.
pub fn recoil_average(
    rho: &DensityState,
    params: &SystemParams,
    quadrature_order: usize,
) -> Result<DensityState> {
    let space = rho.space();
    let dim = space.dim_of(MOTION)?;
    let nodes = params.recoil.nodes(quadrature_order)?;
    if params.eta == 0.0 {
        return Ok(rho.clone());
    }
    let n = space.total_dim();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for (u, w) in nodes {
        let kick = position_function(dim, |x| C64::from_polar(1.0, -params.eta * u * x));
        let kick = embed_dense(&kick, space, MOTION)?;
        let left = kick.mul_dense(rho.matrix());
        let both = kick.mul_dense(&left.adjoint()).adjoint();
        out += both * C64::new(w, 0.0);
    }
    Ok(DensityState::from_raw(space.clone(), out))
}
