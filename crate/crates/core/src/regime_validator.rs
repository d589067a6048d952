//! Validity inequalities of the adiabatic, Lamb-Dicke, weak-scattering
//! description, evaluated as numeric margins.
//!
//! Every "≫" is a ratio `left/right`; a condition passes when the ratio
//! reaches the threshold (5 unless configured). The detuning enters through
//! `|Δ|` everywhere in this module.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock_algebra::C64;
use crate::physical_model::SystemParams;

pub const DEFAULT_THRESHOLD: f64 = 5.0;

/// Cavity geometry: reduced cross section σ̃, free spectral range δω
/// (rad/s) and finesse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub sigma_tilde: f64,
    pub fsr: f64,
    pub finesse: f64,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_tilde", self.sigma_tilde),
            ("fsr", self.fsr),
            ("finesse", self.finesse),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Atomic and drive parameters entering the rate estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    pub gamma: f64,
    pub eta: f64,
    pub nu: f64,
    /// Signed; only `|Δ|` is used.
    pub delta: f64,
    pub omega: f64,
}

impl AtomParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("nu", self.nu),
            ("omega", self.omega),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(invalid("eta", "must be finite and >= 0"));
        }
        if self.delta == 0.0 || !self.delta.is_finite() {
            return Err(invalid("delta", "must be finite and non-zero"));
        }
        Ok(())
    }
}

impl From<&SystemParams> for AtomParams {
    fn from(p: &SystemParams) -> Self {
        Self {
            gamma: p.gamma,
            eta: p.eta,
            nu: p.nu,
            delta: p.delta,
            omega: p.omega,
        }
    }
}

/// Rates derived from the cavity and atom parameters (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub g: f64,
    pub kappa: f64,
    pub theta: f64,
    pub gamma_theta: f64,
    pub gamma_kappa: f64,
    /// `1 + 2ν/|Δ|`.
    pub r: f64,
    /// `π/Θ`, infinite when Θ vanishes.
    pub t_pi: f64,
}

/// `g = √(σ̃γδω)`, `κ = δω/𝓕`, `Θ = √2 η √(2ν/|Δ|) (Ω/|Δ|) g`,
/// `γ_Θ = γη²Ω²/Δ²`, `γ_κ = γg²/Δ²`. Θ uses the γ → 0 couplings with the
/// laser along and the cavity across the trap axis.
pub fn derived_rates(cavity: &CavityParams, atom: &AtomParams) -> Result<DerivedRates> {
    cavity.validate()?;
    atom.validate()?;
    let ad = atom.delta.abs();
    let g = (cavity.sigma_tilde * atom.gamma * cavity.fsr).sqrt();
    let theta = 2f64.sqrt() * atom.eta * (2.0 * atom.nu / ad).sqrt() * (atom.omega / ad) * g;
    Ok(DerivedRates {
        g,
        kappa: cavity.fsr / cavity.finesse,
        theta,
        gamma_theta: atom.gamma * (atom.eta * atom.omega / ad).powi(2),
        gamma_kappa: atom.gamma * (g / ad).powi(2),
        r: 1.0 + 2.0 * atom.nu / ad,
        t_pi: if theta > 0.0 { PI / theta } else { f64::INFINITY },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    /// Holds as a strict inequality but below the threshold.
    Marginal,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    pub left: f64,
    pub relation: String,
    pub right: f64,
    pub margin: f64,
    pub status: Status,
}

impl Condition {
    fn much_greater(id: &str, left: f64, right: f64, threshold: f64) -> Self {
        let margin = left / right;
        let status = if margin >= threshold {
            Status::Pass
        } else if margin > 1.0 {
            Status::Marginal
        } else {
            Status::Fail
        };
        Self {
            id: id.into(),
            left,
            relation: "≫".into(),
            right,
            margin,
            status,
        }
    }

    fn much_less(id: &str, left: f64, right: f64, threshold: f64) -> Self {
        let mut c = Self::much_greater(id, right, left, threshold);
        c.left = left;
        c.right = right;
        c.relation = "≪".into();
        c
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub scheme: String,
    pub threshold: f64,
    pub rates: DerivedRates,
    pub conditions: Vec<Condition>,
    /// Chain values in the shortened numeric form of the preset
    /// normalization; informational.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub quoted_chain: Vec<(String, f64)>,
    pub verdict: bool,
}

impl RegimeReport {
    fn new(scheme: &str, threshold: f64, rates: DerivedRates, conditions: Vec<Condition>) -> Self {
        let verdict = conditions.iter().all(Condition::passed);
        Self {
            scheme: scheme.into(),
            threshold,
            rates,
            conditions,
            quoted_chain: Vec::new(),
            verdict,
        }
    }

    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.passed())
    }

    /// Fixed-width table; rates in Hz (divided by 2π).
    pub fn table(&self) -> String {
        let mut s = String::new();
        let hz = |w: f64| w / (2.0 * PI);
        let r = &self.rates;
        let _ = writeln!(s, "scheme: {}   threshold: {}", self.scheme, self.threshold);
        let _ = writeln!(
            s,
            "g/2pi = {:.4e} Hz  kappa/2pi = {:.4e} Hz  Theta/2pi = {:.4e} Hz",
            hz(r.g),
            hz(r.kappa),
            hz(r.theta)
        );
        let _ = writeln!(
            s,
            "gamma_Theta/2pi = {:.4e} Hz  gamma_kappa/2pi = {:.4e} Hz  r = {:.4}  T_pi = {:.4e} s",
            hz(r.gamma_theta),
            hz(r.gamma_kappa),
            r.r,
            r.t_pi
        );
        let _ = writeln!(
            s,
            "{:<24} {:>12} {:^3} {:>12} {:>10}  status",
            "condition", "left", "", "right", "margin"
        );
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "{:<24} {:>12.4e} {:^3} {:>12.4e} {:>10.3}  {:?}",
                c.id, c.left, c.relation, c.right, c.margin, c.status
            );
        }
        for (id, v) in &self.quoted_chain {
            let _ = writeln!(s, "quoted {id:<17} {v:>12.4}");
        }
        let _ = writeln!(s, "verdict: {}", if self.verdict { "pass" } else { "fail" });
        s
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 1.0) || !threshold.is_finite() {
        return Err(invalid("threshold", "must be finite and > 1"));
    }
    Ok(())
}

/// Bichromatic scheme: pulse-time window, linewidth, scattering rates,
/// Lamb-Dicke bound and the three-link parameter chain.
pub fn validate_scheme1(
    params: &SystemParams,
    cavity: &CavityParams,
    threshold: f64,
) -> Result<RegimeReport> {
    check_threshold(threshold)?;
    let atom = AtomParams::from(params);
    let rates = derived_rates(cavity, &atom)?;
    let ad = atom.delta.abs();
    let inv_t = 1.0 / rates.t_pi;
    let s4 = 4.0 * atom.nu * cavity.sigma_tilde / ad;
    let link1 = 4.0 * ad * atom.nu / atom.gamma.powi(2);
    let link2 = cavity.finesse * s4;
    let link3 = s4.sqrt() / (atom.eta * atom.omega / ad * (atom.gamma / cavity.fsr).sqrt());
    let conditions = vec![
        Condition::much_less("kappa<<1/T", rates.kappa, inv_t, threshold),
        Condition::much_less("1/T<<nu", inv_t, atom.nu, threshold),
        Condition::much_greater("nu>>gamma", atom.nu, atom.gamma, threshold),
        Condition::much_greater("Theta>>gamma_Theta", rates.theta, rates.gamma_theta, threshold),
        Condition::much_greater("kappa>>gamma_kappa", rates.kappa, rates.gamma_kappa, threshold),
        Condition::much_less(
            "Lamb-Dicke",
            atom.eta * (ad / (4.0 * atom.nu)).sqrt(),
            1.0,
            threshold,
        ),
        Condition::much_greater("chain1>>chain2", link1, link2, threshold),
        Condition::much_greater("chain2>>chain3", link2, link3, threshold),
        Condition::much_greater("chain3>>1", link3, 1.0, threshold),
    ];
    let mut report = RegimeReport::new("bichromatic", threshold, rates, conditions);
    report.quoted_chain = vec![
        ("80(nu/gamma)^2".into(), 80.0 * (atom.nu / atom.gamma).powi(2)),
        ("2e-4*finesse".into(), 2e-4 * cavity.finesse),
        ("0.5*sqrt(fsr/gamma)".into(), 0.5 * (cavity.fsr / atom.gamma).sqrt()),
    ];
    Ok(report)
}

/// Sequential scheme for a target mean excitation after the squeezing
/// pulse. Both pulses use `|χ| = η g (Ω/|Δ|) |cos φ cosθ_L + i sin φ cosθ_c|`
/// with `g` from the cavity parameters.
pub fn validate_scheme2(
    params: &SystemParams,
    cavity: &CavityParams,
    target_n: f64,
    threshold: f64,
) -> Result<RegimeReport> {
    check_threshold(threshold)?;
    if !(target_n > 0.0) || !target_n.is_finite() {
        return Err(invalid("target_n", "must be positive"));
    }
    let atom = AtomParams::from(params);
    let rates = derived_rates(cavity, &atom)?;
    let ad = atom.delta.abs();
    let ld = atom.eta * target_n.sqrt();
    if ld >= 1.0 {
        return Err(Error::RegimeViolation(format!(
            "eta*sqrt(n) = {ld} >= 1: Lamb-Dicke regime broken by construction"
        )));
    }
    let geom = C64::new(
        params.phi[0].cos() * params.theta_l.cos(),
        params.phi[0].sin() * params.theta_c.cos(),
    )
    .norm();
    let chi = atom.eta * rates.g * atom.omega / ad * geom;
    if chi == 0.0 {
        return Err(invalid("chi", "coupling vanishes for this geometry"));
    }
    let t1 = target_n.sqrt().asinh() / chi;
    let t2 = PI / (2.0 * chi);
    let conditions = vec![
        Condition::much_less("1/T1<<nu", 1.0 / t1, atom.nu, threshold),
        Condition::much_less("kappa<<1/T1", rates.kappa, 1.0 / t1, threshold),
        Condition::much_less("1/T2<<nu", 1.0 / t2, atom.nu, threshold),
        Condition::much_less("kappa<<1/T2", rates.kappa, 1.0 / t2, threshold),
        Condition::much_less("eta*sqrt(n)<<1", ld, 1.0, threshold),
        Condition::much_greater("kappa>>gamma_kappa", rates.kappa, rates.gamma_kappa, threshold),
        Condition::much_less("gamma_Theta*T1<<1", rates.gamma_theta * t1, 1.0, threshold),
        Condition::much_greater("nu>>g/300", atom.nu, rates.g / 300.0, threshold),
        Condition::much_greater("g/300>>kappa", rates.g / 300.0, rates.kappa, threshold),
    ];
    Ok(RegimeReport::new("sequential", threshold, rates, conditions))
}

/// Trapped In⁺ ion in a high-finesse cavity, rates in rad/s.
pub fn indium_preset() -> (SystemParams, CavityParams) {
    let tau = 2.0 * PI;
    let cavity = CavityParams {
        sigma_tilde: 1e-3,
        fsr: tau * 1e9,
        finesse: 1e6,
    };
    let gamma = tau * 360e3;
    let g = (cavity.sigma_tilde * gamma * cavity.fsr).sqrt();
    let mut p = SystemParams::scheme1(tau * 3e6, -tau * 60e6, tau * 18e6, [C64::new(g, 0.0); 2], 0.1);
    p.gamma = gamma;
    let kappa = cavity.fsr / cavity.finesse;
    p.kappa = [kappa, kappa];
    (p, cavity)
}
