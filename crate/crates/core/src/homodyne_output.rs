//! Homodyne correlation signal of the two output fields.
//!
//! Both cavities leak at the same rate κ. The detected quadratures are
//! integrated over a window δt; `R(t)` compares the decaying intracavity
//! signal with the shot noise of that window and `C₁,₂(t)` is the
//! normalized variance of the difference current, equal to one at the
//! shot-noise limit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::effective_dynamics::{
    effective_ratio_from_tanh, scheme2_squeeze, Couplings, BogoliubovMap, SCHEME2_LABELS,
};
use crate::error::{invalid, Error, Result};
use crate::fock_algebra::C64;
use crate::gaussian_oracle::GaussianState;

/// Largest accepted `κ δt`.
pub const MAX_KAPPA_DT: f64 = 0.2;
/// Smallest accepted `κ τ` between the two pulses of the sequential scheme.
pub const MIN_KAPPA_TAU: f64 = 3.0;

/// Intracavity quadrature moments at the half period, vacuum included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMoments {
    pub q11: f64,
    pub q22: f64,
    pub q12: f64,
}

impl QuadratureMoments {
    fn check(&self) -> Result<()> {
        if !(self.q11 > 0.0 && self.q22 > 0.0) || !self.q12.is_finite() {
            return Err(invalid("moments", "need positive finite variances"));
        }
        Ok(())
    }
}

/// Closed-form moments for couplings with `r > 1`.
pub fn quadrature_moments(c: &Couplings, theta1: f64, theta2: f64) -> Result<QuadratureMoments> {
    let theta = match (c.theta(), c.ratio()) {
        (Some(t), Some(_)) => t,
        (_, r) => return Err(Error::NotPeriodic { r: r.unwrap_or(f64::NAN) }),
    };
    let (s1, s2) = (c.chi1.norm_sqr(), c.chi2.norm_sqr());
    let th4 = theta.powi(4);
    let q = ((s1 + s2).powi(2) + 4.0 * s1 * s2) / th4;
    let cross = c.chi1 * c.chi2 * (4.0 * (s1 + s2)) * C64::from_polar(1.0, theta1 + theta2) / th4;
    Ok(QuadratureMoments {
        q11: q,
        q22: q,
        q12: cross.re,
    })
}

fn check_window(dt: f64, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa", "must be positive"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", "integration window must be positive"));
    }
    if kappa * dt > MAX_KAPPA_DT {
        return Err(invalid(
            "dt",
            format!("kappa*dt = {} exceeds {MAX_KAPPA_DT}; window too coarse", kappa * dt),
        ));
    }
    Ok(())
}

/// `R = κ δt e^{−2κt} (⟨q₁²⟩ + ⟨q₂²⟩)`.
pub fn ratio_r(t: f64, dt: f64, kappa: f64, m: &QuadratureMoments) -> Result<f64> {
    check_window(dt, kappa)?;
    m.check()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    Ok(kappa * dt * (-2.0 * kappa * t).exp() * (m.q11 + m.q22))
}

/// `C = 1 − R/(1 + R) · 2⟨q₁q₂⟩/(⟨q₁²⟩ + ⟨q₂²⟩)`.
pub fn c12_from_moments(t: f64, dt: f64, kappa: f64, m: &QuadratureMoments) -> Result<f64> {
    let r = ratio_r(t, dt, kappa, m)?;
    Ok(1.0 - r / (1.0 + r) * 2.0 * m.q12 / (m.q11 + m.q22))
}

pub fn c12(t: f64, dt: f64, kappa: f64, c: &Couplings, theta1: f64, theta2: f64) -> Result<f64> {
    c12_from_moments(t, dt, kappa, &quadrature_moments(c, theta1, theta2)?)
}

/// Second moments of the window-integrated output quadratures: the cavity
/// contribution `2κ e^{−2κt} ⟨q q⟩` plus the free-field shot noise `1/δt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments {
    pub q11: f64,
    pub q22: f64,
    pub q12: f64,
}

pub fn output_moments(t: f64, dt: f64, kappa: f64, m: &QuadratureMoments) -> Result<OutputMoments> {
    check_window(dt, kappa)?;
    m.check()?;
    let w = 2.0 * kappa * (-2.0 * kappa * t).exp();
    Ok(OutputMoments {
        q11: w * m.q11 + 1.0 / dt,
        q22: w * m.q22 + 1.0 / dt,
        q12: w * m.q12,
    })
}

/// The same signal assembled from the output-field pieces,
/// `1 − 2⟨Q₁Q₂⟩/(⟨Q₁²⟩ + ⟨Q₂²⟩)`.
pub fn c12_from_output_fields(t: f64, dt: f64, kappa: f64, m: &QuadratureMoments) -> Result<f64> {
    let o = output_moments(t, dt, kappa, m)?;
    Ok(1.0 - 2.0 * o.q12 / (o.q11 + o.q22))
}

/// `C` written directly in `r` for real couplings and `θ₁ = θ₂ = 0`.
pub fn c12_ratio_form(r: f64, kappa_t: f64, kappa_dt: f64) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::NotPeriodic { r });
    }
    let x = 2.0 * r / (1.0 + r * r);
    let q = ((1.0 + r * r).powi(2) + 4.0 * r * r) / (r * r - 1.0).powi(2);
    let big_r = kappa_dt * (-2.0 * kappa_t).exp() * 2.0 * q;
    Ok(1.0 - big_r / (1.0 + big_r) * 2.0 * x / (1.0 + x * x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeTag {
    Bichromatic,
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub r: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub kappa_dt: f64,
    pub scheme: SchemeTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_tau: Option<f64>,
}

/// `C₁,₂` and `R` on a grid of `κt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub kappa_t: Vec<f64>,
    pub c12: Vec<f64>,
    pub r: Vec<f64>,
    pub meta: SeriesMetadata,
}

impl CorrelationSeries {
    /// Columns `kappa_t,C12,R`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "kappa_t,C12,R")?;
        for ((t, c), r) in self.kappa_t.iter().zip(&self.c12).zip(&self.r) {
            writeln!(w, "{t:?},{c:?},{r:?}")?;
        }
        Ok(())
    }

    /// Whitespace-separated columns for plotting tools, one comment line.
    pub fn write_plot_data(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# r = {:?}  kappa_t C12 R", self.meta.r)?;
        for ((t, c), r) in self.kappa_t.iter().zip(&self.c12).zip(&self.r) {
            writeln!(w, "{t:?} {c:?} {r:?}")?;
        }
        Ok(())
    }
}

fn check_grid(kappa_t: &[f64]) -> Result<()> {
    if kappa_t.is_empty() {
        return Err(invalid("t_grid", "must not be empty"));
    }
    if kappa_t.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(invalid("t_grid", "times must be finite and >= 0"));
    }
    if kappa_t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t_grid", "times must increase"));
    }
    Ok(())
}

fn series_from_moments(
    m: &QuadratureMoments,
    kappa_t: &[f64],
    kappa_dt: f64,
    meta: SeriesMetadata,
) -> Result<CorrelationSeries> {
    check_grid(kappa_t)?;
    let mut c = Vec::with_capacity(kappa_t.len());
    let mut r = Vec::with_capacity(kappa_t.len());
    for &t in kappa_t {
        // κ = 1 in these units
        r.push(ratio_r(t, kappa_dt, 1.0, m)?);
        c.push(c12_from_moments(t, kappa_dt, 1.0, m)?);
    }
    Ok(CorrelationSeries {
        kappa_t: kappa_t.to_vec(),
        c12: c,
        r,
        meta,
    })
}

/// One bichromatic-scheme series per ratio, real couplings, `θ₁ = θ₂ = 0`.
pub fn figure2(r_list: &[f64], kappa_t: &[f64], kappa_dt: f64) -> Result<Vec<CorrelationSeries>> {
    if r_list.is_empty() {
        return Err(invalid("r_list", "must not be empty"));
    }
    r_list
        .iter()
        .map(|&r| {
            let m = quadrature_moments(&Couplings::from_ratio(r), 0.0, 0.0)?;
            let meta = SeriesMetadata {
                r,
                theta1: 0.0,
                theta2: 0.0,
                kappa_dt,
                scheme: SchemeTag::Bichromatic,
                kappa_tau: None,
            };
            series_from_moments(&m, kappa_t, kappa_dt, meta)
        })
        .collect()
}

/// Joint state of the two output pulses of the sequential scheme: the
/// cavity mode after the squeezing pulse and, after the swap, the motional
/// mode mapped onto the cavity with phase `e^{i arg χ}`.
pub fn scheme2_pulse_pair(chi: C64, t1: f64) -> Result<GaussianState> {
    let squeezed = GaussianState::vacuum(2)?.apply_bogoliubov(&scheme2_squeeze(chi, t1)?)?;
    squeezed.apply_bogoliubov(&BogoliubovMap::phase_rotation(&SCHEME2_LABELS, 1, chi.arg())?)
}

/// Delayed two-pulse correlation of the sequential scheme. The effective
/// `r` follows from `tanh|χ|T₁ = 2r/(1 + r²)` and the signal has the same
/// form as the bichromatic one, evaluated on the pulse-pair moments.
#[allow(clippy::too_many_arguments)]
pub fn scheme2_correlation(
    chi: C64,
    t1: f64,
    tau: f64,
    kappa_t: &[f64],
    kappa_dt: f64,
    kappa: f64,
    theta1: f64,
    theta2: f64,
) -> Result<CorrelationSeries> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    if !(kappa * tau >= MIN_KAPPA_TAU) {
        return Err(invalid(
            "tau",
            format!("kappa*tau = {} is below {MIN_KAPPA_TAU}; pulses would overlap", kappa * tau),
        ));
    }
    let r = effective_ratio_from_tanh((chi.norm() * t1).tanh())?;
    let pair = scheme2_pulse_pair(chi, t1)?;
    let m = QuadratureMoments {
        q11: pair.second_moment(0, theta1, 0, theta1)?,
        q22: pair.second_moment(1, theta2, 1, theta2)?,
        q12: pair.second_moment(0, theta1, 1, theta2)?,
    };
    let meta = SeriesMetadata {
        r,
        theta1,
        theta2,
        kappa_dt,
        scheme: SchemeTag::Sequential,
        kappa_tau: Some(kappa * tau),
    };
    series_from_moments(&m, kappa_t, kappa_dt, meta)
}

/// Single shared rate, rejecting unequal cavity decay.
pub fn equal_rate(kappa: [f64; 2]) -> Result<f64> {
    if (kappa[0] - kappa[1]).abs() > 1e-12 * kappa[0].abs().max(kappa[1].abs()) {
        return Err(invalid(
            "kappa",
            format!("output model needs equal cavity rates, got {} and {}", kappa[0], kappa[1]),
        ));
    }
    Ok(kappa[0])
}

/// Plot script stub for a set of exported plot-data files.
pub fn gnuplot_script(files: &[(f64, String)]) -> String {
    let mut s = String::from(
        "set xlabel 'kappa t'\nset ylabel 'C12'\nset yrange [0:1.05]\nplot \\\n",
    );
    let lines: Vec<String> = files
        .iter()
        .map(|(r, f)| format!("  '{f}' using 1:2 with lines title 'r = {r}'"))
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}
