//! Run configuration: TOML or JSON, frequencies in the declared units.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use cavity_epr::fock_algebra::C64;
use cavity_epr::physical_model::SystemParams;
use cavity_epr::regime_validator::{indium_preset, CavityParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Cycles per second; multiplied by 2π on load.
    #[default]
    Hz,
    /// Angular frequencies, used as given.
    RadS,
}

impl Units {
    fn scale(self) -> f64 {
        match self {
            Units::Hz => 2.0 * PI,
            Units::RadS => 1.0,
        }
    }
}

/// Frequencies: `nu`, `delta`, `omega`, `g`, `cavity_detuning`, `gamma`,
/// `kappa`. Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub nu: f64,
    pub delta: f64,
    pub omega: f64,
    pub eta: f64,
    /// Coupling magnitudes; derived from the cavity section when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<[f64; 2]>,
    #[serde(default)]
    pub g_phase: [f64; 2],
    /// Defaults to `(ν, −ν)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_detuning: Option<[f64; 2]>,
    #[serde(default)]
    pub phi: [f64; 2],
    #[serde(default = "default_theta_c")]
    pub theta_c: f64,
    #[serde(default)]
    pub theta_l: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub kappa: [f64; 2],
}

fn default_theta_c() -> f64 {
    FRAC_PI_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub sigma_tilde: f64,
    /// Free spectral range, a frequency.
    pub fsr: f64,
    pub finesse: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorChoice {
    #[default]
    Krylov,
    Rk4,
}

/// Knobs for every subcommand; each one reads only its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// `(atom, cav1, cav2, motion)` truncation for full-compare.
    pub dims: [usize; 4],
    /// Full-compare pulse length in seconds; the half period when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub propagator: PropagatorChoice,
    pub compensate_dispersive_shift: bool,
    /// Effective run: number of intervals and end time in units of T_π.
    pub samples: usize,
    pub t_end_over_tpi: f64,
    pub nbar_motion: f64,
    /// Homodyne time grid: `κt` from 0 to `kappa_t_max` in `kappa_t_steps`
    /// intervals, bins of `κδt`.
    pub r_list: Vec<f64>,
    pub kappa_dt: f64,
    pub kappa_t_max: f64,
    pub kappa_t_steps: usize,
    pub theta1: f64,
    pub theta2: f64,
    /// Sequential scheme: mean excitation after the first pulse, pulse
    /// separation in units of 1/κ.
    pub target_n: f64,
    pub kappa_tau: f64,
    pub threshold: f64,
    /// Also check the sequential scheme at `target_n` in `regimes`.
    pub regimes_scheme2: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dims: [2, 12, 14, 14],
            duration: None,
            propagator: PropagatorChoice::Krylov,
            compensate_dispersive_shift: true,
            samples: 50,
            t_end_over_tpi: 1.0,
            nbar_motion: 0.0,
            r_list: vec![1.8, 1.5, 1.3, 1.1, 1.05],
            kappa_dt: 0.1,
            kappa_t_max: 3.0,
            kappa_t_steps: 300,
            theta1: 0.0,
            theta2: 0.0,
            target_n: 100.0,
            kappa_tau: 5.0,
            threshold: 5.0,
            regimes_scheme2: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavitySection>,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }

    /// In⁺ system and cavity in angular units.
    pub fn indium() -> Self {
        let (p, cav) = indium_preset();
        Self {
            units: Units::RadS,
            system: Some(SystemSection {
                nu: p.nu,
                delta: p.delta,
                omega: p.omega,
                eta: p.eta,
                g: None,
                g_phase: [0.0; 2],
                cavity_detuning: None,
                phi: p.phi,
                theta_c: p.theta_c,
                theta_l: p.theta_l,
                gamma: p.gamma,
                kappa: p.kappa,
            }),
            cavity: Some(CavitySection {
                sigma_tilde: cav.sigma_tilde,
                fsr: cav.fsr,
                finesse: cav.finesse,
            }),
            run: RunSection::default(),
        }
    }

    /// Sections present in `self` replace those of `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        let top = self.angular();
        let base = base.angular();
        RunConfig {
            units: Units::RadS,
            system: top.system.or(base.system),
            cavity: top.cavity.or(base.cavity),
            run: top.run,
        }
    }

    fn angular(&self) -> RunConfig {
        let s = self.units.scale();
        let scale2 = |a: [f64; 2]| [a[0] * s, a[1] * s];
        RunConfig {
            units: Units::RadS,
            system: self.system.as_ref().map(|sys| SystemSection {
                nu: sys.nu * s,
                delta: sys.delta * s,
                omega: sys.omega * s,
                eta: sys.eta,
                g: sys.g.map(scale2),
                g_phase: sys.g_phase,
                cavity_detuning: sys.cavity_detuning.map(scale2),
                phi: sys.phi,
                theta_c: sys.theta_c,
                theta_l: sys.theta_l,
                gamma: sys.gamma * s,
                kappa: scale2(sys.kappa),
            }),
            cavity: self.cavity.as_ref().map(|c| CavitySection {
                fsr: c.fsr * s,
                ..c.clone()
            }),
            run: self.run.clone(),
        }
    }

    /// Angular units, with the coupling and detunings filled in, so that
    /// feeding the result back as a config reproduces the run exactly.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.angular();
        let cavity = out.cavity.clone();
        if let Some(sys) = out.system.as_mut() {
            if sys.g.is_none() {
                sys.g = cavity.map(|c| {
                    let g = (c.sigma_tilde * sys.gamma * c.fsr).sqrt();
                    [g, g]
                });
            }
            sys.cavity_detuning.get_or_insert([sys.nu, -sys.nu]);
        }
        out
    }

    /// Rejects values no run can use: non-finite numbers, empty grids.
    pub fn check(&self) -> Result<(), CliError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Usage(format!("`{name}` must be finite, got {v}")))
            }
        };
        if let Some(s) = &self.system {
            for (n, v) in [
                ("nu", s.nu),
                ("delta", s.delta),
                ("omega", s.omega),
                ("eta", s.eta),
                ("theta_c", s.theta_c),
                ("theta_l", s.theta_l),
                ("gamma", s.gamma),
            ] {
                finite(n, v)?;
            }
            for v in s.kappa.iter().chain(&s.phi).chain(&s.g_phase) {
                finite("system array entry", *v)?;
            }
            for v in s.g.iter().chain(&s.cavity_detuning).flatten() {
                finite("system array entry", *v)?;
            }
        }
        let r = &self.run;
        for (n, v) in [
            ("kappa_dt", r.kappa_dt),
            ("kappa_t_max", r.kappa_t_max),
            ("t_end_over_tpi", r.t_end_over_tpi),
            ("nbar_motion", r.nbar_motion),
            ("target_n", r.target_n),
            ("kappa_tau", r.kappa_tau),
            ("threshold", r.threshold),
            ("theta1", r.theta1),
            ("theta2", r.theta2),
        ] {
            finite(n, v)?;
        }
        if r.samples == 0 || r.kappa_t_steps == 0 {
            return Err(CliError::Usage("`samples` and `kappa_t_steps` must be >= 1".into()));
        }
        Ok(())
    }

    pub fn require_r_list(&self) -> Result<&[f64], CliError> {
        if self.run.r_list.is_empty() {
            return Err(CliError::Usage(
                "`run.r_list` is empty; give at least one coupling ratio, e.g. r_list = [1.1]"
                    .into(),
            ));
        }
        Ok(&self.run.r_list)
    }

    pub fn kappa_grid(&self) -> Vec<f64> {
        let n = self.run.kappa_t_steps;
        (0..=n)
            .map(|k| self.run.kappa_t_max * k as f64 / n as f64)
            .collect()
    }

    /// System parameters in rad/s. Call on a resolved config.
    pub fn system_params(&self) -> Result<SystemParams, CliError> {
        let s = self
            .system
            .as_ref()
            .ok_or_else(|| CliError::Usage("missing [system] section (or --preset)".into()))?;
        let g = s.g.ok_or_else(|| {
            CliError::Usage("`system.g` missing and no [cavity] section to derive it".into())
        })?;
        let mut p = SystemParams::scheme1(
            s.nu,
            s.delta,
            s.omega,
            [
                C64::from_polar(g[0], s.g_phase[0]),
                C64::from_polar(g[1], s.g_phase[1]),
            ],
            s.eta,
        );
        if let Some(d) = s.cavity_detuning {
            p.cavity_detuning = d;
        }
        p.phi = s.phi;
        p.theta_c = s.theta_c;
        p.theta_l = s.theta_l;
        p.gamma = s.gamma;
        p.kappa = s.kappa;
        Ok(p)
    }

    pub fn cavity_params(&self) -> Result<CavityParams, CliError> {
        let c = self
            .cavity
            .as_ref()
            .ok_or_else(|| CliError::Usage("missing [cavity] section (or --preset)".into()))?;
        Ok(CavityParams {
            sigma_tilde: c.sigma_tilde,
            fsr: c.fsr,
            finesse: c.finesse,
        })
    }
}
