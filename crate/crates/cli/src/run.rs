//! One function per subcommand. Every numeric file is a pure function of
//! the resolved config.

use std::io::Write;
use std::path::{Path, PathBuf};

use cavity_epr::effective_dynamics::{
    coupling_constants, effective_ratio_from_tanh, half_period_map, scheme1_propagator,
    scheme2_beamsplitter, scheme2_coupling, Couplings,
};
use cavity_epr::fock_algebra::C64;
use cavity_epr::gaussian_oracle::GaussianState;
use cavity_epr::homodyne_output::{
    equal_rate, figure2 as figure2_series, gnuplot_script, scheme2_correlation, scheme2_pulse_pair,
    CorrelationSeries,
};
use cavity_epr::lindblad_integrator::{
    compare_full_vs_effective, ComparisonOptions, KrylovControl, Propagator,
};
use cavity_epr::regime_validator::{validate_scheme1, validate_scheme2, RegimeReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PropagatorChoice, RunConfig};
use crate::CliError;

pub struct Output<'a> {
    dir: PathBuf,
    command: &'static str,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation_unsafe: Option<bool>,
    results: T,
}

impl<'a> Output<'a> {
    pub fn new(dir: &Path, command: &'static str, config: &'a RunConfig) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command,
            config,
        }
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| CliError::io(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| CliError::io(&path, e))
    }

    /// `<command>.json` with version and resolved config, plus
    /// `resolved.json` which is itself a valid config.
    fn sidecar<T: Serialize>(&self, results: T, truncation_unsafe: Option<bool>) -> Result<(), CliError> {
        let side = Sidecar {
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            truncation_unsafe,
            results,
        };
        self.write(&format!("{}.json", self.command), |w| {
            w.extend_from_slice(pretty(&side).as_bytes());
            Ok(())
        })?;
        self.write("resolved.json", |w| {
            w.extend_from_slice(pretty(self.config).as_bytes());
            Ok(())
        })
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct EffectiveSummary {
    couplings: Couplings,
    r: Option<f64>,
    theta: Option<f64>,
    t_pi: Option<f64>,
    mean_photon_number: Option<f64>,
    /// Motional fidelity between t = 0 and T_π.
    motional_return_fidelity: Option<f64>,
}

pub fn effective(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let params = cfg.system_params()?;
    let couplings = coupling_constants(&params)?;
    let t_pi = couplings.half_period()?;
    let start = GaussianState::thermal(&[0.0, 0.0, cfg.run.nbar_motion])?;
    let n = cfg.run.samples;
    let t_end = cfg.run.t_end_over_tpi * t_pi;
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = t_end * k as f64 / n as f64;
        let s = start.apply_bogoliubov(&scheme1_propagator(&couplings, t)?)?;
        let pair = s.pair_amplitude(0, 1)?;
        let theta = -pair.arg() / 2.0;
        rows.push((
            t,
            s.occupation(0)?,
            s.occupation(1)?,
            s.occupation(2)?,
            pair,
            s.epr_variance_between(0, 1, theta, theta)?.0,
        ));
    }
    out.write("effective.csv", |w| {
        writeln!(w, "t,n_cav1,n_cav2,n_motion,pair_re,pair_im,epr_variance")?;
        for (t, n1, n2, nb, p, v) in &rows {
            writeln!(w, "{t:?},{n1:?},{n2:?},{nb:?},{:?},{:?},{v:?}", p.re, p.im)?;
        }
        Ok(())
    })?;
    let (_, half) = half_period_map(&couplings)?;
    let back = start.apply_bogoliubov(&half)?;
    let fid = back.reduced(&[2])?.fidelity(&start.reduced(&[2])?)?;
    let summary = EffectiveSummary {
        couplings,
        r: couplings.ratio(),
        theta: couplings.theta(),
        t_pi: Some(t_pi),
        mean_photon_number: couplings.mean_photon_number().ok(),
        motional_return_fidelity: Some(fid),
    };
    println!(
        "effective: r = {:.6}, T_pi = {:.6e}, <n> = {:.6}, motional return fidelity = {:.12}",
        summary.r.unwrap_or(f64::NAN),
        t_pi,
        summary.mean_photon_number.unwrap_or(f64::NAN),
        fid
    );
    out.sidecar(summary, None)
}

pub fn full_compare(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let params = cfg.system_params()?;
    let mut options = ComparisonOptions {
        duration: cfg.run.duration,
        compensate_dispersive_shift: cfg.run.compensate_dispersive_shift,
        ..ComparisonOptions::default()
    };
    if cfg.run.propagator == PropagatorChoice::Rk4 {
        options.propagator = Propagator::Rk4;
    } else {
        options.propagator = Propagator::Krylov(KrylovControl {
            samples: 1,
            ..KrylovControl::default()
        });
    }
    let report = compare_full_vs_effective(&params, cfg.run.dims, &options)?;
    let e = &report.errors;
    let rows: [(&str, f64, f64, f64); 4] = [
        ("n_cav1", report.full.n_cav1, report.effective.n_cav1, e.n_cav1),
        ("n_cav2", report.full.n_cav2, report.effective.n_cav2, e.n_cav2),
        ("n_motion", report.full.n_motion, report.effective.n_motion, e.n_motion),
        (
            "pair_magnitude",
            report.full.pair.norm(),
            report.effective.pair.norm(),
            e.pair_magnitude,
        ),
    ];
    out.write("comparison.csv", |w| {
        writeln!(w, "quantity,full,effective,relative_error")?;
        for (q, f, eff, err) in rows {
            writeln!(w, "{q},{f:?},{eff:?},{err:?}")?;
        }
        Ok(())
    })?;
    println!(
        "full-compare: max occupation error = {:.4}, fidelity = {}, truncation flagged = {}",
        e.max_occupation(),
        report
            .fidelity
            .map_or_else(|| "n/a".to_string(), |f| format!("{f:.6}")),
        report.truncation_unsafe
    );
    let flag = report.truncation_unsafe;
    out.sidecar(report, Some(flag))
}

fn write_series(out: &Output, stem: &str, series: &[CorrelationSeries]) -> Result<(), CliError> {
    let mut plots = Vec::new();
    for s in series {
        let name = format!("{stem}_r{}", s.meta.r);
        out.write(&format!("{name}.csv"), |w| s.write_csv(w))?;
        out.write(&format!("{name}.dat"), |w| s.write_plot_data(w))?;
        plots.push((s.meta.r, format!("{name}.dat")));
    }
    out.write(&format!("{stem}.gp"), |w| w.write_all(gnuplot_script(&plots).as_bytes()))
}

pub fn figure2(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let r_list = cfg.require_r_list()?;
    let grid = cfg.kappa_grid();
    let series: Vec<CorrelationSeries> = r_list
        .par_iter()
        .map(|&r| figure2_series(&[r], &grid, cfg.run.kappa_dt).map(|mut v| v.remove(0)))
        .collect::<Result<_, _>>()?;
    write_series(out, "figure2", &series)?;
    for s in &series {
        println!("figure2: r = {}  C12(0) = {:.6}", s.meta.r, s.c12[0]);
    }
    let meta: Vec<_> = series.iter().map(|s| &s.meta).collect();
    out.sidecar(meta, None)
}

#[derive(Serialize)]
struct Scheme2Summary<'a> {
    chi: C64,
    t1: f64,
    t2: f64,
    kappa: f64,
    r: f64,
    /// Variance of the pulse-pair quadrature difference over shot noise.
    epr_over_shot: f64,
    series: &'a cavity_epr::homodyne_output::SeriesMetadata,
}

pub fn scheme2(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let params = cfg.system_params()?;
    let chi = scheme2_coupling(&params)?;
    if !(cfg.run.target_n > 0.0) {
        return Err(cavity_epr::Error::InvalidParameter {
            name: "target_n",
            reason: "must be positive".into(),
        }
        .into());
    }
    let t1 = cfg.run.target_n.sqrt().asinh() / chi.norm();
    let (t2, _) = scheme2_beamsplitter(chi)?;
    let kappa = equal_rate(params.kappa)?;
    let tau = cfg.run.kappa_tau / kappa;
    let series = scheme2_correlation(
        chi,
        t1,
        tau,
        &cfg.kappa_grid(),
        cfg.run.kappa_dt,
        kappa,
        cfg.run.theta1,
        cfg.run.theta2,
    )?;
    let pair = scheme2_pulse_pair(chi, t1)?;
    let amp = pair.pair_amplitude(0, 1)?;
    let theta = -amp.arg() / 2.0;
    let epr = pair.epr_variance_between(0, 1, theta, theta)?.0 / 2.0;
    let r = effective_ratio_from_tanh((chi.norm() * t1).tanh())?;
    out.write("scheme2.csv", |w| series.write_csv(w))?;
    out.write("scheme2.dat", |w| series.write_plot_data(w))?;
    out.write("scheme2.gp", |w| {
        w.write_all(gnuplot_script(&[(r, "scheme2.dat".into())]).as_bytes())
    })?;
    println!("scheme2: |chi| T1 = {:.6}, r = {r:.6}, EPR/shot = {epr:.6e}", chi.norm() * t1);
    out.sidecar(
        Scheme2Summary {
            chi,
            t1,
            t2,
            kappa,
            r,
            epr_over_shot: epr,
            series: &series.meta,
        },
        None,
    )
}

#[derive(Serialize)]
struct RegimesSummary {
    bichromatic: RegimeReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sequential: Option<RegimeReport>,
    /// Best EPR variance over shot noise at the reported `r`.
    epr_over_shot: f64,
}

/// Minimal `Var(q₁ − q₂)/2` at `T_π` for real couplings of ratio `r`.
pub fn epr_over_shot(r: f64) -> Result<f64, CliError> {
    let (_, map) = half_period_map(&Couplings::from_ratio(r))?;
    let s = GaussianState::vacuum(3)?.apply_bogoliubov(&map)?;
    let theta = -s.pair_amplitude(0, 1)?.arg() / 2.0;
    Ok(s.epr_variance_between(0, 1, theta, theta)?.0 / 2.0)
}

pub fn regimes(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let params = cfg.system_params()?;
    let cavity = cfg.cavity_params()?;
    let bichromatic = validate_scheme1(&params, &cavity, cfg.run.threshold)?;
    print!("{}", bichromatic.table());
    let sequential = if cfg.run.regimes_scheme2 {
        let rep = validate_scheme2(&params, &cavity, cfg.run.target_n, cfg.run.threshold)?;
        print!("{}", rep.table());
        Some(rep)
    } else {
        None
    };
    let epr = epr_over_shot(bichromatic.rates.r)?;
    println!("EPR variance / shot noise at r = {:.4}: {epr:.5}", bichromatic.rates.r);
    let mut rows = Vec::new();
    for rep in std::iter::once(&bichromatic).chain(sequential.as_ref()) {
        for c in &rep.conditions {
            rows.push((rep.scheme.clone(), c.clone()));
        }
    }
    out.write("regimes.csv", |w| {
        writeln!(w, "scheme,condition,left,relation,right,margin,status")?;
        for (scheme, c) in &rows {
            writeln!(
                w,
                "{scheme},{},{:?},{},{:?},{:?},{:?}",
                c.id, c.left, c.relation, c.right, c.margin, c.status
            )?;
        }
        Ok(())
    })?;
    out.sidecar(
        RegimesSummary {
            bichromatic,
            sequential,
            epr_over_shot: epr,
        },
        None,
    )
}
