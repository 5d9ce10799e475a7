//! Command implementations. Every command writes deterministic output:
//! fixed row order, fixed float formatting, CSV with a header row.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ifock_core::interacting::{vacuum_moment, ModuleVector};
use ifock_core::moments::{bose_moment, limit_moment, prelimit_moment};
use ifock_core::noise::noise_moment;
use ifock_core::spectral::{pairing_kernel, SpectralCtx, SpectralError};
use ifock_core::{C64, CorrelatorSpec, Dispersion, PhysParams};

use crate::config::{self, RouteSel, RunConfig, WordSetup};
use crate::error::{from_interacting, from_moment, from_noise, from_spectral, CliError};

pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub epsilon: Option<String>,
    pub out: Option<PathBuf>,
}

fn require_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let path = args
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --config <path>".into()))?;
    RunConfig::load(path)
}

fn physics(cfg: &RunConfig) -> Result<(PhysParams, Dispersion), CliError> {
    Ok((cfg.phys.to_params()?, cfg.dispersion.to_core()?))
}

fn probes(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    cfg.probe_p
        .as_ref()
        .ok_or_else(|| CliError::Config("probe_p required".into()))?
        .values()
}

fn out_path(args: &CommonArgs, cfg: Option<&RunConfig>) -> Option<PathBuf> {
    args.out.clone().or_else(|| cfg.and_then(|c| c.out.clone()))
}

/// 17 significant digits: round-trips every f64.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn spec_at(w: &WordSetup, p: f64) -> Result<CorrelatorSpec, CliError> {
    CorrelatorSpec::new(w.eps.clone(), w.times.clone(), w.factors.clone(), vec![p])
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn partition(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = match args.config.as_deref() {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let eps = config::resolve_epsilon(cfg.as_ref(), args.epsilon.as_deref())?;
    let pairing = eps.wigner_pairing();
    let count = eps.enumerate_pairings().len();
    let rendered = pairing.as_ref().map_or_else(|| "none".to_string(), |p| p.to_string());
    println!("epsilon: {eps}");
    println!("trivial: {}", pairing.is_none());
    println!("pairing: {rendered}");
    println!("pairings: {count}");
    if let Some(path) = out_path(args, cfg.as_ref()) {
        let mut wtr = csv_writer(Some(&path))?;
        wtr.write_record(["epsilon", "trivial", "pairing", "pairing_count"])
            .map_err(csv_err)?;
        wtr.write_record([
            eps.to_string(),
            pairing.is_none().to_string(),
            rendered,
            count.to_string(),
        ])
        .map_err(csv_err)?;
        wtr.flush()?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn build_fock_tree(
    w: &WordSetup,
    pp: &PhysParams,
    disp: &Dispersion,
) -> Result<ifock_core::spectral::PElement, CliError> {
    let ctx = SpectralCtx::new(*pp, *disp);
    let phis: Vec<ModuleVector> = w
        .times
        .iter()
        .zip(&w.factors)
        .map(|(&t, f)| ModuleVector::windowed(t, f.clone()))
        .collect::<Result<_, _>>()
        .map_err(|e| from_interacting(e, f64::NAN))?;
    vacuum_moment(&w.eps, &phis, &ctx).map_err(|e| from_interacting(e, f64::NAN))
}

pub fn moment(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let (pp, disp) = physics(&cfg)?;
    let w = config::word_setup(&cfg, args.epsilon.as_deref())?;
    let ps = probes(&cfg)?;
    let want_shell = matches!(cfg.route, RouteSel::Shell | RouteSel::All);
    let want_fock = matches!(cfg.route, RouteSel::Fock | RouteSel::All);
    let want_noise = matches!(cfg.route, RouteSel::Noise | RouteSel::All);
    let tree = if want_fock { Some(build_fock_tree(&w, &pp, &disp)?) } else { None };

    let mut wtr = csv_writer(out_path(args, Some(&cfg)).as_deref())?;
    wtr.write_record(["p", "re", "im", "route"]).map_err(csv_err)?;
    for &p in &ps {
        let spec = spec_at(&w, p)?;
        if want_shell {
            let v = limit_moment(&spec, &pp, &disp).map_err(|e| from_moment(e, p))?.value;
            wtr.write_record([sig17(p), sig17(v.re), sig17(v.im), "shell".into()])
                .map_err(csv_err)?;
        }
        if want_fock {
            let v = tree.as_ref().unwrap().eval(p).map_err(|e| from_spectral(e, p))?;
            wtr.write_record([sig17(p), sig17(v.re), sig17(v.im), "fock".into()])
                .map_err(csv_err)?;
        }
        if want_noise {
            let v = noise_moment(&spec, &pp, &disp).map_err(|e| from_noise(e, p))?;
            wtr.write_record([sig17(p), sig17(v.re), sig17(v.im), "noise".into()])
                .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn bose_moment_cmd(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let (pp, disp) = physics(&cfg)?;
    let w = config::word_setup(&cfg, args.epsilon.as_deref())?;
    let omega = cfg
        .omega_probe
        .ok_or_else(|| CliError::Config("omega_probe required for bose-moment".into()))?;
    let v = bose_moment(&w.eps, &w.times, &w.factors, omega, &pp, &disp)
        .map_err(|e| from_moment(e, omega))?;
    let mut wtr = csv_writer(out_path(args, Some(&cfg)).as_deref())?;
    wtr.write_record(["omega_probe", "re", "im"]).map_err(csv_err)?;
    wtr.write_record([sig17(omega), sig17(v.re), sig17(v.im)]).map_err(csv_err)?;
    wtr.flush()?;
    Ok(())
}

pub fn prelimit(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let (pp, disp) = physics(&cfg)?;
    let w = config::word_setup(&cfg, args.epsilon.as_deref())?;
    let ps = probes(&cfg)?;
    if ps.len() != 1 {
        return Err(CliError::Config(
            "prelimit emits one block of rows per lambda; give exactly one probe_p".into(),
        ));
    }
    let p = ps[0];
    let lambdas = cfg
        .lambda_list
        .clone()
        .ok_or_else(|| CliError::Config("lambda_list required for prelimit".into()))?;
    if lambdas.is_empty() {
        return Err(CliError::Config("lambda_list must be non-empty".into()));
    }
    let spec = spec_at(&w, p)?;
    let mut wtr = csv_writer(out_path(args, Some(&cfg)).as_deref())?;
    wtr.write_record(["lambda", "pairing_id", "re", "im", "crossing_flag"]).map_err(csv_err)?;
    for &lam in &lambdas {
        let (total, per) = prelimit_moment(&spec, &pp, &disp, lam).map_err(|e| from_moment(e, p))?;
        wtr.write_record([sig17(lam), "total".into(), sig17(total.re), sig17(total.im), "".into()])
            .map_err(csv_err)?;
        for (i, (pairing, v)) in per.iter().enumerate() {
            wtr.write_record([
                sig17(lam),
                (i + 1).to_string(),
                sig17(v.re),
                sig17(v.im),
                (!pairing.is_noncrossing()).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn crosscheck(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let (pp, disp) = physics(&cfg)?;
    let w = config::word_setup(&cfg, args.epsilon.as_deref())?;
    let ps = probes(&cfg)?;
    let tree = build_fock_tree(&w, &pp, &disp)?;

    let rel = |a: C64, b: C64| {
        let scale = a.norm().max(b.norm());
        if scale == 0.0 { 0.0 } else { (a - b).norm() / scale }
    };

    let mut worst = 0.0_f64;
    let mut wtr = csv_writer(out_path(args, Some(&cfg)).as_deref())?;
    wtr.write_record([
        "p",
        "shell_re",
        "shell_im",
        "fock_re",
        "fock_im",
        "noise_re",
        "noise_im",
        "max_rel_dev",
    ])
    .map_err(csv_err)?;
    for &p in &ps {
        let spec = spec_at(&w, p)?;
        let s = limit_moment(&spec, &pp, &disp).map_err(|e| from_moment(e, p))?.value;
        let f = tree.eval(p).map_err(|e| from_spectral(e, p))?;
        let n = noise_moment(&spec, &pp, &disp).map_err(|e| from_noise(e, p))?;
        let dev = rel(s, f).max(rel(s, n)).max(rel(f, n));
        worst = worst.max(dev);
        wtr.write_record([
            sig17(p),
            sig17(s.re),
            sig17(s.im),
            sig17(f.re),
            sig17(f.im),
            sig17(n.re),
            sig17(n.im),
            sig17(dev),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    println!("crosscheck: max pairwise relative deviation {worst:.3e} over {} probes", ps.len());
    if worst > 1e-4 {
        return Err(CliError::Exceeded { dev: worst });
    }
    Ok(())
}

pub fn kernel_scan(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = require_config(args)?;
    let (pp, disp) = physics(&cfg)?;
    let pool = config::factor_pool(&cfg)?;
    let pair = config::select_factors(&pool, cfg.factor_map.as_deref(), 2)?;
    let ps = probes(&cfg)?;
    let mut wtr = csv_writer(out_path(args, Some(&cfg)).as_deref())?;
    wtr.write_record(["p", "re", "im", "degenerate"]).map_err(csv_err)?;
    for &p in &ps {
        match pairing_kernel(&pp, &disp, &pair[0], &pair[1], p) {
            Ok(v) => wtr
                .write_record([sig17(p), sig17(v.re), sig17(v.im), "false".into()])
                .map_err(csv_err)?,
            Err(SpectralError::DegenerateShell { .. }) => wtr
                .write_record([sig17(p), String::new(), String::new(), "true".into()])
                .map_err(csv_err)?,
            Err(e) => return Err(from_spectral(e, p)),
        }
    }
    wtr.flush()?;
    Ok(())
}
