//! JSON run configuration: one file describes the physics, the word, and the
//! probes, so a run is reproducible from a single artifact.

use std::path::{Path, PathBuf};

use ifock_core::{C64, Dispersion, EpsilonSeq, FormFactor, PhysParams};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must be 1.
    pub schema: u32,
    #[serde(default)]
    pub phys: PhysConfig,
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub form_factors: Vec<FormFactorConfig>,
    pub epsilon: Option<String>,
    pub times: Option<Vec<f64>>,
    /// Word slot j takes `form_factors[factor_map[j-1]]` (0-based indices).
    /// Defaults to using `form_factors` in order when lengths already match.
    pub factor_map: Option<Vec<usize>>,
    pub probe_p: Option<ProbeGrid>,
    pub lambda_list: Option<Vec<f64>>,
    pub omega_probe: Option<f64>,
    #[serde(default)]
    pub route: RouteSel,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema != 1 {
            return Err(CliError::Config(format!(
                "unsupported schema version {} (this build reads schema 1)",
                cfg.schema
            )));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysConfig {
    pub hbar: f64,
    pub mass: f64,
    pub dim: usize,
    pub root_tol: f64,
    pub quad_tol: f64,
}

impl Default for PhysConfig {
    fn default() -> Self {
        let pp = PhysParams::default();
        Self { hbar: pp.hbar, mass: pp.mass, dim: pp.dim, root_tol: pp.root_tol, quad_tol: pp.quad_tol }
    }
}

impl PhysConfig {
    pub fn to_params(self) -> Result<PhysParams, CliError> {
        let pp = PhysParams {
            hbar: self.hbar,
            mass: self.mass,
            dim: self.dim,
            root_tol: self.root_tol,
            quad_tol: self.quad_tol,
        };
        pp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if pp.dim != 1 {
            return Err(CliError::Config(
                "the command-line driver evaluates shell sums and supports dim = 1 only".into(),
            ));
        }
        Ok(pp)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DispersionConfig {
    Constant { omega0: f64 },
    Quadratic { omega0: f64, mu: f64 },
    Linear { c: f64 },
}

impl DispersionConfig {
    pub fn to_core(self) -> Result<Dispersion, CliError> {
        let disp = match self {
            DispersionConfig::Constant { omega0 } => Dispersion::Constant { omega0 },
            DispersionConfig::Quadratic { omega0, mu } => Dispersion::Quadratic { omega0, mu },
            DispersionConfig::Linear { c } => Dispersion::Linear { c },
        };
        disp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(disp)
    }
}

/// Gaussian envelope `amp * exp(-(k - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormFactorConfig {
    pub amp_re: f64,
    #[serde(default)]
    pub amp_im: f64,
    pub center: f64,
    pub width: f64,
}

impl FormFactorConfig {
    pub fn to_core(self) -> Result<FormFactor, CliError> {
        FormFactor::gaussian_1d(C64::new(self.amp_re, self.amp_im), self.center, self.width)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Probe momenta: either an explicit list or an inclusive evenly spaced grid.
#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ProbeGrid {
    List(Vec<f64>),
    Linspace { start: f64, stop: f64, num: usize },
}

impl ProbeGrid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let vals = match *self {
            ProbeGrid::List(ref v) => v.clone(),
            ProbeGrid::Linspace { start, stop, num } => {
                if num == 0 {
                    return Err(CliError::Config("probe_p.num must be positive".into()));
                }
                if num == 1 {
                    vec![start]
                } else {
                    let step = (stop - start) / (num - 1) as f64;
                    (0..num).map(|i| start + step * i as f64).collect()
                }
            }
        };
        if vals.is_empty() {
            return Err(CliError::Config("probe_p must be non-empty".into()));
        }
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config("probe_p values must be finite".into()));
        }
        Ok(vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteSel {
    Shell,
    Fock,
    Noise,
    #[default]
    All,
}

/// The fully resolved word: roles, windows, and one form factor per slot.
pub struct WordSetup {
    pub eps: EpsilonSeq,
    pub times: Vec<f64>,
    pub factors: Vec<FormFactor>,
}

pub fn resolve_epsilon(
    cfg: Option<&RunConfig>,
    flag: Option<&str>,
) -> Result<EpsilonSeq, CliError> {
    let s = flag
        .or_else(|| cfg.and_then(|c| c.epsilon.as_deref()))
        .ok_or_else(|| CliError::Config("epsilon required (config field or --epsilon)".into()))?;
    EpsilonSeq::parse(s).map_err(|e| CliError::Config(e.to_string()))
}

pub fn factor_pool(cfg: &RunConfig) -> Result<Vec<FormFactor>, CliError> {
    cfg.form_factors.iter().map(|f| f.to_core()).collect()
}

/// Picks `want` factors from the pool, via `factor_map` when present.
pub fn select_factors(
    pool: &[FormFactor],
    map: Option<&[usize]>,
    want: usize,
) -> Result<Vec<FormFactor>, CliError> {
    match map {
        Some(ix) => {
            if ix.len() != want {
                return Err(CliError::Config(format!(
                    "factor_map has {} entries, need {want}",
                    ix.len()
                )));
            }
            ix.iter()
                .map(|&i| {
                    pool.get(i).cloned().ok_or_else(|| {
                        CliError::Config(format!(
                            "factor_map index {i} out of range (have {} form_factors)",
                            pool.len()
                        ))
                    })
                })
                .collect()
        }
        None => {
            if pool.len() != want {
                return Err(CliError::Config(format!(
                    "need {want} form factors, have {}; give factor_map to reuse entries",
                    pool.len()
                )));
            }
            Ok(pool.to_vec())
        }
    }
}

pub fn word_setup(cfg: &RunConfig, eps_flag: Option<&str>) -> Result<WordSetup, CliError> {
    let eps = resolve_epsilon(Some(cfg), eps_flag)?;
    let times = cfg
        .times
        .clone()
        .ok_or_else(|| CliError::Config("times required for word evaluation".into()))?;
    let pool = factor_pool(cfg)?;
    let factors = select_factors(&pool, cfg.factor_map.as_deref(), eps.len())?;
    Ok(WordSetup { eps, times, factors })
}
