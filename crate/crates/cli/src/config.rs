//! Pipeline configuration. Energies in µeV, times in ps; converted to the
//! core's ns units here and nowhere else.

use std::path::{Path, PathBuf};

use cqed_core::fitting::{sigma_sd_grid, EnvelopeInit, FixedSystem, TransmissionInit};
use cqed_core::oracle::verify::VerifyOptions;
use cqed_core::quantities::energy_to_rate;
use cqed_core::synthetic::SyntheticSystem;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub system: Option<SystemConfig>,
    pub sigma_sd: SigmaGridConfig,
    /// Doublet splitting guess for spectrum fits; falls back to `system.delta_uev`.
    pub delta_uev: Option<f64>,
    pub transmission: Option<TransmissionInit>,
    pub envelope: EnvelopeConfig,
    pub decay: DecayConfig,
    pub purcell: Option<PurcellConfig>,
    pub simulate: SyntheticSystem,
    pub verify: VerifyOptions,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Free-space spectrum, (µeV, counts).
    pub spectrum: Option<PathBuf>,
    /// Cavity transmission, (µeV, counts).
    pub transmission: Option<PathBuf>,
    /// Spectral envelope, (µeV, counts).
    pub envelope: Option<PathBuf>,
    /// Cavity decay histogram, (ps, counts).
    pub decay: Option<PathBuf>,
    /// Measured instrument response, (ps, counts).
    pub irf: Option<PathBuf>,
    /// `linewidth_table.csv` as written by fit-spectrum.
    pub linewidth_table: Option<PathBuf>,
    /// g curves as written by fit-envelope and fit-decay.
    pub envelope_g_curve: Option<PathBuf>,
    pub decay_g_curve: Option<PathBuf>,
    /// (power µW, intensity) pairs for saturation and powerlaw.
    pub points: Option<PathBuf>,
}

/// Quantities held fixed while g is fitted.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kappa_uev: f64,
    pub sigma_vib_uev: f64,
    pub delta_uev: f64,
    /// Free-space radiative lifetime, giving γ.
    pub tau_fs_ps: f64,
    /// Photon storage time; 1/κ when absent.
    #[serde(default)]
    pub storage_time_ps: Option<f64>,
    #[serde(default = "one")]
    pub mode_order: u32,
}

fn one() -> u32 {
    1
}

impl SystemConfig {
    pub fn fixed(&self) -> Result<FixedSystem, Failure> {
        for (name, v) in [("kappa_uev", self.kappa_uev), ("tau_fs_ps", self.tau_fs_ps)] {
            positive(name, v)?;
        }
        let storage = match self.storage_time_ps {
            Some(t) => Some(1e3 / positive("storage_time_ps", t)?),
            None => None,
        };
        Ok(FixedSystem {
            kappa_inv_ns: energy_to_rate(self.kappa_uev),
            sigma_vib_uev: self.sigma_vib_uev,
            delta_uev: self.delta_uev,
            gamma_inv_ns: 1e3 / self.tau_fs_ps,
            storage_rate_inv_ns: storage,
            mode_order: self.mode_order,
        })
    }
}

/// Explicit `values_uev`, or `0..=max_uev` in steps of `step_uev`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaGridConfig {
    pub values_uev: Option<Vec<f64>>,
    pub max_uev: f64,
    pub step_uev: f64,
}

impl Default for SigmaGridConfig {
    fn default() -> Self {
        Self {
            values_uev: None,
            max_uev: 150.0,
            step_uev: 5.0,
        }
    }
}

impl SigmaGridConfig {
    pub fn grid(&self) -> Result<Vec<f64>, Failure> {
        let g = match &self.values_uev {
            Some(v) => v.clone(),
            None => sigma_sd_grid(self.max_uev, self.step_uev).map_err(|e| Failure::config("config_invalid", e.to_string()))?,
        };
        if g.is_empty() {
            return Err(Failure::config("empty_sigma_grid", "the σ_SD grid is empty"));
        }
        if g.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Failure::config(
                "config_invalid",
                "σ_SD grid values must be finite, nonnegative and strictly increasing",
            ));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub g_uev: f64,
    pub omega_x_bar_uev: f64,
    pub omega_a_bar_uev: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            g_uev: 30.0,
            omega_x_bar_uev: 0.0,
            omega_a_bar_uev: 0.0,
        }
    }
}

impl EnvelopeConfig {
    pub fn init(&self) -> EnvelopeInit {
        EnvelopeInit {
            g_uev: self.g_uev,
            omega_x_bar_uev: self.omega_x_bar_uev,
            omega_a_bar_uev: self.omega_a_bar_uev,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub g_uev: f64,
    pub tau_long_ps: f64,
    pub t0_ps: f64,
    pub detuning_uev: f64,
    /// Gaussian IRF width used when no IRF file is given.
    pub irf_fwhm_ps: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            g_uev: 30.0,
            tau_long_ps: 500.0,
            t0_ps: 100.0,
            detuning_uev: 0.0,
            irf_fwhm_ps: 40.0,
        }
    }
}

/// Either block may be given; each produces its own Purcell factor.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurcellConfig {
    pub tau_fs_ps: Option<f64>,
    pub tau_cav_ps: Option<f64>,
    pub eta_qy: Option<f64>,
    pub n: Option<f64>,
    pub q_cav: Option<f64>,
    /// Emitter quality factor; infinite when absent.
    pub q_em: Option<f64>,
    pub lambda3_over_v: Option<f64>,
    pub lambda_nm: Option<f64>,
    pub volume_um3: Option<f64>,
}

pub fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Failure::config("config_invalid", format!("`{name}` must be positive, got {v}")))
    }
}

/// Parsed configuration with paths resolved, plus global flags.
pub struct Context {
    pub config: PipelineConfig,
    base: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Context {
    pub fn load(path: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, Failure> {
        let (config, base) = match path {
            None => (PipelineConfig::default(), PathBuf::from(".")),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    let code = if e.kind() == std::io::ErrorKind::NotFound {
                        "config_not_found"
                    } else {
                        "config_unreadable"
                    };
                    Failure::config(code, format!("{}: {e}", p.display()))
                })?;
                let config: PipelineConfig = serde_json::from_str(&text)
                    .map_err(|e| Failure::config("config_invalid", format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
        };
        Ok(Self {
            config,
            base,
            out,
            seed,
        })
    }

    /// Resolves a configured input, which must exist.
    pub fn input(&self, name: &str, path: &Option<PathBuf>) -> Result<PathBuf, Failure> {
        let p = path
            .as_ref()
            .ok_or_else(|| Failure::config("missing_input", format!("config lacks `inputs.{name}`")))?;
        let full = if p.is_absolute() { p.clone() } else { self.base.join(p) };
        if !full.exists() {
            return Err(Failure::input("input_not_found", format!("{}: no such file", full.display())));
        }
        Ok(full)
    }

    pub fn system(&self) -> Result<SystemConfig, Failure> {
        self.config
            .system
            .ok_or_else(|| Failure::config("missing_system", "config lacks the `system` block"))
    }

    pub fn seed(&self, fallback: u64) -> u64 {
        self.seed.or(self.config.seed).unwrap_or(fallback)
    }
}
