//! Seeded synthetic datasets for a single emitter–cavity system: a
//! free-space spectrum, a spectral envelope, a cavity decay and its IRF.

use serde::{Deserialize, Serialize};

use crate::dynamics::{decay_model_cavity, default_time_grid, DecayModelParams, IrfKernel};
use crate::envelope::envelope_full;
use crate::error::Result;
use crate::fitting::FixedSystem;
use crate::lineshape::{SampledCurve, UniformGrid, VoigtProfile};
use crate::oracle::synth_generate;
use crate::quantities::{energy_to_rate, CavityParams, EmitterParams};

/// Generating parameters. Energies in µeV, rates in ns⁻¹, times in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSystem {
    pub g_uev: f64,
    pub sigma_sd_uev: f64,
    /// Instantaneous linewidths ħ(γ+γ*ᵢ).
    pub gamma1_uev: f64,
    pub gamma2_uev: f64,
    pub delta_uev: f64,
    pub gamma_inv_ns: f64,
    pub kappa_uev: f64,
    pub sigma_vib_uev: f64,
    /// A₂/A₁.
    pub amplitude_ratio: f64,
    pub omega_x_bar_uev: f64,
    pub omega_a_bar_uev: f64,
    pub mode_order: u32,

    pub spectrum_half_width_uev: f64,
    pub spectrum_step_uev: f64,
    pub spectrum_signal_counts: f64,
    /// Flat detector floor, counts per bin.
    pub spectrum_background_per_bin: f64,

    pub envelope_half_width_uev: f64,
    pub envelope_step_uev: f64,
    pub envelope_counts: f64,
    /// Flat floor as a fraction of the envelope peak.
    pub envelope_background_fraction: f64,

    pub decay_t0_ns: f64,
    pub irf_fwhm_ns: f64,
    pub decay_counts: f64,
    pub a_long: f64,
    pub gamma_long_inv_ns: f64,
    /// Flat floor as a fraction of the decay peak.
    pub decay_background_fraction: f64,
}

impl Default for SyntheticSystem {
    fn default() -> Self {
        Self {
            g_uev: 40.0,
            sigma_sd_uev: 70.0,
            gamma1_uev: 250.0,
            gamma2_uev: 250.0,
            delta_uev: 700.0,
            gamma_inv_ns: 1.0 / 0.121,
            kappa_uev: 110.0,
            sigma_vib_uev: 679.4,
            amplitude_ratio: 0.8,
            omega_x_bar_uev: 0.0,
            omega_a_bar_uev: 30.0,
            mode_order: 14,
            spectrum_half_width_uev: 6000.0,
            spectrum_step_uev: 2.0,
            spectrum_signal_counts: 2e5,
            spectrum_background_per_bin: 840.0,
            envelope_half_width_uev: 2500.0,
            envelope_step_uev: 10.0,
            envelope_counts: 1e5,
            envelope_background_fraction: 0.01,
            decay_t0_ns: 0.1,
            irf_fwhm_ns: 0.04,
            decay_counts: 1e6,
            a_long: 0.05,
            gamma_long_inv_ns: 1.0,
            decay_background_fraction: 1e-3,
        }
    }
}

/// Noisy curves plus the expectation each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBundle {
    pub spectrum: SampledCurve,
    pub envelope: SampledCurve,
    pub decay: SampledCurve,
    /// IRF on the decay time step, unit area.
    pub irf: SampledCurve,
}

impl SyntheticSystem {
    pub fn emitter(&self, omega_x_bar: f64) -> Result<EmitterParams> {
        let gs = |gw: f64| energy_to_rate(gw) - self.gamma_inv_ns;
        EmitterParams::new(
            omega_x_bar,
            self.delta_uev,
            self.gamma_inv_ns,
            gs(self.gamma1_uev),
            gs(self.gamma2_uev),
            self.sigma_sd_uev,
            1.0,
            self.amplitude_ratio,
        )
    }

    pub fn cavity(&self, omega_a_bar: f64) -> Result<CavityParams> {
        CavityParams::new(omega_a_bar, energy_to_rate(self.kappa_uev), self.sigma_vib_uev, self.mode_order)
    }

    /// The quantities a g fit holds fixed, at their true values.
    pub fn fixed_system(&self) -> FixedSystem {
        FixedSystem {
            kappa_inv_ns: energy_to_rate(self.kappa_uev),
            sigma_vib_uev: self.sigma_vib_uev,
            delta_uev: self.delta_uev,
            gamma_inv_ns: self.gamma_inv_ns,
            storage_rate_inv_ns: None,
            mode_order: self.mode_order,
        }
    }

    pub fn spectrum_expectation(&self) -> Result<SampledCurve> {
        let h = self.spectrum_half_width_uev;
        let grid = UniformGrid::spanning(self.omega_x_bar_uev - h, self.omega_x_bar_uev + h, self.spectrum_step_uev)?;
        let v1 = VoigtProfile::new(self.gamma1_uev, self.sigma_sd_uev)?;
        let v2 = VoigtProfile::new(self.gamma2_uev, self.sigma_sd_uev)?;
        let (c1, c2) = (
            self.omega_x_bar_uev - 0.5 * self.delta_uev,
            self.omega_x_bar_uev + 0.5 * self.delta_uev,
        );
        let norm = self.spectrum_signal_counts * grid.step / (1.0 + self.amplitude_ratio);
        Ok(SampledCurve::from_fn(&grid, |w| {
            norm * (v1.eval(w - c1) + self.amplitude_ratio * v2.eval(w - c2)) + self.spectrum_background_per_bin
        }))
    }

    pub fn envelope_expectation(&self) -> Result<SampledCurve> {
        let h = self.envelope_half_width_uev;
        let grid = UniformGrid::spanning(self.omega_x_bar_uev - h, self.omega_x_bar_uev + h, self.envelope_step_uev)?;
        let e = self.emitter(self.omega_x_bar_uev)?;
        let c = self.cavity(self.omega_a_bar_uev)?;
        let env = envelope_full(&e, &c, energy_to_rate(self.g_uev), &grid);
        Ok(with_floor(&env, self.envelope_background_fraction))
    }

    pub fn irf(&self) -> Result<IrfKernel> {
        IrfKernel::gaussian(self.irf_fwhm_ns, default_time_grid(self.decay_t0_ns).step)
    }

    /// Cavity decay with the doublet centred on the mean cavity resonance.
    pub fn decay_expectation(&self) -> Result<SampledCurve> {
        let grid = default_time_grid(self.decay_t0_ns);
        let p = DecayModelParams {
            emitter: self.emitter(0.0)?,
            cavity: self.cavity(0.0)?,
            g: energy_to_rate(self.g_uev),
            a_long: self.a_long,
            gamma_long: self.gamma_long_inv_ns,
            t0: self.decay_t0_ns,
            background: 0.0,
        };
        let d = decay_model_cavity(&p, &self.irf()?, &grid)?;
        Ok(with_floor(&d, self.decay_background_fraction))
    }

    /// Poisson draws of all three curves; each uses its own stream of `seed`.
    pub fn generate(&self, seed: u64) -> Result<SyntheticBundle> {
        let spec = self.spectrum_expectation()?;
        let total: f64 = spec.values.iter().sum();
        let base = seed.wrapping_mul(3);
        Ok(SyntheticBundle {
            spectrum: synth_generate(&spec, total, base)?,
            envelope: synth_generate(&self.envelope_expectation()?, self.envelope_counts, base.wrapping_add(1))?,
            decay: synth_generate(&self.decay_expectation()?, self.decay_counts, base.wrapping_add(2))?,
            irf: self.irf()?.curve().clone(),
        })
    }
}

fn with_floor(c: &SampledCurve, fraction: f64) -> SampledCurve {
    let floor = fraction * c.max();
    SampledCurve {
        start: c.start,
        step: c.step,
        values: c.values.iter().map(|v| v + floor).collect(),
    }
}
