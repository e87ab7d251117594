//! Units, constants and validated parameter records.
//!
//! Rates are in ns⁻¹, energies in µeV and times in ns. Conversions between
//! energies and rates go through [`HBAR_UEV_NS`] only.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};

/// Reduced Planck constant in µeV·ns.
pub const HBAR_UEV_NS: f64 = 0.6582119569;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    hbar: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64) -> Result<Self> {
        check_positive("hbar", hbar)?;
        Ok(Self { hbar })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: HBAR_UEV_NS }
    }
}

/// µeV → ns⁻¹.
#[inline]
pub fn energy_to_rate(e: f64) -> f64 {
    e / HBAR_UEV_NS
}

/// ns⁻¹ → µeV.
#[inline]
pub fn rate_to_energy(r: f64) -> f64 {
    r * HBAR_UEV_NS
}

/// Doublet emitter. Line 1 sits at `omega_x_bar - delta/2`, line 2 at
/// `omega_x_bar + delta/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmitterRecord", into = "EmitterRecord")]
pub struct EmitterParams {
    pub omega_x_bar: f64,
    pub delta: f64,
    pub gamma: f64,
    pub gamma_star_1: f64,
    pub gamma_star_2: f64,
    pub sigma_sd: f64,
    pub a1: f64,
    pub a2: f64,
}

impl EmitterParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        omega_x_bar: f64,
        delta: f64,
        gamma: f64,
        gamma_star_1: f64,
        gamma_star_2: f64,
        sigma_sd: f64,
        a1: f64,
        a2: f64,
    ) -> Result<Self> {
        let e = Self {
            omega_x_bar,
            delta,
            gamma,
            gamma_star_1,
            gamma_star_2,
            sigma_sd,
            a1,
            a2,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("omega_x_bar", self.omega_x_bar)?;
        check_nonnegative("delta", self.delta)?;
        check_positive("gamma", self.gamma)?;
        check_nonnegative("gamma_star_1", self.gamma_star_1)?;
        check_nonnegative("gamma_star_2", self.gamma_star_2)?;
        check_nonnegative("sigma_sd", self.sigma_sd)?;
        check_nonnegative("a1", self.a1)?;
        check_nonnegative("a2", self.a2)?;
        if self.a1 + self.a2 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "a1 + a2",
                reason: "line amplitudes must not both vanish".into(),
            });
        }
        Ok(())
    }

    /// Pure dephasing rate of line `i` (1 or 2).
    pub fn gamma_star(&self, line: Line) -> f64 {
        match line {
            Line::One => self.gamma_star_1,
            Line::Two => self.gamma_star_2,
        }
    }

    /// Instantaneous homogeneous linewidth γ + γ*ᵢ in ns⁻¹.
    pub fn instantaneous_linewidth(&self, line: Line) -> f64 {
        self.gamma + self.gamma_star(line)
    }

    pub fn amplitude(&self, line: Line) -> f64 {
        match line {
            Line::One => self.a1,
            Line::Two => self.a2,
        }
    }

    /// Signed offset of line `i` from the doublet center, in µeV.
    pub fn line_offset(&self, line: Line) -> f64 {
        match line {
            Line::One => -0.5 * self.delta,
            Line::Two => 0.5 * self.delta,
        }
    }
}

/// One of the two lines of the doublet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    One,
    Two,
}

impl Line {
    pub const BOTH: [Line; 2] = [Line::One, Line::Two];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CavityRecord", into = "CavityRecord")]
pub struct CavityParams {
    pub omega_a_bar: f64,
    pub kappa: f64,
    pub sigma_vib: f64,
    pub mode_order: u32,
    pub storage_rate: f64,
}

impl CavityParams {
    /// Storage rate defaults to `kappa`.
    pub fn new(omega_a_bar: f64, kappa: f64, sigma_vib: f64, mode_order: u32) -> Result<Self> {
        Self::with_storage_rate(omega_a_bar, kappa, sigma_vib, mode_order, kappa)
    }

    pub fn with_storage_rate(
        omega_a_bar: f64,
        kappa: f64,
        sigma_vib: f64,
        mode_order: u32,
        storage_rate: f64,
    ) -> Result<Self> {
        let c = Self {
            omega_a_bar,
            kappa,
            sigma_vib,
            mode_order,
            storage_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("omega_a_bar", self.omega_a_bar)?;
        check_positive("kappa", self.kappa)?;
        check_nonnegative("sigma_vib", self.sigma_vib)?;
        check_positive("storage_rate", self.storage_rate)?;
        if self.mode_order == 0 {
            return Err(Error::InvalidParameter {
                name: "mode_order",
                reason: "longitudinal order must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Vacuum Rabi coupling, stored as a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRecord", into = "CouplingRecord")]
pub struct CouplingParams {
    pub g: f64,
}

impl CouplingParams {
    pub fn new(g: f64) -> Result<Self> {
        check_nonnegative("g", g)?;
        Ok(Self { g })
    }

    pub fn from_energy(g_uev: f64) -> Result<Self> {
        Self::new(energy_to_rate(g_uev))
    }

    pub fn energy(&self) -> f64 {
        rate_to_energy(self.g)
    }
}

/// Cavity photon storage time in ps.
pub fn storage_time(c: &CavityParams) -> f64 {
    1000.0 / c.storage_rate
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmitterRecord {
    omega_x_bar_uev: f64,
    delta_uev: f64,
    gamma_inv_ns: f64,
    gamma_star_1_inv_ns: f64,
    gamma_star_2_inv_ns: f64,
    sigma_sd_uev: f64,
    a1: f64,
    a2: f64,
}

impl TryFrom<EmitterRecord> for EmitterParams {
    type Error = Error;
    fn try_from(r: EmitterRecord) -> Result<Self> {
        EmitterParams::new(
            r.omega_x_bar_uev,
            r.delta_uev,
            r.gamma_inv_ns,
            r.gamma_star_1_inv_ns,
            r.gamma_star_2_inv_ns,
            r.sigma_sd_uev,
            r.a1,
            r.a2,
        )
    }
}

impl From<EmitterParams> for EmitterRecord {
    fn from(e: EmitterParams) -> Self {
        Self {
            omega_x_bar_uev: e.omega_x_bar,
            delta_uev: e.delta,
            gamma_inv_ns: e.gamma,
            gamma_star_1_inv_ns: e.gamma_star_1,
            gamma_star_2_inv_ns: e.gamma_star_2,
            sigma_sd_uev: e.sigma_sd,
            a1: e.a1,
            a2: e.a2,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CavityRecord {
    omega_a_bar_uev: f64,
    kappa_inv_ns: f64,
    sigma_vib_uev: f64,
    mode_order: u32,
    #[serde(default)]
    storage_rate_inv_ns: Option<f64>,
}

impl TryFrom<CavityRecord> for CavityParams {
    type Error = Error;
    fn try_from(r: CavityRecord) -> Result<Self> {
        CavityParams::with_storage_rate(
            r.omega_a_bar_uev,
            r.kappa_inv_ns,
            r.sigma_vib_uev,
            r.mode_order,
            r.storage_rate_inv_ns.unwrap_or(r.kappa_inv_ns),
        )
    }
}

impl From<CavityParams> for CavityRecord {
    fn from(c: CavityParams) -> Self {
        Self {
            omega_a_bar_uev: c.omega_a_bar,
            kappa_inv_ns: c.kappa,
            sigma_vib_uev: c.sigma_vib,
            mode_order: c.mode_order,
            storage_rate_inv_ns: Some(c.storage_rate),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingRecord {
    g_inv_ns: f64,
}

impl TryFrom<CouplingRecord> for CouplingParams {
    type Error = Error;
    fn try_from(r: CouplingRecord) -> Result<Self> {
        CouplingParams::new(r.g_inv_ns)
    }
}

impl From<CouplingParams> for CouplingRecord {
    fn from(c: CouplingParams) -> Self {
        Self { g_inv_ns: c.g }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ulp_distance(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn energy_rate_examples() {
        assert_eq!(energy_to_rate(0.0), 0.0);
        assert_relative_eq!(energy_to_rate(110.0), 167.12, max_relative = 1e-4);
        assert_eq!(energy_to_rate(HBAR_UEV_NS), 1.0);
        assert_eq!(rate_to_energy(0.0), 0.0);
        assert_relative_eq!(rate_to_energy(167.12), 110.0, max_relative = 1e-4);
        assert_relative_eq!(rate_to_energy(1.0 / 0.121), 5.44, max_relative = 1e-3);
    }

    #[test]
    fn storage_time_examples() {
        let c = |r: f64| CavityParams::with_storage_rate(0.0, r, 0.0, 1, r).unwrap();
        assert_relative_eq!(storage_time(&c(energy_to_rate(110.0))), 5.98, max_relative = 1e-3);
        assert_relative_eq!(storage_time(&c(100.0)), 10.0);
        assert_relative_eq!(storage_time(&c(83.3)), 12.0, max_relative = 1e-3);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(EmitterParams::new(0.0, 700.0, 0.0, 1.0, 1.0, 70.0, 1.0, 1.0).is_err());
        assert!(EmitterParams::new(f64::NAN, 700.0, 1.0, 1.0, 1.0, 70.0, 1.0, 1.0).is_err());
        assert!(EmitterParams::new(0.0, -1.0, 1.0, 1.0, 1.0, 70.0, 1.0, 1.0).is_err());
        assert!(EmitterParams::new(0.0, 1.0, 1.0, 1.0, 1.0, 70.0, 0.0, 0.0).is_err());
        assert!(EmitterParams::new(0.0, 1.0, 1.0, -1.0, 1.0, 70.0, 1.0, 0.0).is_err());
        assert!(CavityParams::new(0.0, 0.0, 0.0, 1).is_err());
        assert!(CavityParams::new(0.0, 1.0, f64::INFINITY, 1).is_err());
        assert!(CavityParams::new(0.0, 1.0, 0.0, 0).is_err());
        assert!(CouplingParams::new(-1.0).is_err());
        assert!(PhysicalConstants::new(0.0).is_err());
    }

    #[test]
    fn json_uses_unit_suffixed_names() {
        let c = CavityParams::new(10.0, 167.0, 679.4, 14).unwrap();
        let v = serde_json::to_value(c).unwrap();
        assert_eq!(v["kappa_inv_ns"], 167.0);
        assert_eq!(v["sigma_vib_uev"], 679.4);
        assert_eq!(v["storage_rate_inv_ns"], 167.0);
        let back: CavityParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);

        let no_storage = serde_json::json!({
            "omega_a_bar_uev": 0.0, "kappa_inv_ns": 50.0, "sigma_vib_uev": 0.0, "mode_order": 3
        });
        let c2: CavityParams = serde_json::from_value(no_storage).unwrap();
        assert_eq!(c2.storage_rate, 50.0);

        let bad = serde_json::json!({
            "omega_a_bar_uev": 0.0, "kappa_inv_ns": -1.0, "sigma_vib_uev": 0.0, "mode_order": 3
        });
        assert!(serde_json::from_value::<CavityParams>(bad).is_err());

        let e = EmitterParams::new(1.0, 700.0, 8.26, 372.0, 372.0, 70.0, 1.0, 0.8).unwrap();
        let v = serde_json::to_value(e).unwrap();
        assert_eq!(v["gamma_star_1_inv_ns"], 372.0);
        assert_eq!(serde_json::from_value::<EmitterParams>(v).unwrap(), e);
    }

    proptest! {
        #[test]
        fn round_trip_within_one_ulp(e in 1e-300f64..1e300) {
            prop_assert!(ulp_distance(rate_to_energy(energy_to_rate(e)), e) <= 1);
        }

        #[test]
        fn round_trip_mid_range(e in 1e-6f64..1e6) {
            prop_assert!(ulp_distance(rate_to_energy(energy_to_rate(e)), e) <= 1);
            prop_assert!(ulp_distance(energy_to_rate(rate_to_energy(e)), e) <= 1);
        }
    }
}
