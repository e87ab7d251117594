//! Emission spectrum of one dephased two-level emitter coupled to one cavity
//! mode: complex effective energies, single-photon efficiency and the
//! closed-form normalization.
//!
//! Formulas are evaluated in rate units (ns⁻¹); energies are converted once at
//! the boundary. Densities returned per µeV.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_positive, Result};
use crate::lineshape::{SampledCurve, UniformGrid};
use crate::quantities::{energy_to_rate, rate_to_energy, HBAR_UEV_NS};

/// One line of the doublet and the cavity it couples to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsystemParams {
    /// Emitter line energy, µeV.
    pub omega_x: f64,
    /// Cavity energy, µeV.
    pub omega_a: f64,
    pub gamma: f64,
    pub gamma_star: f64,
    pub kappa: f64,
    pub g: f64,
}

impl SubsystemParams {
    pub fn new(omega_x: f64, omega_a: f64, gamma: f64, gamma_star: f64, kappa: f64, g: f64) -> Result<Self> {
        let p = Self {
            omega_x,
            omega_a,
            gamma,
            gamma_star,
            kappa,
            g,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("omega_x", self.omega_x)?;
        check_finite("omega_a", self.omega_a)?;
        check_positive("gamma", self.gamma)?;
        check_nonnegative("gamma_star", self.gamma_star)?;
        check_positive("kappa", self.kappa)?;
        check_nonnegative("g", self.g)?;
        Ok(())
    }

    /// γ + γ* + κ.
    pub fn gamma_all(&self) -> f64 {
        self.gamma + self.gamma_star + self.kappa
    }

    /// Emitter–cavity detuning ω_X − ω_a as a rate.
    pub fn detuning_rate(&self) -> f64 {
        energy_to_rate(self.omega_x - self.omega_a)
    }
}

/// Complex effective energies in µeV. Imaginary parts are half-widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveEnergies {
    pub omega_x_tilde: Complex64,
    pub omega_a_tilde: Complex64,
    pub delta_tilde: Complex64,
}

/// `(√(1+z²) − 1)/z` on the principal branch, written in the cancellation-free
/// form `z/(√(1+z²) + 1)`. The denominator never vanishes since Re√ ≥ 0.
pub fn coupling_function_f(z: Complex64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        return z;
    }
    z / ((Complex64::new(1.0, 0.0) + z * z).sqrt() + 1.0)
}

/// `g·f(2g/δ̃)`, continuous as δ̃ → 0 where it tends to ±g.
fn coupling_shift(g: f64, delta_tilde: Complex64) -> Complex64 {
    if g == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let scale = delta_tilde.norm();
    if scale <= 1e-100 * g {
        let sign = if delta_tilde.re >= 0.0 { 1.0 } else { -1.0 };
        return Complex64::new(sign * g, 0.0);
    }
    g * coupling_function_f(2.0 * g / delta_tilde)
}

/// Effective energies in rate units.
pub(crate) fn effective_rates(p: &SubsystemParams) -> (Complex64, Complex64) {
    let wx = Complex64::new(energy_to_rate(p.omega_x), 0.5 * (p.gamma + p.gamma_star));
    let wa = Complex64::new(energy_to_rate(p.omega_a), 0.5 * p.kappa);
    let shift = coupling_shift(p.g, wx - wa);
    (wx + shift, wa - shift)
}

pub fn effective_energies(p: &SubsystemParams) -> EffectiveEnergies {
    let wx = Complex64::new(energy_to_rate(p.omega_x), 0.5 * (p.gamma + p.gamma_star));
    let wa = Complex64::new(energy_to_rate(p.omega_a), 0.5 * p.kappa);
    let (x, a) = effective_rates(p);
    EffectiveEnergies {
        omega_x_tilde: x * HBAR_UEV_NS,
        omega_a_tilde: a * HBAR_UEV_NS,
        delta_tilde: (wx - wa) * HBAR_UEV_NS,
    }
}

/// Probability that an excitation leaves through the cavity mode.
pub fn single_photon_efficiency(p: &SubsystemParams) -> f64 {
    let g2 = 4.0 * p.g * p.g;
    if g2 == 0.0 {
        return 0.0;
    }
    let ga = p.gamma_all();
    let x = p.detuning_rate() / (0.5 * ga);
    g2 / (g2 * (1.0 + p.gamma / p.kappa) + p.gamma * ga * (1.0 + x * x))
}

/// `∫ |ω−ω̃_X|⁻² |ω−ω̃_a|⁻² dω` over ω in rate units (ns³).
pub fn density_integral(p: &SubsystemParams) -> f64 {
    let ga = p.gamma_all();
    let d = p.detuning_rate();
    2.0 * PI / (ga * (p.g * p.g + 0.25 * (p.gamma + p.gamma_star) * p.kappa * (1.0 + 4.0 * d * d / (ga * ga))))
}

/// Inverse of [`density_integral`]: the factor that makes the squared-pole
/// product integrate to one.
pub fn spectrum_normalization(p: &SubsystemParams) -> f64 {
    1.0 / density_integral(p)
}

/// Precomputed spectrum of one subsystem, for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumKernel {
    /// Roots in ns⁻¹.
    pub root_x: Complex64,
    pub root_a: Complex64,
    /// `β / ∫|…|⁻²` in rate units.
    pub scale: f64,
}

impl SpectrumKernel {
    pub fn new(p: &SubsystemParams) -> Self {
        let (root_x, root_a) = effective_rates(p);
        let beta = single_photon_efficiency(p);
        let scale = if beta == 0.0 { 0.0 } else { beta / density_integral(p) };
        Self { root_x, root_a, scale }
    }

    /// Density per unit rate at angular frequency `w` (ns⁻¹).
    #[inline]
    pub fn density_rate(&self, w: f64) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let dx = w - self.root_x.re;
        let da = w - self.root_a.re;
        let nx = dx * dx + self.root_x.im * self.root_x.im;
        let na = da * da + self.root_a.im * self.root_a.im;
        self.scale / (nx * na)
    }

    /// Density per µeV at energy `omega` (µeV).
    #[inline]
    pub fn density(&self, omega: f64) -> f64 {
        self.density_rate(energy_to_rate(omega)) / HBAR_UEV_NS
    }
}

/// Spectral density per µeV. Integrates over ω to β; zero everywhere when g = 0.
pub fn spectrum_density(p: &SubsystemParams, omega: f64) -> f64 {
    SpectrumKernel::new(p).density(omega)
}

pub fn spectrum_curve(p: &SubsystemParams, grid: &UniformGrid) -> SampledCurve {
    let k = SpectrumKernel::new(p);
    let values = (0..grid.len).into_par_iter().map(|i| k.density(grid.at(i))).collect();
    SampledCurve {
        start: grid.start,
        step: grid.step,
        values,
    }
}

/// Total linewidth scale in µeV, used to size grids.
pub fn linewidth_scale_uev(p: &SubsystemParams) -> f64 {
    rate_to_energy(p.gamma_all() + 2.0 * p.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params_uev(gamma: f64, gamma_star: f64, kappa: f64, g: f64, detuning: f64) -> SubsystemParams {
        SubsystemParams::new(
            detuning,
            0.0,
            energy_to_rate(gamma),
            energy_to_rate(gamma_star),
            energy_to_rate(kappa),
            energy_to_rate(g),
        )
        .unwrap()
    }

    /// Roots of the characteristic quadratic, by the textbook formula.
    fn quadratic_roots(p: &SubsystemParams) -> (Complex64, Complex64) {
        let a = Complex64::new(energy_to_rate(p.omega_x), 0.5 * (p.gamma + p.gamma_star));
        let b = Complex64::new(energy_to_rate(p.omega_a), 0.5 * p.kappa);
        let sum = a + b;
        let prod = a * b - p.g * p.g;
        let disc = (sum * sum - 4.0 * prod).sqrt();
        (0.5 * (sum + disc), 0.5 * (sum - disc))
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn f_small_and_zero() {
        assert_eq!(coupling_function_f(Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        let v = coupling_function_f(Complex64::new(1e-6, 0.0));
        assert!((v - Complex64::new(5e-7, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn f_matches_direct_formula_off_axis() {
        let z = Complex64::new(0.0, 1.8);
        let direct = ((Complex64::new(1.0, 0.0) + z * z).sqrt() - 1.0) / z;
        assert!(rel(coupling_function_f(z), direct) < 1e-14);
        // |z| > 1 on the imaginary axis lies on the branch cut; compare limits from the right.
        let z = Complex64::new(1e-12, 1.8);
        let direct = ((Complex64::new(1.0, 0.0) + z * z).sqrt() - 1.0) / z;
        assert!(rel(coupling_function_f(z), direct) < 1e-10);
    }

    #[test]
    fn uncoupled_limit_is_exact() {
        let p = params_uev(5.0, 245.0, 110.0, 0.0, 30.0);
        let e = effective_energies(&p);
        assert_eq!(e.omega_x_tilde.re, rate_to_energy(energy_to_rate(30.0)));
        assert_eq!(e.omega_x_tilde.im, rate_to_energy(0.5 * (p.gamma + p.gamma_star)));
        assert_eq!(e.omega_a_tilde.im, rate_to_energy(0.5 * p.kappa));
    }

    #[test]
    fn vieta_at_device_scale() {
        let p = params_uev(5.0, 245.0, 110.0, 40.0, 0.0);
        let (x, a) = effective_rates(&p);
        let (r1, r2) = quadratic_roots(&p);
        let ok = (rel(x, r1) < 1e-10 && rel(a, r2) < 1e-10) || (rel(x, r2) < 1e-10 && rel(a, r1) < 1e-10);
        assert!(ok, "{x} {a} vs {r1} {r2}");
    }

    #[test]
    fn resonant_degenerate_damping_splits_by_2g() {
        let p = params_uev(5.0, 105.0, 110.0, 100.0, 0.0);
        let e = effective_energies(&p);
        assert_relative_eq!((e.omega_x_tilde.re - e.omega_a_tilde.re).abs(), 200.0, max_relative = 1e-10);
    }

    #[test]
    fn efficiency_limits() {
        let p = params_uev(5.0, 245.0, 110.0, 0.0, 100.0);
        assert_eq!(single_photon_efficiency(&p), 0.0);
        for det in [0.0, 500.0, -3000.0] {
            let mut p = params_uev(5.0, 245.0, 110.0, 0.0, det);
            p.g = 1e6 * p.gamma_all();
            let lim = p.kappa / (p.kappa + p.gamma);
            assert_relative_eq!(single_photon_efficiency(&p), lim, max_relative = 1e-6);
        }
    }

    #[test]
    fn normalization_reduces_at_zero_coupling() {
        let p = params_uev(5.0, 245.0, 110.0, 0.0, 0.0);
        let ga = p.gamma_all();
        assert_relative_eq!(
            density_integral(&p),
            1.0 / (ga * (p.gamma + p.gamma_star) * p.kappa / (8.0 * PI)),
            max_relative = 1e-14
        );
    }

    #[test]
    fn normalization_scales_as_inverse_cube() {
        let p = params_uev(5.0, 245.0, 110.0, 40.0, 120.0);
        let s = 3.7;
        let q = SubsystemParams {
            omega_x: p.omega_x * s,
            omega_a: p.omega_a * s,
            gamma: p.gamma * s,
            gamma_star: p.gamma_star * s,
            kappa: p.kappa * s,
            g: p.g * s,
        };
        assert_relative_eq!(density_integral(&q), density_integral(&p) / s.powi(3), max_relative = 1e-13);
    }

    #[test]
    fn zero_coupling_gives_zero_curve() {
        let p = params_uev(5.0, 245.0, 110.0, 0.0, 0.0);
        let c = spectrum_curve(&p, &UniformGrid::new(-500.0, 1.0, 1001).unwrap());
        assert!(c.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn curve_integral_equals_efficiency_and_converges() {
        let p = params_uev(5.0, 245.0, 110.0, 40.0, 80.0);
        let w = linewidth_scale_uev(&p);
        let grid = UniformGrid::spanning(-50.0 * w, 50.0 * w, w / 50.0).unwrap();
        let c = spectrum_curve(&p, &grid);
        let beta = single_photon_efficiency(&p);
        assert!((c.trapezoid() - beta).abs() < 2e-3 * beta);
        let fine = UniformGrid::spanning(-50.0 * w, 50.0 * w, w / 100.0).unwrap();
        let cf = spectrum_curve(&p, &fine);
        assert!(((cf.trapezoid() - c.trapezoid()) / c.trapezoid()).abs() < 1e-4);
    }

    #[test]
    fn cavity_filter_limit_peaks_at_cavity() {
        let mut p = params_uev(5.0, 2000.0, 20.0, 3.0, 0.0);
        p.omega_a = 400.0;
        let grid = UniformGrid::new(-2000.0, 0.5, 8001).unwrap();
        let c = spectrum_curve(&p, &grid);
        assert!((c.axis(c.argmax()) - 400.0).abs() <= 1.0);
    }

    #[test]
    fn branch_is_continuous_in_g() {
        let base = params_uev(5.0, 245.0, 110.0, 0.0, 90.0);
        let g_max = energy_to_rate(300.0);
        let pts: Vec<Complex64> = (0..1000)
            .map(|k| {
                let mut p = base;
                p.g = g_max * k as f64 / 999.0;
                effective_rates(&p).0
            })
            .collect();
        for k in 1..pts.len() - 1 {
            let jump = (pts[k + 1] - pts[k]).norm();
            let secant = 0.5 * (pts[k + 1] - pts[k - 1]).norm();
            assert!(jump < 10.0 * secant.max(1e-9 * g_max), "jump at {k}");
        }
        let first = (pts[0] - Complex64::new(energy_to_rate(90.0), 0.5 * (base.gamma + base.gamma_star))).norm();
        assert!(first < 1e-9);
    }

    fn arb_params() -> impl Strategy<Value = SubsystemParams> {
        (0.1f64..50.0, 0.0f64..500.0, 1.0f64..500.0, 0.0f64..400.0, -800.0f64..800.0)
            .prop_map(|(ga, gs, k, g, d)| params_uev(ga, gs, k, g, d))
    }

    proptest! {
        #[test]
        fn vieta_identities(p in arb_params()) {
            let (x, a) = effective_rates(&p);
            let wx = Complex64::new(energy_to_rate(p.omega_x), 0.5 * (p.gamma + p.gamma_star));
            let wa = Complex64::new(energy_to_rate(p.omega_a), 0.5 * p.kappa);
            prop_assert!(rel(x + a, wx + wa) <= 1e-10);
            let prod = wx * wa - p.g * p.g;
            let tol = 1e-10 * (wx * wa).norm().max(p.g * p.g);
            prop_assert!((x * a - prod).norm() <= tol);
            prop_assert!(x.im >= 0.0 && a.im >= 0.0);
        }

        #[test]
        fn efficiency_monotone(p in arb_params(), dg in 0.0f64..100.0, dd in 0.0f64..300.0) {
            let b = single_photon_efficiency(&p);
            let mut q = p;
            q.g += energy_to_rate(dg);
            prop_assert!(single_photon_efficiency(&q) >= b * (1.0 - 1e-14));
            let mut r = p;
            let side = if p.omega_x >= p.omega_a { 1.0 } else { -1.0 };
            r.omega_x = p.omega_a + side * ((p.omega_x - p.omega_a).abs() + dd);
            prop_assert!(single_photon_efficiency(&r) <= b * (1.0 + 1e-14));
            prop_assert!(b <= p.kappa / (p.kappa + p.gamma) * (1.0 + 1e-14));
        }

        #[test]
        fn density_nonnegative(p in arb_params(), w in -5000.0f64..5000.0) {
            prop_assert!(spectrum_density(&p, w) >= 0.0);
        }

        #[test]
        fn resonant_spectrum_symmetric(p in arb_params(), x in 0.0f64..2000.0) {
            let mut q = p;
            q.omega_a = q.omega_x;
            let k = SpectrumKernel::new(&q);
            let (l, r) = (k.density(q.omega_x - x), k.density(q.omega_x + x));
            prop_assert!((l - r).abs() <= 1e-10 * l.max(r).max(1e-300));
        }
    }
}
