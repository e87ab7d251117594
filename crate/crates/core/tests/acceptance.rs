//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Positional arguments select criteria by
//! id substring (`cargo test -p cqed-core --test acceptance -- ac5 ac6`).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cqed_core::dynamics::{
    averaged_components, decay_detuning_averaged, decay_model_cavity, decay_model_freespace, default_time_grid,
    effective_rate_large_modulation, effective_single_exponential, instantaneous_components, DecayComponent,
    DecayModelParams, FreeSpaceDecay, IrfKernel,
};
use cqed_core::envelope::{dip_value, envelope_full, line_roots, marginal_exact};
use cqed_core::fitting::{
    acceleration_from_purcell, build_linewidth_table, decay_g_curve, envelope_g_curve, find_crossing,
    fit_cavity_lifetime, fit_freespace_lifetime, fit_freespace_spectrum, fit_power_law, fit_saturation,
    linear_regression, minimize_ssr, purcell_from_acceleration, purcell_theoretical, saturation_model,
    sigma_sd_grid, CavityLifetimeInit, DecayInit, DoubletInit, EnvelopeInit, LifetimeInit, LinewidthTable,
    MinimizerOptions, ParamSpec,
};
use cqed_core::lineshape::{SampledCurve, UniformGrid};
use cqed_core::oracle::verify::random_subsystem;
use cqed_core::oracle::{oracle_roots, oracle_spectrum_rate, quad_adaptive, synth_generate, QuadratureSpec};
use cqed_core::quantities::{energy_to_rate, rate_to_energy, CavityParams, EmitterParams, HBAR_UEV_NS};
use cqed_core::spectrum::{density_integral, single_photon_efficiency, spectrum_density, SubsystemParams};
use cqed_core::synthetic::{SyntheticBundle, SyntheticSystem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn worst(errors: impl IntoIterator<Item = f64>) -> f64 {
    errors.into_iter().fold(0.0, |a, e| if e.is_nan() { f64::INFINITY } else { a.max(e) })
}

/// Random draws with every other one forced into strong coupling, 2g > κ+γ+γ*.
fn mixed_draws(seed: u64, n: usize) -> Vec<SubsystemParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut p = random_subsystem(&mut rng);
            if i % 2 == 1 {
                let width = p.kappa + p.gamma + p.gamma_star;
                p.g = 0.5 * width * rng.random_range(1.2..6.0);
            }
            p
        })
        .collect()
}

fn strong_count(draws: &[SubsystemParams]) -> usize {
    draws.iter().filter(|p| 2.0 * p.g > p.kappa + p.gamma + p.gamma_star).count()
}

fn ac1() -> Outcome {
    let fp = purcell_theoretical(1.5, 2700.0, f64::INFINITY, 0.052).unwrap();
    let fa = purcell_from_acceleration(1.6, 1.0, 0.18).unwrap();
    outcome(
        (fp - 3.2).abs() <= 0.05 && (fa - 3.33).abs() <= 0.01,
        format!("F_p theoretical {fp:.4} (3.2 ± 0.05), from acceleration {fa:.4} (3.33 ± 0.01)"),
    )
}

fn ac2() -> Outcome {
    let draws = mixed_draws(2, 50);
    let spec = QuadratureSpec::adaptive(1e-300, 1e-12, 4000);
    let err = worst(draws.iter().map(|p| {
        let (x, a) = oracle_roots(p);
        let q = quad_adaptive(
            |w| 1.0 / ((w - x).norm_sqr() * (w - a).norm_sqr()),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &spec,
        );
        rel(density_integral(p), q.value)
    }));
    outcome(
        err <= 1e-8,
        format!("worst relative error {err:.2e} over 50 draws ({} strong coupling), tolerance 1e-8", strong_count(&draws)),
    )
}

fn ac3() -> Outcome {
    let draws = mixed_draws(3, 50);
    let spec = QuadratureSpec::adaptive(1e-300, 1e-10, 4000);
    let mut errs = Vec::new();
    for p in &draws {
        let m = marginal_exact(p).expect("draws have dephasing");
        let scale = rate_to_energy(p.gamma_all() + 2.0 * p.g);
        for k in [-3.0, -0.7, 0.0, 1.3, 4.0] {
            let omega = p.omega_x + k * scale;
            let w = energy_to_rate(omega);
            let q = quad_adaptive(
                |wa| {
                    let s = SubsystemParams {
                        omega_a: wa * HBAR_UEV_NS,
                        ..*p
                    };
                    oracle_spectrum_rate(&s, w)
                },
                f64::NEG_INFINITY,
                f64::INFINITY,
                &spec,
            );
            errs.push(rel(m.eval(omega), q.value));
        }
    }
    let err = worst(errs);
    outcome(
        err <= 1e-6,
        format!(
            "worst relative error {err:.2e} over 50 draws x 5 energies ({} strong coupling), tolerance 1e-6",
            strong_count(&draws)
        ),
    )
}

/// γ = κ/100, σ_total = 50(κ+γ+γ*), carried by σ_vib. g is set so the
/// averaged cavity rate is 0.1γ; the limit only holds once that rate is
/// small against γ, and the error shrinks with it.
fn ac4() -> Outcome {
    let kappa: f64 = 200.0;
    let gamma = kappa / 100.0;
    let mut lines = Vec::new();
    let mut pass = true;
    for gs in [20.0, 80.0, 300.0] {
        let mut errs = Vec::new();
        for ratio in [0.1, 0.03] {
            let g = (ratio * gamma * (kappa + gs) / 2.0).sqrt();
            let width = rate_to_energy(kappa + gamma + gs);
            let e = EmitterParams::new(0.0, 0.0, gamma, gs, gs, 0.0, 1.0, 0.0).unwrap();
            let c = CavityParams::new(0.0, kappa, 50.0 * width, 1).unwrap();
            let comps = averaged_components(&e, &c, g);
            let grid = UniformGrid::new(0.0, 1e-3, 4001).unwrap();
            let curve = decay_detuning_averaged(&e, &c, g, 0.0, &grid);
            let sampled = SampledCurve::from_fn(&grid, |t| comps.iter().map(|k| k.amplitude * (-k.rate * t).exp()).sum());
            assert_eq!(curve.values, sampled.values, "curve is the sampled component sum");
            let (_, rate) = effective_single_exponential(&comps).unwrap();
            errs.push(rel(rate, gamma + effective_rate_large_modulation(g, kappa, gs)));
        }
        pass &= errs[0] <= 0.02 && errs[1] < errs[0];
        lines.push(format!("γ*={gs}: {:.2}% (R/γ=0.1), {:.2}% (R/γ=0.03)", 100.0 * errs[0], 100.0 * errs[1]));
    }
    outcome(pass, format!("{}; tolerance 2% and shrinking with R/γ", lines.join(", ")))
}

struct Crossing {
    gamma: f64,
    g: f64,
    env_decreasing: bool,
    dec_increasing: bool,
}

fn crossing_for(bundle: &SyntheticBundle, table: &LinewidthTable, s: &SyntheticSystem) -> Crossing {
    let fixed = s.fixed_system();
    let (env, _) = envelope_g_curve(
        &bundle.envelope,
        table,
        &fixed,
        &EnvelopeInit {
            g_uev: 30.0,
            omega_x_bar_uev: 0.0,
            omega_a_bar_uev: 0.0,
        },
    )
    .unwrap();
    let irf = IrfKernel::new(bundle.irf.clone()).unwrap();
    let (dec, _) = decay_g_curve(
        &bundle.decay,
        &irf,
        table,
        &fixed,
        &DecayInit {
            g_uev: 30.0,
            gamma_long_inv_ns: 2.0,
            t0_ns: 0.09,
            detuning_uev: 0.0,
        },
    )
    .unwrap();
    let cr = find_crossing(&env, &dec).unwrap();
    Crossing {
        gamma: cr.gamma_star_total,
        g: cr.g_cross,
        env_decreasing: env.is_strictly_monotone(-1.0),
        dec_increasing: dec.is_strictly_monotone(1.0),
    }
}

fn table_for(spectrum: &SampledCurve, s: &SyntheticSystem, grid: &[f64]) -> LinewidthTable {
    let init = DoubletInit::guess(spectrum, s.delta_uev);
    build_linewidth_table(spectrum, grid, &init).unwrap().0
}

fn ac5() -> Outcome {
    let s = SyntheticSystem::default();
    let bundle = s.generate(5).unwrap();
    let table = table_for(&bundle.spectrum, &s, &sigma_sd_grid(150.0, 5.0).unwrap());
    let c = crossing_for(&bundle, &table, &s);
    let (eg, eq) = (rel(c.gamma, 250.0), rel(c.g, 40.0));
    outcome(
        c.env_decreasing && c.dec_increasing && eg <= 0.15 && eq <= 0.15,
        format!(
            "envelope g(Γ) decreasing: {}, decay g(Γ) increasing: {}, crossing Γ={:.1} µeV ({:.1}%), g={:.2} µeV ({:.1}%)",
            c.env_decreasing,
            c.dec_increasing,
            c.gamma,
            100.0 * eg,
            c.g,
            100.0 * eq
        ),
    )
}

/// Shot noise alone cannot make the SSR flat across σ_SD while keeping a
/// located minimum; a flat detector floor spread over many bins supplies
/// the σ-independent SSR the degeneracy needs.
fn ac6() -> Outcome {
    let s = SyntheticSystem {
        gamma1_uev: 225.0,
        gamma2_uev: 210.0,
        ..SyntheticSystem::default()
    };
    let model = s.spectrum_expectation().unwrap();
    let total: f64 = model.values.iter().sum();
    let mut grid = sigma_sd_grid(150.0, 5.0).unwrap();
    grid[0] = 1.0;
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let data = synth_generate(&model, total, 600 + seed).unwrap();
        let init = DoubletInit::guess(&data, s.delta_uev);
        let (table, _) = build_linewidth_table(&data, &grid, &init).unwrap();
        let ssr: Vec<f64> = [1.0, 72.0, 114.0]
            .iter()
            .map(|&sd| fit_freespace_spectrum(&data, sd, &init).unwrap().ssr)
            .collect();
        let lo = ssr.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ssr.iter().cloned().fold(0.0, f64::max);
        let spread = (hi - lo) / lo;
        pass &= spread < 0.05 && (table.best_sigma_sd - 70.0).abs() <= 15.0;
        lines.push(format!("seed {}: spread {:.2}%, min at {} µeV", 600 + seed, 100.0 * spread, table.best_sigma_sd));
    }
    outcome(pass, format!("{}; need spread < 5% and min within 70 ± 15", lines.join(", ")))
}

fn ac7() -> Outcome {
    let seeds = 0..100u64;
    let mut pass = true;
    let mut lines = Vec::new();

    // Saturation: 15 powers over 2.5 decades, 0.5% Gaussian intensity noise.
    let powers: Vec<f64> = (0..15).map(|i| 10.0 * 10f64.powf(2.5 * i as f64 / 14.0)).collect();
    let mut err_sat: f64 = 0.0;
    for seed in seeds.clone() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let data: Vec<(f64, f64)> = powers
            .iter()
            .map(|&p| (p, saturation_model(p, 0.18, 220.0) * (1.0 + noise.sample(&mut rng))))
            .collect();
        let f = fit_saturation(&data).unwrap();
        err_sat = err_sat.max(rel(f.i_sat, 0.18)).max(rel(f.p_sat, 220.0));
    }
    pass &= err_sat <= 0.02;
    lines.push(format!("saturation worst {:.2}% (2%)", 100.0 * err_sat));

    // Power law: 20 powers over 2 decades, 5% multiplicative noise.
    let mut err_alpha: f64 = 0.0;
    for alpha in [1.0, 1.5, 1.9] {
        for seed in seeds.clone() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let data: Vec<(f64, f64)> = (0..20)
                .map(|i| {
                    let p = 10f64.powf(2.0 * i as f64 / 19.0);
                    (p, 1e-3 * p.powf(alpha) * (1.0 + noise.sample(&mut rng)))
                })
                .collect();
            err_alpha = err_alpha.max((fit_power_law(&data).unwrap().alpha - alpha).abs());
        }
    }
    pass &= err_alpha <= 0.1;
    lines.push(format!("power law worst |Δα| {err_alpha:.3} (0.1)"));

    // Free-space lifetime: 121 ps, 40 ps IRF, 10⁶ counts.
    let grid = default_time_grid(0.1);
    let irf = IrfKernel::gaussian(0.04, grid.step).unwrap();
    let fs = FreeSpaceDecay {
        components: vec![(1.0, 0.121)],
        t0: 0.1,
        background: 0.0,
    };
    let clean = decay_model_freespace(&fs, &irf, &grid).unwrap();
    let floor = 1e-3 * clean.max();
    let model = SampledCurve::from_fn(&grid, |t| clean.interp(t) + floor);
    let mut err_tau: f64 = 0.0;
    for seed in seeds.clone() {
        let data = synth_generate(&model, 1e6, seed).unwrap();
        let f = fit_freespace_lifetime(
            &data,
            &irf,
            &LifetimeInit {
                taus_ns: vec![0.1],
                t0_ns: 0.09,
            },
        )
        .unwrap();
        err_tau = err_tau.max(rel(f.value("tau1_ns").unwrap(), 0.121));
    }
    pass &= err_tau <= 0.01;
    lines.push(format!("free-space τ worst {:.2}% (1%)", 100.0 * err_tau));

    // Cavity decay: one line on resonance, no modulation, no long component,
    // 5.98 ps storage (ħκ = 110 µeV), 10⁶ counts.
    let s = SyntheticSystem::default();
    let e = EmitterParams::new(
        0.5 * s.delta_uev,
        s.delta_uev,
        s.gamma_inv_ns,
        energy_to_rate(s.gamma1_uev) - s.gamma_inv_ns,
        0.0,
        0.0,
        1.0,
        0.0,
    )
    .unwrap();
    let c = CavityParams::new(0.0, energy_to_rate(s.kappa_uev), 0.0, 1).unwrap();
    let g = energy_to_rate(s.g_uev);
    let r1 = 4.0 * g * g / (c.kappa + e.gamma + e.gamma_star_1);
    let tau_true = 1.0 / (e.gamma + r1);
    let p = DecayModelParams {
        emitter: e,
        cavity: c,
        g,
        a_long: 0.0,
        gamma_long: 1.0,
        t0: 0.1,
        background: 0.0,
    };
    let clean = decay_model_cavity(&p, &irf, &grid).unwrap();
    let floor = 1e-3 * clean.max();
    let model = SampledCurve::from_fn(&grid, |t| clean.interp(t) + floor);
    let mut err_cav: f64 = 0.0;
    for seed in seeds {
        let data = synth_generate(&model, 1e6, 1000 + seed).unwrap();
        let f = fit_cavity_lifetime(
            &data,
            &irf,
            &CavityLifetimeInit {
                tau_ns: 0.05,
                t0_ns: 0.09,
                storage_rate_inv_ns: c.kappa,
                tau_long_ns: None,
            },
        )
        .unwrap();
        err_cav = err_cav.max(rel(f.value("tau_ns").unwrap(), tau_true));
    }
    pass &= err_cav <= 0.01;
    lines.push(format!(
        "cavity τ = 1/(γ+R₁) = {:.2} ps worst {:.2}% (1%)",
        1e3 * tau_true,
        100.0 * err_cav
    ));

    outcome(pass, format!("100 seeds each: {}", lines.join(", ")))
}

/// Five cavities of one emitter, differing only in mode volume, with
/// g² ∝ λ³/V; g from the crossing of each.
fn ac8() -> Outcome {
    let base = SyntheticSystem::default();
    let bundle = base.generate(80).unwrap();
    let grid: Vec<f64> = (3..=11).map(|i| 10.0 * i as f64).collect();
    let table = table_for(&bundle.spectrum, &base, &grid);
    let l3v = [0.026, 0.034, 0.042, 0.052, 0.062];
    let mut g2 = Vec::new();
    for (i, &x) in l3v.iter().enumerate() {
        let s = SyntheticSystem {
            g_uev: 40.0 * (x / 0.052f64).sqrt(),
            ..base
        };
        let b = s.generate(81 + i as u64).unwrap();
        let c = crossing_for(
            &SyntheticBundle {
                spectrum: bundle.spectrum.clone(),
                ..b
            },
            &table,
            &s,
        );
        g2.push(c.g * c.g);
    }
    let fit = linear_regression(&l3v, &g2).unwrap();
    outcome(
        fit.r_squared > 0.99,
        format!(
            "fitted g = [{}] µeV, R² = {:.4} (> 0.99)",
            g2.iter().map(|v| format!("{:.1}", v.sqrt())).collect::<Vec<_>>().join(", "),
            fit.r_squared
        ),
    )
}

fn ac9() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let draws = mixed_draws(9, 200);

    // Vieta: roots of [[ω_X + iγ_all/2, g], [g, ω_a + iκ/2]] in rate units.
    let vieta = worst(draws.iter().flat_map(|p| {
        let (x, a) = line_roots(p);
        let px = Complex64::new(energy_to_rate(p.omega_x), 0.5 * (p.gamma + p.gamma_star));
        let pa = Complex64::new(energy_to_rate(p.omega_a), 0.5 * p.kappa);
        let scale = px.norm() + pa.norm() + p.g;
        [
            (x + a - px - pa).norm() / scale,
            (x * a - (px * pa - p.g * p.g)).norm() / (scale * scale),
        ]
    }));
    fail("vieta", vieta <= 1e-12);

    // β nondecreasing in g, nonincreasing in |detuning|.
    let beta_ok = draws.iter().all(|p| {
        let by_g: Vec<f64> = (0..=40)
            .map(|i| single_photon_efficiency(&SubsystemParams { g: p.g * i as f64 / 20.0, ..*p }))
            .collect();
        let by_d: Vec<f64> = (0..=40)
            .map(|i| {
                single_photon_efficiency(&SubsystemParams {
                    omega_x: p.omega_a + 25.0 * i as f64,
                    ..*p
                })
            })
            .collect();
        by_g.windows(2).all(|w| w[1] >= w[0]) && by_d.windows(2).all(|w| w[1] <= w[0])
    });
    fail("beta_monotone", beta_ok);

    let density_ok = draws.iter().all(|p| {
        let s = rate_to_energy(p.gamma_all() + 2.0 * p.g);
        (-200..=200).all(|i| spectrum_density(p, p.omega_x + 0.1 * i as f64 * s) >= 0.0)
    });
    fail("spectrum_nonnegative", density_ok);

    // Envelope nonnegative and symmetric about ω̄_X for a symmetric doublet.
    let s = SyntheticSystem::default();
    let e = EmitterParams::new(0.0, 700.0, s.gamma_inv_ns, 300.0, 300.0, 70.0, 1.0, 1.0).unwrap();
    let c = CavityParams::new(0.0, energy_to_rate(110.0), 679.4, 14).unwrap();
    let grid = UniformGrid::new(-2000.0, 10.0, 401).unwrap();
    let env = envelope_full(&e, &c, energy_to_rate(40.0), &grid);
    let m = env.max();
    let n = env.len();
    fail("envelope_nonnegative", env.values.iter().all(|v| *v >= 0.0));
    fail(
        "envelope_symmetric",
        (0..n).all(|i| (env.values[i] - env.values[n - 1 - i]).abs() <= 1e-8 * m),
    );

    let dip = dip_value(&env, 700.0).unwrap().dip;
    let dip_ok = [0.5, 2.0, 1024.0].iter().all(|&k| dip_value(&env.scaled(k), 700.0).unwrap().dip == dip)
        && rel(dip_value(&env.scaled(3.7), 700.0).unwrap().dip, dip) <= 1e-12;
    fail("dip_scale_invariance", dip_ok);

    // Fubini: ∫ averaged decay = Gaussian average over δ of ∫ instantaneous decay.
    let area = |ks: &[DecayComponent]| ks.iter().map(|k| k.amplitude / k.rate).sum::<f64>();
    let mut fubini: f64 = 0.0;
    for (sd, vib, mean) in [(70.0, 679.4, 30.0), (20.0, 100.0, -200.0), (150.0, 0.0, 0.0)] {
        let e = EmitterParams::new(mean, 700.0, s.gamma_inv_ns, 250.0, 320.0, sd, 1.0, 0.8).unwrap();
        let c = CavityParams::new(0.0, energy_to_rate(110.0), vib, 14).unwrap();
        let g = energy_to_rate(40.0);
        let sigma: f64 = (sd * sd + vib * vib).sqrt();
        let q = quad_adaptive(
            |d| {
                let z = (d - mean) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                    * area(&instantaneous_components(&e, &c, g, d))
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &QuadratureSpec::adaptive(1e-300, 1e-10, 4000),
        );
        fubini = fubini.max(rel(area(&averaged_components(&e, &c, g)), q.value));
    }
    fail("fubini", fubini <= 1e-4);

    // Minimizer: never worse than the start, bit-identical on repeat.
    let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let data: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp() + 0.2 * (1.3 * x).sin()).collect();
    let model = |p: &[f64]| Ok(xs.iter().map(|x| p[0] * (-p[1] * x).exp()).collect::<Vec<f64>>());
    let specs = [ParamSpec::new("a", 1.0, 0.0, 10.0), ParamSpec::new("k", 0.1, 0.0, 5.0)];
    let start: f64 = model(&[1.0, 0.1]).unwrap().iter().zip(&data).map(|(m, d)| (m - d) * (m - d)).sum();
    let r1 = minimize_ssr(model, &data, &specs, &MinimizerOptions::default()).unwrap();
    let r2 = minimize_ssr(model, &data, &specs, &MinimizerOptions::default()).unwrap();
    fail("minimizer_descends", r1.ssr <= start);
    fail("minimizer_deterministic", r1 == r2);

    let curve = SampledCurve::new(0.0, 1.0, (0..100).map(|i| 50.0 + i as f64).collect()).unwrap();
    fail(
        "synth_deterministic",
        synth_generate(&curve, 1e5, 42).unwrap() == synth_generate(&curve, 1e5, 42).unwrap(),
    );

    fail(
        "purcell_round_trip",
        [0.5, 3.33, 12.0].iter().all(|&f| {
            let acc = acceleration_from_purcell(f, 0.18).unwrap();
            rel(purcell_from_acceleration(acc, 1.0, 0.18).unwrap(), f) <= 1e-14
        }),
    );

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("vieta {vieta:.1e}, fubini {fubini:.1e}, β monotone, nonnegativity, symmetry, dip scaling, determinism")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("ac1", "Purcell arithmetic", ac1),
        ("ac2", "normalization vs quadrature", ac2),
        ("ac3", "envelope decomposition vs quadrature", ac3),
        ("ac4", "large-modulation limit", ac4),
        ("ac5", "opposite monotonicity and crossing", ac5),
        ("ac6", "σ_SD degeneracy", ac6),
        ("ac7", "fit round trips", ac7),
        ("ac8", "g² linearity", ac8),
        ("ac9", "invariant suite", ac9),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            id.to_uppercase(),
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
