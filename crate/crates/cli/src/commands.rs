//! One function per subcommand. Each returns the result JSON and writes its
//! CSV artifacts plus `<command>.json` when `--out` is given.

use cqed_core::dynamics::IrfKernel;
use cqed_core::fitting::{
    build_linewidth_table, decay_g_curve, envelope_g_curve, find_crossing, fit_cavity_transmission,
    fit_power_law, fit_saturation, freespace_fit_curve, lambda3_over_v, purcell_from_acceleration,
    purcell_theoretical, voigt_fwhm, DecayInit, DoubletInit, FitResult, GCurve, GEstimate, GSource, LinewidthTable,
};
use cqed_core::lineshape::{read_pairs_csv, SampledCurve, VoigtProfile};
use cqed_core::oracle::verify;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{positive, Context};
use crate::io::{self, Artifacts, PS_PER_NS};
use crate::{Command, Failure, Outcome};

pub fn run(cmd: Command, ctx: &Context) -> Result<Outcome, Failure> {
    let mut art = Artifacts::new(ctx.out.as_deref())?;
    let mut o = match cmd {
        Command::FitSpectrum => fit_spectrum(ctx, &mut art)?,
        Command::FitCavity => fit_cavity(ctx, &mut art)?,
        Command::FitEnvelope => fit_envelope(ctx, &mut art)?,
        Command::FitDecay => fit_decay(ctx, &mut art)?,
        Command::Cross => cross(ctx)?,
        Command::Purcell => purcell(ctx)?,
        Command::Saturation => saturation(ctx)?,
        Command::Powerlaw => powerlaw(ctx)?,
        Command::Simulate => simulate(ctx, &mut art)?,
        Command::Verify => verify_cmd(ctx)?,
    };
    let obj = o.result.as_object_mut().expect("results are JSON objects");
    obj.insert("command".into(), json!(cmd.name()));
    obj.insert("schema_version".into(), json!(1));
    obj.insert("converged".into(), json!(o.converged));
    let result = o.result.clone();
    art.emit(&format!("{}.json", cmd.name()), |p| io::write_json(p, &result))?;
    if !art.written.is_empty() {
        o.result["artifacts"] = json!(art.written);
    }
    Ok(o)
}

fn ok(result: Value) -> Outcome {
    Outcome { result, converged: true }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("core results serialize")
}

/// Linewidth table from `inputs.linewidth_table`, or fitted from `inputs.spectrum`.
fn linewidth_table(ctx: &Context) -> Result<LinewidthTable, Failure> {
    let inputs = &ctx.config.inputs;
    if inputs.linewidth_table.is_some() {
        return io::read_table(&ctx.input("linewidth_table", &inputs.linewidth_table)?);
    }
    if inputs.spectrum.is_none() {
        return Err(Failure::config(
            "missing_input",
            "config needs `inputs.linewidth_table` or `inputs.spectrum`",
        ));
    }
    Ok(spectrum_table(ctx)?.1)
}

fn delta_guess(ctx: &Context) -> Result<f64, Failure> {
    let d = ctx
        .config
        .delta_uev
        .or(ctx.config.system.map(|s| s.delta_uev))
        .ok_or_else(|| Failure::config("missing_parameter", "config needs `delta_uev` or `system.delta_uev`"))?;
    positive("delta_uev", d)
}

fn spectrum_table(ctx: &Context) -> Result<(SampledCurve, LinewidthTable, Vec<FitResult>), Failure> {
    let grid = ctx.config.sigma_sd.grid()?;
    let data = io::read_curve(&ctx.input("spectrum", &ctx.config.inputs.spectrum)?)?;
    let init = DoubletInit::guess(&data, delta_guess(ctx)?);
    let (table, fits) = build_linewidth_table(&data, &grid, &init)?;
    Ok((data, table, fits))
}

#[derive(Serialize)]
struct SpectrumFitRow {
    energy_uev: f64,
    counts: f64,
    model: f64,
}

fn fit_spectrum(ctx: &Context, art: &mut Artifacts) -> Result<Outcome, Failure> {
    let (data, table, fits) = spectrum_table(ctx)?;
    let best = table
        .sigma_sd_grid
        .iter()
        .position(|s| *s == table.best_sigma_sd)
        .expect("best σ_SD is a grid value");
    let model = freespace_fit_curve(&data, table.best_sigma_sd, &fits[best])?;
    art.emit("linewidth_table.csv", |p| io::write_table(p, &table))?;
    art.emit("ssr_curve.csv", |p| {
        let rows: Vec<(f64, f64)> = table.sigma_sd_grid.iter().copied().zip(table.ssr.iter().copied()).collect();
        Ok(cqed_core::lineshape::write_pairs_csv(p, ("sigma_sd_uev", "ssr"), &rows)?)
    })?;
    art.emit("spectrum_fit.csv", |p| {
        let rows: Vec<SpectrumFitRow> = (0..data.len())
            .map(|i| SpectrumFitRow {
                energy_uev: data.axis(i),
                counts: data.values[i],
                model: model.values[i],
            })
            .collect();
        io::write_rows(p, &rows)
    })?;
    Ok(Outcome {
        result: json!({
            "best_sigma_sd_uev": table.best_sigma_sd,
            "monotone": table.monotone,
            "table": to_value(&table),
            "best_fit": to_value(&fits[best]),
        }),
        converged: table.converged.iter().all(|c| *c),
    })
}

#[derive(Serialize)]
struct TransmissionRow {
    energy_uev: f64,
    counts: f64,
    model: f64,
}

fn fit_cavity(ctx: &Context, art: &mut Artifacts) -> Result<Outcome, Failure> {
    let init = ctx
        .config
        .transmission
        .ok_or_else(|| Failure::config("missing_parameter", "config lacks the `transmission` block"))?;
    let data = io::read_curve(&ctx.input("transmission", &ctx.config.inputs.transmission)?)?;
    let fit = fit_cavity_transmission(&data, &init)?;
    let v = |n: &str| fit.value(n).expect("transmission fit parameter");
    let profile = VoigtProfile::new(v("kappa_uev"), v("sigma_vib_uev"))?;
    art.emit("transmission_fit.csv", |p| {
        let rows: Vec<TransmissionRow> = (0..data.len())
            .map(|i| TransmissionRow {
                energy_uev: data.axis(i),
                counts: data.values[i],
                model: v("amplitude") * profile.eval(data.axis(i) - v("omega0_uev")) + v("background"),
            })
            .collect();
        io::write_rows(p, &rows)
    })?;
    Ok(Outcome {
        result: json!({
            "fit": to_value(&fit),
            "fwhm_uev": voigt_fwhm(v("kappa_uev"), v("sigma_vib_uev")),
        }),
        converged: fit.converged,
    })
}

fn g_curve_outcome(curve: &GCurve, ests: &[GEstimate], sign: f64) -> Outcome {
    Outcome {
        result: json!({
            "source": curve.source,
            "curve": to_value(curve),
            "expected_direction": if sign > 0.0 { "increasing" } else { "decreasing" },
            "monotone_as_expected": curve.is_strictly_monotone(sign),
            "estimates": to_value(&ests),
        }),
        converged: ests.iter().all(|e| e.fit.converged),
    }
}

fn fit_envelope(ctx: &Context, art: &mut Artifacts) -> Result<Outcome, Failure> {
    let fixed = ctx.system()?.fixed()?;
    let table = linewidth_table(ctx)?;
    let data = io::read_curve(&ctx.input("envelope", &ctx.config.inputs.envelope)?)?;
    let (curve, ests) = envelope_g_curve(&data, &table, &fixed, &ctx.config.envelope.init())?;
    art.emit("envelope_g_curve.csv", |p| io::write_g_curve(p, &curve))?;
    Ok(g_curve_outcome(&curve, &ests, -1.0))
}

fn fit_decay(ctx: &Context, art: &mut Artifacts) -> Result<Outcome, Failure> {
    let fixed = ctx.system()?.fixed()?;
    let dc = ctx.config.decay;
    let table = linewidth_table(ctx)?;
    let data = io::read_time_curve(&ctx.input("decay", &ctx.config.inputs.decay)?)?;
    let irf = match &ctx.config.inputs.irf {
        Some(_) => IrfKernel::from_measured(&io::read_time_curve(&ctx.input("irf", &ctx.config.inputs.irf)?)?)?,
        None => IrfKernel::gaussian(positive("decay.irf_fwhm_ps", dc.irf_fwhm_ps)? / PS_PER_NS, data.step)?,
    };
    let init = DecayInit {
        g_uev: dc.g_uev,
        gamma_long_inv_ns: PS_PER_NS / positive("decay.tau_long_ps", dc.tau_long_ps)?,
        t0_ns: dc.t0_ps / PS_PER_NS,
        detuning_uev: dc.detuning_uev,
    };
    let (curve, ests) = decay_g_curve(&data, &irf, &table, &fixed, &init)?;
    art.emit("decay_g_curve.csv", |p| io::write_g_curve(p, &curve))?;
    Ok(g_curve_outcome(&curve, &ests, 1.0))
}

fn cross(ctx: &Context) -> Result<Outcome, Failure> {
    let inputs = &ctx.config.inputs;
    let env = io::read_g_curve(&ctx.input("envelope_g_curve", &inputs.envelope_g_curve)?, GSource::Envelope)?;
    let dec = io::read_g_curve(&ctx.input("decay_g_curve", &inputs.decay_g_curve)?, GSource::Decay)?;
    Ok(ok(json!({ "crossing": to_value(&find_crossing(&env, &dec)?) })))
}

fn purcell(ctx: &Context) -> Result<Outcome, Failure> {
    let p = ctx
        .config
        .purcell
        .clone()
        .ok_or_else(|| Failure::config("missing_parameter", "config lacks the `purcell` block"))?;
    let mut out = serde_json::Map::new();
    if let (Some(fs), Some(cav), Some(eta)) = (p.tau_fs_ps, p.tau_cav_ps, p.eta_qy) {
        out.insert("acceleration".into(), json!(fs / cav));
        out.insert("purcell_from_acceleration".into(), json!(purcell_from_acceleration(fs, cav, eta)?));
    }
    if let (Some(n), Some(q)) = (p.n, p.q_cav) {
        let l3v = match (p.lambda3_over_v, p.lambda_nm, p.volume_um3) {
            (Some(x), _, _) => Some(x),
            (None, Some(l), Some(v)) => Some(lambda3_over_v(l, v)?),
            _ => None,
        };
        if let Some(l3v) = l3v {
            let q_em = p.q_em.unwrap_or(f64::INFINITY);
            out.insert("lambda3_over_v".into(), json!(l3v));
            out.insert(
                "q_eff".into(),
                json!(cqed_core::fitting::effective_quality_factor(q, q_em)?),
            );
            out.insert("purcell_theoretical".into(), json!(purcell_theoretical(n, q, q_em, l3v)?));
        }
    }
    if out.is_empty() {
        return Err(Failure::config(
            "missing_parameter",
            "`purcell` needs tau_fs_ps, tau_cav_ps and eta_qy, or n, q_cav and lambda3_over_v (or lambda_nm and volume_um3)",
        ));
    }
    Ok(ok(Value::Object(out)))
}

fn points(ctx: &Context) -> Result<Vec<(f64, f64)>, Failure> {
    Ok(read_pairs_csv(ctx.input("points", &ctx.config.inputs.points)?)?)
}

fn saturation(ctx: &Context) -> Result<Outcome, Failure> {
    let f = fit_saturation(&points(ctx)?)?;
    Ok(Outcome {
        converged: f.fit.converged,
        result: json!({ "i_sat": f.i_sat, "p_sat_uw": f.p_sat, "fit": to_value(&f.fit) }),
    })
}

fn powerlaw(ctx: &Context) -> Result<Outcome, Failure> {
    Ok(ok(json!({ "fit": to_value(&fit_power_law(&points(ctx)?)?) })))
}

fn simulate(ctx: &Context, art: &mut Artifacts) -> Result<Outcome, Failure> {
    if ctx.out.is_none() {
        return Err(Failure::config("missing_output", "simulate writes a dataset and needs --out"));
    }
    let s = ctx.config.simulate;
    let seed = ctx.seed(0);
    let b = s.generate(seed)?;
    let total = |c: &SampledCurve| c.values.iter().sum::<f64>();
    art.emit("spectrum.csv", |p| Ok(b.spectrum.to_csv(p, ("energy_uev", "counts"))?))?;
    art.emit("envelope.csv", |p| Ok(b.envelope.to_csv(p, ("energy_uev", "counts"))?))?;
    art.emit("decay.csv", |p| io::write_time_curve(p, &b.decay, "counts"))?;
    // Integer counts per bin, as a measured histogram would have.
    let irf = SampledCurve {
        values: b.irf.values.iter().map(|v| (v * 1e6 * b.irf.step).round()).collect(),
        ..b.irf.clone()
    };
    art.emit("irf.csv", |p| io::write_time_curve(p, &irf, "counts"))?;
    Ok(ok(json!({
        "seed": seed,
        "truth": to_value(&s),
        "total_counts": {
            "spectrum": total(&b.spectrum),
            "envelope": total(&b.envelope),
            "decay": total(&b.decay),
        },
    })))
}

fn verify_cmd(ctx: &Context) -> Result<Outcome, Failure> {
    let opts = verify::VerifyOptions {
        seed: ctx.seed(ctx.config.verify.seed),
        ..ctx.config.verify
    };
    let r = verify::run(&opts);
    Ok(Outcome {
        converged: r.all_pass,
        result: json!({ "report": to_value(&r) }),
    })
}
