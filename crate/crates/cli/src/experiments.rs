use std::f64::consts::PI;
use std::io::Write;

use serde_json::{json, Value};
use srqe::discretize::{gauge_check, popp_volume, vertical_energy_operator};
use srqe::dynamics::hyperbolic::{ergodic_ensemble, Region};
use srqe::dynamics::*;
use srqe::eigensolve::dense_eig_with_cap;
use srqe::exact_heisenberg::{enumerate_spectrum, heat_trace_closed_form, FLAT_WEYL_CONSTANT};
use srqe::heat::{gaveau_kernel, karamata_constant, write_trace_csv};
use srqe::model::ContactModel;
use srqe::normal_form::{birkhoff_normalize_with, preset, GradedSymbol, NormalizationMode, Space};
use srqe::scalar::fmt17;
use srqe::weyl_qe::*;
use srqe::{Error, Spectrum, Symbol};

use crate::config::*;
use crate::output::Artifacts;
use crate::Failure;

type Run = Result<(), Failure>;

pub fn run(model: &ContactModel, command: &Command, seed: u64, out: &mut Artifacts) -> Run {
    model.validate()?;
    match command {
        Command::Spectrum(p) => spectrum(model, p, seed, out),
        Command::Weyl(p) => weyl(model, p, out),
        Command::Heat(p) => heat(p, out),
        Command::Qe(p) => qe(model, p, out),
        Command::Flow(p) => flow(model, p, out),
        Command::Spiral(p) => spiral(model, p, out),
        Command::Nf(p) => nf(p, out),
        Command::Ergodic(p) => ergodic(model, p, seed, out),
    }
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Config(format!("{name} must be positive, got {v}")))
    }
}

fn triple(name: &str, v: &[f64]) -> Result<[f64; 3], Failure> {
    v.try_into().map_err(|_| Failure::Config(format!("{name} needs exactly three components, got {}", v.len())))
}

fn scheme(s: SchemeKind) -> Scheme {
    match s {
        SchemeKind::Rk4 => Scheme::Rk4,
        SchemeKind::ImplicitMidpoint => Scheme::ImplicitMidpoint,
    }
}

fn spectrum(model: &ContactModel, p: &SpectrumParams, seed: u64, out: &mut Artifacts) -> Run {
    positive("lambda_max", p.lambda_max)?;
    let lo = p.fit_lo.unwrap_or(p.lambda_max / 10.0);
    match p.source {
        SpectrumSource::Exact => {
            let s: Spectrum = enumerate_spectrum(p.lambda_max)?;
            out.write("spectrum.csv", |w| s.write_csv(w))?;
            let fit = weyl_fit(&s, lo, p.lambda_max)?;
            out.json(
                "spectrum.json",
                &json!({
                    "lambda_max": p.lambda_max,
                    "count": s.counting(p.lambda_max)?,
                    "torus_count": s.torus_counting(p.lambda_max)?,
                    "concentration_mean": s.concentration_mean(p.lambda_max)?,
                    "weyl_fit": fit,
                    "weyl_constant_exact": FLAT_WEYL_CONSTANT,
                }),
            )?;
        }
        SpectrumSource::Discrete => {
            let opts = AssemblyOptions { n_grid: p.n_grid, tol: p.tol, seed, ..Default::default() };
            let s = assemble_sector_spectrum(model, p.lambda_max, &opts)?;
            out.write("eigenvalues.csv", |w| {
                writeln!(w, "eigenvalue,m")?;
                for (v, m) in &s.values {
                    writeln!(w, "{},{m}", fmt17(*v))?;
                }
                Ok(())
            })?;
            let fit = weyl_fit(&s, lo, p.lambda_max)?;
            let popp = popp_volume(model, 256)?;
            out.json(
                "spectrum.json",
                &json!({
                    "lambda_max": p.lambda_max,
                    "count": s.values.len(),
                    "sectors": s.sectors,
                    "n_grid": p.n_grid,
                    "weyl_fit": fit,
                    "popp_volume": popp,
                    "weyl_constant_predicted": popp / 32.0,
                }),
            )?;
        }
    }
    Ok(())
}

fn weyl(model: &ContactModel, p: &WeylParams, out: &mut Artifacts) -> Run {
    positive("lambda_lo", p.lambda_lo)?;
    let grid = assemble_sector_counts(model, &weyl_fit_grid(p.lambda_lo, p.lambda_hi), p.n_grid)?;
    out.write("counts.csv", |w| {
        writeln!(w, "lambda,count")?;
        for (l, n) in &grid.points {
            writeln!(w, "{},{n}", fmt17(*l))?;
        }
        Ok(())
    })?;
    let fit = weyl_fit(&grid, p.lambda_lo, p.lambda_hi)?;
    let popp = popp_volume(model, 256)?;
    let target = popp / 32.0;
    let gauge = match &model.density_h {
        Some(h) => {
            let r = gauge_check(&ContactModel { density_h: None, ..model.clone() }, h, p.gauge_sector, p.gauge_n_grid)?;
            json!({
                "max_spectral_deviation": r.max_spectral_deviation,
                "max_abs_potential": r.max_abs_potential,
                "max_density_shift": r.max_density_shift,
                "compared": r.compared,
            })
        }
        None => Value::Null,
    };
    out.json(
        "weyl.json",
        &json!({
            "fit": fit,
            "sectors": grid.sectors,
            "n_grid": p.n_grid,
            "popp_volume": popp,
            "weyl_constant_predicted": target,
            "relative_error": (fit.constant - target).abs() / target,
            "gauge": gauge,
        }),
    )?;
    Ok(())
}

fn heat(p: &HeatParams, out: &mut Artifacts) -> Run {
    match p.experiment {
        HeatExperiment::Kernel => {
            let [x, y, z] = triple("point", &p.point)?;
            let mut rows = Vec::new();
            for &t in &p.t {
                rows.push((t, gaveau_kernel(x, y, z, t, p.tol)?));
            }
            out.write("kernel.csv", |w| {
                writeln!(w, "x,y,z,t,kernel,t2_kernel")?;
                for (t, k) in &rows {
                    writeln!(w, "{},{},{},{},{},{}", fmt17(x), fmt17(y), fmt17(z), fmt17(*t), fmt17(*k), fmt17(t * t * k))?;
                }
                Ok(())
            })?;
            let values: Vec<Value> = rows.iter().map(|(t, k)| json!({ "t": t, "kernel": k, "t2_kernel": t * t * k })).collect();
            out.json("heat.json", &json!({ "experiment": "kernel", "point": p.point, "values": values, "origin_constant": 1.0 / 16.0 }))?;
        }
        HeatExperiment::Trace | HeatExperiment::Karamata => {
            positive("t_lo", p.t_lo)?;
            if p.points < 2 || p.t_hi <= p.t_lo {
                return Err(Failure::Config("need t_lo < t_hi and at least two points".into()));
            }
            let mut rows = Vec::with_capacity(p.points);
            for i in 0..p.points {
                let t = (p.t_lo.ln() + (p.t_hi / p.t_lo).ln() * i as f64 / (p.points - 1) as f64).exp();
                rows.push((t, heat_trace_closed_form(t, p.tol)?));
            }
            out.write("trace.csv", |w| write_trace_csv(w, &rows))?;
            let report = if p.experiment == HeatExperiment::Karamata {
                let k = karamata_constant(|t: f64| heat_trace_closed_form(t, p.tol), p.t_lo, p.t_hi, p.points)?;
                json!({
                    "constant": k.constant,
                    "weyl_constant": k.weyl_constant,
                    "r_squared": k.r_squared,
                    "free_exponent": k.free_exponent,
                    "warning": k.warning,
                    "weyl_constant_exact": FLAT_WEYL_CONSTANT,
                    "relative_error": (k.weyl_constant - FLAT_WEYL_CONSTANT).abs() / FLAT_WEYL_CONSTANT,
                })
            } else {
                Value::Null
            };
            let small = rows[0];
            out.json(
                "heat.json",
                &json!({
                    "experiment": if report.is_null() { "trace" } else { "karamata" },
                    "t_lo": p.t_lo,
                    "t_hi": p.t_hi,
                    "t2_trace_at_t_lo": small.0 * small.0 * small.1,
                    "t2_trace_limit": PI * PI / 4.0,
                    "karamata": report,
                }),
            )?;
        }
    }
    Ok(())
}

fn qe(model: &ContactModel, p: &QeParams, out: &mut Artifacts) -> Run {
    let top = p.checkpoints.iter().copied().fold(p.lambda_max, f64::max);
    let s: Spectrum = enumerate_spectrum(top)?;
    let series = MatrixElementSeries::concentration(&s);
    out.write("concentration.csv", |w| series.write_csv(w))?;
    let mut rows = Vec::new();
    for &l in &p.checkpoints {
        rows.push(json!({
            "lambda": l,
            "cesaro_mean": series.cesaro_mean(l)?,
            "variance_about_one": series.variance(l, 1.0)?,
            "torus_fraction": s.torus_counting(l)? as f64 / s.counting(l)? as f64,
        }));
    }
    let slope = torus_fraction_slope(&s, p.checkpoints.iter().copied().fold(f64::INFINITY, f64::min).max(10.0), top).ok();

    let ks: Spectrum = enumerate_spectrum(p.kvn_lambda)?;
    let data: Vec<(f64, bool)> = ks
        .data()
        .iter()
        .flat_map(|d| std::iter::repeat_n((1.0 - d.concentration_element(), is_torus(d)), d.multiplicity as usize))
        .collect();
    let deficit: Vec<f64> = data.iter().map(|d| d.0).collect();
    let set = kvn_extract(&deficit)?;
    let tail = data.len() / 2..data.len();
    let ambient = tail.clone().filter(|i| data[*i].1).count() as f64 / tail.len().max(1) as f64;
    let kept: Vec<usize> = tail.filter(|i| set.kept[*i]).collect();
    let kept_torus = kept.iter().filter(|i| data[**i].1).count() as f64 / kept.len().max(1) as f64;

    let classify = match p.classify_sector {
        Some(m) => {
            let d = sector_discretization(model, m, p.n_grid)?;
            let pairs = dense_eig_with_cap(&d.op, 4096)?;
            let vertical = vertical_energy_operator(model, m, p.n_grid)?;
            let mut rows = Vec::new();
            for (i, pair) in pairs.iter().take(p.classify_count).enumerate() {
                let c = quantum_limit_classify(&pair.vector, &vertical, &d.op)?;
                rows.push((i, pair.value, c));
            }
            out.write("classify.csv", |w| {
                writeln!(w, "index,eigenvalue,sigma_fraction,vertical,horizontal,degenerate")?;
                for (i, v, c) in &rows {
                    writeln!(w, "{i},{},{},{},{},{}", fmt17(*v), fmt17(c.sigma_fraction), fmt17(c.vertical), fmt17(c.horizontal), c.degenerate)?;
                }
                Ok(())
            })?;
            json!({ "sector": m, "n_grid": p.n_grid, "count": rows.len() })
        }
        None => Value::Null,
    };
    out.json(
        "qe.json",
        &json!({
            "checkpoints": rows,
            "torus_fraction_slope": slope,
            "kvn": {
                "lambda": p.kvn_lambda,
                "length": deficit.len(),
                "density_estimate": set.density_estimate,
                "levels": set.levels,
                "tail_torus_fraction_ambient": ambient,
                "tail_torus_fraction_kept": kept_torus,
            },
            "classification": classify,
        }),
    )?;
    Ok(())
}

fn flow(model: &ContactModel, p: &FlowParams, out: &mut Artifacts) -> Run {
    let start = PhasePoint::new(triple("q", &p.q)?, triple("p", &p.p)?);
    let kind = match p.flow {
        FlowKind::Geodesic => Flow::Geodesic,
        FlowKind::Reeb => Flow::Reeb,
    };
    let opts = IntegrateOptions { scheme: scheme(p.scheme), sample_every: p.sample_every.max(1), ..Default::default() };
    let traj = integrate(model, kind, start, p.t_end, p.dt, &opts)?;
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    let g0 = g_star(model, &start);
    let drift = traj.invariants.iter().map(|(g, _)| (g - g0).abs()).fold(0.0, f64::max);
    let end = traj.last();
    out.json(
        "flow.json",
        &json!({
            "flow": p.flow,
            "scheme": p.scheme,
            "samples": traj.times.len(),
            "final": { "q": end.q, "p": end.p, "reduced_q": end.reduced(&model.lattice).q },
            "g_star_initial": g0,
            "g_star_max_drift": drift,
            "momenta_initial": momenta(model, &start),
            "spiral_radius_initial": spiral_radius(model, &start),
        }),
    )?;
    Ok(())
}

fn spiral(model: &ContactModel, p: &SpiralParams, out: &mut Artifacts) -> Run {
    let base = if model.coeff_a.is_zero() && model.coeff_b.is_zero() {
        ContactModel { density_h: model.density_h.clone(), lattice: model.lattice, ..ContactModel::reference_perturbation(0.0) }
    } else {
        model.clone()
    };
    let opts = AdiabaticOptions { i0_scale: p.i0_scale, starts: p.starts, dt: p.dt, scheme: scheme(p.scheme), flat_horizon: p.flat_horizon };
    let report = adiabatic_experiment(|e| ContactModel { epsilon: e, ..base.clone() }, &p.epsilons, &opts)?;
    out.write("adiabatic.csv", |w| {
        writeln!(w, "epsilon,i0,horizon,sup_deviation,left_chart")?;
        for r in &report.rows {
            writeln!(w, "{},{},{},{},{}", fmt17(r.epsilon), fmt17(r.i0), fmt17(r.horizon), fmt17(r.sup_deviation), r.left_chart)?;
        }
        Ok(())
    })?;
    out.json("spiral.json", &report)?;
    Ok(())
}

fn nf(p: &NfParams, out: &mut Artifacts) -> Run {
    let trunc = Some(p.truncation.unwrap_or(p.order));
    let h: Symbol = match preset(&p.input, trunc) {
        Ok(h) => h,
        Err(_) if std::path::Path::new(&p.input).is_file() => {
            let text = std::fs::read_to_string(&p.input).map_err(Error::Io)?;
            GradedSymbol::parse_canonical(&text)?.with_truncation(trunc)
        }
        Err(e) => return Err(e.into()),
    };
    let mode = match p.mode {
        NfMode::Semiglobal => NormalizationMode::Semiglobal,
        NfMode::Local => NormalizationMode::Local,
    };
    let nf = birkhoff_normalize_with(&h, p.order, mode, p.max_lie_order)?;
    let replay_exact = nf.replay(&h, p.max_lie_order)? == nf.normal_form.add(&nf.residual);
    out.write("normal_form.txt", |w| writeln!(w, "{}", nf.normal_form.canonical_text()))?;
    out.write("generators.txt", |w| {
        for g in &nf.generators {
            let space = match g.space {
                Space::Zero => "zero",
                Space::Invariant => "invariant",
            };
            writeln!(w, "{space}: {}", g.symbol.canonical_text())?;
        }
        Ok(())
    })?;
    out.write("residual.txt", |w| writeln!(w, "{}", nf.residual.canonical_text()))?;
    let non_h2_free = nf.normal_form.sub(&GradedSymbol::h2(nf.normal_form.truncation())).is_zero();
    out.json(
        "nf.json",
        &json!({
            "input": p.input,
            "order": p.order,
            "mode": p.mode,
            "working_truncation": nf.working_truncation,
            "generators": nf.generators.len(),
            "zero_component_free": nf.normal_form.component(Space::Zero).is_zero(),
            "h2_only": non_h2_free,
            "residual_terms": nf.residual.len(),
            "replay_exact": replay_exact,
        }),
    )?;
    Ok(())
}

fn ergodic(model: &ContactModel, p: &ErgodicParams, seed: u64, out: &mut Artifacts) -> Run {
    match p.system {
        ErgodicSystem::Bolza => {
            let region = match p.region {
                RegionKind::Disk => Region::Disk { radius: p.radius },
                RegionKind::HalfDomain => Region::HalfDomain,
            };
            let e = ergodic_ensemble(region, p.starts, p.t_end, p.dt, seed)?;
            out.write("averages.csv", |w| {
                writeln!(w, "start,average")?;
                for (i, a) in e.averages.iter().enumerate() {
                    writeln!(w, "{i},{}", fmt17(*a))?;
                }
                Ok(())
            })?;
            out.json("ergodic.json", &e)?;
        }
        ErgodicSystem::FlatReeb => {
            let q = triple("q", &p.q)?;
            let traj = integrate(model, Flow::Reeb, PhasePoint::new(q, [0.0, 0.0, 1.0]), p.t_end, p.dt, &IntegrateOptions::default())?;
            let avg = birkhoff_average(&traj, |s| s.q[0].cos(), p.checkpoints)?;
            out.write("averages.csv", |w| {
                writeln!(w, "t,average")?;
                for (t, a) in &avg {
                    writeln!(w, "{},{}", fmt17(*t), fmt17(*a))?;
                }
                Ok(())
            })?;
            let dev = avg.iter().map(|(_, a)| (a - q[0].cos()).abs()).fold(0.0, f64::max);
            out.json("ergodic.json", &json!({ "system": "flat-reeb", "observable": "cos x", "initial_value": q[0].cos(), "max_deviation": dev, "averages": avg }))?;
        }
    }
    Ok(())
}
